//! Numerical classification of the integral criterion
//! `I(q,c) = ∫_{0+}^1 t^{-1} exp(-c q²(t)/t) dt` and of the `L_p`
//! criterion `∫_{0+}^1 t^{p/2}/q(t) dt < ∞`.
//!
//! Both integrals are split into dyadic blocks `B_k` over
//! `[2^{-(k+1)}, 2^{-k}]`. The integral is finite iff `Σ B_k` converges, which
//! is decided from the tail of the block sequence with Raabe's statistic
//! `R_k = (k+1)(B_k/B_{k+1} - 1)`: geometric decay makes `R_k` grow linearly,
//! polynomial decay `k^{-s}` makes it settle at `s`, and the series converges
//! iff the limit exceeds one.

use serde::Serialize;
use thiserror::Error;

use crate::quadrature::dyadic_blocks;
use crate::weights::WeightFunction;

pub const DEFAULT_MAX_DEPTH: usize = 60;
pub const DEFAULT_TAIL_TOL: f64 = 0.05;
/// Number of trailing blocks entering the tail fit.
pub const TAIL_WINDOW: usize = 6;
/// Fitted growth of Raabe's statistic per block above which the tail is
/// treated as geometric.
pub const GEOMETRIC_SLOPE_TOL: f64 = 1e-3;
/// Relative width at which threshold bisection stops.
pub const THRESHOLD_REL_TOL: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CriterionError {
    #[error("criterion domain error: {0}")]
    Domain(String),
    #[error("weight evaluation failed at t = {t}: q = {q}")]
    Numeric { t: f64, q: f64 },
    #[error("tail of the block sequence is inconclusive: {0}")]
    Inconclusive(String),
}

/// Default logarithmic grid `10^{i/8}`, `i = -16..=16`, spanning `[1e-2, 1e2]`.
pub fn default_c_grid() -> Vec<f64> {
    (-16..=16).map(|i| 10f64.powf(i as f64 / 8.0)).collect()
}

/// `B_k = ∫_{2^{-(k+1)}}^{2^{-k}} t^{-1} exp(-c q²(t)/t) dt` for `k = 0..=max_depth`.
pub fn integral_blocks(
    w: &WeightFunction,
    c: f64,
    max_depth: usize,
) -> Result<Vec<f64>, CriterionError> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(CriterionError::Domain(format!(
            "c must be positive, got {c}"
        )));
    }
    check_depth(max_depth)?;
    dyadic_blocks(1.0, max_depth, |t| {
        let q = w.value(t);
        if !(q > 0.0 && q.is_finite()) {
            return Err(CriterionError::Numeric { t, q });
        }
        Ok((-c * q * q / t).exp() / t)
    })
}

/// Blocks of `∫ t^{p/2}/q(t) dt`.
pub fn lp_blocks(w: &WeightFunction, p: f64, max_depth: usize) -> Result<Vec<f64>, CriterionError> {
    if !(p > 0.0 && p.is_finite()) {
        return Err(CriterionError::Domain(format!(
            "p must be positive, got {p}"
        )));
    }
    check_depth(max_depth)?;
    dyadic_blocks(1.0, max_depth, |t| {
        let q = w.value(t);
        if !(q > 0.0 && q.is_finite()) {
            return Err(CriterionError::Numeric { t, q });
        }
        Ok(t.powf(p / 2.0) / q)
    })
}

fn check_depth(max_depth: usize) -> Result<(), CriterionError> {
    if max_depth < 4 {
        return Err(CriterionError::Domain(format!(
            "max_depth must be at least 4, got {max_depth}"
        )));
    }
    // beyond this the block endpoints leave the normal f64 range
    if max_depth > 1000 {
        return Err(CriterionError::Domain(format!(
            "max_depth {max_depth} exceeds 1000"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TailDecision {
    Summable,
    NonSummable,
    Inconclusive,
}

/// Result of the Raabe tail fit on one block sequence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailFit {
    pub decision: TailDecision,
    /// Fitted Raabe statistic at the last block (`+inf` once blocks vanish).
    pub raabe_last: f64,
    /// Fitted growth of the Raabe statistic per block.
    pub raabe_slope: f64,
}

/// Decides summability of `Σ B_k` from the trailing [`TAIL_WINDOW`] blocks.
pub fn assess_tail(blocks: &[f64], tail_tol: f64) -> TailFit {
    let n = blocks.len();
    assert!(n >= TAIL_WINDOW.min(5), "need at least 5 blocks");
    let window = TAIL_WINDOW.min(n);
    let tail = &blocks[n - window..];
    let first_k = n - window;

    if tail[window - 1] == 0.0 {
        return TailFit {
            decision: TailDecision::Summable,
            raabe_last: f64::INFINITY,
            raabe_slope: f64::INFINITY,
        };
    }

    let points: Vec<(f64, f64)> = tail
        .windows(2)
        .enumerate()
        .map(|(i, w)| {
            let k = (first_k + i + 1) as f64;
            (k, k * (w[0] / w[1] - 1.0))
        })
        .collect();
    let m = points.len() as f64;
    let mean_k = points.iter().map(|p| p.0).sum::<f64>() / m;
    let mean_r = points.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = points.iter().map(|p| (p.0 - mean_k).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mean_k) * (p.1 - mean_r)).sum();
    let slope = sxy / sxx;
    let last_k = points[points.len() - 1].0;
    let raabe_last = mean_r + slope * (last_k - mean_k);

    let decision =
        if (slope > GEOMETRIC_SLOPE_TOL && raabe_last > 0.0) || raabe_last > 1.0 + tail_tol {
            TailDecision::Summable
        } else if raabe_last < 1.0 - tail_tol {
            TailDecision::NonSummable
        } else {
            TailDecision::Inconclusive
        };
    TailFit {
        decision,
        raabe_last,
        raabe_slope: slope,
    }
}

/// Classification of `I(q, c)` at a single `c`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CTest {
    pub c: f64,
    pub depth: usize,
    pub tail: TailFit,
    /// `(k, B_k)` for `k = 0..=depth`.
    pub blocks: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Verdict {
    /// Finite for every tested `c`.
    AllC,
    /// Finite for large `c` only; the estimate sits between the largest
    /// divergent and the smallest convergent `c`.
    SomeC { c_threshold_estimate: f64 },
    /// Infinite for every tested `c`.
    Divergent,
    /// Mixed or undecidable tails; never mapped silently to a verdict.
    Inconclusive { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriterionVerdict {
    pub weight: String,
    pub verdict: Verdict,
    /// Every tested `c` in evaluation order, including bisection probes.
    pub tested_c: Vec<f64>,
    pub tests: Vec<CTest>,
    pub max_depth: usize,
    pub tail_tol: f64,
}

impl CriterionVerdict {
    pub fn is_divergent(&self) -> bool {
        matches!(self.verdict, Verdict::Divergent)
    }

    pub fn threshold(&self) -> Option<f64> {
        match self.verdict {
            Verdict::SomeC {
                c_threshold_estimate,
            } => Some(c_threshold_estimate),
            _ => None,
        }
    }
}

fn test_c(
    w: &WeightFunction,
    c: f64,
    max_depth: usize,
    tail_tol: f64,
) -> Result<CTest, CriterionError> {
    let mut depth = max_depth;
    let mut blocks = integral_blocks(w, c, depth)?;
    let mut tail = assess_tail(&blocks, tail_tol);
    if tail.decision == TailDecision::Inconclusive {
        depth = (2 * max_depth).min(1000);
        blocks = integral_blocks(w, c, depth)?;
        tail = assess_tail(&blocks, tail_tol);
    }
    Ok(CTest {
        c,
        depth,
        tail,
        blocks: blocks.into_iter().enumerate().collect(),
    })
}

/// Classifies `I(q,c)` as finite for all, some or no `c` over `c_grid`.
pub fn classify_criterion(
    w: &WeightFunction,
    c_grid: &[f64],
    max_depth: usize,
    tail_tol: f64,
) -> Result<CriterionVerdict, CriterionError> {
    if c_grid.is_empty() {
        return Err(CriterionError::Domain("c grid is empty".into()));
    }
    if c_grid.iter().any(|&c| !(c > 0.0 && c.is_finite())) {
        return Err(CriterionError::Domain(
            "c grid values must be positive".into(),
        ));
    }
    if c_grid.windows(2).any(|p| p[0] >= p[1]) {
        return Err(CriterionError::Domain(
            "c grid must be strictly increasing".into(),
        ));
    }
    if !(tail_tol > 0.0 && tail_tol < 1.0) {
        return Err(CriterionError::Domain(format!(
            "tail_tol must lie in (0, 1), got {tail_tol}"
        )));
    }
    check_depth(max_depth)?;

    let mut tests = c_grid
        .iter()
        .map(|&c| test_c(w, c, max_depth, tail_tol))
        .collect::<Result<Vec<_>, _>>()?;
    let decisions: Vec<TailDecision> = tests.iter().map(|t| t.tail.decision).collect();

    use TailDecision::*;
    let first_summable = decisions.iter().position(|&d| d == Summable);
    let last_nonsummable = decisions.iter().rposition(|&d| d == NonSummable);
    let monotone = match (first_summable, last_nonsummable) {
        (Some(s), Some(n)) => n < s,
        _ => true,
    };

    let verdict = if !monotone {
        Verdict::Inconclusive {
            reason: "summable at a smaller c than a non-summable one".into(),
        }
    } else if decisions.iter().all(|&d| d == Summable) {
        Verdict::AllC
    } else if decisions.iter().all(|&d| d == NonSummable) {
        Verdict::Divergent
    } else if decisions[0] == NonSummable && decisions[decisions.len() - 1] == Summable {
        let lo = c_grid[last_nonsummable.unwrap()];
        let hi = c_grid[first_summable.unwrap()];
        let estimate = bisect_threshold(w, lo, hi, max_depth, tail_tol, &mut tests)?;
        Verdict::SomeC {
            c_threshold_estimate: estimate,
        }
    } else {
        Verdict::Inconclusive {
            reason: format!(
                "tail decisions at the extreme c values are {:?} and {:?}",
                decisions[0],
                decisions[decisions.len() - 1]
            ),
        }
    };

    Ok(CriterionVerdict {
        weight: w.id().to_string(),
        verdict,
        tested_c: tests.iter().map(|t| t.c).collect(),
        tests,
        max_depth,
        tail_tol,
    })
}

/// [`classify_criterion`] with the default grid, depth and tolerance.
pub fn classify_default(w: &WeightFunction) -> Result<CriterionVerdict, CriterionError> {
    classify_criterion(w, &default_c_grid(), DEFAULT_MAX_DEPTH, DEFAULT_TAIL_TOL)
}

/// Narrows `[lo, hi]` (non-summable at `lo`, summable at `hi`). When a probe
/// lands in the inconclusive band both band edges are located and the band
/// midpoint is returned.
fn bisect_threshold(
    w: &WeightFunction,
    mut lo: f64,
    mut hi: f64,
    max_depth: usize,
    tail_tol: f64,
    tests: &mut Vec<CTest>,
) -> Result<f64, CriterionError> {
    let probe = |c: f64, tests: &mut Vec<CTest>| -> Result<TailDecision, CriterionError> {
        let t = test_c(w, c, max_depth, tail_tol)?;
        let d = t.tail.decision;
        tests.push(t);
        Ok(d)
    };
    let narrow = |lo: f64, hi: f64| hi - lo > THRESHOLD_REL_TOL * hi;

    while narrow(lo, hi) {
        let mid = 0.5 * (lo + hi);
        match probe(mid, tests)? {
            TailDecision::NonSummable => lo = mid,
            TailDecision::Summable => hi = mid,
            TailDecision::Inconclusive => {
                let (mut a, mut b) = (lo, mid);
                while narrow(a, b) {
                    let m = 0.5 * (a + b);
                    if probe(m, tests)? == TailDecision::NonSummable {
                        a = m;
                    } else {
                        b = m;
                    }
                }
                let lower_edge = 0.5 * (a + b);
                let (mut a, mut b) = (mid, hi);
                while narrow(a, b) {
                    let m = 0.5 * (a + b);
                    if probe(m, tests)? == TailDecision::Summable {
                        b = m;
                    } else {
                        a = m;
                    }
                }
                let upper_edge = 0.5 * (a + b);
                return Ok(0.5 * (lower_edge + upper_edge));
            }
        }
    }
    Ok(0.5 * (lo + hi))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LpVerdict {
    Finite,
    Infinite,
}

/// Decides whether `∫_{0+}^1 t^{p/2}/q(t) dt` is finite.
pub fn lp_criterion(
    w: &WeightFunction,
    p: f64,
    max_depth: usize,
    tail_tol: f64,
) -> Result<LpVerdict, CriterionError> {
    let mut blocks = lp_blocks(w, p, max_depth)?;
    let mut tail = assess_tail(&blocks, tail_tol);
    if tail.decision == TailDecision::Inconclusive {
        blocks = lp_blocks(w, p, (2 * max_depth).min(1000))?;
        tail = assess_tail(&blocks, tail_tol);
    }
    match tail.decision {
        TailDecision::Summable => Ok(LpVerdict::Finite),
        TailDecision::NonSummable => Ok(LpVerdict::Infinite),
        TailDecision::Inconclusive => Err(CriterionError::Inconclusive(format!(
            "L_p blocks for {} with p = {p}: Raabe statistic {:.4}",
            w.id(),
            tail.raabe_last
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::LN_2;

    fn w(spec: &str) -> WeightFunction {
        WeightFunction::parse(spec).unwrap()
    }

    #[test]
    fn power_half_blocks_are_constant() {
        let blocks = integral_blocks(&w("power:0.5"), 1.0, 20).unwrap();
        for b in blocks {
            assert_relative_eq!(b, (-1.0f64).exp() * LN_2, max_relative = 1e-13);
        }
    }

    #[test]
    fn constant_weight_with_huge_c_vanishes() {
        let blocks = integral_blocks(&w("const:1"), 1e6, 20).unwrap();
        assert!(blocks.iter().sum::<f64>() <= 1e-6);
        assert!(blocks.iter().all(|&b| b >= 0.0));
    }

    #[test]
    fn sqrt_log_log_blocks_match_substitution_oracle() {
        // With u = log(1/t) the block integrand becomes u^{-c} du, so
        // B_k = ∫_{k ln2}^{(k+1) ln2} u^{-c} du for blocks with u ≥ e.
        let c = 2.0;
        let blocks = integral_blocks(&w("sqrtloglog:1"), c, 40).unwrap();
        for (k, b) in blocks.iter().enumerate().skip(4) {
            let (u0, u1) = (k as f64 * LN_2, (k + 1) as f64 * LN_2);
            let exact = (u0.powf(1.0 - c) - u1.powf(1.0 - c)) / (c - 1.0);
            assert_relative_eq!(*b, exact, max_relative = 1e-12);
        }
        let tail = assess_tail(&blocks, DEFAULT_TAIL_TOL);
        assert_eq!(tail.decision, TailDecision::Summable);
    }

    #[test]
    fn domain_errors() {
        assert!(matches!(
            integral_blocks(&w("const:1"), 0.0, 10),
            Err(CriterionError::Domain(_))
        ));
        assert!(matches!(
            integral_blocks(&w("const:1"), 1.0, 3),
            Err(CriterionError::Domain(_))
        ));
        assert!(classify_criterion(&w("const:1"), &[], 60, 0.05).is_err());
        assert!(classify_criterion(&w("const:1"), &[1.0, 1.0], 60, 0.05).is_err());
        assert!(classify_criterion(&w("const:1"), &[-1.0, 1.0], 60, 0.05).is_err());
        assert!(classify_criterion(&w("const:1"), &[1.0], 60, 0.0).is_err());
        assert!(lp_criterion(&w("const:1"), 0.0, 60, 0.05).is_err());
    }

    #[test]
    fn classify_examples() {
        assert_eq!(
            classify_default(&w("power:0.4")).unwrap().verdict,
            Verdict::AllC
        );
        assert_eq!(
            classify_default(&w("sqrtlog:1")).unwrap().verdict,
            Verdict::AllC
        );
        assert_eq!(
            classify_default(&w("power:0.5")).unwrap().verdict,
            Verdict::Divergent
        );
        let v = classify_default(&w("sqrtloglog:1")).unwrap();
        let c = v.threshold().expect("SomeC");
        assert!((c - 1.0).abs() < 0.05, "threshold {c}");
    }

    #[test]
    fn divergent_blocks_stay_at_exact_value() {
        let v = classify_default(&w("power:0.5")).unwrap();
        for t in &v.tests {
            let expect = (-t.c).exp() * LN_2;
            for &(_, b) in &t.blocks {
                assert_relative_eq!(b, expect, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn scaling_law_moves_threshold() {
        let q2 = w("sqrtloglog:1").scaled(2.0).unwrap();
        let c = classify_default(&q2).unwrap().threshold().expect("SomeC");
        assert!((c - 0.25).abs() < 0.02, "threshold {c}");
        // integrand-level identity I(λq, c) = I(q, λ²c)
        let a = integral_blocks(&q2, 0.3, 30).unwrap();
        let b = integral_blocks(&w("sqrtloglog:1"), 1.2, 30).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_relative_eq!(x, y, max_relative = 1e-13);
        }
    }

    #[test]
    fn geometric_tail_with_ratio_near_one_is_summable() {
        // sqrtlog with c = 0.01 has B_{k+1}/B_k = 2^{-0.01} ≈ 0.993
        let blocks = integral_blocks(&w("sqrtlog:1"), 0.01, DEFAULT_MAX_DEPTH).unwrap();
        let tail = assess_tail(&blocks, DEFAULT_TAIL_TOL);
        assert_eq!(tail.decision, TailDecision::Summable);
    }

    #[test]
    fn near_threshold_is_inconclusive_not_guessed() {
        let blocks = integral_blocks(&w("sqrtloglog:1"), 1.0, DEFAULT_MAX_DEPTH).unwrap();
        assert_eq!(
            assess_tail(&blocks, DEFAULT_TAIL_TOL).decision,
            TailDecision::Inconclusive
        );
    }

    #[test]
    fn lp_examples() {
        assert_eq!(
            lp_criterion(&w("const:1"), 1.0, 60, 0.05).unwrap(),
            LpVerdict::Finite
        );
        assert_eq!(
            lp_criterion(&w("power:0.5"), 1.0, 60, 0.05).unwrap(),
            LpVerdict::Finite
        );
        assert_eq!(
            lp_criterion(&w("power:2"), 1.0, 60, 0.05).unwrap(),
            LpVerdict::Infinite
        );
        assert_eq!(
            lp_criterion(&w("power:1.5"), 1.0, 60, 0.05).unwrap(),
            LpVerdict::Infinite
        );
        let total: f64 = lp_blocks(&w("const:1"), 1.0, 80).unwrap().iter().sum();
        assert_relative_eq!(total, 2.0 / 3.0, max_relative = 1e-12);
    }

    #[test]
    fn blocks_nonincreasing_in_c() {
        for spec in [
            "power:0.4",
            "sqrtloglog:1",
            "sqrtlog:1",
            "const:1",
            "power:0.5",
        ] {
            let weight = w(spec);
            let grid = default_c_grid();
            let mut prev: Option<Vec<f64>> = None;
            for &c in &grid {
                let b = integral_blocks(&weight, c, 30).unwrap();
                if let Some(p) = &prev {
                    assert!(b.iter().zip(p).all(|(x, y)| x <= y), "{spec} at c = {c}");
                }
                prev = Some(b);
            }
        }
    }

    #[test]
    fn verdict_ordering() {
        for spec in [
            "power:0.4",
            "sqrtloglog:1",
            "sqrtlog:1",
            "power:0.5",
            "power:0.45",
        ] {
            let v = classify_default(&w(spec)).unwrap();
            let first = v.tests[0].tail.decision;
            let last_grid = v.tests[default_c_grid().len() - 1].tail.decision;
            match v.verdict {
                Verdict::AllC => assert_eq!(first, TailDecision::Summable),
                Verdict::Divergent => assert_eq!(last_grid, TailDecision::NonSummable),
                Verdict::SomeC { .. } => {
                    assert_eq!(first, TailDecision::NonSummable);
                    assert_eq!(last_grid, TailDecision::Summable);
                }
                Verdict::Inconclusive { .. } => {}
            }
        }
    }
}
