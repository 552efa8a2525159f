//! Partial-sum paths and their weighted functionals.
//!
//! A path of `n` increments is the step function `t ↦ S_{[nt]}` on `[0,1]`,
//! constant on `[k/n, (k+1)/n)`. Functionals act on the normalized path
//! `S_{[nt]} / scale` where the scale is `b_n`, `V_n`, or the Student
//! denominator `V_n · sqrt((n - (S_n/V_n)²)/(n-1))`.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quadrature::gauss_legendre_8;
use crate::weights::WeightFunction;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProcessError {
    #[error("path has no increments")]
    EmptyPath,
    #[error("degenerate path: V_n = 0")]
    ZeroVariation,
    #[error("degenerate Student denominator: n - (S_n/V_n)^2 = 0")]
    DegenerateStudent,
    #[error("Student process needs n >= 2")]
    StudentTooShort,
    #[error("domain error: {0}")]
    Domain(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathSample {
    increments: Vec<f64>,
    partial_sums: Vec<f64>,
    v_squared: f64,
}

impl PathSample {
    pub fn new(increments: Vec<f64>) -> Result<Self, ProcessError> {
        if increments.is_empty() {
            return Err(ProcessError::EmptyPath);
        }
        if increments.iter().any(|x| !x.is_finite()) {
            return Err(ProcessError::Domain("increments must be finite".into()));
        }
        let mut partial_sums = Vec::with_capacity(increments.len() + 1);
        partial_sums.push(0.0);
        let mut s = 0.0;
        let mut v = 0.0;
        for &x in &increments {
            s += x;
            v += x * x;
            partial_sums.push(s);
        }
        Ok(Self {
            increments,
            partial_sums,
            v_squared: v,
        })
    }

    pub fn n(&self) -> usize {
        self.increments.len()
    }

    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    /// `S_0 = 0, S_1, ..., S_n`.
    pub fn partial_sums(&self) -> &[f64] {
        &self.partial_sums
    }

    pub fn v_squared(&self) -> f64 {
        self.v_squared
    }

    pub fn s_n(&self) -> f64 {
        self.partial_sums[self.n()]
    }

    /// Largest `k` with `k/n ≤ t`, i.e. `[nt]`, for `t ∈ [0, 1]`.
    pub fn step_index(&self, t: f64) -> Result<usize, ProcessError> {
        if !(0.0..=1.0).contains(&t) {
            return Err(ProcessError::Domain(format!("t = {t} outside [0, 1]")));
        }
        let n = self.n();
        let nf = n as f64;
        let mut k = ((t * nf).floor() as usize).min(n);
        // correct floating rounding of n·t around grid points
        if k < n && (k + 1) as f64 / nf <= t {
            k += 1;
        }
        if k > 0 && k as f64 / nf > t {
            k -= 1;
        }
        Ok(k)
    }

    fn v_n(&self) -> Result<f64, ProcessError> {
        if self.v_squared == 0.0 {
            return Err(ProcessError::ZeroVariation);
        }
        Ok(self.v_squared.sqrt())
    }

    /// `S_{[nt]} / V_n`.
    pub fn self_normalized(&self, t: f64) -> Result<f64, ProcessError> {
        let k = self.step_index(t)?;
        Ok(self.partial_sums[k] / self.v_n()?)
    }

    /// `sqrt((n - (S_n/V_n)²)/(n-1))`, the Student denominator relative to `V_n`.
    pub fn student_denominator(&self) -> Result<f64, ProcessError> {
        let n = self.n();
        if n < 2 {
            return Err(ProcessError::StudentTooShort);
        }
        let r = self.s_n() / self.v_n()?;
        let nf = n as f64;
        let gap = nf - r * r;
        // all-equal increments give |S_n| = √n V_n up to rounding
        if gap <= 8.0 * f64::EPSILON * nf {
            return Err(ProcessError::DegenerateStudent);
        }
        Ok((gap / (nf - 1.0)).sqrt())
    }

    /// `T_{n,t} = (S_{[nt]}/V_n) / sqrt((n - (S_n/V_n)²)/(n-1))`.
    pub fn student(&self, t: f64) -> Result<f64, ProcessError> {
        Ok(self.self_normalized(t)? / self.student_denominator()?)
    }

    /// The divisor applied to `S_k` under `norm`.
    pub fn scale(&self, norm: Normalization) -> Result<f64, ProcessError> {
        match norm {
            Normalization::ByBn(b_n) => {
                if !(b_n > 0.0 && b_n.is_finite()) {
                    return Err(ProcessError::Domain(format!(
                        "b_n must be positive, got {b_n}"
                    )));
                }
                Ok(b_n)
            }
            Normalization::BySelf => self.v_n(),
            Normalization::ByStudent => Ok(self.v_n()? * self.student_denominator()?),
        }
    }

    /// `S_k / scale` for `k = 0..=n`.
    pub fn normalized(&self, norm: Normalization) -> Result<Vec<f64>, ProcessError> {
        let scale = self.scale(norm)?;
        Ok(self.partial_sums.iter().map(|s| s / scale).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    ByBn(f64),
    BySelf,
    ByStudent,
}

impl fmt::Display for Normalization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Normalization::ByBn(b) => write!(f, "bn({b})"),
            Normalization::BySelf => f.write_str("self"),
            Normalization::ByStudent => f.write_str("student"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FunctionalKind {
    /// `sup_{max(τ,1/n) ≤ t ≤ 1} |x(t)|/q(t)`; `τ = 0` means `τ = 1/n`.
    WeightedSup { tau: f64 },
    /// `∫_0^1 |x(t)|^p / q(t) dt`.
    WeightedLp { p: f64 },
}

impl fmt::Display for FunctionalKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FunctionalKind::WeightedSup { tau } => write!(f, "sup[tau={tau}]"),
            FunctionalKind::WeightedLp { p } => write!(f, "lp[p={p}]"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalSpec {
    pub kind: FunctionalKind,
    pub weight: WeightFunction,
    pub normalization: Normalization,
}

/// Precomputed per-interval weights of the sup functional for step paths
/// of length `n`.
///
/// On each constancy interval `[a, b)` the weight is probed at `a` and at
/// `b` minus one ulp; `|S_k|` is constant there, so the interval's
/// contribution is `|S_k| / min(q(a), q(b⁻))`.
#[derive(Debug, Clone)]
pub struct SupEvaluator {
    n: usize,
    first_k: usize,
    inv_q: Vec<f64>,
}

impl SupEvaluator {
    pub fn new(weight: &WeightFunction, n: usize, tau: f64) -> Result<Self, ProcessError> {
        if n == 0 {
            return Err(ProcessError::EmptyPath);
        }
        if !(0.0..1.0).contains(&tau) {
            return Err(ProcessError::Domain(format!(
                "tau must lie in [0, 1), got {tau}"
            )));
        }
        let nf = n as f64;
        let start = tau.max(1.0 / nf);
        let mut first_k = ((start * nf).floor() as usize).min(n);
        if first_k > 0 && first_k as f64 / nf > start {
            first_k -= 1;
        }
        if first_k < n && (first_k + 1) as f64 / nf <= start {
            first_k += 1;
        }
        let inv_q = (first_k..=n)
            .map(|k| {
                if k == n {
                    return 1.0 / weight.value(1.0);
                }
                let left = start.max(k as f64 / nf);
                let right = ((k + 1) as f64 / nf).next_down().max(left);
                1.0 / weight.value(left).min(weight.value(right))
            })
            .collect();
        Ok(Self { n, first_k, inv_q })
    }

    /// `values[k]` is the normalized path on `[k/n, (k+1)/n)`.
    pub fn eval(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.n + 1);
        values[self.first_k..]
            .iter()
            .zip(&self.inv_q)
            .map(|(v, iq)| v.abs() * iq)
            .fold(0.0, f64::max)
    }
}

/// Precomputed `∫_{k/n}^{(k+1)/n} dt/q(t)` for the `L_p` functional.
#[derive(Debug, Clone)]
pub struct LpEvaluator {
    p: f64,
    interval_weights: Vec<f64>,
}

impl LpEvaluator {
    pub fn new(weight: &WeightFunction, n: usize, p: f64) -> Result<Self, ProcessError> {
        if n == 0 {
            return Err(ProcessError::EmptyPath);
        }
        if !(p > 0.0 && p.is_finite()) {
            return Err(ProcessError::Domain(format!("p must be positive, got {p}")));
        }
        let nf = n as f64;
        // the interval [0, 1/n) carries S_0 = 0 and is skipped
        let interval_weights = (1..n)
            .map(|k| {
                let (a, b) = (k as f64 / nf, (k + 1) as f64 / nf);
                weight
                    .inverse_integral_closed_form(a, b)
                    .unwrap_or_else(|| gauss_legendre_8(a, b, |t| 1.0 / weight.value(t)))
            })
            .collect();
        Ok(Self {
            p,
            interval_weights,
        })
    }

    pub fn interval_weights(&self) -> &[f64] {
        &self.interval_weights
    }

    pub fn eval(&self, values: &[f64]) -> f64 {
        let body = &values[1..1 + self.interval_weights.len()];
        let w = &self.interval_weights;
        if self.p == 1.0 {
            body.iter().zip(w).map(|(v, w)| v.abs() * w).sum()
        } else if self.p == 2.0 {
            body.iter().zip(w).map(|(v, w)| v * v * w).sum()
        } else {
            body.iter()
                .zip(w)
                .map(|(v, w)| v.abs().powf(self.p) * w)
                .sum()
        }
    }
}

/// A functional compiled for paths of a fixed length.
#[derive(Debug, Clone)]
pub enum CompiledFunctional {
    Sup(SupEvaluator),
    Lp(LpEvaluator),
}

impl CompiledFunctional {
    pub fn new(
        kind: FunctionalKind,
        weight: &WeightFunction,
        n: usize,
    ) -> Result<Self, ProcessError> {
        Ok(match kind {
            FunctionalKind::WeightedSup { tau } => Self::Sup(SupEvaluator::new(weight, n, tau)?),
            FunctionalKind::WeightedLp { p } => Self::Lp(LpEvaluator::new(weight, n, p)?),
        })
    }

    pub fn eval(&self, values: &[f64]) -> f64 {
        match self {
            Self::Sup(s) => s.eval(values),
            Self::Lp(l) => l.eval(values),
        }
    }
}

/// Weighted sup functional of the normalized path.
pub fn weighted_sup(path: &PathSample, spec: &FunctionalSpec) -> Result<f64, ProcessError> {
    let FunctionalKind::WeightedSup { tau } = spec.kind else {
        return Err(ProcessError::Domain(
            "functional is not a weighted sup".into(),
        ));
    };
    let values = path.normalized(spec.normalization)?;
    Ok(SupEvaluator::new(&spec.weight, path.n(), tau)?.eval(&values))
}

/// Weighted `L_p` functional of the normalized path.
pub fn weighted_lp(path: &PathSample, spec: &FunctionalSpec) -> Result<f64, ProcessError> {
    let FunctionalKind::WeightedLp { p } = spec.kind else {
        return Err(ProcessError::Domain(
            "functional is not a weighted L_p".into(),
        ));
    };
    let values = path.normalized(spec.normalization)?;
    Ok(LpEvaluator::new(&spec.weight, path.n(), p)?.eval(&values))
}

pub fn evaluate(path: &PathSample, spec: &FunctionalSpec) -> Result<f64, ProcessError> {
    match spec.kind {
        FunctionalKind::WeightedSup { .. } => weighted_sup(path, spec),
        FunctionalKind::WeightedLp { .. } => weighted_lp(path, spec),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn path(x: &[f64]) -> PathSample {
        PathSample::new(x.to_vec()).unwrap()
    }

    fn spec(kind: FunctionalKind, weight: &str, normalization: Normalization) -> FunctionalSpec {
        FunctionalSpec {
            kind,
            weight: WeightFunction::parse(weight).unwrap(),
            normalization,
        }
    }

    #[test]
    fn path_invariants() {
        let p = path(&[1.0, -2.0, 0.5]);
        assert_eq!(p.partial_sums(), &[0.0, 1.0, -1.0, -0.5]);
        assert_eq!(p.v_squared(), 5.25);
        assert!(PathSample::new(vec![]).is_err());
        assert!(PathSample::new(vec![f64::NAN]).is_err());
    }

    #[test]
    fn self_normalized_examples() {
        let p = path(&[1.0, -1.0, 1.0, 1.0]);
        assert_eq!(p.self_normalized(1.0).unwrap(), 1.0);
        assert_eq!(p.self_normalized(0.0).unwrap(), 0.0);
        assert_eq!(p.self_normalized(0.2499).unwrap(), 0.0);
        assert_eq!(p.self_normalized(0.25).unwrap(), 0.5);
        assert_eq!(
            path(&[0.0, 0.0]).self_normalized(0.5),
            Err(ProcessError::ZeroVariation)
        );
        assert!(p.self_normalized(1.5).is_err());
    }

    #[test]
    fn step_index_hits_grid_points_exactly() {
        for n in [3usize, 7, 10, 49, 1000] {
            let p = path(&vec![1.0; n]);
            for k in 0..=n {
                assert_eq!(p.step_index(k as f64 / n as f64).unwrap(), k);
            }
        }
    }

    #[test]
    fn student_examples() {
        let p = path(&[1.0, -1.0]);
        assert_relative_eq!(p.student(0.5).unwrap(), 0.5, max_relative = 1e-15);
        assert_eq!(p.student(1.0).unwrap(), 0.0);
        assert_eq!(
            path(&[1.0, 1.0]).student(0.5),
            Err(ProcessError::DegenerateStudent)
        );
        assert_eq!(
            path(&[0.1; 7]).student(0.5),
            Err(ProcessError::DegenerateStudent)
        );
        assert_eq!(
            path(&[0.0, 0.0]).student(0.5),
            Err(ProcessError::ZeroVariation)
        );
        assert_eq!(
            path(&[1.0]).student(0.5),
            Err(ProcessError::StudentTooShort)
        );
    }

    #[test]
    fn sup_examples() {
        let s = spec(
            FunctionalKind::WeightedSup { tau: 0.25 },
            "const:1",
            Normalization::BySelf,
        );
        assert_eq!(
            weighted_sup(&path(&[1.0, -1.0, 1.0, 1.0]), &s).unwrap(),
            1.0
        );

        let zero = path(&[0.0, 0.0, 0.0]);
        let bn = spec(
            FunctionalKind::WeightedSup { tau: 0.0 },
            "const:1",
            Normalization::ByBn(2.0),
        );
        assert_eq!(weighted_sup(&zero, &bn).unwrap(), 0.0);
        let own = spec(
            FunctionalKind::WeightedSup { tau: 0.0 },
            "const:1",
            Normalization::BySelf,
        );
        assert_eq!(weighted_sup(&zero, &own), Err(ProcessError::ZeroVariation));

        for c in [-3.0, 0.2, 17.0] {
            assert_eq!(weighted_sup(&path(&[c]), &own).unwrap(), 1.0);
        }
        let bad = spec(
            FunctionalKind::WeightedSup { tau: 1.0 },
            "const:1",
            Normalization::BySelf,
        );
        assert!(weighted_sup(&path(&[1.0]), &bad).is_err());
    }

    #[test]
    fn sup_probes_both_interval_ends() {
        // q decreases on [0.5, 1]: within [1/2, 1) the sup of |S_1|/q sits at
        // the right end
        let w = WeightFunction::custom(
            "bump",
            vec![(0.01, 0.5), (0.5, 2.0), (1.0, 0.25)],
            Some(0.5),
        )
        .unwrap();
        let s = FunctionalSpec {
            kind: FunctionalKind::WeightedSup { tau: 0.0 },
            weight: w.clone(),
            normalization: Normalization::ByBn(1.0),
        };
        let v = weighted_sup(&path(&[1.0, -1.0]), &s).unwrap();
        let right = w.eval(1.0f64.next_down()).unwrap();
        assert_relative_eq!(v, 1.0 / right, max_relative = 1e-12);
    }

    #[test]
    fn lp_examples() {
        let s = spec(
            FunctionalKind::WeightedLp { p: 1.0 },
            "const:1",
            Normalization::BySelf,
        );
        let v = weighted_lp(&path(&[1.0, -1.0]), &s).unwrap();
        assert_relative_eq!(v, 1.0 / (2.0 * 2f64.sqrt()), max_relative = 1e-15);

        // a path equal to c on [1/n, 1]
        let n = 10;
        let mut inc = vec![0.0; n];
        inc[0] = 2.5;
        let bn = spec(
            FunctionalKind::WeightedLp { p: 1.0 },
            "const:1",
            Normalization::ByBn(1.0),
        );
        assert_relative_eq!(
            weighted_lp(&path(&inc), &bn).unwrap(),
            2.5 * (1.0 - 1.0 / n as f64),
            max_relative = 1e-14
        );

        let bad = spec(
            FunctionalKind::WeightedLp { p: 0.0 },
            "const:1",
            Normalization::BySelf,
        );
        assert!(weighted_lp(&path(&[1.0, 2.0]), &bad).is_err());
    }

    #[test]
    fn lp_power_weight_uses_closed_form_and_matches_quadrature() {
        let w = WeightFunction::power(0.5).unwrap();
        let n = 16;
        let e = LpEvaluator::new(&w, n, 2.0).unwrap();
        for (i, &iw) in e.interval_weights().iter().enumerate() {
            let (a, b) = ((i + 1) as f64 / n as f64, (i + 2) as f64 / n as f64);
            assert_relative_eq!(iw, 2.0 * (b.sqrt() - a.sqrt()), max_relative = 1e-14);
            let gl = gauss_legendre_8(a, b, |t| 1.0 / t.sqrt());
            assert_relative_eq!(iw, gl, max_relative = 1e-8);
        }
    }

    fn increments() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-10.0f64..10.0, 2..60).prop_filter("non-degenerate", |v| {
            PathSample::new(v.clone())
                .map(|p| p.student_denominator().is_ok())
                .unwrap_or(false)
        })
    }

    fn weights() -> impl Strategy<Value = &'static str> {
        prop_oneof![
            Just("const:1"),
            Just("power:0.5"),
            Just("sqrtlog:1"),
            Just("sqrtloglog:1"),
            Just("power:0.3")
        ]
    }

    proptest! {
        #[test]
        fn self_normalized_functionals_are_scale_invariant(x in increments(), w in weights(), tau in 0.0f64..0.9, p in 0.5f64..3.0) {
            let lambda = 3.7;
            let a = path(&x);
            let b = path(&x.iter().map(|v| v * lambda).collect::<Vec<_>>());
            for norm in [Normalization::BySelf, Normalization::ByStudent] {
                for kind in [FunctionalKind::WeightedSup { tau }, FunctionalKind::WeightedLp { p }] {
                    let s = spec(kind, w, norm);
                    let (va, vb) = (evaluate(&a, &s).unwrap(), evaluate(&b, &s).unwrap());
                    prop_assert!((va - vb).abs() <= 1e-12 * va.abs().max(1e-300));
                }
            }
        }

        #[test]
        fn constant_weight_sup_is_max_partial_sum(x in increments()) {
            let p = path(&x);
            let s = spec(FunctionalKind::WeightedSup { tau: 0.0 }, "const:1", Normalization::BySelf);
            let v = weighted_sup(&p, &s).unwrap();
            let direct = p.partial_sums().iter().map(|s| s.abs()).fold(0.0, f64::max) / p.v_squared().sqrt();
            prop_assert_eq!(v, direct);
            prop_assert!(v <= (p.n() as f64).sqrt() * (1.0 + 1e-12));
        }

        #[test]
        fn student_factor_is_constant_in_t(x in increments()) {
            let p = path(&x);
            let n = p.n() as f64;
            let r = p.s_n() / p.v_squared().sqrt();
            let factor = ((n - 1.0) / (n - r * r)).sqrt();
            for k in 0..=p.n() {
                let t = k as f64 / n;
                let lhs = p.student(t).unwrap();
                let rhs = p.self_normalized(t).unwrap() * factor;
                prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1e-12));
            }
        }

        #[test]
        fn lp_is_monotone_in_the_path(x in prop::collection::vec(-5.0f64..5.0, 2..40), shrink in 0.0f64..1.0, w in weights(), p in 0.5f64..3.0) {
            let n = x.len();
            let e = LpEvaluator::new(&WeightFunction::parse(w).unwrap(), n, p).unwrap();
            let mut big = vec![0.0];
            big.extend_from_slice(&x);
            let small: Vec<f64> = big.iter().map(|v| v * shrink).collect();
            prop_assert!(e.eval(&small) <= e.eval(&big) * (1.0 + 1e-12));
        }
    }
}
