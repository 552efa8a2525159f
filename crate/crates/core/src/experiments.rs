//! Seeded Monte Carlo experiments.
//!
//! Convergence in distribution is measured as the two-sample KS distance
//! between finite-`n` functional samples and a simulated limit sample. One
//! limit sample is shared by all `n` of a run.
//!
//! Paths for size `n` come from the seeder `<seed>/paths/<model>/n=<n>`, so
//! runs that differ only in weight, functional or normalization see the same
//! increments.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::criterion::{classify_default, CriterionError, Verdict};
use crate::dan_models::{DanError, DistributionModel};
use crate::empirical::{ks_sorted, EmpiricalDistribution, EmpiricalError, Provenance};
use crate::processes::{
    CompiledFunctional, FunctionalKind, Normalization, PathSample, ProcessError,
};
use crate::seeding::Seeder;
use crate::weights::WeightFunction;
use crate::wiener::{self, WienerError, WienerGrid};

/// Threshold `ε^{1/2}/2` with `ε = 1/4`.
pub const COUNTEREXAMPLE_THRESHOLD: f64 = 0.25;
/// Slack allowed when judging a KS sequence nonincreasing.
pub const KS_TREND_SLACK: f64 = 0.01;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("refused: {0}")]
    Refused(String),
    #[error("invalid experiment: {0}")]
    Invalid(String),
    #[error(transparent)]
    Norming(#[from] DanError),
    #[error(transparent)]
    Criterion(#[from] CriterionError),
    #[error(transparent)]
    Wiener(WienerError),
    #[error(transparent)]
    Process(#[from] ProcessError),
    #[error(transparent)]
    Empirical(#[from] EmpiricalError),
}

impl From<WienerError> for ExperimentError {
    fn from(e: WienerError) -> Self {
        match e {
            WienerError::Refused(m) => ExperimentError::Refused(m),
            other => ExperimentError::Wiener(other),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TauRule {
    Fixed(f64),
    OneOverLogN,
    OneOverN,
}

impl TauRule {
    pub fn tau(&self, n: u64) -> f64 {
        match *self {
            TauRule::Fixed(t) => t,
            TauRule::OneOverLogN => 1.0 / (n as f64).ln(),
            TauRule::OneOverN => 1.0 / n as f64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    BySelf,
    ByBn,
    ByStudent,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Functional {
    Sup { tau_rule: TauRule },
    Lp { p: f64 },
}

impl Functional {
    fn kind_at(&self, n: u64) -> FunctionalKind {
        match *self {
            Functional::Sup { tau_rule } => FunctionalKind::WeightedSup {
                tau: tau_rule.tau(n),
            },
            Functional::Lp { p } => FunctionalKind::WeightedLp { p },
        }
    }

    /// `sup` or `lp[p=<p>]`; finite-`n` and limit samples of the same
    /// functional share this label.
    pub fn label(&self) -> String {
        match self {
            Functional::Sup { .. } => "sup".into(),
            Functional::Lp { p } => format!("lp[p={p}]"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ConvergenceSpec {
    pub model: DistributionModel,
    pub weight: WeightFunction,
    pub functional: Functional,
    pub normalization: NormKind,
    pub ns: Vec<u64>,
    pub replicates: usize,
    pub seed: u64,
    pub grid: WienerGrid,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub n: u64,
    pub replicates: usize,
    pub ks_to_limit: f64,
    pub median: f64,
    pub iqr: f64,
    pub degenerate: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub model: String,
    pub weight: String,
    pub functional: String,
    pub normalization: NormKind,
    pub limit_replicates: usize,
    pub limit_median: f64,
    pub limit_converged: Option<bool>,
    pub ks_noise_floor: f64,
    pub rows: Vec<ConvergenceRow>,
    pub verdict_hint: String,
}

impl ConvergenceReport {
    pub fn ks_values(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.ks_to_limit).collect()
    }

    /// KS nonincreasing in `n` up to `slack`.
    pub fn ks_nonincreasing(&self, slack: f64) -> bool {
        self.rows
            .windows(2)
            .all(|w| w[1].ks_to_limit <= w[0].ks_to_limit + slack)
    }

    pub fn final_ks(&self) -> Option<f64> {
        self.rows.last().map(|r| r.ks_to_limit)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,replicates,ks_to_limit,median,iqr,degenerate\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{:e},{:e},{:e},{}\n",
                r.n, r.replicates, r.ks_to_limit, r.median, r.iqr, r.degenerate
            ));
        }
        out
    }
}

/// Samples and report of one convergence run.
#[derive(Debug, Clone)]
pub struct ConvergenceRun {
    pub report: ConvergenceReport,
    pub limit: EmpiricalDistribution,
    pub samples: Vec<EmpiricalDistribution>,
}

fn check_ns(ns: &[u64], min: u64) -> Result<(), ExperimentError> {
    if ns.is_empty() {
        return Err(ExperimentError::Invalid("ns is empty".into()));
    }
    if ns.windows(2).any(|w| w[0] >= w[1]) {
        return Err(ExperimentError::Invalid(
            "ns must be strictly increasing".into(),
        ));
    }
    if ns[0] < min {
        return Err(ExperimentError::Invalid(format!(
            "ns must be at least {min}"
        )));
    }
    Ok(())
}

pub fn path_seeder(seed: u64, model: &DistributionModel, n: u64) -> Seeder {
    Seeder::new(seed, "paths")
        .child(&model.id())
        .child(&format!("n={n}"))
}

/// Functional values of `replicates` simulated paths of length `n`, in
/// replicate order. Degenerate paths yield `Err`.
pub fn simulate_functional(
    model: &DistributionModel,
    weight: &WeightFunction,
    kind: FunctionalKind,
    normalization: NormKind,
    n: u64,
    replicates: usize,
    seed: u64,
) -> Result<Vec<Result<f64, ProcessError>>, ExperimentError> {
    let compiled = CompiledFunctional::new(kind, weight, n as usize)?;
    let norm = match normalization {
        NormKind::BySelf => Normalization::BySelf,
        NormKind::ByStudent => Normalization::ByStudent,
        NormKind::ByBn => Normalization::ByBn(model.b_squared(n)?.sqrt()),
    };
    let seeder = path_seeder(seed, model, n);
    Ok((0..replicates)
        .into_par_iter()
        .map_init(Vec::new, |buf, i| {
            let mut rng = seeder.rng(i as u64);
            model.fill(&mut rng, n as usize, buf);
            let path = PathSample::new(std::mem::take(buf))?;
            let values = path.normalized(norm)?;
            Ok(compiled.eval(&values))
        })
        .collect())
}

fn limit_sample(spec: &ConvergenceSpec) -> Result<wiener::LimitSample, ExperimentError> {
    let seeder = Seeder::new(spec.seed, "limit")
        .child(spec.weight.id())
        .child(&spec.functional.label());
    Ok(match spec.functional {
        Functional::Sup { .. } => {
            wiener::limit_sup_functional(&spec.weight, &spec.grid, &seeder, spec.replicates)?
        }
        Functional::Lp { p } => {
            wiener::limit_lp_functional(&spec.weight, p, &spec.grid, &seeder, spec.replicates)?
        }
    })
}

/// KS distance to the simulated limit for each `n`.
///
/// Sup functionals are refused for weights with a divergent integral
/// criterion and `L_p` functionals for weights with an infinite `L_p`
/// criterion; in both cases the limit functional is a.s. infinite.
pub fn run_functional_convergence(
    spec: &ConvergenceSpec,
) -> Result<ConvergenceRun, ExperimentError> {
    check_ns(&spec.ns, 1)?;
    if spec.replicates == 0 {
        return Err(ExperimentError::Invalid(
            "replicates must be positive".into(),
        ));
    }
    let limit = limit_sample(spec)?;
    let limit_dist = limit.distribution;
    let mut rows = Vec::with_capacity(spec.ns.len());
    let mut samples = Vec::with_capacity(spec.ns.len());
    for &n in &spec.ns {
        let kind = spec.functional.kind_at(n);
        let raw = simulate_functional(
            &spec.model,
            &spec.weight,
            kind,
            spec.normalization,
            n,
            spec.replicates,
            spec.seed,
        )?;
        let degenerate = raw.iter().filter(|r| r.is_err()).count();
        let values: Vec<f64> = raw.into_iter().filter_map(Result::ok).collect();
        let mut details = serde_json::Map::new();
        details.insert(
            "normalization".into(),
            serde_json::to_value(spec.normalization).unwrap_or_default(),
        );
        details.insert("degenerate".into(), degenerate.into());
        if let FunctionalKind::WeightedSup { tau } = kind {
            details.insert("tau".into(), tau.into());
            details.insert(
                "tau_rule".into(),
                serde_json::to_value(spec.functional).unwrap_or_default(),
            );
        }
        let meta = Provenance {
            model: Some(spec.model.id()),
            weight: Some(spec.weight.id().to_string()),
            functional: Some(spec.functional.label()),
            n: Some(n),
            seed: Some(spec.seed),
            details,
        };
        let dist = EmpiricalDistribution::new(values, meta)?;
        if dist.is_empty() {
            return Err(ExperimentError::Invalid(format!(
                "every path at n = {n} was degenerate"
            )));
        }
        rows.push(ConvergenceRow {
            n,
            replicates: dist.count(),
            ks_to_limit: ks_sorted(dist.values(), limit_dist.values())?,
            median: dist.median()?,
            iqr: dist.iqr()?,
            degenerate,
        });
        samples.push(dist);
    }
    let m = spec.replicates as f64;
    let ks_noise_floor = 2.0 * (2.0 / m).sqrt();
    let mut report = ConvergenceReport {
        model: spec.model.id(),
        weight: spec.weight.id().to_string(),
        functional: spec.functional.label(),
        normalization: spec.normalization,
        limit_replicates: limit_dist.count(),
        limit_median: limit_dist.median()?,
        limit_converged: limit.diagnostic.map(|d| d.converged),
        ks_noise_floor,
        rows,
        verdict_hint: String::new(),
    };
    report.verdict_hint = trend_hint(&report);
    Ok(ConvergenceRun {
        report,
        limit: limit_dist,
        samples,
    })
}

fn trend_hint(r: &ConvergenceReport) -> String {
    let trend = if r.ks_nonincreasing(KS_TREND_SLACK) {
        "nonincreasing"
    } else {
        "not monotone"
    };
    let last = r.final_ks().unwrap_or(f64::NAN);
    let floor = if last < r.ks_noise_floor {
        "below"
    } else {
        "above"
    };
    format!(
        "ks {trend} in n (slack {KS_TREND_SLACK}); final {last:.4} {floor} noise floor {:.4}",
        r.ks_noise_floor
    )
}

/// `run_functional_convergence` for an `L_p` functional.
pub fn run_lp_convergence(
    model: DistributionModel,
    weight: WeightFunction,
    p: f64,
    ns: Vec<u64>,
    replicates: usize,
    seed: u64,
) -> Result<ConvergenceRun, ExperimentError> {
    run_functional_convergence(&ConvergenceSpec {
        model,
        weight,
        functional: Functional::Lp { p },
        normalization: NormKind::BySelf,
        ns,
        replicates,
        seed,
        grid: WienerGrid::default(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConcentrationRow {
    pub n: u64,
    pub b2: f64,
    pub fraction: f64,
}

/// Fraction of replicates with `|V_n²/b_n² - 1| ≤ eps`, per `n`.
pub fn run_vn_bn_concentration(
    model: &DistributionModel,
    ns: &[u64],
    replicates: usize,
    seed: u64,
    eps: f64,
) -> Result<Vec<ConcentrationRow>, ExperimentError> {
    if !(eps > 0.0) {
        return Err(ExperimentError::Invalid(format!(
            "eps must be positive, got {eps}"
        )));
    }
    check_ns(ns, 1)?;
    if replicates == 0 {
        return Err(ExperimentError::Invalid(
            "replicates must be positive".into(),
        ));
    }
    ns.iter()
        .map(|&n| {
            let b2 = model.b_squared(n)?;
            let seeder = path_seeder(seed, model, n);
            let hits: usize = (0..replicates)
                .into_par_iter()
                .map_init(Vec::new, |buf, i| {
                    let mut rng = seeder.rng(i as u64);
                    model.fill(&mut rng, n as usize, buf);
                    let v2: f64 = buf.iter().map(|x| x * x).sum();
                    usize::from((v2 / b2 - 1.0).abs() <= eps)
                })
                .sum();
            Ok(ConcentrationRow {
                n,
                b2,
                fraction: hits as f64 / replicates as f64,
            })
        })
        .collect()
}

/// `(1/n) Σ_{j ≤ n} (σ*_j / √l(η_n) - 1)²` per `n`, from the norming table.
pub fn run_sigma_ratio_check(
    model: &DistributionModel,
    ns: &[u64],
) -> Result<Vec<(u64, f64)>, ExperimentError> {
    check_ns(ns, 1)?;
    ns.iter()
        .map(|&n| {
            let seq = model.eta_sigma_sequence(n)?;
            let root_l = model.l(seq[seq.len() - 1].0).sqrt();
            let sum: f64 = seq.iter().map(|&(_, s)| (s / root_l - 1.0).powi(2)).sum();
            Ok((n, sum / n as f64))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WindowRow {
    pub n: u64,
    pub replicates: usize,
    /// `P̂(window sup > 1/4)` for `q² = t·loglog(1/t)`.
    pub p_loglog: f64,
    /// The same for the contrast weight `q² = t·log(1/t)`.
    pub p_contrast: f64,
    pub lower_bound: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RatioRow {
    pub n: u64,
    /// `max_{j ≤ √n} l(η_j) / l(η_n)`.
    pub max_ratio: f64,
    /// `2 exp[(0.3^α - 0.5^α)(log n)^α]`.
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CounterexampleReport {
    pub threshold: f64,
    pub windows: Vec<WindowRow>,
    pub alpha: f64,
    pub ratios: Vec<RatioRow>,
}

/// Window sups over `[1/n, 1/√n]` for `q² = t·loglog(1/t)` and the contrast
/// `q² = t·log(1/t)`, plus the truncated-moment ratio for the slowly varying
/// law with exponent `alpha`.
pub fn run_counterexample(
    ns: &[u64],
    replicates: usize,
    seed: u64,
    alpha: f64,
) -> Result<CounterexampleReport, ExperimentError> {
    check_ns(ns, 1_000)?;
    if *ns.last().unwrap() > 100_000_000 {
        return Err(ExperimentError::Invalid("ns must lie in [1e3, 1e8]".into()));
    }
    if replicates == 0 {
        return Err(ExperimentError::Invalid(
            "replicates must be positive".into(),
        ));
    }
    let loglog = WeightFunction::sqrt_log_log(1.0).expect("valid weight");
    let contrast = WeightFunction::sqrt_log(1.0).expect("valid weight");
    let exceed = |d: &EmpiricalDistribution| 1.0 - d.ecdf(COUNTEREXAMPLE_THRESHOLD);
    let root = Seeder::new(seed, "counterexample");
    let windows = ns
        .iter()
        .map(|&n| {
            // both weights read the same Wiener paths
            let seeder = root.child(&format!("n={n}"));
            let a = wiener::window_sup_functional(&loglog, n, &seeder, replicates)?;
            let b = wiener::window_sup_functional(&contrast, n, &seeder, replicates)?;
            Ok(WindowRow {
                n,
                replicates,
                p_loglog: exceed(&a),
                p_contrast: exceed(&b),
                lower_bound: wiener::counterexample_lower_bound(n, 0.25)?,
            })
        })
        .collect::<Result<Vec<_>, ExperimentError>>()?;
    let model = DistributionModel::slow_vary(alpha)?;
    let ratios = ns
        .iter()
        .map(|&n| {
            let l_n = model.l(model.eta(n)?);
            let j_max = ((n as f64).sqrt().floor() as u64).max(1);
            let mut max_ratio: f64 = 0.0;
            for j in 1..=j_max {
                max_ratio = max_ratio.max(model.l(model.eta(j)?) / l_n);
            }
            let bound = 2.0
                * ((0.3f64.powf(alpha) - 0.5f64.powf(alpha)) * (n as f64).ln().powf(alpha)).exp();
            Ok(RatioRow {
                n,
                max_ratio,
                bound,
            })
        })
        .collect::<Result<Vec<_>, ExperimentError>>()?;
    Ok(CounterexampleReport {
        threshold: COUNTEREXAMPLE_THRESHOLD,
        windows,
        alpha,
        ratios,
    })
}

/// Refuses weights whose integral criterion diverges.
pub fn require_sup_limit(weight: &WeightFunction) -> Result<Verdict, ExperimentError> {
    let v = classify_default(weight)?;
    if v.is_divergent() {
        return Err(ExperimentError::Refused(format!(
            "weight {} has a divergent integral criterion",
            weight.id()
        )));
    }
    Ok(v.verdict)
}
