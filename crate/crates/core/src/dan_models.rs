//! Zero-mean laws in the domain of attraction of the normal law and their
//! norming objects.
//!
//! With `l(x) = E X² 1{|X| ≤ x}` and `b = inf{x ≥ 1 : l(x) > 0}`:
//!
//! ```text
//! η_j  = inf{ s ≥ b + 1 : l(s)/s² ≤ 1/j }
//! b_n² = n · l(η_n)
//! σ*_j = sqrt(Var(X 1{|X| ≤ η_j}))
//! ```
//!
//! All quantities here are exact or closed-form; nothing in a
//! [`NormingTable`] is simulated.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::fmt;

use libm::erf;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

/// Upper limit for the `η_j` bracket search.
pub const ETA_S_MAX: f64 = 1e30;
/// Relative bisection tolerance for `η_j`.
pub const ETA_REL_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DanError {
    #[error("model domain error: {0}")]
    Domain(String),
    #[error("cannot construct model: {0}")]
    Construction(String),
    #[error("no bracket for eta_{j} below s_max = {s_max:e}")]
    NoBracket { j: u64, s_max: f64 },
    #[error("cannot parse model spec `{spec}`: {reason}")]
    Parse { spec: String, reason: String },
}

/// Symmetric discrete law with `l(x) ≈ exp((log x)^α)`.
///
/// Atoms sit at `±x_k`, `x_k = grid_ratio^k`, `k = 1..=k_max`, each sign
/// with mass `p_k / 2` where `p_k = (L(x_k) - L(x_{k-1})) / x_k²` and
/// `L(x) = exp((log x)^α)`. The remaining mass sits at zero. Then
/// `l(x_k) = L(x_k) - L(1)` exactly, so `l(x)/L(x) → 1` along the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SlowVaryTail {
    alpha: f64,
    grid_ratio: f64,
    magnitudes: Vec<f64>,
    /// Total mass `p_k` at `±x_k`.
    masses: Vec<f64>,
    /// `l(x_k)`.
    cum_l: Vec<f64>,
    /// `P(|X| ≤ x_k)` including the atom at zero, for sampling.
    cum_mass: Vec<f64>,
    zero_mass: f64,
}

impl SlowVaryTail {
    pub fn target(alpha: f64, x: f64) -> f64 {
        if x <= 1.0 {
            1.0
        } else {
            x.ln().powf(alpha).exp()
        }
    }

    /// Builds the atom table. With `k_max = None` the largest `k` with
    /// `x_k ≤` [`ETA_S_MAX`] and total atom mass at most one is used.
    pub fn build(alpha: f64, grid_ratio: f64, k_max: Option<usize>) -> Result<Self, DanError> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(DanError::Construction(format!(
                "alpha must lie in (0, 1), got {alpha}"
            )));
        }
        if !(grid_ratio > 1.0 && grid_ratio.is_finite()) {
            return Err(DanError::Construction(format!(
                "grid_ratio must exceed 1, got {grid_ratio}"
            )));
        }
        let cap = (ETA_S_MAX.ln() / grid_ratio.ln()).floor() as usize;
        let limit = match k_max {
            Some(0) => return Err(DanError::Construction("k_max must be at least 1".into())),
            Some(k) => k,
            None => cap,
        };

        let mut magnitudes = Vec::new();
        let mut masses = Vec::new();
        let mut cum_l = Vec::new();
        let mut total = 0.0;
        let mut prev_target = Self::target(alpha, 1.0);
        for k in 1..=limit {
            let x = grid_ratio.powi(k as i32);
            let target = Self::target(alpha, x);
            let p = ((target - prev_target) / (x * x)).max(0.0);
            if total + p > 1.0 {
                if k_max.is_some() {
                    return Err(DanError::Construction(format!(
                        "atom masses exceed one at k = {k}; lower k_max or raise grid_ratio"
                    )));
                }
                break;
            }
            total += p;
            magnitudes.push(x);
            masses.push(p);
            cum_l.push(target - Self::target(alpha, 1.0));
            prev_target = target;
        }
        if magnitudes.is_empty() {
            return Err(DanError::Construction(
                "no atom fits below total mass one".into(),
            ));
        }
        let zero_mass = (1.0 - total).max(0.0);
        let mut acc = zero_mass;
        let cum_mass = masses
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        Ok(Self {
            alpha,
            grid_ratio,
            magnitudes,
            masses,
            cum_l,
            cum_mass,
            zero_mass,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn grid_ratio(&self) -> f64 {
        self.grid_ratio
    }

    pub fn k_max(&self) -> usize {
        self.magnitudes.len()
    }

    pub fn magnitudes(&self) -> &[f64] {
        &self.magnitudes
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn zero_mass(&self) -> f64 {
        self.zero_mass
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        if u < self.zero_mass {
            return 0.0;
        }
        let i = self
            .cum_mass
            .partition_point(|&c| c <= u)
            .min(self.magnitudes.len() - 1);
        if rng.random::<bool>() {
            self.magnitudes[i]
        } else {
            -self.magnitudes[i]
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DistributionModel {
    Rademacher,
    StandardNormal,
    UniformSym { half_width: f64 },
    SlowVaryTail(SlowVaryTail),
}

fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

impl DistributionModel {
    pub fn uniform(half_width: f64) -> Result<Self, DanError> {
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(DanError::Construction(format!(
                "half width must be positive, got {half_width}"
            )));
        }
        Ok(Self::UniformSym { half_width })
    }

    pub fn slow_vary(alpha: f64) -> Result<Self, DanError> {
        build_slow_vary_tail(alpha, 2.0, None)
    }

    /// Parses `rademacher`, `normal`, `uniform:<h>` or
    /// `slowvary:<alpha>[:<ratio>[:<k_max>]]`.
    pub fn parse(spec: &str) -> Result<Self, DanError> {
        let spec = spec.trim();
        let bad = |reason: &str| DanError::Parse {
            spec: spec.to_string(),
            reason: reason.to_string(),
        };
        let mut parts = spec.split(':');
        let name = parts.next().unwrap_or("");
        let args: Vec<&str> = parts.collect();
        let num = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| bad("parameter is not a number"))
        };
        match (name, args.as_slice()) {
            ("rademacher", []) => Ok(Self::Rademacher),
            ("normal", []) => Ok(Self::StandardNormal),
            ("uniform", [h]) => Self::uniform(num(h)?),
            ("slowvary", [a]) => build_slow_vary_tail(num(a)?, 2.0, None),
            ("slowvary", [a, r]) => build_slow_vary_tail(num(a)?, num(r)?, None),
            ("slowvary", [a, r, k]) => {
                let k = k
                    .trim()
                    .parse::<usize>()
                    .map_err(|_| bad("k_max is not an integer"))?;
                build_slow_vary_tail(num(a)?, num(r)?, Some(k))
            }
            _ => Err(bad(
                "expected rademacher, normal, uniform:<h> or slowvary:<alpha>[:<ratio>[:<k_max>]]",
            )),
        }
    }

    pub fn id(&self) -> String {
        match self {
            Self::Rademacher => "rademacher".into(),
            Self::StandardNormal => "normal".into(),
            Self::UniformSym { half_width } => format!("uniform:{half_width}"),
            Self::SlowVaryTail(s) => format!("slowvary:{}:{}:{}", s.alpha, s.grid_ratio, s.k_max()),
        }
    }

    /// All built-ins are symmetric about zero.
    pub fn symmetric(&self) -> bool {
        true
    }

    /// Whether `l(x)` is available in closed or finite-sum form.
    pub fn analytic_l(&self) -> bool {
        true
    }

    pub fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Self::Rademacher => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
            Self::StandardNormal => StandardNormal.sample(rng),
            Self::UniformSym { half_width } => Uniform::new(-half_width, *half_width)
                .expect("positive width")
                .sample(rng),
            Self::SlowVaryTail(s) => s.sample(rng),
        }
    }

    /// `m` i.i.d. draws.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, m: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(m);
        self.fill(rng, m, &mut out);
        out
    }

    /// Clears `out` and fills it with `m` i.i.d. draws.
    pub fn fill<R: Rng + ?Sized>(&self, rng: &mut R, m: usize, out: &mut Vec<f64>) {
        out.clear();
        match self {
            Self::StandardNormal => out.extend(
                (0..m).map(|_| <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng)),
            ),
            Self::UniformSym { half_width } => {
                let u = Uniform::new(-half_width, *half_width).expect("positive width");
                out.extend((0..m).map(|_| u.sample(rng)));
            }
            _ => out.extend((0..m).map(|_| self.sample_one(rng))),
        }
    }

    /// `l(x) = E X² 1{|X| ≤ x}`.
    pub fn truncated_second_moment(&self, x: f64) -> Result<f64, DanError> {
        if !(x >= 0.0) {
            return Err(DanError::Domain(format!(
                "truncation level must be nonnegative, got {x}"
            )));
        }
        Ok(self.l(x))
    }

    pub(crate) fn l(&self, x: f64) -> f64 {
        match self {
            Self::Rademacher => {
                if x >= 1.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Self::StandardNormal => {
                if x.is_infinite() {
                    1.0
                } else {
                    // 1 - 2xφ(x) - 2(1 - Φ(x)) written via erf for accuracy
                    (erf(x * FRAC_1_SQRT_2) - 2.0 * x * std_normal_pdf(x)).max(0.0)
                }
            }
            Self::UniformSym { half_width } => {
                let m = x.min(*half_width);
                m * m * m / (3.0 * half_width)
            }
            Self::SlowVaryTail(s) => {
                let i = s.magnitudes.partition_point(|&m| m <= x);
                if i == 0 {
                    0.0
                } else {
                    s.cum_l[i - 1]
                }
            }
        }
    }

    /// `E X 1{|X| ≤ x}`; zero for every symmetric built-in.
    pub fn truncated_mean(&self, _x: f64) -> f64 {
        0.0
    }

    /// `E X²` (finite for every built-in, possibly large).
    pub fn second_moment(&self) -> f64 {
        self.l(f64::INFINITY)
    }

    /// `b = inf{x ≥ 1 : l(x) > 0}`.
    pub fn b(&self) -> f64 {
        match self {
            Self::SlowVaryTail(s) => s.magnitudes[0].max(1.0),
            _ => 1.0,
        }
    }

    /// Sorted atom magnitudes with `l` on `[x_i, x_{i+1})`, for laws where `l`
    /// is a step function.
    fn step_structure(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        match self {
            Self::Rademacher => Some((vec![1.0], vec![1.0])),
            Self::SlowVaryTail(s) => Some((s.magnitudes.clone(), s.cum_l.clone())),
            _ => None,
        }
    }

    /// `η_j = inf{s ≥ b+1 : l(s)/s² ≤ 1/j}`.
    pub fn eta(&self, j: u64) -> Result<f64, DanError> {
        if j == 0 {
            return Err(DanError::Domain("eta index starts at 1".into()));
        }
        let floor = self.b() + 1.0;
        let jf = j as f64;
        if let Some((atoms, levels)) = self.step_structure() {
            return Ok(eta_step(&atoms, &levels, floor, jf));
        }
        let holds = |s: f64| self.l(s) / (s * s) <= 1.0 / jf;
        if holds(floor) {
            return Ok(floor);
        }
        let mut lo = floor;
        let mut hi = 2.0 * floor;
        while !holds(hi) {
            if hi > ETA_S_MAX {
                return Err(DanError::NoBracket {
                    j,
                    s_max: ETA_S_MAX,
                });
            }
            lo = hi;
            hi *= 2.0;
        }
        while hi - lo > ETA_REL_TOL * hi {
            let mid = 0.5 * (lo + hi);
            if holds(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(hi)
    }

    /// `σ*` for truncation level `eta`.
    pub fn sigma_star_at(&self, eta: f64) -> f64 {
        let m = self.truncated_mean(eta);
        (self.l(eta) - m * m).max(0.0).sqrt()
    }

    /// Norming rows for increasing `js`.
    pub fn norming_table(&self, js: &[u64]) -> Result<NormingTable, DanError> {
        if js.is_empty() {
            return Err(DanError::Domain("js is empty".into()));
        }
        if js[0] == 0 || js.windows(2).any(|w| w[0] >= w[1]) {
            return Err(DanError::Domain(
                "js must be positive and strictly increasing".into(),
            ));
        }
        let rows = js
            .iter()
            .map(|&j| {
                let eta = self.eta(j)?;
                let l_eta = self.l(eta);
                Ok(NormingRow {
                    j,
                    eta,
                    l_eta,
                    b2: j as f64 * l_eta,
                    sigma_star: self.sigma_star_at(eta),
                })
            })
            .collect::<Result<Vec<_>, DanError>>()?;
        Ok(NormingTable {
            model_id: self.id(),
            rows,
        })
    }

    /// `b_n² = n · l(η_n)`.
    pub fn b_squared(&self, n: u64) -> Result<f64, DanError> {
        Ok(n as f64 * self.l(self.eta(n)?))
    }

    /// `(η_j, σ*_j)` for `j = 1..=n`.
    pub fn eta_sigma_sequence(&self, n: u64) -> Result<Vec<(f64, f64)>, DanError> {
        (1..=n)
            .into_par_iter()
            .map(|j| {
                let eta = self.eta(j)?;
                Ok((eta, self.sigma_star_at(eta)))
            })
            .collect()
    }
}

fn eta_step(atoms: &[f64], levels: &[f64], floor: f64, j: f64) -> f64 {
    // on [atoms[i], atoms[i+1]) l equals levels[i]; below atoms[0] it is 0
    let start = atoms.partition_point(|&a| a <= floor);
    if start == 0 {
        // l(floor) = 0 satisfies the condition
        return floor;
    }
    for i in (start - 1)..atoms.len() {
        let lo = if i + 1 == start { floor } else { atoms[i] };
        let candidate = lo.max((j * levels[i]).sqrt());
        match atoms.get(i + 1) {
            Some(&next) if candidate >= next => continue,
            _ => return candidate,
        }
    }
    unreachable!("the last interval is unbounded")
}

impl fmt::Display for DistributionModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id())
    }
}

/// Builds the slowly varying counterexample law.
pub fn build_slow_vary_tail(
    alpha: f64,
    grid_ratio: f64,
    k_max: Option<usize>,
) -> Result<DistributionModel, DanError> {
    Ok(DistributionModel::SlowVaryTail(SlowVaryTail::build(
        alpha, grid_ratio, k_max,
    )?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormingRow {
    pub j: u64,
    pub eta: f64,
    pub l_eta: f64,
    pub b2: f64,
    pub sigma_star: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormingTable {
    pub model_id: String,
    pub rows: Vec<NormingRow>,
}

impl NormingTable {
    /// CSV with header `j,eta,l_eta,b2,sigma_star`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("j,eta,l_eta,b2,sigma_star\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{:e},{:e},{:e},{:e}\n",
                r.j, r.eta, r.l_eta, r.b2, r.sigma_star
            ));
        }
        out
    }
}
