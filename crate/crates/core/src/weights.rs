//! Weight functions on `(0, 1]` and class-Q validation.
//!
//! A weight `q` belongs to class Q when it is positive on `(0,1]`, bounded
//! away from zero on every `[δ, 1]` and nondecreasing near zero. Each
//! [`WeightFunction`] carries the explicit threshold `monotone_delta` below
//! which it claims to be nondecreasing; [`WeightFunction::validate_class_q`]
//! checks that claim on a grid instead of trusting it.

use std::f64::consts::E;
use std::fmt;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WeightError {
    #[error("weight evaluated outside (0, 1]: t = {0}")]
    Domain(f64),
    #[error("invalid weight parameter: {0}")]
    InvalidParameter(String),
    #[error("cannot parse weight spec `{spec}`: {reason}")]
    Parse { spec: String, reason: String },
    #[error("validation grid needs at least 2 points, got {0}")]
    GridTooSmall(usize),
}

/// Natural log clamped from below at 1: `log(max(e, x))`.
#[inline]
pub fn guarded_log(x: f64) -> f64 {
    if x > E {
        x.ln()
    } else {
        1.0
    }
}

/// Tabulated weight interpolated linearly in `(log t, log q)`.
///
/// Below the first knot the first segment's power law is continued; above
/// the last knot the weight is held constant.
#[derive(Debug, Clone, PartialEq)]
pub struct CustomKnots {
    log_t: Vec<f64>,
    log_q: Vec<f64>,
}

impl CustomKnots {
    pub fn new(mut knots: Vec<(f64, f64)>) -> Result<Self, WeightError> {
        if knots.is_empty() {
            return Err(WeightError::InvalidParameter(
                "custom weight needs at least one knot".into(),
            ));
        }
        knots.sort_by(|a, b| a.0.total_cmp(&b.0));
        for w in knots.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(WeightError::InvalidParameter(format!(
                    "duplicate knot at t = {}",
                    w[0].0
                )));
            }
        }
        for &(t, q) in &knots {
            if !(t > 0.0 && t <= 1.0) {
                return Err(WeightError::InvalidParameter(format!(
                    "knot t = {t} outside (0, 1]"
                )));
            }
            if !(q > 0.0 && q.is_finite()) {
                return Err(WeightError::InvalidParameter(format!(
                    "knot q = {q} at t = {t} is not positive"
                )));
            }
        }
        Ok(Self {
            log_t: knots.iter().map(|k| k.0.ln()).collect(),
            log_q: knots.iter().map(|k| k.1.ln()).collect(),
        })
    }

    pub fn knot_times(&self) -> impl Iterator<Item = f64> + '_ {
        self.log_t.iter().map(|l| l.exp())
    }

    fn eval(&self, t: f64) -> f64 {
        let x = t.ln();
        let n = self.log_t.len();
        if n == 1 {
            return self.log_q[0].exp();
        }
        if x >= self.log_t[n - 1] {
            return self.log_q[n - 1].exp();
        }
        // segment index: first knot strictly above x, minus one, clamped to the
        // first segment for extrapolation
        let hi = self.log_t.partition_point(|&l| l <= x).clamp(1, n - 1);
        let lo = hi - 1;
        let slope = (self.log_q[hi] - self.log_q[lo]) / (self.log_t[hi] - self.log_t[lo]);
        (self.log_q[lo] + slope * (x - self.log_t[lo])).exp()
    }

    /// Reads `t,q` rows. Blank lines and `#` comments are skipped; a
    /// `monotone_delta=<value>` line sets the declared threshold.
    pub fn read_file(path: &Path) -> Result<(Self, Option<f64>), WeightError> {
        let spec = format!("custom:{}", path.display());
        let text = std::fs::read_to_string(path).map_err(|e| WeightError::Parse {
            spec: spec.clone(),
            reason: e.to_string(),
        })?;
        let mut knots = Vec::new();
        let mut delta = None;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = |what: &str| WeightError::Parse {
                spec: spec.clone(),
                reason: format!("line {}: {what}: `{raw}`", lineno + 1),
            };
            if let Some(v) = line.strip_prefix("monotone_delta") {
                let v = v
                    .trim_start()
                    .strip_prefix('=')
                    .ok_or_else(|| bad("expected `monotone_delta=<value>`"))?;
                delta = Some(
                    v.trim()
                        .parse::<f64>()
                        .map_err(|_| bad("bad monotone_delta"))?,
                );
                continue;
            }
            let mut parts = line.split(',').map(str::trim);
            let (Some(t), Some(q), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(bad("expected `t,q`"));
            };
            let t: f64 = t.parse().map_err(|_| bad("bad t"))?;
            let q: f64 = q.parse().map_err(|_| bad("bad q"))?;
            knots.push((t, q));
        }
        Ok((Self::new(knots)?, delta))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum WeightFamily {
    /// `t^nu`
    Power {
        nu: f64,
    },
    /// `sqrt(a · t · log log(1/t))` with guarded logs.
    SqrtLogLog {
        a: f64,
    },
    /// `sqrt(a · t · log(1/t))` with a guarded log.
    SqrtLog {
        a: f64,
    },
    Constant {
        k: f64,
    },
    Custom(CustomKnots),
}

impl WeightFamily {
    fn default_delta(&self) -> f64 {
        match self {
            WeightFamily::Power { .. }
            | WeightFamily::Constant { .. }
            | WeightFamily::Custom(_) => 1.0,
            WeightFamily::SqrtLogLog { .. } => (-E).exp(),
            WeightFamily::SqrtLog { .. } => (-1.0f64).exp(),
        }
    }
}

/// A positive weight `q` on `(0, 1]`. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightFunction {
    id: String,
    family: WeightFamily,
    monotone_delta: f64,
    scale: f64,
}

impl WeightFunction {
    pub fn new(
        id: impl Into<String>,
        family: WeightFamily,
        monotone_delta: Option<f64>,
    ) -> Result<Self, WeightError> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(WeightError::InvalidParameter(format!(
                    "{name} must be positive and finite, got {v}"
                )))
            }
        };
        match &family {
            WeightFamily::Power { nu } => positive("power exponent", *nu)?,
            WeightFamily::SqrtLogLog { a } | WeightFamily::SqrtLog { a } => {
                positive("log-weight factor", *a)?
            }
            WeightFamily::Constant { k } => positive("constant", *k)?,
            WeightFamily::Custom(_) => {}
        }
        let monotone_delta = monotone_delta.unwrap_or_else(|| family.default_delta());
        if !(monotone_delta > 0.0 && monotone_delta <= 1.0) {
            return Err(WeightError::InvalidParameter(format!(
                "monotone_delta must lie in (0, 1], got {monotone_delta}"
            )));
        }
        Ok(Self {
            id: id.into(),
            family,
            monotone_delta,
            scale: 1.0,
        })
    }

    pub fn power(nu: f64) -> Result<Self, WeightError> {
        Self::new(format!("power:{nu}"), WeightFamily::Power { nu }, None)
    }

    pub fn sqrt_log_log(a: f64) -> Result<Self, WeightError> {
        Self::new(
            format!("sqrtloglog:{a}"),
            WeightFamily::SqrtLogLog { a },
            None,
        )
    }

    pub fn sqrt_log(a: f64) -> Result<Self, WeightError> {
        Self::new(format!("sqrtlog:{a}"), WeightFamily::SqrtLog { a }, None)
    }

    pub fn constant(k: f64) -> Result<Self, WeightError> {
        Self::new(format!("const:{k}"), WeightFamily::Constant { k }, None)
    }

    pub fn custom(
        id: impl Into<String>,
        knots: Vec<(f64, f64)>,
        monotone_delta: Option<f64>,
    ) -> Result<Self, WeightError> {
        Self::new(
            id,
            WeightFamily::Custom(CustomKnots::new(knots)?),
            monotone_delta,
        )
    }

    /// Parses `power:<nu>`, `sqrtloglog:<a>`, `sqrtlog:<a>`, `const:<k>` or
    /// `custom:<path>`.
    pub fn parse(spec: &str) -> Result<Self, WeightError> {
        let spec = spec.trim();
        let bad = |reason: &str| WeightError::Parse {
            spec: spec.to_string(),
            reason: reason.to_string(),
        };
        let (name, arg) = spec
            .split_once(':')
            .ok_or_else(|| bad("expected `<family>:<parameter>`"))?;
        let num = || {
            arg.trim()
                .parse::<f64>()
                .map_err(|_| bad("parameter is not a number"))
        };
        let family = match name.trim() {
            "power" => WeightFamily::Power { nu: num()? },
            "sqrtloglog" => WeightFamily::SqrtLogLog { a: num()? },
            "sqrtlog" => WeightFamily::SqrtLog { a: num()? },
            "const" => WeightFamily::Constant { k: num()? },
            "custom" => {
                let (knots, delta) = CustomKnots::read_file(Path::new(arg.trim()))?;
                return Self::new(spec, WeightFamily::Custom(knots), delta);
            }
            other => return Err(bad(&format!("unknown family `{other}`"))),
        };
        Self::new(spec, family, None)
    }

    /// The weight `λ·q`.
    pub fn scaled(&self, lambda: f64) -> Result<Self, WeightError> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(WeightError::InvalidParameter(format!(
                "scale must be positive, got {lambda}"
            )));
        }
        Ok(Self {
            id: format!("{lambda}*{}", self.id),
            family: self.family.clone(),
            monotone_delta: self.monotone_delta,
            scale: self.scale * lambda,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn family(&self) -> &WeightFamily {
        &self.family
    }

    pub fn monotone_delta(&self) -> f64 {
        self.monotone_delta
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// `q(t)` for `t ∈ (0, 1]`.
    pub fn eval(&self, t: f64) -> Result<f64, WeightError> {
        if !(t > 0.0 && t <= 1.0) {
            return Err(WeightError::Domain(t));
        }
        Ok(self.value(t))
    }

    /// `q(t)` without the domain check; callers guarantee `t ∈ (0, 1]`.
    #[inline]
    pub(crate) fn value(&self, t: f64) -> f64 {
        self.scale * self.base_value(t)
    }

    /// `q(t) / scale`.
    #[inline]
    pub(crate) fn base_value(&self, t: f64) -> f64 {
        match &self.family {
            WeightFamily::Power { nu } => t.powf(*nu),
            WeightFamily::SqrtLogLog { a } => (a * t * guarded_log(guarded_log(1.0 / t))).sqrt(),
            WeightFamily::SqrtLog { a } => (a * t * guarded_log(1.0 / t)).sqrt(),
            WeightFamily::Constant { k } => *k,
            WeightFamily::Custom(knots) => knots.eval(t),
        }
    }

    /// Closed form of `∫_a^b dt / q(t)` when one exists.
    pub(crate) fn inverse_integral_closed_form(&self, a: f64, b: f64) -> Option<f64> {
        match self.family {
            WeightFamily::Constant { k } => Some((b - a) / (k * self.scale)),
            WeightFamily::Power { nu } => {
                let v = if (nu - 1.0).abs() < 1e-15 {
                    (b / a).ln()
                } else {
                    (b.powf(1.0 - nu) - a.powf(1.0 - nu)) / (1.0 - nu)
                };
                Some(v / self.scale)
            }
            _ => None,
        }
    }

    /// Checks class-Q membership on a log-spaced grid of `grid_size` points
    /// over `[1e-12, 1]`. Violations are reported, not raised.
    pub fn validate_class_q(&self, grid_size: usize) -> Result<ValidationReport, WeightError> {
        if grid_size < 2 {
            return Err(WeightError::GridTooSmall(grid_size));
        }
        let t_min = VALIDATION_T_MIN;
        let log_min = t_min.ln();
        let mut grid: Vec<f64> = (0..grid_size)
            .map(|i| (log_min * (1.0 - i as f64 / (grid_size - 1) as f64)).exp())
            .collect();
        grid[0] = t_min;
        grid[grid_size - 1] = 1.0;
        if let WeightFamily::Custom(knots) = &self.family {
            grid.extend(knots.knot_times().filter(|&t| t >= t_min));
            grid.sort_by(f64::total_cmp);
            grid.dedup();
        }

        let values: Vec<f64> = grid.iter().map(|&t| self.value(t)).collect();
        let positivity_violations: Vec<f64> = grid
            .iter()
            .zip(&values)
            .filter(|(_, q)| !(**q > 0.0 && q.is_finite()))
            .map(|(t, _)| *t)
            .collect();

        let mut monotonicity_violations = Vec::new();
        let upto = grid.partition_point(|&t| t <= self.monotone_delta);
        for i in 1..upto {
            if values[i] < values[i - 1] {
                monotonicity_violations.push(MonotonicityViolation {
                    t1: grid[i - 1],
                    t2: grid[i],
                    q1: values[i - 1],
                    q2: values[i],
                });
            }
        }

        let sqrt_ratio_near_zero = grid
            .iter()
            .zip(&values)
            .take(3)
            .map(|(t, q)| (*t, t.sqrt() / q))
            .collect();

        Ok(ValidationReport {
            grid_size: grid.len(),
            t_min,
            monotone_delta: self.monotone_delta,
            positivity_violations,
            monotonicity_violations,
            sqrt_ratio_near_zero,
        })
    }
}

impl fmt::Display for WeightFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id)
    }
}

pub const VALIDATION_T_MIN: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct MonotonicityViolation {
    pub t1: f64,
    pub t2: f64,
    pub q1: f64,
    pub q2: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub grid_size: usize,
    pub t_min: f64,
    pub monotone_delta: f64,
    /// Grid points where `q` was not positive and finite.
    pub positivity_violations: Vec<f64>,
    /// Adjacent grid pairs below `monotone_delta` where `q` decreased.
    pub monotonicity_violations: Vec<MonotonicityViolation>,
    /// `(t, t^{1/2}/q(t))` at the three smallest grid points. Should be
    /// small when the integral criterion holds for some `c`.
    pub sqrt_ratio_near_zero: Vec<(f64, f64)>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.positivity_violations.is_empty() && self.monotonicity_violations.is_empty()
    }
}
