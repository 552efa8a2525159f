//! TOML experiment configuration.
//!
//! ```toml
//! model = "normal"
//! weight = "sqrtlog:1"
//! seed = 7
//! ns = [100, 1000, 10000]      # or "100,1000,10000"
//! replicates = 2000
//! functional = "sup"           # or "lp", with p = 1.0
//! tau_rule = "one_over_log_n"  # "one_over_n", "fixed:0.05"
//! normalization = "self"       # "bn", "student"
//! output_dir = "out"
//! ```

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dan_models::DistributionModel;
use crate::experiments::{Functional, NormKind, TauRule};
use crate::weights::WeightFunction;

pub const DEFAULT_REPLICATES: usize = 2000;
pub const DEFAULT_NS: [u64; 3] = [100, 1_000, 10_000];

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid config:\n  - {}", .0.join("\n  - "))]
    Validation(Vec<String>),
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum NsField {
    List(Vec<u64>),
    Text(String),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    model: Option<String>,
    weight: Option<String>,
    seed: Option<u64>,
    ns: Option<NsField>,
    replicates: Option<i64>,
    functional: Option<String>,
    p: Option<f64>,
    tau_rule: Option<String>,
    normalization: Option<String>,
    output_dir: Option<PathBuf>,
}

/// A validated configuration with every default resolved.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub model: String,
    pub weight: String,
    pub seed: u64,
    pub ns: Vec<u64>,
    pub replicates: usize,
    pub functional: Functional,
    pub normalization: NormKind,
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn tau_rule(&self) -> Option<TauRule> {
        match self.functional {
            Functional::Sup { tau_rule } => Some(tau_rule),
            Functional::Lp { .. } => None,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }
}

pub fn parse_tau_rule(s: &str) -> Result<TauRule, String> {
    let s = s.trim();
    match s {
        "one_over_n" | "1/n" => Ok(TauRule::OneOverN),
        "one_over_log_n" | "1/log n" | "1/logn" => Ok(TauRule::OneOverLogN),
        _ => {
            let v = s
                .strip_prefix("fixed:")
                .and_then(|v| v.trim().parse::<f64>().ok())
                .ok_or_else(|| {
                    format!("tau_rule `{s}` is not one_over_n, one_over_log_n or fixed:<tau>")
                })?;
            if (0.0..1.0).contains(&v) {
                Ok(TauRule::Fixed(v))
            } else {
                Err(format!("fixed tau must lie in [0, 1), got {v}"))
            }
        }
    }
}

pub fn parse_normalization(s: &str) -> Result<NormKind, String> {
    match s.trim() {
        "self" => Ok(NormKind::BySelf),
        "bn" => Ok(NormKind::ByBn),
        "student" => Ok(NormKind::ByStudent),
        other => Err(format!(
            "normalization `{other}` is not self, bn or student"
        )),
    }
}

/// Parses a comma-separated list of sample sizes.
pub fn parse_ns(s: &str) -> Result<Vec<u64>, String> {
    s.split(',')
        .map(|x| {
            x.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| *v >= 1.0 && v.fract() == 0.0)
                .map(|v| v as u64)
        })
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| format!("ns `{s}` is not a list of positive integers"))
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    let mut errors = Vec::new();

    let model = match raw.model {
        Some(m) => {
            if let Err(e) = DistributionModel::parse(&m) {
                errors.push(format!("model: {e}"));
            }
            m
        }
        None => {
            errors.push("model: missing".into());
            String::new()
        }
    };
    let weight = match raw.weight {
        Some(w) => {
            if let Err(e) = WeightFunction::parse(&w) {
                errors.push(format!("weight: {e}"));
            }
            w
        }
        None => {
            errors.push("weight: missing".into());
            String::new()
        }
    };
    if raw.seed.is_none() {
        errors.push("seed: missing (seeds are mandatory)".into());
    }
    let ns = match raw.ns {
        None => DEFAULT_NS.to_vec(),
        Some(NsField::List(v)) => v,
        Some(NsField::Text(s)) => parse_ns(&s).unwrap_or_else(|e| {
            errors.push(format!("ns: {e}"));
            Vec::new()
        }),
    };
    if ns.is_empty() {
        errors.push("ns: must be nonempty".into());
    } else if ns.windows(2).any(|w| w[0] >= w[1]) {
        errors.push(format!("ns: must be strictly increasing, got {ns:?}"));
    } else if ns[0] == 0 {
        errors.push("ns: sizes must be positive".into());
    }
    let replicates = match raw.replicates {
        None => DEFAULT_REPLICATES,
        Some(r) if r >= 1 => r as usize,
        Some(r) => {
            errors.push(format!("replicates: must be at least 1, got {r}"));
            0
        }
    };
    let tau_rule = raw
        .tau_rule
        .as_deref()
        .map(parse_tau_rule)
        .transpose()
        .unwrap_or_else(|e| {
            errors.push(format!("tau_rule: {e}"));
            None
        });
    let functional = match raw.functional.as_deref().unwrap_or("sup") {
        "sup" => {
            if raw.p.is_some() {
                errors.push("p: only valid with functional = \"lp\"".into());
            }
            Functional::Sup {
                tau_rule: tau_rule.unwrap_or(TauRule::OneOverN),
            }
        }
        "lp" => {
            if raw.tau_rule.is_some() {
                errors.push("tau_rule: only valid with functional = \"sup\"".into());
            }
            let p = raw.p.unwrap_or(1.0);
            if !(p > 0.0 && p.is_finite()) {
                errors.push(format!("p: must be positive, got {p}"));
            }
            Functional::Lp { p }
        }
        other => {
            errors.push(format!("functional: `{other}` is not sup or lp"));
            Functional::Sup {
                tau_rule: TauRule::OneOverN,
            }
        }
    };
    let normalization = raw
        .normalization
        .as_deref()
        .map(parse_normalization)
        .transpose()
        .unwrap_or_else(|e| {
            errors.push(format!("normalization: {e}"));
            None
        });

    if !errors.is_empty() {
        return Err(ConfigError::Validation(errors));
    }
    Ok(ExperimentConfig {
        model,
        weight,
        seed: raw.seed.expect("checked"),
        ns,
        replicates,
        functional,
        normalization: normalization.unwrap_or(NormKind::BySelf),
        output_dir: raw.output_dir.unwrap_or_else(|| PathBuf::from(".")),
    })
}
