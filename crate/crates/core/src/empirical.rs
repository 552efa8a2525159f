//! Sorted replicate samples, their ECDF and the two-sample KS distance.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmpiricalError {
    #[error("empirical distribution is empty")]
    Empty,
    #[error("sample contains NaN")]
    NaN,
    #[error("quantile level {0} outside [0, 1]")]
    Level(f64),
}

/// Where a sample came from. Free-form fields beyond the fixed ones go into
/// `details`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub functional: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "serde_json::Map::is_empty")]
    pub details: serde_json::Map<String, serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalDistribution {
    values: Vec<f64>,
    pub meta: Provenance,
}

impl EmpiricalDistribution {
    pub fn new(mut values: Vec<f64>, meta: Provenance) -> Result<Self, EmpiricalError> {
        if values.iter().any(|v| v.is_nan()) {
            return Err(EmpiricalError::NaN);
        }
        values.sort_by(f64::total_cmp);
        Ok(Self { values, meta })
    }

    pub fn from_values(values: Vec<f64>) -> Result<Self, EmpiricalError> {
        Self::new(values, Provenance::default())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn count(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `#{v ≤ x} / count`.
    pub fn ecdf(&self, x: f64) -> f64 {
        if self.values.is_empty() {
            return 0.0;
        }
        self.values.partition_point(|&v| v <= x) as f64 / self.values.len() as f64
    }

    /// Lower quantile `inf{x : ECDF(x) ≥ level}`; level 0 gives the minimum.
    pub fn quantile(&self, level: f64) -> Result<f64, EmpiricalError> {
        if self.values.is_empty() {
            return Err(EmpiricalError::Empty);
        }
        if !(0.0..=1.0).contains(&level) {
            return Err(EmpiricalError::Level(level));
        }
        let n = self.values.len();
        let idx = ((level * n as f64).ceil() as usize).clamp(1, n) - 1;
        Ok(self.values[idx])
    }

    pub fn median(&self) -> Result<f64, EmpiricalError> {
        self.quantile(0.5)
    }

    pub fn iqr(&self) -> Result<f64, EmpiricalError> {
        Ok(self.quantile(0.75)? - self.quantile(0.25)?)
    }

    pub fn mean(&self) -> Result<f64, EmpiricalError> {
        if self.values.is_empty() {
            return Err(EmpiricalError::Empty);
        }
        Ok(self.values.iter().sum::<f64>() / self.values.len() as f64)
    }

    /// Sample standard deviation (divisor `count - 1`).
    pub fn std_dev(&self) -> Result<f64, EmpiricalError> {
        let m = self.mean()?;
        let n = self.values.len();
        if n < 2 {
            return Ok(0.0);
        }
        Ok((self.values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt())
    }

    /// Pooled sample. Associative and commutative in the values; keeps the
    /// left operand's provenance.
    pub fn merge(&self, other: &Self) -> Self {
        let (a, b) = (&self.values, &other.values);
        let mut out = Vec::with_capacity(a.len() + b.len());
        let (mut i, mut j) = (0, 0);
        while i < a.len() && j < b.len() {
            if a[i].total_cmp(&b[j]) != Ordering::Greater {
                out.push(a[i]);
                i += 1;
            } else {
                out.push(b[j]);
                j += 1;
            }
        }
        out.extend_from_slice(&a[i..]);
        out.extend_from_slice(&b[j..]);
        Self {
            values: out,
            meta: self.meta.clone(),
        }
    }
}

/// `sup_x |F_a(x) - F_b(x)|` by a merge scan over the pooled jump points.
pub fn ks_distance(
    a: &EmpiricalDistribution,
    b: &EmpiricalDistribution,
) -> Result<f64, EmpiricalError> {
    ks_sorted(&a.values, &b.values)
}

pub(crate) fn ks_sorted(a: &[f64], b: &[f64]) -> Result<f64, EmpiricalError> {
    if a.is_empty() || b.is_empty() {
        return Err(EmpiricalError::Empty);
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        // step past every copy of the smallest remaining value in both samples
        let x = if a[i] <= b[j] { a[i] } else { b[j] };
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(d)
}
