//! Exponential effective SINR mapping.
//!
//! Collapses a vector of per-subcarrier SINRs into the single SINR an AWGN
//! channel would need to give the same block error rate:
//!
//! ```text
//! eff = -beta * ln( (1/N) * sum_i exp(-gamma_i / beta) )
//! ```
//!
//! All SINR values here are linear power ratios. Beta is carried in dB (the
//! unit of the shipped tables) together with its linear value.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::{db_to_linear, linear_to_db};

/// Per-data-subcarrier linear SINR values. Never empty, all entries finite and > 0.
#[derive(Debug, Clone, PartialEq)]
pub struct SinrVector {
    values: Vec<f64>,
}

impl SinrVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::domain("SINR vector is empty"));
        }
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::domain(format!(
                "SINR entry {i} is {v}; entries must be finite and strictly positive"
            )));
        }
        Ok(Self { values })
    }

    /// A frequency-flat vector of `n` copies of `value`.
    pub fn flat(value: f64, n: usize) -> Result<Self> {
        Self::new(vec![value; n])
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Every tone multiplied by `factor` (a power boost, say).
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.values.iter().map(|v| v * factor).collect())
    }

    /// Reads a `gamma_linear` CSV, one linear SINR per line.
    pub fn load_csv(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let values = crate::column::read_column(path, "gamma_linear")?;
        Self::new(values).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            message: e.to_string(),
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("gamma_linear\n");
        for v in &self.values {
            out.push_str(&format!("{v:.16e}\n"));
        }
        out
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.values
    }
}

/// EESM tuning parameter, stored in dB with its linear value alongside.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Beta {
    db: f64,
    linear: f64,
}

impl Beta {
    pub fn from_db(db: f64) -> Result<Self> {
        let linear = db_to_linear(db);
        if !db.is_finite() || !(linear > 0.0) || !linear.is_finite() {
            return Err(Error::domain(format!("beta of {db} dB is not usable")));
        }
        Ok(Self { db, linear })
    }

    pub fn from_linear(linear: f64) -> Result<Self> {
        let db =
            linear_to_db(linear).map_err(|_| Error::domain(format!("beta must be finite and > 0, got {linear}")))?;
        Ok(Self { db, linear })
    }

    pub fn db(&self) -> f64 {
        self.db
    }

    pub fn linear(&self) -> f64 {
        self.linear
    }
}

impl TryFrom<f64> for Beta {
    type Error = Error;

    fn try_from(db: f64) -> Result<Self> {
        Beta::from_db(db)
    }
}

impl From<Beta> for f64 {
    fn from(beta: Beta) -> f64 {
        beta.db
    }
}

/// Linear power multiplier applied to every tone of an allocation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoostRatio {
    linear: f64,
}

impl BoostRatio {
    pub const UNITY: BoostRatio = BoostRatio { linear: 1.0 };

    pub fn from_linear(linear: f64) -> Result<Self> {
        if !(linear.is_finite() && linear > 0.0) {
            return Err(Error::domain(format!("boost must be finite and > 0, got {linear}")));
        }
        Ok(Self { linear })
    }

    pub fn from_db(db: f64) -> Result<Self> {
        Self::from_linear(db_to_linear(db))
    }

    pub fn linear(&self) -> f64 {
        self.linear
    }

    pub fn db(&self) -> f64 {
        10.0 * self.linear.log10()
    }
}

/// AWGN-equivalent SINR produced by the mapping (linear).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct EffectiveSinr {
    linear: f64,
}

impl EffectiveSinr {
    pub fn linear(&self) -> f64 {
        self.linear
    }

    pub fn db(&self) -> f64 {
        // Always > 0: the value is bounded below by min(gamma).
        10.0 * self.linear.log10()
    }
}

/// Effective SINR of `gamma` under `beta`.
///
/// The sum is shifted by the weakest tone so the largest exponent is zero,
/// and evaluated through `expm1`/`ln_1p` so the large-beta limit (all
/// exponents close to zero) keeps full precision. The result is clamped to
/// `[min(gamma), mean(gamma)]`, which the exact value always satisfies.
pub fn eesm_effective_sinr(gamma: &SinrVector, beta: Beta) -> EffectiveSinr {
    let b = beta.linear();
    let values = gamma.values();
    let n = values.len() as f64;
    let min = gamma.min();
    let mean = gamma.mean();

    // (1/N) sum exp(-(g - min)/b) - 1, in (-1, 0]
    let shifted: f64 = values.iter().map(|g| (-(g - min) / b).exp_m1()).sum::<f64>() / n;
    let eff = min - b * shifted.ln_1p();

    EffectiveSinr {
        linear: eff.clamp(min, mean.max(min)),
    }
}

/// Convenience: effective SINR in dB.
pub fn eesm_db(gamma: &SinrVector, beta: Beta) -> f64 {
    eesm_effective_sinr(gamma, beta).db()
}

/// Effective SINR after boosting every tone by `boost`.
///
/// Equal to `boost * eesm(gamma, beta / boost)`, which is how a base station
/// can predict boosting from a curve in beta alone.
pub fn eesm_boosted(gamma: &SinrVector, boost: BoostRatio, beta: Beta) -> EffectiveSinr {
    let b = boost.linear();
    let values = gamma.values();
    let n = values.len() as f64;
    let min = gamma.min() * b;
    let mean = gamma.mean() * b;
    let beta = beta.linear();

    let shifted: f64 = values.iter().map(|g| (-(g * b - min) / beta).exp_m1()).sum::<f64>() / n;
    let eff = min - beta * shifted.ln_1p();
    EffectiveSinr {
        linear: eff.clamp(min, mean.max(min)),
    }
}

/// Samples EESM(beta) in dB over a strictly increasing grid of beta values in dB.
pub fn eesm_beta_curve(gamma: &SinrVector, beta_grid_db: &[f64]) -> Result<Vec<(f64, f64)>> {
    if beta_grid_db.is_empty() {
        return Err(Error::domain("beta grid is empty"));
    }
    if beta_grid_db.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::domain("beta grid must be strictly increasing"));
    }
    beta_grid_db
        .iter()
        .map(|&db| Ok((db, eesm_db(gamma, Beta::from_db(db)?))))
        .collect()
}

/// A uniform grid `lo, lo + step, ...` up to and including `hi` (within half a step).
pub fn db_grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    assert!(step > 0.0 && hi >= lo, "invalid grid {lo}:{hi}:{step}");
    let count = ((hi - lo) / step + 0.5).floor() as usize;
    (0..=count).map(|k| lo + k as f64 * step).collect()
}
