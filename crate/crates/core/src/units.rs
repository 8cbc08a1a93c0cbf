//! Decibel conversions for power ratios.

use crate::error::{Error, Result};

#[inline]
pub fn db_to_linear(x_db: f64) -> f64 {
    10f64.powf(x_db / 10.0)
}

pub fn linear_to_db(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::domain(format!(
            "cannot convert non-positive or non-finite ratio {x} to dB"
        )));
    }
    Ok(10.0 * x.log10())
}
