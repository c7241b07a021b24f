//! Streaming power estimates and the normalized squared error metric.

use crate::error::{AncError, Result};

/// Floor applied to [`nse_db`] when the error energy vanishes.
pub const NSE_FLOOR_DB: f64 = -100.0;

/// Exponentially weighted mean square: `value <- lambda*value + (1-lambda)*u^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunningPower {
    value: f64,
    lambda: f64,
    decay: f64,
}

impl RunningPower {
    pub fn new(lambda: f64) -> Result<Self> {
        let mut rp = Self::with_value(lambda, 0.0)?;
        rp.decay = 1.0;
        Ok(rp)
    }

    /// Seeded estimate, treated as having a long history already.
    pub fn with_value(lambda: f64, value: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda < 1.0) {
            return Err(AncError::invalid(
                "lambda",
                format!("forgetting factor must lie in (0, 1), got {lambda}"),
            ));
        }
        if !(value.is_finite() && value >= 0.0) {
            return Err(AncError::invalid("value", format!("must be >= 0, got {value}")));
        }
        Ok(Self {
            value,
            lambda,
            decay: 0.0,
        })
    }

    #[inline]
    pub fn update(&mut self, sample: f64) -> f64 {
        self.value = self.lambda * self.value + (1.0 - self.lambda) * sample * sample;
        self.decay *= self.lambda;
        self.value
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    /// Estimate with the start-up bias of a zero-initialised average removed,
    /// `value / (1 - lambda^n)`. Equals `value` once the history is long.
    pub fn corrected(&self) -> f64 {
        let weight = 1.0 - self.decay;
        if weight > 0.0 {
            self.value / weight
        } else {
            self.value
        }
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }
}

/// `10 log10(sum e^2 / sum d^2)`, floored at [`NSE_FLOOR_DB`].
pub fn nse_db(error: &[f64], disturbance: &[f64]) -> Result<f64> {
    nse_db_with_floor(error, disturbance, NSE_FLOOR_DB)
}

pub fn nse_db_with_floor(error: &[f64], disturbance: &[f64], floor_db: f64) -> Result<f64> {
    if error.is_empty() {
        return Err(AncError::EmptySignal);
    }
    if error.len() != disturbance.len() {
        return Err(AncError::invalid(
            "window",
            format!(
                "error and disturbance windows differ in length ({} vs {})",
                error.len(),
                disturbance.len()
            ),
        ));
    }
    let e2: f64 = error.iter().map(|e| e * e).sum();
    let d2: f64 = disturbance.iter().map(|d| d * d).sum();
    if d2 <= 0.0 {
        return Err(AncError::invalid(
            "disturbance",
            "zero disturbance energy, NSE undefined",
        ));
    }
    if e2 == 0.0 {
        return Ok(floor_db);
    }
    Ok((10.0 * (e2 / d2).log10()).max(floor_db))
}

/// Mean of squares; zero for an empty window.
pub fn mean_square(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64
    }
}
