use crate::error::Result;

/// Per-sample adaptive ANC controller.
///
/// Each sample is a two-phase exchange: [`control`](Controller::control)
/// takes the reference `x(n)` and returns the control signal `y(n)`; once the
/// plant has produced the residual `e(n)`, [`adapt`](Controller::adapt)
/// updates the filter used for `y(n+1)`.
pub trait Controller {
    fn control(&mut self, x: f64) -> Result<f64>;

    fn adapt(&mut self, e: f64) -> Result<()>;

    fn weights(&self) -> &[f64];

    /// Measurement scaling currently applied; 1 for unconstrained controllers.
    fn alpha(&self) -> f64 {
        1.0
    }

    /// Diagonal of the state covariance, for controllers that keep one.
    fn covariance_diag(&self) -> Option<Vec<f64>> {
        None
    }
}

/// Open loop: a zero control filter that never adapts.
#[derive(Debug, Clone)]
pub struct Disabled {
    weights: Vec<f64>,
}

impl Disabled {
    pub fn new(len: usize) -> Self {
        Self {
            weights: vec![0.0; len.max(1)],
        }
    }
}

impl Controller for Disabled {
    fn control(&mut self, _x: f64) -> Result<f64> {
        Ok(0.0)
    }

    fn adapt(&mut self, _e: f64) -> Result<()> {
        Ok(())
    }

    fn weights(&self) -> &[f64] {
        &self.weights
    }
}

pub(crate) fn check_divergence(w: &[f64], bound: f64) -> Result<()> {
    let mut max_abs = 0.0f64;
    for v in w {
        if !v.is_finite() {
            max_abs = v.abs();
            break;
        }
        max_abs = max_abs.max(v.abs());
    }
    if max_abs.is_nan() || max_abs > bound {
        return Err(crate::AncError::Divergence { max_abs, bound });
    }
    Ok(())
}
