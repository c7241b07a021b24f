//! FxLMS baselines.
//!
//! ```text
//! y(n) = w^T x(n)                               control output
//! w   <- w + mu e(n) x'(n)                      FxLMS
//! w   <- (1 - mu*leak) w + mu e(n) x'(n)        leaky FxLMS
//! ```
//!
//! with `e(n) = d(n) - y'(n)`, so a positive step moves the anti-noise towards
//! the disturbance. The leaky form, with its leak calibrated by
//! [`calibrate_leak`] to hit a rated output power, serves as the
//! power-constrained FxLMS baseline.

use crate::controller::{check_divergence, Controller};
use crate::error::{ensure_finite, AncError, Result};
use crate::fir::{dot, DelayLine, FirPath};

#[derive(Debug, Clone)]
pub struct LmsState {
    w: Vec<f64>,
    mu: f64,
    leak: f64,
    x_filt: DelayLine,
    x_ref: DelayLine,
    s_hat: FirPath,
    divergence_bound: f64,
}

impl LmsState {
    pub fn new(taps: usize, mu: f64, leak: f64, s_hat: &FirPath) -> Result<Self> {
        if taps == 0 {
            return Err(AncError::invalid("taps", "control filter length must be positive"));
        }
        if !(mu.is_finite() && mu >= 0.0) {
            return Err(AncError::invalid("mu", format!("step size must be >= 0, got {mu}")));
        }
        if !(leak.is_finite() && leak >= 0.0) {
            return Err(AncError::invalid("leak", format!("must be >= 0, got {leak}")));
        }
        Ok(Self {
            w: vec![0.0; taps],
            mu,
            leak,
            x_filt: DelayLine::new(taps),
            x_ref: DelayLine::new(taps),
            s_hat: s_hat.fresh(),
            divergence_bound: f64::INFINITY,
        })
    }

    pub fn with_divergence_bound(mut self, bound: f64) -> Self {
        self.divergence_bound = bound;
        self
    }

    pub fn weights(&self) -> &[f64] {
        &self.w
    }

    pub fn set_weights(&mut self, w: &[f64]) {
        self.w.copy_from_slice(w);
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn leak(&self) -> f64 {
        self.leak
    }

    /// Shift in `x(n)` and `x'(n)`; returns `y(n)`.
    pub fn output(&mut self, x: f64) -> Result<f64> {
        ensure_finite("reference sample", x)?;
        self.x_ref.push(x);
        let xf = self.s_hat.process(x)?;
        self.x_filt.push(xf);
        Ok(dot(&self.w, self.x_ref.as_slice()))
    }

    /// Plain FxLMS update.
    pub fn adapt_fxlms(&mut self, e: f64) -> Result<()> {
        ensure_finite("error sample", e)?;
        let step = self.mu * e;
        for (w, xf) in self.w.iter_mut().zip(self.x_filt.as_slice()) {
            *w += step * xf;
        }
        check_divergence(&self.w, self.divergence_bound)
    }

    /// Leaky FxLMS update; identical to [`adapt_fxlms`](Self::adapt_fxlms) at zero leak.
    pub fn adapt_leaky(&mut self, e: f64) -> Result<()> {
        ensure_finite("error sample", e)?;
        let step = self.mu * e;
        let keep = 1.0 - self.mu * self.leak;
        for (w, xf) in self.w.iter_mut().zip(self.x_filt.as_slice()) {
            *w = keep * *w + step * xf;
        }
        check_divergence(&self.w, self.divergence_bound)
    }
}

/// Which update law an [`FxLms`] controller applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LmsVariant {
    Plain,
    Leaky,
}

#[derive(Debug, Clone)]
pub struct FxLms {
    state: LmsState,
    variant: LmsVariant,
}

impl FxLms {
    pub fn plain(state: LmsState) -> Self {
        Self {
            state,
            variant: LmsVariant::Plain,
        }
    }

    pub fn leaky(state: LmsState) -> Self {
        Self {
            state,
            variant: LmsVariant::Leaky,
        }
    }

    pub fn state(&self) -> &LmsState {
        &self.state
    }
}

impl Controller for FxLms {
    fn control(&mut self, x: f64) -> Result<f64> {
        self.state.output(x)
    }

    fn adapt(&mut self, e: f64) -> Result<()> {
        match self.variant {
            LmsVariant::Plain => self.state.adapt_fxlms(e),
            LmsVariant::Leaky => self.state.adapt_leaky(e),
        }
    }

    fn weights(&self) -> &[f64] {
        self.state.weights()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationOptions {
    /// Upper end of the leak search interval.
    pub leak_max: f64,
    /// Relative tolerance on the output power.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        Self {
            leak_max: 10.0,
            tolerance: 0.02,
            max_iterations: 40,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CalibrationStatus {
    /// Output power within tolerance of the target.
    Converged,
    /// The unconstrained filter already stays at or below the target.
    Unconstrained,
    /// Even `leak_max` leaves the output above the target.
    LeakLimit,
    /// Iterations ran out before the tolerance was met.
    Exhausted,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calibration {
    pub leak: f64,
    pub output_power: f64,
    pub iterations: usize,
    pub status: CalibrationStatus,
}

/// Bisection for the leak whose steady-state output power matches
/// `target_power`. `probe` runs a closed-loop simulation at a given leak and
/// returns its steady-state output power, which must be non-increasing in the
/// leak.
pub fn calibrate_leak<F>(target_power: f64, options: CalibrationOptions, mut probe: F) -> Result<Calibration>
where
    F: FnMut(f64) -> Result<f64>,
{
    if !(target_power.is_finite() && target_power > 0.0) {
        return Err(AncError::invalid(
            "target_power",
            format!("must be positive, got {target_power}"),
        ));
    }
    if !(options.leak_max.is_finite() && options.leak_max > 0.0) {
        return Err(AncError::invalid("leak_max", "must be positive"));
    }
    let tol = options.tolerance * target_power;

    let p_free = probe(0.0)?;
    if p_free <= target_power + tol {
        return Ok(Calibration {
            leak: 0.0,
            output_power: p_free,
            iterations: 0,
            status: CalibrationStatus::Unconstrained,
        });
    }
    let p_max = probe(options.leak_max)?;
    if p_max > target_power + tol {
        return Ok(Calibration {
            leak: options.leak_max,
            output_power: p_max,
            iterations: 0,
            status: CalibrationStatus::LeakLimit,
        });
    }

    let (mut lo, mut hi) = (0.0, options.leak_max);
    let mut best = Calibration {
        leak: options.leak_max,
        output_power: p_max,
        iterations: 0,
        status: CalibrationStatus::Exhausted,
    };
    if (p_max - target_power).abs() <= tol {
        best.status = CalibrationStatus::Converged;
        return Ok(best);
    }
    for it in 1..=options.max_iterations {
        let mid = 0.5 * (lo + hi);
        let p = probe(mid)?;
        if (p - target_power).abs() < (best.output_power - target_power).abs() {
            best.leak = mid;
            best.output_power = p;
        }
        best.iterations = it;
        if (p - target_power).abs() <= tol {
            best.status = CalibrationStatus::Converged;
            return Ok(best);
        }
        if p > target_power {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_state(taps: usize, mu: f64, leak: f64) -> LmsState {
        LmsState::new(taps, mu, leak, &FirPath::identity()).unwrap()
    }

    #[test]
    fn zero_step_or_zero_error_leaves_weights() {
        let mut a = identity_state(2, 0.0, 0.0);
        a.output(1.0).unwrap();
        a.adapt_fxlms(5.0).unwrap();
        assert_eq!(a.weights(), &[0.0, 0.0]);

        let mut b = identity_state(2, 0.1, 0.0);
        b.set_weights(&[0.3, -0.2]);
        b.output(1.0).unwrap();
        b.adapt_fxlms(0.0).unwrap();
        assert_eq!(b.weights(), &[0.3, -0.2]);
    }

    #[test]
    fn one_step_hand_value() {
        let mut s = identity_state(1, 0.5, 0.0);
        s.output(1.0).unwrap();
        s.adapt_fxlms(2.0).unwrap();
        assert_eq!(s.weights(), &[1.0]);
    }

    #[test]
    fn leak_decays_weights_without_error() {
        let (mu, leak) = (0.1, 0.5);
        let mut s = identity_state(3, mu, leak);
        s.set_weights(&[1.0, -2.0, 0.5]);
        let before: f64 = s.weights().iter().map(|w| w * w).sum::<f64>().sqrt();
        s.output(0.7).unwrap();
        s.adapt_leaky(0.0).unwrap();
        let after: f64 = s.weights().iter().map(|w| w * w).sum::<f64>().sqrt();
        assert!((after - (1.0 - mu * leak) * before).abs() < 1e-12);
        assert!(after < before);
    }

    #[test]
    fn divergence_flagged() {
        let mut s = identity_state(1, 1.0, 0.0).with_divergence_bound(10.0);
        s.output(1.0).unwrap();
        assert!(matches!(s.adapt_fxlms(100.0), Err(AncError::Divergence { .. })));
    }

    #[test]
    fn calibration_unconstrained_when_target_above_free_power() {
        let cal = calibrate_leak(2.0, CalibrationOptions::default(), |leak| Ok(1.0 / (1.0 + leak))).unwrap();
        assert_eq!(cal.leak, 0.0);
        assert_eq!(cal.status, CalibrationStatus::Unconstrained);
    }

    #[test]
    fn calibration_bisects_monotone_bracket() {
        let mut calls = 0;
        let cal = calibrate_leak(0.3, CalibrationOptions::default(), |leak| {
            calls += 1;
            Ok(1.0 / (1.0 + leak))
        })
        .unwrap();
        assert_eq!(cal.status, CalibrationStatus::Converged);
        assert!((cal.output_power - 0.3).abs() <= 0.02 * 0.3);
        assert!(cal.iterations <= 40);
        assert!(calls <= 42);
    }

    #[test]
    fn calibration_reports_leak_limit() {
        let opts = CalibrationOptions {
            leak_max: 1.0,
            ..Default::default()
        };
        let cal = calibrate_leak(0.01, opts, |leak| Ok(1.0 / (1.0 + leak))).unwrap();
        assert_eq!(cal.status, CalibrationStatus::LeakLimit);
        assert_eq!(cal.leak, 1.0);
    }

    #[test]
    fn calibrated_leak_non_increasing_in_target() {
        let mut prev = f64::INFINITY;
        for target in [0.05, 0.1, 0.2, 0.4, 0.8, 1.2] {
            let cal = calibrate_leak(target, CalibrationOptions::default(), |leak| Ok(1.0 / (1.0 + leak * leak))).unwrap();
            assert!(cal.leak <= prev);
            prev = cal.leak;
        }
    }
}
