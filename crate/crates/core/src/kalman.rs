//! Kalman-filter ANC and its output-power-constrained variant.
//!
//! The control filter is the state of a random-walk model and the disturbance
//! at the error microphone is the measurement:
//!
//! ```text
//! w(n) = w(n-1) + v(n)                 state,       E[v v^T] = r I
//! d(n) = x'(n)^T w(n) + e_o(n)         measurement, E[e_o^2]  = q
//! ```
//!
//! where `x'(n)` is the reference filtered by the secondary-path model. Each
//! sample runs a predict/correct cycle:
//!
//! ```text
//! w(n|n-1) = w(n-1|n-1)
//! P(n|n-1) = P(n-1|n-1) + r I
//! K(n)     = P(n|n-1) x' / (x'^T P(n|n-1) x' + q)
//! w(n|n)   = w(n|n-1) + K(n) [alpha d(n) - x'^T w(n|n-1)]
//! P(n|n)   = (I - K(n) x'^T) P(n|n-1)
//! ```
//!
//! With `alpha = 1` this is the plain KF-ANC recursion. The constrained
//! variant shrinks the measurement by
//!
//! ```text
//! alpha = min( sqrt(rho_o * Gs / delta_d^2), 1 ),   Gs = E[x'^2] / E[x^2]
//! ```
//!
//! so the anti-noise it learns carries at most the power the secondary source
//! can deliver at its rated output `rho_o`.

use crate::controller::{check_divergence, Controller};
use crate::error::{ensure_finite, AncError, Result};
use crate::fir::{dot, DelayLine, FirPath};
use crate::stats::RunningPower;

pub const DEFAULT_Q: f64 = 1e-2;
pub const DEFAULT_R: f64 = 1e-6;
pub const DEFAULT_P0: f64 = 1.0;
pub const DEFAULT_LAMBDA: f64 = 0.999;

/// Control-filter estimate, its error covariance and the filtered-reference
/// regressor.
#[derive(Debug, Clone)]
pub struct KalmanState {
    w_hat: Vec<f64>,
    /// Row-major `L x L`.
    p: Vec<f64>,
    q: f64,
    r: f64,
    x_filt: DelayLine,
    p_x: Vec<f64>,
    x_p: Vec<f64>,
    gain: Vec<f64>,
}

impl KalmanState {
    /// `w_hat = 0`, `P = p0 I`.
    pub fn new(len: usize, q: f64, r: f64, p0: f64) -> Result<Self> {
        if len == 0 {
            return Err(AncError::invalid("taps", "control filter length must be positive"));
        }
        if !(p0.is_finite() && p0 >= 0.0) {
            return Err(AncError::invalid("p0", format!("must be >= 0, got {p0}")));
        }
        let mut p = vec![0.0; len * len];
        for i in 0..len {
            p[i * len + i] = p0;
        }
        Self::with_covariance(vec![0.0; len], p, q, r)
    }

    pub fn with_covariance(w_hat: Vec<f64>, p: Vec<f64>, q: f64, r: f64) -> Result<Self> {
        let len = w_hat.len();
        if len == 0 {
            return Err(AncError::invalid("taps", "control filter length must be positive"));
        }
        if p.len() != len * len {
            return Err(AncError::invalid(
                "covariance",
                format!("expected {} entries, got {}", len * len, p.len()),
            ));
        }
        for &v in w_hat.iter().chain(&p) {
            ensure_finite("initial state", v)?;
        }
        check_variance("q", q)?;
        check_variance("r", r)?;
        Ok(Self {
            w_hat,
            p,
            q,
            r,
            x_filt: DelayLine::new(len),
            p_x: vec![0.0; len],
            x_p: vec![0.0; len],
            gain: vec![0.0; len],
        })
    }

    pub fn len(&self) -> usize {
        self.w_hat.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn estimate(&self) -> &[f64] {
        &self.w_hat
    }

    pub fn covariance(&self) -> &[f64] {
        &self.p
    }

    pub fn covariance_diag(&self) -> Vec<f64> {
        let l = self.len();
        (0..l).map(|i| self.p[i * l + i]).collect()
    }

    pub fn trace(&self) -> f64 {
        let l = self.len();
        (0..l).map(|i| self.p[i * l + i]).sum()
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn set_q(&mut self, q: f64) -> Result<()> {
        self.q = check_variance("q", q)?;
        Ok(())
    }

    /// Shift a filtered-reference sample `x'(n)` into the regressor.
    pub fn push_filtered(&mut self, xf: f64) {
        self.x_filt.push(xf);
    }

    /// `x'(n) = [x'(n), ..., x'(n-L+1)]`.
    pub fn regressor(&self) -> &[f64] {
        self.x_filt.as_slice()
    }

    /// Predict: the estimate carries over, the covariance grows by `r I`.
    pub fn time_update(&mut self) {
        if self.r == 0.0 {
            return;
        }
        let l = self.len();
        for i in 0..l {
            self.p[i * l + i] += self.r;
        }
    }

    /// Optimal gain from the prior covariance.
    pub fn kalman_gain(&mut self) -> Result<&[f64]> {
        let l = self.len();
        let x = self.x_filt.as_slice();
        for (i, px) in self.p_x.iter_mut().enumerate() {
            *px = dot(&self.p[i * l..(i + 1) * l], x);
        }
        let denominator = dot(x, &self.p_x) + self.q;
        if !(denominator > 0.0 && denominator.is_finite()) {
            return Err(AncError::SingularGain {
                denominator,
                q: self.q,
            });
        }
        let inv = 1.0 / denominator;
        for (k, px) in self.gain.iter_mut().zip(&self.p_x) {
            *k = px * inv;
        }
        Ok(&self.gain)
    }

    /// Correct with the scaled measurement `alpha * d_meas`; returns the
    /// innovation. The covariance is re-symmetrised afterwards.
    pub fn correct(&mut self, d_meas: f64, alpha: f64) -> Result<f64> {
        ensure_finite("measurement", d_meas)?;
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(AncError::invalid("alpha", format!("must lie in (0, 1], got {alpha}")));
        }
        self.kalman_gain()?;
        let l = self.len();
        let x = self.x_filt.as_slice();
        let innovation = alpha * d_meas - dot(x, &self.w_hat);
        for (w, k) in self.w_hat.iter_mut().zip(&self.gain) {
            *w += k * innovation;
        }

        // x'^T P, kept separate from P x' so no symmetry is assumed
        self.x_p.fill(0.0);
        for (i, &xi) in x.iter().enumerate() {
            if xi != 0.0 {
                for (acc, pij) in self.x_p.iter_mut().zip(&self.p[i * l..(i + 1) * l]) {
                    *acc += xi * pij;
                }
            }
        }
        for (i, &ki) in self.gain.iter().enumerate() {
            if ki != 0.0 {
                for (pij, u) in self.p[i * l..(i + 1) * l].iter_mut().zip(&self.x_p) {
                    *pij -= ki * u;
                }
            }
        }
        symmetrize(&mut self.p, l);
        Ok(innovation)
    }
}

fn check_variance(name: &'static str, v: f64) -> Result<f64> {
    if v.is_finite() && v >= 0.0 {
        Ok(v)
    } else {
        Err(AncError::invalid(name, format!("variance must be finite and >= 0, got {v}")))
    }
}

fn symmetrize(p: &mut [f64], l: usize) {
    for i in 0..l {
        for j in (i + 1)..l {
            let m = 0.5 * (p[i * l + j] + p[j * l + i]);
            p[i * l + j] = m;
            p[j * l + i] = m;
        }
    }
}

/// `min(sqrt(rho_o * gs / delta_d_sq), 1)`.
pub fn alpha_law(rho_o: f64, gs: f64, delta_d_sq: f64) -> f64 {
    if rho_o * gs >= delta_d_sq {
        1.0
    } else {
        (rho_o * gs / delta_d_sq).sqrt()
    }
}

/// Running statistics behind the constraint factor.
#[derive(Debug, Clone)]
pub struct ConstraintEstimators {
    rho_o: f64,
    delta_d_sq: RunningPower,
    pow_x: RunningPower,
    pow_x_filt: RunningPower,
    alpha: f64,
}

impl ConstraintEstimators {
    pub fn new(rho_o: f64, lambda: f64) -> Result<Self> {
        if rho_o.is_nan() || rho_o <= 0.0 {
            return Err(AncError::invalid("rho_o", format!("rated power must be > 0, got {rho_o}")));
        }
        Ok(Self {
            rho_o,
            delta_d_sq: RunningPower::new(lambda)?,
            pow_x: RunningPower::new(lambda)?,
            pow_x_filt: RunningPower::new(lambda)?,
            alpha: 1.0,
        })
    }

    /// Feed one sample of reference, filtered reference and disturbance estimate.
    pub fn update(&mut self, x: f64, x_filt: f64, d_hat: f64) {
        self.pow_x.update(x);
        self.pow_x_filt.update(x_filt);
        self.delta_d_sq.update(d_hat);
    }

    /// Secondary-path gain as a power ratio; `None` while the reference is silent.
    pub fn secondary_gain(&self) -> Option<f64> {
        let px = self.pow_x.value();
        (px > 0.0).then(|| self.pow_x_filt.value() / px)
    }

    /// Start-up-corrected disturbance power.
    pub fn disturbance_power(&self) -> f64 {
        self.delta_d_sq.corrected()
    }

    /// Recompute and store alpha. Holds the previous value when the statistics
    /// leave it undefined (silent reference or silent secondary path).
    pub fn compute_alpha(&mut self) -> f64 {
        let Some(gs) = self.secondary_gain().filter(|&g| g > 0.0) else {
            return self.alpha;
        };
        self.alpha = alpha_law(self.rho_o, gs, self.disturbance_power());
        self.alpha
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn rho_o(&self) -> f64 {
        self.rho_o
    }

    /// Overwrite the running statistics, for tests and replay.
    pub fn set_statistics(&mut self, pow_x: f64, pow_x_filt: f64, delta_d_sq: f64) -> Result<()> {
        let lambda = self.pow_x.lambda();
        self.pow_x = RunningPower::with_value(lambda, pow_x)?;
        self.pow_x_filt = RunningPower::with_value(lambda, pow_x_filt)?;
        self.delta_d_sq = RunningPower::with_value(lambda, delta_d_sq)?;
        Ok(())
    }
}

/// How the measurement-noise variance `q` evolves.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum QMode {
    Fixed,
    /// Running power of the innovation, never below the configured `q`.
    Innovation,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KalmanParams {
    pub taps: usize,
    pub q: f64,
    pub r: f64,
    pub p0: f64,
    pub lambda: f64,
    pub q_mode: QMode,
    /// Samples before the constraint factor is recomputed every sample.
    /// `None` means twice the filter length.
    pub warmup: Option<usize>,
    pub divergence_bound: f64,
}

impl KalmanParams {
    pub fn with_taps(taps: usize) -> Self {
        Self {
            taps,
            q: DEFAULT_Q,
            r: DEFAULT_R,
            p0: DEFAULT_P0,
            lambda: DEFAULT_LAMBDA,
            q_mode: QMode::Fixed,
            warmup: None,
            divergence_bound: f64::INFINITY,
        }
    }
}

/// One sample of controller exchange.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerStep {
    pub x: f64,
    pub d_hat: f64,
    pub y: f64,
    pub alpha: f64,
}

/// KF-ANC controller in the modified-structure loop, optionally with the
/// output power constraint (KF-OPC).
///
/// The control signal is `w_hat` applied to the raw reference history; the
/// filtered reference only feeds the Kalman recursion. The disturbance is not
/// observable and is rebuilt as `d_hat(n) = e(n) + [S_hat * y](n)`.
#[derive(Debug, Clone)]
pub struct KalmanController {
    state: KalmanState,
    estimators: ConstraintEstimators,
    constrained: bool,
    s_hat_ref: FirPath,
    s_hat_ctrl: FirPath,
    x_ref: DelayLine,
    output_power: RunningPower,
    innovation_power: RunningPower,
    q_mode: QMode,
    q_floor: f64,
    warmup: usize,
    warmup_alpha: Option<f64>,
    samples: usize,
    divergence_bound: f64,
    last: ControllerStep,
    last_x_filt: f64,
    last_y_hat: f64,
}

impl KalmanController {
    /// Unconstrained KF-ANC.
    pub fn kf_anc(params: KalmanParams, s_hat: &FirPath) -> Result<Self> {
        Self::build(params, s_hat, f64::INFINITY, false)
    }

    /// KF-OPC with rated output power `rho_o`.
    pub fn kf_opc(params: KalmanParams, s_hat: &FirPath, rho_o: f64) -> Result<Self> {
        Self::build(params, s_hat, rho_o, true)
    }

    fn build(params: KalmanParams, s_hat: &FirPath, rho_o: f64, constrained: bool) -> Result<Self> {
        let state = KalmanState::new(params.taps, params.q, params.r, params.p0)?;
        if params.divergence_bound.is_nan() || params.divergence_bound <= 0.0 {
            return Err(AncError::invalid("divergence_bound", "must be positive"));
        }
        Ok(Self {
            state,
            estimators: ConstraintEstimators::new(rho_o, params.lambda)?,
            constrained,
            s_hat_ref: s_hat.fresh(),
            s_hat_ctrl: s_hat.fresh(),
            x_ref: DelayLine::new(params.taps),
            output_power: RunningPower::new(params.lambda)?,
            innovation_power: RunningPower::new(params.lambda)?,
            q_mode: params.q_mode,
            q_floor: params.q,
            warmup: params.warmup.unwrap_or(2 * params.taps),
            warmup_alpha: None,
            samples: 0,
            divergence_bound: params.divergence_bound,
            last: ControllerStep {
                x: 0.0,
                d_hat: 0.0,
                y: 0.0,
                alpha: 1.0,
            },
            last_x_filt: 0.0,
            last_y_hat: 0.0,
        })
    }

    pub fn state(&self) -> &KalmanState {
        &self.state
    }

    pub fn estimators(&self) -> &ConstraintEstimators {
        &self.estimators
    }

    pub fn is_constrained(&self) -> bool {
        self.constrained
    }

    pub fn last_step(&self) -> ControllerStep {
        self.last
    }

    fn next_alpha(&mut self) -> f64 {
        if !self.constrained {
            return 1.0;
        }
        if self.samples < self.warmup {
            if let Some(held) = self.warmup_alpha {
                return held;
            }
            if self.output_power.corrected() <= self.estimators.rho_o() {
                return 1.0;
            }
            let first = self.estimators.compute_alpha();
            self.warmup_alpha = Some(first);
            return first;
        }
        self.estimators.compute_alpha()
    }

    /// Full sample cycle given the residual for the previous output, then the
    /// next output for reference `x_next`.
    pub fn step(&mut self, e: f64, x_next: f64) -> Result<ControllerStep> {
        self.adapt(e)?;
        let stepped = self.last;
        self.control(x_next)?;
        Ok(stepped)
    }
}

impl Controller for KalmanController {
    fn control(&mut self, x: f64) -> Result<f64> {
        ensure_finite("reference sample", x)?;
        self.x_ref.push(x);
        let xf = self.s_hat_ref.process(x)?;
        self.state.push_filtered(xf);
        let y = dot(self.state.estimate(), self.x_ref.as_slice());
        self.last_y_hat = self.s_hat_ctrl.process(y)?;
        self.last_x_filt = xf;
        self.last.x = x;
        self.last.y = y;
        Ok(y)
    }

    fn adapt(&mut self, e: f64) -> Result<()> {
        ensure_finite("error sample", e)?;
        let d_hat = e + self.last_y_hat;
        self.estimators.update(self.last.x, self.last_x_filt, d_hat);
        self.output_power.update(self.last.y);

        self.state.time_update();
        let alpha = self.next_alpha();
        if self.q_mode == QMode::Innovation && self.samples > 0 {
            let q = self.innovation_power.corrected().max(self.q_floor);
            self.state.set_q(q)?;
        }
        let innovation = self.state.correct(d_hat, alpha)?;
        self.innovation_power.update(innovation);
        check_divergence(self.state.estimate(), self.divergence_bound)?;

        self.samples += 1;
        self.last.d_hat = d_hat;
        self.last.alpha = alpha;
        Ok(())
    }

    fn weights(&self) -> &[f64] {
        self.state.estimate()
    }

    fn alpha(&self) -> f64 {
        self.last.alpha
    }

    fn covariance_diag(&self) -> Option<Vec<f64>> {
        Some(self.state.covariance_diag())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn scalar(p: f64, q: f64, xf: f64) -> KalmanState {
        let mut ks = KalmanState::new(1, q, 0.0, p).unwrap();
        ks.push_filtered(xf);
        ks
    }

    #[test]
    fn time_update_without_state_noise_is_identity() {
        let mut ks = KalmanState::new(3, 0.1, 0.0, 2.0).unwrap();
        let before = ks.covariance().to_vec();
        ks.time_update();
        assert_eq!(ks.covariance(), &before[..]);
    }

    #[test]
    fn time_update_adds_r_on_diagonal() {
        let mut ks = KalmanState::new(2, 0.1, 0.1, 1.0).unwrap();
        ks.time_update();
        assert_eq!(ks.covariance(), &[1.1, 0.0, 0.0, 1.1]);
    }

    #[test]
    fn scalar_gain() {
        let mut ks = scalar(1.0, 1.0, 1.0);
        assert_eq!(ks.kalman_gain().unwrap(), &[0.5]);
    }

    #[test]
    fn zero_regressor_gives_zero_gain_and_no_change() {
        let mut ks = KalmanState::new(2, 0.5, 0.0, 1.0).unwrap();
        assert_eq!(ks.kalman_gain().unwrap(), &[0.0, 0.0]);
        let p = ks.covariance().to_vec();
        ks.correct(3.0, 1.0).unwrap();
        assert_eq!(ks.estimate(), &[0.0, 0.0]);
        assert_eq!(ks.covariance(), &p[..]);
    }

    #[test]
    fn singular_gain_rejected() {
        let mut ks = KalmanState::new(2, 0.0, 0.0, 1.0).unwrap();
        assert!(matches!(ks.kalman_gain(), Err(AncError::SingularGain { .. })));
        assert!(ks.correct(1.0, 1.0).is_err());
    }

    #[test]
    fn scalar_constrained_correction() {
        // K = 1/(1+1) = 0.5, innovation = 0.5*2 - 0 = 1
        let mut ks = scalar(1.0, 1.0, 1.0);
        let innovation = ks.correct(2.0, 0.5).unwrap();
        assert_eq!(innovation, 1.0);
        assert_eq!(ks.estimate(), &[0.5]);
        assert_eq!(ks.covariance(), &[0.5]);
    }

    #[test]
    fn correct_rejects_alpha_out_of_range() {
        let mut ks = scalar(1.0, 1.0, 1.0);
        assert!(ks.correct(1.0, 0.0).is_err());
        assert!(ks.correct(1.0, 1.5).is_err());
    }

    #[test]
    fn alpha_law_branches() {
        assert_eq!(alpha_law(1.0, 1.0, 4.0), 0.5);
        assert_eq!(alpha_law(2.0, 1.0, 1.0), 1.0);
        assert_eq!(alpha_law(1.0, 1.0, 1.0), 1.0);
        assert_eq!(alpha_law(f64::INFINITY, 0.3, 10.0), 1.0);
    }

    #[test]
    fn identical_signals_give_unit_secondary_gain() {
        let mut ce = ConstraintEstimators::new(1.0, 0.99).unwrap();
        for k in 0..500 {
            let x = (k as f64 * 0.3).sin();
            ce.update(x, x, 2.0 * x);
        }
        assert_eq!(ce.secondary_gain(), Some(1.0));
        // rho*Gs = 1 < delta^2 = 4 E[x^2]
        let a = ce.compute_alpha();
        assert!(a < 1.0 && a > 0.0);
    }

    #[test]
    fn silent_reference_holds_alpha() {
        let mut ce = ConstraintEstimators::new(1.0, 0.99).unwrap();
        ce.set_statistics(1.0, 1.0, 4.0).unwrap();
        assert_eq!(ce.compute_alpha(), 0.5);
        ce.set_statistics(0.0, 0.0, 9.0).unwrap();
        assert_eq!(ce.compute_alpha(), 0.5);
    }

    #[test]
    fn pass_through_filter_copies_reference() {
        let s_hat = FirPath::identity();
        let mut c = KalmanController::kf_anc(KalmanParams::with_taps(3), &s_hat).unwrap();
        c.state.w_hat = vec![1.0, 0.0, 0.0];
        for x in [0.3, -1.2, 4.0] {
            assert_eq!(c.control(x).unwrap(), x);
        }
    }

    #[test]
    fn zero_filter_outputs_zero() {
        let s_hat = FirPath::identity();
        let mut c = KalmanController::kf_anc(KalmanParams::with_taps(4), &s_hat).unwrap();
        assert_eq!(c.control(2.5).unwrap(), 0.0);
    }

    #[test]
    fn control_matches_direct_convolution() {
        let w = vec![0.2, -0.5, 0.9, 0.05];
        let xs: Vec<f64> = (0..20).map(|k| ((k * 7 % 11) as f64 - 5.0) / 3.0).collect();
        let mut c = KalmanController::kf_anc(KalmanParams::with_taps(4), &FirPath::identity()).unwrap();
        c.state.w_hat = w.clone();
        for n in 0..xs.len() {
            let y = c.control(xs[n]).unwrap();
            let mut expected = 0.0;
            for k in 0..w.len() {
                if n >= k {
                    expected += w[k] * xs[n - k];
                }
            }
            assert!((y - expected).abs() < 1e-14);
        }
    }

    #[test]
    fn modified_structure_recovers_disturbance() {
        // exact secondary model, no clipping: d_hat = e + S y = d
        let s_taps = vec![0.6, 0.3, -0.1];
        let mut s = FirPath::new(s_taps.clone()).unwrap();
        let s_hat = FirPath::new(s_taps).unwrap();
        let mut c = KalmanController::kf_anc(KalmanParams::with_taps(4), &s_hat).unwrap();
        for n in 0..300 {
            let x = (n as f64 * 0.21).sin() + 0.3 * (n as f64 * 0.05).cos();
            let d = 0.8 * x;
            let y = c.control(x).unwrap();
            let e = d - s.process(y).unwrap();
            c.adapt(e).unwrap();
            assert!((c.last_step().d_hat - d).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn alpha_non_increasing_in_disturbance_power(
            rho in 0.01f64..10.0, gs in 0.01f64..10.0, d1 in 0.001f64..100.0, d2 in 0.001f64..100.0
        ) {
            let (lo, hi) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
            let a_lo = alpha_law(rho, gs, lo);
            let a_hi = alpha_law(rho, gs, hi);
            prop_assert!(a_hi <= a_lo);
            prop_assert!(a_hi > 0.0 && a_lo <= 1.0);
        }
    }
}
