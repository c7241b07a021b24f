//! Active noise control primitives: fixed FIR paths, test signals, a
//! saturating amplifier, streaming statistics, and three adaptive
//! controllers sharing one per-sample interface.
//!
//! - [`kalman::KalmanController`] runs the Kalman-filter ANC recursion, and
//!   with a rated output power the constrained variant that rescales the
//!   disturbance measurement to keep the control signal within that power.
//! - [`lms::FxLms`] provides FxLMS and leaky FxLMS baselines.

pub mod amplifier;
pub mod controller;
pub mod error;
pub mod fir;
pub mod generator;
pub mod io;
pub mod kalman;
pub mod lms;
pub mod spectrum;
pub mod stats;

pub use amplifier::SaturatingAmplifier;
pub use controller::{Controller, Disabled};
pub use error::{AncError, Result};
pub use fir::{design_bandpass, DelayLine, FirPath};
pub use kalman::{alpha_law, ConstraintEstimators, ControllerStep, KalmanController, KalmanParams, KalmanState, QMode};
pub use lms::{calibrate_leak, Calibration, CalibrationOptions, CalibrationStatus, FxLms, LmsState};
pub use spectrum::{error_spectrum, Spectrum};
pub use stats::{mean_square, nse_db, RunningPower, NSE_FLOOR_DB};
