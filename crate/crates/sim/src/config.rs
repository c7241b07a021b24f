//! Experiment configuration, schema version 1.
//!
//! Configurations are TOML. Unknown keys are rejected everywhere. A run always
//! records the resolved configuration, with every value chosen at run time
//! (step size, leak, tone amplitude) written back in.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

pub const SCHEMA_VERSION: u32 = 1;
pub const MAX_TAPS: usize = 512;

fn default_fs() -> f64 {
    16_000.0
}
fn default_duration() -> f64 {
    10.0
}
fn default_one() -> f64 {
    1.0
}
fn default_taps() -> usize {
    64
}
fn default_q() -> f64 {
    anc_core::kalman::DEFAULT_Q
}
fn default_r() -> f64 {
    anc_core::kalman::DEFAULT_R
}
fn default_p0() -> f64 {
    anc_core::kalman::DEFAULT_P0
}
fn default_lambda() -> f64 {
    anc_core::kalman::DEFAULT_LAMBDA
}
fn default_bound() -> f64 {
    1e4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub name: String,
    /// Sampling rate, Hz.
    #[serde(default = "default_fs")]
    pub fs: f64,
    /// Seconds of simulated time.
    #[serde(default = "default_duration")]
    pub duration: f64,
    #[serde(default)]
    pub seed: u64,
    pub primary_path: PathSource,
    pub secondary_path: PathSource,
    /// Secondary-path model; an exact copy of `secondary_path` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s_hat: Option<PathSource>,
    pub noise: NoiseSource,
    pub controller: ControllerConfig,
    /// Rated output power of the control channel.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho_o: Option<f64>,
    /// Rated power of the clipping amplifier; no clipping when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplifier_rated_power: Option<f64>,
    #[serde(default)]
    pub metrics: MetricsConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PathSource {
    Identity,
    /// Windowed-sinc linear-phase band-pass.
    Bandpass {
        lo: f64,
        hi: f64,
        taps: usize,
        #[serde(default)]
        delay: usize,
        #[serde(default = "default_one")]
        gain: f64,
    },
    Taps {
        values: Vec<f64>,
    },
    /// Text (one coefficient per line) or raw little-endian f32 (`.bin`, `.f32`, `.raw`).
    File {
        path: PathBuf,
    },
    /// Synthetic duct-like response shipped in place of measured paths.
    DuctStandin {
        role: PathRole,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathRole {
    Primary,
    Secondary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseSource {
    Silence,
    /// Sinusoid; give either `amplitude` or `control_power`, the power of the
    /// ideal cancelling control signal, from which the amplitude is derived.
    Tone {
        freq: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        amplitude: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        control_power: Option<f64>,
    },
    /// Band-limited Gaussian noise of the given variance.
    Bandlimited { lo: f64, hi: f64, power: f64 },
    /// Synthetic compressor-like noise: harmonic stack plus a broadband floor.
    Compressor {
        fundamental: f64,
        harmonics: usize,
        floor_db: f64,
        power: f64,
    },
    /// Mono WAV (PCM16/float32) or text samples, looped to the run length.
    File {
        path: PathBuf,
        #[serde(default = "default_one")]
        gain: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ControllerKind {
    #[serde(rename = "none")]
    Disabled,
    #[serde(rename = "fxlms")]
    FxLms,
    #[serde(rename = "leaky")]
    Leaky,
    #[serde(rename = "kf")]
    Kf,
    #[serde(rename = "kf-opc")]
    KfOpc,
}

impl ControllerKind {
    pub fn label(self) -> &'static str {
        match self {
            ControllerKind::Disabled => "none",
            ControllerKind::FxLms => "fxlms",
            ControllerKind::Leaky => "leaky",
            ControllerKind::Kf => "kf",
            ControllerKind::KfOpc => "kf-opc",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Self::Disabled, Self::FxLms, Self::Leaky, Self::Kf, Self::KfOpc]
            .into_iter()
            .find(|k| k.label() == s)
    }

    pub fn is_kalman(self) -> bool {
        matches!(self, ControllerKind::Kf | ControllerKind::KfOpc)
    }

    pub fn is_lms(self) -> bool {
        matches!(self, ControllerKind::FxLms | ControllerKind::Leaky)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QModeConfig {
    Fixed,
    Innovation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerConfig {
    pub kind: ControllerKind,
    /// Control filter length L.
    #[serde(default = "default_taps")]
    pub taps: usize,
    #[serde(default = "default_q")]
    pub q: f64,
    #[serde(default = "default_r")]
    pub r: f64,
    #[serde(default = "default_p0")]
    pub p0: f64,
    /// Forgetting factor of every running expectation.
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "QModeConfig::default")]
    pub q_mode: QModeConfig,
    /// Constraint warm-up in samples; twice the filter length when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warmup: Option<usize>,
    /// FxLMS step size; picked by a stability sweep when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    /// Leak factor; calibrated against `rho_o` when absent for `leaky`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub leak: Option<f64>,
    /// A filter weight above this magnitude counts as divergence.
    #[serde(default = "default_bound")]
    pub divergence_bound: f64,
}

impl QModeConfig {
    fn default() -> Self {
        QModeConfig::Fixed
    }
}

impl ControllerConfig {
    pub fn new(kind: ControllerKind) -> Self {
        Self {
            kind,
            taps: default_taps(),
            q: default_q(),
            r: default_r(),
            p0: default_p0(),
            lambda: default_lambda(),
            q_mode: QModeConfig::Fixed,
            warmup: None,
            mu: None,
            leak: None,
            divergence_bound: default_bound(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsConfig {
    /// Seconds excluded from post-warm-up clipping counts.
    pub warmup: f64,
    /// Trailing fraction of the run treated as steady state.
    pub steady_fraction: f64,
    /// Samples per NSE block.
    pub nse_block: usize,
    /// Welch segment length (power of two).
    pub spectrum_segment: usize,
    /// Control filter tap whose history is traced.
    pub weight_tap: usize,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            warmup: 0.5,
            steady_fraction: 0.25,
            nse_block: 512,
            spectrum_segment: 1024,
            weight_tap: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| SimError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| SimError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text).map_err(|e| match e {
            SimError::Config(msg) => SimError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("configuration serializes")
    }

    pub fn samples(&self) -> usize {
        (self.duration * self.fs).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(SimError::Config(msg));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        if !(self.fs.is_finite() && self.fs > 0.0) {
            return bad(format!("fs must be positive, got {}", self.fs));
        }
        if !(self.duration.is_finite() && self.duration >= 0.0) {
            return bad(format!("duration must be >= 0, got {}", self.duration));
        }
        let c = &self.controller;
        if c.taps == 0 || c.taps > MAX_TAPS {
            return bad(format!("controller.taps must be in 1..={MAX_TAPS}, got {}", c.taps));
        }
        for (name, v) in [("q", c.q), ("r", c.r), ("p0", c.p0)] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("controller.{name} must be finite and >= 0, got {v}"));
            }
        }
        if !(c.lambda > 0.0 && c.lambda < 1.0) {
            return bad(format!("controller.lambda must lie in (0, 1), got {}", c.lambda));
        }
        if c.divergence_bound.is_nan() || c.divergence_bound <= 0.0 {
            return bad("controller.divergence_bound must be positive".into());
        }
        if let Some(mu) = c.mu {
            if !(mu.is_finite() && mu > 0.0) {
                return bad(format!("controller.mu must be positive, got {mu}"));
            }
        }
        if let Some(leak) = c.leak {
            if !(leak.is_finite() && leak >= 0.0) {
                return bad(format!("controller.leak must be >= 0, got {leak}"));
            }
        }
        if let Some(rho) = self.rho_o {
            if rho.is_nan() || rho <= 0.0 {
                return bad(format!("rho_o must be positive, got {rho}"));
            }
        }
        if c.kind == ControllerKind::KfOpc && self.rho_o.is_none() {
            return bad("controller kf-opc requires rho_o".into());
        }
        if c.kind == ControllerKind::Leaky && c.leak.is_none() && self.rho_o.is_none() {
            return bad("controller leaky needs either controller.leak or rho_o to calibrate against".into());
        }
        if let Some(p) = self.amplifier_rated_power {
            if !(p.is_finite() && p > 0.0) {
                return bad(format!("amplifier_rated_power must be positive, got {p}"));
            }
        }
        let m = &self.metrics;
        if !(m.steady_fraction > 0.0 && m.steady_fraction <= 1.0) {
            return bad(format!("metrics.steady_fraction must lie in (0, 1], got {}", m.steady_fraction));
        }
        if !(m.warmup.is_finite() && m.warmup >= 0.0) {
            return bad("metrics.warmup must be >= 0".into());
        }
        if m.nse_block == 0 {
            return bad("metrics.nse_block must be positive".into());
        }
        if !m.spectrum_segment.is_power_of_two() || m.spectrum_segment < 2 {
            return bad(format!(
                "metrics.spectrum_segment must be a power of two, got {}",
                m.spectrum_segment
            ));
        }
        if m.weight_tap >= c.taps {
            return bad(format!("metrics.weight_tap {} out of range for {} taps", m.weight_tap, c.taps));
        }
        for (name, path) in [
            ("primary_path", Some(&self.primary_path)),
            ("secondary_path", Some(&self.secondary_path)),
            ("s_hat", self.s_hat.as_ref()),
        ] {
            if let Some(path) = path {
                validate_path(name, path, self.fs)?;
            }
        }
        validate_noise(&self.noise, self.fs)
    }
}

fn validate_path(name: &str, path: &PathSource, fs: f64) -> Result<()> {
    match path {
        PathSource::Bandpass { lo, hi, taps, gain, .. } => {
            if !(0.0 < *lo && lo < hi && *hi < fs / 2.0) {
                return Err(SimError::Config(format!("{name}: need 0 < lo < hi < fs/2")));
            }
            if *taps == 0 || !gain.is_finite() {
                return Err(SimError::Config(format!("{name}: taps must be positive and gain finite")));
            }
        }
        PathSource::Taps { values } => {
            if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
                return Err(SimError::Config(format!("{name}: taps must be non-empty and finite")));
            }
        }
        PathSource::Identity | PathSource::File { .. } | PathSource::DuctStandin { .. } => {}
    }
    Ok(())
}

fn validate_noise(noise: &NoiseSource, fs: f64) -> Result<()> {
    let bad = |msg: &str| Err(SimError::Config(format!("noise: {msg}")));
    match noise {
        NoiseSource::Silence => Ok(()),
        NoiseSource::Tone {
            freq,
            amplitude,
            control_power,
        } => {
            if !(*freq > 0.0 && *freq < fs / 2.0) {
                return bad("tone frequency must lie in (0, fs/2)");
            }
            match (amplitude, control_power) {
                (Some(a), None) if a.is_finite() => Ok(()),
                (None, Some(p)) if p.is_finite() && *p >= 0.0 => Ok(()),
                _ => bad("tone needs exactly one of amplitude or control_power"),
            }
        }
        NoiseSource::Bandlimited { lo, hi, power } => {
            if !(0.0 < *lo && lo < hi && *hi < fs / 2.0) {
                return bad("need 0 < lo < hi < fs/2");
            }
            if !(power.is_finite() && *power >= 0.0) {
                return bad("power must be >= 0");
            }
            Ok(())
        }
        NoiseSource::Compressor {
            fundamental,
            harmonics,
            floor_db,
            power,
        } => {
            if *harmonics == 0 || fundamental.is_nan() || *fundamental <= 0.0 || fundamental * *harmonics as f64 >= fs / 2.0 {
                return bad("compressor harmonics must lie below fs/2");
            }
            if !floor_db.is_finite() || !(power.is_finite() && *power >= 0.0) {
                return bad("compressor floor_db and power must be finite");
            }
            Ok(())
        }
        NoiseSource::File { gain, .. } => {
            if gain.is_finite() {
                Ok(())
            } else {
                bad("gain must be finite")
            }
        }
    }
}
