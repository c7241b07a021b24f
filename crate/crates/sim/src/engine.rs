//! Closed-loop single-channel ANC simulation.
//!
//! Per sample `n`:
//!
//! ```text
//! d(n)     = [P * x](n)
//! y(n)     = controller output for x(n)
//! y_amp(n) = clip(y(n))
//! y'(n)    = [S * y_amp](n)
//! e(n)     = d(n) - y'(n)        then the controller adapts on e(n)
//! ```

use anc_core::controller::Disabled;
use anc_core::generator::{generate_bandlimited_noise, generate_tone};
use anc_core::io::{read_impulse_response, read_impulse_response_text, read_wav_mono};
use anc_core::kalman::KalmanParams;
use anc_core::{
    calibrate_leak, design_bandpass, error_spectrum, nse_db, AncError, Calibration, CalibrationOptions,
    CalibrationStatus, Controller, FirPath, FxLms, KalmanController, LmsState, QMode, SaturatingAmplifier, Spectrum,
};
use log::{info, log, warn};
use serde::{Deserialize, Serialize};

use crate::config::{ControllerKind, ExperimentConfig, NoiseSource, PathSource, QModeConfig};
use crate::error::{Result, SimError};
use crate::metrics::{block_nse, NsePoint};
use crate::standin::{compressor_noise, duct_path};

/// Primary path, secondary path and the controller's secondary-path model.
#[derive(Debug, Clone)]
pub struct Plant {
    pub primary: FirPath,
    pub secondary: FirPath,
    pub s_hat: FirPath,
}

pub fn build_path(src: &PathSource, fs: f64) -> Result<FirPath> {
    let taps = match src {
        PathSource::Identity => vec![1.0],
        PathSource::Bandpass {
            lo,
            hi,
            taps,
            delay,
            gain,
        } => {
            let mut h = vec![0.0; *delay];
            h.extend(design_bandpass(*lo, *hi, fs, *taps)?.into_iter().map(|c| c * gain));
            h
        }
        PathSource::Taps { values } => values.clone(),
        PathSource::File { path } => read_impulse_response(path)?,
        PathSource::DuctStandin { role } => duct_path(*role, fs)?,
    };
    Ok(FirPath::new(taps)?)
}

pub fn build_plant(cfg: &ExperimentConfig) -> Result<Plant> {
    let primary = build_path(&cfg.primary_path, cfg.fs)?;
    let secondary = build_path(&cfg.secondary_path, cfg.fs)?;
    let s_hat = match &cfg.s_hat {
        Some(src) => build_path(src, cfg.fs)?,
        None => secondary.fresh(),
    };
    Ok(Plant {
        primary,
        secondary,
        s_hat,
    })
}

/// Tone amplitude whose ideal cancelling control signal has `control_power`.
pub fn tone_amplitude_for_control_power(plant: &Plant, freq: f64, fs: f64, control_power: f64) -> Result<f64> {
    let p = plant.primary.magnitude_at(freq, fs);
    let s = plant.secondary.magnitude_at(freq, fs);
    if p <= 0.0 {
        return Err(SimError::Config(format!("primary path has no gain at {freq} Hz")));
    }
    Ok((2.0 * control_power).sqrt() * s / p)
}

/// Generate the reference signal, writing derived values (tone amplitude) back
/// into `cfg.noise`.
pub fn build_reference(cfg: &mut ExperimentConfig, plant: &Plant) -> Result<Vec<f64>> {
    let n = cfg.samples();
    let fs = cfg.fs;
    let seed = cfg.seed;
    let x = match &mut cfg.noise {
        NoiseSource::Silence => vec![0.0; n],
        NoiseSource::Tone {
            freq,
            amplitude,
            control_power,
        } => {
            if let Some(power) = control_power.take() {
                *amplitude = Some(tone_amplitude_for_control_power(plant, *freq, fs, power)?);
            }
            let a = amplitude.expect("validated: tone has an amplitude");
            generate_tone(*freq, a, fs, n)?
        }
        NoiseSource::Bandlimited { lo, hi, power } => generate_bandlimited_noise(*lo, *hi, fs, n, seed)?
            .into_iter()
            .map(|v| v * power.sqrt())
            .collect(),
        NoiseSource::Compressor {
            fundamental,
            harmonics,
            floor_db,
            power,
        } => compressor_noise(*fundamental, *harmonics, *floor_db, *power, fs, n, seed)?,
        NoiseSource::File { path, gain } => {
            let samples = if path.extension().and_then(|e| e.to_str()) == Some("wav") {
                let rec = read_wav_mono(path)?;
                if (rec.fs - fs).abs() > 1e-9 {
                    return Err(SimError::Config(format!(
                        "{}: recorded at {} Hz but the run uses fs = {fs}",
                        path.display(),
                        rec.fs
                    )));
                }
                rec.samples
            } else {
                read_impulse_response_text(path)?
            };
            if samples.is_empty() {
                return Err(AncError::EmptySignal.into());
            }
            samples.iter().cycle().take(n).map(|v| v * *gain).collect()
        }
    };
    Ok(x)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Traces {
    pub d: Vec<f64>,
    pub e: Vec<f64>,
    pub y: Vec<f64>,
    pub y_amp: Vec<f64>,
    /// Anti-noise `y'` at the error point.
    pub y_sec: Vec<f64>,
    pub alpha: Vec<f64>,
    /// `y_amp^2`.
    pub output_power: Vec<f64>,
    pub weight: Vec<f64>,
}

impl Traces {
    fn with_capacity(n: usize) -> Self {
        Self {
            d: Vec::with_capacity(n),
            e: Vec::with_capacity(n),
            y: Vec::with_capacity(n),
            y_amp: Vec::with_capacity(n),
            y_sec: Vec::with_capacity(n),
            alpha: Vec::with_capacity(n),
            output_power: Vec::with_capacity(n),
            weight: Vec::with_capacity(n),
        }
    }

    pub fn len(&self) -> usize {
        self.d.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergenceMarker {
    pub sample: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub leak: f64,
    pub output_power: f64,
    pub iterations: usize,
    pub status: String,
}

impl From<Calibration> for CalibrationReport {
    fn from(c: Calibration) -> Self {
        let status = match c.status {
            CalibrationStatus::Converged => "converged",
            CalibrationStatus::Unconstrained => "unconstrained",
            CalibrationStatus::LeakLimit => "leak-limit",
            CalibrationStatus::Exhausted => "exhausted",
        };
        Self {
            leak: c.leak,
            output_power: c.output_power,
            iterations: c.iterations,
            status: status.to_string(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub samples: usize,
    /// First sample of the steady-state window.
    pub steady_start: usize,
    /// Mean `y_amp^2` over the steady-state window.
    pub output_power: f64,
    pub steady_nse_db: Option<f64>,
    pub final_nse_db: Option<f64>,
    pub clipped_total: usize,
    pub clipped_after_warmup: usize,
    pub max_abs_y_amp_after_warmup: f64,
    pub final_alpha: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_size_sweep: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub leak_calibration: Option<CalibrationReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub weights: Vec<f64>,
    pub covariance_diag: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunArtifacts {
    /// Fully resolved configuration that produced this run.
    pub config: ExperimentConfig,
    pub traces: Traces,
    pub nse: Vec<NsePoint>,
    pub spectrum: Option<Spectrum>,
    pub snapshot: Snapshot,
    pub divergence: Option<DivergenceMarker>,
    pub summary: Summary,
}

impl RunArtifacts {
    pub fn label(&self) -> &'static str {
        self.config.controller.kind.label()
    }

    pub fn diverged(&self) -> bool {
        self.divergence.is_some()
    }
}

struct LoopOutcome {
    traces: Option<Traces>,
    summary: Summary,
    divergence: Option<DivergenceMarker>,
    snapshot: Snapshot,
}

fn steady_start(n: usize, fraction: f64) -> usize {
    n - ((n as f64) * fraction).round() as usize
}

fn warmup_samples(cfg: &ExperimentConfig) -> usize {
    (cfg.metrics.warmup * cfg.fs).round() as usize
}

fn simulate(
    cfg: &ExperimentConfig,
    plant: &Plant,
    x: &[f64],
    controller: &mut dyn Controller,
    record: bool,
) -> Result<LoopOutcome> {
    let n = x.len();
    let amp = cfg
        .amplifier_rated_power
        .map(SaturatingAmplifier::from_rated_power)
        .transpose()?;
    let mut primary = plant.primary.fresh();
    let mut secondary = plant.secondary.fresh();
    let ss_start = steady_start(n, cfg.metrics.steady_fraction);
    let warmup = warmup_samples(cfg);
    let tap = cfg.metrics.weight_tap.min(controller.weights().len() - 1);

    let mut traces = record.then(|| Traces::with_capacity(n));
    let mut summary = Summary {
        samples: 0,
        steady_start: ss_start,
        final_alpha: 1.0,
        ..Default::default()
    };
    let mut ss_power = 0.0;
    let mut divergence = None;

    for (i, &xi) in x.iter().enumerate() {
        let d = primary.process(xi)?;
        let y = controller.control(xi)?;
        let (y_amp, clipped) = match &amp {
            Some(a) => (a.saturate(y), a.clips(y)),
            None => (y, false),
        };
        let y_sec = secondary.process(y_amp)?;
        let e = d - y_sec;

        let adapted = match controller.adapt(e) {
            Err(err) if !matches!(err, AncError::Divergence { .. }) => return Err(err.into()),
            other => other,
        };

        if clipped {
            summary.clipped_total += 1;
            if i >= warmup {
                summary.clipped_after_warmup += 1;
            }
        }
        if i >= warmup {
            summary.max_abs_y_amp_after_warmup = summary.max_abs_y_amp_after_warmup.max(y_amp.abs());
        }
        if i >= ss_start {
            ss_power += y_amp * y_amp;
        }
        summary.final_alpha = controller.alpha();
        summary.samples = i + 1;
        if let Some(t) = traces.as_mut() {
            t.d.push(d);
            t.e.push(e);
            t.y.push(y);
            t.y_amp.push(y_amp);
            t.y_sec.push(y_sec);
            t.alpha.push(controller.alpha());
            t.output_power.push(y_amp * y_amp);
            t.weight.push(controller.weights()[tap]);
        }
        if let Err(err) = adapted {
            // tuning probes are expected to diverge; only report recorded runs
            let level = if record { log::Level::Warn } else { log::Level::Debug };
            log!(level, "{}: {} diverged at sample {i}: {err}", cfg.name, cfg.controller.kind.label());
            divergence = Some(DivergenceMarker {
                sample: i,
                message: err.to_string(),
            });
            break;
        }
    }

    let measured = summary.samples.saturating_sub(ss_start);
    summary.output_power = if measured > 0 { ss_power / measured as f64 } else { 0.0 };
    Ok(LoopOutcome {
        traces,
        summary,
        divergence,
        snapshot: Snapshot {
            weights: controller.weights().to_vec(),
            covariance_diag: controller.covariance_diag(),
        },
    })
}

pub fn build_controller(cfg: &ExperimentConfig, s_hat: &FirPath) -> Result<Box<dyn Controller + Send>> {
    let c = &cfg.controller;
    let kalman = || KalmanParams {
        taps: c.taps,
        q: c.q,
        r: c.r,
        p0: c.p0,
        lambda: c.lambda,
        q_mode: match c.q_mode {
            QModeConfig::Fixed => QMode::Fixed,
            QModeConfig::Innovation => QMode::Innovation,
        },
        warmup: c.warmup,
        divergence_bound: c.divergence_bound,
    };
    let lms = |leak: f64| -> Result<LmsState> {
        let mu = c
            .mu
            .ok_or_else(|| SimError::Config("step size unresolved".into()))?;
        Ok(LmsState::new(c.taps, mu, leak, s_hat)?.with_divergence_bound(c.divergence_bound))
    };
    Ok(match c.kind {
        ControllerKind::Disabled => Box::new(Disabled::new(c.taps)),
        ControllerKind::Kf => Box::new(KalmanController::kf_anc(kalman(), s_hat)?),
        ControllerKind::KfOpc => {
            let rho = cfg.rho_o.ok_or_else(|| SimError::Config("kf-opc requires rho_o".into()))?;
            Box::new(KalmanController::kf_opc(kalman(), s_hat, rho)?)
        }
        ControllerKind::FxLms => Box::new(FxLms::plain(lms(0.0)?)),
        ControllerKind::Leaky => {
            let leak = c.leak.ok_or_else(|| SimError::Config("leak unresolved".into()))?;
            Box::new(FxLms::leaky(lms(leak)?))
        }
    })
}

/// Largest step size `2^-k` for which plain FxLMS completes the run without
/// tripping the divergence bound.
pub fn sweep_step_size(cfg: &ExperimentConfig, plant: &Plant, x: &[f64]) -> Result<f64> {
    let mut probe = cfg.clone();
    probe.controller.kind = ControllerKind::FxLms;
    probe.controller.leak = None;
    for k in 0..=30 {
        let mu = 0.5f64.powi(k);
        probe.controller.mu = Some(mu);
        let mut c = build_controller(&probe, &plant.s_hat)?;
        let out = simulate(&probe, plant, x, c.as_mut(), false)?;
        if out.divergence.is_none() {
            return Ok(mu);
        }
    }
    Err(SimError::Config("no stable FxLMS step size down to 2^-30".into()))
}

/// Leak whose steady-state output power matches `target`.
pub fn calibrate_leak_for(cfg: &ExperimentConfig, plant: &Plant, x: &[f64], target: f64) -> Result<Calibration> {
    let mut probe = cfg.clone();
    probe.controller.kind = ControllerKind::Leaky;
    let mu = probe
        .controller
        .mu
        .ok_or_else(|| SimError::Config("step size unresolved".into()))?;
    let options = CalibrationOptions {
        leak_max: 0.5 / mu,
        ..Default::default()
    };
    let mut failure = None;
    let cal = calibrate_leak(target, options, |leak| {
        probe.controller.leak = Some(leak);
        let run = build_controller(&probe, &plant.s_hat).and_then(|mut c| simulate(&probe, plant, x, c.as_mut(), false));
        match run {
            Ok(out) if out.divergence.is_none() => Ok(out.summary.output_power),
            Ok(_) => Ok(f64::INFINITY),
            Err(e) => {
                failure = Some(e);
                Err(AncError::EmptySignal)
            }
        }
    });
    match (cal, failure) {
        (_, Some(e)) => Err(e),
        (cal, None) => Ok(cal?),
    }
}

/// Resolve a configuration (tone amplitude, step size, leak) and run it.
pub fn run_closed_loop(cfg: &ExperimentConfig) -> Result<RunArtifacts> {
    cfg.validate()?;
    let mut cfg = cfg.clone();
    let plant = build_plant(&cfg)?;
    let x = build_reference(&mut cfg, &plant)?;

    let mut step_size_sweep = None;
    let mut leak_calibration = None;
    if cfg.controller.kind.is_lms() {
        if cfg.controller.mu.is_none() {
            let mu = sweep_step_size(&cfg, &plant, &x)?;
            info!("{}: step size sweep chose mu = {mu}", cfg.name);
            cfg.controller.mu = Some(mu);
            step_size_sweep = Some(mu);
        }
        if cfg.controller.kind == ControllerKind::Leaky && cfg.controller.leak.is_none() {
            let target = cfg.rho_o.expect("validated: leaky without leak has rho_o");
            let cal = calibrate_leak_for(&cfg, &plant, &x, target)?;
            match cal.status {
                CalibrationStatus::Unconstrained if cal.output_power < target * 0.98 => {
                    warn!("{}: target power {target} unreachable, leak set to 0", cfg.name)
                }
                CalibrationStatus::LeakLimit | CalibrationStatus::Exhausted => {
                    warn!("{}: leak calibration ended with {:?}", cfg.name, cal.status)
                }
                _ => {}
            }
            info!("{}: calibrated leak = {} (power {})", cfg.name, cal.leak, cal.output_power);
            cfg.controller.leak = Some(cal.leak);
            leak_calibration = Some(cal.into());
        }
    }
    if cfg.controller.kind == ControllerKind::FxLms {
        cfg.controller.leak = None;
    }

    let mut controller = build_controller(&cfg, &plant.s_hat)?;
    let out = simulate(&cfg, &plant, &x, controller.as_mut(), true)?;
    let traces = out.traces.expect("recorded run keeps traces");
    let mut summary = out.summary;
    summary.step_size_sweep = step_size_sweep;
    summary.leak_calibration = leak_calibration;

    let nse = block_nse(&traces.e, &traces.d, cfg.metrics.nse_block)?;
    summary.final_nse_db = nse.last().map(|p| p.nse_db);
    let ss = summary.steady_start.min(traces.len());
    let (e_ss, d_ss) = (&traces.e[ss..], &traces.d[ss..]);
    summary.steady_nse_db = if d_ss.iter().any(|&v| v != 0.0) {
        Some(nse_db(e_ss, d_ss)?)
    } else {
        None
    };
    let spectrum = steady_spectrum(e_ss, cfg.fs, cfg.metrics.spectrum_segment)?;

    Ok(RunArtifacts {
        config: cfg,
        traces,
        nse,
        spectrum,
        snapshot: out.snapshot,
        divergence: out.divergence,
        summary,
    })
}

/// Welch spectrum of the steady-state error, shrinking the segment to fit
/// short windows. `None` when fewer than two samples are available.
fn steady_spectrum(e: &[f64], fs: f64, segment: usize) -> Result<Option<Spectrum>> {
    if e.len() < 2 {
        return Ok(None);
    }
    let mut seg = segment;
    while seg > e.len() {
        seg /= 2;
    }
    Ok(Some(error_spectrum(e, fs, seg)?))
}
