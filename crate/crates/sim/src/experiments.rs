//! The three reference experiments: a saturating tone, broadband noise under a
//! rated-power limit, and compressor-like noise through duct-like paths.
//!
//! Each experiment runs several controllers on identical plants and reference
//! signals. Controllers run on their own threads; each run is independent.

use std::path::PathBuf;
use std::thread;

use crate::config::{
    ControllerConfig, ControllerKind, ExperimentConfig, MetricsConfig, NoiseSource, PathRole, PathSource,
    SCHEMA_VERSION,
};
use crate::engine::{run_closed_loop, RunArtifacts};
use crate::error::Result;

pub const TONE_FREQ: f64 = 400.0;
/// Ideal control power demanded by the tone, in multiples of the rated power.
pub const TONE_OVERDRIVE: f64 = 4.0;

/// Runs of one experiment, one per controller.
#[derive(Debug, Clone)]
pub struct ExperimentRuns {
    pub name: String,
    pub runs: Vec<RunArtifacts>,
}

impl ExperimentRuns {
    pub fn get(&self, kind: ControllerKind) -> Option<&RunArtifacts> {
        self.runs.iter().find(|r| r.config.controller.kind == kind)
    }
}

fn bandpass(taps: usize) -> PathSource {
    PathSource::Bandpass {
        lo: 20.0,
        hi: 5000.0,
        taps,
        delay: 0,
        gain: 1.0,
    }
}

fn base(name: &str, kind: ControllerKind) -> ExperimentConfig {
    ExperimentConfig {
        schema_version: SCHEMA_VERSION,
        name: name.to_string(),
        fs: 16_000.0,
        duration: 10.0,
        seed: 1,
        primary_path: bandpass(128),
        secondary_path: bandpass(32),
        s_hat: None,
        noise: NoiseSource::Silence,
        controller: ControllerConfig::new(kind),
        rho_o: None,
        amplifier_rated_power: None,
        metrics: MetricsConfig::default(),
        output: None,
    }
}

/// 400 Hz tone through band-pass paths, amplifier clipping at `sqrt(2)`.
pub fn tonal_config(kind: ControllerKind) -> ExperimentConfig {
    let mut cfg = base("tonal", kind);
    cfg.noise = NoiseSource::Tone {
        freq: TONE_FREQ,
        amplitude: None,
        control_power: Some(TONE_OVERDRIVE * 1.0),
    };
    cfg.rho_o = Some(1.0);
    cfg.amplifier_rated_power = Some(1.0);
    cfg
}

/// 200-2000 Hz noise with rated power 0.8.
pub fn broadband_config(kind: ControllerKind) -> ExperimentConfig {
    let mut cfg = base("broadband", kind);
    cfg.noise = NoiseSource::Bandlimited {
        lo: 200.0,
        hi: 2000.0,
        power: 2.0,
    };
    cfg.rho_o = Some(0.8);
    cfg
}

/// Inputs for the real-path experiment; any missing file falls back to its
/// synthetic stand-in.
#[derive(Debug, Clone)]
pub struct RealPathInputs {
    pub primary_ir: Option<PathBuf>,
    pub secondary_ir: Option<PathBuf>,
    pub noise: Option<PathBuf>,
    pub rho_o: f64,
}

impl Default for RealPathInputs {
    fn default() -> Self {
        Self {
            primary_ir: None,
            secondary_ir: None,
            noise: None,
            rho_o: 0.5,
        }
    }
}

pub fn real_path_config(kind: ControllerKind, inputs: &RealPathInputs) -> ExperimentConfig {
    let mut cfg = base("real-path", kind);
    let path = |file: &Option<PathBuf>, role| match file {
        Some(p) => PathSource::File { path: p.clone() },
        None => PathSource::DuctStandin { role },
    };
    cfg.primary_path = path(&inputs.primary_ir, PathRole::Primary);
    cfg.secondary_path = path(&inputs.secondary_ir, PathRole::Secondary);
    cfg.noise = match &inputs.noise {
        Some(p) => NoiseSource::File {
            path: p.clone(),
            gain: 1.0,
        },
        None => NoiseSource::Compressor {
            fundamental: 150.0,
            harmonics: 4,
            floor_db: -20.0,
            power: 0.8,
        },
    };
    cfg.rho_o = Some(inputs.rho_o);
    cfg
}

/// Run `base` once per controller kind, in parallel.
pub fn run_variants(base: &ExperimentConfig, kinds: &[ControllerKind]) -> Result<Vec<RunArtifacts>> {
    let configs: Vec<ExperimentConfig> = kinds
        .iter()
        .map(|&k| {
            let mut c = base.clone();
            c.controller.kind = k;
            c
        })
        .collect();
    thread::scope(|s| {
        let handles: Vec<_> = configs.iter().map(|c| s.spawn(move || run_closed_loop(c))).collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("simulation thread panicked"))
            .collect()
    })
}

pub fn experiment_tonal_saturation() -> Result<ExperimentRuns> {
    run_experiment(&tonal_config(ControllerKind::Kf), &[ControllerKind::Kf, ControllerKind::KfOpc])
}

pub fn experiment_broadband() -> Result<ExperimentRuns> {
    run_experiment(
        &broadband_config(ControllerKind::Kf),
        &[ControllerKind::Kf, ControllerKind::KfOpc, ControllerKind::Leaky],
    )
}

pub fn experiment_real_path(inputs: &RealPathInputs) -> Result<ExperimentRuns> {
    run_experiment(
        &real_path_config(ControllerKind::Kf, inputs),
        &[ControllerKind::Kf, ControllerKind::KfOpc, ControllerKind::Leaky],
    )
}

pub fn run_experiment(base: &ExperimentConfig, kinds: &[ControllerKind]) -> Result<ExperimentRuns> {
    Ok(ExperimentRuns {
        name: base.name.clone(),
        runs: run_variants(base, kinds)?,
    })
}

/// The three experiments, each with its controller set, optionally reseeded.
pub fn suite_configs(seed: Option<u64>) -> Vec<(ExperimentConfig, Vec<ControllerKind>)> {
    use ControllerKind::*;
    let mut suite = vec![
        (tonal_config(Kf), vec![Kf, KfOpc]),
        (broadband_config(Kf), vec![Kf, KfOpc, Leaky]),
        (real_path_config(Kf, &RealPathInputs::default()), vec![Kf, KfOpc, Leaky]),
    ];
    if let Some(seed) = seed {
        for (cfg, _) in &mut suite {
            cfg.seed = seed;
        }
    }
    suite
}

/// Run all experiments, each on its own thread.
pub fn run_suite(seed: Option<u64>) -> Result<Vec<ExperimentRuns>> {
    let suite = suite_configs(seed);
    thread::scope(|s| {
        let handles: Vec<_> = suite
            .iter()
            .map(|(cfg, kinds)| s.spawn(move || run_experiment(cfg, kinds)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("experiment thread panicked"))
            .collect()
    })
}
