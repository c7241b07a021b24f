use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anc_sim::config::ControllerKind;
use anc_sim::engine::{build_plant, build_reference, calibrate_leak_for, sweep_step_size};
use anc_sim::{emit_artifacts, run_closed_loop, run_suite, ExperimentConfig, RunArtifacts, SimError};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "anc-sim", version, about = "Closed-loop active noise control simulations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a single configuration.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the configured controller (none, fxlms, leaky, kf, kf-opc).
        #[arg(long)]
        controller: Option<String>,
    },
    /// Run the tonal, broadband and real-path experiments.
    Suite {
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Find the leak that holds a leaky FxLMS run at a target output power.
    CalibrateLeak {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Target output power; defaults to the configured rho_o.
        #[arg(long)]
        target: Option<f64>,
    },
}

fn print_summary(run: &RunArtifacts) {
    let s = &run.summary;
    let fmt_db = |v: Option<f64>| v.map(|v| format!("{v:.2} dB")).unwrap_or_else(|| "n/a".into());
    println!(
        "{:<10} {:<7} power {:.5}  steady NSE {:>10}  clipped {} ({} after warm-up)  alpha {:.4}{}",
        run.config.name,
        run.label(),
        s.output_power,
        fmt_db(s.steady_nse_db),
        s.clipped_total,
        s.clipped_after_warmup,
        s.final_alpha,
        if run.diverged() { "  DIVERGED" } else { "" }
    );
}

fn emit(run: &RunArtifacts, dir: &Path) -> Result<(), SimError> {
    let files = emit_artifacts(run, dir)?;
    log::info!("wrote {}", files.dir.display());
    Ok(())
}

fn run_one(config: &Path, seed: Option<u64>, out: Option<PathBuf>, controller: Option<String>) -> Result<bool, SimError> {
    let mut cfg = ExperimentConfig::load(config)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    if let Some(name) = controller {
        cfg.controller.kind =
            ControllerKind::parse(&name).ok_or_else(|| SimError::Config(format!("unknown controller `{name}`")))?;
    }
    let run = run_closed_loop(&cfg)?;
    let dir = out
        .or_else(|| cfg.output.clone())
        .unwrap_or_else(|| PathBuf::from("out").join(&cfg.name).join(run.label()));
    emit(&run, &dir)?;
    print_summary(&run);
    Ok(run.diverged())
}

fn suite(seed: Option<u64>, out: &Path) -> Result<bool, SimError> {
    let mut diverged = false;
    for exp in run_suite(seed)? {
        for run in &exp.runs {
            emit(run, &out.join(&exp.name).join(run.label()))?;
            print_summary(run);
            // the unconstrained KF is expected to run away under clipping
            if run.config.controller.kind != ControllerKind::Kf {
                diverged |= run.diverged();
            }
        }
    }
    Ok(diverged)
}

fn calibrate(config: &Path, seed: Option<u64>, target: Option<f64>) -> Result<(), SimError> {
    let mut cfg = ExperimentConfig::load(config)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    let target = target
        .or(cfg.rho_o)
        .ok_or_else(|| SimError::Config("no target power: pass --target or set rho_o".into()))?;
    let plant = build_plant(&cfg)?;
    let x = build_reference(&mut cfg, &plant)?;
    let mu = match cfg.controller.mu {
        Some(mu) => mu,
        None => sweep_step_size(&cfg, &plant, &x)?,
    };
    cfg.controller.mu = Some(mu);
    let cal = calibrate_leak_for(&cfg, &plant, &x, target)?;
    println!(
        "mu {mu}  leak {}  output power {:.5} (target {target})  iterations {}  {:?}",
        cal.leak, cal.output_power, cal.iterations, cal.status
    );
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            config,
            seed,
            out,
            controller,
        } => run_one(&config, seed, out, controller),
        Command::Suite { seed, out } => suite(seed, &out),
        Command::CalibrateLeak { config, seed, target } => calibrate(&config, seed, target).map(|_| false),
    };
    match result {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => {
            eprintln!("error: controller diverged");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
