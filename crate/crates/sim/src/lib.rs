//! Closed-loop ANC simulation harness: experiment configuration, the
//! simulation engine, the reference experiments and artifact output.

pub mod artifacts;
pub mod config;
pub mod engine;
pub mod error;
pub mod experiments;
pub mod metrics;
pub mod standin;

pub use artifacts::{emit_artifacts, read_manifest, read_traces_csv, Manifest};
pub use config::{ControllerKind, ExperimentConfig};
pub use engine::{run_closed_loop, RunArtifacts, Summary};
pub use error::{Result, SimError};
pub use experiments::{
    experiment_broadband, experiment_real_path, experiment_tonal_saturation, run_suite, ExperimentRuns,
    RealPathInputs,
};
