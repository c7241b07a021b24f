//! Run output: CSV tables plus a JSON manifest.
//!
//! Values are written with Rust's shortest round-trip formatting, so reading a
//! CSV back reproduces the in-memory `f64`s exactly. Header cells carry units
//! in brackets; `u` is the arbitrary signal unit.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::engine::{DivergenceMarker, RunArtifacts, Summary, Traces};
use crate::error::{Result, SimError};

pub const MANIFEST_VERSION: u32 = 1;

pub const TRACE_HEADER: [&str; 9] = [
    "sample",
    "d[u]",
    "e[u]",
    "y[u]",
    "y_amp[u]",
    "y_sec[u]",
    "alpha[1]",
    "output_power[u^2]",
    "weight[1]",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub manifest_version: u32,
    pub name: String,
    pub controller: String,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub summary: Summary,
    pub divergence: Option<DivergenceMarker>,
    pub files: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArtifactFiles {
    pub dir: PathBuf,
    pub traces: PathBuf,
    pub nse: PathBuf,
    pub spectrum: PathBuf,
    pub weights: PathBuf,
    pub config: PathBuf,
    pub manifest: PathBuf,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SimError + '_ {
    move |source| SimError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> SimError + '_ {
    move |source| SimError::Csv {
        path: path.to_path_buf(),
        source,
    }
}

fn write_table<I>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(header).map_err(csv_err(path))?;
    for row in rows {
        w.write_record(&row).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

pub fn emit_artifacts(ra: &RunArtifacts, dir: &Path) -> Result<ArtifactFiles> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let files = ArtifactFiles {
        dir: dir.to_path_buf(),
        traces: dir.join("traces.csv"),
        nse: dir.join("nse.csv"),
        spectrum: dir.join("spectrum.csv"),
        weights: dir.join("weights.csv"),
        config: dir.join("config.toml"),
        manifest: dir.join("manifest.json"),
    };

    let t = &ra.traces;
    write_table(
        &files.traces,
        &TRACE_HEADER,
        (0..t.len()).map(|i| {
            vec![
                i.to_string(),
                t.d[i].to_string(),
                t.e[i].to_string(),
                t.y[i].to_string(),
                t.y_amp[i].to_string(),
                t.y_sec[i].to_string(),
                t.alpha[i].to_string(),
                t.output_power[i].to_string(),
                t.weight[i].to_string(),
            ]
        }),
    )?;

    let fs = ra.config.fs;
    write_table(
        &files.nse,
        &["sample", "time[s]", "nse[dB]"],
        ra.nse
            .iter()
            .map(|p| vec![p.sample.to_string(), (p.sample as f64 / fs).to_string(), p.nse_db.to_string()]),
    )?;

    let spectrum_rows: Vec<Vec<String>> = ra
        .spectrum
        .iter()
        .flat_map(|s| s.iter())
        .map(|(f, p)| vec![f.to_string(), p.to_string()])
        .collect();
    write_table(&files.spectrum, &["freq[Hz]", "power[u^2]"], spectrum_rows)?;

    let diag = ra.snapshot.covariance_diag.as_deref();
    write_table(
        &files.weights,
        &["tap", "weight[1]", "p_diag[1]"],
        ra.snapshot.weights.iter().enumerate().map(|(k, w)| {
            vec![
                k.to_string(),
                w.to_string(),
                diag.map(|d| d[k].to_string()).unwrap_or_default(),
            ]
        }),
    )?;

    fs::write(&files.config, ra.config.to_toml_string()).map_err(io_err(&files.config))?;

    let manifest = Manifest {
        manifest_version: MANIFEST_VERSION,
        name: ra.config.name.clone(),
        controller: ra.label().to_string(),
        seed: ra.config.seed,
        config: ra.config.clone(),
        summary: ra.summary.clone(),
        divergence: ra.divergence.clone(),
        files: ["traces.csv", "nse.csv", "spectrum.csv", "weights.csv", "config.toml"]
            .iter()
            .map(|s| s.to_string())
            .collect(),
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&files.manifest, json).map_err(io_err(&files.manifest))?;
    Ok(files)
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| SimError::Config(format!("{}: {e}", path.display())))
}

/// Read a `traces.csv` back into memory.
pub fn read_traces_csv(path: &Path) -> Result<Traces> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let mut t = Traces::default();
    for (line, record) in r.records().enumerate() {
        let record = record.map_err(csv_err(path))?;
        let field = |i: usize| -> Result<f64> {
            record
                .get(i)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| SimError::Config(format!("{}:{}: bad field {i}", path.display(), line + 2)))
        };
        t.d.push(field(1)?);
        t.e.push(field(2)?);
        t.y.push(field(3)?);
        t.y_amp.push(field(4)?);
        t.y_sec.push(field(5)?);
        t.alpha.push(field(6)?);
        t.output_power.push(field(7)?);
        t.weight.push(field(8)?);
    }
    Ok(t)
}
