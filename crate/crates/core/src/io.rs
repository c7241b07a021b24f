//! Impulse-response and recording import.
//!
//! Impulse responses come either as text (one coefficient per line, `#`
//! comments and blank lines ignored) or as raw little-endian `f32`.
//! Recordings are mono WAV, PCM16 or float32.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{AncError, Result};

fn io_err(path: &Path, source: std::io::Error) -> AncError {
    AncError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn parse_err(path: &Path, line: usize, reason: impl Into<String>) -> AncError {
    AncError::Parse {
        path: path.to_path_buf(),
        line,
        reason: reason.into(),
    }
}

/// Dispatch on extension: `.bin`, `.f32` and `.raw` are binary, anything else text.
pub fn read_impulse_response(path: &Path) -> Result<Vec<f64>> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("bin" | "f32" | "raw") => read_impulse_response_f32le(path),
        _ => read_impulse_response_text(path),
    }
}

pub fn read_impulse_response_text(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut taps = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let v: f64 = line
            .parse()
            .map_err(|_| parse_err(path, i + 1, format!("not a number: `{line}`")))?;
        if !v.is_finite() {
            return Err(parse_err(path, i + 1, format!("non-finite coefficient `{line}`")));
        }
        taps.push(v);
    }
    if taps.is_empty() {
        return Err(parse_err(path, 0, "no coefficients found"));
    }
    Ok(taps)
}

/// Raw little-endian `f32`. Parse errors report the byte offset as the line.
pub fn read_impulse_response_f32le(path: &Path) -> Result<Vec<f64>> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    if bytes.is_empty() {
        return Err(parse_err(path, 0, "empty file"));
    }
    if bytes.len() % 4 != 0 {
        return Err(parse_err(
            path,
            bytes.len() - bytes.len() % 4,
            format!("length {} is not a multiple of 4 bytes", bytes.len()),
        ));
    }
    bytes
        .chunks_exact(4)
        .enumerate()
        .map(|(i, c)| {
            let v = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
            if v.is_finite() {
                Ok(v as f64)
            } else {
                Err(parse_err(path, i * 4, "non-finite coefficient"))
            }
        })
        .collect()
}

pub fn write_impulse_response_text(path: &Path, taps: &[f64]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| io_err(path, e))?;
    for t in taps {
        writeln!(f, "{t}").map_err(|e| io_err(path, e))?;
    }
    Ok(())
}

/// A mono recording and its sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub samples: Vec<f64>,
    pub fs: f64,
}

pub fn read_wav_mono(path: &Path) -> Result<Recording> {
    let wav_err = |source| AncError::Wav {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = hound::WavReader::open(path).map_err(wav_err)?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(parse_err(path, 0, format!("expected mono, found {} channels", spec.channels)));
    }
    let samples = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<std::result::Result<Vec<_>, _>>(),
        (hound::SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<std::result::Result<Vec<_>, _>>(),
        (fmt, bits) => {
            return Err(parse_err(
                path,
                0,
                format!("unsupported sample format {fmt:?}/{bits} bit, need PCM16 or float32"),
            ))
        }
    }
    .map_err(wav_err)?;
    Ok(Recording {
        samples,
        fs: spec.sample_rate as f64,
    })
}
