//! Deterministic test signals. Every random generator takes an explicit seed.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{AncError, Result};
use crate::fir::{design_bandpass, validate_band, FirPath};

/// Length of the band-pass used to colour white noise.
pub const NOISE_SHAPING_TAPS: usize = 255;

pub fn generate_tone(freq: f64, amplitude: f64, fs: f64, n: usize) -> Result<Vec<f64>> {
    if !(fs.is_finite() && fs > 0.0) {
        return Err(AncError::invalid("fs", format!("must be positive, got {fs}")));
    }
    if !(freq.is_finite() && freq > 0.0 && freq < fs / 2.0) {
        return Err(AncError::invalid(
            "freq",
            format!("tone must lie in (0, fs/2), got {freq} Hz at fs={fs}"),
        ));
    }
    if !amplitude.is_finite() {
        return Err(AncError::NonFinite {
            what: "amplitude",
            value: amplitude,
        });
    }
    let step = 2.0 * PI * freq / fs;
    Ok((0..n).map(|k| amplitude * (step * k as f64).sin()).collect())
}

/// Seeded Gaussian white noise.
pub fn white_noise(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
}

/// Seeded white noise coloured by a windowed-sinc band-pass, scaled to unit
/// expected variance. The filter transient is discarded so the sequence is
/// stationary from its first sample.
pub fn generate_bandlimited_noise(lo: f64, hi: f64, fs: f64, n: usize, seed: u64) -> Result<Vec<f64>> {
    validate_band(lo, hi, fs)?;
    let taps = design_bandpass(lo, hi, fs, NOISE_SHAPING_TAPS)?;
    let gain = taps.iter().map(|h| h * h).sum::<f64>().sqrt();
    let taps: Vec<f64> = taps.iter().map(|h| h / gain).collect();
    let mut path = FirPath::new(taps)?;
    let white = white_noise(n + NOISE_SHAPING_TAPS, seed);
    let mut out = path.process_block(&white)?;
    out.drain(..NOISE_SHAPING_TAPS);
    Ok(out)
}
