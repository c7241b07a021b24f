//! Synthetic stand-ins for measured duct paths and recorded compressor noise.
//! Both are plainly synthetic; real measurements load through `kind = "file"`.

use std::f64::consts::PI;

use anc_core::generator::generate_bandlimited_noise;
use anc_core::{design_bandpass, Result};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::PathRole;

/// Band-pass core, a bulk delay and a few discrete reflections.
pub fn duct_path(role: PathRole, fs: f64) -> Result<Vec<f64>> {
    let (taps, delay, echoes): (usize, usize, &[(usize, f64)]) = match role {
        PathRole::Primary => (128, 4, &[(17, -0.3), (41, 0.1)]),
        PathRole::Secondary => (32, 2, &[(9, 0.25)]),
    };
    let core = design_bandpass(50.0, 4000.0f64.min(0.45 * fs), fs, taps)?;
    let tail = echoes.iter().map(|(lag, _)| *lag).max().unwrap_or(0);
    let mut h = vec![0.0; delay + taps + tail];
    for (k, c) in core.iter().enumerate() {
        h[delay + k] += c;
        for &(lag, gain) in echoes {
            h[delay + lag + k] += gain * c;
        }
    }
    Ok(h)
}

/// Upper edge of the compressor's broadband floor. Kept inside the band where
/// the stand-in secondary path has authority.
pub const FLOOR_HI: f64 = 2000.0;

/// Harmonic stack at `fundamental` with 1/k amplitudes and seeded phases, plus
/// a broadband floor `floor_db` below the tonal power; scaled to `power`.
pub fn compressor_noise(
    fundamental: f64,
    harmonics: usize,
    floor_db: f64,
    power: f64,
    fs: f64,
    n: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let partials: Vec<(f64, f64, f64)> = (1..=harmonics)
        .map(|k| (fundamental * k as f64, 1.0 / k as f64, rng.random_range(0.0..2.0 * PI)))
        .collect();
    let tonal_power: f64 = partials.iter().map(|(_, a, _)| a * a / 2.0).sum();
    let floor_gain = (tonal_power * 10f64.powf(floor_db / 10.0)).sqrt();
    let floor = generate_bandlimited_noise(50.0, FLOOR_HI.min(0.45 * fs), fs, n, seed ^ 0x5eed)?;
    let scale = (power / (tonal_power + floor_gain * floor_gain)).sqrt();
    Ok((0..n)
        .map(|i| {
            let t = i as f64 / fs;
            let tones: f64 = partials
                .iter()
                .map(|(f, a, phi)| a * (2.0 * PI * f * t + phi).sin())
                .sum();
            scale * (tones + floor_gain * floor[i])
        })
        .collect())
}
