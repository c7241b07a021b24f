//! Welch power spectrum: Hann-windowed segments with 50% overlap, averaged.
//!
//! Bins hold power (signal units squared), not density, scaled so that the
//! one-sided bins sum to the mean square of the signal.

use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{AncError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub freqs: Vec<f64>,
    pub power: Vec<f64>,
}

impl Spectrum {
    pub fn bin_width(&self) -> f64 {
        if self.freqs.len() > 1 {
            self.freqs[1] - self.freqs[0]
        } else {
            0.0
        }
    }

    pub fn total_power(&self) -> f64 {
        self.power.iter().sum()
    }

    /// Sum of bins whose centre lies within `half_width` Hz of `freq`.
    pub fn band_power(&self, freq: f64, half_width: f64) -> f64 {
        self.freqs
            .iter()
            .zip(&self.power)
            .filter(|(f, _)| (**f - freq).abs() <= half_width)
            .map(|(_, p)| p)
            .sum()
    }

    pub fn peak_freq(&self) -> f64 {
        let mut best = 0;
        for (i, p) in self.power.iter().enumerate() {
            if *p > self.power[best] {
                best = i;
            }
        }
        self.freqs[best]
    }

    /// Median bin power, a robust estimate of the broadband floor.
    pub fn median_power(&self) -> f64 {
        let mut sorted = self.power.clone();
        sorted.sort_by(|a, b| a.total_cmp(b));
        sorted[sorted.len() / 2]
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.freqs.iter().copied().zip(self.power.iter().copied())
    }
}

pub fn error_spectrum(signal: &[f64], fs: f64, segment: usize) -> Result<Spectrum> {
    if signal.is_empty() {
        return Err(AncError::EmptySignal);
    }
    if !segment.is_power_of_two() || segment < 2 {
        return Err(AncError::invalid(
            "segment",
            format!("must be a power of two >= 2, got {segment}"),
        ));
    }
    if segment > signal.len() {
        return Err(AncError::invalid(
            "segment",
            format!("segment {segment} longer than signal ({})", signal.len()),
        ));
    }

    let window: Vec<f64> = (0..segment)
        .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / segment as f64).cos())
        .collect();
    let window_energy: f64 = window.iter().map(|w| w * w).sum();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(segment);

    let bins = segment / 2 + 1;
    let hop = segment / 2;
    let mut acc = vec![0.0; bins];
    let mut frames = 0usize;
    let mut buf = vec![Complex::new(0.0, 0.0); segment];
    let mut start = 0;
    while start + segment <= signal.len() {
        for (slot, (x, w)) in buf.iter_mut().zip(signal[start..start + segment].iter().zip(&window)) {
            *slot = Complex::new(x * w, 0.0);
        }
        fft.process(&mut buf);
        for (a, c) in acc.iter_mut().zip(&buf[..bins]) {
            *a += c.norm_sqr();
        }
        frames += 1;
        start += hop;
    }

    let scale = 1.0 / (frames as f64 * segment as f64 * window_energy);
    let power = acc
        .iter()
        .enumerate()
        .map(|(k, a)| {
            let one_sided = if k == 0 || k == segment / 2 { 1.0 } else { 2.0 };
            a * scale * one_sided
        })
        .collect();
    let freqs = (0..bins).map(|k| k as f64 * fs / segment as f64).collect();
    Ok(Spectrum { freqs, power })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::{generate_tone, white_noise};

    #[test]
    fn tone_peak_bin_holds_its_frequency() {
        let fs = 16_000.0;
        let x = generate_tone(400.0, 1.0, fs, 32_768).unwrap();
        let s = error_spectrum(&x, fs, 1024).unwrap();
        assert!((s.peak_freq() - 400.0).abs() <= s.bin_width() / 2.0);
    }

    #[test]
    fn zeros_give_zero_bins() {
        let s = error_spectrum(&[0.0; 4096], 16_000.0, 256).unwrap();
        assert!(s.power.iter().all(|&p| p == 0.0));
        assert_eq!(s.power.len(), 129);
    }

    #[test]
    fn total_power_matches_mean_square() {
        let x = generate_tone(400.0, 2.0, 16_000.0, 64_000).unwrap();
        let s = error_spectrum(&x, 16_000.0, 1024).unwrap();
        assert!((s.total_power() - 2.0).abs() / 2.0 < 0.05);
        let w = white_noise(64_000, 3);
        let ms = w.iter().map(|v| v * v).sum::<f64>() / w.len() as f64;
        let s = error_spectrum(&w, 16_000.0, 512).unwrap();
        assert!((s.total_power() - ms).abs() / ms < 0.05);
    }

    #[test]
    fn white_noise_is_flat() {
        let w = white_noise(1 << 20, 9);
        let s = error_spectrum(&w, 16_000.0, 256).unwrap();
        let inner = &s.power[1..s.power.len() - 1];
        let mean = inner.iter().sum::<f64>() / inner.len() as f64;
        for p in inner {
            let db = 10.0 * (p / mean).log10();
            assert!(db.abs() < 3.0, "bin deviates {db} dB");
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(matches!(error_spectrum(&[], 1.0, 2), Err(AncError::EmptySignal)));
        assert!(error_spectrum(&[0.0; 100], 1.0, 48).is_err());
        assert!(error_spectrum(&[0.0; 100], 1.0, 128).is_err());
    }
}
