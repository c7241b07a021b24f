//! Fixed FIR paths and the tapped delay line shared by every filter in the
//! loop.
//!
//! The primary path, the secondary path and its model are all [`FirPath`]s.
//! Controllers keep their reference and filtered-reference histories in a
//! [`DelayLine`] so the regressor is always available as one contiguous slice,
//! newest sample first.

use std::f64::consts::PI;

use crate::error::{ensure_finite, AncError, Result};

/// Tapped delay line of fixed length, newest sample first.
///
/// Backed by a buffer of twice the length: every sample is written twice so
/// that the most recent `len` samples always form a contiguous window.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayLine {
    buf: Vec<f64>,
    head: usize,
    len: usize,
}

impl DelayLine {
    pub fn new(len: usize) -> Self {
        assert!(len > 0, "delay line length must be positive");
        Self {
            buf: vec![0.0; 2 * len],
            head: len,
            len,
        }
    }

    /// Shift `sample` in, dropping the oldest entry.
    #[inline]
    pub fn push(&mut self, sample: f64) {
        self.head = if self.head == 0 { self.len - 1 } else { self.head - 1 };
        self.buf[self.head] = sample;
        self.buf[self.head + self.len] = sample;
    }

    /// `[u(n), u(n-1), ..., u(n-len+1)]`.
    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.buf[self.head..self.head + self.len]
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn clear(&mut self) {
        self.buf.fill(0.0);
        self.head = self.len;
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// A fixed impulse response with its own input history.
#[derive(Debug, Clone, PartialEq)]
pub struct FirPath {
    taps: Vec<f64>,
    line: DelayLine,
}

impl FirPath {
    pub fn new(taps: Vec<f64>) -> Result<Self> {
        if taps.is_empty() {
            return Err(AncError::invalid("taps", "impulse response is empty"));
        }
        for &t in &taps {
            ensure_finite("tap coefficient", t)?;
        }
        let line = DelayLine::new(taps.len());
        Ok(Self { taps, line })
    }

    /// Single unit tap: output equals input.
    pub fn identity() -> Self {
        Self::new(vec![1.0]).expect("unit impulse is a valid path")
    }

    /// Push one input sample and return the path output for it.
    pub fn process(&mut self, sample: f64) -> Result<f64> {
        ensure_finite("path input sample", sample)?;
        self.line.push(sample);
        Ok(dot(&self.taps, self.line.as_slice()))
    }

    /// Filter a whole block from the current state.
    pub fn process_block(&mut self, input: &[f64]) -> Result<Vec<f64>> {
        input.iter().map(|&s| self.process(s)).collect()
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Clear the input history, keeping the coefficients.
    pub fn reset(&mut self) {
        self.line.clear();
    }

    /// Fresh copy of the same impulse response with an empty history.
    pub fn fresh(&self) -> Self {
        Self {
            taps: self.taps.clone(),
            line: DelayLine::new(self.taps.len()),
        }
    }

    /// Magnitude of the frequency response at `freq` Hz.
    pub fn magnitude_at(&self, freq: f64, fs: f64) -> f64 {
        let omega = 2.0 * PI * freq / fs;
        let (re, im) = self
            .taps
            .iter()
            .enumerate()
            .fold((0.0, 0.0), |(re, im), (k, &h)| {
                let phase = omega * k as f64;
                (re + h * phase.cos(), im - h * phase.sin())
            });
        re.hypot(im)
    }
}

/// Hann window without zero end points, so every tap of a short design
/// contributes.
fn hann(n: usize, len: usize) -> f64 {
    0.5 - 0.5 * (2.0 * PI * (n + 1) as f64 / (len + 1) as f64).cos()
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Linear-phase band-pass design by the windowed-sinc method (Hann window):
/// the difference of two ideal low-pass kernels centred on the middle tap.
pub fn design_bandpass(lo: f64, hi: f64, fs: f64, taps: usize) -> Result<Vec<f64>> {
    validate_band(lo, hi, fs)?;
    if taps == 0 {
        return Err(AncError::invalid("taps", "band-pass length must be positive"));
    }
    let centre = (taps as f64 - 1.0) / 2.0;
    let (f_lo, f_hi) = (lo / fs, hi / fs);
    Ok((0..taps)
        .map(|n| {
            let t = n as f64 - centre;
            let ideal = 2.0 * f_hi * sinc(2.0 * f_hi * t) - 2.0 * f_lo * sinc(2.0 * f_lo * t);
            ideal * hann(n, taps)
        })
        .collect())
}

pub(crate) fn validate_band(lo: f64, hi: f64, fs: f64) -> Result<()> {
    if !(fs.is_finite() && fs > 0.0) {
        return Err(AncError::invalid("fs", format!("must be positive, got {fs}")));
    }
    if !(lo.is_finite() && hi.is_finite() && 0.0 < lo && lo < hi && hi < fs / 2.0) {
        return Err(AncError::invalid(
            "band",
            format!("need 0 < lo < hi < fs/2, got lo={lo} hi={hi} fs={fs}"),
        ));
    }
    Ok(())
}
