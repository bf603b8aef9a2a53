//! Welch-averaged one-sided power spectral density.

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

use super::DspError;
use crate::sigio::{NoiseTrace, Spectrum, SpectrumUnit};

/// Hann-windowed averaged periodogram in V^2/Hz.
///
/// Segments overlap by `overlap` (fraction of `segment_len`); each segment has
/// its mean removed before windowing, so the integral of the PSD approximates
/// the trace variance. When `rbw_target` is given, the segment length is the
/// power of two whose Hann equivalent-noise bandwidth `1.5 * fs / N` is
/// closest to the target (clamped to the trace length).
pub fn welch_psd(
    trace: &NoiseTrace,
    segment_len: usize,
    overlap: f64,
    rbw_target: Option<f64>,
) -> Result<Spectrum, DspError> {
    let fs = trace.sample_rate;
    let segment_len = match rbw_target {
        Some(r) if r > 0.0 => {
            let ideal = 1.5 * fs / r;
            let n = (ideal.log2().round() as i32).clamp(4, 26);
            (1usize << n).min(trace.samples.len().next_power_of_two() / 2).max(16)
        }
        _ => segment_len,
    };
    let mut acc = WelchAccumulator::new(segment_len, overlap)?;
    acc.push(&trace.samples);
    acc.finalize(fs)
}

/// Streaming Welch accumulator: feed sample chunks in order, then finalize.
/// Keeps only one segment of history, so arbitrarily long traces can be
/// processed with bounded memory.
pub struct WelchAccumulator {
    segment_len: usize,
    hop: usize,
    window: Vec<f64>,
    window_sumsq: f64,
    fft: Arc<dyn Fft<f64>>,
    accum: Vec<f64>,
    n_segments: u64,
    tail: Vec<f64>,
    buf: Vec<Complex64>,
}

impl WelchAccumulator {
    pub fn new(segment_len: usize, overlap: f64) -> Result<Self, DspError> {
        if !(0.0..=0.9).contains(&overlap) {
            return Err(DspError::BadOverlap(overlap));
        }
        if segment_len < 2 {
            return Err(DspError::TraceTooShort { len: segment_len, need: 2 });
        }
        let hop = ((segment_len as f64 * (1.0 - overlap)).round() as usize).max(1);
        // Periodic Hann window; ENBW is exactly 1.5 bins.
        let window: Vec<f64> = (0..segment_len)
            .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / segment_len as f64).cos())
            .collect();
        let window_sumsq = window.iter().map(|w| w * w).sum();
        let fft = FftPlanner::new().plan_fft_forward(segment_len);
        Ok(Self {
            segment_len,
            hop,
            window,
            window_sumsq,
            fft,
            accum: vec![0.0; segment_len / 2 + 1],
            n_segments: 0,
            tail: Vec::new(),
            buf: vec![Complex64::new(0.0, 0.0); segment_len],
        })
    }

    pub fn push(&mut self, chunk: &[f64]) {
        self.tail.extend_from_slice(chunk);
        let n = self.segment_len;
        let mut start = 0usize;
        while start + n <= self.tail.len() {
            let seg = &self.tail[start..start + n];
            let mean = seg.iter().sum::<f64>() / n as f64;
            for (b, (&s, &w)) in self.buf.iter_mut().zip(seg.iter().zip(&self.window)) {
                *b = Complex64::new((s - mean) * w, 0.0);
            }
            self.fft.process(&mut self.buf);
            for (a, c) in self.accum.iter_mut().zip(self.buf.iter()) {
                *a += c.norm_sqr();
            }
            self.n_segments += 1;
            start += self.hop;
        }
        self.tail.drain(..start);
    }

    pub fn segments(&self) -> u64 {
        self.n_segments
    }

    pub fn finalize(&self, fs: f64) -> Result<Spectrum, DspError> {
        if self.n_segments == 0 {
            return Err(DspError::TraceTooShort { len: self.tail.len(), need: self.segment_len });
        }
        let n = self.segment_len;
        let norm = 1.0 / (fs * self.window_sumsq * self.n_segments as f64);
        let mut values = Vec::with_capacity(n / 2 + 1);
        for (k, &a) in self.accum.iter().enumerate() {
            let one_sided = if k == 0 || (n % 2 == 0 && k == n / 2) { 1.0 } else { 2.0 };
            values.push(a * norm * one_sided);
        }
        let frequencies = (0..=n / 2).map(|k| k as f64 * fs / n as f64).collect();
        // Hann equivalent noise bandwidth.
        let rbw = 1.5 * fs / n as f64;
        Ok(Spectrum::new(frequencies, values, rbw, SpectrumUnit::VoltsSquaredPerHz)?)
    }
}
