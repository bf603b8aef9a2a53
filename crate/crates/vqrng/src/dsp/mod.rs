//! Spectral estimation, FIR filtering, equalizer design, autocorrelation and
//! distribution moments.

mod design;
mod welch;

pub use design::{design_equalizer, design_lowpass};
pub use welch::{welch_psd, WelchAccumulator};

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use thiserror::Error;

use crate::sigio::{NoiseTrace, Trace};

#[derive(Debug, Error)]
pub enum DspError {
    #[error("trace too short: {len} samples, need at least {need}")]
    TraceTooShort { len: usize, need: usize },
    #[error("overlap must be in [0, 0.9], got {0}")]
    BadOverlap(f64),
    #[error("cutoff must satisfy 0 < f_c < sample_rate/2, got f_c={fc}, rate={rate}")]
    BadCutoff { fc: f64, rate: f64 },
    #[error("tap count must be odd and positive, got {0}")]
    BadTaps(usize),
    #[error("PSD span {span} Hz insufficient, need at least {need} Hz")]
    SpanInsufficient { span: f64, need: f64 },
    #[error("PSD is all zero")]
    ZeroPsd,
    #[error("max_lag {max_lag} too large for {len} samples (must be < len/10)")]
    LagTooLarge { max_lag: usize, len: usize },
    #[error("zero-variance trace")]
    ZeroVariance,
    #[error(transparent)]
    Sigio(#[from] crate::sigio::SigioError),
}

/// Finite impulse response filter.
#[derive(Debug, Clone, PartialEq)]
pub struct FirFilter {
    pub taps: Vec<f64>,
    pub description: String,
}

impl FirFilter {
    pub fn new(taps: Vec<f64>, description: impl Into<String>) -> Result<Self, DspError> {
        if taps.is_empty() || taps.iter().any(|t| !t.is_finite()) {
            return Err(DspError::BadTaps(taps.len()));
        }
        Ok(Self { taps, description: description.into() })
    }

    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    /// Group delay in samples for the linear-phase designs in this crate.
    pub fn group_delay(&self) -> f64 {
        (self.taps.len() as f64 - 1.0) / 2.0
    }

    /// Magnitude of the frequency response at `f` for a given sample rate.
    pub fn magnitude_at(&self, sample_rate: f64, f: f64) -> f64 {
        let w = 2.0 * std::f64::consts::PI * f / sample_rate;
        let (mut re, mut im) = (0.0f64, 0.0f64);
        for (n, &h) in self.taps.iter().enumerate() {
            let phi = w * n as f64;
            re += h * phi.cos();
            im -= h * phi.sin();
        }
        (re * re + im * im).sqrt()
    }

    /// Convolve two filters into one (cascade equivalence).
    pub fn cascade(&self, other: &FirFilter) -> FirFilter {
        let mut taps = vec![0.0; self.len() + other.len() - 1];
        for (i, &a) in self.taps.iter().enumerate() {
            for (j, &b) in other.taps.iter().enumerate() {
                taps[i + j] += a * b;
            }
        }
        FirFilter { taps, description: format!("{} * {}", self.description, other.description) }
    }
}

/// Linear convolution of `trace` with `filt`, keeping only the fully-valid
/// region: `(len-1)/2` transient samples are trimmed from each end, so the
/// output is center-aligned with the input and `taps-1` samples shorter.
pub fn apply_fir(trace: &NoiseTrace, filt: &FirFilter) -> Result<NoiseTrace, DspError> {
    let n = trace.samples.len();
    let l = filt.taps.len();
    if n <= l {
        return Err(DspError::TraceTooShort { len: n, need: l + 1 });
    }
    let samples = if l <= 32 || n < 4 * l {
        convolve_valid_direct(&trace.samples, &filt.taps)
    } else {
        convolve_valid_fft(&trace.samples, &filt.taps)
    };
    Ok(NoiseTrace {
        samples,
        sample_rate: trace.sample_rate,
        label: trace.label.clone(),
    })
}

fn convolve_valid_direct(x: &[f64], h: &[f64]) -> Vec<f64> {
    let n = x.len();
    let l = h.len();
    let mut y = vec![0.0; n - l + 1];
    for (i, out) in y.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (k, &hk) in h.iter().enumerate() {
            acc += hk * x[i + l - 1 - k];
        }
        *out = acc;
    }
    y
}

/// Overlap-add convolution; returns the valid region only. Blocks are summed
/// in index order so the result is independent of execution interleaving.
fn convolve_valid_fft(x: &[f64], h: &[f64]) -> Vec<f64> {
    let n = x.len();
    let l = h.len();
    let fft_len = (2 * l).max(1 << 15).next_power_of_two();
    let block = fft_len - (l - 1);

    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(fft_len);
    let inv = planner.plan_fft_inverse(fft_len);

    let mut hf = vec![Complex64::new(0.0, 0.0); fft_len];
    for (dst, &src) in hf.iter_mut().zip(h.iter()) {
        *dst = Complex64::new(src, 0.0);
    }
    fwd.process(&mut hf);

    let full_len = n + l - 1;
    let mut full = vec![0.0f64; full_len];
    let mut buf = vec![Complex64::new(0.0, 0.0); fft_len];
    let scale = 1.0 / fft_len as f64;

    let mut start = 0usize;
    while start < n {
        let take = block.min(n - start);
        for (i, slot) in buf.iter_mut().enumerate() {
            let v = if i < take { x[start + i] } else { 0.0 };
            *slot = Complex64::new(v, 0.0);
        }
        fwd.process(&mut buf);
        for (b, hc) in buf.iter_mut().zip(hf.iter()) {
            *b *= hc;
        }
        inv.process(&mut buf);
        let out_end = (start + take + l - 1).min(full_len);
        for (j, slot) in full[start..out_end].iter_mut().enumerate() {
            *slot += buf[j].re * scale;
        }
        start += take;
    }
    // reuse the buffer instead of copying the valid region
    full.drain(..l - 1);
    full.truncate(n - l + 1);
    full
}

/// Normalized sample autocorrelation coefficients for lags `0..=max_lag`
/// (coefficient 0 is exactly 1). Uses a segmented FFT path for long traces.
pub fn autocorrelation(trace: &Trace, max_lag: usize) -> Result<Vec<f64>, DspError> {
    let analog;
    let x: &[f64] = match trace {
        Trace::Analog(t) => &t.samples,
        Trace::Digitized(_) => {
            analog = trace.to_analog();
            &analog.samples
        }
    };
    let n = x.len();
    if max_lag >= n.div_ceil(10) {
        return Err(DspError::LagTooLarge { max_lag, len: n });
    }
    let mean = x.iter().sum::<f64>() / n as f64;

    let raw = if n > (1 << 16) {
        lag_products_fft(x, mean, max_lag)
    } else {
        lag_products_direct(x, mean, max_lag)
    };
    let var = raw[0];
    if !(var > 0.0) {
        return Err(DspError::ZeroVariance);
    }
    Ok(raw.iter().map(|&r| r / var).collect())
}

fn lag_products_direct(x: &[f64], mean: f64, max_lag: usize) -> Vec<f64> {
    let n = x.len();
    let mut out = vec![0.0; max_lag + 1];
    for (k, slot) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for i in 0..n - k {
            acc += (x[i] - mean) * (x[i + k] - mean);
        }
        *slot = acc;
    }
    out
}

/// Block cross-spectral accumulation of lag products: each block of length B
/// is correlated against the B+K samples starting at the same offset, which
/// together cover every product pair exactly once.
fn lag_products_fft(x: &[f64], mean: f64, max_lag: usize) -> Vec<f64> {
    let n = x.len();
    let k = max_lag;
    let fft_len = ((k + 1) * 8).max(1 << 13).next_power_of_two();
    let block = fft_len - k;

    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(fft_len);
    let inv = planner.plan_fft_inverse(fft_len);

    let mut out = vec![0.0f64; k + 1];
    let mut a = vec![Complex64::new(0.0, 0.0); fft_len];
    let mut b = vec![Complex64::new(0.0, 0.0); fft_len];
    let scale = 1.0 / fft_len as f64;

    let mut start = 0usize;
    while start < n {
        let take = block.min(n - start);
        let ext = (take + k).min(n - start);
        for (i, slot) in a.iter_mut().enumerate() {
            let v = if i < take { x[start + i] - mean } else { 0.0 };
            *slot = Complex64::new(v, 0.0);
        }
        for (i, slot) in b.iter_mut().enumerate() {
            let v = if i < ext { x[start + i] - mean } else { 0.0 };
            *slot = Complex64::new(v, 0.0);
        }
        fwd.process(&mut a);
        fwd.process(&mut b);
        for (ai, bi) in a.iter_mut().zip(b.iter()) {
            *ai = ai.conj() * bi;
        }
        inv.process(&mut a);
        for (lag, slot) in out.iter_mut().enumerate() {
            *slot += a[lag].re * scale;
        }
        start += take;
    }
    out
}

/// Estimated (mean, std, skewness, kurtosis); kurtosis is non-excess
/// (Gaussian -> 3). Standard central-moment estimators with 1/N weights.
pub fn moments(trace: &Trace) -> Result<(f64, f64, f64, f64), DspError> {
    let analog;
    let x: &[f64] = match trace {
        Trace::Analog(t) => &t.samples,
        Trace::Digitized(_) => {
            analog = trace.to_analog();
            &analog.samples
        }
    };
    let n = x.len();
    if n < 4 {
        return Err(DspError::TraceTooShort { len: n, need: 4 });
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let (mut m2, mut m3, mut m4) = (0.0f64, 0.0f64, 0.0f64);
    for &v in x {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    let nf = n as f64;
    m2 /= nf;
    m3 /= nf;
    m4 /= nf;
    if !(m2 > 0.0) {
        return Err(DspError::ZeroVariance);
    }
    Ok((mean, m2.sqrt(), m3 / m2.powf(1.5), m4 / (m2 * m2)))
}

/// Fixed-width histogram over `[lo, hi)`; out-of-range samples land in the
/// edge bins. Returns (bin centers, counts).
pub fn histogram(x: &[f64], lo: f64, hi: f64, nbins: usize) -> (Vec<f64>, Vec<u64>) {
    assert!(nbins > 0 && hi > lo);
    let width = (hi - lo) / nbins as f64;
    let mut counts = vec![0u64; nbins];
    for &v in x {
        let idx = (((v - lo) / width).floor() as i64).clamp(0, nbins as i64 - 1) as usize;
        counts[idx] += 1;
    }
    let centers = (0..nbins).map(|i| lo + (i as f64 + 0.5) * width).collect();
    (centers, counts)
}
