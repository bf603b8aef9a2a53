//! Generative stand-in for the entropy source: spectrally shaped Gaussian
//! shot + electronic noise, plus the saturating ADC model.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use thiserror::Error;

use crate::seeding::{purpose, substream};
use crate::sigio::{AdcConfig, DigitizedTrace, NoiseTrace};

/// Samples per generation chunk; chunk `k` is a pure function of
/// `(seed, component, k)`, so chunks can be produced in any order.
pub const CHUNK_LEN: usize = 1 << 20;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid detector model: {0}")]
    BadModel(String),
    #[error("count must be positive")]
    ZeroCount,
}

/// Frequency response of the simulated detector chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseShape {
    SinglePole,
    TwoPole,
}

/// Generative parameters of the simulated balanced homodyne detector.
///
/// The quantum (shot-noise) component is shaped by `shape` with corner
/// `f_3db`; the electronic component is white. Both are band-limited by a
/// brick-wall output filter at `f_lpf` and normalized so the generated trace
/// standard deviations equal `sigma_q` / `sigma_e`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DetectorModel {
    /// In-band standard deviation of the quantum noise, volts.
    pub sigma_q: f64,
    /// In-band standard deviation of the electronic noise, volts.
    pub sigma_e: f64,
    /// Detector 3 dB bandwidth, Hz.
    pub f_3db: f64,
    /// Output (anti-alias) brick-wall corner, Hz.
    pub f_lpf: f64,
    pub shape: ResponseShape,
    pub sample_rate: f64,
    pub seed: u64,
}

impl DetectorModel {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.sigma_q > 0.0) {
            return Err(SimError::BadModel(format!("sigma_q must be positive, got {}", self.sigma_q)));
        }
        if !(self.sigma_e >= 0.0) {
            return Err(SimError::BadModel(format!("sigma_e must be non-negative, got {}", self.sigma_e)));
        }
        if !(self.f_3db > 0.0 && self.f_3db <= self.f_lpf && self.f_lpf < self.sample_rate / 2.0) {
            return Err(SimError::BadModel(format!(
                "need 0 < f_3db <= f_lpf < rate/2, got f_3db={}, f_lpf={}, rate={}",
                self.f_3db, self.f_lpf, self.sample_rate
            )));
        }
        Ok(())
    }

    /// Programmed quantum-to-classical-noise ratio `20*log10(sigma_q/sigma_e)`.
    pub fn programmed_qcnr_db(&self) -> f64 {
        20.0 * (self.sigma_q / self.sigma_e).log10()
    }

    /// Set `sigma_e` from a target QCNR in dB.
    pub fn with_qcnr_db(mut self, qcnr_db: f64) -> Self {
        self.sigma_e = self.sigma_q * 10f64.powf(-qcnr_db / 20.0);
        self
    }
}

impl Default for DetectorModel {
    /// The broadband source of the reference experiment: 39.3 mV quantum
    /// noise, 9.51 dB QCNR, two-pole 2.4 GHz response sampled at 6.25 GS/s.
    fn default() -> Self {
        DetectorModel {
            sigma_q: 39.3e-3,
            sigma_e: 39.3e-3 * 10f64.powf(-9.51 / 20.0),
            f_3db: 2.4e9,
            f_lpf: 3.12e9,
            shape: ResponseShape::TwoPole,
            sample_rate: 6.25e9,
            seed: 0,
        }
    }
}

/// sqrt(sqrt(2) - 1): ratio of the -3 dB frequency to the pole corner for a
/// two-pole power response. The corner is placed so the realized -3 dB
/// bandwidth equals `f_3db` exactly.
const TWO_POLE_CORNER_SCALE: f64 = 0.643_594_252_905_582_6;

fn shape_magnitude(model: &DetectorModel, f: f64, component: u64) -> f64 {
    if f > model.f_lpf {
        return 0.0;
    }
    if component == purpose::ELECTRONIC {
        return 1.0;
    }
    match model.shape {
        ResponseShape::SinglePole => 1.0 / (1.0 + (f / model.f_3db).powi(2)).sqrt(),
        ResponseShape::TwoPole => {
            let corner = model.f_3db / TWO_POLE_CORNER_SCALE;
            1.0 / (1.0 + (f / corner).powi(2))
        }
    }
}

/// One full chunk of a single component, deterministic in
/// `(model.seed, component, chunk_index)`.
fn component_chunk(model: &DetectorModel, component: u64, chunk_index: u64, sigma: f64) -> Vec<f64> {
    let n = CHUNK_LEN;
    if sigma == 0.0 {
        return vec![0.0; n];
    }
    let mut rng = substream(model.seed, component, chunk_index);
    let mut buf: Vec<Complex64> = (0..n)
        .map(|_| Complex64::new(<StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng), 0.0))
        .collect();

    let mut planner = FftPlanner::<f64>::new();
    planner.plan_fft_forward(n).process(&mut buf);

    let fs = model.sample_rate;
    let mut sumsq = 0.0f64;
    for (k, c) in buf.iter_mut().enumerate() {
        let f = if k <= n / 2 { k as f64 } else { (n - k) as f64 } * fs / n as f64;
        let m = shape_magnitude(model, f, component);
        *c *= m;
        sumsq += m * m;
    }
    planner.plan_fft_inverse(n).process(&mut buf);

    // ifft(fft(x)) carries an n factor; the coloring gain is sqrt(sumsq/n).
    let scale = sigma / (sumsq / n as f64).sqrt() / n as f64;
    buf.into_iter().map(|c| c.re * scale).collect()
}

/// Full chunk of (measured, electronic): the measured samples are the sum of
/// the electronic component and an independent shaped quantum component.
pub fn generate_chunk(model: &DetectorModel, chunk_index: u64) -> (Vec<f64>, Vec<f64>) {
    let electronic = component_chunk(model, purpose::ELECTRONIC, chunk_index, model.sigma_e);
    let quantum = component_chunk(model, purpose::QUANTUM, chunk_index, model.sigma_q);
    let measured = quantum.iter().zip(&electronic).map(|(q, e)| q + e).collect();
    (measured, electronic)
}

/// Generate `count` samples of measured and electronic noise.
///
/// Chunks are produced independently (in parallel when a rayon pool is
/// available) and assembled in index order, so output is identical for any
/// thread count and `generate(model, n1)` is a prefix of
/// `generate(model, n2)` whenever `n1 <= n2`.
pub fn generate(model: &DetectorModel, count: usize) -> Result<(NoiseTrace, NoiseTrace), SimError> {
    model.validate()?;
    if count == 0 {
        return Err(SimError::ZeroCount);
    }
    let n_chunks = count.div_ceil(CHUNK_LEN) as u64;
    let chunks: Vec<(Vec<f64>, Vec<f64>)> =
        (0..n_chunks).into_par_iter().map(|k| generate_chunk(model, k)).collect();

    let mut measured = Vec::with_capacity(count);
    let mut electronic = Vec::with_capacity(count);
    for (m, e) in chunks {
        let take = (count - measured.len()).min(m.len());
        measured.extend_from_slice(&m[..take]);
        electronic.extend_from_slice(&e[..take]);
        if measured.len() == count {
            break;
        }
    }
    Ok((
        NoiseTrace { samples: measured, sample_rate: model.sample_rate, label: "measured".into() },
        NoiseTrace { samples: electronic, sample_rate: model.sample_rate, label: "electronic".into() },
    ))
}

/// Saturating mid-riser quantization:
/// `code = clamp(floor((v + S)/delta), 0, 2^n - 1) - 2^(n-1)`.
/// Saturation is counted, never an error.
pub fn adc_quantize(trace: &NoiseTrace, adc: AdcConfig) -> DigitizedTrace {
    let delta = adc.bin_width();
    let levels = adc.levels() as i64;
    let half = levels / 2;
    let codes: Vec<i16> = trace
        .samples
        .iter()
        .map(|&v| {
            let bin = ((v + adc.range) / delta).floor() as i64;
            (bin.clamp(0, levels - 1) - half) as i16
        })
        .collect();
    DigitizedTrace::new(codes, adc, trace.sample_rate).expect("clamped codes are always in range")
}
