//! Detector characterization calculators: noise densities, shot-noise
//! current density, equivalent transimpedance, QCNR, NEP, CMRR and the
//! 3 dB bandwidth measurement.

use thiserror::Error;

use crate::dsp::{self, DspError};
use crate::sigio::{NoiseTrace, Spectrum};

/// Elementary charge, exact 2019 SI value, in coulombs.
pub const ELECTRON_CHARGE: f64 = 1.602_176_634e-19;

#[derive(Debug, Error)]
pub enum DetcharError {
    #[error("argument out of domain: {0}")]
    Domain(String),
    #[error("electronic noise exceeds measured noise (u_E > u_M)")]
    ElectronicExceedsMeasured,
    #[error("quantum variance is not positive after subtraction")]
    NonPositiveQuantumVariance,
    #[error("sample rates differ: {0} vs {1}")]
    RateMismatch(f64, f64),
    #[error("spectrum never crosses -3 dB within its span")]
    NoThreeDbPoint,
    #[error("modulation frequency {0} Hz outside spectrum span")]
    FrequencyOutsideSpan(f64),
    #[error(transparent)]
    Dsp(#[from] DspError),
}

/// Characterization summary of a balanced homodyne detector.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct DetectorReport {
    /// Measured output-voltage noise density, V/sqrt(Hz).
    pub u_m: f64,
    /// Electronic output-voltage noise density, V/sqrt(Hz).
    pub u_e: f64,
    /// Shot-noise output-voltage density `sqrt(u_m^2 - u_e^2)`, V/sqrt(Hz).
    pub u_q: f64,
    /// Shot-noise input-current density, A/sqrt(Hz).
    pub i_q: f64,
    /// Equivalent electronic input-current density, A/sqrt(Hz).
    pub i_e: f64,
    /// Photoelectron current, A.
    pub photocurrent: f64,
    /// Equivalent electronic photocurrent, A.
    pub equivalent_electronic_current: f64,
    /// Equivalent transimpedance, ohms.
    pub transimpedance: f64,
    /// Quantum-to-classical-noise ratio, dB.
    pub qcnr_db: f64,
    /// Noise equivalent power, W/sqrt(Hz).
    pub nep: f64,
    /// 3 dB bandwidth, Hz.
    pub f_3db: f64,
    /// Photodiode responsivity, A/W.
    pub responsivity: f64,
}

/// Output-voltage noise density from a power reading:
/// `u = sqrt(10^(p/10) * 1e-3 * impedance / rbw)`.
pub fn dbm_to_density(p_dbm: f64, rbw: f64, impedance: f64) -> Result<f64, DetcharError> {
    if !(rbw > 0.0) || !(impedance > 0.0) {
        return Err(DetcharError::Domain(format!("rbw={rbw}, impedance={impedance} must be positive")));
    }
    Ok((10f64.powf(p_dbm / 10.0) * 1e-3 * impedance / rbw).sqrt())
}

/// Exact inverse of [`dbm_to_density`].
pub fn density_to_dbm(u: f64, rbw: f64, impedance: f64) -> Result<f64, DetcharError> {
    if !(u > 0.0) {
        return Err(DetcharError::Domain(format!("density must be positive, got {u}")));
    }
    if !(rbw > 0.0) || !(impedance > 0.0) {
        return Err(DetcharError::Domain(format!("rbw={rbw}, impedance={impedance} must be positive")));
    }
    Ok(10.0 * (u * u / impedance * rbw / 1e-3).log10())
}

/// Shot-noise current density of a balanced pair at the given photoelectron
/// current: `i_q = sqrt(2q * 2I)`.
pub fn shot_current_density(photocurrent: f64) -> Result<f64, DetcharError> {
    if photocurrent < 0.0 {
        return Err(DetcharError::Domain(format!("photocurrent must be non-negative, got {photocurrent}")));
    }
    Ok((2.0 * ELECTRON_CHARGE * 2.0 * photocurrent).sqrt())
}

/// Equivalent transimpedance `R_F = sqrt(u_M^2 - u_E^2) / i_Q`.
pub fn equivalent_transimpedance(u_m: f64, u_e: f64, i_q: f64) -> Result<f64, DetcharError> {
    if u_m < u_e {
        return Err(DetcharError::ElectronicExceedsMeasured);
    }
    if !(i_q > 0.0) {
        return Err(DetcharError::Domain(format!("i_q must be positive, got {i_q}")));
    }
    Ok((u_m * u_m - u_e * u_e).sqrt() / i_q)
}

/// `QCNR = 10 * log10(var_Q / var_E)` in dB.
pub fn qcnr_from_variances(var_q: f64, var_e: f64) -> Result<f64, DetcharError> {
    if !(var_q > 0.0) || !(var_e > 0.0) {
        return Err(DetcharError::Domain(format!("variances must be positive, got {var_q}, {var_e}")));
    }
    Ok(10.0 * (var_q / var_e).log10())
}

/// Bandwidth-matched QCNR: both traces are low-passed at `f_cut`, the
/// electronic variance is subtracted from the measured variance to isolate
/// the quantum variance, and the ratio is returned in dB.
pub fn qcnr_from_traces(
    measured: &NoiseTrace,
    electronic: &NoiseTrace,
    f_cut: f64,
) -> Result<f64, DetcharError> {
    if measured.sample_rate != electronic.sample_rate {
        return Err(DetcharError::RateMismatch(measured.sample_rate, electronic.sample_rate));
    }
    let lpf = dsp::design_lowpass(f_cut, measured.sample_rate, 255)?;
    let fm = dsp::apply_fir(measured, &lpf)?;
    let fe = dsp::apply_fir(electronic, &lpf)?;
    let var = |t: &NoiseTrace| {
        let mean = t.samples.iter().sum::<f64>() / t.samples.len() as f64;
        t.samples.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / t.samples.len() as f64
    };
    let var_m = var(&fm);
    let var_e = var(&fe);
    let var_q = var_m - var_e;
    if !(var_q > 0.0) {
        return Err(DetcharError::NonPositiveQuantumVariance);
    }
    qcnr_from_variances(var_q, var_e)
}

/// Noise equivalent power `sqrt(2q * 2I_E) / responsivity`.
pub fn nep(equiv_electronic_current: f64, responsivity: f64) -> Result<f64, DetcharError> {
    if !(responsivity > 0.0) {
        return Err(DetcharError::Domain(format!("responsivity must be positive, got {responsivity}")));
    }
    if equiv_electronic_current < 0.0 {
        return Err(DetcharError::Domain("electronic current must be non-negative".into()));
    }
    Ok((2.0 * ELECTRON_CHARGE * 2.0 * equiv_electronic_current).sqrt() / responsivity)
}

/// Photocurrent whose shot noise equals the electronic noise density:
/// solves `u_E / R_F = sqrt(2q * 2I_E)` for `I_E`.
pub fn equivalent_electronic_current(u_e: f64, transimpedance: f64) -> Result<f64, DetcharError> {
    if !(transimpedance > 0.0) {
        return Err(DetcharError::Domain(format!("transimpedance must be positive, got {transimpedance}")));
    }
    if u_e < 0.0 {
        return Err(DetcharError::Domain("density must be non-negative".into()));
    }
    let i_density = u_e / transimpedance;
    Ok(i_density * i_density / (4.0 * ELECTRON_CHARGE))
}

/// Lowest frequency at which the smoothed spectrum falls 3 dB below its mean
/// level over `reference_band`. Smoothing is a 51-point moving median;
/// the crossing is linearly interpolated between samples.
pub fn bandwidth_3db(spec: &Spectrum, reference_band: (f64, f64)) -> Result<f64, DetcharError> {
    let (f_lo, f_hi) = reference_band;
    if f_lo >= f_hi || f_lo < spec.frequencies[0] || f_hi > spec.max_frequency() {
        return Err(DetcharError::Domain(format!(
            "reference band [{f_lo}, {f_hi}] outside spectrum span"
        )));
    }
    let db = spec.values_db();
    let smooth = moving_median(&db, 51);
    let mut ref_sum = 0.0;
    let mut ref_n = 0u32;
    for (f, v) in spec.frequencies.iter().zip(&smooth) {
        if *f >= f_lo && *f <= f_hi {
            ref_sum += v;
            ref_n += 1;
        }
    }
    if ref_n == 0 {
        return Err(DetcharError::Domain("reference band contains no spectrum points".into()));
    }
    let threshold = ref_sum / ref_n as f64 - 3.0;
    for i in 1..smooth.len() {
        if smooth[i] <= threshold && smooth[i - 1] > threshold {
            let (f0, f1) = (spec.frequencies[i - 1], spec.frequencies[i]);
            let (v0, v1) = (smooth[i - 1], smooth[i]);
            let t = (v0 - threshold) / (v0 - v1);
            return Ok(f0 + t * (f1 - f0));
        }
    }
    Err(DetcharError::NoThreeDbPoint)
}

fn moving_median(x: &[f64], window: usize) -> Vec<f64> {
    let half = window / 2;
    let n = x.len();
    let mut out = Vec::with_capacity(n);
    let mut scratch: Vec<f64> = Vec::with_capacity(window);
    for i in 0..n {
        let lo = i.saturating_sub(half);
        let hi = (i + half + 1).min(n);
        scratch.clear();
        scratch.extend_from_slice(&x[lo..hi]);
        scratch.sort_by(|a, b| a.partial_cmp(b).unwrap());
        out.push(scratch[scratch.len() / 2]);
    }
    out
}

/// Common-mode rejection ratio: difference in dB between the peak power near
/// `f_mod` (within +-3 RBW bins) in the unbalanced vs balanced spectrum.
pub fn cmrr_from_spectra(
    balanced: &Spectrum,
    unbalanced: &Spectrum,
    f_mod: f64,
) -> Result<f64, DetcharError> {
    let peak = |s: &Spectrum| -> Result<f64, DetcharError> {
        if f_mod < s.frequencies[0] || f_mod > s.max_frequency() {
            return Err(DetcharError::FrequencyOutsideSpan(f_mod));
        }
        let lo = f_mod - 3.0 * s.rbw;
        let hi = f_mod + 3.0 * s.rbw;
        let db = s.values_db();
        let best = s
            .frequencies
            .iter()
            .zip(&db)
            .filter(|(f, _)| **f >= lo && **f <= hi)
            .map(|(_, v)| *v)
            .fold(f64::NEG_INFINITY, f64::max);
        if best == f64::NEG_INFINITY {
            return Err(DetcharError::FrequencyOutsideSpan(f_mod));
        }
        Ok(best)
    };
    Ok(peak(unbalanced)? - peak(balanced)?)
}
