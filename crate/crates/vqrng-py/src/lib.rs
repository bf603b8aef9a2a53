//! Python bindings for the main vqrng types and operations: detector
//! calculators, noise generation, ADC quantization, conditional min-entropy
//! estimation, range optimization, Toeplitz extraction and randomness tests.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyBytes;

use vqrng::entropy::{self, EntropyConfig, Objective};
use vqrng::extract::{self, ToeplitzSpec};
use vqrng::noisesim::{self, DetectorModel, ResponseShape};
use vqrng::sigio::{AdcConfig, BitStream, DigitizedTrace, NoiseTrace, Trace};
use vqrng::{detchar, dsp, rndtest};

fn err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn adc(bits: u8, range: f64) -> PyResult<AdcConfig> {
    AdcConfig::new(bits, range).map_err(err)
}

fn parse_shape(shape: &str) -> PyResult<ResponseShape> {
    match shape {
        "single_pole" => Ok(ResponseShape::SinglePole),
        "two_pole" => Ok(ResponseShape::TwoPole),
        other => Err(PyValueError::new_err(format!("unknown shape {other:?}"))),
    }
}

#[pyfunction]
fn dbm_to_density(p_dbm: f64, rbw: f64, impedance: f64) -> PyResult<f64> {
    detchar::dbm_to_density(p_dbm, rbw, impedance).map_err(err)
}

#[pyfunction]
fn density_to_dbm(u: f64, rbw: f64, impedance: f64) -> PyResult<f64> {
    detchar::density_to_dbm(u, rbw, impedance).map_err(err)
}

#[pyfunction]
fn shot_current_density(photocurrent: f64) -> PyResult<f64> {
    detchar::shot_current_density(photocurrent).map_err(err)
}

#[pyfunction]
fn equivalent_transimpedance(u_m: f64, u_e: f64, i_q: f64) -> PyResult<f64> {
    detchar::equivalent_transimpedance(u_m, u_e, i_q).map_err(err)
}

#[pyfunction]
fn qcnr_from_variances(var_q: f64, var_e: f64) -> PyResult<f64> {
    detchar::qcnr_from_variances(var_q, var_e).map_err(err)
}

#[pyfunction]
fn nep(equiv_electronic_current: f64, responsivity: f64) -> PyResult<f64> {
    detchar::nep(equiv_electronic_current, responsivity).map_err(err)
}

#[pyfunction]
fn equivalent_electronic_current(u_e: f64, transimpedance: f64) -> PyResult<f64> {
    detchar::equivalent_electronic_current(u_e, transimpedance).map_err(err)
}

/// Generate (measured, electronic) noise traces from the detector model.
#[pyfunction]
#[pyo3(signature = (count, seed, sigma_q=39.3e-3, sigma_e=13.15e-3, f_3db=2.4e9,
                    f_lpf=3.12e9, sample_rate=6.25e9, shape="two_pole"))]
#[allow(clippy::too_many_arguments)]
fn generate_noise(
    count: usize,
    seed: u64,
    sigma_q: f64,
    sigma_e: f64,
    f_3db: f64,
    f_lpf: f64,
    sample_rate: f64,
    shape: &str,
) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let model = DetectorModel {
        sigma_q,
        sigma_e,
        f_3db,
        f_lpf,
        shape: parse_shape(shape)?,
        sample_rate,
        seed,
    };
    let (m, e) = noisesim::generate(&model, count).map_err(err)?;
    Ok((m.samples, e.samples))
}

/// Quantize analog samples; returns (codes, saturation_count).
#[pyfunction]
fn adc_quantize(samples: Vec<f64>, bits: u8, range: f64) -> PyResult<(Vec<i16>, u64)> {
    let trace = NoiseTrace::new(samples, 1.0, "py").map_err(err)?;
    let d = noisesim::adc_quantize(&trace, adc(bits, range)?);
    let sat = d.saturation_count;
    Ok((d.codes, sat))
}

/// Pack ADC codes into bits (offset-binary, LSB-first); returns
/// (packed bytes, bit length).
#[pyfunction]
fn pack_codes_to_bits(
    py: Python<'_>,
    codes: Vec<i16>,
    bits: u8,
    range: f64,
    bits_per_sample: u8,
) -> PyResult<(Py<PyBytes>, u64)> {
    let d = DigitizedTrace::new(codes, adc(bits, range)?, 1.0).map_err(err)?;
    let packed = vqrng::sigio::pack_codes_to_bits(&d, bits_per_sample).map_err(err)?;
    Ok((PyBytes::new(py, packed.as_bytes()).unbind(), packed.len_bits()))
}

#[pyfunction]
#[pyo3(signature = (sigma_q, sigma_e, bits, range, beta=5.0, tolerance=1e-8))]
fn avg_min_entropy(
    sigma_q: f64,
    sigma_e: f64,
    bits: u8,
    range: f64,
    beta: f64,
    tolerance: f64,
) -> PyResult<f64> {
    let mut cfg = EntropyConfig::new(sigma_q, sigma_e, adc(bits, range)?).map_err(err)?;
    cfg.e_bound_multiplier = beta;
    cfg.integration_tolerance = tolerance;
    entropy::avg_min_entropy(&cfg).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (sigma_q, sigma_e, bits, range, beta=5.0))]
fn worst_min_entropy(sigma_q: f64, sigma_e: f64, bits: u8, range: f64, beta: f64) -> PyResult<f64> {
    let mut cfg = EntropyConfig::new(sigma_q, sigma_e, adc(bits, range)?).map_err(err)?;
    cfg.e_bound_multiplier = beta;
    entropy::worst_min_entropy(&cfg).map_err(err)
}

/// Per-ratio (ratio, h_avg, h_worst) rows.
#[pyfunction]
fn sweep_range(
    sigma_q: f64,
    sigma_e: f64,
    bits: u8,
    ratios: Vec<f64>,
) -> PyResult<Vec<(f64, f64, f64)>> {
    let pts = entropy::sweep_range(sigma_q, sigma_e, bits, &ratios).map_err(err)?;
    Ok(pts.into_iter().map(|p| (p.ratio, p.h_avg, p.h_worst)).collect())
}

/// Returns (ratio, range, entropy_bits, refined).
#[pyfunction]
#[pyo3(signature = (sigma_q, sigma_e, bits, objective="avg"))]
fn optimal_range(
    sigma_q: f64,
    sigma_e: f64,
    bits: u8,
    objective: &str,
) -> PyResult<(f64, f64, f64, bool)> {
    let obj = match objective {
        "avg" => Objective::Avg,
        "worst" => Objective::Worst,
        other => return Err(PyValueError::new_err(format!("unknown objective {other:?}"))),
    };
    let opt = entropy::optimal_range(sigma_q, sigma_e, bits, obj).map_err(err)?;
    Ok((opt.ratio, opt.range, opt.entropy_bits, opt.refined))
}

#[pyfunction]
fn extractable_rate(h_bits_per_sample: f64, sample_rate: f64) -> f64 {
    entropy::extractable_rate(h_bits_per_sample, sample_rate)
}

/// Standard deviations (sigma_m, sigma_e, sigma_q) of a trace pair.
#[pyfunction]
fn estimate_sigmas(measured: Vec<f64>, electronic: Vec<f64>) -> PyResult<(f64, f64, f64)> {
    let m = Trace::Analog(NoiseTrace::new(measured, 1.0, "m").map_err(err)?);
    let e = Trace::Analog(NoiseTrace::new(electronic, 1.0, "e").map_err(err)?);
    let s = entropy::estimate_sigmas(&m, &e).map_err(err)?;
    Ok((s.sigma_m, s.sigma_e, s.sigma_q))
}

#[pyfunction]
fn output_length(n_in: u64, h_min_per_sample: f64, bits_per_sample: u8, epsilon: f64) -> PyResult<u64> {
    extract::output_length(n_in, h_min_per_sample, bits_per_sample, epsilon).map_err(err)
}

/// Toeplitz-hash a packed bitstream with a PRG-expanded 64-bit seed.
/// Returns (packed output bytes, output bit length, blocks, discarded bits).
#[pyfunction]
fn toeplitz_extract(
    py: Python<'_>,
    input: &[u8],
    n_bits: u64,
    n_in: usize,
    m_out: usize,
    seed: u64,
) -> PyResult<(Py<PyBytes>, u64, u64, u64)> {
    let stream = BitStream::from_bytes(input.to_vec(), n_bits);
    let spec = ToeplitzSpec::from_u64_seed(n_in, m_out, seed).map_err(err)?;
    let (out, summary) = extract::extract_stream(&stream, &spec).map_err(err)?;
    Ok((
        PyBytes::new(py, out.as_bytes()).unbind(),
        summary.output_bits,
        summary.blocks,
        summary.discarded_bits,
    ))
}

/// Frequency-test p-value of a 0/1 bit sequence.
#[pyfunction]
fn monobit_p(bits: Vec<u8>) -> PyResult<f64> {
    rndtest::monobit_p(&bits).map_err(err)
}

/// Battery over packed bits: list of (test name, proportion, pass).
#[pyfunction]
#[pyo3(signature = (input, n_bits, sequence_len=1_000_000, alpha=0.01))]
fn run_battery(
    input: &[u8],
    n_bits: u64,
    sequence_len: u64,
    alpha: f64,
) -> PyResult<Vec<(String, f64, bool)>> {
    let stream = BitStream::from_bytes(input.to_vec(), n_bits);
    let report = rndtest::run_battery(&stream, sequence_len, alpha).map_err(err)?;
    Ok(report.streams.into_iter().map(|s| (s.name, s.proportion, s.pass)).collect())
}

/// One-sided Welch PSD; returns (frequencies, values in V^2/Hz).
#[pyfunction]
#[pyo3(signature = (samples, sample_rate, segment_len=4096, overlap=0.5))]
fn welch_psd(
    samples: Vec<f64>,
    sample_rate: f64,
    segment_len: usize,
    overlap: f64,
) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let t = NoiseTrace::new(samples, sample_rate, "py").map_err(err)?;
    let s = dsp::welch_psd(&t, segment_len, overlap, None).map_err(err)?;
    Ok((s.frequencies, s.values))
}

/// Normalized autocorrelation coefficients for lags 0..=max_lag.
#[pyfunction]
fn autocorrelation(samples: Vec<f64>, max_lag: usize) -> PyResult<Vec<f64>> {
    let t = Trace::Analog(NoiseTrace::new(samples, 1.0, "py").map_err(err)?);
    dsp::autocorrelation(&t, max_lag).map_err(err)
}

/// Design an inverse-root-PSD equalizer from a trace and apply it.
#[pyfunction]
#[pyo3(signature = (samples, sample_rate, f_eq, taps=513, floor_db=-40.0, segment_len=4096))]
fn equalize(
    samples: Vec<f64>,
    sample_rate: f64,
    f_eq: f64,
    taps: usize,
    floor_db: f64,
    segment_len: usize,
) -> PyResult<Vec<f64>> {
    let t = NoiseTrace::new(samples, sample_rate, "py").map_err(err)?;
    let psd = dsp::welch_psd(&t, segment_len, 0.5, None).map_err(err)?;
    let filt = dsp::design_equalizer(&psd, f_eq, taps, floor_db).map_err(err)?;
    Ok(dsp::apply_fir(&t, &filt).map_err(err)?.samples)
}

#[pymodule]
fn vqrng_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(dbm_to_density, m)?)?;
    m.add_function(wrap_pyfunction!(density_to_dbm, m)?)?;
    m.add_function(wrap_pyfunction!(shot_current_density, m)?)?;
    m.add_function(wrap_pyfunction!(equivalent_transimpedance, m)?)?;
    m.add_function(wrap_pyfunction!(qcnr_from_variances, m)?)?;
    m.add_function(wrap_pyfunction!(nep, m)?)?;
    m.add_function(wrap_pyfunction!(equivalent_electronic_current, m)?)?;
    m.add_function(wrap_pyfunction!(generate_noise, m)?)?;
    m.add_function(wrap_pyfunction!(adc_quantize, m)?)?;
    m.add_function(wrap_pyfunction!(pack_codes_to_bits, m)?)?;
    m.add_function(wrap_pyfunction!(avg_min_entropy, m)?)?;
    m.add_function(wrap_pyfunction!(worst_min_entropy, m)?)?;
    m.add_function(wrap_pyfunction!(sweep_range, m)?)?;
    m.add_function(wrap_pyfunction!(optimal_range, m)?)?;
    m.add_function(wrap_pyfunction!(extractable_rate, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_sigmas, m)?)?;
    m.add_function(wrap_pyfunction!(output_length, m)?)?;
    m.add_function(wrap_pyfunction!(toeplitz_extract, m)?)?;
    m.add_function(wrap_pyfunction!(monobit_p, m)?)?;
    m.add_function(wrap_pyfunction!(run_battery, m)?)?;
    m.add_function(wrap_pyfunction!(welch_psd, m)?)?;
    m.add_function(wrap_pyfunction!(autocorrelation, m)?)?;
    m.add_function(wrap_pyfunction!(equalize, m)?)?;
    Ok(())
}
