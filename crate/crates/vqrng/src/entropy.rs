//! Conditional min-entropy of the digitized outcome against classical side
//! information, ADC-range optimization, and extractable-rate arithmetic.
//!
//! The measured sample is `m = q + e` with `q ~ N(0, sigma_q)` quantum noise
//! and `e` the classical (electronic) noise an adversary may observe. The
//! average estimator integrates the adversary's best guess over
//! `e ~ N(0, sigma_e)`; the worst-case estimator lets the adversary *set*
//! `e` anywhere in `|e| <= beta * sigma_e`.

use rayon::prelude::*;
use statrs::function::erf::erfc;
use thiserror::Error;

use crate::sigio::{AdcConfig, Trace};

#[derive(Debug, Error)]
pub enum EntropyError {
    #[error("invalid entropy config: {0}")]
    BadConfig(String),
    #[error("quadrature failed to reach relative tolerance {0}")]
    QuadratureNonConvergence(f64),
    #[error("ratios must be positive and ascending")]
    BadRatios,
    #[error("sample rates differ: {0} vs {1}")]
    RateMismatch(f64, f64),
    #[error("electronic std {sigma_e} is not below measured std {sigma_m}")]
    ElectronicExceedsMeasured { sigma_e: f64, sigma_m: f64 },
}

/// Standard normal CDF.
fn phi(x: f64) -> f64 {
    0.5 * erfc(-x * std::f64::consts::FRAC_1_SQRT_2)
}

/// Standard normal survival function `1 - phi(x)`, accurate in the tail.
fn phi_sf(x: f64) -> f64 {
    0.5 * erfc(x * std::f64::consts::FRAC_1_SQRT_2)
}

/// Inputs of a conditional min-entropy evaluation.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EntropyConfig {
    /// Quantum-noise standard deviation, volts.
    pub sigma_q: f64,
    /// Electronic-noise standard deviation, volts.
    pub sigma_e: f64,
    pub adc: AdcConfig,
    /// Worst-case adversary bound: `|e| <= e_bound_multiplier * sigma_e`.
    pub e_bound_multiplier: f64,
    /// Relative quadrature tolerance for the average estimator.
    pub integration_tolerance: f64,
}

impl EntropyConfig {
    pub fn new(sigma_q: f64, sigma_e: f64, adc: AdcConfig) -> Result<Self, EntropyError> {
        let cfg = Self {
            sigma_q,
            sigma_e,
            adc,
            e_bound_multiplier: 5.0,
            integration_tolerance: 1e-8,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), EntropyError> {
        if !(self.sigma_q > 0.0) {
            return Err(EntropyError::BadConfig(format!("sigma_q must be positive, got {}", self.sigma_q)));
        }
        if !(self.sigma_e >= 0.0) {
            return Err(EntropyError::BadConfig(format!("sigma_e must be non-negative, got {}", self.sigma_e)));
        }
        if !(self.e_bound_multiplier > 0.0) {
            return Err(EntropyError::BadConfig("e_bound_multiplier must be positive".into()));
        }
        if !(self.integration_tolerance > 0.0 && self.integration_tolerance <= 1e-3) {
            return Err(EntropyError::BadConfig(format!(
                "integration_tolerance must be in (0, 1e-3], got {}",
                self.integration_tolerance
            )));
        }
        Ok(())
    }
}

/// `P(m_i | e)`: probability that the digitized outcome lands in `bin_index`
/// given classical noise value `e`. Extreme bins are half-infinite.
pub fn bin_probability(e: f64, bin_index: u32, cfg: &EntropyConfig) -> f64 {
    let n = cfg.adc.levels();
    debug_assert!(bin_index < n);
    let s = cfg.adc.range;
    let delta = cfg.adc.bin_width();
    let sq = cfg.sigma_q;
    let last = n - 1;
    if bin_index == 0 {
        // (-inf, -S + delta)
        let hi = -s + delta;
        return phi_sf((e - hi) / sq);
    }
    if bin_index == last {
        // [S - delta, +inf)
        let lo = s - delta;
        return phi_sf((lo - e) / sq);
    }
    let lo = -s + bin_index as f64 * delta;
    let hi = lo + delta;
    phi((hi - e) / sq) - phi((lo - e) / sq)
}

/// `max_i P(m_i | e)`. For a Gaussian conditional over equal-width bins the
/// maximum lies in the bin containing `e`, one of its neighbors, or an
/// extreme bin, so only those candidates are evaluated.
pub fn max_outcome_probability(e: f64, cfg: &EntropyConfig) -> f64 {
    let n = cfg.adc.levels();
    let s = cfg.adc.range;
    let delta = cfg.adc.bin_width();
    let containing = (((e + s) / delta).floor() as i64).clamp(0, n as i64 - 1) as u32;
    let mut best = 0.0f64;
    let mut consider = |j: i64| {
        if (0..n as i64).contains(&j) {
            let p = bin_probability(e, j as u32, cfg);
            if p > best {
                best = p;
            }
        }
    };
    consider(containing as i64 - 1);
    consider(containing as i64);
    consider(containing as i64 + 1);
    consider(0);
    consider(n as i64 - 1);
    best
}

fn gauss_pdf(x: f64, sigma: f64) -> f64 {
    let z = x / sigma;
    (-0.5 * z * z).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
}

/// Adaptive Simpson on a smooth segment. Returns `None` when the depth limit
/// is hit before the local error estimate meets `eps`.
fn adaptive_simpson(
    f: &impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    eps: f64,
    depth: u32,
) -> Option<f64> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let h = b - a;
    let left = h / 12.0 * (fa + 4.0 * flm + fm);
    let right = h / 12.0 * (fm + 4.0 * frm + fb);
    let err = left + right - whole;
    if err.abs() <= 15.0 * eps {
        return Some(left + right + err / 15.0);
    }
    if depth == 0 {
        return None;
    }
    let l = adaptive_simpson(f, a, m, fa, flm, fm, left, eps / 2.0, depth - 1)?;
    let r = adaptive_simpson(f, m, b, fm, frm, fb, right, eps / 2.0, depth - 1)?;
    Some(l + r)
}

fn simpson_coarse(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64, f64, f64) {
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    ((b - a) / 6.0 * (fa + 4.0 * fm + fb), fa, fm, fb)
}

/// Average conditional min-entropy in bits per sample:
/// `-log2 Int P_E(e) * max_i P(m_i|e) de` over `e in [-10 sigma_e, 10 sigma_e]`.
///
/// The integrand has kinks wherever the arg-max bin changes, so the domain is
/// subdivided at every ADC bin edge before adaptive Simpson refinement.
/// Degenerates to `-log2 max_i P(m_i|0)` when `sigma_e = 0`.
pub fn avg_min_entropy(cfg: &EntropyConfig) -> Result<f64, EntropyError> {
    cfg.validate()?;
    if cfg.sigma_e == 0.0 {
        return Ok(-max_outcome_probability(0.0, cfg).log2());
    }
    let lo = -10.0 * cfg.sigma_e;
    let hi = 10.0 * cfg.sigma_e;
    let f = |e: f64| gauss_pdf(e, cfg.sigma_e) * max_outcome_probability(e, cfg);

    // Segment boundaries: domain ends plus every bin edge strictly inside.
    let n = cfg.adc.levels();
    let s = cfg.adc.range;
    let delta = cfg.adc.bin_width();
    let mut cuts = vec![lo];
    let j_lo = (((lo + s) / delta).ceil() as i64).max(1);
    let j_hi = (((hi + s) / delta).floor() as i64).min(n as i64 - 1);
    for j in j_lo..=j_hi {
        let edge = -s + j as f64 * delta;
        if edge > lo && edge < hi {
            cuts.push(edge);
        }
    }
    cuts.push(hi);

    // First pass: coarse Simpson per segment to apportion the error budget.
    let coarse: Vec<(f64, f64, f64, f64)> =
        cuts.windows(2).map(|w| simpson_coarse(&f, w[0], w[1])).collect();
    let total_coarse: f64 = coarse.iter().map(|c| c.0).sum();
    let budget = cfg.integration_tolerance * total_coarse.abs().max(f64::MIN_POSITIVE);

    let mut total = 0.0f64;
    for (w, &(whole, fa, fm, fb)) in cuts.windows(2).zip(&coarse) {
        let share = budget * (whole.abs() / total_coarse.abs()).max(1e-6);
        let seg = adaptive_simpson(&f, w[0], w[1], fa, fm, fb, whole, share, 48)
            .ok_or(EntropyError::QuadratureNonConvergence(cfg.integration_tolerance))?;
        total += seg;
    }
    Ok(-total.log2())
}

/// Worst-case conditional min-entropy in bits per sample:
/// `-log2 max_{|e| <= beta sigma_e} max_i P(m_i|e)`.
///
/// The inner maximum is evaluated at every bin center inside the interval,
/// both interval endpoints, and the extreme-bin thresholds when inside;
/// those candidates cover all local maxima of the envelope.
pub fn worst_min_entropy(cfg: &EntropyConfig) -> Result<f64, EntropyError> {
    cfg.validate()?;
    let bound = cfg.e_bound_multiplier * cfg.sigma_e;
    let n = cfg.adc.levels();
    let s = cfg.adc.range;
    let delta = cfg.adc.bin_width();

    let mut best = f64::MIN;
    let mut consider = |e: f64| {
        let p = max_outcome_probability(e, cfg);
        if p > best {
            best = p;
        }
    };
    consider(-bound);
    consider(bound);
    for t in [-(s - delta), s - delta] {
        if t.abs() <= bound {
            consider(t);
        }
    }
    let j_lo = ((-bound + s) / delta - 0.5).ceil().max(0.0) as i64;
    let j_hi = (((bound + s) / delta - 0.5).floor() as i64).min(n as i64 - 1);
    for j in j_lo..=j_hi {
        consider(-s + (j as f64 + 0.5) * delta);
    }
    Ok(-best.log2())
}

/// One row of a range sweep.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct SweepPoint {
    /// `S / sigma_q`.
    pub ratio: f64,
    pub h_avg: f64,
    pub h_worst: f64,
}

/// Evaluate both entropies at each `S/sigma_q` ratio.
pub fn sweep_range(
    sigma_q: f64,
    sigma_e: f64,
    bits: u8,
    ratios: &[f64],
) -> Result<Vec<SweepPoint>, EntropyError> {
    if ratios.is_empty() || ratios[0] <= 0.0 || ratios.windows(2).any(|w| w[0] >= w[1]) {
        return Err(EntropyError::BadRatios);
    }
    ratios
        .par_iter()
        .map(|&ratio| {
            let adc = AdcConfig::new(bits, ratio * sigma_q)
                .map_err(|e| EntropyError::BadConfig(e.to_string()))?;
            let cfg = EntropyConfig::new(sigma_q, sigma_e, adc)?;
            Ok(SweepPoint {
                ratio,
                h_avg: avg_min_entropy(&cfg)?,
                h_worst: worst_min_entropy(&cfg)?,
            })
        })
        .collect()
}

/// Which entropy a range optimization maximizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    Avg,
    Worst,
}

/// Result of [`optimal_range`].
#[derive(Debug, Clone, serde::Serialize)]
pub struct OptimalRange {
    /// Maximizing `S / sigma_q`.
    pub ratio: f64,
    /// Absolute half-range `S` for the given `sigma_q`, volts.
    pub range: f64,
    /// Entropy at the maximum, bits per sample.
    pub entropy_bits: f64,
    pub objective: Objective,
    /// False when the coarse sweep was not unimodal and the grid arg-max was
    /// returned without refinement.
    pub refined: bool,
}

const OPT_GRID_START: f64 = 0.5;
const OPT_GRID_STOP: f64 = 12.0;
const OPT_GRID_STEP: f64 = 0.25;

/// Golden-section refinement of the sweep maximum to a ratio resolution of
/// 1e-3. Falls back to the grid arg-max (flagged `refined: false`) when the
/// coarse sweep is not unimodal; plateau ties resolve to the smallest ratio.
pub fn optimal_range(
    sigma_q: f64,
    sigma_e: f64,
    bits: u8,
    objective: Objective,
) -> Result<OptimalRange, EntropyError> {
    let eval = |ratio: f64| -> Result<f64, EntropyError> {
        let adc =
            AdcConfig::new(bits, ratio * sigma_q).map_err(|e| EntropyError::BadConfig(e.to_string()))?;
        let cfg = EntropyConfig::new(sigma_q, sigma_e, adc)?;
        match objective {
            Objective::Avg => avg_min_entropy(&cfg),
            Objective::Worst => worst_min_entropy(&cfg),
        }
    };

    let n_steps = ((OPT_GRID_STOP - OPT_GRID_START) / OPT_GRID_STEP).round() as usize;
    let ratios: Vec<f64> = (0..=n_steps).map(|i| OPT_GRID_START + i as f64 * OPT_GRID_STEP).collect();
    let values: Vec<f64> = ratios
        .par_iter()
        .map(|&r| eval(r))
        .collect::<Result<_, _>>()?;

    let mut best = 0usize;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }

    // Unimodal up to numerical noise: no rise after the first descent.
    let noise = 1e-12;
    let mut seen_descent = false;
    let mut unimodal = true;
    for w in values.windows(2) {
        if w[1] < w[0] - noise {
            seen_descent = true;
        } else if w[1] > w[0] + noise && seen_descent {
            unimodal = false;
            break;
        }
    }
    let plateau = best + 1 < values.len() && (values[best] - values[best + 1]).abs() <= noise
        || best > 0 && (values[best] - values[best - 1]).abs() <= noise;

    if !unimodal || plateau {
        return Ok(OptimalRange {
            ratio: ratios[best],
            range: ratios[best] * sigma_q,
            entropy_bits: values[best],
            objective,
            refined: false,
        });
    }

    let mut a = if best > 0 { ratios[best - 1] } else { ratios[0] };
    let mut b = if best + 1 < ratios.len() { ratios[best + 1] } else { ratios[ratios.len() - 1] };
    let inv_phi = 0.618_033_988_749_894_8;
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let mut f1 = eval(x1)?;
    let mut f2 = eval(x2)?;
    while b - a > 1e-3 {
        if f1 >= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = eval(x1)?;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = eval(x2)?;
        }
    }
    let (ratio, entropy_bits) = if f1 >= f2 { (x1, f1) } else { (x2, f2) };
    Ok(OptimalRange { ratio, range: ratio * sigma_q, entropy_bits, objective, refined: true })
}

/// Bits per second extractable at `h` bits per sample.
pub fn extractable_rate(h_bits_per_sample: f64, sample_rate: f64) -> f64 {
    debug_assert!(h_bits_per_sample >= 0.0);
    h_bits_per_sample * sample_rate
}

/// Standard deviations recovered from a measured/electronic trace pair.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct SigmaEstimate {
    pub sigma_m: f64,
    pub sigma_e: f64,
    pub sigma_q: f64,
}

/// Sample standard deviations of the two traces and the quantum component
/// `sigma_q = sqrt(sigma_m^2 - sigma_e^2)`. Digitized inputs are de-quantized
/// to bin centers first (no quantization-variance correction).
pub fn estimate_sigmas(measured: &Trace, electronic: &Trace) -> Result<SigmaEstimate, EntropyError> {
    if measured.sample_rate() != electronic.sample_rate() {
        return Err(EntropyError::RateMismatch(measured.sample_rate(), electronic.sample_rate()));
    }
    let std_of = |t: &Trace| {
        let a = t.to_analog();
        let n = a.samples.len() as f64;
        let mean = a.samples.iter().sum::<f64>() / n;
        (a.samples.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt()
    };
    let sigma_m = std_of(measured);
    let sigma_e = std_of(electronic);
    if sigma_e >= sigma_m {
        return Err(EntropyError::ElectronicExceedsMeasured { sigma_e, sigma_m });
    }
    Ok(SigmaEstimate { sigma_m, sigma_e, sigma_q: (sigma_m * sigma_m - sigma_e * sigma_e).sqrt() })
}

/// Entropy evaluation summary.
#[derive(Debug, Clone, serde::Serialize)]
pub struct EntropyReport {
    pub h_avg: f64,
    pub h_worst: f64,
    pub adc: AdcConfig,
    pub sigma_q: f64,
    pub sigma_e: f64,
    pub qcnr_db: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rate_avg: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rate_worst: Option<f64>,
}

impl EntropyReport {
    pub fn evaluate(cfg: &EntropyConfig, sample_rate: Option<f64>) -> Result<Self, EntropyError> {
        let h_avg = avg_min_entropy(cfg)?;
        let h_worst = worst_min_entropy(cfg)?;
        Ok(EntropyReport {
            h_avg,
            h_worst,
            adc: cfg.adc,
            sigma_q: cfg.sigma_q,
            sigma_e: cfg.sigma_e,
            qcnr_db: 20.0 * (cfg.sigma_q / cfg.sigma_e.max(f64::MIN_POSITIVE)).log10(),
            rate_avg: sample_rate.map(|fs| extractable_rate(h_avg, fs)),
            rate_worst: sample_rate.map(|fs| extractable_rate(h_worst, fs)),
        })
    }
}
