//! Linear-phase FIR design: windowed-sinc lowpass and inverse-root-PSD
//! equalizer.

use super::{DspError, FirFilter};
use crate::sigio::{Spectrum, SpectrumUnit};

fn hamming(n: usize) -> Vec<f64> {
    let nm1 = (n - 1) as f64;
    (0..n)
        .map(|i| 0.54 - 0.46 * (2.0 * std::f64::consts::PI * i as f64 / nm1).cos())
        .collect()
}

/// Raw Hamming-windowed sinc with unit DC gain.
fn windowed_sinc(cutoff_norm: f64, taps: usize) -> Vec<f64> {
    let m = (taps - 1) as f64 / 2.0;
    let w = hamming(taps);
    let mut h: Vec<f64> = (0..taps)
        .map(|i| {
            let x = i as f64 - m;
            let s = if x == 0.0 {
                2.0 * cutoff_norm
            } else {
                (2.0 * std::f64::consts::PI * cutoff_norm * x).sin() / (std::f64::consts::PI * x)
            };
            s * w[i]
        })
        .collect();
    let sum: f64 = h.iter().sum();
    for v in &mut h {
        *v /= sum;
    }
    h
}

/// Linear-phase windowed-sinc lowpass whose magnitude is -3 dB at `f_c`.
///
/// The design cutoff is adjusted by bisection so the realized response
/// crosses 1/sqrt(2) at `f_c` (a plain windowed sinc sits near -6 dB there).
pub fn design_lowpass(f_c: f64, sample_rate: f64, taps: usize) -> Result<FirFilter, DspError> {
    if !(f_c > 0.0) || f_c >= sample_rate / 2.0 {
        return Err(DspError::BadCutoff { fc: f_c, rate: sample_rate });
    }
    if taps == 0 || taps % 2 == 0 {
        return Err(DspError::BadTaps(taps));
    }
    let target = std::f64::consts::FRAC_1_SQRT_2;
    let eval = |cut_norm: f64| -> f64 {
        let h = windowed_sinc(cut_norm, taps);
        let f = FirFilter { taps: h, description: String::new() };
        f.magnitude_at(sample_rate, f_c)
    };
    // |H(f_c)| grows with the design cutoff; bracket then bisect.
    let fc_norm = f_c / sample_rate;
    let mut lo = fc_norm * 0.5;
    let mut hi = (fc_norm + 4.0 / taps as f64).min(0.499_999);
    for _ in 0..60 {
        if eval(hi) >= target || hi >= 0.499_998 {
            break;
        }
        hi = (hi + 2.0 / taps as f64).min(0.499_999);
    }
    let mut cut = fc_norm;
    for _ in 0..80 {
        cut = 0.5 * (lo + hi);
        let m = eval(cut);
        if (m - target).abs() < 1e-10 {
            break;
        }
        if m < target {
            lo = cut;
        } else {
            hi = cut;
        }
    }
    let h = windowed_sinc(cut, taps);
    Ok(FirFilter {
        taps: h,
        description: format!("lowpass f_c={f_c} Hz @ {sample_rate} Sa/s, {taps} taps"),
    })
}

/// Linear-phase spectral equalizer from a measured PSD.
///
/// Passband magnitude is proportional to `1/sqrt(max(psd(f), floor))` up to
/// `f_eq`, normalized for unit mean passband gain, with `floor` set
/// `floor_db` below the passband-median PSD. Above `f_eq` the magnitude
/// rolls to zero with a raised-cosine taper of width `f_eq/20` when that
/// transition fits below Nyquist; otherwise the inverse-root shaping extends
/// across the whole band, so the flattened spectrum reaches Nyquist and
/// adjacent samples decorrelate.
pub fn design_equalizer(
    psd: &Spectrum,
    f_eq: f64,
    taps: usize,
    floor_db: f64,
) -> Result<FirFilter, DspError> {
    if taps == 0 || taps % 2 == 0 {
        return Err(DspError::BadTaps(taps));
    }
    let nyquist = psd.max_frequency();
    if f_eq <= 0.0 || nyquist < f_eq {
        return Err(DspError::SpanInsufficient { span: nyquist, need: f_eq });
    }
    // Work on linear power regardless of the stored unit.
    let linear: Vec<f64> = match psd.unit {
        SpectrumUnit::VoltsSquaredPerHz => psd.values.clone(),
        SpectrumUnit::DbmPerRbw => psd.values.iter().map(|&v| 10f64.powf(v / 10.0)).collect(),
    };
    if linear.iter().all(|&v| v <= 0.0) {
        return Err(DspError::ZeroPsd);
    }
    let lin_at = |f: f64| -> f64 {
        let fr = &psd.frequencies;
        if f <= fr[0] {
            return linear[0];
        }
        if f >= fr[fr.len() - 1] {
            return linear[fr.len() - 1];
        }
        let i = fr.partition_point(|&x| x <= f);
        let t = (f - fr[i - 1]) / (fr[i] - fr[i - 1]);
        linear[i - 1] + t * (linear[i] - linear[i - 1])
    };

    let grid_n = (4 * taps).max(4096) + 1;
    let df = nyquist / (grid_n - 1) as f64;
    let grid: Vec<f64> = (0..grid_n).map(|i| i as f64 * df).collect();
    let psd_g: Vec<f64> = grid.iter().map(|&f| lin_at(f)).collect();

    let mut passband: Vec<f64> = grid
        .iter()
        .zip(&psd_g)
        .filter(|(&f, _)| f <= f_eq)
        .map(|(_, &p)| p)
        .collect();
    passband.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = passband[passband.len() / 2];
    if !(median > 0.0) {
        return Err(DspError::ZeroPsd);
    }
    let floor = median * 10f64.powf(floor_db / 10.0);

    // The inverse-root gain is only trusted where the estimate is healthy:
    // once the PSD drops 3 dB below its weakest passband level (a band edge,
    // not ripple), the gain freezes. Riding the floor clamp across a sharp
    // band edge would otherwise amplify the edge bins that still carry
    // signal smeared by the spectral estimate.
    let healthy = passband[0].max(floor) * 10f64.powf(-0.3);
    let mut base: Vec<f64> = psd_g.iter().map(|&p| 1.0 / p.max(floor).sqrt()).collect();
    let first_h = psd_g.iter().position(|&p| p >= healthy).unwrap_or(0);
    let last_h = psd_g.iter().rposition(|&p| p >= healthy).unwrap_or(grid_n - 1);
    for i in 0..first_h {
        base[i] = base[first_h];
    }
    for i in last_h + 1..grid_n {
        base[i] = base[last_h];
    }

    let transition = f_eq / 20.0;
    let taper_fits = f_eq + transition <= nyquist * (1.0 + 1e-9);
    let gain: Vec<f64> = grid
        .iter()
        .zip(&base)
        .map(|(&f, &b)| {
            if !taper_fits || f <= f_eq {
                b
            } else if f < f_eq + transition {
                let t = (f - f_eq) / transition;
                b * 0.5 * (1.0 + (std::f64::consts::PI * t).cos())
            } else {
                0.0
            }
        })
        .collect();

    let (mut gsum, mut gcount) = (0.0, 0u32);
    for (f, g) in grid.iter().zip(&gain) {
        if *f <= f_eq {
            gsum += g;
            gcount += 1;
        }
    }
    let scale = gcount as f64 / gsum;

    // Inverse DTFT of the zero-phase target, shifted to causal linear phase,
    // Hamming-windowed against truncation ripple.
    let fs = 2.0 * nyquist;
    let m = (taps - 1) as f64 / 2.0;
    let w = hamming(taps);
    let mut h = vec![0.0f64; taps];
    for (i, hi) in h.iter_mut().enumerate() {
        let x = i as f64 - m;
        let mut acc = 0.0;
        for (k, (&f, &g)) in grid.iter().zip(&gain).enumerate() {
            let trap = if k == 0 || k == grid_n - 1 { 0.5 } else { 1.0 };
            acc += trap * g * (2.0 * std::f64::consts::PI * f * x / fs).cos();
        }
        *hi = 2.0 * acc * df / fs * scale * w[i];
    }
    Ok(FirFilter {
        taps: h,
        description: format!("equalizer f_eq={f_eq} Hz, {taps} taps, floor {floor_db} dB"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sigio::Spectrum;
    use crate::sigio::SpectrumUnit;

    #[test]
    fn lowpass_hits_minus_3db_at_cutoff() {
        let f = design_lowpass(2.4e9, 12.5e9, 127).unwrap();
        let m = f.magnitude_at(12.5e9, 2.4e9);
        let db = 20.0 * m.log10();
        assert!((db + 3.0).abs() < 0.5, "got {db} dB at cutoff");
    }

    #[test]
    fn lowpass_stopband_attenuation() {
        let fs = 12.5e9;
        let f = design_lowpass(2.4e9, fs, 127).unwrap();
        // beyond 1.5*f_c the response must sit at least 40 dB down
        let mut worst: f64 = -1e9;
        let mut fq = 1.5 * 2.4e9;
        while fq < fs / 2.0 {
            let db = 20.0 * f.magnitude_at(fs, fq).log10();
            worst = worst.max(db);
            fq += 25e6;
        }
        assert!(worst <= -40.0, "worst stopband level {worst} dB");
    }

    #[test]
    fn lowpass_near_nyquist_is_near_allpass() {
        let fs = 1e6;
        let fc = 0.999 * fs / 2.0;
        let f = design_lowpass(fc, fs, 127).unwrap();
        // passband ripple below the transition region
        let mut worst_db: f64 = 0.0;
        let mut fq = 0.0;
        while fq < 0.9 * fs / 2.0 {
            let db = 20.0 * f.magnitude_at(fs, fq).log10();
            if db.abs() > worst_db.abs() {
                worst_db = db;
            }
            fq += fs / 500.0;
        }
        assert!(worst_db.abs() < 0.5, "passband ripple {worst_db} dB");
    }

    #[test]
    fn lowpass_rejects_bad_args() {
        assert!(matches!(design_lowpass(0.0, 1e6, 127), Err(DspError::BadCutoff { .. })));
        assert!(matches!(design_lowpass(6e5, 1e6, 127), Err(DspError::BadCutoff { .. })));
        assert!(matches!(design_lowpass(1e5, 1e6, 128), Err(DspError::BadTaps(128))));
    }

    fn flat_psd(nyquist: f64, level: f64, n: usize) -> Spectrum {
        let freqs: Vec<f64> = (0..n).map(|i| i as f64 * nyquist / (n - 1) as f64).collect();
        Spectrum::new(freqs, vec![level; n], 1.0, SpectrumUnit::VoltsSquaredPerHz).unwrap()
    }

    #[test]
    fn equalizer_on_flat_psd_is_brickwall() {
        let fs = 10e9;
        let psd = flat_psd(fs / 2.0, 1e-9, 513);
        let f_eq = 2e9; // taper fits well below Nyquist
        let eq = design_equalizer(&psd, f_eq, 255, -40.0).unwrap();
        // passband gain 1 within 1%
        for k in 1..40 {
            let fq = f_eq * k as f64 / 45.0;
            let m = eq.magnitude_at(fs, fq);
            assert!((m - 1.0).abs() < 0.01, "gain {m} at {fq}");
        }
        // deep stopband past the transition
        let m_stop = eq.magnitude_at(fs, f_eq * 1.3);
        assert!(20.0 * m_stop.log10() < -30.0, "stopband {m_stop}");
    }

    #[test]
    fn equalizer_floor_bounds_gain() {
        // psd collapses to ~0 above a corner; floor must cap the boost
        let fs = 10e9;
        let n = 513;
        let freqs: Vec<f64> = (0..n).map(|i| i as f64 * fs / 2.0 / (n - 1) as f64).collect();
        let values: Vec<f64> = freqs.iter().map(|&f| if f < 1.5e9 { 1e-9 } else { 1e-21 }).collect();
        let psd = Spectrum::new(freqs, values, 1.0, SpectrumUnit::VoltsSquaredPerHz).unwrap();
        let eq = design_equalizer(&psd, 2e9, 255, -40.0).unwrap();
        // with a -40 dB floor the max amplitude boost is 100x the passband level;
        // normalization makes the low-band gain ~< 1, so taps stay bounded
        let max_mag = (0..200)
            .map(|k| eq.magnitude_at(fs, k as f64 * fs / 2.0 / 200.0))
            .fold(0.0f64, f64::max);
        assert!(max_mag < 120.0, "unbounded boost {max_mag}");
    }

    #[test]
    fn equalizer_rejects_bad_inputs() {
        let psd = flat_psd(1e9, 1e-9, 64);
        assert!(matches!(design_equalizer(&psd, 2e9, 255, -40.0), Err(DspError::SpanInsufficient { .. })));
        assert!(matches!(design_equalizer(&psd, 0.5e9, 256, -40.0), Err(DspError::BadTaps(256))));
        let zero = flat_psd(1e9, 0.0, 64);
        assert!(matches!(design_equalizer(&zero, 0.5e9, 255, -40.0), Err(DspError::ZeroPsd)));
    }
}
