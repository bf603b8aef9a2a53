//! Pinned oracle comparisons for the documented entropy configurations.

mod common;

use common::{oracle_avg_min_entropy, oracle_worst_min_entropy, OracleConfig};
use vqrng::entropy::{self, EntropyConfig};
use vqrng::sigio::AdcConfig;

/// 6-bit ADC, sigma_q = 1, sigma_e = 0.43, S = 4: both estimators must match
/// their brute-force oracles to 1e-4 bits.
#[test]
fn six_bit_reference_config_matches_oracles() {
    let cfg = EntropyConfig::new(1.0, 0.43, AdcConfig::new(6, 4.0).unwrap()).unwrap();
    let oc = OracleConfig { sigma_q: 1.0, sigma_e: 0.43, bits: 6, range: 4.0, beta: 5.0 };

    let avg = entropy::avg_min_entropy(&cfg).unwrap();
    let avg_oracle = oracle_avg_min_entropy(&oc);
    assert!((avg - avg_oracle).abs() <= 1e-4, "avg {avg} vs oracle {avg_oracle}");

    let worst = entropy::worst_min_entropy(&cfg).unwrap();
    let worst_oracle = oracle_worst_min_entropy(&oc);
    assert!((worst - worst_oracle).abs() <= 1e-4, "worst {worst} vs oracle {worst_oracle}");

    // frozen values (independently computed) guarding against silent drift
    // of both paths together
    assert!((avg - 4.327625).abs() < 1e-4, "avg {avg} drifted from frozen 4.327625");
    assert!((worst - 4.326687).abs() < 1e-4, "worst {worst} drifted from frozen 4.326687");
}

/// Paper-scale configuration at QCNR 7.34 dB, 12 bits, S/sigma_q = 4.07.
#[test]
fn twelve_bit_paper_scale_matches_oracles() {
    let sigma_q = 39.3e-3;
    let sigma_e = sigma_q * 10f64.powf(-7.34 / 20.0);
    let range = 4.07 * sigma_q;
    let cfg = EntropyConfig::new(sigma_q, sigma_e, AdcConfig::new(12, range).unwrap()).unwrap();
    let oc = OracleConfig { sigma_q, sigma_e, bits: 12, range, beta: 5.0 };

    let avg = entropy::avg_min_entropy(&cfg).unwrap();
    let avg_oracle = oracle_avg_min_entropy(&oc);
    assert!((avg - avg_oracle).abs() <= 1e-4, "avg {avg} vs oracle {avg_oracle}");

    let worst = entropy::worst_min_entropy(&cfg).unwrap();
    let worst_oracle = oracle_worst_min_entropy(&oc);
    assert!((worst - worst_oracle).abs() <= 1e-4, "worst {worst} vs oracle {worst_oracle}");
}
