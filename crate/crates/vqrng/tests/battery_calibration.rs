//! Battery calibration on counter-based PRG output: for every test stream,
//! the rejection rate at alpha = 0.01 over 1000 sequences of 10^6 bits must
//! sit inside [0.004, 0.019].

use rand_chacha::rand_core::{RngCore, SeedableRng};
use vqrng::rndtest;
use vqrng::sigio::BitStream;

#[test]
fn rejection_rates_calibrated_on_known_good_prg() {
    let sequences = 1000u64;
    let sequence_len = 1_000_000u64;
    let total_bytes = (sequences * sequence_len) as usize / 8;
    let mut bytes = vec![0u8; total_bytes];
    rand_chacha::ChaCha12Rng::seed_from_u64(0xca11b8).fill_bytes(&mut bytes);
    let bits = BitStream::from_bytes(bytes, sequences * sequence_len);

    let report = rndtest::run_battery(&bits, sequence_len, 0.01).unwrap();
    assert_eq!(report.sequences, sequences);
    for s in &report.streams {
        let rejection = 1.0 - s.proportion;
        assert!(
            (0.004..=0.019).contains(&rejection),
            "stream {} rejection rate {rejection:.4} outside [0.004, 0.019]",
            s.name
        );
        assert!(
            s.uniformity_p > 1e-4,
            "stream {} p-values non-uniform (P_T = {:.2e})",
            s.name,
            s.uniformity_p
        );
    }
}
