//! Shared test-side oracles, independent of the library's evaluation paths:
//! brute-force Riemann integration / grid maximization for the conditional
//! min-entropies, and word-packed row-parity Toeplitz hashing.
#![allow(dead_code)] // each consumer uses a subset

use statrs::function::erf::erfc;
use vqrng::sigio::BitStream;

/// First 100 bits of the binary expansion of pi: the SP 800-22 worked
/// example input for the frequency test (expected p = 0.109599).
pub const PI_100: &str = "11001001000011111101101010100010001000010110100011\
                          00001000110100110001001100011001100010100010111000";

pub fn bits_of(s: &str) -> Vec<u8> {
    s.chars().filter(|c| !c.is_whitespace()).map(|c| if c == '1' { 1 } else { 0 }).collect()
}

fn phi(x: f64) -> f64 {
    0.5 * erfc(-x * std::f64::consts::FRAC_1_SQRT_2)
}

fn gauss_pdf(x: f64, sigma: f64) -> f64 {
    let z = x / sigma;
    (-0.5 * z * z).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
}

#[derive(Debug, Clone, Copy)]
pub struct OracleConfig {
    pub sigma_q: f64,
    pub sigma_e: f64,
    pub bits: u8,
    pub range: f64,
    pub beta: f64,
}

/// `max_i P(m_i|e)` by direct scan over every bin, via consecutive CDF
/// evaluations at all interior edges.
pub fn oracle_max_prob(c: &OracleConfig, e: f64) -> f64 {
    let n = 1usize << c.bits;
    let delta = 2.0 * c.range / n as f64;
    let mut prev_cdf = 0.0f64;
    let mut best = 0.0f64;
    for j in 1..n {
        let edge = -c.range + j as f64 * delta;
        let cdf = phi((edge - e) / c.sigma_q);
        best = best.max(cdf - prev_cdf);
        prev_cdf = cdf;
    }
    best.max(1.0 - prev_cdf)
}

/// Average conditional min-entropy by trapezoidal Riemann sum with e-grid
/// step `sigma_e/2000` spanning +-12 sigma_e.
pub fn oracle_avg_min_entropy(c: &OracleConfig) -> f64 {
    if c.sigma_e == 0.0 {
        return -oracle_max_prob(c, 0.0).log2();
    }
    let step = c.sigma_e / 2000.0;
    let span = 12.0 * c.sigma_e;
    let steps = (2.0 * span / step).round() as usize;
    let f = |e: f64| gauss_pdf(e, c.sigma_e) * oracle_max_prob(c, e);
    let mut total = 0.5 * (f(-span) + f(span));
    for i in 1..steps {
        total += f(-span + i as f64 * step);
    }
    -(total * step).log2()
}

/// Worst-case conditional min-entropy by grid maximization with e-grid step
/// `delta/1000` over `[-beta sigma_e, beta sigma_e]`, endpoints included.
pub fn oracle_worst_min_entropy(c: &OracleConfig) -> f64 {
    let bound = c.beta * c.sigma_e;
    let mut best = oracle_max_prob(c, bound).max(oracle_max_prob(c, -bound));
    if bound > 0.0 {
        let delta = 2.0 * c.range / (1usize << c.bits) as f64;
        let step = delta / 1000.0;
        let steps = (2.0 * bound / step).ceil() as usize;
        for i in 1..steps {
            let e = -bound + i as f64 * step;
            if e < bound {
                best = best.max(oracle_max_prob(c, e));
            }
        }
    }
    -best.log2()
}

/// Naive Toeplitz hashing for large blocks: output bit `r` is the parity of
/// the AND between the bit-reversed input and the seed window starting at
/// `r`, which is the row-parity definition word-packed for tractability.
pub fn naive_extract_large(input: &BitStream, seed: &BitStream, n: usize, m: usize) -> BitStream {
    assert_eq!(input.len_bits(), n as u64);
    assert_eq!(seed.len_bits(), (n + m - 1) as u64);
    // reverse(x)[d] = x[n-1-d]
    let mut reversed = BitStream::with_capacity(n);
    for d in 0..n as u64 {
        reversed.push(input.bit(n as u64 - 1 - d));
    }
    let xr = reversed.to_words();
    let sw = seed.to_words();
    let n_words = n.div_ceil(64);
    let mut out = BitStream::with_capacity(m);
    for r in 0..m as u64 {
        // window = seed[r .. r+n]
        let word0 = (r / 64) as usize;
        let shift = (r % 64) as u32;
        let mut acc = 0u32;
        for k in 0..n_words {
            let lo = sw.get(word0 + k).copied().unwrap_or(0);
            let hi = sw.get(word0 + k + 1).copied().unwrap_or(0);
            let mut w = if shift == 0 { lo } else { (lo >> shift) | (hi << (64 - shift)) };
            if k == n_words - 1 && n % 64 != 0 {
                w &= (1u64 << (n % 64)) - 1;
            }
            acc ^= (w & xr[k]).count_ones() & 1;
        }
        out.push(acc & 1 == 1);
    }
    out
}
