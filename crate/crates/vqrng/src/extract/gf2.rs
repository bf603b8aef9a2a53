//! Carryless (GF(2)) polynomial multiplication of bit vectors stored as
//! little-endian u64 words. Hardware PCLMULQDQ is used when available, with
//! a nibble-table software fallback producing identical results.

/// XOR-accumulate the carryless product of `a` and `b` into `out`.
/// `out` must hold at least `a.len() + b.len()` words.
pub fn gf2_convolve_into(a: &[u64], b: &[u64], out: &mut [u64]) {
    debug_assert!(out.len() >= a.len() + b.len());
    #[cfg(target_arch = "x86_64")]
    {
        if hw_available() {
            // Safety: feature presence checked at runtime.
            unsafe { conv_clmul(a, b, out) };
            return;
        }
    }
    conv_soft(a, b, out);
}

#[cfg(target_arch = "x86_64")]
fn hw_available() -> bool {
    use std::sync::OnceLock;
    static HW: OnceLock<bool> = OnceLock::new();
    *HW.get_or_init(|| std::arch::is_x86_feature_detected!("pclmulqdq"))
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "pclmulqdq", enable = "sse2")]
unsafe fn conv_clmul(a: &[u64], b: &[u64], out: &mut [u64]) {
    use std::arch::x86_64::*;
    for (j, &bw) in b.iter().enumerate() {
        if bw == 0 {
            continue;
        }
        let vb = _mm_set_epi64x(0, bw as i64);
        for (i, &aw) in a.iter().enumerate() {
            if aw == 0 {
                continue;
            }
            let va = _mm_set_epi64x(0, aw as i64);
            let p = _mm_clmulepi64_si128(va, vb, 0x00);
            let lo = _mm_cvtsi128_si64(p) as u64;
            let hi = _mm_cvtsi128_si64(_mm_srli_si128(p, 8)) as u64;
            out[i + j] ^= lo;
            out[i + j + 1] ^= hi;
        }
    }
}

fn conv_soft(a: &[u64], b: &[u64], out: &mut [u64]) {
    let mut table = [0u128; 16];
    for (j, &bw) in b.iter().enumerate() {
        if bw == 0 {
            continue;
        }
        // Products of bw with every 4-bit multiplier.
        table[0] = 0;
        table[1] = bw as u128;
        for nib in 2..16usize {
            let high_bit = usize::BITS - 1 - nib.leading_zeros();
            table[nib] = (table[1] << high_bit) ^ table[nib - (1 << high_bit)];
        }
        for (i, &aw) in a.iter().enumerate() {
            if aw == 0 {
                continue;
            }
            let mut acc: u128 = 0;
            let mut w = aw;
            let mut shift = 0u32;
            while w != 0 {
                let nib = (w & 0xf) as usize;
                if nib != 0 {
                    acc ^= table[nib] << shift;
                }
                w >>= 4;
                shift += 4;
            }
            out[i + j] ^= acc as u64;
            out[i + j + 1] ^= (acc >> 64) as u64;
        }
    }
}
