//! Core data model: noise traces, digitized traces, spectra and bitstreams,
//! plus the bit-exact file formats used at every artifact boundary.

mod csv;
pub mod file;

pub use csv::{read_spectrum_csv, read_sweep_csv, write_curve_csv, write_spectrum_csv};
pub use file::{read_bits, read_trace, write_bits, write_trace, TraceWriter};

use thiserror::Error;

/// Errors raised by trace/spectrum construction and file I/O.
#[derive(Debug, Error)]
pub enum SigioError {
    #[error("bad magic: expected \"VQRN\"")]
    BadMagic,
    #[error("unsupported format version {0}")]
    BadVersion(u8),
    #[error("unknown trace kind {0}")]
    BadKind(u8),
    #[error("truncated payload: header declares {expected} samples, {got} available")]
    Truncated { expected: u64, got: u64 },
    #[error("ADC code {code} out of range for {bits}-bit converter")]
    CodeOutOfRange { code: i32, bits: u8 },
    #[error("invalid ADC config: {0}")]
    BadAdc(String),
    #[error("invalid trace: {0}")]
    BadTrace(String),
    #[error("invalid spectrum: {0}")]
    BadSpectrum(String),
    #[error("bits_per_sample {requested} exceeds ADC resolution {available}")]
    BitsPerSample { requested: u8, available: u8 },
    #[error("malformed CSV at line {line}: {msg}")]
    BadCsv { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Uniformly sampled analog voltage record.
#[derive(Debug, Clone)]
pub struct NoiseTrace {
    pub samples: Vec<f64>,
    /// Sample rate in Hz.
    pub sample_rate: f64,
    /// Provenance label, e.g. "measured" or "electronic". Metadata only:
    /// not persisted by the trace file format and not part of equality.
    pub label: String,
}

impl PartialEq for NoiseTrace {
    fn eq(&self, other: &Self) -> bool {
        self.samples == other.samples && self.sample_rate == other.sample_rate
    }
}

impl NoiseTrace {
    pub fn new(samples: Vec<f64>, sample_rate: f64, label: impl Into<String>) -> Result<Self, SigioError> {
        if !(sample_rate > 0.0) || !sample_rate.is_finite() {
            return Err(SigioError::BadTrace(format!("sample_rate must be positive, got {sample_rate}")));
        }
        if samples.is_empty() {
            return Err(SigioError::BadTrace("trace must contain at least one sample".into()));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(SigioError::BadTrace("trace contains non-finite samples".into()));
        }
        Ok(Self { samples, sample_rate, label: label.into() })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// ADC bit depth and symmetric full-scale range.
///
/// Conversion spans `[-range, +range)` with `2^bits` equal bins of width
/// `2*range / 2^bits`; the two extreme bins are half-infinite (saturating).
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AdcConfig {
    pub bits: u8,
    /// Half-range S in volts.
    pub range: f64,
}

impl AdcConfig {
    pub fn new(bits: u8, range: f64) -> Result<Self, SigioError> {
        if !(1..=16).contains(&bits) {
            return Err(SigioError::BadAdc(format!("bits must be in 1..=16, got {bits}")));
        }
        if !(range > 0.0) || !range.is_finite() {
            return Err(SigioError::BadAdc(format!("range must be positive, got {range}")));
        }
        Ok(Self { bits, range })
    }

    /// Number of codes, `2^bits`.
    pub fn levels(&self) -> u32 {
        1u32 << self.bits
    }

    /// Bin width `2S / 2^bits`.
    pub fn bin_width(&self) -> f64 {
        2.0 * self.range / self.levels() as f64
    }

    /// Smallest representable code, `-2^(bits-1)`.
    pub fn min_code(&self) -> i32 {
        -(1i32 << (self.bits - 1))
    }

    /// Largest representable code, `2^(bits-1) - 1`.
    pub fn max_code(&self) -> i32 {
        (1i32 << (self.bits - 1)) - 1
    }
}

/// Signed integer ADC record with its converter configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct DigitizedTrace {
    pub codes: Vec<i16>,
    pub adc: AdcConfig,
    pub sample_rate: f64,
    /// Number of codes pinned at either extreme code.
    pub saturation_count: u64,
}

impl DigitizedTrace {
    pub fn new(codes: Vec<i16>, adc: AdcConfig, sample_rate: f64) -> Result<Self, SigioError> {
        if !(sample_rate > 0.0) || !sample_rate.is_finite() {
            return Err(SigioError::BadTrace(format!("sample_rate must be positive, got {sample_rate}")));
        }
        let (lo, hi) = (adc.min_code(), adc.max_code());
        let mut saturation_count = 0u64;
        for &c in &codes {
            let c = c as i32;
            if c < lo || c > hi {
                return Err(SigioError::CodeOutOfRange { code: c, bits: adc.bits });
            }
            if c == lo || c == hi {
                saturation_count += 1;
            }
        }
        Ok(Self { codes, adc, sample_rate, saturation_count })
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    /// Reconstruct analog values at bin centers (no quantization-variance
    /// correction; extreme codes map to their finite pseudo-centers).
    pub fn dequantize(&self) -> NoiseTrace {
        let delta = self.adc.bin_width();
        let half = 1u32 << (self.adc.bits - 1);
        let samples = self
            .codes
            .iter()
            .map(|&c| -self.adc.range + (c as f64 + half as f64 + 0.5) * delta)
            .collect();
        NoiseTrace { samples, sample_rate: self.sample_rate, label: "dequantized".into() }
    }
}

/// Either flavor of trace, as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub enum Trace {
    Analog(NoiseTrace),
    Digitized(DigitizedTrace),
}

impl Trace {
    pub fn sample_rate(&self) -> f64 {
        match self {
            Trace::Analog(t) => t.sample_rate,
            Trace::Digitized(t) => t.sample_rate,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Trace::Analog(t) => t.len(),
            Trace::Digitized(t) => t.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Analog view: identity for analog traces, bin centers for digitized.
    pub fn to_analog(&self) -> NoiseTrace {
        match self {
            Trace::Analog(t) => t.clone(),
            Trace::Digitized(t) => t.dequantize(),
        }
    }
}

impl From<NoiseTrace> for Trace {
    fn from(t: NoiseTrace) -> Self {
        Trace::Analog(t)
    }
}

impl From<DigitizedTrace> for Trace {
    fn from(t: DigitizedTrace) -> Self {
        Trace::Digitized(t)
    }
}

/// Unit convention for spectrum values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum SpectrumUnit {
    /// Power in dBm within one resolution bandwidth.
    DbmPerRbw,
    /// One-sided power spectral density in V^2/Hz.
    VoltsSquaredPerHz,
}

impl std::fmt::Display for SpectrumUnit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SpectrumUnit::DbmPerRbw => write!(f, "dBm@RBW"),
            SpectrumUnit::VoltsSquaredPerHz => write!(f, "V^2/Hz"),
        }
    }
}

/// One-sided power spectrum with resolution bandwidth and unit tag.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    /// Frequencies in Hz, strictly ascending, non-negative.
    pub frequencies: Vec<f64>,
    pub values: Vec<f64>,
    /// Resolution bandwidth in Hz.
    pub rbw: f64,
    pub unit: SpectrumUnit,
}

impl Spectrum {
    pub fn new(frequencies: Vec<f64>, values: Vec<f64>, rbw: f64, unit: SpectrumUnit) -> Result<Self, SigioError> {
        if frequencies.len() != values.len() {
            return Err(SigioError::BadSpectrum(format!(
                "{} frequencies vs {} values",
                frequencies.len(),
                values.len()
            )));
        }
        if frequencies.is_empty() {
            return Err(SigioError::BadSpectrum("spectrum must contain at least one point".into()));
        }
        if frequencies[0] < 0.0 {
            return Err(SigioError::BadSpectrum("frequencies must be non-negative".into()));
        }
        if frequencies.windows(2).any(|w| w[0] >= w[1]) {
            return Err(SigioError::BadSpectrum("frequencies must be strictly ascending".into()));
        }
        if values.iter().any(|v| !v.is_finite()) || frequencies.iter().any(|f| !f.is_finite()) {
            return Err(SigioError::BadSpectrum("spectrum contains non-finite entries".into()));
        }
        if !(rbw > 0.0) {
            return Err(SigioError::BadSpectrum(format!("rbw must be positive, got {rbw}")));
        }
        Ok(Self { frequencies, values, rbw, unit })
    }

    pub fn len(&self) -> usize {
        self.frequencies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frequencies.is_empty()
    }

    pub fn max_frequency(&self) -> f64 {
        *self.frequencies.last().unwrap()
    }

    /// Linear interpolation of the value at `f`, clamped at the span edges.
    pub fn value_at(&self, f: f64) -> f64 {
        let fr = &self.frequencies;
        if f <= fr[0] {
            return self.values[0];
        }
        if f >= fr[fr.len() - 1] {
            return self.values[fr.len() - 1];
        }
        let i = fr.partition_point(|&x| x <= f);
        let (f0, f1) = (fr[i - 1], fr[i]);
        let (v0, v1) = (self.values[i - 1], self.values[i]);
        v0 + (v1 - v0) * (f - f0) / (f1 - f0)
    }

    /// Values in dB: identity for dBm spectra, `10*log10(v)` for V^2/Hz.
    pub fn values_db(&self) -> Vec<f64> {
        match self.unit {
            SpectrumUnit::DbmPerRbw => self.values.clone(),
            SpectrumUnit::VoltsSquaredPerHz => {
                self.values.iter().map(|&v| 10.0 * v.max(f64::MIN_POSITIVE).log10()).collect()
            }
        }
    }
}

/// Packed binary sequence, LSB-first within each byte; trailing pad bits zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitStream {
    bytes: Vec<u8>,
    length_bits: u64,
}

impl BitStream {
    pub fn new() -> Self {
        Self { bytes: Vec::new(), length_bits: 0 }
    }

    pub fn with_capacity(bits: usize) -> Self {
        Self { bytes: Vec::with_capacity(bits.div_ceil(8)), length_bits: 0 }
    }

    /// Wrap raw packed bytes. `length_bits` may trim the final byte; its pad
    /// bits are forced to zero.
    pub fn from_bytes(mut bytes: Vec<u8>, length_bits: u64) -> Self {
        let needed = (length_bits as usize).div_ceil(8);
        bytes.truncate(needed);
        bytes.resize(needed, 0);
        let pad = (needed as u64 * 8 - length_bits) as u32;
        if pad > 0 {
            if let Some(last) = bytes.last_mut() {
                *last &= 0xffu8 >> pad;
            }
        }
        Self { bytes, length_bits }
    }

    pub fn len_bits(&self) -> u64 {
        self.length_bits
    }

    pub fn is_empty(&self) -> bool {
        self.length_bits == 0
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn bit(&self, i: u64) -> bool {
        debug_assert!(i < self.length_bits);
        (self.bytes[(i / 8) as usize] >> (i % 8)) & 1 == 1
    }

    pub fn push(&mut self, bit: bool) {
        let byte = (self.length_bits / 8) as usize;
        if byte == self.bytes.len() {
            self.bytes.push(0);
        }
        if bit {
            self.bytes[byte] |= 1 << (self.length_bits % 8);
        }
        self.length_bits += 1;
    }

    /// Append the `n` least-significant bits of `value`, LSB-first.
    pub fn push_low_bits(&mut self, value: u64, n: u32) {
        for k in 0..n {
            self.push((value >> k) & 1 == 1);
        }
    }

    /// Iterate bits in stream order.
    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.length_bits).map(move |i| self.bit(i))
    }

    /// Sub-stream of `len` bits starting at bit `start`.
    pub fn slice(&self, start: u64, len: u64) -> BitStream {
        assert!(start + len <= self.length_bits, "slice out of range");
        let mut out = BitStream::with_capacity(len as usize);
        if start % 8 == 0 {
            let first = (start / 8) as usize;
            let nbytes = (len as usize).div_ceil(8);
            out = BitStream::from_bytes(self.bytes[first..first + nbytes].to_vec(), len);
        } else {
            for i in 0..len {
                out.push(self.bit(start + i));
            }
        }
        out
    }

    /// Interpret bits as little-endian u64 words (zero-padded tail), for
    /// word-parallel consumers.
    pub fn to_words(&self) -> Vec<u64> {
        let nwords = (self.length_bits as usize).div_ceil(64);
        let mut words = vec![0u64; nwords];
        for (i, &b) in self.bytes.iter().enumerate() {
            words[i / 8] |= (b as u64) << (8 * (i % 8));
        }
        words
    }
}

impl Default for BitStream {
    fn default() -> Self {
        Self::new()
    }
}

/// Serialize ADC codes into a bitstream: each code contributes the
/// `bits_per_sample` least-significant bits of its offset-binary
/// representation (`code + 2^(bits-1)`), LSB-first.
pub fn pack_codes_to_bits(trace: &DigitizedTrace, bits_per_sample: u8) -> Result<BitStream, SigioError> {
    if bits_per_sample == 0 || bits_per_sample > trace.adc.bits {
        return Err(SigioError::BitsPerSample { requested: bits_per_sample, available: trace.adc.bits });
    }
    let half = 1u64 << (trace.adc.bits - 1);
    let mut bits = BitStream::with_capacity(trace.codes.len() * bits_per_sample as usize);
    for &c in &trace.codes {
        let offset = (c as i64 + half as i64) as u64;
        bits.push_low_bits(offset, bits_per_sample as u32);
    }
    Ok(bits)
}
