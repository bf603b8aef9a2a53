//! Binary trace files and packed bitstream files.
//!
//! Trace format: magic `VQRN`, version byte (=1), kind byte (0 analog,
//! 1 digitized), then little-endian `sample_rate: f64`, `count: u64`.
//! Analog payload is `count` f64 volts. Digitized inserts `bits: u8` and
//! `range_volts: f64` before a payload of `count` i16 codes.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{AdcConfig, DigitizedTrace, NoiseTrace, SigioError, Trace};

const MAGIC: &[u8; 4] = b"VQRN";
const VERSION: u8 = 1;
const KIND_ANALOG: u8 = 0;
const KIND_DIGITIZED: u8 = 1;

/// Write a trace; the file round-trips bit-exactly through [`read_trace`].
pub fn write_trace(path: impl AsRef<Path>, trace: &Trace) -> Result<(), SigioError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_trace_to(&mut w, trace)?;
    w.flush()?;
    Ok(())
}

pub(crate) fn write_trace_to(w: &mut impl Write, trace: &Trace) -> Result<(), SigioError> {
    w.write_all(MAGIC)?;
    w.write_all(&[VERSION])?;
    match trace {
        Trace::Analog(t) => {
            w.write_all(&[KIND_ANALOG])?;
            w.write_all(&t.sample_rate.to_le_bytes())?;
            w.write_all(&(t.samples.len() as u64).to_le_bytes())?;
            for &v in &t.samples {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Trace::Digitized(t) => {
            w.write_all(&[KIND_DIGITIZED])?;
            w.write_all(&t.sample_rate.to_le_bytes())?;
            w.write_all(&(t.codes.len() as u64).to_le_bytes())?;
            w.write_all(&[t.adc.bits])?;
            w.write_all(&t.adc.range.to_le_bytes())?;
            for &c in &t.codes {
                w.write_all(&c.to_le_bytes())?;
            }
        }
    }
    Ok(())
}

/// Read a trace written by [`write_trace`], validating invariants.
pub fn read_trace(path: impl AsRef<Path>) -> Result<Trace, SigioError> {
    let mut r = BufReader::new(File::open(path)?);
    read_trace_from(&mut r)
}

pub(crate) fn read_trace_from(r: &mut impl Read) -> Result<Trace, SigioError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(SigioError::BadMagic);
    }
    let version = read_u8(r)?;
    if version != VERSION {
        return Err(SigioError::BadVersion(version));
    }
    let kind = read_u8(r)?;
    let sample_rate = read_f64(r)?;
    let count = read_u64(r)?;
    match kind {
        KIND_ANALOG => {
            let samples = read_exact_f64(r, count)?;
            Ok(Trace::Analog(NoiseTrace::new(samples, sample_rate, "measured")?))
        }
        KIND_DIGITIZED => {
            let bits = read_u8(r)?;
            let range = read_f64(r)?;
            let adc = AdcConfig::new(bits, range)?;
            let codes = read_exact_i16(r, count)?;
            Ok(Trace::Digitized(DigitizedTrace::new(codes, adc, sample_rate)?))
        }
        k => Err(SigioError::BadKind(k)),
    }
}

/// Write packed bits as raw bytes, LSB-first within each byte.
pub fn write_bits(path: impl AsRef<Path>, bits: &super::BitStream) -> Result<(), SigioError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(bits.as_bytes())?;
    w.flush()?;
    Ok(())
}

/// Read a raw bitstream file; length is 8x the byte length.
pub fn read_bits(path: impl AsRef<Path>) -> Result<super::BitStream, SigioError> {
    let bytes = std::fs::read(path)?;
    let len = bytes.len() as u64 * 8;
    Ok(super::BitStream::from_bytes(bytes, len))
}

/// Incremental trace writer for traces too large to hold in memory.
/// The sample count is declared up front; [`TraceWriter::finish`] verifies it.
pub struct TraceWriter {
    w: BufWriter<File>,
    declared: u64,
    written: u64,
}

impl TraceWriter {
    pub fn analog(path: impl AsRef<Path>, sample_rate: f64, count: u64) -> Result<Self, SigioError> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(MAGIC)?;
        w.write_all(&[VERSION, KIND_ANALOG])?;
        w.write_all(&sample_rate.to_le_bytes())?;
        w.write_all(&count.to_le_bytes())?;
        Ok(Self { w, declared: count, written: 0 })
    }

    pub fn digitized(
        path: impl AsRef<Path>,
        sample_rate: f64,
        count: u64,
        adc: AdcConfig,
    ) -> Result<Self, SigioError> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(MAGIC)?;
        w.write_all(&[VERSION, KIND_DIGITIZED])?;
        w.write_all(&sample_rate.to_le_bytes())?;
        w.write_all(&count.to_le_bytes())?;
        w.write_all(&[adc.bits])?;
        w.write_all(&adc.range.to_le_bytes())?;
        Ok(Self { w, declared: count, written: 0 })
    }

    pub fn push_samples(&mut self, samples: &[f64]) -> Result<(), SigioError> {
        for &v in samples {
            self.w.write_all(&v.to_le_bytes())?;
        }
        self.written += samples.len() as u64;
        Ok(())
    }

    pub fn push_codes(&mut self, codes: &[i16]) -> Result<(), SigioError> {
        for &c in codes {
            self.w.write_all(&c.to_le_bytes())?;
        }
        self.written += codes.len() as u64;
        Ok(())
    }

    pub fn finish(mut self) -> Result<(), SigioError> {
        if self.written != self.declared {
            return Err(SigioError::Truncated { expected: self.declared, got: self.written });
        }
        self.w.flush()?;
        Ok(())
    }
}

fn read_u8(r: &mut impl Read) -> Result<u8, SigioError> {
    let mut b = [0u8; 1];
    r.read_exact(&mut b)?;
    Ok(b[0])
}

fn read_f64(r: &mut impl Read) -> Result<f64, SigioError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64, SigioError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

/// Fill `buf` with as many bytes as the reader can provide.
fn read_up_to(r: &mut impl Read, buf: &mut [u8]) -> std::io::Result<usize> {
    let mut filled = 0usize;
    while filled < buf.len() {
        match r.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => continue,
            Err(e) => return Err(e),
        }
    }
    Ok(filled)
}

fn read_exact_f64(r: &mut impl Read, count: u64) -> Result<Vec<f64>, SigioError> {
    let mut out = Vec::with_capacity(count.min(1 << 24) as usize);
    let mut buf = vec![0u8; 8 << 13];
    let mut remaining = count;
    while remaining > 0 {
        let take = (remaining as usize).min(buf.len() / 8);
        let filled = read_up_to(r, &mut buf[..take * 8])?;
        out.extend(buf[..filled - filled % 8].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())));
        if filled < take * 8 {
            return Err(SigioError::Truncated { expected: count, got: out.len() as u64 });
        }
        remaining -= take as u64;
    }
    Ok(out)
}

fn read_exact_i16(r: &mut impl Read, count: u64) -> Result<Vec<i16>, SigioError> {
    let mut out = Vec::with_capacity(count.min(1 << 26) as usize);
    let mut buf = vec![0u8; 2 << 15];
    let mut remaining = count;
    while remaining > 0 {
        let take = (remaining as usize).min(buf.len() / 2);
        let filled = read_up_to(r, &mut buf[..take * 2])?;
        out.extend(buf[..filled - filled % 2].chunks_exact(2).map(|c| i16::from_le_bytes(c.try_into().unwrap())));
        if filled < take * 2 {
            return Err(SigioError::Truncated { expected: count, got: out.len() as u64 });
        }
        remaining -= take as u64;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tmp() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    #[test]
    fn roundtrip_analog_three_samples() {
        let dir = tmp();
        let p = dir.path().join("a.trc");
        let t = Trace::Analog(NoiseTrace::new(vec![0.25, -1.5, 3.0e-3], 6.25e9, "measured").unwrap());
        write_trace(&p, &t).unwrap();
        assert_eq!(read_trace(&p).unwrap(), t);
    }

    #[test]
    fn roundtrip_digitized_extreme_codes() {
        let dir = tmp();
        let p = dir.path().join("d.trc");
        let adc = AdcConfig::new(12, 0.160).unwrap();
        let t = Trace::Digitized(DigitizedTrace::new(vec![-2048, 0, 2047], adc, 6.25e9).unwrap());
        write_trace(&p, &t).unwrap();
        assert_eq!(read_trace(&p).unwrap(), t);
    }

    #[test]
    fn digitized_file_size_is_header_plus_payload() {
        let dir = tmp();
        let p = dir.path().join("big.trc");
        let n = 1_000_000usize;
        let adc = AdcConfig::new(12, 0.160).unwrap();
        let t = Trace::Digitized(DigitizedTrace::new(vec![0i16; n], adc, 6.25e9).unwrap());
        write_trace(&p, &t).unwrap();
        // magic(4) + version(1) + kind(1) + rate(8) + count(8) + bits(1) + range(8)
        let header = 31u64;
        assert_eq!(std::fs::metadata(&p).unwrap().len(), header + 2 * n as u64);
    }

    #[test]
    fn bad_magic_is_rejected() {
        let dir = tmp();
        let p = dir.path().join("bad.trc");
        std::fs::write(&p, b"NOPE\x01\x00").unwrap();
        assert!(matches!(read_trace(&p), Err(SigioError::BadMagic)));
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let dir = tmp();
        let p = dir.path().join("short.trc");
        let adc = AdcConfig::new(8, 1.0).unwrap();
        let t = Trace::Digitized(DigitizedTrace::new(vec![1i16; 100], adc, 1.0).unwrap());
        write_trace(&p, &t).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        std::fs::write(&p, &bytes[..bytes.len() - 2]).unwrap(); // drop one code
        match read_trace(&p) {
            Err(SigioError::Truncated { expected: 100, got: 99 }) => {}
            other => panic!("expected truncation error, got {other:?}"),
        }
    }

    #[test]
    fn version_mismatch_is_rejected() {
        let dir = tmp();
        let p = dir.path().join("v9.trc");
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"VQRN");
        bytes.push(9);
        bytes.push(0);
        std::fs::write(&p, &bytes).unwrap();
        assert!(matches!(read_trace(&p), Err(SigioError::BadVersion(9))));
    }

    #[test]
    fn bits_file_roundtrip() {
        let dir = tmp();
        let p = dir.path().join("bits.bin");
        let mut b = super::super::BitStream::new();
        for i in 0..64 {
            b.push(i % 5 == 0);
        }
        write_bits(&p, &b).unwrap();
        let back = read_bits(&p).unwrap();
        assert_eq!(back.as_bytes(), b.as_bytes());
        assert_eq!(back.len_bits(), 64);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn prop_roundtrip_analog(samples in proptest::collection::vec(-1e3f64..1e3, 1..200),
                                 rate in 1.0f64..1e10) {
            let dir = tmp();
            let p = dir.path().join("t.trc");
            let t = Trace::Analog(NoiseTrace::new(samples, rate, "measured").unwrap());
            write_trace(&p, &t).unwrap();
            prop_assert_eq!(read_trace(&p).unwrap(), t);
        }

        #[test]
        fn prop_roundtrip_digitized(bits in 1u8..=16, rate in 1.0f64..1e10,
                                    raw in proptest::collection::vec(any::<i16>(), 1..200)) {
            let adc = AdcConfig::new(bits, 0.5).unwrap();
            let (lo, hi) = (adc.min_code(), adc.max_code());
            let codes: Vec<i16> = raw.iter().map(|&c| (c as i32).clamp(lo, hi) as i16).collect();
            let dir = tmp();
            let p = dir.path().join("t.trc");
            let t = Trace::Digitized(DigitizedTrace::new(codes, adc, rate).unwrap());
            write_trace(&p, &t).unwrap();
            prop_assert_eq!(read_trace(&p).unwrap(), t);
        }

        #[test]
        fn prop_pack_length(bits in 1u8..=12, n in 1usize..300) {
            let adc = AdcConfig::new(bits, 1.0).unwrap();
            let codes = vec![0i16; n];
            let t = DigitizedTrace::new(codes, adc, 1.0).unwrap();
            for bps in 1..=bits {
                let s = super::super::pack_codes_to_bits(&t, bps).unwrap();
                prop_assert_eq!(s.len_bits(), n as u64 * bps as u64);
            }
        }
    }
}
