//! Software twin of a vacuum-fluctuation QRNG entropy source and its
//! post-processing chain.
//!
//! The crate models the full path from a balanced-homodyne noise record to
//! validated random bits:
//!
//! * [`sigio`] — traces, spectra, bitstreams and their on-disk formats
//! * [`noisesim`] — generative detector model and the saturating ADC
//! * [`detchar`] — detector characterization calculators (noise densities,
//!   transimpedance, QCNR, NEP, CMRR, 3 dB bandwidth)
//! * [`dsp`] — Welch PSD, FIR design, spectral equalization, autocorrelation,
//!   distribution moments
//! * [`entropy`] — conditional min-entropy estimators, ADC-range optimization,
//!   extractable-rate arithmetic
//! * [`extract`] — seeded Toeplitz hashing over GF(2)
//! * [`rndtest`] — a representative subset of the NIST SP 800-22 battery
//! * [`pipeline`] — end-to-end orchestration with reproducible seeding

pub mod detchar;
pub mod dsp;
pub mod entropy;
pub mod extract;
pub mod noisesim;
pub mod pipeline;
pub mod rndtest;
pub mod seeding;
pub mod sigio;

pub use sigio::{AdcConfig, BitStream, DigitizedTrace, NoiseTrace, Spectrum, SpectrumUnit, Trace};
