//! Stage composability: running stages individually against the pipeline's
//! persisted intermediates reproduces the pipeline's artifacts bit-for-bit.

use vqrng::dsp;
use vqrng::extract::{self, ToeplitzSpec};
use vqrng::noisesim;
use vqrng::pipeline::{run_pipeline, PipelineConfig};
use vqrng::sigio::{self, Trace};

#[test]
fn stages_compose_bit_for_bit() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let mut cfg = PipelineConfig::repro_paper(&out, 4242);
    cfg.simulate.count = 1 << 21;
    cfg.test.sequence_len = 1 << 18;
    cfg.test.max_bits = 4 << 18;
    cfg.equalize.taps = 257;
    cfg.entropy.sweep_start = 3.0;
    cfg.entropy.sweep_stop = 5.0;
    cfg.entropy.sweep_step = 0.5;
    run_pipeline(&cfg).unwrap();

    // simulate stage: direct generation writes the same trace bytes
    let model = cfg.simulate.model(cfg.global.seed);
    let (measured, electronic) = noisesim::generate(&model, cfg.simulate.count as usize).unwrap();
    let solo = dir.path().join("solo_measured.trc");
    sigio::write_trace(&solo, &Trace::Analog(measured.clone())).unwrap();
    assert_eq!(
        std::fs::read(&solo).unwrap(),
        std::fs::read(out.join("measured.trc")).unwrap(),
        "standalone simulate differs from pipeline trace"
    );
    let solo_e = dir.path().join("solo_electronic.trc");
    sigio::write_trace(&solo_e, &Trace::Analog(electronic)).unwrap();
    assert_eq!(
        std::fs::read(&solo_e).unwrap(),
        std::fs::read(out.join("electronic.trc")).unwrap()
    );

    // spectral stage: Welch over the stored trace reproduces the stored CSV
    let loaded = match sigio::read_trace(out.join("measured.trc")).unwrap() {
        Trace::Analog(t) => t,
        _ => unreachable!(),
    };
    let psd = dsp::welch_psd(&loaded, cfg.equalize.welch_segment, cfg.equalize.welch_overlap, None)
        .unwrap();
    let solo_psd = dir.path().join("solo_psd.csv");
    sigio::write_spectrum_csv(&solo_psd, &psd).unwrap();
    assert_eq!(
        std::fs::read(&solo_psd).unwrap(),
        std::fs::read(out.join("psd_measured.csv")).unwrap(),
        "standalone PSD differs from pipeline CSV"
    );

    // equalize stage: same design applied to the stored trace reproduces the
    // stored equalized trace
    let filt =
        dsp::design_equalizer(&psd, cfg.equalize.f_eq_hz, cfg.equalize.taps, cfg.equalize.floor_db)
            .unwrap();
    let equalized = dsp::apply_fir(&loaded, &filt).unwrap();
    let solo_eq = dir.path().join("solo_eq.trc");
    sigio::write_trace(&solo_eq, &Trace::Analog(equalized)).unwrap();
    assert_eq!(
        std::fs::read(&solo_eq).unwrap(),
        std::fs::read(out.join("measured_eq.trc")).unwrap(),
        "standalone equalize differs from pipeline trace"
    );

    // extract stage: hashing the stored raw bits with the recorded geometry
    // reproduces the stored output bits
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("extract_report.json")).unwrap())
            .unwrap();
    let n_in = report["n_in_bits"].as_u64().unwrap() as usize;
    let m_out = report["m_out_bits"].as_u64().unwrap() as usize;
    let raw = sigio::read_bits(out.join("raw_bits.bin")).unwrap();
    let spec = ToeplitzSpec::from_u64_seed(n_in, m_out, cfg.global.seed).unwrap();
    let (bits, _) = extract::extract_stream(&raw, &spec).unwrap();
    let solo_bits = dir.path().join("solo_extracted.bin");
    sigio::write_bits(&solo_bits, &bits).unwrap();
    assert_eq!(
        std::fs::read(&solo_bits).unwrap(),
        std::fs::read(out.join("extracted_bits.bin")).unwrap(),
        "standalone extraction differs from pipeline bits"
    );
}
