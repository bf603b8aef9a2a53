//! Black-box checks of the command-line surface: subcommands, file formats
//! and exit codes.

use std::path::Path;
use std::process::Command;

fn vqrng() -> Command {
    Command::new(env!("CARGO_BIN_EXE_vqrng"))
}

fn run_ok(cmd: &mut Command) -> String {
    let out = cmd.output().expect("spawn vqrng");
    assert!(
        out.status.success(),
        "command failed: {:?}\nstdout: {}\nstderr: {}",
        cmd,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn subcommand_chain_smoke() {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name).to_string_lossy().into_owned();

    run_ok(vqrng()
        .args(["simulate", "--count", "1048576", "--seed", "5"])
        .args(["--out-measured", &p("m.trc"), "--out-electronic", &p("e.trc")])
        .args(["--range-mv", "160", "--out-digitized", &p("d.trc")]));
    assert!(Path::new(&p("m.trc")).exists());
    assert!(Path::new(&p("d.trc")).exists());

    let stdout = run_ok(vqrng()
        .args(["characterize", "--measured-trace", &p("m.trc")])
        .args(["--electronic-trace", &p("e.trc"), "--json", &p("det.json")]));
    assert!(stdout.contains("QCNR"));
    let det: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(p("det.json")).unwrap()).unwrap();
    assert!(det["qcnr_db"].as_f64().unwrap() > 0.0);

    // characterize also accepts analyzer-style spectrum CSVs
    let spectrum_csv = |path: &str, level_dbm: f64, f_c: f64| {
        let mut text = String::from("frequency (Hz),power (dBm @ RBW 2000000 Hz)\n");
        for i in 0..2000 {
            let f = i as f64 * 2e6;
            let roll = 10.0 * (1.0 / (1.0 + (f / f_c).powi(2))).log10();
            text.push_str(&format!("{f},{}\n", level_dbm + roll));
        }
        std::fs::write(path, text).unwrap();
    };
    spectrum_csv(&p("spec_m.csv"), -48.35, 2.4e9);
    spectrum_csv(&p("spec_e.csv"), -58.8, 3.4e9);
    run_ok(vqrng()
        .args(["characterize", "--measured-spectrum", &p("spec_m.csv")])
        .args(["--electronic-spectrum", &p("spec_e.csv"), "--json", &p("det2.json")]));
    let det2: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(p("det2.json")).unwrap()).unwrap();
    let u_m = det2["u_m"].as_f64().unwrap();
    assert!((u_m / 6.05e-7 - 1.0).abs() < 0.01, "u_M from CSV = {u_m}");
    let f3 = det2["f_3db"].as_f64().unwrap();
    assert!((f3 / 2.4e9 - 1.0).abs() < 0.05, "f_3db from CSV = {f3}");

    run_ok(vqrng()
        .args(["equalize", "--input", &p("m.trc"), "--out", &p("m_eq.trc")])
        .args(["--taps", "257", "--bundle-dir", &p("bundle")]));
    for f in ["psd_before.csv", "psd_after.csv", "autocorr_before.csv", "autocorr_after.csv", "moments.csv"] {
        assert!(dir.path().join("bundle").join(f).exists(), "missing bundle file {f}");
    }

    let entropy_json = run_ok(vqrng().args([
        "entropy",
        "--sigma-q-mv",
        "39.3",
        "--sigma-e-mv",
        "16.9",
        "--range-mv",
        "160",
        "--rate",
        "6.25e9",
    ]));
    let report: serde_json::Value = serde_json::from_str(&entropy_json).unwrap();
    assert!(report["h_worst"].as_f64().unwrap() <= report["h_avg"].as_f64().unwrap());

    run_ok(vqrng()
        .args(["sweep", "--sigma-q-mv", "39.3", "--qcnr-db", "7.34", "--bits", "8"])
        .args(["--start", "2", "--stop", "6", "--step", "0.5", "--out", &p("sweep.csv")]));
    let sweep = std::fs::read_to_string(p("sweep.csv")).unwrap();
    assert!(sweep.lines().count() == 10, "sweep rows: {}", sweep.lines().count());
    assert!(sweep.starts_with("ratio (S/sigma_Q),h_avg (bits),h_worst (bits)"));

    let opt_json = run_ok(vqrng().args([
        "optimize",
        "--sigma-q-mv",
        "39.3",
        "--qcnr-db",
        "7.34",
        "--bits",
        "8",
        "--objective",
        "worst",
    ]));
    let opt: serde_json::Value = serde_json::from_str(&opt_json).unwrap();
    assert!(opt["ratio"].as_f64().unwrap() > 1.0);

    // pack bits by simulating through the library is covered elsewhere; here
    // feed the extractor random bytes
    let raw: Vec<u8> =
        (0..1u32 << 20).map(|i| i.wrapping_mul(2654435761).wrapping_add(i >> 7) as u8).collect();
    std::fs::write(p("raw.bin"), &raw).unwrap();
    run_ok(vqrng()
        .args(["extract", "--input", &p("raw.bin"), "--seed", "9", "--h-min", "9.9"])
        .args(["--out", &p("ext.bin"), "--json", &p("ext.json")]));
    let sidecar: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(p("ext.json")).unwrap()).unwrap();
    assert_eq!(sidecar["n_in_bits"].as_u64().unwrap(), 4096 * 12);
    assert!(sidecar["blocks"].as_u64().unwrap() > 0);
    assert!(sidecar.get("throughput").is_none(), "sidecar must stay deterministic");

    // battery on a known-good PRG stream
    use rand_chacha::rand_core::{RngCore, SeedableRng};
    let mut bytes = vec![0u8; (4u64 << 18) as usize / 8];
    rand_chacha::ChaCha12Rng::seed_from_u64(77).fill_bytes(&mut bytes);
    std::fs::write(p("good.bin"), &bytes).unwrap();
    let table = run_ok(vqrng().args([
        "test",
        "--input",
        &p("good.bin"),
        "--sequence-len",
        "262144",
        "--json",
        &p("test.json"),
    ]));
    assert!(table.contains("monobit_frequency"));
    assert!(table.contains("overall: PASS"));
}

#[test]
fn pipeline_subcommand_with_config_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.toml");
    std::fs::write(
        &config,
        r#"
[simulate]
count = 2097152

[equalize]
taps = 257

[entropy]
sweep_start = 3.0
sweep_stop = 5.0
sweep_step = 0.5

[test]
sequence_len = 262144
max_bits = 1048576
"#,
    )
    .unwrap();
    let out = dir.path().join("artifacts");
    run_ok(vqrng()
        .args(["pipeline", "--config"])
        .arg(&config)
        .args(["--seed", "11"])
        .arg("--out-dir")
        .arg(&out));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["seed"].as_u64().unwrap(), 11);
    assert_eq!(summary["count"].as_u64().unwrap(), 2_097_152);
    assert!(summary["qcnr_post_db"].as_f64().unwrap() < summary["qcnr_pre_db"].as_f64().unwrap());
}

#[test]
fn exit_codes_identify_failing_stage() {
    // config stage: unreadable file -> exit 1
    let status = vqrng()
        .args(["pipeline", "--config", "/nonexistent/nope.toml"])
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(1));

    // extract stage: missing input -> exit 6
    let status = vqrng()
        .args(["extract", "--input", "/nonexistent/raw.bin", "--seed", "1", "--h-min", "9.9"])
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(6));

    // test stage: unreadable input -> exit 7
    let status = vqrng()
        .args(["test", "--input", "/nonexistent/bits.bin"])
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(7));

    // equalize stage: bad trace -> exit 4
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.trc");
    std::fs::write(&bad, b"NOPE").unwrap();
    let status = vqrng().args(["equalize", "--input"]).arg(&bad).output().unwrap();
    assert_eq!(status.status.code(), Some(4));
}
