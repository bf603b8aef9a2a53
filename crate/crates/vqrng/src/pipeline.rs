//! End-to-end orchestration: simulate -> characterize -> equalize ->
//! entropy/optimize -> extract -> test, with a single global seed, bounded
//! memory, and deterministic artifacts.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::detchar;
use crate::dsp::{self, WelchAccumulator};
use crate::entropy::{self, EntropyConfig, Objective};
use crate::extract::{self, ToeplitzSpec};
use crate::noisesim::{self, DetectorModel, ResponseShape, CHUNK_LEN};
use crate::rndtest;
use crate::sigio::{self, AdcConfig, NoiseTrace, Spectrum, Trace};

/// Pipeline stage identifiers, used for error attribution and exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Config,
    Simulate,
    Characterize,
    Equalize,
    Entropy,
    Extract,
    Test,
}

impl Stage {
    pub fn exit_code(self) -> i32 {
        match self {
            Stage::Config => 1,
            Stage::Simulate => 2,
            Stage::Characterize => 3,
            Stage::Equalize => 4,
            Stage::Entropy => 5,
            Stage::Extract => 6,
            Stage::Test => 7,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Stage::Config => "config",
            Stage::Simulate => "simulate",
            Stage::Characterize => "characterize",
            Stage::Equalize => "equalize",
            Stage::Entropy => "entropy",
            Stage::Extract => "extract",
            Stage::Test => "test",
        }
    }
}

#[derive(Debug, thiserror::Error)]
#[error("stage {}: {message}", stage.name())]
pub struct PipelineError {
    pub stage: Stage,
    pub message: String,
}

fn err_at<E: std::fmt::Display>(stage: Stage) -> impl Fn(E) -> PipelineError {
    move |e| PipelineError { stage, message: e.to_string() }
}

// --- configuration -----------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub sigma_q_mv: f64,
    pub qcnr_db: f64,
    pub f_3db_hz: f64,
    pub f_lpf_hz: f64,
    pub shape: ResponseShape,
    pub sample_rate_hz: f64,
    pub count: u64,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            sigma_q_mv: 39.3,
            qcnr_db: 9.51,
            f_3db_hz: 2.4e9,
            f_lpf_hz: 3.12e9,
            shape: ResponseShape::TwoPole,
            sample_rate_hz: 6.25e9,
            count: 100_000_000,
        }
    }
}

impl SimulateConfig {
    pub fn model(&self, seed: u64) -> DetectorModel {
        let sigma_q = self.sigma_q_mv * 1e-3;
        DetectorModel {
            sigma_q,
            sigma_e: sigma_q * 10f64.powf(-self.qcnr_db / 20.0),
            f_3db: self.f_3db_hz,
            f_lpf: self.f_lpf_hz,
            shape: self.shape,
            sample_rate: self.sample_rate_hz,
            seed,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdcSection {
    pub bits: u8,
    /// Fixed half-range in mV; when absent the optimizer's range is used.
    pub range_mv: Option<f64>,
}

impl Default for AdcSection {
    fn default() -> Self {
        Self { bits: 12, range_mv: None }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CharacterizeConfig {
    pub photocurrent_a: f64,
    pub responsivity_a_per_w: f64,
    pub impedance_ohms: f64,
    pub density_freq_hz: f64,
    pub ref_band_lo_hz: f64,
    pub ref_band_hi_hz: f64,
    /// Bandwidth-matching LPF cutoff for the trace-based QCNR.
    pub f_cut_hz: f64,
}

impl Default for CharacterizeConfig {
    fn default() -> Self {
        Self {
            photocurrent_a: 1e-3,
            responsivity_a_per_w: 0.9,
            impedance_ohms: 50.0,
            density_freq_hz: 100e6,
            ref_band_lo_hz: 50e6,
            ref_band_hi_hz: 150e6,
            f_cut_hz: 2.4e9,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EqualizeConfig {
    pub f_eq_hz: f64,
    pub taps: usize,
    pub floor_db: f64,
    pub welch_segment: usize,
    pub welch_overlap: f64,
    pub autocorr_lags: usize,
}

impl Default for EqualizeConfig {
    fn default() -> Self {
        Self {
            f_eq_hz: 3.0e9,
            taps: 1025,
            floor_db: -40.0,
            welch_segment: 1 << 14,
            welch_overlap: 0.5,
            autocorr_lags: 32,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EntropySection {
    pub beta: f64,
    pub integration_tolerance: f64,
    pub objective: Objective,
    pub sweep_start: f64,
    pub sweep_stop: f64,
    pub sweep_step: f64,
}

impl Default for EntropySection {
    fn default() -> Self {
        Self {
            beta: 5.0,
            integration_tolerance: 1e-8,
            objective: Objective::Avg,
            sweep_start: 1.0,
            sweep_stop: 8.0,
            sweep_step: 0.1,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractSection {
    pub block_samples: usize,
    /// epsilon = 2^log2_epsilon
    pub log2_epsilon: f64,
}

impl Default for ExtractSection {
    fn default() -> Self {
        Self { block_samples: 4096, log2_epsilon: -50.0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TestSection {
    pub sequence_len: u64,
    pub alpha: f64,
    /// Battery input cap in bits.
    pub max_bits: u64,
}

impl Default for TestSection {
    fn default() -> Self {
        Self { sequence_len: 1_000_000, alpha: 0.01, max_bits: 100_000_000 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GlobalSection {
    pub seed: u64,
}

impl Default for GlobalSection {
    fn default() -> Self {
        Self { seed: 20260809 }
    }
}

/// Full pipeline configuration. TOML keys are namespaced `stage.parameter`;
/// unset keys take the reproduction preset's defaults.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub simulate: SimulateConfig,
    pub adc: AdcSection,
    pub characterize: CharacterizeConfig,
    pub equalize: EqualizeConfig,
    pub entropy: EntropySection,
    pub extract: ExtractSection,
    pub test: TestSection,
    pub output: OutputSection,
    pub global: GlobalSection,
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        toml::from_str(text).map_err(err_at(Stage::Config))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(&path).map_err(|e| PipelineError {
            stage: Stage::Config,
            message: format!("cannot read {}: {e}", path.as_ref().display()),
        })?;
        Self::from_toml(&text)
    }

    /// The one-command reproduction preset: defaults plus an output
    /// directory and global seed.
    pub fn repro_paper(out_dir: impl Into<PathBuf>, seed: u64) -> Self {
        let mut cfg = Self::default();
        cfg.output.dir = out_dir.into();
        cfg.global.seed = seed;
        cfg
    }

    fn validate(&self) -> Result<(), PipelineError> {
        let e = err_at(Stage::Config);
        if self.simulate.count == 0 {
            return Err(e("simulate.count must be positive".into()));
        }
        if self.equalize.f_eq_hz <= 0.0 || self.equalize.f_eq_hz >= self.simulate.sample_rate_hz / 2.0 {
            return Err(e(format!(
                "equalize.f_eq_hz must be within (0, Nyquist), got {}",
                self.equalize.f_eq_hz
            )));
        }
        if self.extract.block_samples == 0 {
            return Err(e("extract.block_samples must be positive".into()));
        }
        AdcConfig::new(self.adc.bits, self.adc.range_mv.unwrap_or(100.0) * 1e-3)
            .map_err(|err| e(err.to_string()))?;
        self.simulate.model(self.global.seed).validate().map_err(|err| e(err.to_string()))?;
        Ok(())
    }
}

// --- summary -----------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct MomentRow {
    pub trace: &'static str,
    pub stage: &'static str,
    pub mean: f64,
    pub std: f64,
    pub skewness: f64,
    pub kurtosis: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PipelineSummary {
    pub seed: u64,
    pub count: u64,
    pub sample_rate_hz: f64,
    pub qcnr_programmed_db: f64,
    pub qcnr_pre_db: f64,
    pub qcnr_post_db: f64,
    pub sigma_q_pre: f64,
    pub sigma_e_pre: f64,
    pub sigma_q_post: f64,
    pub sigma_e_post: f64,
    pub f_3db_hz: f64,
    pub rho1_pre: f64,
    pub rho1_post: f64,
    pub optimal_ratio: f64,
    pub range_volts: f64,
    pub h_avg: f64,
    pub h_worst: f64,
    pub rate_avg_bps: f64,
    pub rate_worst_bps: f64,
    pub saturation_count: u64,
    pub extract_blocks: u64,
    pub extract_m_out: u64,
    pub extract_output_bits: u64,
    pub test_all_pass: bool,
    pub test_proportions: Vec<(String, f64)>,
    pub moments: Vec<MomentRow>,
    pub artifacts: Vec<String>,
}

// --- streaming statistics helpers ---------------------------------------

/// Raw power sums for mean/std/skewness/kurtosis plus a fixed histogram.
struct RunningStats {
    n: u64,
    s1: f64,
    s2: f64,
    s3: f64,
    s4: f64,
    hist_lo: f64,
    hist_hi: f64,
    hist: Vec<u64>,
}

impl RunningStats {
    fn new(hist_half_range: f64, bins: usize) -> Self {
        Self {
            n: 0,
            s1: 0.0,
            s2: 0.0,
            s3: 0.0,
            s4: 0.0,
            hist_lo: -hist_half_range,
            hist_hi: hist_half_range,
            hist: vec![0; bins],
        }
    }

    fn push(&mut self, x: &[f64]) {
        let nbins = self.hist.len() as f64;
        let width = (self.hist_hi - self.hist_lo) / nbins;
        for &v in x {
            let v2 = v * v;
            self.s1 += v;
            self.s2 += v2;
            self.s3 += v2 * v;
            self.s4 += v2 * v2;
            let idx = (((v - self.hist_lo) / width).floor() as i64).clamp(0, self.hist.len() as i64 - 1);
            self.hist[idx as usize] += 1;
        }
        self.n += x.len() as u64;
    }

    fn moments(&self) -> (f64, f64, f64, f64) {
        let n = self.n as f64;
        let mean = self.s1 / n;
        let m2 = self.s2 / n - mean * mean;
        let m3 = self.s3 / n - 3.0 * mean * self.s2 / n + 2.0 * mean.powi(3);
        let m4 = self.s4 / n - 4.0 * mean * self.s3 / n + 6.0 * mean * mean * self.s2 / n
            - 3.0 * mean.powi(4);
        (mean, m2.sqrt(), m3 / m2.powf(1.5), m4 / (m2 * m2))
    }

    fn std(&self) -> f64 {
        self.moments().1
    }

    fn histogram_rows(&self) -> Vec<Vec<f64>> {
        let nbins = self.hist.len() as f64;
        let width = (self.hist_hi - self.hist_lo) / nbins;
        self.hist
            .iter()
            .enumerate()
            .map(|(i, &c)| vec![self.hist_lo + (i as f64 + 0.5) * width, c as f64])
            .collect()
    }
}

fn write_json(path: &Path, value: &impl Serialize, stage: Stage) -> Result<(), PipelineError> {
    let mut text = serde_json::to_string_pretty(value).map_err(err_at(stage))?;
    text.push('\n');
    std::fs::write(path, text).map_err(err_at(stage))
}

fn autocorr_rows(rho: &[f64]) -> Vec<Vec<f64>> {
    rho.iter().enumerate().map(|(k, &r)| vec![k as f64, r]).collect()
}

// --- the pipeline --------------------------------------------------------

/// Execute all stages, persisting every intermediate artifact under
/// `config.output.dir`. Deterministic for a fixed `global.seed`, including
/// across worker-thread counts.
pub fn run_pipeline(config: &PipelineConfig) -> Result<PipelineSummary, PipelineError> {
    config.validate()?;
    let out = &config.output.dir;
    std::fs::create_dir_all(out).map_err(err_at(Stage::Config))?;
    let mut artifacts: Vec<String> = Vec::new();
    let mut track = |name: &str| -> PathBuf {
        artifacts.push(name.to_string());
        out.join(name)
    };

    // ---- stage: simulate (streaming) ----
    let sim = &config.simulate;
    let model = sim.model(config.global.seed);
    let count = sim.count;
    let fs = sim.sample_rate_hz;
    let e_sim = err_at::<String>(Stage::Simulate);

    let seg = config.equalize.welch_segment.min((count as usize).next_power_of_two() / 2).max(256);
    let mut psd_m_acc = WelchAccumulator::new(seg, config.equalize.welch_overlap)
        .map_err(|e| e_sim(e.to_string()))?;
    let mut psd_e_acc = WelchAccumulator::new(seg, config.equalize.welch_overlap)
        .map_err(|e| e_sim(e.to_string()))?;
    let sigma_m_nominal = (model.sigma_q.powi(2) + model.sigma_e.powi(2)).sqrt();
    let mut stats_m = RunningStats::new(5.0 * sigma_m_nominal, 201);
    let mut stats_e = RunningStats::new(5.0 * sigma_m_nominal, 201);

    let measured_path = track("measured.trc");
    let electronic_path = track("electronic.trc");
    {
        let mut wm = sigio::file::TraceWriter::analog(&measured_path, fs, count)
            .map_err(|e| e_sim(e.to_string()))?;
        let mut we = sigio::file::TraceWriter::analog(&electronic_path, fs, count)
            .map_err(|e| e_sim(e.to_string()))?;
        let n_chunks = (count as usize).div_ceil(CHUNK_LEN) as u64;
        let mut remaining = count as usize;
        for k in 0..n_chunks {
            let (m, e) = noisesim::generate_chunk(&model, k);
            let take = remaining.min(CHUNK_LEN);
            wm.push_samples(&m[..take]).map_err(|e| e_sim(e.to_string()))?;
            we.push_samples(&e[..take]).map_err(|e| e_sim(e.to_string()))?;
            psd_m_acc.push(&m[..take]);
            psd_e_acc.push(&e[..take]);
            stats_m.push(&m[..take]);
            stats_e.push(&e[..take]);
            remaining -= take;
        }
        wm.finish().map_err(|e| e_sim(e.to_string()))?;
        we.finish().map_err(|e| e_sim(e.to_string()))?;
    }
    let psd_measured = psd_m_acc.finalize(fs).map_err(|e| e_sim(e.to_string()))?;
    let psd_electronic = psd_e_acc.finalize(fs).map_err(|e| e_sim(e.to_string()))?;
    sigio::write_spectrum_csv(track("psd_measured.csv"), &psd_measured)
        .map_err(|e| e_sim(e.to_string()))?;
    sigio::write_spectrum_csv(track("psd_electronic.csv"), &psd_electronic)
        .map_err(|e| e_sim(e.to_string()))?;
    sigio::write_curve_csv(
        track("hist_measured.csv"),
        "voltage (V),count",
        &stats_m.histogram_rows(),
    )
    .map_err(|e| e_sim(e.to_string()))?;
    sigio::write_curve_csv(
        track("hist_electronic.csv"),
        "voltage (V),count",
        &stats_e.histogram_rows(),
    )
    .map_err(|e| e_sim(e.to_string()))?;

    let sigma_m_pre = stats_m.std();
    let sigma_e_pre = stats_e.std();
    let sigma_q_pre = (sigma_m_pre.powi(2) - sigma_e_pre.powi(2)).max(0.0).sqrt();
    let qcnr_pre = 20.0 * (sigma_q_pre / sigma_e_pre).log10();
    let (mean_m, std_m, skew_m, kurt_m) = stats_m.moments();
    let (mean_e, std_e, skew_e, kurt_e) = stats_e.moments();
    let mut moment_rows = vec![
        MomentRow { trace: "measured", stage: "raw", mean: mean_m, std: std_m, skewness: skew_m, kurtosis: kurt_m },
        MomentRow { trace: "electronic", stage: "raw", mean: mean_e, std: std_e, skewness: skew_e, kurtosis: kurt_e },
    ];

    // ---- stage: characterize ----
    let ch = &config.characterize;
    let e_ch = err_at::<String>(Stage::Characterize);
    let detector_report = characterize_from_pipeline(
        &psd_measured,
        &psd_electronic,
        &measured_path,
        &electronic_path,
        ch,
        qcnr_pre,
    )
    .map_err(|e| e_ch(e.to_string()))?;
    write_json(&track("detector_report.json"), &detector_report, Stage::Characterize)?;

    // ---- stage: equalize ----
    let eq = &config.equalize;
    let e_eq = err_at::<String>(Stage::Equalize);
    let equalizer = dsp::design_equalizer(&psd_measured, eq.f_eq_hz, eq.taps, eq.floor_db)
        .map_err(|e| e_eq(e.to_string()))?;

    // electronic first, so only one long trace lives in memory at a time
    let (sigma_e_post, _) = {
        let trace = load_analog(&electronic_path, "electronic").map_err(&e_eq)?;
        let eq_trace = dsp::apply_fir(&trace, &equalizer).map_err(|e| e_eq(e.to_string()))?;
        drop(trace);
        let mut stats = RunningStats::new(5.0 * sigma_m_nominal, 201);
        stats.push(&eq_trace.samples);
        let psd = dsp::welch_psd(&eq_trace, seg, eq.welch_overlap, None)
            .map_err(|e| e_eq(e.to_string()))?;
        sigio::write_spectrum_csv(track("psd_electronic_eq.csv"), &psd)
            .map_err(|e| e_eq(e.to_string()))?;
        sigio::write_curve_csv(track("hist_electronic_eq.csv"), "voltage (V),count", &stats.histogram_rows())
            .map_err(|e| e_eq(e.to_string()))?;
        write_trace_whole(track("electronic_eq.trc"), &eq_trace).map_err(&e_eq)?;
        let (mean, std, skew, kurt) = stats.moments();
        moment_rows.push(MomentRow {
            trace: "electronic",
            stage: "equalized",
            mean,
            std,
            skewness: skew,
            kurtosis: kurt,
        });
        (std, psd)
    };

    let measured_raw = load_analog(&measured_path, "measured").map_err(&e_eq)?;
    let rho_pre = dsp::autocorrelation(&Trace::Analog(measured_raw.clone()), eq.autocorr_lags)
        .map_err(|e| e_eq(e.to_string()))?;
    sigio::write_curve_csv(track("autocorr_measured.csv"), "lag,rho", &autocorr_rows(&rho_pre))
        .map_err(|e| e_eq(e.to_string()))?;

    let equalized = dsp::apply_fir(&measured_raw, &equalizer).map_err(|e| e_eq(e.to_string()))?;
    drop(measured_raw);
    let rho_post = dsp::autocorrelation(&Trace::Analog(equalized.clone()), eq.autocorr_lags)
        .map_err(|e| e_eq(e.to_string()))?;
    sigio::write_curve_csv(track("autocorr_measured_eq.csv"), "lag,rho", &autocorr_rows(&rho_post))
        .map_err(|e| e_eq(e.to_string()))?;
    let psd_measured_eq =
        dsp::welch_psd(&equalized, seg, eq.welch_overlap, None).map_err(|e| e_eq(e.to_string()))?;
    sigio::write_spectrum_csv(track("psd_measured_eq.csv"), &psd_measured_eq)
        .map_err(|e| e_eq(e.to_string()))?;
    let mut stats_m_eq = RunningStats::new(5.0 * sigma_m_nominal, 201);
    stats_m_eq.push(&equalized.samples);
    sigio::write_curve_csv(track("hist_measured_eq.csv"), "voltage (V),count", &stats_m_eq.histogram_rows())
        .map_err(|e| e_eq(e.to_string()))?;
    write_trace_whole(track("measured_eq.trc"), &equalized).map_err(&e_eq)?;
    let (mean_meq, sigma_m_post, skew_meq, kurt_meq) = stats_m_eq.moments();
    moment_rows.push(MomentRow {
        trace: "measured",
        stage: "equalized",
        mean: mean_meq,
        std: sigma_m_post,
        skewness: skew_meq,
        kurtosis: kurt_meq,
    });
    write_moments_csv(&track("moments.csv"), &moment_rows).map_err(&e_eq)?;

    if sigma_e_post >= sigma_m_post {
        return Err(e_eq(format!(
            "equalized electronic std {sigma_e_post} not below measured std {sigma_m_post}"
        )));
    }
    let sigma_q_post = (sigma_m_post.powi(2) - sigma_e_post.powi(2)).sqrt();
    let qcnr_post = 20.0 * (sigma_q_post / sigma_e_post).log10();

    // ---- stage: entropy ----
    let ent = &config.entropy;
    let e_en = err_at::<String>(Stage::Entropy);
    let n_steps = ((ent.sweep_stop - ent.sweep_start) / ent.sweep_step).round() as usize;
    let ratios: Vec<f64> =
        (0..=n_steps).map(|i| ent.sweep_start + i as f64 * ent.sweep_step).collect();
    let sweep = entropy::sweep_range(sigma_q_post, sigma_e_post, config.adc.bits, &ratios)
        .map_err(|e| e_en(e.to_string()))?;
    let sweep_rows: Vec<Vec<f64>> =
        sweep.iter().map(|p| vec![p.ratio, p.h_avg, p.h_worst]).collect();
    sigio::write_curve_csv(
        track("sweep.csv"),
        "ratio (S/sigma_Q),h_avg (bits),h_worst (bits)",
        &sweep_rows,
    )
    .map_err(|e| e_en(e.to_string()))?;

    let optimal = entropy::optimal_range(sigma_q_post, sigma_e_post, config.adc.bits, ent.objective)
        .map_err(|e| e_en(e.to_string()))?;
    write_json(&track("optimal_range.json"), &optimal, Stage::Entropy)?;

    let range = config.adc.range_mv.map(|mv| mv * 1e-3).unwrap_or(optimal.range);
    let adc = AdcConfig::new(config.adc.bits, range).map_err(|e| e_en(e.to_string()))?;
    let mut cfg_at_range = EntropyConfig::new(sigma_q_post, sigma_e_post, adc)
        .map_err(|e| e_en(e.to_string()))?;
    cfg_at_range.e_bound_multiplier = ent.beta;
    cfg_at_range.integration_tolerance = ent.integration_tolerance;
    let entropy_report = entropy::EntropyReport::evaluate(&cfg_at_range, Some(fs))
        .map_err(|e| e_en(e.to_string()))?;
    write_json(&track("entropy_report.json"), &entropy_report, Stage::Entropy)?;

    // ---- stage: extract ----
    let ex = &config.extract;
    let e_ex = err_at::<String>(Stage::Extract);
    let digitized = noisesim::adc_quantize(&equalized, adc);
    drop(equalized);
    write_trace_whole_digitized(track("digitized.trc"), &digitized).map_err(&e_ex)?;
    let saturation_count = digitized.saturation_count;

    let raw_bits =
        sigio::pack_codes_to_bits(&digitized, config.adc.bits).map_err(|e| e_ex(e.to_string()))?;
    drop(digitized);
    sigio::write_bits(track("raw_bits.bin"), &raw_bits).map_err(|e| e_ex(e.to_string()))?;

    let n_in = ex.block_samples * config.adc.bits as usize;
    let epsilon = 2f64.powf(ex.log2_epsilon);
    let h_for_sizing = match ent.objective {
        Objective::Avg => entropy_report.h_avg,
        Objective::Worst => entropy_report.h_worst,
    };
    let m_out = extract::output_length(n_in as u64, h_for_sizing, config.adc.bits, epsilon)
        .map_err(|e| e_ex(e.to_string()))?;
    if m_out == 0 {
        return Err(e_ex("computed output length is zero; block too small for epsilon".into()));
    }
    let spec = ToeplitzSpec::from_u64_seed(n_in, m_out as usize, config.global.seed)
        .map_err(|e| e_ex(e.to_string()))?;
    let (extracted, stream_summary) =
        extract::extract_stream(&raw_bits, &spec).map_err(|e| e_ex(e.to_string()))?;
    drop(raw_bits);
    sigio::write_bits(track("extracted_bits.bin"), &extracted).map_err(|e| e_ex(e.to_string()))?;
    #[derive(Serialize)]
    struct ExtractReport {
        n_in_bits: usize,
        m_out_bits: u64,
        blocks: u64,
        output_bits: u64,
        discarded_bits: u64,
        log2_epsilon: f64,
        h_per_sample: f64,
    }
    write_json(
        &track("extract_report.json"),
        &ExtractReport {
            n_in_bits: n_in,
            m_out_bits: m_out,
            blocks: stream_summary.blocks,
            output_bits: stream_summary.output_bits,
            discarded_bits: stream_summary.discarded_bits,
            log2_epsilon: ex.log2_epsilon,
            h_per_sample: h_for_sizing,
        },
        Stage::Extract,
    )?;

    // ---- stage: test ----
    let ts = &config.test;
    let e_ts = err_at::<String>(Stage::Test);
    let test_bits_len = extracted.len_bits().min(ts.max_bits);
    let battery_input = extracted.slice(0, test_bits_len);
    drop(extracted);
    let test_report = rndtest::run_battery(&battery_input, ts.sequence_len, ts.alpha)
        .map_err(|e| e_ts(e.to_string()))?;
    write_json(&track("test_report.json"), &test_report, Stage::Test)?;
    std::fs::write(track("test_report.txt"), test_report.to_table()).map_err(|e| e_ts(e.to_string()))?;

    // ---- summary ----
    let summary = PipelineSummary {
        seed: config.global.seed,
        count,
        sample_rate_hz: fs,
        qcnr_programmed_db: model.programmed_qcnr_db(),
        qcnr_pre_db: qcnr_pre,
        qcnr_post_db: qcnr_post,
        sigma_q_pre,
        sigma_e_pre,
        sigma_q_post,
        sigma_e_post,
        f_3db_hz: detector_report.f_3db,
        rho1_pre: rho_pre.get(1).copied().unwrap_or(0.0),
        rho1_post: rho_post.get(1).copied().unwrap_or(0.0),
        optimal_ratio: optimal.ratio,
        range_volts: range,
        h_avg: entropy_report.h_avg,
        h_worst: entropy_report.h_worst,
        rate_avg_bps: entropy_report.rate_avg.unwrap_or(0.0),
        rate_worst_bps: entropy_report.rate_worst.unwrap_or(0.0),
        saturation_count,
        extract_blocks: stream_summary.blocks,
        extract_m_out: m_out,
        extract_output_bits: stream_summary.output_bits,
        test_all_pass: test_report.all_pass,
        test_proportions: test_report
            .streams
            .iter()
            .map(|s| (s.name.clone(), s.proportion))
            .collect(),
        moments: moment_rows,
        artifacts: {
            let mut a = artifacts.clone();
            a.push("summary.json".to_string());
            a
        },
    };
    write_json(&out.join("summary.json"), &summary, Stage::Test)?;
    Ok(summary)
}

fn load_analog(path: &Path, label: &str) -> Result<NoiseTrace, String> {
    match sigio::read_trace(path).map_err(|e| e.to_string())? {
        Trace::Analog(mut t) => {
            t.label = label.to_string();
            Ok(t)
        }
        Trace::Digitized(_) => Err(format!("{} holds a digitized trace", path.display())),
    }
}

fn write_trace_whole(path: PathBuf, t: &NoiseTrace) -> Result<(), String> {
    sigio::write_trace(path, &Trace::Analog(t.clone())).map_err(|e| e.to_string())
}

fn write_trace_whole_digitized(path: PathBuf, t: &crate::sigio::DigitizedTrace) -> Result<(), String> {
    sigio::write_trace(path, &Trace::Digitized(t.clone())).map_err(|e| e.to_string())
}

fn write_moments_csv(path: &Path, rows: &[MomentRow]) -> Result<(), String> {
    let mut text = String::from("trace,stage,mean (V),std (V),skewness,kurtosis\n");
    for r in rows {
        writeln!(text, "{},{},{},{},{},{}", r.trace, r.stage, r.mean, r.std, r.skewness, r.kurtosis)
            .unwrap();
    }
    std::fs::write(path, text).map_err(|e| e.to_string())
}

/// Build the detector report the characterize stage emits. Density values
/// come from the PSDs; the bandwidth-matched QCNR is evaluated on a bounded
/// prefix of the traces so memory stays flat.
fn characterize_from_pipeline(
    psd_measured: &Spectrum,
    psd_electronic: &Spectrum,
    measured_path: &Path,
    electronic_path: &Path,
    cfg: &CharacterizeConfig,
    full_band_qcnr_db: f64,
) -> Result<detchar::DetectorReport, String> {
    let u_m = psd_measured.value_at(cfg.density_freq_hz).max(0.0).sqrt();
    let u_e = psd_electronic.value_at(cfg.density_freq_hz).max(0.0).sqrt();
    let i_q = detchar::shot_current_density(cfg.photocurrent_a).map_err(|e| e.to_string())?;
    let transimpedance =
        detchar::equivalent_transimpedance(u_m, u_e, i_q).map_err(|e| e.to_string())?;
    let u_q = (u_m * u_m - u_e * u_e).sqrt();
    let equivalent_current =
        detchar::equivalent_electronic_current(u_e, transimpedance).map_err(|e| e.to_string())?;
    let i_e = detchar::shot_current_density(equivalent_current).map_err(|e| e.to_string())?;
    let nep = detchar::nep(equivalent_current, cfg.responsivity_a_per_w).map_err(|e| e.to_string())?;
    let f_3db = detchar::bandwidth_3db(psd_measured, (cfg.ref_band_lo_hz, cfg.ref_band_hi_hz))
        .map_err(|e| e.to_string())?;

    // bandwidth-matched QCNR on a prefix of the stored traces
    const QCNR_PREFIX: usize = 1 << 22;
    let m = prefix_of(measured_path, QCNR_PREFIX)?;
    let e = prefix_of(electronic_path, QCNR_PREFIX)?;
    let qcnr_db = if cfg.f_cut_hz < m.sample_rate / 2.0 {
        detchar::qcnr_from_traces(&m, &e, cfg.f_cut_hz).map_err(|err| err.to_string())?
    } else {
        full_band_qcnr_db
    };

    Ok(detchar::DetectorReport {
        u_m,
        u_e,
        u_q,
        i_q,
        i_e,
        photocurrent: cfg.photocurrent_a,
        equivalent_electronic_current: equivalent_current,
        transimpedance,
        qcnr_db,
        nep,
        f_3db,
        responsivity: cfg.responsivity_a_per_w,
    })
}

fn prefix_of(path: &Path, max_len: usize) -> Result<NoiseTrace, String> {
    let t = load_analog(path, "prefix")?;
    let take = t.samples.len().min(max_len);
    Ok(NoiseTrace {
        samples: t.samples[..take].to_vec(),
        sample_rate: t.sample_rate,
        label: t.label,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_defaults_match_reproduction_preset() {
        let cfg = PipelineConfig::default();
        assert_eq!(cfg.simulate.sigma_q_mv, 39.3);
        assert_eq!(cfg.simulate.qcnr_db, 9.51);
        assert_eq!(cfg.simulate.sample_rate_hz, 6.25e9);
        assert_eq!(cfg.adc.bits, 12);
        assert_eq!(cfg.equalize.f_eq_hz, 3.0e9);
        assert_eq!(cfg.entropy.beta, 5.0);
        assert_eq!(cfg.extract.block_samples, 4096);
    }

    #[test]
    fn toml_roundtrip_and_overrides() {
        let text = r#"
            [simulate]
            count = 4194304
            qcnr_db = 8.0

            [output]
            dir = "/tmp/x"

            [global]
            seed = 7
        "#;
        let cfg = PipelineConfig::from_toml(text).unwrap();
        assert_eq!(cfg.simulate.count, 4_194_304);
        assert_eq!(cfg.simulate.qcnr_db, 8.0);
        assert_eq!(cfg.simulate.sigma_q_mv, 39.3); // default preserved
        assert_eq!(cfg.global.seed, 7);
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = "[simulate]\nnot_a_key = 1\n";
        assert!(PipelineConfig::from_toml(text).is_err());
    }

    #[test]
    fn validation_names_stage() {
        let mut cfg = PipelineConfig::default();
        cfg.simulate.count = 0;
        let err = run_pipeline(&cfg).unwrap_err();
        assert_eq!(err.stage, Stage::Config);
        assert_eq!(err.stage.exit_code(), 1);
    }

    #[test]
    fn small_pipeline_end_to_end() {
        // compact run: enough samples for the battery minimum sequence
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = PipelineConfig::repro_paper(dir.path().join("run"), 99);
        cfg.simulate.count = 1 << 21; // 2 Mi samples
        cfg.test.sequence_len = 1 << 18;
        cfg.test.max_bits = 4 << 18;
        cfg.equalize.taps = 257;
        cfg.entropy.sweep_start = 3.0;
        cfg.entropy.sweep_stop = 6.0;
        cfg.entropy.sweep_step = 0.5;
        let summary = run_pipeline(&cfg).unwrap();
        assert!(summary.qcnr_post_db < summary.qcnr_pre_db);
        assert!(summary.h_worst <= summary.h_avg);
        assert!(summary.extract_output_bits > 0);
        for name in &summary.artifacts {
            assert!(dir.path().join("run").join(name).exists(), "missing artifact {name}");
        }
    }
}
