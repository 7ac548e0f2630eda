//! Config-driven end-to-end pipeline: simulate/ingest -> featurize ->
//! transform -> train -> detect -> evaluate, with on-disk intermediates,
//! content-addressed stage skipping and a manifest recording every tunable.

use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::cnn::{self, CnnConfig};
use crate::error::{Error, Result};
use crate::eval::{self, DetectorSet, MetricsReport};
use crate::ingest::{self, LogFormat};
use crate::pearson::PearsonConfig;
use crate::segment;
use crate::sim::{self, AttackKind, InjectionSpec, Regime, TrafficProfile};
use crate::tensor_io;
use crate::wavelet::{self, TransformParams};

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SourceConfig {
    /// Parse an on-disk log.
    File { path: PathBuf, format: String },
    /// Synthesize the reference corpus, optionally with one attack variant.
    Simulate {
        #[serde(default)]
        corpus: Option<String>,
        #[serde(default)]
        attack: Option<String>,
        #[serde(default)]
        regime: Option<String>,
        #[serde(default)]
        profile: Option<TrafficProfile>,
        #[serde(default)]
        inject: Option<InjectionSpec>,
    },
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FeaturizeConfig {
    #[serde(default)]
    pub chunk_len: Option<f64>,
    #[serde(default)]
    pub vehicle: Option<String>,
    #[serde(default = "default_window_len")]
    pub window_len: usize,
    #[serde(default)]
    pub stride: Option<usize>,
}

fn default_window_len() -> usize {
    segment::WINDOW_LEN
}

impl Default for FeaturizeConfig {
    fn default() -> Self {
        FeaturizeConfig {
            chunk_len: None,
            vehicle: None,
            window_len: default_window_len(),
            stride: None,
        }
    }
}

impl FeaturizeConfig {
    pub fn resolved_chunk_len(&self) -> f64 {
        match (&self.chunk_len, &self.vehicle) {
            (Some(c), _) => *c,
            (None, Some(v)) => segment::chunk_len_for_vehicle(v),
            (None, None) => segment::DEFAULT_CHUNK_LEN,
        }
    }

    pub fn resolved_stride(&self) -> usize {
        self.stride.unwrap_or(self.window_len)
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrainConfig {
    /// Leading fraction of windows used for training; the rest is held out
    /// for detection and scoring.
    #[serde(default = "default_split")]
    pub split: f64,
    #[serde(default = "default_cutoff")]
    pub cutoff: f64,
}

fn default_split() -> f64 {
    0.7
}

fn default_cutoff() -> f64 {
    0.5
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            split: default_split(),
            cutoff: default_cutoff(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, serde::Serialize, serde::Deserialize)]
pub struct EvaluateConfig {
    #[serde(default)]
    pub plots: bool,
}

/// The fully-declarative pipeline configuration.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PipelineConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    pub source: SourceConfig,
    #[serde(default)]
    pub featurize: FeaturizeConfig,
    #[serde(default)]
    pub wavelet: TransformParams,
    #[serde(default)]
    pub cnn: Option<CnnConfig>,
    #[serde(default)]
    pub pearson: Option<PearsonConfig>,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub evaluate: EvaluateConfig,
}

impl PipelineConfig {
    pub fn from_toml_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{e}")))
    }

    /// Materialize every default so the manifest records the full
    /// configuration actually used.
    pub fn resolved(&self, global_seed: Option<u64>) -> PipelineConfig {
        let mut cfg = self.clone();
        if let Some(s) = global_seed {
            cfg.seed = s;
        }
        let mut cnn = cfg.cnn.clone().unwrap_or_default();
        if self.cnn.as_ref().map(|c| c.seed).unwrap_or(0) == 0 {
            cnn.seed = cfg.seed;
        }
        cfg.cnn = Some(cnn);
        cfg.pearson = Some(cfg.pearson.clone().unwrap_or_default());
        cfg.featurize.chunk_len = Some(cfg.featurize.resolved_chunk_len());
        cfg.featurize.stride = Some(cfg.featurize.resolved_stride());
        cfg
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub message: String,
}

impl Diagnostic {
    fn error(msg: impl Into<String>) -> Self {
        Diagnostic {
            severity: Severity::Error,
            message: msg.into(),
        }
    }

    fn warning(msg: impl Into<String>) -> Self {
        Diagnostic {
            severity: Severity::Warning,
            message: msg.into(),
        }
    }
}

/// Schema and cross-field checks; an empty list means the config is valid
/// with no caveats.
pub fn validate_config(cfg: &PipelineConfig) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let resolved = cfg.resolved(None);

    match &cfg.source {
        SourceConfig::File { path, format } => {
            if format.parse::<LogFormat>().is_err() {
                out.push(Diagnostic::error(format!("unknown source format `{format}`")));
            }
            if !path.exists() {
                out.push(Diagnostic::warning(format!(
                    "source file {} does not exist yet",
                    path.display()
                )));
            }
        }
        SourceConfig::Simulate {
            corpus,
            attack,
            regime,
            profile,
            inject,
        } => {
            match (corpus, profile) {
                (Some(_), Some(_)) => {
                    out.push(Diagnostic::error("set either source.corpus or source.profile, not both"))
                }
                (None, None) => {
                    out.push(Diagnostic::error("simulate source needs source.corpus or source.profile"))
                }
                (Some(name), None) if name != "corpus-a" => {
                    out.push(Diagnostic::error(format!("unknown named corpus `{name}`")))
                }
                _ => {}
            }
            if let Some(p) = profile {
                if let Err(e) = p.validate() {
                    out.push(Diagnostic::error(format!("profile: {e}")));
                }
            }
            if corpus.is_some() {
                if let Some(a) = attack {
                    if parse_attack(a).is_err() {
                        out.push(Diagnostic::error(format!("unknown attack kind `{a}`")));
                    }
                }
                if let Some(r) = regime {
                    if parse_regime(r).is_err() {
                        out.push(Diagnostic::error(format!("unknown regime `{r}`")));
                    }
                }
            }
            if profile.is_some() && inject.is_none() && attack.is_some() {
                out.push(Diagnostic::warning(
                    "source.attack is ignored for inline profiles; use source.inject",
                ));
            }
        }
    }

    let chunk = resolved.featurize.chunk_len.unwrap();
    if !(chunk > 0.0) {
        out.push(Diagnostic::error("featurize.chunk_len must be > 0"));
    }
    if cfg.featurize.chunk_len.is_some() && cfg.featurize.vehicle.is_some() {
        out.push(Diagnostic::warning(
            "featurize.vehicle is ignored because featurize.chunk_len is set",
        ));
    }
    if resolved.featurize.window_len == 0 {
        out.push(Diagnostic::error("featurize.window_len must be > 0"));
    } else if resolved.featurize.window_len != segment::WINDOW_LEN {
        out.push(Diagnostic::warning(format!(
            "window_len {} changes the wavelet band lengths (reference is {})",
            resolved.featurize.window_len,
            segment::WINDOW_LEN
        )));
    }

    if wavelet::WaveletFilter::from_name(&resolved.wavelet.wavelet).is_err() {
        out.push(Diagnostic::error(format!(
            "unsupported wavelet `{}`",
            resolved.wavelet.wavelet
        )));
    }
    if resolved.wavelet.mode.parse::<wavelet::BoundaryMode>().is_err() {
        out.push(Diagnostic::error(format!(
            "unsupported boundary mode `{}`",
            resolved.wavelet.mode
        )));
    }
    if resolved.wavelet.levels == 0 {
        out.push(Diagnostic::error("wavelet.levels must be >= 1"));
    }
    if resolved.wavelet.stack == 0 {
        out.push(Diagnostic::error("wavelet.stack must be >= 1"));
    }

    let pearson = resolved.pearson.as_ref().unwrap();
    if let Err(e) = pearson.validate() {
        out.push(Diagnostic::error(format!("pearson: {e}")));
    }
    if let Err(e) = resolved.cnn.as_ref().unwrap().validate() {
        out.push(Diagnostic::error(format!("cnn: {e}")));
    }
    if !(resolved.train.split > 0.0 && resolved.train.split < 1.0) {
        out.push(Diagnostic::error("train.split must be in (0, 1)"));
    }
    out
}

fn parse_attack(s: &str) -> Result<AttackKind> {
    match s.to_ascii_lowercase().as_str() {
        "dos" => Ok(AttackKind::Dos),
        "fuzz" | "fuzzing" => Ok(AttackKind::Fuzzing),
        "replay" => Ok(AttackKind::Replay),
        other => Err(Error::invalid(format!("unknown attack kind `{other}`"))),
    }
}

fn parse_regime(s: &str) -> Result<Regime> {
    match s.to_ascii_lowercase().as_str() {
        "low" | "low_frequency_periodic" => Ok(Regime::LowFrequencyPeriodic),
        "high" | "high_frequency" => Ok(Regime::HighFrequency),
        other => Err(Error::invalid(format!("unknown regime `{other}`"))),
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex_digest(&bytes))
}

fn hex_digest(bytes: &[u8]) -> String {
    let sum = Sha256::digest(bytes);
    sum.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, serde::Serialize, serde::Deserialize, PartialEq)]
struct StageStamp {
    key: String,
    outputs: Vec<(PathBuf, String)>,
}

struct StageRunner {
    stamps_dir: PathBuf,
    ran: Vec<&'static str>,
    skipped: Vec<&'static str>,
    stage_keys: Vec<(String, String)>,
}

impl StageRunner {
    fn new(out_dir: &Path) -> Result<Self> {
        let stamps_dir = out_dir.join("stamps");
        fs::create_dir_all(&stamps_dir).map_err(|e| Error::io(&stamps_dir, e))?;
        Ok(StageRunner {
            stamps_dir,
            ran: Vec::new(),
            skipped: Vec::new(),
            stage_keys: Vec::new(),
        })
    }

    /// Run `stage` unless an up-to-date stamp shows its outputs already
    /// match this key. A stamp whose key matches but whose outputs hash
    /// differently is treated as corruption and fails, naming the stage.
    fn run<F>(&mut self, stage: &'static str, key_material: &str, outputs: &[PathBuf], f: F) -> Result<()>
    where
        F: FnOnce() -> Result<()>,
    {
        let key = hex_digest(key_material.as_bytes());
        self.stage_keys.push((stage.to_string(), key.clone()));
        let stamp_path = self.stamps_dir.join(format!("{stage}.json"));

        if let Ok(text) = fs::read_to_string(&stamp_path) {
            if let Ok(stamp) = serde_json::from_str::<StageStamp>(&text) {
                if stamp.key == key {
                    let all_present = stamp.outputs.iter().all(|(p, _)| p.exists());
                    if all_present {
                        for (p, want) in &stamp.outputs {
                            let got = sha256_file(p).map_err(|e| e.in_stage(stage))?;
                            if &got != want {
                                return Err(Error::Format(format!(
                                    "artifact {} does not match its stamp; delete it (or {}) to rebuild",
                                    p.display(),
                                    stamp_path.display()
                                ))
                                .in_stage(stage));
                            }
                        }
                        log::info!("stage {stage}: up to date, skipping");
                        self.skipped.push(stage);
                        return Ok(());
                    }
                }
            }
        }

        log::info!("stage {stage}: running");
        f().map_err(|e| e.in_stage(stage))?;
        let mut hashed = Vec::with_capacity(outputs.len());
        for p in outputs {
            hashed.push((p.clone(), sha256_file(p).map_err(|e| e.in_stage(stage))?));
        }
        let stamp = StageStamp { key, outputs: hashed };
        fs::write(&stamp_path, serde_json::to_string_pretty(&stamp)?)
            .map_err(|e| Error::io(&stamp_path, e))?;
        self.ran.push(stage);
        Ok(())
    }
}

/// Paths of every artifact a pipeline run produces.
pub struct RunArtifacts {
    pub frames: PathBuf,
    pub windows: PathBuf,
    pub tensors: PathBuf,
    pub model: PathBuf,
    pub verdicts: PathBuf,
    pub report: PathBuf,
    pub manifest: PathBuf,
    pub plots_dir: PathBuf,
}

impl RunArtifacts {
    pub fn in_dir(out_dir: &Path) -> Self {
        RunArtifacts {
            frames: out_dir.join("frames.csv"),
            windows: out_dir.join("windows.csv"),
            tensors: out_dir.join("tensors.cwt"),
            model: out_dir.join("model.crnm"),
            verdicts: out_dir.join("verdicts.csv"),
            report: out_dir.join("report.json"),
            manifest: out_dir.join("manifest.json"),
            plots_dir: out_dir.join("plots"),
        }
    }
}

/// Scores of one full run, per detector set.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct RunReport {
    pub hybrid: MetricsReport,
    pub cnn: MetricsReport,
    pub pearson: MetricsReport,
    pub test_windows: usize,
    pub train_windows: usize,
}

pub struct RunOutcome {
    pub artifacts: RunArtifacts,
    pub report: RunReport,
    pub stages_run: Vec<&'static str>,
    pub stages_skipped: Vec<&'static str>,
}

fn stage_key(parts: &[&str]) -> String {
    parts.join("\n")
}

/// Execute the full pipeline into `out_dir`. Rerunning with an identical
/// config and intact intermediates skips every stage.
pub fn run_pipeline(config: &PipelineConfig, out_dir: &Path) -> Result<RunOutcome> {
    let diags = validate_config(config);
    if let Some(err) = diags.iter().find(|d| d.severity == Severity::Error) {
        return Err(Error::Config(err.message.clone()));
    }
    for d in &diags {
        log::warn!("config: {}", d.message);
    }
    let cfg = config.resolved(None);
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let artifacts = RunArtifacts::in_dir(out_dir);
    let mut runner = StageRunner::new(out_dir)?;

    // ingest / simulate
    let source_json = serde_json::to_string(&cfg.source)?;
    let source_input_hash = match &cfg.source {
        SourceConfig::File { path, format: _ } => sha256_file(path).unwrap_or_default(),
        SourceConfig::Simulate { .. } => String::new(),
    };
    {
        let frames_path = artifacts.frames.clone();
        let source = cfg.source.clone();
        runner.run(
            "ingest",
            &stage_key(&["ingest", &source_json, &source_input_hash]),
            &[frames_path.clone()],
            move || {
                let frames = materialize_source(&source)?;
                ingest::write_file(&frames_path, LogFormat::Native, &frames)
            },
        )?;
    }

    // featurize
    let featurize_json = serde_json::to_string(&cfg.featurize)?;
    let frames_hash = sha256_file(&artifacts.frames)?;
    {
        let (frames_path, windows_path) = (artifacts.frames.clone(), artifacts.windows.clone());
        let fz = cfg.featurize.clone();
        runner.run(
            "featurize",
            &stage_key(&["featurize", &featurize_json, &frames_hash]),
            &[windows_path.clone()],
            move || {
                let report = ingest::parse_file(&frames_path, LogFormat::Native)?;
                if report.rejected() > 0 {
                    log::warn!("{} frame rows rejected", report.rejected());
                }
                let segs = segment::micro_segment(&report.frames, fz.resolved_chunk_len())?;
                let windows = segment::build_windows(&segs, fz.window_len, fz.resolved_stride())?;
                segment::write_windows(&windows_path, &windows)
            },
        )?;
    }

    // transform
    let wavelet_json = serde_json::to_string(&cfg.wavelet)?;
    let windows_hash = sha256_file(&artifacts.windows)?;
    {
        let (windows_path, tensors_path) = (artifacts.windows.clone(), artifacts.tensors.clone());
        let params = cfg.wavelet.clone();
        runner.run(
            "transform",
            &stage_key(&["transform", &wavelet_json, &windows_hash]),
            &[tensors_path.clone(), tensor_io::sidecar_path(&artifacts.tensors)],
            move || {
                let windows = segment::read_windows(&windows_path)?;
                let dataset = wavelet::transform_windows(&windows, &params)?;
                tensor_io::write_tensors(&tensors_path, &dataset)
            },
        )?;
    }

    // train
    let cnn_cfg = cfg.cnn.clone().unwrap();
    let cnn_json = serde_json::to_string(&cnn_cfg)?;
    let train_json = serde_json::to_string(&cfg.train)?;
    let tensors_hash = sha256_file(&artifacts.tensors)?;
    {
        let (tensors_path, model_path) = (artifacts.tensors.clone(), artifacts.model.clone());
        let cnn_cfg = cnn_cfg.clone();
        let split = cfg.train.split;
        runner.run(
            "train",
            &stage_key(&["train", &cnn_json, &train_json, &tensors_hash]),
            &[model_path.clone()],
            move || {
                let dataset = tensor_io::read_tensors(&tensors_path)?;
                let split_at = ((dataset.len() as f64) * split).floor() as usize;
                if split_at < 2 {
                    return Err(Error::invalid("train split leaves too little training data"));
                }
                let train_ds = slice_dataset(&dataset, 0..split_at);
                let inputs = wavelet::assemble_inputs(&train_ds, train_ds.params.stack)?;
                let first = inputs
                    .first()
                    .ok_or_else(|| Error::invalid("training corpus shorter than the model stack"))?;
                let model = cnn::train(cnn::init_model(&cnn_cfg, first.planes.dim())?, &inputs)?;
                cnn::save_model(&model_path, &model)
            },
        )?;
    }

    // detect: CNN + Pearson on the held-out slice, fused
    let pearson_cfg = cfg.pearson.clone().unwrap();
    let pearson_json = serde_json::to_string(&pearson_cfg)?;
    let model_hash = sha256_file(&artifacts.model)?;
    {
        let (tensors_path, windows_path, model_path, verdicts_path) = (
            artifacts.tensors.clone(),
            artifacts.windows.clone(),
            artifacts.model.clone(),
            artifacts.verdicts.clone(),
        );
        let split = cfg.train.split;
        let cutoff = cfg.train.cutoff;
        let pearson_cfg = pearson_cfg.clone();
        runner.run(
            "detect",
            &stage_key(&["detect", &pearson_json, &cutoff.to_string(), &model_hash, &tensors_hash]),
            &[verdicts_path.clone()],
            move || {
                let dataset = tensor_io::read_tensors(&tensors_path)
                    .map_err(|e| e.in_stage("transform"))?;
                let windows = segment::read_windows(&windows_path)?;
                if windows.len() != dataset.len() {
                    return Err(Error::Shape("windows and tensors differ in count".into()));
                }
                let split_at = ((dataset.len() as f64) * split).floor() as usize;
                let test_ds = slice_dataset(&dataset, split_at..dataset.len());
                let model = cnn::load_model(&model_path)?;
                let verdicts = eval::run_detectors(
                    &windows[split_at..],
                    &test_ds,
                    &model,
                    &pearson_cfg,
                    cutoff,
                )?;
                crate::fusion::write_verdicts(&verdicts_path, &verdicts)
            },
        )?;
    }

    // evaluate
    let verdicts_hash = sha256_file(&artifacts.verdicts)?;
    let eval_json = serde_json::to_string(&cfg.evaluate)?;
    {
        let (verdicts_path, report_path, plots_dir) = (
            artifacts.verdicts.clone(),
            artifacts.report.clone(),
            artifacts.plots_dir.clone(),
        );
        let make_plots = cfg.evaluate.plots;
        let pearson_threshold = pearson_cfg.threshold;
        let split = cfg.train.split;
        runner.run(
            "evaluate",
            &stage_key(&["evaluate", &eval_json, &verdicts_hash]),
            &[report_path.clone()],
            move || {
                let verdicts = crate::fusion::read_verdicts(&verdicts_path)?;
                let report = RunReport {
                    hybrid: eval::metrics(&verdicts, DetectorSet::Hybrid)?,
                    cnn: eval::metrics(&verdicts, DetectorSet::Cnn)?,
                    pearson: eval::metrics(&verdicts, DetectorSet::Pearson)?,
                    test_windows: verdicts.len(),
                    train_windows: {
                        let total = (verdicts.len() as f64 / (1.0 - split)).round() as usize;
                        total - verdicts.len()
                    },
                };
                fs::write(&report_path, serde_json::to_string_pretty(&report)?)
                    .map_err(|e| Error::io(&report_path, e))?;
                if make_plots {
                    fs::create_dir_all(&plots_dir).map_err(|e| Error::io(&plots_dir, e))?;
                    crate::plots::render_confusion_heatmap(
                        &report.hybrid.confusion,
                        &plots_dir.join("confusion_hybrid.png"),
                    )?;
                    let scores: Vec<f64> = verdicts
                        .iter()
                        .map(|v| v.cnn_score.unwrap_or(0.0).max(v.pearson_flag as f64))
                        .collect();
                    let labels: Vec<bool> = verdicts
                        .iter()
                        .map(|v| v.label == Some(segment::Label::Attack))
                        .collect();
                    crate::plots::render_roc(&scores, &labels, &plots_dir.join("roc_hybrid.png"))?;
                    crate::plots::render_rho_trace(
                        &verdicts,
                        pearson_threshold,
                        &plots_dir.join("rho_trace.png"),
                    )?;
                }
                Ok(())
            },
        )?;
    }

    // manifest: the resolved config, stage keys and artifact hashes
    let manifest = serde_json::json!({
        "schema_version": 1,
        "config": cfg,
        "stages": runner.stage_keys.iter().map(|(s, k)| {
            serde_json::json!({"stage": s, "key": k})
        }).collect::<Vec<_>>(),
        "artifacts": {
            "frames": sha256_file(&artifacts.frames)?,
            "windows": sha256_file(&artifacts.windows)?,
            "tensors": sha256_file(&artifacts.tensors)?,
            "model": sha256_file(&artifacts.model)?,
            "verdicts": sha256_file(&artifacts.verdicts)?,
            "report": sha256_file(&artifacts.report)?,
        },
    });
    fs::write(&artifacts.manifest, serde_json::to_string_pretty(&manifest)?)
        .map_err(|e| Error::io(&artifacts.manifest, e))?;

    let report: RunReport = serde_json::from_str(
        &fs::read_to_string(&artifacts.report).map_err(|e| Error::io(&artifacts.report, e))?,
    )?;
    Ok(RunOutcome {
        artifacts,
        report,
        stages_run: runner.ran,
        stages_skipped: runner.skipped,
    })
}

fn slice_dataset(ds: &wavelet::TensorDataset, range: std::ops::Range<usize>) -> wavelet::TensorDataset {
    wavelet::TensorDataset {
        tensors: ds.tensors[range.clone()].to_vec(),
        labels: ds.labels[range.clone()].to_vec(),
        window_indices: ds.window_indices[range].to_vec(),
        params: ds.params.clone(),
    }
}

/// Produce the normalized frame stream the pipeline starts from.
pub fn materialize_source(source: &SourceConfig) -> Result<Vec<ingest::CanFrame>> {
    match source {
        SourceConfig::File { path, format } => {
            let fmt: LogFormat = format.parse()?;
            let report = ingest::parse_file(path, fmt)?;
            if report.rejected() > 0 {
                log::warn!(
                    "{} of {} rows rejected while parsing {}",
                    report.rejected(),
                    report.rejected() + report.frames.len(),
                    path.display()
                );
            }
            ingest::normalize_timestamps(&report.frames)
        }
        SourceConfig::Simulate {
            corpus,
            attack,
            regime,
            profile,
            inject,
        } => {
            let base = match (corpus, profile) {
                (Some(name), None) => {
                    if name != "corpus-a" {
                        return Err(Error::invalid(format!("unknown named corpus `{name}`")));
                    }
                    sim::synthesize_baseline(&sim::corpus_a::profile())?
                }
                (None, Some(p)) => sim::synthesize_baseline(p)?,
                _ => {
                    return Err(Error::Config(
                        "simulate source needs exactly one of corpus/profile".into(),
                    ))
                }
            };
            let injected = if let Some(spec) = inject {
                sim::inject(&base, spec)?
            } else if corpus.is_some() {
                match attack.as_deref() {
                    None | Some("none") => base,
                    Some(a) => {
                        let kind = parse_attack(a)?;
                        let reg = regime
                            .as_deref()
                            .map(parse_regime)
                            .transpose()?
                            .unwrap_or(Regime::HighFrequency);
                        sim::inject(&base, &sim::corpus_a::variant(kind, reg))?
                    }
                }
            } else {
                base
            };
            ingest::normalize_timestamps(&injected)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn demo_config() -> PipelineConfig {
        PipelineConfig {
            seed: 1,
            out_dir: None,
            source: SourceConfig::Simulate {
                corpus: Some("corpus-a".into()),
                attack: Some("dos".into()),
                regime: Some("high".into()),
                profile: None,
                inject: None,
            },
            featurize: FeaturizeConfig::default(),
            wavelet: TransformParams::default(),
            cnn: None,
            pearson: None,
            train: TrainConfig::default(),
            evaluate: EvaluateConfig::default(),
        }
    }

    #[test]
    fn default_config_validates_clean() {
        assert!(validate_config(&demo_config()).is_empty());
    }

    #[test]
    fn threshold_out_of_range_is_diagnosed() {
        let mut cfg = demo_config();
        cfg.pearson = Some(PearsonConfig {
            threshold: -1.5,
            ..Default::default()
        });
        let diags = validate_config(&cfg);
        assert!(diags.iter().any(|d| d.severity == Severity::Error && d.message.contains("threshold")));
    }

    #[test]
    fn nonstandard_window_len_warns_not_errors() {
        let mut cfg = demo_config();
        cfg.featurize.window_len = 64;
        let diags = validate_config(&cfg);
        assert!(diags.iter().all(|d| d.severity == Severity::Warning));
        assert!(diags.iter().any(|d| d.message.contains("band lengths")));
    }

    #[test]
    fn config_toml_round_trip() {
        let cfg = demo_config();
        let text = toml::to_string(&cfg).unwrap();
        let back: PipelineConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn resolved_fills_defaults_and_seed() {
        let cfg = demo_config().resolved(Some(99));
        assert_eq!(cfg.seed, 99);
        assert_eq!(cfg.cnn.as_ref().unwrap().seed, 99);
        assert!(cfg.pearson.is_some());
        assert_eq!(cfg.featurize.chunk_len, Some(0.01));
    }
}
