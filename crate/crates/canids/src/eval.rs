//! Scoring and the cross-corpus evaluation harness: confusion matrices,
//! F1/accuracy/AUC, and the train-on-one-corpus test-on-another matrix.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::cnn::{self, CnnConfig, CnnModel};
use crate::error::{Error, Result};
use crate::fusion::{self, CnnVerdict, FinalVerdict, Verdict};
use crate::pearson::{self, PearsonConfig};
use crate::segment::{FeatureWindow, Label};
use crate::tensor_io;
use crate::wavelet::{assemble_inputs, TensorDataset};

/// Counts with Attack as the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ConfusionMatrix {
    pub true_positives: usize,
    pub false_positives: usize,
    pub true_negatives: usize,
    pub false_negatives: usize,
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.true_positives + self.false_positives + self.true_negatives + self.false_negatives
    }

    pub fn accuracy(&self) -> f64 {
        (self.true_positives + self.true_negatives) as f64 / self.total() as f64
    }

    /// 2tp / (2tp + fp + fn); 0 when the denominator is 0.
    pub fn f1(&self) -> f64 {
        let denom = 2 * self.true_positives + self.false_positives + self.false_negatives;
        if denom == 0 {
            0.0
        } else {
            2.0 * self.true_positives as f64 / denom as f64
        }
    }

    pub fn recall(&self) -> f64 {
        let denom = self.true_positives + self.false_negatives;
        if denom == 0 {
            0.0
        } else {
            self.true_positives as f64 / denom as f64
        }
    }

    pub fn precision(&self) -> f64 {
        let denom = self.true_positives + self.false_positives;
        if denom == 0 {
            0.0
        } else {
            self.true_positives as f64 / denom as f64
        }
    }
}

/// Which detector's decisions to score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorSet {
    Cnn,
    Pearson,
    Hybrid,
}

impl DetectorSet {
    fn flag(&self, v: &Verdict) -> u8 {
        match self {
            DetectorSet::Cnn => v.cnn_flag,
            DetectorSet::Pearson => v.pearson_flag,
            DetectorSet::Hybrid => u8::from(v.final_verdict == FinalVerdict::Attack),
        }
    }

    /// Ranking score for the ROC sweep. The hybrid score is the CNN score
    /// with Pearson-flagged windows forced to 1.0 (hard flags carry no
    /// ranking of their own).
    fn score(&self, v: &Verdict) -> f64 {
        match self {
            DetectorSet::Cnn => v.cnn_score.unwrap_or(0.0),
            DetectorSet::Pearson => v.pearson_flag as f64,
            DetectorSet::Hybrid => v.cnn_score.unwrap_or(0.0).max(v.pearson_flag as f64),
        }
    }
}

/// Count a verdict stream against its labels for one detector set.
pub fn confusion_for(verdicts: &[Verdict], set: DetectorSet) -> Result<ConfusionMatrix> {
    let mut m = ConfusionMatrix {
        true_positives: 0,
        false_positives: 0,
        true_negatives: 0,
        false_negatives: 0,
    };
    for v in verdicts {
        let label = v
            .label
            .ok_or_else(|| Error::invalid(format!("window {} has no label", v.window_index)))?;
        let flagged = set.flag(v) == 1;
        match (label, flagged) {
            (Label::Attack, true) => m.true_positives += 1,
            (Label::Attack, false) => m.false_negatives += 1,
            (Label::AttackFree, true) => m.false_positives += 1,
            (Label::AttackFree, false) => m.true_negatives += 1,
        }
    }
    Ok(m)
}

/// Confusion matrix of the fused (hybrid) decision.
pub fn confusion(verdicts: &[Verdict]) -> Result<ConfusionMatrix> {
    confusion_for(verdicts, DetectorSet::Hybrid)
}

/// Area under the ROC curve by trapezoidal integration, sweeping the cutoff
/// over all distinct scores. None when only one class is present.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Option<f64> {
    assert_eq!(scores.len(), labels.len());
    let positives = labels.iter().filter(|&&l| l).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));

    let mut auc = 0.0;
    let (mut tp, mut fp) = (0usize, 0usize);
    let (mut prev_tpr, mut prev_fpr) = (0.0f64, 0.0f64);
    let mut prev_score = f64::INFINITY;
    for &i in &order {
        if scores[i] != prev_score {
            let tpr = tp as f64 / positives as f64;
            let fpr = fp as f64 / negatives as f64;
            auc += (fpr - prev_fpr) * (tpr + prev_tpr) / 2.0;
            prev_tpr = tpr;
            prev_fpr = fpr;
            prev_score = scores[i];
        }
        if labels[i] {
            tp += 1;
        } else {
            fp += 1;
        }
    }
    auc += (1.0 - prev_fpr) * (1.0 + prev_tpr) / 2.0;
    Some(auc)
}

/// Per-run scoring summary plus the metadata needed to reproduce it.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MetricsReport {
    pub f1: f64,
    pub accuracy: f64,
    /// Absent when the labels are single-class.
    pub auc: Option<f64>,
    pub confusion: ConfusionMatrix,
    pub detectors: DetectorSet,
    pub scored_windows: usize,
}

/// Score a labeled verdict stream for one detector set.
pub fn metrics(verdicts: &[Verdict], set: DetectorSet) -> Result<MetricsReport> {
    if verdicts.is_empty() {
        return Err(Error::invalid("no verdicts to score"));
    }
    let m = confusion_for(verdicts, set)?;
    let scores: Vec<f64> = verdicts.iter().map(|v| set.score(v)).collect();
    let labels: Vec<bool> = verdicts.iter().map(|v| v.label.unwrap() == Label::Attack).collect();
    Ok(MetricsReport {
        f1: m.f1(),
        accuracy: m.accuracy(),
        auc: roc_auc(&scores, &labels),
        confusion: m,
        detectors: set,
        scored_windows: verdicts.len(),
    })
}

/// Run both detectors over an aligned (windows, tensors) pair and fuse.
pub fn run_detectors(
    windows: &[FeatureWindow],
    dataset: &TensorDataset,
    model: &CnnModel,
    pearson_cfg: &PearsonConfig,
    cutoff: f64,
) -> Result<Vec<Verdict>> {
    if windows.len() != dataset.len() {
        return Err(Error::Shape(format!(
            "windows ({}) and tensors ({}) differ in count",
            windows.len(),
            dataset.len()
        )));
    }
    let inputs = assemble_inputs(dataset, dataset.params.stack)?;
    let mut cnn_verdicts = Vec::with_capacity(inputs.len());
    for input in &inputs {
        let (flag, score) = cnn::predict(model, input, cutoff)?;
        cnn_verdicts.push(CnnVerdict {
            window_index: input.window_index,
            flag,
            score,
        });
    }
    let pearson_results = pearson::detect_all(windows, pearson_cfg)?;
    let labels: Vec<Option<Label>> = windows.iter().map(|w| Some(w.label)).collect();
    fusion::fuse_streams(&cnn_verdicts, &pearson_results, &labels)
}

/// Featurized corpus registered for cross-matrix evaluation.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CorpusPaths {
    pub windows: PathBuf,
    pub tensors: PathBuf,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CellSpec {
    pub train: String,
    pub test: String,
    #[serde(default)]
    pub regime: Option<String>,
    #[serde(default = "default_detectors")]
    pub detectors: DetectorSet,
}

fn default_detectors() -> DetectorSet {
    DetectorSet::Hybrid
}

fn default_split() -> f64 {
    0.7
}

/// Declarative cross-vehicle evaluation: named corpora and train/test cells.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CrossMatrixSpec {
    pub corpora: BTreeMap<String, CorpusPaths>,
    pub cells: Vec<CellSpec>,
    #[serde(default)]
    pub cnn: Option<CnnConfig>,
    #[serde(default)]
    pub pearson: Option<PearsonConfig>,
    /// Time-split fraction used when a cell trains and tests on the same
    /// corpus.
    #[serde(default = "default_split")]
    pub in_domain_split: f64,
    #[serde(default)]
    pub cutoff: Option<f64>,
}

/// One evaluated cell; failed cells carry the error and no metrics.
#[derive(Debug, Clone)]
pub struct CellReport {
    pub spec: CellSpec,
    pub in_domain: bool,
    pub metrics: Option<MetricsReport>,
    pub error: Option<String>,
    /// Verdicts kept for plotting; not serialized into reports.
    pub verdicts: Vec<Verdict>,
}

fn slice_dataset(ds: &TensorDataset, range: std::ops::Range<usize>) -> TensorDataset {
    TensorDataset {
        tensors: ds.tensors[range.clone()].to_vec(),
        labels: ds.labels[range.clone()].to_vec(),
        window_indices: ds.window_indices[range].to_vec(),
        params: ds.params.clone(),
    }
}

fn run_cell(
    spec: &CellSpec,
    corpora: &BTreeMap<String, CorpusPaths>,
    cnn_cfg: &CnnConfig,
    pearson_cfg: &PearsonConfig,
    split: f64,
    cutoff: f64,
    model_cache: &mut BTreeMap<String, CnnModel>,
) -> Result<(Vec<Verdict>, MetricsReport)> {
    let train_paths = corpora
        .get(&spec.train)
        .ok_or_else(|| Error::invalid(format!("unknown train corpus `{}`", spec.train)))?;
    let test_paths = corpora
        .get(&spec.test)
        .ok_or_else(|| Error::invalid(format!("unknown test corpus `{}`", spec.test)))?;
    let in_domain = spec.train == spec.test;

    let train_ds = tensor_io::read_tensors(&train_paths.tensors)?;
    let (train_slice, test_ds, test_windows) = if in_domain {
        let s = ((train_ds.len() as f64) * split).floor() as usize;
        if s < 2 || s >= train_ds.len() {
            return Err(Error::invalid(format!(
                "in-domain split {split} leaves no usable train/test data"
            )));
        }
        let windows = crate::segment::read_windows(&test_paths.windows)?;
        if windows.len() != train_ds.len() {
            return Err(Error::Shape("windows and tensors differ in count".into()));
        }
        (
            slice_dataset(&train_ds, 0..s),
            slice_dataset(&train_ds, s..train_ds.len()),
            windows[s..].to_vec(),
        )
    } else {
        let test_full = tensor_io::read_tensors(&test_paths.tensors)?;
        let windows = crate::segment::read_windows(&test_paths.windows)?;
        if windows.len() != test_full.len() {
            return Err(Error::Shape("windows and tensors differ in count".into()));
        }
        (train_ds, test_full, windows)
    };

    let cache_key = if in_domain {
        format!("{}@split{split}", spec.train)
    } else {
        spec.train.clone()
    };
    if !model_cache.contains_key(&cache_key) {
        let inputs = assemble_inputs(&train_slice, train_slice.params.stack)?;
        let first = inputs
            .first()
            .ok_or_else(|| Error::invalid("train corpus too short for the model stack"))?;
        let shape = first.planes.dim();
        let model = cnn::train(cnn::init_model(cnn_cfg, shape)?, &inputs)?;
        model_cache.insert(cache_key.clone(), model);
    }
    let model = &model_cache[&cache_key];

    let verdicts = run_detectors(&test_windows, &test_ds, model, pearson_cfg, cutoff)?;
    let report = metrics(&verdicts, spec.detectors)?;
    Ok((verdicts, report))
}

/// Evaluate every cell; a missing corpus or a failed run marks that cell
/// failed and the matrix continues.
pub fn cross_matrix(spec: &CrossMatrixSpec) -> Result<Vec<CellReport>> {
    if !(spec.in_domain_split > 0.0 && spec.in_domain_split < 1.0) {
        return Err(Error::Config("in_domain_split must be in (0, 1)".into()));
    }
    let cnn_cfg = spec.cnn.clone().unwrap_or_default();
    let pearson_cfg = spec.pearson.clone().unwrap_or_default();
    let cutoff = spec.cutoff.unwrap_or(0.5);
    let mut model_cache = BTreeMap::new();
    let mut out = Vec::with_capacity(spec.cells.len());
    for cell in &spec.cells {
        let in_domain = cell.train == cell.test;
        match run_cell(
            cell,
            &spec.corpora,
            &cnn_cfg,
            &pearson_cfg,
            spec.in_domain_split,
            cutoff,
            &mut model_cache,
        ) {
            Ok((verdicts, metrics)) => out.push(CellReport {
                spec: cell.clone(),
                in_domain,
                metrics: Some(metrics),
                error: None,
                verdicts,
            }),
            Err(e) => {
                log::warn!("cell {} -> {} failed: {e}", cell.train, cell.test);
                out.push(CellReport {
                    spec: cell.clone(),
                    in_domain,
                    metrics: None,
                    error: Some(e.to_string()),
                    verdicts: Vec::new(),
                });
            }
        }
    }
    Ok(out)
}

/// Serializable view of a cell for reports.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CellRecord {
    pub train: String,
    pub test: String,
    pub regime: Option<String>,
    pub detectors: DetectorSet,
    pub in_domain: bool,
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metrics: Option<MetricsReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl From<&CellReport> for CellRecord {
    fn from(c: &CellReport) -> Self {
        CellRecord {
            train: c.spec.train.clone(),
            test: c.spec.test.clone(),
            regime: c.spec.regime.clone(),
            detectors: c.spec.detectors,
            in_domain: c.in_domain,
            status: if c.metrics.is_some() { "ok".into() } else { "failed".into() },
            metrics: c.metrics.clone(),
            error: c.error.clone(),
        }
    }
}

/// Render per-cell plots (confusion heatmap, ROC, correlation trace) into
/// `dir`. Failed cells contribute nothing.
pub fn emit_plots(table: &[CellReport], dir: &Path, pearson_threshold: f64) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for cell in table {
        if cell.verdicts.is_empty() {
            continue;
        }
        let tag = format!("{}_to_{}", cell.spec.train, cell.spec.test);
        if let Some(m) = &cell.metrics {
            crate::plots::render_confusion_heatmap(
                &m.confusion,
                &dir.join(format!("confusion_{tag}.png")),
            )?;
        }
        let scores: Vec<f64> = cell
            .verdicts
            .iter()
            .map(|v| DetectorSet::Hybrid.score(v))
            .collect();
        let labels: Vec<bool> = cell
            .verdicts
            .iter()
            .map(|v| v.label == Some(Label::Attack))
            .collect();
        crate::plots::render_roc(&scores, &labels, &dir.join(format!("roc_{tag}.png")))?;
        crate::plots::render_rho_trace(
            &cell.verdicts,
            pearson_threshold,
            &dir.join(format!("rho_{tag}.png")),
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(Error::invalid(format!("unknown report format `{other}`"))),
        }
    }
}

/// Write the cell table; byte-stable for identical inputs.
pub fn emit_report(table: &[CellReport], format: ReportFormat, path: &Path) -> Result<()> {
    let records: Vec<CellRecord> = table.iter().map(CellRecord::from).collect();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    match format {
        ReportFormat::Json => {
            serde_json::to_writer_pretty(&mut w, &serde_json::json!({
                "schema_version": 1,
                "cells": records,
            }))?;
            w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
        ReportFormat::Csv => {
            writeln!(
                w,
                "train,test,regime,detectors,in_domain,status,f1,accuracy,auc,tp,fp,tn,fn"
            )
            .map_err(|e| Error::io(path, e))?;
            for r in &records {
                let (f1, acc, auc, c) = match &r.metrics {
                    Some(m) => (
                        m.f1.to_string(),
                        m.accuracy.to_string(),
                        m.auc.map(|a| a.to_string()).unwrap_or_default(),
                        Some(m.confusion),
                    ),
                    None => (String::new(), String::new(), String::new(), None),
                };
                let counts = c
                    .map(|c| {
                        format!(
                            "{},{},{},{}",
                            c.true_positives, c.false_positives, c.true_negatives, c.false_negatives
                        )
                    })
                    .unwrap_or_else(|| ",,,".into());
                writeln!(
                    w,
                    "{},{},{},{:?},{},{},{},{},{},{}",
                    r.train,
                    r.test,
                    r.regime.clone().unwrap_or_default(),
                    r.detectors,
                    r.in_domain,
                    r.status,
                    f1,
                    acc,
                    auc,
                    counts
                )
                .map_err(|e| Error::io(path, e))?;
            }
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn verdict(i: usize, cnn: u8, score: f64, pearson: u8, label: Label) -> Verdict {
        Verdict {
            window_index: i,
            cnn_flag: cnn,
            cnn_score: Some(score),
            pearson_flag: pearson,
            pearson_rho: Some(-0.3),
            final_verdict: fusion::vote(cnn, pearson),
            label: Some(label),
            partial: false,
        }
    }

    #[test]
    fn confusion_all_correct() {
        let mut v = Vec::new();
        for i in 0..60 {
            v.push(verdict(i, 1, 0.9, 1, Label::Attack));
        }
        for i in 60..100 {
            v.push(verdict(i, 0, 0.1, 0, Label::AttackFree));
        }
        let m = confusion(&v).unwrap();
        assert_eq!(m.true_positives, 60);
        assert_eq!(m.true_negatives, 40);
        assert_eq!(m.false_positives, 0);
        assert_eq!(m.false_negatives, 0);
        assert_eq!(m.total(), 100);
    }

    #[test]
    fn confusion_all_predicted_attack() {
        let v: Vec<Verdict> = (0..50)
            .map(|i| verdict(i, 1, 0.8, 0, if i < 25 { Label::Attack } else { Label::AttackFree }))
            .collect();
        let m = confusion(&v).unwrap();
        assert_eq!(m.true_positives, 25);
        assert_eq!(m.false_positives, 25);
        assert_eq!(m.true_negatives, 0);
        assert_eq!(m.false_negatives, 0);
    }

    #[test]
    fn confusion_counts_sum_over_random_sets() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(9);
        for _ in 0..50 {
            let n = rng.gen_range(1..200);
            let v: Vec<Verdict> = (0..n)
                .map(|i| {
                    verdict(
                        i,
                        rng.gen_range(0..=1),
                        rng.gen_range(0.0..1.0),
                        rng.gen_range(0..=1),
                        if rng.gen_bool(0.5) { Label::Attack } else { Label::AttackFree },
                    )
                })
                .collect();
            assert_eq!(confusion(&v).unwrap().total(), n);
        }
    }

    #[test]
    fn missing_label_is_an_error() {
        let mut v = verdict(0, 0, 0.1, 0, Label::Attack);
        v.label = None;
        assert!(confusion(&[v]).is_err());
    }

    #[test]
    fn hand_metrics_case() {
        let mut v = Vec::new();
        let mut idx = 0;
        let mut push = |cnn: u8, label: Label, n: usize, v: &mut Vec<Verdict>| {
            for _ in 0..n {
                v.push(verdict(idx, cnn, if cnn == 1 { 0.9 } else { 0.1 }, 0, label));
                idx += 1;
            }
        };
        push(1, Label::Attack, 95, &mut v);
        push(0, Label::Attack, 5, &mut v);
        push(0, Label::AttackFree, 95, &mut v);
        push(1, Label::AttackFree, 5, &mut v);
        let m = metrics(&v, DetectorSet::Cnn).unwrap();
        assert!((m.accuracy - 0.95).abs() < 1e-12);
        assert!((m.f1 - 0.95).abs() < 1e-12);
    }

    #[test]
    fn auc_perfect_and_random() {
        // perfect separation
        let scores: Vec<f64> = (0..100).map(|i| if i < 50 { 0.9 } else { 0.1 }).collect();
        let labels: Vec<bool> = (0..100).map(|i| i < 50).collect();
        assert_eq!(roc_auc(&scores, &labels), Some(1.0));

        // scores independent of labels -> AUC near 0.5
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(31);
        let n = 20_000;
        let scores: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let labels: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.5)).collect();
        let auc = roc_auc(&scores, &labels).unwrap();
        assert!((auc - 0.5).abs() < 0.05, "auc {auc}");
    }

    #[test]
    fn auc_single_class_is_none() {
        assert_eq!(roc_auc(&[0.1, 0.9], &[true, true]), None);
        let v: Vec<Verdict> = (0..10).map(|i| verdict(i, 1, 0.5, 0, Label::Attack)).collect();
        let m = metrics(&v, DetectorSet::Cnn).unwrap();
        assert_eq!(m.auc, None);
    }

    #[test]
    fn auc_invariant_under_monotone_transform() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(37);
        let scores: Vec<f64> = (0..500).map(|_| rng.gen_range(0.0..1.0)).collect();
        let labels: Vec<bool> = scores.iter().map(|&s| rng.gen_bool(s)).collect();
        let cubed: Vec<f64> = scores.iter().map(|s| s.powi(3)).collect();
        let a = roc_auc(&scores, &labels).unwrap();
        let b = roc_auc(&cubed, &labels).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn auc_handles_ties() {
        // all scores equal -> ROC is the diagonal
        let scores = vec![0.5; 10];
        let labels: Vec<bool> = (0..10).map(|i| i % 2 == 0).collect();
        let auc = roc_auc(&scores, &labels).unwrap();
        assert!((auc - 0.5).abs() < 1e-12);
    }

    #[test]
    fn f1_accuracy_match_direct_recomputation() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(41);
        let v: Vec<Verdict> = (0..300)
            .map(|i| {
                verdict(
                    i,
                    rng.gen_range(0..=1),
                    rng.gen_range(0.0..1.0),
                    rng.gen_range(0..=1),
                    if rng.gen_bool(0.3) { Label::Attack } else { Label::AttackFree },
                )
            })
            .collect();
        let m = metrics(&v, DetectorSet::Hybrid).unwrap();
        // direct per-window recomputation
        let (mut tp, mut fp, mut tn, mut fne) = (0f64, 0f64, 0f64, 0f64);
        for w in &v {
            let pred = w.final_verdict == FinalVerdict::Attack;
            let actual = w.label.unwrap() == Label::Attack;
            match (actual, pred) {
                (true, true) => tp += 1.0,
                (true, false) => fne += 1.0,
                (false, true) => fp += 1.0,
                (false, false) => tn += 1.0,
            }
        }
        assert_eq!(m.accuracy, (tp + tn) / 300.0);
        assert_eq!(m.f1, 2.0 * tp / (2.0 * tp + fp + fne));
    }

    #[test]
    fn hybrid_recall_dominates_single_detectors() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(43);
        let v: Vec<Verdict> = (0..400)
            .map(|i| {
                verdict(
                    i,
                    rng.gen_range(0..=1),
                    rng.gen_range(0.0..1.0),
                    rng.gen_range(0..=1),
                    if rng.gen_bool(0.4) { Label::Attack } else { Label::AttackFree },
                )
            })
            .collect();
        let hybrid = confusion_for(&v, DetectorSet::Hybrid).unwrap();
        let cnn = confusion_for(&v, DetectorSet::Cnn).unwrap();
        let pearson = confusion_for(&v, DetectorSet::Pearson).unwrap();
        assert!(hybrid.recall() >= cnn.recall().max(pearson.recall()));
        // hybrid false positives are exactly the union of the two sets
        let union_fp = v
            .iter()
            .filter(|w| w.label == Some(Label::AttackFree) && (w.cnn_flag == 1 || w.pearson_flag == 1))
            .count();
        assert_eq!(hybrid.false_positives, union_fp);
    }
}
