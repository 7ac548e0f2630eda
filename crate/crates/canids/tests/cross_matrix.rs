//! Cross-corpus evaluation harness: per-cell training, in-domain splits,
//! failed-cell handling and report emission, exercised on small synthetic
//! corpora so each cell trains in seconds.

use std::collections::BTreeMap;
use std::path::Path;

use canids::cnn::CnnConfig;
use canids::eval::{self, CellSpec, CorpusPaths, CrossMatrixSpec, DetectorSet, ReportFormat};
use canids::ingest;
use canids::segment;
use canids::sim::{self, AttackKind, IdProfile, InjectionSpec, PayloadGen, Regime, TrafficProfile};
use canids::tensor_io;
use canids::wavelet::{self, TransformParams};

/// Synthesize, featurize and archive one small corpus; returns its paths.
fn make_corpus(dir: &Path, name: &str, seed: u64, rate: f64) -> CorpusPaths {
    let profile = TrafficProfile {
        ids: (0..5)
            .map(|i| IdProfile {
                can_id: 0x100 + i,
                period: 0.004 + i as f64 * 0.003,
                jitter_fraction: 0.08,
                phase: i as f64 * 0.0013,
                payload: PayloadGen::Counter,
            })
            .collect(),
        duration: 60.0,
        seed,
    };
    let spec = InjectionSpec {
        kind: AttackKind::Dos,
        regime: Regime::HighFrequency,
        rate,
        active_windows: vec![(10.0, 14.0), (30.0, 34.0), (50.0, 54.0)],
        seed: seed + 1,
        dominant_id: 0,
        replay_source: None,
        burst: Some(15),
    };
    let base = sim::synthesize_baseline(&profile).unwrap();
    let stream = ingest::normalize_timestamps(&sim::inject(&base, &spec).unwrap()).unwrap();
    let segs = segment::micro_segment(&stream, 0.01).unwrap();
    let windows = segment::build_windows(&segs, 100, 100).unwrap();
    let params = TransformParams {
        stack: 4,
        ..Default::default()
    };
    let dataset = wavelet::transform_windows(&windows, &params).unwrap();

    let windows_path = dir.join(format!("{name}.windows.csv"));
    let tensors_path = dir.join(format!("{name}.tensors.cwt"));
    segment::write_windows(&windows_path, &windows).unwrap();
    tensor_io::write_tensors(&tensors_path, &dataset).unwrap();
    CorpusPaths {
        windows: windows_path,
        tensors: tensors_path,
    }
}

fn small_cnn(seed: u64) -> CnnConfig {
    CnnConfig {
        residual_blocks: 1,
        base_channels: 4,
        max_epochs: 8,
        early_stop_patience: 8,
        seed,
        ..Default::default()
    }
}

#[test]
fn two_by_four_matrix_mirrors_table_shape() {
    let dir = tempfile::tempdir().unwrap();
    let mut corpora = BTreeMap::new();
    for (name, seed, rate) in [
        ("alpha", 100, 2000.0),
        ("bravo", 200, 2500.0),
        ("charlie", 300, 1500.0),
        ("delta", 400, 3000.0),
    ] {
        corpora.insert(name.to_string(), make_corpus(dir.path(), name, seed, rate));
    }
    let trains = ["alpha", "bravo"];
    let tests = ["alpha", "bravo", "charlie", "delta"];
    let cells: Vec<CellSpec> = trains
        .iter()
        .flat_map(|tr| {
            tests.iter().map(move |te| CellSpec {
                train: tr.to_string(),
                test: te.to_string(),
                regime: Some("high".into()),
                detectors: DetectorSet::Hybrid,
            })
        })
        .collect();
    let spec = CrossMatrixSpec {
        corpora,
        cells,
        cnn: Some(small_cnn(9)),
        pearson: None,
        in_domain_split: 0.7,
        cutoff: None,
    };
    let table = eval::cross_matrix(&spec).unwrap();
    assert_eq!(table.len(), 8);
    assert!(table.iter().all(|c| c.metrics.is_some()), "all cells succeed");
    // the two train==test cells are flagged in-domain
    let in_domain: Vec<_> = table.iter().filter(|c| c.in_domain).collect();
    assert_eq!(in_domain.len(), 2);
    assert!(in_domain.iter().all(|c| c.spec.train == c.spec.test));

    // reports serialize byte-stably
    let r1 = dir.path().join("report1.json");
    let r2 = dir.path().join("report2.json");
    eval::emit_report(&table, ReportFormat::Json, &r1).unwrap();
    eval::emit_report(&table, ReportFormat::Json, &r2).unwrap();
    assert_eq!(std::fs::read(&r1).unwrap(), std::fs::read(&r2).unwrap());
    let csv_path = dir.path().join("report.csv");
    eval::emit_report(&table, ReportFormat::Csv, &csv_path).unwrap();
    let csv = std::fs::read_to_string(&csv_path).unwrap();
    assert_eq!(csv.lines().count(), 9); // header + 8 cells

    // one confusion heatmap + one ROC + one trace per cell
    let plot_dir = dir.path().join("plots");
    eval::emit_plots(&table, &plot_dir, -0.7).unwrap();
    let pngs = std::fs::read_dir(&plot_dir).unwrap().count();
    assert_eq!(pngs, 3 * 8);
}

#[test]
fn missing_corpus_fails_only_its_cell() {
    let dir = tempfile::tempdir().unwrap();
    let mut corpora = BTreeMap::new();
    corpora.insert("alpha".into(), make_corpus(dir.path(), "alpha", 100, 2000.0));
    // register a corpus whose files were deleted
    corpora.insert(
        "ghost".into(),
        CorpusPaths {
            windows: dir.path().join("ghost.windows.csv"),
            tensors: dir.path().join("ghost.tensors.cwt"),
        },
    );
    let cells = vec![
        CellSpec {
            train: "alpha".into(),
            test: "alpha".into(),
            regime: None,
            detectors: DetectorSet::Hybrid,
        },
        CellSpec {
            train: "alpha".into(),
            test: "ghost".into(),
            regime: None,
            detectors: DetectorSet::Hybrid,
        },
    ];
    let spec = CrossMatrixSpec {
        corpora,
        cells,
        cnn: Some(small_cnn(3)),
        pearson: None,
        in_domain_split: 0.7,
        cutoff: None,
    };
    let table = eval::cross_matrix(&spec).unwrap();
    assert_eq!(table.len(), 2);
    assert!(table[0].metrics.is_some());
    assert!(table[1].metrics.is_none());
    assert!(table[1].error.is_some());
}

#[test]
fn detector_sets_score_the_same_verdicts_differently() {
    let dir = tempfile::tempdir().unwrap();
    let mut corpora = BTreeMap::new();
    corpora.insert("alpha".into(), make_corpus(dir.path(), "alpha", 100, 2000.0));
    let cells = [DetectorSet::Hybrid, DetectorSet::Cnn, DetectorSet::Pearson]
        .into_iter()
        .map(|detectors| CellSpec {
            train: "alpha".into(),
            test: "alpha".into(),
            regime: None,
            detectors,
        })
        .collect();
    let spec = CrossMatrixSpec {
        corpora,
        cells,
        cnn: Some(small_cnn(5)),
        pearson: None,
        in_domain_split: 0.7,
        cutoff: None,
    };
    let table = eval::cross_matrix(&spec).unwrap();
    let hybrid = table[0].metrics.as_ref().unwrap();
    let cnn = table[1].metrics.as_ref().unwrap();
    let pearson = table[2].metrics.as_ref().unwrap();
    // hybrid recall dominates both single detectors on the same verdicts
    assert!(hybrid.confusion.recall() >= cnn.confusion.recall().max(pearson.confusion.recall()));
}
