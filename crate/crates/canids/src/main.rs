//! Command-line entry point wiring the pipeline stages together.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use canids::cnn::{self, CnnConfig};
use canids::error::{Error, Result};
use canids::eval::{self, ReportFormat};
use canids::fusion::{self, CnnVerdict};
use canids::ingest::{self, LogFormat};
use canids::pearson::{self, PearsonConfig};
use canids::pipeline::{self, PipelineConfig, Severity};
use canids::segment;
use canids::sim::{self, InjectionSpec, TrafficProfile};
use canids::tensor_io;
use canids::wavelet::{self, TransformParams};

#[derive(Parser)]
#[command(name = "canids", version, about = "Hybrid CAN-bus intrusion detection toolkit")]
struct Cli {
    /// Pipeline config file (TOML)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Global seed override
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (default: CANIDS_OUT_ROOT or ./out)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Verbose logging
    #[arg(long, short, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a CAN log into the native CSV format
    Ingest {
        #[arg(long, value_parser = parse_format)]
        format: LogFormat,
        #[arg(long = "in")]
        input: PathBuf,
        /// Shift timestamps so the stream starts at 0
        #[arg(long)]
        normalize: bool,
    },
    /// Synthesize baseline traffic from a profile file
    Simulate {
        #[arg(long)]
        profile: PathBuf,
    },
    /// Inject an attack described by a spec file into a stream
    Inject {
        #[arg(long)]
        kind: String,
        #[arg(long)]
        regime: String,
        #[arg(long)]
        spec: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Convert a frame stream into feature windows
    Featurize {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        chunk_len: Option<f64>,
        #[arg(long)]
        vehicle: Option<String>,
        #[arg(long, default_value_t = segment::WINDOW_LEN)]
        window_len: usize,
        #[arg(long)]
        stride: Option<usize>,
    },
    /// Decompose windows into wavelet tensors
    Transform {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value = "db8")]
        wavelet: String,
        #[arg(long, default_value_t = wavelet::DEFAULT_LEVELS)]
        level: usize,
        #[arg(long, default_value = "symmetric")]
        mode: String,
        #[arg(long, default_value_t = wavelet::DEFAULT_STACK)]
        stack: usize,
    },
    /// Train the residual CNN on a tensor archive; the global --config
    /// supplies the CNN config file (TOML), defaults apply when omitted
    Train {
        #[arg(long)]
        tensors: PathBuf,
    },
    /// Score a tensor archive with a trained model
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        tensors: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        cutoff: f64,
    },
    /// Run the Pearson rule over feature windows
    DetectPearson {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = -0.7, allow_hyphen_values = true)]
        threshold: f64,
    },
    /// Fuse CNN and Pearson verdict streams by binary voting
    Fuse {
        #[arg(long)]
        cnn: PathBuf,
        #[arg(long)]
        pearson: PathBuf,
        /// Windows file supplying ground-truth labels
        #[arg(long)]
        windows: Option<PathBuf>,
    },
    /// Evaluate a cross-corpus train/test matrix
    Evaluate {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        plots: bool,
    },
    /// Run the full pipeline from a config file
    Run,
    /// Check a config file and print diagnostics
    Validate,
}

fn parse_format(s: &str) -> std::result::Result<LogFormat, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn out_root(cli_out: &Option<PathBuf>) -> PathBuf {
    cli_out
        .clone()
        .or_else(|| std::env::var_os("CANIDS_OUT_ROOT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn load_toml<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

/// Record generation parameters next to every synthesized artifact.
fn write_sim_manifest(output: &Path, body: serde_json::Value) -> Result<()> {
    let mut os = output.as_os_str().to_owned();
    os.push(".manifest.json");
    let path = PathBuf::from(os);
    fs::write(&path, serde_json::to_string_pretty(&body)?).map_err(|e| Error::io(&path, e))
}

fn require_out(cli: &Cli) -> Result<PathBuf> {
    cli.out
        .clone()
        .ok_or_else(|| Error::Config("--out PATH is required for this command".into()))
}

fn require_config(cli: &Cli) -> Result<PipelineConfig> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::Config("--config FILE is required for this command".into()))?;
    PipelineConfig::from_toml_file(path)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(
        env_logger::Env::default().default_filter_or(if cli.verbose { "info" } else { "warn" }),
    )
    .format_timestamp(None)
    .init();

    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Ingest {
            format,
            input,
            normalize,
        } => {
            let output = &require_out(cli)?;
            let report = ingest::parse_file(input, *format)?;
            let rejected = report.rejected();
            if rejected > 0 {
                log::warn!("{rejected} rows rejected");
            }
            let frames = if *normalize {
                ingest::normalize_timestamps(&report.frames)?
            } else {
                report.frames
            };
            ingest::write_file(output, LogFormat::Native, &frames)?;
            if frames.len() >= 2 {
                let stats = ingest::dataset_stats(&frames)?;
                println!(
                    "{} frames, {} ids, duration {:.3}s (data_generation {:.3}), avg gap {:.6}s, {} rejected",
                    stats.total_frames,
                    stats.num_unique_ids,
                    stats.duration,
                    stats.data_generation,
                    stats.avg_time_gap,
                    rejected
                );
            } else {
                println!("{} frames written, {rejected} rejected", frames.len());
            }
            Ok(())
        }
        Command::Simulate { profile } => {
            let output = &require_out(cli)?;
            let profile: TrafficProfile = load_toml(profile)?;
            let frames = sim::synthesize_baseline(&profile)?;
            ingest::write_file(output, LogFormat::Native, &frames)?;
            write_sim_manifest(output, serde_json::json!({ "profile": profile }))?;
            println!("{} frames synthesized -> {}", frames.len(), output.display());
            Ok(())
        }
        Command::Inject {
            kind,
            regime,
            spec,
            input,
        } => {
            let output = &require_out(cli)?;
            let spec: InjectionSpec = load_toml(spec)?;
            let spec_kind = format!("{:?}", spec.kind).to_lowercase();
            if !spec_kind.starts_with(&kind.to_lowercase()[..3.min(kind.len())]) {
                return Err(Error::invalid(format!(
                    "--kind {kind} does not match spec kind {spec_kind}"
                )));
            }
            let want_regime = match regime.to_lowercase().as_str() {
                "low" => sim::Regime::LowFrequencyPeriodic,
                "high" => sim::Regime::HighFrequency,
                other => return Err(Error::invalid(format!("unknown regime `{other}`"))),
            };
            if spec.regime != want_regime {
                return Err(Error::invalid(format!(
                    "--regime {regime} does not match spec regime {:?}",
                    spec.regime
                )));
            }
            let report = ingest::parse_file(input, LogFormat::Native)?;
            let out = sim::inject(&report.frames, &spec)?;
            ingest::write_file(output, LogFormat::Native, &out)?;
            write_sim_manifest(output, serde_json::json!({ "inject": spec, "base": input }))?;
            let injected = out.iter().filter(|f| f.is_injected()).count();
            println!(
                "{} frames written ({injected} injected) -> {}",
                out.len(),
                output.display()
            );
            Ok(())
        }
        Command::Featurize {
            input,
            chunk_len,
            vehicle,
            window_len,
            stride,
        } => {
            let output = &require_out(cli)?;
            let chunk = match (chunk_len, vehicle) {
                (Some(c), _) => *c,
                (None, Some(v)) => segment::chunk_len_for_vehicle(v),
                (None, None) => segment::DEFAULT_CHUNK_LEN,
            };
            let report = ingest::parse_file(input, LogFormat::Native)?;
            let segs = segment::micro_segment(&report.frames, chunk)?;
            let windows = segment::build_windows(&segs, *window_len, stride.unwrap_or(*window_len))?;
            segment::write_windows(output, &windows)?;
            let attacks = windows.iter().filter(|w| w.label == segment::Label::Attack).count();
            println!(
                "{} segments -> {} windows ({attacks} attack) -> {}",
                segs.len(),
                windows.len(),
                output.display()
            );
            Ok(())
        }
        Command::Transform {
            input,
            wavelet: name,
            level,
            mode,
            stack,
        } => {
            let output = &require_out(cli)?;
            let windows = segment::read_windows(input)?;
            let params = TransformParams {
                wavelet: name.clone(),
                mode: mode.clone(),
                levels: *level,
                stack: *stack,
            };
            let dataset = wavelet::transform_windows(&windows, &params)?;
            tensor_io::write_tensors(output, &dataset)?;
            let t = &dataset.tensors[0];
            println!(
                "{} tensors of {}x{}x{} -> {}",
                dataset.len(),
                t.channels(),
                t.num_bands(),
                t.pad_len(),
                output.display()
            );
            Ok(())
        }
        Command::Train { tensors } => {
            let output = &require_out(cli)?;
            let mut cfg: CnnConfig = match &cli.config {
                Some(path) => load_toml(path)?,
                None => CnnConfig::default(),
            };
            if let Some(seed) = cli.seed {
                cfg.seed = seed;
            }
            let dataset = tensor_io::read_tensors(tensors)?;
            let inputs = wavelet::assemble_inputs(&dataset, dataset.params.stack)?;
            let first = inputs
                .first()
                .ok_or_else(|| Error::invalid("tensor archive shorter than the model stack"))?;
            let model = cnn::train(cnn::init_model(&cfg, first.planes.dim())?, &inputs)?;
            let last = model.training_history.last().cloned();
            cnn::save_model(output, &model)?;
            match last {
                Some(e) => println!(
                    "trained {} epochs (final train loss {:.4}, val loss {:.4}) -> {}",
                    model.training_history.len(),
                    e.train_loss,
                    e.val_loss,
                    output.display()
                ),
                None => println!("trained -> {}", output.display()),
            }
            Ok(())
        }
        Command::Predict {
            model,
            tensors,
            cutoff,
        } => {
            let output = &require_out(cli)?;
            let model = cnn::load_model(model)?;
            let dataset = tensor_io::read_tensors(tensors)?;
            let inputs = wavelet::assemble_inputs(&dataset, dataset.params.stack)?;
            let mut w = String::from("window_index,flag,score\n");
            let mut flagged = 0usize;
            for input in &inputs {
                let (flag, score) = cnn::predict(&model, input, *cutoff)?;
                flagged += flag as usize;
                w.push_str(&format!("{},{},{}\n", input.window_index, flag, score));
            }
            fs::write(output, w).map_err(|e| Error::io(output, e))?;
            println!("{} inputs scored ({flagged} flagged) -> {}", inputs.len(), output.display());
            Ok(())
        }
        Command::DetectPearson {
            input,
            threshold,
        } => {
            let output = &require_out(cli)?;
            let windows = segment::read_windows(input)?;
            let cfg = PearsonConfig {
                threshold: *threshold,
                ..Default::default()
            };
            let results = pearson::detect_all(&windows, &cfg)?;
            let mut w = String::from("window_index,rho,flag\n");
            let mut flagged = 0usize;
            for r in &results {
                flagged += r.flag as usize;
                let rho = r.rho.map(|v| v.to_string()).unwrap_or_default();
                w.push_str(&format!("{},{},{}\n", r.window_index, rho, r.flag));
            }
            fs::write(output, w).map_err(|e| Error::io(output, e))?;
            println!("{} windows checked ({flagged} flagged) -> {}", results.len(), output.display());
            Ok(())
        }
        Command::Fuse {
            cnn: cnn_path,
            pearson: pearson_path,
            windows,
        } => {
            let output = &require_out(cli)?;
            let cnn_verdicts = read_cnn_verdicts(cnn_path)?;
            let pearson_results = read_pearson_verdicts(pearson_path)?;
            let labels: Vec<Option<segment::Label>> = match windows {
                Some(path) => {
                    let ws = segment::read_windows(path)?;
                    let by_index: std::collections::HashMap<usize, segment::Label> =
                        ws.iter().map(|w| (w.window_index, w.label)).collect();
                    pearson_results
                        .iter()
                        .map(|r| by_index.get(&r.window_index).copied())
                        .collect()
                }
                None => vec![None; pearson_results.len()],
            };
            let fused = fusion::fuse_streams(&cnn_verdicts, &pearson_results, &labels)?;
            fusion::write_verdicts(output, &fused)?;
            let attacks = fused
                .iter()
                .filter(|v| v.final_verdict == fusion::FinalVerdict::Attack)
                .count();
            println!("{} verdicts fused ({attacks} attack) -> {}", fused.len(), output.display());
            Ok(())
        }
        Command::Evaluate { spec, plots } => {
            let spec: eval::CrossMatrixSpec = load_toml(spec)?;
            let out_dir = out_root(&cli.out);
            fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
            let table = eval::cross_matrix(&spec)?;
            eval::emit_report(&table, ReportFormat::Json, &out_dir.join("report.json"))?;
            eval::emit_report(&table, ReportFormat::Csv, &out_dir.join("report.csv"))?;
            if *plots {
                let threshold = spec.pearson.as_ref().map(|p| p.threshold).unwrap_or(-0.7);
                eval::emit_plots(&table, &out_dir.join("plots"), threshold)?;
            }
            for cell in &table {
                match (&cell.metrics, &cell.error) {
                    (Some(m), _) => println!(
                        "{} -> {} [{}{}]: f1={:.4} acc={:.4} auc={}",
                        cell.spec.train,
                        cell.spec.test,
                        format!("{:?}", cell.spec.detectors).to_lowercase(),
                        if cell.in_domain { ", in-domain" } else { "" },
                        m.f1,
                        m.accuracy,
                        m.auc.map(|a| format!("{a:.4}")).unwrap_or_else(|| "n/a".into()),
                    ),
                    (None, Some(e)) => println!("{} -> {}: FAILED ({e})", cell.spec.train, cell.spec.test),
                    (None, None) => unreachable!(),
                }
            }
            Ok(())
        }
        Command::Run => {
            let config = require_config(cli)?;
            let mut resolved = config.resolved(cli.seed);
            let out_dir = cli
                .out
                .clone()
                .or_else(|| resolved.out_dir.clone())
                .unwrap_or_else(|| out_root(&None));
            resolved.out_dir = Some(out_dir.clone());
            let outcome = pipeline::run_pipeline(&resolved, &out_dir)?;
            println!(
                "stages run: [{}], skipped: [{}]",
                outcome.stages_run.join(", "),
                outcome.stages_skipped.join(", ")
            );
            let r = &outcome.report;
            println!(
                "hybrid:  f1={:.4} acc={:.4} auc={}",
                r.hybrid.f1,
                r.hybrid.accuracy,
                r.hybrid.auc.map(|a| format!("{a:.4}")).unwrap_or_else(|| "n/a".into())
            );
            println!(
                "cnn:     f1={:.4} acc={:.4}  |  pearson: f1={:.4} acc={:.4}",
                r.cnn.f1, r.cnn.accuracy, r.pearson.f1, r.pearson.accuracy
            );
            println!("artifacts in {}", out_dir.display());
            Ok(())
        }
        Command::Validate => {
            let config = require_config(cli)?;
            let diags = pipeline::validate_config(&config);
            if diags.is_empty() {
                println!("config ok");
                return Ok(());
            }
            let mut had_error = false;
            for d in &diags {
                let tag = match d.severity {
                    Severity::Error => {
                        had_error = true;
                        "error"
                    }
                    Severity::Warning => "warning",
                };
                println!("{tag}: {}", d.message);
            }
            if had_error {
                Err(Error::Config("configuration has errors".into()))
            } else {
                Ok(())
            }
        }
    }
}

fn read_cnn_verdicts(path: &Path) -> Result<Vec<CnnVerdict>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    match lines.next() {
        Some("window_index,flag,score") => {}
        _ => return Err(Error::Format("bad cnn verdict header".into())),
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 3 {
            return Err(Error::row(i + 2, "expected 3 fields"));
        }
        out.push(CnnVerdict {
            window_index: f[0].parse().map_err(|_| Error::row(i + 2, "bad index"))?,
            flag: f[1].parse().map_err(|_| Error::row(i + 2, "bad flag"))?,
            score: f[2].parse().map_err(|_| Error::row(i + 2, "bad score"))?,
        });
    }
    Ok(out)
}

fn read_pearson_verdicts(path: &Path) -> Result<Vec<pearson::PearsonResult>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    match lines.next() {
        Some("window_index,rho,flag") => {}
        _ => return Err(Error::Format("bad pearson verdict header".into())),
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 3 {
            return Err(Error::row(i + 2, "expected 3 fields"));
        }
        let rho = if f[1].is_empty() {
            None
        } else {
            Some(f[1].parse().map_err(|_| Error::row(i + 2, "bad rho"))?)
        };
        out.push(pearson::PearsonResult {
            window_index: f[0].parse().map_err(|_| Error::row(i + 2, "bad index"))?,
            rho,
            flag: f[2].parse().map_err(|_| Error::row(i + 2, "bad flag"))?,
            p_value: None,
        });
    }
    Ok(out)
}
