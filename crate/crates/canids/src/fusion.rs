//! Binary-vote fusion of the two detectors: a window is attack-free only
//! when both flags are 0.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::pearson::PearsonResult;
use crate::segment::Label;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum FinalVerdict {
    AttackFree,
    Attack,
}

impl FinalVerdict {
    pub fn as_str(self) -> &'static str {
        match self {
            FinalVerdict::AttackFree => "attack_free",
            FinalVerdict::Attack => "attack",
        }
    }

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "attack_free" => Ok(FinalVerdict::AttackFree),
            "attack" => Ok(FinalVerdict::Attack),
            other => Err(Error::invalid(format!("bad final verdict `{other}`"))),
        }
    }
}

/// One CNN decision, aligned to the window its input sequence ends on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CnnVerdict {
    pub window_index: usize,
    pub flag: u8,
    pub score: f64,
}

/// Fused per-window decision with everything needed for reporting.
#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub window_index: usize,
    pub cnn_flag: u8,
    /// None for warm-up windows the CNN never saw.
    pub cnn_score: Option<f64>,
    pub pearson_flag: u8,
    /// None when the correlation was undefined.
    pub pearson_rho: Option<f64>,
    pub final_verdict: FinalVerdict,
    pub label: Option<Label>,
    /// True for warm-up windows where the vote degraded to Pearson alone.
    pub partial: bool,
}

/// The voting truth table: attack-free only when both detectors say 0.
pub fn vote(cnn_flag: u8, pearson_flag: u8) -> FinalVerdict {
    if cnn_flag == 0 && pearson_flag == 0 {
        FinalVerdict::AttackFree
    } else {
        FinalVerdict::Attack
    }
}

/// Element-wise vote over aligned detector streams.
///
/// The CNN stream starts at the window its first stacked input ends on, so
/// Pearson verdicts for earlier windows are emitted with the CNN flag
/// treated as 0 and marked partial. `labels` rides along with the Pearson
/// stream (one entry per result, None when ground truth is unknown).
pub fn fuse_streams(
    cnn: &[CnnVerdict],
    pearson: &[PearsonResult],
    labels: &[Option<Label>],
) -> Result<Vec<Verdict>> {
    if labels.len() != pearson.len() {
        return Err(Error::invalid(format!(
            "labels length {} does not match pearson stream length {}",
            labels.len(),
            pearson.len()
        )));
    }
    let first_cnn = cnn.first().map(|c| c.window_index);
    let mut out = Vec::with_capacity(pearson.len());
    let mut ci = 0usize;
    for (p, label) in pearson.iter().zip(labels) {
        match first_cnn {
            Some(start) if p.window_index >= start => {
                let c = cnn.get(ci).ok_or_else(|| {
                    Error::invalid(format!(
                        "cnn stream ended before window {}",
                        p.window_index
                    ))
                })?;
                if c.window_index != p.window_index {
                    return Err(Error::invalid(format!(
                        "verdict streams misaligned: cnn window {} vs pearson window {}",
                        c.window_index, p.window_index
                    )));
                }
                ci += 1;
                out.push(Verdict {
                    window_index: p.window_index,
                    cnn_flag: c.flag,
                    cnn_score: Some(c.score),
                    pearson_flag: p.flag,
                    pearson_rho: p.rho,
                    final_verdict: vote(c.flag, p.flag),
                    label: *label,
                    partial: false,
                });
            }
            _ => {
                out.push(Verdict {
                    window_index: p.window_index,
                    cnn_flag: 0,
                    cnn_score: None,
                    pearson_flag: p.flag,
                    pearson_rho: p.rho,
                    final_verdict: vote(0, p.flag),
                    label: *label,
                    partial: true,
                });
            }
        }
    }
    if ci != cnn.len() {
        return Err(Error::invalid(format!(
            "cnn stream has {} verdicts past the pearson stream (first extra window {})",
            cnn.len() - ci,
            cnn[ci].window_index
        )));
    }
    Ok(out)
}

pub const VERDICT_HEADER: &str =
    "window_index,cnn_flag,cnn_score,pearson_flag,pearson_rho,final,label,partial";

pub fn write_verdicts(path: &Path, verdicts: &[Verdict]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e: std::io::Error| Error::io(path, e);
    writeln!(w, "{VERDICT_HEADER}").map_err(io_err)?;
    for v in verdicts {
        let score = v.cnn_score.map(|s| s.to_string()).unwrap_or_default();
        let rho = v.pearson_rho.map(|r| r.to_string()).unwrap_or_default();
        let label = v.label.map(|l| l.as_u8().to_string()).unwrap_or_default();
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            v.window_index,
            v.cnn_flag,
            score,
            v.pearson_flag,
            rho,
            v.final_verdict.as_str(),
            label,
            u8::from(v.partial),
        )
        .map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

pub fn read_verdicts(path: &Path) -> Result<Vec<Verdict>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut lines = reader.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Format("empty verdict file".into()))?
        .map_err(|e| Error::io(path, e))?;
    if header != VERDICT_HEADER {
        return Err(Error::Format("bad verdict header".into()));
    }
    let mut out = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line_no = idx + 2;
        let text = line.map_err(|e| Error::io(path, e))?;
        if text.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = text.split(',').collect();
        if f.len() != 8 {
            return Err(Error::row(line_no, "expected 8 fields"));
        }
        let parse_opt = |s: &str| -> Result<Option<f64>> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|_| Error::row(line_no, format!("bad float `{s}`")))
            }
        };
        out.push(Verdict {
            window_index: f[0].parse().map_err(|_| Error::row(line_no, "bad index"))?,
            cnn_flag: f[1].parse().map_err(|_| Error::row(line_no, "bad cnn_flag"))?,
            cnn_score: parse_opt(f[2])?,
            pearson_flag: f[3].parse().map_err(|_| Error::row(line_no, "bad pearson_flag"))?,
            pearson_rho: parse_opt(f[4])?,
            final_verdict: FinalVerdict::from_str(f[5])?,
            label: if f[6].is_empty() {
                None
            } else {
                Some(Label::from_u8(
                    f[6].parse().map_err(|_| Error::row(line_no, "bad label"))?,
                )?)
            },
            partial: f[7] == "1",
        });
    }
    Ok(out)
}
