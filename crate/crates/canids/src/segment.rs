//! Windowed traffic statistics: fixed-length micro-segments (packet count and
//! mean inter-frame gap per bin) grouped into 100-segment feature windows.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::ingest::CanFrame;

pub const DEFAULT_CHUNK_LEN: f64 = 0.01;
pub const WINDOW_LEN: usize = 100;

/// Statistics for one time bin of `chunk_len` seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct MicroSegment {
    pub index: usize,
    pub start: f64,
    pub chunk_len: f64,
    pub num_packets: usize,
    /// Mean successive gap within the bin when it holds >= 2 frames,
    /// otherwise the sentinel `chunk_len` (the largest observable in-bin gap).
    pub avg_time_gap: f64,
    pub any_injected: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Label {
    AttackFree,
    Attack,
}

impl Label {
    pub fn as_u8(self) -> u8 {
        match self {
            Label::AttackFree => 0,
            Label::Attack => 1,
        }
    }

    pub fn from_u8(v: u8) -> Result<Self> {
        match v {
            0 => Ok(Label::AttackFree),
            1 => Ok(Label::Attack),
            other => Err(Error::invalid(format!("bad label {other}"))),
        }
    }
}

/// 100 consecutive micro-segments: the two detector input signals plus the
/// ground-truth label (Attack iff any constituent segment saw an injection).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureWindow {
    pub window_index: usize,
    pub counts: Vec<f64>,
    pub gaps: Vec<f64>,
    pub label: Label,
}

/// Bin a normalized stream into `chunk_len`-second segments.
///
/// Bins cover [k*chunk_len, (k+1)*chunk_len); the final bin is closed on the
/// right so a frame exactly at the stream end still lands in a bin and the
/// segment count equals ceil(duration / chunk_len).
pub fn micro_segment(frames: &[CanFrame], chunk_len: f64) -> Result<Vec<MicroSegment>> {
    if !(chunk_len > 0.0) {
        return Err(Error::invalid("chunk_len must be > 0"));
    }
    if frames.is_empty() {
        return Ok(Vec::new());
    }
    if frames[0].timestamp != 0.0 {
        return Err(Error::invalid(
            "stream is not normalized (first timestamp is not 0.0)",
        ));
    }
    let duration = frames.last().unwrap().timestamp;
    let num_segments = ((duration / chunk_len).ceil() as usize).max(1);

    struct Acc {
        count: usize,
        first: f64,
        last: f64,
        injected: bool,
    }
    let mut bins: Vec<Acc> = (0..num_segments)
        .map(|_| Acc {
            count: 0,
            first: 0.0,
            last: 0.0,
            injected: false,
        })
        .collect();

    let mut prev = 0.0;
    for (i, f) in frames.iter().enumerate() {
        if f.timestamp < prev {
            return Err(Error::NonMonotonic {
                index: i,
                prev,
                next: f.timestamp,
            });
        }
        prev = f.timestamp;
        let idx = ((f.timestamp / chunk_len).floor() as usize).min(num_segments - 1);
        let acc = &mut bins[idx];
        if acc.count == 0 {
            acc.first = f.timestamp;
        }
        acc.last = f.timestamp;
        acc.count += 1;
        acc.injected |= f.is_injected();
    }

    Ok(bins
        .into_iter()
        .enumerate()
        .map(|(k, acc)| MicroSegment {
            index: k,
            start: k as f64 * chunk_len,
            chunk_len,
            num_packets: acc.count,
            avg_time_gap: if acc.count >= 2 {
                (acc.last - acc.first) / (acc.count - 1) as f64
            } else {
                chunk_len
            },
            any_injected: acc.injected,
        })
        .collect())
}

/// Group segments into fixed-length windows. With the default stride equal
/// to the window length the windows tile the stream without overlap; a
/// trailing partial window is dropped.
pub fn build_windows(
    segments: &[MicroSegment],
    window_len: usize,
    stride: usize,
) -> Result<Vec<FeatureWindow>> {
    if window_len == 0 {
        return Err(Error::invalid("window_len must be > 0"));
    }
    if stride == 0 {
        return Err(Error::invalid("stride must be > 0"));
    }
    let mut out = Vec::new();
    let mut start = 0usize;
    let mut window_index = 0usize;
    while start + window_len <= segments.len() {
        let slice = &segments[start..start + window_len];
        let label = if slice.iter().any(|s| s.any_injected) {
            Label::Attack
        } else {
            Label::AttackFree
        };
        out.push(FeatureWindow {
            window_index,
            counts: slice.iter().map(|s| s.num_packets as f64).collect(),
            gaps: slice.iter().map(|s| s.avg_time_gap).collect(),
            label,
        });
        start += stride;
        window_index += 1;
    }
    Ok(out)
}

/// Per-vehicle chunk limits; unknown tags fall back to the 0.01 s reference
/// with a warning.
pub fn chunk_len_for_vehicle(vehicle: &str) -> f64 {
    match vehicle.to_ascii_lowercase().as_str() {
        "sonata" => 0.010,
        "kia" => 0.009,
        "tesla" => 0.0065,
        other => {
            log::warn!("unknown vehicle tag `{other}`; using default chunk length 0.01 s");
            DEFAULT_CHUNK_LEN
        }
    }
}

/// Write windows as CSV: `window_index,label,counts_0..,gaps_0..`.
pub fn write_windows(path: &Path, windows: &[FeatureWindow]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let n = windows.first().map(|fw| fw.counts.len()).unwrap_or(WINDOW_LEN);
    let mut header = String::from("window_index,label");
    for i in 0..n {
        header.push_str(&format!(",counts_{i}"));
    }
    for i in 0..n {
        header.push_str(&format!(",gaps_{i}"));
    }
    writeln!(w, "{header}").map_err(|e| Error::io(path, e))?;
    for fw in windows {
        let mut line = format!("{},{}", fw.window_index, fw.label.as_u8());
        for v in &fw.counts {
            line.push_str(&format!(",{v}"));
        }
        for v in &fw.gaps {
            line.push_str(&format!(",{v}"));
        }
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Read a windows CSV written by [`write_windows`].
pub fn read_windows(path: &Path) -> Result<Vec<FeatureWindow>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut lines = reader.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Format("empty windows file".into()))?
        .map_err(|e| Error::io(path, e))?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < 2 || cols[0] != "window_index" || cols[1] != "label" {
        return Err(Error::Format("bad windows header".into()));
    }
    let n = cols.iter().filter(|c| c.starts_with("counts_")).count();
    if n == 0 || cols.len() != 2 + 2 * n {
        return Err(Error::Format("bad windows header layout".into()));
    }
    let mut out = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line_no = idx + 2;
        let text = line.map_err(|e| Error::io(path, e))?;
        if text.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = text.split(',').collect();
        if fields.len() != 2 + 2 * n {
            return Err(Error::row(line_no, format!("expected {} fields", 2 + 2 * n)));
        }
        let window_index: usize = fields[0]
            .parse()
            .map_err(|_| Error::row(line_no, "bad window_index"))?;
        let label = Label::from_u8(
            fields[1]
                .parse::<u8>()
                .map_err(|_| Error::row(line_no, "bad label"))?,
        )?;
        let parse_f64 = |s: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|_| Error::row(line_no, format!("bad value `{s}`")))
        };
        let counts = fields[2..2 + n].iter().map(|s| parse_f64(s)).collect::<Result<_>>()?;
        let gaps = fields[2 + n..].iter().map(|s| parse_f64(s)).collect::<Result<_>>()?;
        out.push(FeatureWindow {
            window_index,
            counts,
            gaps,
            label,
        });
    }
    Ok(out)
}
