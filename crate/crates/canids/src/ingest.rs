//! CAN log ingestion: HCRL-style CSV, candump text logs and the native CSV
//! export, plus timestamp normalization and dataset-level statistics.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Ground-truth marker carried by every frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Flag {
    Normal,
    Injected,
}

/// One timestamped CAN message.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CanFrame {
    /// Seconds; non-negative and non-decreasing within a stream.
    pub timestamp: f64,
    /// 11-bit or 29-bit identifier.
    pub can_id: u32,
    pub dlc: u8,
    /// Exactly `dlc` bytes.
    pub payload: Vec<u8>,
    pub flag: Flag,
    pub channel: Option<String>,
}

pub const MAX_EXTENDED_ID: u32 = 1 << 29;
pub const MAX_STANDARD_ID: u32 = 1 << 11;

impl CanFrame {
    pub fn new(timestamp: f64, can_id: u32, payload: Vec<u8>, flag: Flag) -> Result<Self> {
        if payload.len() > 8 {
            return Err(Error::invalid(format!(
                "payload length {} exceeds 8",
                payload.len()
            )));
        }
        if can_id >= MAX_EXTENDED_ID {
            return Err(Error::invalid(format!("can_id {can_id:#x} exceeds 29 bits")));
        }
        if !timestamp.is_finite() || timestamp < 0.0 {
            return Err(Error::invalid(format!("bad timestamp {timestamp}")));
        }
        Ok(CanFrame {
            timestamp,
            can_id,
            dlc: payload.len() as u8,
            payload,
            flag,
            channel: None,
        })
    }

    pub fn with_channel(mut self, channel: impl Into<String>) -> Self {
        self.channel = Some(channel.into());
        self
    }

    pub fn is_injected(&self) -> bool {
        self.flag == Flag::Injected
    }
}

/// Whole-stream statistics in the shape of the comparative-vehicle table.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct DatasetStats {
    pub num_unique_ids: usize,
    /// Last timestamp minus first, seconds.
    pub duration: f64,
    pub total_frames: usize,
    /// Mean successive-timestamp difference over the whole stream.
    pub avg_time_gap: f64,
    /// The duration surfaced verbatim under the table's column name; the
    /// source table's units are ambiguous so no conversion is applied.
    pub data_generation: f64,
}

/// Supported on-disk log formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LogFormat {
    Hcrl,
    Candump,
    Native,
}

impl std::str::FromStr for LogFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hcrl" => Ok(LogFormat::Hcrl),
            "candump" => Ok(LogFormat::Candump),
            "native" => Ok(LogFormat::Native),
            other => Err(Error::invalid(format!("unknown log format `{other}`"))),
        }
    }
}

/// Outcome of draining a parser: good frames plus per-row errors.
#[derive(Debug, Default)]
pub struct ParseReport {
    pub frames: Vec<CanFrame>,
    pub row_errors: Vec<Error>,
}

impl ParseReport {
    pub fn rejected(&self) -> usize {
        self.row_errors.len()
    }
}

/// Parse a file in the given format, collecting recoverable row errors.
pub fn parse_file(path: &Path, format: LogFormat) -> Result<ParseReport> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut report = ParseReport::default();
    match format {
        LogFormat::Hcrl => parse_hcrl_csv(reader, &mut report)?,
        LogFormat::Candump => parse_candump(reader, &mut report)?,
        LogFormat::Native => parse_native_csv(reader, &mut report)?,
    }
    Ok(report)
}

fn hex_id(s: &str, line: usize) -> Result<u32> {
    let s = s.trim().trim_start_matches("0x").trim_start_matches("0X");
    let id = u32::from_str_radix(s, 16).map_err(|_| Error::row(line, format!("bad id `{s}`")))?;
    if id >= MAX_EXTENDED_ID {
        return Err(Error::row(line, format!("id {id:#x} exceeds 29 bits")));
    }
    Ok(id)
}

/// HCRL-style rows: `timestamp, can_id(hex), dlc, data0..data{dlc-1}, flag`
/// with flag `R` (normal) or `T` (injected). Extra trailing columns are
/// ignored with a warning.
pub fn parse_hcrl_csv<R: BufRead>(reader: R, report: &mut ParseReport) -> Result<()> {
    let mut warned_extra = false;
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let text = line.map_err(|e| Error::row(line_no, e.to_string()))?;
        if text.trim().is_empty() {
            continue;
        }
        match parse_hcrl_row(&text, line_no, &mut warned_extra) {
            Ok(frame) => report.frames.push(frame),
            Err(e) => report.row_errors.push(e),
        }
    }
    Ok(())
}

fn parse_hcrl_row(text: &str, line: usize, warned_extra: &mut bool) -> Result<CanFrame> {
    let fields: Vec<&str> = text.split(',').map(str::trim).collect();
    if fields.len() < 4 {
        return Err(Error::row(line, "too few columns"));
    }
    let timestamp: f64 = fields[0]
        .parse()
        .map_err(|_| Error::row(line, format!("bad timestamp `{}`", fields[0])))?;
    let can_id = hex_id(fields[1], line)?;
    let dlc: usize = fields[2]
        .parse()
        .map_err(|_| Error::row(line, format!("bad dlc `{}`", fields[2])))?;
    if dlc > 8 {
        return Err(Error::row(line, format!("dlc {dlc} exceeds 8")));
    }
    if fields.len() < 3 + dlc + 1 {
        return Err(Error::row(
            line,
            format!("dlc {} but only {} data columns", dlc, fields.len() - 4),
        ));
    }
    let mut payload = Vec::with_capacity(dlc);
    for f in &fields[3..3 + dlc] {
        let b = u8::from_str_radix(f, 16)
            .map_err(|_| Error::row(line, format!("bad data byte `{f}`")))?;
        payload.push(b);
    }
    let flag = match fields[3 + dlc] {
        "R" | "r" => Flag::Normal,
        "T" | "t" => Flag::Injected,
        other => return Err(Error::row(line, format!("bad flag `{other}`"))),
    };
    if fields.len() > 3 + dlc + 1 && !*warned_extra {
        log::warn!("line {line}: ignoring extra trailing columns");
        *warned_extra = true;
    }
    let mut frame = CanFrame::new(timestamp, can_id, payload, flag)
        .map_err(|e| Error::row(line, e.to_string()))?;
    frame.dlc = dlc as u8;
    Ok(frame)
}

/// candump text log: `(<seconds>.<micros>) <iface> <ID>#<HEXDATA>`.
/// candump carries no ground truth, so every frame is flagged Normal.
pub fn parse_candump<R: BufRead>(reader: R, report: &mut ParseReport) -> Result<()> {
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let text = line.map_err(|e| Error::row(line_no, e.to_string()))?;
        if text.trim().is_empty() {
            continue;
        }
        match parse_candump_line(&text, line_no) {
            Ok(frame) => report.frames.push(frame),
            Err(e) => report.row_errors.push(e),
        }
    }
    Ok(())
}

fn parse_candump_line(text: &str, line: usize) -> Result<CanFrame> {
    let mut parts = text.split_whitespace();
    let ts = parts.next().ok_or_else(|| Error::row(line, "empty line"))?;
    let iface = parts
        .next()
        .ok_or_else(|| Error::row(line, "missing interface"))?;
    let frame_part = parts
        .next()
        .ok_or_else(|| Error::row(line, "missing frame"))?;

    if !ts.starts_with('(') || !ts.ends_with(')') {
        return Err(Error::row(line, format!("bad timestamp field `{ts}`")));
    }
    let timestamp: f64 = ts[1..ts.len() - 1]
        .parse()
        .map_err(|_| Error::row(line, format!("bad timestamp `{ts}`")))?;

    let (id_str, data_str) = frame_part
        .split_once('#')
        .ok_or_else(|| Error::row(line, format!("missing `#` in `{frame_part}`")))?;
    let can_id = hex_id(id_str, line)?;
    if data_str.len() % 2 != 0 || data_str.len() > 16 {
        return Err(Error::row(line, format!("bad data `{data_str}`")));
    }
    let mut payload = Vec::with_capacity(data_str.len() / 2);
    for i in (0..data_str.len()).step_by(2) {
        let b = u8::from_str_radix(&data_str[i..i + 2], 16)
            .map_err(|_| Error::row(line, format!("bad data `{data_str}`")))?;
        payload.push(b);
    }
    Ok(CanFrame::new(timestamp, can_id, payload, Flag::Normal)
        .map_err(|e| Error::row(line, e.to_string()))?
        .with_channel(iface))
}

/// Native export: header `timestamp,can_id,dlc,payload_hex,flag,channel`.
pub fn parse_native_csv<R: BufRead>(reader: R, report: &mut ParseReport) -> Result<()> {
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let text = line.map_err(|e| Error::row(line_no, e.to_string()))?;
        if line_no == 1 {
            if !text.starts_with("timestamp,") {
                return Err(Error::row(1, "missing native header"));
            }
            continue;
        }
        if text.trim().is_empty() {
            continue;
        }
        match parse_native_row(&text, line_no) {
            Ok(frame) => report.frames.push(frame),
            Err(e) => report.row_errors.push(e),
        }
    }
    Ok(())
}

fn parse_native_row(text: &str, line: usize) -> Result<CanFrame> {
    let fields: Vec<&str> = text.split(',').collect();
    if fields.len() != 6 {
        return Err(Error::row(line, format!("expected 6 columns, got {}", fields.len())));
    }
    let timestamp: f64 = fields[0]
        .parse()
        .map_err(|_| Error::row(line, format!("bad timestamp `{}`", fields[0])))?;
    let can_id = hex_id(fields[1], line)?;
    let dlc: usize = fields[2]
        .parse()
        .map_err(|_| Error::row(line, format!("bad dlc `{}`", fields[2])))?;
    let hex = fields[3].trim();
    if hex.len() != dlc * 2 {
        return Err(Error::row(line, format!("payload_hex length {} != 2*dlc", hex.len())));
    }
    let mut payload = Vec::with_capacity(dlc);
    for i in (0..hex.len()).step_by(2) {
        let b = u8::from_str_radix(&hex[i..i + 2], 16)
            .map_err(|_| Error::row(line, format!("bad payload_hex `{hex}`")))?;
        payload.push(b);
    }
    let flag = match fields[4].trim() {
        "R" => Flag::Normal,
        "T" => Flag::Injected,
        other => return Err(Error::row(line, format!("bad flag `{other}`"))),
    };
    let mut frame = CanFrame::new(timestamp, can_id, payload, flag)
        .map_err(|e| Error::row(line, e.to_string()))?;
    if !fields[5].trim().is_empty() {
        frame.channel = Some(fields[5].trim().to_string());
    }
    Ok(frame)
}

/// Write frames in the given format. Timestamps keep microsecond precision.
pub fn write_file(path: &Path, format: LogFormat, frames: &[CanFrame]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let res = match format {
        LogFormat::Hcrl => write_hcrl(&mut w, frames),
        LogFormat::Candump => write_candump(&mut w, frames),
        LogFormat::Native => write_native(&mut w, frames),
    };
    res.map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_hcrl<W: Write>(w: &mut W, frames: &[CanFrame]) -> std::io::Result<()> {
    for f in frames {
        write!(w, "{:.6},{:04x},{}", f.timestamp, f.can_id, f.dlc)?;
        for b in &f.payload {
            write!(w, ",{b:02x}")?;
        }
        let flag = if f.flag == Flag::Injected { "T" } else { "R" };
        writeln!(w, ",{flag}")?;
    }
    Ok(())
}

fn write_candump<W: Write>(w: &mut W, frames: &[CanFrame]) -> std::io::Result<()> {
    for f in frames {
        let iface = f.channel.as_deref().unwrap_or("can0");
        write!(w, "({:.6}) {} {:03X}#", f.timestamp, iface, f.can_id)?;
        for b in &f.payload {
            write!(w, "{b:02X}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

fn write_native<W: Write>(w: &mut W, frames: &[CanFrame]) -> std::io::Result<()> {
    writeln!(w, "timestamp,can_id,dlc,payload_hex,flag,channel")?;
    for f in frames {
        write!(w, "{:.6},{:04x},{},", f.timestamp, f.can_id, f.dlc)?;
        for b in &f.payload {
            write!(w, "{b:02x}")?;
        }
        let flag = if f.flag == Flag::Injected { "T" } else { "R" };
        writeln!(w, ",{},{}", flag, f.channel.as_deref().unwrap_or(""))?;
    }
    Ok(())
}

/// Shift timestamps so the stream starts at 0.0. Ordering is validated, not
/// repaired: a decreasing timestamp is a hard error naming the offending index.
pub fn normalize_timestamps(frames: &[CanFrame]) -> Result<Vec<CanFrame>> {
    let Some(first) = frames.first() else {
        return Ok(Vec::new());
    };
    let origin = first.timestamp;
    let mut out = Vec::with_capacity(frames.len());
    let mut prev = origin;
    for (i, f) in frames.iter().enumerate() {
        if f.timestamp < prev {
            return Err(Error::NonMonotonic {
                index: i,
                prev,
                next: f.timestamp,
            });
        }
        prev = f.timestamp;
        let mut g = f.clone();
        g.timestamp = f.timestamp - origin;
        out.push(g);
    }
    Ok(out)
}

/// Unique-id count, duration, frame count and mean successive gap.
pub fn dataset_stats(frames: &[CanFrame]) -> Result<DatasetStats> {
    if frames.len() < 2 {
        return Err(Error::invalid(
            "dataset statistics need at least 2 frames (gap undefined)",
        ));
    }
    let ids: HashSet<u32> = frames.iter().map(|f| f.can_id).collect();
    let duration = frames.last().unwrap().timestamp - frames[0].timestamp;
    let gap_sum: f64 = frames.windows(2).map(|p| p[1].timestamp - p[0].timestamp).sum();
    Ok(DatasetStats {
        num_unique_ids: ids.len(),
        duration,
        total_frames: frames.len(),
        avg_time_gap: gap_sum / (frames.len() - 1) as f64,
        data_generation: duration,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn parse_str(format: LogFormat, text: &str) -> ParseReport {
        let mut report = ParseReport::default();
        let cursor = Cursor::new(text.as_bytes().to_vec());
        match format {
            LogFormat::Hcrl => parse_hcrl_csv(cursor, &mut report).unwrap(),
            LogFormat::Candump => parse_candump(cursor, &mut report).unwrap(),
            LogFormat::Native => parse_native_csv(cursor, &mut report).unwrap(),
        }
        report
    }

    #[test]
    fn hcrl_row_maps_fields() {
        let r = parse_str(
            LogFormat::Hcrl,
            "1478198376.389427,0316,8,05,21,68,09,21,21,00,6f,R\n",
        );
        assert_eq!(r.rejected(), 0);
        let f = &r.frames[0];
        assert_eq!(f.timestamp, 1478198376.389427);
        assert_eq!(f.can_id, 0x316);
        assert_eq!(f.dlc, 8);
        assert_eq!(f.payload, vec![0x05, 0x21, 0x68, 0x09, 0x21, 0x21, 0x00, 0x6f]);
        assert_eq!(f.flag, Flag::Normal);
    }

    #[test]
    fn hcrl_t_flag_is_injected() {
        let r = parse_str(LogFormat::Hcrl, "1.0,0000,2,00,11,T\n");
        assert_eq!(r.frames[0].flag, Flag::Injected);
        assert_eq!(r.frames[0].can_id, 0);
    }

    #[test]
    fn hcrl_short_row_rejected_and_counted() {
        let r = parse_str(
            LogFormat::Hcrl,
            "1.0,0316,8,05,21,68,09,21,R\n2.0,0316,1,aa,R\n",
        );
        assert_eq!(r.frames.len(), 1);
        assert_eq!(r.rejected(), 1);
        assert!(matches!(r.row_errors[0], Error::Row { line: 1, .. }));
    }

    #[test]
    fn candump_line_maps_fields() {
        let r = parse_str(LogFormat::Candump, "(1620000000.000100) can0 123#DEADBEEF\n");
        let f = &r.frames[0];
        assert_eq!(f.timestamp, 1620000000.0001);
        assert_eq!(f.can_id, 0x123);
        assert_eq!(f.dlc, 4);
        assert_eq!(f.payload, vec![0xDE, 0xAD, 0xBE, 0xEF]);
        assert_eq!(f.channel.as_deref(), Some("can0"));
        assert_eq!(f.flag, Flag::Normal);
    }

    #[test]
    fn candump_empty_payload_and_garbage() {
        let r = parse_str(
            LogFormat::Candump,
            "(0.000000) can0 000#\ngarbage line\n(0.5) can1 1F#01\n",
        );
        assert_eq!(r.frames.len(), 2);
        assert_eq!(r.frames[0].dlc, 0);
        assert!(r.frames[0].payload.is_empty());
        assert_eq!(r.rejected(), 1);
    }

    #[test]
    fn normalize_shifts_to_origin() {
        let frames = vec![
            CanFrame::new(100.5, 1, vec![], Flag::Normal).unwrap(),
            CanFrame::new(100.6, 2, vec![], Flag::Normal).unwrap(),
        ];
        let out = normalize_timestamps(&frames).unwrap();
        assert_eq!(out[0].timestamp, 0.0);
        assert!((out[1].timestamp - 0.1).abs() < 1e-12);
    }

    #[test]
    fn normalize_single_frame() {
        let frames = vec![CanFrame::new(7.0, 1, vec![], Flag::Normal).unwrap()];
        let out = normalize_timestamps(&frames).unwrap();
        assert_eq!(out[0].timestamp, 0.0);
    }

    #[test]
    fn normalize_rejects_decreasing() {
        let frames = vec![
            CanFrame::new(5.0, 1, vec![], Flag::Normal).unwrap(),
            CanFrame::new(4.9, 2, vec![], Flag::Normal).unwrap(),
        ];
        match normalize_timestamps(&frames) {
            Err(Error::NonMonotonic { index, .. }) => assert_eq!(index, 1),
            other => panic!("expected NonMonotonic, got {other:?}"),
        }
    }

    #[test]
    fn normalize_is_idempotent() {
        let frames: Vec<CanFrame> = (0..50)
            .map(|i| CanFrame::new(3.0 + i as f64 * 0.01, i, vec![i as u8], Flag::Normal).unwrap())
            .collect();
        let once = normalize_timestamps(&frames).unwrap();
        let twice = normalize_timestamps(&once).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn stats_hand_case() {
        let frames = vec![
            CanFrame::new(0.0, 1, vec![], Flag::Normal).unwrap(),
            CanFrame::new(0.1, 1, vec![], Flag::Normal).unwrap(),
            CanFrame::new(0.3, 2, vec![], Flag::Normal).unwrap(),
        ];
        let s = dataset_stats(&frames).unwrap();
        assert_eq!(s.num_unique_ids, 2);
        assert!((s.duration - 0.3).abs() < 1e-12);
        assert!((s.avg_time_gap - 0.15).abs() < 1e-12);
        assert_eq!(s.total_frames, 3);
        assert_eq!(s.data_generation, s.duration);
    }

    #[test]
    fn stats_needs_two_frames() {
        let frames = vec![CanFrame::new(0.0, 1, vec![], Flag::Normal).unwrap()];
        assert!(dataset_stats(&frames).is_err());
    }

    #[test]
    fn stats_concat_counts_add() {
        let a: Vec<CanFrame> = (0..10)
            .map(|i| CanFrame::new(i as f64 * 0.1, i, vec![], Flag::Normal).unwrap())
            .collect();
        let b: Vec<CanFrame> = (10..25)
            .map(|i| CanFrame::new(i as f64 * 0.1, i, vec![], Flag::Normal).unwrap())
            .collect();
        let mut both = a.clone();
        both.extend(b.clone());
        let s = dataset_stats(&both).unwrap();
        assert_eq!(s.total_frames, a.len() + b.len());
    }

    /// Parsed stream -> write -> re-parse must be the identity (timestamps
    /// carry microsecond precision through the text formats).
    fn assert_round_trip(format: LogFormat, frames: Vec<CanFrame>) {
        let dir = tempfile::tempdir().unwrap();
        let first = dir.path().join("first.log");
        let second = dir.path().join("second.log");
        write_file(&first, format, &frames).unwrap();
        let parsed = parse_file(&first, format).unwrap();
        assert_eq!(parsed.rejected(), 0);
        write_file(&second, format, &parsed.frames).unwrap();
        let reparsed = parse_file(&second, format).unwrap();
        assert_eq!(reparsed.rejected(), 0);
        assert_eq!(reparsed.frames, parsed.frames);
    }

    /// Timestamps on exact microsecond ticks survive the text formats bit
    /// for bit, so the parsed stream also equals the original.
    fn micros(us: u64) -> f64 {
        us as f64 / 1e6
    }

    #[test]
    fn native_round_trip_exact() {
        let frames: Vec<CanFrame> = (0..100)
            .map(|i| {
                let mut f = CanFrame::new(
                    micros(17001 * i as u64 + 1),
                    ((i * 37) % 2048) as u32,
                    vec![i as u8, 0xff - i as u8],
                    if i % 7 == 0 { Flag::Injected } else { Flag::Normal },
                )
                .unwrap();
                if i % 2 == 0 {
                    f.channel = Some("can0".into());
                }
                f
            })
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("native.csv");
        write_file(&path, LogFormat::Native, &frames).unwrap();
        let report = parse_file(&path, LogFormat::Native).unwrap();
        assert_eq!(report.rejected(), 0);
        assert_eq!(report.frames, frames);
        assert_round_trip(LogFormat::Native, frames);
    }

    #[test]
    fn hcrl_round_trip_exact() {
        let frames: Vec<CanFrame> = (0..200)
            .map(|i| {
                CanFrame::new(
                    1478198376.389427 + micros(731 * i as u64),
                    ((i * 13) % 2048) as u32,
                    (0..(i % 9)).map(|b| b as u8).collect(),
                    if i % 5 == 0 { Flag::Injected } else { Flag::Normal },
                )
                .unwrap()
            })
            .collect();
        assert_round_trip(LogFormat::Hcrl, frames);
    }

    #[test]
    fn candump_round_trip_exact() {
        let frames: Vec<CanFrame> = (0..100)
            .map(|i| {
                CanFrame::new(micros(10100 * i as u64), ((i * 3) % 2048) as u32, vec![1, 2, 3], Flag::Normal)
                    .unwrap()
                    .with_channel("can0")
            })
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("dump.log");
        write_file(&path, LogFormat::Candump, &frames).unwrap();
        let report = parse_file(&path, LogFormat::Candump).unwrap();
        assert_eq!(report.rejected(), 0);
        assert_eq!(report.frames, frames);
        assert_round_trip(LogFormat::Candump, frames);
    }
}
