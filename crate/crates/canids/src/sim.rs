//! Synthetic CAN traffic: periodic baselines plus DoS, fuzzing and replay
//! injection at configurable rates, all deterministic under a seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::ingest::{CanFrame, Flag};

/// Payload source for one periodic id.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PayloadGen {
    /// Fixed bytes, given as a hex string.
    Constant { hex: String },
    /// 8-byte little-endian frame counter.
    Counter,
    /// 8 random bytes per frame.
    Random,
}

/// One periodic transmitter on the bus.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct IdProfile {
    pub can_id: u32,
    /// Nominal period, seconds.
    pub period: f64,
    /// Uniform timing noise as a fraction of the period, in [0, 1).
    #[serde(default)]
    pub jitter_fraction: f64,
    /// Schedule offset, seconds. Staggering phases across ids models the
    /// tick-aligned transmit schedules of real ECUs.
    #[serde(default)]
    pub phase: f64,
    pub payload: PayloadGen,
}

/// Baseline traffic description.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrafficProfile {
    pub ids: Vec<IdProfile>,
    /// Seconds of traffic to generate.
    pub duration: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    Dos,
    Fuzzing,
    Replay,
}

/// The two injection-rate classes exercised by the evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    LowFrequencyPeriodic,
    HighFrequency,
}

/// Attack injection parameters.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct InjectionSpec {
    pub kind: AttackKind,
    pub regime: Regime,
    /// Injected frames per second while a window is active. Ignored for
    /// replay, where the captured slice sets the schedule.
    pub rate: f64,
    /// Disjoint (start, end) intervals, seconds.
    pub active_windows: Vec<(f64, f64)>,
    pub seed: u64,
    /// DoS only: the dominant id to flood with.
    #[serde(default)]
    pub dominant_id: u32,
    /// Replay only: (capture_start, capture_end) within the base stream.
    #[serde(default)]
    pub replay_source: Option<(f64, f64)>,
    /// DoS/fuzzing: emit this many frames back to back per burst instead of
    /// a perfectly uniform schedule, the way software-timed injection tools
    /// behave. The per-window frame count is unchanged. None = uniform.
    #[serde(default)]
    pub burst: Option<u32>,
}

impl TrafficProfile {
    pub fn validate(&self) -> Result<()> {
        if self.ids.is_empty() {
            return Err(Error::invalid("traffic profile has an empty id table"));
        }
        if !(self.duration > 0.0) {
            return Err(Error::invalid("traffic profile duration must be positive"));
        }
        for id in &self.ids {
            if !(id.period > 0.0) {
                return Err(Error::invalid(format!("id {:#x}: period must be > 0", id.can_id)));
            }
            if !(0.0..1.0).contains(&id.jitter_fraction) {
                return Err(Error::invalid(format!(
                    "id {:#x}: jitter_fraction must be in [0, 1)",
                    id.can_id
                )));
            }
            if !(id.phase >= 0.0) {
                return Err(Error::invalid(format!("id {:#x}: phase must be >= 0", id.can_id)));
            }
            if let PayloadGen::Constant { hex } = &id.payload {
                decode_hex(hex)?;
            }
        }
        Ok(())
    }
}

impl InjectionSpec {
    fn validate(&self, expect: AttackKind, base_end: f64) -> Result<()> {
        if self.kind != expect {
            return Err(Error::invalid(format!(
                "spec kind {:?} does not match requested injection {:?}",
                self.kind, expect
            )));
        }
        if !(self.rate > 0.0) && self.kind != AttackKind::Replay {
            return Err(Error::invalid("injection rate must be > 0"));
        }
        let mut windows = self.active_windows.clone();
        windows.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        for (i, &(s, e)) in windows.iter().enumerate() {
            if !(e > s) {
                return Err(Error::invalid(format!("active window {i} is empty or inverted")));
            }
            if i > 0 && s < windows[i - 1].1 {
                return Err(Error::invalid(format!(
                    "active windows overlap at {:?} / {:?}",
                    windows[i - 1],
                    (s, e)
                )));
            }
            if e > base_end + 1e-9 {
                return Err(Error::invalid(format!(
                    "active window ({s}, {e}) extends past stream end {base_end}"
                )));
            }
        }
        Ok(())
    }
}

fn decode_hex(hex: &str) -> Result<Vec<u8>> {
    if hex.len() % 2 != 0 || hex.len() > 16 {
        return Err(Error::invalid(format!("bad payload hex `{hex}`")));
    }
    (0..hex.len())
        .step_by(2)
        .map(|i| {
            u8::from_str_radix(&hex[i..i + 2], 16)
                .map_err(|_| Error::invalid(format!("bad payload hex `{hex}`")))
        })
        .collect()
}

/// Number of injections in a window of `len` seconds at `rate`/s: the exact
/// mathematical floor(rate * len), snapped up when the float product sits
/// within 1e-9 of the next integer.
fn injection_count(rate: f64, len: f64) -> usize {
    let x = rate * len;
    let mut n = x.floor();
    if x - n > 1.0 - 1e-9 {
        n += 1.0;
    }
    n as usize
}

/// Emission time of injected frame `k` relative to the window start. With
/// bursts, frames pack at 4x the nominal rate inside each burst, so the
/// burst occupies the first quarter of its slot and the count per window is
/// identical to the uniform schedule.
fn injection_offset(k: usize, rate: f64, burst: Option<u32>) -> f64 {
    match burst {
        None => k as f64 / rate,
        Some(b) => {
            let b = b.max(1) as usize;
            let slot = (k / b) as f64 * (b as f64 / rate);
            slot + (k % b) as f64 / (4.0 * rate)
        }
    }
}

/// Emit per-id periodic frames at period +/- jitter, merged in timestamp
/// order and flagged Normal. Identical (profile, seed) inputs produce
/// byte-identical streams.
pub fn synthesize_baseline(profile: &TrafficProfile) -> Result<Vec<CanFrame>> {
    profile.validate()?;
    let mut frames: Vec<CanFrame> = Vec::new();
    for (idx, id) in profile.ids.iter().enumerate() {
        let mut rng = ChaCha20Rng::seed_from_u64(profile.seed);
        rng.set_stream(idx as u64 + 1);
        let constant = match &id.payload {
            PayloadGen::Constant { hex } => Some(decode_hex(hex)?),
            _ => None,
        };
        let mut k: u64 = 0;
        loop {
            let nominal = id.phase + k as f64 * id.period;
            if nominal >= profile.duration {
                break;
            }
            let jitter = if id.jitter_fraction > 0.0 {
                rng.gen_range(-1.0..1.0) * id.jitter_fraction * id.period
            } else {
                0.0
            };
            let t = (nominal + jitter).clamp(0.0, profile.duration);
            let payload = match &id.payload {
                PayloadGen::Constant { .. } => constant.clone().unwrap(),
                PayloadGen::Counter => k.to_le_bytes().to_vec(),
                PayloadGen::Random => (0..8).map(|_| rng.gen::<u8>()).collect(),
            };
            frames.push(CanFrame::new(t, id.can_id, payload, Flag::Normal)?);
            k += 1;
        }
    }
    frames.sort_by(|a, b| a.timestamp.partial_cmp(&b.timestamp).unwrap());
    Ok(frames)
}

fn merge_injected(base: &[CanFrame], mut injected: Vec<CanFrame>) -> Vec<CanFrame> {
    let mut out = base.to_vec();
    out.append(&mut injected);
    out.sort_by(|a, b| a.timestamp.partial_cmp(&b.timestamp).unwrap());
    out
}

fn stream_end(base: &[CanFrame]) -> f64 {
    base.last().map(|f| f.timestamp).unwrap_or(0.0)
}

/// Flood the bus with the dominant id inside each active window.
pub fn inject_dos(base: &[CanFrame], spec: &InjectionSpec) -> Result<Vec<CanFrame>> {
    spec.validate(AttackKind::Dos, stream_end(base))?;
    let mut injected = Vec::new();
    for &(start, end) in &spec.active_windows {
        let n = injection_count(spec.rate, end - start);
        for k in 0..n {
            let t = start + injection_offset(k, spec.rate, spec.burst);
            injected.push(CanFrame::new(t, spec.dominant_id, vec![0u8; 8], Flag::Injected)?);
        }
    }
    Ok(merge_injected(base, injected))
}

/// Insert frames with uniform-random 11-bit ids and random 8-byte payloads.
pub fn inject_fuzzing(base: &[CanFrame], spec: &InjectionSpec) -> Result<Vec<CanFrame>> {
    spec.validate(AttackKind::Fuzzing, stream_end(base))?;
    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
    let mut injected = Vec::new();
    for &(start, end) in &spec.active_windows {
        let n = injection_count(spec.rate, end - start);
        for k in 0..n {
            let t = start + injection_offset(k, spec.rate, spec.burst);
            let id = rng.gen_range(0..2048u32);
            let payload: Vec<u8> = (0..8).map(|_| rng.gen::<u8>()).collect();
            injected.push(CanFrame::new(t, id, payload, Flag::Injected)?);
        }
    }
    Ok(merge_injected(base, injected))
}

/// Re-emit a captured slice of the base stream inside each active window.
/// The slice is shifted so it starts at the window start; inter-frame gaps
/// are preserved (exactly when the timestamps involved are exactly
/// representable, to float precision otherwise).
pub fn inject_replay(base: &[CanFrame], spec: &InjectionSpec) -> Result<Vec<CanFrame>> {
    spec.validate(AttackKind::Replay, stream_end(base))?;
    let (cs, ce) = spec
        .replay_source
        .ok_or_else(|| Error::invalid("replay spec is missing replay_source"))?;
    if !(ce > cs) {
        return Err(Error::invalid("replay capture interval is empty or inverted"));
    }
    let slice: Vec<&CanFrame> = base
        .iter()
        .filter(|f| f.timestamp >= cs && f.timestamp < ce)
        .collect();
    if slice.is_empty() {
        return Err(Error::invalid("replay capture slice contains no frames"));
    }
    let slice_len = ce - cs;
    let mut injected = Vec::new();
    for &(start, end) in &spec.active_windows {
        if slice_len > (end - start) + 1e-12 {
            return Err(Error::invalid(format!(
                "replay slice of {slice_len}s does not fit active window ({start}, {end})"
            )));
        }
        for f in &slice {
            let mut g = (*f).clone();
            g.timestamp = start + (f.timestamp - cs);
            g.flag = Flag::Injected;
            injected.push(g);
        }
    }
    Ok(merge_injected(base, injected))
}

/// Apply whichever injection the spec asks for.
pub fn inject(base: &[CanFrame], spec: &InjectionSpec) -> Result<Vec<CanFrame>> {
    match spec.kind {
        AttackKind::Dos => inject_dos(base, spec),
        AttackKind::Fuzzing => inject_fuzzing(base, spec),
        AttackKind::Replay => inject_replay(base, spec),
    }
}

/// Reference synthetic corpus used by the acceptance suite: a 600 s baseline
/// of 20 periodic ids (periods 5..100 ms, 10% jitter, seed 42) plus one
/// injection variant per attack kind per regime.
pub mod corpus_a {
    use super::*;

    pub const SEED: u64 = 42;
    pub const DURATION: f64 = 600.0;

    /// 20 ids with periods between 5 and 100 ms. Groups sharing a period are
    /// phase-staggered so the aggregate per-0.01 s packet count stays nearly
    /// constant, the way tick-scheduled ECU traffic behaves, and phases sit
    /// away from segment boundaries so the 10% jitter moves the in-segment
    /// span without hopping frames between segments. Floods then perturb the
    /// count/gap relation instead of riding an already-correlated baseline.
    pub fn profile() -> TrafficProfile {
        // (period, phases), all in seconds
        let groups: &[(f64, &[f64])] = &[
            (0.005, &[0.0005, 0.00175, 0.0030, 0.00425]),
            (0.010, &[0.001, 0.0035, 0.006, 0.0085]),
            (0.020, &[0.0025, 0.0075, 0.0125, 0.0175]),
            (0.025, &[0.006, 0.0185]),
            (0.050, &[0.005, 0.015, 0.025, 0.035, 0.045]),
            (0.100, &[0.055]),
        ];
        let mut ids = Vec::new();
        for (g, (period, phases)) in groups.iter().enumerate() {
            for (lane, &phase) in phases.iter().enumerate() {
                ids.push(IdProfile {
                    can_id: 0x100 + 0x20 * g as u32 + lane as u32,
                    period: *period,
                    jitter_fraction: 0.10,
                    phase,
                    payload: PayloadGen::Counter,
                });
            }
        }
        debug_assert_eq!(ids.len(), 20);
        TrafficProfile {
            ids,
            duration: DURATION,
            seed: SEED,
        }
    }

    /// Six sustained 20 s windows.
    fn high_windows() -> Vec<(f64, f64)> {
        (0..6).map(|k| (50.0 + 100.0 * k as f64, 70.0 + 100.0 * k as f64)).collect()
    }

    /// A 0.5 s burst every 5 s. Burst starts are jittered inside their 5 s
    /// slot (seeded); a real attacker has no reason to align with the
    /// featurizer's window grid.
    fn low_windows() -> Vec<(f64, f64)> {
        let mut rng = ChaCha20Rng::seed_from_u64(SEED ^ 0x5eed_0ff5);
        (1..120)
            .map(|k| {
                let start = 5.0 * k as f64 + rng.gen_range(0.0..4.4);
                (start, start + 0.5)
            })
            .collect()
    }

    pub fn variant(kind: AttackKind, regime: Regime) -> InjectionSpec {
        let (windows, rate) = match regime {
            Regime::HighFrequency => (high_windows(), 3000.0),
            Regime::LowFrequencyPeriodic => (low_windows(), 100.0),
        };
        let seed = SEED
            + 1
            + match (kind, regime) {
                (AttackKind::Dos, Regime::HighFrequency) => 0,
                (AttackKind::Dos, Regime::LowFrequencyPeriodic) => 1,
                (AttackKind::Fuzzing, Regime::HighFrequency) => 2,
                (AttackKind::Fuzzing, Regime::LowFrequencyPeriodic) => 3,
                (AttackKind::Replay, Regime::HighFrequency) => 4,
                (AttackKind::Replay, Regime::LowFrequencyPeriodic) => 5,
            };
        // High-frequency replay floods a sustained window with a whole 20 s
        // capture; the low regime re-plays a captured 5 ms burst, which
        // blends into normal traffic much like replayed frames do on a real
        // bus.
        let replay_source = match (kind, regime) {
            (AttackKind::Replay, Regime::HighFrequency) => Some((1.0, 21.0)),
            (AttackKind::Replay, Regime::LowFrequencyPeriodic) => Some((1.0, 1.005)),
            _ => None,
        };
        let burst = match (kind, regime) {
            (AttackKind::Dos | AttackKind::Fuzzing, Regime::HighFrequency) => Some(25),
            _ => None,
        };
        InjectionSpec {
            kind,
            regime,
            rate,
            active_windows: windows,
            seed,
            dominant_id: 0x000,
            replay_source,
            burst,
        }
    }

    /// Baseline plus the requested attack variant, normalized and ready for
    /// featurization.
    pub fn stream(kind: AttackKind, regime: Regime) -> Result<Vec<CanFrame>> {
        let base = synthesize_baseline(&profile())?;
        crate::ingest::normalize_timestamps(&inject(&base, &variant(kind, regime))?)
    }
}
