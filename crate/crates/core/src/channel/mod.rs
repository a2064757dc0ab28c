//! Sender, receiver and the timed protocol that links them.
//!
//! The sender encodes a symbol as the number `d` of its own lines it dirties in
//! the target set. The receiver walks a replacement set through the target set
//! and classifies the summed latency against calibrated cut points; every walk
//! also leaves the set clean for the next period. Two replacement sets are used
//! in turn so that the walked lines are never already resident.
//!
//! [`run_channel`] drives both actors, plus an optional noise actor, through an
//! [`EventQueue`](scheduler::EventQueue) on a single cycle clock.

pub mod gadget;
pub mod scheduler;

use std::collections::BTreeMap;
use std::io::{self, Write};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{
    align_by_preamble, bit_error_rate, rate_kbps, BitString, DEFAULT_ALIGN_WINDOW, DEFAULT_FREQ_HZ,
};
use crate::cache::{
    ActorCounters, ActorId, Cache, CacheConfig, CacheError, LineRef, WritePolicy,
};
use crate::measurement::{
    alternating_sets, measure_replacement_latency, LatencySample, MeasureError,
    DEFAULT_REPLACEMENT_LEN,
};
use scheduler::EventQueue;

pub use gadget::{
    run_gadget_attack, GadgetConfig, GadgetReport, GadgetScenario, GadgetVariant, LinePlacement,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("invalid channel configuration: {0}")]
    InvalidConfig(String),
    #[error("symbol {bits} has no encoding level")]
    UndefinedSymbol { bits: String },
    #[error("calibration failed: {detail}")]
    Calibration {
        detail: String,
        /// Midpoint cuts computed despite the overlap.
        thresholds: Thresholds,
    },
    #[error("invalid gadget setup: {0}")]
    InvalidGadget(String),
    #[error(transparent)]
    Cache(#[from] CacheError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
}

/// How symbols map to dirty-line counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Encoding {
    /// `0` is sent as zero dirty lines, `1` as `d_one`.
    Binary { d_one: usize },
    /// Symbol value `v` (its bits read most significant first) is sent as
    /// `levels[v]` dirty lines.
    MultiBit { levels: Vec<usize> },
}

impl Default for Encoding {
    fn default() -> Self {
        Encoding::Binary { d_one: 1 }
    }
}

impl Encoding {
    pub fn levels(&self) -> Vec<usize> {
        match self {
            Encoding::Binary { d_one } => vec![0, *d_one],
            Encoding::MultiBit { levels } => levels.clone(),
        }
    }

    pub fn bits_per_symbol(&self) -> usize {
        match self {
            Encoding::Binary { .. } => 1,
            Encoding::MultiBit { levels } => levels.len().max(1).trailing_zeros() as usize,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Encoding::Binary { .. } => "binary",
            Encoding::MultiBit { .. } => "multibit",
        }
    }

    /// Dirty counts joined with `-`, e.g. `0-3-5-8`; just `d_one` for binary.
    pub fn levels_label(&self) -> String {
        match self {
            Encoding::Binary { d_one } => d_one.to_string(),
            Encoding::MultiBit { levels } => levels
                .iter()
                .map(|d| d.to_string())
                .collect::<Vec<_>>()
                .join("-"),
        }
    }

    pub fn validate(&self, ways: usize) -> Result<(), ChannelError> {
        let levels = self.levels();
        if let Encoding::Binary { d_one } = self {
            if *d_one == 0 || *d_one > ways {
                return Err(ChannelError::InvalidConfig(format!(
                    "binary level must be in 1..={ways}, got {d_one}"
                )));
            }
        }
        if let Encoding::MultiBit { .. } = self {
            if levels.len() < 2 || !levels.len().is_power_of_two() {
                return Err(ChannelError::InvalidConfig(format!(
                    "multi-bit encoding needs a power-of-two number of levels (>= 2), got {}",
                    levels.len()
                )));
            }
            if levels.windows(2).any(|w| w[0] >= w[1]) {
                return Err(ChannelError::InvalidConfig(
                    "multi-bit levels must be strictly increasing".into(),
                ));
            }
            if let Some(d) = levels.iter().find(|&&d| d > ways) {
                return Err(ChannelError::InvalidConfig(format!(
                    "level {d} exceeds associativity {ways}"
                )));
            }
        }
        Ok(())
    }

    /// Index of the level that encodes `bits`.
    pub fn symbol_index(&self, bits: &[u8]) -> Result<usize, ChannelError> {
        let k = self.bits_per_symbol();
        let undefined = || ChannelError::UndefinedSymbol {
            bits: BitString::from(bits).to_string(),
        };
        if bits.len() != k || bits.iter().any(|&b| b > 1) {
            return Err(undefined());
        }
        let index = bits.iter().fold(0usize, |acc, &b| (acc << 1) | b as usize);
        if index >= self.levels().len() {
            return Err(undefined());
        }
        Ok(index)
    }

    pub fn level_for(&self, bits: &[u8]) -> Result<usize, ChannelError> {
        Ok(self.levels()[self.symbol_index(bits)?])
    }

    pub fn bits_for_index(&self, index: usize) -> BitString {
        BitString::from_u64(index as u64, self.bits_per_symbol())
    }
}

/// Third-party accesses to the target set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseConfig {
    /// Expected noise accesses per sender period.
    pub rate: f64,
    /// Probability that a noise access is a store (leaves a dirty line).
    pub write_fraction: f64,
    /// Cap on noise accesses per period.
    pub max_per_period: u32,
    /// Set the noise lands in; the channel's target set when `None`.
    pub target: Option<usize>,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            rate: 0.0,
            write_fraction: 0.0,
            max_per_period: 1,
            target: None,
        }
    }
}

impl NoiseConfig {
    pub fn is_active(&self) -> bool {
        self.rate > 0.0 && self.max_per_period > 0
    }
}

/// Fixed alignment preamble, `0xF0F0`.
pub fn default_preamble() -> BitString {
    BitString::from_u64(0xF0F0, 16)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChannelConfig {
    pub cache: CacheConfig,
    pub target_set: usize,
    pub encoding: Encoding,
    /// Sender period `T_s` in cycles.
    pub sender_period: u64,
    /// Receiver period `T_r` in cycles.
    pub receiver_period: u64,
    /// Receiver wake-up offset within each period.
    pub phase_offset: u64,
    pub replacement_len: usize,
    pub preamble: BitString,
    pub message: BitString,
    pub noise: NoiseConfig,
    /// Upper bound of a uniform random delay added to every sender and
    /// receiver wake-up. Zero keeps the schedule exact.
    pub slip: u64,
    pub frequency_hz: f64,
    pub seed: u64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            cache: CacheConfig::default(),
            target_set: 0,
            encoding: Encoding::default(),
            sender_period: 5500,
            receiver_period: 5500,
            phase_offset: 2750,
            replacement_len: DEFAULT_REPLACEMENT_LEN,
            preamble: default_preamble(),
            message: BitString::new(),
            noise: NoiseConfig::default(),
            slip: 0,
            frequency_hz: DEFAULT_FREQ_HZ,
            seed: 0,
        }
    }
}

// Independent generator streams derived from the run seed.
const STREAM_JITTER: u64 = 1;
const STREAM_CHASE: u64 = 2;
const STREAM_NOISE: u64 = 3;
const STREAM_SLIP: u64 = 4;
const STREAM_MESSAGE: u64 = 5;
const STREAM_TRIAL: u64 = 6;
const STREAM_CALIBRATION: u64 = 7;

pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn stream_seed(seed: u64, stream: u64) -> u64 {
    stream_rng(seed, stream).next_u64()
}

impl ChannelConfig {
    /// Both periods set to `period`, receiver phase at half a period.
    pub fn with_period(mut self, period: u64) -> Self {
        self.sender_period = period;
        self.receiver_period = period;
        self.phase_offset = period / 2;
        self
    }

    /// Replaces the message with `len` random bits drawn from the run seed.
    pub fn with_random_message(mut self, len: usize) -> Self {
        self.message = BitString::random(len, &mut stream_rng(self.seed, STREAM_MESSAGE));
        self
    }

    /// Copy for sweep trial `trial` at `period`: new seed and message of the
    /// same length, independent of the period.
    pub fn for_trial(&self, period: u64, trial: u64) -> Self {
        let mut rng = stream_rng(self.seed, STREAM_TRIAL);
        rng.set_word_pos(u128::from(trial) * 16);
        let mut cfg = self.clone().with_period(period);
        cfg.seed = rng.next_u64();
        cfg.with_random_message(self.message.len())
    }

    /// Same channel with write-back caching and no way partitioning.
    pub fn undefended(&self) -> Self {
        let mut cfg = self.clone();
        cfg.cache.geometry.write_policy = WritePolicy::WriteBackAllocate;
        cfg.cache.geometry.partition = None;
        cfg
    }

    /// The transmitted frame: preamble followed by the message.
    pub fn frame(&self) -> BitString {
        let mut f = self.preamble.clone();
        f.extend_from(&self.message);
        f
    }

    pub fn noise_target(&self) -> usize {
        self.noise.target.unwrap_or(self.target_set)
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        let g = &self.cache.geometry;
        g.validate()?;
        let bad = |m: String| Err(ChannelError::InvalidConfig(m));
        if self.target_set >= g.num_sets {
            return bad(format!("target set {} out of range", self.target_set));
        }
        if self.noise_target() >= g.num_sets {
            return bad(format!("noise target set {} out of range", self.noise_target()));
        }
        self.encoding.validate(g.ways)?;
        if self.sender_period == 0 {
            return bad("periods must be positive".into());
        }
        if self.sender_period != self.receiver_period {
            return bad(format!(
                "sender and receiver periods must match ({} vs {})",
                self.sender_period, self.receiver_period
            ));
        }
        if self.phase_offset >= self.receiver_period {
            return bad("phase offset must be shorter than the period".into());
        }
        if self.replacement_len == 0 {
            return bad("replacement set must not be empty".into());
        }
        let k = self.encoding.bits_per_symbol();
        if !self.message.len().is_multiple_of(k) || !self.preamble.len().is_multiple_of(k) {
            return bad(format!("preamble and message lengths must be multiples of {k}"));
        }
        if !(self.noise.rate >= 0.0 && self.noise.rate.is_finite()) {
            return bad("noise rate must be a finite value >= 0".into());
        }
        if !(0.0..=1.0).contains(&self.noise.write_fraction) {
            return bad("noise write fraction must be in [0, 1]".into());
        }
        if self.frequency_hz.is_nan() || self.frequency_hz <= 0.0 {
            return bad("frequency must be positive".into());
        }
        Ok(())
    }

    fn sender_line(&self, j: usize) -> LineRef {
        let g = &self.cache.geometry;
        LineRef::new(ActorId::SENDER, g.address_of(self.target_set, j as u64))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodeOutcome {
    pub d: usize,
    pub accesses: usize,
    pub cycles: u64,
}

/// Dirties `level(symbol_bits)` sender lines of the target set. Level zero
/// makes no access.
pub fn sender_encode(
    cache: &mut Cache,
    cfg: &ChannelConfig,
    symbol_bits: &[u8],
) -> Result<EncodeOutcome, ChannelError> {
    let d = cfg.encoding.level_for(symbol_bits)?;
    encode_level(cache, cfg, d)
}

fn encode_level(cache: &mut Cache, cfg: &ChannelConfig, d: usize) -> Result<EncodeOutcome, ChannelError> {
    let mut cycles = 0;
    for j in 0..d {
        cycles += cache.write(cfg.sender_line(j))?.latency;
    }
    Ok(EncodeOutcome {
        d,
        accesses: d,
        cycles,
    })
}

/// Reads `W` receiver lines into the target set. Returns the cycles spent.
pub fn receiver_init(cache: &mut Cache, cfg: &ChannelConfig) -> Result<u64, ChannelError> {
    let g = cache.geometry().clone();
    let mut cycles = 0;
    for tag in 0..g.ways as u64 {
        let line = LineRef::new(ActorId::RECEIVER, g.address_of(cfg.target_set, tag));
        cycles += cache.read(line)?.latency;
    }
    Ok(cycles)
}

/// Ordered cut points between adjacent encoding levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub cuts: Vec<f64>,
}

impl Thresholds {
    /// Level index for a measured total: the number of cuts it exceeds.
    pub fn classify(&self, total_cycles: u64) -> usize {
        let t = total_cycles as f64;
        self.cuts.iter().filter(|&&c| t > c).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decoded {
    pub sample: LatencySample,
    pub level_index: usize,
    pub level: usize,
    pub bits: BitString,
}

/// Walks replacement set `parity % 2` and classifies the result.
pub fn receiver_decode(
    cache: &mut Cache,
    cfg: &ChannelConfig,
    parity: u64,
    thresholds: &Thresholds,
) -> Result<Decoded, ChannelError> {
    let sets = alternating_sets(
        &cfg.cache.geometry,
        cfg.target_set,
        cfg.replacement_len,
        stream_seed(cfg.seed, STREAM_CHASE),
    )?;
    decode_with(cache, cfg, &sets[(parity % 2) as usize], thresholds)
}

fn decode_with(
    cache: &mut Cache,
    cfg: &ChannelConfig,
    rset: &crate::measurement::ReplacementSet,
    thresholds: &Thresholds,
) -> Result<Decoded, ChannelError> {
    let sample = measure_replacement_latency(cache, rset)?;
    let levels = cfg.encoding.levels();
    let level_index = thresholds.classify(sample.total_cycles).min(levels.len() - 1);
    Ok(Decoded {
        sample,
        level_index,
        level: levels[level_index],
        bits: cfg.encoding.bits_for_index(level_index),
    })
}

/// Per-level latency statistics gathered during calibration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelStats {
    pub d: usize,
    pub mean: f64,
    pub std_dev: f64,
}

/// Measures every encoding level `trials` times on a noiseless copy of the
/// channel and places cuts at the midpoints of adjacent level means.
///
/// Calibration always runs on the undefended cache: the cut points are the
/// operating point the two parties agreed on, which a defense then disturbs.
/// Fails when two adjacent means are not more than two standard deviations
/// apart (or coincide).
pub fn calibrate_thresholds(
    cfg: &ChannelConfig,
    trials: usize,
    seed: u64,
) -> Result<Thresholds, ChannelError> {
    calibrate_levels(cfg, trials, seed).map(|(t, _)| t)
}

/// Like [`calibrate_thresholds`] but also returns the per-level statistics.
pub fn calibrate_levels(
    cfg: &ChannelConfig,
    trials: usize,
    seed: u64,
) -> Result<(Thresholds, Vec<LevelStats>), ChannelError> {
    if trials == 0 {
        return Err(ChannelError::InvalidConfig("calibration needs at least one trial".into()));
    }
    let mut base = cfg.undefended();
    base.noise = NoiseConfig::default();
    base.slip = 0;
    base.validate()?;

    let mut rng = stream_rng(seed, STREAM_CALIBRATION);
    let sets = alternating_sets(
        &base.cache.geometry,
        base.target_set,
        base.replacement_len,
        stream_seed(base.seed, STREAM_CHASE),
    )?;
    let never = Thresholds { cuts: Vec::new() };

    let mut stats = Vec::new();
    for d in base.encoding.levels() {
        let mut cache = Cache::new(base.cache.clone(), rng.next_u64())?;
        receiver_init(&mut cache, &base)?;
        let mut samples = Vec::with_capacity(trials);
        for trial in 0..trials {
            encode_level(&mut cache, &base, d)?;
            let decoded = decode_with(&mut cache, &base, &sets[trial % 2], &never)?;
            samples.push(decoded.sample.total_cycles as f64);
        }
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let var = if samples.len() > 1 {
            samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        stats.push(LevelStats {
            d,
            mean,
            std_dev: var.sqrt(),
        });
    }

    let cuts: Vec<f64> = stats.windows(2).map(|w| (w[0].mean + w[1].mean) / 2.0).collect();
    let thresholds = Thresholds { cuts };
    for w in stats.windows(2) {
        let separation = w[1].mean - w[0].mean;
        let spread = 2.0 * w[0].std_dev.max(w[1].std_dev);
        if separation <= spread {
            return Err(ChannelError::Calibration {
                detail: format!(
                    "levels d={} and d={} are not separable (mean gap {:.2}, 2 sigma {:.2})",
                    w[0].d, w[1].d, separation, spread
                ),
                thresholds,
            });
        }
    }
    Ok((thresholds, stats))
}

/// One point of the receiver's latency trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub cycle: u64,
    pub total_cycles: u64,
    pub decoded: String,
    /// Symbol the sender sent in the same period.
    pub sent: String,
}

/// One row of the event trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub cycle: u64,
    pub actor: String,
    pub action: String,
    pub set: usize,
    pub d: Option<usize>,
    pub latency: u64,
    pub decoded_bit: Option<String>,
    pub truth_bit: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelReport {
    pub sent_bits: BitString,
    pub received_bits: BitString,
    pub alignment_offset: usize,
    pub preamble_locked: bool,
    pub edit_distance: usize,
    pub ber: f64,
    pub ber_clamped: bool,
    pub rate_kbps: f64,
    pub thresholds: Vec<f64>,
    pub latency_trace: Vec<TracePoint>,
    pub counters: BTreeMap<String, ActorCounters>,
    pub end_cycle: u64,
    #[serde(skip)]
    pub events: Vec<TraceEvent>,
}

impl ChannelReport {
    /// Per-period symbol mismatches, ignoring alignment.
    pub fn symbol_errors(&self) -> usize {
        self.latency_trace.iter().filter(|p| p.decoded != p.sent).count()
    }

    /// `cycle,actor,action,set,d,latency,decoded_bit,truth_bit`.
    pub fn write_trace_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "cycle,actor,action,set,d,latency,decoded_bit,truth_bit")?;
        for e in &self.events {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                e.cycle,
                e.actor,
                e.action,
                e.set,
                e.d.map(|d| d.to_string()).unwrap_or_default(),
                e.latency,
                e.decoded_bit.as_deref().unwrap_or(""),
                e.truth_bit.as_deref().unwrap_or(""),
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
enum Action {
    Encode(usize),
    Noise { write: bool, tag: u64 },
    Decode(usize),
}

impl Action {
    fn actor(self) -> ActorId {
        match self {
            Action::Encode(_) => ActorId::SENDER,
            Action::Noise { .. } => ActorId::NOISE,
            Action::Decode(_) => ActorId::RECEIVER,
        }
    }

    fn priority(self) -> u8 {
        match self {
            Action::Encode(_) => 0,
            Action::Noise { .. } => 1,
            Action::Decode(_) => 2,
        }
    }
}

/// Runs the full protocol: receiver initialization, then one sender encode,
/// optional noise and one receiver decode per symbol of the frame.
pub fn run_channel(cfg: &ChannelConfig, thresholds: &Thresholds) -> Result<ChannelReport, ChannelError> {
    cfg.validate()?;
    let levels = cfg.encoding.levels();
    if thresholds.cuts.len() + 1 != levels.len() {
        return Err(ChannelError::InvalidConfig(format!(
            "{} cut points supplied for {} levels",
            thresholds.cuts.len(),
            levels.len()
        )));
    }
    let g = cfg.cache.geometry.clone();
    let k = cfg.encoding.bits_per_symbol();
    let frame = cfg.frame();
    let symbols: Vec<BitString> = frame.chunks(k).map(BitString::from).collect();
    let sent_levels: Vec<usize> = symbols
        .iter()
        .map(|s| cfg.encoding.level_for(s.as_slice()))
        .collect::<Result<_, _>>()?;

    let mut cache = Cache::new(cfg.cache.clone(), stream_seed(cfg.seed, STREAM_JITTER))?;
    let sets = alternating_sets(
        &g,
        cfg.target_set,
        cfg.replacement_len,
        stream_seed(cfg.seed, STREAM_CHASE),
    )?;
    let mut noise_rng = stream_rng(cfg.seed, STREAM_NOISE);
    let mut slip_rng = stream_rng(cfg.seed, STREAM_SLIP);
    let slip = |rng: &mut ChaCha8Rng| if cfg.slip == 0 { 0 } else { rng.gen_range(0..=cfg.slip) };

    let mut events = Vec::new();
    let init_cycles = receiver_init(&mut cache, cfg)?;
    events.push(TraceEvent {
        cycle: 0,
        actor: ActorId::RECEIVER.name(),
        action: "init".into(),
        set: cfg.target_set,
        d: None,
        latency: init_cycles,
        decoded_bit: None,
        truth_bit: None,
    });

    let mut queue = EventQueue::new();
    let mut noise_tag = 0u64;
    for i in 0..symbols.len() {
        let start = i as u64 * cfg.sender_period;
        queue.schedule(start + slip(&mut slip_rng), 0, Action::Encode(i));
        if cfg.noise.is_active() {
            let whole = cfg.noise.rate.floor();
            let extra = noise_rng.gen_bool((cfg.noise.rate - whole).clamp(0.0, 1.0));
            let count = (whole as u64 + u64::from(extra)).min(u64::from(cfg.noise.max_per_period));
            for _ in 0..count {
                let at = if cfg.phase_offset >= 2 {
                    start + noise_rng.gen_range(1..cfg.phase_offset)
                } else {
                    start
                };
                let write = noise_rng.gen_bool(cfg.noise.write_fraction);
                queue.schedule(at, 1, Action::Noise { write, tag: noise_tag });
                noise_tag += 1;
            }
        }
        let wake = i as u64 * cfg.receiver_period + cfg.phase_offset;
        queue.schedule(wake + slip(&mut slip_rng), 2, Action::Decode(i));
    }

    let mut busy_until: BTreeMap<ActorId, u64> = BTreeMap::new();
    let mut received = BitString::new();
    let mut trace = Vec::with_capacity(symbols.len());
    let mut end_cycle = init_cycles;
    while let Some((cycle, action)) = queue.pop() {
        let actor = action.actor();
        let free_at = busy_until.get(&actor).copied().unwrap_or(0);
        if free_at > cycle {
            queue.schedule(free_at, action.priority(), action);
            continue;
        }
        let (latency, event) = match action {
            Action::Encode(i) => {
                let out = encode_level(&mut cache, cfg, sent_levels[i])?;
                (
                    out.cycles,
                    TraceEvent {
                        cycle,
                        actor: actor.name(),
                        action: "encode".into(),
                        set: cfg.target_set,
                        d: Some(out.d),
                        latency: out.cycles,
                        decoded_bit: None,
                        truth_bit: Some(symbols[i].to_string()),
                    },
                )
            }
            Action::Noise { write, tag } => {
                let set = cfg.noise_target();
                let line = LineRef::new(ActorId::NOISE, g.address_of(set, tag));
                let out = if write { cache.write(line)? } else { cache.read(line)? };
                (
                    out.latency,
                    TraceEvent {
                        cycle,
                        actor: actor.name(),
                        action: if write { "noise_write" } else { "noise_read" }.into(),
                        set,
                        d: None,
                        latency: out.latency,
                        decoded_bit: None,
                        truth_bit: None,
                    },
                )
            }
            Action::Decode(i) => {
                let decoded = decode_with(&mut cache, cfg, &sets[i % 2], thresholds)?;
                received.extend_from(&decoded.bits);
                trace.push(TracePoint {
                    cycle,
                    total_cycles: decoded.sample.total_cycles,
                    decoded: decoded.bits.to_string(),
                    sent: symbols[i].to_string(),
                });
                (
                    decoded.sample.total_cycles,
                    TraceEvent {
                        cycle,
                        actor: actor.name(),
                        action: "decode".into(),
                        set: cfg.target_set,
                        d: Some(decoded.level),
                        latency: decoded.sample.total_cycles,
                        decoded_bit: Some(decoded.bits.to_string()),
                        truth_bit: Some(symbols[i].to_string()),
                    },
                )
            }
        };
        busy_until.insert(actor, cycle + latency);
        end_cycle = end_cycle.max(cycle + latency);
        events.push(event);
    }

    let (alignment_offset, preamble_locked) =
        match align_by_preamble(&received, &cfg.preamble, DEFAULT_ALIGN_WINDOW.max(cfg.preamble.len())) {
            Ok(a) => (a.offset, true),
            Err(_) => (0, false),
        };
    let aligned = received.slice(alignment_offset, received.len());
    let errors = bit_error_rate(&frame, &aligned);

    let counters = cache
        .counters()
        .per_actor
        .iter()
        .map(|(actor, c)| (actor.name(), *c))
        .collect();

    Ok(ChannelReport {
        sent_bits: frame,
        received_bits: received,
        alignment_offset,
        preamble_locked,
        edit_distance: errors.edit_distance,
        ber: errors.ber,
        ber_clamped: errors.clamped,
        rate_kbps: rate_kbps(cfg.sender_period, k, cfg.frequency_hz),
        thresholds: thresholds.cuts.clone(),
        latency_trace: trace,
        counters,
        end_cycle,
        events,
    })
}
