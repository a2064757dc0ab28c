//! Single-level set-associative L1 with dirty bits.
//!
//! The backing level always hits, so a miss costs the fill latency plus, when
//! the victim is dirty, the write-back. Lines are tagged with the owning actor
//! as well as the upper address bits: actors model separate processes and
//! never share a cached line.

use std::collections::BTreeMap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::policy::{PolicyKind, SetMeta, WayMask};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CacheError {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("set index {set} out of range (cache has {num_sets} sets)")]
    SetOutOfRange { set: usize, num_sets: usize },
    #[error("actor {0} has no ways in the partition map")]
    ActorNotPartitioned(ActorId),
}

/// Identifies an address space (a process in the modeled system).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ActorId(pub u32);

impl ActorId {
    pub const SENDER: ActorId = ActorId(1);
    pub const RECEIVER: ActorId = ActorId(2);
    pub const NOISE: ActorId = ActorId(3);
    pub const VICTIM: ActorId = ActorId(4);
    pub const ATTACKER: ActorId = ActorId(5);
    /// Owner of the unrelated lines used to pre-fill sets in experiments.
    pub const FILLER: ActorId = ActorId(6);

    pub fn name(self) -> String {
        match self {
            ActorId::SENDER => "sender".into(),
            ActorId::RECEIVER => "receiver".into(),
            ActorId::NOISE => "noise".into(),
            ActorId::VICTIM => "victim".into(),
            ActorId::ATTACKER => "attacker".into(),
            ActorId::FILLER => "filler".into(),
            ActorId(n) => format!("actor{n}"),
        }
    }
}

impl fmt::Display for ActorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WritePolicy {
    /// Stores update only the cache; a miss allocates the line.
    WriteBackAllocate,
    /// Stores go straight to the next level; store misses do not allocate and
    /// no line is ever dirty.
    WriteThroughNoAllocate,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CacheGeometry {
    pub num_sets: usize,
    pub ways: usize,
    pub line_size: usize,
    pub write_policy: WritePolicy,
    /// Static way partitioning: each listed actor may only fill its own ways.
    pub partition: Option<BTreeMap<ActorId, Vec<usize>>>,
}

impl Default for CacheGeometry {
    fn default() -> Self {
        Self {
            num_sets: 64,
            ways: 8,
            line_size: 64,
            write_policy: WritePolicy::WriteBackAllocate,
            partition: None,
        }
    }
}

impl CacheGeometry {
    pub fn validate(&self) -> Result<(), CacheError> {
        for (name, v) in [
            ("num_sets", self.num_sets),
            ("ways", self.ways),
            ("line_size", self.line_size),
        ] {
            if v == 0 || !v.is_power_of_two() {
                return Err(CacheError::InvalidGeometry(format!(
                    "{name} must be a power of two >= 1, got {v}"
                )));
            }
        }
        if self.ways > 64 {
            return Err(CacheError::InvalidGeometry(format!(
                "at most 64 ways are supported, got {}",
                self.ways
            )));
        }
        if self.offset_bits() + self.index_bits() >= 64 {
            return Err(CacheError::InvalidGeometry(
                "offset and index bits leave no room for a tag".into(),
            ));
        }
        if let Some(partition) = &self.partition {
            let mut claimed = WayMask(0);
            for (actor, ways) in partition {
                if ways.is_empty() {
                    return Err(CacheError::InvalidGeometry(format!(
                        "partition for {actor} is empty"
                    )));
                }
                if let Some(w) = ways.iter().find(|&&w| w >= self.ways) {
                    return Err(CacheError::InvalidGeometry(format!(
                        "partition for {actor} names way {w}, cache has {} ways",
                        self.ways
                    )));
                }
                let mask: WayMask = ways.iter().copied().collect();
                if mask.0 & claimed.0 != 0 {
                    return Err(CacheError::InvalidGeometry(format!(
                        "partition for {actor} overlaps another actor's ways"
                    )));
                }
                claimed.0 |= mask.0;
            }
        }
        Ok(())
    }

    pub fn offset_bits(&self) -> u32 {
        self.line_size.trailing_zeros()
    }

    pub fn index_bits(&self) -> u32 {
        self.num_sets.trailing_zeros()
    }

    pub fn set_index(&self, address: u64) -> usize {
        ((address >> self.offset_bits()) & (self.num_sets as u64 - 1)) as usize
    }

    pub fn tag_bits(&self, address: u64) -> u64 {
        address >> (self.offset_bits() + self.index_bits())
    }

    /// Line-aligned address with the given set index and tag.
    pub fn address_of(&self, set: usize, tag: u64) -> u64 {
        (tag << (self.offset_bits() + self.index_bits())) | ((set as u64) << self.offset_bits())
    }

    /// Ways `actor` may fill, or `None` if the actor is missing from an
    /// active partition map.
    pub fn ways_for(&self, actor: ActorId) -> Option<WayMask> {
        match &self.partition {
            None => Some(WayMask::all(self.ways)),
            Some(map) => map.get(&actor).map(|ways| ways.iter().copied().collect()),
        }
    }

    /// Splits the ways between the given actors in contiguous, equal blocks
    /// (the last actor takes any remainder).
    pub fn with_even_partition(mut self, actors: &[ActorId]) -> Self {
        let n = actors.len().max(1);
        let share = (self.ways / n).max(1);
        let mut map = BTreeMap::new();
        for (i, actor) in actors.iter().enumerate() {
            let lo = (i * share).min(self.ways);
            let hi = if i + 1 == n { self.ways } else { (lo + share).min(self.ways) };
            map.insert(*actor, (lo..hi).collect());
        }
        self.partition = Some(map);
        self
    }
}

/// Per-access costs in cycles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct LatencyModel {
    pub l1_hit: u64,
    /// Next-level hit that replaces a clean (or invalid) line.
    pub clean_replace: u64,
    /// Next-level hit that replaces a dirty line.
    pub dirty_replace: u64,
    /// Store miss under write-through, no-allocate.
    pub uncached_store: u64,
    /// Half-width of the uniform integer jitter added to every access.
    pub jitter: u64,
    /// Constant added to each timed measurement (timestamp read cost).
    pub timer_overhead: u64,
}

impl Default for LatencyModel {
    fn default() -> Self {
        Self {
            l1_hit: 4,
            clean_replace: 11,
            dirty_replace: 22,
            uncached_store: 11,
            jitter: 0,
            timer_overhead: 0,
        }
    }
}

impl LatencyModel {
    pub fn base(&self, kind: OutcomeKind) -> u64 {
        match kind {
            OutcomeKind::Hit => self.l1_hit,
            OutcomeKind::MissFillInvalid | OutcomeKind::MissEvictClean => self.clean_replace,
            OutcomeKind::MissEvictDirty => self.dirty_replace,
            OutcomeKind::Uncached => self.uncached_store,
        }
    }

    /// Smallest latency any access can take.
    pub fn min_latency(&self) -> u64 {
        [self.l1_hit, self.clean_replace, self.dirty_replace, self.uncached_store]
            .into_iter()
            .min()
            .unwrap_or(0)
            .saturating_sub(self.jitter)
            .max(1)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CacheConfig {
    pub geometry: CacheGeometry,
    pub policy: PolicyKind,
    pub latency: LatencyModel,
}

impl Default for CacheConfig {
    fn default() -> Self {
        Self {
            geometry: CacheGeometry::default(),
            policy: PolicyKind::TrueLru,
            latency: LatencyModel::default(),
        }
    }
}

/// An address inside one actor's address space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LineRef {
    pub actor: ActorId,
    pub address: u64,
}

impl LineRef {
    pub fn new(actor: ActorId, address: u64) -> Self {
        Self { actor, address }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Tag {
    pub actor: ActorId,
    pub bits: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct LineState {
    valid: bool,
    dirty: bool,
    tag: Option<Tag>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AccessKind {
    Read,
    Write,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutcomeKind {
    Hit,
    MissFillInvalid,
    MissEvictClean,
    MissEvictDirty,
    /// Write-through store miss: nothing is filled.
    Uncached,
}

impl OutcomeKind {
    pub fn is_miss(self) -> bool {
        !matches!(self, OutcomeKind::Hit)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessOutcome {
    pub kind: OutcomeKind,
    /// Way that was filled or replaced on a miss.
    pub victim_way: Option<usize>,
    pub writeback: bool,
    pub latency: u64,
}

/// One way of a set as seen by [`Cache::snapshot_set`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineSnapshot {
    pub valid: bool,
    pub dirty: bool,
    pub tag: Option<Tag>,
    pub policy_meta: Option<u64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActorCounters {
    pub loads: u64,
    pub stores: u64,
    pub l1_hits: u64,
    pub l1_misses: u64,
    pub writebacks: u64,
}

impl ActorCounters {
    pub fn accesses(&self) -> u64 {
        self.loads + self.stores
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventCounters {
    pub per_actor: BTreeMap<ActorId, ActorCounters>,
    /// Sum of all access latencies charged by the cache.
    pub cycles: u64,
}

impl EventCounters {
    pub fn actor(&self, actor: ActorId) -> ActorCounters {
        self.per_actor.get(&actor).copied().unwrap_or_default()
    }

    pub fn total_writebacks(&self) -> u64 {
        self.per_actor.values().map(|c| c.writebacks).sum()
    }
}

/// The simulated L1 data cache.
#[derive(Debug, Clone)]
pub struct Cache {
    config: CacheConfig,
    lines: Vec<LineState>,
    meta: Vec<SetMeta>,
    counters: EventCounters,
    policy_rng: ChaCha8Rng,
    jitter_rng: ChaCha8Rng,
}

impl Cache {
    /// `seed` drives latency jitter; the random policy uses its own seed.
    pub fn new(config: CacheConfig, seed: u64) -> Result<Self, CacheError> {
        config.geometry.validate()?;
        let g = &config.geometry;
        let policy_seed = match config.policy {
            PolicyKind::Random { seed } => seed,
            _ => 0,
        };
        Ok(Self {
            lines: vec![LineState::default(); g.num_sets * g.ways],
            meta: (0..g.num_sets).map(|_| SetMeta::new(config.policy, g.ways)).collect(),
            counters: EventCounters::default(),
            policy_rng: ChaCha8Rng::seed_from_u64(policy_seed),
            jitter_rng: ChaCha8Rng::seed_from_u64(seed),
            config,
        })
    }

    pub fn config(&self) -> &CacheConfig {
        &self.config
    }

    pub fn geometry(&self) -> &CacheGeometry {
        &self.config.geometry
    }

    pub fn counters(&self) -> &EventCounters {
        &self.counters
    }

    fn way_range(&self, set: usize) -> std::ops::Range<usize> {
        let w = self.config.geometry.ways;
        set * w..(set + 1) * w
    }

    fn check_set(&self, set: usize) -> Result<(), CacheError> {
        let num_sets = self.config.geometry.num_sets;
        if set >= num_sets {
            Err(CacheError::SetOutOfRange { set, num_sets })
        } else {
            Ok(())
        }
    }

    fn tag_of(&self, line: &LineRef) -> Tag {
        Tag {
            actor: line.actor,
            bits: self.config.geometry.tag_bits(line.address),
        }
    }

    fn find(&self, set: usize, tag: Tag) -> Option<usize> {
        self.lines[self.way_range(set)]
            .iter()
            .position(|l| l.valid && l.tag == Some(tag))
    }

    pub fn contains(&self, line: &LineRef) -> bool {
        let set = self.config.geometry.set_index(line.address);
        self.find(set, self.tag_of(line)).is_some()
    }

    pub fn is_dirty(&self, line: &LineRef) -> bool {
        let set = self.config.geometry.set_index(line.address);
        self.find(set, self.tag_of(line))
            .map(|w| self.lines[set * self.config.geometry.ways + w].dirty)
            .unwrap_or(false)
    }

    pub fn dirty_count(&self, set: usize) -> usize {
        self.lines[self.way_range(set)].iter().filter(|l| l.dirty).count()
    }

    fn charge(&mut self, kind: OutcomeKind) -> u64 {
        let model = self.config.latency;
        let base = model.base(kind);
        if model.jitter == 0 {
            return base;
        }
        let j = model.jitter as i64;
        let offset = self.jitter_rng.gen_range(-j..=j);
        (base as i64 + offset).max(1) as u64
    }

    /// Performs one load or store.
    pub fn access(&mut self, line: LineRef, kind: AccessKind) -> Result<AccessOutcome, CacheError> {
        let geometry = &self.config.geometry;
        let allowed = geometry
            .ways_for(line.actor)
            .ok_or(CacheError::ActorNotPartitioned(line.actor))?;
        let ways = geometry.ways;
        let write_back = geometry.write_policy == WritePolicy::WriteBackAllocate;
        let set = geometry.set_index(line.address);
        let tag = self.tag_of(&line);
        let base = set * ways;

        let (outcome_kind, victim_way, writeback) = if let Some(way) = self.find(set, tag) {
            if kind == AccessKind::Write && write_back {
                self.lines[base + way].dirty = true;
            }
            self.meta[set].on_access(way);
            (OutcomeKind::Hit, None, false)
        } else if kind == AccessKind::Write && !write_back {
            (OutcomeKind::Uncached, None, false)
        } else {
            let invalid = allowed
                .iter()
                .take_while(|&w| w < ways)
                .find(|&w| !self.lines[base + w].valid);
            let (way, kind_out) = match invalid {
                Some(w) => (w, OutcomeKind::MissFillInvalid),
                None => {
                    let w = self.meta[set].select_victim(allowed, &mut self.policy_rng);
                    if self.lines[base + w].dirty {
                        (w, OutcomeKind::MissEvictDirty)
                    } else {
                        (w, OutcomeKind::MissEvictClean)
                    }
                }
            };
            self.lines[base + way] = LineState {
                valid: true,
                dirty: kind == AccessKind::Write && write_back,
                tag: Some(tag),
            };
            self.meta[set].on_access(way);
            (kind_out, Some(way), kind_out == OutcomeKind::MissEvictDirty)
        };

        let latency = self.charge(outcome_kind);
        let c = self.counters.per_actor.entry(line.actor).or_default();
        match kind {
            AccessKind::Read => c.loads += 1,
            AccessKind::Write => c.stores += 1,
        }
        if outcome_kind.is_miss() {
            c.l1_misses += 1;
        } else {
            c.l1_hits += 1;
        }
        if writeback {
            c.writebacks += 1;
        }
        self.counters.cycles += latency;

        Ok(AccessOutcome {
            kind: outcome_kind,
            victim_way,
            writeback,
            latency,
        })
    }

    pub fn read(&mut self, line: LineRef) -> Result<AccessOutcome, CacheError> {
        self.access(line, AccessKind::Read)
    }

    pub fn write(&mut self, line: LineRef) -> Result<AccessOutcome, CacheError> {
        self.access(line, AccessKind::Write)
    }

    pub fn snapshot_set(&self, set: usize) -> Result<Vec<LineSnapshot>, CacheError> {
        self.check_set(set)?;
        let meta = &self.meta[set];
        Ok(self.lines[self.way_range(set)]
            .iter()
            .enumerate()
            .map(|(way, l)| LineSnapshot {
                valid: l.valid,
                dirty: l.dirty,
                tag: l.tag,
                policy_meta: if l.valid { meta.line_meta(way) } else { None },
            })
            .collect())
    }

    pub fn set_meta(&self, set: usize) -> Result<&SetMeta, CacheError> {
        self.check_set(set)?;
        Ok(&self.meta[set])
    }

    pub fn set_meta_mut(&mut self, set: usize) -> Result<&mut SetMeta, CacheError> {
        self.check_set(set)?;
        Ok(&mut self.meta[set])
    }

    /// Invalidates every line and zeroes the counters. The jitter and random
    /// policy generators keep their position so repeated trials on one
    /// instance keep drawing fresh values.
    pub fn reset(&mut self) {
        self.lines.iter_mut().for_each(|l| *l = LineState::default());
        self.meta.iter_mut().for_each(SetMeta::reset);
        self.counters = EventCounters::default();
    }
}
