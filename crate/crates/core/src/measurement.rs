//! Replacement sets and serialized replacement-latency measurement.
//!
//! A replacement set is a list of lines that all index the target set, walked
//! in a shuffled order as a hardware pointer chase would. Each access depends
//! on the previous one, so the measured time is the plain sum of the per-access
//! latencies.

use std::io::{self, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cache::{ActorId, Cache, CacheConfig, CacheError, CacheGeometry, LineRef};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MeasureError {
    #[error("replacement set must contain at least one line")]
    EmptyReplacementSet,
    #[error("target set {set} out of range (cache has {num_sets} sets)")]
    TargetOutOfRange { set: usize, num_sets: usize },
    #[error("dirty level {d} exceeds associativity {ways}")]
    LevelOutOfRange { d: usize, ways: usize },
    #[error(transparent)]
    Cache(#[from] CacheError),
}

/// Default replacement-set size.
pub const DEFAULT_REPLACEMENT_LEN: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplacementSet {
    pub actor: ActorId,
    pub target_set: usize,
    pub lines: Vec<LineRef>,
    /// Visit order: `lines[chase_order[0]]` first.
    pub chase_order: Vec<usize>,
}

impl ReplacementSet {
    /// Builds `len` lines of `actor` indexing `target_set`, with tags
    /// `first_tag..first_tag + len`, and a chase order shuffled from `seed`.
    pub fn build(
        geometry: &CacheGeometry,
        actor: ActorId,
        target_set: usize,
        len: usize,
        first_tag: u64,
        seed: u64,
    ) -> Result<Self, MeasureError> {
        if len == 0 {
            return Err(MeasureError::EmptyReplacementSet);
        }
        if target_set >= geometry.num_sets {
            return Err(MeasureError::TargetOutOfRange {
                set: target_set,
                num_sets: geometry.num_sets,
            });
        }
        let lines = (0..len as u64)
            .map(|i| LineRef::new(actor, geometry.address_of(target_set, first_tag + i)))
            .collect();
        let mut chase_order: Vec<usize> = (0..len).collect();
        chase_order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        Ok(Self {
            actor,
            target_set,
            lines,
            chase_order,
        })
    }

    pub fn len(&self) -> usize {
        self.lines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lines.is_empty()
    }

    /// Lines in chase order.
    pub fn chase(&self) -> impl Iterator<Item = &LineRef> + '_ {
        self.chase_order.iter().map(move |&i| &self.lines[i])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatencySample {
    /// Dirty lines in the target set before the walk.
    pub dirty_before: usize,
    pub total_cycles: u64,
    /// Accesses that hit in L1. Non-zero means the set was already resident
    /// and the sample does not measure replacement.
    pub resident_hits: usize,
}

impl LatencySample {
    pub fn precondition_violated(&self) -> bool {
        self.resident_hits > 0
    }
}

/// Walks `rset` once and returns the summed latency. Afterwards the target
/// set holds only clean lines of `rset` when `rset` is at least as large as
/// the policy's eviction distance.
pub fn measure_replacement_latency(
    cache: &mut Cache,
    rset: &ReplacementSet,
) -> Result<LatencySample, MeasureError> {
    let dirty_before = cache.dirty_count(rset.target_set);
    let mut total = cache.config().latency.timer_overhead;
    let mut resident_hits = 0;
    for &line in rset.chase() {
        let out = cache.read(line)?;
        if !out.kind.is_miss() {
            resident_hits += 1;
        }
        total += out.latency;
    }
    Ok(LatencySample {
        dirty_before,
        total_cycles: total,
        resident_hits,
    })
}

/// Parameters of a latency distribution run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdfSetup {
    pub cache: CacheConfig,
    pub target_set: usize,
    pub replacement_len: usize,
    pub d_values: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
}

impl Default for CdfSetup {
    fn default() -> Self {
        Self {
            cache: CacheConfig::default(),
            target_set: 0,
            replacement_len: DEFAULT_REPLACEMENT_LEN,
            d_values: (0..=8).collect(),
            trials: 1000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CdfSeries {
    pub d: usize,
    /// Totals in trial order.
    pub samples: Vec<u64>,
}

impl CdfSeries {
    pub fn sorted(&self) -> Vec<u64> {
        let mut s = self.samples.clone();
        s.sort_unstable();
        s
    }

    pub fn mean(&self) -> f64 {
        self.samples.iter().sum::<u64>() as f64 / self.samples.len().max(1) as f64
    }

    pub fn min(&self) -> Option<u64> {
        self.samples.iter().copied().min()
    }

    pub fn max(&self) -> Option<u64> {
        self.samples.iter().copied().max()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatencyCdf {
    pub series: Vec<CdfSeries>,
}

impl LatencyCdf {
    /// `d,trial,total_cycles`, one row per sample.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "d,trial,total_cycles")?;
        for s in &self.series {
            for (trial, total) in s.samples.iter().enumerate() {
                writeln!(out, "{},{},{}", s.d, trial, total)?;
            }
        }
        Ok(())
    }
}

/// Receiver lines used by the two alternating replacement sets. Tags
/// `0..ways` are reserved for the receiver's initial fill.
pub(crate) fn alternating_sets(
    geometry: &CacheGeometry,
    target_set: usize,
    len: usize,
    seed: u64,
) -> Result<[ReplacementSet; 2], MeasureError> {
    let base = geometry.ways as u64;
    Ok([
        ReplacementSet::build(geometry, ActorId::RECEIVER, target_set, len, base, seed)?,
        ReplacementSet::build(
            geometry,
            ActorId::RECEIVER,
            target_set,
            len,
            base + len as u64,
            seed ^ 0x9e37_79b9_7f4a_7c15,
        )?,
    ])
}

/// Samples the replacement latency `trials` times for each dirty level.
///
/// For every level a fresh cache is filled by the receiver; each trial then
/// has the sender dirty `d` lines of the target set and the receiver walk one
/// of two alternating replacement sets.
pub fn latency_cdf(setup: &CdfSetup) -> Result<LatencyCdf, MeasureError> {
    let g = &setup.cache.geometry;
    g.validate()?;
    if setup.target_set >= g.num_sets {
        return Err(MeasureError::TargetOutOfRange {
            set: setup.target_set,
            num_sets: g.num_sets,
        });
    }
    let mut series = Vec::with_capacity(setup.d_values.len());
    for (i, &d) in setup.d_values.iter().enumerate() {
        if d > g.ways {
            return Err(MeasureError::LevelOutOfRange { d, ways: g.ways });
        }
        let level_seed = setup.seed.wrapping_add(i as u64);
        let mut cache = Cache::new(setup.cache.clone(), level_seed)?;
        let sets = alternating_sets(g, setup.target_set, setup.replacement_len, level_seed)?;
        for tag in 0..g.ways as u64 {
            cache.read(LineRef::new(ActorId::RECEIVER, g.address_of(setup.target_set, tag)))?;
        }
        let sender: Vec<LineRef> = (0..d as u64)
            .map(|t| LineRef::new(ActorId::SENDER, g.address_of(setup.target_set, t)))
            .collect();
        let mut samples = Vec::with_capacity(setup.trials);
        for trial in 0..setup.trials {
            for &line in &sender {
                cache.write(line)?;
            }
            let sample = measure_replacement_latency(&mut cache, &sets[trial % 2])?;
            samples.push(sample.total_cycles);
        }
        series.push(CdfSeries { d, samples });
    }
    Ok(LatencyCdf { series })
}
