//! Monte Carlo eviction experiments.
//!
//! * [`eviction_distance_experiment`]: a set holding unrelated lines in a
//!   random recency state receives a dirty write to line 0 followed by `n`
//!   fresh lines; we count how often line 0 is gone afterwards.
//! * [`dirty_eviction_experiment`]: under random replacement, a set holding `d`
//!   dirty and `W - d` clean lines receives `L` fresh lines; we count how often
//!   at least one dirty line is written back.
//!
//! Trial `i` always draws from the stream derived from `(seed, i)`, whatever
//! the other parameters are, so cells of a parameter grid share random numbers.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::PolicyKind;
use crate::cache::{ActorId, Cache, CacheConfig, CacheError, CacheGeometry, LineRef, OutcomeKind};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ExperimentError {
    #[error("replacement set size {n} outside 1..={max}")]
    SetSizeOutOfRange { n: usize, max: usize },
    #[error("dirty count {d} exceeds associativity {ways}")]
    TooManyDirty { d: usize, ways: usize },
    #[error("trials must be at least 1")]
    NoTrials,
    #[error(transparent)]
    Cache(#[from] CacheError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvictionExperimentResult {
    /// `N` for the eviction-distance experiment, `L` for the dirty one.
    pub set_size: usize,
    pub dirty_count: usize,
    pub trials: usize,
    pub successes: usize,
    pub evicted_fraction: f64,
}

impl EvictionExperimentResult {
    fn new(set_size: usize, dirty_count: usize, trials: usize, successes: usize) -> Self {
        Self {
            set_size,
            dirty_count,
            trials,
            successes,
            evicted_fraction: successes as f64 / trials as f64,
        }
    }
}

/// Largest replacement set accepted, in multiples of the associativity.
pub const MAX_SET_SIZE_FACTOR: usize = 4;

const TARGET_SET: usize = 0;

pub(crate) fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

fn single_set_config(policy: PolicyKind, ways: usize) -> CacheConfig {
    CacheConfig {
        geometry: CacheGeometry {
            num_sets: 1,
            ways,
            ..CacheGeometry::default()
        },
        policy,
        ..CacheConfig::default()
    }
}

fn with_trial_seed(policy: PolicyKind, rng: &mut ChaCha8Rng) -> PolicyKind {
    match policy {
        PolicyKind::Random { .. } => PolicyKind::Random { seed: rng.next_u64() },
        other => other,
    }
}

/// Probability that line 0 is evicted by `n` fresh lines, default 8-way set.
pub fn eviction_distance_experiment(
    policy: PolicyKind,
    n: usize,
    trials: usize,
    seed: u64,
) -> Result<EvictionExperimentResult, ExperimentError> {
    let ways = CacheGeometry::default().ways;
    let max = MAX_SET_SIZE_FACTOR * ways;
    if n == 0 || n > max {
        return Err(ExperimentError::SetSizeOutOfRange { n, max });
    }
    if trials == 0 {
        return Err(ExperimentError::NoTrials);
    }

    let mut successes = 0;
    for trial in 0..trials {
        let mut rng = trial_rng(seed, trial as u64);
        let mut cache = Cache::new(single_set_config(with_trial_seed(policy, &mut rng), ways), 0)?;
        let g = cache.geometry().clone();

        for tag in 0..ways as u64 {
            cache.read(LineRef::new(ActorId::FILLER, g.address_of(TARGET_SET, tag)))?;
        }
        cache.set_meta_mut(TARGET_SET)?.randomize(&mut rng);

        let line0 = LineRef::new(ActorId::SENDER, g.address_of(TARGET_SET, 0));
        cache.write(line0)?;
        for tag in 1..=n as u64 {
            cache.read(LineRef::new(ActorId::RECEIVER, g.address_of(TARGET_SET, tag)))?;
        }
        if !cache.contains(&line0) {
            successes += 1;
        }
    }
    Ok(EvictionExperimentResult::new(n, 1, trials, successes))
}

/// Probability that `replacement_len` fresh lines evict at least one of `d`
/// dirty lines under random replacement in an 8-way set.
pub fn dirty_eviction_experiment(
    d: usize,
    replacement_len: usize,
    trials: usize,
    seed: u64,
) -> Result<EvictionExperimentResult, ExperimentError> {
    let ways = CacheGeometry::default().ways;
    if d > ways {
        return Err(ExperimentError::TooManyDirty { d, ways });
    }
    let max = MAX_SET_SIZE_FACTOR * ways;
    if replacement_len == 0 || replacement_len > max {
        return Err(ExperimentError::SetSizeOutOfRange {
            n: replacement_len,
            max,
        });
    }
    if trials == 0 {
        return Err(ExperimentError::NoTrials);
    }

    let mut successes = 0;
    for trial in 0..trials {
        let mut rng = trial_rng(seed, trial as u64);
        let policy = PolicyKind::Random { seed: rng.next_u64() };
        let mut cache = Cache::new(single_set_config(policy, ways), 0)?;
        let g = cache.geometry().clone();

        let dirty: Vec<LineRef> = (0..d as u64)
            .map(|t| LineRef::new(ActorId::SENDER, g.address_of(TARGET_SET, t)))
            .collect();
        // Two passes: the first installs, the second hits and keeps them resident.
        for _ in 0..2 {
            for &line in &dirty {
                cache.write(line)?;
            }
        }
        for tag in d..ways {
            cache.read(LineRef::new(ActorId::FILLER, g.address_of(TARGET_SET, tag as u64)))?;
        }
        debug_assert_eq!(cache.dirty_count(TARGET_SET), d);

        let mut hit_dirty = false;
        for tag in 0..replacement_len as u64 {
            let out = cache.read(LineRef::new(ActorId::RECEIVER, g.address_of(TARGET_SET, tag)))?;
            hit_dirty |= out.kind == OutcomeKind::MissEvictDirty;
        }
        if hit_dirty {
            successes += 1;
        }
    }
    Ok(EvictionExperimentResult::new(replacement_len, d, trials, successes))
}

/// `1 - ((W - d) / W)^L`: chance that `L` independent uniform victim draws
/// touch at least one of `d` dirty ways.
pub fn analytic_dirty_eviction_probability(ways: usize, d: usize, replacement_len: u32) -> f64 {
    if ways == 0 {
        return 0.0;
    }
    let d = d.min(ways);
    let keep = (ways - d) as f64 / ways as f64;
    1.0 - keep.powi(replacement_len as i32)
}
