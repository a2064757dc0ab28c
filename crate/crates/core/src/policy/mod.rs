//! Victim selection for one cache set.
//!
//! Three policies are modeled:
//!
//! * true LRU, with a per-line recency stamp taken from a per-set access clock;
//! * Tree-PLRU, with `W - 1` bits per set laid out as a heap (node `n` has
//!   children `2n + 1` and `2n + 2`). A bit value of `0` points to the left
//!   child, `1` to the right child, and the victim is found by following the
//!   pointed-to children from the root;
//! * seeded pseudo-random selection, which keeps no per-set state.
//!
//! The eviction-probability experiments built on top of these policies live in
//! [`experiment`].

pub mod experiment;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

pub use experiment::{
    analytic_dirty_eviction_probability, dirty_eviction_experiment, eviction_distance_experiment,
    EvictionExperimentResult, ExperimentError,
};

/// Replacement policy of the simulated cache.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum PolicyKind {
    TrueLru,
    TreePlru,
    /// Uniform victim choice driven by a generator seeded with `seed`.
    Random { seed: u64 },
}

impl PolicyKind {
    pub fn name(&self) -> &'static str {
        match self {
            PolicyKind::TrueLru => "lru",
            PolicyKind::TreePlru => "tree-plru",
            PolicyKind::Random { .. } => "random",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Parses `lru`, `tree-plru` or `random`. A parsed `random` carries seed 0;
/// callers replace it with the experiment seed.
impl FromStr for PolicyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "lru" | "true-lru" => Ok(PolicyKind::TrueLru),
            "tree-plru" | "plru" | "treeplru" => Ok(PolicyKind::TreePlru),
            "random" => Ok(PolicyKind::Random { seed: 0 }),
            other => Err(format!("unknown policy `{other}` (expected lru, tree-plru or random)")),
        }
    }
}

/// Bit mask over the ways of one set. Bit `w` set means way `w` may be used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct WayMask(pub u64);

impl WayMask {
    pub fn all(ways: usize) -> Self {
        if ways >= 64 {
            WayMask(u64::MAX)
        } else {
            WayMask((1u64 << ways) - 1)
        }
    }

    pub fn contains(self, way: usize) -> bool {
        way < 64 && self.0 & (1u64 << way) != 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn count(self) -> usize {
        self.0.count_ones() as usize
    }

    /// True if any way in `lo..hi` is allowed.
    fn any_in(self, lo: usize, hi: usize) -> bool {
        (lo..hi).any(|w| self.contains(w))
    }

    pub fn iter(self) -> impl Iterator<Item = usize> {
        (0..64).filter(move |&w| self.contains(w))
    }
}

impl FromIterator<usize> for WayMask {
    fn from_iter<I: IntoIterator<Item = usize>>(iter: I) -> Self {
        WayMask(iter.into_iter().fold(0, |acc, w| acc | (1u64 << w)))
    }
}

/// Replacement metadata of one set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SetMeta {
    Lru { stamps: Vec<u64>, clock: u64 },
    TreePlru { bits: u64, ways: usize },
    Random { ways: usize },
}

impl SetMeta {
    pub fn new(kind: PolicyKind, ways: usize) -> Self {
        match kind {
            PolicyKind::TrueLru => SetMeta::Lru {
                stamps: vec![0; ways],
                clock: 0,
            },
            PolicyKind::TreePlru => SetMeta::TreePlru { bits: 0, ways },
            PolicyKind::Random { .. } => SetMeta::Random { ways },
        }
    }

    pub fn ways(&self) -> usize {
        match self {
            SetMeta::Lru { stamps, .. } => stamps.len(),
            SetMeta::TreePlru { ways, .. } | SetMeta::Random { ways } => *ways,
        }
    }

    /// Picks the way to evict among `allowed`. All allowed ways are assumed
    /// valid; invalid-way fill happens in the cache before this is called.
    ///
    /// `allowed` must be non-empty.
    pub fn select_victim<R: Rng + ?Sized>(&self, allowed: WayMask, rng: &mut R) -> usize {
        debug_assert!(!allowed.is_empty());
        match self {
            SetMeta::Lru { stamps, .. } => allowed
                .iter()
                .take_while(|&w| w < stamps.len())
                .min_by_key(|&w| (stamps[w], w))
                .unwrap_or(0),
            SetMeta::TreePlru { bits, ways } => plru_victim(*bits, *ways, allowed),
            SetMeta::Random { ways } => {
                let candidates: Vec<usize> = allowed.iter().take_while(|&w| w < *ways).collect();
                *candidates.choose(rng).unwrap_or(&0)
            }
        }
    }

    /// Records an access (hit or fill) to `way`.
    pub fn on_access(&mut self, way: usize) {
        match self {
            SetMeta::Lru { stamps, clock } => {
                *clock += 1;
                stamps[way] = *clock;
            }
            SetMeta::TreePlru { bits, ways } => *bits = plru_touch(*bits, *ways, way),
            SetMeta::Random { .. } => {}
        }
    }

    /// Per-line payload for snapshots: the LRU stamp, nothing otherwise.
    pub fn line_meta(&self, way: usize) -> Option<u64> {
        match self {
            SetMeta::Lru { stamps, .. } => stamps.get(way).copied(),
            _ => None,
        }
    }

    /// Tree bits of a Tree-PLRU set.
    pub fn tree_bits(&self) -> Option<u64> {
        match self {
            SetMeta::TreePlru { bits, .. } => Some(*bits),
            _ => None,
        }
    }

    /// Number of metadata bits a hardware implementation would store.
    pub fn storage_bits(&self) -> usize {
        match self {
            SetMeta::Lru { stamps, .. } => {
                stamps.len() * (usize::BITS - stamps.len().saturating_sub(1).leading_zeros()) as usize
            }
            SetMeta::TreePlru { ways, .. } => ways.saturating_sub(1),
            SetMeta::Random { .. } => 0,
        }
    }

    /// Overwrites the Tree-PLRU bits. No-op for other policies.
    pub fn set_tree_bits(&mut self, value: u64) {
        if let SetMeta::TreePlru { bits, ways } = self {
            *bits = value & tree_mask(*ways);
        }
    }

    /// Uniform random recency order (LRU) or uniform random tree bits (PLRU).
    pub fn randomize<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        match self {
            SetMeta::Lru { stamps, clock } => {
                let mut order: Vec<u64> = (1..=stamps.len() as u64).collect();
                order.shuffle(rng);
                stamps.copy_from_slice(&order);
                *clock = stamps.len() as u64;
            }
            SetMeta::TreePlru { bits, ways } => *bits = rng.gen::<u64>() & tree_mask(*ways),
            SetMeta::Random { .. } => {}
        }
    }

    pub fn reset(&mut self) {
        match self {
            SetMeta::Lru { stamps, clock } => {
                stamps.iter_mut().for_each(|s| *s = 0);
                *clock = 0;
            }
            SetMeta::TreePlru { bits, .. } => *bits = 0,
            SetMeta::Random { .. } => {}
        }
    }
}

fn tree_mask(ways: usize) -> u64 {
    WayMask::all(ways.saturating_sub(1)).0
}

fn plru_victim(bits: u64, ways: usize, allowed: WayMask) -> usize {
    let (mut node, mut lo, mut hi) = (0usize, 0usize, ways);
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        let go_right = bits & (1u64 << node) != 0;
        // Follow the bit unless the pointed-to half has no usable way.
        let go_right = match (allowed.any_in(lo, mid), allowed.any_in(mid, hi)) {
            (true, false) => false,
            (false, true) => true,
            _ => go_right,
        };
        if go_right {
            node = 2 * node + 2;
            lo = mid;
        } else {
            node = 2 * node + 1;
            hi = mid;
        }
    }
    lo
}

fn plru_touch(mut bits: u64, ways: usize, way: usize) -> u64 {
    let (mut node, mut lo, mut hi) = (0usize, 0usize, ways);
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if way < mid {
            bits |= 1u64 << node;
            node = 2 * node + 1;
            hi = mid;
        } else {
            bits &= !(1u64 << node);
            node = 2 * node + 2;
            lo = mid;
        }
    }
    bits
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(7)
    }

    #[test]
    fn lru_evicts_oldest() {
        let mut meta = SetMeta::new(PolicyKind::TrueLru, 8);
        for w in 0..8 {
            meta.on_access(w);
        }
        assert_eq!(meta.select_victim(WayMask::all(8), &mut rng()), 0);
    }

    #[test]
    fn lru_reaccess_promotes_oldest() {
        let mut meta = SetMeta::new(PolicyKind::TrueLru, 8);
        for w in 0..8 {
            meta.on_access(w);
        }
        meta.on_access(0);
        assert_eq!(meta.select_victim(WayMask::all(8), &mut rng()), 1);
    }

    #[test]
    fn plru_two_way() {
        let mut meta = SetMeta::new(PolicyKind::TreePlru, 2);
        meta.on_access(0);
        assert_eq!(meta.select_victim(WayMask::all(2), &mut rng()), 1);
        meta.on_access(1);
        assert_eq!(meta.select_victim(WayMask::all(2), &mut rng()), 0);
    }

    #[test]
    fn plru_never_picks_last_touched() {
        for start in 0..128u64 {
            for way in 0..8 {
                let mut meta = SetMeta::new(PolicyKind::TreePlru, 8);
                meta.set_tree_bits(start);
                meta.on_access(way);
                assert_ne!(meta.select_victim(WayMask::all(8), &mut rng()), way);
            }
        }
    }

    #[test]
    fn plru_uses_w_minus_one_bits() {
        let mut meta = SetMeta::new(PolicyKind::TreePlru, 8);
        assert_eq!(meta.storage_bits(), 7);
        meta.set_tree_bits(u64::MAX);
        assert_eq!(meta.tree_bits(), Some(0x7f));
        let mut r = rng();
        for _ in 0..100 {
            meta.randomize(&mut r);
            assert!(meta.tree_bits().unwrap() < 128);
        }
    }

    #[test]
    fn plru_respects_mask() {
        let meta = SetMeta::new(PolicyKind::TreePlru, 8);
        // All bits zero point to way 0; restrict to the upper half.
        let upper: WayMask = (4..8).collect();
        let v = meta.select_victim(upper, &mut rng());
        assert!((4..8).contains(&v));
    }

    #[test]
    fn random_is_noop_on_access_and_reproducible() {
        let mut meta = SetMeta::new(PolicyKind::Random { seed: 1 }, 8);
        let before = meta.clone();
        meta.on_access(3);
        assert_eq!(meta, before);

        let draw = |seed| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            (0..32)
                .map(|_| meta.select_victim(WayMask::all(8), &mut r))
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(11), draw(11));
    }

    #[test]
    fn random_victims_are_uniform() {
        let meta = SetMeta::new(PolicyKind::Random { seed: 0 }, 8);
        let mut r = ChaCha8Rng::seed_from_u64(2024);
        let draws = 100_000usize;
        let mut hist = [0usize; 8];
        for _ in 0..draws {
            hist[meta.select_victim(WayMask::all(8), &mut r)] += 1;
        }
        let p = 1.0 / 8.0;
        let mean = draws as f64 * p;
        let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
        for count in hist {
            assert!((count as f64 - mean).abs() <= 3.0 * sigma, "{hist:?}");
        }
    }

    #[test]
    fn policy_names_round_trip() {
        for kind in [PolicyKind::TrueLru, PolicyKind::TreePlru, PolicyKind::Random { seed: 0 }] {
            assert_eq!(kind.name().parse::<PolicyKind>().unwrap(), kind);
        }
        assert!("fifo".parse::<PolicyKind>().is_err());
    }
}
