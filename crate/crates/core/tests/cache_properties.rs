use std::collections::{BTreeMap, VecDeque};

use proptest::prelude::*;

use dirtysim::cache::{AccessKind, OutcomeKind};
use dirtysim::{ActorId, Cache, CacheConfig, CacheGeometry, LineRef, PolicyKind, WritePolicy};

#[derive(Debug, Clone)]
struct Op {
    actor: u32,
    set: usize,
    tag: u64,
    write: bool,
}

fn ops(max_sets: usize) -> impl Strategy<Value = Vec<Op>> {
    prop::collection::vec(
        (1u32..=3, 0..max_sets, 0u64..12, any::<bool>()).prop_map(|(actor, set, tag, write)| Op {
            actor,
            set,
            tag,
            write,
        }),
        1..300,
    )
}

fn policy() -> impl Strategy<Value = PolicyKind> {
    prop_oneof![
        Just(PolicyKind::TrueLru),
        Just(PolicyKind::TreePlru),
        any::<u64>().prop_map(|seed| PolicyKind::Random { seed }),
    ]
}

fn config(policy: PolicyKind, write_policy: WritePolicy) -> CacheConfig {
    CacheConfig {
        geometry: CacheGeometry {
            num_sets: 4,
            write_policy,
            ..CacheGeometry::default()
        },
        policy,
        ..CacheConfig::default()
    }
}

fn line(cache: &Cache, op: &Op) -> LineRef {
    LineRef::new(ActorId(op.actor), cache.geometry().address_of(op.set, op.tag))
}

fn kind(op: &Op) -> AccessKind {
    if op.write {
        AccessKind::Write
    } else {
        AccessKind::Read
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    /// Every clean-to-dirty transition ends either as a write-back or as a
    /// line still dirty in the cache.
    #[test]
    fn dirty_lines_are_conserved(policy in policy(), ops in ops(4)) {
        let mut cache = Cache::new(config(policy, WritePolicy::WriteBackAllocate), 0).unwrap();
        let mut dirtied = 0u64;
        for op in &ops {
            let l = line(&cache, op);
            let was_dirty = cache.is_dirty(&l);
            cache.access(l, kind(op)).unwrap();
            if op.write && !was_dirty {
                dirtied += 1;
            }
            prop_assert_eq!(cache.is_dirty(&l), op.write || was_dirty);
        }
        let resident: u64 = (0..4).map(|s| cache.dirty_count(s) as u64).sum();
        prop_assert_eq!(cache.counters().total_writebacks() + resident, dirtied);
    }

    #[test]
    fn write_through_never_dirties(policy in policy(), ops in ops(4)) {
        let mut cache = Cache::new(config(policy, WritePolicy::WriteThroughNoAllocate), 0).unwrap();
        for op in &ops {
            let l = line(&cache, op);
            let resident = cache.contains(&l);
            let out = cache.access(l, kind(op)).unwrap();
            prop_assert!(!out.writeback);
            prop_assert_ne!(out.kind, OutcomeKind::MissEvictDirty);
            if op.write && !resident {
                prop_assert_eq!(out.kind, OutcomeKind::Uncached);
                prop_assert!(!cache.contains(&l));
            }
        }
        prop_assert!((0..4).all(|s| cache.dirty_count(s) == 0));
        prop_assert_eq!(cache.counters().total_writebacks(), 0);
    }

    /// Under way partitioning no actor ever evicts another actor's line.
    #[test]
    fn partitions_isolate_actors(policy in policy(), ops in ops(4)) {
        let mut cfg = config(policy, WritePolicy::WriteBackAllocate);
        cfg.geometry = cfg.geometry.with_even_partition(&[ActorId(1), ActorId(2), ActorId(3)]);
        let mut cache = Cache::new(cfg, 0).unwrap();
        for op in &ops {
            let before: Vec<_> = cache.snapshot_set(op.set).unwrap();
            let out = cache.access(line(&cache, op), kind(op)).unwrap();
            if let (true, Some(w)) = (out.kind.is_miss(), out.victim_way) {
                if let Some(tag) = before[w].tag {
                    prop_assert_eq!(tag.actor, ActorId(op.actor));
                }
            }
            let allowed = cache.geometry().ways_for(ActorId(op.actor)).unwrap();
            let after = cache.snapshot_set(op.set).unwrap();
            for (w, l) in after.iter().enumerate() {
                if l.tag.map(|t| t.actor) == Some(ActorId(op.actor)) {
                    prop_assert!(allowed.contains(w));
                }
            }
        }
    }

    /// True LRU hits exactly when fewer than W distinct lines of the set were
    /// touched since the previous access to the same line.
    #[test]
    fn lru_matches_stack_model(ops in ops(2)) {
        let mut cache = Cache::new(config(PolicyKind::TrueLru, WritePolicy::WriteBackAllocate), 0).unwrap();
        let ways = cache.geometry().ways;
        let mut stacks: BTreeMap<usize, VecDeque<LineRef>> = BTreeMap::new();
        for op in &ops {
            let l = line(&cache, op);
            let stack = stacks.entry(op.set).or_default();
            let pos = stack.iter().position(|x| *x == l);
            let expect_hit = pos.is_some_and(|p| p < ways);
            let out = cache.access(l, kind(op)).unwrap();
            prop_assert_eq!(out.kind == OutcomeKind::Hit, expect_hit);
            if let Some(p) = pos {
                stack.remove(p);
            }
            stack.push_front(l);
        }
    }

    #[test]
    fn replay_is_deterministic(policy in policy(), ops in ops(4), seed in any::<u64>()) {
        let mut cfg = config(policy, WritePolicy::WriteBackAllocate);
        cfg.latency.jitter = 3;
        let run = || {
            let mut cache = Cache::new(cfg.clone(), seed).unwrap();
            ops.iter().map(|op| cache.access(line(&cache, op), kind(op)).unwrap()).collect::<Vec<_>>()
        };
        prop_assert_eq!(run(), run());
    }

    #[test]
    fn latency_stays_in_jitter_band(ops in ops(4), jitter in 0u64..4) {
        let mut cfg = config(PolicyKind::TrueLru, WritePolicy::WriteBackAllocate);
        cfg.latency.jitter = jitter;
        let mut cache = Cache::new(cfg.clone(), 9).unwrap();
        for op in &ops {
            let out = cache.access(line(&cache, op), kind(op)).unwrap();
            let base = cfg.latency.base(out.kind);
            prop_assert!(out.latency >= base.saturating_sub(jitter).max(1));
            prop_assert!(out.latency <= base + jitter);
        }
    }
}
