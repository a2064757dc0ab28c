//! C ABI for `dirtysim`.
//!
//! Every fallible function returns a [`DsStatus`]. On failure a description is
//! kept per thread and can be read with [`ds_last_error_message`]. Caches are
//! opaque [`DsCache`] handles created by [`ds_cache_new`] and released with
//! [`ds_cache_free`]. Strings returned by the library must be released with
//! [`ds_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use dirtysim::analysis::{edit_distance, rate_kbps};
use dirtysim::cache::{AccessKind, ActorId, Cache, CacheConfig, CacheGeometry, LatencyModel, LineRef, OutcomeKind, WritePolicy};
use dirtysim::channel::{calibrate_thresholds, run_channel, ChannelConfig, ChannelError};
use dirtysim::policy::{
    analytic_dirty_eviction_probability, dirty_eviction_experiment, eviction_distance_experiment,
    EvictionExperimentResult, PolicyKind,
};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Calibration = 3,
    BufferTooSmall = 4,
    Internal = 5,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DsPolicy {
    Lru = 0,
    TreePlru = 1,
    Random = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DsAccessKind {
    Read = 0,
    Write = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum DsOutcomeKind {
    #[default]
    Hit = 0,
    MissFillInvalid = 1,
    MissEvictClean = 2,
    MissEvictDirty = 3,
    Uncached = 4,
}

/// Cache construction parameters. Start from [`ds_cache_params_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct DsCacheParams {
    pub num_sets: u32,
    pub ways: u32,
    pub line_size: u32,
    /// Non-zero selects write-through, no-allocate stores.
    pub write_through: u8,
    pub policy: DsPolicy,
    /// Seed of the victim generator when `policy` is random.
    pub policy_seed: u64,
    pub l1_hit: u64,
    pub clean_replace: u64,
    pub dirty_replace: u64,
    pub uncached_store: u64,
    pub jitter: u64,
    pub timer_overhead: u64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct DsAccessOutcome {
    pub kind: DsOutcomeKind,
    /// Way filled or replaced on a miss; -1 for hits and uncached stores.
    pub victim_way: i32,
    pub writeback: u8,
    pub latency: u64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct DsLineState {
    pub valid: u8,
    pub dirty: u8,
    pub actor: u32,
    pub tag: u64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct DsActorCounters {
    pub loads: u64,
    pub stores: u64,
    pub l1_hits: u64,
    pub l1_misses: u64,
    pub writebacks: u64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct DsExperimentResult {
    pub set_size: u64,
    pub dirty_count: u64,
    pub trials: u64,
    pub successes: u64,
    pub evicted_fraction: f64,
}

/// Opaque cache handle.
pub struct DsCache {
    inner: Cache,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn fail(status: DsStatus, msg: impl Into<String>) -> DsStatus {
    set_error(msg);
    status
}

/// Runs `f`, turning panics into [`DsStatus::Internal`].
fn guard(f: impl FnOnce() -> DsStatus) -> DsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => fail(DsStatus::Internal, "internal panic"),
    }
}

macro_rules! non_null {
    ($($p:ident),+) => {
        $(if $p.is_null() {
            return fail(DsStatus::NullPointer, concat!("`", stringify!($p), "` is null"));
        })+
    };
}

impl DsCacheParams {
    fn to_config(self) -> CacheConfig {
        CacheConfig {
            geometry: CacheGeometry {
                num_sets: self.num_sets as usize,
                ways: self.ways as usize,
                line_size: self.line_size as usize,
                write_policy: if self.write_through != 0 {
                    WritePolicy::WriteThroughNoAllocate
                } else {
                    WritePolicy::WriteBackAllocate
                },
                partition: None,
            },
            policy: policy_kind(self.policy, self.policy_seed),
            latency: LatencyModel {
                l1_hit: self.l1_hit,
                clean_replace: self.clean_replace,
                dirty_replace: self.dirty_replace,
                uncached_store: self.uncached_store,
                jitter: self.jitter,
                timer_overhead: self.timer_overhead,
            },
        }
    }
}

fn policy_kind(policy: DsPolicy, seed: u64) -> PolicyKind {
    match policy {
        DsPolicy::Lru => PolicyKind::TrueLru,
        DsPolicy::TreePlru => PolicyKind::TreePlru,
        DsPolicy::Random => PolicyKind::Random { seed },
    }
}

fn experiment_result(r: &EvictionExperimentResult) -> DsExperimentResult {
    DsExperimentResult {
        set_size: r.set_size as u64,
        dirty_count: r.dirty_count as u64,
        trials: r.trials as u64,
        successes: r.successes as u64,
        evicted_fraction: r.evicted_fraction,
    }
}

/// Default geometry and latencies: 64 sets, 8 ways, 64-byte lines, true LRU,
/// write-back; hit 4, clean replace 11, dirty replace 22 cycles.
#[no_mangle]
pub extern "C" fn ds_cache_params_default() -> DsCacheParams {
    let c = CacheConfig::default();
    DsCacheParams {
        num_sets: c.geometry.num_sets as u32,
        ways: c.geometry.ways as u32,
        line_size: c.geometry.line_size as u32,
        write_through: 0,
        policy: DsPolicy::Lru,
        policy_seed: 0,
        l1_hit: c.latency.l1_hit,
        clean_replace: c.latency.clean_replace,
        dirty_replace: c.latency.dirty_replace,
        uncached_store: c.latency.uncached_store,
        jitter: c.latency.jitter,
        timer_overhead: c.latency.timer_overhead,
    }
}

/// Creates a cache. `seed` drives latency jitter.
///
/// # Safety
/// `params` must point to a valid `DsCacheParams`; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ds_cache_new(
    params: *const DsCacheParams,
    seed: u64,
    out: *mut *mut DsCache,
) -> DsStatus {
    guard(|| {
        non_null!(params, out);
        match Cache::new((*params).to_config(), seed) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(DsCache { inner }));
                DsStatus::Ok
            }
            Err(e) => fail(DsStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// Releases a cache. Null is ignored.
///
/// # Safety
/// `cache` must come from `ds_cache_new` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ds_cache_free(cache: *mut DsCache) {
    if !cache.is_null() {
        drop(Box::from_raw(cache));
    }
}

/// Performs one access on behalf of `actor`.
///
/// # Safety
/// `cache` must be a live handle; `out` must be writable or null.
#[no_mangle]
pub unsafe extern "C" fn ds_cache_access(
    cache: *mut DsCache,
    actor: u32,
    address: u64,
    kind: DsAccessKind,
    out: *mut DsAccessOutcome,
) -> DsStatus {
    guard(|| {
        non_null!(cache);
        let kind = match kind {
            DsAccessKind::Read => AccessKind::Read,
            DsAccessKind::Write => AccessKind::Write,
        };
        match (*cache).inner.access(LineRef::new(ActorId(actor), address), kind) {
            Ok(o) => {
                if !out.is_null() {
                    *out = DsAccessOutcome {
                        kind: match o.kind {
                            OutcomeKind::Hit => DsOutcomeKind::Hit,
                            OutcomeKind::MissFillInvalid => DsOutcomeKind::MissFillInvalid,
                            OutcomeKind::MissEvictClean => DsOutcomeKind::MissEvictClean,
                            OutcomeKind::MissEvictDirty => DsOutcomeKind::MissEvictDirty,
                            OutcomeKind::Uncached => DsOutcomeKind::Uncached,
                        },
                        victim_way: o.victim_way.map_or(-1, |w| w as i32),
                        writeback: u8::from(o.writeback),
                        latency: o.latency,
                    };
                }
                DsStatus::Ok
            }
            Err(e) => fail(DsStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// Invalidates every line and clears counters.
///
/// # Safety
/// `cache` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn ds_cache_reset(cache: *mut DsCache) -> DsStatus {
    guard(|| {
        non_null!(cache);
        (*cache).inner.reset();
        DsStatus::Ok
    })
}

/// Number of dirty lines in `set`.
///
/// # Safety
/// `cache` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ds_cache_dirty_count(cache: *const DsCache, set: usize, out: *mut usize) -> DsStatus {
    guard(|| {
        non_null!(cache, out);
        let c = &(*cache).inner;
        if set >= c.geometry().num_sets {
            return fail(DsStatus::InvalidArgument, format!("set {set} out of range"));
        }
        *out = c.dirty_count(set);
        DsStatus::Ok
    })
}

/// Copies the state of every way of `set` into `out[0..ways]`. `written`
/// receives the number of ways, also when the buffer is too small.
///
/// # Safety
/// `cache` must be a live handle; `out` must hold `capacity` entries;
/// `written` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ds_cache_snapshot_set(
    cache: *const DsCache,
    set: usize,
    out: *mut DsLineState,
    capacity: usize,
    written: *mut usize,
) -> DsStatus {
    guard(|| {
        non_null!(cache, written);
        let lines = match (*cache).inner.snapshot_set(set) {
            Ok(l) => l,
            Err(e) => return fail(DsStatus::InvalidArgument, e.to_string()),
        };
        *written = lines.len();
        if capacity < lines.len() {
            return fail(
                DsStatus::BufferTooSmall,
                format!("snapshot needs {} entries, got {capacity}", lines.len()),
            );
        }
        non_null!(out);
        let dst = std::slice::from_raw_parts_mut(out, lines.len());
        for (d, l) in dst.iter_mut().zip(&lines) {
            *d = DsLineState {
                valid: u8::from(l.valid),
                dirty: u8::from(l.dirty),
                actor: l.tag.map_or(0, |t| t.actor.0),
                tag: l.tag.map_or(0, |t| t.bits),
            };
        }
        DsStatus::Ok
    })
}

/// Event counters of `actor`.
///
/// # Safety
/// `cache` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ds_cache_counters(
    cache: *const DsCache,
    actor: u32,
    out: *mut DsActorCounters,
) -> DsStatus {
    guard(|| {
        non_null!(cache, out);
        let c = (*cache).inner.counters().actor(ActorId(actor));
        *out = DsActorCounters {
            loads: c.loads,
            stores: c.stores,
            l1_hits: c.l1_hits,
            l1_misses: c.l1_misses,
            writebacks: c.writebacks,
        };
        DsStatus::Ok
    })
}

/// `1 - ((ways - d) / ways)^len`.
#[no_mangle]
pub extern "C" fn ds_analytic_dirty_eviction_probability(ways: u32, d: u32, replacement_len: u32) -> f64 {
    analytic_dirty_eviction_probability(ways as usize, d as usize, replacement_len)
}

/// Eviction-distance Monte Carlo experiment on an 8-way set.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ds_eviction_distance_experiment(
    policy: DsPolicy,
    n: u32,
    trials: u32,
    seed: u64,
    out: *mut DsExperimentResult,
) -> DsStatus {
    guard(|| {
        non_null!(out);
        match eviction_distance_experiment(policy_kind(policy, 0), n as usize, trials as usize, seed) {
            Ok(r) => {
                *out = experiment_result(&r);
                DsStatus::Ok
            }
            Err(e) => fail(DsStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// Dirty-eviction Monte Carlo experiment under random replacement.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ds_dirty_eviction_experiment(
    d: u32,
    replacement_len: u32,
    trials: u32,
    seed: u64,
    out: *mut DsExperimentResult,
) -> DsStatus {
    guard(|| {
        non_null!(out);
        match dirty_eviction_experiment(d as usize, replacement_len as usize, trials as usize, seed) {
            Ok(r) => {
                *out = experiment_result(&r);
                DsStatus::Ok
            }
            Err(e) => fail(DsStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// Levenshtein distance between two byte strings.
///
/// # Safety
/// `a` and `b` must point to `a_len` and `b_len` readable bytes (they may be
/// null when the length is zero); `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ds_edit_distance(
    a: *const u8,
    a_len: usize,
    b: *const u8,
    b_len: usize,
    out: *mut usize,
) -> DsStatus {
    guard(|| {
        non_null!(out);
        let view = |p: *const u8, len: usize| -> Option<&[u8]> {
            match (p.is_null(), len) {
                (_, 0) => Some(&[]),
                (true, _) => None,
                (false, _) => Some(std::slice::from_raw_parts(p, len)),
            }
        };
        match (view(a, a_len), view(b, b_len)) {
            (Some(a), Some(b)) => {
                *out = edit_distance(a, b);
                DsStatus::Ok
            }
            _ => fail(DsStatus::NullPointer, "null string with non-zero length"),
        }
    })
}

/// Channel rate in Kbps, rounded to three decimals. Returns NaN when
/// `period` is zero.
#[no_mangle]
pub extern "C" fn ds_rate_kbps(period: u64, bits_per_symbol: u32, freq_hz: f64) -> f64 {
    if period == 0 {
        set_error("period must be positive");
        return f64::NAN;
    }
    rate_kbps(period, bits_per_symbol as usize, freq_hz)
}

/// Calibrates and runs one channel transmission.
///
/// `config_json` is a JSON channel configuration; omitted fields take their
/// defaults. On success `*out_json` receives the JSON report, to be released
/// with `ds_string_free`.
///
/// # Safety
/// `config_json` must be a NUL-terminated string; `out_json` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ds_run_channel_json(
    config_json: *const c_char,
    calibration_trials: u32,
    out_json: *mut *mut c_char,
) -> DsStatus {
    guard(|| {
        non_null!(config_json, out_json);
        *out_json = ptr::null_mut();
        let text = match CStr::from_ptr(config_json).to_str() {
            Ok(t) => t,
            Err(_) => return fail(DsStatus::InvalidArgument, "configuration is not UTF-8"),
        };
        let cfg: ChannelConfig = match serde_json::from_str(text) {
            Ok(c) => c,
            Err(e) => return fail(DsStatus::InvalidArgument, format!("invalid configuration: {e}")),
        };
        let report = calibrate_thresholds(&cfg, calibration_trials as usize, cfg.seed)
            .and_then(|t| run_channel(&cfg, &t));
        match report {
            Ok(r) => {
                let json = serde_json::to_string(&r).expect("report serializes");
                *out_json = CString::new(json).expect("JSON has no NUL").into_raw();
                DsStatus::Ok
            }
            Err(e @ ChannelError::Calibration { .. }) => fail(DsStatus::Calibration, e.to_string()),
            Err(e) => fail(DsStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ds_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Message of the last failure on this thread, or null. Valid until the next
/// failing call on the same thread.
#[no_mangle]
pub extern "C" fn ds_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}
