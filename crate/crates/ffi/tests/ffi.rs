use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use dirtysim_ffi::*;

fn last_error() -> String {
    let p = ds_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn new_cache(params: &DsCacheParams) -> *mut DsCache {
    let mut cache = ptr::null_mut();
    assert_eq!(unsafe { ds_cache_new(params, 1, &mut cache) }, DsStatus::Ok);
    assert!(!cache.is_null());
    cache
}

fn address(set: u64, tag: u64) -> u64 {
    (tag << 12) | (set << 6)
}

fn access(cache: *mut DsCache, actor: u32, addr: u64, kind: DsAccessKind) -> DsAccessOutcome {
    let mut out = DsAccessOutcome::default();
    assert_eq!(unsafe { ds_cache_access(cache, actor, addr, kind, &mut out) }, DsStatus::Ok);
    out
}

#[test]
fn dirty_line_eviction_costs_more() {
    let cache = new_cache(&ds_cache_params_default());
    for tag in 0..8 {
        access(cache, 2, address(0, tag), DsAccessKind::Read);
    }
    let w = access(cache, 1, address(0, 0), DsAccessKind::Write);
    assert_eq!(w.kind, DsOutcomeKind::MissEvictClean);
    assert_eq!(w.latency, 11);

    let mut dirty = 0usize;
    assert_eq!(unsafe { ds_cache_dirty_count(cache, 0, &mut dirty) }, DsStatus::Ok);
    assert_eq!(dirty, 1);

    let mut total = 0;
    for tag in 8..18 {
        total += access(cache, 2, address(0, tag), DsAccessKind::Read).latency;
    }
    assert_eq!(total, 121);

    let mut counters = DsActorCounters::default();
    assert_eq!(unsafe { ds_cache_counters(cache, 1, &mut counters) }, DsStatus::Ok);
    assert_eq!((counters.stores, counters.l1_misses), (1, 1));
    unsafe { ds_cache_free(cache) };
}

#[test]
fn snapshot_reports_ways() {
    let cache = new_cache(&ds_cache_params_default());
    access(cache, 1, address(3, 5), DsAccessKind::Write);
    let mut lines = [DsLineState::default(); 8];
    let mut written = 0;
    let status = unsafe { ds_cache_snapshot_set(cache, 3, lines.as_mut_ptr(), lines.len(), &mut written) };
    assert_eq!(status, DsStatus::Ok);
    assert_eq!(written, 8);
    assert_eq!(lines[0].valid, 1);
    assert_eq!(lines[0].dirty, 1);
    assert_eq!((lines[0].actor, lines[0].tag), (1, 5));
    assert!(lines[1..].iter().all(|l| l.valid == 0));

    let mut small = [DsLineState::default(); 2];
    let status = unsafe { ds_cache_snapshot_set(cache, 3, small.as_mut_ptr(), 2, &mut written) };
    assert_eq!(status, DsStatus::BufferTooSmall);
    assert_eq!(written, 8);

    assert_eq!(unsafe { ds_cache_reset(cache) }, DsStatus::Ok);
    let mut dirty = 9;
    unsafe { ds_cache_dirty_count(cache, 3, &mut dirty) };
    assert_eq!(dirty, 0);
    unsafe { ds_cache_free(cache) };
}

#[test]
fn write_through_never_dirties() {
    let mut params = ds_cache_params_default();
    params.write_through = 1;
    let cache = new_cache(&params);
    let out = access(cache, 1, address(0, 0), DsAccessKind::Write);
    assert_eq!(out.kind, DsOutcomeKind::Uncached);
    assert_eq!(out.victim_way, -1);
    unsafe { ds_cache_free(cache) };
}

#[test]
fn invalid_geometry_is_rejected() {
    let mut params = ds_cache_params_default();
    params.ways = 6;
    let mut cache = ptr::null_mut();
    let status = unsafe { ds_cache_new(&params, 0, &mut cache) };
    assert_eq!(status, DsStatus::InvalidArgument);
    assert!(cache.is_null());
    assert!(last_error().contains("ways"));
}

#[test]
fn out_of_range_set() {
    let cache = new_cache(&ds_cache_params_default());
    let mut n = 0;
    assert_eq!(unsafe { ds_cache_dirty_count(cache, 64, &mut n) }, DsStatus::InvalidArgument);
    unsafe { ds_cache_free(cache) };
}

#[test]
fn experiments_and_formulas() {
    let p = ds_analytic_dirty_eviction_probability(8, 3, 10);
    assert!((p - 0.9909).abs() < 1e-4);

    let mut r = DsExperimentResult::default();
    let s = unsafe { ds_eviction_distance_experiment(DsPolicy::Lru, 8, 100, 1, &mut r) };
    assert_eq!(s, DsStatus::Ok);
    assert_eq!(r.evicted_fraction, 1.0);
    assert_eq!(r.successes, 100);

    let s = unsafe { ds_dirty_eviction_experiment(0, 10, 50, 1, &mut r) };
    assert_eq!(s, DsStatus::Ok);
    assert_eq!(r.successes, 0);

    let s = unsafe { ds_dirty_eviction_experiment(9, 10, 50, 1, &mut r) };
    assert_eq!(s, DsStatus::InvalidArgument);

    assert_eq!(ds_rate_kbps(1600, 1, 2.2e9), 1375.0);
    assert!(ds_rate_kbps(0, 1, 2.2e9).is_nan());
}

#[test]
fn edit_distance_over_bytes() {
    let (a, b) = (b"kitten", b"sitting");
    let mut d = 0;
    let s = unsafe { ds_edit_distance(a.as_ptr(), a.len(), b.as_ptr(), b.len(), &mut d) };
    assert_eq!(s, DsStatus::Ok);
    assert_eq!(d, 3);
    let s = unsafe { ds_edit_distance(ptr::null(), 0, b.as_ptr(), b.len(), &mut d) };
    assert_eq!(s, DsStatus::Ok);
    assert_eq!(d, 7);
    let s = unsafe { ds_edit_distance(ptr::null(), 2, b.as_ptr(), b.len(), &mut d) };
    assert_eq!(s, DsStatus::NullPointer);
}

#[test]
fn channel_run_through_json() {
    let cfg = CString::new(r#"{"seed": 4, "message": "1011001110001111"}"#).unwrap();
    let mut out = ptr::null_mut();
    let s = unsafe { ds_run_channel_json(cfg.as_ptr(), 8, &mut out) };
    assert_eq!(s, DsStatus::Ok, "{}", last_error());
    let json = unsafe { CStr::from_ptr(out) }.to_str().unwrap().to_owned();
    unsafe { ds_string_free(out) };
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(v["ber"], 0.0);
    assert_eq!(v["received_bits"], "11110000111100001011001110001111");
}

#[test]
fn channel_json_errors() {
    let bad = CString::new("{ not json").unwrap();
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { ds_run_channel_json(bad.as_ptr(), 8, &mut out) }, DsStatus::InvalidArgument);
    assert!(out.is_null());

    let noisy = CString::new(r#"{"seed": 1, "cache": {"latency": {"jitter": 8}}, "message": "10"}"#).unwrap();
    assert_eq!(unsafe { ds_run_channel_json(noisy.as_ptr(), 200, &mut out) }, DsStatus::Calibration);
    assert!(last_error().contains("calibration"));
}

#[test]
fn header_is_generated_and_parses() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/dirtysim.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in [
        "typedef struct DsCache DsCache;",
        "DS_STATUS_OK = 0",
        "ds_cache_new",
        "ds_cache_free",
        "ds_run_channel_json",
        "ds_last_error_message",
    ] {
        assert!(text.contains(name), "header lacks {name}");
    }
    // Syntax-check with a C compiler when one is installed.
    if let Ok(status) = Command::new("cc").args(["-fsyntax-only", "-x", "c"]).arg(&header).status() {
        assert!(status.success(), "header does not compile");
    }
}
