//! The `dirtysim` command line.
//!
//! Exit codes: 0 on success, 1 on I/O failure, 2 on a configuration error,
//! 3 when threshold calibration cannot separate the encoding levels.

pub mod config;

use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::analysis::{sweep_ber_vs_rate, BitString, DEFAULT_FREQ_HZ, DEFAULT_PERIODS};
use crate::cache::{ActorId, CacheConfig, CacheGeometry, LatencyModel, WritePolicy};
use crate::channel::{
    calibrate_thresholds, run_channel, run_gadget_attack, ChannelConfig, ChannelError, Encoding,
    GadgetConfig, GadgetReport, GadgetScenario, GadgetVariant, LinePlacement, NoiseConfig,
};
use crate::measurement::{latency_cdf, CdfSetup, MeasureError, DEFAULT_REPLACEMENT_LEN};
use crate::policy::{
    analytic_dirty_eviction_probability, dirty_eviction_experiment, eviction_distance_experiment,
    ExperimentError, PolicyKind,
};
pub use config::Settings;

/// Environment variable consulted when no seed is given.
pub const SEED_ENV: &str = "DIRTYSIM_SEED";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Calibration(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Io(_) => 1,
            CliError::Config(_) => 2,
            CliError::Calibration(_) => 3,
        }
    }
}

impl From<ChannelError> for CliError {
    fn from(e: ChannelError) -> Self {
        match e {
            ChannelError::Calibration { .. } => CliError::Calibration(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<MeasureError> for CliError {
    fn from(e: MeasureError) -> Self {
        CliError::Config(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "dirtysim", version, about = "Write-back cache covert channel simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fraction of trials in which N fresh lines evict a previously written line.
    EvictProb(EvictProbArgs),
    /// Monte Carlo and analytic chance that L fresh lines evict one of d dirty lines.
    DirtyEvict(DirtyEvictArgs),
    /// Replacement latency samples per dirty level.
    LatencyCdf(LatencyCdfArgs),
    /// Runs one channel transmission and writes a JSON report plus an event trace.
    RunChannel(ChannelArgs),
    /// Mean BER for each sender period.
    Sweep(SweepArgs),
    /// Side-channel gadget attacks.
    Gadget(GadgetArgs),
}

#[derive(Debug, Args, Default)]
pub struct CommonArgs {
    /// Seed for every random choice (falls back to DIRTYSIM_SEED).
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub trials: Option<usize>,
    /// Output file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Settings file: `key = value` lines or a flat JSON object.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// lru, tree-plru or random.
    #[arg(long)]
    pub policy: Option<String>,
    /// none, write-through or partition.
    #[arg(long)]
    pub defense: Option<String>,
    /// Half-width of the per-access latency jitter in cycles.
    #[arg(long)]
    pub jitter: Option<u64>,
    /// Any other setting, e.g. `--set ways=16`. May be repeated.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub extra: Vec<String>,
}

#[derive(Debug, Args)]
pub struct EvictProbArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Replacement set sizes: `8`, `7,8,9` or `1..16`.
    #[arg(long)]
    pub n: Option<String>,
}

#[derive(Debug, Args)]
pub struct DirtyEvictArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Dirty line counts (list or range).
    #[arg(long)]
    pub d: Option<String>,
    /// Replacement set lengths (list or range).
    #[arg(long)]
    pub l: Option<String>,
}

#[derive(Debug, Args)]
pub struct LatencyCdfArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Dirty levels to sample (list or range).
    #[arg(long = "d")]
    pub d_values: Option<String>,
    /// Replacement set length.
    #[arg(long)]
    pub l: Option<usize>,
    #[arg(long)]
    pub target_set: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ChannelOptions {
    /// binary or multibit.
    #[arg(long)]
    pub encoding: Option<String>,
    /// Dirty lines for a binary 1.
    #[arg(long)]
    pub d: Option<usize>,
    /// Multi-bit levels, e.g. `0,3,5,8`.
    #[arg(long)]
    pub levels: Option<String>,
    /// Replacement set length.
    #[arg(long)]
    pub l: Option<usize>,
    #[arg(long)]
    pub target_set: Option<usize>,
    /// Message bits; random when absent.
    #[arg(long)]
    pub message: Option<String>,
    /// Length of the random message.
    #[arg(long)]
    pub message_len: Option<usize>,
    /// Expected noise accesses per period.
    #[arg(long)]
    pub noise_rate: Option<f64>,
    /// Probability that a noise access is a store.
    #[arg(long)]
    pub noise_write_fraction: Option<f64>,
    /// Maximum wake-up delay added to sender and receiver.
    #[arg(long)]
    pub slip: Option<u64>,
    /// Core clock in Hz.
    #[arg(long)]
    pub freq: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ChannelArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub channel: ChannelOptions,
    /// Sender and receiver period in cycles.
    #[arg(long)]
    pub period: Option<u64>,
    /// Trace CSV path; derived from `--out` when absent.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub channel: ChannelOptions,
    /// Periods in cycles (list or range).
    #[arg(long)]
    pub periods: Option<String>,
}

#[derive(Debug, Args)]
pub struct GadgetArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// listing-a or listing-b; all when absent.
    #[arg(long)]
    pub variant: Option<String>,
    /// set-state-dirty, prime-with-dirty or victim-timing; all when absent.
    #[arg(long)]
    pub scenario: Option<String>,
    /// same-line, same-set or distinct-sets; all valid ones when absent.
    #[arg(long)]
    pub placement: Option<String>,
    /// 0 or 1; both when absent.
    #[arg(long)]
    pub secret: Option<u8>,
}

/// Entry point used by the binary.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("dirtysim: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::EvictProb(a) => {
            let mut s = settings(&a.common)?;
            s.overlay("n", a.n)?;
            emit(&s, &evict_prob(&s)?)
        }
        Command::DirtyEvict(a) => {
            let mut s = settings(&a.common)?;
            s.overlay("d", a.d)?;
            s.overlay("l", a.l)?;
            emit(&s, &dirty_evict(&s)?)
        }
        Command::LatencyCdf(a) => {
            let mut s = settings(&a.common)?;
            s.overlay("d_values", a.d_values)?;
            s.overlay("l", a.l)?;
            s.overlay("target_set", a.target_set)?;
            emit(&s, &latency_cdf_csv(&s)?)
        }
        Command::RunChannel(a) => {
            let mut s = settings(&a.common)?;
            overlay_channel(&mut s, a.channel)?;
            s.overlay("period", a.period)?;
            s.overlay("trace", a.trace.map(|p| p.display().to_string()))?;
            let (json, trace) = run_channel_cmd(&s)?;
            emit(&s, &json)?;
            if let Some(path) = trace_path(&s) {
                std::fs::write(path, trace)?;
            }
            Ok(())
        }
        Command::Sweep(a) => {
            let mut s = settings(&a.common)?;
            overlay_channel(&mut s, a.channel)?;
            s.overlay("periods", a.periods)?;
            emit(&s, &sweep(&s)?)
        }
        Command::Gadget(a) => {
            let mut s = settings(&a.common)?;
            s.overlay("variant", a.variant)?;
            s.overlay("scenario", a.scenario)?;
            s.overlay("placement", a.placement)?;
            s.overlay("secret", a.secret)?;
            emit(&s, &gadget(&s)?)
        }
    }
}

fn settings(common: &CommonArgs) -> Result<Settings, CliError> {
    let mut s = match &common.config {
        Some(path) => Settings::load(path)?,
        None => Settings::new(),
    };
    s.overlay("seed", common.seed)?;
    s.overlay("trials", common.trials)?;
    s.overlay("out", common.out.as_ref().map(|p| p.display().to_string()))?;
    s.overlay("policy", common.policy.as_ref())?;
    s.overlay("defense", common.defense.as_ref())?;
    s.overlay("jitter", common.jitter)?;
    for kv in &common.extra {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        s.insert(k, v.trim().to_string())?;
    }
    if !s.contains("seed") {
        if let Ok(v) = std::env::var(SEED_ENV) {
            s.insert("seed", v)?;
        }
    }
    Ok(s)
}

fn overlay_channel(s: &mut Settings, c: ChannelOptions) -> Result<(), CliError> {
    s.overlay("encoding", c.encoding)?;
    s.overlay("d", c.d)?;
    s.overlay("levels", c.levels)?;
    s.overlay("l", c.l)?;
    s.overlay("target_set", c.target_set)?;
    s.overlay("message", c.message)?;
    s.overlay("message_len", c.message_len)?;
    s.overlay("noise_rate", c.noise_rate)?;
    s.overlay("noise_write_fraction", c.noise_write_fraction)?;
    s.overlay("slip", c.slip)?;
    s.overlay("freq", c.freq)?;
    Ok(())
}

fn seed(s: &Settings) -> Result<u64, CliError> {
    s.get::<u64>("seed")?.ok_or_else(|| {
        CliError::Config(format!("a seed is required: pass --seed or set {SEED_ENV}"))
    })
}

fn policy(s: &Settings, default: &str, seed: u64) -> Result<PolicyKind, CliError> {
    let p: PolicyKind = s
        .raw("policy")
        .unwrap_or(default)
        .parse()
        .map_err(CliError::Config)?;
    Ok(match p {
        PolicyKind::Random { .. } => PolicyKind::Random { seed },
        other => other,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Defense {
    None,
    WriteThrough,
    Partition,
}

fn defense(s: &Settings) -> Result<Defense, CliError> {
    match s.raw("defense").unwrap_or("none") {
        "none" => Ok(Defense::None),
        "write-through" => Ok(Defense::WriteThrough),
        "partition" => Ok(Defense::Partition),
        other => Err(CliError::Config(format!(
            "unknown defense `{other}` (expected none, write-through or partition)"
        ))),
    }
}

fn reject_cache_settings(s: &Settings, command: &str) -> Result<(), CliError> {
    if defense(s)? != Defense::None {
        return Err(CliError::Config(format!("{command} does not take a defense")));
    }
    Ok(())
}

/// Cache configuration from the settings. `actors` share the ways evenly
/// under the partition defense.
fn cache_config(s: &Settings, seed: u64, actors: &[ActorId]) -> Result<CacheConfig, CliError> {
    let g0 = CacheGeometry::default();
    let l0 = LatencyModel::default();
    let mut geometry = CacheGeometry {
        num_sets: s.get_or("sets", g0.num_sets)?,
        ways: s.get_or("ways", g0.ways)?,
        line_size: s.get_or("line_size", g0.line_size)?,
        ..g0
    };
    match defense(s)? {
        Defense::None => {}
        Defense::WriteThrough => geometry.write_policy = WritePolicy::WriteThroughNoAllocate,
        Defense::Partition => geometry = geometry.with_even_partition(actors),
    }
    let latency = LatencyModel {
        l1_hit: s.get_or("hit_latency", l0.l1_hit)?,
        clean_replace: s.get_or("clean_latency", l0.clean_replace)?,
        dirty_replace: s.get_or("dirty_latency", l0.dirty_replace)?,
        uncached_store: s.get_or("uncached_latency", l0.uncached_store)?,
        jitter: s.get_or("jitter", l0.jitter)?,
        timer_overhead: s.get_or("timer_overhead", l0.timer_overhead)?,
    };
    let cfg = CacheConfig {
        geometry,
        policy: policy(s, "lru", seed)?,
        latency,
    };
    cfg.geometry
        .validate()
        .map_err(|e| CliError::Config(e.to_string()))?;
    Ok(cfg)
}

fn emit(s: &Settings, bytes: &[u8]) -> Result<(), CliError> {
    match s.raw("out") {
        Some(path) => std::fs::write(path, bytes)?,
        None => io::stdout().lock().write_all(bytes)?,
    }
    Ok(())
}

fn trace_path(s: &Settings) -> Option<PathBuf> {
    if let Some(p) = s.raw("trace") {
        return Some(PathBuf::from(p));
    }
    let out = Path::new(s.raw("out")?);
    let stem = out.file_stem()?.to_string_lossy().into_owned();
    Some(out.with_file_name(format!("{stem}.trace.csv")))
}

pub fn evict_prob(s: &Settings) -> Result<Vec<u8>, CliError> {
    reject_cache_settings(s, "evict-prob")?;
    let seed = seed(s)?;
    let policy = policy(s, "lru", seed)?;
    let trials = s.get_or("trials", 10_000usize)?;
    let ns: Vec<usize> = s.list_or("n", "8")?;
    let mut out = b"policy,N,trials,fraction\n".to_vec();
    for n in ns {
        let r = eviction_distance_experiment(policy, n, trials, seed)?;
        writeln!(out, "{},{},{},{:.4}", policy.name(), n, r.trials, r.evicted_fraction)?;
    }
    Ok(out)
}

pub fn dirty_evict(s: &Settings) -> Result<Vec<u8>, CliError> {
    reject_cache_settings(s, "dirty-evict")?;
    if let Some(p) = s.raw("policy") {
        if p != "random" {
            return Err(CliError::Config("dirty-evict always uses random replacement".into()));
        }
    }
    let seed = seed(s)?;
    let trials = s.get_or("trials", 10_000usize)?;
    let ds: Vec<usize> = s.list_or("d", "2,3")?;
    let ls: Vec<usize> = s.list_or("l", "8..13")?;
    let ways = CacheGeometry::default().ways;
    let mut out = b"d,L,trials,mc_fraction,analytic_p\n".to_vec();
    for &d in &ds {
        for &l in &ls {
            let r = dirty_eviction_experiment(d, l, trials, seed)?;
            let p = analytic_dirty_eviction_probability(ways, d, l as u32);
            writeln!(out, "{},{},{},{:.4},{:.4}", d, l, r.trials, r.evicted_fraction, p)?;
        }
    }
    Ok(out)
}

pub fn latency_cdf_csv(s: &Settings) -> Result<Vec<u8>, CliError> {
    let seed = seed(s)?;
    let cache = cache_config(s, seed, &[ActorId::SENDER, ActorId::RECEIVER])?;
    let setup = CdfSetup {
        d_values: s.list_or("d_values", &format!("0..{}", cache.geometry.ways))?,
        cache,
        target_set: s.get_or("target_set", 0)?,
        replacement_len: s.get_or("l", DEFAULT_REPLACEMENT_LEN)?,
        trials: s.get_or("trials", 1000)?,
        seed,
    };
    let cdf = latency_cdf(&setup)?;
    let mut out = Vec::new();
    cdf.write_csv(&mut out)?;
    Ok(out)
}

/// Channel template shared by `run-channel` and `sweep`.
fn channel_config(s: &Settings) -> Result<ChannelConfig, CliError> {
    let seed = seed(s)?;
    let noise = NoiseConfig {
        rate: s.get_or("noise_rate", 0.0)?,
        write_fraction: s.get_or("noise_write_fraction", 0.0)?,
        max_per_period: s.get_or("noise_max", 1)?,
        target: s.get("noise_set")?,
    };
    let mut actors = vec![ActorId::SENDER];
    if noise.is_active() {
        actors.push(ActorId::NOISE);
    }
    actors.push(ActorId::RECEIVER);
    let cache = cache_config(s, seed, &actors)?;

    let encoding = match s.raw("encoding").unwrap_or("binary") {
        "binary" => Encoding::Binary {
            d_one: s.get_or("d", 1)?,
        },
        "multibit" | "multi-bit" => Encoding::MultiBit {
            levels: s.list_or("levels", "0,3,5,8")?,
        },
        other => {
            return Err(CliError::Config(format!(
                "unknown encoding `{other}` (expected binary or multibit)"
            )))
        }
    };
    let k = encoding.bits_per_symbol();
    let period = s.get_or("period", 5500u64)?;
    let mut cfg = ChannelConfig {
        cache,
        target_set: s.get_or("target_set", 0)?,
        encoding,
        replacement_len: s.get_or("l", DEFAULT_REPLACEMENT_LEN)?,
        noise,
        slip: s.get_or("slip", 0)?,
        frequency_hz: s.get_or("freq", DEFAULT_FREQ_HZ)?,
        seed,
        ..ChannelConfig::default()
    }
    .with_period(period);
    if let Some(phase) = s.get("phase")? {
        cfg.phase_offset = phase;
    }
    cfg = match s.raw("message") {
        Some(bits) => ChannelConfig {
            message: bits.parse::<BitString>().map_err(|e| CliError::Config(e.to_string()))?,
            ..cfg
        },
        None => {
            let len = s.get_or("message_len", 128 * k)?;
            cfg.with_random_message(len)
        }
    };
    cfg.validate()?;
    Ok(cfg)
}

/// Returns the JSON report and the trace CSV.
pub fn run_channel_cmd(s: &Settings) -> Result<(Vec<u8>, Vec<u8>), CliError> {
    let cfg = channel_config(s)?;
    let trials = s.get_or("calibration_trials", 64usize)?;
    let thresholds = calibrate_thresholds(&cfg, trials, cfg.seed)?;
    let report = run_channel(&cfg, &thresholds)?;
    let mut json = serde_json::to_vec_pretty(&report).map_err(io::Error::from)?;
    json.push(b'\n');
    let mut trace = Vec::new();
    report.write_trace_csv(&mut trace)?;
    Ok((json, trace))
}

pub fn sweep(s: &Settings) -> Result<Vec<u8>, CliError> {
    let cfg = channel_config(s)?;
    let default_periods = DEFAULT_PERIODS
        .iter()
        .map(u64::to_string)
        .collect::<Vec<_>>()
        .join(",");
    let periods: Vec<u64> = s.list_or("periods", &default_periods)?;
    let trials = s.get_or("trials", 10usize)?;
    let table = sweep_ber_vs_rate(&cfg, &periods, trials)?;
    if table.calibration_overlap {
        eprintln!("dirtysim: warning: encoding levels overlap during calibration");
    }
    let mut out = Vec::new();
    table.write_csv(&mut out)?;
    Ok(out)
}

fn parse_opt<T: std::str::FromStr<Err = String>>(s: &Settings, key: &str) -> Result<Option<T>, CliError> {
    s.raw(key)
        .map(|v| v.parse::<T>().map_err(|e| CliError::Config(format!("{key}: {e}"))))
        .transpose()
}

pub fn gadget(s: &Settings) -> Result<Vec<u8>, CliError> {
    let seed = seed(s)?;
    let cache = cache_config(s, seed, &[ActorId::ATTACKER, ActorId::VICTIM])?;
    let variant: Option<GadgetVariant> = parse_opt(s, "variant")?;
    let scenario: Option<GadgetScenario> = parse_opt(s, "scenario")?;
    let placement: Option<LinePlacement> = parse_opt(s, "placement")?;
    let secret: Option<u8> = s.get("secret")?;

    let mut reports: Vec<GadgetReport> = Vec::new();
    if let (Some(variant), Some(scenario), Some(placement), Some(secret)) =
        (variant, scenario, placement, secret)
    {
        let cfg = GadgetConfig {
            cache,
            variant,
            scenario,
            placement,
            secret,
            seed,
        };
        let report = run_gadget_attack(&cfg)?;
        let mut json = serde_json::to_vec_pretty(&report).map_err(io::Error::from)?;
        json.push(b'\n');
        return Ok(json);
    }

    for (v, sc, p) in GadgetConfig::valid_combinations() {
        if variant.is_some_and(|x| x != v)
            || scenario.is_some_and(|x| x != sc)
            || placement.is_some_and(|x| x != p)
        {
            continue;
        }
        for sec in [0u8, 1] {
            if secret.is_some_and(|x| x != sec) {
                continue;
            }
            let cfg = GadgetConfig {
                cache: cache.clone(),
                variant: v,
                scenario: sc,
                placement: p,
                secret: sec,
                seed,
            };
            reports.push(run_gadget_attack(&cfg)?);
        }
    }
    if reports.is_empty() {
        // Surface the reason the requested combination is invalid.
        let probe = GadgetConfig {
            cache,
            variant: variant.unwrap_or(GadgetVariant::ListingA),
            scenario: scenario.unwrap_or(GadgetScenario::SetStateDirty),
            placement: placement.unwrap_or(LinePlacement::SameLine),
            secret: secret.unwrap_or(0),
            seed,
        };
        probe.validate()?;
        return Err(CliError::Config("no valid gadget combination matches".into()));
    }
    let mut json = serde_json::to_vec_pretty(&reports).map_err(io::Error::from)?;
    json.push(b'\n');
    Ok(json)
}
