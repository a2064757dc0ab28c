//! Simulator for covert and side channels built on the dirty state of
//! write-back cache lines.
//!
//! * [`cache`]: set-associative L1 with dirty bits, write policies and way
//!   partitioning.
//! * [`policy`]: replacement policies and the eviction experiments run on them.
//! * [`measurement`]: replacement sets and serialized latency measurement.
//! * [`channel`]: sender, receiver, the timed protocol, noise and gadgets.
//! * [`analysis`]: edit distance, preamble alignment, BER and rate sweeps.
//! * [`cli`]: the `dirtysim` command line front end.

pub mod analysis;
pub mod cache;
pub mod channel;
pub mod cli;
pub mod measurement;
pub mod policy;

pub use cache::{ActorId, Cache, CacheConfig, CacheError, CacheGeometry, LatencyModel, LineRef, WritePolicy};
pub use policy::PolicyKind;
