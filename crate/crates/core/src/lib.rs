//! Trace-driven simulation of L1 data caches built from relaxed-retention
//! STT-RAM.
//!
//! The crate models a set-associative write-back cache whose blocks expire
//! once their retention time has elapsed since the last write, the perfect
//! dynamic-refresh baseline, an SRAM baseline, and LARS: several STT-RAM units
//! with different retention times of which one is active at a time, picked at
//! run time by a tuner. Event counts are turned into cache energy, latency and
//! energy-delay product.

pub mod cache;
pub mod config;
pub mod demo;
pub mod energy;
pub mod report;
pub mod schemes;
pub mod stats;
pub mod trace;
pub mod tuner;
pub mod workload;

pub use cache::{AccessKind, AccessOutcome, CacheState, ExpirationEvent, Retention};
pub use config::{
    load_config, CacheGeometry, Config, EnergyParams, RetentionSet, SchemeConfig, SchemeKind,
    SimClock,
};
pub use energy::{compute_energy, migration_cost, EnergyBreakdown};
pub use schemes::{run_scheme, run_scheme_stream, RunResult, SimError};
pub use stats::SimStats;
pub use trace::{Op, TraceRecord};
pub use tuner::{Algorithm, AppId, Objective, TunerConfig, TunerState};
pub use workload::{Dist, WorkloadSpec};
