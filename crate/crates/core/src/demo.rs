//! Bundled demo workloads.
//!
//! Each demo interleaves a few synthetic populations over a fixed instruction
//! budget. Populations live in disjoint 4 GiB address regions so their lines
//! never alias, and each has its own block lifetimes and write mix.

use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::trace::TraceRecord;
use crate::workload::{Dist, TraceGenerator, WorkloadError, WorkloadSpec};

const REGION_BYTES: u64 = 1 << 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoWorkload {
    pub name: String,
    pub description: String,
    pub parts: Vec<WorkloadSpec>,
    /// Records with an instruction count at or past this are dropped.
    pub instructions: u64,
    /// Tuning window length for this demo, in instructions.
    pub tuning_interval: u64,
}

impl DemoWorkload {
    pub fn records(&self) -> Result<Vec<TraceRecord>, WorkloadError> {
        let mut all = Vec::new();
        for (i, spec) in self.parts.iter().enumerate() {
            let base = i as u64 * REGION_BYTES;
            let mut spec = spec.clone();
            spec.length = usize::MAX;
            all.extend(
                TraceGenerator::new(spec)?
                    .take_while(|r| r.icount < self.instructions)
                    .map(|r| TraceRecord {
                        address: r.address + base,
                        ..r
                    }),
            );
        }
        // Stable, so simultaneous records keep population order.
        all.sort_by_key(|r| r.icount);
        Ok(all)
    }

    /// Same populations with seeds derived from `seed`.
    pub fn reseeded(mut self, seed: u64) -> Self {
        for (i, p) in self.parts.iter_mut().enumerate() {
            p.seed = seed.wrapping_add(i as u64);
        }
        self
    }

    /// The bundled configuration with this demo's tuning interval.
    pub fn config(&self) -> Config {
        let mut cfg = Config::bundled();
        cfg.tuner.tuning_interval_instructions = self.tuning_interval;
        cfg
    }
}

fn part(
    num_blocks: usize,
    lines: u64,
    write_fraction: f64,
    gap: Dist,
    lifetime: Dist,
    seed: u64,
) -> WorkloadSpec {
    WorkloadSpec {
        num_blocks,
        working_set_bytes: lines * 64,
        line_size_bytes: 64,
        write_fraction,
        inter_access_gap: gap,
        reuse_lifetime: lifetime,
        frequency_hz: 2e9,
        seed,
        length: usize::MAX,
    }
}

/// Mostly short-lived, write-heavy blocks plus a handful of long-lived
/// read-mostly ones that a 10 ms refresh scheme has to keep refreshing.
pub fn short_lived() -> DemoWorkload {
    DemoWorkload {
        name: "short-lived".into(),
        description: "short-lived write-heavy blocks with a few long-lived read-mostly lines"
            .into(),
        parts: vec![
            part(
                16,
                4096,
                0.4,
                Dist::Exponential { mean: 4000.0 },
                Dist::Uniform {
                    low: 5e-6,
                    high: 80e-6,
                },
                11,
            ),
            part(
                8,
                64,
                0.002,
                Dist::Exponential { mean: 200_000.0 },
                Dist::Fixed { value: 60e-3 },
                12,
            ),
        ],
        instructions: 200_000_000,
        tuning_interval: 4_000_000,
    }
}

/// A tiny hot set with a very low miss rate: a few heavily written lines and
/// a few read-only lines that expire under short retentions.
pub fn low_miss_rate() -> DemoWorkload {
    DemoWorkload {
        name: "low-miss-rate".into(),
        description: "small hot set, heavily written lines plus read-only lines".into(),
        parts: vec![
            part(
                4,
                4,
                0.5,
                Dist::Exponential { mean: 400.0 },
                Dist::Fixed { value: 10.0 },
                21,
            ),
            part(
                8,
                8,
                0.0,
                Dist::Exponential { mean: 4000.0 },
                Dist::Fixed { value: 10.0 },
                22,
            ),
        ],
        instructions: 60_000_000,
        tuning_interval: 4_000_000,
    }
}

/// The short-lived mix run long enough that tuning costs are amortized.
pub fn long_running() -> DemoWorkload {
    let mut w = short_lived();
    w.name = "long-running".into();
    w.description = "short-lived mix over a long run".into();
    w.instructions = 400_000_000;
    w
}

pub const NAMES: [&str; 3] = ["short-lived", "low-miss-rate", "long-running"];

pub fn all() -> Vec<DemoWorkload> {
    vec![short_lived(), low_miss_rate(), long_running()]
}

pub fn by_name(name: &str) -> Option<DemoWorkload> {
    all().into_iter().find(|w| w.name == name)
}
