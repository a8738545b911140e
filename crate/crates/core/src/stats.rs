use std::ops::AddAssign;

use serde::{Deserialize, Serialize};

use crate::cache::{AccessKind, AccessOutcome};
use crate::config::EnergyParams;

/// Event counters of one simulation run or window.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SimStats {
    pub reads: u64,
    pub writes: u64,
    pub read_hits: u64,
    pub write_hits: u64,
    pub read_misses: u64,
    pub write_misses: u64,
    /// Misses on a block that had been invalidated by retention expiry.
    pub expiration_misses: u64,
    /// Dirty evictions, dirty expirations and dirty lines flushed by a cold switch.
    pub writebacks: u64,
    pub refreshes: u64,
    pub migrations_in_blocks: u64,
    /// Cache access cycles, excluding unit-switch cost.
    pub total_cycles: u64,
    /// Span of simulated time covered.
    pub sim_time_s: f64,
    /// Cycles spent migrating between units.
    pub migration_cycles: u64,
    pub migration_nj: f64,
}

impl SimStats {
    pub fn accesses(&self) -> u64 {
        self.reads + self.writes
    }

    pub fn misses(&self) -> u64 {
        self.read_misses + self.write_misses
    }

    pub fn hits(&self) -> u64 {
        self.read_hits + self.write_hits
    }

    pub fn miss_rate(&self) -> f64 {
        match self.accesses() {
            0 => 0.0,
            n => self.misses() as f64 / n as f64,
        }
    }

    /// Count one access and its cycle cost on `unit`.
    pub fn record(&mut self, outcome: &AccessOutcome, unit: &EnergyParams, miss_penalty: u64) {
        match outcome.kind {
            AccessKind::ReadHit => {
                self.reads += 1;
                self.read_hits += 1;
                self.total_cycles += unit.hit_latency_cycles;
            }
            AccessKind::WriteHit => {
                self.writes += 1;
                self.write_hits += 1;
                self.total_cycles += unit.write_latency_cycles;
            }
            AccessKind::ReadMiss | AccessKind::WriteMiss => {
                if outcome.kind == AccessKind::ReadMiss {
                    self.reads += 1;
                    self.read_misses += 1;
                } else {
                    self.writes += 1;
                    self.write_misses += 1;
                }
                self.total_cycles += miss_penalty + unit.write_latency_cycles;
            }
        }
        if outcome.caused_writeback {
            self.writebacks += 1;
        }
        if outcome.expired_before_access {
            self.expiration_misses += 1;
        }
    }

    /// Copy with unit-switch costs removed.
    pub fn without_switching(&self) -> SimStats {
        SimStats {
            migration_cycles: 0,
            migration_nj: 0.0,
            ..*self
        }
    }

    /// Every count multiplied by `k`.
    pub fn scaled(&self, k: u64) -> SimStats {
        SimStats {
            reads: self.reads * k,
            writes: self.writes * k,
            read_hits: self.read_hits * k,
            write_hits: self.write_hits * k,
            read_misses: self.read_misses * k,
            write_misses: self.write_misses * k,
            expiration_misses: self.expiration_misses * k,
            writebacks: self.writebacks * k,
            refreshes: self.refreshes * k,
            migrations_in_blocks: self.migrations_in_blocks * k,
            total_cycles: self.total_cycles * k,
            sim_time_s: self.sim_time_s * k as f64,
            migration_cycles: self.migration_cycles * k,
            migration_nj: self.migration_nj * k as f64,
        }
    }

    pub fn is_consistent(&self) -> bool {
        self.reads == self.read_hits + self.read_misses
            && self.writes == self.write_hits + self.write_misses
            && self.expiration_misses <= self.misses()
    }
}

impl AddAssign<&SimStats> for SimStats {
    fn add_assign(&mut self, o: &SimStats) {
        self.reads += o.reads;
        self.writes += o.writes;
        self.read_hits += o.read_hits;
        self.write_hits += o.write_hits;
        self.read_misses += o.read_misses;
        self.write_misses += o.write_misses;
        self.expiration_misses += o.expiration_misses;
        self.writebacks += o.writebacks;
        self.refreshes += o.refreshes;
        self.migrations_in_blocks += o.migrations_in_blocks;
        self.total_cycles += o.total_cycles;
        self.sim_time_s += o.sim_time_s;
        self.migration_cycles += o.migration_cycles;
        self.migration_nj += o.migration_nj;
    }
}
