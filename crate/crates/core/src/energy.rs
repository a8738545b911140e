//! Cache energy, latency and energy-delay product from event counts.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{EnergyParams, SchemeConfig, SimClock};
use crate::stats::SimStats;

/// mW x s -> nJ
const MW_S_TO_NJ: f64 = 1e6;

#[derive(Debug, Error, PartialEq)]
pub enum EnergyError {
    #[error("scheme {scheme} does not refresh, but the statistics contain {refreshes} refreshes")]
    SchemeMismatch { scheme: String, refreshes: u64 },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub dynamic_nj: f64,
    pub static_nj: f64,
    pub refresh_nj: f64,
    pub migration_nj: f64,
    pub total_nj: f64,
    pub latency_cycles: u64,
    pub latency_s: f64,
    pub edp_nj_s: f64,
}

impl EnergyBreakdown {
    fn finish(mut self, clock: &SimClock) -> Self {
        self.total_nj = self.dynamic_nj + self.static_nj + self.refresh_nj + self.migration_nj;
        self.latency_s = clock.cycles_to_seconds(self.latency_cycles);
        self.edp_nj_s = self.total_nj * self.latency_s;
        self
    }

    /// Sum of several windows' breakdowns; EDP is recomputed from the summed totals.
    pub fn combine<'a>(
        parts: impl IntoIterator<Item = &'a EnergyBreakdown>,
        clock: &SimClock,
    ) -> Self {
        let mut acc = EnergyBreakdown::default();
        for p in parts {
            acc.dynamic_nj += p.dynamic_nj;
            acc.static_nj += p.static_nj;
            acc.refresh_nj += p.refresh_nj;
            acc.migration_nj += p.migration_nj;
            acc.latency_cycles += p.latency_cycles;
        }
        acc.finish(clock)
    }
}

/// Energy of one refresh: array read, buffer write, buffer read, array write.
pub fn refresh_energy_nj(unit: &EnergyParams, buffer: &EnergyParams) -> f64 {
    unit.read_energy_nj + buffer.write_energy_nj + buffer.read_energy_nj + unit.write_energy_nj
}

/// Energy breakdown for `stats` collected on `unit`, with only that unit leaking.
pub fn compute_energy(
    stats: &SimStats,
    unit: &EnergyParams,
    scheme: &SchemeConfig,
    clock: &SimClock,
) -> Result<EnergyBreakdown, EnergyError> {
    compute_energy_with_leakage(stats, unit, scheme, clock, unit.leakage_mw)
}

/// As [`compute_energy`], with an explicit array leakage (e.g. all units powered).
pub fn compute_energy_with_leakage(
    stats: &SimStats,
    unit: &EnergyParams,
    scheme: &SchemeConfig,
    clock: &SimClock,
    array_leakage_mw: f64,
) -> Result<EnergyBreakdown, EnergyError> {
    let refreshing = scheme.scheme.uses_refresh_buffer();
    if stats.refreshes > 0 && !refreshing {
        return Err(EnergyError::SchemeMismatch {
            scheme: scheme.scheme.to_string(),
            refreshes: stats.refreshes,
        });
    }
    let dynamic_nj = stats.reads as f64 * unit.read_energy_nj
        + stats.writes as f64 * unit.write_energy_nj
        + stats.misses() as f64 * unit.write_energy_nj * scheme.fill_weight
        + stats.writebacks as f64 * unit.read_energy_nj * scheme.writeback_weight;
    let latency_cycles = stats.total_cycles + stats.migration_cycles;
    let latency_s = clock.cycles_to_seconds(latency_cycles);
    let leakage_mw = array_leakage_mw
        + if refreshing {
            scheme.buffer_leakage_mw
        } else {
            0.0
        };
    let b = EnergyBreakdown {
        dynamic_nj,
        static_nj: leakage_mw * latency_s * MW_S_TO_NJ,
        refresh_nj: stats.refreshes as f64 * refresh_energy_nj(unit, &scheme.buffer_energy),
        migration_nj: stats.migration_nj,
        latency_cycles,
        ..Default::default()
    };
    Ok(b.finish(clock))
}

/// Cost of copying `valid_blocks` lines from one unit into another.
pub fn migration_cost(valid_blocks: u64, src: &EnergyParams, dst: &EnergyParams) -> (u64, f64) {
    let cycles = valid_blocks * (src.hit_latency_cycles + dst.write_latency_cycles);
    let energy = valid_blocks as f64 * (src.read_energy_nj + dst.write_energy_nj);
    (cycles, energy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{RetentionSet, SchemeKind};

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-9
    }

    #[test]
    fn hundred_read_hits_on_the_fastest_unit() {
        let units = RetentionSet::table_default();
        let stats = SimStats {
            reads: 100,
            read_hits: 100,
            total_cycles: 200,
            ..Default::default()
        };
        let e = compute_energy(
            &stats,
            units.params(3),
            &SchemeConfig::new(SchemeKind::Lars),
            &SimClock::default(),
        )
        .unwrap();
        assert!(close(e.dynamic_nj, 1.2));
        assert!(close(e.latency_s, 100e-9));
        assert!(close(e.static_nj, 0.1753));
        assert!(close(e.total_nj, 1.3753));
        assert!((e.edp_nj_s - 1.3753 * 100e-9).abs() < 1e-20);
    }

    #[test]
    fn zero_stats_zero_energy() {
        let e = compute_energy(
            &SimStats::default(),
            &EnergyParams::SRAM,
            &SchemeConfig::new(SchemeKind::DrsPerfect),
            &SimClock::default(),
        )
        .unwrap();
        assert_eq!(e, EnergyBreakdown::default());
    }

    #[test]
    fn refresh_is_four_step_sum() {
        let units = RetentionSet::table_default();
        assert!(close(
            refresh_energy_nj(units.params(1), &EnergyParams::SRAM),
            0.153
        ));
    }

    #[test]
    fn refreshes_on_a_non_refreshing_scheme_are_rejected() {
        let stats = SimStats {
            refreshes: 1,
            ..Default::default()
        };
        let r = compute_energy(
            &stats,
            &EnergyParams::SRAM,
            &SchemeConfig::new(SchemeKind::Sram),
            &SimClock::default(),
        );
        assert!(matches!(r, Err(EnergyError::SchemeMismatch { .. })));
    }

    #[test]
    fn migration_costs() {
        let units = RetentionSet::table_default();
        let (c, e) = migration_cost(512, units.params(0), units.params(0));
        assert_eq!(c, 4608);
        assert!(close(e, 57.344));
        let (c, e) = migration_cost(512, units.params(0), units.params(3));
        assert_eq!(c, 2560);
        assert!(close(e, 26.112));
        assert_eq!(
            migration_cost(0, units.params(1), units.params(2)),
            (0, 0.0)
        );
    }
}
