//! The cache schemes, driven over a trace.
//!
//! * `Sram` - no expiry, SRAM device row.
//! * `SttFixed` - one STT-RAM unit with expiry.
//! * `DrsPerfect` - one STT-RAM unit kept alive by ideal refreshes: hit/miss
//!   behaviour of a non-expiring cache, refresh count from the residency log.
//! * `Lars` - one active unit out of several, chosen by the tuner.
//! * `LarsDrsSynergy` - perfect refresh on the unit LARS-Optimal picks.

mod lars;
pub mod refresh;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cache::{CacheError, CacheState, Retention};
use crate::config::{Config, ConfigError, LeakageScope, SchemeKind};
use crate::energy::{compute_energy_with_leakage, EnergyBreakdown, EnergyError};
use crate::stats::SimStats;
use crate::trace::{Op, TraceError, TraceRecord};
use crate::tuner::{AppId, SwitchCost, TunerError, TunerState, TuningOutcome};

pub use lars::{run_lars, run_synergy};
pub use refresh::{count_perfect_refreshes, ResidencyLog, ResidencyTracker};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Cache(#[from] CacheError),
    #[error(transparent)]
    Energy(#[from] EnergyError),
    #[error(transparent)]
    Log(#[from] refresh::LogError),
    #[error("tuning failed: {0}")]
    Tuner(Box<TunerError>),
    #[error("scheme {0} cannot be run this way")]
    SchemeMismatch(SchemeKind),
}

impl From<TunerError> for SimError {
    fn from(e: TunerError) -> Self {
        SimError::Tuner(Box::new(e))
    }
}

/// LARS-specific details of a run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LarsDetails {
    pub app: Option<String>,
    pub history_hit: bool,
    pub tuning_rounds: Vec<TuningOutcome>,
    /// Windows spent sampling candidate units.
    pub windows_sampled: usize,
    pub retunes: usize,
    /// Set when the trace ended before a search finished.
    pub tuning_incomplete: bool,
    pub switches: Vec<SwitchCost>,
    pub final_unit: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub scheme: SchemeKind,
    /// Unit the run ended on (`None` for SRAM).
    pub retention_index: Option<usize>,
    pub retention_s: Option<f64>,
    pub stats: SimStats,
    pub energy: EnergyBreakdown,
    pub energy_excluding_switches: EnergyBreakdown,
    /// Statistics collected on each array, indexed like the retention set
    /// (SRAM runs have a single entry).
    pub per_unit: Vec<SimStats>,
    pub lars: Option<LarsDetails>,
}

/// A cache plus the counters of the array it currently runs on.
pub(crate) struct Runner<'c> {
    pub cfg: &'c Config,
    pub cache: CacheState,
    /// Active STT-RAM unit, `None` for SRAM.
    pub unit: Option<usize>,
    pub per_unit: Vec<SimStats>,
    pub residency: Option<ResidencyTracker>,
    pub last_time: f64,
}

impl<'c> Runner<'c> {
    pub fn new(cfg: &'c Config, unit: Option<usize>, expire: bool, track_residency: bool) -> Self {
        let retention = match unit {
            Some(u) if expire => Retention::finite(
                cfg.units.retention(u),
                cfg.clock.monitor_divisor,
                cfg.scheme.expiration,
            ),
            _ => Retention::INFINITE,
        };
        let slots = if unit.is_some() { cfg.units.len() } else { 1 };
        Self {
            cfg,
            cache: CacheState::new(cfg.cache, retention),
            unit,
            per_unit: vec![SimStats::default(); slots],
            residency: track_residency.then(ResidencyTracker::default),
            last_time: 0.0,
        }
    }

    fn slot(&self) -> usize {
        self.unit.unwrap_or(0)
    }

    pub fn stats_mut(&mut self) -> &mut SimStats {
        let s = self.slot();
        &mut self.per_unit[s]
    }

    pub fn step(&mut self, rec: &TraceRecord) -> Result<SimStats, SimError> {
        let now = rec.time_s(self.cfg.clock.frequency_hz);
        let mut delta = SimStats::default();
        for ev in self.cache.advance_time(now)? {
            if ev.writeback {
                delta.writebacks += 1;
            }
            if let Some(t) = self.residency.as_mut() {
                t.evict(ev.block, ev.expiry_time);
            }
        }
        let outcome = self.cache.access_at_current_time(rec.op, rec.address)?;
        let params = *self.cfg.unit_params(self.unit);
        delta.record(&outcome, &params, self.cfg.scheme.miss_penalty_cycles);
        delta.sim_time_s = now - self.last_time;
        self.last_time = now;

        if let Some(t) = self.residency.as_mut() {
            let block = self.cfg.cache.block_address(rec.address);
            if outcome.kind.is_hit() {
                t.hit(block, now, rec.op == Op::Write);
            } else {
                if let Some(v) = outcome.victim {
                    t.evict(v, now);
                }
                t.fill(block, now);
            }
        }
        *self.stats_mut() += &delta;
        Ok(delta)
    }

    /// Leakage charged while a unit is active.
    pub fn array_leakage_mw(&self, unit: Option<usize>) -> f64 {
        let multi_unit = matches!(
            self.cfg.scheme.scheme,
            SchemeKind::Lars | SchemeKind::LarsDrsSynergy
        );
        match unit {
            Some(_) if multi_unit && self.cfg.scheme.leakage_scope == LeakageScope::AllUnits => {
                self.cfg
                    .units
                    .units()
                    .iter()
                    .map(|u| u.params.leakage_mw)
                    .sum()
            }
            u => self.cfg.unit_params(u).leakage_mw,
        }
    }

    pub fn energy_of(
        &self,
        stats: &SimStats,
        unit: Option<usize>,
    ) -> Result<EnergyBreakdown, EnergyError> {
        compute_energy_with_leakage(
            stats,
            self.cfg.unit_params(unit),
            &self.cfg.scheme,
            &self.cfg.clock,
            self.array_leakage_mw(unit),
        )
    }

    pub fn finish(
        self,
        scheme: SchemeKind,
        lars: Option<LarsDetails>,
    ) -> Result<RunResult, SimError> {
        let units: Vec<Option<usize>> = match self.unit {
            Some(_) => (0..self.per_unit.len()).map(Some).collect(),
            None => vec![None],
        };
        let mut with = Vec::new();
        let mut without = Vec::new();
        let mut total = SimStats::default();
        for (s, u) in self.per_unit.iter().zip(&units) {
            with.push(self.energy_of(s, *u)?);
            without.push(self.energy_of(&s.without_switching(), *u)?);
            total += s;
        }
        let clock = &self.cfg.clock;
        Ok(RunResult {
            scheme,
            retention_index: self.unit,
            retention_s: self.unit.map(|u| self.cfg.units.retention(u)),
            stats: total,
            energy: EnergyBreakdown::combine(&with, clock),
            energy_excluding_switches: EnergyBreakdown::combine(&without, clock),
            per_unit: self.per_unit,
            lars,
        })
    }
}

/// Run a single-array scheme (`Sram`, `SttFixed`, `DrsPerfect`) over a record stream.
pub fn run_fixed<I>(cfg: &Config, records: I) -> Result<RunResult, SimError>
where
    I: IntoIterator<Item = Result<TraceRecord, TraceError>>,
{
    let scheme = cfg.scheme.scheme;
    match scheme {
        SchemeKind::Sram => run_single(cfg, scheme, None, false, records),
        SchemeKind::SttFixed => run_single(cfg, scheme, Some(fixed_index(cfg)?), true, records),
        SchemeKind::DrsPerfect => run_single(cfg, scheme, Some(fixed_index(cfg)?), false, records),
        other => Err(SimError::SchemeMismatch(other)),
    }
}

/// One array for the whole run. Refresh-based schemes (`scheme.uses_refresh_buffer()`)
/// never expire and get their refresh count from the residency log.
pub(crate) fn run_single<I>(
    cfg: &Config,
    scheme: SchemeKind,
    unit: Option<usize>,
    expire: bool,
    records: I,
) -> Result<RunResult, SimError>
where
    I: IntoIterator<Item = Result<TraceRecord, TraceError>>,
{
    let refresh = scheme.uses_refresh_buffer();
    let mut runner = Runner::new(cfg, unit, expire && !refresh, refresh);
    for rec in records {
        runner.step(&rec?)?;
    }
    if let Some(tracker) = runner.residency.take() {
        let log = tracker.finish(runner.last_time);
        let retention = cfg
            .units
            .retention(unit.ok_or(SimError::SchemeMismatch(scheme))?);
        runner.stats_mut().refreshes = count_perfect_refreshes(&log, retention)?;
    }
    runner.finish(scheme, None)
}

fn fixed_index(cfg: &Config) -> Result<usize, SimError> {
    cfg.scheme
        .fixed_retention_index
        .filter(|&i| i < cfg.units.len())
        .ok_or_else(|| {
            SimError::Config(ConfigError::Invalid {
                field: "scheme.fixed_retention_index".into(),
                reason: format!("required for scheme {}", cfg.scheme.scheme),
            })
        })
}

/// Run the scheme selected in `cfg` over in-memory records. LARS runs start
/// with an empty history.
pub fn run_scheme(cfg: &Config, records: &[TraceRecord]) -> Result<RunResult, SimError> {
    run_scheme_stream(
        cfg,
        records.iter().copied().map(Ok),
        None,
        &mut TunerState::default(),
    )
}

/// Run the scheme selected in `cfg` over a record stream. `app` and `state`
/// are used by LARS for history lookups and updates.
pub fn run_scheme_stream<I>(
    cfg: &Config,
    records: I,
    app: Option<&AppId>,
    state: &mut TunerState,
) -> Result<RunResult, SimError>
where
    I: IntoIterator<Item = Result<TraceRecord, TraceError>>,
{
    cfg.validate()?;
    match cfg.scheme.scheme {
        SchemeKind::Sram | SchemeKind::SttFixed | SchemeKind::DrsPerfect => run_fixed(cfg, records),
        SchemeKind::Lars => run_lars(cfg, records, app, state),
        SchemeKind::LarsDrsSynergy => {
            let recs: Vec<TraceRecord> = records.into_iter().collect::<Result<_, _>>()?;
            run_synergy(cfg, &recs)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::SchemeConfig;

    fn cfg(scheme: SchemeKind, unit: Option<usize>) -> Config {
        let mut c = Config {
            scheme: SchemeConfig::new(scheme),
            ..Config::default()
        };
        c.scheme.fixed_retention_index = unit;
        c
    }

    #[test]
    fn hundred_read_hits_cost_two_cycles_each() {
        let mut recs = vec![TraceRecord::write(0, 0)];
        recs.extend((1..=100).map(|i| TraceRecord::read(i, 0)));
        let r = run_scheme(&cfg(SchemeKind::SttFixed, Some(3)), &recs).unwrap();
        let fill = 100 + 3;
        assert_eq!(r.stats.total_cycles - fill, 200);
        assert_eq!(r.stats.read_hits, 100);
    }

    #[test]
    fn empty_trace_gives_zero_stats() {
        for (s, u) in [
            (SchemeKind::Sram, None),
            (SchemeKind::SttFixed, Some(0)),
            (SchemeKind::DrsPerfect, Some(1)),
            (SchemeKind::Lars, None),
            (SchemeKind::LarsDrsSynergy, None),
        ] {
            let r = run_scheme(&cfg(s, u), &[]).unwrap();
            assert_eq!(r.stats, SimStats::default(), "{s}");
            assert_eq!(r.energy.total_nj, 0.0, "{s}");
        }
    }

    #[test]
    fn drs_refreshes_long_lived_block() {
        // Block written at 0 and read every 4 ms up to 25 ms; retention 10 ms.
        let f = 2e9;
        let mut recs = vec![TraceRecord::write(0, 0x40)];
        for k in 1..=6 {
            recs.push(TraceRecord::read((k as f64 * 4e-3 * f) as u64, 0x40));
        }
        let drs = run_scheme(&cfg(SchemeKind::DrsPerfect, Some(1)), &recs).unwrap();
        let sram = run_scheme(&cfg(SchemeKind::Sram, None), &recs).unwrap();
        assert_eq!(drs.stats.refreshes, 2);
        assert_eq!(drs.stats.misses(), sram.stats.misses());
        assert_eq!(sram.stats.refreshes, 0);
        let stt = run_scheme(&cfg(SchemeKind::SttFixed, Some(1)), &recs).unwrap();
        assert_eq!(stt.stats.refreshes, 0);
        assert!(stt.stats.expiration_misses > 0);
    }

    #[test]
    fn fixed_scheme_requires_unit() {
        let mut c = cfg(SchemeKind::SttFixed, Some(0));
        c.scheme.fixed_retention_index = None;
        assert!(run_fixed(&c, std::iter::empty()).is_err());
        assert!(matches!(
            run_fixed(&cfg(SchemeKind::Lars, None), std::iter::empty()),
            Err(SimError::SchemeMismatch(SchemeKind::Lars))
        ));
    }
}
