//! LARS run driver: windowed tuning, steady state with checking, re-tuning,
//! unit switching, and the LARS + perfect refresh combination.

use std::iter::Peekable;

use crate::cache::Retention;
use crate::config::{Config, SchemeKind};
use crate::stats::SimStats;
use crate::trace::{TraceError, TraceRecord};
use crate::tuner::{
    needs_retune, tune, Algorithm, AppId, HistoryEntry, SwitchMode, TunerError, TunerState,
    WindowMetrics,
};

use super::{run_single, LarsDetails, RunResult, Runner, SimError};

/// Pulls whole tuning windows out of a record stream. Window `k` holds the
/// records with `k * interval <= icount < (k + 1) * interval`; windows with no
/// records are skipped.
struct WindowFeed<I: Iterator> {
    records: Peekable<I>,
    interval: u64,
}

impl<I> WindowFeed<I>
where
    I: Iterator<Item = Result<TraceRecord, TraceError>>,
{
    fn run_window(&mut self, runner: &mut Runner<'_>) -> Result<Option<SimStats>, SimError> {
        let window = match self.records.peek() {
            None => return Ok(None),
            Some(Ok(r)) => r.icount / self.interval,
            Some(Err(_)) => {
                return Err(self
                    .records
                    .next()
                    .expect("peeked")
                    .expect_err("peeked an error")
                    .into())
            }
        };
        let mut stats = SimStats::default();
        while let Some(item) = self
            .records
            .next_if(|r| matches!(r, Ok(r) if r.icount / self.interval == window))
        {
            stats += &runner.step(&item.expect("matched Ok"))?;
        }
        Ok(Some(stats))
    }
}

struct Driver<'c, 's, I: Iterator> {
    cfg: &'c Config,
    runner: Runner<'c>,
    feed: WindowFeed<I>,
    state: &'s mut TunerState,
    details: LarsDetails,
}

impl<I> Driver<'_, '_, I>
where
    I: Iterator<Item = Result<TraceRecord, TraceError>>,
{
    fn retention_of(&self, unit: usize) -> Retention {
        Retention::finite(
            self.cfg.units.retention(unit),
            self.cfg.clock.monitor_divisor,
            self.cfg.scheme.expiration,
        )
    }

    fn switch_to(&mut self, to: usize) -> Result<(), SimError> {
        if self.state.location_index == to {
            return Ok(());
        }
        let from = self.state.location_index;
        let valid = self.runner.cache.valid_blocks() as u64;
        let cost = self
            .state
            .apply_switch(&self.cfg.units, to, valid, &self.cfg.tuner)?;
        let retention = self.retention_of(to);
        match self.cfg.tuner.switch_mode {
            SwitchMode::Migrate => {
                self.runner.cache.migrate(retention);
            }
            SwitchMode::Cold => {
                let flushed = self.runner.cache.switch_cold(retention);
                self.runner.per_unit[from].writebacks += flushed.len() as u64;
            }
        }
        self.runner.unit = Some(to);
        let s = self.runner.stats_mut();
        s.migration_cycles += cost.cycles;
        s.migration_nj += cost.energy_nj;
        s.migrations_in_blocks += cost.blocks;
        self.details.switches.push(cost);
        Ok(())
    }

    fn metrics(&self, window: &SimStats) -> Result<WindowMetrics, SimError> {
        let e = self
            .runner
            .energy_of(&window.without_switching(), self.runner.unit)?;
        Ok(WindowMetrics {
            energy_nj: e.total_nj,
            latency_s: e.latency_s,
            edp: e.edp_nj_s,
            misses: window.misses(),
            accesses: window.accesses(),
        })
    }

    fn sample(&mut self, unit: usize) -> Result<WindowMetrics, TunerError> {
        self.switch_to(unit)?;
        let window = self
            .feed
            .run_window(&mut self.runner)?
            .ok_or(TunerError::TraceExhausted)?;
        self.details.windows_sampled += 1;
        Ok(self.metrics(&window)?)
    }
}

/// Run LARS over a record stream.
///
/// With `scheme.fixed_retention_index` set the run stays on that unit. Otherwise
/// a stored history entry for `app` selects the unit directly; without one the
/// configured search runs over the first windows, starting on the longest
/// retention. After each steady-state window the checking process may trigger
/// a new search (except on the cold first window of a run resumed from
/// history). Searches that run out of trace leave the run on the unit it
/// was sampling and mark the result incomplete.
pub fn run_lars<I>(
    cfg: &Config,
    records: I,
    app: Option<&AppId>,
    state: &mut TunerState,
) -> Result<RunResult, SimError>
where
    I: IntoIterator<Item = Result<TraceRecord, TraceError>>,
{
    if let Some(unit) = cfg.scheme.fixed_retention_index {
        let mut r = run_single(cfg, SchemeKind::Lars, Some(unit), true, records)?;
        r.lars = Some(LarsDetails {
            app: app.map(|a| a.to_string()),
            final_unit: unit,
            ..Default::default()
        });
        return Ok(r);
    }

    let stored = app.and_then(|a| state.lookup(a)).cloned();
    let start = stored.as_ref().map_or(0, |e| e.retention_index);
    state.location_index = start;
    let mut driver = Driver {
        cfg,
        runner: Runner::new(cfg, Some(start), true, false),
        feed: WindowFeed {
            records: records.into_iter().peekable(),
            interval: cfg.tuner.tuning_interval_instructions,
        },
        state,
        details: LarsDetails {
            app: app.map(|a| a.to_string()),
            history_hit: stored.is_some(),
            ..Default::default()
        },
    };

    let mut current = stored;
    let mut searching = current.is_none();
    // The first window of a run resumed from history starts with a cold cache
    // and is not held against the stored baseline.
    let mut warming_up = !searching;
    loop {
        if searching {
            match tune(cfg.units.len(), &cfg.tuner, |u| driver.sample(u)) {
                Ok(outcome) => {
                    driver.switch_to(outcome.chosen)?;
                    let entry = HistoryEntry::from_outcome(&outcome, &cfg.units);
                    if let Some(a) = app {
                        driver.state.store(a.clone(), entry.clone());
                    }
                    current = Some(entry);
                    driver.details.tuning_rounds.push(outcome);
                    searching = false;
                }
                Err(TunerError::PartialSampling { .. }) => {
                    driver.details.tuning_incomplete = true;
                    break;
                }
                Err(TunerError::Sim(e)) => return Err(e),
                Err(e) => return Err(e.into()),
            }
        } else {
            let Some(window) = driver.feed.run_window(&mut driver.runner)? else {
                break;
            };
            if std::mem::take(&mut warming_up) {
                continue;
            }
            let entry = current.as_ref().expect("steady state has a baseline");
            if needs_retune(entry, &driver.metrics(&window)?, &cfg.tuner) {
                driver.details.retunes += 1;
                searching = true;
            }
        }
    }

    let mut details = driver.details;
    details.final_unit = driver.state.location_index;
    driver.runner.finish(SchemeKind::Lars, Some(details))
}

/// LARS + perfect refresh: a LARS-Optimal search picks the unit, then the
/// whole trace runs on that unit with perfect refresh and no expiry.
pub fn run_synergy(cfg: &Config, records: &[TraceRecord]) -> Result<RunResult, SimError> {
    let mut pre = cfg.clone();
    pre.scheme.scheme = SchemeKind::Lars;
    pre.scheme.fixed_retention_index = None;
    pre.tuner.algorithm = Algorithm::Optimal;
    let tuned = run_lars(
        &pre,
        records.iter().copied().map(Ok),
        None,
        &mut TunerState::default(),
    )?;
    let details = tuned.lars.expect("LARS runs report details");

    let mut run_cfg = cfg.clone();
    run_cfg.scheme.scheme = SchemeKind::LarsDrsSynergy;
    let mut r = run_single(
        &run_cfg,
        SchemeKind::LarsDrsSynergy,
        Some(details.final_unit),
        false,
        records.iter().copied().map(Ok),
    )?;
    r.lars = Some(LarsDetails {
        switches: Vec::new(),
        ..details
    });
    Ok(r)
}
