//! Retention selection: exhaustive sampling, LARS-Optimal, LARS-Miss(-LB),
//! the re-tuning check, the per-application history store and unit switching.
//!
//! The search routines are written against a *sampler*: a closure that runs
//! the next tuning window on the requested unit and returns that window's
//! metrics. Unit indices follow [`RetentionSet`] order, so index 0 is the
//! longest retention and the search walks towards shorter ones.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::config::{ConfigError, RetentionSet};
use crate::energy::migration_cost;
use crate::trace::TraceRecord;

#[derive(Debug, Error)]
pub enum TunerError {
    #[error("trace ended after {completed} of the tuning windows the search needed")]
    PartialSampling { completed: usize },
    #[error("no window left in the trace")]
    TraceExhausted,
    #[error("no stored tuning result for application {0}")]
    MissingHistory(String),
    #[error("switch from unit {0} to itself")]
    SameUnit(usize),
    #[error("history store {path}: {reason}")]
    Store { path: String, reason: String },
    #[error(transparent)]
    Sim(#[from] crate::schemes::SimError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Sampling,
    Optimal,
    Miss,
    MissLb,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Sampling => "sampling",
            Algorithm::Optimal => "optimal",
            Algorithm::Miss => "miss",
            Algorithm::MissLb => "miss-lb",
        }
    }

    pub fn uses_misses(self) -> bool {
        matches!(self, Algorithm::Miss | Algorithm::MissLb)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    Energy,
    Latency,
    Edp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SwitchMode {
    /// Copy valid lines into the new unit.
    Migrate,
    /// Write back dirty lines and start the new unit empty.
    Cold,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TunerConfig {
    #[serde(default = "default_algorithm")]
    pub algorithm: Algorithm,
    /// Objective of the exhaustive sampling search.
    #[serde(default = "default_objective")]
    pub objective: Objective,
    #[serde(default = "default_interval")]
    pub tuning_interval_instructions: u64,
    #[serde(default = "five_percent")]
    pub edp_degrade_threshold: f64,
    #[serde(default = "five_percent")]
    pub miss_degrade_threshold: f64,
    #[serde(default = "default_floor")]
    pub lb_missrate_floor: f64,
    #[serde(default = "default_switch")]
    pub switch_mode: SwitchMode,
    /// Extra cycles charged per migrated block.
    #[serde(default)]
    pub surcharge_cycles_per_block: u64,
    /// Extra energy charged per migrated block.
    #[serde(default)]
    pub surcharge_nj_per_block: f64,
}

fn default_algorithm() -> Algorithm {
    Algorithm::Optimal
}
fn default_objective() -> Objective {
    Objective::Edp
}
fn default_interval() -> u64 {
    100_000
}
fn five_percent() -> f64 {
    0.05
}
fn default_floor() -> f64 {
    0.0005
}
fn default_switch() -> SwitchMode {
    SwitchMode::Migrate
}

impl Default for TunerConfig {
    fn default() -> Self {
        Self {
            algorithm: default_algorithm(),
            objective: default_objective(),
            tuning_interval_instructions: default_interval(),
            edp_degrade_threshold: 0.05,
            miss_degrade_threshold: 0.05,
            lb_missrate_floor: default_floor(),
            switch_mode: default_switch(),
            surcharge_cycles_per_block: 0,
            surcharge_nj_per_block: 0.0,
        }
    }
}

impl TunerConfig {
    pub fn lb_enabled(&self) -> bool {
        self.algorithm == Algorithm::MissLb
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |field: &str, reason: &str| ConfigError::Invalid {
            field: format!("tuner.{field}"),
            reason: reason.to_string(),
        };
        for (name, v) in [
            ("edp_degrade_threshold", self.edp_degrade_threshold),
            ("miss_degrade_threshold", self.miss_degrade_threshold),
            ("lb_missrate_floor", self.lb_missrate_floor),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return Err(bad(name, "must lie in (0, 1)"));
            }
        }
        if self.tuning_interval_instructions == 0 {
            return Err(bad("tuning_interval_instructions", "must be at least 1"));
        }
        if !(self.surcharge_nj_per_block.is_finite() && self.surcharge_nj_per_block >= 0.0) {
            return Err(bad("surcharge_nj_per_block", "must be finite and >= 0"));
        }
        Ok(())
    }
}

/// What the tuner sees of one window.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct WindowMetrics {
    pub energy_nj: f64,
    pub latency_s: f64,
    pub edp: f64,
    pub misses: u64,
    pub accesses: u64,
}

impl WindowMetrics {
    pub fn miss_rate(&self) -> f64 {
        if self.accesses == 0 {
            0.0
        } else {
            self.misses as f64 / self.accesses as f64
        }
    }

    pub fn objective(&self, objective: Objective) -> f64 {
        match objective {
            Objective::Energy => self.energy_nj,
            Objective::Latency => self.latency_s,
            Objective::Edp => self.edp,
        }
    }

    /// EDP-only metrics, handy for decision tables.
    pub fn with_edp(edp: f64) -> Self {
        Self {
            edp,
            ..Default::default()
        }
    }

    /// Miss-only metrics, handy for decision tables.
    pub fn with_misses(misses: u64, accesses: u64) -> Self {
        Self {
            misses,
            accesses,
            ..Default::default()
        }
    }
}

/// Result of a retention search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningOutcome {
    pub algorithm: Algorithm,
    pub chosen: usize,
    /// Stored baseline for the checking process: objective value for sampling,
    /// EDP for LARS-Optimal, the longest-retention miss count for LARS-Miss(-LB).
    pub base_metric: f64,
    /// Units in the order they were sampled, with their window metrics.
    pub sampled: Vec<(usize, WindowMetrics)>,
}

fn sample<F>(sampler: &mut F, unit: usize, done: usize) -> Result<WindowMetrics, TunerError>
where
    F: FnMut(usize) -> Result<WindowMetrics, TunerError>,
{
    sampler(unit).map_err(|e| match e {
        TunerError::TraceExhausted => TunerError::PartialSampling { completed: done },
        other => other,
    })
}

/// Try every unit in turn and keep the one with the lowest objective value.
/// Ties go to the shorter retention.
pub fn sample_all<F>(
    units: usize,
    objective: Objective,
    mut sampler: F,
) -> Result<TuningOutcome, TunerError>
where
    F: FnMut(usize) -> Result<WindowMetrics, TunerError>,
{
    let mut sampled = Vec::with_capacity(units);
    for unit in 0..units {
        let m = sample(&mut sampler, unit, sampled.len())?;
        sampled.push((unit, m));
    }
    let (chosen, best) = sampled
        .iter()
        .map(|(u, m)| (*u, m.objective(objective)))
        .fold(None, |acc: Option<(usize, f64)>, (u, v)| match acc {
            Some((_, b)) if v > b => acc,
            _ => Some((u, v)),
        })
        .expect("at least one unit");
    Ok(TuningOutcome {
        algorithm: Algorithm::Sampling,
        chosen,
        base_metric: best,
        sampled,
    })
}

/// Walk down from the longest retention while EDP does not get worse.
pub fn lars_optimal<F>(units: usize, mut sampler: F) -> Result<TuningOutcome, TunerError>
where
    F: FnMut(usize) -> Result<WindowMetrics, TunerError>,
{
    let first = sample(&mut sampler, 0, 0)?;
    let mut sampled = vec![(0, first)];
    let mut base = first.edp;
    let mut chosen = 0;
    for unit in 1..units {
        let cur = sample(&mut sampler, unit, sampled.len())?;
        sampled.push((unit, cur));
        if cur.edp <= base {
            base = cur.edp;
            chosen = unit;
        } else {
            break;
        }
    }
    Ok(TuningOutcome {
        algorithm: Algorithm::Optimal,
        chosen,
        base_metric: base,
        sampled,
    })
}

/// Walk down from the longest retention while misses stay within the threshold
/// of the longest retention's count (or, with the lower bound enabled, while
/// the miss rate stays under the floor).
pub fn lars_miss<F>(
    units: usize,
    cfg: &TunerConfig,
    lb_enabled: bool,
    mut sampler: F,
) -> Result<TuningOutcome, TunerError>
where
    F: FnMut(usize) -> Result<WindowMetrics, TunerError>,
{
    let first = sample(&mut sampler, 0, 0)?;
    let base = first.misses as f64;
    let mut sampled = vec![(0, first)];
    let mut chosen = 0;
    for unit in 1..units {
        let cur = sample(&mut sampler, unit, sampled.len())?;
        sampled.push((unit, cur));
        // The floor check stays separate: it wins even when misses degrade.
        #[allow(clippy::if_same_then_else)]
        if lb_enabled && cur.miss_rate() < cfg.lb_missrate_floor {
            chosen = unit;
        } else if (cur.misses as f64) < base * (1.0 + cfg.miss_degrade_threshold) {
            chosen = unit;
        } else {
            break;
        }
    }
    Ok(TuningOutcome {
        algorithm: if lb_enabled {
            Algorithm::MissLb
        } else {
            Algorithm::Miss
        },
        chosen,
        base_metric: base,
        sampled,
    })
}

/// Run the configured search.
pub fn tune<F>(units: usize, cfg: &TunerConfig, sampler: F) -> Result<TuningOutcome, TunerError>
where
    F: FnMut(usize) -> Result<WindowMetrics, TunerError>,
{
    match cfg.algorithm {
        Algorithm::Sampling => sample_all(units, cfg.objective, sampler),
        Algorithm::Optimal => lars_optimal(units, sampler),
        Algorithm::Miss => lars_miss(units, cfg, false, sampler),
        Algorithm::MissLb => lars_miss(units, cfg, true, sampler),
    }
}

/// Identity of an application for the history store: a name plus a content hash.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AppId(String);

impl AppId {
    pub fn new(name: &str, content: &[u8]) -> Self {
        let digest = Sha256::digest(content);
        AppId(format!("{name}@{}", &hex::encode(digest)[..16]))
    }

    pub fn from_records(name: &str, records: &[TraceRecord]) -> Self {
        let mut text = Vec::with_capacity(records.len() * 16);
        crate::trace::write_trace(&mut text, records).expect("writing to memory");
        Self::new(name, &text)
    }

    pub fn from_file(path: &Path) -> std::io::Result<Self> {
        let bytes = fs::read(path)?;
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        Ok(Self::new(&name, &bytes))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for AppId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub algorithm: Algorithm,
    pub retention_index: usize,
    pub retention_s: f64,
    pub base_metric: f64,
}

impl HistoryEntry {
    pub fn from_outcome(o: &TuningOutcome, units: &RetentionSet) -> Self {
        Self {
            algorithm: o.algorithm,
            retention_index: o.chosen,
            retention_s: units.retention(o.chosen),
            base_metric: o.base_metric,
        }
    }
}

/// Whether the current window has drifted far enough from the stored baseline to re-tune.
pub fn needs_retune(entry: &HistoryEntry, current: &WindowMetrics, cfg: &TunerConfig) -> bool {
    match entry.algorithm {
        Algorithm::Miss | Algorithm::MissLb => {
            current.misses as f64 > entry.base_metric * (1.0 + cfg.miss_degrade_threshold)
        }
        Algorithm::Optimal => current.edp > entry.base_metric * (1.0 + cfg.edp_degrade_threshold),
        Algorithm::Sampling => {
            current.objective(cfg.objective) > entry.base_metric * (1.0 + cfg.edp_degrade_threshold)
        }
    }
}

pub const HISTORY_FORMAT: &str = "lars-history";
pub const HISTORY_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct HistoryDoc {
    format: String,
    version: u32,
    entries: BTreeMap<AppId, HistoryEntry>,
}

/// Active unit plus per-application tuning results.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TunerState {
    pub location_index: usize,
    pub history: BTreeMap<AppId, HistoryEntry>,
}

impl TunerState {
    pub fn lookup(&self, app: &AppId) -> Option<&HistoryEntry> {
        self.history.get(app)
    }

    pub fn store(&mut self, app: AppId, entry: HistoryEntry) {
        self.history.insert(app, entry);
    }

    /// The checking process for `app` against the current window.
    pub fn checking_process(
        &self,
        app: &AppId,
        current: &WindowMetrics,
        cfg: &TunerConfig,
    ) -> Result<bool, TunerError> {
        let entry = self
            .lookup(app)
            .ok_or_else(|| TunerError::MissingHistory(app.to_string()))?;
        Ok(needs_retune(entry, current, cfg))
    }

    /// Make `to` the active unit and return the cost of moving `valid_blocks` lines into it.
    pub fn apply_switch(
        &mut self,
        units: &RetentionSet,
        to: usize,
        valid_blocks: u64,
        cfg: &TunerConfig,
    ) -> Result<SwitchCost, TunerError> {
        let from = self.location_index;
        if from == to {
            return Err(TunerError::SameUnit(to));
        }
        self.location_index = to;
        Ok(match cfg.switch_mode {
            SwitchMode::Migrate => {
                let (cycles, energy_nj) =
                    migration_cost(valid_blocks, units.params(from), units.params(to));
                SwitchCost {
                    from,
                    to,
                    blocks: valid_blocks,
                    cycles: cycles + valid_blocks * cfg.surcharge_cycles_per_block,
                    energy_nj: energy_nj + valid_blocks as f64 * cfg.surcharge_nj_per_block,
                }
            }
            SwitchMode::Cold => SwitchCost {
                from,
                to,
                blocks: 0,
                cycles: 0,
                energy_nj: 0.0,
            },
        })
    }

    pub fn load(path: &Path) -> Result<Self, TunerError> {
        let err = |reason: String| TunerError::Store {
            path: path.display().to_string(),
            reason,
        };
        if !path.exists() {
            return Ok(Self::default());
        }
        let text = fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        let doc: HistoryDoc = serde_json::from_str(&text).map_err(|e| err(e.to_string()))?;
        if doc.format != HISTORY_FORMAT || doc.version != HISTORY_VERSION {
            return Err(err(format!(
                "unsupported format {} v{}",
                doc.format, doc.version
            )));
        }
        Ok(Self {
            location_index: 0,
            history: doc.entries,
        })
    }

    pub fn to_json(&self) -> String {
        let doc = HistoryDoc {
            format: HISTORY_FORMAT.to_string(),
            version: HISTORY_VERSION,
            entries: self.history.clone(),
        };
        serde_json::to_string_pretty(&doc).expect("history serializes")
    }

    pub fn save(&self, path: &Path) -> Result<(), TunerError> {
        fs::write(path, self.to_json() + "\n").map_err(|e| TunerError::Store {
            path: path.display().to_string(),
            reason: e.to_string(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwitchCost {
    pub from: usize,
    pub to: usize,
    pub blocks: u64,
    pub cycles: u64,
    pub energy_nj: f64,
}

/// Cost of a full tour through every unit: each unit hands its lines to the
/// next shorter retention, and the shortest hands them back to the longest.
pub fn sampling_tour_cost(units: &RetentionSet, blocks: u64) -> (u64, f64) {
    let k = units.len();
    (0..k).fold((0, 0.0), |(c, e), i| {
        let (dc, de) = migration_cost(blocks, units.params(i), units.params((i + 1) % k));
        (c + dc, e + de)
    })
}
