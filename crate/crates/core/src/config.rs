//! Cache geometry, device parameters and scheme selection.
//!
//! Everything here is immutable once loaded. The bundled default file
//! (`default_params.toml`) carries the 32KB / 64B / 4-way geometry and the
//! SRAM and four STT-RAM device rows used throughout the crate.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tuner::TunerConfig;

/// Default configuration text, embedded at build time.
pub const DEFAULT_CONFIG_TOML: &str = include_str!("default_params.toml");

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid config field `{field}`: {reason}")]
    Invalid { field: String, reason: String },
}

fn invalid(field: impl Into<String>, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field: field.into(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CacheGeometry {
    pub capacity_bytes: u64,
    pub line_size_bytes: u64,
    pub associativity: u32,
}

impl CacheGeometry {
    pub const fn new(capacity_bytes: u64, line_size_bytes: u64, associativity: u32) -> Self {
        Self {
            capacity_bytes,
            line_size_bytes,
            associativity,
        }
    }

    pub fn num_sets(&self) -> usize {
        (self.capacity_bytes / (self.line_size_bytes * self.associativity as u64)) as usize
    }

    /// Number of block frames, which is also the number of monitor counters per unit.
    pub fn num_blocks(&self) -> usize {
        (self.capacity_bytes / self.line_size_bytes) as usize
    }

    pub fn block_address(&self, addr: u64) -> u64 {
        addr / self.line_size_bytes
    }

    pub fn set_index(&self, addr: u64) -> usize {
        (self.block_address(addr) % self.num_sets() as u64) as usize
    }

    pub fn tag(&self, addr: u64) -> u64 {
        self.block_address(addr) / self.num_sets() as u64
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.associativity == 0 {
            return Err(invalid("cache.associativity", "must be at least 1"));
        }
        if !self.capacity_bytes.is_power_of_two() {
            return Err(invalid("cache.capacity_bytes", "must be a power of two"));
        }
        if !self.line_size_bytes.is_power_of_two() {
            return Err(invalid("cache.line_size_bytes", "must be a power of two"));
        }
        let set_bytes = self.line_size_bytes * self.associativity as u64;
        if set_bytes > self.capacity_bytes || !self.capacity_bytes.is_multiple_of(set_bytes) {
            return Err(invalid(
                "cache.associativity",
                format!(
                    "capacity {} is not a whole number of {}-way sets of {}B lines",
                    self.capacity_bytes, self.associativity, self.line_size_bytes
                ),
            ));
        }
        Ok(())
    }
}

impl Default for CacheGeometry {
    fn default() -> Self {
        Self::new(32 * 1024, 64, 4)
    }
}

/// Per-access energies, leakage and latencies of one memory array.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergyParams {
    pub write_energy_nj: f64,
    pub read_energy_nj: f64,
    pub leakage_mw: f64,
    pub hit_latency_cycles: u64,
    pub write_latency_cycles: u64,
}

impl EnergyParams {
    pub const SRAM: EnergyParams = EnergyParams {
        write_energy_nj: 0.033,
        read_energy_nj: 0.033,
        leakage_mw: 38.021,
        hit_latency_cycles: 3,
        write_latency_cycles: 3,
    };

    fn validate(&self, field: &str) -> Result<(), ConfigError> {
        let reals = [
            ("write_energy_nj", self.write_energy_nj),
            ("read_energy_nj", self.read_energy_nj),
            ("leakage_mw", self.leakage_mw),
        ];
        for (name, v) in reals {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(format!("{field}.{name}"), "must be finite and > 0"));
            }
        }
        if self.hit_latency_cycles == 0 {
            return Err(invalid(
                format!("{field}.hit_latency_cycles"),
                "must be > 0",
            ));
        }
        if self.write_latency_cycles == 0 {
            return Err(invalid(
                format!("{field}.write_latency_cycles"),
                "must be > 0",
            ));
        }
        Ok(())
    }
}

/// One STT-RAM unit: its retention time and device row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "UnitRow", into = "UnitRow")]
pub struct RetentionUnit {
    pub retention_s: f64,
    pub params: EnergyParams,
}

/// Flat on-disk form of a [`RetentionUnit`].
#[derive(Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct UnitRow {
    retention_s: f64,
    write_energy_nj: f64,
    read_energy_nj: f64,
    leakage_mw: f64,
    hit_latency_cycles: u64,
    write_latency_cycles: u64,
}

impl From<UnitRow> for RetentionUnit {
    fn from(r: UnitRow) -> Self {
        Self {
            retention_s: r.retention_s,
            params: EnergyParams {
                write_energy_nj: r.write_energy_nj,
                read_energy_nj: r.read_energy_nj,
                leakage_mw: r.leakage_mw,
                hit_latency_cycles: r.hit_latency_cycles,
                write_latency_cycles: r.write_latency_cycles,
            },
        }
    }
}

impl From<RetentionUnit> for UnitRow {
    fn from(u: RetentionUnit) -> Self {
        Self {
            retention_s: u.retention_s,
            write_energy_nj: u.params.write_energy_nj,
            read_energy_nj: u.params.read_energy_nj,
            leakage_mw: u.params.leakage_mw,
            hit_latency_cycles: u.params.hit_latency_cycles,
            write_latency_cycles: u.params.write_latency_cycles,
        }
    }
}

/// The STT-RAM units of a cache, ordered by strictly decreasing retention.
///
/// Index 0 is always the longest retention; tuning walks the indices upward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RetentionSet {
    units: Vec<RetentionUnit>,
}

impl RetentionSet {
    pub fn new(units: Vec<RetentionUnit>) -> Result<Self, ConfigError> {
        let set = Self { units };
        set.validate()?;
        Ok(set)
    }

    /// The four units of the bundled device table: 100 ms, 10 ms, 1 ms, 100 µs.
    pub fn table_default() -> Self {
        let row =
            |retention_s, write_energy_nj, read_energy_nj, write_latency_cycles| RetentionUnit {
                retention_s,
                params: EnergyParams {
                    write_energy_nj,
                    read_energy_nj,
                    leakage_mw: 1.753,
                    hit_latency_cycles: 2,
                    write_latency_cycles,
                },
            };
        Self {
            units: vec![
                row(100e-3, 0.101, 0.011, 7),
                row(10e-3, 0.076, 0.011, 5),
                row(1e-3, 0.056, 0.012, 4),
                row(100e-6, 0.040, 0.012, 3),
            ],
        }
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    pub fn units(&self) -> &[RetentionUnit] {
        &self.units
    }

    pub fn get(&self, index: usize) -> Option<&RetentionUnit> {
        self.units.get(index)
    }

    pub fn retention(&self, index: usize) -> f64 {
        self.units[index].retention_s
    }

    pub fn params(&self, index: usize) -> &EnergyParams {
        &self.units[index].params
    }

    /// Index of the unit whose retention matches `retention_s` to within 1 ppm.
    pub fn index_of(&self, retention_s: f64) -> Option<usize> {
        self.units.iter().position(|u| {
            u.retention_s == retention_s
                || ((u.retention_s - retention_s) / u.retention_s).abs() < 1e-6
        })
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.units.is_empty() {
            return Err(invalid("units", "at least one retention unit is required"));
        }
        for (i, u) in self.units.iter().enumerate() {
            // Written this way so NaN is rejected too.
            #[allow(clippy::neg_cmp_op_on_partial_ord)]
            if !(u.retention_s > 0.0) {
                return Err(invalid(format!("units[{i}].retention_s"), "must be > 0"));
            }
            u.params.validate(&format!("units[{i}]"))?;
        }
        for (i, pair) in self.units.windows(2).enumerate() {
            if pair[1].retention_s >= pair[0].retention_s {
                return Err(invalid(
                    format!("units[{}].retention_s", i + 1),
                    "retentions must be strictly decreasing",
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimClock {
    pub frequency_hz: f64,
    /// Monitor clock periods per retention time (N).
    pub monitor_divisor: u32,
}

impl SimClock {
    pub fn monitor_period(&self, retention_s: f64) -> f64 {
        retention_s / self.monitor_divisor as f64
    }

    /// Width of one monitor counter, ceil(log2 N).
    pub fn counter_bits(&self) -> u32 {
        let n = self.monitor_divisor;
        if n <= 1 {
            0
        } else {
            u32::BITS - (n - 1).leading_zeros()
        }
    }

    pub fn cycles_to_seconds(&self, cycles: u64) -> f64 {
        cycles as f64 / self.frequency_hz
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.frequency_hz.is_finite() && self.frequency_hz > 0.0) {
            return Err(invalid("clock.frequency_hz", "must be finite and > 0"));
        }
        if self.monitor_divisor < 2 {
            return Err(invalid("clock.monitor_divisor", "must be at least 2"));
        }
        Ok(())
    }
}

impl Default for SimClock {
    fn default() -> Self {
        Self {
            frequency_hz: 2e9,
            monitor_divisor: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeKind {
    Sram,
    SttFixed,
    DrsPerfect,
    Lars,
    LarsDrsSynergy,
}

impl SchemeKind {
    pub fn name(self) -> &'static str {
        match self {
            SchemeKind::Sram => "sram",
            SchemeKind::SttFixed => "stt_fixed",
            SchemeKind::DrsPerfect => "drs_perfect",
            SchemeKind::Lars => "lars",
            SchemeKind::LarsDrsSynergy => "lars_drs_synergy",
        }
    }

    /// Schemes that refresh through a buffer and therefore pay its leakage.
    pub fn uses_refresh_buffer(self) -> bool {
        matches!(self, SchemeKind::DrsPerfect | SchemeKind::LarsDrsSynergy)
    }
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LeakageScope {
    ActiveUnitOnly,
    AllUnits,
}

/// How the monitor counters decide that a block has expired.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpirationMode {
    /// Counters tick on a shared monitor clock aligned at t = 0.
    Quantized,
    /// Blocks expire once strictly more than one retention time has passed since the last write.
    Exact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeConfig {
    pub scheme: SchemeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_retention_index: Option<usize>,
    #[serde(default = "default_miss_penalty")]
    pub miss_penalty_cycles: u64,
    #[serde(default = "default_buffer_energy")]
    pub buffer_energy: EnergyParams,
    #[serde(default = "default_buffer_leakage")]
    pub buffer_leakage_mw: f64,
    #[serde(default = "default_leakage_scope")]
    pub leakage_scope: LeakageScope,
    #[serde(default = "default_expiration")]
    pub expiration: ExpirationMode,
    /// Array writes charged per linefill.
    #[serde(default = "one")]
    pub fill_weight: f64,
    /// Array reads charged per writeback.
    #[serde(default = "one")]
    pub writeback_weight: f64,
}

fn default_miss_penalty() -> u64 {
    100
}
fn default_buffer_energy() -> EnergyParams {
    EnergyParams::SRAM
}
fn default_buffer_leakage() -> f64 {
    1.0
}
fn default_leakage_scope() -> LeakageScope {
    LeakageScope::ActiveUnitOnly
}
fn default_expiration() -> ExpirationMode {
    ExpirationMode::Quantized
}
fn one() -> f64 {
    1.0
}

impl SchemeConfig {
    pub fn new(scheme: SchemeKind) -> Self {
        Self {
            scheme,
            fixed_retention_index: None,
            miss_penalty_cycles: default_miss_penalty(),
            buffer_energy: default_buffer_energy(),
            buffer_leakage_mw: default_buffer_leakage(),
            leakage_scope: default_leakage_scope(),
            expiration: default_expiration(),
            fill_weight: 1.0,
            writeback_weight: 1.0,
        }
    }

    pub fn with_retention(mut self, index: usize) -> Self {
        self.fixed_retention_index = Some(index);
        self
    }

    pub fn validate(&self, units: &RetentionSet) -> Result<(), ConfigError> {
        let needs_index = matches!(self.scheme, SchemeKind::SttFixed | SchemeKind::DrsPerfect);
        match self.fixed_retention_index {
            None if needs_index => {
                return Err(invalid(
                    "scheme.fixed_retention_index",
                    format!("required for scheme {}", self.scheme),
                ))
            }
            Some(i) if i >= units.len() => {
                return Err(invalid(
                    "scheme.fixed_retention_index",
                    format!("{i} out of range for {} units", units.len()),
                ))
            }
            _ => {}
        }
        self.buffer_energy.validate("scheme.buffer_energy")?;
        if !(self.buffer_leakage_mw.is_finite() && self.buffer_leakage_mw >= 0.0) {
            return Err(invalid(
                "scheme.buffer_leakage_mw",
                "must be finite and >= 0",
            ));
        }
        for (name, w) in [
            ("fill_weight", self.fill_weight),
            ("writeback_weight", self.writeback_weight),
        ] {
            if !(w.is_finite() && w >= 0.0) {
                return Err(invalid(format!("scheme.{name}"), "must be finite and >= 0"));
            }
        }
        Ok(())
    }
}

impl Default for SchemeConfig {
    fn default() -> Self {
        Self::new(SchemeKind::Lars)
    }
}

/// A complete, validated simulator configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub cache: CacheGeometry,
    #[serde(default)]
    pub clock: SimClock,
    #[serde(default = "default_sram")]
    pub sram: EnergyParams,
    #[serde(default = "RetentionSet::table_default")]
    pub units: RetentionSet,
    #[serde(default)]
    pub scheme: SchemeConfig,
    #[serde(default)]
    pub tuner: TunerConfig,
}

fn default_sram() -> EnergyParams {
    EnergyParams::SRAM
}

impl Default for Config {
    fn default() -> Self {
        Self {
            cache: CacheGeometry::default(),
            clock: SimClock::default(),
            sram: EnergyParams::SRAM,
            units: RetentionSet::table_default(),
            scheme: SchemeConfig::default(),
            tuner: TunerConfig::default(),
        }
    }
}

impl Config {
    /// The bundled default configuration.
    pub fn bundled() -> Self {
        Self::from_toml_str(DEFAULT_CONFIG_TOML).expect("bundled config is valid")
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: Config = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.cache.validate()?;
        self.clock.validate()?;
        self.sram.validate("sram")?;
        self.units.validate()?;
        self.scheme.validate(&self.units)?;
        self.tuner.validate()?;
        Ok(())
    }

    /// Device parameters of the array a scheme runs on when pinned to `unit`.
    pub fn unit_params(&self, unit: Option<usize>) -> &EnergyParams {
        match unit {
            Some(i) => self.units.params(i),
            None => &self.sram,
        }
    }
}

/// Load and validate a configuration file.
pub fn load_config(path: impl AsRef<Path>) -> Result<Config, ConfigError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Config::from_toml_str(&text)
}

/// Parse a duration such as `10ms`, `100us`, `100µs`, `2.5s` or a bare number of seconds.
pub fn parse_duration(text: &str) -> Result<f64, ConfigError> {
    let t = text.trim();
    if t == "inf" {
        return Ok(f64::INFINITY);
    }
    let split = t
        .find(|c: char| {
            !(c.is_ascii_digit() || c == '.' || c == 'e' || c == 'E' || c == '-' || c == '+')
        })
        .unwrap_or(t.len());
    let (num, unit) = t.split_at(split);
    let value: f64 = num
        .parse()
        .map_err(|_| invalid("retention", format!("cannot parse duration `{text}`")))?;
    let divisor = match unit.trim() {
        "" | "s" => 1.0,
        "ms" => 1e3,
        "us" | "µs" => 1e6,
        "ns" => 1e9,
        other => {
            return Err(invalid(
                "retention",
                format!("unknown duration unit `{other}`"),
            ))
        }
    };
    Ok(value / divisor)
}

/// Render a retention time in the most natural unit (`100ms`, `100us`).
pub fn format_duration(seconds: f64) -> String {
    if seconds.is_infinite() {
        return "inf".to_string();
    }
    let (v, unit) = if seconds >= 1.0 {
        (seconds, "s")
    } else if seconds >= 1e-3 {
        (seconds * 1e3, "ms")
    } else if seconds >= 1e-6 {
        (seconds * 1e6, "us")
    } else {
        (seconds * 1e9, "ns")
    };
    let rounded = (v * 1e6).round() / 1e6;
    format!("{rounded}{unit}")
}
