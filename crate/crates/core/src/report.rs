//! Machine-readable run reports (CSV and JSON).
//!
//! CSV has one row per run and the fixed column order in [`CSV_COLUMNS`].
//! Optional values are written as an empty field, ratios without a usable
//! baseline as `NA`. JSON carries the same data with nested statistics and
//! energy breakdowns. Both forms parse back to an equal [`Report`].

use std::fmt::Display;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{format_duration, Config, SchemeConfig, SchemeKind};
use crate::energy::EnergyBreakdown;
use crate::schemes::{run_scheme, RunResult, SimError};
use crate::stats::SimStats;
use crate::trace::TraceRecord;
use crate::tuner::Algorithm;

pub const REPORT_FORMAT: &str = "lars-report";
pub const REPORT_VERSION: u32 = 1;

pub const CSV_COLUMNS: &[&str] = &[
    "label",
    "scheme",
    "retention_s",
    "tuner",
    "reads",
    "writes",
    "read_hits",
    "write_hits",
    "read_misses",
    "write_misses",
    "expiration_misses",
    "writebacks",
    "refreshes",
    "migrations_in_blocks",
    "total_cycles",
    "sim_time_s",
    "migration_cycles",
    "miss_rate",
    "dynamic_nj",
    "static_nj",
    "refresh_nj",
    "migration_nj",
    "total_nj",
    "latency_cycles",
    "latency_s",
    "edp_nj_s",
    "total_nj_excl_switch",
    "latency_cycles_excl_switch",
    "edp_nj_s_excl_switch",
    "normalized_to",
    "ratio_energy",
    "ratio_latency",
    "ratio_edp",
    "ratio_misses",
    "ratio_miss_rate",
];

const NA: &str = "NA";

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("row {row}, column `{column}`: cannot parse `{value}`")]
    Field {
        row: usize,
        column: String,
        value: String,
    },
    #[error("unexpected header; expected the {REPORT_FORMAT} v{REPORT_VERSION} column set")]
    Header,
    #[error("unsupported report {format} v{version}")]
    Version { format: String, version: u32 },
    #[error("baseline row `{0}` is not in the report")]
    MissingBaseline(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Ratios {
    pub energy: Option<f64>,
    pub latency: Option<f64>,
    pub edp: Option<f64>,
    pub misses: Option<f64>,
    pub miss_rate: Option<f64>,
}

/// Totals with tuner switching costs removed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SwitchFree {
    pub total_nj: f64,
    pub latency_cycles: u64,
    pub edp_nj_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub label: String,
    pub scheme: SchemeKind,
    pub retention_s: Option<f64>,
    pub tuner: Option<Algorithm>,
    pub stats: SimStats,
    pub energy: EnergyBreakdown,
    pub excluding_switches: SwitchFree,
    pub normalized_to: Option<String>,
    pub ratios: Option<Ratios>,
}

impl ReportRow {
    pub fn from_run(label: impl Into<String>, run: &RunResult) -> Self {
        let tuner = run
            .lars
            .as_ref()
            .and_then(|d| d.tuning_rounds.first())
            .map(|o| o.algorithm);
        Self {
            label: label.into(),
            scheme: run.scheme,
            retention_s: run.retention_s,
            tuner,
            stats: run.stats,
            energy: run.energy,
            excluding_switches: SwitchFree {
                total_nj: run.energy_excluding_switches.total_nj,
                latency_cycles: run.energy_excluding_switches.latency_cycles,
                edp_nj_s: run.energy_excluding_switches.edp_nj_s,
            },
            normalized_to: None,
            ratios: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub format: String,
    pub version: u32,
    pub rows: Vec<ReportRow>,
}

impl Default for Report {
    fn default() -> Self {
        Self {
            format: REPORT_FORMAT.to_string(),
            version: REPORT_VERSION,
            rows: Vec::new(),
        }
    }
}

fn ratio(value: f64, base: f64) -> Option<f64> {
    if base == 0.0 || !base.is_finite() {
        None
    } else {
        Some(value / base)
    }
}

impl Report {
    pub fn new(rows: Vec<ReportRow>) -> Self {
        Self {
            rows,
            ..Default::default()
        }
    }

    pub fn push(&mut self, row: ReportRow) {
        self.rows.push(row);
    }

    pub fn row(&self, label: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.label == label)
    }

    /// Fill every row's ratios against the row labelled `baseline`.
    pub fn normalize_to(&mut self, baseline: &str) -> Result<(), ReportError> {
        let base = self
            .row(baseline)
            .cloned()
            .ok_or_else(|| ReportError::MissingBaseline(baseline.to_string()))?;
        for r in &mut self.rows {
            r.normalized_to = Some(baseline.to_string());
            r.ratios = Some(Ratios {
                energy: ratio(r.energy.total_nj, base.energy.total_nj),
                latency: ratio(r.energy.latency_s, base.energy.latency_s),
                edp: ratio(r.energy.edp_nj_s, base.energy.edp_nj_s),
                misses: ratio(r.stats.misses() as f64, base.stats.misses() as f64),
                miss_rate: ratio(r.stats.miss_rate(), base.stats.miss_rate()),
            });
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self, ReportError> {
        let r: Report = serde_json::from_str(text)?;
        if r.format != REPORT_FORMAT || r.version != REPORT_VERSION {
            return Err(ReportError::Version {
                format: r.format,
                version: r.version,
            });
        }
        Ok(r)
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(CSV_COLUMNS).expect("in-memory write");
        for r in &self.rows {
            w.write_record(csv_fields(r)).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }

    pub fn from_csv(text: &str) -> Result<Self, ReportError> {
        let mut rd = csv::Reader::from_reader(text.as_bytes());
        let header: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
        if header != CSV_COLUMNS {
            return Err(ReportError::Header);
        }
        let mut rows = Vec::new();
        for (i, rec) in rd.records().enumerate() {
            let rec = rec?;
            rows.push(parse_row(&rec, i + 1)?);
        }
        Ok(Report::new(rows))
    }
}

/// Retention the DRS baseline uses in comparisons when none is given.
pub const DRS_BASE_RETENTION_S: f64 = 10e-3;

pub fn drs_default_index(cfg: &Config) -> usize {
    cfg.units.index_of(DRS_BASE_RETENTION_S).unwrap_or(0)
}

fn run_with(
    cfg: &Config,
    scheme: SchemeConfig,
    records: &[TraceRecord],
) -> Result<RunResult, SimError> {
    let mut c = cfg.clone();
    c.scheme = SchemeConfig {
        scheme: scheme.scheme,
        fixed_retention_index: scheme.fixed_retention_index,
        ..cfg.scheme.clone()
    };
    run_scheme(&c, records)
}

/// SRAM, fixed STT-RAM at every retention, then DRS; ratios against SRAM.
pub fn sweep(cfg: &Config, records: &[TraceRecord], drs_index: usize) -> Result<Report, SimError> {
    let mut rep = Report::default();
    let sram = run_with(cfg, SchemeConfig::new(SchemeKind::Sram), records)?;
    rep.push(ReportRow::from_run("sram", &sram));
    for i in 0..cfg.units.len() {
        let r = run_with(
            cfg,
            SchemeConfig::new(SchemeKind::SttFixed).with_retention(i),
            records,
        )?;
        rep.push(ReportRow::from_run(
            format!("stt-{}", format_duration(cfg.units.retention(i))),
            &r,
        ));
    }
    let drs = run_with(
        cfg,
        SchemeConfig::new(SchemeKind::DrsPerfect).with_retention(drs_index),
        records,
    )?;
    rep.push(ReportRow::from_run("drs", &drs));
    rep.normalize_to("sram").expect("sram row present");
    Ok(rep)
}

/// Labels of the comparison rows, in output order.
pub const COMPARE_LABELS: [&str; 6] = [
    "sram",
    "drs",
    "lars-optimal",
    "lars-miss",
    "lars-miss-lb",
    "synergy",
];

/// The scheme comparison table, normalized to DRS. LARS rows start with an
/// empty history and use `cfg.tuner` apart from the algorithm.
pub fn compare(
    cfg: &Config,
    records: &[TraceRecord],
    drs_index: usize,
) -> Result<Report, SimError> {
    let mut rep = Report::default();
    let sram = run_with(cfg, SchemeConfig::new(SchemeKind::Sram), records)?;
    rep.push(ReportRow::from_run("sram", &sram));
    let drs = run_with(
        cfg,
        SchemeConfig::new(SchemeKind::DrsPerfect).with_retention(drs_index),
        records,
    )?;
    rep.push(ReportRow::from_run("drs", &drs));
    for (label, algo) in [
        ("lars-optimal", Algorithm::Optimal),
        ("lars-miss", Algorithm::Miss),
        ("lars-miss-lb", Algorithm::MissLb),
    ] {
        let mut c = cfg.clone();
        c.tuner.algorithm = algo;
        let r = run_with(&c, SchemeConfig::new(SchemeKind::Lars), records)?;
        let mut row = ReportRow::from_run(label, &r);
        row.tuner = Some(algo);
        rep.push(row);
    }
    let syn = run_with(cfg, SchemeConfig::new(SchemeKind::LarsDrsSynergy), records)?;
    rep.push(ReportRow::from_run("synergy", &syn));
    rep.normalize_to("drs").expect("drs row present");
    Ok(rep)
}

fn opt<T: Display>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn opt_ratio(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_else(|| NA.to_string())
}

fn csv_fields(r: &ReportRow) -> Vec<String> {
    let s = &r.stats;
    let e = &r.energy;
    let x = &r.excluding_switches;
    let ratios = r.ratios.unwrap_or_default();
    let ratio_field = |v: Option<f64>| {
        if r.ratios.is_some() {
            opt_ratio(v)
        } else {
            String::new()
        }
    };
    vec![
        r.label.clone(),
        r.scheme.name().to_string(),
        opt(r.retention_s),
        opt(r.tuner.map(|t| t.name())),
        s.reads.to_string(),
        s.writes.to_string(),
        s.read_hits.to_string(),
        s.write_hits.to_string(),
        s.read_misses.to_string(),
        s.write_misses.to_string(),
        s.expiration_misses.to_string(),
        s.writebacks.to_string(),
        s.refreshes.to_string(),
        s.migrations_in_blocks.to_string(),
        s.total_cycles.to_string(),
        s.sim_time_s.to_string(),
        s.migration_cycles.to_string(),
        s.miss_rate().to_string(),
        e.dynamic_nj.to_string(),
        e.static_nj.to_string(),
        e.refresh_nj.to_string(),
        e.migration_nj.to_string(),
        e.total_nj.to_string(),
        e.latency_cycles.to_string(),
        e.latency_s.to_string(),
        e.edp_nj_s.to_string(),
        x.total_nj.to_string(),
        x.latency_cycles.to_string(),
        x.edp_nj_s.to_string(),
        opt(r.normalized_to.as_deref()),
        ratio_field(ratios.energy),
        ratio_field(ratios.latency),
        ratio_field(ratios.edp),
        ratio_field(ratios.misses),
        ratio_field(ratios.miss_rate),
    ]
}

struct Fields<'a> {
    rec: &'a csv::StringRecord,
    row: usize,
}

impl Fields<'_> {
    fn raw(&self, col: &str) -> &str {
        let i = CSV_COLUMNS
            .iter()
            .position(|c| *c == col)
            .expect("known column");
        self.rec.get(i).unwrap_or("")
    }

    fn err(&self, col: &str) -> ReportError {
        ReportError::Field {
            row: self.row,
            column: col.to_string(),
            value: self.raw(col).to_string(),
        }
    }

    fn get<T: FromStr>(&self, col: &str) -> Result<T, ReportError> {
        self.raw(col).parse().map_err(|_| self.err(col))
    }

    fn opt<T: FromStr>(&self, col: &str) -> Result<Option<T>, ReportError> {
        match self.raw(col) {
            "" => Ok(None),
            v => v.parse().map(Some).map_err(|_| self.err(col)),
        }
    }

    fn ratio(&self, col: &str) -> Result<Option<f64>, ReportError> {
        match self.raw(col) {
            NA | "" => Ok(None),
            v => v.parse().map(Some).map_err(|_| self.err(col)),
        }
    }
}

fn parse_scheme(s: &str) -> Option<SchemeKind> {
    [
        SchemeKind::Sram,
        SchemeKind::SttFixed,
        SchemeKind::DrsPerfect,
        SchemeKind::Lars,
        SchemeKind::LarsDrsSynergy,
    ]
    .into_iter()
    .find(|k| k.name() == s)
}

fn parse_algorithm(s: &str) -> Option<Algorithm> {
    [
        Algorithm::Sampling,
        Algorithm::Optimal,
        Algorithm::Miss,
        Algorithm::MissLb,
    ]
    .into_iter()
    .find(|a| a.name() == s)
}

fn parse_row(rec: &csv::StringRecord, row: usize) -> Result<ReportRow, ReportError> {
    let f = Fields { rec, row };
    let migration_nj: f64 = f.get("migration_nj")?;
    let stats = SimStats {
        reads: f.get("reads")?,
        writes: f.get("writes")?,
        read_hits: f.get("read_hits")?,
        write_hits: f.get("write_hits")?,
        read_misses: f.get("read_misses")?,
        write_misses: f.get("write_misses")?,
        expiration_misses: f.get("expiration_misses")?,
        writebacks: f.get("writebacks")?,
        refreshes: f.get("refreshes")?,
        migrations_in_blocks: f.get("migrations_in_blocks")?,
        total_cycles: f.get("total_cycles")?,
        sim_time_s: f.get("sim_time_s")?,
        migration_cycles: f.get("migration_cycles")?,
        migration_nj,
    };
    let energy = EnergyBreakdown {
        dynamic_nj: f.get("dynamic_nj")?,
        static_nj: f.get("static_nj")?,
        refresh_nj: f.get("refresh_nj")?,
        migration_nj,
        total_nj: f.get("total_nj")?,
        latency_cycles: f.get("latency_cycles")?,
        latency_s: f.get("latency_s")?,
        edp_nj_s: f.get("edp_nj_s")?,
    };
    let excluding_switches = SwitchFree {
        total_nj: f.get("total_nj_excl_switch")?,
        latency_cycles: f.get("latency_cycles_excl_switch")?,
        edp_nj_s: f.get("edp_nj_s_excl_switch")?,
    };
    let normalized_to: Option<String> = f.opt("normalized_to")?;
    let ratios = if normalized_to.is_some() {
        Some(Ratios {
            energy: f.ratio("ratio_energy")?,
            latency: f.ratio("ratio_latency")?,
            edp: f.ratio("ratio_edp")?,
            misses: f.ratio("ratio_misses")?,
            miss_rate: f.ratio("ratio_miss_rate")?,
        })
    } else {
        None
    };
    Ok(ReportRow {
        label: f.raw("label").to_string(),
        scheme: parse_scheme(f.raw("scheme")).ok_or_else(|| f.err("scheme"))?,
        retention_s: f.opt("retention_s")?,
        tuner: match f.raw("tuner") {
            "" => None,
            t => Some(parse_algorithm(t).ok_or_else(|| f.err("tuner"))?),
        },
        stats,
        energy,
        excluding_switches,
        normalized_to,
        ratios,
    })
}
