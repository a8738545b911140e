use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lars_core::config::{format_duration, parse_duration, ConfigError};
use lars_core::demo::{self, DemoWorkload};
use lars_core::report::{self, Report, ReportRow};
use lars_core::trace::{load_trace, write_trace, TraceError};
use lars_core::tuner::TunerError;
use lars_core::workload::{generate_trace, Dist, WorkloadSpec};
use lars_core::{
    load_config, run_scheme_stream, Algorithm, AppId, Config, Objective, SchemeConfig, SchemeKind,
    SimError, TraceRecord, TunerState,
};

#[derive(Parser)]
#[command(
    name = "lars",
    version,
    about = "Trace-driven STT-RAM L1 cache simulator"
)]
struct Cli {
    /// Configuration file (TOML). The bundled defaults are used when absent.
    #[arg(long, global = true, env = "LARS_CONFIG")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scheme over a trace.
    Simulate(SimulateArgs),
    /// Fixed STT-RAM at every retention plus SRAM and DRS rows, normalized to SRAM.
    Sweep(TableArgs),
    /// SRAM, DRS, the three LARS tuners and the synergy scheme, normalized to DRS.
    Compare(TableArgs),
    /// Run LARS with a history store and print the tuning decisions as JSON.
    Tune(TuneArgs),
    /// Write a synthetic trace.
    GenTrace(GenArgs),
}

#[derive(Args)]
struct Input {
    /// Trace file to read.
    #[arg(long, conflicts_with = "demo", required_unless_present = "demo")]
    trace: Option<PathBuf>,
    /// Use a bundled demo workload instead of a trace file.
    #[arg(long, value_parser = demo_names())]
    demo: Option<String>,
    /// Reseed the demo workload.
    #[arg(long, requires = "demo")]
    seed: Option<u64>,
}

#[derive(Args)]
struct Output {
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Args)]
struct TunerFlags {
    #[arg(long, value_enum)]
    tuner: Option<TunerArg>,
    #[arg(long, value_enum)]
    objective: Option<ObjectiveArg>,
    /// Tuning window length in instructions.
    #[arg(long)]
    interval: Option<u64>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    input: Input,
    #[arg(long, value_enum)]
    scheme: SchemeArg,
    /// Retention of the active unit, e.g. `10ms`; one of the configured units.
    #[arg(long)]
    retention: Option<String>,
    #[command(flatten)]
    tuner: TunerFlags,
    /// History store for LARS runs (JSON); created if missing.
    #[arg(long)]
    history: Option<PathBuf>,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct TableArgs {
    #[command(flatten)]
    input: Input,
    /// Retention of the DRS baseline (default 10ms).
    #[arg(long)]
    retention: Option<String>,
    #[command(flatten)]
    tuner: TunerFlags,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct TuneArgs {
    #[command(flatten)]
    input: Input,
    #[command(flatten)]
    tuner: TunerFlags,
    #[arg(long)]
    history: Option<PathBuf>,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenArgs {
    /// Emit a bundled demo workload instead of a single population.
    #[arg(long, value_parser = demo_names())]
    demo: Option<String>,
    /// Concurrently live blocks.
    #[arg(long, default_value_t = 64)]
    num_blocks: usize,
    /// Working set size in bytes.
    #[arg(long, default_value_t = 1 << 20)]
    working_set: u64,
    #[arg(long, default_value_t = 64)]
    line_size: u64,
    #[arg(long, default_value_t = 0.3)]
    write_fraction: f64,
    /// Instructions between touches of a block: `fixed:V`, `uniform:LO:HI` or `exp:MEAN`.
    #[arg(long, default_value = "exp:1000")]
    gap: String,
    /// Block lifetime with time units, e.g. `exp:5ms` or `uniform:10us:2ms`.
    #[arg(long, default_value = "exp:5ms")]
    lifetime: String,
    #[arg(long, default_value_t = 2e9)]
    frequency: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Number of records.
    #[arg(long, default_value_t = 100_000)]
    length: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    Sram,
    #[value(alias = "stt-fixed")]
    Stt,
    #[value(alias = "drs-perfect")]
    Drs,
    Lars,
    Synergy,
}

impl From<SchemeArg> for SchemeKind {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::Sram => SchemeKind::Sram,
            SchemeArg::Stt => SchemeKind::SttFixed,
            SchemeArg::Drs => SchemeKind::DrsPerfect,
            SchemeArg::Lars => SchemeKind::Lars,
            SchemeArg::Synergy => SchemeKind::LarsDrsSynergy,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum TunerArg {
    Sampling,
    Optimal,
    Miss,
    MissLb,
}

#[derive(Clone, Copy, ValueEnum)]
enum ObjectiveArg {
    Energy,
    Latency,
    Edp,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

fn demo_names() -> clap::builder::PossibleValuesParser {
    clap::builder::PossibleValuesParser::new(demo::NAMES)
}

enum Failure {
    Usage(String),
    Input(String),
    Invariant(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Input(_) => 3,
            Failure::Invariant(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Input(m) | Failure::Invariant(m) => m,
        }
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        let msg = e.to_string();
        match e {
            SimError::Config(_) | SimError::Trace(_) => Failure::Input(msg),
            SimError::SchemeMismatch(_) => Failure::Usage(msg),
            SimError::Tuner(t) if matches!(*t, TunerError::Store { .. }) => Failure::Input(msg),
            _ => Failure::Invariant(msg),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Input(e.to_string())
    }
}

impl From<TraceError> for Failure {
    fn from(e: TraceError) -> Self {
        Failure::Input(e.to_string())
    }
}

impl From<TunerError> for Failure {
    fn from(e: TunerError) -> Self {
        match e {
            TunerError::Store { .. } => Failure::Input(e.to_string()),
            TunerError::Sim(s) => s.into(),
            other => Failure::Invariant(other.to_string()),
        }
    }
}

fn io_failure(path: &Path, e: io::Error) -> Failure {
    Failure::Input(format!("{}: {e}", path.display()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("lars: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let base = match &cli.config {
        Some(path) => load_config(path)?,
        None => Config::bundled(),
    };
    match cli.command {
        Command::Simulate(a) => simulate(base, a),
        Command::Sweep(a) => table(base, a, report::sweep),
        Command::Compare(a) => table(base, a, report::compare),
        Command::Tune(a) => tune(base, a),
        Command::GenTrace(a) => gen_trace(a),
    }
}

struct Loaded {
    records: Vec<TraceRecord>,
    app: AppId,
    demo: Option<DemoWorkload>,
}

fn load_input(input: &Input) -> Result<Loaded, Failure> {
    if let Some(name) = &input.demo {
        let mut w =
            demo::by_name(name).ok_or_else(|| Failure::Usage(format!("unknown demo `{name}`")))?;
        if let Some(seed) = input.seed {
            w = w.reseeded(seed);
        }
        let records = w.records().map_err(|e| Failure::Input(e.to_string()))?;
        let app = AppId::from_records(&w.name, &records);
        return Ok(Loaded {
            records,
            app,
            demo: Some(w),
        });
    }
    let path = input
        .trace
        .as_ref()
        .expect("clap requires --trace or --demo");
    let records = load_trace(path)?;
    let app = AppId::from_file(path).map_err(|e| io_failure(path, e))?;
    Ok(Loaded {
        records,
        app,
        demo: None,
    })
}

/// Demo workloads bring their own tuning interval unless one was given.
fn prepare_config(mut cfg: Config, loaded: &Loaded, flags: &TunerFlags) -> Result<Config, Failure> {
    if let Some(w) = &loaded.demo {
        cfg.tuner.tuning_interval_instructions = w.tuning_interval;
    }
    if let Some(t) = flags.tuner {
        cfg.tuner.algorithm = match t {
            TunerArg::Sampling => Algorithm::Sampling,
            TunerArg::Optimal => Algorithm::Optimal,
            TunerArg::Miss => Algorithm::Miss,
            TunerArg::MissLb => Algorithm::MissLb,
        };
    }
    if let Some(o) = flags.objective {
        cfg.tuner.objective = match o {
            ObjectiveArg::Energy => Objective::Energy,
            ObjectiveArg::Latency => Objective::Latency,
            ObjectiveArg::Edp => Objective::Edp,
        };
    }
    if let Some(i) = flags.interval {
        cfg.tuner.tuning_interval_instructions = i;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn retention_index(cfg: &Config, text: &str) -> Result<usize, Failure> {
    let r = parse_duration(text).map_err(|e| Failure::Usage(e.to_string()))?;
    cfg.units.index_of(r).ok_or_else(|| {
        let known: Vec<String> = cfg
            .units
            .units()
            .iter()
            .map(|u| format_duration(u.retention_s))
            .collect();
        Failure::Usage(format!(
            "no unit with retention {text}; configured: {}",
            known.join(", ")
        ))
    })
}

fn emit(text: &str, out: Option<&Path>) -> Result<(), Failure> {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| io_failure(path, e)),
        None => io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| Failure::Input(format!("stdout: {e}"))),
    }
}

fn emit_report(rep: &Report, output: &Output) -> Result<(), Failure> {
    let text = match output.format {
        Format::Csv => rep.to_csv(),
        Format::Json => rep.to_json(),
    };
    emit(&text, output.out.as_deref())
}

fn load_history(path: Option<&Path>) -> Result<TunerState, Failure> {
    Ok(match path {
        Some(p) => TunerState::load(p)?,
        None => TunerState::default(),
    })
}

fn simulate(base: Config, a: SimulateArgs) -> Result<(), Failure> {
    let loaded = load_input(&a.input)?;
    let mut cfg = prepare_config(base, &loaded, &a.tuner)?;
    let kind = SchemeKind::from(a.scheme);
    let mut scheme = SchemeConfig {
        scheme: kind,
        ..cfg.scheme.clone()
    };
    if let Some(r) = &a.retention {
        scheme.fixed_retention_index = Some(retention_index(&cfg, r)?);
    } else if matches!(kind, SchemeKind::Lars | SchemeKind::LarsDrsSynergy) {
        scheme.fixed_retention_index = None;
    } else if matches!(kind, SchemeKind::SttFixed | SchemeKind::DrsPerfect)
        && scheme.fixed_retention_index.is_none()
    {
        return Err(Failure::Usage(format!(
            "--retention is required for --scheme {}",
            kind.name()
        )));
    }
    cfg.scheme = scheme;

    let mut state = load_history(a.history.as_deref())?;
    let run = run_scheme_stream(
        &cfg,
        loaded.records.iter().copied().map(Ok),
        Some(&loaded.app),
        &mut state,
    )?;
    if let Some(p) = &a.history {
        state.save(p)?;
    }
    let mut row = ReportRow::from_run(kind.name(), &run);
    if kind == SchemeKind::Lars && a.retention.is_none() {
        row.tuner = Some(cfg.tuner.algorithm);
    }
    emit_report(&Report::new(vec![row]), &a.output)
}

fn table(
    base: Config,
    a: TableArgs,
    build: fn(&Config, &[TraceRecord], usize) -> Result<Report, SimError>,
) -> Result<(), Failure> {
    let loaded = load_input(&a.input)?;
    let cfg = prepare_config(base, &loaded, &a.tuner)?;
    let drs = match &a.retention {
        Some(r) => retention_index(&cfg, r)?,
        None => report::drs_default_index(&cfg),
    };
    let rep = build(&cfg, &loaded.records, drs)?;
    emit_report(&rep, &a.output)
}

fn tune(base: Config, a: TuneArgs) -> Result<(), Failure> {
    let loaded = load_input(&a.input)?;
    let mut cfg = prepare_config(base, &loaded, &a.tuner)?;
    cfg.scheme.scheme = SchemeKind::Lars;
    cfg.scheme.fixed_retention_index = None;
    let mut state = load_history(a.history.as_deref())?;
    let run = run_scheme_stream(
        &cfg,
        loaded.records.iter().copied().map(Ok),
        Some(&loaded.app),
        &mut state,
    )?;
    if let Some(p) = &a.history {
        state.save(p)?;
    }
    let details = run.lars.expect("LARS runs report details");
    let doc = serde_json::json!({
        "app": loaded.app.as_str(),
        "algorithm": cfg.tuner.algorithm.name(),
        "final_retention_s": cfg.units.retention(details.final_unit),
        "details": details,
    });
    let text = serde_json::to_string_pretty(&doc).expect("serializable") + "\n";
    emit(&text, a.out.as_deref())
}

fn parse_dist(text: &str, timed: bool) -> Result<Dist, Failure> {
    let scale = |s: &str| {
        if timed {
            parse_duration(s).ok()
        } else {
            s.parse::<f64>().ok()
        }
    };
    Dist::parse_with(text, scale)
        .ok_or_else(|| Failure::Usage(format!("cannot parse distribution `{text}`")))
}

fn gen_trace(a: GenArgs) -> Result<(), Failure> {
    let records = if let Some(name) = &a.demo {
        let w = demo::by_name(name)
            .expect("clap checked the name")
            .reseeded(a.seed);
        w.records().map_err(|e| Failure::Usage(e.to_string()))?
    } else {
        let spec = WorkloadSpec {
            num_blocks: a.num_blocks,
            working_set_bytes: a.working_set,
            line_size_bytes: a.line_size,
            write_fraction: a.write_fraction,
            inter_access_gap: parse_dist(&a.gap, false)?,
            reuse_lifetime: parse_dist(&a.lifetime, true)?,
            frequency_hz: a.frequency,
            seed: a.seed,
            length: a.length,
        };
        generate_trace(&spec).map_err(|e| Failure::Usage(e.to_string()))?
    };
    let mut buf = Vec::with_capacity(records.len() * 20);
    write_trace(&mut buf, &records).expect("writing to memory");
    match &a.out {
        Some(path) => fs::write(path, &buf).map_err(|e| io_failure(path, e)),
        None => io::stdout()
            .write_all(&buf)
            .map_err(|e| Failure::Input(format!("stdout: {e}"))),
    }
}
