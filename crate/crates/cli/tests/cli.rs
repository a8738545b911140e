use std::path::Path;
use std::process::{Command, Output};

use lars_core::report::Report;

fn lars(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lars"))
        .args(args)
        .env_remove("LARS_CONFIG")
        .output()
        .expect("spawn lars")
}

fn ok(args: &[&str]) -> String {
    let out = lars(args);
    assert!(
        out.status.success(),
        "lars {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn gen(dir: &Path, seed: &str) -> String {
    let path = dir.join(format!("t{seed}.trace"));
    let p = path.to_str().unwrap();
    ok(&[
        "gen-trace",
        "--length",
        "20000",
        "--seed",
        seed,
        "--lifetime",
        "exp:2ms",
        "--out",
        p,
    ]);
    p.to_string()
}

#[test]
fn sram_never_refreshes_and_drs_matches_its_misses() {
    let dir = tempfile::tempdir().unwrap();
    let t = gen(dir.path(), "3");
    let sram = Report::from_csv(&ok(&["simulate", "--trace", &t, "--scheme", "sram"])).unwrap();
    let drs = Report::from_csv(&ok(&[
        "simulate",
        "--trace",
        &t,
        "--scheme",
        "drs",
        "--retention",
        "1ms",
    ]))
    .unwrap();
    let (s, d) = (&sram.rows[0].stats, &drs.rows[0].stats);
    assert_eq!(s.refreshes, 0);
    assert_eq!(s.misses(), d.misses());
    assert_eq!(s.writebacks, d.writebacks);
    assert_eq!(drs.rows[0].retention_s, Some(1e-3));
}

#[test]
fn lars_rows_carry_retention_and_switch_costs() {
    let dir = tempfile::tempdir().unwrap();
    let t = gen(dir.path(), "4");
    let out = ok(&[
        "simulate",
        "--trace",
        &t,
        "--scheme",
        "lars",
        "--tuner",
        "optimal",
        "--interval",
        "5000",
        "--format",
        "json",
    ]);
    let rep = Report::from_json(&out).unwrap();
    let row = &rep.rows[0];
    assert!(row.retention_s.is_some());
    assert!(row.tuner.is_some());
    assert!(row.stats.migration_cycles > 0);
    assert!(row.energy.migration_nj > 0.0);
    assert!(row.excluding_switches.total_nj < row.energy.total_nj);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let t = gen(dir.path(), "5");
    assert_eq!(
        lars(&["simulate", "--trace", &t, "--scheme", "stt"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        lars(&[
            "simulate",
            "--trace",
            &t,
            "--scheme",
            "stt",
            "--retention",
            "3ms"
        ])
        .status
        .code(),
        Some(2)
    );
    assert_eq!(
        lars(&["simulate", "--scheme", "sram"]).status.code(),
        Some(2)
    );
    let missing = dir.path().join("nope.trace");
    assert_eq!(
        lars(&[
            "simulate",
            "--trace",
            missing.to_str().unwrap(),
            "--scheme",
            "sram"
        ])
        .status
        .code(),
        Some(3)
    );
    let bad = dir.path().join("bad.trace");
    std::fs::write(&bad, "10 R 0x40\n5 X zz\n").unwrap();
    assert_eq!(
        lars(&[
            "simulate",
            "--trace",
            bad.to_str().unwrap(),
            "--scheme",
            "sram"
        ])
        .status
        .code(),
        Some(3)
    );
}

#[test]
fn tables_round_trip_in_both_formats() {
    let dir = tempfile::tempdir().unwrap();
    let t = gen(dir.path(), "6");
    let sweep = Report::from_csv(&ok(&["sweep", "--trace", &t])).unwrap();
    let labels: Vec<_> = sweep.rows.iter().map(|r| r.label.as_str()).collect();
    assert_eq!(
        labels,
        [
            "sram",
            "stt-100ms",
            "stt-10ms",
            "stt-1ms",
            "stt-100us",
            "drs"
        ]
    );
    assert_eq!(sweep.row("sram").unwrap().ratios.unwrap().energy, Some(1.0));

    let out = dir.path().join("cmp.json");
    ok(&[
        "compare",
        "--trace",
        &t,
        "--format",
        "json",
        "--out",
        out.to_str().unwrap(),
    ]);
    let cmp = Report::from_json(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(cmp.rows.len(), 6);
    assert_eq!(cmp.row("drs").unwrap().ratios.unwrap().edp, Some(1.0));
    let csv = ok(&["compare", "--trace", &t]);
    assert_eq!(Report::from_csv(&csv).unwrap(), cmp);
}

#[test]
fn config_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let t = gen(dir.path(), "7");
    let cfg = dir.path().join("slow.toml");
    let text = lars_core::config::DEFAULT_CONFIG_TOML
        .replace("hit_latency_cycles = 3", "hit_latency_cycles = 9");
    assert_ne!(text, lars_core::config::DEFAULT_CONFIG_TOML);
    std::fs::write(&cfg, text).unwrap();

    let base = Report::from_csv(&ok(&["simulate", "--trace", &t, "--scheme", "sram"])).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_lars"))
        .args(["simulate", "--trace", &t, "--scheme", "sram"])
        .env("LARS_CONFIG", &cfg)
        .output()
        .unwrap();
    assert!(out.status.success());
    let slow = Report::from_csv(&String::from_utf8(out.stdout).unwrap()).unwrap();
    let hits = base.rows[0].stats.read_hits;
    assert_eq!(
        slow.rows[0].stats.total_cycles,
        base.rows[0].stats.total_cycles + 6 * hits
    );

    let broken = dir.path().join("broken.toml");
    std::fs::write(&broken, "[cache\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_lars"))
        .args(["simulate", "--trace", &t, "--scheme", "sram"])
        .env("LARS_CONFIG", &broken)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn gen_trace_is_deterministic() {
    let a = ok(&["gen-trace", "--length", "500", "--seed", "9"]);
    let b = ok(&["gen-trace", "--length", "500", "--seed", "9"]);
    let c = ok(&["gen-trace", "--length", "500", "--seed", "10"]);
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert_eq!(a.lines().count(), 500);
    let d = ok(&["gen-trace", "--demo", "low-miss-rate"]);
    assert_eq!(d, ok(&["gen-trace", "--demo", "low-miss-rate"]));
}

#[test]
fn tune_reuses_history() {
    let dir = tempfile::tempdir().unwrap();
    let t = gen(dir.path(), "8");
    let hist = dir.path().join("history.json");
    let h = hist.to_str().unwrap();
    let first: serde_json::Value = serde_json::from_str(&ok(&[
        "tune",
        "--trace",
        &t,
        "--history",
        h,
        "--interval",
        "5000",
    ]))
    .unwrap();
    assert!(hist.exists());
    assert_eq!(first["details"]["history_hit"], false);
    assert!(first["final_retention_s"].as_f64().unwrap() > 0.0);
    let second: serde_json::Value = serde_json::from_str(&ok(&[
        "tune",
        "--trace",
        &t,
        "--history",
        h,
        "--interval",
        "5000",
    ]))
    .unwrap();
    assert_eq!(second["details"]["history_hit"], true);
    assert_eq!(second["app"], first["app"]);
}
