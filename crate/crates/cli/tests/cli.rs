use std::path::Path;
use std::process::{Command, Output};

fn teleop(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_teleop"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = teleop(args);
    assert!(
        out.status.success(),
        "teleop {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).expect("utf-8 stdout")
}

fn arg(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

#[test]
fn run_writes_trace_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let stdout = ok(&["run", "--route", "A_key", "--condition", "L0", "--seed", "2", "--out", arg(dir.path())]);
    assert!(stdout.contains("Completed"), "{stdout}");

    let trace = std::fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    assert!(trace.starts_with("t,x,y,heading,speed,e,"));
    assert!(trace.lines().count() > 100);

    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["summary"]["completed"], true);
    assert_eq!(summary["summary"]["condition"], "L0");
    assert_eq!(summary["config"]["seed"], 2);
    assert!(dir.path().join("latency.csv").exists());
}

#[test]
fn run_accepts_custom_condition() {
    let dir = tempfile::tempdir().unwrap();
    let stdout = ok(&["run", "--route", "A_key", "--condition", "40,10", "--seed", "1", "--out", arg(dir.path())]);
    assert!(stdout.starts_with("A_key"), "{stdout}");
}

#[test]
fn verify_latency_reports_exact_medians() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("l4.csv");
    let stdout = ok(&[
        "verify-latency",
        "--condition",
        "L4",
        "--samples",
        "200",
        "--server-offset-ms",
        "8000",
        "--client-offset-ms",
        "-3000",
        "--out",
        arg(&csv),
    ]);
    let line = |name: &str| stdout.lines().find(|l| l.starts_with(name)).unwrap_or_default().to_string();
    assert!(line("video").contains("median  210.000 ms"), "{stdout}");
    assert!(line("control").contains("median   84.000 ms"), "{stdout}");
    assert!(std::fs::read_to_string(csv).unwrap().lines().count() > 400);
}

#[test]
fn sweep_then_report_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sweep.json");
    std::fs::write(&cfg, r#"{"conditions":["L0","L5"],"routes":["A_key"],"reps":1,"base_seed":4}"#).unwrap();
    let out = dir.path().join("report");
    let swept = ok(&["sweep", "--config", arg(&cfg), "--out", arg(&out), "--threads", "1"]);
    for f in ["aggregate.csv", "runs.csv", "degradation.svg", "trajectories_A_key.svg"] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    let agg = std::fs::read_to_string(out.join("aggregate.csv")).unwrap();
    assert!(agg.starts_with("cond,comp_pct,coll,laneinv,p95_x\nL0,100.0,"), "{agg}");

    let reported = ok(&["report", "--in", arg(&out)]);
    let table = |s: &str| s.lines().take(3).map(str::to_string).collect::<Vec<_>>();
    assert_eq!(table(&reported), table(&swept));
}

#[test]
fn route_dump_is_json() {
    let stdout = ok(&["route", "--route", "A", "--step", "5"]);
    let v: serde_json::Value = serde_json::from_str(&stdout).unwrap();
    let len = v["total_length"].as_f64().unwrap();
    assert!((len - (190.0 + 10.0 * std::f64::consts::PI)).abs() < 1e-9);
    assert_eq!(v["segments"].as_array().unwrap().len(), 3);
}

#[test]
fn render_writes_pgm() {
    let dir = tempfile::tempdir().unwrap();
    let img = dir.path().join("view.pgm");
    let bev = dir.path().join("bev.pgm");
    ok(&["render", "--route", "C", "--s", "50", "--yaw", "-2", "--out", arg(&img), "--bev", arg(&bev)]);
    let bytes = std::fs::read(&img).unwrap();
    assert!(bytes.starts_with(b"P5\n640 480\n255\n"));
    assert_eq!(bytes.len(), b"P5\n640 480\n255\n".len() + 640 * 480);
    assert!(std::fs::read(&bev).unwrap().starts_with(b"P5\n160 280\n255\n"));
}

#[test]
fn bad_arguments_fail_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let out = teleop(&["run", "--route", "Z", "--condition", "L0", "--out", arg(dir.path())]);
    assert!(!out.status.success());
    let out = teleop(&["run", "--route", "A", "--condition", "L9", "--out", arg(dir.path())]);
    assert!(!out.status.success());
    assert!(!String::from_utf8_lossy(&out.stderr).is_empty());
}
