//! `teleop`: run episodes, sweeps and latency checks from the shell.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use teleop_core::camera::Renderer;
use teleop_core::harness::{
    emit_report, report_from_dir, run_episode, run_matrix_with, verify_latency, write_trace, AggregateRow,
    EpisodeConfig, ExperimentConfig, LatencyCondition, LatencyReport, SimSettings,
};
use teleop_core::harness::report::write_latency;
use teleop_core::netchan::ClockModel;
use teleop_core::vehicle::VehicleState;
use teleop_core::vision::LanePipeline;
use teleop_core::world::{build_route, RouteId};

#[derive(Parser)]
#[command(name = "teleop", version, about = "Closed-loop teleoperation latency testbed")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one closed-loop episode and write its trace.
    Run {
        #[arg(long)]
        route: RouteId,
        /// L0..L5, or `<video ms>,<control ms>` of injected delay.
        #[arg(long)]
        condition: LatencyCondition,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// JSON file with simulation settings (any subset of fields).
        #[arg(long)]
        settings: Option<PathBuf>,
    },
    /// Run the condition x route x repetition matrix and write the report.
    Sweep {
        /// JSON experiment config; defaults to the full 180-run matrix.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Worker threads; defaults to the available parallelism.
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Push stamped frames through the channels and report one-way latency.
    VerifyLatency {
        #[arg(long)]
        condition: LatencyCondition,
        #[arg(long, default_value_t = 500)]
        samples: usize,
        /// Server clock offset in ms.
        #[arg(long, default_value_t = 0, allow_hyphen_values = true)]
        server_offset_ms: i64,
        /// Client clock offset in ms.
        #[arg(long, default_value_t = 0, allow_hyphen_values = true)]
        client_offset_ms: i64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the samples as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recompute the aggregate table from a sweep directory's runs.csv.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Dump route geometry as JSON.
    Route {
        #[arg(long)]
        route: RouteId,
        #[arg(long, default_value_t = 1.0)]
        step: f64,
    },
    /// Render the camera view at a point on a route as PGM.
    Render {
        #[arg(long)]
        route: RouteId,
        /// Arc length along the route, m.
        #[arg(long, default_value_t = 0.0)]
        s: f64,
        /// Lateral offset from the centerline, m, positive left.
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        offset: f64,
        /// Heading relative to the centerline, degrees.
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        yaw: f64,
        #[arg(long)]
        out: PathBuf,
        /// Also write the bird's-eye occupancy grid as PGM.
        #[arg(long)]
        bev: Option<PathBuf>,
    },
}

fn main() -> Result<()> {
    match Cli::parse().cmd {
        Cmd::Run {
            route,
            condition,
            seed,
            out,
            settings,
        } => cmd_run(route, condition, seed, &out, settings.as_deref()),
        Cmd::Sweep { config, out, threads } => cmd_sweep(config.as_deref(), &out, threads),
        Cmd::VerifyLatency {
            condition,
            samples,
            server_offset_ms,
            client_offset_ms,
            seed,
            out,
        } => cmd_verify(
            &condition,
            samples,
            ClockModel::new(server_offset_ms * 1_000_000, client_offset_ms * 1_000_000),
            seed,
            out.as_deref(),
        ),
        Cmd::Report { input } => cmd_report(&input),
        Cmd::Route { route, step } => {
            if step.is_nan() || step <= 0.0 {
                bail!("--step must be positive");
            }
            println!("{}", serde_json::to_string_pretty(&build_route(route).to_json(step))?);
            Ok(())
        }
        Cmd::Render {
            route,
            s,
            offset,
            yaw,
            out,
            bev,
        } => cmd_render(route, s, offset, yaw, &out, bev.as_deref()),
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    Ok(BufWriter::new(
        fs::File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn cmd_run(route: RouteId, condition: LatencyCondition, seed: u64, out: &Path, settings: Option<&Path>) -> Result<()> {
    let sim: SimSettings = match settings {
        Some(p) => read_json(p)?,
        None => SimSettings::default(),
    };
    let cfg = EpisodeConfig {
        route,
        condition,
        seed,
        sim,
    };
    let result = run_episode(&cfg)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write_trace(&result.trace, create(&out.join("trace.csv"))?)?;
    write_latency(&out.join("latency.csv"), &result.latency)?;
    let summary = serde_json::json!({
        "config": cfg,
        "summary": result.summary,
        "events": result.events,
    });
    let mut f = create(&out.join("summary.json"))?;
    serde_json::to_writer_pretty(&mut f, &summary)?;
    writeln!(f)?;
    let s = &result.summary;
    println!(
        "{} {} seed {}: {:?} after {:.2} s, lane invasions {}, MAE {:.3} m, P95 {:.3} m",
        s.route, s.condition, s.seed, s.outcome, s.duration_s, s.lane_invasions, s.mae, s.p95
    );
    Ok(())
}

fn print_aggregate(rows: &[AggregateRow]) {
    println!("{:<8} {:>8} {:>6} {:>8} {:>8}", "cond", "comp_%", "coll", "laneinv", "p95_m");
    for r in rows {
        let p95 = r
            .p95_over_completed
            .map_or_else(|| "NA".to_string(), |p| format!("{p:.3}"));
        println!(
            "{:<8} {:>8.1} {:>6.2} {:>8.2} {:>8}",
            r.condition, r.completion_pct, r.mean_departures, r.mean_lane_invasions, p95
        );
    }
}

fn cmd_sweep(config: Option<&Path>, out: &Path, threads: Option<usize>) -> Result<()> {
    let cfg: ExperimentConfig = match config {
        Some(p) => read_json(p)?,
        None => ExperimentConfig::default(),
    };
    let threads = threads.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let output = run_matrix_with(&cfg, threads, |done, total, s| {
        eprintln!(
            "[{done}/{total}] {} {} rep {}: {:?}",
            s.condition, s.route, s.rep, s.outcome
        );
    })?;
    emit_report(&output, out)?;
    print_aggregate(&output.aggregates);
    println!("report written to {}", out.display());
    Ok(())
}

fn ms(ns: i64) -> f64 {
    ns as f64 / 1e6
}

fn print_latency(r: &LatencyReport) {
    for (name, stats) in [("video", r.video), ("control", r.control)] {
        match stats {
            Some(s) => println!(
                "{:<8} n={:<5} min {:>8.3} ms  median {:>8.3} ms  p95 {:>8.3} ms  max {:>8.3} ms",
                name,
                s.n,
                ms(s.min_ns),
                ms(s.median_ns),
                ms(s.p95_ns),
                ms(s.max_ns)
            ),
            None => println!("{name:<8} no samples"),
        }
    }
    println!(
        "offset   true {:.3} ms  probe estimate {:.3} ms",
        ms(r.offset_true_ns),
        ms(r.offset_estimate_ns)
    );
}

fn cmd_verify(cond: &LatencyCondition, samples: usize, clocks: ClockModel, seed: u64, out: Option<&Path>) -> Result<()> {
    let sim = SimSettings {
        clocks,
        ..SimSettings::default()
    };
    let report = verify_latency(cond, samples, &sim, seed)?;
    println!("condition {cond}");
    print_latency(&report);
    if let Some(p) = out {
        write_latency(p, &report.samples)?;
    }
    Ok(())
}

fn cmd_report(dir: &Path) -> Result<()> {
    let rows = report_from_dir(dir)?;
    print_aggregate(&rows);
    Ok(())
}

fn cmd_render(route: RouteId, s: f64, offset: f64, yaw: f64, out: &Path, bev: Option<&Path>) -> Result<()> {
    let sim = SimSettings::default();
    let geom = build_route(route);
    let ([x, y], h) = geom.pose_at(s);
    let pose = VehicleState::new(x - h.sin() * offset, y + h.cos() * offset, h + yaw.to_radians(), 0.0, s);
    let frame = Renderer::new(sim.camera).render(&geom, &pose);
    frame.write_pgm(create(out)?)?;
    if let Some(p) = bev {
        LanePipeline::new(&sim.camera, sim.vision).bev(&frame).write_pgm(create(p)?)?;
    }
    let _ = io::stdout().flush();
    Ok(())
}
