//! CSV tables and SVG figures for a finished matrix.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use super::episode::write_trace;
use super::matrix::MatrixOutput;
use super::metrics::{aggregate, AggregateRow, RunSummary};
use crate::netchan::LatencySample;
use crate::world::{build_route, sample_markings, RouteId};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("nothing to report")]
    Empty,
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> ReportError + '_ {
    move |source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> ReportError + '_ {
    move |source| ReportError::Csv {
        path: path.to_path_buf(),
        source,
    }
}

/// File-name-safe form of a condition or route name.
pub fn slug(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' || c == '-' { c } else { '_' })
        .collect()
}

fn write_rows<T: serde::Serialize>(path: &Path, rows: &[T]) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    for r in rows {
        w.serialize(r).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn write_aggregate(path: &Path, rows: &[AggregateRow]) -> Result<(), ReportError> {
    write_rows(path, rows)
}

pub fn write_runs(path: &Path, runs: &[RunSummary]) -> Result<(), ReportError> {
    write_rows(path, runs)
}

pub fn read_runs(path: &Path) -> Result<Vec<RunSummary>, ReportError> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    r.deserialize().collect::<Result<_, _>>().map_err(csv_err(path))
}

pub fn write_latency(path: &Path, samples: &[LatencySample]) -> Result<(), ReportError> {
    write_rows(path, samples)
}

/// Files written by [`emit_report`], relative to the output directory.
pub const AGGREGATE_CSV: &str = "aggregate.csv";
pub const RUNS_CSV: &str = "runs.csv";
pub const DEGRADATION_SVG: &str = "degradation.svg";

/// Write aggregate and per-run tables, latency samples per condition,
/// trajectory overlays per route and the degradation curve.
pub fn emit_report(out: &MatrixOutput, dir: &Path) -> Result<Vec<PathBuf>, ReportError> {
    if out.runs.is_empty() {
        return Err(ReportError::Empty);
    }
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut written = Vec::new();

    let p = dir.join(AGGREGATE_CSV);
    write_aggregate(&p, &out.aggregates)?;
    written.push(p);
    let p = dir.join(RUNS_CSV);
    write_runs(&p, &out.summaries())?;
    written.push(p);

    for cond in &out.conditions {
        let samples: Vec<LatencySample> = out
            .runs
            .iter()
            .filter(|r| r.summary.condition == cond.name)
            .flat_map(|r| r.latency.iter().copied())
            .collect();
        let p = dir.join(format!("latency_{}.csv", slug(&cond.name)));
        write_latency(&p, &samples)?;
        written.push(p);
    }

    let mut routes: Vec<RouteId> = out.runs.iter().map(|r| r.route).collect();
    routes.sort();
    routes.dedup();
    for route in routes {
        let p = dir.join(format!("trajectories_{}.svg", slug(route.as_str())));
        fs::write(&p, trajectory_svg(out, route)).map_err(io_err(&p))?;
        written.push(p);
    }

    let p = dir.join(DEGRADATION_SVG);
    fs::write(&p, degradation_svg(&out.aggregates)).map_err(io_err(&p))?;
    written.push(p);

    if out.runs.iter().any(|r| r.trace.is_some()) {
        let tdir = dir.join("traces");
        fs::create_dir_all(&tdir).map_err(io_err(&tdir))?;
        for r in &out.runs {
            if let Some(trace) = &r.trace {
                let s = &r.summary;
                let p = tdir.join(format!("{}_{}_rep{}.csv", slug(&s.condition), slug(&s.route), s.rep));
                let f = fs::File::create(&p).map_err(io_err(&p))?;
                write_trace(trace, io::BufWriter::new(f)).map_err(csv_err(&p))?;
                written.push(p);
            }
        }
    }
    Ok(written)
}

/// Recompute the aggregate table from a directory's `runs.csv` and rewrite
/// its `aggregate.csv`.
pub fn report_from_dir(dir: &Path) -> Result<Vec<AggregateRow>, ReportError> {
    let runs = read_runs(&dir.join(RUNS_CSV))?;
    if runs.is_empty() {
        return Err(ReportError::Empty);
    }
    let rows = aggregate(&runs);
    write_aggregate(&dir.join(AGGREGATE_CSV), &rows)?;
    Ok(rows)
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#d62728", "#17becf", "#bcbd22",
];

struct View {
    min: [f64; 2],
    scale: f64,
    height: f64,
    pad: f64,
}

impl View {
    fn fit(points: &[[f64; 2]], size: f64, pad: f64) -> Self {
        let mut min = [f64::INFINITY; 2];
        let mut max = [f64::NEG_INFINITY; 2];
        for p in points {
            for a in 0..2 {
                min[a] = min[a].min(p[a]);
                max[a] = max[a].max(p[a]);
            }
        }
        let span = (max[0] - min[0]).max(max[1] - min[1]).max(1.0);
        let scale = (size - 2.0 * pad) / span;
        View {
            min,
            scale,
            height: (max[1] - min[1]) * scale + 2.0 * pad,
            pad,
        }
    }

    fn map(&self, p: [f64; 2]) -> (f64, f64) {
        (
            self.pad + (p[0] - self.min[0]) * self.scale,
            self.height - self.pad - (p[1] - self.min[1]) * self.scale,
        )
    }

    fn polyline(&self, pts: impl Iterator<Item = [f64; 2]>) -> String {
        let mut s = String::new();
        for p in pts {
            let (x, y) = self.map(p);
            let _ = write!(s, "{x:.2},{y:.2} ");
        }
        s.pop();
        s
    }
}

/// Every path is decimated to one point in ten, always keeping the last.
fn decimate(path: &[[f64; 2]]) -> impl Iterator<Item = [f64; 2]> + '_ {
    let last = path.len().saturating_sub(1);
    path.iter()
        .enumerate()
        .filter(move |(i, _)| i % 10 == 0 || *i == last)
        .map(|(_, p)| *p)
}

/// All runs of `route`, colored by condition, with the reference run thick
/// and every non-completed run's end point marked.
pub fn trajectory_svg(out: &MatrixOutput, route: RouteId) -> String {
    let geom = build_route(route);
    let marks = sample_markings(&geom, (0.0, geom.total_length()), 1.0).expect("valid range");
    let runs: Vec<_> = out.runs.iter().filter(|r| r.route == route).collect();
    let mut all: Vec<[f64; 2]> = marks.left.iter().chain(&marks.right).copied().collect();
    for r in &runs {
        all.extend(r.path.iter().copied());
    }
    let view = View::fit(&all, 800.0, 40.0);
    let color = |cond: &str| {
        let i = out.conditions.iter().position(|c| c.name == cond).unwrap_or(0);
        PALETTE[i % PALETTE.len()]
    };

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="800" height="{h:.0}" viewBox="0 0 800 {h:.0}">"#,
        h = view.height
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="10" y="20" font-family="sans-serif" font-size="14">Route {route}</text>"#);
    for side in [&marks.left, &marks.right] {
        let _ = writeln!(
            s,
            r##"<polyline fill="none" stroke="#999" stroke-width="1" points="{}"/>"##,
            view.polyline(side.iter().copied())
        );
    }
    let _ = writeln!(
        s,
        r##"<polyline fill="none" stroke="#ccc" stroke-width="1" stroke-dasharray="4 4" points="{}"/>"##,
        view.polyline(marks.center.iter().copied())
    );
    for r in &runs {
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{}" stroke-width="1" stroke-opacity="0.7" points="{}"/>"#,
            color(&r.summary.condition),
            view.polyline(decimate(&r.path))
        );
    }
    if let Some(r) = out.reference_run(route) {
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="black" stroke-width="3" points="{}"/>"#,
            view.polyline(decimate(&r.path))
        );
    }
    for r in runs.iter().filter(|r| !r.summary.completed) {
        if let Some(&end) = r.path.last() {
            let (x, y) = view.map(end);
            let _ = writeln!(
                s,
                r#"<path d="M{:.2},{:.2}l10,10m0,-10l-10,10" stroke="{}" stroke-width="2"/>"#,
                x - 5.0,
                y - 5.0,
                color(&r.summary.condition)
            );
        }
    }
    for (i, c) in out.conditions.iter().enumerate() {
        let y = 40 + 18 * i;
        let _ = writeln!(
            s,
            r#"<rect x="10" y="{}" width="12" height="12" fill="{}"/><text x="28" y="{}" font-family="sans-serif" font-size="12">{}</text>"#,
            y,
            color(&c.name),
            y + 11,
            c.name
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Completion rate and mean P95 (completed runs only) against condition.
pub fn degradation_svg(rows: &[AggregateRow]) -> String {
    let (w, h, pad) = (640.0, 400.0, 60.0);
    let n = rows.len().max(1);
    let x_of = |i: usize| pad + (w - 2.0 * pad) * (i as f64 + 0.5) / n as f64;
    let p95_max = rows
        .iter()
        .filter_map(|r| r.p95_over_completed)
        .fold(0.0f64, f64::max)
        .max(0.1);
    let y_comp = |c: f64| h - pad - (h - 2.0 * pad) * c / 100.0;
    let y_p95 = |p: f64| h - pad - (h - 2.0 * pad) * p / p95_max;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<line x1="{pad}" y1="{b}" x2="{r}" y2="{b}" stroke="black"/><line x1="{pad}" y1="{pad}" x2="{pad}" y2="{b}" stroke="black"/><line x1="{r}" y1="{pad}" x2="{r}" y2="{b}" stroke="black"/>"#,
        b = h - pad,
        r = w - pad
    );
    let _ = writeln!(
        s,
        r##"<text x="10" y="30" font-family="sans-serif" font-size="12" fill="#1f77b4">completion (%)</text><text x="{}" y="30" font-family="sans-serif" font-size="12" fill="#ff7f0e" text-anchor="end">P95 completed (m, max {:.3})</text>"##,
        w - 10.0,
        p95_max
    );
    for (i, r) in rows.iter().enumerate() {
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="12" text-anchor="middle">{}</text>"#,
            x_of(i),
            h - pad + 20.0,
            r.condition
        );
    }
    let comp: Vec<String> = rows
        .iter()
        .enumerate()
        .map(|(i, r)| format!("{:.2},{:.2}", x_of(i), y_comp(r.completion_pct)))
        .collect();
    let _ = writeln!(
        s,
        r##"<polyline fill="none" stroke="#1f77b4" stroke-width="2" points="{}"/>"##,
        comp.join(" ")
    );
    for (i, r) in rows.iter().enumerate() {
        let _ = writeln!(
            s,
            r##"<circle cx="{:.2}" cy="{:.2}" r="4" fill="#1f77b4"/>"##,
            x_of(i),
            y_comp(r.completion_pct)
        );
        if let Some(p) = r.p95_over_completed {
            let _ = writeln!(
                s,
                r##"<rect x="{:.2}" y="{:.2}" width="8" height="8" fill="#ff7f0e"/>"##,
                x_of(i) - 4.0,
                y_p95(p) - 4.0
            );
        }
    }
    let p95: Vec<String> = rows
        .iter()
        .enumerate()
        .filter_map(|(i, r)| r.p95_over_completed.map(|p| format!("{:.2},{:.2}", x_of(i), y_p95(p))))
        .collect();
    if p95.len() > 1 {
        let _ = writeln!(
            s,
            r##"<polyline fill="none" stroke="#ff7f0e" stroke-width="2" stroke-dasharray="6 3" points="{}"/>"##,
            p95.join(" ")
        );
    }
    s.push_str("</svg>\n");
    s
}
