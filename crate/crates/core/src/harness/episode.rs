//! Virtual-time closed-loop episode: camera -> video channel -> lane keeper
//! -> control channel -> vehicle, all on integer-nanosecond true time.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{ConfigError, EpisodeConfig};
use super::metrics::{compute_metrics, nearest_rank, ErrorMetrics, RunSummary};
use crate::camera::{embed_timestamp, extract_timestamp, Frame, Renderer};
use crate::control::{ControlCommand, Controller, SafetyMode};
use crate::netchan::{
    measure_control_latency, measure_video_latency, DelayChannel, Endpoint, LatencyChannel, LatencySample,
};
use crate::vehicle::{step, EpisodeEvent, EventKind, EventThresholds, EventTracker, VehicleState, DEPARTURE_THRESHOLD_M};
use crate::vision::LanePipeline;
use crate::world::{build_route, locate, CenterlineQuery, RouteGeometry};

/// One physics tick. The command columns are what is applied over the
/// following tick; `frame_age_ms` is the age of that command's source frame
/// at application time (empty before the first command arrives).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub speed: f64,
    pub e: f64,
    pub heading_error: f64,
    pub steering: f64,
    pub throttle: f64,
    pub brake: f64,
    pub frame_age_ms: Option<f64>,
    pub s: f64,
    pub s_progress: f64,
    pub lane_valid: bool,
    pub lane_confidence: f64,
    pub mode: SafetyMode,
}

/// Everything an episode produced.
#[derive(Debug, Clone)]
pub struct EpisodeResult {
    pub trace: Vec<TraceRow>,
    pub events: Vec<EpisodeEvent>,
    pub outcome: EpisodeEvent,
    pub latency: Vec<LatencySample>,
    /// True delivery time of every video frame, in delivery order.
    pub video_deliveries: Vec<u64>,
    pub metrics: ErrorMetrics,
    pub summary: RunSummary,
}

struct VideoMsg {
    frame: Frame,
    speed: f64,
}

/// Rows whose progress mark lies inside `window`.
pub fn scored_errors(trace: &[TraceRow], window: (f64, f64)) -> Vec<f64> {
    trace
        .iter()
        .filter(|r| r.s_progress >= window.0 && r.s_progress <= window.1)
        .map(|r| r.e)
        .collect()
}

fn median_p95_ms(samples: &[LatencySample], channel: LatencyChannel) -> (Option<f64>, Option<f64>) {
    let mut taus: Vec<i64> = samples
        .iter()
        .filter(|s| s.channel == channel)
        .map(|s| s.tau_ns)
        .collect();
    taus.sort_unstable();
    let ms = |v: Option<i64>| v.map(|ns| ns as f64 / 1e6);
    (ms(nearest_rank(&taus, 50.0)), ms(nearest_rank(&taus, 95.0)))
}

/// Start pose at the window start, shifted and rotated by the seeded
/// perturbation. Returns the state and the camera phase in ticks.
fn initial_state(cfg: &EpisodeConfig, route: &RouteGeometry) -> (VehicleState, u64) {
    let p = &cfg.sim.perturbation;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let lat = rng.random_range(-1.0..=1.0) * p.lateral_m;
    let dh = rng.random_range(-1.0..=1.0) * p.heading_deg.to_radians();
    let phase = if p.camera_phase {
        rng.random_range(0..cfg.sim.rates.ticks_per_frame())
    } else {
        0
    };
    let s0 = route.scoring_window().0;
    let ([x, y], h) = route.pose_at(s0);
    let state = VehicleState::new(
        x - h.sin() * lat,
        y + h.cos() * lat,
        h + dh,
        cfg.sim.controller.target_speed,
        s0,
    );
    (state, phase)
}

/// Run one closed-loop episode. Failures of the driving task are outcomes,
/// only an invalid configuration is an error.
pub fn run_episode(cfg: &EpisodeConfig) -> Result<EpisodeResult, ConfigError> {
    cfg.validate()?;
    let sim = &cfg.sim;
    let route = build_route(cfg.route);
    let window = route.scoring_window();
    let budget = 3.0 * (window.1 - window.0) / sim.controller.target_speed;
    let clocks = sim.clocks;
    let delta = clocks.delta();
    let tick_ns = sim.rates.tick_ns();
    let dt = tick_ns as f64 * 1e-9;
    let tpf = sim.rates.ticks_per_frame();
    let processing_ns = sim.processing_ns();

    let renderer = Renderer::new(sim.camera);
    let mut controller = Controller::new(
        sim.controller,
        sim.limits,
        LanePipeline::new(&sim.camera, sim.vision),
        1.0 / sim.rates.camera_hz as f64,
    );
    let mut video: DelayChannel<VideoMsg> = DelayChannel::new(sim.channel.video(&cfg.condition, cfg.seed));
    let mut control: DelayChannel<ControlCommand> = DelayChannel::new(sim.channel.control(&cfg.condition, cfg.seed));

    let (mut state, phase) = initial_state(cfg, &route);
    let mut query: CenterlineQuery = locate(&route, state.position(), state.heading)
        .expect("start pose lies on the route");
    let mut tracker = EventTracker::new(
        EventThresholds {
            departure: DEPARTURE_THRESHOLD_M,
            budget,
        },
        query.cross_track_e,
    );

    let mut held: Option<ControlCommand> = None;
    let mut last_policy: Option<(bool, f64, SafetyMode)> = None;
    let mut trace = Vec::new();
    let mut latency = Vec::new();
    let mut video_deliveries = Vec::new();
    let mut frame_seq: u32 = 0;
    let max_ticks = (budget / dt).ceil() as u64 + 2;

    let mut k: u64 = 0;
    loop {
        let now = sim.epoch_ns + k * tick_ns;

        for d in video.poll(now) {
            video_deliveries.push(d.delivered_at);
            let recv_client = clocks.local_time(Endpoint::Client, d.delivered_at);
            let mut age_ms = f64::INFINITY;
            if let Ok(stamp) = extract_timestamp(&d.payload.frame) {
                let sample = measure_video_latency(recv_client, stamp, delta);
                age_ms = sample.tau_ns as f64 / 1e6 + sim.processing_ms;
                latency.push(sample);
            }
            let tx_true = d.delivered_at + processing_ns;
            let out = controller.policy_step(
                &d.payload.frame,
                age_ms,
                d.payload.speed,
                recv_client,
                clocks.local_time(Endpoint::Client, tx_true),
            );
            last_policy = Some((out.estimate.valid, out.estimate.confidence, out.mode));
            control
                .send(out.command, tx_true)
                .expect("command sends follow frame deliveries in time order");
        }

        for d in control.poll(now) {
            let rx_server = clocks.local_time(Endpoint::Server, d.delivered_at);
            latency.push(measure_control_latency(rx_server, d.payload.tx_ts_client_ns, delta));
            held = Some(d.payload);
        }

        let server_now = clocks.local_time(Endpoint::Server, now);
        if k >= phase && (k - phase).is_multiple_of(tpf) {
            let mut frame = renderer.render(&route, &state);
            frame.seq = frame_seq;
            frame_seq = frame_seq.wrapping_add(1);
            let frame = embed_timestamp(frame, server_now).expect("camera frames hold the stamp");
            video
                .send(VideoMsg { frame, speed: state.speed }, now)
                .expect("capture times increase");
        }

        let cmd = held.unwrap_or_default();
        let (lane_valid, lane_confidence, mode) = last_policy.unwrap_or((false, 0.0, SafetyMode::Normal));
        trace.push(TraceRow {
            t: k as f64 * dt,
            x: state.x,
            y: state.y,
            heading: state.heading,
            speed: state.speed,
            e: query.cross_track_e,
            heading_error: query.heading_error,
            steering: cmd.steering,
            throttle: cmd.throttle,
            brake: cmd.brake,
            frame_age_ms: held.map(|c| (server_now as i128 - c.source_frame_ts_ns as i128) as f64 / 1e6),
            s: query.s,
            s_progress: state.s_progress,
            lane_valid,
            lane_confidence,
            mode,
        });

        if tracker.finished().is_some() {
            break;
        }

        state = step(&state, &cmd, &sim.limits, dt);
        k += 1;
        let t = k as f64 * dt;
        match locate(&route, state.position(), state.heading) {
            Ok(q) => {
                query = q;
                state.record_progress(q.s);
                tracker.observe(&state, &query, &route, t);
            }
            Err(_) => tracker.force_terminal(EpisodeEvent {
                kind: EventKind::RoadDeparture,
                time: t,
                s: query.s,
            }),
        }
        if k > max_ticks {
            tracker.force_terminal(EpisodeEvent {
                kind: EventKind::Timeout,
                time: t,
                s: query.s,
            });
        }
    }

    let outcome = tracker.finished().expect("loop exits on a terminal event");
    let scored = scored_errors(&trace, window);
    let metrics = compute_metrics(&scored).expect("the first row is always scored");
    let (tau_v_median_ms, tau_v_p95_ms) = median_p95_ms(&latency, LatencyChannel::Video);
    let (tau_c_median_ms, _) = median_p95_ms(&latency, LatencyChannel::Control);
    let summary = RunSummary {
        condition: cfg.condition.name.clone(),
        route: cfg.route.to_string(),
        rep: 0,
        seed: cfg.seed,
        outcome: outcome.kind,
        completed: outcome.kind == EventKind::Completed,
        aborted_departure: outcome.kind == EventKind::RoadDeparture,
        lane_invasions: tracker.lane_invasions() as u32,
        mae: metrics.mae,
        rms: metrics.rms,
        p95: metrics.p95,
        max_abs_e: metrics.max_abs_e,
        tau_v_median_ms,
        tau_v_p95_ms,
        tau_c_median_ms,
        duration_s: outcome.time,
    };
    Ok(EpisodeResult {
        trace,
        events: tracker.events().to_vec(),
        outcome,
        latency,
        video_deliveries,
        metrics,
        summary,
    })
}

/// Write a trace as CSV.
pub fn write_trace<W: std::io::Write>(trace: &[TraceRow], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in trace {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}
