//! Open-loop latency verification: stamped blank frames through the video
//! channel, one command back per delivered frame, and an offset probe.

use serde::Serialize;

use super::condition::LatencyCondition;
use super::config::{ConfigError, SimSettings};
use super::metrics::nearest_rank;
use crate::camera::{embed_timestamp, extract_timestamp, Frame};
use crate::control::ControlCommand;
use crate::netchan::{
    measure_control_latency, measure_video_latency, rtt_probe, DelayChannel, Endpoint, LatencyChannel,
    LatencySample,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LatencyStats {
    pub n: usize,
    pub min_ns: i64,
    pub median_ns: i64,
    pub p95_ns: i64,
    pub max_ns: i64,
}

impl LatencyStats {
    pub fn from_samples(samples: &[LatencySample], channel: LatencyChannel) -> Option<Self> {
        let mut taus: Vec<i64> = samples
            .iter()
            .filter(|s| s.channel == channel)
            .map(|s| s.tau_ns)
            .collect();
        taus.sort_unstable();
        Some(LatencyStats {
            n: taus.len(),
            min_ns: *taus.first()?,
            median_ns: nearest_rank(&taus, 50.0)?,
            p95_ns: nearest_rank(&taus, 95.0)?,
            max_ns: *taus.last()?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LatencyReport {
    pub condition: LatencyCondition,
    pub samples: Vec<LatencySample>,
    pub video: Option<LatencyStats>,
    pub control: Option<LatencyStats>,
    pub offset_true_ns: i64,
    /// Round-trip probe estimate over a symmetric pair of control-channel
    /// delays.
    pub offset_estimate_ns: i64,
}

/// Send `frames` stamped blank frames at the camera rate and answer each
/// delivered frame with one command.
pub fn verify_latency(
    condition: &LatencyCondition,
    frames: usize,
    sim: &SimSettings,
    seed: u64,
) -> Result<LatencyReport, ConfigError> {
    sim.validate()?;
    if !condition.is_valid() {
        return Err(ConfigError::Invalid("condition"));
    }
    let clocks = sim.clocks;
    let delta = clocks.delta();
    let interval = 1_000_000_000 / sim.rates.camera_hz as u64;
    let send_time = |i: usize| sim.epoch_ns + i as u64 * interval;
    let mut video: DelayChannel<Frame> = DelayChannel::new(sim.channel.video(condition, seed));
    let control_cfg = sim.channel.control(condition, seed);
    let mut control: DelayChannel<ControlCommand> = DelayChannel::new(control_cfg);
    let blank = Frame::filled(sim.camera.width, sim.camera.height, 0);

    let mut samples = Vec::with_capacity(2 * frames);
    let mut next = 0usize;
    loop {
        let candidates = [
            (next < frames).then(|| send_time(next)),
            video.next_due(),
            control.next_due(),
        ];
        let Some(now) = candidates.into_iter().flatten().min() else {
            break;
        };
        if next < frames && send_time(next) == now {
            let mut f = embed_timestamp(blank.clone(), clocks.local_time(Endpoint::Server, now))
                .expect("camera frame holds the stamp");
            f.seq = next as u32;
            video.send(f, now).expect("send times increase");
            next += 1;
        }
        for d in video.poll(now) {
            let recv = clocks.local_time(Endpoint::Client, d.delivered_at);
            let stamp = extract_timestamp(&d.payload).expect("stamp written above");
            samples.push(measure_video_latency(recv, stamp, delta));
            let cmd = ControlCommand {
                tx_ts_client_ns: recv,
                source_frame_ts_ns: stamp,
                seq: d.payload.seq,
                ..ControlCommand::default()
            };
            control.send(cmd, d.delivered_at).expect("deliveries are ordered");
        }
        for d in control.poll(now) {
            let rx = clocks.local_time(Endpoint::Server, d.delivered_at);
            samples.push(measure_control_latency(rx, d.payload.tx_ts_client_ns, delta));
        }
    }

    let one_way = control_cfg.base_delay_ns;
    Ok(LatencyReport {
        condition: condition.clone(),
        video: LatencyStats::from_samples(&samples, LatencyChannel::Video),
        control: LatencyStats::from_samples(&samples, LatencyChannel::Control),
        samples,
        offset_true_ns: delta,
        offset_estimate_ns: rtt_probe(&clocks, sim.epoch_ns, one_way, one_way),
    })
}
