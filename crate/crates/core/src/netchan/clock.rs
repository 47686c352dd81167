//! Two-endpoint clock model and the one-way latency math.
//!
//! All arithmetic is integer nanoseconds, so the offset cancels exactly.

use serde::{Deserialize, Serialize};

/// Which machine's clock a reading comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Endpoint {
    Server,
    Client,
}

/// `local_time = true_time + offset` per endpoint; constant, no drift.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ClockModel {
    pub offset_server_ns: i64,
    pub offset_client_ns: i64,
}

impl ClockModel {
    pub fn new(offset_server_ns: i64, offset_client_ns: i64) -> Self {
        ClockModel {
            offset_server_ns,
            offset_client_ns,
        }
    }

    /// Server minus client reading of the same instant.
    pub fn delta(&self) -> i64 {
        self.offset_server_ns - self.offset_client_ns
    }

    /// Reading of `endpoint`'s clock at `true_time`. Panics if the reading
    /// would be negative.
    pub fn local_time(&self, endpoint: Endpoint, true_time: u64) -> u64 {
        let offset = match endpoint {
            Endpoint::Server => self.offset_server_ns,
            Endpoint::Client => self.offset_client_ns,
        };
        u64::try_from(true_time as i128 + offset as i128).expect("clock reading out of u64 range")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatencyChannel {
    Video,
    Control,
}

impl LatencyChannel {
    pub fn as_str(self) -> &'static str {
        match self {
            LatencyChannel::Video => "video",
            LatencyChannel::Control => "control",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatencySample {
    pub channel: LatencyChannel,
    pub tau_ns: i64,
    /// Receiving endpoint's clock reading when measured.
    pub measured_at_ns: u64,
}

fn narrow(v: i128) -> i64 {
    v.clamp(i64::MIN as i128, i64::MAX as i128) as i64
}

/// τ_v = t_recv(client) − (t_send(server) − Δ).
pub fn measure_video_latency(recv_client_ns: u64, embedded_server_send_ns: u64, delta: i64) -> LatencySample {
    LatencySample {
        channel: LatencyChannel::Video,
        tau_ns: narrow(recv_client_ns as i128 - (embedded_server_send_ns as i128 - delta as i128)),
        measured_at_ns: recv_client_ns,
    }
}

/// τ_c = t_rx(server) − (t_tx(client) + Δ).
pub fn measure_control_latency(rx_server_ns: u64, tx_client_ns: u64, delta: i64) -> LatencySample {
    LatencySample {
        channel: LatencyChannel::Control,
        tau_ns: narrow(rx_server_ns as i128 - (tx_client_ns as i128 + delta as i128)),
        measured_at_ns: rx_server_ns,
    }
}

/// NTP-style offset estimate from a client->server->client probe:
/// Δ̂ = t_s − (t1 + t2) / 2. Exact under symmetric delays; otherwise biased
/// by half the difference between the client->server and server->client legs.
pub fn estimate_offset_rtt(t1_client_ns: u64, t_s_server_ns: u64, t2_client_ns: u64) -> i64 {
    debug_assert!(t2_client_ns >= t1_client_ns);
    let half_rtt = (t2_client_ns as i128 - t1_client_ns as i128) / 2;
    narrow(t_s_server_ns as i128 - t1_client_ns as i128 - half_rtt)
}

/// Simulate one probe leaving the client at `true_time` and return the
/// offset estimate. Directions follow the testbed's channels: `fwd_ns` is
/// the server->client (video direction) leg, `back_ns` the client->server
/// (control direction) leg, so the bias is `(back_ns - fwd_ns) / 2`.
pub fn rtt_probe(clock: &ClockModel, true_time: u64, fwd_ns: u64, back_ns: u64) -> i64 {
    let t1 = clock.local_time(Endpoint::Client, true_time);
    let ts = clock.local_time(Endpoint::Server, true_time + back_ns);
    let t2 = clock.local_time(Endpoint::Client, true_time + back_ns + fwd_ns);
    estimate_offset_rtt(t1, ts, t2)
}
