//! Perception and actuation channels: delay injection, the endpoint clock
//! model, one-way latency measurement, and the UDP wire format.

pub mod channel;
pub mod clock;
pub mod udp;
pub mod wire;

pub use channel::{ChannelConfig, ChannelError, DelayChannel, Delivery, Jitter, SendOutcome};
pub use clock::{
    estimate_offset_rtt, measure_control_latency, measure_video_latency, rtt_probe, ClockModel,
    Endpoint, LatencyChannel, LatencySample,
};
pub use wire::{decode_packet, encode_packet, Packet, WireChannel, WireError};
