//! Deterministic closed-loop teleoperation latency testbed.
//!
//! A synthetic driving world is observed by a forward camera whose frames
//! cross a delayed perception channel to a client-side lane keeper; the
//! resulting commands cross a delayed actuation channel back to a kinematic
//! vehicle. Both channels are measured with clock-offset-aware one-way
//! latency math, and the whole loop runs in virtual time so every run is
//! exactly replayable.
//!
//! Module map:
//!
//! - [`world`]: route geometry and the ground-truth centerline oracle
//! - [`vehicle`]: kinematic bicycle stepping and episode events
//! - [`camera`]: ray-cast forward camera and the 8x8 timestamp stamp
//! - [`vision`]: threshold, bird's-eye warp, sliding-window lane fit
//! - [`control`]: pure pursuit, PI speed, staleness / confidence safety
//! - [`netchan`]: delay channels, clocks, latency math, wire format, UDP
//! - [`harness`]: episode runner, condition matrix, metrics and reports

pub mod camera;
pub mod control;
pub mod harness;
pub mod netchan;
pub mod vehicle;
pub mod vision;
pub mod world;

pub use camera::{CameraModel, Frame, Renderer};
pub use control::{ControlCommand, Controller, ControllerConfig, SafetyMode};
pub use harness::{
    AggregateRow, EpisodeConfig, ExperimentConfig, LatencyCondition, RunSummary, TraceRow,
};
pub use netchan::{ChannelConfig, ClockModel, DelayChannel, Endpoint, Jitter, LatencySample};
pub use vehicle::{ActuationLimits, EpisodeEvent, EventKind, VehicleState};
pub use vision::{BevGrid, LaneEstimate, LanePipeline, VisionConfig};
pub use world::{build_route, locate, sample_markings, CenterlineQuery, RouteGeometry, RouteId};
