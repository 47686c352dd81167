//! Kinematic bicycle plant under delayed actuation, and episode event
//! detection (lane invasion, road departure, completion, timeout).

use serde::{Deserialize, Serialize};

use crate::control::ControlCommand;
use crate::world::{wrap_angle, CenterlineQuery, RouteGeometry};

/// |e| beyond which the run counts as a road departure (collision proxy).
pub const DEPARTURE_THRESHOLD_M: f64 = 3.5;

/// Physics tick.
pub const PHYSICS_DT_S: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub x: f64,
    pub y: f64,
    /// Normalized to (-pi, pi].
    pub heading: f64,
    /// Never negative.
    pub speed: f64,
    /// High-water mark of the centerline arc length reached.
    pub s_progress: f64,
}

impl VehicleState {
    pub fn new(x: f64, y: f64, heading: f64, speed: f64, s_progress: f64) -> Self {
        VehicleState {
            x,
            y,
            heading: wrap_angle(heading),
            speed: speed.max(0.0),
            s_progress,
        }
    }

    pub fn position(&self) -> [f64; 2] {
        [self.x, self.y]
    }

    /// Raise the progress mark; it never moves backwards.
    pub fn record_progress(&mut self, s: f64) {
        if s > self.s_progress {
            self.s_progress = s;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ActuationLimits {
    pub max_steer: f64,
    pub max_accel: f64,
    pub max_brake_decel: f64,
    pub wheelbase: f64,
    /// Linear drag coefficient, 1/s.
    pub drag: f64,
}

impl Default for ActuationLimits {
    fn default() -> Self {
        ActuationLimits {
            max_steer: 35f64.to_radians(),
            max_accel: 3.0,
            max_brake_decel: 6.0,
            wheelbase: 2.8,
            drag: 0.05,
        }
    }
}

impl ActuationLimits {
    pub fn is_valid(&self) -> bool {
        self.max_steer > 0.0
            && self.max_accel > 0.0
            && self.max_brake_decel > 0.0
            && self.wheelbase > 0.0
            && self.drag >= 0.0
    }
}

/// One explicit-Euler step of the kinematic bicycle (rear-axle reference).
///
/// Position advances along the old heading, then heading and speed update.
/// Command fields are clamped to the actuation limits; speed never goes
/// negative.
pub fn step(state: &VehicleState, cmd: &ControlCommand, limits: &ActuationLimits, dt: f64) -> VehicleState {
    debug_assert!(dt > 0.0);
    let steer = cmd.steering.clamp(-limits.max_steer, limits.max_steer);
    let throttle = cmd.throttle.clamp(0.0, 1.0);
    let brake = cmd.brake.clamp(0.0, 1.0);
    let v = state.speed;
    let accel = throttle * limits.max_accel - brake * limits.max_brake_decel - limits.drag * v;
    VehicleState {
        x: state.x + v * state.heading.cos() * dt,
        y: state.y + v * state.heading.sin() * dt,
        heading: wrap_angle(state.heading + v * steer.tan() / limits.wheelbase * dt),
        speed: (v + accel * dt).max(0.0),
        s_progress: state.s_progress,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EventKind {
    LaneInvasion,
    RoadDeparture,
    Completed,
    Timeout,
}

impl EventKind {
    pub fn is_terminal(self) -> bool {
        !matches!(self, EventKind::LaneInvasion)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeEvent {
    pub kind: EventKind,
    pub time: f64,
    pub s: f64,
}

/// Thresholds that turn a centerline query into events.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventThresholds {
    pub departure: f64,
    /// Time budget in seconds.
    pub budget: f64,
}

/// Stateless event rule for one tick. At most one terminal event is
/// returned, after any lane invasion.
pub fn detect_events(
    state: &VehicleState,
    prev_e: f64,
    query: &CenterlineQuery,
    route: &RouteGeometry,
    t: f64,
    thresholds: &EventThresholds,
) -> Vec<EpisodeEvent> {
    let hw = route.lane_half_width();
    let e = query.cross_track_e;
    let mut events = Vec::new();
    let at = |kind| EpisodeEvent {
        kind,
        time: t,
        s: query.s,
    };
    if prev_e.abs() <= hw && e.abs() > hw {
        events.push(at(EventKind::LaneInvasion));
    }
    if e.abs() > thresholds.departure {
        events.push(at(EventKind::RoadDeparture));
    } else if state.s_progress >= route.scoring_window().1 - 1.0 {
        events.push(at(EventKind::Completed));
    } else if t > thresholds.budget {
        events.push(at(EventKind::Timeout));
    }
    events
}

/// Wraps [`detect_events`] with the previous-error memory and the terminal
/// latch.
#[derive(Debug, Clone)]
pub struct EventTracker {
    thresholds: EventThresholds,
    prev_e: f64,
    finished: Option<EpisodeEvent>,
    log: Vec<EpisodeEvent>,
}

impl EventTracker {
    pub fn new(thresholds: EventThresholds, initial_e: f64) -> Self {
        EventTracker {
            thresholds,
            prev_e: initial_e,
            finished: None,
            log: Vec::new(),
        }
    }

    pub fn observe(
        &mut self,
        state: &VehicleState,
        query: &CenterlineQuery,
        route: &RouteGeometry,
        t: f64,
    ) -> &[EpisodeEvent] {
        let start = self.log.len();
        if self.finished.is_none() {
            let events = detect_events(state, self.prev_e, query, route, t, &self.thresholds);
            self.prev_e = query.cross_track_e;
            for ev in events {
                if ev.kind.is_terminal() {
                    self.finished = Some(ev);
                }
                self.log.push(ev);
            }
        }
        &self.log[start..]
    }

    /// Record an externally detected terminal event (e.g. leaving the
    /// locate envelope).
    pub fn force_terminal(&mut self, ev: EpisodeEvent) {
        if self.finished.is_none() {
            self.finished = Some(ev);
            self.log.push(ev);
        }
    }

    pub fn finished(&self) -> Option<EpisodeEvent> {
        self.finished
    }

    pub fn events(&self) -> &[EpisodeEvent] {
        &self.log
    }

    pub fn lane_invasions(&self) -> usize {
        self.log
            .iter()
            .filter(|e| e.kind == EventKind::LaneInvasion)
            .count()
    }
}
