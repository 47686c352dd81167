//! Client-side policy: speed-adaptive pure pursuit on the detected
//! centerline, PI speed regulation, and the staleness / low-confidence
//! safety monitor.

use serde::{Deserialize, Serialize};

use crate::camera::{extract_timestamp, Frame};
use crate::vehicle::ActuationLimits;
use crate::vision::{lateral_offset_at, LaneEstimate, LanePipeline, VisionError};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlCommand {
    /// Positive steers left.
    pub steering: f64,
    pub throttle: f64,
    pub brake: f64,
    pub tx_ts_client_ns: u64,
    pub source_frame_ts_ns: u64,
    pub seq: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControllerConfig {
    /// m/s
    pub target_speed: f64,
    /// Lookahead per unit speed, seconds.
    pub lookahead_gain: f64,
    pub lookahead_min: f64,
    pub lookahead_max: f64,
    pub kp: f64,
    pub ki: f64,
    pub integral_clamp: f64,
    pub stale_threshold_ms: f64,
    pub low_conf_threshold: f64,
    pub low_conf_speed_factor: f64,
    /// Per-step multiplier applied to the held steering angle in safe stop.
    pub safe_stop_steer_decay: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig {
            target_speed: 30.0 / 3.6,
            lookahead_gain: 0.6,
            lookahead_min: 5.0,
            lookahead_max: 20.0,
            kp: 0.5,
            ki: 0.1,
            integral_clamp: 2.0,
            stale_threshold_ms: 500.0,
            low_conf_threshold: 0.5,
            low_conf_speed_factor: 0.5,
            safe_stop_steer_decay: 0.5,
        }
    }
}

impl ControllerConfig {
    pub fn is_valid(&self) -> bool {
        self.target_speed > 0.0
            && self.lookahead_gain > 0.0
            && self.lookahead_min > 0.0
            && self.lookahead_max >= self.lookahead_min
            && self.kp > 0.0
            && self.ki >= 0.0
            && self.integral_clamp > 0.0
            && self.stale_threshold_ms > 0.0
            && (0.0..=1.0).contains(&self.low_conf_threshold)
            && (0.0..=1.0).contains(&self.low_conf_speed_factor)
            && (0.0..=1.0).contains(&self.safe_stop_steer_decay)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SafetyMode {
    Normal,
    SlowDown,
    SafeStop,
}

impl SafetyMode {
    pub fn as_str(self) -> &'static str {
        match self {
            SafetyMode::Normal => "normal",
            SafetyMode::SlowDown => "slow",
            SafetyMode::SafeStop => "stop",
        }
    }
}

pub fn lookahead_distance(speed: f64, cfg: &ControllerConfig) -> f64 {
    (cfg.lookahead_gain * speed).clamp(cfg.lookahead_min, cfg.lookahead_max)
}

/// Pure pursuit steering law for a target at range `lookahead` and lateral
/// offset `y_target` (vehicle frame).
pub fn pure_pursuit_steer(lookahead: f64, y_target: f64, wheelbase: f64, max_steer: f64) -> f64 {
    let alpha = y_target.atan2(lookahead);
    let delta = (2.0 * wheelbase * alpha.sin()).atan2(lookahead);
    delta.clamp(-max_steer, max_steer)
}

/// Steering toward the detected centerline at the speed-adapted lookahead.
pub fn pure_pursuit(
    est: &LaneEstimate,
    speed: f64,
    cfg: &ControllerConfig,
    limits: &ActuationLimits,
) -> Result<f64, VisionError> {
    let ld = lookahead_distance(speed, cfg);
    let y = lateral_offset_at(est, ld)?;
    Ok(pure_pursuit_steer(ld, y, limits.wheelbase, limits.max_steer))
}

/// PI speed law with a clamped integrator. Returns (throttle, brake, integ').
pub fn pi_speed(target: f64, measured: f64, integ: f64, dt: f64, cfg: &ControllerConfig) -> (f64, f64, f64) {
    debug_assert!(dt > 0.0);
    let err = target - measured;
    let integ = (integ + err * dt).clamp(-cfg.integral_clamp, cfg.integral_clamp);
    let u = cfg.kp * err + cfg.ki * integ;
    (u.clamp(0.0, 1.0), (-u).clamp(0.0, 1.0), integ)
}

pub fn safety_monitor(frame_age_ms: f64, confidence: f64, cfg: &ControllerConfig) -> SafetyMode {
    if frame_age_ms > cfg.stale_threshold_ms {
        SafetyMode::SafeStop
    } else if confidence < cfg.low_conf_threshold {
        SafetyMode::SlowDown
    } else {
        SafetyMode::Normal
    }
}

/// What one policy evaluation produced.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyOutput {
    pub command: ControlCommand,
    pub estimate: LaneEstimate,
    pub mode: SafetyMode,
}

/// One controller per episode. Owns the integrator, the previous lane
/// estimate, and the previous steering command; everything else is input.
#[derive(Debug, Clone)]
pub struct Controller {
    cfg: ControllerConfig,
    limits: ActuationLimits,
    pipeline: LanePipeline,
    integ: f64,
    prev_est: Option<LaneEstimate>,
    last_steer: f64,
    last_rx_ns: Option<u64>,
    nominal_dt: f64,
    seq: u32,
}

impl Controller {
    pub fn new(
        cfg: ControllerConfig,
        limits: ActuationLimits,
        pipeline: LanePipeline,
        nominal_dt: f64,
    ) -> Self {
        Controller {
            cfg,
            limits,
            pipeline,
            integ: 0.0,
            prev_est: None,
            last_steer: 0.0,
            last_rx_ns: None,
            nominal_dt,
            seq: 0,
        }
    }

    pub fn config(&self) -> &ControllerConfig {
        &self.cfg
    }

    pub fn integrator(&self) -> f64 {
        self.integ
    }

    fn next_seq(&mut self) -> u32 {
        let s = self.seq;
        self.seq = self.seq.wrapping_add(1);
        s
    }

    /// Braking command used by safe stop and by the staleness watchdog.
    pub fn safe_stop_command(&mut self, tx_ts_client_ns: u64, source_frame_ts_ns: u64) -> ControlCommand {
        self.integ = 0.0;
        self.last_steer *= self.cfg.safe_stop_steer_decay;
        ControlCommand {
            steering: self.last_steer,
            throttle: 0.0,
            brake: 1.0,
            tx_ts_client_ns,
            source_frame_ts_ns,
            seq: self.next_seq(),
        }
    }

    /// Run vision, safety monitoring and the control laws on one received
    /// frame. `rx_client_ns` is the client-clock receive time (drives the PI
    /// step), `tx_client_ns` the client-clock transmit stamp.
    pub fn policy_step(
        &mut self,
        frame: &Frame,
        frame_age_ms: f64,
        speed: f64,
        rx_client_ns: u64,
        tx_client_ns: u64,
    ) -> PolicyOutput {
        let dt = match self.last_rx_ns {
            Some(prev) if rx_client_ns > prev => ((rx_client_ns - prev) as f64 * 1e-9).min(0.5),
            _ => self.nominal_dt,
        };
        self.last_rx_ns = Some(rx_client_ns);

        let Ok(source_ts) = extract_timestamp(frame) else {
            let command = self.safe_stop_command(tx_client_ns, 0);
            return PolicyOutput {
                command,
                estimate: LaneEstimate::invalid(),
                mode: SafetyMode::SafeStop,
            };
        };

        let estimate = self.pipeline.process(frame, self.prev_est.as_ref());
        self.prev_est = Some(estimate);
        let mode = safety_monitor(frame_age_ms, estimate.confidence, &self.cfg);

        let steer = match mode {
            SafetyMode::SafeStop => None,
            _ => pure_pursuit(&estimate, speed, &self.cfg, &self.limits).ok(),
        };
        let Some(steer) = steer else {
            let command = self.safe_stop_command(tx_client_ns, source_ts);
            return PolicyOutput {
                command,
                estimate,
                mode: SafetyMode::SafeStop,
            };
        };

        let target = match mode {
            SafetyMode::SlowDown => self.cfg.target_speed * self.cfg.low_conf_speed_factor,
            _ => self.cfg.target_speed,
        };
        let (throttle, brake, integ) = pi_speed(target, speed, self.integ, dt, &self.cfg);
        self.integ = integ;
        self.last_steer = steer;
        PolicyOutput {
            command: ControlCommand {
                steering: steer,
                throttle,
                brake,
                tx_ts_client_ns: tx_client_ns,
                source_frame_ts_ns: source_ts,
                seq: self.next_seq(),
            },
            estimate,
            mode,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::{embed_timestamp, CameraModel, Renderer};
    use crate::vehicle::VehicleState;
    use crate::vision::{Poly, VisionConfig};
    use crate::world::{build_route, RouteId};
    use approx::assert_abs_diff_eq;

    fn est_with_center(p: Poly) -> LaneEstimate {
        LaneEstimate {
            centerline_poly: p,
            confidence: 1.0,
            valid: true,
            ..LaneEstimate::default()
        }
    }

    #[test]
    fn centered_target_gives_zero_steer() {
        let est = est_with_center(Poly::default());
        let d = pure_pursuit(&est, 8.33, &ControllerConfig::default(), &ActuationLimits::default()).unwrap();
        assert_eq!(d, 0.0);
    }

    #[test]
    fn worked_example_and_circle_construction() {
        let d = pure_pursuit_steer(10.0, 1.0, 2.8, 1.0);
        assert_abs_diff_eq!(d, 0.0556, epsilon = 1e-4);
        // Circle tangent to the heading at the origin through the point at
        // range 10 on the target bearing: centre (0, R) with R = r^2 / (2 y).
        let alpha = 0.1f64.atan();
        let (px, py) = (10.0 * alpha.cos(), 10.0 * alpha.sin());
        let radius = (px * px + py * py) / (2.0 * py);
        assert_abs_diff_eq!(d, (2.8 / radius).atan(), epsilon = 1e-12);
    }

    #[test]
    fn large_offset_clamps() {
        let lim = ActuationLimits::default();
        let d = pure_pursuit_steer(5.0, 20.0, lim.wheelbase, lim.max_steer);
        assert_eq!(d, lim.max_steer);
        let d = pure_pursuit_steer(5.0, -20.0, lim.wheelbase, lim.max_steer);
        assert_eq!(d, -lim.max_steer);
    }

    #[test]
    fn invalid_estimate_is_rejected() {
        let r = pure_pursuit(
            &LaneEstimate::invalid(),
            5.0,
            &ControllerConfig::default(),
            &ActuationLimits::default(),
        );
        assert_eq!(r, Err(VisionError::InvalidEstimate));
    }

    #[test]
    fn lookahead_adapts_and_clamps() {
        let cfg = ControllerConfig::default();
        assert_eq!(lookahead_distance(0.0, &cfg), cfg.lookahead_min);
        assert_eq!(lookahead_distance(100.0, &cfg), cfg.lookahead_max);
        let mid = (cfg.lookahead_min + cfg.lookahead_max) / 2.0 / cfg.lookahead_gain;
        assert_abs_diff_eq!(lookahead_distance(mid, &cfg), mid * cfg.lookahead_gain);
    }

    #[test]
    fn pi_at_setpoint_is_idle() {
        let cfg = ControllerConfig::default();
        assert_eq!(pi_speed(8.33, 8.33, 0.0, 0.05, &cfg), (0.0, 0.0, 0.0));
    }

    #[test]
    fn pi_proportional_saturates_throttle() {
        let cfg = ControllerConfig {
            kp: 0.5,
            ki: 0.0,
            ..ControllerConfig::default()
        };
        let (t, b, _) = pi_speed(8.33, 6.33, 0.0, 0.05, &cfg);
        assert_abs_diff_eq!(t, 1.0, epsilon = 1e-12);
        assert_eq!(b, 0.0);
    }

    #[test]
    fn pi_integrator_clamps() {
        let cfg = ControllerConfig::default();
        let mut integ = 0.0;
        for _ in 0..1000 {
            let (t, b, i) = pi_speed(5.0, 9.0, integ, 0.05, &cfg);
            assert_eq!(t * b, 0.0);
            integ = i;
        }
        assert_eq!(integ, -cfg.integral_clamp);
    }

    #[test]
    fn safety_modes() {
        let cfg = ControllerConfig::default();
        assert_eq!(safety_monitor(600.0, 0.9, &cfg), SafetyMode::SafeStop);
        assert_eq!(safety_monitor(50.0, 0.9, &cfg), SafetyMode::Normal);
        assert_eq!(safety_monitor(50.0, 0.3, &cfg), SafetyMode::SlowDown);
    }

    fn controller() -> Controller {
        let cam = CameraModel::default();
        Controller::new(
            ControllerConfig::default(),
            ActuationLimits::default(),
            LanePipeline::new(&cam, VisionConfig::default()),
            0.05,
        )
    }

    fn straight_frame(ts: u64) -> Frame {
        let r = build_route(RouteId::A);
        let f = Renderer::new(CameraModel::default()).render(&r, &VehicleState::new(3.0, 0.0, 0.0, 8.33, 3.0));
        embed_timestamp(f, ts).unwrap()
    }

    #[test]
    fn fresh_centered_frame_drives_straight() {
        let mut c = controller();
        let out = c.policy_step(&straight_frame(123_456_789), 70.0, 30.0 / 3.6, 1_000, 2_000);
        assert_eq!(out.mode, SafetyMode::Normal);
        assert!(out.estimate.valid);
        assert!(out.command.steering.abs() < 0.01, "{}", out.command.steering);
        assert_eq!(out.command.brake, 0.0);
        assert_eq!(out.command.source_frame_ts_ns, 123_456_789);
        assert_eq!(out.command.tx_ts_client_ns, 2_000);
    }

    #[test]
    fn stale_frame_brakes() {
        let mut c = controller();
        let out = c.policy_step(&straight_frame(42), 600.0, 8.0, 1_000, 1_000);
        assert_eq!(out.mode, SafetyMode::SafeStop);
        assert_eq!(out.command.brake, 1.0);
        assert_eq!(out.command.throttle, 0.0);
        assert_eq!(out.command.source_frame_ts_ns, 42);
    }

    #[test]
    fn undecodable_frame_brakes() {
        let mut c = controller();
        let out = c.policy_step(&Frame::filled(4, 4, 0), 10.0, 8.0, 1_000, 1_000);
        assert_eq!(out.mode, SafetyMode::SafeStop);
        assert_eq!(out.command.brake, 1.0);
    }

    #[test]
    fn slow_down_halves_target() {
        let cam = CameraModel::default();
        let cfg = ControllerConfig {
            low_conf_threshold: 1.01,
            ..ControllerConfig::default()
        };
        let mut c = Controller::new(
            cfg,
            ActuationLimits::default(),
            LanePipeline::new(&cam, VisionConfig::default()),
            0.05,
        );
        // At exactly the halved target speed the PI stays idle.
        let out = c.policy_step(&straight_frame(1), 70.0, cfg.target_speed * 0.5, 1_000, 1_000);
        assert_eq!(out.mode, SafetyMode::SlowDown);
        assert_eq!((out.command.throttle, out.command.brake), (0.0, 0.0));
    }

    #[test]
    fn policy_is_deterministic() {
        let f = straight_frame(99);
        let mut a = controller();
        let mut b = controller();
        for k in 0..5u64 {
            let oa = a.policy_step(&f, 80.0, 7.5, 1_000 + k * 50_000_000, 1_000 + k * 50_000_000);
            let ob = b.policy_step(&f, 80.0, 7.5, 1_000 + k * 50_000_000, 1_000 + k * 50_000_000);
            assert_eq!(oa, ob);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn steering_sign_and_mirror(ld in 1.0f64..30.0, y in 1e-6f64..20.0, wb in 1.0f64..5.0) {
                let d = pure_pursuit_steer(ld, y, wb, 10.0);
                prop_assert!(d > 0.0);
                prop_assert_eq!(pure_pursuit_steer(ld, -y, wb, 10.0), -d);
            }

            #[test]
            fn steering_monotone_in_offset(ld in 1.0f64..30.0, y1 in -20.0f64..20.0, dy in 0.0f64..5.0) {
                let lim = ActuationLimits::default();
                let a = pure_pursuit_steer(ld, y1, lim.wheelbase, lim.max_steer);
                let b = pure_pursuit_steer(ld, y1 + dy, lim.wheelbase, lim.max_steer);
                prop_assert!(b >= a);
            }
        }
    }
}
