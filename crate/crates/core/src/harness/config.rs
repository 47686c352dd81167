//! Episode and experiment configuration. Everything serializes to JSON and
//! every field has a default, so config files only need what they change.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::condition::LatencyCondition;
use crate::camera::CameraModel;
use crate::control::ControllerConfig;
use crate::netchan::{ChannelConfig, ClockModel, Jitter};
use crate::vehicle::ActuationLimits;
use crate::vision::VisionConfig;
use crate::world::RouteId;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("invalid {0} configuration")]
    Invalid(&'static str),
    #[error("physics rate {physics_hz} Hz is not a multiple of camera rate {camera_hz} Hz")]
    Rates { physics_hz: u32, camera_hz: u32 },
    #[error("reps must be at least 1")]
    NoReps,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Rates {
    pub physics_hz: u32,
    pub camera_hz: u32,
}

impl Default for Rates {
    fn default() -> Self {
        Rates {
            physics_hz: 100,
            camera_hz: 20,
        }
    }
}

impl Rates {
    pub fn tick_ns(&self) -> u64 {
        1_000_000_000 / self.physics_hz as u64
    }

    pub fn ticks_per_frame(&self) -> u64 {
        (self.physics_hz / self.camera_hz) as u64
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.physics_hz == 0
            || self.camera_hz == 0
            || !self.physics_hz.is_multiple_of(self.camera_hz)
            || 1_000_000_000 % self.physics_hz != 0
        {
            return Err(ConfigError::Rates {
                physics_hz: self.physics_hz,
                camera_hz: self.camera_hz,
            });
        }
        Ok(())
    }
}

/// Inherent transport delays plus optional impairments. Injected condition
/// delays add on top of the baselines.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChannelSettings {
    pub baseline_video_ms: f64,
    pub baseline_control_ms: f64,
    pub video_jitter: Jitter,
    pub control_jitter: Jitter,
    pub video_loss: f64,
    pub control_loss: f64,
    pub allow_reorder: bool,
}

impl Default for ChannelSettings {
    fn default() -> Self {
        ChannelSettings {
            baseline_video_ms: 60.0,
            baseline_control_ms: 9.0,
            video_jitter: Jitter::None,
            control_jitter: Jitter::None,
            video_loss: 0.0,
            control_loss: 0.0,
            allow_reorder: false,
        }
    }
}

// Distinct streams so the two channels never share random draws.
const VIDEO_STREAM: u64 = 0x5649_4445_4f00_0001;
const CONTROL_STREAM: u64 = 0x4354_524c_0000_0002;

impl ChannelSettings {
    pub fn video(&self, cond: &LatencyCondition, seed: u64) -> ChannelConfig {
        ChannelConfig {
            base_delay_ns: (self.baseline_video_ms * 1e6).round() as u64 + cond.inject_video_ns(),
            jitter: self.video_jitter,
            loss_prob: self.video_loss,
            allow_reorder: self.allow_reorder,
            seed: seed ^ VIDEO_STREAM,
        }
    }

    pub fn control(&self, cond: &LatencyCondition, seed: u64) -> ChannelConfig {
        ChannelConfig {
            base_delay_ns: (self.baseline_control_ms * 1e6).round() as u64 + cond.inject_control_ns(),
            jitter: self.control_jitter,
            loss_prob: self.control_loss,
            allow_reorder: self.allow_reorder,
            seed: seed ^ CONTROL_STREAM,
        }
    }
}

/// Seeded start-state spread. Without it, repetitions of a deterministic
/// run would be identical.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Perturbation {
    pub lateral_m: f64,
    pub heading_deg: f64,
    /// Randomize which physics tick the camera fires on.
    pub camera_phase: bool,
}

impl Default for Perturbation {
    fn default() -> Self {
        Perturbation {
            lateral_m: 0.3,
            heading_deg: 2.0,
            camera_phase: true,
        }
    }
}

/// Everything an episode needs apart from route, condition and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimSettings {
    pub rates: Rates,
    pub controller: ControllerConfig,
    pub limits: ActuationLimits,
    pub camera: CameraModel,
    pub vision: VisionConfig,
    pub channel: ChannelSettings,
    pub clocks: ClockModel,
    /// Client-side time between frame arrival and command transmission.
    pub processing_ms: f64,
    pub perturbation: Perturbation,
    /// True time of the first tick; keeps offset clock readings positive.
    pub epoch_ns: u64,
}

impl Default for SimSettings {
    fn default() -> Self {
        SimSettings {
            rates: Rates::default(),
            controller: ControllerConfig::default(),
            limits: ActuationLimits::default(),
            camera: CameraModel::default(),
            vision: VisionConfig::default(),
            channel: ChannelSettings::default(),
            clocks: ClockModel::default(),
            processing_ms: 5.0,
            perturbation: Perturbation::default(),
            epoch_ns: 1_700_000_000_000_000_000,
        }
    }
}

impl SimSettings {
    pub fn processing_ns(&self) -> u64 {
        (self.processing_ms * 1e6).round() as u64
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.rates.validate()?;
        let checks = [
            ("controller", self.controller.is_valid()),
            ("actuation", self.limits.is_valid()),
            ("camera", self.camera.is_valid()),
            ("processing", self.processing_ms.is_finite() && self.processing_ms >= 0.0),
            (
                "channel",
                self.channel.baseline_video_ms >= 0.0
                    && self.channel.baseline_control_ms >= 0.0
                    && self.channel.video(&LatencyCondition::custom(0.0, 0.0), 0).is_valid()
                    && self.channel.control(&LatencyCondition::custom(0.0, 0.0), 0).is_valid(),
            ),
        ];
        match checks.iter().find(|(_, ok)| !ok) {
            Some((what, _)) => Err(ConfigError::Invalid(what)),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeConfig {
    pub route: RouteId,
    pub condition: LatencyCondition,
    pub seed: u64,
    #[serde(default)]
    pub sim: SimSettings,
}

impl EpisodeConfig {
    pub fn new(route: RouteId, condition: LatencyCondition, seed: u64) -> Self {
        EpisodeConfig {
            route,
            condition,
            seed,
            sim: SimSettings::default(),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !self.condition.is_valid() {
            return Err(ConfigError::Invalid("condition"));
        }
        self.sim.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub conditions: Vec<LatencyCondition>,
    pub routes: Vec<RouteId>,
    pub reps: u32,
    pub base_seed: u64,
    pub sim: SimSettings,
    /// Also write one trace CSV per run.
    pub write_traces: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            conditions: LatencyCondition::standard(),
            routes: RouteId::ALL.to_vec(),
            reps: 5,
            base_seed: 1,
            sim: SimSettings::default(),
            write_traces: false,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.reps == 0 {
            return Err(ConfigError::NoReps);
        }
        if self.conditions.iter().any(|c| !c.is_valid()) {
            return Err(ConfigError::Invalid("condition"));
        }
        self.sim.validate()
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        ExperimentConfig::default().validate().unwrap();
        let r = Rates::default();
        assert_eq!((r.tick_ns(), r.ticks_per_frame()), (10_000_000, 5));
    }

    #[test]
    fn camera_rate_must_divide_physics_rate() {
        let r = Rates {
            physics_hz: 100,
            camera_hz: 30,
        };
        assert!(r.validate().is_err());
    }

    #[test]
    fn channel_delays_add() {
        let s = ChannelSettings::default();
        let l5 = LatencyCondition::named("L5").unwrap();
        assert_eq!(s.video(&l5, 0).base_delay_ns, 285_000_000);
        assert_eq!(s.control(&l5, 0).base_delay_ns, 109_000_000);
        assert_ne!(s.video(&l5, 7).seed, s.control(&l5, 7).seed);
    }

    #[test]
    fn partial_json_fills_defaults() {
        let cfg = ExperimentConfig::from_json(r#"{"conditions":["L0","L5"],"routes":["A_key"],"reps":2}"#).unwrap();
        assert_eq!(cfg.conditions.len(), 2);
        assert_eq!(cfg.routes, vec![RouteId::AKey]);
        assert_eq!(cfg.sim, SimSettings::default());
        let back = ExperimentConfig::from_json(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }
}
