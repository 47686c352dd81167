//! The six latency conditions and custom `τv,τc` conditions.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("bad condition `{0}`: expected L0..L5 or `<video ms>,<control ms>`")]
pub struct ConditionParseError(pub String);

/// Injected one-way delays on top of the channel baselines.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LatencyCondition {
    pub name: String,
    pub inject_video_ms: f64,
    pub inject_control_ms: f64,
}

const NAMED: [(&str, f64, f64); 6] = [
    ("L0", 0.0, 0.0),
    ("L1", 75.0, 0.0),
    ("L2", 150.0, 0.0),
    ("L3", 225.0, 0.0),
    ("L4", 150.0, 75.0),
    ("L5", 225.0, 100.0),
];

fn ms_to_ns(ms: f64) -> u64 {
    (ms * 1e6).round() as u64
}

impl LatencyCondition {
    pub fn named(name: &str) -> Option<Self> {
        NAMED
            .iter()
            .find(|(n, _, _)| n.eq_ignore_ascii_case(name))
            .map(|&(n, v, c)| LatencyCondition {
                name: n.to_string(),
                inject_video_ms: v,
                inject_control_ms: c,
            })
    }

    pub fn custom(inject_video_ms: f64, inject_control_ms: f64) -> Self {
        LatencyCondition {
            name: format!("{inject_video_ms}+{inject_control_ms}"),
            inject_video_ms,
            inject_control_ms,
        }
    }

    /// L0 through L5 in order.
    pub fn standard() -> Vec<Self> {
        NAMED
            .iter()
            .map(|(n, _, _)| Self::named(n).expect("table entry"))
            .collect()
    }

    pub fn inject_video_ns(&self) -> u64 {
        ms_to_ns(self.inject_video_ms)
    }

    pub fn inject_control_ns(&self) -> u64 {
        ms_to_ns(self.inject_control_ms)
    }

    pub fn is_valid(&self) -> bool {
        self.inject_video_ms.is_finite()
            && self.inject_control_ms.is_finite()
            && self.inject_video_ms >= 0.0
            && self.inject_control_ms >= 0.0
    }
}

impl fmt::Display for LatencyCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

impl FromStr for LatencyCondition {
    type Err = ConditionParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if let Some(c) = Self::named(s) {
            return Ok(c);
        }
        let err = || ConditionParseError(s.to_string());
        let (v, c) = s.split_once(',').ok_or_else(err)?;
        let v: f64 = v.trim().parse().map_err(|_| err())?;
        let c: f64 = c.trim().parse().map_err(|_| err())?;
        let cond = Self::custom(v, c);
        if cond.is_valid() {
            Ok(cond)
        } else {
            Err(err())
        }
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ConditionRepr {
    Name(String),
    Full {
        name: String,
        inject_video_ms: f64,
        inject_control_ms: f64,
    },
}

// Config files may name a condition ("L3", "150,75") or spell it out.
impl<'de> Deserialize<'de> for LatencyCondition {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match ConditionRepr::deserialize(d)? {
            ConditionRepr::Name(s) => s.parse().map_err(serde::de::Error::custom),
            ConditionRepr::Full {
                name,
                inject_video_ms,
                inject_control_ms,
            } => Ok(LatencyCondition {
                name,
                inject_video_ms,
                inject_control_ms,
            }),
        }
    }
}
