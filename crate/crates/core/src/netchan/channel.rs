//! User-space delay line standing in for a NetEm qdisc: constant base delay,
//! optional jitter and loss, FIFO unless reordering is allowed.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ChannelError {
    #[error("send at {now} ns precedes previous send at {last} ns")]
    NonMonotonicSend { now: u64, last: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Jitter {
    #[default]
    None,
    Uniform { half_width_ns: u64 },
    Gaussian { sigma_ns: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChannelConfig {
    pub base_delay_ns: u64,
    pub jitter: Jitter,
    pub loss_prob: f64,
    pub allow_reorder: bool,
    pub seed: u64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        ChannelConfig {
            base_delay_ns: 0,
            jitter: Jitter::None,
            loss_prob: 0.0,
            allow_reorder: false,
            seed: 0,
        }
    }
}

impl ChannelConfig {
    pub fn constant(base_delay_ns: u64) -> Self {
        ChannelConfig {
            base_delay_ns,
            ..ChannelConfig::default()
        }
    }

    pub fn is_valid(&self) -> bool {
        (0.0..=1.0).contains(&self.loss_prob)
            && match self.jitter {
                Jitter::Gaussian { sigma_ns } => sigma_ns >= 0.0,
                _ => true,
            }
    }
}

/// Result of handing a payload to the channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SendOutcome {
    Dropped,
    Scheduled { deliver_at: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Delivery<T> {
    pub payload: T,
    pub sent_at: u64,
    pub delivered_at: u64,
}

#[derive(Debug, Clone)]
struct Pending<T> {
    payload: T,
    sent_at: u64,
}

/// Timestamped delay queue over true (simulation) time in nanoseconds.
#[derive(Debug, Clone)]
pub struct DelayChannel<T> {
    config: ChannelConfig,
    rng: ChaCha8Rng,
    /// Keyed by (delivery time, send counter): iteration order is delivery
    /// order with send order breaking ties.
    pending: BTreeMap<(u64, u64), Pending<T>>,
    last_send: Option<u64>,
    last_delivery: u64,
    sent: u64,
    delivered: u64,
    dropped: u64,
}

impl<T> DelayChannel<T> {
    pub fn new(config: ChannelConfig) -> Self {
        DelayChannel {
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            config,
            pending: BTreeMap::new(),
            last_send: None,
            last_delivery: 0,
            sent: 0,
            delivered: 0,
            dropped: 0,
        }
    }

    pub fn config(&self) -> &ChannelConfig {
        &self.config
    }

    fn jitter_sample(&mut self) -> i64 {
        match self.config.jitter {
            Jitter::None => 0,
            Jitter::Uniform { half_width_ns } => {
                let hw = half_width_ns.min(i64::MAX as u64) as i64;
                self.rng.random_range(-hw..=hw)
            }
            Jitter::Gaussian { sigma_ns } => Normal::new(0.0, sigma_ns)
                .map(|n| n.sample(&mut self.rng).round() as i64)
                .unwrap_or(0),
        }
    }

    /// Enqueue `payload` sent at `now_true`, or drop it with probability
    /// `loss_prob`.
    pub fn send(&mut self, payload: T, now_true: u64) -> Result<SendOutcome, ChannelError> {
        if let Some(last) = self.last_send {
            if now_true < last {
                return Err(ChannelError::NonMonotonicSend { now: now_true, last });
            }
        }
        self.last_send = Some(now_true);
        let counter = self.sent;
        self.sent += 1;
        if self.config.loss_prob > 0.0 && self.rng.random::<f64>() < self.config.loss_prob {
            self.dropped += 1;
            return Ok(SendOutcome::Dropped);
        }
        let nominal = now_true as i128 + self.config.base_delay_ns as i128 + self.jitter_sample() as i128;
        let mut deliver_at = nominal.clamp(now_true as i128, u64::MAX as i128) as u64;
        if !self.config.allow_reorder {
            deliver_at = deliver_at.max(self.last_delivery);
        }
        self.last_delivery = self.last_delivery.max(deliver_at);
        self.pending.insert(
            (deliver_at, counter),
            Pending {
                payload,
                sent_at: now_true,
            },
        );
        Ok(SendOutcome::Scheduled { deliver_at })
    }

    /// Remove and return everything due at or before `now_true`, in delivery
    /// order.
    pub fn poll(&mut self, now_true: u64) -> Vec<Delivery<T>> {
        let mut out = Vec::new();
        while let Some(entry) = self.pending.first_entry() {
            let (deliver_at, _) = *entry.key();
            if deliver_at > now_true {
                break;
            }
            let p = entry.remove();
            out.push(Delivery {
                payload: p.payload,
                sent_at: p.sent_at,
                delivered_at: deliver_at,
            });
        }
        self.delivered += out.len() as u64;
        out
    }

    /// Earliest pending delivery time.
    pub fn next_due(&self) -> Option<u64> {
        self.pending.keys().next().map(|&(t, _)| t)
    }

    pub fn sent(&self) -> u64 {
        self.sent
    }

    pub fn delivered(&self) -> u64 {
        self.delivered
    }

    pub fn dropped(&self) -> u64 {
        self.dropped
    }

    pub fn in_flight(&self) -> u64 {
        self.pending.len() as u64
    }
}
