//! Network timing: how long each monitor takes to see each entry.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::{ChainId, PartyId};
use crate::ledger::Tick;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NetworkMode {
    #[default]
    Synchronous,
    SemiSynchronous,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkModel {
    pub mode: NetworkMode,
    pub delta: Tick,
    /// Global stabilization time (semi-synchronous only).
    pub gst: Tick,
    /// Largest delay the default policy draws before GST.
    pub pre_gst_cap: Tick,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("delay {delay} for an entry published at {publish} breaks the {mode:?} bound")]
pub struct ScheduleViolation {
    pub publish: Tick,
    pub delay: Tick,
    pub mode: NetworkMode,
}

impl NetworkModel {
    pub fn synchronous(delta: Tick) -> Self {
        Self {
            mode: NetworkMode::Synchronous,
            delta,
            gst: 0,
            pre_gst_cap: delta,
        }
    }

    /// Latest tick by which an entry published at `publish` must be seen.
    pub fn deadline(&self, publish: Tick) -> Tick {
        match self.mode {
            NetworkMode::Synchronous => publish + self.delta,
            NetworkMode::SemiSynchronous => publish.max(self.gst) + self.delta,
        }
    }

    pub fn check(&self, publish: Tick, delay: Tick) -> Result<(), ScheduleViolation> {
        if delay >= 1 && publish + delay <= self.deadline(publish) {
            Ok(())
        } else {
            Err(ScheduleViolation {
                publish,
                delay,
                mode: self.mode,
            })
        }
    }
}

/// One notification awaiting a delay.
#[derive(Clone, Debug)]
pub struct Notice<'a> {
    pub chain: &'a ChainId,
    pub seq: u64,
    pub publish: Tick,
    pub monitor: &'a PartyId,
    pub accepted: bool,
    pub t0: Tick,
}

/// Chooses notification delays for non-publishing compliant monitors.
pub trait Schedule {
    fn delay(&mut self, notice: &Notice<'_>) -> Tick;
}

/// Seeded random delays within the network model.
#[derive(Clone, Debug)]
pub struct RandomSchedule {
    rng: ChaCha8Rng,
    net: NetworkModel,
}

impl RandomSchedule {
    pub fn new(seed: u64, net: NetworkModel) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            net,
        }
    }
}

impl Schedule for RandomSchedule {
    fn delay(&mut self, n: &Notice<'_>) -> Tick {
        let net = &self.net;
        match net.mode {
            NetworkMode::SemiSynchronous if n.publish < net.gst => {
                let d = self.rng.gen_range(1..=net.pre_gst_cap.max(1));
                d.min(net.deadline(n.publish) - n.publish)
            }
            _ => self.rng.gen_range(1..=net.delta),
        }
    }
}

/// Delays from an explicit choice vector, for exhaustive exploration.
///
/// Accepted entries published at or after `t0` are choice points with
/// alternatives `{1, Δ}`. Everything else is fixed: `Δ` before `t0`, `1` for
/// rejected entries.
#[derive(Clone, Debug)]
pub struct ChoiceSchedule {
    delta: Tick,
    prefix: Vec<u8>,
    taken: Vec<u8>,
    max_points: usize,
    truncated: bool,
}

impl ChoiceSchedule {
    pub fn new(delta: Tick, prefix: Vec<u8>, max_points: usize) -> Self {
        Self {
            delta,
            prefix,
            taken: Vec::new(),
            max_points,
            truncated: false,
        }
    }

    /// The choices actually made, one per choice point.
    pub fn taken(&self) -> &[u8] {
        &self.taken
    }

    /// True if more choice points occurred than `max_points`.
    pub fn truncated(&self) -> bool {
        self.truncated
    }
}

impl Schedule for ChoiceSchedule {
    fn delay(&mut self, n: &Notice<'_>) -> Tick {
        if n.publish < n.t0 {
            return self.delta;
        }
        if !n.accepted {
            return 1;
        }
        let i = self.taken.len();
        if i >= self.max_points {
            self.truncated = true;
            return self.delta;
        }
        let c = self.prefix.get(i).copied().unwrap_or(0);
        self.taken.push(c);
        if c == 0 {
            1
        } else {
            self.delta
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn notice<'a>(chain: &'a ChainId, monitor: &'a PartyId, publish: Tick) -> Notice<'a> {
        Notice {
            chain,
            seq: 0,
            publish,
            monitor,
            accepted: true,
            t0: 0,
        }
    }

    #[test]
    fn random_synchronous_delays_respect_delta() {
        let net = NetworkModel::synchronous(5);
        let mut s = RandomSchedule::new(1, net);
        let (c, m) = (ChainId::new("c"), PartyId::new("m"));
        for t in 0..500 {
            let d = s.delay(&notice(&c, &m, t));
            assert!(net.check(t, d).is_ok());
        }
    }

    #[test]
    fn semi_synchronous_pre_gst_delivers_by_gst_plus_delta() {
        let net = NetworkModel {
            mode: NetworkMode::SemiSynchronous,
            delta: 5,
            gst: 100,
            pre_gst_cap: 1000,
        };
        let mut s = RandomSchedule::new(7, net);
        let (c, m) = (ChainId::new("c"), PartyId::new("m"));
        for t in 0..200 {
            let d = s.delay(&notice(&c, &m, t));
            assert!(t + d <= t.max(100) + 5);
            assert!(net.check(t, d).is_ok());
        }
        assert!(net.check(10, 96).is_err());
    }

    #[test]
    fn synchronous_bound_rejects_late_delivery() {
        let net = NetworkModel::synchronous(5);
        assert!(net.check(10, 5).is_ok());
        assert!(net.check(10, 6).is_err());
        assert!(net.check(10, 0).is_err());
    }

    #[test]
    fn choice_schedule_follows_prefix_then_defaults() {
        let mut s = ChoiceSchedule::new(5, vec![1, 0], 3);
        let (c, m) = (ChainId::new("c"), PartyId::new("m"));
        let ds: Vec<Tick> = (0..4).map(|_| s.delay(&notice(&c, &m, 0))).collect();
        assert_eq!(ds, vec![5, 1, 1, 5]);
        assert_eq!(s.taken(), &[1, 0, 0]);
        assert!(s.truncated());
    }
}
