//! Per-step schedules, with the ablation presets applied.

use serde::{Deserialize, Serialize};

use super::config::{RunConfig, Variant};
use crate::regen::{AlphaSchedule, PeerDecaySchedule};

/// Alignment-loss weight: `beta1` up to and including step `threshold`,
/// `beta2` afterwards.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SigmaSchedule {
    pub threshold: u64,
    pub beta1: f64,
    pub beta2: f64,
}

impl SigmaSchedule {
    pub fn sigma(&self, t: u64) -> f64 {
        if t <= self.threshold {
            self.beta1
        } else {
            self.beta2
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AlphaPlan {
    Cosine(AlphaSchedule),
    Fixed(f64),
    /// 1 before `switch`, 0 from then on.
    Switch { switch: u64 },
}

/// Everything that depends on the training step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Schedules {
    pub alpha: AlphaPlan,
    /// `None` means the alignment loss is off.
    pub sigma: Option<SigmaSchedule>,
    pub peers: PeerDecaySchedule,
    pub eps_start: f64,
    pub eps_end: f64,
    pub eps_steps: u64,
}

impl Schedules {
    pub fn from_config(cfg: &RunConfig, n_agents: usize) -> Self {
        let s = &cfg.schedule;
        let cosine = AlphaPlan::Cosine(AlphaSchedule {
            start: s.alpha_start,
            final_value: s.alpha_final,
            t_max: cfg.t_max(),
        });
        let sigma = Some(SigmaSchedule {
            threshold: cfg.sigma_threshold(),
            beta1: s.beta1,
            beta2: s.beta2,
        });
        let peers = PeerDecaySchedule {
            k: cfg.peer_decay_steps(),
            n_agents,
        };
        let (alpha, sigma, peers) = match cfg.run.variant {
            Variant::Sica | Variant::Ica => (cosine, sigma, peers),
            Variant::SicaZero => (AlphaPlan::Fixed(0.0), None, PeerDecaySchedule { k: 0, n_agents }),
            Variant::SicaOne => (
                AlphaPlan::Switch {
                    switch: cfg.one_switch_step(),
                },
                sigma,
                peers,
            ),
        };
        Self {
            alpha,
            sigma,
            peers,
            eps_start: cfg.train.eps_start,
            eps_end: cfg.train.eps_end,
            eps_steps: cfg.eps_anneal_steps(),
        }
    }

    pub fn alpha(&self, t: u64) -> f64 {
        match self.alpha {
            AlphaPlan::Cosine(s) => s.alpha(t),
            AlphaPlan::Fixed(a) => a,
            AlphaPlan::Switch { switch } => {
                if t < switch {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn sigma(&self, t: u64) -> f64 {
        self.sigma.map_or(0.0, |s| s.sigma(t))
    }

    pub fn peers(&self, t: u64) -> usize {
        self.peers.peers(t)
    }

    /// Linear from `eps_start` to `eps_end` over `eps_steps`, then flat.
    pub fn epsilon(&self, t: u64) -> f64 {
        if self.eps_steps == 0 || t >= self.eps_steps {
            return self.eps_end;
        }
        let f = t as f64 / self.eps_steps as f64;
        self.eps_start + (self.eps_end - self.eps_start) * f
    }
}
