//! Recorded episodes, padded training batches and the episodic replay buffer.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::network::SicaNetwork;
use crate::envs::Environment;
use crate::error::{Error, Result};
use crate::numcore::Tensor;
use crate::ssm::{MiniBuffer, ObsActionPair};

/// One complete trajectory. `observations` and `states` hold `len + 1`
/// entries (the last one follows the final action).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub env_seed: u64,
    pub observations: Vec<Vec<Vec<f64>>>,
    pub states: Vec<Vec<f64>>,
    pub actions: Vec<Vec<usize>>,
    pub rewards: Vec<f64>,
    pub terminated: Vec<bool>,
}

/// JSONL line of an exported trajectory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub step: usize,
    pub state: Vec<f64>,
    pub observations: Vec<Vec<f64>>,
    pub actions: Vec<usize>,
    pub reward: f64,
    pub done: bool,
}

impl Episode {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn total_return(&self) -> f64 {
        self.rewards.iter().sum()
    }

    pub fn records(&self) -> Vec<TrajectoryRecord> {
        (0..self.len())
            .map(|t| TrajectoryRecord {
                step: t,
                state: self.states[t].clone(),
                observations: self.observations[t].clone(),
                actions: self.actions[t].clone(),
                reward: self.rewards[t],
                done: self.terminated[t],
            })
            .collect()
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for rec in self.records() {
            serde_json::to_writer(&mut w, &rec)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Resets `env` with the recorded seed, replays the actions and returns
    /// the rewards it produces.
    pub fn replay(&self, env: &mut dyn Environment) -> Result<Vec<f64>> {
        env.reset(self.env_seed);
        self.actions.iter().map(|u| Ok(env.step(u)?.reward)).collect()
    }

    /// Flattened mini-buffer windows for every step `0..=len`, one
    /// `[n_agents, window_width]` tensor per step.
    pub fn windows(&self, net: &SicaNetwork) -> Vec<Tensor> {
        let n = net.n_agents();
        let w = net.window_width();
        let mut bufs: Vec<MiniBuffer> = (0..n).map(|_| MiniBuffer::new(net.window())).collect();
        (0..=self.len())
            .map(|t| {
                let mut out = Tensor::zeros(n, w);
                for (i, buf) in bufs.iter_mut().enumerate() {
                    let prev = t.checked_sub(1).map(|p| self.actions[p][i]);
                    buf.push(ObsActionPair::new(self.observations[t][i].clone(), prev, net.spec.n_actions));
                    net.encode_window(buf, &mut out.data_mut()[i * w..(i + 1) * w]);
                }
                out
            })
            .collect()
    }
}

/// Episodes padded to a common length. Row `b * n + i` of the per-agent
/// tensors belongs to agent `i` of episode `b`.
#[derive(Clone, Debug)]
pub struct EpisodeBatch {
    pub size: usize,
    pub n_agents: usize,
    pub max_len: usize,
    pub lengths: Vec<usize>,
    /// `max_len + 1` tensors of `[size * n, window_width]`.
    pub windows: Vec<Tensor>,
    /// `max_len + 1` tensors of `[size, state_dim]`.
    pub states: Vec<Tensor>,
    /// `max_len` one-hot tensors of `[size * n, n_actions]`.
    pub actions: Vec<Tensor>,
    /// `[size, max_len]`.
    pub rewards: Tensor,
    pub terminated: Tensor,
    /// 1 where `t < length`, 0 on padding.
    pub mask: Tensor,
}

impl EpisodeBatch {
    pub fn new(episodes: &[&Episode], net: &SicaNetwork) -> Result<Self> {
        if episodes.is_empty() {
            return Err(Error::Config("empty episode batch".into()));
        }
        let n = net.n_agents();
        let u = net.spec.n_actions;
        let w = net.window_width();
        let sd = net.spec.state_dim;
        let size = episodes.len();
        let max_len = episodes.iter().map(|e| e.len()).max().unwrap_or(0);
        let mut windows = vec![Tensor::zeros(size * n, w); max_len + 1];
        let mut states = vec![Tensor::zeros(size, sd); max_len + 1];
        let mut actions = vec![Tensor::zeros(size * n, u); max_len];
        let mut rewards = Tensor::zeros(size, max_len);
        let mut terminated = Tensor::zeros(size, max_len);
        let mut mask = Tensor::zeros(size, max_len);
        for (b, ep) in episodes.iter().enumerate() {
            for (t, win) in ep.windows(net).into_iter().enumerate() {
                windows[t].data_mut()[b * n * w..(b + 1) * n * w].copy_from_slice(win.data());
                states[t].data_mut()[b * sd..(b + 1) * sd].copy_from_slice(&ep.states[t]);
            }
            for t in 0..ep.len() {
                for (i, &a) in ep.actions[t].iter().enumerate() {
                    actions[t].set(b * n + i, a, 1.0);
                }
                rewards.set(b, t, ep.rewards[t]);
                terminated.set(b, t, if ep.terminated[t] { 1.0 } else { 0.0 });
                mask.set(b, t, 1.0);
            }
        }
        Ok(Self {
            size,
            n_agents: n,
            max_len,
            lengths: episodes.iter().map(|e| e.len()).collect(),
            windows,
            states,
            actions,
            rewards,
            terminated,
            mask,
        })
    }

    /// Row mask for the per-agent rows at step `t`.
    pub fn agent_mask(&self, t: usize) -> Vec<f64> {
        (0..self.size * self.n_agents)
            .map(|r| self.mask.get(r / self.n_agents, t))
            .collect()
    }
}

/// Ring of whole episodes.
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    episodes: Vec<Episode>,
    inserted: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity: capacity.max(1),
            episodes: Vec::new(),
            inserted: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn inserted(&self) -> u64 {
        self.inserted
    }

    pub fn push(&mut self, ep: Episode) {
        let slot = (self.inserted % self.capacity as u64) as usize;
        if slot < self.episodes.len() {
            self.episodes[slot] = ep;
        } else {
            self.episodes.push(ep);
        }
        self.inserted += 1;
    }

    /// Distinct filled slots, uniformly at random.
    pub fn sample_indices(&self, batch: usize, rng: &mut impl Rng) -> Result<Vec<usize>> {
        if batch == 0 || batch > self.episodes.len() {
            return Err(Error::Config(format!(
                "cannot sample {batch} episodes from a buffer holding {}",
                self.episodes.len()
            )));
        }
        Ok(rand::seq::index::sample(rng, self.episodes.len(), batch).into_vec())
    }

    pub fn sample(&self, batch: usize, rng: &mut impl Rng) -> Result<Vec<&Episode>> {
        Ok(self
            .sample_indices(batch, rng)?
            .into_iter()
            .map(|i| &self.episodes[i])
            .collect())
    }

    pub fn get(&self, i: usize) -> Option<&Episode> {
        self.episodes.get(i)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dummy(seed: u64, len: usize) -> Episode {
        Episode {
            env_seed: seed,
            observations: vec![vec![vec![0.0]; 2]; len + 1],
            states: vec![vec![0.0]; len + 1],
            actions: vec![vec![0, 0]; len],
            rewards: vec![1.0; len],
            terminated: (0..len).map(|t| t + 1 == len).collect(),
        }
    }

    #[test]
    fn ring_overwrites_oldest() {
        let mut buf = ReplayBuffer::new(3);
        for s in 0..5 {
            buf.push(dummy(s, 1));
        }
        assert_eq!(buf.len(), 3);
        assert_eq!(buf.inserted(), 5);
        let seeds: Vec<u64> = (0..3).map(|i| buf.get(i).unwrap().env_seed).collect();
        assert_eq!(seeds, vec![3, 4, 2]);
    }

    #[test]
    fn sampling_is_distinct_and_filled_only() {
        let mut buf = ReplayBuffer::new(10);
        for s in 0..4 {
            buf.push(dummy(s, 1));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100 {
            let mut idx = buf.sample_indices(4, &mut rng).unwrap();
            idx.sort_unstable();
            assert_eq!(idx, vec![0, 1, 2, 3]);
        }
        assert!(buf.sample_indices(5, &mut rng).is_err());
    }
}
