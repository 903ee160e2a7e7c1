use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{check_actions, one_hot, DecPomdpSpec, Environment, StepResult};
use crate::error::{Error, Result};

/// Two-step signalling game.
///
/// Agent 0 privately observes a signal drawn uniformly from `0..n_signals`.
/// On the second step every agent is rewarded 1 if all of them choose the
/// signal's value, 0 otherwise. First-step actions are free and become part
/// of everyone's second-step observation, which is the only channel through
/// which the signal can reach the other agents at execution time.
///
/// Observation of agent `i`: `[id one-hot (n), step one-hot (2),
/// signal one-hot (k, zeros unless i = 0), previous joint action one-hots (n*k)]`.
#[derive(Clone, Debug)]
pub struct SignalMatch {
    n_agents: usize,
    n_signals: usize,
    signal: usize,
    step: usize,
    prev: Option<Vec<usize>>,
    done: bool,
}

pub const SIGNAL_MATCH_STEPS: usize = 2;

impl SignalMatch {
    pub fn new(n_agents: usize, n_signals: usize) -> Result<Self> {
        if !(2..=4).contains(&n_agents) || n_signals < 2 {
            return Err(Error::Config(format!(
                "signal-match needs 2..=4 agents and >= 2 signals, got {n_agents} agents, {n_signals} signals"
            )));
        }
        Ok(Self {
            n_agents,
            n_signals,
            signal: 0,
            step: 0,
            prev: None,
            done: true,
        })
    }

    pub fn signal(&self) -> usize {
        self.signal
    }

    /// Starts an episode with a chosen signal (used by the oracle).
    pub fn reset_with_signal(&mut self, signal: usize) -> StepResult {
        self.signal = signal;
        self.step = 0;
        self.prev = None;
        self.done = false;
        self.observe(0.0)
    }

    fn prev_block(&self, out: &mut Vec<f64>) {
        for i in 0..self.n_agents {
            one_hot(out, self.prev.as_ref().map(|p| p[i]), self.n_signals);
        }
    }

    fn observe(&self, reward: f64) -> StepResult {
        let n = self.n_agents;
        let k = self.n_signals;
        let observations = (0..n)
            .map(|i| {
                let mut o = Vec::with_capacity(n + 2 + k + n * k);
                one_hot(&mut o, Some(i), n);
                one_hot(&mut o, Some(self.step.min(1)), 2);
                one_hot(&mut o, (i == 0).then_some(self.signal), k);
                self.prev_block(&mut o);
                o
            })
            .collect();
        let mut state = Vec::with_capacity(k + 2 + n * k);
        one_hot(&mut state, Some(self.signal), k);
        one_hot(&mut state, Some(self.step.min(1)), 2);
        self.prev_block(&mut state);
        StepResult {
            observations,
            state,
            reward,
            terminated: self.done,
            step: self.step,
        }
    }
}

impl Environment for SignalMatch {
    fn spec(&self) -> DecPomdpSpec {
        let n = self.n_agents;
        let k = self.n_signals;
        DecPomdpSpec {
            n_agents: n,
            n_actions: k,
            obs_dim: n + 2 + k + n * k,
            state_dim: k + 2 + n * k,
            gamma: 1.0,
            episode_limit: SIGNAL_MATCH_STEPS,
        }
    }

    fn reset(&mut self, seed: u64) -> StepResult {
        let signal = ChaCha8Rng::seed_from_u64(seed).random_range(0..self.n_signals);
        self.reset_with_signal(signal)
    }

    fn step(&mut self, actions: &[usize]) -> Result<StepResult> {
        check_actions(&self.spec(), actions, self.done)?;
        self.step += 1;
        self.prev = Some(actions.to_vec());
        let last = self.step == SIGNAL_MATCH_STEPS;
        let reward = if last && actions.iter().all(|&a| a == self.signal) {
            1.0
        } else {
            0.0
        };
        self.done = last;
        Ok(self.observe(reward))
    }

    /// Brute force: for each signal, the best total reward over every joint
    /// action sequence, simulated through `step`; averaged over signals.
    fn oracle_optimal_return(&self) -> Result<f64> {
        let spec = self.spec();
        let joint = spec.n_actions.pow(spec.n_agents as u32);
        let decode = |mut j: usize| {
            let mut a = vec![0; spec.n_agents];
            for slot in a.iter_mut().rev() {
                *slot = j % spec.n_actions;
                j /= spec.n_actions;
            }
            a
        };
        let mut total = 0.0;
        for signal in 0..self.n_signals {
            let mut best = f64::NEG_INFINITY;
            for first in 0..joint {
                for second in 0..joint {
                    let mut env = self.clone();
                    env.reset_with_signal(signal);
                    let r1 = env.step(&decode(first))?.reward;
                    let r2 = env.step(&decode(second))?.reward;
                    best = best.max(r1 + r2);
                }
            }
            total += best;
        }
        Ok(total / self.n_signals as f64)
    }
}
