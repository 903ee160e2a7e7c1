//! Acting in an environment: epsilon-greedy selection, episode rollouts and
//! greedy evaluation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::episode::Episode;
use super::network::{SicaNetwork, StepContext};
use crate::envs::Environment;
use crate::error::{Error, Result};
use crate::mixer::argmax;
use crate::numcore::{Graph, ParamSet, Tensor};
use crate::ssm::{MiniBuffer, ObsActionPair};

/// Lowest-index maximizer with probability `1 - eps`, otherwise a uniform
/// action. The exploration draw is skipped entirely when `eps == 0`.
pub fn epsilon_greedy(q: &[f64], eps: f64, rng: &mut impl Rng) -> Result<usize> {
    if q.is_empty() {
        return Err(Error::Config("epsilon_greedy on an empty action set".into()));
    }
    if !(0.0..=1.0).contains(&eps) {
        return Err(Error::Config(format!("epsilon must lie in [0, 1], got {eps}")));
    }
    if eps > 0.0 && rng.random::<f64>() < eps {
        return Ok(rng.random_range(0..q.len()));
    }
    Ok(argmax(q).unwrap_or(0))
}

/// Per-agent recurrent state carried through an episode.
#[derive(Clone, Debug)]
pub struct AgentMemory {
    pub buffers: Vec<MiniBuffer>,
    pub h: Tensor,
    pub r: Tensor,
    pub prev: Option<Vec<usize>>,
}

impl AgentMemory {
    pub fn new(net: &SicaNetwork) -> Self {
        let n = net.n_agents();
        Self {
            buffers: (0..n).map(|_| MiniBuffer::new(net.window())).collect(),
            h: Tensor::zeros(n, net.state_dim()),
            r: Tensor::zeros(n, net.state_dim()),
            prev: None,
        }
    }

    /// Pushes the newest observations, runs one network step and returns the
    /// per-agent action values `[n, n_actions]`.
    pub fn act(&mut self, net: &SicaNetwork, ps: &ParamSet, observations: &[Vec<f64>], ctx: StepContext) -> Result<Tensor> {
        let n = net.n_agents();
        let w = net.window_width();
        let mut windows = Tensor::zeros(n, w);
        for (i, buf) in self.buffers.iter_mut().enumerate() {
            let prev = self.prev.as_ref().map(|p| p[i]);
            buf.push(ObsActionPair::new(observations[i].clone(), prev, net.spec.n_actions));
            net.encode_window(buf, &mut windows.data_mut()[i * w..(i + 1) * w]);
        }
        let mut g = Graph::inference();
        let h = g.input(self.h.clone());
        let r = g.input(self.r.clone());
        let out = net.step(&mut g, ps, &windows, h, r, ctx)?;
        self.h = g.value(out.h).clone();
        self.r = g.value(out.r).clone();
        Ok(g.value(out.q).clone())
    }
}

/// Plays one episode from `env.reset(env_seed)`.
pub fn rollout_episode(
    net: &SicaNetwork,
    ps: &ParamSet,
    env: &mut dyn Environment,
    env_seed: u64,
    eps: f64,
    ctx: StepContext,
    rng: &mut impl Rng,
) -> Result<Episode> {
    let first = env.reset(env_seed);
    let limit = env.spec().episode_limit;
    let mut mem = AgentMemory::new(net);
    let mut ep = Episode {
        env_seed,
        observations: vec![first.observations],
        states: vec![first.state],
        actions: Vec::new(),
        rewards: Vec::new(),
        terminated: Vec::new(),
    };
    loop {
        let obs = ep.observations.last().expect("at least the reset observation");
        let q = mem.act(net, ps, obs, ctx)?;
        let actions = (0..net.n_agents())
            .map(|i| epsilon_greedy(q.row_slice(i), eps, rng))
            .collect::<Result<Vec<_>>>()?;
        let res = env.step(&actions)?;
        ep.observations.push(res.observations);
        ep.states.push(res.state);
        ep.rewards.push(res.reward);
        ep.terminated.push(res.terminated);
        mem.prev = Some(actions.clone());
        ep.actions.push(actions);
        if res.terminated {
            break;
        }
        if ep.len() > limit {
            return Err(Error::Env(format!("episode exceeded its limit of {limit} steps")));
        }
    }
    Ok(ep)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub episodes: usize,
    pub mean: f64,
    pub std: f64,
    pub returns: Vec<f64>,
}

impl EvalSummary {
    pub fn from_returns(returns: Vec<f64>) -> Self {
        let n = returns.len().max(1) as f64;
        let mean = returns.iter().sum::<f64>() / n;
        let var = returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
        Self {
            episodes: returns.len(),
            mean,
            std: var.sqrt(),
            returns,
        }
    }
}

/// Greedy episodes on the environment seeds `seeds`.
pub fn evaluate(
    net: &SicaNetwork,
    ps: &ParamSet,
    env: &mut dyn Environment,
    seeds: &[u64],
    ctx: StepContext,
) -> Result<(EvalSummary, Vec<Episode>)> {
    if seeds.is_empty() {
        return Err(Error::Config("evaluation needs at least one episode".into()));
    }
    // eps = 0 never touches the generator
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let episodes = seeds
        .iter()
        .map(|&s| rollout_episode(net, ps, env, s, 0.0, ctx, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    let summary = EvalSummary::from_returns(episodes.iter().map(Episode::total_return).collect());
    Ok((summary, episodes))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn greedy_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(epsilon_greedy(&[1.0, 3.0, 2.0], 0.0, &mut rng).unwrap(), 1);
        assert_eq!(epsilon_greedy(&[2.0, 2.0, 1.0], 0.0, &mut rng).unwrap(), 0);
        assert!(epsilon_greedy(&[], 0.0, &mut rng).is_err());
        assert!(epsilon_greedy(&[1.0], 1.5, &mut rng).is_err());
    }

    #[test]
    fn uniform_when_eps_is_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut counts = [0usize; 3];
        for _ in 0..10_000 {
            counts[epsilon_greedy(&[5.0, 0.0, 0.0], 1.0, &mut rng).unwrap()] += 1;
        }
        for c in counts {
            assert!((c as f64 / 10_000.0 - 1.0 / 3.0).abs() < 0.02, "{counts:?}");
        }
    }
}
