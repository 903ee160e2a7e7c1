use super::{check_actions, one_hot, DecPomdpSpec, Environment, StepResult};
use crate::error::Result;

/// Row: agent 0's action, column: agent 1's action.
pub const CLIMB_PAYOFF: [[f64; 3]; 3] = [[11.0, -30.0, 0.0], [-30.0, 7.0, 6.0], [0.0, 0.0, 5.0]];

/// One-shot two-agent cooperative matrix game. Each agent observes only its
/// own index; the state is a constant.
#[derive(Clone, Debug, Default)]
pub struct ClimbGame {
    done: bool,
}

impl ClimbGame {
    pub fn new() -> Self {
        Self { done: false }
    }

    fn observe(&self, step: usize, reward: f64) -> StepResult {
        let observations = (0..2)
            .map(|i| {
                let mut o = Vec::with_capacity(2);
                one_hot(&mut o, Some(i), 2);
                o
            })
            .collect();
        StepResult {
            observations,
            state: vec![1.0],
            reward,
            terminated: self.done,
            step,
        }
    }
}

impl Environment for ClimbGame {
    fn spec(&self) -> DecPomdpSpec {
        DecPomdpSpec {
            n_agents: 2,
            n_actions: 3,
            obs_dim: 2,
            state_dim: 1,
            gamma: 1.0,
            episode_limit: 1,
        }
    }

    fn reset(&mut self, _seed: u64) -> StepResult {
        self.done = false;
        self.observe(0, 0.0)
    }

    fn step(&mut self, actions: &[usize]) -> Result<StepResult> {
        check_actions(&self.spec(), actions, self.done)?;
        self.done = true;
        Ok(self.observe(1, CLIMB_PAYOFF[actions[0]][actions[1]]))
    }

    fn oracle_optimal_return(&self) -> Result<f64> {
        Ok(CLIMB_PAYOFF
            .iter()
            .flatten()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max))
    }
}
