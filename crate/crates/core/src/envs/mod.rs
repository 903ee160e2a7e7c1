//! Small cooperative Dec-POMDPs with a shared reward and exact optimal-return
//! oracles.

mod capture;
mod climb;
mod signal;

pub use capture::CaptureGrid;
pub use climb::{ClimbGame, CLIMB_PAYOFF};
pub use signal::SignalMatch;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Static description of an environment.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecPomdpSpec {
    pub n_agents: usize,
    pub n_actions: usize,
    pub obs_dim: usize,
    pub state_dim: usize,
    /// Discount of the return the oracle optimizes. Episodes are finite, so
    /// every environment here uses 1.
    pub gamma: f64,
    pub episode_limit: usize,
}

/// What every agent sees after a reset or a joint step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepResult {
    pub observations: Vec<Vec<f64>>,
    pub state: Vec<f64>,
    /// Shared by all agents.
    pub reward: f64,
    pub terminated: bool,
    pub step: usize,
}

pub trait Environment: Send {
    fn spec(&self) -> DecPomdpSpec;

    /// Starts a new episode; the initial state is a pure function of `seed`.
    fn reset(&mut self, seed: u64) -> StepResult;

    fn step(&mut self, actions: &[usize]) -> Result<StepResult>;

    /// Exact optimal expected return with full state information.
    fn oracle_optimal_return(&self) -> Result<f64>;
}

/// Environment selection, as written in run configs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EnvConfig {
    Climb,
    SignalMatch {
        #[serde(default = "default_two")]
        n_agents: usize,
        #[serde(default = "default_three")]
        n_signals: usize,
    },
    CaptureGrid {
        #[serde(default = "default_two")]
        n_agents: usize,
        #[serde(default = "default_four")]
        size: usize,
    },
}

fn default_two() -> usize {
    2
}
fn default_three() -> usize {
    3
}
fn default_four() -> usize {
    4
}

impl EnvConfig {
    pub fn key(&self) -> &'static str {
        match self {
            Self::Climb => "climb",
            Self::SignalMatch { .. } => "signal-match",
            Self::CaptureGrid { .. } => "capture-grid",
        }
    }

    pub fn build(&self) -> Result<Box<dyn Environment>> {
        Ok(match *self {
            Self::Climb => Box::new(ClimbGame::new()),
            Self::SignalMatch { n_agents, n_signals } => Box::new(SignalMatch::new(n_agents, n_signals)?),
            Self::CaptureGrid { n_agents, size } => Box::new(CaptureGrid::new(n_agents, size)?),
        })
    }
}

pub(crate) fn check_actions(spec: &DecPomdpSpec, actions: &[usize], done: bool) -> Result<()> {
    if done {
        return Err(Error::Env("step called on a terminated episode".into()));
    }
    if actions.len() != spec.n_agents {
        return Err(Error::Env(format!("expected {} actions, got {}", spec.n_agents, actions.len())));
    }
    if let Some(&a) = actions.iter().find(|&&a| a >= spec.n_actions) {
        return Err(Error::Env(format!("action {a} out of range 0..{}", spec.n_actions)));
    }
    Ok(())
}

pub(crate) fn one_hot(out: &mut Vec<f64>, index: Option<usize>, len: usize) {
    let start = out.len();
    out.resize(start + len, 0.0);
    if let Some(i) = index {
        out[start + i] = 1.0;
    }
}
