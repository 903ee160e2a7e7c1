use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{check_actions, one_hot, DecPomdpSpec, Environment, StepResult};
use crate::error::{Error, Result};

pub const CAPTURE_REWARD: f64 = 10.0;
pub const STEP_PENALTY: f64 = -0.1;
pub const CAPTURE_LIMIT: usize = 20;
/// Largest joint state-action space the oracle will enumerate.
pub const ORACLE_BUDGET: usize = 1_000_000;

/// Stay, up, down, left, right.
const MOVES: [(isize, isize); 5] = [(0, 0), (-1, 0), (1, 0), (0, -1), (0, 1)];

/// Predator-prey on a square grid.
///
/// Agents move first; the prey is captured when at least two agents are
/// within Manhattan distance 1 of it, paying +10 and ending the episode.
/// Otherwise every step costs 0.1 and the prey takes one of the five moves
/// uniformly at random (walls block). Agents see their own cell and a 3x3
/// window around it.
///
/// Observation of agent `i`: `[own cell one-hot (size^2), prey in 3x3 (9),
/// other agents in 3x3 (9), id one-hot (n)]`.
#[derive(Clone, Debug)]
pub struct CaptureGrid {
    n_agents: usize,
    size: usize,
    agents: Vec<usize>,
    prey: usize,
    step: usize,
    done: bool,
    rng: ChaCha8Rng,
}

impl CaptureGrid {
    pub fn new(n_agents: usize, size: usize) -> Result<Self> {
        if !(2..=3).contains(&n_agents) || size < 2 {
            return Err(Error::Config(format!(
                "capture-grid needs 2..=3 agents and size >= 2, got {n_agents} agents, size {size}"
            )));
        }
        Ok(Self {
            n_agents,
            size,
            agents: vec![0; n_agents],
            prey: 0,
            step: 0,
            done: true,
            rng: ChaCha8Rng::seed_from_u64(0),
        })
    }

    pub fn positions(&self) -> (&[usize], usize) {
        (&self.agents, self.prey)
    }

    fn cells(&self) -> usize {
        self.size * self.size
    }

    fn moved(&self, cell: usize, action: usize) -> usize {
        let (r, c) = ((cell / self.size) as isize, (cell % self.size) as isize);
        let (dr, dc) = MOVES[action];
        let (nr, nc) = (r + dr, c + dc);
        if nr < 0 || nc < 0 || nr >= self.size as isize || nc >= self.size as isize {
            cell
        } else {
            nr as usize * self.size + nc as usize
        }
    }

    fn distance(&self, a: usize, b: usize) -> usize {
        let (ar, ac) = (a / self.size, a % self.size);
        let (br, bc) = (b / self.size, b % self.size);
        ar.abs_diff(br) + ac.abs_diff(bc)
    }

    fn captured(&self, agents: &[usize], prey: usize) -> bool {
        agents.iter().filter(|&&a| self.distance(a, prey) <= 1).count() >= 2
    }

    fn valid_spawn(&self, agents: &[usize], prey: usize) -> bool {
        let mut all: Vec<usize> = agents.to_vec();
        all.push(prey);
        all.sort_unstable();
        all.windows(2).all(|w| w[0] != w[1]) && !self.captured(agents, prey)
    }

    fn window(&self, center: usize, out: &mut Vec<f64>, occupied: impl Fn(usize) -> bool) {
        let (r, c) = ((center / self.size) as isize, (center % self.size) as isize);
        for dr in -1..=1 {
            for dc in -1..=1 {
                let (nr, nc) = (r + dr, c + dc);
                let inside = nr >= 0 && nc >= 0 && nr < self.size as isize && nc < self.size as isize;
                let hit = inside && occupied(nr as usize * self.size + nc as usize);
                out.push(if hit { 1.0 } else { 0.0 });
            }
        }
    }

    fn observe(&self, reward: f64) -> StepResult {
        let cells = self.cells();
        let observations = (0..self.n_agents)
            .map(|i| {
                let me = self.agents[i];
                let mut o = Vec::with_capacity(cells + 18 + self.n_agents);
                one_hot(&mut o, Some(me), cells);
                self.window(me, &mut o, |cell| cell == self.prey);
                self.window(me, &mut o, |cell| {
                    self.agents.iter().enumerate().any(|(j, &a)| j != i && a == cell)
                });
                one_hot(&mut o, Some(i), self.n_agents);
                o
            })
            .collect();
        let mut state = Vec::with_capacity(cells * (self.n_agents + 1) + 1);
        for &a in &self.agents {
            one_hot(&mut state, Some(a), cells);
        }
        one_hot(&mut state, Some(self.prey), cells);
        state.push(self.step as f64 / CAPTURE_LIMIT as f64);
        StepResult {
            observations,
            state,
            reward,
            terminated: self.done,
            step: self.step,
        }
    }

    fn encode(&self, agents: &[usize], prey: usize) -> usize {
        let cells = self.cells();
        agents.iter().fold(prey, |acc, &a| acc * cells + a)
    }

    fn decode(&self, mut code: usize) -> (Vec<usize>, usize) {
        let cells = self.cells();
        let mut agents = vec![0; self.n_agents];
        for slot in agents.iter_mut().rev() {
            *slot = code % cells;
            code /= cells;
        }
        (agents, code)
    }
}

impl Environment for CaptureGrid {
    fn spec(&self) -> DecPomdpSpec {
        let cells = self.cells();
        DecPomdpSpec {
            n_agents: self.n_agents,
            n_actions: MOVES.len(),
            obs_dim: cells + 18 + self.n_agents,
            state_dim: cells * (self.n_agents + 1) + 1,
            gamma: 1.0,
            episode_limit: CAPTURE_LIMIT,
        }
    }

    fn reset(&mut self, seed: u64) -> StepResult {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        let cells = self.cells();
        loop {
            let agents: Vec<usize> = (0..self.n_agents).map(|_| self.rng.random_range(0..cells)).collect();
            let prey = self.rng.random_range(0..cells);
            if self.valid_spawn(&agents, prey) {
                self.agents = agents;
                self.prey = prey;
                break;
            }
        }
        self.step = 0;
        self.done = false;
        self.observe(0.0)
    }

    fn step(&mut self, actions: &[usize]) -> Result<StepResult> {
        check_actions(&self.spec(), actions, self.done)?;
        self.step += 1;
        for (i, &u) in actions.iter().enumerate() {
            self.agents[i] = self.moved(self.agents[i], u);
        }
        let reward = if self.captured(&self.agents, self.prey) {
            self.done = true;
            CAPTURE_REWARD
        } else {
            let m = self.rng.random_range(0..MOVES.len());
            self.prey = self.moved(self.prey, m);
            self.done = self.step >= CAPTURE_LIMIT;
            STEP_PENALTY
        };
        Ok(self.observe(reward))
    }

    /// Finite-horizon value iteration over (agent cells, prey cell) with the
    /// prey's move distribution, averaged over the uniform spawn distribution.
    fn oracle_optimal_return(&self) -> Result<f64> {
        let cells = self.cells();
        let n = self.n_agents;
        let states = cells.pow(n as u32 + 1);
        let joint = MOVES.len().pow(n as u32);
        if states.saturating_mul(joint) > ORACLE_BUDGET {
            return Err(Error::Env(format!(
                "capture-grid with {n} agents has {} joint state-actions, above the oracle budget of {ORACLE_BUDGET}",
                states.saturating_mul(joint)
            )));
        }
        let decode_joint = |mut j: usize| {
            let mut a = vec![0; n];
            for slot in a.iter_mut().rev() {
                *slot = j % MOVES.len();
                j /= MOVES.len();
            }
            a
        };
        let joints: Vec<Vec<usize>> = (0..joint).map(decode_joint).collect();
        // next[t] = value with t steps already taken
        let mut next = vec![0.0; states];
        for t in (0..CAPTURE_LIMIT).rev() {
            let mut cur = vec![0.0; states];
            for (code, slot) in cur.iter_mut().enumerate() {
                let (agents, prey) = self.decode(code);
                let mut best = f64::NEG_INFINITY;
                for u in &joints {
                    let moved: Vec<usize> = agents.iter().zip(u).map(|(&a, &m)| self.moved(a, m)).collect();
                    let value = if self.captured(&moved, prey) {
                        CAPTURE_REWARD
                    } else if t + 1 >= CAPTURE_LIMIT {
                        STEP_PENALTY
                    } else {
                        let future: f64 = (0..MOVES.len())
                            .map(|m| next[self.encode(&moved, self.moved(prey, m))])
                            .sum::<f64>()
                            / MOVES.len() as f64;
                        STEP_PENALTY + future
                    };
                    best = best.max(value);
                }
                *slot = best;
            }
            next = cur;
        }
        let mut total = 0.0;
        let mut count = 0usize;
        for (code, v) in next.iter().enumerate() {
            let (agents, prey) = self.decode(code);
            if self.valid_spawn(&agents, prey) {
                total += v;
                count += 1;
            }
        }
        Ok(total / count as f64)
    }
}
