//! Per-agent Q head and the value-decomposition mixers.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::{Graph, Linear, Mlp, ParamSet, Tensor, Var};

/// Lowest index among the maximal entries.
pub fn argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in values.iter().enumerate() {
        match best {
            Some((_, b)) if v <= b => {}
            _ => best = Some((i, v)),
        }
    }
    best.map(|(i, _)| i)
}

/// MLP from `concat(v_bar, h)` to one value per action.
#[derive(Clone, Debug)]
pub struct AgentQHead {
    pub mlp: Mlp,
    n_actions: usize,
}

impl AgentQHead {
    pub fn new(ps: &mut ParamSet, name: &str, info_dim: usize, state_dim: usize, hidden: usize, n_actions: usize, rng: &mut impl Rng) -> Result<Self> {
        let mlp = Mlp::new(ps, name, &[info_dim + state_dim, hidden, n_actions], rng)?;
        Ok(Self { mlp, n_actions })
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn forward(&self, g: &mut Graph, ps: &ParamSet, v_bar: Var, h: Var) -> Result<Var> {
        let x = g.concat(&[v_bar, h])?;
        self.mlp.forward(g, ps, x)
    }

    /// Value-level evaluation for one agent.
    pub fn agent_q(&self, ps: &ParamSet, v_bar: &[f64], h: &[f64]) -> Result<Vec<f64>> {
        let expected = self.mlp.in_dim();
        if v_bar.len() + h.len() != expected {
            return Err(Error::Shape {
                op: "agent_q",
                lhs: (v_bar.len(), h.len()),
                rhs: (1, expected),
            });
        }
        let mut g = Graph::inference();
        let vb = g.input(Tensor::row(v_bar));
        let hv = g.input(Tensor::row(h));
        let q = self.forward(&mut g, ps, vb, hv)?;
        Ok(g.value(q).data().to_vec())
    }
}

/// How hypernetwork weight outputs are made nonnegative.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightTransform {
    #[default]
    Abs,
    Softplus,
    /// No transform. Breaks monotonicity; used to check that violations are caught.
    Raw,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum HiddenActivation {
    #[default]
    Elu,
    Identity,
}

/// Monotonic two-layer mixing network whose weights are produced from the
/// global state by single-layer hypernetworks.
#[derive(Clone, Debug)]
pub struct QmixMixer {
    pub hyper_w1: Linear,
    pub hyper_b1: Linear,
    pub hyper_w2: Linear,
    pub hyper_b2: Linear,
    pub transform: WeightTransform,
    pub activation: HiddenActivation,
    n_agents: usize,
    embed: usize,
}

impl QmixMixer {
    pub fn new(
        ps: &mut ParamSet,
        name: &str,
        n_agents: usize,
        state_dim: usize,
        embed: usize,
        transform: WeightTransform,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        Ok(Self {
            hyper_w1: Linear::new(ps, &format!("{name}.hyper_w1"), state_dim, n_agents * embed, rng)?,
            hyper_b1: Linear::new(ps, &format!("{name}.hyper_b1"), state_dim, embed, rng)?,
            hyper_w2: Linear::new(ps, &format!("{name}.hyper_w2"), state_dim, embed, rng)?,
            hyper_b2: Linear::new(ps, &format!("{name}.hyper_b2"), state_dim, 1, rng)?,
            transform,
            activation: HiddenActivation::Elu,
            n_agents,
            embed,
        })
    }

    pub fn embed(&self) -> usize {
        self.embed
    }

    fn nonneg(&self, g: &mut Graph, x: Var) -> Var {
        match self.transform {
            WeightTransform::Abs => g.abs(x),
            WeightTransform::Softplus => g.softplus(x),
            WeightTransform::Raw => x,
        }
    }

    /// `qs: [B, n]`, `state: [B, state_dim]` -> `[B, 1]`.
    pub fn forward(&self, g: &mut Graph, ps: &ParamSet, qs: Var, state: Var) -> Result<Var> {
        if g.shape(qs).1 != self.n_agents || g.shape(qs).0 != g.shape(state).0 {
            return Err(Error::Shape {
                op: "qmix",
                lhs: g.shape(qs),
                rhs: g.shape(state),
            });
        }
        let w1 = self.hyper_w1.forward(g, ps, state)?;
        let w1 = self.nonneg(g, w1);
        let b1 = self.hyper_b1.forward(g, ps, state)?;
        let hidden = g.row_vec_mat(qs, w1)?;
        let hidden = g.add(hidden, b1)?;
        let hidden = match self.activation {
            HiddenActivation::Elu => g.elu(hidden),
            HiddenActivation::Identity => hidden,
        };
        let w2 = self.hyper_w2.forward(g, ps, state)?;
        let w2 = self.nonneg(g, w2);
        let b2 = self.hyper_b2.forward(g, ps, state)?;
        let prod = g.mul(hidden, w2)?;
        let out = g.row_sum(prod);
        g.add(out, b2)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MixerKind {
    #[default]
    Qmix,
    Vdn,
}

#[derive(Clone, Debug)]
pub enum Mixer {
    Qmix(QmixMixer),
    Vdn,
}

impl Mixer {
    pub fn forward(&self, g: &mut Graph, ps: &ParamSet, qs: Var, state: Var) -> Result<Var> {
        match self {
            Self::Qmix(m) => m.forward(g, ps, qs, state),
            Self::Vdn => Ok(g.row_sum(qs)),
        }
    }

    /// `Q_tot` for one joint value vector and state.
    pub fn mix(&self, ps: &ParamSet, qs: &[f64], state: &[f64]) -> Result<f64> {
        let mut g = Graph::inference();
        let q = g.input(Tensor::row(qs));
        let s = g.input(Tensor::row(state));
        let out = self.forward(&mut g, ps, q, s)?;
        Ok(g.value(out).item())
    }
}

pub fn vdn_mix(qs: &[f64]) -> f64 {
    qs.iter().sum()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IgmReport {
    pub trials: usize,
    pub violations: usize,
}

impl IgmReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Exhaustively compares the joint argmax of the mixed value with the tuple
/// of per-agent argmaxes on random per-agent Q tables and random states.
/// Joint actions are enumerated with agent 0 as the most significant digit,
/// so the first maximum found is the lowest-index tuple.
pub fn igm_check(
    mixer: &Mixer,
    ps: &ParamSet,
    n_agents: usize,
    n_actions: usize,
    state_dim: usize,
    trials: usize,
    rng: &mut impl Rng,
) -> Result<IgmReport> {
    let joint = n_actions.checked_pow(n_agents as u32).filter(|&j| j <= 1 << 20).ok_or_else(|| {
        Error::Config(format!("{n_actions}^{n_agents} joint actions are too many to enumerate"))
    })?;
    let mut violations = 0;
    for _ in 0..trials {
        let table: Vec<Vec<f64>> = (0..n_agents)
            .map(|_| (0..n_actions).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let state: Vec<f64> = (0..state_dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut qs = Tensor::zeros(joint, n_agents);
        for j in 0..joint {
            let mut rem = j;
            for i in (0..n_agents).rev() {
                qs.set(j, i, table[i][rem % n_actions]);
                rem /= n_actions;
            }
        }
        let mut states = Tensor::zeros(joint, state_dim);
        for j in 0..joint {
            states.data_mut()[j * state_dim..(j + 1) * state_dim].copy_from_slice(&state);
        }
        let mut g = Graph::inference();
        let q = g.input(qs);
        let s = g.input(states);
        let tot = mixer.forward(&mut g, ps, q, s)?;
        let best = argmax(g.value(tot).data()).unwrap_or(0);
        let mut rem = best;
        let mut joint_tuple = vec![0; n_agents];
        for i in (0..n_agents).rev() {
            joint_tuple[i] = rem % n_actions;
            rem /= n_actions;
        }
        let local: Vec<usize> = table.iter().map(|q| argmax(q).unwrap_or(0)).collect();
        if joint_tuple != local {
            violations += 1;
        }
    }
    Ok(IgmReport { trials, violations })
}
