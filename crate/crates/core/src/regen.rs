//! Regeneration Block, cross-information and the schedules that move the
//! agents from communication-assisted to purely local decisions.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::encoder::Encoder;
use crate::error::{Error, Result};
use crate::numcore::{Graph, Mlp, ParamSet, Tensor, Var};

/// Cosine transition of the communication weight from `start` to `final_value`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlphaSchedule {
    pub start: f64,
    pub final_value: f64,
    pub t_max: u64,
}

impl Default for AlphaSchedule {
    fn default() -> Self {
        Self {
            start: 1.0,
            final_value: 0.0,
            t_max: 1,
        }
    }
}

impl AlphaSchedule {
    pub fn new(t_max: u64) -> Self {
        Self {
            t_max: t_max.max(1),
            ..Self::default()
        }
    }

    /// `final + (start - final) * (1 + cos(pi * t / t_max)) / 2`, held at
    /// `final` from `t_max` on.
    pub fn alpha(&self, t: u64) -> f64 {
        if t >= self.t_max {
            return self.final_value;
        }
        // ratio first, so that t = t_max / 2 gives exactly pi / 2
        let phase = std::f64::consts::PI * (t as f64 / self.t_max as f64);
        self.final_value + (self.start - self.final_value) * (1.0 + phase.cos()) / 2.0
    }
}

/// Number of peers whose pairs the Regeneration Block may read: `n - 1` at
/// the start, decaying linearly to zero at step `k`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeerDecaySchedule {
    pub k: u64,
    pub n_agents: usize,
}

impl PeerDecaySchedule {
    pub fn peers(&self, t: u64) -> usize {
        let others = self.n_agents.saturating_sub(1) as u64;
        if self.k == 0 || t >= self.k {
            return 0;
        }
        let remaining = self.k - t;
        ((others * remaining).div_ceil(self.k)) as usize
    }
}

/// `(1 - a) * v_hat + a * v`.
pub fn cross_info(v_hat: &[f64], v: &[f64], a: f64) -> Result<Vec<f64>> {
    if v_hat.len() != v.len() {
        return Err(Error::Shape {
            op: "cross_info",
            lhs: (1, v_hat.len()),
            rhs: (1, v.len()),
        });
    }
    let mut g = Graph::inference();
    let vh = g.input(Tensor::row(v_hat));
    let vv = g.input(Tensor::row(v));
    let out = cross_info_var(&mut g, vh, vv, a)?;
    Ok(g.value(out).data().to_vec())
}

/// At `a = 0` the result is `v_hat` itself and at `a = 1` it is `v`, so the
/// endpoints are exact and carry no dependence on the other operand.
pub fn cross_info_var(g: &mut Graph, v_hat: Var, v: Var, a: f64) -> Result<Var> {
    if g.shape(v_hat) != g.shape(v) {
        return Err(Error::Shape {
            op: "cross_info",
            lhs: g.shape(v_hat),
            rhs: g.shape(v),
        });
    }
    if a == 0.0 {
        return Ok(v_hat);
    }
    if a == 1.0 {
        return Ok(v);
    }
    let left = g.scale(v_hat, 1.0 - a);
    let right = g.scale(v, a);
    g.add(left, right)
}

/// Mean squared error between regenerated and true information over the
/// rows selected by `row_mask` (1 keeps a row, 0 drops it). With every agent
/// contributing the same number of rows this equals `(1/n) sum_i E[(v_hat_i - v_i)^2]`.
pub fn align_loss_var(g: &mut Graph, v_hat: Var, v_target: Var, row_mask: &[f64]) -> Result<Var> {
    let (rows, d) = g.shape(v_hat);
    if row_mask.len() != rows {
        return Err(Error::Shape {
            op: "align_loss",
            lhs: (rows, d),
            rhs: (row_mask.len(), 1),
        });
    }
    let diff = g.sub(v_hat, v_target)?;
    let sq = g.square(diff);
    let mut m = Tensor::zeros(rows, d);
    for (r, &keep) in row_mask.iter().enumerate() {
        m.data_mut()[r * d..(r + 1) * d].iter_mut().for_each(|x| *x = keep);
    }
    let mask = g.input(m);
    let kept = g.mul(sq, mask)?;
    let total = g.sum(kept);
    let count = row_mask.iter().sum::<f64>() * d as f64;
    Ok(g.scale(total, 1.0 / count.max(1.0)))
}

/// Value-level alignment loss for one time step of `n` agents.
pub fn align_loss(v_hats: &[Vec<f64>], vs: &[Vec<f64>]) -> Result<f64> {
    if v_hats.len() != vs.len() || v_hats.is_empty() {
        return Err(Error::Shape {
            op: "align_loss",
            lhs: (v_hats.len(), 0),
            rhs: (vs.len(), 0),
        });
    }
    let mut g = Graph::inference();
    let vh = g.input(Tensor::from_rows(v_hats));
    let v = g.input(Tensor::from_rows(vs));
    if g.shape(vh) != g.shape(v) {
        return Err(Error::Shape {
            op: "align_loss",
            lhs: g.shape(vh),
            rhs: g.shape(v),
        });
    }
    let l = align_loss_var(&mut g, vh, v, &vec![1.0; vs.len()])?;
    Ok(g.value(l).item())
}

/// Encoder over the agent's own window (plus permitted peer windows early in
/// training) and an MLP producing the regenerated information `v_hat`.
#[derive(Clone, Debug)]
pub struct RegenBlock {
    pub encoder: Encoder,
    pub head: Mlp,
    window_width: usize,
    slots: usize,
}

impl RegenBlock {
    /// `window_width` is one agent's flattened mini-buffer; the encoder reads
    /// `n_agents` such windows (own first, then peer slots).
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        ps: &mut ParamSet,
        name: &str,
        gated: bool,
        window_width: usize,
        n_agents: usize,
        hidden: usize,
        state_dim: usize,
        info_dim: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let input = window_width * n_agents;
        let encoder = Encoder::new(ps, &format!("{name}.enc"), gated, input, hidden, state_dim, rng)?;
        let head = Mlp::new(ps, &format!("{name}.head"), &[state_dim, hidden, info_dim], rng)?;
        Ok(Self {
            encoder,
            head,
            window_width,
            slots: n_agents,
        })
    }

    pub fn input_width(&self) -> usize {
        self.window_width * self.slots
    }

    /// Encoder input for one agent: own window, then the first `allowed`
    /// peers (lowest index first), remaining slots zero.
    pub fn assemble_input(&self, own: &[f64], peers: &[&[f64]], allowed: usize, out: &mut [f64]) {
        let w = self.window_width;
        debug_assert_eq!(out.len(), self.input_width());
        out.iter_mut().for_each(|x| *x = 0.0);
        out[..w].copy_from_slice(own);
        for (slot, p) in peers.iter().take(allowed.min(self.slots - 1)).enumerate() {
            out[(slot + 1) * w..(slot + 2) * w].copy_from_slice(p);
        }
    }

    /// Returns `(next encoder state, v_hat)`.
    pub fn forward(&self, g: &mut Graph, ps: &ParamSet, input: Var, state: Var) -> Result<(Var, Var)> {
        let next = self.encoder.forward(g, ps, input, state)?;
        let v_hat = self.head.forward(g, ps, next)?;
        Ok((next, v_hat))
    }
}
