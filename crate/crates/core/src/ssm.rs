//! The Selection Block: a mini-buffer of recent observation/action pairs,
//! a gating unit, and a selective state-space (S6) layer whose step size and
//! input projection depend on the current input.
//!
//! The state matrix is diagonal, so zero-order-hold discretization is
//! elementwise:
//!
//! ```text
//! A_bar = exp(delta * a)
//! B_bar = (exp(delta * a) - 1) / (delta * a) * delta * B_t
//! h_k   = A_bar * h_{k-1} + B_bar * z_k
//! ```

use std::collections::VecDeque;

use rand::Rng;

use crate::error::{Error, Result};
use crate::numcore::{Graph, Linear, Mlp, ParamId, ParamSet, Tensor, Var};

/// One observation together with the action taken on the previous step.
///
/// `prev_action` is one-hot, or all zeros on the first step of an episode.
#[derive(Clone, Debug, PartialEq)]
pub struct ObsActionPair {
    pub observation: Vec<f64>,
    pub prev_action: Vec<f64>,
}

impl ObsActionPair {
    pub fn new(observation: Vec<f64>, prev_action: Option<usize>, n_actions: usize) -> Self {
        let mut onehot = vec![0.0; n_actions];
        if let Some(a) = prev_action {
            onehot[a] = 1.0;
        }
        Self {
            observation,
            prev_action: onehot,
        }
    }

    pub fn width(&self) -> usize {
        self.observation.len() + self.prev_action.len()
    }

    fn write_into(&self, out: &mut [f64]) {
        let n = self.observation.len();
        out[..n].copy_from_slice(&self.observation);
        out[n..n + self.prev_action.len()].copy_from_slice(&self.prev_action);
    }
}

/// Sliding window of the last `capacity` pairs, oldest first.
#[derive(Clone, Debug)]
pub struct MiniBuffer {
    capacity: usize,
    entries: VecDeque<ObsActionPair>,
}

impl MiniBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "mini-buffer capacity must be positive");
        Self {
            capacity,
            entries: VecDeque::with_capacity(capacity),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn push(&mut self, pair: ObsActionPair) {
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back(pair);
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }

    pub fn entries(&self) -> impl Iterator<Item = &ObsActionPair> {
        self.entries.iter()
    }

    /// Flattened window of `capacity * pair_width` values, oldest first.
    /// Missing slots are zero and sit before the oldest entry, so the newest
    /// pair always occupies the last slot.
    pub fn encode(&self, pair_width: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.capacity * pair_width];
        self.encode_into(pair_width, &mut out);
        out
    }

    pub fn encode_into(&self, pair_width: usize, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.capacity * pair_width);
        out.iter_mut().for_each(|v| *v = 0.0);
        let pad = self.capacity - self.entries.len();
        for (k, pair) in self.entries.iter().enumerate() {
            debug_assert_eq!(pair.width(), pair_width);
            let s = (pad + k) * pair_width;
            pair.write_into(&mut out[s..s + pair_width]);
        }
    }
}

/// Per-agent latent of the S6 layer.
#[derive(Clone, Debug, PartialEq)]
pub struct HiddenState {
    pub h: Vec<f64>,
    pub step: usize,
}

impl HiddenState {
    pub fn zeros(dim: usize) -> Self {
        Self { h: vec![0.0; dim], step: 0 }
    }

    pub fn is_finite(&self) -> bool {
        self.h.iter().all(|v| v.is_finite())
    }
}

/// Parameters of the selective state-space layer. `D` (skip) is fixed at zero
/// and has no parameter.
#[derive(Clone, Debug)]
pub struct S6Layer {
    /// `A = -exp(a_log)`, so every diagonal entry stays strictly negative.
    pub a_log: ParamId,
    pub b_proj: Linear,
    pub c_proj: Linear,
    pub delta_proj: Linear,
    state_dim: usize,
}

/// Input-dependent parameters for one step.
#[derive(Clone, Copy, Debug)]
pub struct Selection {
    pub delta: Var,
    pub b: Var,
    pub c: Var,
}

impl S6Layer {
    pub const D_SKIP: f64 = 0.0;

    /// `A` initialised to `diag(-1, -2, ..., -N)`.
    pub fn new(ps: &mut ParamSet, name: &str, state_dim: usize, rng: &mut impl Rng) -> Result<Self> {
        let a_log = Tensor::from_vec(1, state_dim, (0..state_dim).map(|n| ((n + 1) as f64).ln()).collect());
        let a_log = ps.add(format!("{name}.a_log"), a_log)?;
        let b_proj = Linear::new(ps, &format!("{name}.b_proj"), state_dim, state_dim, rng)?;
        let c_proj = Linear::new(ps, &format!("{name}.c_proj"), state_dim, state_dim, rng)?;
        let delta_proj = Linear::new(ps, &format!("{name}.delta_proj"), state_dim, state_dim, rng)?;
        Ok(Self {
            a_log,
            b_proj,
            c_proj,
            delta_proj,
            state_dim,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    /// The diagonal of `A` as a `[1, N]` node.
    pub fn a_diag(&self, g: &mut Graph, ps: &ParamSet) -> Var {
        let a_log = g.param(ps, self.a_log);
        let e = g.exp(a_log);
        g.scale(e, -1.0)
    }

    /// `delta = softplus(Delta_proj z)`, `B_t = B_proj z`, `C_t = C_proj z`.
    pub fn selection_params(&self, g: &mut Graph, ps: &ParamSet, z: Var) -> Result<Selection> {
        let d = self.delta_proj.forward(g, ps, z)?;
        let delta = g.softplus(d);
        let b = self.b_proj.forward(g, ps, z)?;
        let c = self.c_proj.forward(g, ps, z)?;
        Ok(Selection { delta, b, c })
    }

    /// One recurrence step from `h_prev` with input `z`, both `[rows, N]`.
    pub fn step(&self, g: &mut Graph, ps: &ParamSet, z: Var, h_prev: Var) -> Result<Var> {
        let sel = self.selection_params(g, ps, z)?;
        let a = self.a_diag(g, ps);
        let (a_bar, b_bar) = zoh(g, a, sel.b, sel.delta)?;
        let decay = g.mul(a_bar, h_prev)?;
        let drive = g.mul(b_bar, z)?;
        g.add(decay, drive)
    }

    /// Runs the recurrence over `z_seq` from `h0`; returns every state `h_1..h_K`.
    pub fn scan(&self, g: &mut Graph, ps: &ParamSet, z_seq: &[Var], h0: Var) -> Result<Vec<Var>> {
        let mut h = h0;
        let mut out = Vec::with_capacity(z_seq.len());
        for (k, &z) in z_seq.iter().enumerate() {
            h = self.step(g, ps, z, h)?;
            if !g.value(h).is_finite() {
                return Err(Error::NonFiniteState(k));
            }
            out.push(h);
        }
        Ok(out)
    }
}

/// Zero-order-hold discretization for a diagonal state matrix.
///
/// `a: [1, N]` (broadcast over rows), `b_t, delta: [rows, N]`.
pub fn zoh(g: &mut Graph, a: Var, b_t: Var, delta: Var) -> Result<(Var, Var)> {
    let da = g.mul_row(delta, a)?;
    let a_bar = g.exp(da);
    let ratio = g.expm1_ratio(da);
    let scaled = g.mul(ratio, delta)?;
    let b_bar = g.mul(scaled, b_t)?;
    Ok((a_bar, b_bar))
}

/// Value-level [`zoh`] for a single vector.
pub fn zoh_discretize(a_diag: &[f64], b_t: &[f64], delta: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut g = Graph::inference();
    let a = g.input(Tensor::row(a_diag));
    let b = g.input(Tensor::row(b_t));
    let d = g.input(Tensor::row(delta));
    let (a_bar, b_bar) = zoh(&mut g, a, b, d)?;
    Ok((g.value(a_bar).data().to_vec(), g.value(b_bar).data().to_vec()))
}

/// `MLP_1(x_1) * sigmoid(MLP_2(x_2))` where `(x_1, x_2)` are the two column
/// halves of the input.
#[derive(Clone, Debug)]
pub struct GatingUnit {
    pub value_mlp: Mlp,
    pub gate_mlp: Mlp,
}

impl GatingUnit {
    pub fn new(
        ps: &mut ParamSet,
        name: &str,
        input_width: usize,
        hidden: usize,
        out: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if input_width % 2 != 0 {
            return Err(Error::Config(format!(
                "gating unit `{name}` input width {input_width} is odd and cannot be split in halves"
            )));
        }
        let half = input_width / 2;
        let value_mlp = Mlp::new(ps, &format!("{name}.value"), &[half, hidden, out], rng)?;
        let gate_mlp = Mlp::new(ps, &format!("{name}.gate"), &[half, hidden, out], rng)?;
        Ok(Self { value_mlp, gate_mlp })
    }

    pub fn forward(&self, g: &mut Graph, ps: &ParamSet, x: Var) -> Result<Var> {
        let (x1, x2) = g.split_halves(x)?;
        let v = self.value_mlp.forward(g, ps, x1)?;
        let gate_logits = self.gate_mlp.forward(g, ps, x2)?;
        let gate = g.sigmoid(gate_logits);
        g.mul(v, gate)
    }
}

/// Gating unit followed by one S6 step per call.
#[derive(Clone, Debug)]
pub struct SelectionBlock {
    pub gate: GatingUnit,
    pub s6: S6Layer,
    input_width: usize,
}

impl SelectionBlock {
    pub fn new(
        ps: &mut ParamSet,
        name: &str,
        input_width: usize,
        hidden: usize,
        state_dim: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let gate = GatingUnit::new(ps, &format!("{name}.gu"), input_width, hidden, state_dim, rng)?;
        let s6 = S6Layer::new(ps, &format!("{name}.s6"), state_dim, rng)?;
        Ok(Self { gate, s6, input_width })
    }

    pub fn input_width(&self) -> usize {
        self.input_width
    }

    pub fn state_dim(&self) -> usize {
        self.s6.state_dim()
    }

    /// `window: [rows, input_width]`, `h_prev: [rows, N]` -> next hidden state.
    pub fn forward(&self, g: &mut Graph, ps: &ParamSet, window: Var, h_prev: Var) -> Result<Var> {
        let z = self.gate.forward(g, ps, window)?;
        let h = self.s6.step(g, ps, z, h_prev)?;
        if !g.value(h).is_finite() {
            return Err(Error::NonFiniteState(0));
        }
        Ok(h)
    }

    /// Value-level convenience: encodes `buf`, runs one block step from `h_prev`.
    pub fn apply(&self, ps: &ParamSet, buf: &MiniBuffer, pair_width: usize, h_prev: &HiddenState) -> Result<HiddenState> {
        let mut g = Graph::inference();
        let x = g.input(Tensor::row(&buf.encode(pair_width)));
        let h = g.input(Tensor::row(&h_prev.h));
        let out = self.forward(&mut g, ps, x, h)?;
        Ok(HiddenState {
            h: g.value(out).data().to_vec(),
            step: h_prev.step + 1,
        })
    }
}
