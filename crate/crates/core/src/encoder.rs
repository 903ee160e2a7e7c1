//! Recurrent encoders that turn a flattened mini-buffer window into the next
//! hidden state: the Selection Block, or an MLP followed by a GRU cell.

use rand::Rng;

use crate::error::Result;
use crate::numcore::{mlp_param_count, Graph, Linear, Mlp, ParamSet, Var};
use crate::ssm::SelectionBlock;

/// `h' = (1 - z) * n + z * h` with reset gate `r`, update gate `z` and
/// candidate `n = tanh(x W_in + b_in + r * (h W_hn + b_hn))`.
#[derive(Clone, Debug)]
pub struct GruCell {
    ir: Linear,
    iz: Linear,
    in_: Linear,
    hr: Linear,
    hz: Linear,
    hn: Linear,
}

impl GruCell {
    pub fn new(ps: &mut ParamSet, name: &str, input: usize, hidden: usize, rng: &mut impl Rng) -> Result<Self> {
        Ok(Self {
            ir: Linear::new(ps, &format!("{name}.ir"), input, hidden, rng)?,
            iz: Linear::new(ps, &format!("{name}.iz"), input, hidden, rng)?,
            in_: Linear::new(ps, &format!("{name}.in"), input, hidden, rng)?,
            hr: Linear::new(ps, &format!("{name}.hr"), hidden, hidden, rng)?,
            hz: Linear::new(ps, &format!("{name}.hz"), hidden, hidden, rng)?,
            hn: Linear::new(ps, &format!("{name}.hn"), hidden, hidden, rng)?,
        })
    }

    pub fn param_count(input: usize, hidden: usize) -> usize {
        3 * (input * hidden + hidden) + 3 * (hidden * hidden + hidden)
    }

    pub fn forward(&self, g: &mut Graph, ps: &ParamSet, x: Var, h: Var) -> Result<Var> {
        let xr = self.ir.forward(g, ps, x)?;
        let hr = self.hr.forward(g, ps, h)?;
        let r = g.add(xr, hr)?;
        let r = g.sigmoid(r);
        let xz = self.iz.forward(g, ps, x)?;
        let hz = self.hz.forward(g, ps, h)?;
        let z = g.add(xz, hz)?;
        let z = g.sigmoid(z);
        let xn = self.in_.forward(g, ps, x)?;
        let hn = self.hn.forward(g, ps, h)?;
        let rh = g.mul(r, hn)?;
        let n = g.add(xn, rh)?;
        let n = g.tanh(n);
        // (1 - z) * n + z * h  ==  n + z * (h - n)
        let hmn = g.sub(h, n)?;
        let zh = g.mul(z, hmn)?;
        g.add(n, zh)
    }
}

/// MLP into a GRU cell, sized to roughly match a Selection Block's parameter count.
#[derive(Clone, Debug)]
pub struct GatedRecurrent {
    pub mlp: Mlp,
    pub cell: GruCell,
}

impl GatedRecurrent {
    /// Hidden width for the MLP so the total parameter count lands as close
    /// as possible to `target`.
    pub fn matched_hidden(input: usize, state_dim: usize, target: usize) -> usize {
        let fixed = GruCell::param_count(state_dim, state_dim) + state_dim;
        let per_unit = input + 1 + state_dim;
        (target.saturating_sub(fixed) as f64 / per_unit as f64).round().max(1.0) as usize
    }

    pub fn param_count(input: usize, hidden: usize, state_dim: usize) -> usize {
        mlp_param_count(&[input, hidden, state_dim]) + GruCell::param_count(state_dim, state_dim)
    }

    pub fn new(
        ps: &mut ParamSet,
        name: &str,
        input: usize,
        hidden: usize,
        state_dim: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let mlp = Mlp::new(ps, &format!("{name}.mlp"), &[input, hidden, state_dim], rng)?;
        let cell = GruCell::new(ps, &format!("{name}.gru"), state_dim, state_dim, rng)?;
        Ok(Self { mlp, cell })
    }

    pub fn forward(&self, g: &mut Graph, ps: &ParamSet, window: Var, h_prev: Var) -> Result<Var> {
        let x = self.mlp.forward(g, ps, window)?;
        let x = g.relu(x);
        self.cell.forward(g, ps, x, h_prev)
    }
}

/// Parameter count of a Selection Block with the given widths.
pub fn selection_param_count(input: usize, hidden: usize, state_dim: usize) -> usize {
    2 * mlp_param_count(&[input / 2, hidden, state_dim]) + state_dim + 3 * (state_dim * state_dim + state_dim)
}

#[derive(Clone, Debug)]
pub enum Encoder {
    Selection(SelectionBlock),
    Gated(GatedRecurrent),
}

impl Encoder {
    /// Builds the Selection Block, or (when `gated`) an MLP+GRU encoder of matched size.
    pub fn new(
        ps: &mut ParamSet,
        name: &str,
        gated: bool,
        input: usize,
        hidden: usize,
        state_dim: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if gated {
            let target = selection_param_count(input, hidden, state_dim);
            let h = GatedRecurrent::matched_hidden(input, state_dim, target);
            Ok(Self::Gated(GatedRecurrent::new(ps, name, input, h, state_dim, rng)?))
        } else {
            Ok(Self::Selection(SelectionBlock::new(ps, name, input, hidden, state_dim, rng)?))
        }
    }

    pub fn forward(&self, g: &mut Graph, ps: &ParamSet, window: Var, h_prev: Var) -> Result<Var> {
        match self {
            Self::Selection(b) => b.forward(g, ps, window, h_prev),
            Self::Gated(b) => b.forward(g, ps, window, h_prev),
        }
    }
}
