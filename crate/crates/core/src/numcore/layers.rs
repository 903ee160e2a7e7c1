use rand::Rng;

use super::{Graph, ParamId, ParamSet, Tensor, Var};
use crate::error::{Error, Result};

/// `y = x W + b`, `W: [in, out]`, `b: [1, out]`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
    in_dim: usize,
    out_dim: usize,
}

/// Uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
pub fn uniform_init(rng: &mut impl Rng, rows: usize, cols: usize, fan_in: usize) -> Tensor {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.random_range(-bound..bound)).collect();
    Tensor::from_vec(rows, cols, data)
}

impl Linear {
    pub fn new(ps: &mut ParamSet, name: &str, in_dim: usize, out_dim: usize, rng: &mut impl Rng) -> Result<Self> {
        let w = ps.add(format!("{name}.w"), uniform_init(rng, in_dim, out_dim, in_dim))?;
        let b = ps.add(format!("{name}.b"), uniform_init(rng, 1, out_dim, in_dim))?;
        Ok(Self { w, b, in_dim, out_dim })
    }

    pub fn zeros(ps: &mut ParamSet, name: &str, in_dim: usize, out_dim: usize) -> Result<Self> {
        let w = ps.add(format!("{name}.w"), Tensor::zeros(in_dim, out_dim))?;
        let b = ps.add(format!("{name}.b"), Tensor::zeros(1, out_dim))?;
        Ok(Self { w, b, in_dim, out_dim })
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn forward(&self, g: &mut Graph, ps: &ParamSet, x: Var) -> Result<Var> {
        let w = g.param(ps, self.w);
        let b = g.param(ps, self.b);
        g.affine(x, w, b)
    }
}

/// Stack of [`Linear`] layers with ReLU between them (none after the last).
#[derive(Clone, Debug)]
pub struct Mlp {
    layers: Vec<Linear>,
}

impl Mlp {
    /// `dims = [in, hidden..., out]`.
    pub fn new(ps: &mut ParamSet, name: &str, dims: &[usize], rng: &mut impl Rng) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::Config(format!("MLP `{name}` needs at least input and output widths")));
        }
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, d)| Linear::new(ps, &format!("{name}.{i}"), d[0], d[1], rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { layers })
    }

    pub fn from_layers(layers: Vec<Linear>) -> Self {
        Self { layers }
    }

    pub fn layers(&self) -> &[Linear] {
        &self.layers
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim
    }

    pub fn forward(&self, g: &mut Graph, ps: &ParamSet, x: Var) -> Result<Var> {
        let mut h = x;
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(g, ps, h)?;
            if i + 1 < self.layers.len() {
                h = g.relu(h);
            }
        }
        Ok(h)
    }
}

/// Number of scalars in an MLP with the given widths.
pub fn mlp_param_count(dims: &[usize]) -> usize {
    dims.windows(2).map(|d| d[0] * d[1] + d[1]).sum()
}
