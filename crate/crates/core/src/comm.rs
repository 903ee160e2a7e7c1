//! Communication Block: single-head scaled dot-product attention across the
//! agents of one team. The values are the raw hidden states; there is no
//! value or output projection.
//!
//! Hidden states are laid out team-major: rows `g*n .. g*n+n` hold the `n`
//! agents of team `g`. Vectors are rows, so `q_i = h_i W_q` here is the
//! transpose convention of `q_i = W_q h_i`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::{uniform_init, Graph, ParamId, ParamSet, Tensor, Var};

/// How the self term is treated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelfWeighting {
    /// Softmax over all agents (self included), self dropped from the value
    /// sum. Each row's value weights then sum to `1 - w_ii`.
    #[default]
    Literal,
    /// Softmax over the other agents only.
    Renormalized,
}

#[derive(Clone, Debug)]
pub struct AttentionParams {
    pub w_q: ParamId,
    pub w_k: ParamId,
    dim: usize,
    pub self_weighting: SelfWeighting,
}

#[derive(Clone, Copy, Debug)]
pub struct CommOutput {
    pub scores: Var,
    pub weights: Var,
    pub info: Var,
}

impl AttentionParams {
    pub fn new(ps: &mut ParamSet, name: &str, dim: usize, self_weighting: SelfWeighting, rng: &mut impl Rng) -> Result<Self> {
        let w_q = ps.add(format!("{name}.w_q"), uniform_init(rng, dim, dim, dim))?;
        let w_k = ps.add(format!("{name}.w_k"), uniform_init(rng, dim, dim, dim))?;
        Ok(Self {
            w_q,
            w_k,
            dim,
            self_weighting,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `c[i][j] = q_i . k_j / sqrt(d_h)` within each team.
    pub fn scores(&self, g: &mut Graph, ps: &ParamSet, h: Var, n_agents: usize) -> Result<Var> {
        let wq = g.param(ps, self.w_q);
        let wk = g.param(ps, self.w_k);
        let q = g.matmul(h, wq)?;
        let k = g.matmul(h, wk)?;
        let c = g.group_scores(q, k, n_agents)?;
        Ok(g.scale(c, 1.0 / (self.dim as f64).sqrt()))
    }

    /// Scores, attention weights and the true information for every agent.
    pub fn forward(&self, g: &mut Graph, ps: &ParamSet, h: Var, n_agents: usize) -> Result<CommOutput> {
        let (rows, d) = g.shape(h);
        if d != self.dim || n_agents == 0 || rows % n_agents != 0 {
            return Err(Error::Shape {
                op: "attention",
                lhs: (rows, d),
                rhs: (n_agents, self.dim),
            });
        }
        let scores = self.scores(g, ps, h, n_agents)?;
        let weights = match self.self_weighting {
            SelfWeighting::Literal => g.softmax_rows(scores),
            SelfWeighting::Renormalized if n_agents > 1 => {
                let mask = g.input(diagonal_fill(rows, n_agents, f64::NEG_INFINITY, 0.0));
                let masked = g.add(scores, mask)?;
                g.softmax_rows(masked)
            }
            SelfWeighting::Renormalized => g.softmax_rows(scores),
        };
        let off_diag = g.input(diagonal_fill(rows, n_agents, 0.0, 1.0));
        let value_weights = g.mul(weights, off_diag)?;
        let info = g.group_mix(value_weights, h, n_agents)?;
        Ok(CommOutput { scores, weights, info })
    }
}

/// `[rows, n]` tensor with `diag` where the column equals the agent index
/// of the row, `other` elsewhere.
fn diagonal_fill(rows: usize, n: usize, diag: f64, other: f64) -> Tensor {
    let mut t = Tensor::filled(rows, n, other);
    for r in 0..rows {
        t.set(r, r % n, diag);
    }
    t
}

/// Score matrix for one team of hidden states.
pub fn attention_scores(hidden: &[Vec<f64>], ps: &ParamSet, p: &AttentionParams) -> Result<Vec<Vec<f64>>> {
    let mut g = Graph::inference();
    let h = g.input(Tensor::from_rows(hidden));
    let c = p.scores(&mut g, ps, h, hidden.len())?;
    Ok(rows_of(g.value(c)))
}

/// Row-wise softmax of a score matrix.
pub fn attention_weights(scores: &[Vec<f64>]) -> Vec<Vec<f64>> {
    rows_of(&crate::numcore::softmax_rows(&Tensor::from_rows(scores)))
}

/// `v_i = sum_{j != i} w[i][j] h_j`.
pub fn true_info(weights: &[Vec<f64>], hidden: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let n = hidden.len();
    let mut g = Graph::inference();
    let w = g.input(Tensor::from_rows(weights));
    let h = g.input(Tensor::from_rows(hidden));
    let mask = g.input(diagonal_fill(n, n, 0.0, 1.0));
    let wm = g.mul(w, mask)?;
    let v = g.group_mix(wm, h, n)?;
    Ok(rows_of(g.value(v)))
}

fn rows_of(t: &Tensor) -> Vec<Vec<f64>> {
    (0..t.rows()).map(|r| t.row_slice(r).to_vec()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn identity_params(d: usize) -> (ParamSet, AttentionParams) {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut ps = ParamSet::new();
        let p = AttentionParams::new(&mut ps, "att", d, SelfWeighting::Literal, &mut rng).unwrap();
        *ps.get_mut(p.w_q).value_mut() = Tensor::identity(d);
        *ps.get_mut(p.w_k).value_mut() = Tensor::identity(d);
        (ps, p)
    }

    #[test]
    fn orthonormal_states_give_scaled_identity() {
        let (ps, p) = identity_params(4);
        let h: Vec<Vec<f64>> = (0..3).map(|i| (0..4).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
        let c = attention_scores(&h, &ps, &p).unwrap();
        for (i, row) in c.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                let want = if i == j { 0.5 } else { 0.0 };
                assert!((v - want).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn hand_softmax() {
        let w = attention_weights(&[vec![0.0, 3f64.ln()], vec![0.0, 0.0]]);
        assert!((w[0][0] - 0.25).abs() < 1e-15 && (w[0][1] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn identical_states_uniform_and_info() {
        let (ps, p) = identity_params(2);
        let h = vec![vec![2.0, 4.0]; 2];
        let w = attention_weights(&attention_scores(&h, &ps, &p).unwrap());
        assert!(w.iter().flatten().all(|&x| (x - 0.5).abs() < 1e-15));
        let v = true_info(&w, &h).unwrap();
        assert_eq!(v[0], vec![1.0, 2.0]);

        let h3 = vec![vec![1.0, -3.0]; 3];
        let w3 = attention_weights(&attention_scores(&h3, &ps, &p).unwrap());
        let v3 = true_info(&w3, &h3).unwrap();
        for k in 0..2 {
            assert!((v3[0][k] - (h3[1][k] + h3[2][k]) / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn single_agent_gets_zero_info() {
        for sw in [SelfWeighting::Literal, SelfWeighting::Renormalized] {
            let (ps, mut p) = identity_params(3);
            p.self_weighting = sw;
            let mut g = Graph::inference();
            let h = g.input(Tensor::row(&[1.0, 2.0, 3.0]));
            let out = p.forward(&mut g, &ps, h, 1).unwrap();
            assert_eq!(g.value(out.info).data(), &[0.0, 0.0, 0.0]);
        }
    }

    #[test]
    fn renormalized_excludes_self_from_softmax() {
        let (ps, mut p) = identity_params(2);
        p.self_weighting = SelfWeighting::Renormalized;
        let mut g = Graph::inference();
        let h = g.input(Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![3.0, 3.0]]));
        let out = p.forward(&mut g, &ps, h, 3).unwrap();
        let w = g.value(out.weights);
        for r in 0..3 {
            assert_eq!(w.get(r, r), 0.0);
            assert!((w.row_slice(r).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
