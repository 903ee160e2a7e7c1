//! Reference computations written from the definitions, sharing no code
//! with the library beyond reading parameter values.

use sica_core::mixer::Mixer;
use sica_core::numcore::{ParamSet, Tensor};
use sica_core::ssm::S6Layer;

pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

/// `x W + b` with `W: [in, out]`.
pub fn affine(x: &[f64], w: &Tensor, b: &Tensor) -> Vec<f64> {
    (0..w.cols())
        .map(|j| b.get(0, j) + (0..w.rows()).map(|i| x[i] * w.get(i, j)).sum::<f64>())
        .collect()
}

fn matvec(m: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    m.iter().map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum()).collect()
}

/// Step-by-step recurrence with dense `N x N` discretized matrices.
pub fn s6_dense_scan(layer: &S6Layer, ps: &ParamSet, zs: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = layer.state_dim();
    let a: Vec<f64> = ps.value(layer.a_log).data().iter().map(|l| -l.exp()).collect();
    let mut h = vec![0.0; n];
    let mut out = Vec::new();
    for z in zs {
        let delta: Vec<f64> = affine(z, ps.value(layer.delta_proj.w), ps.value(layer.delta_proj.b))
            .into_iter()
            .map(softplus)
            .collect();
        let b_t = affine(z, ps.value(layer.b_proj.w), ps.value(layer.b_proj.b));
        let mut a_bar = vec![vec![0.0; n]; n];
        let mut b_bar = vec![vec![0.0; n]; n];
        for k in 0..n {
            let x = delta[k] * a[k];
            a_bar[k][k] = x.exp();
            b_bar[k][k] = x.exp_m1() / a[k] * b_t[k];
        }
        let decay = matvec(&a_bar, &h);
        let drive = matvec(&b_bar, z);
        h = decay.iter().zip(&drive).map(|(p, q)| p + q).collect();
        out.push(h.clone());
    }
    out
}

/// Scalar ZOH: `(exp(delta a), (exp(delta a) - 1) / a * b)`.
pub fn zoh_scalar(a: f64, b: f64, delta: f64) -> (f64, f64) {
    ((delta * a).exp(), (delta * a).exp_m1() / a * b)
}

/// Softmax of one row of scores.
pub fn softmax(row: &[f64]) -> Vec<f64> {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = row.iter().map(|c| (c - m).exp()).sum();
    row.iter().map(|c| (c - m).exp() / z).collect()
}

/// Joint argmax of the mixed value by enumeration (lowest index tuple on
/// ties), compared with the tuple of per-agent argmaxes.
pub fn igm_holds(mixer: &Mixer, ps: &ParamSet, table: &[Vec<f64>], state: &[f64]) -> bool {
    let n = table.len();
    let a = table[0].len();
    let total = a.pow(n as u32);
    let mut best = (f64::NEG_INFINITY, 0);
    for j in 0..total {
        let mut rem = j;
        let mut qs = vec![0.0; n];
        for i in (0..n).rev() {
            qs[i] = table[i][rem % a];
            rem /= a;
        }
        let v = mixer.mix(ps, &qs, state).unwrap();
        if v > best.0 {
            best = (v, j);
        }
    }
    let mut rem = best.1;
    let mut joint = vec![0; n];
    for i in (0..n).rev() {
        joint[i] = rem % a;
        rem /= a;
    }
    let local: Vec<usize> = table
        .iter()
        .map(|q| (0..a).fold(0, |b, k| if q[k] > q[b] { k } else { b }))
        .collect();
    joint == local
}
