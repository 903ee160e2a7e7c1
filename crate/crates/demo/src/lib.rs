//! wasm-bindgen wrappers around a few pure pieces of `sica-core`, for the
//! static page in `www/`. Everything here also runs natively.

use sica_core::comm::attention_weights;
use sica_core::regen::{AlphaSchedule, PeerDecaySchedule};
use sica_core::ssm::zoh_discretize;
use wasm_bindgen::prelude::*;

/// Communication weight for steps `0..=total`, cosine-annealed from
/// `start` to `final_value` over `t_max` steps.
#[wasm_bindgen]
pub fn alpha_curve(start: f64, final_value: f64, t_max: u32, total: u32) -> Vec<f64> {
    let s = AlphaSchedule {
        start,
        final_value,
        t_max: u64::from(t_max.max(1)),
    };
    (0..=total).map(|t| s.alpha(u64::from(t))).collect()
}

/// Visible peer count for steps `0..=total`.
#[wasm_bindgen]
pub fn peer_curve(n_agents: u32, k: u32, total: u32) -> Vec<u32> {
    let s = PeerDecaySchedule {
        k: u64::from(k),
        n_agents: n_agents as usize,
    };
    (0..=total).map(|t| s.peers(u64::from(t)) as u32).collect()
}

/// `[a_bar, b_bar]` for a scalar mode `a = -exp(a_log)` at step size `delta`.
#[wasm_bindgen]
pub fn zoh_coefficients(a_log: f64, b: f64, delta: f64) -> Result<Vec<f64>, JsError> {
    let (a_bar, b_bar) = zoh_discretize(&[-a_log.exp()], &[b], &[delta]).map_err(|e| JsError::new(&e.to_string()))?;
    Ok(vec![a_bar[0], b_bar[0]])
}

/// State trajectory of one diagonal mode driven by `input`:
/// `h_t = a_bar h_{t-1} + b_bar x_t` from `h_{-1} = 0`.
#[wasm_bindgen]
pub fn ssm_response(a_log: f64, b: f64, delta: f64, input: &[f64]) -> Result<Vec<f64>, JsError> {
    let c = zoh_coefficients(a_log, b, delta)?;
    let mut h = 0.0;
    Ok(input
        .iter()
        .map(|x| {
            h = c[0] * h + c[1] * x;
            h
        })
        .collect())
}

/// Row-softmax of scaled dot products between the rows of `hidden`
/// (`n_agents * dim`, row-major), returned row-major `n_agents * n_agents`.
/// The diagonal is included in the softmax, as in training.
#[wasm_bindgen]
pub fn attention_matrix(hidden: &[f64], n_agents: usize, temperature: f64) -> Result<Vec<f64>, JsError> {
    if n_agents == 0 || hidden.len() % n_agents != 0 {
        return Err(JsError::new("hidden length must be a multiple of n_agents"));
    }
    if !(temperature > 0.0) {
        return Err(JsError::new("temperature must be positive"));
    }
    let dim = hidden.len() / n_agents;
    let row = |i: usize| &hidden[i * dim..(i + 1) * dim];
    let scale = temperature * (dim as f64).sqrt();
    let scores: Vec<Vec<f64>> = (0..n_agents)
        .map(|i| {
            (0..n_agents)
                .map(|j| row(i).iter().zip(row(j)).map(|(a, b)| a * b).sum::<f64>() / scale)
                .collect()
        })
        .collect();
    Ok(attention_weights(&scores).concat())
}
