//! The loss `L_TD + sigma(t) * L_Align` over replayed episodes, the update
//! step and target-network synchronization.

use serde::{Deserialize, Serialize};

use super::config::AlignTarget;
use super::episode::EpisodeBatch;
use super::network::{Mode, SicaNetwork, StepContext};
use crate::error::{Error, Result};
use crate::numcore::{Graph, Optimizer, ParamSet, Tensor, Var};

/// `r` when the episode ended, `r + gamma * q_next_max` otherwise.
pub fn td_target(r: f64, gamma: f64, q_next_max: f64, terminated: bool) -> f64 {
    if terminated {
        r
    } else {
        r + gamma * q_next_max
    }
}

/// Hard copy every `period` steps; `t` counts completed updates.
pub fn target_update(params: &ParamSet, target: &mut ParamSet, period: u64, t: u64) -> Result<bool> {
    if period == 0 {
        return Err(Error::Config("target period must be >= 1".into()));
    }
    if t % period == 0 {
        target.copy_values_from(params)?;
        return Ok(true);
    }
    Ok(false)
}

/// `sum(mask * (q - y)^2) / sum(mask)`.
pub fn masked_td_loss(g: &mut Graph, q_tot: Var, y: Tensor, mask: Tensor) -> Result<Var> {
    let count = mask.sum();
    let y = g.input(y);
    let m = g.input(mask);
    let diff = g.sub(q_tot, y)?;
    let sq = g.square(diff);
    let kept = g.mul(sq, m)?;
    let total = g.sum(kept);
    Ok(g.scale(total, 1.0 / count.max(1.0)))
}

/// Schedule values for one update.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepSchedule {
    pub alpha: f64,
    pub sigma: f64,
    pub peers: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainStats {
    pub l_td: f64,
    pub l_align: f64,
    pub loss: f64,
    /// Global gradient norm before clipping.
    pub grad_norm: f64,
}

/// Builds the loss graph for a batch. Returns the graph, the total loss
/// node and the values of both terms.
pub fn build_loss(
    net: &SicaNetwork,
    params: &ParamSet,
    target: &ParamSet,
    batch: &EpisodeBatch,
    gamma: f64,
    sched: StepSchedule,
    align: AlignTarget,
) -> Result<(Graph, Var, f64, f64)> {
    let n = net.n_agents();
    let rows = batch.size * n;
    let d = net.state_dim();
    let ctx = StepContext {
        alpha: sched.alpha,
        peers: sched.peers,
        mode: Mode::Centralized,
    };
    let t_len = batch.max_len;

    // Target network: greedy per-agent values mixed at every next step.
    let mut tg = Graph::inference();
    let mut h = tg.input(Tensor::zeros(rows, d));
    let mut r = tg.input(Tensor::zeros(rows, d));
    let mut next_max = Tensor::zeros(batch.size, t_len);
    for t in 0..=t_len {
        let out = net.step(&mut tg, target, &batch.windows[t], h, r, ctx)?;
        h = out.h;
        r = out.r;
        if t == 0 {
            continue;
        }
        let q = tg.value(out.q);
        let best: Vec<f64> = (0..rows)
            .map(|row| q.row_slice(row).iter().copied().fold(f64::NEG_INFINITY, f64::max))
            .collect();
        let qs = tg.input(Tensor::from_vec(batch.size, n, best));
        let st = tg.input(batch.states[t].clone());
        let tot = net.mixer.forward(&mut tg, target, qs, st)?;
        for b in 0..batch.size {
            next_max.set(b, t - 1, tg.value(tot).get(b, 0));
        }
    }
    let mut y = Tensor::zeros(batch.size, t_len);
    for b in 0..batch.size {
        for t in 0..t_len {
            if batch.mask.get(b, t) > 0.0 {
                let done = batch.terminated.get(b, t) > 0.0;
                y.set(b, t, td_target(batch.rewards.get(b, t), gamma, next_max.get(b, t), done));
            }
        }
    }

    // Online network.
    let mut g = Graph::new();
    let mut h = g.input(Tensor::zeros(rows, d));
    let mut r = g.input(Tensor::zeros(rows, d));
    let mut q_tots = Vec::with_capacity(t_len);
    let mut align_terms = Vec::with_capacity(t_len);
    let mut align_count = 0.0;
    for t in 0..t_len {
        let out = net.step(&mut g, params, &batch.windows[t], h, r, ctx)?;
        h = out.h;
        r = out.r;
        let onehot = g.input(batch.actions[t].clone());
        let picked = g.mul(out.q, onehot)?;
        let chosen = g.row_sum(picked);
        let qs = g.reshape(chosen, batch.size, n)?;
        let st = g.input(batch.states[t].clone());
        q_tots.push(net.mixer.forward(&mut g, params, qs, st)?);

        let v = out.v.expect("centralized step yields true information");
        let (pred, tgt) = match align {
            AlignTarget::TrueInfo => (out.v_hat, g.detach(v)),
            AlignTarget::Regenerated => (v, g.detach(out.v_hat)),
        };
        let row_mask = batch.agent_mask(t);
        let mut m = Tensor::zeros(rows, d);
        for (row, &keep) in row_mask.iter().enumerate() {
            m.data_mut()[row * d..(row + 1) * d].iter_mut().for_each(|x| *x = keep);
        }
        align_count += row_mask.iter().sum::<f64>() * d as f64;
        let diff = g.sub(pred, tgt)?;
        let sq = g.square(diff);
        let mv = g.input(m);
        let kept = g.mul(sq, mv)?;
        align_terms.push(g.sum(kept));
    }
    let q_tot = g.concat(&q_tots)?;
    let l_td = masked_td_loss(&mut g, q_tot, y, batch.mask.clone())?;
    let align_sum = g.concat(&align_terms)?;
    let align_sum = g.sum(align_sum);
    let l_align = g.scale(align_sum, 1.0 / align_count.max(1.0));
    let weighted = g.scale(l_align, sched.sigma);
    let total = g.add(l_td, weighted)?;
    let (td_v, al_v) = (g.value(l_td).item(), g.value(l_align).item());
    Ok((g, total, td_v, al_v))
}

/// One gradient update. `step` is only used in diagnostics.
#[allow(clippy::too_many_arguments)]
pub fn train_step(
    net: &SicaNetwork,
    params: &mut ParamSet,
    target: &ParamSet,
    optimizer: &mut Optimizer,
    batch: &EpisodeBatch,
    gamma: f64,
    sched: StepSchedule,
    align: AlignTarget,
    step: u64,
) -> Result<TrainStats> {
    let (g, total, l_td, l_align) = build_loss(net, params, target, batch, gamma, sched, align)?;
    let loss = g.value(total).item();
    if !loss.is_finite() {
        return Err(Error::NonFiniteLoss {
            step,
            detail: format!("L_TD = {l_td}, L_Align = {l_align}, sigma = {}", sched.sigma),
        });
    }
    params.zero_grad();
    g.backward(total, params)?;
    let grad_norm = optimizer.step(params)?;
    Ok(TrainStats {
        l_td,
        l_align,
        loss,
        grad_norm,
    })
}
