//! Central finite differences against reverse-mode gradients for every
//! network path. Inputs are registered as parameters so that gradients with
//! respect to them are checked too.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sica_core::comm::{AttentionParams, SelfWeighting};
use sica_core::mixer::{AgentQHead, QmixMixer, WeightTransform};
use sica_core::numcore::gradcheck::GradCheck;
use sica_core::numcore::{uniform_init, Graph, ParamId, ParamSet, Tensor, Var};
use sica_core::regen::{align_loss_var, cross_info_var, RegenBlock};
use sica_core::ssm::SelectionBlock;

const TOL: f64 = 1e-4;
const INSTANCES: u64 = 20;

fn random(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    Tensor::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect())
}

/// `sum(x * w)` for a fixed random `w`, so every output entry matters.
fn project(g: &mut Graph, x: Var, w: &Tensor) -> Var {
    let w = g.input(w.clone());
    let p = g.mul(x, w).unwrap();
    g.sum(p)
}

fn check(ps: &mut ParamSet, f: impl Fn(&mut Graph, &ParamSet) -> sica_core::Result<Var>, what: &str) {
    let report = GradCheck::default().run(ps, f).unwrap();
    assert!(report.passes(TOL), "{what}: {report:?}");
}

#[test]
fn selection_block_over_a_sequence() {
    for seed in 0..INSTANCES {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (rows, width, n, len) = (3, 6, 4, 3);
        let mut ps = ParamSet::new();
        let block = SelectionBlock::new(&mut ps, "sel", width, 5, n, &mut rng).unwrap();
        let xs: Vec<ParamId> = (0..len).map(|k| ps.add(format!("x{k}"), random(&mut rng, rows, width)).unwrap()).collect();
        let h0 = ps.add("h0", random(&mut rng, rows, n)).unwrap();
        let ws: Vec<Tensor> = (0..len).map(|_| random(&mut rng, rows, n)).collect();
        check(
            &mut ps,
            |g, ps| {
                let mut h = g.param(ps, h0);
                let mut terms = Vec::new();
                for (k, &x) in xs.iter().enumerate() {
                    let x = g.param(ps, x);
                    h = block.forward(g, ps, x, h)?;
                    terms.push(project(g, h, &ws[k]));
                }
                let all = g.concat(&terms)?;
                Ok(g.sum(all))
            },
            "selection",
        );
    }
}

#[test]
fn communication_block() {
    for seed in 0..INSTANCES {
        for sw in [SelfWeighting::Literal, SelfWeighting::Renormalized] {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (teams, n, d) = (2, 3, 4);
            let mut ps = ParamSet::new();
            let comm = AttentionParams::new(&mut ps, "comm", d, sw, &mut rng).unwrap();
            let h = ps.add("h", random(&mut rng, teams * n, d)).unwrap();
            let wi = random(&mut rng, teams * n, d);
            let ww = random(&mut rng, teams * n, n);
            check(
                &mut ps,
                |g, ps| {
                    let hv = g.param(ps, h);
                    let out = comm.forward(g, ps, hv, n)?;
                    let a = project(g, out.info, &wi);
                    let b = project(g, out.weights, &ww);
                    g.add(a, b)
                },
                "communication",
            );
        }
    }
}

#[test]
fn regeneration_block_with_cross_information() {
    for seed in 0..INSTANCES {
        for gated in [false, true] {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (rows, w, n_agents, hidden, d) = (4, 4, 2, 5, 3);
            let mut ps = ParamSet::new();
            let regen = RegenBlock::new(&mut ps, "regen", gated, w, n_agents, hidden, d, d, &mut rng).unwrap();
            let x = ps.add("x", random(&mut rng, rows, w * n_agents)).unwrap();
            let r0 = ps.add("r0", random(&mut rng, rows, d)).unwrap();
            let v = ps.add("v", random(&mut rng, rows, d)).unwrap();
            let alpha = rng.random_range(0.05..0.95);
            let wq = random(&mut rng, rows, d);
            let mask: Vec<f64> = (0..rows).map(|r| if r == 1 { 0.0 } else { 1.0 }).collect();
            check(
                &mut ps,
                |g, ps| {
                    let xv = g.param(ps, x);
                    let r = g.param(ps, r0);
                    let (r1, v_hat) = regen.forward(g, ps, xv, r)?;
                    let (_, v_hat2) = regen.forward(g, ps, xv, r1)?;
                    let vv = g.param(ps, v);
                    let bar = cross_info_var(g, v_hat2, vv, alpha)?;
                    let a = project(g, bar, &wq);
                    let l = align_loss_var(g, v_hat, vv, &mask)?;
                    g.add(a, l)
                },
                "regeneration",
            );
        }
    }
}

#[test]
fn qmix_mixer() {
    for seed in 0..INSTANCES {
        for transform in [WeightTransform::Abs, WeightTransform::Softplus] {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (b, n, s, e) = (5, 3, 4, 6);
            let mut ps = ParamSet::new();
            let mixer = QmixMixer::new(&mut ps, "mix", n, s, e, transform, &mut rng).unwrap();
            let qs = ps.add("qs", random(&mut rng, b, n)).unwrap();
            let st = ps.add("s", random(&mut rng, b, s)).unwrap();
            let w = random(&mut rng, b, 1);
            check(
                &mut ps,
                |g, ps| {
                    let q = g.param(ps, qs);
                    let s = g.param(ps, st);
                    let tot = mixer.forward(g, ps, q, s)?;
                    Ok(project(g, tot, &w))
                },
                "qmix",
            );
        }
    }
}

#[test]
fn q_head() {
    for seed in 0..INSTANCES {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (rows, d, actions) = (4, 3, 5);
        let mut ps = ParamSet::new();
        let head = AgentQHead::new(&mut ps, "q", d, d, 7, actions, &mut rng).unwrap();
        let vb = ps.add("v_bar", uniform_init(&mut rng, rows, d, 1)).unwrap();
        let h = ps.add("h", uniform_init(&mut rng, rows, d, 1)).unwrap();
        let w = random(&mut rng, rows, actions);
        check(
            &mut ps,
            |g, ps| {
                let v = g.param(ps, vb);
                let hv = g.param(ps, h);
                let q = head.forward(g, ps, v, hv)?;
                Ok(project(g, q, &w))
            },
            "q head",
        );
    }
}
