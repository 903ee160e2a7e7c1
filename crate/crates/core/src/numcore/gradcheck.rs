//! Central finite-difference gradient checking.
//!
//! The check evaluates the loss closure forward-only at `x ± step` for each
//! probed scalar, so it never touches the backward code it is checking.

use super::{Graph, ParamSet, Var};
use crate::error::Result;

pub const DEFAULT_STEP: f64 = 1e-5;

/// Denominator floor for the relative error, so that gradients that are
/// analytically zero are judged on absolute error.
pub const DEFAULT_FLOOR: f64 = 1e-3;

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_err: f64,
    /// Parameter name, flat index, analytic value, numeric value.
    pub worst: Option<(String, usize, f64, f64)>,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_err < tol
    }
}

pub fn rel_err(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

#[derive(Clone, Copy, Debug)]
pub struct GradCheck {
    pub step: f64,
    pub floor: f64,
    /// Probe at most this many scalars per parameter tensor (evenly strided).
    pub max_per_param: Option<usize>,
}

impl Default for GradCheck {
    fn default() -> Self {
        Self {
            step: DEFAULT_STEP,
            floor: DEFAULT_FLOOR,
            max_per_param: None,
        }
    }
}

impl GradCheck {
    /// Compares analytic parameter gradients of `loss_fn` to central differences.
    /// Leaves `params` values unchanged and grads zeroed.
    pub fn run<F>(&self, params: &mut ParamSet, loss_fn: F) -> Result<GradCheckReport>
    where
        F: Fn(&mut Graph, &ParamSet) -> Result<Var>,
    {
        params.zero_grad();
        let mut g = Graph::new();
        let loss = loss_fn(&mut g, params)?;
        g.backward(loss, params)?;
        let analytic: Vec<Vec<f64>> = params.iter().map(|p| p.grad().data().to_vec()).collect();
        params.zero_grad();

        let eval = |ps: &ParamSet| -> Result<f64> {
            let mut g = Graph::inference();
            let l = loss_fn(&mut g, ps)?;
            Ok(g.value(l).item())
        };

        let mut report = GradCheckReport {
            checked: 0,
            max_rel_err: 0.0,
            worst: None,
        };
        let ids: Vec<_> = (0..params.len()).collect();
        for pi in ids {
            let id = super::ParamId(pi);
            let n = params.get(id).value().len();
            let stride = match self.max_per_param {
                Some(k) if k > 0 && n > k => n.div_ceil(k),
                _ => 1,
            };
            for idx in (0..n).step_by(stride) {
                let orig = params.get(id).value().data()[idx];
                params.get_mut(id).value_mut().data_mut()[idx] = orig + self.step;
                let up = eval(params)?;
                params.get_mut(id).value_mut().data_mut()[idx] = orig - self.step;
                let down = eval(params)?;
                params.get_mut(id).value_mut().data_mut()[idx] = orig;
                let numeric = (up - down) / (2.0 * self.step);
                let a = analytic[pi][idx];
                let e = rel_err(a, numeric, self.floor);
                report.checked += 1;
                if e > report.max_rel_err || report.worst.is_none() {
                    report.max_rel_err = report.max_rel_err.max(e);
                    if e >= report.max_rel_err {
                        report.worst = Some((params.get(id).name().to_string(), idx, a, numeric));
                    }
                }
            }
        }
        Ok(report)
    }
}
