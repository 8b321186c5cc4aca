use serde::{Deserialize, Serialize};

use super::trainer::{Pipeline, Sample};
use crate::error::Result;
use crate::model::MgcnModel;
use crate::tensor::Tape;

/// Denominator floor for the relative error, as a fraction of the largest
/// analytic gradient magnitude. Central differences carry rounding noise of
/// about `f64::EPSILON * |loss| / eps`, so entries far below the gradient
/// scale are compared against that scale instead of their own size.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheck {
    pub scalars: usize,
    pub max_rel_error: f64,
    /// Parameter name and flat index of the worst entry.
    pub worst: (String, usize),
    pub analytic: f64,
    pub numeric: f64,
    /// Largest analytic gradient magnitude.
    pub grad_scale: f64,
}

/// `|a - n| / max(|a|, |n|, floor)`.
pub fn rel_error(a: f64, n: f64, floor: f64) -> f64 {
    let d = (a - n).abs();
    if d == 0.0 {
        return 0.0;
    }
    d / a.abs().max(n.abs()).max(floor)
}

/// Compares tape gradients of the window loss against central differences
/// for every scalar parameter.
pub fn gradient_check(
    model: &MgcnModel,
    pipe: &Pipeline,
    sample: &Sample,
    eps: f64,
) -> Result<GradCheck> {
    let mut tape = Tape::new();
    let params = model.params.bind(&mut tape);
    let loss = pipe.loss_var(&mut tape, model, &params, sample, None)?;
    tape.backward(loss)?;

    let grads: Vec<Option<Vec<f64>>> = params
        .iter()
        .map(|&v| tape.grad(v).map(|g| g.data().to_vec()))
        .collect();
    let grad_scale = grads
        .iter()
        .flatten()
        .flat_map(|g| g.iter().map(|x| x.abs()))
        .fold(0.0, f64::max);
    let floor = (REL_ERROR_FLOOR * grad_scale).max(f64::MIN_POSITIVE);

    let mut probe = model.clone();
    let mut out = GradCheck {
        scalars: 0,
        max_rel_error: 0.0,
        worst: (String::new(), 0),
        analytic: 0.0,
        numeric: 0.0,
        grad_scale,
    };
    for (id, name, value) in model.params.iter() {
        let grad = &grads[id.index()];
        for i in 0..value.len() {
            let a = grad.as_ref().map_or(0.0, |g| g[i]);
            let x = value.data()[i];
            probe.params.get_mut(id).data_mut()[i] = x + eps;
            let up = pipe.sample_loss(&probe, sample)?;
            probe.params.get_mut(id).data_mut()[i] = x - eps;
            let down = pipe.sample_loss(&probe, sample)?;
            probe.params.get_mut(id).data_mut()[i] = x;
            let n = (up - down) / (2.0 * eps);
            let e = rel_error(a, n, floor);
            out.scalars += 1;
            if e.is_nan() || e > out.max_rel_error {
                out.max_rel_error = e;
                out.worst = (name.to_string(), i);
                out.analytic = a;
                out.numeric = n;
            }
        }
    }
    Ok(out)
}
