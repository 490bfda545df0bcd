//! Central finite-difference verification of backpropagated gradients.

use serde::Serialize;

use super::Network;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Gradient magnitudes below this are compared in absolute rather than relative terms.
pub const GRAD_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamKind {
    Weights,
    Bias,
}

#[derive(Debug, Clone, Serialize)]
pub struct BlockReport {
    pub layer: usize,
    pub kind: ParamKind,
    pub count: usize,
    pub max_rel_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub step: f64,
    pub blocks: Vec<BlockReport>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.blocks.iter().map(|b| b.max_rel_error).fold(0.0, f64::max)
    }
}

/// `|a - n| / max(|a|, |n|, GRAD_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(GRAD_FLOOR)
}

/// Compares backprop gradients of the network loss on `(x, y)` against central differences.
pub fn grad_check(net: &mut Network, x: &Tensor, y: &Tensor, step: f64) -> Result<GradCheckReport> {
    if !(1e-8..=1e-4).contains(&step) {
        return Err(Error::Validation(format!(
            "finite-difference step must lie in [1e-8, 1e-4], got {step}"
        )));
    }
    net.forward(x)?;
    let grads = net.backward(y)?;
    let mut blocks = Vec::new();
    for k in 0..net.layers().len() {
        let Some(g) = grads.layers[k].clone() else {
            continue;
        };
        for (kind, analytic) in [(ParamKind::Weights, &g.weights), (ParamKind::Bias, &g.bias)] {
            let mut worst: f64 = 0.0;
            for i in 0..analytic.len() {
                let orig = param(net, k, kind)[i];
                param(net, k, kind)[i] = orig + step;
                let plus = net.loss(x, y)?;
                param(net, k, kind)[i] = orig - step;
                let minus = net.loss(x, y)?;
                param(net, k, kind)[i] = orig;
                let numeric = (plus - minus) / (2.0 * step);
                worst = worst.max(relative_error(analytic.data()[i], numeric));
            }
            blocks.push(BlockReport {
                layer: k,
                kind,
                count: analytic.len(),
                max_rel_error: worst,
            });
        }
    }
    Ok(GradCheckReport { step, blocks })
}

fn param(net: &mut Network, k: usize, kind: ParamKind) -> &mut [f64] {
    let (w, b) = net.layers_mut()[k].params_mut().expect("parameterized layer");
    match kind {
        ParamKind::Weights => w.data_mut(),
        ParamKind::Bias => b.data_mut(),
    }
}
