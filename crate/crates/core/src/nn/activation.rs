use serde::{Deserialize, Serialize};

/// Element-wise (or, for softmax, row-wise) nonlinearity applied after the affine map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Softplus,
    Relu,
    Linear,
    Softmax,
}

const SOFTPLUS_CUTOFF: f64 = 30.0;

/// `ln(1 + e^s)` without overflow.
pub fn softplus(s: f64) -> f64 {
    if s > SOFTPLUS_CUTOFF {
        s + (-s).exp()
    } else if s < -SOFTPLUS_CUTOFF {
        s.exp()
    } else {
        s.exp().ln_1p()
    }
}

/// Logistic sigmoid, the derivative of softplus.
pub fn sigmoid(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable softmax of one row of logits, written into `out`.
pub fn softmax_row(logits: &[f64], out: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &z) in out.iter_mut().zip(logits) {
        *o = (z - max).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

impl Activation {
    /// Applies the activation to `pre`, treating it as rows of length `row_len`.
    pub fn apply(self, pre: &[f64], row_len: usize) -> Vec<f64> {
        match self {
            Activation::Linear => pre.to_vec(),
            Activation::Relu => pre.iter().map(|&z| z.max(0.0)).collect(),
            Activation::Softplus => pre.iter().map(|&z| softplus(z)).collect(),
            Activation::Softmax => {
                let mut out = vec![0.0; pre.len()];
                for (z, o) in pre.chunks(row_len).zip(out.chunks_mut(row_len)) {
                    softmax_row(z, o);
                }
                out
            }
        }
    }

    /// Maps the gradient w.r.t. the activation output to the gradient w.r.t. its input.
    pub fn backward(self, pre: &[f64], out: &[f64], grad_out: &[f64], row_len: usize) -> Vec<f64> {
        match self {
            Activation::Linear => grad_out.to_vec(),
            Activation::Relu => pre
                .iter()
                .zip(grad_out)
                .map(|(&z, &g)| if z > 0.0 { g } else { 0.0 })
                .collect(),
            Activation::Softplus => pre
                .iter()
                .zip(grad_out)
                .map(|(&z, &g)| g * sigmoid(z))
                .collect(),
            Activation::Softmax => {
                let mut dz = vec![0.0; pre.len()];
                for ((p, g), d) in out
                    .chunks(row_len)
                    .zip(grad_out.chunks(row_len))
                    .zip(dz.chunks_mut(row_len))
                {
                    let dot: f64 = p.iter().zip(g).map(|(a, b)| a * b).sum();
                    for ((d, &pk), &gk) in d.iter_mut().zip(p).zip(g) {
                        *d = pk * (gk - dot);
                    }
                }
                dz
            }
        }
    }
}
