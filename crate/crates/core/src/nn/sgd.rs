use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{GradientSet, Network};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SgdConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-2,
            momentum: 0.9,
            batch_size: 32,
            seed: 0,
        }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        Ok(())
    }
}

/// SGD with classical momentum: `v <- momentum * v - lr * g; w <- w + v`.
#[derive(Debug, Clone)]
pub struct Sgd {
    pub cfg: SgdConfig,
    velocity: Vec<Option<(Vec<f64>, Vec<f64>)>>,
}

impl Sgd {
    pub fn new(cfg: SgdConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            velocity: Vec::new(),
        })
    }

    pub fn step(&mut self, net: &mut Network, grads: &GradientSet) -> Result<()> {
        let layers = net.layers_mut();
        if grads.layers.len() != layers.len() {
            return Err(Error::Dimension(format!(
                "gradient set has {} layers, network has {}",
                grads.layers.len(),
                layers.len()
            )));
        }
        for (k, (layer, g)) in layers.iter().zip(&grads.layers).enumerate() {
            match (layer.params(), g) {
                (Some((w, b)), Some(g)) => {
                    if g.weights.shape() != w.shape() || g.bias.shape() != b.shape() {
                        return Err(Error::Dimension(format!(
                            "layer {k}: gradient shapes {:?}/{:?} vs parameters {:?}/{:?}",
                            g.weights.shape(),
                            g.bias.shape(),
                            w.shape(),
                            b.shape()
                        )));
                    }
                    if !g.weights.is_finite() || !g.bias.is_finite() {
                        return Err(Error::Divergence(format!("non-finite gradient in layer {k}")));
                    }
                }
                (None, None) => {}
                _ => {
                    return Err(Error::Dimension(format!(
                        "layer {k}: gradient presence does not match parameters"
                    )))
                }
            }
        }
        if self.velocity.len() != layers.len() {
            self.velocity = layers
                .iter()
                .map(|l| l.params().map(|(w, b)| (vec![0.0; w.len()], vec![0.0; b.len()])))
                .collect();
        }
        let (lr, mu) = (self.cfg.learning_rate, self.cfg.momentum);
        for ((layer, g), v) in layers.iter_mut().zip(&grads.layers).zip(&mut self.velocity) {
            if let (Some((w, b)), Some(g), Some((vw, vb))) = (layer.params_mut(), g, v.as_mut()) {
                update(w, &g.weights, vw, lr, mu);
                update(b, &g.bias, vb, lr, mu);
            }
        }
        Ok(())
    }

    /// One pass over `(x, y)` in shuffled mini-batches; returns the mean batch loss.
    pub fn train_epoch(&mut self, net: &mut Network, x: &Tensor, y: &Tensor, rng: &mut ChaCha8Rng) -> Result<f64> {
        let n = x.rows();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        let mut total = 0.0;
        let mut batches = 0;
        for idx in order.chunks(self.cfg.batch_size) {
            let xb = x.select_rows(idx);
            let yb = y.select_rows(idx);
            let f = net.forward(&xb)?;
            let loss = net.spec().loss.evaluate(&yb, &f)?;
            if !loss.is_finite() {
                return Err(Error::Divergence(format!("non-finite loss {loss}")));
            }
            let g = net.backward(&yb)?;
            self.step(net, &g)?;
            total += loss;
            batches += 1;
        }
        Ok(total / batches.max(1) as f64)
    }
}

fn update(p: &mut Tensor, g: &Tensor, v: &mut [f64], lr: f64, mu: f64) {
    for ((p, g), v) in p.data_mut().iter_mut().zip(g.data()).zip(v.iter_mut()) {
        *v = mu * *v - lr * g;
        *p += *v;
    }
}
