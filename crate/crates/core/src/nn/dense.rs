//! Fully connected layer `sigma(x W + b)`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::activation::Activation;
use super::ParamGrads;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub(crate) struct DenseCache {
    input: Tensor,
    pre: Vec<f64>,
    out: Vec<f64>,
}

/// Weights are stored `inputs x outputs` so that a batch `x` (n x c) maps to `x W`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DenseLayer {
    pub(crate) weights: Tensor,
    pub(crate) bias: Tensor,
    pub activation: Activation,
    #[serde(skip)]
    pub(crate) cache: Option<DenseCache>,
}

impl DenseLayer {
    pub fn new(weights: Tensor, bias: Tensor, activation: Activation) -> Result<Self> {
        if weights.shape().len() != 2 {
            return Err(Error::Dimension(format!(
                "dense weights must be a matrix, got shape {:?}",
                weights.shape()
            )));
        }
        if bias.shape() != [weights.shape()[1]] {
            return Err(Error::Dimension(format!(
                "bias shape {:?} does not match weight columns {}",
                bias.shape(),
                weights.shape()[1]
            )));
        }
        Ok(Self {
            weights,
            bias,
            activation,
            cache: None,
        })
    }

    /// Glorot-uniform weights, zero bias.
    pub fn glorot<R: Rng + ?Sized>(
        inputs: usize,
        outputs: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        let w = (0..inputs * outputs)
            .map(|_| rng.random_range(-limit..=limit))
            .collect();
        Self {
            weights: Tensor::new(vec![inputs, outputs], w).expect("sized above"),
            bias: Tensor::zeros(&[outputs]),
            activation,
            cache: None,
        }
    }

    pub fn inputs(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn outputs(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn weights(&self) -> &Tensor {
        &self.weights
    }

    pub fn bias(&self) -> &Tensor {
        &self.bias
    }

    fn affine(&self, x: &Tensor) -> Result<Vec<f64>> {
        let (c, co) = (self.inputs(), self.outputs());
        if x.shape().len() != 2 || x.shape()[1] != c {
            return Err(Error::Dimension(format!(
                "input shape {:?} does not match weights {:?}",
                x.shape(),
                self.weights.shape()
            )));
        }
        let n = x.rows();
        let w = self.weights.data();
        let mut z = Vec::with_capacity(n * co);
        for i in 0..n {
            z.extend_from_slice(self.bias.data());
            let zi = &mut z[i * co..];
            for (k, &xk) in x.row(i).iter().enumerate() {
                if xk == 0.0 {
                    continue;
                }
                for (zj, wj) in zi.iter_mut().zip(&w[k * co..(k + 1) * co]) {
                    *zj += xk * wj;
                }
            }
        }
        Ok(z)
    }

    /// Pure forward pass: `sigma(x W + b)` for an `n x c` input.
    pub fn infer(&self, x: &Tensor) -> Result<Tensor> {
        let z = self.affine(x)?;
        let out = self.activation.apply(&z, self.outputs());
        Tensor::new(vec![x.rows(), self.outputs()], out)
    }

    /// Forward pass that keeps what the backward pass needs.
    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        let pre = self.affine(x)?;
        let out = self.activation.apply(&pre, self.outputs());
        let y = Tensor::new(vec![x.rows(), self.outputs()], out.clone())?;
        self.cache = Some(DenseCache {
            input: x.clone(),
            pre,
            out,
        });
        Ok(y)
    }

    /// Backward pass from the gradient w.r.t. the layer output.
    pub fn backward(&self, grad_out: &Tensor) -> Result<(Tensor, ParamGrads)> {
        let cache = self.cache()?;
        self.check_grad_shape(cache, grad_out)?;
        let dz = self
            .activation
            .backward(&cache.pre, &cache.out, grad_out.data(), self.outputs());
        self.backward_pre(cache, &dz)
    }

    /// Backward pass from the gradient w.r.t. the pre-activation `x W + b`.
    pub fn backward_from_pre(&self, grad_pre: &Tensor) -> Result<(Tensor, ParamGrads)> {
        let cache = self.cache()?;
        self.check_grad_shape(cache, grad_pre)?;
        self.backward_pre(cache, grad_pre.data())
    }

    fn cache(&self) -> Result<&DenseCache> {
        self.cache
            .as_ref()
            .ok_or_else(|| Error::State("dense backward called before forward".into()))
    }

    fn check_grad_shape(&self, cache: &DenseCache, g: &Tensor) -> Result<()> {
        let expect = [cache.input.rows(), self.outputs()];
        if g.shape() != expect {
            return Err(Error::Dimension(format!(
                "upstream gradient shape {:?}, expected {:?}",
                g.shape(),
                expect
            )));
        }
        Ok(())
    }

    fn backward_pre(&self, cache: &DenseCache, dz: &[f64]) -> Result<(Tensor, ParamGrads)> {
        let (c, co) = (self.inputs(), self.outputs());
        let x = &cache.input;
        let n = x.rows();
        let w = self.weights.data();
        let mut dw = vec![0.0; c * co];
        let mut db = vec![0.0; co];
        let mut dx = vec![0.0; n * c];
        for i in 0..n {
            let dzi = &dz[i * co..(i + 1) * co];
            for (b, d) in db.iter_mut().zip(dzi) {
                *b += d;
            }
            for (k, &xk) in x.row(i).iter().enumerate() {
                let wk = &w[k * co..(k + 1) * co];
                dx[i * c + k] = wk.iter().zip(dzi).map(|(a, b)| a * b).sum();
                if xk != 0.0 {
                    for (g, d) in dw[k * co..(k + 1) * co].iter_mut().zip(dzi) {
                        *g += xk * d;
                    }
                }
            }
        }
        Ok((
            Tensor::new(vec![n, c], dx)?,
            ParamGrads {
                weights: Tensor::new(vec![c, co], dw)?,
                bias: Tensor::new(vec![co], db)?,
            },
        ))
    }
}

/// Stand-alone form of the dense forward pass.
pub fn fc_forward(layer: &DenseLayer, x: &Tensor) -> Result<Tensor> {
    layer.infer(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_layer() {
        let w = Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let l = DenseLayer::new(w, Tensor::zeros(&[2]), Activation::Linear).unwrap();
        let x = Tensor::from_rows(&[vec![3.0, -1.0]]).unwrap();
        assert_eq!(fc_forward(&l, &x).unwrap().data(), &[3.0, -1.0]);
    }

    #[test]
    fn softplus_of_zero() {
        let w = Tensor::new(vec![2, 1], vec![1.0, 1.0]).unwrap();
        let l = DenseLayer::new(w, Tensor::zeros(&[1]), Activation::Softplus).unwrap();
        let x = Tensor::from_rows(&[vec![0.0, 0.0]]).unwrap();
        let y = fc_forward(&l, &x).unwrap();
        assert!((y.data()[0] - 0.693147).abs() < 1e-6);
    }

    #[test]
    fn shape_mismatch_reports_both_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let l = DenseLayer::glorot(3, 2, Activation::Linear, &mut rng);
        let err = l.infer(&Tensor::zeros(&[1, 4])).unwrap_err().to_string();
        assert!(err.contains("[1, 4]") && err.contains("[3, 2]"), "{err}");
    }

    #[test]
    fn backward_before_forward_is_state_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let l = DenseLayer::glorot(3, 2, Activation::Linear, &mut rng);
        assert!(matches!(
            l.backward(&Tensor::zeros(&[1, 2])),
            Err(Error::State(_))
        ));
    }

    #[test]
    fn glorot_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let l = DenseLayer::glorot(10, 6, Activation::Relu, &mut rng);
        let lim = (6.0f64 / 16.0).sqrt();
        assert!(l.weights().data().iter().all(|w| w.abs() <= lim));
        assert!(l.bias().data().iter().all(|&b| b == 0.0));
    }
}
