use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::activation::Activation;
use super::dense::DenseLayer;
use super::loss::{loss_mse_grad, validate_one_hot, LossKind};
use super::{GradientSet, ParamGrads};
use crate::conv::{conv_output_dim, ConvLayer, FlattenLayer, Padding, PoolLayer};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Declarative description of one layer. Input sizes are inferred from the previous layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerSpec {
    Dense {
        outputs: usize,
        activation: Activation,
    },
    Conv2d {
        kernel: (usize, usize),
        filters: usize,
        stride: usize,
        padding: Padding,
        activation: Activation,
    },
    MaxPool2d {
        window: (usize, usize),
        stride: usize,
    },
    Flatten,
}

/// Layer stack plus loss. `input_shape` excludes the batch axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerSpec>,
    pub loss: LossKind,
}

impl NetworkSpec {
    /// Dense-only network with `dims = [in, h1, ..., out]`.
    pub fn mlp(dims: &[usize], hidden: Activation, loss: LossKind) -> Self {
        let out = match loss {
            LossKind::Mse => Activation::Linear,
            LossKind::CrossEntropy => Activation::Softmax,
        };
        let n = dims.len().saturating_sub(1);
        let layers = dims
            .iter()
            .skip(1)
            .enumerate()
            .map(|(i, &d)| LayerSpec::Dense {
                outputs: d,
                activation: if i + 1 == n { out } else { hidden },
            })
            .collect();
        Self {
            input_shape: vec![dims.first().copied().unwrap_or(0)],
            layers,
            loss,
        }
    }

    /// Per-sample output shape of every layer; validates that the stack composes.
    pub fn layer_shapes(&self) -> Result<Vec<Vec<usize>>> {
        if self.layers.is_empty() {
            return Err(Error::Validation("network has no layers".into()));
        }
        let mut shape = self.input_shape.clone();
        let mut shapes = Vec::with_capacity(self.layers.len());
        for (k, l) in self.layers.iter().enumerate() {
            let at = |e: Error| Error::Dimension(format!("layer {k}: {e}"));
            shape = match *l {
                LayerSpec::Dense { outputs, .. } => {
                    if shape.len() != 1 || shape[0] == 0 || outputs == 0 {
                        return Err(at(Error::Dimension(format!(
                            "dense layer needs a non-empty vector input, got {shape:?} -> {outputs}"
                        ))));
                    }
                    vec![outputs]
                }
                LayerSpec::Conv2d {
                    kernel,
                    filters,
                    stride,
                    padding,
                    activation,
                } => {
                    let [h, w, _] = shape[..] else {
                        return Err(at(Error::Dimension(format!(
                            "convolution needs h x w x c input, got {shape:?}"
                        ))));
                    };
                    if filters == 0 {
                        return Err(at(Error::Dimension("zero filters".into())));
                    }
                    if activation == Activation::Softmax {
                        return Err(at(Error::Validation("softmax convolution".into())));
                    }
                    let (ho, _) = conv_output_dim(h, kernel.0, stride, padding).map_err(at)?;
                    let (wo, _) = conv_output_dim(w, kernel.1, stride, padding).map_err(at)?;
                    vec![ho, wo, filters]
                }
                LayerSpec::MaxPool2d { window, stride } => {
                    let [h, w, c] = shape[..] else {
                        return Err(at(Error::Dimension(format!(
                            "pooling needs h x w x c input, got {shape:?}"
                        ))));
                    };
                    let (ho, wo) = PoolLayer::new(window, stride)
                        .and_then(|p| p.output_dims(h, w))
                        .map_err(at)?;
                    vec![ho, wo, c]
                }
                LayerSpec::Flatten => vec![shape.iter().product()],
            };
            shapes.push(shape.clone());
        }
        let want = match self.loss {
            LossKind::Mse => Activation::Linear,
            LossKind::CrossEntropy => Activation::Softmax,
        };
        match self.layers.last() {
            Some(LayerSpec::Dense { activation, .. }) if *activation == want => Ok(shapes),
            _ => Err(Error::Validation(format!(
                "{:?} loss requires a final dense layer with {want:?} activation",
                self.loss
            ))),
        }
    }
}

/// A layer together with its parameters and forward cache.
#[derive(Debug, Clone)]
pub enum Layer {
    Dense(DenseLayer),
    Conv(ConvLayer),
    Pool(PoolLayer),
    Flatten(FlattenLayer),
}

impl Layer {
    fn infer(&self, x: &Tensor) -> Result<Tensor> {
        match self {
            Layer::Dense(l) => l.infer(x),
            Layer::Conv(l) => l.infer(x),
            Layer::Pool(l) => l.infer(x),
            Layer::Flatten(l) => l.infer(x),
        }
    }

    fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        match self {
            Layer::Dense(l) => l.forward(x),
            Layer::Conv(l) => l.forward(x),
            Layer::Pool(l) => l.forward(x),
            Layer::Flatten(l) => l.forward(x),
        }
    }

    fn backward(&self, g: &Tensor, from_pre: bool) -> Result<(Tensor, Option<ParamGrads>)> {
        match (self, from_pre) {
            (Layer::Dense(l), false) => l.backward(g).map(|(d, p)| (d, Some(p))),
            (Layer::Dense(l), true) => l.backward_from_pre(g).map(|(d, p)| (d, Some(p))),
            (Layer::Conv(l), false) => l.backward(g).map(|(d, p)| (d, Some(p))),
            (Layer::Conv(l), true) => l.backward_from_pre(g).map(|(d, p)| (d, Some(p))),
            (Layer::Pool(l), _) => l.backward(g).map(|d| (d, None)),
            (Layer::Flatten(l), _) => l.backward(g).map(|d| (d, None)),
        }
    }

    pub fn params(&self) -> Option<(&Tensor, &Tensor)> {
        match self {
            Layer::Dense(l) => Some((&l.weights, &l.bias)),
            Layer::Conv(l) => Some((&l.kernels, &l.bias)),
            _ => None,
        }
    }

    pub fn params_mut(&mut self) -> Option<(&mut Tensor, &mut Tensor)> {
        match self {
            Layer::Dense(l) => Some((&mut l.weights, &mut l.bias)),
            Layer::Conv(l) => Some((&mut l.kernels, &mut l.bias)),
            _ => None,
        }
    }

    fn clear_cache(&mut self) {
        match self {
            Layer::Dense(l) => l.cache = None,
            Layer::Conv(l) => l.cache = None,
            Layer::Pool(l) => l.cache = None,
            Layer::Flatten(l) => l.input_shape = None,
        }
    }
}

/// A network built from a [`NetworkSpec`].
#[derive(Debug, Clone)]
pub struct Network {
    spec: NetworkSpec,
    layers: Vec<Layer>,
    output: Option<Tensor>,
}

impl Network {
    /// Builds a network with Glorot-uniform weights and zero biases.
    pub fn new(spec: NetworkSpec, seed: u64) -> Result<Self> {
        let shapes = spec.layer_shapes()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(spec.layers.len());
        let mut prev = spec.input_shape.clone();
        for (l, out) in spec.layers.iter().zip(&shapes) {
            layers.push(match *l {
                LayerSpec::Dense { outputs, activation } => {
                    Layer::Dense(DenseLayer::glorot(prev[0], outputs, activation, &mut rng))
                }
                LayerSpec::Conv2d {
                    kernel,
                    filters,
                    stride,
                    padding,
                    activation,
                } => Layer::Conv(ConvLayer::glorot(
                    kernel, prev[2], filters, activation, stride, padding, &mut rng,
                )?),
                LayerSpec::MaxPool2d { window, stride } => Layer::Pool(PoolLayer::new(window, stride)?),
                LayerSpec::Flatten => Layer::Flatten(FlattenLayer::default()),
            });
            prev = out.clone();
        }
        Ok(Self {
            spec,
            layers,
            output: None,
        })
    }

    /// Builds a network from explicit `(weights, bias)` blocks, one per parameterized layer.
    pub fn from_params(spec: NetworkSpec, params: Vec<(Tensor, Tensor)>) -> Result<Self> {
        let mut net = Self::new(spec, 0)?;
        let expected = net.layers.iter().filter(|l| l.params().is_some()).count();
        if params.len() != expected {
            return Err(Error::Dimension(format!(
                "expected {expected} parameter blocks, got {}",
                params.len()
            )));
        }
        let mut it = params.into_iter();
        for (k, layer) in net.layers.iter_mut().enumerate() {
            if let Some((w, b)) = layer.params_mut() {
                let (nw, nb) = it.next().expect("counted above");
                if nw.shape() != w.shape() || nb.shape() != b.shape() {
                    return Err(Error::Dimension(format!(
                        "layer {k}: parameter shapes {:?}/{:?}, expected {:?}/{:?}",
                        nw.shape(),
                        nb.shape(),
                        w.shape(),
                        b.shape()
                    )));
                }
                *w = nw;
                *b = nb;
            }
        }
        Ok(net)
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .filter_map(Layer::params)
            .map(|(w, b)| w.len() + b.len())
            .sum()
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.shape().len() != self.spec.input_shape.len() + 1 || x.shape()[1..] != self.spec.input_shape[..] {
            return Err(Error::Dimension(format!(
                "layer 0: input shape {:?} does not match n x {:?}",
                x.shape(),
                self.spec.input_shape
            )));
        }
        Ok(())
    }

    /// Forward pass without touching cached state.
    pub fn predict(&self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        let mut h = x.clone();
        for (k, l) in self.layers.iter().enumerate() {
            h = l.infer(&h).map_err(|e| at_layer(k, e))?;
        }
        Ok(h)
    }

    /// Forward pass that caches intermediate activations for [`Network::backward`].
    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        self.output = None;
        let mut h = x.clone();
        for k in 0..self.layers.len() {
            h = self.layers[k].forward(&h).map_err(|e| at_layer(k, e))?;
        }
        self.output = Some(h.clone());
        Ok(h)
    }

    /// Loss of the network on `(x, y)` without caching.
    pub fn loss(&self, x: &Tensor, y: &Tensor) -> Result<f64> {
        let f = self.predict(x)?;
        self.spec.loss.evaluate(y, &f)
    }

    /// Gradients of the configured loss against targets `y` for the last forward batch.
    pub fn backward(&self, y: &Tensor) -> Result<GradientSet> {
        let f = self
            .output
            .as_ref()
            .ok_or_else(|| Error::State("backward called before forward".into()))?;
        if y.shape() != f.shape() {
            return Err(Error::Dimension(format!(
                "target shape {:?} does not match output shape {:?}",
                y.shape(),
                f.shape()
            )));
        }
        match self.spec.loss {
            LossKind::Mse => {
                let g = loss_mse_grad(y, f)?;
                self.backward_from_output(&g)
            }
            LossKind::CrossEntropy => {
                validate_one_hot(y)?;
                // softmax + cross-entropy: d loss / d logits = (p - y) / n
                let n = f.rows().max(1) as f64;
                let d = f
                    .data()
                    .iter()
                    .zip(y.data())
                    .map(|(p, t)| (p - t) / n)
                    .collect();
                self.backward_from_logits(&Tensor::new(f.shape().to_vec(), d)?)
            }
        }
    }

    /// Backpropagates an arbitrary gradient w.r.t. the network output.
    pub fn backward_from_output(&self, grad: &Tensor) -> Result<GradientSet> {
        self.backprop(grad, false)
    }

    /// Backpropagates a gradient w.r.t. the final layer's pre-activation (logits).
    pub fn backward_from_logits(&self, grad: &Tensor) -> Result<GradientSet> {
        self.backprop(grad, true)
    }

    fn backprop(&self, grad: &Tensor, from_pre: bool) -> Result<GradientSet> {
        if self.output.is_none() {
            return Err(Error::State("backward called before forward".into()));
        }
        let mut grads = vec![None; self.layers.len()];
        let mut g = grad.clone();
        for k in (0..self.layers.len()).rev() {
            let last = k + 1 == self.layers.len();
            let (dx, p) = self.layers[k]
                .backward(&g, from_pre && last)
                .map_err(|e| at_layer(k, e))?;
            grads[k] = p;
            g = dx;
        }
        Ok(GradientSet { layers: grads })
    }

    /// Drops cached activations; the next backward needs a fresh forward.
    pub fn clear_cache(&mut self) {
        self.output = None;
        for l in &mut self.layers {
            l.clear_cache();
        }
    }

    pub fn zero_grads(&self) -> GradientSet {
        GradientSet {
            layers: self
                .layers
                .iter()
                .map(|l| {
                    l.params().map(|(w, b)| ParamGrads {
                        weights: Tensor::zeros(w.shape()),
                        bias: Tensor::zeros(b.shape()),
                    })
                })
                .collect(),
        }
    }
}

fn at_layer(k: usize, e: Error) -> Error {
    match e {
        Error::Dimension(m) if !m.starts_with("layer ") => Error::Dimension(format!("layer {k}: {m}")),
        Error::State(m) => Error::State(format!("layer {k}: {m}")),
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_network() {
        let spec = NetworkSpec::mlp(&[2, 2], Activation::Linear, LossKind::Mse);
        let net = Network::from_params(
            spec,
            vec![(
                Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap(),
                Tensor::zeros(&[2]),
            )],
        )
        .unwrap();
        let x = Tensor::from_rows(&[vec![0.5, -2.0], vec![3.0, 1.0]]).unwrap();
        assert_eq!(net.predict(&x).unwrap(), x);
    }

    #[test]
    fn stacked_linear_equals_product() {
        let spec = NetworkSpec::mlp(&[2, 3, 2], Activation::Linear, LossKind::Mse);
        let net = Network::new(spec, 4).unwrap();
        let (w1, b1) = net.layers()[0].params().unwrap();
        let (w2, b2) = net.layers()[1].params().unwrap();
        // W = W1 W2, b = b1 W2 + b2 (biases are zero at init but keep the general form)
        let mut w = vec![0.0; 4];
        for i in 0..2 {
            for j in 0..2 {
                w[i * 2 + j] = (0..3).map(|k| w1.data()[i * 3 + k] * w2.data()[k * 2 + j]).sum();
            }
        }
        let b: Vec<f64> = (0..2)
            .map(|j| (0..3).map(|k| b1.data()[k] * w2.data()[k * 2 + j]).sum::<f64>() + b2.data()[j])
            .collect();
        let single = Network::from_params(
            NetworkSpec::mlp(&[2, 2], Activation::Linear, LossKind::Mse),
            vec![(Tensor::new(vec![2, 2], w).unwrap(), Tensor::vector(b))],
        )
        .unwrap();
        let x = Tensor::from_rows(&[vec![0.3, -0.7], vec![1.5, 2.0]]).unwrap();
        let d = net.predict(&x).unwrap().max_abs_diff(&single.predict(&x).unwrap());
        assert!(d < 1e-12);
    }

    #[test]
    fn dimension_error_names_layer() {
        let spec = NetworkSpec::mlp(&[3, 4, 2], Activation::Softplus, LossKind::Mse);
        let mut net = Network::new(spec, 1).unwrap();
        let err = net.forward(&Tensor::zeros(&[1, 5])).unwrap_err().to_string();
        assert!(err.contains("layer 0"), "{err}");
        // corrupt the second layer's weights to force a mid-stack mismatch
        if let Layer::Dense(d) = &mut net.layers_mut()[1] {
            d.weights = Tensor::zeros(&[5, 2]);
        }
        let err = net.forward(&Tensor::zeros(&[1, 3])).unwrap_err().to_string();
        assert!(err.contains("layer 1"), "{err}");
    }

    #[test]
    fn backward_before_forward() {
        let spec = NetworkSpec::mlp(&[3, 2], Activation::Linear, LossKind::Mse);
        let net = Network::new(spec, 1).unwrap();
        assert!(matches!(net.backward(&Tensor::zeros(&[1, 2])), Err(Error::State(_))));
    }

    #[test]
    fn zero_error_batch_has_zero_gradient() {
        let spec = NetworkSpec::mlp(&[3, 5, 2], Activation::Softplus, LossKind::Mse);
        let mut net = Network::new(spec, 2).unwrap();
        let x = Tensor::from_rows(&[vec![0.1, 0.2, 0.3], vec![-1.0, 0.5, 2.0]]).unwrap();
        let y = net.forward(&x).unwrap();
        let g = net.backward(&y).unwrap();
        assert_eq!(g.max_abs(), 0.0);
    }

    #[test]
    fn softmax_ce_logit_gradient_closed_form() {
        // one dense softmax layer, 2 classes, 2 samples
        let spec = NetworkSpec::mlp(&[2, 2], Activation::Linear, LossKind::CrossEntropy);
        let w = Tensor::new(vec![2, 2], vec![0.5, -0.5, 1.0, 0.25]).unwrap();
        let b = Tensor::vector(vec![0.1, -0.1]);
        let mut net = Network::from_params(spec, vec![(w, b)]).unwrap();
        let x = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 2.0]]).unwrap();
        let p = net.forward(&x).unwrap();
        let y = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let g = net.backward(&y).unwrap();
        let dlogits: Vec<f64> = p.data().iter().zip(y.data()).map(|(p, y)| (p - y) / 2.0).collect();
        // bias gradient is the column sum of the logit gradient
        let pg = g.layers[0].as_ref().unwrap();
        assert!((pg.bias.data()[0] - (dlogits[0] + dlogits[2])).abs() < 1e-15);
        assert!((pg.bias.data()[1] - (dlogits[1] + dlogits[3])).abs() < 1e-15);
        // weight gradient is x^T dlogits
        assert!((pg.weights.data()[0] - dlogits[0]).abs() < 1e-15);
        assert!((pg.weights.data()[3] - 2.0 * dlogits[3]).abs() < 1e-15);
    }

    #[test]
    fn spec_validation() {
        let mut spec = NetworkSpec::mlp(&[3, 2], Activation::Linear, LossKind::Mse);
        spec.loss = LossKind::CrossEntropy;
        assert!(matches!(spec.layer_shapes(), Err(Error::Validation(_))));
    }
}
