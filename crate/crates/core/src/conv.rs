//! 2-D convolution, max-pooling and flattening layers with backward passes.
//!
//! Feature maps are laid out `n x h x w x c` (channels last). The stand-alone
//! functions also accept a single `h x w x c` map and return the same rank.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Activation, LayerSpec, LossKind, NetworkSpec, ParamGrads};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Padding {
    #[default]
    Valid,
    Same,
}

/// Output length and leading zero-padding along one spatial axis.
pub fn conv_output_dim(input: usize, kernel: usize, stride: usize, padding: Padding) -> Result<(usize, usize)> {
    if stride == 0 || kernel == 0 {
        return Err(Error::Dimension("kernel and stride must be >= 1".into()));
    }
    match padding {
        Padding::Valid => {
            if kernel > input {
                return Err(Error::Dimension(format!(
                    "kernel extent {kernel} exceeds input extent {input}"
                )));
            }
            Ok(((input - kernel) / stride + 1, 0))
        }
        Padding::Same => {
            if input == 0 {
                return Err(Error::Dimension("empty input".into()));
            }
            let out = input.div_ceil(stride);
            let total = ((out - 1) * stride + kernel).saturating_sub(input);
            Ok((out, total / 2))
        }
    }
}

/// Splits a feature map into `(n, h, w, c)`; `batched` is false for 3-D input.
fn map_dims(x: &Tensor) -> Result<(usize, usize, usize, usize, bool)> {
    match *x.shape() {
        [h, w, c] => Ok((1, h, w, c, false)),
        [n, h, w, c] => Ok((n, h, w, c, true)),
        _ => Err(Error::Dimension(format!(
            "feature map must be h x w x c or n x h x w x c, got {:?}",
            x.shape()
        ))),
    }
}

fn out_shape(batched: bool, n: usize, h: usize, w: usize, c: usize) -> Vec<usize> {
    if batched {
        vec![n, h, w, c]
    } else {
        vec![h, w, c]
    }
}

#[derive(Debug, Clone)]
pub(crate) struct ConvCache {
    input: Tensor,
    pre: Vec<f64>,
    out: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
struct ConvGeom {
    n: usize,
    h: usize,
    w: usize,
    cin: usize,
    ho: usize,
    wo: usize,
    pad_top: usize,
    pad_left: usize,
    batched: bool,
}

/// Convolution layer. Kernels are `k_h x k_w x c_in x n_filters`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvLayer {
    pub(crate) kernels: Tensor,
    pub(crate) bias: Tensor,
    pub activation: Activation,
    pub stride: usize,
    pub padding: Padding,
    #[serde(skip)]
    pub(crate) cache: Option<ConvCache>,
}

impl ConvLayer {
    pub fn new(
        kernels: Tensor,
        bias: Tensor,
        activation: Activation,
        stride: usize,
        padding: Padding,
    ) -> Result<Self> {
        let &[kh, kw, _cin, nf] = kernels.shape() else {
            return Err(Error::Dimension(format!(
                "kernels must be k_h x k_w x c_in x n_filters, got {:?}",
                kernels.shape()
            )));
        };
        if kh == 0 || kw == 0 || nf == 0 || stride == 0 {
            return Err(Error::Dimension(
                "kernel extents, filter count and stride must be >= 1".into(),
            ));
        }
        if bias.shape() != [nf] {
            return Err(Error::Dimension(format!(
                "bias shape {:?} does not match {nf} filters",
                bias.shape()
            )));
        }
        if activation == Activation::Softmax {
            return Err(Error::Validation("softmax is not a convolution activation".into()));
        }
        Ok(Self {
            kernels,
            bias,
            activation,
            stride,
            padding,
            cache: None,
        })
    }

    /// Glorot-uniform kernels using receptive-field fan-in/fan-out, zero bias.
    pub fn glorot<R: Rng + ?Sized>(
        kernel: (usize, usize),
        in_channels: usize,
        filters: usize,
        activation: Activation,
        stride: usize,
        padding: Padding,
        rng: &mut R,
    ) -> Result<Self> {
        let field = kernel.0 * kernel.1;
        let limit = (6.0 / (field * (in_channels + filters)) as f64).sqrt();
        let k = (0..field * in_channels * filters)
            .map(|_| rng.random_range(-limit..=limit))
            .collect();
        Self::new(
            Tensor::new(vec![kernel.0, kernel.1, in_channels, filters], k)?,
            Tensor::zeros(&[filters]),
            activation,
            stride,
            padding,
        )
    }

    pub fn kernel_dims(&self) -> (usize, usize, usize, usize) {
        let s = self.kernels.shape();
        (s[0], s[1], s[2], s[3])
    }

    pub fn kernels(&self) -> &Tensor {
        &self.kernels
    }

    pub fn bias(&self) -> &Tensor {
        &self.bias
    }

    fn geometry(&self, x: &Tensor) -> Result<ConvGeom> {
        let (n, h, w, cin, batched) = map_dims(x)?;
        let (kh, kw, kc, _) = self.kernel_dims();
        if kc != cin {
            return Err(Error::Dimension(format!(
                "kernel expects {kc} input channels, input {:?} has {cin}",
                x.shape()
            )));
        }
        let (ho, pad_top) = conv_output_dim(h, kh, self.stride, self.padding)?;
        let (wo, pad_left) = conv_output_dim(w, kw, self.stride, self.padding)?;
        Ok(ConvGeom {
            n,
            h,
            w,
            cin,
            ho,
            wo,
            pad_top,
            pad_left,
            batched,
        })
    }

    fn pre_activation(&self, x: &Tensor, g: &ConvGeom) -> Vec<f64> {
        let (kh, kw, _, nf) = self.kernel_dims();
        let k = self.kernels.data();
        let xd = x.data();
        let mut pre = Vec::with_capacity(g.n * g.ho * g.wo * nf);
        for b in 0..g.n {
            for i in 0..g.ho {
                for j in 0..g.wo {
                    let start = pre.len();
                    pre.extend_from_slice(self.bias.data());
                    let acc = &mut pre[start..];
                    for u in 0..kh {
                        let Some(r) = (i * self.stride + u).checked_sub(g.pad_top) else {
                            continue;
                        };
                        if r >= g.h {
                            continue;
                        }
                        for v in 0..kw {
                            let Some(c) = (j * self.stride + v).checked_sub(g.pad_left) else {
                                continue;
                            };
                            if c >= g.w {
                                continue;
                            }
                            let xo = ((b * g.h + r) * g.w + c) * g.cin;
                            let ko = (u * kw + v) * g.cin * nf;
                            for ch in 0..g.cin {
                                let xv = xd[xo + ch];
                                if xv == 0.0 {
                                    continue;
                                }
                                let kr = &k[ko + ch * nf..ko + (ch + 1) * nf];
                                for (a, kv) in acc.iter_mut().zip(kr) {
                                    *a += xv * kv;
                                }
                            }
                        }
                    }
                }
            }
        }
        pre
    }

    pub fn infer(&self, x: &Tensor) -> Result<Tensor> {
        let g = self.geometry(x)?;
        let nf = self.kernel_dims().3;
        let pre = self.pre_activation(x, &g);
        let out = self.activation.apply(&pre, nf);
        Tensor::new(out_shape(g.batched, g.n, g.ho, g.wo, nf), out)
    }

    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        let g = self.geometry(x)?;
        let nf = self.kernel_dims().3;
        let pre = self.pre_activation(x, &g);
        let out = self.activation.apply(&pre, nf);
        let y = Tensor::new(out_shape(g.batched, g.n, g.ho, g.wo, nf), out.clone())?;
        self.cache = Some(ConvCache {
            input: x.clone(),
            pre,
            out,
        });
        Ok(y)
    }

    fn cache(&self) -> Result<&ConvCache> {
        self.cache
            .as_ref()
            .ok_or_else(|| Error::State("convolution backward called before forward".into()))
    }

    /// Returns `(input_grad, kernel/bias grads)` from the gradient w.r.t. the layer output.
    pub fn backward(&self, grad_out: &Tensor) -> Result<(Tensor, ParamGrads)> {
        let cache = self.cache()?;
        if grad_out.len() != cache.out.len() {
            return Err(Error::Dimension(format!(
                "upstream gradient shape {:?} does not match cached output size {}",
                grad_out.shape(),
                cache.out.len()
            )));
        }
        let nf = self.kernel_dims().3;
        let dz = self
            .activation
            .backward(&cache.pre, &cache.out, grad_out.data(), nf);
        self.backward_pre(cache, &dz)
    }

    /// Backward pass from the gradient w.r.t. the pre-activation.
    pub fn backward_from_pre(&self, grad_pre: &Tensor) -> Result<(Tensor, ParamGrads)> {
        let cache = self.cache()?;
        if grad_pre.len() != cache.pre.len() {
            return Err(Error::Dimension(format!(
                "pre-activation gradient shape {:?} does not match cached size {}",
                grad_pre.shape(),
                cache.pre.len()
            )));
        }
        self.backward_pre(cache, grad_pre.data())
    }

    fn backward_pre(&self, cache: &ConvCache, dz: &[f64]) -> Result<(Tensor, ParamGrads)> {
        let x = &cache.input;
        let g = self.geometry(x)?;
        let (kh, kw, _, nf) = self.kernel_dims();
        let k = self.kernels.data();
        let xd = x.data();
        let mut dx = vec![0.0; x.len()];
        let mut dk = vec![0.0; self.kernels.len()];
        let mut db = vec![0.0; nf];
        for b in 0..g.n {
            for i in 0..g.ho {
                for j in 0..g.wo {
                    let zo = ((b * g.ho + i) * g.wo + j) * nf;
                    let dzs = &dz[zo..zo + nf];
                    for (d, z) in db.iter_mut().zip(dzs) {
                        *d += z;
                    }
                    for u in 0..kh {
                        let Some(r) = (i * self.stride + u).checked_sub(g.pad_top) else {
                            continue;
                        };
                        if r >= g.h {
                            continue;
                        }
                        for v in 0..kw {
                            let Some(c) = (j * self.stride + v).checked_sub(g.pad_left) else {
                                continue;
                            };
                            if c >= g.w {
                                continue;
                            }
                            let xo = ((b * g.h + r) * g.w + c) * g.cin;
                            let ko = (u * kw + v) * g.cin * nf;
                            for ch in 0..g.cin {
                                let kr = &k[ko + ch * nf..ko + (ch + 1) * nf];
                                dx[xo + ch] += kr.iter().zip(dzs).map(|(a, b)| a * b).sum::<f64>();
                                let xv = xd[xo + ch];
                                for (dkv, z) in dk[ko + ch * nf..ko + (ch + 1) * nf].iter_mut().zip(dzs) {
                                    *dkv += xv * z;
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok((
            Tensor::new(x.shape().to_vec(), dx)?,
            ParamGrads {
                weights: Tensor::new(self.kernels.shape().to_vec(), dk)?,
                bias: Tensor::new(vec![nf], db)?,
            },
        ))
    }
}

pub fn conv2d_forward(layer: &ConvLayer, x: &Tensor) -> Result<Tensor> {
    layer.infer(x)
}

/// Backward pass of a layer whose forward has been run with [`ConvLayer::forward`].
pub fn conv2d_backward(layer: &ConvLayer, upstream_grad: &Tensor) -> Result<(Tensor, Tensor, Tensor)> {
    let (dx, p) = layer.backward(upstream_grad)?;
    Ok((dx, p.weights, p.bias))
}

#[derive(Debug, Clone)]
pub(crate) struct PoolCache {
    input_shape: Vec<usize>,
    argmax: Vec<usize>,
}

/// Max-pooling layer. Ties resolve to the first maximum in row-major window order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PoolLayer {
    pub window: (usize, usize),
    pub stride: usize,
    #[serde(skip)]
    pub(crate) cache: Option<PoolCache>,
}

impl PoolLayer {
    pub fn new(window: (usize, usize), stride: usize) -> Result<Self> {
        if window.0 == 0 || window.1 == 0 || stride == 0 {
            return Err(Error::Dimension("pool window and stride must be >= 1".into()));
        }
        Ok(Self {
            window,
            stride,
            cache: None,
        })
    }

    pub fn output_dims(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let (ho, _) = conv_output_dim(h, self.window.0, self.stride, Padding::Valid)?;
        let (wo, _) = conv_output_dim(w, self.window.1, self.stride, Padding::Valid)?;
        Ok((ho, wo))
    }

    fn pool(&self, x: &Tensor) -> Result<(Tensor, Vec<usize>)> {
        let (n, h, w, c, batched) = map_dims(x)?;
        let (ho, wo) = self.output_dims(h, w)?;
        let xd = x.data();
        let mut out = Vec::with_capacity(n * ho * wo * c);
        let mut arg = Vec::with_capacity(n * ho * wo * c);
        for b in 0..n {
            for i in 0..ho {
                for j in 0..wo {
                    for ch in 0..c {
                        let mut best = f64::NEG_INFINITY;
                        let mut best_idx = usize::MAX;
                        for u in 0..self.window.0 {
                            for v in 0..self.window.1 {
                                let r = i * self.stride + u;
                                let col = j * self.stride + v;
                                let idx = ((b * h + r) * w + col) * c + ch;
                                if best_idx == usize::MAX || xd[idx] > best {
                                    best = xd[idx];
                                    best_idx = idx;
                                }
                            }
                        }
                        out.push(best);
                        arg.push(best_idx);
                    }
                }
            }
        }
        Ok((Tensor::new(out_shape(batched, n, ho, wo, c), out)?, arg))
    }

    pub fn infer(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self.pool(x)?.0)
    }

    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        let (y, argmax) = self.pool(x)?;
        self.cache = Some(PoolCache {
            input_shape: x.shape().to_vec(),
            argmax,
        });
        Ok(y)
    }

    pub fn backward(&self, grad_out: &Tensor) -> Result<Tensor> {
        let cache = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::State("pool backward called before forward".into()))?;
        maxpool2d_backward(&cache.input_shape, &cache.argmax, grad_out)
    }
}

/// Max-pools `x`, returning the pooled map and the flat input index of each window's maximum.
pub fn maxpool2d(layer: &PoolLayer, x: &Tensor) -> Result<(Tensor, Vec<usize>)> {
    layer.pool(x)
}

/// Routes `grad_out` back to the recorded argmax positions.
pub fn maxpool2d_backward(input_shape: &[usize], argmax: &[usize], grad_out: &Tensor) -> Result<Tensor> {
    if grad_out.len() != argmax.len() {
        return Err(Error::Dimension(format!(
            "pool gradient has {} entries, argmax mask has {}",
            grad_out.len(),
            argmax.len()
        )));
    }
    let mut dx = Tensor::zeros(input_shape);
    let d = dx.data_mut();
    for (&idx, &g) in argmax.iter().zip(grad_out.data()) {
        d[idx] += g;
    }
    Ok(dx)
}

/// Flattens `n x h x w x c` into `n x (h*w*c)`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct FlattenLayer {
    #[serde(skip)]
    pub(crate) input_shape: Option<Vec<usize>>,
}

impl FlattenLayer {
    pub fn infer(&self, x: &Tensor) -> Result<Tensor> {
        let n = x.rows();
        let w = x.row_len();
        x.clone().reshape(vec![n, w])
    }

    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        self.input_shape = Some(x.shape().to_vec());
        self.infer(x)
    }

    pub fn backward(&self, grad_out: &Tensor) -> Result<Tensor> {
        let shape = self
            .input_shape
            .clone()
            .ok_or_else(|| Error::State("flatten backward called before forward".into()))?;
        grad_out.clone().reshape(shape)
    }
}

/// Smallest spectrogram extent accepted by [`build_oltc_cnn`].
pub const OLTC_CNN_MIN_EXTENT: usize = 8;

/// Reference OLTC classifier:
/// conv 3x3x16 (relu) -> pool 2x2 -> conv 3x3x32 (relu) -> pool 2x2 -> flatten
/// -> dense 128 (softplus) -> dense n_classes (softmax), cross-entropy loss.
///
/// Convolutions use `same` padding so an 8x8 input survives both pooling stages.
pub fn build_oltc_cnn(n_mels: usize, n_frames: usize, n_classes: usize) -> Result<NetworkSpec> {
    if n_mels < OLTC_CNN_MIN_EXTENT || n_frames < OLTC_CNN_MIN_EXTENT {
        return Err(Error::Dimension(format!(
            "input {n_mels}x{n_frames} is too small for two pooling stages (need >= {OLTC_CNN_MIN_EXTENT} on each axis)"
        )));
    }
    if n_classes < 2 {
        return Err(Error::Validation(format!("need at least 2 classes, got {n_classes}")));
    }
    let conv = |filters| LayerSpec::Conv2d {
        kernel: (3, 3),
        filters,
        stride: 1,
        padding: Padding::Same,
        activation: Activation::Relu,
    };
    let pool = LayerSpec::MaxPool2d {
        window: (2, 2),
        stride: 2,
    };
    let spec = NetworkSpec {
        input_shape: vec![n_mels, n_frames, 1],
        layers: vec![
            conv(16),
            pool.clone(),
            conv(32),
            pool,
            LayerSpec::Flatten,
            LayerSpec::Dense {
                outputs: 128,
                activation: Activation::Softplus,
            },
            LayerSpec::Dense {
                outputs: n_classes,
                activation: Activation::Softmax,
            },
        ],
        loss: LossKind::CrossEntropy,
    };
    spec.layer_shapes()?;
    Ok(spec)
}
