//! Layer forward/backward definitions. Convolutions are cross-correlations
//! with "same" zero padding and stride 1; even kernels pad one extra element
//! on the bottom/right.

use rand::Rng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::tensor::Tensor;

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Declarative layer description; the single source of truth for building,
/// training, and complexity auditing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum LayerSpec {
    Conv2d { kernel: [usize; 2], out_channels: usize },
    BatchNorm,
    Relu,
    AvgPool { pool: [usize; 2] },
    GlobalAvgPool,
    Dropout { rate: f64 },
    Dense { out_features: usize },
    Softmax,
    /// Residual unit: conv-relu-conv plus a shortcut (1x1 projection when
    /// the channel count changes, identity otherwise).
    Residual { kernel: [usize; 2], out_channels: usize },
}

impl LayerSpec {
    /// Static shape propagation. Spatial activations are [H, W, C], flat
    /// activations are [D].
    pub fn tag(&self) -> &'static str {
        match self {
            LayerSpec::Conv2d { .. } => "conv2d",
            LayerSpec::BatchNorm => "batchnorm",
            LayerSpec::Relu => "relu",
            LayerSpec::AvgPool { .. } => "avgpool",
            LayerSpec::GlobalAvgPool => "gap",
            LayerSpec::Dropout { .. } => "dropout",
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Softmax => "softmax",
            LayerSpec::Residual { .. } => "residual",
        }
    }

    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let spatial = |name: &str| -> Result<(usize, usize, usize)> {
            match input {
                [h, w, c] => Ok((*h, *w, *c)),
                other => Err(Error::Shape(format!("{name} expects [H,W,C], got {other:?}"))),
            }
        };
        match self {
            LayerSpec::Conv2d { out_channels, .. } | LayerSpec::Residual { out_channels, .. } => {
                let (h, w, _) = spatial("conv")?;
                Ok(vec![h, w, *out_channels])
            }
            LayerSpec::BatchNorm | LayerSpec::Relu | LayerSpec::Dropout { .. } => {
                Ok(input.to_vec())
            }
            LayerSpec::AvgPool { pool } => {
                let (h, w, c) = spatial("avgpool")?;
                if h % pool[0] != 0 || w % pool[1] != 0 {
                    return Err(Error::Shape(format!(
                        "avgpool {pool:?} does not divide {h}x{w}"
                    )));
                }
                Ok(vec![h / pool[0], w / pool[1], c])
            }
            LayerSpec::GlobalAvgPool => {
                let (_, _, c) = spatial("gap")?;
                Ok(vec![c])
            }
            LayerSpec::Dense { out_features } => match input {
                [_] => Ok(vec![*out_features]),
                other => Err(Error::Shape(format!("dense expects [D], got {other:?}"))),
            },
            LayerSpec::Softmax => match input {
                [d] => Ok(vec![*d]),
                other => Err(Error::Shape(format!("softmax expects [D], got {other:?}"))),
            },
        }
    }
}

fn kaiming_uniform(rng: &mut ChaCha20Rng, shape: &[usize], fan_in: usize) -> Tensor {
    let limit = (6.0 / fan_in as f64).sqrt();
    let len: usize = shape.iter().product();
    let data = (0..len).map(|_| (rng.random::<f64>() * 2.0 - 1.0) * limit).collect();
    Tensor::from_vec(shape, data)
}

// ---------------------------------------------------------------------------
// Conv2d

#[derive(Debug, Clone)]
pub struct ConvLayer {
    pub kernel: [usize; 2],
    pub in_channels: usize,
    pub out_channels: usize,
    pub weights: Tensor, // [kh, kw, cin, cout]
    pub bias: Tensor,    // [cout]
    pub grad_weights: Tensor,
    pub grad_bias: Tensor,
    cached_input: Option<Tensor>,
}

impl ConvLayer {
    pub fn new(kernel: [usize; 2], in_channels: usize, out_channels: usize, rng: &mut ChaCha20Rng) -> Self {
        let fan_in = kernel[0] * kernel[1] * in_channels;
        let shape = [kernel[0], kernel[1], in_channels, out_channels];
        ConvLayer {
            kernel,
            in_channels,
            out_channels,
            weights: kaiming_uniform(rng, &shape, fan_in),
            bias: Tensor::zeros(&[out_channels]),
            grad_weights: Tensor::zeros(&shape),
            grad_bias: Tensor::zeros(&[out_channels]),
            cached_input: None,
        }
    }

    fn im2col(&self, input: &[f64], h: usize, w: usize, col: &mut [f64]) {
        let [kh, kw] = self.kernel;
        let cin = self.in_channels;
        let (pad_h, pad_w) = ((kh - 1) / 2, (kw - 1) / 2);
        let k = kh * kw * cin;
        for y in 0..h {
            for x in 0..w {
                let row = (y * w + x) * k;
                for dy in 0..kh {
                    let sy = y as isize + dy as isize - pad_h as isize;
                    for dx in 0..kw {
                        let sx = x as isize + dx as isize - pad_w as isize;
                        let dst = row + (dy * kw + dx) * cin;
                        if sy >= 0 && (sy as usize) < h && sx >= 0 && (sx as usize) < w {
                            let src = (sy as usize * w + sx as usize) * cin;
                            col[dst..dst + cin].copy_from_slice(&input[src..src + cin]);
                        } else {
                            col[dst..dst + cin].fill(0.0);
                        }
                    }
                }
            }
        }
    }

    pub fn forward(&mut self, input: &Tensor) -> Result<Tensor> {
        let (n, h, w, cin) = match input.shape.as_slice() {
            [n, h, w, c] => (*n, *h, *w, *c),
            other => return Err(Error::Shape(format!("conv input must be 4-D, got {other:?}"))),
        };
        if cin != self.in_channels {
            return Err(Error::Shape(format!(
                "conv expects {} input channels, got {cin}",
                self.in_channels
            )));
        }
        let cout = self.out_channels;
        let k = self.kernel[0] * self.kernel[1] * cin;
        let hw = h * w;
        let mut out = Tensor::zeros(&[n, h, w, cout]);
        let mut col = vec![0.0; hw * k];
        for s in 0..n {
            let input_s = &input.data[s * hw * cin..(s + 1) * hw * cin];
            self.im2col(input_s, h, w, &mut col);
            let out_s = &mut out.data[s * hw * cout..(s + 1) * hw * cout];
            unsafe {
                matrixmultiply::dgemm(
                    hw, k, cout,
                    1.0,
                    col.as_ptr(), k as isize, 1,
                    self.weights.data.as_ptr(), cout as isize, 1,
                    0.0,
                    out_s.as_mut_ptr(), cout as isize, 1,
                );
            }
            for p in 0..hw {
                for co in 0..cout {
                    out_s[p * cout + co] += self.bias.data[co];
                }
            }
        }
        self.cached_input = Some(input.clone());
        Ok(out)
    }

    pub fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        let input = self
            .cached_input
            .as_ref()
            .ok_or_else(|| Error::Validation("conv backward without forward cache".into()))?;
        let (n, h, w, cin) = (input.shape[0], input.shape[1], input.shape[2], input.shape[3]);
        let cout = self.out_channels;
        let [kh, kw] = self.kernel;
        let (pad_h, pad_w) = ((kh - 1) / 2, (kw - 1) / 2);
        let k = kh * kw * cin;
        let hw = h * w;
        self.grad_weights.fill(0.0);
        self.grad_bias.fill(0.0);
        let mut grad_input = Tensor::zeros(&input.shape);
        let mut col = vec![0.0; hw * k];
        let mut grad_col = vec![0.0; hw * k];
        for s in 0..n {
            let input_s = &input.data[s * hw * cin..(s + 1) * hw * cin];
            let grad_out_s = &grad_out.data[s * hw * cout..(s + 1) * hw * cout];
            self.im2col(input_s, h, w, &mut col);
            // grad_w += col^T x grad_out
            unsafe {
                matrixmultiply::dgemm(
                    k, hw, cout,
                    1.0,
                    col.as_ptr(), 1, k as isize, // transposed view of col
                    grad_out_s.as_ptr(), cout as isize, 1,
                    1.0,
                    self.grad_weights.data.as_mut_ptr(), cout as isize, 1,
                );
                // grad_col = grad_out x W^T
                matrixmultiply::dgemm(
                    hw, cout, k,
                    1.0,
                    grad_out_s.as_ptr(), cout as isize, 1,
                    self.weights.data.as_ptr(), 1, cout as isize, // transposed view of W
                    0.0,
                    grad_col.as_mut_ptr(), k as isize, 1,
                );
            }
            for p in 0..hw {
                for co in 0..cout {
                    self.grad_bias.data[co] += grad_out_s[p * cout + co];
                }
            }
            // col2im scatter-add
            let gi_s = &mut grad_input.data[s * hw * cin..(s + 1) * hw * cin];
            for y in 0..h {
                for x in 0..w {
                    let row = (y * w + x) * k;
                    for dy in 0..kh {
                        let sy = y as isize + dy as isize - pad_h as isize;
                        if sy < 0 || sy as usize >= h {
                            continue;
                        }
                        for dx in 0..kw {
                            let sx = x as isize + dx as isize - pad_w as isize;
                            if sx < 0 || sx as usize >= w {
                                continue;
                            }
                            let src = row + (dy * kw + dx) * cin;
                            let dst = (sy as usize * w + sx as usize) * cin;
                            for ci in 0..cin {
                                gi_s[dst + ci] += grad_col[src + ci];
                            }
                        }
                    }
                }
            }
        }
        Ok(grad_input)
    }
}

// ---------------------------------------------------------------------------
// BatchNorm

#[derive(Debug, Clone)]
pub struct BnLayer {
    pub channels: usize,
    pub gamma: Tensor,
    pub beta: Tensor,
    pub grad_gamma: Tensor,
    pub grad_beta: Tensor,
    pub running_mean: Tensor,
    pub running_var: Tensor,
    pub initialized: bool,
    cache: Option<BnCache>,
}

#[derive(Debug, Clone)]
struct BnCache {
    xhat: Tensor,
    invstd: Vec<f64>,
    mode: Mode,
    reduce: usize,
}

impl BnLayer {
    pub fn new(channels: usize) -> Self {
        BnLayer {
            channels,
            gamma: Tensor::from_vec(&[channels], vec![1.0; channels]),
            beta: Tensor::zeros(&[channels]),
            grad_gamma: Tensor::zeros(&[channels]),
            grad_beta: Tensor::zeros(&[channels]),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::from_vec(&[channels], vec![1.0; channels]),
            initialized: false,
            cache: None,
        }
    }

    pub fn forward(&mut self, input: &Tensor, mode: Mode) -> Result<Tensor> {
        let c = self.channels;
        if *input.shape.last().unwrap() != c {
            return Err(Error::Shape(format!(
                "batchnorm expects {c} channels, got {}",
                input.shape.last().unwrap()
            )));
        }
        let reduce = input.len() / c;
        let mut out = Tensor::zeros(&input.shape);
        match mode {
            Mode::Train => {
                let mut mean = vec![0.0; c];
                let mut var = vec![0.0; c];
                for (i, &v) in input.data.iter().enumerate() {
                    mean[i % c] += v;
                }
                for m in &mut mean {
                    *m /= reduce as f64;
                }
                for (i, &v) in input.data.iter().enumerate() {
                    let d = v - mean[i % c];
                    var[i % c] += d * d;
                }
                for v in &mut var {
                    *v /= reduce as f64;
                }
                let invstd: Vec<f64> = var.iter().map(|&v| 1.0 / (v + BN_EPS).sqrt()).collect();
                let mut xhat = Tensor::zeros(&input.shape);
                for (i, &v) in input.data.iter().enumerate() {
                    let ch = i % c;
                    let xh = (v - mean[ch]) * invstd[ch];
                    xhat.data[i] = xh;
                    out.data[i] = self.gamma.data[ch] * xh + self.beta.data[ch];
                }
                for ch in 0..c {
                    self.running_mean.data[ch] =
                        BN_MOMENTUM * self.running_mean.data[ch] + (1.0 - BN_MOMENTUM) * mean[ch];
                    self.running_var.data[ch] =
                        BN_MOMENTUM * self.running_var.data[ch] + (1.0 - BN_MOMENTUM) * var[ch];
                }
                self.initialized = true;
                self.cache = Some(BnCache { xhat, invstd, mode, reduce });
            }
            Mode::Eval => {
                if !self.initialized {
                    return Err(Error::UninitializedStats(format!("{c}-channel batchnorm")));
                }
                let invstd: Vec<f64> = self
                    .running_var
                    .data
                    .iter()
                    .map(|&v| 1.0 / (v + BN_EPS).sqrt())
                    .collect();
                let mut xhat = Tensor::zeros(&input.shape);
                for (i, &v) in input.data.iter().enumerate() {
                    let ch = i % c;
                    let xh = (v - self.running_mean.data[ch]) * invstd[ch];
                    xhat.data[i] = xh;
                    out.data[i] = self.gamma.data[ch] * xh + self.beta.data[ch];
                }
                self.cache = Some(BnCache { xhat, invstd, mode, reduce });
            }
        }
        Ok(out)
    }

    pub fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        let cache = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::Validation("batchnorm backward without forward cache".into()))?;
        let c = self.channels;
        let m = cache.reduce as f64;
        self.grad_gamma.fill(0.0);
        self.grad_beta.fill(0.0);
        for (i, &g) in grad_out.data.iter().enumerate() {
            let ch = i % c;
            self.grad_gamma.data[ch] += g * cache.xhat.data[i];
            self.grad_beta.data[ch] += g;
        }
        let mut grad_input = Tensor::zeros(&grad_out.shape);
        match cache.mode {
            Mode::Train => {
                for (i, &g) in grad_out.data.iter().enumerate() {
                    let ch = i % c;
                    let t = m * g - self.grad_beta.data[ch]
                        - cache.xhat.data[i] * self.grad_gamma.data[ch];
                    grad_input.data[i] = self.gamma.data[ch] * cache.invstd[ch] / m * t;
                }
            }
            Mode::Eval => {
                for (i, &g) in grad_out.data.iter().enumerate() {
                    let ch = i % c;
                    grad_input.data[i] = g * self.gamma.data[ch] * cache.invstd[ch];
                }
            }
        }
        Ok(grad_input)
    }
}

// ---------------------------------------------------------------------------
// Elementwise and pooling layers

#[derive(Debug, Clone, Default)]
pub struct ReluLayer {
    cached_output: Option<Tensor>,
}

impl ReluLayer {
    pub fn forward(&mut self, input: &Tensor) -> Tensor {
        let mut out = input.clone();
        out.data.iter_mut().for_each(|v| *v = v.max(0.0));
        self.cached_output = Some(out.clone());
        out
    }

    pub fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        let out = self
            .cached_output
            .as_ref()
            .ok_or_else(|| Error::Validation("relu backward without forward cache".into()))?;
        let mut grad = grad_out.clone();
        for (g, &o) in grad.data.iter_mut().zip(&out.data) {
            if o <= 0.0 {
                *g = 0.0;
            }
        }
        Ok(grad)
    }
}

#[derive(Debug, Clone)]
pub struct PoolLayer {
    pub pool: [usize; 2],
    cached_in_shape: Option<Vec<usize>>,
}

impl PoolLayer {
    pub fn new(pool: [usize; 2]) -> Self {
        PoolLayer { pool, cached_in_shape: None }
    }

    pub fn forward(&mut self, input: &Tensor) -> Result<Tensor> {
        let (n, h, w, c) = match input.shape.as_slice() {
            [n, h, w, c] => (*n, *h, *w, *c),
            other => return Err(Error::Shape(format!("avgpool input must be 4-D, got {other:?}"))),
        };
        let [ph, pw] = self.pool;
        if h % ph != 0 || w % pw != 0 {
            return Err(Error::Shape(format!("pool {:?} does not divide {h}x{w}", self.pool)));
        }
        let (oh, ow) = (h / ph, w / pw);
        let area = (ph * pw) as f64;
        let mut out = Tensor::zeros(&[n, oh, ow, c]);
        for s in 0..n {
            for oy in 0..oh {
                for ox in 0..ow {
                    for ch in 0..c {
                        let mut acc = 0.0;
                        for dy in 0..ph {
                            for dx in 0..pw {
                                let idx = ((s * h + oy * ph + dy) * w + ox * pw + dx) * c + ch;
                                acc += input.data[idx];
                            }
                        }
                        out.data[((s * oh + oy) * ow + ox) * c + ch] = acc / area;
                    }
                }
            }
        }
        self.cached_in_shape = Some(input.shape.clone());
        Ok(out)
    }

    pub fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        let shape = self
            .cached_in_shape
            .as_ref()
            .ok_or_else(|| Error::Validation("avgpool backward without forward cache".into()))?;
        let (n, h, w, c) = (shape[0], shape[1], shape[2], shape[3]);
        let [ph, pw] = self.pool;
        let (oh, ow) = (h / ph, w / pw);
        let area = (ph * pw) as f64;
        let mut grad = Tensor::zeros(shape);
        for s in 0..n {
            for oy in 0..oh {
                for ox in 0..ow {
                    for ch in 0..c {
                        let g = grad_out.data[((s * oh + oy) * ow + ox) * c + ch] / area;
                        for dy in 0..ph {
                            for dx in 0..pw {
                                let idx = ((s * h + oy * ph + dy) * w + ox * pw + dx) * c + ch;
                                grad.data[idx] += g;
                            }
                        }
                    }
                }
            }
        }
        Ok(grad)
    }
}

#[derive(Debug, Clone, Default)]
pub struct GapLayer {
    cached_in_shape: Option<Vec<usize>>,
}

impl GapLayer {
    pub fn forward(&mut self, input: &Tensor) -> Result<Tensor> {
        let (n, h, w, c) = match input.shape.as_slice() {
            [n, h, w, c] => (*n, *h, *w, *c),
            other => return Err(Error::Shape(format!("gap input must be 4-D, got {other:?}"))),
        };
        let area = (h * w) as f64;
        let mut out = Tensor::zeros(&[n, c]);
        for (i, &v) in input.data.iter().enumerate() {
            let s = i / (h * w * c);
            let ch = i % c;
            out.data[s * c + ch] += v / area;
        }
        self.cached_in_shape = Some(input.shape.clone());
        Ok(out)
    }

    pub fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        let shape = self
            .cached_in_shape
            .as_ref()
            .ok_or_else(|| Error::Validation("gap backward without forward cache".into()))?;
        let (h, w, c) = (shape[1], shape[2], shape[3]);
        let area = (h * w) as f64;
        let mut grad = Tensor::zeros(shape);
        for (i, g) in grad.data.iter_mut().enumerate() {
            let s = i / (h * w * c);
            let ch = i % c;
            *g = grad_out.data[s * c + ch] / area;
        }
        Ok(grad)
    }
}

#[derive(Debug, Clone)]
pub struct DropLayer {
    pub rate: f64,
    mask: Option<Vec<f64>>,
}

impl DropLayer {
    pub fn new(rate: f64) -> Self {
        assert!((0.0..1.0).contains(&rate));
        DropLayer { rate, mask: None }
    }

    /// Inverted dropout: surviving activations are scaled by 1/(1-rate) at
    /// train time so the eval path is scale-free.
    pub fn forward(&mut self, input: &Tensor, mode: Mode, rng: &mut ChaCha20Rng) -> Tensor {
        match mode {
            Mode::Eval => {
                self.mask = None;
                input.clone()
            }
            Mode::Train => {
                let keep = 1.0 - self.rate;
                let mask: Vec<f64> = (0..input.len())
                    .map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
                    .collect();
                let mut out = input.clone();
                for (v, &m) in out.data.iter_mut().zip(&mask) {
                    *v *= m;
                }
                self.mask = Some(mask);
                out
            }
        }
    }

    pub fn backward(&mut self, grad_out: &Tensor) -> Tensor {
        match &self.mask {
            None => grad_out.clone(),
            Some(mask) => {
                let mut grad = grad_out.clone();
                for (g, &m) in grad.data.iter_mut().zip(mask) {
                    *g *= m;
                }
                grad
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Dense and softmax

#[derive(Debug, Clone)]
pub struct DenseLayer {
    pub in_features: usize,
    pub out_features: usize,
    pub weights: Tensor, // [in, out]
    pub bias: Tensor,    // [out]
    pub grad_weights: Tensor,
    pub grad_bias: Tensor,
    cached_input: Option<Tensor>,
}

impl DenseLayer {
    pub fn new(in_features: usize, out_features: usize, rng: &mut ChaCha20Rng) -> Self {
        DenseLayer {
            in_features,
            out_features,
            weights: kaiming_uniform(rng, &[in_features, out_features], in_features),
            bias: Tensor::zeros(&[out_features]),
            grad_weights: Tensor::zeros(&[in_features, out_features]),
            grad_bias: Tensor::zeros(&[out_features]),
            cached_input: None,
        }
    }

    pub fn forward(&mut self, input: &Tensor) -> Result<Tensor> {
        let (n, d) = match input.shape.as_slice() {
            [n, d] => (*n, *d),
            other => return Err(Error::Shape(format!("dense input must be 2-D, got {other:?}"))),
        };
        if d != self.in_features {
            return Err(Error::Shape(format!(
                "dense expects {} features, got {d}",
                self.in_features
            )));
        }
        let out_f = self.out_features;
        let mut out = Tensor::zeros(&[n, out_f]);
        unsafe {
            matrixmultiply::dgemm(
                n, d, out_f,
                1.0,
                input.data.as_ptr(), d as isize, 1,
                self.weights.data.as_ptr(), out_f as isize, 1,
                0.0,
                out.data.as_mut_ptr(), out_f as isize, 1,
            );
        }
        for s in 0..n {
            for o in 0..out_f {
                out.data[s * out_f + o] += self.bias.data[o];
            }
        }
        self.cached_input = Some(input.clone());
        Ok(out)
    }

    pub fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        let input = self
            .cached_input
            .as_ref()
            .ok_or_else(|| Error::Validation("dense backward without forward cache".into()))?;
        let (n, d) = (input.shape[0], input.shape[1]);
        let out_f = self.out_features;
        self.grad_weights.fill(0.0);
        self.grad_bias.fill(0.0);
        let mut grad_input = Tensor::zeros(&input.shape);
        unsafe {
            // grad_w = x^T x grad_out
            matrixmultiply::dgemm(
                d, n, out_f,
                1.0,
                input.data.as_ptr(), 1, d as isize,
                grad_out.data.as_ptr(), out_f as isize, 1,
                0.0,
                self.grad_weights.data.as_mut_ptr(), out_f as isize, 1,
            );
            // grad_x = grad_out x W^T
            matrixmultiply::dgemm(
                n, out_f, d,
                1.0,
                grad_out.data.as_ptr(), out_f as isize, 1,
                self.weights.data.as_ptr(), 1, out_f as isize,
                0.0,
                grad_input.data.as_mut_ptr(), d as isize, 1,
            );
        }
        for s in 0..n {
            for o in 0..out_f {
                self.grad_bias.data[o] += grad_out.data[s * out_f + o];
            }
        }
        Ok(grad_input)
    }
}

#[derive(Debug, Clone, Default)]
pub struct SoftmaxLayer {
    cached_output: Option<Tensor>,
}

impl SoftmaxLayer {
    pub fn forward(&mut self, input: &Tensor) -> Result<Tensor> {
        let (n, d) = match input.shape.as_slice() {
            [n, d] => (*n, *d),
            other => return Err(Error::Shape(format!("softmax input must be 2-D, got {other:?}"))),
        };
        let mut out = Tensor::zeros(&input.shape);
        for s in 0..n {
            let row = &input.data[s * d..(s + 1) * d];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for (i, &v) in row.iter().enumerate() {
                let e = (v - max).exp();
                out.data[s * d + i] = e;
                sum += e;
            }
            for i in 0..d {
                out.data[s * d + i] /= sum;
            }
        }
        self.cached_output = Some(out.clone());
        Ok(out)
    }

    pub fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        let out = self
            .cached_output
            .as_ref()
            .ok_or_else(|| Error::Validation("softmax backward without forward cache".into()))?;
        let (n, d) = (out.shape[0], out.shape[1]);
        let mut grad = Tensor::zeros(&out.shape);
        for s in 0..n {
            let p = &out.data[s * d..(s + 1) * d];
            let g = &grad_out.data[s * d..(s + 1) * d];
            let dot: f64 = p.iter().zip(g).map(|(a, b)| a * b).sum();
            for i in 0..d {
                grad.data[s * d + i] = p[i] * (g[i] - dot);
            }
        }
        Ok(grad)
    }
}

// ---------------------------------------------------------------------------
// Residual unit

#[derive(Debug, Clone)]
pub struct ResidualLayer {
    pub conv_a: ConvLayer,
    pub conv_b: ConvLayer,
    pub projection: Option<ConvLayer>,
    relu: ReluLayer,
}

impl ResidualLayer {
    pub fn new(kernel: [usize; 2], in_channels: usize, out_channels: usize, rng: &mut ChaCha20Rng) -> Self {
        let conv_a = ConvLayer::new(kernel, in_channels, out_channels, rng);
        let conv_b = ConvLayer::new(kernel, out_channels, out_channels, rng);
        let projection = if in_channels != out_channels {
            Some(ConvLayer::new([1, 1], in_channels, out_channels, rng))
        } else {
            None
        };
        ResidualLayer { conv_a, conv_b, projection, relu: ReluLayer::default() }
    }

    pub fn forward(&mut self, input: &Tensor) -> Result<Tensor> {
        let a = self.conv_a.forward(input)?;
        let h = self.relu.forward(&a);
        let mut z = self.conv_b.forward(&h)?;
        match &mut self.projection {
            Some(proj) => {
                let s = proj.forward(input)?;
                for (zv, sv) in z.data.iter_mut().zip(&s.data) {
                    *zv += sv;
                }
            }
            None => {
                for (zv, iv) in z.data.iter_mut().zip(&input.data) {
                    *zv += iv;
                }
            }
        }
        Ok(z)
    }

    pub fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        let dh = self.conv_b.backward(grad_out)?;
        let da = self.relu.backward(&dh)?;
        let mut dx = self.conv_a.backward(&da)?;
        match &mut self.projection {
            Some(proj) => {
                let ds = proj.backward(grad_out)?;
                for (a, b) in dx.data.iter_mut().zip(&ds.data) {
                    *a += b;
                }
            }
            None => {
                for (a, b) in dx.data.iter_mut().zip(&grad_out.data) {
                    *a += b;
                }
            }
        }
        Ok(dx)
    }
}
