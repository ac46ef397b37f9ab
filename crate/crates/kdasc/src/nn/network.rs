//! Sequential network assembled from [`LayerSpec`]s, with deterministic
//! seeded initialization and an optional gradient injection point for the
//! distillation loss.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::nn::layers::{
    BnLayer, ConvLayer, DenseLayer, DropLayer, GapLayer, LayerSpec, Mode, PoolLayer, ReluLayer,
    ResidualLayer, SoftmaxLayer,
};
use crate::nn::tensor::Tensor;

#[derive(Debug, Clone)]
pub enum Layer {
    Conv2d(ConvLayer),
    BatchNorm(BnLayer),
    Relu(ReluLayer),
    AvgPool(PoolLayer),
    GlobalAvgPool(GapLayer),
    Dropout(DropLayer),
    Dense(DenseLayer),
    Softmax(SoftmaxLayer),
    Residual(ResidualLayer),
}

#[derive(Debug, Clone)]
pub struct Network {
    pub input_shape: Vec<usize>,
    pub layers: Vec<Layer>,
    pub layer_names: Vec<String>,
}

impl Network {
    /// Build a network with Kaiming-uniform seeded initialization.
    pub fn build(specs: &[LayerSpec], input_shape: &[usize], seed: u64) -> Result<Network> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut shape = input_shape.to_vec();
        let mut layers = Vec::with_capacity(specs.len());
        let mut layer_names = Vec::with_capacity(specs.len());
        for (i, spec) in specs.iter().enumerate() {
            let layer = match spec {
                LayerSpec::Conv2d { kernel, out_channels } => {
                    let cin = *shape.last().unwrap();
                    Layer::Conv2d(ConvLayer::new(*kernel, cin, *out_channels, &mut rng))
                }
                LayerSpec::BatchNorm => Layer::BatchNorm(BnLayer::new(*shape.last().unwrap())),
                LayerSpec::Relu => Layer::Relu(ReluLayer::default()),
                LayerSpec::AvgPool { pool } => Layer::AvgPool(PoolLayer::new(*pool)),
                LayerSpec::GlobalAvgPool => Layer::GlobalAvgPool(GapLayer::default()),
                LayerSpec::Dropout { rate } => Layer::Dropout(DropLayer::new(*rate)),
                LayerSpec::Dense { out_features } => {
                    let d = match shape.as_slice() {
                        [d] => *d,
                        other => {
                            return Err(Error::Shape(format!(
                                "dense after non-flat shape {other:?}"
                            )))
                        }
                    };
                    Layer::Dense(DenseLayer::new(d, *out_features, &mut rng))
                }
                LayerSpec::Softmax => Layer::Softmax(SoftmaxLayer::default()),
                LayerSpec::Residual { kernel, out_channels } => {
                    let cin = *shape.last().unwrap();
                    Layer::Residual(ResidualLayer::new(*kernel, cin, *out_channels, &mut rng))
                }
                };
            layer_names.push(format!("layer{i:02}.{}", spec.tag()));
            layers.push(layer);
            shape = spec.output_shape(&shape)?;
        }
        Ok(Network { input_shape: input_shape.to_vec(), layers, layer_names })
    }

    /// Forward a batch, returning every layer's output (last entry is the
    /// network output). Batch shape is [N, ...input_shape].
    pub fn forward_all(
        &mut self,
        batch: &Tensor,
        mode: Mode,
        rng: &mut ChaCha20Rng,
    ) -> Result<Vec<Tensor>> {
        let mut outputs = Vec::with_capacity(self.layers.len());
        let mut current = batch.clone();
        for layer in &mut self.layers {
            current = match layer {
                Layer::Conv2d(l) => l.forward(&current)?,
                Layer::BatchNorm(l) => l.forward(&current, mode)?,
                Layer::Relu(l) => l.forward(&current),
                Layer::AvgPool(l) => l.forward(&current)?,
                Layer::GlobalAvgPool(l) => l.forward(&current)?,
                Layer::Dropout(l) => l.forward(&current, mode, rng),
                Layer::Dense(l) => l.forward(&current)?,
                Layer::Softmax(l) => l.forward(&current)?,
                Layer::Residual(l) => l.forward(&current)?,
            };
            outputs.push(current.clone());
        }
        Ok(outputs)
    }

    pub fn forward(&mut self, batch: &Tensor, mode: Mode, rng: &mut ChaCha20Rng) -> Result<Tensor> {
        Ok(self.forward_all(batch, mode, rng)?.pop().expect("network has layers"))
    }

    /// Backpropagate `grad_output`; `inject` adds an extra gradient at the
    /// output of the named layer index (the distillation tap).
    pub fn backward(
        &mut self,
        grad_output: &Tensor,
        inject: Option<(usize, &Tensor)>,
    ) -> Result<Tensor> {
        let mut grad = grad_output.clone();
        for i in (0..self.layers.len()).rev() {
            if let Some((idx, extra)) = inject {
                if idx == i {
                    if extra.shape != grad.shape {
                        return Err(Error::Shape(format!(
                            "injected gradient shape {:?} != activation shape {:?}",
                            extra.shape, grad.shape
                        )));
                    }
                    for (g, &e) in grad.data.iter_mut().zip(&extra.data) {
                        *g += e;
                    }
                }
            }
            grad = match &mut self.layers[i] {
                Layer::Conv2d(l) => l.backward(&grad)?,
                Layer::BatchNorm(l) => l.backward(&grad)?,
                Layer::Relu(l) => l.backward(&grad)?,
                Layer::AvgPool(l) => l.backward(&grad)?,
                Layer::GlobalAvgPool(l) => l.backward(&grad)?,
                Layer::Dropout(l) => Ok::<_, Error>(l.backward(&grad))?,
                Layer::Dense(l) => l.backward(&grad)?,
                Layer::Softmax(l) => l.backward(&grad)?,
                Layer::Residual(l) => l.backward(&grad)?,
            };
        }
        Ok(grad)
    }

    /// Visit every trainable parameter with its gradient, in a fixed order.
    pub fn visit_params(&mut self, f: &mut dyn FnMut(&str, &mut Tensor, &mut Tensor)) {
        for (layer, name) in self.layers.iter_mut().zip(&self.layer_names) {
            match layer {
                Layer::Conv2d(l) => {
                    f(&format!("{name}.weights"), &mut l.weights, &mut l.grad_weights);
                    f(&format!("{name}.bias"), &mut l.bias, &mut l.grad_bias);
                }
                Layer::Dense(l) => {
                    f(&format!("{name}.weights"), &mut l.weights, &mut l.grad_weights);
                    f(&format!("{name}.bias"), &mut l.bias, &mut l.grad_bias);
                }
                Layer::BatchNorm(l) => {
                    f(&format!("{name}.gamma"), &mut l.gamma, &mut l.grad_gamma);
                    f(&format!("{name}.beta"), &mut l.beta, &mut l.grad_beta);
                }
                Layer::Residual(l) => {
                    f(&format!("{name}.conv_a.weights"), &mut l.conv_a.weights, &mut l.conv_a.grad_weights);
                    f(&format!("{name}.conv_a.bias"), &mut l.conv_a.bias, &mut l.conv_a.grad_bias);
                    f(&format!("{name}.conv_b.weights"), &mut l.conv_b.weights, &mut l.conv_b.grad_weights);
                    f(&format!("{name}.conv_b.bias"), &mut l.conv_b.bias, &mut l.conv_b.grad_bias);
                    if let Some(p) = &mut l.projection {
                        f(&format!("{name}.projection.weights"), &mut p.weights, &mut p.grad_weights);
                        f(&format!("{name}.projection.bias"), &mut p.bias, &mut p.grad_bias);
                    }
                }
                _ => {}
            }
        }
    }

    /// Visit the full persistent state: trainable parameters plus batchnorm
    /// running statistics, in checkpoint order.
    pub fn visit_state(&mut self, f: &mut dyn FnMut(&str, &mut Tensor)) {
        for i in 0..self.layers.len() {
            let name = self.layer_names[i].clone();
            match &mut self.layers[i] {
                Layer::Conv2d(l) => {
                    f(&format!("{name}.weights"), &mut l.weights);
                    f(&format!("{name}.bias"), &mut l.bias);
                }
                Layer::Dense(l) => {
                    f(&format!("{name}.weights"), &mut l.weights);
                    f(&format!("{name}.bias"), &mut l.bias);
                }
                Layer::BatchNorm(l) => {
                    f(&format!("{name}.gamma"), &mut l.gamma);
                    f(&format!("{name}.beta"), &mut l.beta);
                    f(&format!("{name}.running_mean"), &mut l.running_mean);
                    f(&format!("{name}.running_var"), &mut l.running_var);
                }
                Layer::Residual(l) => {
                    f(&format!("{name}.conv_a.weights"), &mut l.conv_a.weights);
                    f(&format!("{name}.conv_a.bias"), &mut l.conv_a.bias);
                    f(&format!("{name}.conv_b.weights"), &mut l.conv_b.weights);
                    f(&format!("{name}.conv_b.bias"), &mut l.conv_b.bias);
                    if let Some(p) = &mut l.projection {
                        f(&format!("{name}.projection.weights"), &mut p.weights);
                        f(&format!("{name}.projection.bias"), &mut p.bias);
                    }
                }
                _ => {}
            }
        }
    }

    /// Mark every batchnorm layer's running statistics as initialized, for
    /// networks restored from a checkpoint.
    pub fn mark_bn_initialized(&mut self) {
        for layer in &mut self.layers {
            if let Layer::BatchNorm(l) = layer {
                l.initialized = true;
            }
        }
    }
}

