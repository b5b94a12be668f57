//! Minimal feed-forward network engine: dense layers, activations, SGD.
//!
//! The engine is deliberately small: fixed MLP topology, f64 everywhere,
//! plain SGD, reverse-mode gradients through cached forward state. Reduction
//! order is fixed, so identical seeds and inputs give bit-identical
//! parameters.

mod gradcheck;
mod loss;

pub use gradcheck::{finite_diff_check, max_rel_err, GradCheckReport};
pub use loss::{argmax_row, cross_entropy_loss, mse_loss, softmax_rows};

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

/// Element-wise activation applied after a dense layer's affine transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
    Identity,
}

impl Activation {
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
            Activation::Identity => z,
        }
    }

    /// Derivative with respect to the pre-activation `z`.
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => {
                let s = 1.0 / (1.0 + (-z).exp());
                s * (1.0 - s)
            }
            Activation::Identity => 1.0,
        }
    }

    /// Stable byte tag used by the checkpoint format.
    pub fn tag(self) -> u8 {
        match self {
            Activation::Relu => 0,
            Activation::Sigmoid => 1,
            Activation::Identity => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(Activation::Relu),
            1 => Ok(Activation::Sigmoid),
            2 => Ok(Activation::Identity),
            other => Err(Error::Parameter(format!("unknown activation tag {}", other))),
        }
    }
}

/// Hyperparameters for a plain-SGD training run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgdConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub rng_seed: u64,
}

impl SgdConfig {
    pub fn new(learning_rate: f64, batch_size: usize, epochs: usize, rng_seed: u64) -> Result<Self> {
        if !(learning_rate.is_finite() && learning_rate > 0.0) {
            return Err(Error::Parameter(format!(
                "learning rate must be positive and finite, got {}",
                learning_rate
            )));
        }
        if batch_size == 0 {
            return Err(Error::Parameter("batch size must be at least 1".into()));
        }
        if epochs == 0 {
            return Err(Error::Parameter("epoch count must be at least 1".into()));
        }
        Ok(SgdConfig { learning_rate, batch_size, epochs, rng_seed })
    }

    /// Same hyperparameters under a different seed.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng_seed = seed;
        self
    }
}

/// One dense layer: `y = activation(W x + b)` with `W` of shape `[out, in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub(crate) weights: Tensor,
    pub(crate) bias: Tensor,
    pub(crate) activation: Activation,
    in_dim: usize,
    out_dim: usize,
}

impl DenseLayer {
    /// Xavier-uniform weights in `[-sqrt(6/(in+out)), +sqrt(6/(in+out))]`,
    /// zero biases.
    pub fn init(in_dim: usize, out_dim: usize, activation: Activation, rng: &mut Rng) -> Self {
        let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let data: Vec<f64> = (0..in_dim * out_dim)
            .map(|_| rng.random_range(-limit..=limit))
            .collect();
        let weights = Tensor::new(vec![out_dim, in_dim], data).expect("consistent dims");
        DenseLayer {
            weights,
            bias: Tensor::zeros(vec![out_dim]),
            activation,
            in_dim,
            out_dim,
        }
    }

    /// Builds a layer from explicit parameters (checkpoint loading, tests).
    pub fn from_parts(weights: Tensor, bias: Tensor, activation: Activation) -> Result<Self> {
        if weights.shape().len() != 2 {
            return Err(Error::dimension("DenseLayer", "weights must be 2-D [out, in]"));
        }
        let out_dim = weights.shape()[0];
        let in_dim = weights.shape()[1];
        if bias.len() != out_dim {
            return Err(Error::dimension(
                "DenseLayer",
                format!("bias has {} elements, expected {}", bias.len(), out_dim),
            ));
        }
        Ok(DenseLayer { weights, bias, activation, in_dim, out_dim })
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn weights(&self) -> &Tensor {
        &self.weights
    }

    pub fn bias(&self) -> &Tensor {
        &self.bias
    }

    /// Pre-activations `z = x W^T + b` for a row-major batch `x` of shape
    /// `[B, in]`; output is `[B, out]`.
    fn pre_activations(&self, batch: &Tensor) -> Tensor {
        let b = batch.rows();
        let mut z = vec![0.0; b * self.out_dim];
        let w = self.weights.data();
        let bias = self.bias.data();
        for r in 0..b {
            let x = batch.row(r);
            let zr = &mut z[r * self.out_dim..(r + 1) * self.out_dim];
            for (o, zo) in zr.iter_mut().enumerate() {
                let wrow = &w[o * self.in_dim..(o + 1) * self.in_dim];
                let mut acc = bias[o];
                for (wi, xi) in wrow.iter().zip(x) {
                    acc += wi * xi;
                }
                *zo = acc;
            }
        }
        Tensor::new(vec![b, self.out_dim], z).expect("consistent dims")
    }

    fn activate(&self, z: &Tensor) -> Tensor {
        let data = z.data().iter().map(|&v| self.activation.apply(v)).collect();
        Tensor::new(z.shape().to_vec(), data).expect("same shape")
    }
}

/// Cached forward state needed by `backward`.
#[derive(Debug, Clone)]
struct ForwardCache {
    /// Input to each layer; `layer_inputs[0]` is the batch itself.
    layer_inputs: Vec<Tensor>,
    /// Pre-activations of each layer.
    pre_activations: Vec<Tensor>,
}

/// A feed-forward network: an ordered stack of dense layers whose
/// dimensions chain.
#[derive(Debug, Clone)]
pub struct Mlp {
    layers: Vec<DenseLayer>,
    cache: Option<ForwardCache>,
}

impl Mlp {
    /// Builds an MLP with the given layer widths; `dims` has one more entry
    /// than `activations`.
    pub fn new(dims: &[usize], activations: &[Activation], rng: &mut Rng) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::Parameter("an MLP needs at least one layer".into()));
        }
        if activations.len() != dims.len() - 1 {
            return Err(Error::Parameter(format!(
                "{} layer dims require {} activations, got {}",
                dims.len(),
                dims.len() - 1,
                activations.len()
            )));
        }
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::Parameter("layer dims must be positive".into()));
        }
        let layers = dims
            .windows(2)
            .zip(activations)
            .map(|(pair, &act)| DenseLayer::init(pair[0], pair[1], act, rng))
            .collect();
        Ok(Mlp { layers, cache: None })
    }

    /// Assembles an MLP from pre-built layers, checking that dims chain.
    pub fn from_layers(layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Parameter("an MLP needs at least one layer".into()));
        }
        for i in 1..layers.len() {
            if layers[i].in_dim != layers[i - 1].out_dim {
                return Err(Error::dimension(
                    "Mlp::from_layers",
                    format!(
                        "layer {} expects {} inputs but layer {} produces {}",
                        i,
                        layers[i].in_dim,
                        i - 1,
                        layers[i - 1].out_dim
                    ),
                ));
            }
        }
        Ok(Mlp { layers, cache: None })
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").out_dim
    }

    /// Total parameter count (weights + biases).
    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    fn check_input(&self, batch: &Tensor) -> Result<()> {
        if batch.cols() != self.input_dim() {
            return Err(Error::dimension(
                "layer 0",
                format!("batch has {} columns, layer expects {}", batch.cols(), self.input_dim()),
            ));
        }
        Ok(())
    }

    fn run_forward(&self, batch: &Tensor) -> Result<(ForwardCache, Tensor)> {
        self.check_input(batch)?;
        let mut layer_inputs = Vec::with_capacity(self.layers.len());
        let mut pre_activations = Vec::with_capacity(self.layers.len());
        let mut current = batch.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let z = layer.pre_activations(&current);
            z.check_finite(&format!("layer {} pre-activation", i))?;
            let a = layer.activate(&z);
            a.check_finite(&format!("layer {} activation", i))?;
            layer_inputs.push(current);
            pre_activations.push(z);
            current = a;
        }
        Ok((ForwardCache { layer_inputs, pre_activations }, current))
    }

    /// Forward pass that caches per-layer state for a following `backward`.
    pub fn forward(&mut self, batch: &Tensor) -> Result<Tensor> {
        let (cache, out) = self.run_forward(batch)?;
        self.cache = Some(cache);
        Ok(out)
    }

    /// Forward pass without touching cached state; for evaluation.
    pub fn predict(&self, batch: &Tensor) -> Result<Tensor> {
        let (_, out) = self.run_forward(batch)?;
        Ok(out)
    }

    /// Reverse-mode pass. Consumes the cache from the last `forward`, fills
    /// every layer's weight/bias gradients, and returns the gradient with
    /// respect to the batch input.
    pub fn backward(&mut self, out_grad: &Tensor) -> Result<Tensor> {
        let cache = self
            .cache
            .take()
            .ok_or_else(|| Error::State("backward called without a preceding forward".into()))?;
        let last = self.layers.len() - 1;
        if out_grad.rows() != cache.pre_activations[last].rows()
            || out_grad.cols() != self.layers[last].out_dim
        {
            return Err(Error::dimension(
                "Mlp::backward",
                format!(
                    "out_grad shape {:?} does not match output [{}, {}]",
                    out_grad.shape(),
                    cache.pre_activations[last].rows(),
                    self.layers[last].out_dim
                ),
            ));
        }

        let mut upstream = out_grad.clone();
        for i in (0..self.layers.len()).rev() {
            let layer = &mut self.layers[i];
            let x = &cache.layer_inputs[i];
            let z = &cache.pre_activations[i];
            let b = x.rows();
            let (in_dim, out_dim) = (layer.in_dim, layer.out_dim);

            // dz = upstream ⊙ act'(z)
            let mut dz = vec![0.0; b * out_dim];
            for (idx, d) in dz.iter_mut().enumerate() {
                *d = upstream.data()[idx] * layer.activation.derivative(z.data()[idx]);
            }

            // dW = dz^T x, db = column sums of dz, dx = dz W
            let wgrad = layer.weights.grad_mut();
            wgrad.fill(0.0);
            for r in 0..b {
                let xr = x.row(r);
                let dzr = &dz[r * out_dim..(r + 1) * out_dim];
                for (o, &d) in dzr.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    let grow = &mut wgrad[o * in_dim..(o + 1) * in_dim];
                    for (g, xi) in grow.iter_mut().zip(xr) {
                        *g += d * xi;
                    }
                }
            }
            let bgrad = layer.bias.grad_mut();
            bgrad.fill(0.0);
            for r in 0..b {
                let dzr = &dz[r * out_dim..(r + 1) * out_dim];
                for (g, &d) in bgrad.iter_mut().zip(dzr) {
                    *g += d;
                }
            }

            let w = layer.weights.data();
            let mut dx = vec![0.0; b * in_dim];
            for r in 0..b {
                let dzr = &dz[r * out_dim..(r + 1) * out_dim];
                let dxr = &mut dx[r * in_dim..(r + 1) * in_dim];
                for (o, &d) in dzr.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    let wrow = &w[o * in_dim..(o + 1) * in_dim];
                    for (dxi, wi) in dxr.iter_mut().zip(wrow) {
                        *dxi += d * wi;
                    }
                }
            }
            upstream = Tensor::new(vec![b, in_dim], dx).expect("consistent dims");
        }
        Ok(upstream)
    }

    /// Plain SGD update `θ ← θ − η g` over every parameter, then clears the
    /// gradient buffers.
    pub fn sgd_step(&mut self, learning_rate: f64) -> Result<()> {
        for (i, layer) in self.layers.iter_mut().enumerate() {
            for tensor in [&mut layer.weights, &mut layer.bias] {
                let grad = tensor
                    .grad()
                    .ok_or_else(|| {
                        Error::State(format!("sgd_step on layer {} without gradients", i))
                    })?
                    .to_vec();
                for (p, g) in tensor.data_mut().iter_mut().zip(&grad) {
                    *p -= learning_rate * g;
                }
                tensor.clear_grad();
            }
        }
        Ok(())
    }

    /// Clears any cached forward state and gradient buffers.
    pub fn reset_training_state(&mut self) {
        self.cache = None;
        for layer in &mut self.layers {
            layer.weights.clear_grad();
            layer.bias.clear_grad();
        }
    }
}

#[cfg(test)]
mod tests;
