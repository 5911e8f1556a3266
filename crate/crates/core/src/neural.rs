//! Dense feedforward network with rectifier hidden layers, reverse-mode
//! gradients and an adaptive-moment optimizer.
//!
//! Batches are row-major: one sample per row.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NeuralError {
    #[error("shape mismatch: expected {expected}, got {found}")]
    Shape { expected: String, found: String },
    #[error("backward called without a preceding forward pass")]
    StaleCache,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

fn shape_err(expected: impl ToString, found: impl ToString) -> NeuralError {
    NeuralError::Shape {
        expected: expected.to_string(),
        found: found.to_string(),
    }
}

/// Affine layer `y = x · W + b`, with `W` stored `inputs × outputs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    pub fn inputs(&self) -> usize {
        self.weights.nrows()
    }

    pub fn outputs(&self) -> usize {
        self.weights.ncols()
    }

    fn apply(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut z = x.dot(&self.weights);
        z += &self.bias;
        z
    }
}

/// Per-layer inputs and pre-activations of the last batch.
#[derive(Debug, Clone)]
struct Cache {
    inputs: Vec<Array2<f64>>,
    pre: Vec<Array2<f64>>,
}

#[derive(Debug, Clone)]
pub struct Network {
    layers: Vec<Dense>,
    cache: Option<Cache>,
}

impl PartialEq for Network {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers
    }
}

/// Gradient (or any other per-parameter quantity) shaped like a network.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Dense>,
}

impl Gradients {
    pub fn zeros_like(net: &Network) -> Self {
        Gradients {
            layers: net
                .layers
                .iter()
                .map(|l| Dense {
                    weights: Array2::zeros(l.weights.raw_dim()),
                    bias: Array1::zeros(l.bias.raw_dim()),
                })
                .collect(),
        }
    }

    pub fn flat(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied())
            .collect()
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weights += &b.weights;
            a.bias += &b.bias;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for l in &mut self.layers {
            l.weights *= factor;
            l.bias *= factor;
        }
    }

    pub fn norm(&self) -> f64 {
        self.layers
            .iter()
            .map(|l| {
                l.weights.iter().map(|v| v * v).sum::<f64>()
                    + l.bias.iter().map(|v| v * v).sum::<f64>()
            })
            .sum::<f64>()
            .sqrt()
    }
}

impl Network {
    /// Fan-in scaled uniform initialization for rectifier networks, zero biases.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "a network needs input and output sizes");
        let layers = sizes
            .windows(2)
            .map(|w| {
                let bound = (6.0 / w[0] as f64).sqrt();
                Dense {
                    weights: Array2::from_shape_fn((w[0], w[1]), |_| rng.gen_range(-bound..bound)),
                    bias: Array1::zeros(w[1]),
                }
            })
            .collect();
        Network {
            layers,
            cache: None,
        }
    }

    pub fn zeros(sizes: &[usize]) -> Self {
        Network {
            layers: sizes
                .windows(2)
                .map(|w| Dense {
                    weights: Array2::zeros((w[0], w[1])),
                    bias: Array1::zeros(w[1]),
                })
                .collect(),
            cache: None,
        }
    }

    pub fn from_layers(layers: Vec<Dense>) -> Result<Self, NeuralError> {
        for pair in layers.windows(2) {
            if pair[0].outputs() != pair[1].inputs() {
                return Err(shape_err(pair[0].outputs(), pair[1].inputs()));
            }
        }
        for l in &layers {
            if l.bias.len() != l.outputs() {
                return Err(shape_err(l.outputs(), l.bias.len()));
            }
        }
        Ok(Network {
            layers,
            cache: None,
        })
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        self.cache = None;
        &mut self.layers
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.layers[0].inputs()];
        sizes.extend(self.layers.iter().map(Dense::outputs));
        sizes
    }

    pub fn input_len(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn output_len(&self) -> usize {
        self.layers.last().expect("non-empty").outputs()
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    /// Multiplies the last layer's weights, e.g. to start a policy head
    /// near uniform.
    pub fn scale_output_layer(&mut self, factor: f64) {
        let last = self.layers.last_mut().expect("non-empty");
        last.weights *= factor;
    }

    pub fn params_flat(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied())
            .collect()
    }

    pub fn set_params_flat(&mut self, values: &[f64]) -> Result<(), NeuralError> {
        if values.len() != self.param_count() {
            return Err(shape_err(self.param_count(), values.len()));
        }
        let mut it = values.iter().copied();
        for l in &mut self.layers {
            for w in l.weights.iter_mut().chain(l.bias.iter_mut()) {
                *w = it.next().expect("length checked");
            }
        }
        self.cache = None;
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.params_flat().iter().all(|v| v.is_finite())
    }

    fn check_input(&self, cols: usize) -> Result<(), NeuralError> {
        if cols != self.input_len() {
            return Err(shape_err(self.input_len(), cols));
        }
        Ok(())
    }

    /// Batch inference without touching the cache.
    pub fn predict_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>, NeuralError> {
        self.check_input(x.ncols())?;
        let last = self.layers.len() - 1;
        let mut a = x.to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            a = layer.apply(a.view());
            if i < last {
                a.mapv_inplace(relu);
            }
        }
        Ok(a)
    }

    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>, NeuralError> {
        let x = ArrayView2::from_shape((1, x.len()), x).expect("contiguous");
        Ok(self.predict_batch(x)?.into_raw_vec_and_offset().0)
    }

    /// Batch forward pass that keeps the activations for [`Network::backward`].
    pub fn forward(&mut self, x: ArrayView2<f64>) -> Result<Array2<f64>, NeuralError> {
        self.check_input(x.ncols())?;
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut a = x.to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            let z = layer.apply(a.view());
            inputs.push(a);
            a = if i < last { z.mapv(relu) } else { z.clone() };
            pre.push(z);
        }
        self.cache = Some(Cache { inputs, pre });
        Ok(a)
    }

    /// Gradients of the loss with respect to every parameter, given the
    /// gradient with respect to the outputs of the last forward batch.
    pub fn backward(&mut self, grad_out: ArrayView2<f64>) -> Result<Gradients, NeuralError> {
        let cache = self.cache.take().ok_or(NeuralError::StaleCache)?;
        let batch = cache.inputs[0].nrows();
        if grad_out.dim() != (batch, self.output_len()) {
            return Err(shape_err(
                format!("{}x{}", batch, self.output_len()),
                format!("{}x{}", grad_out.nrows(), grad_out.ncols()),
            ));
        }
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut delta = grad_out.to_owned();
        for i in (0..self.layers.len()).rev() {
            if i + 1 < self.layers.len() {
                Zip::from(&mut delta)
                    .and(&cache.pre[i])
                    .for_each(|d, &z| {
                        if z <= 0.0 {
                            *d = 0.0;
                        }
                    });
            }
            let weights = cache.inputs[i].t().dot(&delta);
            let bias = delta.sum_axis(Axis(0));
            let next = if i > 0 {
                Some(delta.dot(&self.layers[i].weights.t()))
            } else {
                None
            };
            grads.push(Dense { weights, bias });
            if let Some(next) = next {
                delta = next;
            }
        }
        grads.reverse();
        Ok(Gradients { layers: grads })
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            sizes: self.sizes(),
            layers: self
                .layers
                .iter()
                .map(|l| LayerParams {
                    weights: l.weights.iter().copied().collect(),
                    bias: l.bias.to_vec(),
                })
                .collect(),
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self, NeuralError> {
        if ck.format != CHECKPOINT_FORMAT || ck.version != CHECKPOINT_VERSION {
            return Err(NeuralError::Checkpoint(format!(
                "unsupported format {} v{}",
                ck.format, ck.version
            )));
        }
        if ck.sizes.len() != ck.layers.len() + 1 || ck.sizes.len() < 2 {
            return Err(NeuralError::Checkpoint("layer count mismatch".into()));
        }
        let layers = ck
            .sizes
            .windows(2)
            .zip(&ck.layers)
            .map(|(w, l)| {
                let weights = Array2::from_shape_vec((w[0], w[1]), l.weights.clone())
                    .map_err(|e| NeuralError::Checkpoint(e.to_string()))?;
                if l.bias.len() != w[1] {
                    return Err(NeuralError::Checkpoint(format!(
                        "bias length {} for layer width {}",
                        l.bias.len(),
                        w[1]
                    )));
                }
                Ok(Dense {
                    weights,
                    bias: Array1::from(l.bias.clone()),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Network::from_layers(layers)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_checkpoint()).expect("checkpoint serializes")
    }

    /// Loads a checkpoint and insists on the given layer sizes.
    pub fn from_json(text: &str, expected_sizes: Option<&[usize]>) -> Result<Self, NeuralError> {
        let ck: Checkpoint =
            serde_json::from_str(text).map_err(|e| NeuralError::Checkpoint(e.to_string()))?;
        if let Some(sizes) = expected_sizes {
            if ck.sizes != sizes {
                return Err(shape_err(format!("{sizes:?}"), format!("{:?}", ck.sizes)));
            }
        }
        Network::from_checkpoint(&ck)
    }
}

fn relu(v: f64) -> f64 {
    v.max(0.0)
}

pub const CHECKPOINT_FORMAT: &str = "sortline-network";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    /// Row-major `inputs × outputs`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub sizes: Vec<usize>,
    pub layers: Vec<LayerParams>,
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    steps: u64,
    first: Gradients,
    second: Gradients,
}

impl Adam {
    pub fn new(net: &Network, lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            steps: 0,
            first: Gradients::zeros_like(net),
            second: Gradients::zeros_like(net),
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn step(&mut self, net: &mut Network, grads: &Gradients) -> Result<(), NeuralError> {
        if grads.layers.len() != net.layers.len()
            || grads
                .layers
                .iter()
                .zip(&net.layers)
                .any(|(g, l)| g.weights.dim() != l.weights.dim() || g.bias.dim() != l.bias.dim())
        {
            return Err(shape_err(
                format!("{:?}", net.sizes()),
                "gradient of a different architecture",
            ));
        }
        self.steps += 1;
        let t = self.steps as i32;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.epsilon);
        let step = self.lr * (1.0 - b2.powi(t)).sqrt() / (1.0 - b1.powi(t));
        let eps_hat = eps * (1.0 - b2.powi(t)).sqrt();
        for ((layer, g), (m, v)) in net
            .layers
            .iter_mut()
            .zip(&grads.layers)
            .zip(self.first.layers.iter_mut().zip(self.second.layers.iter_mut()))
        {
            update(&mut layer.weights, &g.weights, &mut m.weights, &mut v.weights, b1, b2, step, eps_hat);
            update(&mut layer.bias, &g.bias, &mut m.bias, &mut v.bias, b1, b2, step, eps_hat);
        }
        net.cache = None;
        Ok(())
    }
}

/// `θ -= lr · m̂ / (√v̂ + ε)`, written with the bias corrections folded into
/// the step size and epsilon.
#[allow(clippy::too_many_arguments)]
fn update<D: ndarray::Dimension>(
    param: &mut ndarray::Array<f64, D>,
    grad: &ndarray::Array<f64, D>,
    m: &mut ndarray::Array<f64, D>,
    v: &mut ndarray::Array<f64, D>,
    b1: f64,
    b2: f64,
    step: f64,
    eps_hat: f64,
) {
    Zip::from(param)
        .and(grad)
        .and(m)
        .and(v)
        .for_each(|p, &g, m, v| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            *p -= step * *m / (v.sqrt() + eps_hat);
        });
}

/// Finite-difference step used by [`grad_check`].
pub const GRAD_CHECK_STEP: f64 = 1e-5;
/// Gradients smaller than this are compared on an absolute scale.
pub const GRAD_CHECK_FLOOR: f64 = 1e-6;

/// Compares [`Network::backward`] against central differences over every
/// parameter and returns the worst relative error
/// `|a − n| / max(|a|, |n|, GRAD_CHECK_FLOOR)`.
///
/// `loss` maps the network output batch to `(loss, ∂loss/∂output)`.
pub fn grad_check<F>(net: &Network, input: ArrayView2<f64>, loss: F) -> Result<f64, NeuralError>
where
    F: Fn(ArrayView2<f64>) -> (f64, Array2<f64>),
{
    let mut work = net.clone();
    let out = work.forward(input)?;
    let (_, grad_out) = loss(out.view());
    let analytic = work.backward(grad_out.view())?;
    grad_check_against(net, input, &analytic, loss)
}

/// Same as [`grad_check`] but with externally supplied analytic gradients,
/// so a deliberately wrong backward pass can be fed in.
pub fn grad_check_against<F>(
    net: &Network,
    input: ArrayView2<f64>,
    analytic: &Gradients,
    loss: F,
) -> Result<f64, NeuralError>
where
    F: Fn(ArrayView2<f64>) -> (f64, Array2<f64>),
{
    let mut work = net.clone();
    work.forward(input)?;
    let cache = work.cache.take().expect("forward fills the cache");
    let h = GRAD_CHECK_STEP;
    let mut worst: f64 = 0.0;
    for (k, layer) in net.layers.iter().enumerate() {
        let rows = layer.inputs();
        for j in 0..layer.outputs() {
            // Row `rows` stands for the bias of unit j.
            for i in 0..=rows {
                let a = if i < rows {
                    analytic.layers[k].weights[[i, j]]
                } else {
                    analytic.layers[k].bias[j]
                };
                let plus = perturbed_loss(net, &cache, k, i, j, h, &loss);
                let minus = perturbed_loss(net, &cache, k, i, j, -h, &loss);
                let numeric = (plus - minus) / (2.0 * h);
                let denom = a.abs().max(numeric.abs()).max(GRAD_CHECK_FLOOR);
                worst = worst.max((a - numeric).abs() / denom);
            }
        }
    }
    Ok(worst)
}

/// Loss after nudging one parameter of layer `k` by `h`, recomputing only
/// what the nudge touches: one pre-activation column of layer `k`, a rank-one
/// correction of layer `k + 1`, and full passes after that.
fn perturbed_loss<F>(
    net: &Network,
    cache: &Cache,
    k: usize,
    i: usize,
    j: usize,
    h: f64,
    loss: &F,
) -> f64
where
    F: Fn(ArrayView2<f64>) -> (f64, Array2<f64>),
{
    let last = net.layers.len() - 1;
    let act = |z: f64, layer: usize| if layer < last { relu(z) } else { z };
    let x = &cache.inputs[k];
    let old_col = cache.pre[k].column(j);
    let new_col: Array1<f64> = if i < net.layers[k].inputs() {
        Zip::from(&old_col)
            .and(&x.column(i))
            .map_collect(|&z, &xi| z + h * xi)
    } else {
        old_col.mapv(|z| z + h)
    };
    if k == last {
        let mut out = cache.pre[k].clone();
        out.column_mut(j).assign(&new_col);
        return loss(out.view()).0;
    }
    let delta_a: Array1<f64> = Zip::from(&new_col)
        .and(&old_col)
        .map_collect(|&n, &o| act(n, k) - act(o, k));
    let w_row: ArrayView1<f64> = net.layers[k + 1].weights.row(j);
    let mut z = cache.pre[k + 1].clone();
    for (mut row, &d) in z.rows_mut().into_iter().zip(delta_a.iter()) {
        if d != 0.0 {
            row.scaled_add(d, &w_row);
        }
    }
    let mut a = if k + 1 < last { z.mapv(relu) } else { z };
    for (layer_idx, layer) in net.layers.iter().enumerate().skip(k + 2) {
        a = layer.apply(a.view());
        if layer_idx < last {
            a.mapv_inplace(relu);
        }
    }
    loss(a.view()).0
}
