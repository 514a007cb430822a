use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rules::Lottery;
use crate::seed::{rng_for, STREAM_INIT};

pub const HIDDEN_WIDTH: usize = 120;
pub const HIDDEN_LAYERS: usize = 5;

/// Affine layer `z = W a + b` with `W` stored row-major as `(out_dim, in_dim)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Dense {
            in_dim,
            out_dim,
            weights: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
        }
    }

    fn num_params(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    fn check_shape(&self) -> Result<()> {
        if self.in_dim == 0 || self.out_dim == 0 {
            return Err(Error::Format("layer with a zero dimension".into()));
        }
        if self.weights.len() != self.in_dim * self.out_dim || self.bias.len() != self.out_dim {
            return Err(Error::Format(format!(
                "layer {}x{} has {} weights and {} biases",
                self.out_dim,
                self.in_dim,
                self.weights.len(),
                self.bias.len()
            )));
        }
        Ok(())
    }
}

/// Parameters laid out exactly like the model's, one [`Dense`] per layer.
/// Used for gradients and optimizer moments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gradients {
    pub layers: Vec<Dense>,
}

impl Gradients {
    pub fn zeros_like(model: &MlpModel) -> Self {
        Gradients {
            layers: model
                .layers
                .iter()
                .map(|l| Dense::zeros(l.in_dim, l.out_dim))
                .collect(),
        }
    }

    pub fn fill_zero(&mut self) {
        for l in &mut self.layers {
            l.weights.fill(0.0);
            l.bias.fill(0.0);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for l in &mut self.layers {
            l.weights.iter_mut().for_each(|w| *w *= factor);
            l.bias.iter_mut().for_each(|b| *b *= factor);
        }
    }

    pub fn get(&self, index: usize) -> f64 {
        *flat_ref(&self.layers, index)
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied())
    }
}

fn flat_ref(layers: &[Dense], mut index: usize) -> &f64 {
    for l in layers {
        if index < l.weights.len() {
            return &l.weights[index];
        }
        index -= l.weights.len();
        if index < l.bias.len() {
            return &l.bias[index];
        }
        index -= l.bias.len();
    }
    panic!("parameter index out of range");
}

fn flat_mut(layers: &mut [Dense], mut index: usize) -> &mut f64 {
    for l in layers {
        if index < l.weights.len() {
            return &mut l.weights[index];
        }
        index -= l.weights.len();
        if index < l.bias.len() {
            return &mut l.bias[index];
        }
        index -= l.bias.len();
    }
    panic!("parameter index out of range");
}

/// Activations retained by a forward pass over a batch of `rows` inputs.
#[derive(Clone, Debug, Default)]
pub struct ForwardCache {
    rows: usize,
    /// Input to each layer: the batch itself, then post-ReLU hidden activations.
    inputs: Vec<Vec<f64>>,
    /// Pre-activation of each layer (the last one holds the logits).
    pre_activations: Vec<Vec<f64>>,
    output: Vec<f64>,
}

impl ForwardCache {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0
    }

    /// Softmax outputs, `rows x output_dim` row-major.
    pub fn output(&self) -> &[f64] {
        &self.output
    }

    pub fn output_row(&self, row: usize) -> &[f64] {
        let m = self.output.len() / self.rows;
        &self.output[row * m..(row + 1) * m]
    }

    pub fn pre_activations(&self) -> &[Vec<f64>] {
        &self.pre_activations
    }
}

/// Fully connected ReLU network with a softmax output.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpModel {
    layers: Vec<Dense>,
}

impl MlpModel {
    /// He-uniform weights, zero biases. `layer_dims` lists every layer width
    /// including input and output.
    pub fn new(layer_dims: &[usize], seed: u64) -> Result<Self> {
        if layer_dims.len() < 2 || layer_dims.contains(&0) {
            return Err(Error::InvalidDimension(format!(
                "bad layer dimensions {layer_dims:?}"
            )));
        }
        let mut rng = rng_for(seed, STREAM_INIT);
        let layers = layer_dims
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / fan_in as f64).sqrt();
                let mut layer = Dense::zeros(fan_in, fan_out);
                for v in &mut layer.weights {
                    *v = rng.random_range(-limit..limit);
                }
                layer
            })
            .collect();
        Ok(MlpModel { layers })
    }

    /// Input `m*m`, five hidden layers of 120, output `m`.
    pub fn for_candidates(m: usize, seed: u64) -> Result<Self> {
        MlpModel::new(&standard_dims(m), seed)
    }

    pub fn zeros(layer_dims: &[usize]) -> Result<Self> {
        let mut model = MlpModel::new(layer_dims, 0)?;
        for l in &mut model.layers {
            l.weights.fill(0.0);
        }
        Ok(model)
    }

    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Format("model without layers".into()));
        }
        for l in &layers {
            l.check_shape()?;
        }
        for w in layers.windows(2) {
            if w[0].out_dim != w[1].in_dim {
                return Err(Error::Format(format!(
                    "layer output {} does not feed layer input {}",
                    w[0].out_dim, w[1].in_dim
                )));
            }
        }
        Ok(MlpModel { layers })
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn layer_dims(&self) -> Vec<usize> {
        std::iter::once(self.layers[0].in_dim)
            .chain(self.layers.iter().map(|l| l.out_dim))
            .collect()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(Dense::num_params).sum()
    }

    /// Flat parameter access in layer order, weights before biases.
    pub fn param(&self, index: usize) -> f64 {
        *flat_ref(&self.layers, index)
    }

    pub fn set_param(&mut self, index: usize, value: f64) {
        *flat_mut(&mut self.layers, index) = value;
    }

    pub fn forward(&self, x: &[f64]) -> Result<(Lottery, ForwardCache)> {
        let cache = self.forward_batch(x, 1)?;
        let lottery = Lottery::new(cache.output.clone())?;
        Ok((lottery, cache))
    }

    pub fn predict(&self, x: &[f64]) -> Result<Lottery> {
        self.forward(x).map(|(l, _)| l)
    }

    /// Forward pass over `rows` inputs stored row-major in `xs`.
    pub fn forward_batch(&self, xs: &[f64], rows: usize) -> Result<ForwardCache> {
        let input_dim = self.input_dim();
        if rows == 0 || xs.len() != rows * input_dim {
            return Err(Error::DimensionMismatch {
                expected: rows.max(1) * input_dim,
                got: xs.len(),
            });
        }
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre_activations = Vec::with_capacity(self.layers.len());
        inputs.push(xs.to_vec());
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = vec![0.0; rows * layer.out_dim];
            for row in z.chunks_exact_mut(layer.out_dim) {
                row.copy_from_slice(&layer.bias);
            }
            // z (rows x out) += a (rows x in) * W^T
            gemm(
                rows,
                layer.in_dim,
                layer.out_dim,
                &inputs[l],
                (layer.in_dim, 1),
                &layer.weights,
                (1, layer.in_dim),
                &mut z,
                (layer.out_dim, 1),
                1.0,
            );
            if l < last {
                inputs.push(z.iter().map(|&v| v.max(0.0)).collect());
            }
            pre_activations.push(z);
        }
        let mut output = pre_activations[last].clone();
        for row in output.chunks_exact_mut(self.output_dim()) {
            softmax_in_place(row);
        }
        Ok(ForwardCache {
            rows,
            inputs,
            pre_activations,
            output,
        })
    }

    /// Gradients of a scalar loss given `upstream = dL/d(output)` for every
    /// cached row.
    pub fn backward(&self, cache: &ForwardCache, upstream: &[f64]) -> Result<Gradients> {
        let mut grads = Gradients::zeros_like(self);
        self.accumulate_gradients(cache, upstream, &mut grads)?;
        Ok(grads)
    }

    /// Like [`MlpModel::backward`] but adds into existing gradients.
    pub fn accumulate_gradients(
        &self,
        cache: &ForwardCache,
        upstream: &[f64],
        grads: &mut Gradients,
    ) -> Result<()> {
        if cache.is_empty() || cache.pre_activations.len() != self.layers.len() {
            return Err(Error::MissingCache);
        }
        let rows = cache.rows;
        let m = self.output_dim();
        if upstream.len() != rows * m {
            return Err(Error::DimensionMismatch {
                expected: rows * m,
                got: upstream.len(),
            });
        }
        // Softmax Jacobian-vector product: dz = y * (g - <g, y>).
        let mut dz = vec![0.0; rows * m];
        for ((dz_row, g_row), y_row) in dz
            .chunks_exact_mut(m)
            .zip(upstream.chunks_exact(m))
            .zip(cache.output.chunks_exact(m))
        {
            let dot: f64 = g_row.iter().zip(y_row).map(|(g, y)| g * y).sum();
            for ((d, g), y) in dz_row.iter_mut().zip(g_row).zip(y_row) {
                *d = y * (g - dot);
            }
        }

        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let grad = &mut grads.layers[l];
            // dW (out x in) += dz^T (out x rows) * a (rows x in)
            gemm(
                layer.out_dim,
                rows,
                layer.in_dim,
                &dz,
                (1, layer.out_dim),
                &cache.inputs[l],
                (layer.in_dim, 1),
                &mut grad.weights,
                (layer.in_dim, 1),
                1.0,
            );
            for row in dz.chunks_exact(layer.out_dim) {
                for (b, d) in grad.bias.iter_mut().zip(row) {
                    *b += d;
                }
            }
            if l == 0 {
                break;
            }
            // da (rows x in) = dz (rows x out) * W (out x in), then the ReLU mask.
            let mut da = vec![0.0; rows * layer.in_dim];
            gemm(
                rows,
                layer.out_dim,
                layer.in_dim,
                &dz,
                (layer.out_dim, 1),
                &layer.weights,
                (layer.in_dim, 1),
                &mut da,
                (layer.in_dim, 1),
                0.0,
            );
            for (d, &z) in da.iter_mut().zip(&cache.pre_activations[l - 1]) {
                if z <= 0.0 {
                    *d = 0.0;
                }
            }
            dz = da;
        }
        Ok(())
    }
}

/// Layer widths of the standard architecture for `m` candidates.
pub fn standard_dims(m: usize) -> Vec<usize> {
    let mut dims = vec![m * m];
    dims.extend(std::iter::repeat_n(HIDDEN_WIDTH, HIDDEN_LAYERS));
    dims.push(m);
    dims
}

pub fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in row.iter_mut() {
        *v /= total;
    }
}

/// `c = a * b + beta * c` for `a: (m x k)`, `b: (k x n)`, `c: (m x n)` with
/// explicit (row, column) strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_strides: (usize, usize),
    b: &[f64],
    b_strides: (usize, usize),
    c: &mut [f64],
    c_strides: (usize, usize),
    beta: f64,
) {
    let extent = |rows: usize, cols: usize, (rs, cs): (usize, usize)| {
        (rows - 1) * rs + (cols - 1) * cs + 1
    };
    assert!(a.len() >= extent(m, k, a_strides));
    assert!(b.len() >= extent(k, n, b_strides));
    assert!(c.len() >= extent(m, n, c_strides));
    // SAFETY: the asserts above keep every strided access inside the slices,
    // and `c` is uniquely borrowed so it cannot alias `a` or `b`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            a_strides.0 as isize,
            a_strides.1 as isize,
            b.as_ptr(),
            b_strides.0 as isize,
            b_strides.1 as isize,
            beta,
            c.as_mut_ptr(),
            c_strides.0 as isize,
            c_strides.1 as isize,
        );
    }
}
