//! Fully connected feature-mapping network with hand-written backpropagation.
//!
//! Hidden layers use ReLU, the output layer a sigmoid, so predictions live in
//! the same `(0, 1)` range as min-max normalized targets. All parameters sit in
//! one flat vector (per layer: row-major `out x in` weights, then biases), which
//! keeps the optimizers and the meta-learning code layout-agnostic.

mod optim;

use alloc::vec;
use alloc::vec::Vec;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;
use crate::matrix::{gemm, Matrix};
use crate::rng::{self, Domain};

pub use optim::{adam_step, sgd_step, AdamState};

/// Hidden widths of the full-size mapping network.
pub const FULL_HIDDEN: [usize; 4] = [512, 1024, 1024, 512];

/// `[input, hidden.., output]` with `input = output = feature_dim`.
pub fn layer_dims(feature_dim: usize, hidden: &[usize]) -> Vec<usize> {
    let mut dims = Vec::with_capacity(hidden.len() + 2);
    dims.push(feature_dim);
    dims.extend_from_slice(hidden);
    dims.push(feature_dim);
    dims
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OutputActivation {
    Sigmoid,
    /// Linear head; only used to probe the gradient code.
    Identity,
}

/// Anything the training regimes can optimize: a flat parameter vector plus
/// the mean squared batch loss and its gradient.
pub trait Model: Clone {
    fn parameters(&self) -> &[f64];
    fn parameters_mut(&mut self) -> &mut [f64];
    fn loss_and_gradient(&self, inputs: &Matrix, targets: &Matrix) -> Result<(f64, Gradients)>;

    fn loss(&self, inputs: &Matrix, targets: &Matrix) -> Result<f64> {
        self.loss_and_gradient(inputs, targets).map(|(l, _)| l)
    }
}

/// Gradient with the same flat layout as the parameters it belongs to.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients(pub Vec<f64>);

impl Gradients {
    pub fn zeros(len: usize) -> Self {
        Gradients(vec![0.0; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn accumulate(&mut self, other: &Gradients) -> Result<()> {
        Error::check_dim(self.len(), other.len())?;
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += b;
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    dims: Vec<usize>,
    params: Vec<f64>,
    output: OutputActivation,
}

impl NetworkParams {
    /// All-zero network. Every output is `sigmoid(0) = 0.5` with the default head.
    pub fn zeros(dims: &[usize], output: OutputActivation) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::config("layer dims need at least two positive entries"));
        }
        let count = dims.windows(2).map(|w| w[1] * w[0] + w[1]).sum();
        Ok(Self { dims: dims.to_vec(), params: vec![0.0; count], output })
    }

    pub fn from_parts(dims: &[usize], params: Vec<f64>, output: OutputActivation) -> Result<Self> {
        let mut net = Self::zeros(dims, output)?;
        Error::check_dim(net.params.len(), params.len())?;
        net.params = params;
        Ok(net)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn output_activation(&self) -> OutputActivation {
        self.output
    }

    pub fn with_output(mut self, output: OutputActivation) -> Self {
        self.output = output;
        self
    }

    /// Number of weight layers (`M - 1` for `M` layers counting the input).
    pub fn n_layers(&self) -> usize {
        self.dims.len() - 1
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    fn layer_offset(&self, m: usize) -> usize {
        self.dims[..=m].windows(2).map(|w| w[1] * w[0] + w[1]).sum()
    }

    /// Weights of layer `m` as a row-major `dims[m+1] x dims[m]` slice.
    pub fn weight(&self, m: usize) -> &[f64] {
        let off = self.layer_offset(m);
        &self.params[off..off + self.dims[m + 1] * self.dims[m]]
    }

    pub fn weight_mut(&mut self, m: usize) -> &mut [f64] {
        let off = self.layer_offset(m);
        let len = self.dims[m + 1] * self.dims[m];
        &mut self.params[off..off + len]
    }

    pub fn bias(&self, m: usize) -> &[f64] {
        let off = self.layer_offset(m) + self.dims[m + 1] * self.dims[m];
        &self.params[off..off + self.dims[m + 1]]
    }

    pub fn bias_mut(&mut self, m: usize) -> &mut [f64] {
        let off = self.layer_offset(m) + self.dims[m + 1] * self.dims[m];
        let len = self.dims[m + 1];
        &mut self.params[off..off + len]
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let input = Matrix::from_vec(1, x.len(), x.to_vec())?;
        Ok(self.forward_batch(&input)?.into_vec())
    }

    pub fn forward_batch(&self, inputs: &Matrix) -> Result<Matrix> {
        let mut acts = self.activations(inputs)?;
        Ok(acts.pop().expect("at least one layer"))
    }

    /// Smallest `|z|` over all hidden pre-activations for this batch.
    pub fn min_abs_preactivation(&self, inputs: &Matrix) -> Result<f64> {
        let mut min = f64::INFINITY;
        let mut a = inputs.clone();
        Error::check_dim(self.dims[0], a.cols())?;
        for m in 0..self.n_layers() - 1 {
            let z = self.affine(m, &a);
            min = z.as_slice().iter().fold(min, |acc, v| acc.min(v.abs()));
            a = z.map(|v| v.max(0.0));
        }
        Ok(min)
    }

    /// `a W_m^T + b_m` for a batch `a`.
    fn affine(&self, m: usize, a: &Matrix) -> Matrix {
        let (d_in, d_out) = (self.dims[m], self.dims[m + 1]);
        let batch = a.rows();
        let bias = self.bias(m);
        let mut z = Matrix::zeros(batch, d_out);
        for i in 0..batch {
            z.row_mut(i).copy_from_slice(bias);
        }
        gemm(
            batch,
            d_in,
            d_out,
            1.0,
            a.as_slice(),
            (d_in as isize, 1),
            self.weight(m),
            (1, d_in as isize),
            1.0,
            z.as_mut_slice(),
            (d_out as isize, 1),
        );
        z
    }

    /// Post-activation outputs of every layer, input first.
    fn activations(&self, inputs: &Matrix) -> Result<Vec<Matrix>> {
        Error::check_dim(self.dims[0], inputs.cols())?;
        let last = self.n_layers() - 1;
        let mut acts = Vec::with_capacity(self.dims.len());
        acts.push(inputs.clone());
        for m in 0..=last {
            let mut z = self.affine(m, &acts[m]);
            let zs = z.as_mut_slice();
            if m < last {
                zs.iter_mut().for_each(|v| *v = v.max(0.0));
            } else if self.output == OutputActivation::Sigmoid {
                zs.iter_mut().for_each(|v| *v = math::sigmoid(*v));
            }
            acts.push(z);
        }
        Ok(acts)
    }

    /// Batch loss and its exact gradient with respect to every weight and bias.
    /// The ReLU derivative at exactly zero is taken as 0.
    pub fn backward(&self, inputs: &Matrix, targets: &Matrix) -> Result<(f64, Gradients)> {
        if inputs.rows() == 0 {
            return Err(Error::Empty("training batch"));
        }
        Error::check_dim(inputs.rows(), targets.rows())?;
        Error::check_dim(*self.dims.last().expect("dims non-empty"), targets.cols())?;
        let acts = self.activations(inputs)?;
        let output = acts.last().expect("output layer");
        if !output.as_slice().iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("network activations"));
        }
        let loss = mse_loss(output, targets)?;
        let batch = inputs.rows();
        let scale = 2.0 / batch as f64;

        // dL/dz at the output layer
        let mut delta = Matrix::zeros(batch, targets.cols());
        for ((d, &y), &t) in delta.as_mut_slice().iter_mut().zip(output.as_slice()).zip(targets.as_slice()) {
            let dy = scale * (y - t);
            *d = match self.output {
                OutputActivation::Sigmoid => dy * y * (1.0 - y),
                OutputActivation::Identity => dy,
            };
        }

        let mut grads = Gradients::zeros(self.params.len());
        for m in (0..self.n_layers()).rev() {
            let (d_in, d_out) = (self.dims[m], self.dims[m + 1]);
            let off = self.layer_offset(m);
            let (gw, rest) = grads.0[off..].split_at_mut(d_out * d_in);
            // dW = delta^T a_prev
            gemm(
                d_out,
                batch,
                d_in,
                1.0,
                delta.as_slice(),
                (1, d_out as isize),
                acts[m].as_slice(),
                (d_in as isize, 1),
                0.0,
                gw,
                (d_in as isize, 1),
            );
            let gb = &mut rest[..d_out];
            for row in delta.row_iter() {
                for (g, &d) in gb.iter_mut().zip(row) {
                    *g += d;
                }
            }
            if m > 0 {
                // delta_prev = (delta W) masked by the ReLU of the previous layer
                let mut prev = Matrix::zeros(batch, d_in);
                gemm(
                    batch,
                    d_out,
                    d_in,
                    1.0,
                    delta.as_slice(),
                    (d_out as isize, 1),
                    self.weight(m),
                    (d_in as isize, 1),
                    0.0,
                    prev.as_mut_slice(),
                    (d_in as isize, 1),
                );
                for (p, &a) in prev.as_mut_slice().iter_mut().zip(acts[m].as_slice()) {
                    if a <= 0.0 {
                        *p = 0.0;
                    }
                }
                delta = prev;
            }
        }
        Ok((loss, grads))
    }
}

impl Model for NetworkParams {
    fn parameters(&self) -> &[f64] {
        &self.params
    }

    fn parameters_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn loss_and_gradient(&self, inputs: &Matrix, targets: &Matrix) -> Result<(f64, Gradients)> {
        self.backward(inputs, targets)
    }

    fn loss(&self, inputs: &Matrix, targets: &Matrix) -> Result<f64> {
        mse_loss(&self.forward_batch(inputs)?, targets)
    }
}

/// He-initialized network: weights `N(0, 2 / fan_in)`, zero biases, sigmoid head.
pub fn init_network(dims: &[usize], seed: u64) -> Result<NetworkParams> {
    let mut net = NetworkParams::zeros(dims, OutputActivation::Sigmoid)?;
    for m in 0..net.n_layers() {
        let fan_in = dims[m] as f64;
        let normal = Normal::new(0.0, math::sqrt(2.0 / fan_in)).map_err(|_| Error::config("bad fan-in"))?;
        let mut rng = rng::stream(seed, Domain::NetworkInit, m as u64);
        for w in net.weight_mut(m) {
            *w = normal.sample(&mut rng);
        }
    }
    Ok(net)
}

/// `(1/B) sum_i ||y_i - t_i||^2`: squared norms averaged over the batch only.
pub fn mse_loss(outputs: &Matrix, targets: &Matrix) -> Result<f64> {
    if outputs.rows() == 0 {
        return Err(Error::Empty("loss batch"));
    }
    Error::check_dim(outputs.rows(), targets.rows())?;
    Error::check_dim(outputs.cols(), targets.cols())?;
    let total: f64 = outputs.as_slice().iter().zip(targets.as_slice()).map(|(y, t)| (y - t) * (y - t)).sum();
    Ok(total / outputs.rows() as f64)
}
