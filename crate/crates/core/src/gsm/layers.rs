use ndarray::Array1;
use rand::distributions::{Distribution, Uniform};
use rand::Rng;
use rand_distr::Normal;

use super::batch::GraphBatch;
use crate::autodiff::{BatchStats, Matrix, Tape, TensorId};
use crate::error::{Error, Result};

pub const BATCH_NORM_MOMENTUM: f64 = 0.1;
pub const BATCH_NORM_EPS: f64 = 1e-5;
const FEAST_INIT_STD: f64 = 0.1;

pub(crate) fn normal_matrix<R: Rng>(rows: usize, cols: usize, std: f64, rng: &mut R) -> Matrix {
    let dist = Normal::new(0.0, std).expect("finite standard deviation");
    Matrix::from_shape_simple_fn((rows, cols), || dist.sample(rng))
}

pub(crate) fn uniform_matrix<R: Rng>(rows: usize, cols: usize, bound: f64, rng: &mut R) -> Matrix {
    let dist = Uniform::new_inclusive(-bound, bound);
    Matrix::from_shape_simple_fn((rows, cols), || dist.sample(rng))
}

/// `y = x W + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Matrix,
    pub bias: Matrix,
}

impl Linear {
    pub fn new<R: Rng>(in_width: usize, out_width: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (in_width as f64).sqrt();
        Linear {
            weight: uniform_matrix(in_width, out_width, bound, rng),
            bias: uniform_matrix(1, out_width, bound, rng),
        }
    }

    pub fn in_width(&self) -> usize {
        self.weight.nrows()
    }

    pub fn out_width(&self) -> usize {
        self.weight.ncols()
    }

    pub fn parameter_count(in_width: usize, out_width: usize) -> usize {
        in_width * out_width + out_width
    }

    pub(crate) fn forward(&self, tape: &mut Tape, x: TensorId, params: &[TensorId]) -> Result<TensorId> {
        let xw = tape.matmul(x, params[0])?;
        tape.add(xw, params[1])
    }
}

/// FeaStNet graph convolution with translation-invariant attention.
///
/// For node `i` with neighborhood `N(i)` (which contains `i`):
///
/// ```text
/// y_i = b + 1/|N(i)| · Σ_{j∈N(i)} Σ_m q_m(i, j) · x_j W_m
/// q(i, j) = softmax_m( u_mᵀ (x_j − x_i) + c_m )
/// ```
///
/// `weight` stores the `M` head matrices side by side (`in × M·out`),
/// `attention` holds `u_m` as columns (`in × M`), `attention_bias` is `c`
/// (`1 × M`) and `bias` is `b` (`1 × out`).
#[derive(Debug, Clone, PartialEq)]
pub struct FeastConvLayer {
    pub weight: Matrix,
    pub attention: Matrix,
    pub attention_bias: Matrix,
    pub bias: Matrix,
    heads: usize,
}

impl FeastConvLayer {
    /// Every parameter is drawn from N(0, 0.1²).
    pub fn new<R: Rng>(in_width: usize, out_width: usize, heads: usize, rng: &mut R) -> Result<Self> {
        if heads == 0 {
            return Err(Error::invalid("FeaStNet layer needs at least one head"));
        }
        Ok(FeastConvLayer {
            weight: normal_matrix(in_width, heads * out_width, FEAST_INIT_STD, rng),
            attention: normal_matrix(in_width, heads, FEAST_INIT_STD, rng),
            attention_bias: normal_matrix(1, heads, FEAST_INIT_STD, rng),
            bias: normal_matrix(1, out_width, FEAST_INIT_STD, rng),
            heads,
        })
    }

    pub fn from_parts(weight: Matrix, attention: Matrix, attention_bias: Matrix, bias: Matrix) -> Result<Self> {
        let heads = attention.ncols();
        let in_width = weight.nrows();
        let out_width = bias.ncols();
        if heads == 0
            || attention.nrows() != in_width
            || attention_bias.dim() != (1, heads)
            || bias.nrows() != 1
            || weight.ncols() != heads * out_width
        {
            return Err(Error::shape(format!(
                "inconsistent FeaStNet parameters: W {:?}, u {:?}, c {:?}, b {:?}",
                weight.dim(),
                attention.dim(),
                attention_bias.dim(),
                bias.dim()
            )));
        }
        Ok(FeastConvLayer {
            weight,
            attention,
            attention_bias,
            bias,
            heads,
        })
    }

    pub fn heads(&self) -> usize {
        self.heads
    }

    pub fn in_width(&self) -> usize {
        self.weight.nrows()
    }

    pub fn out_width(&self) -> usize {
        self.bias.ncols()
    }

    pub fn parameter_count(in_width: usize, out_width: usize, heads: usize) -> usize {
        in_width * heads * out_width + in_width * heads + heads + out_width
    }

    /// Attention weights `q` (`E × M`) for the batch's edge list.
    pub(crate) fn attention_weights(
        &self,
        tape: &mut Tape,
        x: TensorId,
        batch: &GraphBatch,
        params: &[TensorId],
    ) -> Result<TensorId> {
        let scores = tape.matmul(x, params[1])?;
        let at_neighbor = tape.index_gather(scores, batch.neighbors())?;
        let at_center = tape.index_gather(scores, batch.centers())?;
        let diff = tape.sub(at_neighbor, at_center)?;
        let logits = tape.add(diff, params[2])?;
        tape.softmax(logits, 1)
    }

    pub(crate) fn forward(
        &self,
        tape: &mut Tape,
        x: TensorId,
        batch: &GraphBatch,
        params: &[TensorId],
    ) -> Result<TensorId> {
        if tape.shape(x).1 != self.in_width() {
            return Err(Error::shape(format!(
                "FeaStNet layer expects {} features, got {}",
                self.in_width(),
                tape.shape(x).1
            )));
        }
        let q = self.attention_weights(tape, x, batch, params)?;
        let projected = tape.matmul(x, params[0])?;
        let messages = tape.edge_mix(projected, q, batch.neighbors())?;
        let aggregated = tape.segment_mean(messages, batch.centers(), batch.node_count())?;
        tape.add(aggregated, params[3])
    }
}

/// Per-feature batch normalization with learnable scale and shift.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub scale: Matrix,
    pub shift: Matrix,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
}

impl BatchNorm {
    pub fn new(width: usize) -> Self {
        BatchNorm {
            scale: Matrix::ones((1, width)),
            shift: Matrix::zeros((1, width)),
            running_mean: Array1::zeros(width),
            running_var: Array1::ones(width),
        }
    }

    pub fn width(&self) -> usize {
        self.scale.ncols()
    }

    pub fn parameter_count(width: usize) -> usize {
        2 * width
    }

    /// Exponential moving average with momentum 0.1; the running variance
    /// uses the unbiased batch variance.
    pub fn update_running(&mut self, stats: &BatchStats) {
        let m = BATCH_NORM_MOMENTUM;
        let unbias = if stats.count > 1 {
            stats.count as f64 / (stats.count - 1) as f64
        } else {
            1.0
        };
        self.running_mean = &self.running_mean * (1.0 - m) + &stats.mean * m;
        self.running_var = &self.running_var * (1.0 - m) + &stats.var * (m * unbias);
    }
}
