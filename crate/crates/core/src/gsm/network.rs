use std::fmt;

use ndarray::Array1;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::batch::GraphBatch;
use super::layers::{BatchNorm, FeastConvLayer, Linear, BATCH_NORM_EPS};
use super::scaler::TargetScaler;
use crate::autodiff::{BatchStats, Matrix, Tape, TensorId};
use crate::error::{Error, Result};
use crate::model::{GraphSample, NODE_FEATURES};

/// Tuned architecture (10 weighted layers).
pub const DEFAULT_ARCHITECTURE: &str = "L16/C32/C64/C128/C256/C512/C256/C128/L64/L2";
pub const ARCHITECTURE_A9: &str = "L16/C32/C64/C128/C256/C256/C128/L64/L2";
pub const ARCHITECTURE_A10: &str = DEFAULT_ARCHITECTURE;
pub const ARCHITECTURE_A11: &str = "L16/C32/C64/C128/C256/C512/C512/C256/C128/L64/L2";
pub const DEFAULT_HEADS: usize = 8;

const PREDICT_CHUNK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerSpec {
    Linear(usize),
    Conv(usize),
}

impl LayerSpec {
    pub fn width(self) -> usize {
        match self {
            LayerSpec::Linear(w) | LayerSpec::Conv(w) => w,
        }
    }
}

/// Parses `(L|C)<width>` tokens joined by `/`. The last token must have width 2.
pub fn parse_architecture(arch: &str) -> Result<Vec<LayerSpec>> {
    let specs = arch
        .split('/')
        .map(|tok| {
            let tok = tok.trim();
            let width = tok
                .get(1..)
                .and_then(|w| w.parse::<usize>().ok())
                .filter(|w| *w > 0)
                .ok_or_else(|| Error::invalid(format!("malformed layer token {tok:?}")))?;
            match tok.as_bytes()[0] {
                b'L' => Ok(LayerSpec::Linear(width)),
                b'C' => Ok(LayerSpec::Conv(width)),
                _ => Err(Error::invalid(format!("malformed layer token {tok:?}"))),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    match specs.last() {
        Some(last) if last.width() == 2 => Ok(specs),
        _ => Err(Error::invalid(format!("architecture {arch:?} must end in a width-2 layer"))),
    }
}

/// Learnable parameters of a network, counted as
/// `Linear(i,o) = i·o + o`, `FeastConv(i,o,M) = i·M·o + i·M + M + o`,
/// `BatchNorm(w) = 2w` (scale and shift; running statistics are not counted).
pub fn parameter_count_for(arch: &str, heads: usize, in_features: usize) -> Result<usize> {
    let specs = parse_architecture(arch)?;
    let mut total = BatchNorm::parameter_count(in_features);
    let mut width = in_features;
    for (k, s) in specs.iter().enumerate() {
        let last = k + 1 == specs.len();
        total += match *s {
            LayerSpec::Linear(o) => Linear::parameter_count(width, o),
            LayerSpec::Conv(o) => {
                FeastConvLayer::parameter_count(width, o, heads)
                    + if last { 0 } else { BatchNorm::parameter_count(o) }
            }
        };
        width = s.width();
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Linear(Linear),
    FeastConv(FeastConvLayer),
    BatchNorm(BatchNorm),
    Relu,
}

impl Layer {
    fn parameters(&self) -> Vec<&Matrix> {
        match self {
            Layer::Linear(l) => vec![&l.weight, &l.bias],
            Layer::FeastConv(c) => vec![&c.weight, &c.attention, &c.attention_bias, &c.bias],
            Layer::BatchNorm(b) => vec![&b.scale, &b.shift],
            Layer::Relu => vec![],
        }
    }

    fn parameters_mut(&mut self) -> Vec<&mut Matrix> {
        match self {
            Layer::Linear(l) => vec![&mut l.weight, &mut l.bias],
            Layer::FeastConv(c) => vec![&mut c.weight, &mut c.attention, &mut c.attention_bias, &mut c.bias],
            Layer::BatchNorm(b) => vec![&mut b.scale, &mut b.shift],
            Layer::Relu => vec![],
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            Layer::Linear(_) => "linear",
            Layer::FeastConv(_) => "feast",
            Layer::BatchNorm(_) => "batchnorm",
            Layer::Relu => "relu",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics in batch norm.
    Train,
    /// Running statistics in batch norm.
    Eval,
}

/// Tensor handles produced by one forward pass.
#[derive(Debug)]
pub struct ForwardPass {
    pub output: TensorId,
    /// Parameter leaves in [`GsmNetwork::parameters`] order.
    pub params: Vec<TensorId>,
    /// One entry per batch-norm layer (train mode only).
    pub batch_stats: Vec<BatchStats>,
}

/// Graph-based surrogate: a chain of linear, FeaStNet and batch-norm layers
/// with ReLU activations, plus the target scaler fitted during training.
#[derive(Debug, Clone, PartialEq)]
pub struct GsmNetwork {
    pub(crate) architecture: String,
    pub(crate) heads: usize,
    pub(crate) in_features: usize,
    pub(crate) layers: Vec<Layer>,
    pub(crate) scaler: TargetScaler,
    pub(crate) seed: u64,
    pub(crate) epochs_trained: usize,
}

impl fmt::Display for GsmNetwork {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({} heads, {} parameters)", self.architecture, self.heads, self.parameter_count())
    }
}

/// Builds a freshly initialized network. Batch norm is inserted on the input
/// and after every hidden FeaStNet layer; every layer but the last is
/// followed by ReLU.
pub fn build_network(arch: &str, heads: usize, in_features: usize, seed: u64) -> Result<GsmNetwork> {
    let specs = parse_architecture(arch)?;
    if heads == 0 {
        return Err(Error::invalid("heads must be at least 1"));
    }
    if in_features == 0 {
        return Err(Error::invalid("in_features must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layers = vec![Layer::BatchNorm(BatchNorm::new(in_features))];
    let mut width = in_features;
    for (k, spec) in specs.iter().enumerate() {
        let last = k + 1 == specs.len();
        match *spec {
            LayerSpec::Linear(o) => layers.push(Layer::Linear(Linear::new(width, o, &mut rng))),
            LayerSpec::Conv(o) => {
                layers.push(Layer::FeastConv(FeastConvLayer::new(width, o, heads, &mut rng)?));
                if !last {
                    layers.push(Layer::BatchNorm(BatchNorm::new(o)));
                }
            }
        }
        if !last {
            layers.push(Layer::Relu);
        }
        width = spec.width();
    }
    Ok(GsmNetwork {
        architecture: arch.to_string(),
        heads,
        in_features,
        layers,
        scaler: TargetScaler::default(),
        seed,
        epochs_trained: 0,
    })
}

pub fn count_parameters(net: &GsmNetwork) -> usize {
    net.parameter_count()
}

impl GsmNetwork {
    pub fn with_default_features(arch: &str, heads: usize, seed: u64) -> Result<Self> {
        build_network(arch, heads, NODE_FEATURES, seed)
    }

    pub fn architecture(&self) -> &str {
        &self.architecture
    }

    pub fn heads(&self) -> usize {
        self.heads
    }

    pub fn in_features(&self) -> usize {
        self.in_features
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn scaler(&self) -> &TargetScaler {
        &self.scaler
    }

    pub fn set_scaler(&mut self, scaler: TargetScaler) {
        self.scaler = scaler;
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn epochs_trained(&self) -> usize {
        self.epochs_trained
    }

    /// Number of weighted (linear or FeaStNet) layers.
    pub fn weighted_layer_count(&self) -> usize {
        self.layers
            .iter()
            .filter(|l| matches!(l, Layer::Linear(_) | Layer::FeastConv(_)))
            .count()
    }

    pub fn parameter_count(&self) -> usize {
        self.parameters().iter().map(|p| p.len()).sum()
    }

    pub fn parameters(&self) -> Vec<&Matrix> {
        self.layers.iter().flat_map(Layer::parameters).collect()
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Matrix> {
        self.layers.iter_mut().flat_map(Layer::parameters_mut).collect()
    }

    /// Stable names matching [`GsmNetwork::parameters`] order.
    pub fn parameter_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            let fields: &[&str] = match layer {
                Layer::Linear(_) => &["weight", "bias"],
                Layer::FeastConv(_) => &["weight", "attention", "attention_bias", "bias"],
                Layer::BatchNorm(_) => &["scale", "shift"],
                Layer::Relu => &[],
            };
            names.extend(fields.iter().map(|f| format!("{i}.{}.{f}", layer.kind())));
        }
        names
    }

    pub fn forward(&self, tape: &mut Tape, batch: &GraphBatch, mode: Mode, track_grad: bool) -> Result<ForwardPass> {
        if batch.features().ncols() != self.in_features {
            return Err(Error::shape(format!(
                "network expects {} node features, got {}",
                self.in_features,
                batch.features().ncols()
            )));
        }
        let mut x = tape.leaf(batch.features().clone(), false)?;
        let mut params = Vec::new();
        let mut batch_stats = Vec::new();
        for layer in &self.layers {
            let ids = layer
                .parameters()
                .into_iter()
                .map(|p| tape.leaf(p.clone(), track_grad))
                .collect::<Result<Vec<_>>>()?;
            x = match layer {
                Layer::Linear(l) => l.forward(tape, x, &ids)?,
                Layer::FeastConv(c) => c.forward(tape, x, batch, &ids)?,
                Layer::BatchNorm(b) => match mode {
                    Mode::Train => {
                        let (y, stats) = tape.batch_norm_train(x, ids[0], ids[1], BATCH_NORM_EPS)?;
                        batch_stats.push(stats);
                        y
                    }
                    Mode::Eval => {
                        tape.batch_norm_eval(x, ids[0], ids[1], &b.running_mean, &b.running_var, BATCH_NORM_EPS)?
                    }
                },
                Layer::Relu => tape.relu(x)?,
            };
            params.extend(ids);
        }
        Ok(ForwardPass {
            output: x,
            params,
            batch_stats,
        })
    }

    /// Folds train-mode batch statistics into the running averages.
    pub fn apply_batch_stats(&mut self, stats: &[BatchStats]) -> Result<()> {
        let mut it = stats.iter();
        for layer in &mut self.layers {
            if let Layer::BatchNorm(b) = layer {
                let s = it
                    .next()
                    .ok_or_else(|| Error::shape("fewer batch statistics than batch-norm layers"))?;
                b.update_running(s);
            }
        }
        if it.next().is_some() {
            return Err(Error::shape("more batch statistics than batch-norm layers"));
        }
        Ok(())
    }

    /// Replaces the running statistics with statistics pooled over `batches`,
    /// each forwarded in train mode with the current parameters. Every chunk
    /// is normalized by its own statistics, as during training.
    pub fn refresh_batch_stats(&mut self, batches: &[GraphBatch]) -> Result<()> {
        let mut pooled: Vec<(Array1<f64>, Array1<f64>, usize)> = Vec::new();
        for batch in batches {
            let mut tape = Tape::new();
            let pass = self.forward(&mut tape, batch, Mode::Train, false)?;
            if pooled.is_empty() {
                pooled = pass
                    .batch_stats
                    .iter()
                    .map(|s| (Array1::zeros(s.mean.len()), Array1::zeros(s.mean.len()), 0))
                    .collect();
            }
            for ((sum, sq, n), s) in pooled.iter_mut().zip(&pass.batch_stats) {
                let w = s.count as f64;
                *sum += &(&s.mean * w);
                *sq += &((&s.var + &s.mean.mapv(|m| m * m)) * w);
                *n += s.count;
            }
        }
        let mut it = pooled.into_iter();
        for layer in &mut self.layers {
            if let Layer::BatchNorm(b) = layer {
                let Some((sum, sq, n)) = it.next() else { break };
                if n == 0 {
                    continue;
                }
                let count = n as f64;
                let mean = sum / count;
                let var = (sq / count - mean.mapv(|m| m * m)).mapv(|v| v.max(0.0));
                let unbias = if n > 1 { count / (count - 1.0) } else { 1.0 };
                b.running_var = var * unbias;
                b.running_mean = mean;
            }
        }
        Ok(())
    }

    /// Eval-mode output in scaled target units, one row per batch node.
    pub fn predict_scaled(&self, batch: &GraphBatch) -> Result<Matrix> {
        let mut tape = Tape::new();
        let pass = self.forward(&mut tape, batch, Mode::Eval, false)?;
        Ok(tape.value(pass.output).clone())
    }

    /// Displacements in metres, rows in input node order.
    pub fn predict(&self, sample: &GraphSample) -> Result<Matrix> {
        let batch = GraphBatch::from_samples(&[sample])?;
        Ok(self.scaler.inverse_transform(&self.predict_scaled(&batch)?))
    }

    /// Batched [`GsmNetwork::predict`].
    pub fn predict_many(&self, samples: &[GraphSample]) -> Result<Vec<Matrix>> {
        let mut out = Vec::with_capacity(samples.len());
        for chunk in samples.chunks(PREDICT_CHUNK) {
            let refs: Vec<&GraphSample> = chunk.iter().collect();
            let batch = GraphBatch::from_samples(&refs)?;
            let scaled = self.predict_scaled(&batch)?;
            out.extend(
                batch
                    .split_rows(&scaled)
                    .into_iter()
                    .map(|m| self.scaler.inverse_transform(&m)),
            );
        }
        Ok(out)
    }
}
