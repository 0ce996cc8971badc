//! Graph-based surrogate model: FeaStNet layers, network construction,
//! training, transfer and checkpointing.

mod batch;
mod checkpoint;
mod layers;
mod network;
mod scaler;
mod train;

pub use batch::GraphBatch;
pub use checkpoint::{
    from_bytes, load_checkpoint, load_checkpoint_for, save_checkpoint, to_bytes, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};
pub use layers::{BatchNorm, FeastConvLayer, Linear, BATCH_NORM_EPS, BATCH_NORM_MOMENTUM};
pub use network::{
    build_network, count_parameters, parameter_count_for, parse_architecture, ForwardPass, GsmNetwork, Layer,
    LayerSpec, Mode, ARCHITECTURE_A10, ARCHITECTURE_A11, ARCHITECTURE_A9, DEFAULT_ARCHITECTURE, DEFAULT_HEADS,
};
pub use scaler::TargetScaler;
pub use train::{evaluate_loss, train, transfer, EpochLoss, LossHistory, TrainConfig};

use crate::autodiff::{Matrix, Tape};
use crate::error::Result;

fn single_graph(features: &Matrix, edges: &[(usize, usize)]) -> Result<GraphBatch> {
    GraphBatch::from_graph(features, edges)
}

/// Applies one FeaStNet layer to a single graph. `edges` must contain a
/// self-loop for every node and be symmetric.
pub fn feast_conv(features: &Matrix, edges: &[(usize, usize)], layer: &FeastConvLayer) -> Result<Matrix> {
    let batch = single_graph(features, edges)?;
    let mut tape = Tape::new();
    let x = tape.leaf(features.clone(), false)?;
    let params = [&layer.weight, &layer.attention, &layer.attention_bias, &layer.bias]
        .into_iter()
        .map(|p| tape.leaf(p.clone(), false))
        .collect::<Result<Vec<_>>>()?;
    let out = layer.forward(&mut tape, x, &batch, &params)?;
    Ok(tape.value(out).clone())
}

/// Attention weights `q(i, j)` of a FeaStNet layer, one row per edge in
/// `edges` order, one column per head.
pub fn attention_weights(features: &Matrix, edges: &[(usize, usize)], layer: &FeastConvLayer) -> Result<Matrix> {
    let batch = single_graph(features, edges)?;
    let mut tape = Tape::new();
    let x = tape.leaf(features.clone(), false)?;
    let params = [&layer.weight, &layer.attention, &layer.attention_bias, &layer.bias]
        .into_iter()
        .map(|p| tape.leaf(p.clone(), false))
        .collect::<Result<Vec<_>>>()?;
    let q = layer.attention_weights(&mut tape, x, &batch, &params)?;
    Ok(tape.value(q).clone())
}
