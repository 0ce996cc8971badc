use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::batch::GraphBatch;
use super::network::{GsmNetwork, Mode};
use super::scaler::TargetScaler;
use crate::autodiff::{AdamConfig, AdamState, Matrix, Tape};
use crate::error::{Error, Result};
use crate::model::GraphSample;

const EVAL_CHUNK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 256,
            learning_rate: 1e-3,
            weight_decay: 1e-3,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Settings used when fine-tuning on the large bridge designs.
    pub fn bridge_overrides(self) -> Self {
        TrainConfig {
            batch_size: 128,
            learning_rate: 5e-4,
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning rate must be positive"));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::invalid("weight decay must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    /// Node-weighted mean of the train-mode batch losses.
    pub train_loss: f64,
    /// Eval-mode loss on the validation set; absent without validation data.
    pub val_loss: Option<f64>,
}

/// Scaled-target MSE per epoch.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LossHistory {
    /// Validation loss before the first update (after the scaler refit).
    pub initial_val_loss: Option<f64>,
    pub epochs: Vec<EpochLoss>,
}

impl LossHistory {
    pub fn final_train_loss(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.train_loss)
    }

    pub fn final_val_loss(&self) -> Option<f64> {
        self.epochs.last().and_then(|e| e.val_loss)
    }
}

fn scaled(samples: &[GraphSample], scaler: &TargetScaler) -> Result<Vec<GraphSample>> {
    samples
        .iter()
        .map(|s| s.with_targets(scaler.transform(s.targets())))
        .collect()
}

/// Eval-mode MSE of scaled predictions against (already scaled) targets.
pub(crate) fn eval_loss(net: &GsmNetwork, batches: &[GraphBatch]) -> Result<Option<f64>> {
    let mut sq = 0.0;
    let mut count = 0usize;
    for b in batches {
        let pred = net.predict_scaled(b)?;
        sq += ndarray::Zip::from(&pred)
            .and(b.targets())
            .fold(0.0, |acc, p, t| acc + (p - t) * (p - t));
        count += pred.len();
    }
    Ok((count > 0).then(|| sq / count as f64))
}

/// Mean scaled-target MSE of `net` on `samples` using its stored scaler.
pub fn evaluate_loss(net: &GsmNetwork, samples: &[GraphSample]) -> Result<Option<f64>> {
    let scaled = scaled(samples, net.scaler())?;
    let batches = make_batches(&scaled, EVAL_CHUNK)?;
    eval_loss(net, &batches)
}

fn make_batches(samples: &[GraphSample], size: usize) -> Result<Vec<GraphBatch>> {
    samples
        .chunks(size)
        .map(|c| GraphBatch::from_samples(&c.iter().collect::<Vec<_>>()))
        .collect()
}

/// Trains every parameter of `net` for `config.epochs` epochs.
///
/// The target scaler is refitted on `train_set`, the optimizer starts from a
/// fresh state, and the network after the final epoch is kept (no early
/// stopping). Each epoch shuffles the training graphs with the seeded RNG and
/// packs up to `batch_size` graphs per disjoint-union batch. After the last
/// epoch the batch-norm running statistics are recomputed over the training
/// set with the final parameters, and the last recorded validation loss is
/// measured with those statistics.
pub fn train(
    net: &mut GsmNetwork,
    train_set: &[GraphSample],
    val_set: &[GraphSample],
    config: &TrainConfig,
) -> Result<LossHistory> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    let scaler = TargetScaler::fit(train_set)?;
    net.set_scaler(scaler);
    let train_scaled = scaled(train_set, &scaler)?;
    let val_batches = make_batches(&scaled(val_set, &scaler)?, EVAL_CHUNK)?;

    let mut history = LossHistory {
        initial_val_loss: eval_loss(net, &val_batches)?,
        epochs: Vec::with_capacity(config.epochs),
    };
    let mut adam = AdamState::new(
        AdamConfig::new(config.learning_rate, config.weight_decay),
        net.parameters(),
    );
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..train_scaled.len()).collect();

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut weighted = 0.0;
        let mut nodes = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let refs: Vec<&GraphSample> = chunk.iter().map(|&i| &train_scaled[i]).collect();
            let batch = GraphBatch::from_samples(&refs)?;
            let loss = step(net, &mut adam, &batch)?;
            if !loss.is_finite() {
                return Err(Error::Diverged(format!("loss became {loss} in epoch {epoch}")));
            }
            weighted += loss * batch.node_count() as f64;
            nodes += batch.node_count();
        }
        let val_loss = eval_loss(net, &val_batches)?;
        if let Some(v) = val_loss.filter(|v| !v.is_finite()) {
            return Err(Error::Diverged(format!("validation loss became {v} in epoch {epoch}")));
        }
        let entry = EpochLoss {
            epoch,
            train_loss: weighted / nodes as f64,
            val_loss,
        };
        log::debug!("epoch {epoch}: train {:.4e} val {:?}", entry.train_loss, entry.val_loss);
        history.epochs.push(entry);
    }
    if config.epochs > 0 {
        net.refresh_batch_stats(&make_batches(&train_scaled, EVAL_CHUNK)?)?;
        if let Some(last) = history.epochs.last_mut() {
            last.val_loss = eval_loss(net, &val_batches)?;
        }
    }
    net.epochs_trained += config.epochs;
    Ok(history)
}

fn step(net: &mut GsmNetwork, adam: &mut AdamState, batch: &GraphBatch) -> Result<f64> {
    let mut tape = Tape::new();
    let pass = net.forward(&mut tape, batch, Mode::Train, true).map_err(diverged)?;
    let target = tape.leaf(batch.targets().clone(), false)?;
    let loss = tape.mse_loss(pass.output, target).map_err(diverged)?;
    let value = tape.value(loss)[[0, 0]];
    tape.backward(loss).map_err(diverged)?;
    let grads: Vec<Matrix> = pass
        .params
        .iter()
        .map(|&id| tape.take_grad(id).unwrap_or_else(|| Matrix::zeros(tape.shape(id))))
        .collect();
    let grad_refs: Vec<&Matrix> = grads.iter().collect();
    adam.step(&mut net.parameters_mut(), &grad_refs)?;
    net.apply_batch_stats(&pass.batch_stats)?;
    Ok(value)
}

fn diverged(e: Error) -> Error {
    match e {
        Error::NonFinite(op) => Error::Diverged(format!("non-finite values in {op}")),
        other => other,
    }
}

/// Continues training a pre-trained network on a target dataset: the scaler
/// is refitted on `target_train` and all parameters are updated with a fresh
/// optimizer for `config.epochs` epochs.
pub fn transfer(
    net: &mut GsmNetwork,
    target_train: &[GraphSample],
    target_val: &[GraphSample],
    config: &TrainConfig,
) -> Result<LossHistory> {
    if net.epochs_trained() == 0 {
        return Err(Error::invalid("transfer needs a pre-trained network"));
    }
    train(net, target_train, target_val, config)
}
