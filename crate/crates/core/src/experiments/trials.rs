use std::collections::{BTreeMap, BTreeSet, HashSet};

use rayon::prelude::*;

use super::report::{attach_deltas, DesignErrorRecord, HistoryRecord, ModelKind, ReportRow, TrialReport};
use super::spec::{TrialId, TrialSpec};
use super::{dataset_mae, per_design_mae};
use crate::designgen::{filter_against_reference, filter_worst, generate_dataset, split, Dataset, DesignModel, Split};
use crate::error::{Error, Result};
use crate::gsm::{build_network, train, transfer, GsmNetwork, LossHistory};
use crate::model::{GraphSample, NODE_FEATURES};
use crate::pointwise::{fit_pointwise, MeanBaseline};

/// Generation seed of a design model's dataset, decorrelated across models
/// and roles.
fn dataset_seed(data_seed: u64, model: &str, role: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in model.bytes().chain([b'/']).chain(role.bytes()) {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h ^ data_seed.wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

fn generate_filtered(spec: &TrialSpec, name: &str, n: usize, role: &str) -> Result<Dataset> {
    let model = DesignModel::by_name(name)?;
    let (data, summary) = generate_dataset(&model, n, dataset_seed(spec.data_seed, name, role), spec.element_kind)?;
    if summary.dropped_mechanism > 0 {
        log::warn!("{name}: {} mechanisms dropped", summary.dropped_mechanism);
    }
    filter_worst(&data, spec.filter_worst)
}

/// Filtered and split source dataset of `name` as used by every trial.
pub fn source_split(spec: &TrialSpec, name: &str) -> Result<Split> {
    let data = generate_filtered(spec, name, spec.source_size, "source")?;
    Ok(split(&data, spec.split_fractions()?, dataset_seed(spec.data_seed, name, "split")))
}

fn source_splits(spec: &TrialSpec, names: &BTreeSet<String>) -> Result<BTreeMap<String, Split>> {
    names
        .par_iter()
        .map(|n| Ok((n.clone(), source_split(spec, n)?)))
        .collect()
}

/// Fails if any design of `test` also appears in one of the training sets.
pub fn assert_disjoint(train_sets: &[&[GraphSample]], test: &[GraphSample]) -> Result<()> {
    let seen: HashSet<u64> = train_sets
        .iter()
        .flat_map(|s| s.iter().map(GraphSample::design_hash))
        .collect();
    match test.iter().position(|s| seen.contains(&s.design_hash())) {
        Some(i) => Err(Error::invalid(format!("test design {i} also appears in the training data"))),
        None => Ok(()),
    }
}

fn union<'a>(splits: impl IntoIterator<Item = &'a Split>) -> (Vec<GraphSample>, Vec<GraphSample>) {
    let (mut tr, mut va) = (Vec::new(), Vec::new());
    for s in splits {
        tr.extend(s.train.samples.iter().cloned());
        va.extend(s.val.samples.iter().cloned());
    }
    (tr, va)
}

fn gsm_errors(net: &GsmNetwork, test: &[GraphSample]) -> Result<Vec<f64>> {
    per_design_mae(&net.predict_many(test)?, test)
}

fn fixed_errors(test: &[GraphSample], predict: impl Fn(&GraphSample) -> Result<ndarray::Array2<f64>>) -> Result<Vec<f64>> {
    let preds = test.iter().map(predict).collect::<Result<Vec<_>>>()?;
    per_design_mae(&preds, test)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Accumulates the rows of one (target, N, seed) cell.
struct Cell<'a> {
    trial: TrialId,
    target: &'a str,
    n_train: usize,
    seed: u64,
    baseline: f64,
    report: TrialReport,
}

impl<'a> Cell<'a> {
    fn new(trial: TrialId, target: &'a str, n_train: usize, seed: u64, baseline_errors: Vec<f64>) -> Self {
        let mut cell = Cell {
            trial,
            target,
            n_train,
            seed,
            baseline: mean(&baseline_errors),
            report: TrialReport::default(),
        };
        cell.add(ModelKind::Baseline, baseline_errors);
        cell
    }

    fn add(&mut self, model: ModelKind, errors: Vec<f64>) {
        let row = ReportRow::new(self.trial, self.target, self.n_train, self.seed, model, mean(&errors), self.baseline);
        self.report.rows.push(row);
        self.report.design_errors.push(DesignErrorRecord {
            trial: self.trial,
            target: self.target.to_string(),
            n_train: self.n_train,
            seed: self.seed,
            model,
            mae_cm: errors,
        });
    }

    fn history(&mut self, model: ModelKind, history: LossHistory) {
        self.report.histories.push(HistoryRecord {
            trial: self.trial,
            target: self.target.to_string(),
            n_train: self.n_train,
            seed: self.seed,
            model,
            history,
        });
    }
}

fn collect(cells: Vec<Result<TrialReport>>) -> Result<TrialReport> {
    let mut out = TrialReport::default();
    for c in cells {
        out.extend(c?);
    }
    attach_deltas(&mut out.rows);
    Ok(out)
}

fn expect_trial(spec: &TrialSpec, allowed: &[TrialId]) -> Result<()> {
    if allowed.contains(&spec.trial) {
        Ok(())
    } else {
        Err(Error::invalid(format!("spec is for trial {}, expected one of {allowed:?}", spec.trial)))
    }
}

/// Trials A–C: one GSM per (target, seed), tested on the target's test split.
///
/// A trains on the target's own training split, B on the union of every
/// source's training split and C on that union without the target. The mean
/// baseline is always fitted on the target's training split; the pointwise
/// surrogate is fitted in Trial A only, where the topology is fixed.
pub fn run_generalization(spec: &TrialSpec) -> Result<TrialReport> {
    expect_trial(spec, &[TrialId::A, TrialId::B, TrialId::C])?;
    spec.validate()?;
    let names: BTreeSet<String> = spec.targets.iter().chain(&spec.sources).cloned().collect();
    let data = source_splits(spec, &names)?;
    let cells: Vec<(&String, u64)> = spec
        .targets
        .iter()
        .flat_map(|t| spec.seeds.iter().map(move |&s| (t, s)))
        .collect();
    let results = cells
        .into_par_iter()
        .map(|(target, seed)| generalization_cell(spec, &data, target, seed))
        .collect();
    collect(results)
}

fn generalization_cell(spec: &TrialSpec, data: &BTreeMap<String, Split>, target: &str, seed: u64) -> Result<TrialReport> {
    let tgt = &data[target];
    let test = &tgt.test.samples;
    let (train_set, val_set) = match spec.trial {
        TrialId::A => (tgt.train.samples.clone(), tgt.val.samples.clone()),
        _ => union(spec.sources_for(target).iter().map(|s| &data[s])),
    };
    if spec.trial == TrialId::C {
        if let Some(s) = train_set.iter().chain(&val_set).find(|s| s.source_tag() == target) {
            return Err(Error::invalid(format!("trial C training data contains a {} design", s.source_tag())));
        }
        let excluded: Vec<&[GraphSample]> = vec![&tgt.train.samples, &tgt.val.samples, test];
        for part in excluded {
            assert_disjoint(&[&train_set, &val_set], part)?;
        }
    }
    assert_disjoint(&[&train_set, &val_set], test)?;

    let baseline = MeanBaseline::fit(&tgt.train.samples)?;
    let mut cell = Cell::new(spec.trial, target, train_set.len(), seed, fixed_errors(test, |s| baseline.predict(s))?);
    let mut net = build_network(&spec.architecture, spec.heads, NODE_FEATURES, seed)?;
    let history = train(&mut net, &train_set, &val_set, &spec.train_config(seed))?;
    log::info!(
        "trial {} target {target} seed {seed}: {} training designs, test MAE {:.3e} cm",
        spec.trial,
        train_set.len(),
        dataset_mae(&net.predict_many(test)?, test)?
    );
    cell.add(ModelKind::Gsm, gsm_errors(&net, test)?);
    cell.history(ModelKind::Gsm, history);
    if spec.trial == TrialId::A && spec.pointwise {
        let pw = fit_pointwise(&tgt.train.samples, seed)?;
        cell.add(ModelKind::Pointwise, fixed_errors(test, |s| pw.predict(s))?);
    }
    Ok(cell.report)
}

pub fn run_trial_a(spec: &TrialSpec) -> Result<TrialReport> {
    expect_trial(spec, &[TrialId::A])?;
    run_generalization(spec)
}

pub fn run_trial_b(spec: &TrialSpec) -> Result<TrialReport> {
    expect_trial(spec, &[TrialId::B])?;
    run_generalization(spec)
}

pub fn run_trial_c(spec: &TrialSpec) -> Result<TrialReport> {
    expect_trial(spec, &[TrialId::C])?;
    run_generalization(spec)
}

/// Validation designs drawn alongside `n` training designs, keeping the
/// train:validation ratio of the split fractions.
pub fn validation_size(spec: &TrialSpec, n: usize) -> usize {
    (n as f64 * spec.split[1] / spec.split[0] - 1e-9).ceil() as usize
}

/// Pre-trains a GSM on the union of the target's sources with the first seed.
pub fn pretrain(spec: &TrialSpec, target: &str) -> Result<(GsmNetwork, LossHistory)> {
    let names: BTreeSet<String> = spec.sources_for(target).into_iter().collect();
    let data = source_splits(spec, &names)?;
    let (train_set, val_set) = union(data.values());
    let seed = spec.seeds[0];
    let mut net = build_network(&spec.architecture, spec.heads, NODE_FEATURES, seed)?;
    let history = train(&mut net, &train_set, &val_set, &spec.pretrain_config(seed))?;
    log::info!(
        "pre-trained on {} designs from {:?}, final train loss {:?}",
        train_set.len(),
        names,
        history.final_train_loss()
    );
    Ok((net, history))
}

/// Target-model data of a transfer trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetSets {
    /// Reference test set.
    pub test: Vec<GraphSample>,
    /// Training pool filtered against the test set; training sets are its
    /// prefixes, followed by their validation designs.
    pub pool: Vec<GraphSample>,
}

impl TargetSets {
    /// Generates the test set, then a pool from a different seed, dropping
    /// pool designs whose maximum displacement exceeds the configured
    /// percentile of the test set.
    pub fn generate(spec: &TrialSpec, target: &str) -> Result<Self> {
        let test = generate_filtered(spec, target, spec.test_size, "test")?;
        if test.is_empty() {
            return Err(Error::invalid(format!("no valid {target} test designs")));
        }
        let largest = spec.target_sizes.iter().copied().max().unwrap_or(0);
        let needed = largest + validation_size(spec, largest);
        let mut size = needed + needed / 4 + 8;
        for _ in 0..8 {
            let raw = generate_filtered(spec, target, size, &format!("pool{size}"))?;
            let pool = filter_against_reference(&raw, &test, spec.reference_percentile)?;
            if pool.len() >= needed {
                let pool = pool.samples[..needed].to_vec();
                assert_disjoint(&[&pool], &test.samples)?;
                return Ok(TargetSets {
                    test: test.samples,
                    pool,
                });
            }
            size *= 2;
        }
        Err(Error::invalid(format!("could not generate {needed} admissible {target} designs")))
    }
}

/// Fine-tunes `pretrained` for every (N, seed) cell and compares it against
/// a GSM trained from scratch, the pointwise surrogate and the baseline, all
/// fitted on the same N target designs.
pub fn run_transfer_from(spec: &TrialSpec, target: &str, pretrained: &GsmNetwork) -> Result<TrialReport> {
    expect_trial(spec, &[TrialId::D, TrialId::E, TrialId::F, TrialId::G])?;
    spec.validate()?;
    if pretrained.architecture() != spec.architecture {
        return Err(Error::ArchitectureMismatch {
            found: pretrained.architecture().to_string(),
            expected: spec.architecture.clone(),
        });
    }
    let sets = TargetSets::generate(spec, target)?;
    let zero_shot = gsm_errors(pretrained, &sets.test)?;
    let cells: Vec<(usize, u64)> = spec
        .target_sizes
        .iter()
        .flat_map(|&n| spec.seeds.iter().map(move |&s| (n, s)))
        .collect();
    let results = cells
        .into_par_iter()
        .map(|(n, seed)| transfer_cell(spec, target, pretrained, &sets, &zero_shot, n, seed))
        .collect();
    collect(results)
}

fn transfer_cell(
    spec: &TrialSpec,
    target: &str,
    pretrained: &GsmNetwork,
    sets: &TargetSets,
    zero_shot: &[f64],
    n: usize,
    seed: u64,
) -> Result<TrialReport> {
    let train_set = &sets.pool[..n];
    let val_set = &sets.pool[n..n + validation_size(spec, n)];
    let test = &sets.test;
    let config = spec.train_config(seed);

    let baseline = MeanBaseline::fit(train_set)?;
    let mut cell = Cell::new(spec.trial, target, n, seed, fixed_errors(test, |s| baseline.predict(s))?);
    cell.add(ModelKind::Pretrained, zero_shot.to_vec());

    let mut tuned = pretrained.clone();
    let history = transfer(&mut tuned, train_set, val_set, &config)?;
    cell.add(ModelKind::Transfer, gsm_errors(&tuned, test)?);
    cell.history(ModelKind::Transfer, history);

    let mut scratch = build_network(&spec.architecture, spec.heads, NODE_FEATURES, seed)?;
    let history = train(&mut scratch, train_set, val_set, &config)?;
    cell.add(ModelKind::Scratch, gsm_errors(&scratch, test)?);
    cell.history(ModelKind::Scratch, history);

    if spec.pointwise {
        let pw = fit_pointwise(train_set, seed)?;
        cell.add(ModelKind::Pointwise, fixed_errors(test, |s| pw.predict(s))?);
    }
    log::info!("trial {} target {target} N={n} seed {seed} done", spec.trial);
    Ok(cell.report)
}

fn run_transfer(spec: &TrialSpec, allowed: TrialId) -> Result<TrialReport> {
    expect_trial(spec, &[allowed])?;
    spec.validate()?;
    let mut out = TrialReport::default();
    for target in &spec.targets {
        let (net, history) = pretrain(spec, target)?;
        let mut report = run_transfer_from(spec, target, &net)?;
        report.histories.insert(
            0,
            HistoryRecord {
                trial: spec.trial,
                target: target.clone(),
                n_train: 0,
                seed: spec.seeds[0],
                model: ModelKind::Pretrained,
                history,
            },
        );
        out.extend(report);
    }
    Ok(out)
}

/// Trial D: pre-train on the spanning models other than the target.
pub fn run_trial_d(spec: &TrialSpec) -> Result<TrialReport> {
    run_transfer(spec, TrialId::D)
}

/// Trial E: pre-train on DM7, fine-tune on the end-loaded variant.
pub fn run_trial_e(spec: &TrialSpec) -> Result<TrialReport> {
    run_transfer(spec, TrialId::E)
}

/// Trial F: pre-train on DM7, fine-tune on towers.
pub fn run_trial_f(spec: &TrialSpec) -> Result<TrialReport> {
    run_transfer(spec, TrialId::F)
}

/// Trial G: pre-train on DM7, fine-tune on bridges.
pub fn run_trial_g(spec: &TrialSpec) -> Result<TrialReport> {
    run_transfer(spec, TrialId::G)
}

pub fn run_trial(spec: &TrialSpec) -> Result<TrialReport> {
    match spec.trial {
        TrialId::A => run_trial_a(spec),
        TrialId::B => run_trial_b(spec),
        TrialId::C => run_trial_c(spec),
        TrialId::D => run_trial_d(spec),
        TrialId::E => run_trial_e(spec),
        TrialId::F => run_trial_f(spec),
        TrialId::G => run_trial_g(spec),
    }
}
