use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::lhs::latin_hypercube;
use super::models::DesignModel;
use crate::error::{Error, Result};
use crate::fea::{self, ElementKind};
use crate::model::{to_graph, GraphSample, DEFAULT_LOAD_NEWTONS};

pub const DATASET_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMetadata {
    pub format_version: u32,
    /// Design model name; merged datasets join names with `+`.
    pub design_model: String,
    pub load_newtons: f64,
    pub element_kind: ElementKind,
    pub seed: u64,
    /// Human-readable description of the filters applied, `none` if unfiltered.
    pub filter: String,
}

impl DatasetMetadata {
    pub fn new(design_model: impl Into<String>, element_kind: ElementKind, seed: u64) -> Self {
        DatasetMetadata {
            format_version: DATASET_FORMAT_VERSION,
            design_model: design_model.into(),
            load_newtons: DEFAULT_LOAD_NEWTONS,
            element_kind,
            seed,
            filter: "none".into(),
        }
    }

    fn push_filter(&mut self, rule: String) {
        if self.filter == "none" {
            self.filter = rule;
        } else {
            self.filter = format!("{};{}", self.filter, rule);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub metadata: DatasetMetadata,
    pub samples: Vec<GraphSample>,
}

/// Counts reported by [`generate_dataset`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct GenerationSummary {
    pub generated: usize,
    pub dropped_mechanism: usize,
}

impl Dataset {
    pub fn new(metadata: DatasetMetadata, samples: Vec<GraphSample>) -> Self {
        Dataset { metadata, samples }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn max_displacements(&self) -> Vec<f64> {
        self.samples.iter().map(GraphSample::max_displacement).collect()
    }

    /// Concatenates datasets. Metadata comes from the first one with the
    /// design model names joined.
    pub fn merge(parts: &[Dataset]) -> Result<Dataset> {
        let first = parts.first().ok_or_else(|| Error::invalid("nothing to merge"))?;
        let mut metadata = first.metadata.clone();
        let mut names: Vec<&str> = Vec::new();
        for p in parts {
            for name in p.metadata.design_model.split('+') {
                if !names.contains(&name) {
                    names.push(name);
                }
            }
        }
        metadata.design_model = names.join("+");
        let samples = parts.iter().flat_map(|p| p.samples.iter().cloned()).collect();
        Ok(Dataset { metadata, samples })
    }

    fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            metadata: self.metadata.clone(),
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
        }
    }
}

/// Samples `n` designs by Latin hypercube, solves them and encodes them as
/// graphs. Designs that turn out to be mechanisms are dropped.
pub fn generate_dataset(
    model: &DesignModel,
    n: usize,
    seed: u64,
    kind: ElementKind,
) -> Result<(Dataset, GenerationSummary)> {
    let metadata = DatasetMetadata::new(model.name(), kind, seed);
    if n == 0 {
        return Ok((Dataset::new(metadata, Vec::new()), GenerationSummary::default()));
    }
    let unit = latin_hypercube(n, model.param_count(), seed)?;
    let outcomes: Vec<Result<Option<GraphSample>>> = unit
        .rows()
        .into_iter()
        .map(|r| r.to_vec())
        .collect::<Vec<_>>()
        .into_par_iter()
        .enumerate()
        .map(|(i, u)| {
            let params = model.scale_unit(&u)?;
            let truss = model.generate(&params)?;
            match fea::solve(&truss, kind) {
                Ok(sol) => Ok(Some(to_graph(&truss, &sol.displacements, model.name())?)),
                Err(Error::Mechanism(msg)) => {
                    log::warn!("{} design {i} dropped: mechanism ({msg})", model.name());
                    Ok(None)
                }
                Err(e) => Err(e),
            }
        })
        .collect();
    let mut samples = Vec::with_capacity(n);
    let mut dropped = 0;
    for o in outcomes {
        match o? {
            Some(s) => samples.push(s),
            None => dropped += 1,
        }
    }
    Ok((
        Dataset::new(metadata, samples),
        GenerationSummary {
            generated: n,
            dropped_mechanism: dropped,
        },
    ))
}

/// Drops the `⌈fraction·n⌉` designs with the largest maximum displacement.
/// Among equal maxima the design with the higher original index goes first.
pub fn filter_worst(dataset: &Dataset, fraction: f64) -> Result<Dataset> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::invalid(format!("filter fraction {fraction} outside [0, 1)")));
    }
    let n = dataset.len();
    let remove = ((fraction * n as f64) - 1e-9).ceil().max(0.0) as usize;
    let maxes = dataset.max_displacements();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| maxes[a].total_cmp(&maxes[b]).then(a.cmp(&b)));
    let mut keep = order[..n - remove].to_vec();
    keep.sort_unstable();
    let mut out = dataset.subset(&keep);
    if remove > 0 || fraction > 0.0 {
        out.metadata.push_filter(format!("worst:{fraction}"));
    }
    Ok(out)
}

/// Percentile by linear interpolation between order statistics: the value at
/// fractional rank `p/100 · (n − 1)` of the sorted data.
pub fn percentile(values: &[f64], p: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::invalid("percentile of an empty set"));
    }
    if !(0.0..=100.0).contains(&p) {
        return Err(Error::invalid(format!("percentile {p} outside [0, 100]")));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = p / 100.0 * (v.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    Ok(v[lo] + (rank - lo as f64) * (v[hi] - v[lo]))
}

/// Drops designs whose maximum displacement exceeds the given percentile of
/// the reference set's maximum displacements.
pub fn filter_against_reference(dataset: &Dataset, reference: &Dataset, pct: f64) -> Result<Dataset> {
    if reference.is_empty() {
        return Err(Error::invalid("reference dataset is empty"));
    }
    let threshold = percentile(&reference.max_displacements(), pct)?;
    let keep: Vec<usize> = dataset
        .max_displacements()
        .iter()
        .enumerate()
        .filter(|(_, m)| **m <= threshold)
        .map(|(i, _)| i)
        .collect();
    let mut out = dataset.subset(&keep);
    out.metadata.push_filter(format!("reference_p{pct}:{threshold:e}"));
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        SplitFractions {
            train: 0.68,
            val: 0.12,
            test: 0.20,
        }
    }
}

impl SplitFractions {
    pub fn new(train: f64, val: f64, test: f64) -> Result<Self> {
        let all = [train, val, test];
        if all.iter().any(|f| !(0.0..=1.0).contains(f)) || ((train + val + test) - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!(
                "split fractions {train}, {val}, {test} must be in [0, 1] and sum to 1"
            )));
        }
        Ok(SplitFractions { train, val, test })
    }

    /// `(⌊train·n⌋, ⌊val·n⌋, remainder)`.
    pub fn sizes(&self, n: usize) -> (usize, usize, usize) {
        let floor = |f: f64| ((f * n as f64) + 1e-9).floor() as usize;
        let train = floor(self.train).min(n);
        let val = floor(self.val).min(n - train);
        (train, val, n - train - val)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

/// Seeded random partition into train, validation and test sets.
pub fn split(dataset: &Dataset, fractions: SplitFractions, seed: u64) -> Split {
    let n = dataset.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (ntr, nva, _) = fractions.sizes(n);
    Split {
        train: dataset.subset(&order[..ntr]),
        val: dataset.subset(&order[ntr..ntr + nva]),
        test: dataset.subset(&order[ntr + nva..]),
    }
}
