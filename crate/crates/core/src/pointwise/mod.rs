//! Fixed-topology baselines: a random forest per output scalar and the
//! per-joint mean displacement field.

mod forest;

pub use forest::{
    best_split, fit_forest, fit_forest_with, ForestConfig, RandomForest, RegressionTree, SplitChoice, TreeNode,
};

use ndarray::Array2;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{GraphSample, Truss};

/// Joint count and edge list shared by every design a fixed-topology model
/// accepts.
#[derive(Debug, Clone, PartialEq)]
struct Topology {
    joints: usize,
    edges: Vec<(usize, usize)>,
}

impl Topology {
    fn of(sample: &GraphSample) -> Self {
        Topology {
            joints: sample.node_count(),
            edges: sample.edges().to_vec(),
        }
    }

    fn common(samples: &[GraphSample]) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| Error::invalid("training set is empty"))?;
        let topo = Topology::of(first);
        for (i, s) in samples.iter().enumerate().skip(1) {
            topo.check(s).map_err(|e| Error::Topology(format!("design {i}: {e}")))?;
        }
        Ok(topo)
    }

    fn check(&self, sample: &GraphSample) -> Result<()> {
        if sample.node_count() != self.joints {
            return Err(Error::Topology(format!(
                "{} joints, model was fitted on {}",
                sample.node_count(),
                self.joints
            )));
        }
        if sample.edges() != self.edges.as_slice() {
            return Err(Error::Topology("member layout differs from the training designs".into()));
        }
        Ok(())
    }
}

/// One forest per displacement component of every joint, fed with the
/// flattened joint coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct PointwiseSurrogate {
    topology: Topology,
    forests: Vec<RandomForest>,
}

pub fn fit_pointwise(train: &[GraphSample], seed: u64) -> Result<PointwiseSurrogate> {
    fit_pointwise_with(train, ForestConfig::default(), seed)
}

pub fn fit_pointwise_with(train: &[GraphSample], config: ForestConfig, seed: u64) -> Result<PointwiseSurrogate> {
    let topology = Topology::common(train)?;
    let n = topology.joints;
    let x = Array2::from_shape_vec(
        (train.len(), 2 * n),
        train.iter().flat_map(GraphSample::flat_coordinates).collect(),
    )
    .map_err(|e| Error::shape(e.to_string()))?;
    let forests = (0..2 * n)
        .into_par_iter()
        .map(|k| {
            let y: Vec<f64> = train.iter().map(|s| s.targets()[[k / 2, k % 2]]).collect();
            fit_forest_with(&x, &y, config, seed.wrapping_add(k as u64))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PointwiseSurrogate { topology, forests })
}

impl PointwiseSurrogate {
    pub fn forest_count(&self) -> usize {
        self.forests.len()
    }

    pub fn joint_count(&self) -> usize {
        self.topology.joints
    }

    pub fn predict(&self, sample: &GraphSample) -> Result<Array2<f64>> {
        self.topology.check(sample)?;
        Ok(self.predict_coordinates(&sample.flat_coordinates()))
    }

    pub fn predict_truss(&self, truss: &Truss) -> Result<Array2<f64>> {
        if truss.joint_count() != self.topology.joints {
            return Err(Error::Topology(format!(
                "{} joints, model was fitted on {}",
                truss.joint_count(),
                self.topology.joints
            )));
        }
        let coords: Vec<f64> = truss.joints().iter().flat_map(|j| j.position).collect();
        Ok(self.predict_coordinates(&coords))
    }

    fn predict_coordinates(&self, coords: &[f64]) -> Array2<f64> {
        let row = ndarray::ArrayView1::from(coords);
        let flat: Vec<f64> = self.forests.iter().map(|f| f.predict_row(row)).collect();
        Array2::from_shape_vec((self.topology.joints, 2), flat).expect("2 outputs per joint")
    }
}

/// Predicts the training set's mean displacement at every joint.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanBaseline {
    topology: Topology,
    mean: Array2<f64>,
}

impl MeanBaseline {
    pub fn fit(train: &[GraphSample]) -> Result<Self> {
        let topology = Topology::common(train)?;
        let mut mean = Array2::zeros((topology.joints, 2));
        for s in train {
            mean += s.targets();
        }
        mean /= train.len() as f64;
        Ok(MeanBaseline { topology, mean })
    }

    pub fn field(&self) -> &Array2<f64> {
        &self.mean
    }

    pub fn predict(&self, sample: &GraphSample) -> Result<Array2<f64>> {
        self.topology.check(sample)?;
        Ok(self.mean.clone())
    }
}

pub fn fit_baseline(train: &[GraphSample]) -> Result<MeanBaseline> {
    MeanBaseline::fit(train)
}
