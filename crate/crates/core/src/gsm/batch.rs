use crate::autodiff::Matrix;
use crate::error::{Error, Result};
use crate::model::GraphSample;

/// Disjoint union of graphs: node rows are stacked and edge endpoints are
/// offset by each graph's first row.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphBatch {
    features: Matrix,
    centers: Vec<usize>,
    neighbors: Vec<usize>,
    offsets: Vec<usize>,
    targets: Matrix,
}

impl GraphBatch {
    pub fn from_samples(samples: &[&GraphSample]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::invalid("empty batch"));
        }
        let width = samples[0].node_features().ncols();
        let total: usize = samples.iter().map(|s| s.node_count()).sum();
        let edges: usize = samples.iter().map(|s| s.edges().len()).sum();
        let mut features = Matrix::zeros((total, width));
        let mut targets = Matrix::zeros((total, 2));
        let mut centers = Vec::with_capacity(edges);
        let mut neighbors = Vec::with_capacity(edges);
        let mut offsets = Vec::with_capacity(samples.len() + 1);
        let mut start = 0;
        for s in samples {
            if s.node_features().ncols() != width {
                return Err(Error::shape("samples in a batch have different feature widths"));
            }
            s.validate_topology()?;
            let n = s.node_count();
            offsets.push(start);
            features
                .slice_mut(ndarray::s![start..start + n, ..])
                .assign(s.node_features());
            targets.slice_mut(ndarray::s![start..start + n, ..]).assign(s.targets());
            for &(i, j) in s.edges() {
                centers.push(start + i);
                neighbors.push(start + j);
            }
            start += n;
        }
        offsets.push(start);
        Ok(GraphBatch {
            features,
            centers,
            neighbors,
            offsets,
            targets,
        })
    }

    /// Single graph with arbitrary feature width and zero targets.
    pub fn from_graph(features: &Matrix, edges: &[(usize, usize)]) -> Result<Self> {
        let n = features.nrows();
        if let Some(&(a, b)) = edges.iter().find(|&&(a, b)| a >= n || b >= n) {
            return Err(Error::invalid(format!("edge ({a}, {b}) out of range for {n} nodes")));
        }
        crate::model::validate_edges(n, edges)?;
        Ok(GraphBatch {
            features: features.clone(),
            centers: edges.iter().map(|e| e.0).collect(),
            neighbors: edges.iter().map(|e| e.1).collect(),
            offsets: vec![0, n],
            targets: Matrix::zeros((n, 2)),
        })
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn targets(&self) -> &Matrix {
        &self.targets
    }

    /// Node `centers[e]` aggregates over neighbor `neighbors[e]` along edge `e`.
    pub fn centers(&self) -> &[usize] {
        &self.centers
    }

    pub fn neighbors(&self) -> &[usize] {
        &self.neighbors
    }

    pub fn node_count(&self) -> usize {
        self.features.nrows()
    }

    pub fn graph_count(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Splits a per-node matrix back into per-graph blocks.
    pub fn split_rows(&self, m: &Matrix) -> Vec<Matrix> {
        self.offsets
            .windows(2)
            .map(|w| m.slice(ndarray::s![w[0]..w[1], ..]).to_owned())
            .collect()
    }
}
