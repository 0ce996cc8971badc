use ndarray::{Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TreeNode {
    Leaf {
        value: f64,
    },
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// Best axis-aligned split of a node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitChoice {
    pub feature: usize,
    pub threshold: f64,
    /// Sum of squared deviations of both children from their own means.
    pub child_sse: f64,
}

/// Exhaustive CART split search under the squared-error criterion.
///
/// Every feature is scanned in sorted order; candidate thresholds are the
/// midpoints between consecutive distinct values. The first split with the
/// lowest child SSE wins (feature order, then threshold order).
pub fn best_split(x: &Array2<f64>, y: &[f64], rows: &[usize]) -> Option<SplitChoice> {
    let n = rows.len();
    if n < 2 {
        return None;
    }
    let mean = rows.iter().map(|&r| y[r]).sum::<f64>() / n as f64;
    let total_sum: f64 = rows.iter().map(|&r| y[r] - mean).sum();
    let total_sq: f64 = rows.iter().map(|&r| (y[r] - mean).powi(2)).sum();

    let mut best: Option<SplitChoice> = None;
    let mut order = rows.to_vec();
    for f in 0..x.ncols() {
        order.sort_by(|&a, &b| x[[a, f]].total_cmp(&x[[b, f]]));
        let (mut sum_l, mut sq_l) = (0.0, 0.0);
        for k in 1..n {
            let prev = order[k - 1];
            let d = y[prev] - mean;
            sum_l += d;
            sq_l += d * d;
            let (lo, hi) = (x[[prev, f]], x[[order[k], f]]);
            if !(lo < hi) {
                continue;
            }
            let (nl, nr) = (k as f64, (n - k) as f64);
            let sum_r = total_sum - sum_l;
            let sq_r = total_sq - sq_l;
            let sse = (sq_l - sum_l * sum_l / nl) + (sq_r - sum_r * sum_r / nr);
            if best.map_or(true, |b| sse < b.child_sse) {
                let mut threshold = lo + (hi - lo) / 2.0;
                if threshold >= hi || !threshold.is_finite() {
                    threshold = lo;
                }
                best = Some(SplitChoice {
                    feature: f,
                    threshold,
                    child_sse: sse,
                });
            }
        }
    }
    best
}

/// Regression tree grown without a depth limit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    nodes: Vec<TreeNode>,
}

impl RegressionTree {
    /// Grows a tree on the rows listed in `sample` (repetitions allowed).
    /// A node becomes a leaf when it has fewer than `min_samples_split` rows,
    /// all its targets are equal, or no feature varies.
    pub fn fit(x: &Array2<f64>, y: &[f64], sample: &[usize], min_samples_split: usize) -> Self {
        let mut nodes = Vec::new();
        let mut stack = vec![(sample.to_vec(), None::<(usize, bool)>)];
        while let Some((rows, parent)) = stack.pop() {
            let id = nodes.len();
            if let Some((p, is_left)) = parent {
                if let TreeNode::Split { left, right, .. } = &mut nodes[p] {
                    if is_left {
                        *left = id;
                    } else {
                        *right = id;
                    }
                }
            }
            let mean = rows.iter().map(|&r| y[r]).sum::<f64>() / rows.len() as f64;
            let constant = rows.iter().all(|&r| y[r] == y[rows[0]]);
            let split = if rows.len() < min_samples_split.max(2) || constant {
                None
            } else {
                best_split(x, y, &rows)
            };
            match split {
                None => nodes.push(TreeNode::Leaf { value: mean }),
                Some(s) => {
                    nodes.push(TreeNode::Split {
                        feature: s.feature,
                        threshold: s.threshold,
                        left: usize::MAX,
                        right: usize::MAX,
                    });
                    let (l, r): (Vec<usize>, Vec<usize>) =
                        rows.iter().partition(|&&row| x[[row, s.feature]] <= s.threshold);
                    stack.push((r, Some((id, false))));
                    stack.push((l, Some((id, true))));
                }
            }
        }
        RegressionTree { nodes }
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn root_split(&self) -> Option<(usize, f64)> {
        match self.nodes.first()? {
            TreeNode::Split { feature, threshold, .. } => Some((*feature, *threshold)),
            TreeNode::Leaf { .. } => None,
        }
    }

    pub fn predict_row(&self, row: ArrayView1<f64>) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                TreeNode::Leaf { value } => return value,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if row[feature] <= threshold { left } else { right },
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub min_samples_split: usize,
    pub bootstrap: bool,
}

impl Default for ForestConfig {
    /// 100 trees, bootstrap resamples of full size, every feature considered
    /// at every split, no depth limit, two samples to split.
    fn default() -> Self {
        ForestConfig {
            n_trees: 100,
            min_samples_split: 2,
            bootstrap: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    trees: Vec<RegressionTree>,
}

pub fn fit_forest(x: &Array2<f64>, y: &[f64], seed: u64) -> Result<RandomForest> {
    fit_forest_with(x, y, ForestConfig::default(), seed)
}

pub fn fit_forest_with(x: &Array2<f64>, y: &[f64], config: ForestConfig, seed: u64) -> Result<RandomForest> {
    let m = x.nrows();
    if m == 0 {
        return Err(Error::invalid("cannot fit a forest on zero samples"));
    }
    if y.len() != m {
        return Err(Error::shape(format!("{} targets for {m} rows", y.len())));
    }
    if config.n_trees == 0 {
        return Err(Error::invalid("forest needs at least one tree"));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite forest input"));
    }
    let trees = (0..config.n_trees)
        .into_par_iter()
        .map(|t| {
            let sample: Vec<usize> = if config.bootstrap {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(t as u64);
                (0..m).map(|_| rng.gen_range(0..m)).collect()
            } else {
                (0..m).collect()
            };
            RegressionTree::fit(x, y, &sample, config.min_samples_split)
        })
        .collect();
    Ok(RandomForest { trees })
}

impl RandomForest {
    pub fn trees(&self) -> &[RegressionTree] {
        &self.trees
    }

    /// Mean of the trees' predictions.
    pub fn predict_row(&self, row: ArrayView1<f64>) -> f64 {
        self.trees.iter().map(|t| t.predict_row(row)).sum::<f64>() / self.trees.len() as f64
    }

    pub fn predict(&self, x: &Array2<f64>) -> Vec<f64> {
        x.rows().into_iter().map(|r| self.predict_row(r)).collect()
    }
}
