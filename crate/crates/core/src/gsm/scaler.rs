use serde::{Deserialize, Serialize};

use crate::autodiff::Matrix;
use crate::error::{Error, Result};
use crate::model::GraphSample;

/// Per-component standardization of displacement targets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetScaler {
    pub mean: [f64; 2],
    pub std: [f64; 2],
}

impl Default for TargetScaler {
    fn default() -> Self {
        TargetScaler {
            mean: [0.0; 2],
            std: [1.0; 2],
        }
    }
}

impl TargetScaler {
    /// Mean and population standard deviation over every node of every
    /// sample. A component with zero variance gets `std = 1`.
    pub fn fit<'a>(samples: impl IntoIterator<Item = &'a GraphSample>) -> Result<Self> {
        let mut count = 0usize;
        let mut sum = [0.0; 2];
        let rows: Vec<&Matrix> = samples.into_iter().map(|s| s.targets()).collect();
        for t in &rows {
            for r in t.rows() {
                sum[0] += r[0];
                sum[1] += r[1];
                count += 1;
            }
        }
        if count == 0 {
            return Err(Error::invalid("cannot fit a scaler on zero nodes"));
        }
        let mean = [sum[0] / count as f64, sum[1] / count as f64];
        let mut sq = [0.0; 2];
        for t in &rows {
            for r in t.rows() {
                sq[0] += (r[0] - mean[0]).powi(2);
                sq[1] += (r[1] - mean[1]).powi(2);
            }
        }
        let std = [0, 1].map(|c| {
            let s = (sq[c] / count as f64).sqrt();
            if s > 1e-12 * mean[c].abs() && s > 0.0 {
                s
            } else {
                1.0
            }
        });
        Ok(TargetScaler { mean, std })
    }

    pub fn transform(&self, y: &Matrix) -> Matrix {
        let mut out = y.clone();
        for mut r in out.rows_mut() {
            r[0] = (r[0] - self.mean[0]) / self.std[0];
            r[1] = (r[1] - self.mean[1]) / self.std[1];
        }
        out
    }

    pub fn inverse_transform(&self, z: &Matrix) -> Matrix {
        let mut out = z.clone();
        for mut r in out.rows_mut() {
            r[0] = r[0] * self.std[0] + self.mean[0];
            r[1] = r[1] * self.std[1] + self.mean[1];
        }
        out
    }
}
