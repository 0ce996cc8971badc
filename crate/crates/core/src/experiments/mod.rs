//! Experiment harness: error metrics, trial specifications, the
//! generalization (A–C) and transfer (D–G) trials, and CSV reports.

mod report;
mod spec;
mod trials;

pub use report::{
    attach_deltas, emit_report, read_report_csv, write_report_csv, DesignErrorRecord, HistoryRecord, ModelKind,
    ReportRow, TrialReport,
};
pub use spec::{load_trial_spec, parse_trial_spec, Profile, TrialId, TrialSpec, SPANNING_MODELS};
pub use trials::{
    assert_disjoint, pretrain, run_generalization, run_transfer_from, run_trial, run_trial_a, run_trial_b,
    run_trial_c, run_trial_d, run_trial_e, run_trial_f, run_trial_g, source_split, validation_size, TargetSets,
};

use ndarray::{Array2, Zip};

use crate::error::{Error, Result};
use crate::model::GraphSample;

pub const CM_PER_M: f64 = 100.0;

/// Mean absolute error over all joints and both components, in centimeters.
pub fn mae(pred: &Array2<f64>, truth: &Array2<f64>) -> Result<f64> {
    if pred.dim() != truth.dim() {
        return Err(Error::shape(format!("prediction {:?} vs truth {:?}", pred.dim(), truth.dim())));
    }
    if pred.is_empty() {
        return Err(Error::invalid("cannot compute the MAE of an empty field"));
    }
    let sum = Zip::from(pred).and(truth).fold(0.0, |acc, p, t| acc + (p - t).abs());
    Ok(sum / pred.len() as f64 * CM_PER_M)
}

/// MAE of every design, in centimeters.
pub fn per_design_mae(preds: &[Array2<f64>], truth: &[GraphSample]) -> Result<Vec<f64>> {
    if preds.len() != truth.len() {
        return Err(Error::shape(format!("{} predictions for {} designs", preds.len(), truth.len())));
    }
    preds.iter().zip(truth).map(|(p, s)| mae(p, s.targets())).collect()
}

/// Mean of the per-design MAEs, in centimeters.
pub fn dataset_mae(preds: &[Array2<f64>], truth: &[GraphSample]) -> Result<f64> {
    let per = per_design_mae(preds, truth)?;
    if per.is_empty() {
        return Err(Error::invalid("cannot compute the MAE of an empty dataset"));
    }
    Ok(per.iter().sum::<f64>() / per.len() as f64)
}

/// Median with the two middle values averaged for even counts.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { (v[m - 1] + v[m]) / 2.0 })
}
