//! Report records and their CSV files.
//!
//! `emit_report` writes five files into the output directory:
//!
//! | file | columns |
//! |------|---------|
//! | `report.csv` | trial, target, n_train, seed, model, mae_cm, baseline_mae_cm, beats_baseline, delta_mae_pct |
//! | `loss_history.csv` | trial, target, n_train, seed, model, epoch, train_loss, val_loss |
//! | `design_errors.csv` | trial, target, n_train, seed, model, design, mae_cm |
//! | `fig4_generalization.csv` | trial, target, model, median_mae_cm, median_baseline_mae_cm |
//! | `fig7_data_efficiency.csv` | trial, target, n_train, model, median_mae_cm, median_baseline_mae_cm |
//!
//! `delta_mae_pct` is `(transfer − scratch) / scratch · 100` on transfer rows
//! and empty elsewhere. Epoch 0 of a loss history holds the validation loss
//! before training and an empty training loss.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::spec::TrialId;
use super::median;
use crate::error::{Error, Result};
use crate::gsm::LossHistory;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// GSM trained directly on the trial's training set (Trials A–C).
    Gsm,
    /// Pre-trained GSM evaluated without fine-tuning.
    Pretrained,
    /// Pre-trained GSM fine-tuned on the target set.
    Transfer,
    /// Fresh GSM trained on the target set only.
    Scratch,
    Pointwise,
    Baseline,
}

impl ModelKind {
    pub const ALL: [ModelKind; 6] = [
        ModelKind::Gsm,
        ModelKind::Pretrained,
        ModelKind::Transfer,
        ModelKind::Scratch,
        ModelKind::Pointwise,
        ModelKind::Baseline,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Gsm => "gsm",
            ModelKind::Pretrained => "pretrained",
            ModelKind::Transfer => "transfer",
            ModelKind::Scratch => "scratch",
            ModelKind::Pointwise => "pointwise",
            ModelKind::Baseline => "baseline",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Format(format!("unknown model kind {s:?}")))
    }
}

/// Test-set result of one model in one (trial, target, N, seed) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub trial: TrialId,
    pub target: String,
    pub n_train: usize,
    pub seed: u64,
    pub model: ModelKind,
    pub mae_cm: f64,
    pub baseline_mae_cm: f64,
    pub beats_baseline: bool,
    pub delta_mae_pct: Option<f64>,
}

impl ReportRow {
    pub fn new(
        trial: TrialId,
        target: &str,
        n_train: usize,
        seed: u64,
        model: ModelKind,
        mae_cm: f64,
        baseline_mae_cm: f64,
    ) -> Self {
        ReportRow {
            trial,
            target: target.to_string(),
            n_train,
            seed,
            model,
            mae_cm,
            baseline_mae_cm,
            beats_baseline: mae_cm < baseline_mae_cm,
            delta_mae_pct: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistoryRecord {
    pub trial: TrialId,
    pub target: String,
    pub n_train: usize,
    pub seed: u64,
    pub model: ModelKind,
    pub history: LossHistory,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignErrorRecord {
    pub trial: TrialId,
    pub target: String,
    pub n_train: usize,
    pub seed: u64,
    pub model: ModelKind,
    /// Per-design MAE in test-set order.
    pub mae_cm: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrialReport {
    pub rows: Vec<ReportRow>,
    pub histories: Vec<HistoryRecord>,
    pub design_errors: Vec<DesignErrorRecord>,
}

impl TrialReport {
    pub fn extend(&mut self, other: TrialReport) {
        self.rows.extend(other.rows);
        self.histories.extend(other.histories);
        self.design_errors.extend(other.design_errors);
    }

    /// Rows matching a trial/target/model filter.
    pub fn select<'a>(&'a self, target: &'a str, model: ModelKind) -> impl Iterator<Item = &'a ReportRow> + 'a {
        self.rows
            .iter()
            .filter(move |r| r.target == target && r.model == model)
    }

    /// Median MAE of `model` for `target` at training size `n_train`.
    pub fn median_mae(&self, target: &str, n_train: usize, model: ModelKind) -> Option<f64> {
        let v: Vec<f64> = self
            .select(target, model)
            .filter(|r| r.n_train == n_train)
            .map(|r| r.mae_cm)
            .collect();
        median(&v)
    }
}

/// Fills `delta_mae_pct` on every transfer row from the scratch row of the
/// same cell.
pub fn attach_deltas(rows: &mut [ReportRow]) {
    let scratch: BTreeMap<(TrialId, String, usize, u64), f64> = rows
        .iter()
        .filter(|r| r.model == ModelKind::Scratch)
        .map(|r| ((r.trial, r.target.clone(), r.n_train, r.seed), r.mae_cm))
        .collect();
    for r in rows.iter_mut().filter(|r| r.model == ModelKind::Transfer) {
        r.delta_mae_pct = scratch
            .get(&(r.trial, r.target.clone(), r.n_train, r.seed))
            .map(|s| (r.mae_cm - s) / s * 100.0);
    }
}

const REPORT_HEADER: [&str; 9] = [
    "trial",
    "target",
    "n_train",
    "seed",
    "model",
    "mae_cm",
    "baseline_mae_cm",
    "beats_baseline",
    "delta_mae_pct",
];

pub fn write_report_csv<W: Write>(w: W, rows: &[ReportRow]) -> Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(REPORT_HEADER)?;
    for r in rows {
        csv.write_record([
            r.trial.to_string(),
            r.target.clone(),
            r.n_train.to_string(),
            r.seed.to_string(),
            r.model.to_string(),
            r.mae_cm.to_string(),
            r.baseline_mae_cm.to_string(),
            r.beats_baseline.to_string(),
            r.delta_mae_pct.map(|d| d.to_string()).unwrap_or_default(),
        ])?;
    }
    csv.flush()?;
    Ok(())
}

fn field<T: FromStr>(rec: &csv::StringRecord, i: usize) -> Result<T> {
    let raw = rec.get(i).ok_or_else(|| Error::Format(format!("missing column {i}")))?;
    raw.parse()
        .map_err(|_| Error::Format(format!("bad value {raw:?} in column {}", REPORT_HEADER[i])))
}

pub fn read_report_csv<R: Read>(r: R) -> Result<Vec<ReportRow>> {
    let mut csv = csv::Reader::from_reader(r);
    if csv.headers()?.iter().ne(REPORT_HEADER) {
        return Err(Error::Format("unexpected report header".into()));
    }
    let mut rows = Vec::new();
    for rec in csv.records() {
        let rec = rec?;
        let delta = rec.get(8).unwrap_or_default();
        rows.push(ReportRow {
            trial: field::<String>(&rec, 0)?.parse()?,
            target: field(&rec, 1)?,
            n_train: field(&rec, 2)?,
            seed: field(&rec, 3)?,
            model: field::<String>(&rec, 4)?.parse()?,
            mae_cm: field(&rec, 5)?,
            baseline_mae_cm: field(&rec, 6)?,
            beats_baseline: field(&rec, 7)?,
            delta_mae_pct: if delta.is_empty() { None } else { Some(field(&rec, 8)?) },
        });
    }
    Ok(rows)
}

fn write_histories<W: Write>(w: W, records: &[HistoryRecord]) -> Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(["trial", "target", "n_train", "seed", "model", "epoch", "train_loss", "val_loss"])?;
    let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
    for h in records {
        let key = [h.trial.to_string(), h.target.clone(), h.n_train.to_string(), h.seed.to_string(), h.model.to_string()];
        let mut rows = vec![("0".to_string(), String::new(), opt(h.history.initial_val_loss))];
        rows.extend(
            h.history
                .epochs
                .iter()
                .map(|e| (e.epoch.to_string(), e.train_loss.to_string(), opt(e.val_loss))),
        );
        for (epoch, train, val) in rows {
            csv.write_record(key.iter().cloned().chain([epoch, train, val]))?;
        }
    }
    csv.flush()?;
    Ok(())
}

fn write_design_errors<W: Write>(w: W, records: &[DesignErrorRecord]) -> Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(["trial", "target", "n_train", "seed", "model", "design", "mae_cm"])?;
    for d in records {
        for (i, e) in d.mae_cm.iter().enumerate() {
            csv.write_record([
                d.trial.to_string(),
                d.target.clone(),
                d.n_train.to_string(),
                d.seed.to_string(),
                d.model.to_string(),
                i.to_string(),
                e.to_string(),
            ])?;
        }
    }
    csv.flush()?;
    Ok(())
}

type GroupKey = (TrialId, String, usize, ModelKind);

fn grouped(rows: &[ReportRow]) -> BTreeMap<GroupKey, (Vec<f64>, Vec<f64>)> {
    let mut groups: BTreeMap<GroupKey, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for r in rows {
        let g = groups.entry((r.trial, r.target.clone(), r.n_train, r.model)).or_default();
        g.0.push(r.mae_cm);
        g.1.push(r.baseline_mae_cm);
    }
    groups
}

fn write_figure_data<W: Write>(w: W, rows: &[ReportRow], with_size: bool) -> Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    let mut header = vec!["trial", "target"];
    if with_size {
        header.push("n_train");
    }
    header.extend(["model", "median_mae_cm", "median_baseline_mae_cm"]);
    csv.write_record(&header)?;
    let med = |v: &[f64]| median(v).map(|m| m.to_string()).unwrap_or_default();
    for ((trial, target, n, model), (mae, base)) in grouped(rows) {
        let mut rec = vec![trial.to_string(), target];
        if with_size {
            rec.push(n.to_string());
        }
        rec.extend([model.to_string(), med(&mae), med(&base)]);
        csv.write_record(&rec)?;
    }
    csv.flush()?;
    Ok(())
}

/// Writes the tidy report and the per-figure data files into `dir`.
pub fn emit_report(reports: &[TrialReport], dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let rows: Vec<ReportRow> = reports.iter().flat_map(|r| r.rows.iter().cloned()).collect();
    let histories: Vec<HistoryRecord> = reports.iter().flat_map(|r| r.histories.iter().cloned()).collect();
    let errors: Vec<DesignErrorRecord> = reports.iter().flat_map(|r| r.design_errors.iter().cloned()).collect();
    write_report_csv(File::create(dir.join("report.csv"))?, &rows)?;
    write_histories(File::create(dir.join("loss_history.csv"))?, &histories)?;
    write_design_errors(File::create(dir.join("design_errors.csv"))?, &errors)?;
    let generalization: Vec<ReportRow> = rows
        .iter()
        .filter(|r| !r.trial.is_transfer() || r.model == ModelKind::Transfer || r.model == ModelKind::Pretrained)
        .cloned()
        .collect();
    write_figure_data(File::create(dir.join("fig4_generalization.csv"))?, &generalization, false)?;
    let efficiency: Vec<ReportRow> = rows.iter().filter(|r| r.trial.is_transfer()).cloned().collect();
    write_figure_data(File::create(dir.join("fig7_data_efficiency.csv"))?, &efficiency, true)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows() -> Vec<ReportRow> {
        let mut rows = vec![
            ReportRow::new(TrialId::D, "dm7", 100, 0, ModelKind::Scratch, 0.2, 0.5),
            ReportRow::new(TrialId::D, "dm7", 100, 0, ModelKind::Transfer, 0.1, 0.5),
            ReportRow::new(TrialId::D, "dm7", 100, 0, ModelKind::Baseline, 0.5, 0.5),
        ];
        attach_deltas(&mut rows);
        rows
    }

    #[test]
    fn delta_and_flags() {
        let r = rows();
        assert_eq!(r[1].delta_mae_pct, Some(-50.0));
        assert_eq!(r[0].delta_mae_pct, None);
        assert!(r[1].beats_baseline);
        assert!(!r[2].beats_baseline);
    }

    #[test]
    fn csv_round_trip() {
        let r = rows();
        let mut buf = Vec::new();
        write_report_csv(&mut buf, &r).unwrap();
        assert_eq!(read_report_csv(buf.as_slice()).unwrap(), r);
    }

    #[test]
    fn empty_report_is_header_only() {
        let mut buf = Vec::new();
        write_report_csv(&mut buf, &[]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 1);
    }
}
