//! On-disk formats: JSON-Lines datasets, truss description files and CSV
//! tables for loss histories and displacement fields.
//!
//! A dataset file starts with one metadata object followed by one object per
//! design:
//!
//! ```text
//! {"format_version":1,"design_model":"dm7","load_newtons":11100.0,"element_kind":"frame_beam","seed":0,"filter":"none"}
//! {"nodes":[[x,y,sx,sy,lx,ly],...],"edges":[[i,j],...],"targets":[[dx,dy],...],"tag":"dm7"}
//! ```
//!
//! Floats are written in shortest round-trip form, so reading a file back
//! reproduces every value bit for bit.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::designgen::{Dataset, DatasetMetadata, DATASET_FORMAT_VERSION};
use crate::error::{Error, Result};
use crate::fea::{ElementKind, SolveResult};
use crate::gsm::LossHistory;
use crate::model::{GraphSample, Truss};

pub const TRUSS_FORMAT_VERSION: u32 = 1;

const METADATA_FIELDS: [&str; 6] = ["format_version", "design_model", "load_newtons", "element_kind", "seed", "filter"];
const SAMPLE_FIELDS: [&str; 4] = ["nodes", "edges", "targets", "tag"];

#[derive(Debug, Serialize, Deserialize)]
struct SampleRecord {
    nodes: Vec<Vec<f64>>,
    edges: Vec<[usize; 2]>,
    targets: Vec<[f64; 2]>,
    tag: String,
}

impl SampleRecord {
    fn from_sample(s: &GraphSample) -> Self {
        SampleRecord {
            nodes: s.node_features().rows().into_iter().map(|r| r.to_vec()).collect(),
            edges: s.edges().iter().map(|&(i, j)| [i, j]).collect(),
            targets: s.targets().rows().into_iter().map(|r| [r[0], r[1]]).collect(),
            tag: s.source_tag().to_string(),
        }
    }

    fn into_sample(self) -> Result<GraphSample> {
        let n = self.nodes.len();
        let width = self.nodes.first().map_or(0, Vec::len);
        if self.nodes.iter().any(|r| r.len() != width) {
            return Err(Error::Format("ragged node feature rows".into()));
        }
        let features = Array2::from_shape_vec((n, width), self.nodes.into_iter().flatten().collect())
            .map_err(|e| Error::Format(e.to_string()))?;
        let targets = Array2::from_shape_vec((self.targets.len(), 2), self.targets.into_iter().flatten().collect())
            .map_err(|e| Error::Format(e.to_string()))?;
        let edges = self.edges.into_iter().map(|[i, j]| (i, j)).collect();
        GraphSample::new(features, edges, targets, self.tag)
    }
}

fn check_fields(value: &Value, allowed: &[&str], what: &str) -> Result<()> {
    let obj = value
        .as_object()
        .ok_or_else(|| Error::Format(format!("{what} is not a JSON object")))?;
    if let Some(k) = obj.keys().find(|k| !allowed.contains(&k.as_str())) {
        return Err(Error::Format(format!("unknown field {k:?} in {what}")));
    }
    Ok(())
}

pub fn write_dataset<W: Write>(mut w: W, dataset: &Dataset) -> Result<()> {
    serde_json::to_writer(&mut w, &dataset.metadata)?;
    w.write_all(b"\n")?;
    for s in &dataset.samples {
        serde_json::to_writer(&mut w, &SampleRecord::from_sample(s))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a dataset. With `strict`, unknown fields anywhere are rejected;
/// otherwise they are ignored.
pub fn read_dataset<R: BufRead>(r: R, strict: bool) -> Result<Dataset> {
    let mut lines = r.lines().enumerate().filter(|(_, l)| l.as_ref().map_or(true, |l| !l.trim().is_empty()));
    let (_, first) = lines
        .next()
        .ok_or_else(|| Error::Format("dataset file is empty".into()))?;
    let meta: Value = serde_json::from_str(&first?)?;
    if strict {
        check_fields(&meta, &METADATA_FIELDS, "dataset metadata")?;
    }
    let metadata: DatasetMetadata = serde_json::from_value(meta)?;
    if metadata.format_version != DATASET_FORMAT_VERSION {
        return Err(Error::Version {
            found: metadata.format_version,
            expected: DATASET_FORMAT_VERSION,
        });
    }
    let mut samples = Vec::new();
    for (i, line) in lines {
        let at = |e: Error| Error::Format(format!("line {}: {e}", i + 1));
        let value: Value = serde_json::from_str(&line?).map_err(|e| at(e.into()))?;
        if strict {
            check_fields(&value, &SAMPLE_FIELDS, "sample").map_err(at)?;
        }
        let record: SampleRecord = serde_json::from_value(value).map_err(|e| at(e.into()))?;
        samples.push(record.into_sample().map_err(at)?);
    }
    Ok(Dataset::new(metadata, samples))
}

pub fn save_dataset(path: impl AsRef<Path>, dataset: &Dataset) -> Result<()> {
    write_dataset(BufWriter::new(File::create(path)?), dataset)
}

pub fn load_dataset(path: impl AsRef<Path>, strict: bool) -> Result<Dataset> {
    read_dataset(BufReader::new(File::open(path)?), strict)
}

/// Single truss description for standalone FEA.
///
/// ```text
/// {"format_version":1,"element_kind":"frame_beam",
///  "truss":{"joints":[{"position":[0,0],"support":[true,true],"load":[0,0]},...],
///           "members":[[0,1],...],
///           "material":{"elastic_modulus":2.1e11,"section_area":0.29,"second_moment":0.0023}}}
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrussFile {
    pub format_version: u32,
    #[serde(default)]
    pub element_kind: ElementKind,
    pub truss: Truss,
}

impl TrussFile {
    pub fn new(truss: Truss, element_kind: ElementKind) -> Self {
        TrussFile {
            format_version: TRUSS_FORMAT_VERSION,
            element_kind,
            truss,
        }
    }
}

pub fn load_truss(path: impl AsRef<Path>) -> Result<TrussFile> {
    let file: TrussFile = serde_json::from_reader(BufReader::new(File::open(path)?))?;
    if file.format_version != TRUSS_FORMAT_VERSION {
        return Err(Error::Version {
            found: file.format_version,
            expected: TRUSS_FORMAT_VERSION,
        });
    }
    Ok(file)
}

pub fn save_truss(path: impl AsRef<Path>, file: &TrussFile) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, file)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// Columns `epoch,train_loss,val_loss`; `val_loss` is empty when no
/// validation set was used.
pub fn write_loss_history<W: Write>(w: W, history: &LossHistory) -> Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(["epoch", "train_loss", "val_loss"])?;
    for e in &history.epochs {
        csv.write_record([
            e.epoch.to_string(),
            e.train_loss.to_string(),
            e.val_loss.map(|v| v.to_string()).unwrap_or_default(),
        ])?;
    }
    csv.flush()?;
    Ok(())
}

pub fn save_loss_history(path: impl AsRef<Path>, history: &LossHistory) -> Result<()> {
    write_loss_history(File::create(path)?, history)
}

/// Columns `joint,x,y,dx,dy` plus `rotation` for frame solutions.
pub fn write_displacements<W: Write>(w: W, truss: &Truss, result: &SolveResult) -> Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    let mut header = vec!["joint", "x", "y", "dx", "dy"];
    if result.rotations.is_some() {
        header.push("rotation");
    }
    csv.write_record(&header)?;
    for (i, j) in truss.joints().iter().enumerate() {
        let mut row = vec![
            i.to_string(),
            j.position[0].to_string(),
            j.position[1].to_string(),
            result.displacements[[i, 0]].to_string(),
            result.displacements[[i, 1]].to_string(),
        ];
        if let Some(r) = &result.rotations {
            row.push(r[i].to_string());
        }
        csv.write_record(&row)?;
    }
    csv.flush()?;
    Ok(())
}
