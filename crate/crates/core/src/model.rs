//! Physical truss designs and their graph encoding.
//!
//! A [`Truss`] is turned into a [`GraphSample`] by [`to_graph`]: one node per
//! joint carrying `[x, y, s_x, s_y, l_x, l_y]`, both directions of every
//! member as edges, and an explicit self-loop on every node.

use std::collections::HashSet;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pascal per psi.
pub const PSI_TO_PA: f64 = 6894.757;

/// Steel, 30.5 Msi.
pub const STEEL_ELASTIC_MODULUS: f64 = 30.5e6 * PSI_TO_PA;

/// Load applied to every loaded degree of freedom in the generated datasets.
pub const DEFAULT_LOAD_NEWTONS: f64 = 11_100.0;

/// Number of input features per node.
pub const NODE_FEATURES: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMaterial")]
pub struct Material {
    elastic_modulus: f64,
    section_area: f64,
    second_moment: f64,
}

#[derive(Deserialize)]
struct RawMaterial {
    elastic_modulus: f64,
    section_area: f64,
    second_moment: f64,
}

impl TryFrom<RawMaterial> for Material {
    type Error = Error;

    fn try_from(raw: RawMaterial) -> Result<Self> {
        Material::new(raw.elastic_modulus, raw.section_area, raw.second_moment)
    }
}

impl Material {
    pub fn new(elastic_modulus: f64, section_area: f64, second_moment: f64) -> Result<Self> {
        for (name, v) in [
            ("elastic_modulus", elastic_modulus),
            ("section_area", section_area),
            ("second_moment", second_moment),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(Material {
            elastic_modulus,
            section_area,
            second_moment,
        })
    }

    /// Constant steel section used by every generated dataset
    /// (A = 0.29 m², I = 2.3e-3 m⁴).
    pub fn steel_section() -> Self {
        Material {
            elastic_modulus: STEEL_ELASTIC_MODULUS,
            section_area: 0.29,
            second_moment: 2.3e-3,
        }
    }

    pub fn elastic_modulus(&self) -> f64 {
        self.elastic_modulus
    }

    pub fn section_area(&self) -> f64 {
        self.section_area
    }

    pub fn second_moment(&self) -> f64 {
        self.second_moment
    }
}

impl Default for Material {
    fn default() -> Self {
        Material::steel_section()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Joint {
    pub position: [f64; 2],
    /// x-restrained, y-restrained.
    #[serde(default)]
    pub support: [bool; 2],
    #[serde(default)]
    pub load: [f64; 2],
    /// Clamps the rotational degree of freedom when solved with frame elements.
    /// Not part of the graph encoding.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub fixed_rotation: bool,
}

impl Joint {
    pub fn free(x: f64, y: f64) -> Self {
        Joint {
            position: [x, y],
            support: [false, false],
            load: [0.0, 0.0],
            fixed_rotation: false,
        }
    }

    pub fn pinned(x: f64, y: f64) -> Self {
        Joint {
            support: [true, true],
            ..Joint::free(x, y)
        }
    }

    pub fn with_support(mut self, x: bool, y: bool) -> Self {
        self.support = [x, y];
        self
    }

    pub fn with_load(mut self, fx: f64, fy: f64) -> Self {
        self.load = [fx, fy];
        self
    }

    pub fn clamped(mut self) -> Self {
        self.support = [true, true];
        self.fixed_rotation = true;
        self
    }

    /// Restrained translations plus a clamped rotation.
    pub fn restrained_count(&self) -> usize {
        self.support.iter().filter(|s| **s).count() + usize::from(self.fixed_rotation)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTruss")]
pub struct Truss {
    joints: Vec<Joint>,
    members: Vec<(usize, usize)>,
    #[serde(default)]
    material: Material,
}

#[derive(Deserialize)]
struct RawTruss {
    joints: Vec<Joint>,
    members: Vec<(usize, usize)>,
    #[serde(default)]
    material: Material,
}

impl TryFrom<RawTruss> for Truss {
    type Error = Error;

    fn try_from(raw: RawTruss) -> Result<Self> {
        Truss::new(raw.joints, raw.members, raw.material)
    }
}

impl Truss {
    /// Members are stored with the smaller joint index first.
    pub fn new(joints: Vec<Joint>, members: Vec<(usize, usize)>, material: Material) -> Result<Self> {
        let n = joints.len();
        for (i, j) in joints.iter().enumerate() {
            if !j.position.iter().chain(j.load.iter()).all(|v| v.is_finite()) {
                return Err(Error::invalid(format!("joint {i} has non-finite data")));
            }
        }
        let mut seen = HashSet::with_capacity(members.len());
        let mut normalized = Vec::with_capacity(members.len());
        for &(a, b) in &members {
            if a >= n || b >= n {
                return Err(Error::invalid(format!(
                    "member ({a}, {b}) references a joint outside 0..{n}"
                )));
            }
            if a == b {
                return Err(Error::invalid(format!("self-member ({a}, {a})")));
            }
            let key = (a.min(b), a.max(b));
            if !seen.insert(key) {
                return Err(Error::invalid(format!("duplicate member {key:?}")));
            }
            normalized.push(key);
        }
        let restrained: usize = joints.iter().map(Joint::restrained_count).sum();
        if restrained < 3 {
            return Err(Error::invalid(format!(
                "only {restrained} restrained degrees of freedom; at least 3 are required"
            )));
        }
        Ok(Truss {
            joints,
            members: normalized,
            material,
        })
    }

    pub fn joints(&self) -> &[Joint] {
        &self.joints
    }

    pub fn members(&self) -> &[(usize, usize)] {
        &self.members
    }

    pub fn material(&self) -> &Material {
        &self.material
    }

    pub fn joint_count(&self) -> usize {
        self.joints.len()
    }

    /// Returns a copy with every load scaled by `factor`.
    pub fn scaled_loads(&self, factor: f64) -> Truss {
        let mut out = self.clone();
        for j in &mut out.joints {
            j.load = [j.load[0] * factor, j.load[1] * factor];
        }
        out
    }

    /// Returns a copy with the loads replaced joint by joint.
    pub fn with_loads(&self, loads: &[[f64; 2]]) -> Result<Truss> {
        if loads.len() != self.joints.len() {
            return Err(Error::shape(format!(
                "{} loads for {} joints",
                loads.len(),
                self.joints.len()
            )));
        }
        let mut out = self.clone();
        for (j, l) in out.joints.iter_mut().zip(loads) {
            j.load = *l;
        }
        Ok(out)
    }
}

/// One learning example: the encoded design and its joint displacements.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphSample {
    node_features: Array2<f64>,
    edges: Vec<(usize, usize)>,
    targets: Array2<f64>,
    source_tag: String,
}

impl GraphSample {
    /// Checks shapes, binary flag columns and edge indices. Neighborhood
    /// structure (symmetry, self-loops) is checked by [`GraphSample::validate_topology`].
    pub fn new(
        node_features: Array2<f64>,
        edges: Vec<(usize, usize)>,
        targets: Array2<f64>,
        source_tag: impl Into<String>,
    ) -> Result<Self> {
        let n = node_features.nrows();
        if node_features.ncols() != NODE_FEATURES {
            return Err(Error::shape(format!(
                "node features have {} columns, expected {NODE_FEATURES}",
                node_features.ncols()
            )));
        }
        if targets.dim() != (n, 2) {
            return Err(Error::shape(format!(
                "targets are {:?}, expected ({n}, 2)",
                targets.dim()
            )));
        }
        if node_features.iter().chain(targets.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite feature or target"));
        }
        for row in node_features.rows() {
            if row.iter().skip(2).any(|&v| v != 0.0 && v != 1.0) {
                return Err(Error::invalid("support/load feature columns must be 0 or 1"));
            }
        }
        if let Some(&(a, b)) = edges.iter().find(|&&(a, b)| a >= n || b >= n) {
            return Err(Error::invalid(format!("edge ({a}, {b}) out of range for {n} nodes")));
        }
        Ok(GraphSample {
            node_features,
            edges,
            targets,
            source_tag: source_tag.into(),
        })
    }

    /// Every node has a self-loop and every edge has its reverse.
    pub fn validate_topology(&self) -> Result<()> {
        validate_edges(self.node_count(), &self.edges)
    }

    pub fn node_features(&self) -> &Array2<f64> {
        &self.node_features
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn targets(&self) -> &Array2<f64> {
        &self.targets
    }

    pub fn source_tag(&self) -> &str {
        &self.source_tag
    }

    pub fn node_count(&self) -> usize {
        self.node_features.nrows()
    }

    /// Largest Euclidean joint displacement.
    pub fn max_displacement(&self) -> f64 {
        self.targets
            .rows()
            .into_iter()
            .map(|r| r[0].hypot(r[1]))
            .fold(0.0, f64::max)
    }

    /// Joint coordinates flattened as `[x0, y0, x1, y1, ...]`.
    pub fn flat_coordinates(&self) -> Vec<f64> {
        self.node_features
            .rows()
            .into_iter()
            .flat_map(|r| [r[0], r[1]])
            .collect()
    }

    pub fn with_targets(&self, targets: Array2<f64>) -> Result<Self> {
        GraphSample::new(
            self.node_features.clone(),
            self.edges.clone(),
            targets,
            self.source_tag.clone(),
        )
    }

    /// Identity of the design (features and edges), independent of targets.
    pub fn design_hash(&self) -> u64 {
        use std::hash::{Hash, Hasher};
        let mut h = std::collections::hash_map::DefaultHasher::new();
        self.node_features.dim().hash(&mut h);
        for v in self.node_features.iter() {
            v.to_bits().hash(&mut h);
        }
        self.edges.hash(&mut h);
        h.finish()
    }
}

pub(crate) fn validate_edges(n: usize, edges: &[(usize, usize)]) -> Result<()> {
    let set: HashSet<(usize, usize)> = edges.iter().copied().collect();
    if let Some(i) = (0..n).find(|i| !set.contains(&(*i, *i))) {
        return Err(Error::invalid(format!("node {i} has no self-loop")));
    }
    if let Some(&(a, b)) = edges.iter().find(|&&(a, b)| !set.contains(&(b, a))) {
        return Err(Error::invalid(format!("edge ({a}, {b}) has no reverse edge")));
    }
    Ok(())
}

/// Encodes a design and its displacement field as a graph sample.
///
/// Edges are emitted member by member as `(a, b), (b, a)` followed by one
/// self-loop per node, so the directed edge count is `2·members + joints`.
pub fn to_graph(truss: &Truss, displacements: &Array2<f64>, source_tag: &str) -> Result<GraphSample> {
    let n = truss.joint_count();
    if displacements.dim() != (n, 2) {
        return Err(Error::shape(format!(
            "displacements are {:?}, expected ({n}, 2)",
            displacements.dim()
        )));
    }
    let flag = |b: bool| if b { 1.0 } else { 0.0 };
    let mut features = Array2::zeros((n, NODE_FEATURES));
    for (i, j) in truss.joints().iter().enumerate() {
        let row = [
            j.position[0],
            j.position[1],
            flag(j.support[0]),
            flag(j.support[1]),
            flag(j.load[0] != 0.0),
            flag(j.load[1] != 0.0),
        ];
        for (c, v) in row.into_iter().enumerate() {
            features[[i, c]] = v;
        }
    }
    let mut edges = Vec::with_capacity(2 * truss.members().len() + n);
    for &(a, b) in truss.members() {
        edges.push((a, b));
        edges.push((b, a));
    }
    edges.extend((0..n).map(|i| (i, i)));
    GraphSample::new(features, edges, displacements.clone(), source_tag)
}

/// Rebuilds a truss from a graph sample.
///
/// Load magnitudes are not part of the encoding: a flagged x-load becomes
/// `+load_newtons` and a flagged y-load becomes `-load_newtons` (gravity).
/// Members come back in the order `to_graph` emitted them.
pub fn from_graph(sample: &GraphSample, load_newtons: f64, material: Material) -> Result<Truss> {
    sample.validate_topology()?;
    let joints = sample
        .node_features()
        .rows()
        .into_iter()
        .map(|r| Joint {
            position: [r[0], r[1]],
            support: [r[2] == 1.0, r[3] == 1.0],
            load: [
                if r[4] == 1.0 { load_newtons } else { 0.0 },
                if r[5] == 1.0 { -load_newtons } else { 0.0 },
            ],
            fixed_rotation: false,
        })
        .collect();
    let members = sample
        .edges()
        .iter()
        .filter(|(a, b)| a < b)
        .copied()
        .collect();
    Truss::new(joints, members, material)
}
