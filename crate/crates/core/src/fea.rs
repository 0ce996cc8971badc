//! Linear-elastic 2D direct stiffness solver.
//!
//! Supports are applied by eliminating restrained degrees of freedom; the
//! reduced system is factored with a dense Cholesky decomposition. A pivot
//! that collapses relative to the matrix diagonal marks the design as a
//! mechanism.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Material, Truss};

const MIN_MEMBER_LENGTH: f64 = 1e-9;
const PIVOT_TOLERANCE: f64 = 1e-10;
const RESIDUAL_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ElementKind {
    /// Axial rod, 2 DOF per joint.
    TrussBar,
    /// Euler-Bernoulli frame, 3 DOF per joint.
    #[default]
    FrameBeam,
}

impl ElementKind {
    pub fn dofs_per_joint(self) -> usize {
        match self {
            ElementKind::TrussBar => 2,
            ElementKind::FrameBeam => 3,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ElementKind::TrussBar => "truss_bar",
            ElementKind::FrameBeam => "frame_beam",
        }
    }
}

impl std::str::FromStr for ElementKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "truss_bar" => Ok(ElementKind::TrussBar),
            "frame_beam" => Ok(ElementKind::FrameBeam),
            other => Err(Error::invalid(format!("unknown element kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    /// Translational displacements, one row per joint.
    pub displacements: Array2<f64>,
    /// Joint rotations for frame solves.
    pub rotations: Option<Vec<f64>>,
    pub max_displacement: f64,
    /// `‖K u − f‖∞ / ‖f‖∞` on the reduced system.
    pub residual: f64,
}

/// Element stiffness in global coordinates (4×4 for bars, 6×6 for frames).
pub fn element_stiffness(
    a: [f64; 2],
    b: [f64; 2],
    material: &Material,
    kind: ElementKind,
) -> Result<Array2<f64>> {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let length = dx.hypot(dy);
    if !(length > MIN_MEMBER_LENGTH) {
        return Err(Error::invalid(format!("member length {length} is degenerate")));
    }
    let (c, s) = (dx / length, dy / length);
    let ea_l = material.elastic_modulus() * material.section_area() / length;
    match kind {
        ElementKind::TrussBar => {
            let (cc, ss, cs) = (c * c, s * s, c * s);
            let k = ndarray::arr2(&[
                [cc, cs, -cc, -cs],
                [cs, ss, -cs, -ss],
                [-cc, -cs, cc, cs],
                [-cs, -ss, cs, ss],
            ]);
            Ok(k * ea_l)
        }
        ElementKind::FrameBeam => {
            let ei = material.elastic_modulus() * material.second_moment();
            let l = length;
            let k1 = 12.0 * ei / l.powi(3);
            let k2 = 6.0 * ei / l.powi(2);
            let k3 = 4.0 * ei / l;
            let k4 = 2.0 * ei / l;
            let local = ndarray::arr2(&[
                [ea_l, 0.0, 0.0, -ea_l, 0.0, 0.0],
                [0.0, k1, k2, 0.0, -k1, k2],
                [0.0, k2, k3, 0.0, -k2, k4],
                [-ea_l, 0.0, 0.0, ea_l, 0.0, 0.0],
                [0.0, -k1, -k2, 0.0, k1, -k2],
                [0.0, k2, k4, 0.0, -k2, k3],
            ]);
            let mut rot = Array2::zeros((6, 6));
            for blk in [0, 3] {
                rot[[blk, blk]] = c;
                rot[[blk, blk + 1]] = s;
                rot[[blk + 1, blk]] = -s;
                rot[[blk + 1, blk + 1]] = c;
                rot[[blk + 2, blk + 2]] = 1.0;
            }
            Ok(rot.t().dot(&local).dot(&rot))
        }
    }
}

/// Global stiffness matrix before boundary conditions.
pub fn assemble(truss: &Truss, kind: ElementKind) -> Result<Array2<f64>> {
    let dpj = kind.dofs_per_joint();
    let ndof = truss.joint_count() * dpj;
    let mut k = Array2::zeros((ndof, ndof));
    for &(a, b) in truss.members() {
        let ke = element_stiffness(
            truss.joints()[a].position,
            truss.joints()[b].position,
            truss.material(),
            kind,
        )?;
        let dofs: Vec<usize> = (0..dpj).map(|d| a * dpj + d).chain((0..dpj).map(|d| b * dpj + d)).collect();
        for (r, &gr) in dofs.iter().enumerate() {
            for (c, &gc) in dofs.iter().enumerate() {
                k[[gr, gc]] += ke[[r, c]];
            }
        }
    }
    Ok(k)
}

/// Global load vector (moments are zero).
pub fn load_vector(truss: &Truss, kind: ElementKind) -> Array1<f64> {
    let dpj = kind.dofs_per_joint();
    let mut f = Array1::zeros(truss.joint_count() * dpj);
    for (i, j) in truss.joints().iter().enumerate() {
        f[i * dpj] = j.load[0];
        f[i * dpj + 1] = j.load[1];
    }
    f
}

fn restrained_dofs(truss: &Truss, kind: ElementKind) -> Vec<bool> {
    let dpj = kind.dofs_per_joint();
    let mut fixed = vec![false; truss.joint_count() * dpj];
    for (i, j) in truss.joints().iter().enumerate() {
        fixed[i * dpj] = j.support[0];
        fixed[i * dpj + 1] = j.support[1];
        if dpj == 3 {
            fixed[i * dpj + 2] = j.fixed_rotation;
        }
    }
    fixed
}

pub fn solve(truss: &Truss, kind: ElementKind) -> Result<SolveResult> {
    let k = assemble(truss, kind)?;
    let f = load_vector(truss, kind);
    let fixed = restrained_dofs(truss, kind);
    let free: Vec<usize> = (0..fixed.len()).filter(|&d| !fixed[d]).collect();

    let nf = free.len();
    let mut kr = Array2::zeros((nf, nf));
    let mut fr = Array1::zeros(nf);
    for (r, &gr) in free.iter().enumerate() {
        fr[r] = f[gr];
        for (c, &gc) in free.iter().enumerate() {
            kr[[r, c]] = k[[gr, gc]];
        }
    }

    let chol = cholesky(&kr)?;
    let ur = cholesky_solve(&chol, &fr);
    if ur.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite displacement".into()));
    }

    let f_norm = fr.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let residual = if f_norm > 0.0 {
        let r = kr.dot(&ur) - &fr;
        r.iter().fold(0.0_f64, |m, v| m.max(v.abs())) / f_norm
    } else {
        0.0
    };
    if residual > RESIDUAL_TOLERANCE {
        return Err(Error::Numerical(format!(
            "equilibrium residual {residual:e} exceeds {RESIDUAL_TOLERANCE:e}; system is ill-conditioned"
        )));
    }

    let dpj = kind.dofs_per_joint();
    let mut u = vec![0.0; fixed.len()];
    for (r, &g) in free.iter().enumerate() {
        u[g] = ur[r];
    }
    let n = truss.joint_count();
    let displacements = Array2::from_shape_fn((n, 2), |(i, c)| u[i * dpj + c]);
    let rotations = (dpj == 3).then(|| (0..n).map(|i| u[i * 3 + 2]).collect());
    let max_displacement = displacements
        .rows()
        .into_iter()
        .map(|r| r[0].hypot(r[1]))
        .fold(0.0, f64::max);
    Ok(SolveResult {
        displacements,
        rotations,
        max_displacement,
        residual,
    })
}

/// Lower-triangular Cholesky factor. Rejects pivots that are non-positive or
/// negligible relative to the largest diagonal entry.
fn cholesky(a: &Array2<f64>) -> Result<Array2<f64>> {
    let n = a.nrows();
    let scale = (0..n).map(|i| a[[i, i]].abs()).fold(0.0, f64::max);
    let mut l = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        let mut d = a[[j, j]];
        for k in 0..j {
            d -= l[[j, k]] * l[[j, k]];
        }
        if !(d > PIVOT_TOLERANCE * scale) {
            return Err(Error::Mechanism(format!(
                "reduced stiffness pivot {j} is {d:e} (diagonal scale {scale:e})"
            )));
        }
        let djj = d.sqrt();
        l[[j, j]] = djj;
        for i in (j + 1)..n {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = s / djj;
        }
    }
    Ok(l)
}

fn cholesky_solve(l: &Array2<f64>, b: &Array1<f64>) -> Array1<f64> {
    let n = b.len();
    let mut y = b.clone();
    for i in 0..n {
        let mut s = y[i];
        for k in 0..i {
            s -= l[[i, k]] * y[k];
        }
        y[i] = s / l[[i, i]];
    }
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s -= l[[k, i]] * y[k];
        }
        y[i] = s / l[[i, i]];
    }
    y
}
