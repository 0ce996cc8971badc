use std::f64::consts::PI;
use std::fmt;

use crate::error::{Error, Result};
use crate::model::{Joint, Material, Truss, DEFAULT_LOAD_NEWTONS};

const SPAN: f64 = 10.0;
const TOWER_BASE_WIDTH: f64 = 3.0;
const TOWER_LEVELS: usize = 6;
const BRIDGE_PANEL_WIDTH: f64 = 1.0;

/// Panel count of the full bridge (404 members).
pub const BRIDGE_PANELS: usize = 100;
/// Panel count of the reduced bridge (100 members).
pub const SMALL_BRIDGE_PANELS: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    /// Spanning truss with `bays` bars along the top chord, uniformly loaded on top.
    Spanning { bays: usize },
    /// Spanning truss loaded only at the two ends of the top chord.
    SpanningEndLoads { bays: usize },
    Tower,
    Bridge { panels: usize },
}

/// A named parametric generator.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignModel {
    name: String,
    family: Family,
    bounds: Vec<(f64, f64)>,
}

impl fmt::Display for DesignModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

fn spanning_bounds() -> Vec<(f64, f64)> {
    vec![
        (1.5, 2.5),   // overall height
        (-0.4, 0.6),  // top chord camber at mid-span
        (-0.25, 0.25), // horizontal shear of the bottom joints, in bays
        (-0.4, 0.6),  // bottom chord sag at mid-span
        (-0.3, 0.3),  // bay-width skew
    ]
}

impl DesignModel {
    /// Accepts `dm<k>`, `dm<k>_endloads`, `tower`, `bridge`, `bridge_small`.
    pub fn by_name(name: &str) -> Result<Self> {
        let family = match name {
            "tower" => Family::Tower,
            "bridge" => Family::Bridge { panels: BRIDGE_PANELS },
            "bridge_small" => Family::Bridge {
                panels: SMALL_BRIDGE_PANELS,
            },
            _ => {
                let parse_bays = |s: &str| s.parse::<usize>().ok().filter(|k| (2..=40).contains(k));
                match name.strip_prefix("dm") {
                    Some(rest) => match rest.strip_suffix("_endloads") {
                        Some(k) => parse_bays(k).map(|bays| Family::SpanningEndLoads { bays }),
                        None => parse_bays(rest).map(|bays| Family::Spanning { bays }),
                    },
                    None => None,
                }
                .ok_or_else(|| Error::invalid(format!("unknown design model {name:?}")))?
            }
        };
        Ok(DesignModel::new(family))
    }

    pub fn new(family: Family) -> Self {
        let (name, bounds) = match family {
            Family::Spanning { bays } => (format!("dm{bays}"), spanning_bounds()),
            Family::SpanningEndLoads { bays } => (format!("dm{bays}_endloads"), spanning_bounds()),
            Family::Tower => (
                "tower".to_string(),
                vec![
                    (8.0, 14.0),  // height
                    (0.0, 0.6),   // taper of the top width
                    (-0.3, 0.3),  // level-spacing skew
                ],
            ),
            Family::Bridge { panels } => (
                if panels == BRIDGE_PANELS {
                    "bridge".to_string()
                } else if panels == SMALL_BRIDGE_PANELS {
                    "bridge_small".to_string()
                } else {
                    format!("bridge{panels}")
                },
                vec![
                    (3.0, 5.0), // depth
                    (0.0, 2.0), // top chord camber
                    (0.0, 1.5), // bottom chord arch
                ],
            ),
        };
        DesignModel { name, family, bounds }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn param_count(&self) -> usize {
        self.bounds.len()
    }

    pub fn param_bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    /// Maps a point of the unit cube onto the parameter bounds.
    pub fn scale_unit(&self, unit: &[f64]) -> Result<Vec<f64>> {
        if unit.len() != self.param_count() {
            return Err(Error::shape(format!(
                "{} takes {} parameters, got {}",
                self.name,
                self.param_count(),
                unit.len()
            )));
        }
        Ok(unit
            .iter()
            .zip(&self.bounds)
            .map(|(u, (lo, hi))| lo + u * (hi - lo))
            .collect())
    }

    pub fn generate(&self, params: &[f64]) -> Result<Truss> {
        if params.len() != self.param_count() {
            return Err(Error::shape(format!(
                "{} takes {} parameters, got {}",
                self.name,
                self.param_count(),
                params.len()
            )));
        }
        for (i, (p, (lo, hi))) in params.iter().zip(&self.bounds).enumerate() {
            if !(*lo <= *p && *p <= *hi) {
                return Err(Error::invalid(format!(
                    "{} parameter {i} = {p} outside [{lo}, {hi}]",
                    self.name
                )));
            }
        }
        match self.family {
            Family::Spanning { bays } => spanning(bays, params, LoadPattern::TopChord),
            Family::SpanningEndLoads { bays } => spanning(bays, params, LoadPattern::TopEnds),
            Family::Tower => tower(params),
            Family::Bridge { panels } => bridge(panels, params),
        }
    }

    /// Member count of every design this model generates.
    pub fn member_count(&self) -> usize {
        match self.family {
            Family::Spanning { bays } | Family::SpanningEndLoads { bays } => 4 * bays - 1,
            Family::Tower => 26,
            Family::Bridge { panels } => 4 * panels + 4,
        }
    }

    pub fn joint_count(&self) -> usize {
        match self.family {
            Family::Spanning { bays } | Family::SpanningEndLoads { bays } => 2 * bays + 1,
            Family::Tower => 2 * TOWER_LEVELS + 1,
            Family::Bridge { panels } => 2 * (panels + 1),
        }
    }
}

/// Monotone warp of `[0, 1]` onto itself; `|skew| < 1` keeps it increasing.
fn warp(t: f64, skew: f64) -> f64 {
    t + skew * t * (1.0 - t)
}

#[derive(Clone, Copy)]
enum LoadPattern {
    TopChord,
    TopEnds,
}

/// `bays + 1` top joints (indices `0..=bays`) over `bays` bottom joints
/// centred under each bay, braced as a Warren truss. The two outer bottom
/// joints carry a pin and a roller.
fn spanning(bays: usize, p: &[f64], loads: LoadPattern) -> Result<Truss> {
    let (height, camber, shear, sag, skew) = (p[0], p[1], p[2], p[3], p[4]);
    let k = bays as f64;
    let load = DEFAULT_LOAD_NEWTONS;
    let mut joints = Vec::with_capacity(2 * bays + 1);
    for i in 0..=bays {
        let t = i as f64 / k;
        let mut j = Joint::free(SPAN * warp(t, skew), height + camber * (PI * t).sin());
        let loaded = match loads {
            LoadPattern::TopChord => true,
            LoadPattern::TopEnds => i == 0 || i == bays,
        };
        if loaded {
            j = j.with_load(0.0, -load);
        }
        joints.push(j);
    }
    for i in 0..bays {
        let t = (i as f64 + 0.5 + shear) / k;
        let mut j = Joint::free(SPAN * warp(t, skew), -sag * (PI * t).sin());
        if i == 0 {
            j = j.with_support(true, true);
        } else if i == bays - 1 {
            j = j.with_support(false, true);
        }
        joints.push(j);
    }
    let bottom = |i: usize| bays + 1 + i;
    let mut members = Vec::with_capacity(4 * bays - 1);
    members.extend((0..bays).map(|i| (i, i + 1)));
    members.extend((0..bays - 1).map(|i| (bottom(i), bottom(i + 1))));
    for i in 0..bays {
        members.push((i, bottom(i)));
        members.push((bottom(i), i + 1));
    }
    Truss::new(joints, members, Material::steel_section())
}

/// Two-legged lattice tower with an apex joint. Both base joints are pinned
/// and every other joint carries a horizontal load.
fn tower(p: &[f64]) -> Result<Truss> {
    let (height, taper, skew) = (p[0], p[1], p[2]);
    let levels = TOWER_LEVELS as f64;
    let mut joints = Vec::with_capacity(2 * TOWER_LEVELS + 1);
    for l in 0..TOWER_LEVELS {
        let t = l as f64 / levels;
        let y = height * warp(t, skew);
        let half = 0.5 * TOWER_BASE_WIDTH * (1.0 - taper * t);
        for x in [-half, half] {
            joints.push(if l == 0 {
                Joint::pinned(x, y)
            } else {
                Joint::free(x, y).with_load(DEFAULT_LOAD_NEWTONS, 0.0)
            });
        }
    }
    joints.push(Joint::free(0.0, height).with_load(DEFAULT_LOAD_NEWTONS, 0.0));
    let apex = 2 * TOWER_LEVELS;

    let mut members = Vec::with_capacity(26);
    for l in 0..TOWER_LEVELS - 1 {
        members.push((2 * l, 2 * l + 2));
        members.push((2 * l + 1, 2 * l + 3));
    }
    for l in 1..TOWER_LEVELS {
        members.push((2 * l, 2 * l + 1));
    }
    for l in 0..TOWER_LEVELS - 2 {
        members.push((2 * l, 2 * l + 3));
        members.push((2 * l + 1, 2 * l + 2));
    }
    let top_panel = TOWER_LEVELS - 2;
    members.push((2 * top_panel, 2 * top_panel + 3));
    members.push((apex - 2, apex));
    members.push((apex - 1, apex));
    Truss::new(joints, members, Material::steel_section())
}

/// X-braced deck truss with verticals only over the two end panels:
/// `4·panels + 4` members. Top joints carry the load; the outer bottom joints
/// carry a pin and a roller.
fn bridge(panels: usize, p: &[f64]) -> Result<Truss> {
    let (depth, camber, arch) = (p[0], p[1], p[2]);
    let span = panels as f64 * BRIDGE_PANEL_WIDTH;
    let mut joints = Vec::with_capacity(2 * (panels + 1));
    for i in 0..=panels {
        let x = i as f64 * BRIDGE_PANEL_WIDTH;
        let rise = (PI * x / span).sin();
        joints.push(Joint::free(x, depth + camber * rise).with_load(0.0, -DEFAULT_LOAD_NEWTONS));
    }
    for i in 0..=panels {
        let x = i as f64 * BRIDGE_PANEL_WIDTH;
        let mut j = Joint::free(x, arch * (PI * x / span).sin());
        if i == 0 {
            j = j.with_support(true, true);
        } else if i == panels {
            j = j.with_support(false, true);
        }
        joints.push(j);
    }
    let bottom = |i: usize| panels + 1 + i;
    let mut members = Vec::with_capacity(4 * panels + 4);
    members.extend((0..panels).map(|i| (i, i + 1)));
    members.extend((0..panels).map(|i| (bottom(i), bottom(i + 1))));
    for i in 0..panels {
        members.push((i, bottom(i + 1)));
        members.push((bottom(i), i + 1));
    }
    for i in [0, 1, panels - 1, panels] {
        members.push((i, bottom(i)));
    }
    Truss::new(joints, members, Material::steel_section())
}
