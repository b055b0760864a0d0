//! Sphere-per-cell intersection geometry and the per-round objectives.
//!
//! Every cell is replaced by its inscribed sphere of radius `R = delta / 2`.
//! A straight segment traverses a cell when the distance from the cell
//! center to the segment is strictly below `R`; the length it spends inside
//! the cell is the part of the segment inside that sphere. Inscribed spheres
//! of distinct cells are disjoint, so the per-cell lengths of one segment
//! never add up to more than the segment itself.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::ckm::ChannelKnowledgeMap;
use crate::error::{Error, Result};
use crate::grid::{GridIndex, GridSpec};
use crate::vec3::{self, Point3};

/// Distance from `c` to the segment `a`-`b`: perpendicular when the foot of
/// the perpendicular falls inside the segment, else to the nearer endpoint.
pub fn point_segment_distance(c: Point3, a: Point3, b: Point3) -> Result<f64> {
    let ab = vec3::sub(b, a);
    let len2 = vec3::dot(ab, ab);
    if len2 == 0.0 {
        return Err(Error::CoincidentPoints("segment endpoints"));
    }
    let t = vec3::dot(vec3::sub(c, a), ab) / len2;
    if t <= 0.0 {
        Ok(vec3::dist(c, a))
    } else if t >= 1.0 {
        Ok(vec3::dist(c, b))
    } else {
        Ok(vec3::norm(vec3::cross(vec3::sub(a, c), ab)) / len2.sqrt())
    }
}

/// Chord of a circle of radius `r` cut by a line at distance `dist` from its center.
pub fn chord_length(dist: f64, r: f64) -> f64 {
    if dist < r {
        2.0 * (r * r - dist * dist).sqrt()
    } else {
        0.0
    }
}

/// Length of the segment `a`-`b` lying inside the sphere of radius `r` at `c`.
///
/// Equals [`chord_length`] of the perpendicular distance when the whole chord
/// lies between the endpoints; shorter when an endpoint sits inside the sphere.
pub fn segment_chord(c: Point3, a: Point3, b: Point3, r: f64) -> f64 {
    let ab = vec3::sub(b, a);
    let len = vec3::norm(ab);
    if len == 0.0 {
        return 0.0;
    }
    let u = vec3::scale(ab, 1.0 / len);
    let ac = vec3::sub(c, a);
    let t0 = vec3::dot(ac, u);
    let perp2 = (vec3::dot(ac, ac) - t0 * t0).max(0.0);
    if perp2 >= r * r {
        return 0.0;
    }
    let h = (r * r - perp2).sqrt();
    ((t0 + h).min(len) - (t0 - h).max(0.0)).max(0.0)
}

/// One cell crossed by a segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Traversal {
    pub idx: GridIndex,
    pub linear: usize,
    pub dist: f64,
    /// In-cell length of the segment.
    pub chord: f64,
}

/// Cells traversed by the segment between two cell centers.
pub fn traversed_grids(a: GridIndex, b: GridIndex, spec: &GridSpec) -> Result<Vec<Traversal>> {
    if a == b {
        return Err(Error::CoincidentPoints("segment endpoints"));
    }
    Ok(traversed_between(spec.center(a), spec.center(b), spec))
}

/// Cells traversed by an arbitrary segment `pa`-`pb` (`pa != pb`), in linear order.
///
/// Only cells inside the segment's bounding box inflated by one cell are tested.
pub fn traversed_between(pa: Point3, pb: Point3, spec: &GridSpec) -> Vec<Traversal> {
    let r = spec.radius();
    let mut lo = [0usize; 3];
    let mut hi = [0usize; 3];
    for ax in 0..3 {
        let min = pa[ax].min(pb[ax]) - spec.delta;
        let max = pa[ax].max(pb[ax]) + spec.delta;
        let upper = spec.origin[ax] + spec.delta * spec.dims[ax] as f64;
        if max < spec.origin[ax] || min > upper {
            return Vec::new();
        }
        lo[ax] = spec.axis_cell_clamped(ax, min);
        hi[ax] = spec.axis_cell_clamped(ax, max);
    }
    let mut out = Vec::new();
    for k in lo[2]..=hi[2] {
        for j in lo[1]..=hi[1] {
            for i in lo[0]..=hi[0] {
                let idx = GridIndex::new(i, j, k);
                let c = spec.center(idx);
                let Ok(d) = point_segment_distance(c, pa, pb) else {
                    continue;
                };
                if d < r {
                    out.push(Traversal {
                        idx,
                        linear: spec.linear(idx),
                        dist: d,
                        chord: segment_chord(c, pa, pb, r),
                    });
                }
            }
        }
    }
    out
}

/// Waypoints of one flight round.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trajectory {
    pub round: usize,
    pub waypoints: Vec<GridIndex>,
}

impl Trajectory {
    pub fn new(round: usize, waypoints: Vec<GridIndex>, spec: &GridSpec) -> Result<Self> {
        if waypoints.len() < 2 {
            return Err(Error::InsufficientData {
                what: "trajectory waypoints",
                needed: 2,
                got: waypoints.len(),
            });
        }
        for w in &waypoints {
            spec.check(*w)?;
        }
        if waypoints.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("waypoints", "consecutive waypoints must differ"));
        }
        Ok(Trajectory { round, waypoints })
    }

    pub fn start(&self) -> GridIndex {
        self.waypoints[0]
    }

    pub fn end(&self) -> GridIndex {
        *self.waypoints.last().expect("trajectory has waypoints")
    }

    pub fn points(&self, spec: &GridSpec) -> Vec<Point3> {
        self.waypoints.iter().map(|w| spec.center(*w)).collect()
    }

    /// Total flown length `T_r`.
    pub fn length(&self, spec: &GridSpec) -> f64 {
        self.points(spec)
            .windows(2)
            .map(|w| vec3::dist(w[0], w[1]))
            .sum()
    }

    /// Per-segment traversals.
    pub fn segments(&self, spec: &GridSpec) -> Vec<Vec<Traversal>> {
        self.waypoints
            .windows(2)
            .map(|w| traversed_between(spec.center(w[0]), spec.center(w[1]), spec))
            .collect()
    }

    /// Distinct cells traversed anywhere along the trajectory, sorted.
    pub fn traversed_cells(&self, spec: &GridSpec) -> Vec<usize> {
        let set: BTreeSet<usize> = self
            .segments(spec)
            .into_iter()
            .flatten()
            .map(|t| t.linear)
            .collect();
        set.into_iter().collect()
    }
}

/// Completion length, outage length and newly measured cell count of a round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundObjectives {
    pub t_r: f64,
    pub o_r: f64,
    pub m_r: usize,
}

/// `T_r`, `O_r` and `M_r` of a trajectory against the map state before the round.
///
/// Outage comes from `ckm` (truth where measured, estimate elsewhere);
/// `measured_before` decides which traversed cells count as new. A cell
/// traversed by several segments counts once in `M_r`.
pub fn eval_objectives(
    traj: &Trajectory,
    ckm: &ChannelKnowledgeMap,
    measured_before: &[bool],
) -> RoundObjectives {
    let spec = &ckm.spec;
    let mut o_r = 0.0;
    let mut fresh = BTreeSet::new();
    for seg in traj.segments(spec) {
        for t in seg {
            if ckm.outage_at(t.linear) {
                o_r += t.chord;
            }
            if !measured_before[t.linear] {
                fresh.insert(t.linear);
            }
        }
    }
    RoundObjectives {
        t_r: traj.length(spec),
        o_r,
        m_r: fresh.len(),
    }
}
