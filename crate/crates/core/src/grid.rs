//! Cubic lattice over the airspace.
//!
//! Grid indices are 1-based, `i in 1..=I`, and a cell's center sits at
//! `lower + delta * (i - 1/2, j - 1/2, k - 1/2)`.

use serde::{Deserialize, Serialize};

use crate::env::Bounds;
use crate::error::{Error, Result};
use crate::vec3::Point3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GridIndex {
    pub i: usize,
    pub j: usize,
    pub k: usize,
}

impl GridIndex {
    pub const fn new(i: usize, j: usize, k: usize) -> Self {
        GridIndex { i, j, k }
    }

    pub fn as_array(&self) -> [usize; 3] {
        [self.i, self.j, self.k]
    }

    /// Lattice (L1) distance in cells.
    pub fn manhattan(&self, other: &GridIndex) -> usize {
        self.i.abs_diff(other.i) + self.j.abs_diff(other.j) + self.k.abs_diff(other.k)
    }
}

impl std::fmt::Display for GridIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {}, {})", self.i, self.j, self.k)
    }
}

impl std::str::FromStr for GridIndex {
    type Err = Error;

    /// Parses `i,j,k`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<_> = s.split(',').map(|p| p.trim().parse::<usize>()).collect();
        match parts.as_slice() {
            [Ok(i), Ok(j), Ok(k)] => Ok(GridIndex::new(*i, *j, *k)),
            _ => Err(Error::Format {
                what: "grid index",
                reason: format!("expected `i,j,k`, got `{s}`"),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Lower corner `(x_L, y_L, z_L)`.
    pub origin: Point3,
    pub delta: f64,
    /// `(I, J, K)`.
    pub dims: [usize; 3],
}

impl GridSpec {
    /// Discretizes `bounds` with granularity `delta`, `I = ceil((x_U - x_L) / delta)` etc.
    pub fn from_bounds(bounds: &Bounds, delta: f64) -> Result<Self> {
        bounds.validate()?;
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::invalid("delta", "granularity must be positive"));
        }
        let e = bounds.extent();
        // guard against 400/10 = 40.000000000000007 style round-up
        let count = |len: f64| {
            let r = len / delta;
            let n = r.round();
            if (r - n).abs() < 1e-9 {
                n as usize
            } else {
                r.ceil() as usize
            }
        };
        Ok(GridSpec {
            origin: bounds.lower(),
            delta,
            dims: [count(e[0]), count(e[1]), count(e[2])],
        })
    }

    pub fn new(origin: Point3, delta: f64, dims: [usize; 3]) -> Result<Self> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::invalid("delta", "granularity must be positive"));
        }
        if dims.contains(&0) {
            return Err(Error::invalid("dims", "every lattice dimension must be at least 1"));
        }
        Ok(GridSpec {
            origin,
            delta,
            dims,
        })
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Radius of the inscribed sphere, `delta / 2`.
    pub fn radius(&self) -> f64 {
        self.delta / 2.0
    }

    pub fn contains(&self, idx: GridIndex) -> bool {
        (1..=self.dims[0]).contains(&idx.i)
            && (1..=self.dims[1]).contains(&idx.j)
            && (1..=self.dims[2]).contains(&idx.k)
    }

    pub fn check(&self, idx: GridIndex) -> Result<()> {
        if self.contains(idx) {
            Ok(())
        } else {
            Err(Error::IndexOutOfRange {
                i: idx.i,
                j: idx.j,
                k: idx.k,
                dims: self.dims,
            })
        }
    }

    /// Storage offset; `i` varies fastest.
    #[inline]
    pub fn linear(&self, idx: GridIndex) -> usize {
        (idx.i - 1) + self.dims[0] * ((idx.j - 1) + self.dims[1] * (idx.k - 1))
    }

    #[inline]
    pub fn index(&self, linear: usize) -> GridIndex {
        let i = linear % self.dims[0];
        let rest = linear / self.dims[0];
        let j = rest % self.dims[1];
        let k = rest / self.dims[1];
        GridIndex::new(i + 1, j + 1, k + 1)
    }

    pub fn indices(&self) -> impl Iterator<Item = GridIndex> + '_ {
        (0..self.len()).map(|l| self.index(l))
    }

    /// Center of a cell; errors when `idx` is outside the lattice.
    pub fn grid_center(&self, idx: GridIndex) -> Result<Point3> {
        self.check(idx)?;
        Ok(self.center(idx))
    }

    /// Unchecked center.
    #[inline]
    pub fn center(&self, idx: GridIndex) -> Point3 {
        [
            self.origin[0] + self.delta * (idx.i as f64 - 0.5),
            self.origin[1] + self.delta * (idx.j as f64 - 0.5),
            self.origin[2] + self.delta * (idx.k as f64 - 0.5),
        ]
    }

    #[inline]
    pub fn center_of(&self, linear: usize) -> Point3 {
        self.center(self.index(linear))
    }

    /// Cell containing `p`, if any.
    pub fn cell_of(&self, p: Point3) -> Option<GridIndex> {
        let mut out = [0usize; 3];
        for a in 0..3 {
            let r = (p[a] - self.origin[a]) / self.delta;
            if !(r >= 0.0) {
                return None;
            }
            let c = r.floor() as usize + 1;
            if c > self.dims[a] {
                // upper face belongs to the last cell
                if r <= self.dims[a] as f64 {
                    out[a] = self.dims[a];
                    continue;
                }
                return None;
            }
            out[a] = c;
        }
        Some(GridIndex::new(out[0], out[1], out[2]))
    }

    /// Clamped per-axis cell coordinate (1-based) of a coordinate value.
    pub(crate) fn axis_cell_clamped(&self, axis: usize, v: f64) -> usize {
        let r = ((v - self.origin[axis]) / self.delta).floor();
        if r < 0.0 {
            1
        } else {
            (r as usize + 1).min(self.dims[axis])
        }
    }

    /// Face neighbors (3 to 6), in increasing linear order.
    pub fn neighbors(&self, idx: GridIndex) -> impl Iterator<Item = GridIndex> + '_ {
        let [i, j, k] = idx.as_array();
        let cand = [
            (k > 1).then(|| GridIndex::new(i, j, k - 1)),
            (j > 1).then(|| GridIndex::new(i, j - 1, k)),
            (i > 1).then(|| GridIndex::new(i - 1, j, k)),
            (i < self.dims[0]).then(|| GridIndex::new(i + 1, j, k)),
            (j < self.dims[1]).then(|| GridIndex::new(i, j + 1, k)),
            (k < self.dims[2]).then(|| GridIndex::new(i, j, k + 1)),
        ];
        cand.into_iter().flatten()
    }

    /// Linear offsets of face neighbors, in increasing order.
    pub(crate) fn neighbor_linear(&self, linear: usize, out: &mut Vec<usize>) {
        out.clear();
        let idx = self.index(linear);
        out.extend(self.neighbors(idx).map(|n| self.linear(n)));
    }

    pub fn adjacent(&self, a: GridIndex, b: GridIndex) -> bool {
        a.manhattan(&b) == 1
    }
}

/// Lattice offsets ordered by Euclidean length, for nearest-cell searches.
#[derive(Debug, Clone)]
pub struct OffsetTable {
    offsets: Vec<([i64; 3], f64)>,
    complete: bool,
}

/// Per-axis reach of the precomputed offset table.
const MAX_OFFSET_REACH: usize = 48;

impl OffsetTable {
    pub fn new(spec: &GridSpec) -> Self {
        let reach = spec.dims.map(|d| (d - 1).min(MAX_OFFSET_REACH) as i64);
        let complete = spec.dims.iter().all(|&d| d - 1 <= MAX_OFFSET_REACH);
        let mut offsets = Vec::new();
        for dk in -reach[2]..=reach[2] {
            for dj in -reach[1]..=reach[1] {
                for di in -reach[0]..=reach[0] {
                    let d2 = (di * di + dj * dj + dk * dk) as f64;
                    offsets.push(([di, dj, dk], d2.sqrt() * spec.delta));
                }
            }
        }
        offsets.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        OffsetTable { offsets, complete }
    }

    /// Whether the table spans every cell pair of the lattice.
    pub fn is_complete(&self) -> bool {
        self.complete
    }

    /// Cells around `center` in order of distance, as (linear, distance).
    pub fn around<'a>(
        &'a self,
        spec: &'a GridSpec,
        center: GridIndex,
    ) -> impl Iterator<Item = (usize, f64)> + 'a {
        let c = [center.i as i64, center.j as i64, center.k as i64];
        self.offsets.iter().filter_map(move |(o, d)| {
            let i = c[0] + o[0];
            let j = c[1] + o[1];
            let k = c[2] + o[2];
            if i < 1
                || j < 1
                || k < 1
                || i > spec.dims[0] as i64
                || j > spec.dims[1] as i64
                || k > spec.dims[2] as i64
            {
                return None;
            }
            Some((
                spec.linear(GridIndex::new(i as usize, j as usize, k as usize)),
                *d,
            ))
        })
    }
}
