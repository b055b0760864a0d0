//! Ordinary Kriging over the lattice.
//!
//! The SINR field (in dB) is treated as intrinsically stationary with an
//! exponential semivariogram `r(d) = C0 + C (1 - exp(-d / a))`. For a target
//! `u0` and measured cells `u1..uN` the weights solve the bordered system
//!
//! ```text
//! | r_11 .. r_1N 1 | | l_1 |   | r_10 |
//! |  :       :   : | |  :  | = |  :   |
//! | r_N1 .. r_NN 1 | | l_N |   | r_N0 |
//! |  1   ..  1   0 | | -v  |   |  1   |
//! ```
//!
//! so the weights sum to one (unbiasedness) and the estimation variance is
//! `r0^T R^-1 r0`. The model is evaluated at `d = 0` on the diagonal, so it
//! contributes `C0` there.
//!
//! Lattice-scale maps use the nearest `n_max` measured cells per target;
//! [`Neighborhood::Full`] solves against every measurement.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ckm::{ChannelKnowledgeMap, GridSpec};
use crate::error::{Error, Result};
use crate::grid::{GridIndex, OffsetTable};
use crate::linalg;
use crate::vec3::{self, Point3};

/// Smallest partial sill handed out for flat data.
pub const MIN_PARTIAL_SILL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SemivariogramModel {
    pub nugget: f64,
    pub partial_sill: f64,
    pub range_m: f64,
}

impl SemivariogramModel {
    pub fn new(nugget: f64, partial_sill: f64, range_m: f64) -> Result<Self> {
        let m = SemivariogramModel {
            nugget,
            partial_sill,
            range_m,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.nugget >= 0.0 && self.nugget.is_finite()) {
            return Err(Error::invalid("nugget", "must be non-negative"));
        }
        if !(self.partial_sill > 0.0 && self.partial_sill.is_finite()) {
            return Err(Error::invalid("partial_sill", "must be positive"));
        }
        if !(self.range_m > 0.0 && self.range_m.is_finite()) {
            return Err(Error::invalid("range_m", "must be positive"));
        }
        Ok(())
    }

    #[inline]
    pub fn eval(&self, d: f64) -> f64 {
        self.nugget + self.partial_sill * (1.0 - (-d / self.range_m).exp())
    }

    pub fn sill(&self) -> f64 {
        self.nugget + self.partial_sill
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LagBin {
    /// Mean separation of the pairs in the bin.
    pub lag: f64,
    pub semivariance: f64,
    pub pairs: usize,
}

/// Binned half mean squared difference over all point pairs up to `max_lag_m`.
pub fn empirical_semivariogram(
    points: &[(Point3, f64)],
    bin_width_m: f64,
    max_lag_m: f64,
) -> Result<Vec<LagBin>> {
    if points.len() < 2 {
        return Err(Error::InsufficientData {
            what: "semivariogram points",
            needed: 2,
            got: points.len(),
        });
    }
    if !(bin_width_m > 0.0) {
        return Err(Error::invalid("bin_width_m", "must be positive"));
    }
    if !(max_lag_m > 0.0) {
        return Err(Error::invalid("max_lag_m", "must be positive"));
    }
    let n_bins = (max_lag_m / bin_width_m).ceil() as usize;
    let accumulate = |i: usize| {
        let mut acc = vec![(0.0_f64, 0.0_f64, 0usize); n_bins];
        let (pi, vi) = points[i];
        for &(pj, vj) in &points[i + 1..] {
            let d = vec3::dist(pi, pj);
            if d > max_lag_m {
                continue;
            }
            let b = ((d / bin_width_m) as usize).min(n_bins - 1);
            acc[b].0 += d;
            acc[b].1 += 0.5 * (vi - vj) * (vi - vj);
            acc[b].2 += 1;
        }
        acc
    };
    let merge = |mut a: Vec<(f64, f64, usize)>, b: Vec<(f64, f64, usize)>| {
        for (x, y) in a.iter_mut().zip(b) {
            x.0 += y.0;
            x.1 += y.1;
            x.2 += y.2;
        }
        a
    };
    // fixed chunking keeps the floating-point summation order thread-independent
    let chunks: Vec<Vec<(f64, f64, usize)>> = (0..points.len())
        .collect::<Vec<_>>()
        .par_chunks(64)
        .map(|c| c.iter().map(|&i| accumulate(i)).fold(vec![(0.0, 0.0, 0); n_bins], merge))
        .collect();
    let total = chunks
        .into_iter()
        .fold(vec![(0.0, 0.0, 0); n_bins], merge);
    Ok(total
        .into_iter()
        .filter(|b| b.2 > 0)
        .map(|(ds, g, c)| LagBin {
            lag: ds / c as f64,
            semivariance: g / c as f64,
            pairs: c,
        })
        .collect())
}

/// Fitted model plus fit diagnostics. Serializes as
/// `{nugget, partial_sill, range_m, fit_residual, degenerate}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    #[serde(flatten)]
    pub model: SemivariogramModel,
    pub fit_residual: f64,
    #[serde(default)]
    pub degenerate: bool,
}

/// Least-squares fit of the exponential model with `C0 >= 0`, `C > 0`, `a > 0`.
///
/// For a fixed range the model is linear in `(C0, C)`, so the range is
/// profiled: a log-spaced scan followed by golden-section refinement.
pub fn fit_exponential(bins: &[LagBin]) -> Result<FittedModel> {
    if bins.len() < 3 {
        return Err(Error::InsufficientData {
            what: "semivariogram bins",
            needed: 3,
            got: bins.len(),
        });
    }
    let max_lag = bins.iter().map(|b| b.lag).fold(0.0, f64::max);
    let min_lag = bins
        .iter()
        .map(|b| b.lag)
        .filter(|&d| d > 0.0)
        .fold(f64::INFINITY, f64::min);
    let peak = bins.iter().map(|b| b.semivariance.abs()).fold(0.0, f64::max);
    if peak <= 1e-12 || !min_lag.is_finite() {
        return Ok(FittedModel {
            model: SemivariogramModel {
                nugget: 0.0,
                partial_sill: MIN_PARTIAL_SILL,
                range_m: if max_lag > 0.0 { max_lag / 3.0 } else { 1.0 },
            },
            fit_residual: bins.iter().map(|b| b.semivariance.powi(2)).sum(),
            degenerate: true,
        });
    }

    let lo = (min_lag * 0.05).ln();
    let hi = (max_lag * 20.0).ln();
    let steps = 400;
    let at = |s: f64| profile(bins, s.exp());
    let mut best_s = lo;
    let mut best = at(lo);
    for n in 1..=steps {
        let s = lo + (hi - lo) * n as f64 / steps as f64;
        let v = at(s);
        if v.0 < best.0 {
            best = v;
            best_s = s;
        }
    }
    let h = (hi - lo) / steps as f64;
    let (mut a, mut b) = ((best_s - h).max(lo), (best_s + h).min(hi));
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (at(c).0, at(d).0);
    for _ in 0..200 {
        if (b - a).abs() < 1e-12 {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = at(c).0;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = at(d).0;
        }
    }
    let s = 0.5 * (a + b);
    let refined = at(s);
    if refined.0 < best.0 {
        best = refined;
        best_s = s;
    }
    let (res, c0, cs) = best;
    Ok(FittedModel {
        model: SemivariogramModel {
            nugget: c0,
            partial_sill: cs,
            range_m: best_s.exp(),
        },
        fit_residual: res,
        degenerate: false,
    })
}

/// Constrained linear fit of `(C0, C)` for a fixed range; returns (SSR, C0, C).
fn profile(bins: &[LagBin], range: f64) -> (f64, f64, f64) {
    let xs: Vec<f64> = bins.iter().map(|b| 1.0 - (-b.lag / range).exp()).collect();
    let ys: Vec<f64> = bins.iter().map(|b| b.semivariance).collect();
    let n = xs.len() as f64;
    let sx: f64 = xs.iter().sum();
    let sy: f64 = ys.iter().sum();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| x * y).sum();
    let det = n * sxx - sx * sx;
    let (mut c0, mut c) = if det.abs() > 1e-300 {
        ((sy * sxx - sx * sxy) / det, (n * sxy - sx * sy) / det)
    } else {
        (0.0, if sxx > 0.0 { sxy / sxx } else { 0.0 })
    };
    if c0 < 0.0 {
        c0 = 0.0;
        c = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    }
    if c < MIN_PARTIAL_SILL {
        c = MIN_PARTIAL_SILL;
        c0 = ((sy - c * sx) / n).max(0.0);
    }
    let ssr = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (c0 + c * x - y).powi(2))
        .sum();
    (ssr, c0, c)
}

#[derive(Debug, Clone, PartialEq)]
pub struct KrigingSolution {
    pub weights: Vec<f64>,
    /// Lagrange multiplier; the solved vector carries `-multiplier` in its last slot.
    pub multiplier: f64,
    pub variance: f64,
    /// Set when the raw variance came out negative and was clamped to 0.
    pub clamped: bool,
}

/// Solves the full bordered system against every point in `points`.
pub fn solve_weights(
    points: &[Point3],
    target: Point3,
    model: &SemivariogramModel,
) -> Result<KrigingSolution> {
    let n = points.len();
    if n == 0 {
        return Err(Error::InsufficientData {
            what: "measured points",
            needed: 1,
            got: 0,
        });
    }
    for i in 0..n {
        for j in i + 1..n {
            if vec3::dist2(points[i], points[j]) < 1e-18 {
                return Err(Error::DuplicatePoint(i, j));
            }
        }
    }
    solve_bordered(
        n,
        |i, j| model.eval(vec3::dist(points[i], points[j])),
        |i| model.eval(vec3::dist(points[i], target)),
    )
}

/// Builds and solves the bordered system from pairwise and target semivariances.
fn solve_bordered(
    n: usize,
    pair: impl Fn(usize, usize) -> f64,
    to_target: impl Fn(usize) -> f64,
) -> Result<KrigingSolution> {
    let dim = n + 1;
    let mut a = vec![0.0; dim * dim];
    let mut rhs = vec![0.0; dim];
    for i in 0..n {
        for j in i..n {
            let r = pair(i, j);
            a[i * dim + j] = r;
            a[j * dim + i] = r;
        }
        a[i * dim + n] = 1.0;
        a[n * dim + i] = 1.0;
        rhs[i] = to_target(i);
    }
    rhs[n] = 1.0;
    let r0 = rhs.clone();
    linalg::solve_in_place(&mut a, &mut rhs, dim)?;
    let raw: f64 = r0.iter().zip(&rhs).map(|(x, y)| x * y).sum();
    let clamped = raw < 0.0;
    if clamped {
        log::debug!("negative Kriging variance {raw:e} clamped to 0");
    }
    Ok(KrigingSolution {
        multiplier: -rhs[n],
        weights: rhs[..n].to_vec(),
        variance: raw.max(0.0),
        clamped,
    })
}

/// Truncates to the `n_max` points nearest `target` (ties by position in
/// `points`) and solves; returns the indices used alongside the solution.
pub fn solve_nearest(
    points: &[Point3],
    target: Point3,
    model: &SemivariogramModel,
    n_max: usize,
) -> Result<(Vec<usize>, KrigingSolution)> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    if points.len() > n_max {
        order.sort_by(|&a, &b| {
            vec3::dist2(points[a], target)
                .total_cmp(&vec3::dist2(points[b], target))
                .then(a.cmp(&b))
        });
        order.truncate(n_max);
    }
    let subset: Vec<Point3> = order.iter().map(|&i| points[i]).collect();
    let sol = solve_weights(&subset, target, model)?;
    Ok((order, sol))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Neighborhood {
    /// The `n` measured cells nearest the target.
    Nearest(usize),
    /// Every measured cell.
    Full,
}

impl Default for Neighborhood {
    fn default() -> Self {
        Neighborhood::Nearest(32)
    }
}

/// Fitting and neighborhood settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KrigingSettings {
    /// Neighborhood cap; `None` means full-system solves.
    pub n_max: Option<usize>,
    /// Semivariogram bin width; the lattice granularity when absent.
    pub bin_width_m: Option<f64>,
    /// Largest lag used for fitting; half the horizontal lattice diagonal when absent.
    pub max_lag_m: Option<f64>,
    /// Above this many measured cells the fit uses a seeded random subset.
    pub max_fit_points: usize,
    pub fit_seed: u64,
}

impl Default for KrigingSettings {
    fn default() -> Self {
        KrigingSettings {
            n_max: Some(32),
            bin_width_m: None,
            max_lag_m: None,
            max_fit_points: 4000,
            fit_seed: 0,
        }
    }
}

impl KrigingSettings {
    pub fn neighborhood(&self) -> Neighborhood {
        match self.n_max {
            Some(n) => Neighborhood::Nearest(n.max(1)),
            None => Neighborhood::Full,
        }
    }
}

/// Fits the exponential model to the measured cells of `ckm`.
pub fn fit_from_map(ckm: &ChannelKnowledgeMap, settings: &KrigingSettings) -> Result<FittedModel> {
    let spec = &ckm.spec;
    let mut ids: Vec<usize> = (0..ckm.len()).filter(|&l| ckm.measured[l]).collect();
    if ids.len() > settings.max_fit_points {
        let mut rng = ChaCha8Rng::seed_from_u64(settings.fit_seed);
        let mut pick: Vec<usize> = sample(&mut rng, ids.len(), settings.max_fit_points)
            .into_iter()
            .map(|p| ids[p])
            .collect();
        pick.sort_unstable();
        ids = pick;
    }
    let points: Vec<(Point3, f64)> = ids
        .iter()
        .map(|&l| (spec.center_of(l), ckm.estimate_sinr_db[l]))
        .collect();
    let bin = settings.bin_width_m.unwrap_or(spec.delta);
    let e = [
        spec.delta * spec.dims[0] as f64,
        spec.delta * spec.dims[1] as f64,
    ];
    let max_lag = settings
        .max_lag_m
        .unwrap_or(0.5 * e[0].hypot(e[1]))
        .max(3.0 * bin);
    let bins = empirical_semivariogram(&points, bin, max_lag)?;
    fit_exponential(&bins)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletionStats {
    pub solves: usize,
    pub clamped: usize,
}

/// Kriging bound to one lattice: model, neighborhood policy, and the offset
/// table used to find nearby measured cells.
#[derive(Debug, Clone)]
pub struct KrigingEngine {
    pub model: SemivariogramModel,
    pub neighborhood: Neighborhood,
    spec: GridSpec,
    table: Option<OffsetTable>,
    /// Semivariance by squared lattice offset `di^2 + dj^2 + dk^2`.
    lookup: Vec<f64>,
}

/// Inverse of one target's bordered system for a fixed base set, used to
/// score single-cell additions in `O(n^2)`.
#[derive(Debug, Clone)]
pub struct VarianceUpdater {
    target: usize,
    base: Vec<usize>,
    coords: Vec<GridIndex>,
    inv: Vec<f64>,
    /// `inv * r0`.
    q: Vec<f64>,
    /// Variance for the base set alone.
    v: f64,
}

/// Largest squared offset tabulated by [`KrigingEngine`].
const MAX_LOOKUP: usize = 1 << 22;

impl KrigingEngine {
    pub fn new(model: SemivariogramModel, neighborhood: Neighborhood, spec: &GridSpec) -> Self {
        let table = match neighborhood {
            Neighborhood::Nearest(_) => Some(OffsetTable::new(spec)),
            Neighborhood::Full => None,
        };
        let max_d2: usize = spec.dims.iter().map(|&d| (d - 1) * (d - 1)).sum();
        let lookup = if max_d2 < MAX_LOOKUP {
            (0..=max_d2)
                .map(|q| model.eval((q as f64).sqrt() * spec.delta))
                .collect()
        } else {
            Vec::new()
        };
        KrigingEngine {
            model,
            neighborhood,
            spec: *spec,
            table,
            lookup,
        }
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    /// Measured cells used for `target`, nearest first (full mode: linear order).
    pub fn neighbors(&self, measured: &[bool], target: usize) -> Vec<usize> {
        self.neighbors_where(|l| measured[l], target)
    }

    /// Like [`Self::neighbors`] with measurement status given by a predicate.
    pub fn neighbors_where(&self, measured: impl Fn(usize) -> bool, target: usize) -> Vec<usize> {
        let len = self.spec.len();
        match (self.neighborhood, &self.table) {
            (Neighborhood::Nearest(n), Some(table)) => {
                let idx = self.spec.index(target);
                let mut out: Vec<usize> = table
                    .around(&self.spec, idx)
                    .filter(|&(l, _)| measured(l))
                    .map(|(l, _)| l)
                    .take(n)
                    .collect();
                if out.len() < n && !table.is_complete() {
                    let c = self.spec.center_of(target);
                    let mut all: Vec<(f64, usize)> = (0..len)
                        .filter(|&l| measured(l))
                        .map(|l| (vec3::dist2(self.spec.center_of(l), c), l))
                        .collect();
                    all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                    out = all.into_iter().take(n).map(|x| x.1).collect();
                }
                out
            }
            _ => (0..len).filter(|&l| measured(l)).collect(),
        }
    }

    /// Semivariance between two cells.
    #[inline]
    fn gamma(&self, a: usize, b: usize) -> f64 {
        if self.lookup.is_empty() {
            return self.model.eval(vec3::dist(self.spec.center_of(a), self.spec.center_of(b)));
        }
        let (p, q) = (self.spec.index(a), self.spec.index(b));
        let d = |x: usize, y: usize| x.abs_diff(y) * x.abs_diff(y);
        self.lookup[d(p.i, q.i) + d(p.j, q.j) + d(p.k, q.k)]
    }

    /// Whether single-cell additions can be scored with [`VarianceUpdater`]:
    /// the neighbor order must be the offset-table order (or the full set).
    pub fn supports_updates(&self) -> bool {
        match (self.neighborhood, &self.table) {
            (Neighborhood::Full, _) => true,
            (Neighborhood::Nearest(_), Some(t)) => t.is_complete(),
            _ => false,
        }
    }

    /// Rank of `cell` in the neighbor order around `target`: squared
    /// lattice distance, then the offset vector.
    pub fn order_key(&self, target: usize, cell: usize) -> (usize, [i64; 3]) {
        let (t, c) = (self.spec.index(target), self.spec.index(cell));
        let o = [
            c.i as i64 - t.i as i64,
            c.j as i64 - t.j as i64,
            c.k as i64 - t.k as i64,
        ];
        ((o[0] * o[0] + o[1] * o[1] + o[2] * o[2]) as usize, o)
    }

    /// Prepares variance updates at `target` on top of `base`.
    pub fn updater(&self, base: &[usize], target: usize) -> Result<VarianceUpdater> {
        let n = base.len();
        if n == 0 {
            return Ok(VarianceUpdater {
                target,
                base: Vec::new(),
                coords: Vec::new(),
                inv: Vec::new(),
                q: Vec::new(),
                v: 0.0,
            });
        }
        let m = n + 1;
        let mut a = vec![0.0; m * m];
        let mut r0 = vec![1.0; m];
        for i in 0..n {
            for j in i..n {
                let r = self.gamma(base[i], base[j]);
                a[i * m + j] = r;
                a[j * m + i] = r;
            }
            a[i * m + n] = 1.0;
            a[n * m + i] = 1.0;
            r0[i] = self.gamma(base[i], target);
        }
        let inv = linalg::invert(&a, m)?;
        let q: Vec<f64> = (0..m)
            .map(|i| (0..m).map(|j| inv[i * m + j] * r0[j]).sum())
            .collect();
        let v = r0.iter().zip(&q).map(|(x, y)| x * y).sum();
        Ok(VarianceUpdater {
            target,
            base: base.to_vec(),
            coords: base.iter().map(|&l| self.spec.index(l)).collect(),
            inv,
            q,
            v,
        })
    }

    /// Variance at the updater's target once `cell` joins its base set
    /// (block inverse of the bordered system), clamped at 0.
    pub fn variance_added(&self, up: &VarianceUpdater, cell: usize) -> f64 {
        let n = up.base.len();
        let g_ct = self.gamma(cell, up.target);
        let c0 = self.model.nugget;
        if n == 0 {
            return (2.0 * g_ct - c0).max(0.0);
        }
        let m = n + 1;
        let mut b = vec![1.0; m];
        if self.lookup.is_empty() {
            for i in 0..n {
                b[i] = self.gamma(up.base[i], cell);
            }
        } else {
            let c = self.spec.index(cell);
            let d = |x: usize, y: usize| x.abs_diff(y) * x.abs_diff(y);
            for (bi, p) in b.iter_mut().zip(&up.coords) {
                *bi = self.lookup[d(p.i, c.i) + d(p.j, c.j) + d(p.k, c.k)];
            }
        }
        let mut bw = 0.0;
        for i in 0..m {
            let row = &up.inv[i * m..(i + 1) * m];
            let w: f64 = row.iter().zip(&b).map(|(x, y)| x * y).sum();
            bw += b[i] * w;
        }
        let s = c0 - bw;
        let t = g_ct - b.iter().zip(&up.q).map(|(x, y)| x * y).sum::<f64>();
        if s == 0.0 {
            return up.v.max(0.0);
        }
        (up.v + t * t / s).max(0.0)
    }

    /// Solves at `target` against distinct measured `cells`.
    pub fn solve_cells(&self, cells: &[usize], target: usize) -> Result<KrigingSolution> {
        if cells.is_empty() {
            return Err(Error::InsufficientData {
                what: "measured points",
                needed: 1,
                got: 0,
            });
        }
        solve_bordered(
            cells.len(),
            |i, j| self.gamma(cells[i], cells[j]),
            |i| self.gamma(cells[i], target),
        )
    }

    /// Variance at `target` given an explicit set of measured cells.
    pub fn variance_with(&self, cells: &[usize], target: usize) -> Result<f64> {
        Ok(self.solve_cells(cells, target)?.variance)
    }

    /// Solves at `target` against the neighborhood drawn from `measured`.
    pub fn solve_at(&self, measured: &[bool], target: usize) -> Result<(Vec<usize>, KrigingSolution)> {
        let cells = self.neighbors(measured, target);
        let sol = self.solve_cells(&cells, target)?;
        Ok((cells, sol))
    }

    /// Kriging estimate and variance at one cell of `ckm`.
    pub fn estimate(&self, ckm: &ChannelKnowledgeMap, idx: crate::GridIndex) -> Result<(f64, f64)> {
        ckm.spec.check(idx)?;
        let (cells, sol) = self.solve_at(&ckm.measured, ckm.spec.linear(idx))?;
        let est = cells
            .iter()
            .zip(&sol.weights)
            .map(|(&l, w)| w * ckm.estimate_sinr_db[l])
            .sum();
        Ok((est, sol.variance))
    }

    /// Re-estimates every unmeasured cell from the measured ones.
    pub fn complete(&self, ckm: &mut ChannelKnowledgeMap) -> Result<CompletionStats> {
        if ckm.measured_count() == 0 {
            return Err(Error::InsufficientData {
                what: "measured cells",
                needed: 1,
                got: 0,
            });
        }
        let targets: Vec<usize> = (0..ckm.len()).filter(|&l| !ckm.measured[l]).collect();
        let snapshot = &*ckm;
        let results: Vec<(f64, f64, bool)> = targets
            .par_iter()
            .map(|&t| {
                let (cells, sol) = self.solve_at(&snapshot.measured, t)?;
                let est = cells
                    .iter()
                    .zip(&sol.weights)
                    .map(|(&l, w)| w * snapshot.estimate_sinr_db[l])
                    .sum();
                Ok((est, sol.variance, sol.clamped))
            })
            .collect::<Result<_>>()?;
        let mut stats = CompletionStats::default();
        for (&t, (est, var, clamped)) in targets.iter().zip(results) {
            ckm.estimate_sinr_db[t] = est;
            ckm.variance[t] = var;
            stats.solves += 1;
            stats.clamped += clamped as usize;
        }
        for l in 0..ckm.len() {
            if ckm.measured[l] {
                ckm.variance[l] = 0.0;
            }
        }
        if stats.clamped > 0 {
            log::warn!("{} of {} Kriging variances clamped at 0", stats.clamped, stats.solves);
        }
        Ok(stats)
    }
}

/// Mean squared error between truth and estimate over every cell (dB^2).
pub fn global_mse(ckm: &ChannelKnowledgeMap) -> f64 {
    let n = ckm.len();
    if n == 0 {
        return 0.0;
    }
    ckm.truth_sinr_db
        .iter()
        .zip(&ckm.estimate_sinr_db)
        .map(|(t, e)| (t - e) * (t - e))
        .sum::<f64>()
        / n as f64
}

/// Mean and variance of measured values, overall and per altitude layer.
/// Large layer-to-layer drift flags a violated stationarity assumption.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationarityReport {
    pub mean: f64,
    pub variance: f64,
    pub layer_means: Vec<f64>,
    pub layer_variances: Vec<f64>,
}

pub fn stationarity_report(ckm: &ChannelKnowledgeMap) -> StationarityReport {
    let stats = |vals: &[f64]| {
        if vals.is_empty() {
            return (f64::NAN, f64::NAN);
        }
        let m = vals.iter().sum::<f64>() / vals.len() as f64;
        let v = vals.iter().map(|x| (x - m).powi(2)).sum::<f64>() / vals.len() as f64;
        (m, v)
    };
    let all: Vec<f64> = (0..ckm.len())
        .filter(|&l| ckm.measured[l])
        .map(|l| ckm.estimate_sinr_db[l])
        .collect();
    let (mean, variance) = stats(&all);
    let mut layer_means = Vec::new();
    let mut layer_variances = Vec::new();
    for k in 1..=ckm.spec.dims[2] {
        let vals: Vec<f64> = (0..ckm.len())
            .filter(|&l| ckm.measured[l] && ckm.spec.index(l).k == k)
            .map(|l| ckm.estimate_sinr_db[l])
            .collect();
        let (m, v) = stats(&vals);
        layer_means.push(m);
        layer_variances.push(v);
    }
    StationarityReport {
        mean,
        variance,
        layer_means,
        layer_variances,
    }
}
