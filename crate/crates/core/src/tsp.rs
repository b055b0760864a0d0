//! Measurement-set selection and open-tour planning.
//!
//! A round first picks `n` unmeasured cells greedily, each step adding the
//! cell whose measurement leaves the smallest summed Kriging variance over the
//! other unmeasured cells. The cells are then visited by the cheapest open
//! tour from `v_s` to `v_e`, with edge weight
//!
//! ```text
//! w(a, b) = |a - b| + beta * sum of in-cell segment lengths over outage cells
//! ```
//!
//! The open tour is solved as a closed one after forcing the edge
//! `(v_s, v_e)` with a sufficiently negative weight, then cut at that edge.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ckm::ChannelKnowledgeMap;
use crate::error::{Error, Result};
use crate::geom::{self, Trajectory};
use crate::grid::GridIndex;
use crate::kriging::{KrigingEngine, Neighborhood, VarianceUpdater};
use crate::vec3;

/// Largest vertex count accepted by [`TspSolver::BruteForce`].
pub const BRUTE_FORCE_MAX: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSet {
    pub grids: Vec<GridIndex>,
    /// Summed variance over the unmeasured cells left out of the set.
    pub objective: f64,
    /// Kriging solves spent on the selection.
    pub solves: usize,
}

/// Cached variance at one unmeasured cell for the current measured set.
#[derive(Debug, Clone)]
struct TargetState {
    cell: usize,
    variance: f64,
    /// Distance to the farthest neighbor in use; infinite when the
    /// neighborhood is not saturated (any new point enters it).
    reach: f64,
    /// Order key of the neighbor a newcomer would push out.
    last: Option<(usize, [i64; 3])>,
    /// Bordered inverse for the neighborhood without `last`.
    updater: Option<VarianceUpdater>,
}

struct Selector<'a> {
    engine: &'a KrigingEngine,
    measured: Vec<bool>,
    incremental: bool,
}

impl Selector<'_> {
    fn state(&self, cell: usize, extra: Option<usize>) -> Result<TargetState> {
        let m = &self.measured;
        let mut cells = self
            .engine
            .neighbors_where(|l| m[l] || Some(l) == extra, cell);
        let variance = self.engine.variance_with(&cells, cell)?;
        let spec = self.engine.spec();
        let saturated = matches!(self.engine.neighborhood, Neighborhood::Nearest(n) if cells.len() >= n);
        let reach = if saturated {
            cells
                .iter()
                .map(|&l| vec3::dist(spec.center_of(l), spec.center_of(cell)))
                .fold(0.0, f64::max)
        } else {
            f64::INFINITY
        };
        let (last, updater) = if self.incremental && extra.is_none() {
            let last = if saturated {
                cells.pop().map(|l| self.engine.order_key(cell, l))
            } else {
                None
            };
            (last, Some(self.engine.updater(&cells, cell)?))
        } else {
            (None, None)
        };
        Ok(TargetState {
            cell,
            variance,
            reach,
            last,
            updater,
        })
    }

    /// Variance at `t` once `cand` is measured, if it changes.
    fn variance_with_cand(&self, t: &TargetState, cand: usize) -> Result<Option<f64>> {
        let spec = self.engine.spec();
        // with a saturated neighborhood only a closer point can enter it
        if vec3::dist(spec.center_of(t.cell), spec.center_of(cand)) > t.reach + 1e-9 {
            return Ok(None);
        }
        match &t.updater {
            Some(up) => {
                if let Some(last) = t.last {
                    if self.engine.order_key(t.cell, cand) >= last {
                        return Ok(None);
                    }
                }
                Ok(Some(self.engine.variance_added(up, cand)))
            }
            None => Ok(Some(self.state(t.cell, Some(cand))?.variance)),
        }
    }

    /// Objective after adding `cand`, and the number of variance evaluations spent.
    fn objective_with(&self, targets: &[TargetState], current: f64, cand: usize) -> Result<(f64, usize)> {
        let mut j = current;
        let mut solves = 0;
        for t in targets {
            if t.cell == cand {
                j -= t.variance;
                continue;
            }
            if let Some(new) = self.variance_with_cand(t, cand)? {
                j -= t.variance - new;
                solves += 1;
            }
        }
        Ok((j, solves))
    }
}

/// Unmeasured cells whose centers lie within `corridor_m` of the segment
/// between the centers of `v_s` and `v_e`, excluding both endpoints.
pub fn corridor_candidates(
    ckm: &ChannelKnowledgeMap,
    v_s: GridIndex,
    v_e: GridIndex,
    corridor_m: f64,
) -> Result<Vec<usize>> {
    let spec = &ckm.spec;
    spec.check(v_s)?;
    spec.check(v_e)?;
    let (a, b) = (spec.center(v_s), spec.center(v_e));
    let (ls, le) = (spec.linear(v_s), spec.linear(v_e));
    let mut out = Vec::new();
    for l in 0..ckm.len() {
        if ckm.measured[l] || l == ls || l == le {
            continue;
        }
        let d = if ls == le {
            vec3::dist(spec.center_of(l), a)
        } else {
            geom::point_segment_distance(spec.center_of(l), a, b)?
        };
        if d <= corridor_m {
            out.push(l);
        }
    }
    Ok(out)
}

/// Greedy selection of `n` cells from `candidates` (linear indices, all
/// unmeasured). Ties go to the lowest linear index.
pub fn greedy_select(
    ckm: &ChannelKnowledgeMap,
    engine: &KrigingEngine,
    candidates: &[usize],
    n: usize,
) -> Result<MeasurementSet> {
    if n == 0 {
        return Err(Error::invalid("n", "must be at least 1"));
    }
    if candidates.len() < n {
        return Err(Error::InsufficientCandidates {
            available: candidates.len(),
            needed: n,
        });
    }
    let mut sel = Selector {
        engine,
        measured: ckm.measured.clone(),
        incremental: engine.supports_updates(),
    };
    let unmeasured: Vec<usize> = (0..ckm.len()).filter(|&l| !ckm.measured[l]).collect();
    let mut targets: Vec<TargetState> = unmeasured
        .par_iter()
        .map(|&c| sel.state(c, None))
        .collect::<Result<_>>()?;
    let mut solves = targets.len();
    let mut current: f64 = targets.iter().map(|t| t.variance).sum();
    let mut pool: Vec<usize> = candidates.to_vec();
    pool.sort_unstable();
    pool.dedup();
    let mut chosen = Vec::with_capacity(n);

    for _ in 0..n {
        let scored: Vec<(f64, usize)> = pool
            .par_iter()
            .map(|&c| sel.objective_with(&targets, current, c))
            .collect::<Result<_>>()?;
        solves += scored.iter().map(|s| s.1).sum::<usize>();
        let (best_pos, _) = scored
            .iter()
            .enumerate()
            .min_by(|a, b| a.1 .0.total_cmp(&b.1 .0).then(pool[a.0].cmp(&pool[b.0])))
            .expect("pool is non-empty");
        let pick = pool.remove(best_pos);
        chosen.push(pick);
        sel.measured[pick] = true;
        let pc = engine.spec().center_of(pick);
        targets.retain(|t| t.cell != pick);
        let stale: Vec<usize> = targets
            .iter()
            .enumerate()
            .filter(|(_, t)| vec3::dist(engine.spec().center_of(t.cell), pc) <= t.reach + 1e-9)
            .filter(|(_, t)| t.last.is_none_or(|last| engine.order_key(t.cell, pick) < last))
            .map(|(i, _)| i)
            .collect();
        let fresh: Vec<TargetState> = stale
            .par_iter()
            .map(|&i| sel.state(targets[i].cell, None))
            .collect::<Result<_>>()?;
        solves += fresh.len();
        for (i, f) in stale.into_iter().zip(fresh) {
            targets[i] = f;
        }
        current = targets.iter().map(|t| t.variance).sum();
    }
    Ok(MeasurementSet {
        grids: chosen.iter().map(|&l| ckm.spec.index(l)).collect(),
        objective: current,
        solves,
    })
}

/// Greedy measurement set restricted to a corridor around `v_s`-`v_e`.
pub fn select_measurement_set(
    ckm: &ChannelKnowledgeMap,
    engine: &KrigingEngine,
    n: usize,
    corridor_m: f64,
    v_s: GridIndex,
    v_e: GridIndex,
) -> Result<MeasurementSet> {
    let cands = corridor_candidates(ckm, v_s, v_e, corridor_m)?;
    greedy_select(ckm, engine, &cands, n)
}

/// Summed variance over unmeasured cells outside `set`, with `set` treated as measured.
pub fn residual_variance(ckm: &ChannelKnowledgeMap, engine: &KrigingEngine, set: &[usize]) -> Result<f64> {
    let mut measured = ckm.measured.clone();
    for &s in set {
        measured[s] = true;
    }
    (0..ckm.len())
        .filter(|&l| !measured[l])
        .map(|l| {
            let cells = engine.neighbors(&measured, l);
            engine.variance_with(&cells, l)
        })
        .sum()
}

/// Tour edge weight between two cell centers.
pub fn tour_edge_weight(a: GridIndex, b: GridIndex, ckm: &ChannelKnowledgeMap, beta: f64) -> Result<f64> {
    if !(beta >= 0.0) {
        return Err(Error::invalid("beta", "must be non-negative"));
    }
    let spec = &ckm.spec;
    spec.check(a)?;
    spec.check(b)?;
    let cross = geom::traversed_grids(a, b, spec)?;
    let outage: f64 = cross
        .iter()
        .filter(|t| ckm.outage_at(t.linear))
        .map(|t| t.chord)
        .sum();
    Ok(vec3::dist(spec.center(a), spec.center(b)) + beta * outage)
}

/// Dense symmetric weight matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightMatrix {
    n: usize,
    data: Vec<f64>,
}

impl WeightMatrix {
    pub fn zeros(n: usize) -> Self {
        WeightMatrix {
            n,
            data: vec![0.0; n * n],
        }
    }

    /// Builds from a symmetric function of vertex pairs; the diagonal is 0.
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(n);
        for a in 0..n {
            for b in a + 1..n {
                m.set(a, b, f(a, b));
            }
        }
        m
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.data[a * self.n + b]
    }

    /// Sets both `(a, b)` and `(b, a)`.
    pub fn set(&mut self, a: usize, b: usize, w: f64) {
        self.data[a * self.n + b] = w;
        self.data[b * self.n + a] = w;
    }

    /// Weight of a closed tour.
    pub fn cycle_weight(&self, tour: &[usize]) -> f64 {
        let n = tour.len();
        (0..n).map(|i| self.get(tour[i], tour[(i + 1) % n])).sum()
    }

    /// Weight of an open path.
    pub fn path_weight(&self, path: &[usize]) -> f64 {
        path.windows(2).map(|w| self.get(w[0], w[1])).sum()
    }
}

/// Forces edge `(s, e)` into every optimal closed tour: its weight becomes
/// `(N-1) * min - (N-2) * max - 1`, with `min` taken over the other edges.
pub fn open_tsp_to_tsp(w: &WeightMatrix, s: usize, e: usize) -> Result<WeightMatrix> {
    let n = w.len();
    if n < 3 {
        return Err(Error::InsufficientData {
            what: "tour vertices",
            needed: 3,
            got: n,
        });
    }
    if s >= n || e >= n || s == e {
        return Err(Error::invalid("endpoints", "must be two distinct vertices"));
    }
    let mut small = f64::INFINITY;
    let mut large = f64::NEG_INFINITY;
    for a in 0..n {
        for b in a + 1..n {
            let v = w.get(a, b);
            large = large.max(v);
            if !((a, b) == (s.min(e), s.max(e))) {
                small = small.min(v);
            }
        }
    }
    let mut out = w.clone();
    out.set(s, e, (n as f64 - 1.0) * small - (n as f64 - 2.0) * large - 1.0);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TspSolver {
    #[serde(rename = "nn_2opt")]
    Nn2opt,
    SimAnneal,
    BruteForce,
}

/// Nearest-neighbor tour from `start`, lowest index on ties.
pub fn nearest_neighbor_tour(w: &WeightMatrix, start: usize) -> Vec<usize> {
    let n = w.len();
    let mut seen = vec![false; n];
    let mut tour = vec![start];
    seen[start] = true;
    let mut cur = start;
    for _ in 1..n {
        let mut best = None;
        for v in 0..n {
            if !seen[v] && best.is_none_or(|b| w.get(cur, v) < w.get(cur, b)) {
                best = Some(v);
            }
        }
        let v = best.expect("unvisited vertex remains");
        seen[v] = true;
        tour.push(v);
        cur = v;
    }
    tour
}

/// First-improvement 2-opt on a closed tour until no reversal helps.
pub fn two_opt(w: &WeightMatrix, tour: &mut [usize]) {
    let n = tour.len();
    if n < 4 {
        return;
    }
    loop {
        let mut improved = false;
        for i in 0..n - 1 {
            for j in i + 2..n {
                if i == 0 && j == n - 1 {
                    continue;
                }
                let (a, b) = (tour[i], tour[i + 1]);
                let (c, d) = (tour[j], tour[(j + 1) % n]);
                let delta = w.get(a, c) + w.get(b, d) - w.get(a, b) - w.get(c, d);
                if delta < -1e-12 {
                    tour[i + 1..=j].reverse();
                    improved = true;
                }
            }
        }
        if !improved {
            return;
        }
    }
}

fn nn_2opt(w: &WeightMatrix) -> Vec<usize> {
    let mut best: Option<(f64, Vec<usize>)> = None;
    for s in 0..w.len() {
        let mut t = nearest_neighbor_tour(w, s);
        two_opt(w, &mut t);
        let c = w.cycle_weight(&t);
        if best.as_ref().is_none_or(|b| c < b.0 - 1e-12) {
            best = Some((c, t));
        }
    }
    best.expect("at least one vertex").1
}

/// Moves the block `tour[i..i+len]` to after position `j` (indices into the
/// tour with the block removed).
fn or_move(tour: &[usize], i: usize, len: usize, j: usize) -> Vec<usize> {
    let block: Vec<usize> = tour[i..i + len].to_vec();
    let mut rest: Vec<usize> = tour[..i].iter().chain(&tour[i + len..]).copied().collect();
    let at = (j + 1).min(rest.len());
    rest.splice(at..at, block);
    rest
}

fn sim_anneal(w: &WeightMatrix, seed: u64) -> Vec<usize> {
    let n = w.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cur = nearest_neighbor_tour(w, 0);
    let mut cur_w = w.cycle_weight(&cur);
    let mut best = (cur_w, cur.clone());
    let mut sum = 0.0;
    for a in 0..n {
        for b in a + 1..n {
            sum += w.get(a, b).abs();
        }
    }
    let mut temp = (sum / (n * (n - 1) / 2) as f64).max(1e-9);
    for _ in 0..200 * n {
        let cand = if rng.random_bool(0.5) {
            let i = rng.random_range(0..n - 1);
            let j = rng.random_range(i + 1..n);
            let mut t = cur.clone();
            t[i..=j].reverse();
            t
        } else {
            let len = rng.random_range(1..=3.min(n - 1));
            let i = rng.random_range(0..=n - len);
            let j = rng.random_range(0..n - len);
            or_move(&cur, i, len, j)
        };
        let cw = w.cycle_weight(&cand);
        let d = cw - cur_w;
        if d < 0.0 || rng.random::<f64>() < (-d / temp).exp() {
            cur = cand;
            cur_w = cw;
            if cur_w < best.0 - 1e-12 {
                best = (cur_w, cur.clone());
            }
        }
        temp *= 0.995;
    }
    let mut t = best.1;
    two_opt(w, &mut t);
    t
}

fn brute_force(w: &WeightMatrix) -> Vec<usize> {
    let n = w.len();
    let mut perm: Vec<usize> = (1..n).collect();
    let mut best = (f64::INFINITY, Vec::new());
    permute(&mut perm, 0, &mut |p| {
        let mut t = Vec::with_capacity(n);
        t.push(0);
        t.extend_from_slice(p);
        let c = w.cycle_weight(&t);
        if c < best.0 - 1e-12 {
            best = (c, t);
        }
    });
    best.1
}

/// Calls `f` on every permutation of `v[k..]` (with `v[..k]` fixed), in
/// lexicographic order when `v` starts sorted.
pub fn permute(v: &mut Vec<usize>, k: usize, f: &mut impl FnMut(&[usize])) {
    if k == v.len() {
        f(v);
        return;
    }
    for i in k..v.len() {
        let x = v.remove(i);
        v.insert(k, x);
        permute(v, k + 1, f);
        let x = v.remove(k);
        v.insert(i, x);
    }
}

/// Closed tour over all vertices of `w`.
pub fn solve_tsp(w: &WeightMatrix, solver: TspSolver, seed: u64) -> Result<Vec<usize>> {
    let n = w.len();
    if n < 3 {
        return Err(Error::InsufficientData {
            what: "tour vertices",
            needed: 3,
            got: n,
        });
    }
    Ok(match solver {
        TspSolver::Nn2opt => nn_2opt(w),
        TspSolver::SimAnneal => sim_anneal(w, seed),
        TspSolver::BruteForce => {
            if n > BRUTE_FORCE_MAX {
                return Err(Error::invalid(
                    "solver",
                    format!("brute force is limited to {BRUTE_FORCE_MAX} vertices, got {n}"),
                ));
            }
            brute_force(w)
        }
    })
}

/// Cuts a closed tour at edge `(s, e)` into a path from `s` to `e`.
pub fn cut_cycle(tour: &[usize], s: usize, e: usize) -> Option<Vec<usize>> {
    let n = tour.len();
    let p = tour.iter().position(|&v| v == s)?;
    let next = tour[(p + 1) % n];
    let prev = tour[(p + n - 1) % n];
    if prev == e {
        Some((0..n).map(|i| tour[(p + i) % n]).collect())
    } else if next == e {
        Some((0..n).map(|i| tour[(p + n - i) % n]).collect())
    } else {
        None
    }
}

/// 2-opt on an open path keeping both endpoints fixed.
fn open_two_opt(w: &WeightMatrix, path: &mut [usize]) {
    let n = path.len();
    loop {
        let mut improved = false;
        for i in 0..n.saturating_sub(3) {
            for j in i + 2..n - 1 {
                let (a, b, c, d) = (path[i], path[i + 1], path[j], path[j + 1]);
                if w.get(a, c) + w.get(b, d) - w.get(a, b) - w.get(c, d) < -1e-12 {
                    path[i + 1..=j].reverse();
                    improved = true;
                }
            }
        }
        if !improved {
            return;
        }
    }
}

/// Shortest open path from vertex `s` to vertex `e` through all vertices.
pub fn solve_open(w: &WeightMatrix, s: usize, e: usize, solver: TspSolver, seed: u64) -> Result<Vec<usize>> {
    let forced = open_tsp_to_tsp(w, s, e)?;
    let tour = solve_tsp(&forced, solver, seed)?;
    if let Some(p) = cut_cycle(&tour, s, e) {
        return Ok(p);
    }
    log::warn!("tour dropped the forced edge, repairing as an open path");
    let mut path = vec![s];
    path.extend(tour.iter().copied().filter(|&v| v != s && v != e));
    path.push(e);
    open_two_opt(w, &mut path);
    Ok(path)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TspParams {
    /// Measurement-set size per round.
    pub n: usize,
    pub beta: f64,
    /// Candidate corridor half-width; 25% of the start-end distance when absent.
    pub corridor_m: Option<f64>,
    pub solver: TspSolver,
    pub seed: u64,
}

impl Default for TspParams {
    fn default() -> Self {
        TspParams {
            n: 10,
            beta: 1.0,
            corridor_m: None,
            solver: TspSolver::Nn2opt,
            seed: 0,
        }
    }
}

impl TspParams {
    pub fn corridor_for(&self, ckm: &ChannelKnowledgeMap, v_s: GridIndex, v_e: GridIndex) -> f64 {
        self.corridor_m.unwrap_or_else(|| {
            0.25 * vec3::dist(ckm.spec.center(v_s), ckm.spec.center(v_e))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TspPlan {
    pub trajectory: Trajectory,
    pub set: MeasurementSet,
    /// Open-path weight under the unmodified tour weights.
    pub total_weight: f64,
    /// Tour vertices: start, the measurement set in selection order, end.
    pub nodes: Vec<GridIndex>,
    /// Edge weights between `nodes`.
    pub weights: WeightMatrix,
}

/// Selects the measurement set and orders it into a path from `v_s` to `v_e`.
pub fn plan(
    ckm: &ChannelKnowledgeMap,
    engine: &KrigingEngine,
    v_s: GridIndex,
    v_e: GridIndex,
    params: &TspParams,
) -> Result<TspPlan> {
    let spec = &ckm.spec;
    spec.check(v_s)?;
    spec.check(v_e)?;
    if v_s == v_e {
        return Err(Error::CoincidentPoints("start and end"));
    }
    let corridor = params.corridor_for(ckm, v_s, v_e);
    let set = select_measurement_set(ckm, engine, params.n, corridor, v_s, v_e)?;
    let mut nodes = vec![v_s];
    nodes.extend(&set.grids);
    nodes.push(v_e);
    let mut err = None;
    let w = WeightMatrix::from_fn(nodes.len(), |a, b| {
        tour_edge_weight(nodes[a], nodes[b], ckm, params.beta).unwrap_or_else(|e| {
            err = Some(e);
            f64::NAN
        })
    });
    if let Some(e) = err {
        return Err(e);
    }
    let e = nodes.len() - 1;
    let order = solve_open(&w, 0, e, params.solver, params.seed)?;
    Ok(TspPlan {
        trajectory: Trajectory::new(0, order.iter().map(|&v| nodes[v]).collect(), spec)?,
        total_weight: w.path_weight(&order),
        set,
        nodes,
        weights: w,
    })
}
