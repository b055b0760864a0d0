//! Shortest-path planner on the directed 6-neighbor lattice.
//!
//! Every cell is a vertex; face-adjacent cells are joined by two directed
//! edges. The edge `a -> b` costs
//!
//! ```text
//! w(a, b) = D + mu1 * D/2 * [a in outage] + mu1 * D/2 * [b in outage] + mu2 * D * [b unmeasured]
//! ```
//!
//! with `mu1 >= 0` and `mu2 <= 0`. Outage of unmeasured cells comes from the
//! Kriging estimate; the unmeasured mask is frozen at round start.
//!
//! With `mu2 < -1` two adjacent unmeasured clear cells form a negative
//! 2-cycle, so exact shortest paths do not exist. The exact modes refuse such
//! instances; [`SppMode::PrizeGreedy`] searches elementary paths instead, so
//! each measurement reward is collected at most once.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ckm::ChannelKnowledgeMap;
use crate::error::{Error, Result};
use crate::geom::Trajectory;
use crate::grid::{GridIndex, GridSpec};

/// Largest lattice the Floyd mode will materialize a distance matrix for.
pub const FLOYD_MAX_VERTICES: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SppWeights {
    pub mu1: f64,
    pub mu2: f64,
}

impl SppWeights {
    pub fn new(mu1: f64, mu2: f64) -> Result<Self> {
        let w = SppWeights { mu1, mu2 };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu1 >= 0.0 && self.mu1.is_finite()) {
            return Err(Error::invalid("mu1", "outage weight must be non-negative"));
        }
        if !(self.mu2 <= 0.0 && self.mu2.is_finite()) {
            return Err(Error::invalid("mu2", "measurement weight must be non-positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SppMode {
    Floyd,
    BellmanFord,
    PrizeGreedy,
}

impl SppMode {
    /// Prize-collecting search when rewards are active, exact otherwise.
    pub fn auto(w: &SppWeights) -> Self {
        if w.mu2 < 0.0 {
            SppMode::PrizeGreedy
        } else {
            SppMode::BellmanFord
        }
    }
}

/// Beam search settings for [`SppMode::PrizeGreedy`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PrizeParams {
    pub beam_width: usize,
    /// Hop budget as a multiple of the start-end lattice distance.
    pub detour_factor: f64,
    /// Labels kept per vertex at one depth (distinct visited sets).
    pub labels_per_vertex: usize,
}

impl Default for PrizeParams {
    fn default() -> Self {
        PrizeParams {
            beam_width: 64,
            detour_factor: 2.0,
            labels_per_vertex: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SppPlan {
    pub trajectory: Trajectory,
    pub total_weight: f64,
    pub solver_mode: SppMode,
}

/// Implicit weighted lattice digraph over a frozen map snapshot.
struct Lattice<'a> {
    spec: &'a GridSpec,
    outage: Vec<bool>,
    unmeasured: Vec<bool>,
    w: SppWeights,
}

impl<'a> Lattice<'a> {
    fn new(ckm: &'a ChannelKnowledgeMap, w: SppWeights) -> Self {
        Lattice {
            spec: &ckm.spec,
            outage: ckm.outage_mask(),
            unmeasured: ckm.measured.iter().map(|m| !m).collect(),
            w,
        }
    }

    #[inline]
    fn weight(&self, a: usize, b: usize) -> f64 {
        let d = self.spec.delta;
        let mut v = d;
        if self.outage[a] {
            v += 0.5 * self.w.mu1 * d;
        }
        if self.outage[b] {
            v += 0.5 * self.w.mu1 * d;
        }
        if self.unmeasured[b] {
            v += self.w.mu2 * d;
        }
        v
    }

    fn eps(&self) -> f64 {
        1e-9 * self.spec.delta
    }
}

/// Weight of the directed edge `a -> b`.
pub fn edge_weight(
    a: GridIndex,
    b: GridIndex,
    ckm: &ChannelKnowledgeMap,
    w: &SppWeights,
) -> Result<f64> {
    let spec = &ckm.spec;
    spec.check(a)?;
    spec.check(b)?;
    if !spec.adjacent(a, b) {
        return Err(Error::NotAdjacent {
            a: a.as_array(),
            b: b.as_array(),
        });
    }
    let d = spec.delta;
    let o = |x: GridIndex| ckm.outage_at(spec.linear(x)) as u8 as f64;
    let m = (!ckm.measured[spec.linear(b)]) as u8 as f64;
    Ok(d + 0.5 * w.mu1 * d * o(a) + 0.5 * w.mu1 * d * o(b) + w.mu2 * d * m)
}

/// Bellman-Ford from a virtual source joined to every vertex at zero cost.
pub fn detect_negative_cycle(ckm: &ChannelKnowledgeMap, w: &SppWeights) -> bool {
    let g = Lattice::new(ckm, *w);
    let n = g.spec.len();
    let eps = g.eps();
    let mut dist = vec![0.0_f64; n];
    let mut nbr = Vec::with_capacity(6);
    for _ in 0..n {
        let mut changed = false;
        for u in 0..n {
            g.spec.neighbor_linear(u, &mut nbr);
            for &v in &nbr {
                let cand = dist[u] + g.weight(u, v);
                if cand < dist[v] - eps {
                    dist[v] = cand;
                    changed = true;
                }
            }
        }
        if !changed {
            return false;
        }
    }
    true
}

/// Exact distance from every vertex to `target` (queue-based Bellman-Ford on
/// the reversed graph).
fn distances_to(g: &Lattice, target: usize) -> Result<Vec<f64>> {
    let n = g.spec.len();
    let eps = g.eps();
    let mut dist = vec![f64::INFINITY; n];
    let mut in_queue = vec![false; n];
    let mut pushes = vec![0usize; n];
    let mut queue = VecDeque::new();
    dist[target] = 0.0;
    queue.push_back(target);
    in_queue[target] = true;
    let mut nbr = Vec::with_capacity(6);
    while let Some(u) = queue.pop_front() {
        in_queue[u] = false;
        g.spec.neighbor_linear(u, &mut nbr);
        for &p in &nbr {
            let cand = g.weight(p, u) + dist[u];
            if cand < dist[p] - eps {
                dist[p] = cand;
                if !in_queue[p] {
                    pushes[p] += 1;
                    if pushes[p] > n {
                        return Err(Error::NegativeCycle);
                    }
                    in_queue[p] = true;
                    queue.push_back(p);
                }
            }
        }
    }
    Ok(dist)
}

fn floyd_distances_to(g: &Lattice, target: usize) -> Result<Vec<f64>> {
    let n = g.spec.len();
    if n > FLOYD_MAX_VERTICES {
        return Err(Error::LatticeTooLarge {
            vertices: n,
            limit: FLOYD_MAX_VERTICES,
        });
    }
    let mut d = vec![f64::INFINITY; n * n];
    let mut nbr = Vec::with_capacity(6);
    for u in 0..n {
        d[u * n + u] = 0.0;
        g.spec.neighbor_linear(u, &mut nbr);
        for &v in &nbr {
            d[u * n + v] = g.weight(u, v);
        }
    }
    for k in 0..n {
        for i in 0..n {
            let dik = d[i * n + k];
            if dik == f64::INFINITY {
                continue;
            }
            for j in 0..n {
                let cand = dik + d[k * n + j];
                if cand < d[i * n + j] {
                    d[i * n + j] = cand;
                }
            }
        }
        if d[k * n + k] < -g.eps() {
            return Err(Error::NegativeCycle);
        }
    }
    if (0..n).any(|i| d[i * n + i] < -g.eps()) {
        return Err(Error::NegativeCycle);
    }
    Ok((0..n).map(|i| d[i * n + target]).collect())
}

/// Follows tight edges from `start`, taking the smallest-index successor on ties.
fn walk(g: &Lattice, dist: &[f64], start: usize, target: usize) -> Result<Vec<usize>> {
    let n = g.spec.len();
    let mut path = vec![start];
    let mut seen = vec![false; n];
    seen[start] = true;
    let mut cur = start;
    let mut nbr = Vec::with_capacity(6);
    while cur != target {
        g.spec.neighbor_linear(cur, &mut nbr);
        let tol = 1e-9 * dist[cur].abs().max(g.spec.delta);
        let tight = nbr
            .iter()
            .copied()
            .find(|&v| !seen[v] && (g.weight(cur, v) + dist[v] - dist[cur]).abs() <= tol);
        let next = match tight {
            Some(v) => v,
            None => nbr
                .iter()
                .copied()
                .filter(|&v| !seen[v] && dist[v].is_finite())
                .min_by(|&a, &b| {
                    (g.weight(cur, a) + dist[a]).total_cmp(&(g.weight(cur, b) + dist[b]))
                })
                .ok_or(Error::NoPath)?,
        };
        seen[next] = true;
        path.push(next);
        cur = next;
    }
    Ok(path)
}

#[derive(Clone, Copy)]
struct Label {
    vertex: usize,
    parent: u32,
    cost: f64,
    hash: u64,
}

const ROOT: u32 = u32::MAX;

fn on_path(arena: &[Label], mut node: u32, v: usize) -> bool {
    while node != ROOT {
        let l = &arena[node as usize];
        if l.vertex == v {
            return true;
        }
        node = l.parent;
    }
    false
}

/// Beam search over elementary paths with a hop budget.
///
/// Partial paths at one depth are ranked by their cost plus `delta` times
/// the remaining lattice distance; the cheapest complete path wins.
fn prize_greedy(g: &Lattice, start: usize, target: usize, params: &PrizeParams) -> Option<Vec<usize>> {
    let spec = g.spec;
    let t_idx = spec.index(target);
    let l1 = spec.index(start).manhattan(&t_idx);
    let budget = l1.max((params.detour_factor * l1 as f64).ceil() as usize);
    // Zobrist keys identify visited sets
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let keys: Vec<u64> = (0..spec.len()).map(|_| rng.random()).collect();

    let mut arena = vec![Label {
        vertex: start,
        parent: ROOT,
        cost: 0.0,
        hash: keys[start],
    }];
    let mut frontier = vec![0u32];
    let mut best: Option<(f64, u32)> = None;
    let mut nbr = Vec::with_capacity(6);
    let mut per_vertex = vec![0usize; spec.len()];

    for depth in 1..=budget {
        let remaining = budget - depth;
        let mut cand: Vec<(f64, usize, u32, u64)> = Vec::new();
        for &node in &frontier {
            let lab = arena[node as usize];
            spec.neighbor_linear(lab.vertex, &mut nbr);
            for &v in &nbr {
                if spec.index(v).manhattan(&t_idx) > remaining || on_path(&arena, node, v) {
                    continue;
                }
                let cost = lab.cost + g.weight(lab.vertex, v);
                if v == target {
                    if best.is_none_or(|(c, _)| cost < c) {
                        arena.push(Label {
                            vertex: v,
                            parent: node,
                            cost,
                            hash: lab.hash ^ keys[v],
                        });
                        best = Some((cost, (arena.len() - 1) as u32));
                    }
                    continue;
                }
                cand.push((cost, v, node, lab.hash ^ keys[v]));
            }
        }
        // rank by cost so far plus the plain travel cost still owed
        let key = |c: &(f64, usize, u32, u64)| c.0 + spec.delta * spec.index(c.1).manhattan(&t_idx) as f64;
        cand.sort_by(|a, b| key(a).total_cmp(&key(b)).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut next = Vec::with_capacity(params.beam_width);
        let mut kept: Vec<(usize, u64)> = Vec::new();
        for (cost, v, parent, hash) in cand {
            if next.len() >= params.beam_width {
                break;
            }
            if per_vertex[v] >= params.labels_per_vertex || kept.contains(&(v, hash)) {
                continue;
            }
            per_vertex[v] += 1;
            kept.push((v, hash));
            arena.push(Label {
                vertex: v,
                parent,
                cost,
                hash,
            });
            next.push((arena.len() - 1) as u32);
        }
        for (v, _) in kept {
            per_vertex[v] = 0;
        }
        if next.is_empty() {
            break;
        }
        frontier = next;
    }

    let (_, mut node) = best?;
    let mut path = Vec::new();
    while node != ROOT {
        path.push(arena[node as usize].vertex);
        node = arena[node as usize].parent;
    }
    path.reverse();
    Some(path)
}

/// Plans a lattice path from `v_s` to `v_e`.
pub fn plan(
    ckm: &ChannelKnowledgeMap,
    v_s: GridIndex,
    v_e: GridIndex,
    w: &SppWeights,
    mode: SppMode,
    prize: &PrizeParams,
) -> Result<SppPlan> {
    w.validate()?;
    let spec = &ckm.spec;
    spec.check(v_s)?;
    spec.check(v_e)?;
    if v_s == v_e {
        return Err(Error::CoincidentPoints("start and end"));
    }
    let g = Lattice::new(ckm, *w);
    let (s, e) = (spec.linear(v_s), spec.linear(v_e));
    let (path, used) = match mode {
        SppMode::Floyd => (walk(&g, &floyd_distances_to(&g, e)?, s, e)?, mode),
        SppMode::BellmanFord => (walk(&g, &distances_to(&g, e)?, s, e)?, mode),
        SppMode::PrizeGreedy => match prize_greedy(&g, s, e, prize) {
            Some(p) => (p, mode),
            None => {
                log::warn!("prize search found no path, falling back to mu2 = 0");
                let plain = Lattice {
                    w: SppWeights { mu2: 0.0, ..*w },
                    ..Lattice::new(ckm, *w)
                };
                (walk(&plain, &distances_to(&plain, e)?, s, e)?, SppMode::BellmanFord)
            }
        },
    };
    let total_weight = path.windows(2).map(|p| g.weight(p[0], p[1])).sum();
    let waypoints = path.iter().map(|&l| spec.index(l)).collect();
    Ok(SppPlan {
        trajectory: Trajectory::new(0, waypoints, spec)?,
        total_weight,
        solver_mode: used,
    })
}
