#![allow(dead_code)]

use std::path::PathBuf;

use ckm_nav::io::read_json;
use ckm_nav::sim::{Experiment, ExperimentConfig};
use ckm_nav::spp::{edge_weight, SppWeights};
use ckm_nav::tsp::{permute, WeightMatrix};
use ckm_nav::{ChannelKnowledgeMap, GridIndex, GridSpec};
use petgraph::algo::dijkstra;
use petgraph::graph::{DiGraph, NodeIndex};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn config_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

pub fn reference() -> (ExperimentConfig, Experiment) {
    let cfg: ExperimentConfig = read_json(&config_path("reference.json")).unwrap();
    let ex = cfg.build().unwrap();
    (cfg, ex)
}

/// Smooth random field on a `dims` lattice with spacing 10 m.
///
/// `measured_frac` of the cells are measured; unmeasured estimates are the
/// truth plus noise. The threshold puts roughly `outage_frac` of cells in outage.
pub fn synthetic_map(dims: [usize; 3], seed: u64, measured_frac: f64, outage_frac: f64) -> ChannelKnowledgeMap {
    let spec = GridSpec::new([0.0; 3], 10.0, dims).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (a, b, c): (f64, f64, f64) = (rng.random_range(20.0..60.0), rng.random_range(20.0..60.0), rng.random());
    let n = spec.len();
    let mut truth = Vec::with_capacity(n);
    for l in 0..n {
        let p = spec.center_of(l);
        truth.push(10.0 * (p[0] / a + c).sin() + 8.0 * (p[1] / b + p[2] / 17.0).cos() + rng.random_range(-1.0..1.0));
    }
    let mut sorted = truth.clone();
    sorted.sort_by(f64::total_cmp);
    let gamma = sorted[((n - 1) as f64 * outage_frac) as usize] + 1e-9;
    let measured: Vec<bool> = (0..n).map(|_| rng.random::<f64>() < measured_frac).collect();
    let estimate: Vec<f64> = (0..n)
        .map(|l| if measured[l] { truth[l] } else { truth[l] + rng.random_range(-3.0..3.0) })
        .collect();
    ChannelKnowledgeMap {
        spec,
        gamma_th_db: gamma,
        truth_sinr_db: truth,
        measured,
        estimate_sinr_db: estimate,
        variance: vec![0.0; n],
        association: vec![0; n],
    }
}

pub fn random_point<R: Rng>(rng: &mut R, extent: f64) -> [f64; 3] {
    [
        rng.random_range(0.0..extent),
        rng.random_range(0.0..extent),
        rng.random_range(0.0..extent),
    ]
}

pub fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Length of `a`-`b` inside the sphere `(c, r)`, from the quadratic in the
/// segment parameter.
pub fn quadratic_chord(c: [f64; 3], a: [f64; 3], b: [f64; 3], r: f64) -> f64 {
    let d = sub(b, a);
    let f = sub(a, c);
    let qa = dot(d, d);
    let qb = 2.0 * dot(f, d);
    let qc = dot(f, f) - r * r;
    let disc = qb * qb - 4.0 * qa * qc;
    if disc <= 0.0 {
        return 0.0;
    }
    let t0 = ((-qb - disc.sqrt()) / (2.0 * qa)).max(0.0);
    let t1 = ((-qb + disc.sqrt()) / (2.0 * qa)).min(1.0);
    (t1 - t0).max(0.0) * qa.sqrt()
}

/// Shortest-path weight from petgraph's Dijkstra over the lattice digraph.
pub fn dijkstra_weight(ckm: &ChannelKnowledgeMap, w: &SppWeights, s: GridIndex, e: GridIndex) -> f64 {
    let spec = &ckm.spec;
    let mut g = DiGraph::<(), f64>::new();
    let nodes: Vec<NodeIndex> = (0..spec.len()).map(|_| g.add_node(())).collect();
    for a in spec.indices() {
        for b in spec.neighbors(a) {
            let wt = edge_weight(a, b, ckm, w).unwrap();
            g.add_edge(nodes[spec.linear(a)], nodes[spec.linear(b)], wt);
        }
    }
    let d = dijkstra(&g, nodes[spec.linear(s)], Some(nodes[spec.linear(e)]), |x| *x.weight());
    d[&nodes[spec.linear(e)]]
}

/// Fully measured synthetic map with `u` cells unmeasured at random.
pub fn map_with_unmeasured(dims: [usize; 3], u: usize, seed: u64) -> ChannelKnowledgeMap {
    let mut ckm = synthetic_map(dims, seed, 1.0, 0.1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for l in sample(&mut rng, ckm.len(), u) {
        ckm.measured[l] = false;
    }
    ckm
}

pub fn unmeasured(ckm: &ChannelKnowledgeMap) -> Vec<usize> {
    (0..ckm.len()).filter(|&l| !ckm.measured[l]).collect()
}

/// Cheapest path from `s` to `e` through every vertex, by enumeration.
pub fn brute_open(w: &WeightMatrix, s: usize, e: usize) -> f64 {
    let mut mid: Vec<usize> = (0..w.len()).filter(|&v| v != s && v != e).collect();
    let k = mid.len();
    let mut best = f64::INFINITY;
    permute(&mut mid, k, &mut |m| {
        let mut p = vec![s];
        p.extend_from_slice(m);
        p.push(e);
        best = best.min(w.path_weight(&p));
    });
    best
}
