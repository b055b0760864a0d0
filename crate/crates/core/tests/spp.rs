mod common;

use std::collections::HashSet;

use ckm_nav::geom::eval_objectives;
use ckm_nav::grid::GridIndex;
use ckm_nav::spp::{detect_negative_cycle, edge_weight, plan, PrizeParams, SppMode, SppPlan, SppWeights};
use ckm_nav::ChannelKnowledgeMap;
use common::{dijkstra_weight, synthetic_map};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_cell(ckm: &ChannelKnowledgeMap, rng: &mut ChaCha8Rng) -> GridIndex {
    let d = ckm.spec.dims;
    GridIndex::new(rng.random_range(1..=d[0]), rng.random_range(1..=d[1]), rng.random_range(1..=d[2]))
}

fn distinct_pair(ckm: &ChannelKnowledgeMap, rng: &mut ChaCha8Rng) -> (GridIndex, GridIndex) {
    loop {
        let (a, b) = (random_cell(ckm, rng), random_cell(ckm, rng));
        if a != b {
            return (a, b);
        }
    }
}

/// Checks the path constraints and returns the recomputed weight.
fn check_path(p: &SppPlan, ckm: &ChannelKnowledgeMap, s: GridIndex, e: GridIndex, w: &SppWeights) -> f64 {
    let wp = &p.trajectory.waypoints;
    assert_eq!(wp[0], s);
    assert_eq!(*wp.last().unwrap(), e);
    let set: HashSet<_> = wp.iter().collect();
    assert_eq!(set.len(), wp.len(), "path revisits a cell");
    wp.windows(2).map(|x| edge_weight(x[0], x[1], ckm, w).unwrap()).sum()
}

#[test]
fn zero_weights_give_l1_lengths() {
    let ckm = synthetic_map([40, 40, 4], 20, 0.5, 0.1);
    let w = SppWeights::new(0.0, 0.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    for _ in 0..100 {
        let (s, e) = distinct_pair(&ckm, &mut rng);
        let p = plan(&ckm, s, e, &w, SppMode::BellmanFord, &PrizeParams::default()).unwrap();
        let l1 = 10.0 * s.manhattan(&e) as f64;
        assert_eq!(p.total_weight, l1);
        assert_eq!(p.trajectory.length(&ckm.spec), l1);
    }
}

#[test]
fn exact_modes_match_dijkstra() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for inst in 0..50 {
        let ckm = synthetic_map([10, 10, 3], 100 + inst, 0.5, rng.random_range(0.05..0.4));
        let mu1 = [0.0, 0.5, 1.0, 2.0, 4.0, 8.0][rng.random_range(0..6)];
        let w = SppWeights::new(mu1, 0.0).unwrap();
        let (s, e) = distinct_pair(&ckm, &mut rng);
        let oracle = dijkstra_weight(&ckm, &w, s, e);
        for mode in [SppMode::Floyd, SppMode::BellmanFord] {
            let p = plan(&ckm, s, e, &w, mode, &PrizeParams::default()).unwrap();
            assert_eq!(p.solver_mode, mode);
            assert_eq!(p.total_weight, oracle, "instance {inst} mode {mode:?}");
            assert_eq!(check_path(&p, &ckm, s, e, &w), oracle);
        }
    }
}

#[test]
fn wall_with_one_gap_routes_through_the_gap() {
    let mut ckm = synthetic_map([7, 7, 1], 22, 1.0, 0.0);
    ckm.gamma_th_db = 0.0;
    for l in 0..ckm.len() {
        ckm.truth_sinr_db[l] = 10.0;
        ckm.estimate_sinr_db[l] = 10.0;
    }
    for j in 1..=7 {
        if j != 6 {
            let l = ckm.spec.linear(GridIndex::new(4, j, 1));
            ckm.truth_sinr_db[l] = -10.0;
            ckm.estimate_sinr_db[l] = -10.0;
        }
    }
    let w = SppWeights::new(100.0, 0.0).unwrap();
    let (s, e) = (GridIndex::new(1, 2, 1), GridIndex::new(7, 2, 1));
    let p = plan(&ckm, s, e, &w, SppMode::BellmanFord, &PrizeParams::default()).unwrap();
    assert!(p.trajectory.waypoints.contains(&GridIndex::new(4, 6, 1)));
    assert_eq!(p.total_weight, dijkstra_weight(&ckm, &w, s, e));
    assert_eq!(eval_objectives(&p.trajectory, &ckm, &ckm.measured).o_r, 0.0);
}

fn enumerate_simple(
    ckm: &ChannelKnowledgeMap,
    w: &SppWeights,
    at: GridIndex,
    e: GridIndex,
    seen: &mut Vec<GridIndex>,
    cost: f64,
    max_edges: usize,
    best: &mut f64,
) {
    if at == e {
        *best = best.min(cost);
        return;
    }
    if seen.len() > max_edges {
        return;
    }
    for n in ckm.spec.neighbors(at).collect::<Vec<_>>() {
        if seen.contains(&n) {
            continue;
        }
        seen.push(n);
        let c = cost + edge_weight(at, n, ckm, w).unwrap();
        enumerate_simple(ckm, w, n, e, seen, c, max_edges, best);
        seen.pop();
    }
}

#[test]
fn small_reward_matches_simple_path_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for inst in 0..20 {
        let ckm = synthetic_map([5, 5, 1], 200 + inst, 0.5, 0.2);
        let mu1 = [0.0, 0.5][inst as usize % 2];
        let w = SppWeights::new(mu1, -0.5).unwrap();
        assert!(!detect_negative_cycle(&ckm, &w));
        let (s, e) = loop {
            let (s, e) = distinct_pair(&ckm, &mut rng);
            if s.manhattan(&e) <= 4 {
                break (s, e);
            }
        };
        let mut best = f64::INFINITY;
        enumerate_simple(&ckm, &w, s, e, &mut vec![s], 0.0, 12, &mut best);
        // every edge costs at least half a cell, so 13+ edges cannot beat this
        assert!(best < 6.5 * ckm.spec.delta);
        let p = plan(&ckm, s, e, &w, SppMode::BellmanFord, &PrizeParams::default()).unwrap();
        assert!((p.total_weight - best).abs() < 1e-9, "instance {inst}: {} vs {best}", p.total_weight);
    }
}

#[test]
fn prize_mode_returns_simple_valid_paths() {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    for inst in 0..20 {
        let ckm = synthetic_map([12, 12, 3], 300 + inst, 0.5, 0.15);
        let w = SppWeights::new(8.0, -3.0).unwrap();
        assert!(detect_negative_cycle(&ckm, &w));
        assert!(plan(&ckm, GridIndex::new(1, 1, 1), GridIndex::new(2, 1, 1), &w, SppMode::BellmanFord, &PrizeParams::default()).is_err());
        let (s, e) = distinct_pair(&ckm, &mut rng);
        let p = plan(&ckm, s, e, &w, SppMode::auto(&w), &PrizeParams::default()).unwrap();
        assert_eq!(p.solver_mode, SppMode::PrizeGreedy);
        let recomputed = check_path(&p, &ckm, s, e, &w);
        assert!((p.total_weight - recomputed).abs() < 1e-9);
        assert!(p.trajectory.waypoints.len() - 1 <= (2.0 * s.manhattan(&e) as f64).ceil() as usize);
    }
}

#[test]
fn outage_length_never_grows_with_mu1() {
    let mut rng = ChaCha8Rng::seed_from_u64(25);
    for inst in 0..20 {
        let ckm = synthetic_map([12, 12, 2], 400 + inst, 0.5, 0.3);
        let (s, e) = distinct_pair(&ckm, &mut rng);
        let mut prev = f64::INFINITY;
        for mu1 in [0.0, 0.5, 1.0, 2.0, 4.0, 8.0] {
            let w = SppWeights::new(mu1, 0.0).unwrap();
            let p = plan(&ckm, s, e, &w, SppMode::BellmanFord, &PrizeParams::default()).unwrap();
            let o = eval_objectives(&p.trajectory, &ckm, &ckm.measured).o_r;
            assert!(o <= prev + 1e-9);
            prev = o;
        }
    }
}

#[test]
fn reward_term_depends_on_the_head_only() {
    let ckm = synthetic_map([4, 4, 1], 26, 0.5, 0.3);
    let w = SppWeights::new(2.0, -1.0).unwrap();
    let spec = &ckm.spec;
    for a in spec.indices() {
        for b in spec.neighbors(a) {
            let ab = edge_weight(a, b, &ckm, &w).unwrap();
            let ba = edge_weight(b, a, &ckm, &w).unwrap();
            let m = |x: GridIndex| (!ckm.measured[spec.linear(x)]) as u8 as f64 * w.mu2 * spec.delta;
            assert!((ab - m(b) - (ba - m(a))).abs() < 1e-12);
        }
    }
    assert!(edge_weight(GridIndex::new(1, 1, 1), GridIndex::new(3, 1, 1), &ckm, &w).is_err());
}
