use std::collections::VecDeque;

use invmdp::generators::{grid_transitions, gridworld, random_grid24, GridPolicy};
use invmdp::model::{build_cmp, one_step_inverse, ActionSeq, ControlledMP, Policy};
use invmdp::planner::{plan, reachable, shortest_plan, support_graph, SupportGraph};
use invmdp::rng::rng_from_seed;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::Rng;

fn bfs_distances(p: &[DMatrix<f64>], start: usize) -> Vec<Option<usize>> {
    let d = p[0].nrows();
    let mut dist = vec![None; d];
    dist[start] = Some(0);
    let mut queue = VecDeque::from([start]);
    while let Some(s) = queue.pop_front() {
        for pa in p {
            for t in 0..d {
                if pa[(s, t)] > 0.0 && dist[t].is_none() {
                    dist[t] = Some(dist[s].unwrap() + 1);
                    queue.push_back(t);
                }
            }
        }
    }
    dist
}

fn simulate(p: &[DMatrix<f64>], s: usize, actions: &ActionSeq) -> usize {
    actions.as_slice().iter().fold(s, |cur, &a| {
        (0..p[a].ncols()).find(|&t| p[a][(cur, t)] == 1.0).expect("deterministic")
    })
}

#[test]
fn grid_plans_match_bfs() {
    for seed in 0..4 {
        let spec = random_grid24(seed).unwrap();
        let p = grid_transitions(&spec).unwrap();
        let m = gridworld(&spec, &GridPolicy::Uniform).unwrap();
        let g = support_graph(&one_step_inverse(&m));
        for s in 0..24 {
            let dist = bfs_distances(&p, s);
            for goal in 0..24 {
                // The stay action makes exact-length and bounded-length reachability agree.
                for i in 0..=10 {
                    let expect = dist[goal].is_some_and(|x| x <= i);
                    assert_eq!(reachable(&g, s, goal, i), expect);
                    if let Some(pl) = plan(&g, s, goal, i) {
                        assert!(g.replay(&pl));
                        assert_eq!(simulate(&p, s, &pl.actions), goal);
                    } else {
                        assert!(!expect);
                    }
                }
                let shortest = shortest_plan(&g, s, goal, 30).map(|(i, _)| i);
                assert_eq!(shortest, dist[goal]);
            }
        }
    }
}

fn sparse_cmp(d: usize, k: usize, seed: u64) -> ControlledMP {
    let mut rng = rng_from_seed(seed);
    let p: Vec<DMatrix<f64>> = (0..k)
        .map(|_| {
            let mut m = DMatrix::from_fn(d, d, |_, _| if rng.random_bool(0.25) { rng.random::<f64>() + 0.1 } else { 0.0 });
            for s in 0..d {
                if m.row(s).sum() == 0.0 {
                    m[(s, rng.random_range(0..d))] = 1.0;
                }
                let total = m.row(s).sum();
                m.row_mut(s).scale_mut(1.0 / total);
            }
            m
        })
        .collect();
    build_cmp(&p, &Policy::uniform(k, d)).unwrap()
}

fn brute_reachable(g: &SupportGraph, s: usize, goal: usize, i: usize) -> bool {
    ActionSeq::all(g.k(), i).any(|seq| {
        let mut cur = vec![false; g.d()];
        cur[s] = true;
        for &a in seq.as_slice() {
            cur = (0..g.d()).map(|t| (0..g.d()).any(|u| cur[u] && g.g[a][(u, t)])).collect();
        }
        cur[goal]
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn reachability_matches_sequence_enumeration(d in 2usize..9, k in 1usize..4, i in 0usize..5, seed in 0u64..10_000) {
        let m = sparse_cmp(d, k, seed);
        let g = support_graph(&one_step_inverse(&m));
        for s in 0..d {
            for goal in 0..d {
                let r = reachable(&g, s, goal, i);
                prop_assert_eq!(r, brute_reachable(&g, s, goal, i));
                let pl = plan(&g, s, goal, i);
                prop_assert_eq!(pl.is_some(), r);
                if let Some(pl) = pl {
                    prop_assert!(g.replay(&pl));
                    prop_assert_eq!(pl.actions.len(), i);
                    prop_assert_eq!(*pl.states.last().unwrap(), goal);
                }
            }
        }
    }

    #[test]
    fn g_plus_is_union(d in 2usize..7, k in 1usize..4, seed in 0u64..10_000) {
        let g = support_graph(&one_step_inverse(&sparse_cmp(d, k, seed)));
        for s in 0..d {
            for t in 0..d {
                prop_assert_eq!(g.g_plus[(s, t)], g.g.iter().any(|ga| ga[(s, t)]));
            }
        }
    }
}
