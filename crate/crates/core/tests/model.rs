use invmdp::generators::{
    add_noise, cycle_condition, random_cmp, split_counterexample, tensor_product, CycleCondition,
    PermPair,
};
use invmdp::model::*;
use nalgebra::DMatrix;
use proptest::prelude::*;

/// Probability of every path `s -> … -> e` under the action sequence, by enumeration.
fn path_mass(m: &ControlledMP, s: usize, e: usize, actions: &[usize]) -> f64 {
    let d = m.d();
    let n = actions.len();
    let mut total = 0.0;
    for mid in 0..d.pow((n - 1) as u32) {
        let mut trace = Vec::with_capacity(2 * n);
        let mut rest = mid;
        for (t, &a) in actions.iter().enumerate() {
            trace.push(a);
            if t + 1 == n {
                trace.push(e);
            } else {
                trace.push(rest % d);
                rest /= d;
            }
        }
        total += dynamics_prob(m, s, &trace).unwrap();
    }
    total
}

fn enumerated_inverse(m: &ControlledMP, n: usize) -> Vec<Vec<Vec<Option<f64>>>> {
    let (k, d) = (m.k(), m.d());
    let seqs: Vec<ActionSeq> = ActionSeq::all(k, n).collect();
    (0..d)
        .map(|s| {
            (0..d)
                .map(|e| {
                    let masses: Vec<f64> = seqs.iter().map(|q| path_mass(m, s, e, q.as_slice())).collect();
                    let total: f64 = masses.iter().sum();
                    masses.iter().map(|&x| (total > 0.0).then(|| x / total)).collect()
                })
                .collect()
        })
        .collect()
}

#[test]
fn inverse_models_match_path_enumeration() {
    for seed in 0..12 {
        let d = 2 + (seed as usize % 3);
        let k = 1 + (seed as usize % 3);
        let m = sparse_or_dense(d, k, seed);
        for n in 1..=3 {
            let seq = sequence_inverse(&m, n);
            let oracle = enumerated_inverse(&m, n);
            let fa = first_action_inverse(&m, n).unwrap();
            for s in 0..d {
                for e in 0..d {
                    for q in 0..seq.num_slices() {
                        let want = oracle[s][e][q];
                        let got = seq.get(q, s, e);
                        assert_eq!(want.is_some(), got.is_some());
                        if let (Some(w), Some(g)) = (want, got) {
                            assert!((w - g).abs() <= 1e-10);
                        }
                    }
                    for a in 0..k {
                        let per = k.pow((n - 1) as u32);
                        let want: Option<f64> = (0..per).map(|r| oracle[s][e][a * per + r]).sum();
                        match (want, fa.get(a, s, e)) {
                            (Some(w), Some(g)) => assert!((w - g).abs() <= 1e-10),
                            (None, None) => {}
                            other => panic!("mask disagreement {other:?}"),
                        }
                    }
                }
            }
        }
    }
}

/// Random process with roughly a third of the transitions removed.
fn sparse_or_dense(d: usize, k: usize, seed: u64) -> ControlledMP {
    let base = random_cmp(d, k, seed).unwrap();
    if seed % 2 == 0 {
        return base;
    }
    let mut m = base.into_actions();
    for s in 0..d {
        for (a, ma) in m.iter_mut().enumerate() {
            for t in 0..d {
                if (s * 7 + t * 3 + a * 5 + seed as usize) % 3 == 0 {
                    ma[(s, t)] = 0.0;
                }
            }
        }
        let total: f64 = m.iter().map(|ma| ma.row(s).sum()).sum();
        if total == 0.0 {
            m[0][(s, s)] = 1.0;
            continue;
        }
        for ma in m.iter_mut() {
            ma.row_mut(s).scale_mut(1.0 / total);
        }
    }
    ControlledMP::new(m).unwrap()
}

#[test]
fn identity_and_cycle_fail_at_two() {
    let d = 4;
    let cycle: Vec<usize> = (0..d).map(|s| (s + 1) % d).collect();
    let pair = PermPair::new((0..d).collect(), cycle).unwrap();
    assert_eq!(cycle_condition(&pair, 3), CycleCondition::FailsAt(2));
}

#[test]
fn split_counterexample_supports_and_masks() {
    for (pair, i) in [(PermPair::six_state(), 2), (PermPair::fifteen_state(), 3)] {
        for seed in 0..3 {
            let (m, w) = split_counterexample(&pair, i, seed).unwrap();
            for a in 0..2 {
                let sm = m.action(a).map(|x| x > 0.0);
                let sw = w.action(a).map(|x| x > 0.0);
                assert_eq!(sm, sw);
            }
            for n in 1..=i + 1 {
                assert_eq!(sequence_inverse(&m, n).defined(), sequence_inverse(&w, n).defined());
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn normalization_and_masks(d in 1usize..6, k in 1usize..4, n in 1usize..4, seed in 0u64..10_000) {
        let m = sparse_or_dense(d, k, seed);
        for s in 0..d {
            let total: f64 = m.actions().iter().map(|ma| ma.row(s).sum()).sum();
            prop_assert!((total - 1.0).abs() <= 1e-12);
        }
        let b = sequence_inverse(&m, n);
        prop_assert!(b.normalization_error() <= 1e-10);
        let pn = matrix_power(&m.forward_marginal(), n);
        for s in 0..d {
            for e in 0..d {
                prop_assert_eq!(b.is_defined(s, e), pn[(s, e)] != 0.0);
            }
        }
        let fa = first_action_inverse(&m, n).unwrap();
        prop_assert!(fa.normalization_error() <= 1e-10);
    }

    #[test]
    fn chaining_and_marginalization(d in 2usize..6, k in 1usize..4, seed in 0u64..10_000) {
        let m = sparse_or_dense(d, k, seed);
        let b1 = one_step_inverse(&m);
        for a in 0..k {
            let single = multi_step_inverse(&m, &ActionSeq::new(vec![a], k).unwrap()).unwrap();
            prop_assert_eq!(&single.values, b1.slice(a));
        }
        let b2 = sequence_inverse(&m, 2);
        let fa = first_action_inverse(&m, 2).unwrap();
        for a in 0..k {
            let sum = (0..k).fold(DMatrix::zeros(d, d), |acc, a2| acc + b2.slice(a * k + a2));
            for s in 0..d {
                for e in 0..d {
                    if fa.is_defined(s, e) {
                        prop_assert!((sum[(s, e)] - fa.slice(a)[(s, e)]).abs() <= 1e-10);
                    }
                }
            }
        }
        prop_assert!((b2.first_action_marginal().values()[0].clone() - fa.slice(0)).amax() <= 1e-10);
    }

    #[test]
    fn eqim_is_reflexive(d in 2usize..5, k in 1usize..4, seed in 0u64..10_000) {
        let m = sparse_or_dense(d, k, seed);
        for i in 1..=4 {
            for mode in [EqimMode::Sequence, EqimMode::FirstAction] {
                let r = verify_eqim(&m, &m, i, mode, EQIM_TOL).unwrap();
                prop_assert!(r.holds());
                prop_assert_eq!(r.max_violation, 0.0);
            }
        }
    }

    #[test]
    fn sequence_index_roundtrip(n in 1usize..5, k in 1usize..5, raw in 0usize..10_000) {
        let idx = raw % k.pow(n as u32);
        let seq = ActionSeq::from_index(idx, n, k);
        prop_assert_eq!(seq.len(), n);
        prop_assert_eq!(seq.index(k), idx);
    }

    #[test]
    fn tensor_inverse_ignores_fast_coordinate(ddot in 1usize..4, k in 1usize..4, seed in 0u64..10_000) {
        let mdot = random_cmp(ddot, k, seed).unwrap();
        let mdd = DMatrix::from_row_slice(2, 2, &[0.3, 0.7, 0.6, 0.4]);
        let m = tensor_product(&mdot, &mdd).unwrap();
        let b2 = sequence_inverse(&m, 2);
        for q in 0..b2.num_slices() {
            for s in 0..2 * ddot {
                for e in 0..2 * ddot {
                    let base = b2.slice(q)[(2 * (s / 2), 2 * (e / 2))];
                    prop_assert!((b2.slice(q)[(s, e)] - base).abs() <= 1e-10);
                }
            }
        }
    }

    #[test]
    fn noise_keeps_mask_and_normalization(d in 2usize..6, k in 1usize..4, c in -7i32..1, seed in 0u64..10_000) {
        let m = sparse_or_dense(d, k, seed);
        let b = sequence_inverse(&m, 2);
        let noisy = add_noise(&b, Some(c as f64), seed);
        prop_assert_eq!(noisy.defined(), b.defined());
        prop_assert!(noisy.normalization_error() <= 1e-12);
    }
}
