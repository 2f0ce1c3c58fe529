use invmdp::generators::random_cmp;
use invmdp::linear::{infer_forward, uniqueness_check, SolutionStatus};
use invmdp::model::{one_step_inverse, verify_eqim, ControlledMP, EqimMode};
use invmdp::Threshold;
use proptest::prelude::*;

fn max_diff(a: &ControlledMP, b: &ControlledMP) -> f64 {
    a.actions().iter().zip(b.actions()).map(|(x, y)| (x - y).amax()).fold(0.0, f64::max)
}

#[test]
fn dimension_law_few_actions() {
    for &(d, k) in &[(4, 2), (5, 3), (6, 2)] {
        for seed in 0..20 {
            let m = random_cmp(d, k, 500 + seed).unwrap();
            let sol = infer_forward(&one_step_inverse(&m), &m.policy()).unwrap();
            assert_eq!(sol.total_dim(), d * (d - k), "(d,k)=({d},{k}) seed {seed}");
            assert_eq!(sol.status, SolutionStatus::Affine(d * (d - k)));
        }
    }
}

#[test]
fn full_rank_slices_force_unique_recovery() {
    for &(d, k) in &[(3, 3), (4, 4), (3, 5)] {
        for seed in 0..10 {
            let m = random_cmp(d, k, seed).unwrap();
            let b1 = one_step_inverse(&m);
            assert!(uniqueness_check(&b1, Threshold::Default).unique);
            let sol = infer_forward(&b1, &m.policy()).unwrap();
            assert_eq!(sol.status, SolutionStatus::Unique);
            assert!(max_diff(&sol.particular_w, &m) <= 1e-10);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn family_members_are_consistent(d in 2usize..6, k in 1usize..4, seed in 0u64..10_000, coef in -1.0f64..1.0) {
        let m = random_cmp(d, k, seed).unwrap();
        let b1 = one_step_inverse(&m);
        let pi = m.policy();
        let sol = infer_forward(&b1, &pi).unwrap();
        prop_assert!(sol.status != SolutionStatus::Inconsistent);
        let back = one_step_inverse(&sol.particular_w);
        for a in 0..k {
            prop_assert!((back.slice(a) - b1.slice(a)).amax() <= 1e-8);
        }
        // Small coefficients keep the member nonnegative for random dense processes.
        let z: Vec<Vec<f64>> = sol.dims.iter().map(|&n| vec![coef * 1e-3; n]).collect();
        let w = sol.member(&z).unwrap();
        let r = verify_eqim(&sol.particular_w, &w, 1, EqimMode::Sequence, 1e-8).unwrap();
        prop_assert!(r.holds());
        for s in 0..d {
            for a in 0..k {
                prop_assert!((w.action(a).row(s).sum() - pi.prob(a, s)).abs() <= 1e-8);
            }
        }
    }
}
