use invmdp::rng::rng_from_seed;
use invmdp::sat::*;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::Rng;

#[test]
fn biconditional_on_random_corpus() {
    let mut rng = rng_from_seed(2024);
    let (mut sat, mut unsat) = (0, 0);
    for _ in 0..200 {
        let n = rng.random_range(1..=5);
        let m = rng.random_range(1..=5);
        let cnf = Cnf1in3::random(n.max(2), m, &mut rng).unwrap();
        let enc = encode(&cnf);
        let oracle = brute_force(&cnf).unwrap();
        let found = exists_verifying_assignment(&enc).unwrap();
        match oracle {
            BruteForce::Satisfiable(a) => {
                sat += 1;
                assert!(enc.verify(&enc.assignment_to_w(&a).unwrap()).unwrap().ok);
                assert!(cnf.satisfied_by(&found.expect("encoding accepts a witness")));
            }
            BruteForce::Unsatisfiable => {
                unsat += 1;
                assert!(found.is_none(), "{cnf}");
            }
        }
    }
    assert!(sat > 0 && unsat > 0);
}

#[test]
fn parse_errors_carry_lines() {
    assert!(matches!(Cnf1in3::parse("p 1in4 1 1\n"), Err(invmdp::Error::Parse { line: 1, .. })));
    assert!(matches!(Cnf1in3::parse("p 1in3 3 1\n1 2 x\n"), Err(invmdp::Error::Parse { line: 2, .. })));
    assert!(Cnf1in3::parse("p 1in3 3 2\n1 2 3\n").is_err());
    assert!(Cnf1in3::parse("p 1in3 2 1\n1 2 3\n").is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn encoding_structure(n in 1usize..7, m in 1usize..7, seed in 0u64..10_000) {
        let mut rng = rng_from_seed(seed);
        let cnf = Cnf1in3::random(n.max(2), m, &mut rng).unwrap();
        let enc = encode(&cnf);
        let (d, dummies) = encoding_dims(cnf.n(), m);
        prop_assert_eq!((enc.d, enc.dummies), (d, dummies));
        prop_assert_eq!(2 * cnf.n() + dummies, d);
        prop_assert_eq!(&enc.pi * enc.pi.transpose(), DMatrix::<f64>::identity(d, d));
        prop_assert!(enc.b.iter().all(|&x| x == 0.0 || x == 1.0));
        let a: Vec<bool> = (0..cnf.n()).map(|_| rng.random_bool(0.5)).collect();
        let w = enc.assignment_to_w(&a).unwrap();
        for s in 0..d {
            prop_assert_eq!(w.row(s).sum(), (cnf.n() + 1) as f64);
        }
        let v = enc.verify(&w).unwrap();
        prop_assert_eq!(v.ok, cnf.satisfied_by(&a));
        let mut expect = cnf.violated_clauses(&a);
        expect.sort();
        prop_assert_eq!(v.violated_clauses(), expect);
    }

    #[test]
    fn parse_format_roundtrip(n in 2usize..9, m in 1usize..9, seed in 0u64..10_000) {
        let cnf = Cnf1in3::random(n, m, &mut rng_from_seed(seed)).unwrap();
        prop_assert_eq!(Cnf1in3::parse(&cnf.to_string()).unwrap(), cnf);
    }

    #[test]
    fn rows_differ_break_cyclic_constraint(seed in 0u64..1000) {
        let cnf = Cnf1in3::random(3, 2, &mut rng_from_seed(seed)).unwrap();
        let enc = encode(&cnf);
        let mut w = enc.assignment_to_w(&[true, false, true]).unwrap();
        w[(1, 0)] = 1.0 - w[(1, 0)];
        prop_assert!(enc.verify(&w).unwrap().cyclic_residual >= 1.0);
    }
}
