use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_invmdp")).args(args).current_dir(dir).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn generation_is_deterministic_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    for (seed, name) in [("3", "a.json"), ("3", "b.json"), ("4", "c.json")] {
        let o = run(&["--seed", seed, "gen", "random", "--d", "4", "--k", "2", "--out", name], dir.path());
        assert!(o.status.success());
    }
    let read = |n: &str| fs::read_to_string(dir.path().join(n)).unwrap();
    assert_eq!(read("a.json"), read("b.json"));
    assert_ne!(read("a.json"), read("c.json"));
}

#[test]
fn linear_solve_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run(&["gen", "random", "--d", "3", "--k", "3", "--out", "full.json"], dir.path()).status.success());
    assert!(run(&["gen", "random", "--d", "4", "--k", "2", "--out", "few.json"], dir.path()).status.success());
    let full = run(&["solve", "linear", "--model", "full.json", "--out", "sol.json"], dir.path());
    assert_eq!(full.status.code(), Some(0), "{}", stdout(&full));
    assert!(stdout(&full).contains("unique"));
    let few = run(&["solve", "linear", "--model", "few.json"], dir.path());
    assert_eq!(few.status.code(), Some(3));
    assert!(stdout(&few).contains("dimension 8"));
}

#[test]
fn relaxation_report_records_error() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run(&["gen", "fourrooms24", "--out", "m.json"], dir.path()).status.success());
    let o = run(&["--report", "r.json", "solve", "relaxation", "--model", "m.json", "--out", "w.json"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let rep: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("r.json")).unwrap()).unwrap();
    assert_eq!(rep["command"], "solve");
    assert_eq!(rep["exit_code"], 0);
    assert!(rep["metrics"]["max_abs_error"].as_f64().unwrap() <= 1e-7);
    assert!(dir.path().join("w.json").exists());
    let one = run(&["solve", "relaxation", "--model", "m.json", "--states", "one:0"], dir.path());
    assert_eq!(one.status.code(), Some(3));
}

#[test]
fn malformed_inputs_exit_four() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.json"), "{\"k\": 2").unwrap();
    fs::write(dir.path().join("bad.cnf"), "p 1in3 2 1\n1 2 9 0\n").unwrap();
    assert_eq!(run(&["solve", "linear", "--model", "bad.json"], dir.path()).status.code(), Some(4));
    assert_eq!(run(&["solve", "linear", "--model", "missing.json"], dir.path()).status.code(), Some(4));
    assert_eq!(run(&["satred", "encode", "--formula", "bad.cnf", "--out", "e.json"], dir.path()).status.code(), Some(4));
    assert_eq!(run(&["--threshold", "rel:x", "dims", "--model", "bad.json"], dir.path()).status.code(), Some(4));
}

#[test]
fn satred_verify_and_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("f.cnf"), "p 1in3 3 2\n1 2 3 0\n-1 2 -3 0\n").unwrap();
    fs::write(dir.path().join("dup.cnf"), "p 1in3 1 1\n1 1 1 0\n").unwrap();
    let ok = run(&["satred", "verify", "--formula", "f.cnf", "--assignment", "1,0,0"], dir.path());
    assert_eq!(ok.status.code(), Some(0));
    let bad = run(&["satred", "verify", "--formula", "f.cnf", "--assignment", "0,1,0"], dir.path());
    assert_eq!(bad.status.code(), Some(2));
    assert!(stdout(&bad).contains("Clause(1)"));
    let rt = run(&["satred", "roundtrip", "--formula", "f.cnf"], dir.path());
    assert!(rt.status.success() && stdout(&rt).contains("agree: true"));
    let dup = run(&["satred", "roundtrip", "--formula", "dup.cnf"], dir.path());
    assert!(dup.status.success() && stdout(&dup).contains("Unsatisfiable"));
}

#[test]
fn plan_prints_path_or_unreachable() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run(&["gen", "fourrooms24", "--out", "m.json"], dir.path()).status.success());
    let o = run(&["plan", "--model", "m.json", "--from", "0", "--to", "23"], dir.path());
    assert!(o.status.success());
    assert!(stdout(&o).starts_with("plan i=9"), "{}", stdout(&o));
    let short = run(&["plan", "--model", "m.json", "--from", "0", "--to", "23", "--max-i", "3"], dir.path());
    assert_eq!(stdout(&short).trim(), "unreachable within 3");
    assert_eq!(run(&["plan", "--model", "m.json", "--from", "0", "--to", "24"], dir.path()).status.code(), Some(4));
}

#[test]
fn sweeps_write_csv() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["dims-sweep", "--d-max", "6", "--out", "d.csv"], dir.path());
    assert!(o.status.success());
    let csv = fs::read_to_string(dir.path().join("d.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("d,k,d_j,d_w,d_b,threshold"));
    assert_eq!(csv.lines().count(), 4);
    let o = run(&["noise-sweep", "--grids", "1", "--c-min", "-2", "--c-max", "-1", "--out", "n.csv"], dir.path());
    assert!(o.status.success());
    let csv = fs::read_to_string(dir.path().join("n.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 3 * 3);
    assert!(csv.lines().nth(1).unwrap().starts_with("none,"));
}

#[test]
fn counterexample_generators_write_pairs() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["gen", "perm-counterexample", "--i", "2", "--out", "p.json"], dir.path());
    assert!(o.status.success());
    assert!(stdout(&o).contains("d=12"));
    assert!(dir.path().join("p.w.json").exists());
    assert_eq!(run(&["gen", "perm-counterexample", "--i", "4", "--out", "q.json"], dir.path()).status.code(), Some(4));
    let o = run(&["invert", "--model", "p.json", "--orders", "1,3", "--kind", "both", "--out-dir", "inv"], dir.path());
    assert!(o.status.success());
    for f in ["b1.json", "b3.json", "b1_first_action.json", "b3_first_action.json"] {
        assert!(dir.path().join("inv").join(f).exists(), "{f}");
    }
}
