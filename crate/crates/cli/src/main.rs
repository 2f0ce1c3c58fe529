mod report;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use invmdp::analysis::{sampling_dim_estimate, solution_dims_seeded, EXACT_DIM_THRESHOLD};
use invmdp::experiments::{dims_sweep, mean_kl, noise_sweep, noise_sweep_models, DimsSweepConfig, NoiseSweepConfig};
use invmdp::generators::{
    degenerate_action_independent, gridworld, random_cmp, random_grid, split_counterexample, tensor_product,
    GridPolicy, GridSpec, PermPair,
};
use invmdp::linear::{infer_forward_with, LinearOptions, MaskStrategy, SolutionStatus};
use invmdp::model::{matrix_from_rows, matrix_to_rows, ControlledMP, Inverter, MaskedInverseModel, Policy};
use invmdp::planner::{plan, reachable, support_graph};
use invmdp::relaxation::{solve_relaxation, Flag, RelaxationInputs, RelaxationOptions, StateSelection};
use invmdp::rng::derive_seed;
use invmdp::sat::{brute_force_clauses, encode, exists_verifying_assignment, parse_clauses, BruteForce, Cnf1in3};
use invmdp::Threshold;

use report::*;

#[derive(Parser, Serialize)]
#[command(name = "invmdp", version, about = "Inverse dynamics models of controlled Markov processes")]
struct Cli {
    /// Root seed; sub-experiments derive their own seeds from it.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Singular-value cutoff: `default`, `rel:<x>`, `abs:<x>`, or a bare number (absolute).
    #[arg(long, global = true, value_parser = parse_threshold)]
    threshold: Option<Threshold>,
    /// Numeric tolerance of the command's acceptance checks.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Write the run report as JSON.
    #[arg(long, global = true)]
    report: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

fn parse_threshold(s: &str) -> Result<Threshold, String> {
    let num = |x: &str| x.parse::<f64>().map_err(|e| format!("{x:?}: {e}"));
    match s.split_once(':') {
        None if s == "default" => Ok(Threshold::Default),
        None => Ok(Threshold::Absolute(num(s)?)),
        Some(("rel", x)) => Ok(Threshold::Relative(num(x)?)),
        Some(("abs", x)) => Ok(Threshold::Absolute(num(x)?)),
        Some((kind, _)) => Err(format!("unknown threshold kind {kind:?}")),
    }
}

#[derive(Subcommand, Serialize)]
enum Command {
    /// Generate a process and write it as model JSON.
    Gen {
        #[command(subcommand)]
        kind: GenKind,
    },
    /// Compute inverse models of a process.
    Invert(InvertArgs),
    /// Recover a forward model from inverse models.
    Solve {
        #[command(subcommand)]
        method: SolveMethod,
    },
    /// Reconstruction error under injected noise on random grids.
    NoiseSweep(NoiseSweepArgs),
    /// Solution dimensions over the tensor-product family.
    DimsSweep(DimsSweepArgs),
    /// 1-in-3-SAT reduction.
    Satred {
        #[command(subcommand)]
        mode: SatMode,
    },
    /// Shortest action sequence between two states from the inverse-model support.
    Plan(PlanArgs),
    /// Solution dimensions d_J, d_W, d_B for one model.
    Dims(DimsArgs),
}

#[derive(Subcommand, Serialize)]
enum GenKind {
    Random {
        #[arg(long)]
        d: usize,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Grid world from a map file, or a random connected grid.
    Grid {
        #[arg(long)]
        map: Option<PathBuf>,
        #[arg(long, default_value_t = 9)]
        width: usize,
        #[arg(long, default_value_t = 7)]
        height: usize,
        #[arg(long, default_value_t = 24)]
        free: usize,
        #[arg(long, default_value_t = 0.25)]
        wall_prob: f64,
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long)]
        out: PathBuf,
    },
    Fourrooms24 {
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// `Ṁ ⊗ M̈` with random `Ṁ` and the uniform two-state chain `M̈`.
    Tensor {
        #[arg(long)]
        ddot: usize,
        #[arg(long, default_value_t = 5)]
        k: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Split permutation pair agreeing up to order `i` (2: six-state, 3: fifteen-state).
    PermCounterexample {
        #[arg(long, default_value_t = 2)]
        i: usize,
        #[arg(long)]
        out: PathBuf,
        /// Defaults to `<out stem>.w.json`.
        #[arg(long)]
        out_w: Option<PathBuf>,
    },
    /// Two action-independent processes with identical inverse models.
    Degenerate {
        #[arg(long)]
        d: usize,
        #[arg(long, default_value_t = 2)]
        k: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        out_w: Option<PathBuf>,
    },
}

#[derive(Copy, Clone, ValueEnum, Serialize, PartialEq)]
#[serde(rename_all = "kebab-case")]
enum KindArg {
    Sequence,
    FirstAction,
    Both,
}

#[derive(Args, Serialize)]
struct InvertArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "1,2")]
    orders: Vec<usize>,
    #[arg(long, value_enum, default_value_t = KindArg::Sequence)]
    kind: KindArg,
    /// Entries with `|(M⁺)^n| <=` this are undefined.
    #[arg(long, default_value_t = 0.0)]
    mask_threshold: f64,
    #[arg(long)]
    out_dir: PathBuf,
}

/// Either a model to invert, or explicit inverse-model files.
#[derive(Args, Serialize)]
struct Inputs {
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    b1: Option<PathBuf>,
    /// Policy JSON (`k` rows of `d` probabilities); uniform when omitted.
    #[arg(long)]
    policy: Option<PathBuf>,
}

impl Inputs {
    fn model(&self) -> CliResult<Option<ControlledMP>> {
        self.model.as_deref().map(read_json).transpose()
    }

    fn b1_and_policy(&self) -> CliResult<(MaskedInverseModel, Policy)> {
        if let Some(m) = self.model()? {
            return Ok((invmdp::one_step_inverse(&m), m.policy()));
        }
        let Some(path) = &self.b1 else {
            return Err(CliError::input("need --model or --b1"));
        };
        let b1: MaskedInverseModel = read_json(path)?;
        let pi = match &self.policy {
            Some(p) => read_json(p)?,
            None => Policy::uniform(b1.k(), b1.d()),
        };
        Ok((b1, pi))
    }
}

#[derive(Subcommand, Serialize)]
enum SolveMethod {
    /// Forward models consistent with B¹ and π.
    Linear {
        #[command(flatten)]
        inputs: Inputs,
        /// Fill undefined entries randomly instead of dropping them.
        #[arg(long)]
        random_fill: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Unique forward model from B¹, B^{i-1}, B^i and π.
    Relaxation {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long)]
        b_prev: Option<PathBuf>,
        #[arg(long)]
        b_cur: Option<PathBuf>,
        /// Horizon `i` when inputs come from `--model`.
        #[arg(long, default_value_t = 2)]
        horizon: usize,
        /// `all`, `one:<s>`, `random:<count>`, or a comma list of states.
        #[arg(long, default_value = "all")]
        states: String,
        /// Least-squares mode for noisy inputs.
        #[arg(long)]
        least_squares: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Serialize)]
struct NoiseSweepArgs {
    /// Use this model instead of random grids.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Random grids, or repeats of `--model`.
    #[arg(long, default_value_t = 10)]
    grids: usize,
    #[arg(long, default_value_t = -7, allow_hyphen_values = true)]
    c_min: i32,
    #[arg(long, default_value_t = 0, allow_hyphen_values = true)]
    c_max: i32,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
    horizons: Vec<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct DimsSweepArgs {
    #[arg(long, default_value_t = 5)]
    k: usize,
    #[arg(long, default_value_t = 2)]
    d_min: usize,
    #[arg(long, default_value_t = 32)]
    d_max: usize,
    #[arg(long, default_value_t = 2)]
    d_step: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct DimsArgs {
    #[command(flatten)]
    inputs: Inputs,
    /// Also estimate d_B from this many samples.
    #[arg(long)]
    sampling: Option<usize>,
    #[arg(long, default_value_t = 1e-4)]
    z_scale: f64,
    #[arg(long, default_value_t = 1e-6)]
    rel_threshold: f64,
}

#[derive(Subcommand, Serialize)]
enum SatMode {
    /// Write the matrices A, B, C, Π and the column layout.
    Encode {
        #[arg(long)]
        formula: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check a candidate W (JSON rows) or an assignment against the encoding.
    Verify {
        #[arg(long)]
        formula: PathBuf,
        #[arg(long)]
        w: Option<PathBuf>,
        /// Comma list of 0/1 values for x_1..x_n.
        #[arg(long, value_delimiter = ',')]
        assignment: Option<Vec<u8>>,
    },
    /// Brute force, encode, and check both directions on this instance.
    Roundtrip {
        #[arg(long)]
        formula: PathBuf,
    },
}

#[derive(Args, Serialize)]
struct PlanArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[arg(long)]
    from: usize,
    #[arg(long)]
    to: usize,
    #[arg(long, default_value_t = 10)]
    max_i: usize,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    let config = serde_json::to_value(&cli).unwrap_or_default();
    let mut rec = Recorder::new();
    let (name, result) = run(&cli, &mut rec);
    let code = match &result {
        Ok(code) => *code,
        Err(e) => {
            eprintln!("error: {e}");
            rec.set("error", &e.message);
            e.code
        }
    };
    if let Some(path) = &cli.report {
        let report = rec.finish(name, config, code);
        if let Err(e) = write_json(path, &report) {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    ExitCode::from(code as u8)
}

fn run(cli: &Cli, rec: &mut Recorder) -> (&'static str, CliResult<i32>) {
    match &cli.command {
        Command::Gen { kind } => ("gen", cmd_gen(cli, kind, rec)),
        Command::Invert(a) => ("invert", cmd_invert(a, rec)),
        Command::Solve { method } => ("solve", cmd_solve(cli, method, rec)),
        Command::NoiseSweep(a) => ("noise-sweep", cmd_noise_sweep(cli, a, rec)),
        Command::DimsSweep(a) => ("dims-sweep", cmd_dims_sweep(cli, a, rec)),
        Command::Satred { mode } => ("satred", cmd_satred(cli, mode, rec)),
        Command::Plan(a) => ("plan", cmd_plan(a, rec)),
        Command::Dims(a) => ("dims", cmd_dims(cli, a, rec)),
    }
}

fn summarize(m: &ControlledMP, rec: &mut Recorder, path: &Path) {
    println!(
        "{}: d={} k={} support_density={:.4}",
        path.display(),
        m.d(),
        m.k(),
        m.support_density()
    );
    rec.set("d", m.d());
    rec.set("k", m.k());
    rec.set("support_density", m.support_density());
}

fn w_path(out: &Path, out_w: &Option<PathBuf>) -> PathBuf {
    out_w.clone().unwrap_or_else(|| {
        let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        out.with_file_name(format!("{stem}.w.json"))
    })
}

fn cmd_gen(cli: &Cli, kind: &GenKind, rec: &mut Recorder) -> CliResult<i32> {
    let seed = cli.seed;
    let (m, w, out, out_w) = match kind {
        GenKind::Random { d, k, out } => (random_cmp(*d, *k, seed)?, None, out, None),
        GenKind::Grid { map, width, height, free, wall_prob, noise, out } => {
            let spec = match map {
                Some(p) => GridSpec::parse(&read_text(p)?)?,
                None => random_grid(*width, *height, *free, *wall_prob, seed)?,
            };
            (gridworld(&spec.with_noise(*noise), &GridPolicy::Uniform)?, None, out, None)
        }
        GenKind::Fourrooms24 { noise, out } => (
            gridworld(&GridSpec::fourrooms24().with_noise(*noise), &GridPolicy::Uniform)?,
            None,
            out,
            None,
        ),
        GenKind::Tensor { ddot, k, out } => {
            let mdot = random_cmp(*ddot, *k, seed)?;
            let mddot = nalgebra::DMatrix::from_element(2, 2, 0.5);
            (tensor_product(&mdot, &mddot)?, None, out, None)
        }
        GenKind::PermCounterexample { i, out, out_w } => {
            let pair = match i {
                2 => PermPair::six_state(),
                3 => PermPair::fifteen_state(),
                _ => return Err(CliError::input("--i must be 2 or 3")),
            };
            let (m, w) = split_counterexample(&pair, *i, seed)?;
            (m, Some(w), out, Some(w_path(out, out_w)))
        }
        GenKind::Degenerate { d, k, out, out_w } => {
            let (m, w) = degenerate_action_independent(*d, *k, seed)?;
            (m, Some(w), out, Some(w_path(out, out_w)))
        }
    };
    write_json(out, &m)?;
    summarize(&m, rec, out);
    if let (Some(w), Some(path)) = (w, out_w) {
        write_json(&path, &w)?;
        println!("{}: second process of the pair", path.display());
        rec.set("w_path", path.display().to_string());
    }
    Ok(0)
}

fn cmd_invert(a: &InvertArgs, rec: &mut Recorder) -> CliResult<i32> {
    let m: ControlledMP = read_json(&a.model)?;
    let inv = Inverter::new(a.mask_threshold);
    let mut written = Vec::new();
    for &n in &a.orders {
        if n == 0 {
            return Err(CliError::input("orders must be positive"));
        }
        if a.kind != KindArg::FirstAction {
            let b = inv.sequence(&m, n);
            let path = a.out_dir.join(format!("b{n}.json"));
            write_json(&path, &b)?;
            written.push((path, b.normalization_error()));
        }
        if a.kind != KindArg::Sequence {
            let b = inv.first_action(&m, n)?;
            let path = a.out_dir.join(format!("b{n}_first_action.json"));
            write_json(&path, &b)?;
            written.push((path, b.normalization_error()));
        }
    }
    for (p, err) in &written {
        println!("{}: normalization error {err:.2e}", p.display());
    }
    rec.set("files", written.iter().map(|(p, _)| p.display().to_string()).collect::<Vec<_>>());
    Ok(0)
}

fn parse_states(s: &str, d: usize, seed: u64) -> CliResult<StateSelection> {
    let num = |x: &str| x.trim().parse::<usize>().map_err(|_| CliError::input(format!("bad state {x:?}")));
    let sel = match s.split_once(':') {
        None if s == "all" => StateSelection::All,
        Some(("one", x)) => StateSelection::One(num(x)?),
        Some(("random", x)) => StateSelection::Random { count: num(x)?, seed: derive_seed(seed, "states", 0) },
        None => StateSelection::Subset(s.split(',').map(num).collect::<CliResult<_>>()?),
        Some(_) => return Err(CliError::input(format!("bad --states {s:?}"))),
    };
    let bad = match &sel {
        StateSelection::One(x) => *x >= d,
        StateSelection::Subset(v) => v.is_empty() || v.iter().any(|&x| x >= d),
        StateSelection::Random { count, .. } => *count == 0 || *count > d,
        StateSelection::All => false,
    };
    if bad {
        return Err(CliError::input(format!("--states {s:?} does not fit d = {d}")));
    }
    Ok(sel)
}

fn max_diff(a: &ControlledMP, b: &ControlledMP) -> f64 {
    a.actions().iter().zip(b.actions()).map(|(x, y)| (x - y).amax()).fold(0.0, f64::max)
}

fn cmd_solve(cli: &Cli, method: &SolveMethod, rec: &mut Recorder) -> CliResult<i32> {
    match method {
        SolveMethod::Linear { inputs, random_fill, out } => {
            let (b1, pi) = inputs.b1_and_policy()?;
            let mut opts = LinearOptions::default();
            if let Some(t) = cli.threshold {
                opts.threshold = t;
            }
            if let Some(t) = cli.tol {
                opts.residual_tol = t;
            }
            if *random_fill {
                opts.mask = MaskStrategy::RandomFill { seed: derive_seed(cli.seed, "random-fill", 0) };
            }
            let sol = infer_forward_with(&b1, &pi, &opts)?;
            rec.set("status", sol.status);
            rec.set("dims", &sol.dims);
            rec.set("max_residual", sol.max_residual());
            if let Some(m) = inputs.model()? {
                if sol.status != SolutionStatus::Inconsistent {
                    rec.set("max_abs_error", max_diff(&sol.particular_w, &m));
                }
            }
            if let Some(p) = out {
                write_json(p, &sol)?;
            }
            let (code, label) = match sol.status {
                SolutionStatus::Unique => (0, "unique".to_string()),
                SolutionStatus::Affine(n) => (EXIT_NOT_UNIQUE, format!("affine family of dimension {n}")),
                SolutionStatus::Inconsistent => (EXIT_INCONSISTENT, "inconsistent".to_string()),
            };
            println!("linear: {label} (max residual {:.2e})", sol.max_residual());
            Ok(code)
        }
        SolveMethod::Relaxation { inputs, b_prev, b_cur, horizon, states, least_squares, out } => {
            let model = inputs.model()?;
            let rin = match &model {
                Some(m) => RelaxationInputs::from_cmp(m, *horizon)?,
                None => {
                    let (b1, pi) = inputs.b1_and_policy()?;
                    let (Some(bp), Some(bc)) = (b_prev, b_cur) else {
                        return Err(CliError::input("need --b-prev and --b-cur with --b1"));
                    };
                    RelaxationInputs::new(b1, read_json(bp)?, read_json(bc)?, pi)?
                }
            };
            let sel = parse_states(states, rin.d(), cli.seed)?;
            let mut opts = if *least_squares { RelaxationOptions::least_squares() } else { RelaxationOptions::default() };
            if let Some(t) = cli.tol {
                opts.null_tol = t;
                opts.multiple_tol = t;
            }
            let v = solve_relaxation(&rin, &sel, &opts)?;
            rec.set("flags", &v.flags);
            rec.set("diagnostics", &v.diagnostics);
            if let (Some(m), Some(w)) = (&model, &v.w) {
                let err = max_diff(w, m);
                rec.set("max_abs_error", err);
                println!("relaxation: max |W - M| = {err:.3e}");
            }
            if let (Some(p), Some(w)) = (out, &v.w) {
                write_json(p, w)?;
            }
            println!("relaxation: flags {:?}", v.flags);
            Ok(if v.flags.contains(&Flag::Inconsistent) {
                EXIT_INCONSISTENT
            } else if v.flags.contains(&Flag::MayNotBeUnique) {
                EXIT_NOT_UNIQUE
            } else {
                0
            })
        }
    }
}

#[derive(Serialize)]
struct NoiseCsvRow {
    c: String,
    grid: usize,
    horizon: usize,
    kl: f64,
    mask_mismatches: usize,
    inconsistent: bool,
    projected: bool,
}

fn level_label(c: Option<f64>) -> String {
    c.map_or_else(|| "none".to_string(), |c| format!("{c}"))
}

fn cmd_noise_sweep(cli: &Cli, a: &NoiseSweepArgs, rec: &mut Recorder) -> CliResult<i32> {
    if a.c_min > a.c_max || a.horizons.contains(&0) {
        return Err(CliError::input("need c_min <= c_max and positive horizons"));
    }
    let mut levels = vec![None];
    levels.extend((a.c_min..=a.c_max).map(|c| Some(c as f64)));
    let cfg = NoiseSweepConfig { grids: a.grids, levels, horizons: a.horizons.clone(), seed: cli.seed };
    let rows = match &a.model {
        Some(p) => {
            let m: ControlledMP = read_json(p)?;
            noise_sweep_models(&vec![m; a.grids], &cfg)?
        }
        None => noise_sweep(&cfg)?,
    };
    let csv_rows: Vec<NoiseCsvRow> = rows
        .iter()
        .map(|r| NoiseCsvRow {
            c: level_label(r.c),
            grid: r.grid,
            horizon: r.horizon,
            kl: r.kl,
            mask_mismatches: r.mask_mismatches,
            inconsistent: r.inconsistent,
            projected: r.projected,
        })
        .collect();
    write_csv(&a.out, &csv_rows)?;
    let means = mean_kl(&rows);
    for (c, h, kl) in &means {
        println!("c={:>4} horizon={h} mean_kl={kl:.3e}", level_label(*c));
    }
    rec.set(
        "mean_kl",
        means.iter().map(|(c, h, kl)| (level_label(*c), *h, *kl)).collect::<Vec<_>>(),
    );
    Ok(0)
}

#[derive(Serialize)]
struct DimsCsvRow {
    d: usize,
    k: usize,
    d_j: usize,
    d_w: usize,
    d_b: usize,
    threshold: String,
}

fn threshold_label(t: Threshold) -> String {
    match t {
        Threshold::Default => "default".into(),
        Threshold::Relative(x) => format!("rel:{x:e}"),
        Threshold::Absolute(x) => format!("abs:{x:e}"),
    }
}

fn cmd_dims_sweep(cli: &Cli, a: &DimsSweepArgs, rec: &mut Recorder) -> CliResult<i32> {
    if a.d_min < 2 || a.d_step == 0 || !a.d_min.is_multiple_of(2) || !a.d_step.is_multiple_of(2) || a.d_min > a.d_max {
        return Err(CliError::input("d range must be even, start at >= 2, and have a positive even step"));
    }
    let cfg = DimsSweepConfig {
        k: a.k,
        ddots: (a.d_min..=a.d_max).step_by(a.d_step).map(|d| d / 2).collect(),
        threshold: cli.threshold.unwrap_or(EXACT_DIM_THRESHOLD),
        seed: cli.seed,
    };
    let reps = dims_sweep(&cfg)?;
    let rows: Vec<DimsCsvRow> = reps
        .iter()
        .map(|r| DimsCsvRow {
            d: r.d,
            k: r.k,
            d_j: r.d_j,
            d_w: r.d_w,
            d_b: r.d_b,
            threshold: threshold_label(r.threshold),
        })
        .collect();
    write_csv(&a.out, &rows)?;
    for r in &rows {
        println!("d={:>2} d_J={} d_W={} d_B={}", r.d, r.d_j, r.d_w, r.d_b);
    }
    rec.set("rows", rows.iter().map(|r| (r.d, r.d_j, r.d_w, r.d_b)).collect::<Vec<_>>());
    Ok(0)
}

fn cmd_dims(cli: &Cli, a: &DimsArgs, rec: &mut Recorder) -> CliResult<i32> {
    let (b1, pi) = a.inputs.b1_and_policy()?;
    let threshold = cli.threshold.unwrap_or(EXACT_DIM_THRESHOLD);
    let rep = solution_dims_seeded(&b1, &pi, threshold, derive_seed(cli.seed, "sketch", 0))?;
    println!("d={} k={} d_J={} d_W={} d_B={}", rep.d, rep.k, rep.d_j, rep.d_w, rep.d_b);
    rec.set("d_j", rep.d_j);
    rec.set("d_w", rep.d_w);
    rec.set("d_b", rep.d_b);
    rec.set("d_js", &rep.d_js);
    rec.set("d_ws", &rep.d_ws);
    if let Some(n) = a.sampling {
        let est = sampling_dim_estimate(&b1, &pi, n, a.z_scale, a.rel_threshold, derive_seed(cli.seed, "sampling", 0))?;
        println!("sampling estimate of d_B: {est}");
        rec.set("d_b_sampling", est);
    }
    Ok(0)
}

fn cmd_satred(cli: &Cli, mode: &SatMode, rec: &mut Recorder) -> CliResult<i32> {
    let tol = cli.tol.unwrap_or(invmdp::sat::VERIFY_TOL);
    match mode {
        SatMode::Encode { formula, out } => {
            let cnf = Cnf1in3::parse(&read_text(formula)?)?;
            let enc = encode(&cnf);
            write_json(out, &enc)?;
            println!("encoded n={} m={} into d={} with {} dummies", cnf.n(), cnf.m(), enc.d, enc.dummies);
            rec.set("d", enc.d);
            rec.set("dummies", enc.dummies);
            Ok(0)
        }
        SatMode::Verify { formula, w, assignment } => {
            let cnf = Cnf1in3::parse(&read_text(formula)?)?;
            let enc = encode(&cnf);
            let wm = match (w, assignment) {
                (Some(p), None) => {
                    let rows: Vec<Vec<f64>> = read_json(p)?;
                    matrix_from_rows(&rows)?
                }
                (None, Some(bits)) => {
                    let a: Vec<bool> = bits.iter().map(|&b| b != 0).collect();
                    enc.assignment_to_w(&a)?
                }
                _ => return Err(CliError::input("give exactly one of --w or --assignment")),
            };
            let v = enc.verify_tol(&wm, tol)?;
            rec.set("verification", &v);
            println!(
                "verify: {} (quadratic {:.2e}, rows {:.2e}, cyclic {:.2e})",
                if v.ok { "ok" } else { "fails" },
                v.quadratic_residual,
                v.linear_residual,
                v.cyclic_residual
            );
            for (row, role) in &v.violated_rows {
                println!("  violated row {row}: {role:?}");
            }
            Ok(if v.ok { 0 } else { EXIT_INCONSISTENT })
        }
        SatMode::Roundtrip { formula } => {
            let (n, clauses) = parse_clauses(&read_text(formula)?)?;
            let oracle = brute_force_clauses(n, &clauses)?;
            rec.set("brute_force", &oracle);
            let Ok(cnf) = Cnf1in3::new(n, clauses) else {
                println!("brute force: {oracle:?}; encoding skipped (repeated literal or empty formula)");
                rec.set("encoded", false);
                return Ok(0);
            };
            let enc = encode(&cnf);
            let found = exists_verifying_assignment(&enc)?;
            let agree = matches!(oracle, BruteForce::Satisfiable(_)) == found.is_some();
            if let BruteForce::Satisfiable(a) = &oracle {
                let w = enc.assignment_to_w(a)?;
                rec.set("witness_w", matrix_to_rows(&w));
            }
            rec.set("encoded", true);
            rec.set("biconditional", agree);
            println!("brute force: {oracle:?}; encoding accepts an assignment: {}; agree: {agree}", found.is_some());
            Ok(if agree { 0 } else { 1 })
        }
    }
}

fn cmd_plan(a: &PlanArgs, rec: &mut Recorder) -> CliResult<i32> {
    let (b1, _) = a.inputs.b1_and_policy()?;
    let d = b1.d();
    if a.from >= d || a.to >= d {
        return Err(CliError::input(format!("states must be below d = {d}")));
    }
    let g = support_graph(&b1);
    for i in 0..=a.max_i {
        if reachable(&g, a.from, a.to, i) {
            let p = plan(&g, a.from, a.to, i).expect("reachable implies a plan");
            println!("plan i={i}: actions {:?} states {:?}", p.actions.as_slice(), p.states);
            rec.set("i", i);
            rec.set("plan", &p);
            return Ok(0);
        }
    }
    println!("unreachable within {}", a.max_i);
    rec.set("plan", Option::<()>::None);
    Ok(0)
}
