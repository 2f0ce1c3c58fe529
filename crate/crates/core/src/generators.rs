//! Constructors for the process families used by the solvers and experiments:
//! random processes, grid-worlds, tensor products, block-diagonal composites,
//! action-independent degenerate pairs and permutation counter-examples.
//! Also noise injection into inverse models and their KL divergence.

use std::collections::{BTreeSet, VecDeque};

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::model::{
    verify_eqim, ControlledMP, EqimMode, MaskedInverseModel, Matrix, Policy, EQIM_TOL,
    NORMALIZATION_TOL,
};
use crate::rng::{derive_seed, rng_from_seed};

/// Bundled 24-cell four-rooms map.
pub const FOURROOMS24: &str = include_str!("../data/fourrooms24.txt");

/// Uniform sample on (0, 1].
fn open_unit(rng: &mut impl Rng) -> f64 {
    1.0 - rng.random::<f64>()
}

/// Random CMP: i.i.d. uniform entries, normalized jointly over `(a, s')` per state.
pub fn random_cmp(d: usize, k: usize, seed: u64) -> Result<ControlledMP> {
    if d == 0 || k == 0 {
        return Err(Error::InvalidArgument("d and k must be positive".into()));
    }
    let mut rng = rng_from_seed(seed);
    let mut m: Vec<Matrix> = (0..k)
        .map(|_| DMatrix::from_fn(d, d, |_, _| open_unit(&mut rng)))
        .collect();
    for s in 0..d {
        let total: f64 = m.iter().map(|ma| ma.row(s).sum()).sum();
        for ma in m.iter_mut() {
            ma.row_mut(s).scale_mut(1.0 / total);
        }
    }
    ControlledMP::new(m)
}

/// Random row-stochastic `d x d` matrix with entries uniform on (0, 1] before normalization.
pub fn random_stochastic(d: usize, rng: &mut impl Rng) -> Matrix {
    let mut p = DMatrix::from_fn(d, d, |_, _| open_unit(rng));
    for s in 0..d {
        let sum = p.row(s).sum();
        p.row_mut(s).scale_mut(1.0 / sum);
    }
    p
}

fn check_stochastic(p: &Matrix, what: &str) -> Result<()> {
    if p.nrows() != p.ncols() || p.nrows() == 0 {
        return Err(dim_err(format!("{what} must be square and nonempty")));
    }
    for s in 0..p.nrows() {
        for t in 0..p.ncols() {
            if p[(s, t)] < 0.0 || !p[(s, t)].is_finite() {
                return Err(Error::NegativeEntry {
                    value: p[(s, t)],
                    location: format!("{what}[{s}][{t}]"),
                });
            }
        }
        let sum = p.row(s).sum();
        if (sum - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::Normalization {
                location: format!("{what} row {s}"),
                sum,
                expected: 1.0,
            });
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Grid-worlds

/// Grid moves in action order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum GridAction {
    Up,
    Down,
    Left,
    Right,
    Stay,
}

pub const GRID_ACTIONS: [GridAction; 5] = [
    GridAction::Up,
    GridAction::Down,
    GridAction::Left,
    GridAction::Right,
    GridAction::Stay,
];

impl GridAction {
    fn offset(self) -> (isize, isize) {
        match self {
            GridAction::Up => (-1, 0),
            GridAction::Down => (1, 0),
            GridAction::Left => (0, -1),
            GridAction::Right => (0, 1),
            GridAction::Stay => (0, 0),
        }
    }
}

/// Rectangular grid; cells are `(row, col)`, walls are blocked cells.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub width: usize,
    pub height: usize,
    pub walls: BTreeSet<(usize, usize)>,
    /// Probability of replacing the intended outcome by a uniform admissible neighbor.
    pub noise: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum GridPolicy {
    Uniform,
    Given(Policy),
}

impl GridSpec {
    pub fn open(width: usize, height: usize) -> Self {
        GridSpec {
            width,
            height,
            walls: BTreeSet::new(),
            noise: 0.0,
        }
    }

    /// Parse a `#`/`.` map. Rows may have different lengths; missing cells are walls.
    pub fn parse(text: &str) -> Result<Self> {
        let rows: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
        if rows.is_empty() {
            return Err(Error::Parse {
                line: 1,
                message: "empty grid map".into(),
            });
        }
        let width = rows.iter().map(|r| r.trim_end().chars().count()).max().unwrap_or(0);
        let mut walls = BTreeSet::new();
        for (r, line) in rows.iter().enumerate() {
            let chars: Vec<char> = line.trim_end().chars().collect();
            for c in 0..width {
                match chars.get(c) {
                    Some('.') => {}
                    Some('#') | None => {
                        walls.insert((r, c));
                    }
                    Some(other) => {
                        return Err(Error::Parse {
                            line: r + 1,
                            message: format!("unexpected character {other:?}"),
                        })
                    }
                }
            }
        }
        Ok(GridSpec {
            width,
            height: rows.len(),
            walls,
            noise: 0.0,
        })
    }

    pub fn fourrooms24() -> Self {
        GridSpec::parse(FOURROOMS24).expect("bundled map parses")
    }

    pub fn with_noise(mut self, noise: f64) -> Self {
        self.noise = noise;
        self
    }

    pub fn is_free(&self, r: usize, c: usize) -> bool {
        r < self.height && c < self.width && !self.walls.contains(&(r, c))
    }

    /// Free cells in row-major order; position in this list is the state index.
    pub fn free_cells(&self) -> Vec<(usize, usize)> {
        (0..self.height)
            .flat_map(|r| (0..self.width).map(move |c| (r, c)))
            .filter(|&(r, c)| self.is_free(r, c))
            .collect()
    }

    fn step(&self, cell: (usize, usize), a: GridAction) -> (usize, usize) {
        let (dr, dc) = a.offset();
        let r = cell.0 as isize + dr;
        let c = cell.1 as isize + dc;
        if r >= 0 && c >= 0 && self.is_free(r as usize, c as usize) {
            (r as usize, c as usize)
        } else {
            cell
        }
    }

    /// Number of free cells not reachable from the first free cell.
    pub fn unreachable_count(&self) -> usize {
        let cells = self.free_cells();
        let Some(&start) = cells.first() else {
            return 0;
        };
        let mut seen = BTreeSet::from([start]);
        let mut queue = VecDeque::from([start]);
        while let Some(cell) = queue.pop_front() {
            for a in GRID_ACTIONS {
                let next = self.step(cell, a);
                if seen.insert(next) {
                    queue.push_back(next);
                }
            }
        }
        cells.len() - seen.len()
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for r in 0..self.height {
            for c in 0..self.width {
                out.push(if self.is_free(r, c) { '.' } else { '#' });
            }
            out.push('\n');
        }
        out
    }
}

/// Per-action transition matrices `p[a][s][s']` of a grid.
pub fn grid_transitions(spec: &GridSpec) -> Result<Vec<Matrix>> {
    if !(0.0..1.0).contains(&spec.noise) {
        return Err(Error::InvalidArgument(format!("noise {} not in [0, 1)", spec.noise)));
    }
    let cells = spec.free_cells();
    if cells.is_empty() {
        return Err(Error::InvalidArgument("grid has no free cells".into()));
    }
    let unreachable = spec.unreachable_count();
    if unreachable > 0 {
        return Err(Error::DisconnectedGrid(unreachable));
    }
    let d = cells.len();
    let index = |cell: (usize, usize)| cells.binary_search(&cell).expect("free cell");
    let eta = spec.noise;
    let mut p = vec![Matrix::zeros(d, d); GRID_ACTIONS.len()];
    for (s, &cell) in cells.iter().enumerate() {
        let neighbors: BTreeSet<usize> = GRID_ACTIONS
            .iter()
            .map(|&a| index(spec.step(cell, a)))
            .collect();
        let share = eta / neighbors.len() as f64;
        for (a, &act) in GRID_ACTIONS.iter().enumerate() {
            p[a][(s, index(spec.step(cell, act)))] += 1.0 - eta;
            for &n in &neighbors {
                p[a][(s, n)] += share;
            }
        }
    }
    Ok(p)
}

/// Grid-world CMP with `k = 5` actions (up, down, left, right, stay).
pub fn gridworld(spec: &GridSpec, policy: &GridPolicy) -> Result<ControlledMP> {
    let p = grid_transitions(spec)?;
    let d = p[0].nrows();
    let pi = match policy {
        GridPolicy::Uniform => Policy::uniform(GRID_ACTIONS.len(), d),
        GridPolicy::Given(pi) => pi.clone(),
    };
    join_policy(&p, &pi)
}

/// Like `model::build_cmp` but tolerant of the rounding in noisy grid rows.
fn join_policy(p: &[Matrix], pi: &Policy) -> Result<ControlledMP> {
    let d = p[0].nrows();
    if pi.k() != p.len() || pi.d() != d {
        return Err(dim_err(format!(
            "policy is {}x{}, grid has k={} d={d}",
            pi.k(),
            pi.d(),
            p.len()
        )));
    }
    let m = p
        .iter()
        .enumerate()
        .map(|(a, pa)| DMatrix::from_fn(d, d, |s, t| pi.prob(a, s) * pa[(s, t)]))
        .collect();
    ControlledMP::new(m)
}

/// Sample a `width x height` grid with wall border, interior walls i.i.d. with
/// probability `wall_prob`, resampled until connected with exactly `free_cells` free cells.
pub fn random_grid(
    width: usize,
    height: usize,
    free_cells: usize,
    wall_prob: f64,
    seed: u64,
) -> Result<GridSpec> {
    if width < 3 || height < 3 {
        return Err(Error::InvalidArgument("grid needs an interior".into()));
    }
    let interior = (width - 2) * (height - 2);
    if free_cells == 0 || free_cells > interior {
        return Err(Error::InvalidArgument(format!(
            "cannot place {free_cells} free cells in an interior of {interior}"
        )));
    }
    const ATTEMPTS: usize = 100_000;
    let mut rng = rng_from_seed(seed);
    for _ in 0..ATTEMPTS {
        let mut walls = BTreeSet::new();
        for r in 0..height {
            for c in 0..width {
                let border = r == 0 || c == 0 || r == height - 1 || c == width - 1;
                if border || rng.random::<f64>() < wall_prob {
                    walls.insert((r, c));
                }
            }
        }
        let spec = GridSpec {
            width,
            height,
            walls,
            noise: 0.0,
        };
        if spec.free_cells().len() == free_cells && spec.unreachable_count() == 0 {
            return Ok(spec);
        }
    }
    Err(Error::ConstructionFailed(ATTEMPTS))
}

/// The grid family used by the experiments: 9x7 with border, 24 free cells.
pub fn random_grid24(seed: u64) -> Result<GridSpec> {
    random_grid(9, 7, 24, 0.25, seed)
}

// ---------------------------------------------------------------------------
// Composite processes

/// `M[a] = Ṁ[a] ⊗ M̈` with state index `ṡ · d̈ + s̈`.
pub fn tensor_product(mdot: &ControlledMP, mddot: &Matrix) -> Result<ControlledMP> {
    check_stochastic(mddot, "action-independent factor")?;
    let m = mdot.actions().iter().map(|ma| ma.kronecker(mddot)).collect();
    ControlledMP::with_tolerance(m, 1e-11)
}

/// Block-diagonal composite with zero cross-block transitions.
pub fn block_diagonal(parts: &[ControlledMP]) -> Result<ControlledMP> {
    let first = parts.first().ok_or_else(|| Error::InvalidArgument("no parts".into()))?;
    let k = first.k();
    if parts.iter().any(|p| p.k() != k) {
        return Err(dim_err("all parts must share the number of actions"));
    }
    let d: usize = parts.iter().map(|p| p.d()).sum();
    let mut m = vec![Matrix::zeros(d, d); k];
    let mut offset = 0;
    for part in parts {
        let n = part.d();
        for (a, ma) in m.iter_mut().enumerate() {
            ma.view_mut((offset, offset), (n, n)).copy_from(part.action(a));
        }
        offset += n;
    }
    ControlledMP::new(m)
}

/// Two distinct random action-independent CMPs `M[a] = P / k`.
pub fn degenerate_action_independent(
    d: usize,
    k: usize,
    seed: u64,
) -> Result<(ControlledMP, ControlledMP)> {
    if d == 0 || k == 0 {
        return Err(Error::InvalidArgument("d and k must be positive".into()));
    }
    let make = |label: &str| {
        let mut rng = rng_from_seed(derive_seed(seed, label, 0));
        let p = random_stochastic(d, &mut rng);
        ControlledMP::with_tolerance(vec![&p / k as f64; k], 1e-11)
    };
    Ok((make("degenerate-m")?, make("degenerate-w")?))
}

// ---------------------------------------------------------------------------
// Permutation processes

/// Two permutations of `0..d`, applied as `s -> perm[s]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PermPair {
    perm0: Vec<usize>,
    perm1: Vec<usize>,
}

fn check_perm(p: &[usize]) -> Result<()> {
    let mut seen = vec![false; p.len()];
    for &x in p {
        if x >= p.len() || seen[x] {
            return Err(Error::InvalidArgument(format!("{p:?} is not a permutation")));
        }
        seen[x] = true;
    }
    Ok(())
}

impl PermPair {
    /// From 0-based images.
    pub fn new(perm0: Vec<usize>, perm1: Vec<usize>) -> Result<Self> {
        if perm0.len() != perm1.len() || perm0.is_empty() {
            return Err(dim_err("permutations must be nonempty and of equal length"));
        }
        check_perm(&perm0)?;
        check_perm(&perm1)?;
        Ok(PermPair { perm0, perm1 })
    }

    /// From 1-based one-line notation, e.g. `[4,5,6,1,2,3]`.
    pub fn from_one_line(perm0: &[usize], perm1: &[usize]) -> Result<Self> {
        let shift = |p: &[usize]| -> Result<Vec<usize>> {
            p.iter()
                .map(|&x| {
                    x.checked_sub(1)
                        .ok_or_else(|| Error::InvalidArgument("one-line entries start at 1".into()))
                })
                .collect()
        };
        PermPair::new(shift(perm0)?, shift(perm1)?)
    }

    /// Six-state pair whose sum has 0/1 powers up to 2 but not 3.
    pub fn six_state() -> Self {
        PermPair::from_one_line(&[4, 5, 6, 1, 2, 3], &[2, 3, 1, 6, 4, 5]).expect("valid")
    }

    /// Fifteen-state pair (3-cycles and 5-cycles), 0/1 powers up to 3 but not 4.
    pub fn fifteen_state() -> Self {
        PermPair::from_one_line(
            &[6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 1, 2, 3, 4, 5],
            &[2, 3, 4, 5, 1, 8, 9, 10, 6, 7, 14, 15, 11, 12, 13],
        )
        .expect("valid")
    }

    pub fn d(&self) -> usize {
        self.perm0.len()
    }

    pub fn perm(&self, a: usize) -> &[usize] {
        if a == 0 {
            &self.perm0
        } else {
            &self.perm1
        }
    }

    fn matrix(&self, a: usize) -> DMatrix<u64> {
        let d = self.d();
        let p = self.perm(a);
        DMatrix::from_fn(d, d, |s, t| u64::from(p[s] == t))
    }
}

/// `M[a][s][perm_a(s)] = π(a|s)`.
pub fn perm_cmp(pair: &PermPair, pi: &Policy) -> Result<ControlledMP> {
    let d = pair.d();
    if pi.k() != 2 || pi.d() != d {
        return Err(dim_err(format!("policy must be 2x{d}")));
    }
    let m = (0..2)
        .map(|a| {
            let perm = pair.perm(a);
            DMatrix::from_fn(d, d, |s, t| if perm[s] == t { pi.prob(a, s) } else { 0.0 })
        })
        .collect();
    ControlledMP::new(m)
}

/// Outcome of checking that `(P₀ + P₁)^j` is a 0/1 matrix.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CycleCondition {
    /// 0/1 for every `j <= i`, and not for `j = i + 1`.
    OkUpTo(usize),
    /// First `j <= i + 1` with an entry above 1, when that is at most `i`.
    FailsAt(usize),
    /// Still 0/1 at `j = i + 1`; the pair does not separate orders `i` and `i + 1`.
    NeverFails,
}

/// Integer powers of `P₀ + P₁` for `j = 1..=i+1`.
pub fn cycle_condition(pair: &PermPair, i: usize) -> CycleCondition {
    let sum = pair.matrix(0) + pair.matrix(1);
    let mut power = sum.clone();
    for j in 1..=i + 1 {
        if j > 1 {
            power = &power * &sum;
        }
        if power.iter().any(|&x| x > 1) {
            return if j <= i {
                CycleCondition::FailsAt(j)
            } else {
                CycleCondition::OkUpTo(i)
            };
        }
    }
    CycleCondition::NeverFails
}

/// Split every state `ṡ` into `(ṡ, 0)` and `(ṡ, 1)`; the transition
/// `ṡ -> perm_a(ṡ)` becomes the 2x2 stochastic block `blocks[a][ṡ]`, scaled by `π = 1/2`.
pub fn split_cmp(pair: &PermPair, blocks: &[Vec<Matrix>]) -> Result<ControlledMP> {
    let dd = pair.d();
    if blocks.len() != 2 || blocks.iter().any(|b| b.len() != dd) {
        return Err(dim_err(format!("need 2 x {dd} blocks")));
    }
    let d = 2 * dd;
    let mut m = vec![Matrix::zeros(d, d); 2];
    for (a, ma) in m.iter_mut().enumerate() {
        for sd in 0..dd {
            let block = &blocks[a][sd];
            if block.shape() != (2, 2) {
                return Err(dim_err("blocks must be 2x2"));
            }
            check_stochastic(block, "split block")?;
            let td = pair.perm(a)[sd];
            ma.view_mut((2 * sd, 2 * td), (2, 2)).copy_from(&(block * 0.5));
        }
    }
    ControlledMP::new(m)
}

fn random_blocks(dd: usize, rng: &mut impl Rng) -> Vec<Vec<Matrix>> {
    (0..2)
        .map(|_| {
            (0..dd)
                .map(|_| {
                    let mut b = DMatrix::from_fn(2, 2, |_, _| rng.random_range(0.1..0.9));
                    for r in 0..2 {
                        let sum = b.row(r).sum();
                        b.row_mut(r).scale_mut(1.0 / sum);
                    }
                    b
                })
                .collect()
        })
        .collect()
}

/// Pair `(M, W)` with identical support whose sequence inverse models agree
/// up to order `i` and differ at order `i + 1`.
pub fn split_counterexample(
    pair: &PermPair,
    i: usize,
    seed: u64,
) -> Result<(ControlledMP, ControlledMP)> {
    match cycle_condition(pair, i) {
        CycleCondition::OkUpTo(_) => {}
        other => {
            return Err(Error::InvalidArgument(format!(
                "permutation pair does not satisfy the order-{i} cycle condition: {other:?}"
            )))
        }
    }
    const ATTEMPTS: usize = 10;
    for attempt in 0..ATTEMPTS {
        let mut rng = rng_from_seed(derive_seed(seed, "split", attempt as u64));
        let m = split_cmp(pair, &random_blocks(pair.d(), &mut rng))?;
        let w = split_cmp(pair, &random_blocks(pair.d(), &mut rng))?;
        let mut ok = true;
        for j in 1..=i {
            if !verify_eqim(&m, &w, j, EqimMode::Sequence, EQIM_TOL)?.holds() {
                ok = false;
                break;
            }
        }
        if ok && !verify_eqim(&m, &w, i + 1, EqimMode::Sequence, EQIM_TOL)?.holds() {
            return Ok((m, w));
        }
    }
    Err(Error::ConstructionFailed(ATTEMPTS))
}

// ---------------------------------------------------------------------------
// Noise and divergence

/// Add `ε · 10^c` (fresh `ε ~ U[0, 1)` per value) to every defined entry and
/// renormalize over the action index. `None` leaves the model unchanged.
pub fn add_noise(b: &MaskedInverseModel, c: Option<f64>, seed: u64) -> MaskedInverseModel {
    let Some(c) = c else {
        return b.clone();
    };
    let scale = 10f64.powf(c);
    let mut rng = rng_from_seed(seed);
    let d = b.d();
    let mut values: Vec<Matrix> = b.values().to_vec();
    for s in 0..d {
        for e in 0..d {
            if !b.is_defined(s, e) {
                continue;
            }
            let mut total = 0.0;
            for v in values.iter_mut() {
                v[(s, e)] += scale * rng.random::<f64>();
                total += v[(s, e)];
            }
            for v in values.iter_mut() {
                v[(s, e)] /= total;
            }
        }
    }
    b.with_values(values).expect("shape unchanged")
}

/// Mean over defined `(s, s_end)` of `Σ_a p log(p / q)`, `q` floored at 1e-300.
pub fn kl_divergence(b_true: &MaskedInverseModel, b_est: &MaskedInverseModel) -> Result<f64> {
    if b_true.d() != b_est.d() || b_true.num_slices() != b_est.num_slices() {
        return Err(dim_err("inverse models differ in shape"));
    }
    let d = b_true.d();
    for s in 0..d {
        for e in 0..d {
            if b_true.is_defined(s, e) != b_est.is_defined(s, e) {
                return Err(Error::MaskMismatch { s, s_end: e });
            }
        }
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for s in 0..d {
        for e in 0..d {
            if !b_true.is_defined(s, e) {
                continue;
            }
            count += 1;
            for idx in 0..b_true.num_slices() {
                let p = b_true.slice(idx)[(s, e)];
                if p > 0.0 {
                    let q = b_est.slice(idx)[(s, e)].max(1e-300);
                    total += p * (p / q).ln();
                }
            }
        }
    }
    Ok(if count == 0 { 0.0 } else { total / count as f64 })
}
