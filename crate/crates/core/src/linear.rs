//! Forward models from a one-step inverse model and the policy.
//!
//! A forward model consistent with `B^a = W^a ⊘ W⁺` must have the form
//! `W^a = B^a ⊙ J` with `Σ_{s'} B^a_{ss'} J_{ss'} = π(a|s)`. Each state gives an
//! independent `k x d` linear system for the row `J_{s·}`; the affine family of
//! its solutions is the family of all consistent forward models.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Serialize, Serializer};

use crate::error::{dim_err, Error, Result};
use crate::linalg::{Svd, Threshold};
use crate::model::{
    matrix_to_rows, sequence_inverse, ControlledMP, MaskedInverseModel, Matrix,
    Policy, INVERSE_NORMALIZATION_TOL,
};
use crate::rng::rng_from_seed;

/// Residual above which a per-state system is declared infeasible.
pub const RESIDUAL_TOL: f64 = 1e-8;

/// How undefined `B` entries enter the per-state systems.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub enum MaskStrategy {
    /// Drop undefined columns, solve, reinsert `J = 0`.
    #[default]
    ZeroRestore,
    /// Replace undefined `B^·_{ss'}` by a random distribution over actions and
    /// solve the full system. Agrees with `ZeroRestore` when the solution is unique.
    RandomFill { seed: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinearOptions {
    pub threshold: Threshold,
    pub mask: MaskStrategy,
    pub residual_tol: f64,
}

impl Default for LinearOptions {
    fn default() -> Self {
        LinearOptions {
            threshold: Threshold::Default,
            mask: MaskStrategy::ZeroRestore,
            residual_tol: RESIDUAL_TOL,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolutionStatus {
    Unique,
    /// Affine family of the given total dimension `d_J`.
    Affine(usize),
    Inconsistent,
}

/// Affine family `W^a = B^a ⊙ (J + Σ_r z_r Γ^r)` of forward models.
#[derive(Clone, Debug)]
pub struct SolutionSet {
    /// `B^a ⊙ J` for the minimum-norm `J`; may contain negative entries.
    pub particular_w: ControlledMP,
    pub j: Matrix,
    /// Per state, orthonormal null vectors of that state's system as `d`-vectors.
    pub nullspace: Vec<Vec<DVector<f64>>>,
    pub dims: Vec<usize>,
    pub residuals: Vec<f64>,
    pub status: SolutionStatus,
    b1: MaskedInverseModel,
}

impl SolutionSet {
    pub fn total_dim(&self) -> usize {
        self.dims.iter().sum()
    }

    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().copied().fold(0.0, f64::max)
    }

    /// `Γ^r`: row `s` holds the `r`-th null vector of state `s` (zero if `r >= d_{Js}`).
    pub fn gamma(&self, r: usize) -> Matrix {
        let d = self.j.nrows();
        let mut g = Matrix::zeros(d, d);
        for (s, basis) in self.nullspace.iter().enumerate() {
            if let Some(v) = basis.get(r) {
                g.row_mut(s).copy_from(&v.transpose());
            }
        }
        g
    }

    /// The one-step inverse model this family was inferred from.
    pub fn b1(&self) -> &MaskedInverseModel {
        &self.b1
    }

    /// Member of the family for coefficients `z[s][r]`.
    pub fn member(&self, z: &[Vec<f64>]) -> Result<ControlledMP> {
        if z.len() != self.nullspace.len() || z.iter().zip(&self.nullspace).any(|(c, b)| c.len() != b.len()) {
            return Err(dim_err("coefficients must match null-space dimensions"));
        }
        let mut j = self.j.clone();
        for (s, (coef, basis)) in z.iter().zip(&self.nullspace).enumerate() {
            for (c, v) in coef.iter().zip(basis) {
                for t in 0..j.ncols() {
                    j[(s, t)] += c * v[t];
                }
            }
        }
        ControlledMP::new_unchecked(apply_j(&self.b1, &j))
    }
}

impl Serialize for SolutionSet {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Out {
            status: SolutionStatus,
            dims: Vec<usize>,
            residuals: Vec<f64>,
            particular_w: Vec<Vec<Vec<f64>>>,
            nullspace: Vec<Vec<Vec<f64>>>,
        }
        Out {
            status: self.status,
            dims: self.dims.clone(),
            residuals: self.residuals.clone(),
            particular_w: self.particular_w.actions().iter().map(matrix_to_rows).collect(),
            nullspace: self
                .nullspace
                .iter()
                .map(|b| b.iter().map(|v| v.iter().copied().collect()).collect())
                .collect(),
        }
        .serialize(serializer)
    }
}

fn apply_j(b1: &MaskedInverseModel, j: &Matrix) -> Vec<Matrix> {
    b1.values().iter().map(|b| b.component_mul(j)).collect()
}

fn check_inputs(b1: &MaskedInverseModel, pi: &Policy) -> Result<()> {
    if b1.order() != 1 {
        return Err(Error::InvalidArgument("one-step inverse model required".into()));
    }
    if pi.k() != b1.k() || pi.d() != b1.d() {
        return Err(dim_err(format!(
            "policy is {}x{}, inverse model has k={} d={}",
            pi.k(),
            pi.d(),
            b1.k(),
            b1.d()
        )));
    }
    b1.check_normalization(INVERSE_NORMALIZATION_TOL)
}

/// Columns `t` with `B^·_{st}` defined.
fn defined_columns(b1: &MaskedInverseModel, s: usize) -> Vec<usize> {
    (0..b1.d()).filter(|&t| b1.is_defined(s, t)).collect()
}

/// The `k x |cols|` system matrix of state `s`.
fn state_system(b1: &MaskedInverseModel, s: usize, cols: &[usize]) -> Matrix {
    DMatrix::from_fn(b1.k(), cols.len(), |a, c| b1.slice(a)[(s, cols[c])])
}

/// All forward models consistent with `b1` and `pi`.
pub fn infer_forward(b1: &MaskedInverseModel, pi: &Policy) -> Result<SolutionSet> {
    infer_forward_with(b1, pi, &LinearOptions::default())
}

pub fn infer_forward_with(
    b1: &MaskedInverseModel,
    pi: &Policy,
    opts: &LinearOptions,
) -> Result<SolutionSet> {
    check_inputs(b1, pi)?;
    let (k, d) = (b1.k(), b1.d());
    let mut fill_rng = match opts.mask {
        MaskStrategy::RandomFill { seed } => Some(rng_from_seed(seed)),
        MaskStrategy::ZeroRestore => None,
    };
    let mut j = Matrix::zeros(d, d);
    let mut nullspace = Vec::with_capacity(d);
    let mut residuals = Vec::with_capacity(d);
    for s in 0..d {
        let rhs = DVector::from_fn(k, |a, _| pi.prob(a, s));
        let (system, cols) = match fill_rng.as_mut() {
            None => {
                let cols = defined_columns(b1, s);
                (state_system(b1, s, &cols), cols)
            }
            Some(rng) => {
                let cols: Vec<usize> = (0..d).collect();
                let mut sys = state_system(b1, s, &cols);
                for t in 0..d {
                    if !b1.is_defined(s, t) {
                        let r: Vec<f64> = (0..k).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
                        let total: f64 = r.iter().sum();
                        for a in 0..k {
                            sys[(a, t)] = r[a] / total;
                        }
                    }
                }
                (sys, cols)
            }
        };
        let svd = Svd::new(&system);
        let x = svd.solve(&rhs, opts.threshold);
        let residual = (&system * &x - &rhs).amax();
        for (c, &t) in cols.iter().enumerate() {
            j[(s, t)] = x[c];
        }
        let ns = svd.null_space(opts.threshold);
        let basis = (0..ns.ncols())
            .map(|r| {
                let mut v = DVector::zeros(d);
                for (c, &t) in cols.iter().enumerate() {
                    v[t] = ns[(c, r)];
                }
                v
            })
            .collect::<Vec<_>>();
        if fill_rng.is_some() {
            // Undefined columns never carry forward mass.
            for t in 0..d {
                if !b1.is_defined(s, t) {
                    j[(s, t)] = 0.0;
                }
            }
        }
        residuals.push(residual);
        nullspace.push(basis);
    }
    let dims: Vec<usize> = nullspace.iter().map(|b| b.len()).collect();
    let total: usize = dims.iter().sum();
    let status = if residuals.iter().any(|&r| r > opts.residual_tol) {
        SolutionStatus::Inconsistent
    } else if total == 0 {
        SolutionStatus::Unique
    } else {
        SolutionStatus::Affine(total)
    };
    let particular_w = ControlledMP::new_unchecked(apply_j(b1, &j))?;
    Ok(SolutionSet {
        particular_w,
        j,
        nullspace,
        dims,
        residuals,
        status,
        b1: b1.clone(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UniquenessReport {
    pub ranks: Vec<usize>,
    /// Number of defined columns per state; full rank means rank equals this.
    pub defined_columns: Vec<usize>,
    pub unique: bool,
}

/// Rank of every `B^·_{s·}` slice restricted to defined columns.
pub fn uniqueness_check(b1: &MaskedInverseModel, threshold: Threshold) -> UniquenessReport {
    let d = b1.d();
    let mut ranks = Vec::with_capacity(d);
    let mut defined = Vec::with_capacity(d);
    for s in 0..d {
        let cols = defined_columns(b1, s);
        let rank = Svd::new(&state_system(b1, s, &cols)).rank(threshold);
        ranks.push(rank);
        defined.push(cols.len());
    }
    let unique = ranks.iter().zip(&defined).all(|(r, n)| r == n);
    UniquenessReport {
        ranks,
        defined_columns: defined,
        unique,
    }
}

/// Two-step inverse model of the particular solution.
pub fn two_step_from_solution(sol: &SolutionSet) -> Result<MaskedInverseModel> {
    if sol.status == SolutionStatus::Inconsistent {
        return Err(Error::Inconsistent(format!(
            "one-step inverse model is inconsistent with the policy (residual {:.3e})",
            sol.max_residual()
        )));
    }
    Ok(sequence_inverse(&sol.particular_w, 2))
}
