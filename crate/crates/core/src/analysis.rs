//! Identifiability analysis around a known process `M`.
//!
//! * the family `W^a = M^a ⊙ (1 + Δ)` of processes with the same one-step inverse;
//! * the stacked linearization `A′` of the first-action two-step equalities plus the
//!   policy constraints, whose full column rank certifies local uniqueness;
//! * a fixed-point search for nonzero solutions when `M` has low rank;
//! * solution-space dimensions `d_J`, `d_W`, `d_B` of the forward models and of the
//!   two-step inverse models compatible with a one-step inverse model.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{singular_values, Svd, Threshold};
use crate::linear::{infer_forward_with, LinearOptions, SolutionSet, SolutionStatus};
use crate::model::{
    sequence_inverse, verify_eqim, ControlledMP, EqimMode, EqimReport, MaskedInverseModel, Matrix,
    Policy,
};
use crate::rng::{derive_seed, rng_from_seed};

// ---------------------------------------------------------------------------
// One-step family

/// Per-state bases of `Σ_{s'} M^a_{ss'} Δ_{ss'} = 0` on the support of `M⁺`.
#[derive(Clone, Debug)]
pub struct DeltaFamily {
    pub basis: Vec<Vec<DVector<f64>>>,
}

impl DeltaFamily {
    pub fn dims(&self) -> Vec<usize> {
        self.basis.iter().map(|b| b.len()).collect()
    }

    pub fn total_dim(&self) -> usize {
        self.basis.iter().map(|b| b.len()).sum()
    }

    /// `Δ` with row `s` equal to `Σ_r z[s][r] basis[s][r]`.
    pub fn assemble(&self, z: &[Vec<f64>]) -> Matrix {
        let d = self.basis.len();
        let mut delta = Matrix::zeros(d, d);
        for (s, (coef, basis)) in z.iter().zip(&self.basis).enumerate() {
            for (c, v) in coef.iter().zip(basis) {
                for t in 0..d {
                    delta[(s, t)] += c * v[t];
                }
            }
        }
        delta
    }
}

pub fn delta_family(m: &ControlledMP, threshold: Threshold) -> DeltaFamily {
    let (k, d) = (m.k(), m.d());
    let plus = m.forward_marginal();
    let basis = (0..d)
        .map(|s| {
            let cols: Vec<usize> = (0..d).filter(|&t| plus[(s, t)] > 0.0).collect();
            let sys = DMatrix::from_fn(k, cols.len(), |a, c| m.action(a)[(s, cols[c])]);
            let ns = Svd::new(&sys).null_space(threshold);
            (0..ns.ncols())
                .map(|r| {
                    let mut v = DVector::zeros(d);
                    for (c, &t) in cols.iter().enumerate() {
                        v[t] = ns[(c, r)];
                    }
                    v
                })
                .collect()
        })
        .collect();
    DeltaFamily { basis }
}

/// `W^a = M^a ⊙ (1 + Δ)`; may be invalid if `Δ < −1` somewhere.
pub fn perturb(m: &ControlledMP, delta: &Matrix) -> Result<ControlledMP> {
    let w = m
        .actions()
        .iter()
        .map(|ma| ma.component_mul(&delta.map(|x| 1.0 + x)))
        .collect();
    ControlledMP::new_unchecked(w)
}

// ---------------------------------------------------------------------------
// Linearization of the first-action two-step equalities

/// `A^a` as `d² x d²` (row `s·d + s''`, column `k·d + l`) for every action.
///
/// With `W = M ⊙ (1 + Δ)`,
/// `M^a M⁺ ⊙ (W⁺)² − W^a W⁺ ⊙ (M⁺)² = A^a Δ − R^a(Δ)` exactly.
pub fn build_a_blocks(m: &ControlledMP) -> Vec<Matrix> {
    let d = m.d();
    let plus = m.forward_marginal();
    let p2 = &plus * &plus;
    m.actions()
        .iter()
        .map(|ma| {
            let map = ma * &plus;
            let mut a = Matrix::zeros(d * d, d * d);
            for s in 0..d {
                for s2 in 0..d {
                    let row = s * d + s2;
                    let (x, y) = (map[(s, s2)], p2[(s, s2)]);
                    for j in 0..d {
                        // Δ_{j s''}: paths s -> j -> s'' perturbed on the second step.
                        a[(row, j * d + s2)] += x * plus[(s, j)] * plus[(j, s2)] - y * ma[(s, j)] * plus[(j, s2)];
                        // Δ_{s j}: perturbed on the first step.
                        a[(row, s * d + j)] += x * plus[(s, j)] * plus[(j, s2)] - y * ma[(s, j)] * plus[(j, s2)];
                    }
                }
            }
            a
        })
        .collect()
}

/// Quadratic remainder `R^a(Δ) = (M^a ⊙ Δ)(M⁺ ⊙ Δ) ⊙ (M⁺)² − M^a M⁺ ⊙ (M⁺ ⊙ Δ)²`.
pub fn remainder(m: &ControlledMP, delta: &Matrix) -> Vec<Matrix> {
    let plus = m.forward_marginal();
    let p2 = &plus * &plus;
    let dp = plus.component_mul(delta);
    let dp2 = &dp * &dp;
    m.actions()
        .iter()
        .map(|ma| {
            let da = ma.component_mul(delta);
            (&da * &dp).component_mul(&p2) - (ma * &plus).component_mul(&dp2)
        })
        .collect()
}

/// Rows `C^a_{s, kl} = M^a_{sl} δ_{sk}` of the policy constraints, `k d x d²`.
pub fn build_c_constraints(m: &ControlledMP) -> Matrix {
    let (k, d) = (m.k(), m.d());
    let mut c = Matrix::zeros(k * d, d * d);
    for a in 0..k {
        for s in 0..d {
            for l in 0..d {
                c[(a * d + s, s * d + l)] = m.action(a)[(s, l)];
            }
        }
    }
    c
}

#[derive(Clone, Debug)]
pub struct APrime {
    /// `(k d² + k d) x d²`: all `A^a` blocks followed by the constraint rows.
    pub matrix: Matrix,
    pub rank: usize,
    /// Columns `(k, l)` with `M⁺_{kl} > 0`; only these perturbations change `W`.
    pub support_columns: usize,
    pub singular_values: Vec<f64>,
}

pub fn build_aprime(m: &ControlledMP, threshold: Threshold) -> APrime {
    let d = m.d();
    let blocks = build_a_blocks(m);
    let c = build_c_constraints(m);
    let rows = blocks.len() * d * d + c.nrows();
    let mut matrix = Matrix::zeros(rows, d * d);
    for (a, blk) in blocks.iter().enumerate() {
        matrix.view_mut((a * d * d, 0), (d * d, d * d)).copy_from(blk);
    }
    matrix
        .view_mut((blocks.len() * d * d, 0), (c.nrows(), d * d))
        .copy_from(&c);
    let plus = m.forward_marginal();
    let support_columns = plus.iter().filter(|&&x| x > 0.0).count();
    let sv = singular_values(&matrix);
    let cut = threshold.cutoff(sv.first().copied().unwrap_or(0.0), rows, d * d);
    let rank = sv.iter().filter(|&&x| x > cut).count();
    APrime {
        matrix,
        rank,
        support_columns,
        singular_values: sv,
    }
}

/// Full column rank of `A′` on the support of `M⁺`.
pub fn local_uniqueness(m: &ControlledMP, threshold: Threshold) -> bool {
    let ap = build_aprime(m, threshold);
    let plus = m.forward_marginal();
    let d = m.d();
    let cols: Vec<usize> = (0..d * d).filter(|&c| plus[(c / d, c % d)] > 0.0).collect();
    let restricted = DMatrix::from_fn(ap.matrix.nrows(), cols.len(), |r, c| ap.matrix[(r, cols[c])]);
    crate::linalg::rank(&restricted, threshold) == ap.support_columns
}

/// Empirical rank of `A′` for rank-`r` factored processes with `k = 2`.
pub fn lowrank_rank_law(d: usize, r: usize) -> usize {
    (d * d).min((3 * r - 1) * d - r * (r - 1))
}

// ---------------------------------------------------------------------------
// Low-rank search

/// Random nonnegative factors `L^a` (`d x r`) and `R` (`r x d`).
pub fn lowrank_factors(d: usize, k: usize, r: usize, seed: u64) -> (Vec<Matrix>, Matrix) {
    let mut rng = rng_from_seed(seed);
    let l = (0..k)
        .map(|_| DMatrix::from_fn(d, r, |_, _| 1.0 - rng.random::<f64>()))
        .collect();
    let rr = DMatrix::from_fn(r, d, |_, _| 1.0 - rng.random::<f64>());
    (l, rr)
}

/// `M^a = D L^a R` with the row scaling `D` that normalizes `M⁺`; rank is preserved.
pub fn lowrank_cmp(l: &[Matrix], r: &Matrix) -> Result<ControlledMP> {
    let mut m: Vec<Matrix> = l.iter().map(|la| la * r).collect();
    let d = r.ncols();
    if m.iter().any(|x| x.nrows() != d) {
        return Err(Error::Dimension("factors do not produce square matrices".into()));
    }
    for s in 0..d {
        let total: f64 = m.iter().map(|ma| ma.row(s).sum()).sum();
        for ma in m.iter_mut() {
            ma.row_mut(s).scale_mut(1.0 / total);
        }
    }
    ControlledMP::with_tolerance(m, 1e-11)
}

#[derive(Clone, Debug, Serialize)]
pub struct LowRankResult {
    pub aprime_rank: usize,
    pub iterations: usize,
    pub converged: bool,
    /// `‖A′Δ − R′(Δ)‖_∞` at the final iterate.
    pub residual: f64,
    pub delta_norm: f64,
    /// `W = M ⊙ (1 + Δ)` is a valid process.
    pub valid: bool,
    pub eqim1: EqimReport,
    pub eqim2_first_action: EqimReport,
    pub eqim3_sequence: EqimReport,
    pub eqim3_first_action: EqimReport,
    #[serde(skip)]
    pub w: ControlledMP,
}

fn stacked_remainder(m: &ControlledMP, delta: &Matrix) -> DVector<f64> {
    let d = m.d();
    let k = m.k();
    let r = remainder(m, delta);
    let mut out = DVector::zeros(k * d * d + k * d);
    for (a, ra) in r.iter().enumerate() {
        for s in 0..d {
            for s2 in 0..d {
                out[a * d * d + s * d + s2] = ra[(s, s2)];
            }
        }
    }
    out
}

#[cfg(test)]
fn flatten(delta: &Matrix) -> DVector<f64> {
    let d = delta.nrows();
    DVector::from_fn(d * d, |i, _| delta[(i / d, i % d)])
}

fn unflatten(v: &DVector<f64>, d: usize) -> Matrix {
    DMatrix::from_fn(d, d, |i, j| v[i * d + j])
}

/// Seed `Δ₀ = ε v` with `v` a unit null vector of `A′`, iterate `Δ ← Δ₀ + A′⁺ R′(Δ)`.
pub fn lowrank_search(
    m: &ControlledMP,
    epsilon: f64,
    max_iters: usize,
    threshold: Threshold,
) -> Result<LowRankResult> {
    let d = m.d();
    let ap = build_aprime(m, threshold);
    if ap.rank >= d * d {
        return Err(Error::NotApplicable(format!(
            "A′ has full column rank {}; no null direction to seed from",
            ap.rank
        )));
    }
    let svd = Svd::new(&ap.matrix);
    let v0 = svd.v.column(d * d - 1).into_owned();
    let pinv = svd.pinv(threshold);
    let delta0 = &v0 * epsilon;
    let mut delta = delta0.clone();
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    for it in 0..=max_iters {
        let dm = unflatten(&delta, d);
        let rp = stacked_remainder(m, &dm);
        residual = (&ap.matrix * &delta - &rp).amax();
        iterations = it;
        if residual <= 1e-12 || it == max_iters {
            break;
        }
        delta = &delta0 + &pinv * rp;
    }
    let dm = unflatten(&delta, d);
    let w = perturb(m, &dm)?;
    let valid = w.validate(1e-12).is_ok();
    let tol = 1e-8;
    Ok(LowRankResult {
        aprime_rank: ap.rank,
        iterations,
        converged: residual <= 1e-12,
        residual,
        delta_norm: delta.amax(),
        valid,
        eqim1: verify_eqim(m, &w, 1, EqimMode::Sequence, tol)?,
        eqim2_first_action: verify_eqim(m, &w, 2, EqimMode::FirstAction, tol)?,
        eqim3_sequence: verify_eqim(m, &w, 3, EqimMode::Sequence, tol)?,
        eqim3_first_action: verify_eqim(m, &w, 3, EqimMode::FirstAction, tol)?,
        w,
    })
}

// ---------------------------------------------------------------------------
// Solution dimensions

/// Tangent data of the forward and two-step inverse solution spaces at the
/// minimum-norm particular solution.
#[derive(Clone, Debug)]
pub struct Tangent {
    pub solution: SolutionSet,
    /// Column offsets of state `t`'s coefficients.
    offsets: Vec<usize>,
}

impl Tangent {
    pub fn new(b1: &MaskedInverseModel, pi: &Policy, threshold: Threshold) -> Result<Self> {
        let opts = LinearOptions {
            threshold,
            ..Default::default()
        };
        let solution = infer_forward_with(b1, pi, &opts)?;
        if solution.status == SolutionStatus::Inconsistent {
            return Err(Error::Inconsistent(format!(
                "one-step inverse model admits no forward model (residual {:.3e})",
                solution.max_residual()
            )));
        }
        let mut offsets = Vec::with_capacity(solution.dims.len());
        let mut acc = 0;
        for &n in &solution.dims {
            offsets.push(acc);
            acc += n;
        }
        Ok(Tangent { solution, offsets })
    }

    pub fn d_j(&self) -> usize {
        self.solution.total_dim()
    }

    /// `Λ^{ar}` restricted to its only nonzero row `t`: `B^a_{t·} ⊙ Γ^r_{t·}`.
    fn lambda_row(&self, a: usize, t: usize, r: usize) -> DVector<f64> {
        let b = &self.solution_b1().slice(a);
        let g = &self.solution.nullspace[t][r];
        DVector::from_fn(g.len(), |s, _| b[(t, s)] * g[s])
    }

    fn solution_b1(&self) -> &MaskedInverseModel {
        self.solution.b1()
    }

    /// Rank of `Λ_s` as a `k d x d_{Js}` matrix, per state.
    pub fn w_ranks(&self, threshold: Threshold) -> Vec<usize> {
        let b1 = self.solution_b1();
        let (k, d) = (b1.k(), b1.d());
        (0..d)
            .map(|t| {
                let n = self.solution.dims[t];
                if n == 0 {
                    return 0;
                }
                let mut lam = Matrix::zeros(k * d, n);
                for a in 0..k {
                    for r in 0..n {
                        let row = self.lambda_row(a, t, r);
                        for s in 0..d {
                            lam[(a * d + s, r)] = row[s];
                        }
                    }
                }
                Svd::new(&lam).rank(threshold)
            })
            .collect()
    }

    /// Rows of `C` for fixed `s`: `k² d` rows ordered `(a, a', s'')`, `d_J` columns `(t, r)`.
    pub fn c_block(&self, s: usize) -> Matrix {
        let b1 = self.solution_b1();
        let (k, d) = (b1.k(), b1.d());
        let m = self.solution.particular_w.actions();
        let plus = self.solution.particular_w.forward_marginal();
        let p2 = &plus * &plus;
        let n = self.d_j();
        let mut block = Matrix::zeros(k * k * d, n);
        // Λ rows per (t, r) and action, plus Λ⁺ rows.
        for t in 0..d {
            for r in 0..self.solution.dims[t] {
                let col = self.offsets[t] + r;
                let lam: Vec<DVector<f64>> = (0..k).map(|a| self.lambda_row(a, t, r)).collect();
                let lam_plus = lam.iter().fold(DVector::zeros(d), |acc, x| acc + x);
                // Row t of Λ^{ar} M^{a'} and of Λ⁺ M⁺ (needed only when s == t).
                let lam_m: Vec<Vec<DVector<f64>>> = if s == t {
                    lam.iter()
                        .map(|la| m.iter().map(|mb| mb.tr_mul(la)).collect())
                        .collect()
                } else {
                    Vec::new()
                };
                let lam_plus_m = if s == t { Some(plus.tr_mul(&lam_plus)) } else { None };
                for a in 0..k {
                    for a2 in 0..k {
                        let mm_row = (m[a].row(s) * &m[a2]).transpose();
                        for s2 in 0..d {
                            let mut v = m[a][(s, t)] * lam[a2][s2];
                            let mut q = plus[(s, t)] * lam_plus[s2];
                            if let Some(lpm) = &lam_plus_m {
                                v += lam_m[a][a2][s2];
                                q += lpm[s2];
                            }
                            block[((a * k + a2) * d + s2, col)] = v * p2[(s, s2)] - mm_row[s2] * q;
                        }
                    }
                }
            }
        }
        block
    }

    /// The full `k² d² x d_J` tangent matrix; rows ordered `(s, a, a', s'')`.
    pub fn c_matrix(&self) -> Matrix {
        let b1 = self.solution_b1();
        let (k, d) = (b1.k(), b1.d());
        let per = k * k * d;
        let mut c = Matrix::zeros(per * d, self.d_j());
        for s in 0..d {
            c.view_mut((s * per, 0), (per, self.d_j())).copy_from(&self.c_block(s));
        }
        c
    }

    /// First-order change of `B^{aa'}_{ss''}` for coefficients `z` (flattened `(t, r)`),
    /// indexed like [`Tangent::c_matrix`] rows; undefined entries are 0.
    pub fn linear_term(&self, z: &DVector<f64>) -> DVector<f64> {
        let b1 = self.solution_b1();
        let (k, d) = (b1.k(), b1.d());
        let plus = self.solution.particular_w.forward_marginal();
        let p2 = &plus * &plus;
        let raw = self.c_matrix() * z;
        DVector::from_fn(raw.len(), |i, _| {
            let s = i / (k * k * d);
            let s2 = i % d;
            let den = p2[(s, s2)];
            if den > 0.0 {
                raw[i] / (den * den)
            } else {
                0.0
            }
        })
    }

    /// Coefficient vector `z` as per-state lists for [`SolutionSet::member`].
    pub fn split(&self, z: &DVector<f64>) -> Vec<Vec<f64>> {
        self.solution
            .dims
            .iter()
            .zip(&self.offsets)
            .map(|(&n, &o)| (0..n).map(|r| z[o + r]).collect())
            .collect()
    }

    /// Two-step inverse model of the family member with coefficients `z`.
    pub fn two_step_at(&self, z: &DVector<f64>) -> Result<MaskedInverseModel> {
        Ok(sequence_inverse(&self.solution.member(&self.split(z))?, 2))
    }

    /// Singular values of `C`, exact for small problems and via a streamed Gaussian
    /// sketch with `2 d_J` rows otherwise.
    pub fn c_singular_values(&self, seed: u64) -> Vec<f64> {
        let b1 = self.solution_b1();
        let (k, d) = (b1.k(), b1.d());
        let n = self.d_j();
        if n == 0 {
            return Vec::new();
        }
        let rows = k * k * d * d;
        if rows <= 4 * n {
            return singular_values(&self.c_matrix());
        }
        let p = 2 * n;
        let scale = 1.0 / (p as f64).sqrt();
        let mut y = Matrix::zeros(p, n);
        for s in 0..d {
            let block = self.c_block(s);
            let mut rng = rng_from_seed(derive_seed(seed, "tangent-sketch", s as u64));
            let omega = DMatrix::from_fn(p, block.nrows(), |_, _| {
                let g: f64 = StandardNormal.sample(&mut rng);
                g * scale
            });
            y += omega * block;
        }
        singular_values(&y)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct DimReport {
    pub d: usize,
    pub k: usize,
    pub d_j: usize,
    pub d_w: usize,
    pub d_b: usize,
    pub d_js: Vec<usize>,
    pub d_ws: Vec<usize>,
    pub threshold: Threshold,
    /// Singular values of the tangent matrix (possibly sketched).
    pub c_spectrum: Vec<f64>,
    pub sketched: bool,
}

/// Default cutoff for exact inputs.
pub const EXACT_DIM_THRESHOLD: Threshold = Threshold::Absolute(1e-13);

pub fn solution_dims(b1: &MaskedInverseModel, pi: &Policy, threshold: Threshold) -> Result<DimReport> {
    solution_dims_seeded(b1, pi, threshold, 0)
}

pub fn solution_dims_seeded(
    b1: &MaskedInverseModel,
    pi: &Policy,
    threshold: Threshold,
    seed: u64,
) -> Result<DimReport> {
    let tangent = Tangent::new(b1, pi, threshold)?;
    let d_js = tangent.solution.dims.clone();
    let d_ws = tangent.w_ranks(threshold);
    let spectrum = tangent.c_singular_values(seed);
    let (k, d) = (b1.k(), b1.d());
    let rows = k * k * d * d;
    let n = tangent.d_j();
    let cut = threshold.cutoff(spectrum.first().copied().unwrap_or(0.0), rows, n);
    let d_b = spectrum.iter().filter(|&&x| x > cut).count();
    Ok(DimReport {
        d,
        k,
        d_j: n,
        d_w: d_ws.iter().sum(),
        d_b,
        d_js,
        d_ws,
        threshold,
        c_spectrum: spectrum,
        sketched: rows > 4 * n,
    })
}

/// PCA estimate of `d_B` from antithetic difference quotients `(B(z) − B(−z)) / 2|z|`.
///
/// Components count when above `rel_threshold · max(σ_max, 1)`, so a cloud made of
/// roundoff alone yields 0.
pub fn sampling_dim_estimate(
    b1: &MaskedInverseModel,
    pi: &Policy,
    n_samples: usize,
    z_scale: f64,
    rel_threshold: f64,
    seed: u64,
) -> Result<usize> {
    let tangent = Tangent::new(b1, pi, EXACT_DIM_THRESHOLD)?;
    let n = tangent.d_j();
    if n == 0 {
        return Ok(0);
    }
    let base = sequence_inverse(&tangent.solution.particular_w, 2);
    let d = base.d();
    let entries: Vec<(usize, usize)> = (0..d)
        .flat_map(|s| (0..d).map(move |e| (s, e)))
        .filter(|&(s, e)| base.is_defined(s, e))
        .collect();
    let features = entries.len() * base.num_slices();
    let mut rng = rng_from_seed(seed);
    let mut samples = Matrix::zeros(n_samples, features);
    for row in 0..n_samples {
        let z = DVector::from_fn(n, |_, _| {
            let g: f64 = StandardNormal.sample(&mut rng);
            g * z_scale
        });
        let up = tangent.two_step_at(&z)?;
        let down = tangent.two_step_at(&(-&z))?;
        let mut col = 0;
        for q in 0..base.num_slices() {
            for &(s, e) in &entries {
                samples[(row, col)] = (up.slice(q)[(s, e)] - down.slice(q)[(s, e)]) / (2.0 * z_scale);
                col += 1;
            }
        }
    }
    let sv = singular_values(&samples);
    let cut = rel_threshold * sv.first().copied().unwrap_or(0.0).max(1.0);
    Ok(sv.iter().filter(|&&x| x > cut).count())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{perm_cmp, random_cmp, PermPair};
    use crate::model::{one_step_inverse, EQIM_TOL};

    #[test]
    fn a_blocks_match_exact_identity() {
        let m = random_cmp(3, 2, 4).unwrap();
        let mut rng = rng_from_seed(9);
        let delta = DMatrix::from_fn(3, 3, |_, _| rng.random::<f64>() - 0.5);
        let w = perturb(&m, &delta).unwrap();
        let (mp, wp) = (m.forward_marginal(), w.forward_marginal());
        let (mp2, wp2) = (&mp * &mp, &wp * &wp);
        let blocks = build_a_blocks(&m);
        let r = remainder(&m, &delta);
        let flat = flatten(&delta);
        for a in 0..2 {
            let f = (m.action(a) * &mp).component_mul(&wp2) - (w.action(a) * &wp).component_mul(&mp2);
            let lin = unflatten(&(&blocks[a] * &flat), 3);
            assert!((f - (lin - &r[a])).amax() < 1e-14);
        }
    }

    #[test]
    fn a_plus_vanishes_for_two_actions() {
        let m = random_cmp(3, 2, 1).unwrap();
        let b = build_a_blocks(&m);
        assert!((&b[0] + &b[1]).amax() < 1e-15);
    }

    #[test]
    fn random_aprime_has_full_rank() {
        let m = random_cmp(3, 2, 2).unwrap();
        assert_eq!(build_aprime(&m, Threshold::Relative(1e-10)).rank, 9);
        assert!(local_uniqueness(&random_cmp(4, 2, 3).unwrap(), Threshold::Relative(1e-10)));
    }

    #[test]
    fn action_independent_is_not_locally_unique() {
        let (m, _) = crate::generators::degenerate_action_independent(3, 2, 1).unwrap();
        assert!(build_a_blocks(&m).iter().all(|a| a.amax() < 1e-15));
        assert!(!local_uniqueness(&m, Threshold::Relative(1e-10)));
    }

    #[test]
    fn permutation_pair_has_vanishing_a_and_r() {
        let m = perm_cmp(&PermPair::six_state(), &Policy::uniform(2, 6)).unwrap();
        assert!(build_a_blocks(&m).iter().all(|a| a.amax() == 0.0));
        let mut rng = rng_from_seed(3);
        let delta = DMatrix::from_fn(6, 6, |_, _| rng.random::<f64>());
        assert!(remainder(&m, &delta).iter().all(|r| r.amax() < 1e-15));
    }

    #[test]
    fn delta_family_dimensions_and_validity() {
        assert_eq!(delta_family(&random_cmp(3, 3, 1).unwrap(), Threshold::Default).total_dim(), 0);
        let m = random_cmp(4, 2, 7).unwrap();
        let fam = delta_family(&m, Threshold::Default);
        assert_eq!(fam.dims(), vec![2; 4]);
        let z: Vec<Vec<f64>> = fam.basis.iter().map(|b| vec![0.1; b.len()]).collect();
        let w = perturb(&m, &fam.assemble(&z)).unwrap();
        assert!(w.validate(1e-12).is_ok());
        assert!(verify_eqim(&m, &w, 1, EqimMode::Sequence, EQIM_TOL).unwrap().holds());
    }

    #[test]
    fn lowrank_search_not_applicable_at_full_rank() {
        let m = random_cmp(3, 2, 5).unwrap();
        assert!(matches!(
            lowrank_search(&m, 1e-3, 10, Threshold::Relative(1e-10)),
            Err(Error::NotApplicable(_))
        ));
    }

    #[test]
    fn full_rank_dims_are_zero() {
        let m = random_cmp(3, 3, 4).unwrap();
        let rep = solution_dims(&one_step_inverse(&m), &m.policy(), EXACT_DIM_THRESHOLD).unwrap();
        assert_eq!((rep.d_j, rep.d_w, rep.d_b), (0, 0, 0));
        let est = sampling_dim_estimate(&one_step_inverse(&m), &m.policy(), 5, 1e-4, 1e-6, 1).unwrap();
        assert_eq!(est, 0);
    }

    #[test]
    fn few_actions_dims() {
        let m = random_cmp(4, 2, 4).unwrap();
        let rep = solution_dims(&one_step_inverse(&m), &m.policy(), EXACT_DIM_THRESHOLD).unwrap();
        assert_eq!((rep.d_j, rep.d_w), (8, 8));
        assert!(rep.d_b <= rep.d_w);
    }
}
