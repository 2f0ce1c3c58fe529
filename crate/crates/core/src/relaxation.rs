//! Forward-model recovery from the one-, (i−1)- and i-step inverse models by
//! linear relaxation.
//!
//! Writing `U_{s s^i s^j} = V_{s s^i} W⁺_{s^i s^j}` with `V = (W⁺)^{i-1}` turns the
//! order-i equalities into the homogeneous system `Σ_{s^i} A U = 0` with
//! `A^{a^{:i}}_{s s^i s^j} = B^{a^{:i}}_{s s^j} − B^{a^{<i}}_{s s^i} B^{a^i}_{s^i s^j}`.
//! Each `(s, s^j)` slice is solved up to scale; the scales `K_{s s^j}` are fixed by
//! the lifted policy constraints, after which `W⁺ = U / V` and `W^a = B^a ⊙ W⁺`.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use serde::Serialize;

use crate::error::{dim_err, Error, Result};
use crate::linalg::Svd;
use crate::model::{
    matrix_to_rows, ControlledMP, InverseKind, Mask, MaskedInverseModel, Matrix, Policy,
};
use crate::rng::rng_from_seed;

/// Inputs: one-step, (i−1)-step and i-step sequence inverse models plus the policy.
#[derive(Clone, Debug)]
pub struct RelaxationInputs {
    pub b1: MaskedInverseModel,
    pub b_prev: MaskedInverseModel,
    pub b_cur: MaskedInverseModel,
    pub pi: Policy,
}

impl RelaxationInputs {
    pub fn new(
        b1: MaskedInverseModel,
        b_prev: MaskedInverseModel,
        b_cur: MaskedInverseModel,
        pi: Policy,
    ) -> Result<Self> {
        let i = b_cur.order();
        if i < 2 {
            return Err(Error::InvalidArgument("horizon i must be at least 2".into()));
        }
        if b1.order() != 1 || b_prev.order() != i - 1 {
            return Err(Error::InvalidArgument(format!(
                "expected orders 1, {}, {i}; got {}, {}, {i}",
                i - 1,
                b1.order(),
                b_prev.order()
            )));
        }
        for b in [&b1, &b_prev, &b_cur] {
            if b.kind() == InverseKind::FirstAction && b.order() > 1 {
                return Err(Error::InvalidArgument(
                    "sequence-indexed inverse models required".into(),
                ));
            }
            if b.k() != b1.k() || b.d() != b1.d() {
                return Err(dim_err("inverse models differ in (k, d)"));
            }
        }
        if pi.k() != b1.k() || pi.d() != b1.d() {
            return Err(dim_err("policy shape differs from inverse models"));
        }
        Ok(RelaxationInputs {
            b1,
            b_prev,
            b_cur,
            pi,
        })
    }

    /// Exact inverse models of `m` for horizon `i`.
    pub fn from_cmp(m: &ControlledMP, i: usize) -> Result<Self> {
        use crate::model::sequence_inverse;
        RelaxationInputs::new(
            sequence_inverse(m, 1),
            sequence_inverse(m, i.max(2) - 1),
            sequence_inverse(m, i),
            m.policy(),
        )
    }

    pub fn horizon(&self) -> usize {
        self.b_cur.order()
    }

    pub fn k(&self) -> usize {
        self.b1.k()
    }

    pub fn d(&self) -> usize {
        self.b1.d()
    }
}

/// `A` indexed `[s][sequence](s^i, s^j)` with the shared triple mask `[s](s^i, s^j)`.
#[derive(Clone, Debug)]
pub struct ATensor {
    pub values: Vec<Vec<Matrix>>,
    pub defined: Vec<Mask>,
}

impl ATensor {
    /// `k^i x |cols|` slice for fixed `(s, s^j)` over the given `s^i` columns.
    pub fn slice(&self, s: usize, sj: usize, cols: &[usize]) -> Matrix {
        let seqs = &self.values[s];
        DMatrix::from_fn(seqs.len(), cols.len(), |q, c| seqs[q][(cols[c], sj)])
    }

    /// Defined `s^i` for fixed `(s, s^j)`.
    pub fn free(&self, s: usize, sj: usize) -> Vec<usize> {
        let d = self.defined[s].nrows();
        (0..d).filter(|&si| self.defined[s][(si, sj)]).collect()
    }

    /// `max |Σ_{s^i} A U|` over all sequences and `(s, s^j)`; `u[s](s^i, s^j)`.
    pub fn residual(&self, u: &[Matrix]) -> f64 {
        let mut worst = 0.0_f64;
        for (s, seqs) in self.values.iter().enumerate() {
            let d = self.defined[s].nrows();
            for a in seqs {
                for sj in 0..d {
                    let mut acc = 0.0;
                    for si in 0..d {
                        if self.defined[s][(si, sj)] {
                            acc += a[(si, sj)] * u[s][(si, sj)];
                        }
                    }
                    worst = worst.max(acc.abs());
                }
            }
        }
        worst
    }
}

/// Coefficient tensor of the relaxed linear system.
pub fn build_a(inputs: &RelaxationInputs) -> ATensor {
    let (k, d) = (inputs.k(), inputs.d());
    let (b1, bp, bc) = (&inputs.b1, &inputs.b_prev, &inputs.b_cur);
    let mut values = Vec::with_capacity(d);
    let mut defined = Vec::with_capacity(d);
    for s in 0..d {
        let mask = DMatrix::from_fn(d, d, |si, sj| {
            bc.is_defined(s, sj) && bp.is_defined(s, si) && b1.is_defined(si, sj)
        });
        let per_seq = (0..bc.num_slices())
            .map(|q| {
                let (prefix, last) = (q / k, q % k);
                DMatrix::from_fn(d, d, |si, sj| {
                    if mask[(si, sj)] {
                        bc.slice(q)[(s, sj)] - bp.slice(prefix)[(s, si)] * b1.slice(last)[(si, sj)]
                    } else {
                        0.0
                    }
                })
            })
            .collect();
        values.push(per_seq);
        defined.push(mask);
    }
    ATensor { values, defined }
}

/// Which starting states `s` feed the recovery.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StateSelection {
    One(usize),
    All,
    Subset(Vec<usize>),
    /// `count` distinct states drawn uniformly with the given seed.
    Random { count: usize, seed: u64 },
}

impl StateSelection {
    fn resolve(&self, d: usize) -> Result<Vec<usize>> {
        let states = match self {
            StateSelection::One(s) => vec![*s],
            StateSelection::All => (0..d).collect(),
            StateSelection::Subset(v) => {
                let mut v = v.clone();
                v.sort_unstable();
                v.dedup();
                v
            }
            StateSelection::Random { count, seed } => {
                let mut rng = rng_from_seed(*seed);
                let mut v = sample(&mut rng, d, (*count).min(d)).into_vec();
                v.sort_unstable();
                v
            }
        };
        if states.is_empty() || states.iter().any(|&s| s >= d) {
            return Err(Error::InvalidArgument(format!("invalid state selection for d={d}")));
        }
        Ok(states)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RelaxationOptions {
    /// A solution is accepted as nonzero when `σ_min <= null_tol · max(σ_max, 1)`;
    /// `f64::INFINITY` turns every solve into a least-squares fit.
    pub null_tol: f64,
    /// Second-smallest singular value below `multiple_tol · max(σ_max, 1)` flags non-uniqueness.
    pub multiple_tol: f64,
    /// Relative tolerance of the cross-state and `V ≟ (W⁺)^{i-1}` checks; `None` skips them.
    pub cross_check_tol: Option<f64>,
    /// Tolerance for accepting the recovered `W` as a valid process.
    pub validity_tol: f64,
}

impl Default for RelaxationOptions {
    fn default() -> Self {
        RelaxationOptions {
            null_tol: 1e-8,
            multiple_tol: 1e-8,
            cross_check_tol: Some(1e-6),
            validity_tol: 1e-8,
        }
    }
}

impl RelaxationOptions {
    /// Settings for noisy inputs: least-squares everywhere, no exactness checks.
    pub fn least_squares() -> Self {
        RelaxationOptions {
            null_tol: f64::INFINITY,
            multiple_tol: 0.0,
            cross_check_tol: None,
            validity_tol: 1e-8,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Flag {
    Inconsistent,
    MayNotBeUnique,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct StateDiagnostics {
    pub s: usize,
    /// `Û_{s++}` after the per-slice solves.
    pub u_hat_total: f64,
    /// Number of `s^j` whose slice had no nonzero solution.
    pub zero_slices: usize,
    /// Largest numerical null dimension over the `A` slices.
    pub max_a_null_dim: usize,
    /// Ranks of the `A` slices, ordered by `s^j`.
    pub a_ranks: Vec<usize>,
    pub c_rank: usize,
    pub c_unknowns: usize,
    pub c_residual: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Diagnostics {
    pub states: Vec<StateDiagnostics>,
    pub cross_state_deviation: f64,
    pub v_deviation: f64,
    /// Largest negative entry / row-sum error of `W` before projection.
    pub validity_deviation: f64,
    pub projected: bool,
    pub undetermined_rows: Vec<usize>,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct RelaxationVerdict {
    #[serde(serialize_with = "serialize_w")]
    pub w: Option<ControlledMP>,
    pub flags: BTreeSet<Flag>,
    pub diagnostics: Diagnostics,
}

fn serialize_w<S: serde::Serializer>(
    w: &Option<ControlledMP>,
    serializer: S,
) -> std::result::Result<S::Ok, S::Error> {
    match w {
        Some(m) => serializer.serialize_some(&m.actions().iter().map(matrix_to_rows).collect::<Vec<_>>()),
        None => serializer.serialize_none(),
    }
}

impl RelaxationVerdict {
    pub fn is_inconsistent(&self) -> bool {
        self.flags.contains(&Flag::Inconsistent)
    }

    pub fn may_not_be_unique(&self) -> bool {
        self.flags.contains(&Flag::MayNotBeUnique)
    }
}

/// Scale-normalized solution of one homogeneous system.
struct NullSolve {
    vector: Option<DVector<f64>>,
    rank: usize,
    null_dim: usize,
    multiple: bool,
    residual: f64,
}

/// Smallest right singular vector of `a`, sign-fixed and scaled to sum 1.
fn null_solve(a: &Matrix, opts: &RelaxationOptions) -> NullSolve {
    let n = a.ncols();
    let svd = Svd::new(a);
    let smax = svd.sigma_max();
    let vals = &svd.values;
    // Entries are differences of probabilities, so the scale never drops below 1;
    // this keeps roundoff-only slices from counting as full rank.
    let scale = smax.max(1.0);
    let null_dim = vals.iter().filter(|&&x| x <= opts.null_tol * scale).count();
    let multiple = n > 1 && vals[n - 2] <= opts.multiple_tol * scale;
    let rank = n - null_dim;
    if null_dim == 0 {
        return NullSolve {
            vector: None,
            rank,
            null_dim,
            multiple,
            residual: vals[n - 1],
        };
    }
    let mut v: DVector<f64> = svd.v.column(n - 1).into_owned();
    let imax = v.iamax();
    if v[imax] < 0.0 {
        v.neg_mut();
    }
    let total = v.sum();
    if total.abs() < 1e-12 {
        return NullSolve {
            vector: None,
            rank,
            null_dim,
            multiple,
            residual: vals[n - 1],
        };
    }
    v /= total;
    NullSolve {
        residual: (a * &v).amax(),
        vector: Some(v),
        rank,
        null_dim,
        multiple,
    }
}

/// Per-state result: `U` normalized to `U_{s++} = 1`.
struct StateSolve {
    u: Option<Matrix>,
    diag: StateDiagnostics,
    multiple: bool,
}

fn solve_state(inputs: &RelaxationInputs, a: &ATensor, s: usize, opts: &RelaxationOptions) -> StateSolve {
    let (k, d) = (inputs.k(), inputs.d());
    let mut diag = StateDiagnostics { s, ..Default::default() };
    let mut multiple = false;
    let mut u_hat = Matrix::zeros(d, d);
    for sj in 0..d {
        let cols = a.free(s, sj);
        if cols.is_empty() {
            diag.a_ranks.push(0);
            continue;
        }
        let slice = a.slice(s, sj, &cols);
        let sol = null_solve(&slice, opts);
        diag.a_ranks.push(sol.rank);
        diag.max_a_null_dim = diag.max_a_null_dim.max(sol.null_dim);
        multiple |= sol.multiple;
        match sol.vector {
            Some(v) => {
                for (c, &si) in cols.iter().enumerate() {
                    u_hat[(si, sj)] = v[c];
                }
            }
            None => diag.zero_slices += 1,
        }
    }
    diag.u_hat_total = u_hat.sum();
    if diag.u_hat_total.abs() < 1e-12 {
        return StateSolve { u: None, diag, multiple };
    }
    // Lifted constraints: Σ_{s^j} (B^a_{s^i s^j} − π(a|s^i)) Û_{s s^i s^j} K_{s^j} = 0.
    let unknowns: Vec<usize> = (0..d).filter(|&sj| u_hat.column(sj).iter().any(|&x| x != 0.0)).collect();
    diag.c_unknowns = unknowns.len();
    let b1 = &inputs.b1;
    let c = DMatrix::from_fn(k * d, unknowns.len(), |row, col| {
        let (act, si) = (row / d, row % d);
        let sj = unknowns[col];
        if b1.is_defined(si, sj) {
            (b1.slice(act)[(si, sj)] - inputs.pi.prob(act, si)) * u_hat[(si, sj)]
        } else {
            0.0
        }
    });
    let sol = null_solve(&c, opts);
    diag.c_rank = sol.rank;
    diag.c_residual = sol.residual;
    multiple |= sol.multiple;
    let Some(kvec) = sol.vector else {
        return StateSolve { u: None, diag, multiple };
    };
    let mut u = Matrix::zeros(d, d);
    for (col, &sj) in unknowns.iter().enumerate() {
        for si in 0..d {
            u[(si, sj)] = u_hat[(si, sj)] * kvec[col];
        }
    }
    let total = u.sum();
    if total.abs() < 1e-300 {
        return StateSolve { u: None, diag, multiple };
    }
    u /= total;
    StateSolve { u: Some(u), diag, multiple }
}

fn rel_dev(x: f64, y: f64) -> f64 {
    (x - y).abs() / x.abs().max(y.abs()).max(1e-300)
}

/// Recover `W` from the inputs using the selected starting states.
pub fn solve_relaxation(
    inputs: &RelaxationInputs,
    states: &StateSelection,
    opts: &RelaxationOptions,
) -> Result<RelaxationVerdict> {
    let (k, d, i) = (inputs.k(), inputs.d(), inputs.horizon());
    let selected = states.resolve(d)?;
    let mut diagnostics = Diagnostics::default();
    if (k as f64).powi(i as i32) < d as f64 {
        diagnostics
            .warnings
            .push(format!("k^i = {} < d = {d}: the relaxation is not expected to be unique", k.pow(i as u32)));
    }
    let a = build_a(inputs);
    let mut flags = BTreeSet::new();
    let mut us: Vec<(usize, Matrix)> = Vec::new();
    for &s in &selected {
        let st = solve_state(inputs, &a, s, opts);
        if st.multiple {
            flags.insert(Flag::MayNotBeUnique);
        }
        match st.u {
            Some(u) => us.push((s, u)),
            None => {
                flags.insert(Flag::Inconsistent);
            }
        }
        diagnostics.states.push(st.diag);
    }
    if flags.contains(&Flag::Inconsistent) {
        return Ok(RelaxationVerdict {
            w: None,
            flags,
            diagnostics,
        });
    }
    // W⁺_{s^i s^j} = Σ_s U / Σ_s V.
    let mut num = Matrix::zeros(d, d);
    let mut den = DVector::<f64>::zeros(d);
    for (_, u) in &us {
        num += u;
        for si in 0..d {
            den[si] += u.row(si).sum();
        }
    }
    let mut w_plus = Matrix::zeros(d, d);
    for si in 0..d {
        if den[si].abs() > 1e-14 {
            w_plus.row_mut(si).copy_from(&(num.row(si) / den[si]));
        } else {
            diagnostics.undetermined_rows.push(si);
        }
    }
    if !diagnostics.undetermined_rows.is_empty() {
        flags.insert(Flag::MayNotBeUnique);
        return Ok(RelaxationVerdict {
            w: None,
            flags,
            diagnostics,
        });
    }
    if let Some(tol) = opts.cross_check_tol {
        let v_pow = crate::model::matrix_power(&w_plus, i - 1);
        for (s, u) in &us {
            for si in 0..d {
                let v = u.row(si).sum();
                diagnostics.v_deviation = diagnostics.v_deviation.max(rel_dev(v, v_pow[(*s, si)]));
                if v.abs() > 1e-14 {
                    for sj in 0..d {
                        let est = u[(si, sj)] / v;
                        diagnostics.cross_state_deviation =
                            diagnostics.cross_state_deviation.max(rel_dev(est, w_plus[(si, sj)]));
                    }
                }
            }
        }
        if diagnostics.v_deviation > tol || diagnostics.cross_state_deviation > tol {
            flags.insert(Flag::MayNotBeUnique);
        }
    }
    let mut w: Vec<Matrix> = inputs.b1.values().iter().map(|b| b.component_mul(&w_plus)).collect();
    let mut deviation = 0.0_f64;
    for wa in &w {
        deviation = deviation.max(wa.iter().fold(0.0_f64, |acc, &x| acc.max(-x)));
    }
    for s in 0..d {
        let sum: f64 = w.iter().map(|wa| wa.row(s).sum()).sum();
        deviation = deviation.max((sum - 1.0).abs());
    }
    diagnostics.validity_deviation = deviation;
    diagnostics.projected = deviation > opts.validity_tol;
    // Clip and renormalize; for valid W this only removes rounding.
    for wa in w.iter_mut() {
        wa.apply(|x| *x = x.max(0.0));
    }
    for s in 0..d {
        let sum: f64 = w.iter().map(|wa| wa.row(s).sum()).sum();
        if sum <= 0.0 {
            flags.insert(Flag::Inconsistent);
            return Ok(RelaxationVerdict {
                w: None,
                flags,
                diagnostics,
            });
        }
        for wa in w.iter_mut() {
            wa.row_mut(s).scale_mut(1.0 / sum);
        }
    }
    let w = ControlledMP::new(w)?;
    Ok(RelaxationVerdict {
        w: Some(w),
        flags,
        diagnostics,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Consistency {
    ConsistentSoFar,
    Inconsistent,
}

/// Semi-decision: `Inconsistent` is a proof that no process produced the inputs.
pub fn consistency_semidecide(inputs: &RelaxationInputs) -> Result<Consistency> {
    let verdict = solve_relaxation(inputs, &StateSelection::All, &RelaxationOptions::default())?;
    Ok(if verdict.is_inconsistent() {
        Consistency::Inconsistent
    } else {
        Consistency::ConsistentSoFar
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{degenerate_action_independent, random_cmp};
    use crate::model::matrix_power;

    fn max_diff(a: &ControlledMP, b: &ControlledMP) -> f64 {
        a.actions().iter().zip(b.actions()).map(|(x, y)| (x - y).amax()).fold(0.0, f64::max)
    }

    #[test]
    fn true_u_solves_relaxed_system() {
        let m = random_cmp(4, 2, 8).unwrap();
        let inputs = RelaxationInputs::from_cmp(&m, 2).unwrap();
        let a = build_a(&inputs);
        let plus = m.forward_marginal();
        let v = matrix_power(&plus, 1);
        let u: Vec<Matrix> = (0..4)
            .map(|s| DMatrix::from_fn(4, 4, |si, sj| v[(s, si)] * plus[(si, sj)]))
            .collect();
        assert!(a.residual(&u) < 1e-12);
        // Any rescaling per (s, s^j) is still a solution.
        let scaled: Vec<Matrix> = u
            .iter()
            .enumerate()
            .map(|(s, us)| DMatrix::from_fn(4, 4, |si, sj| us[(si, sj)] * (1.0 + s as f64 + 3.0 * sj as f64)))
            .collect();
        assert!(a.residual(&scaled) < 1e-12);
    }

    #[test]
    fn identity_dynamics_give_zero_a() {
        let id = DMatrix::<f64>::identity(2, 2) * 0.5;
        let m = ControlledMP::new(vec![id.clone(), id]).unwrap();
        let a = build_a(&RelaxationInputs::from_cmp(&m, 2).unwrap());
        assert!(a.values.iter().flatten().all(|x| x.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn random_cmp_is_recovered() {
        let m = random_cmp(4, 2, 21).unwrap();
        let inputs = RelaxationInputs::from_cmp(&m, 2).unwrap();
        let v = solve_relaxation(&inputs, &StateSelection::One(0), &RelaxationOptions::default()).unwrap();
        assert!(v.flags.is_empty(), "{:?}", v.flags);
        assert!(max_diff(v.w.as_ref().unwrap(), &m) < 1e-8);
    }

    #[test]
    fn action_independent_pair_is_flagged() {
        let (m, _) = degenerate_action_independent(4, 2, 3).unwrap();
        let inputs = RelaxationInputs::from_cmp(&m, 2).unwrap();
        let v = solve_relaxation(&inputs, &StateSelection::All, &RelaxationOptions::default()).unwrap();
        assert!(v.may_not_be_unique());
    }

    #[test]
    fn rejects_bad_orders() {
        let m = random_cmp(3, 2, 1).unwrap();
        let b1 = crate::model::sequence_inverse(&m, 1);
        assert!(RelaxationInputs::new(b1.clone(), b1.clone(), b1, m.policy()).is_err());
    }
}
