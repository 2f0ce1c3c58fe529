//! Controlled Markov processes and their forward/inverse model tensors.
//!
//! A [`ControlledMP`] stores the joint tensor `M[a][s][s'] = π(a|s) p(s'|s,a)`.
//! Inverse models divide products of action matrices by powers of the
//! action-marginal `M⁺ = Σ_a M[a]`; entries whose denominator vanishes are 0/0
//! and are carried as an explicit definedness mask rather than a value.
//!
//! States and actions are 0-based throughout.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Mask = DMatrix<bool>;

/// Row-sum tolerance for forward tensors and policies.
pub const NORMALIZATION_TOL: f64 = 1e-12;
/// Action-sum tolerance for inverse models on defined entries.
pub const INVERSE_NORMALIZATION_TOL: f64 = 1e-10;
/// Default entrywise tolerance of [`verify_eqim`].
pub const EQIM_TOL: f64 = 1e-9;

// ---------------------------------------------------------------------------
// Nested-vector conversions shared by every JSON format in the crate.

pub fn matrix_to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|r| m.row(r).iter().copied().collect())
        .collect()
}

/// `serialize_with` helper writing a matrix as nested rows.
pub fn ser_matrix<S: serde::Serializer>(m: &Matrix, serializer: S) -> std::result::Result<S::Ok, S::Error> {
    serde::Serialize::serialize(&matrix_to_rows(m), serializer)
}

pub fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<Matrix> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, |r| r.len());
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(dim_err("ragged matrix rows"));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

pub fn mask_to_rows(m: &Mask) -> Vec<Vec<bool>> {
    (0..m.nrows())
        .map(|r| m.row(r).iter().copied().collect())
        .collect()
}

pub fn mask_from_rows(rows: &[Vec<bool>]) -> Result<Mask> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, |r| r.len());
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(dim_err("ragged mask rows"));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

// ---------------------------------------------------------------------------

/// Joint action/next-state tensor of a controlled Markov process.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlledMP {
    m: Vec<Matrix>,
}

impl ControlledMP {
    /// Validate with the default tolerance [`NORMALIZATION_TOL`].
    pub fn new(m: Vec<Matrix>) -> Result<Self> {
        Self::with_tolerance(m, NORMALIZATION_TOL)
    }

    pub fn with_tolerance(m: Vec<Matrix>, tol: f64) -> Result<Self> {
        let cmp = Self::new_unchecked(m)?;
        cmp.validate(tol)?;
        Ok(cmp)
    }

    /// Shape-checked but otherwise unvalidated tensor. Used for algebraic
    /// objects (least-squares particular solutions, perturbation candidates)
    /// that may carry negative entries.
    pub fn new_unchecked(m: Vec<Matrix>) -> Result<Self> {
        let d = m.first().ok_or_else(|| dim_err("at least one action required"))?.nrows();
        if d == 0 {
            return Err(dim_err("at least one state required"));
        }
        for (a, ma) in m.iter().enumerate() {
            if ma.nrows() != d || ma.ncols() != d {
                return Err(dim_err(format!(
                    "action {a} matrix is {}x{}, expected {d}x{d}",
                    ma.nrows(),
                    ma.ncols()
                )));
            }
        }
        Ok(ControlledMP { m })
    }

    pub fn validate(&self, tol: f64) -> Result<()> {
        let d = self.d();
        for (a, ma) in self.m.iter().enumerate() {
            for s in 0..d {
                for t in 0..d {
                    let v = ma[(s, t)];
                    if v < -tol || !v.is_finite() {
                        return Err(Error::NegativeEntry {
                            value: v,
                            location: format!("M[{a}][{s}][{t}]"),
                        });
                    }
                }
            }
        }
        let plus = self.forward_marginal();
        for s in 0..self.d() {
            let sum: f64 = plus.row(s).sum();
            if (sum - 1.0).abs() > tol {
                return Err(Error::Normalization {
                    location: format!("state {s}"),
                    sum,
                    expected: 1.0,
                });
            }
        }
        Ok(())
    }

    pub fn k(&self) -> usize {
        self.m.len()
    }

    pub fn d(&self) -> usize {
        self.m[0].nrows()
    }

    pub fn action(&self, a: usize) -> &Matrix {
        &self.m[a]
    }

    pub fn actions(&self) -> &[Matrix] {
        &self.m
    }

    pub fn into_actions(self) -> Vec<Matrix> {
        self.m
    }

    /// `M⁺ = Σ_a M[a]`, the action-marginalized transition matrix.
    pub fn forward_marginal(&self) -> Matrix {
        let mut plus = Matrix::zeros(self.d(), self.d());
        for ma in &self.m {
            plus += ma;
        }
        plus
    }

    /// `π(a|s) = Σ_{s'} M[a][s][s']`.
    pub fn policy(&self) -> Policy {
        let table = DMatrix::from_fn(self.k(), self.d(), |a, s| self.m[a].row(s).sum());
        Policy { table }
    }

    /// Support density: fraction of nonzero entries of `M⁺`.
    pub fn support_density(&self) -> f64 {
        let plus = self.forward_marginal();
        plus.iter().filter(|&&x| x != 0.0).count() as f64 / (self.d() * self.d()) as f64
    }
}

#[derive(Serialize, Deserialize)]
struct CmpJson {
    k: usize,
    d: usize,
    #[serde(rename = "M")]
    m: Vec<Vec<Vec<f64>>>,
}

impl Serialize for ControlledMP {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        CmpJson {
            k: self.k(),
            d: self.d(),
            m: self.m.iter().map(matrix_to_rows).collect(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ControlledMP {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let raw = CmpJson::deserialize(deserializer)?;
        let mats = raw
            .m
            .iter()
            .map(|rows| matrix_from_rows(rows))
            .collect::<Result<Vec<_>>>()
            .map_err(serde::de::Error::custom)?;
        let cmp = ControlledMP::new(mats).map_err(serde::de::Error::custom)?;
        if cmp.k() != raw.k || cmp.d() != raw.d {
            return Err(serde::de::Error::custom(format!(
                "declared (k, d) = ({}, {}) but tensor is ({}, {})",
                raw.k,
                raw.d,
                cmp.k(),
                cmp.d()
            )));
        }
        Ok(cmp)
    }
}

// ---------------------------------------------------------------------------

/// Policy table `π(a|s)`, stored as a `k x d` matrix (row = action).
#[derive(Clone, Debug, PartialEq)]
pub struct Policy {
    table: Matrix,
}

impl Policy {
    pub fn new(table: Matrix) -> Result<Self> {
        if table.nrows() == 0 || table.ncols() == 0 {
            return Err(dim_err("policy needs at least one action and state"));
        }
        for a in 0..table.nrows() {
            for s in 0..table.ncols() {
                let v = table[(a, s)];
                if v < 0.0 || !v.is_finite() {
                    return Err(Error::NegativeEntry {
                        value: v,
                        location: format!("pi[{a}][{s}]"),
                    });
                }
            }
        }
        for s in 0..table.ncols() {
            let sum = table.column(s).sum();
            if (sum - 1.0).abs() > NORMALIZATION_TOL {
                return Err(Error::Normalization {
                    location: format!("policy at state {s}"),
                    sum,
                    expected: 1.0,
                });
            }
        }
        Ok(Policy { table })
    }

    pub fn uniform(k: usize, d: usize) -> Self {
        Policy {
            table: DMatrix::from_element(k, d, 1.0 / k as f64),
        }
    }

    pub fn k(&self) -> usize {
        self.table.nrows()
    }

    pub fn d(&self) -> usize {
        self.table.ncols()
    }

    pub fn prob(&self, a: usize, s: usize) -> f64 {
        self.table[(a, s)]
    }

    pub fn table(&self) -> &Matrix {
        &self.table
    }
}

impl Serialize for Policy {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        matrix_to_rows(&self.table).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Policy {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(deserializer)?;
        let table = matrix_from_rows(&rows).map_err(serde::de::Error::custom)?;
        Policy::new(table).map_err(serde::de::Error::custom)
    }
}

// ---------------------------------------------------------------------------

/// Ordered action sequence `a a' ... a^{n-1}`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ActionSeq(Vec<usize>);

impl ActionSeq {
    pub fn new(actions: Vec<usize>, k: usize) -> Result<Self> {
        if let Some(&bad) = actions.iter().find(|&&a| a >= k) {
            return Err(Error::InvalidArgument(format!("action {bad} out of range for k={k}")));
        }
        Ok(ActionSeq(actions))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    /// Lexicographic index among all length-n sequences, first action most significant.
    pub fn index(&self, k: usize) -> usize {
        self.0.iter().fold(0, |acc, &a| acc * k + a)
    }

    pub fn from_index(mut idx: usize, n: usize, k: usize) -> Self {
        let mut v = vec![0; n];
        for slot in v.iter_mut().rev() {
            *slot = idx % k;
            idx /= k;
        }
        ActionSeq(v)
    }

    /// All `k^n` sequences in lexicographic order.
    pub fn all(k: usize, n: usize) -> impl Iterator<Item = ActionSeq> {
        let count = k.pow(n as u32);
        (0..count).map(move |i| ActionSeq::from_index(i, n, k))
    }
}

// ---------------------------------------------------------------------------

/// Whether the action index enumerates whole sequences or only the first action.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InverseKind {
    /// `p(a a' ... a^{n-1} | s, s^n)`, indexed by all `k^n` sequences.
    Sequence,
    /// `p(a | s, s^n)` with later actions marginalized, indexed by `k` actions.
    FirstAction,
}

/// Inverse-model tensor plus the shared 0/0 mask.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskedInverseModel {
    k: usize,
    d: usize,
    order: usize,
    kind: InverseKind,
    values: Vec<Matrix>,
    defined: Mask,
}

impl MaskedInverseModel {
    /// Build from raw parts; masked values are reset to the 0 sentinel.
    pub fn new(
        k: usize,
        order: usize,
        kind: InverseKind,
        mut values: Vec<Matrix>,
        defined: Mask,
    ) -> Result<Self> {
        if order == 0 || k == 0 {
            return Err(Error::InvalidArgument("order and k must be positive".into()));
        }
        let expected = match kind {
            InverseKind::Sequence => k.pow(order as u32),
            InverseKind::FirstAction => k,
        };
        if values.len() != expected {
            return Err(dim_err(format!(
                "{} value slices, expected {expected}",
                values.len()
            )));
        }
        let d = defined.nrows();
        if defined.ncols() != d || d == 0 {
            return Err(dim_err("mask must be square and nonempty"));
        }
        for v in values.iter_mut() {
            if v.shape() != (d, d) {
                return Err(dim_err("value slice shape differs from mask"));
            }
            for s in 0..d {
                for e in 0..d {
                    if !defined[(s, e)] {
                        v[(s, e)] = 0.0;
                    }
                }
            }
        }
        Ok(MaskedInverseModel {
            k,
            d,
            order,
            kind,
            values,
            defined,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn kind(&self) -> InverseKind {
        self.kind
    }

    pub fn values(&self) -> &[Matrix] {
        &self.values
    }

    pub fn slice(&self, index: usize) -> &Matrix {
        &self.values[index]
    }

    pub fn defined(&self) -> &Mask {
        &self.defined
    }

    pub fn is_defined(&self, s: usize, e: usize) -> bool {
        self.defined[(s, e)]
    }

    /// Value or `None` for ⊥.
    pub fn get(&self, index: usize, s: usize, e: usize) -> Option<f64> {
        self.defined[(s, e)].then(|| self.values[index][(s, e)])
    }

    pub fn num_slices(&self) -> usize {
        self.values.len()
    }

    /// Largest deviation of `Σ_index values` from 1 over defined entries.
    pub fn normalization_error(&self) -> f64 {
        let mut worst = 0.0_f64;
        for s in 0..self.d {
            for e in 0..self.d {
                if self.defined[(s, e)] {
                    let sum: f64 = self.values.iter().map(|v| v[(s, e)]).sum();
                    worst = worst.max((sum - 1.0).abs());
                }
            }
        }
        worst
    }

    pub fn check_normalization(&self, tol: f64) -> Result<()> {
        for s in 0..self.d {
            for e in 0..self.d {
                if self.defined[(s, e)] {
                    let sum: f64 = self.values.iter().map(|v| v[(s, e)]).sum();
                    if (sum - 1.0).abs() > tol {
                        return Err(Error::Normalization {
                            location: format!("inverse entry ({s}, {e})"),
                            sum,
                            expected: 1.0,
                        });
                    }
                }
            }
        }
        Ok(())
    }

    /// Marginalize a sequence model down to its first action.
    pub fn first_action_marginal(&self) -> MaskedInverseModel {
        match self.kind {
            InverseKind::FirstAction => self.clone(),
            InverseKind::Sequence => {
                let block = self.values.len() / self.k;
                let values = (0..self.k)
                    .map(|a| {
                        let mut acc = Matrix::zeros(self.d, self.d);
                        for v in &self.values[a * block..(a + 1) * block] {
                            acc += v;
                        }
                        acc
                    })
                    .collect();
                MaskedInverseModel {
                    k: self.k,
                    d: self.d,
                    order: self.order,
                    kind: InverseKind::FirstAction,
                    values,
                    defined: self.defined.clone(),
                }
            }
        }
    }

    /// Same mask and shape, new values (masked entries are re-zeroed).
    pub fn with_values(&self, values: Vec<Matrix>) -> Result<Self> {
        MaskedInverseModel::new(self.k, self.order, self.kind, values, self.defined.clone())
    }
}

#[derive(Serialize, Deserialize)]
struct InverseJson {
    k: usize,
    d: usize,
    order: usize,
    kind: InverseKind,
    #[serde(rename = "M")]
    values: Vec<Vec<Vec<f64>>>,
    defined: Vec<Vec<bool>>,
}

impl Serialize for MaskedInverseModel {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        InverseJson {
            k: self.k,
            d: self.d,
            order: self.order,
            kind: self.kind,
            values: self.values.iter().map(matrix_to_rows).collect(),
            defined: mask_to_rows(&self.defined),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for MaskedInverseModel {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let raw = InverseJson::deserialize(deserializer)?;
        let values = raw
            .values
            .iter()
            .map(|rows| matrix_from_rows(rows))
            .collect::<Result<Vec<_>>>()
            .map_err(serde::de::Error::custom)?;
        let defined = mask_from_rows(&raw.defined).map_err(serde::de::Error::custom)?;
        let model = MaskedInverseModel::new(raw.k, raw.order, raw.kind, values, defined)
            .map_err(serde::de::Error::custom)?;
        if model.d != raw.d {
            return Err(serde::de::Error::custom("declared d does not match mask"));
        }
        Ok(model)
    }
}

/// One `(s, s_end)` matrix of an inverse model for a fixed action sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct InverseSlice {
    pub values: Matrix,
    pub defined: Mask,
}

impl InverseSlice {
    pub fn get(&self, s: usize, e: usize) -> Option<f64> {
        self.defined[(s, e)].then(|| self.values[(s, e)])
    }
}

// ---------------------------------------------------------------------------
// Construction

/// Combine per-action transition matrices `p[a][s][s']` with a policy.
pub fn build_cmp(p: &[Matrix], pi: &Policy) -> Result<ControlledMP> {
    if p.is_empty() {
        return Err(dim_err("no actions"));
    }
    let d = p[0].nrows();
    if pi.k() != p.len() || pi.d() != d {
        return Err(dim_err(format!(
            "policy is {}x{}, transitions are k={} d={d}",
            pi.k(),
            pi.d(),
            p.len()
        )));
    }
    for (a, pa) in p.iter().enumerate() {
        if pa.shape() != (d, d) {
            return Err(dim_err(format!("transition {a} is not {d}x{d}")));
        }
        for s in 0..d {
            for t in 0..d {
                let v = pa[(s, t)];
                if v < 0.0 || !v.is_finite() {
                    return Err(Error::NegativeEntry {
                        value: v,
                        location: format!("p[{a}][{s}][{t}]"),
                    });
                }
            }
            let sum = pa.row(s).sum();
            if (sum - 1.0).abs() > NORMALIZATION_TOL {
                return Err(Error::Normalization {
                    location: format!("p[{a}] row {s}"),
                    sum,
                    expected: 1.0,
                });
            }
        }
    }
    let m = p
        .iter()
        .enumerate()
        .map(|(a, pa)| DMatrix::from_fn(d, d, |s, t| pi.prob(a, s) * pa[(s, t)]))
        .collect();
    ControlledMP::new(m)
}

/// `M⁺` of a CMP (free-function form).
pub fn forward_marginal(m: &ControlledMP) -> Matrix {
    m.forward_marginal()
}

/// Probability of an alternating `a, s', a', s'', ...` trace starting at `s0`.
pub fn dynamics_prob(m: &ControlledMP, s0: usize, trace: &[usize]) -> Result<f64> {
    if trace.len() % 2 != 0 {
        return Err(Error::InvalidArgument(
            "trace must alternate action and state (even length)".into(),
        ));
    }
    check_state(m, s0)?;
    let mut prob = 1.0;
    let mut s = s0;
    for step in trace.chunks(2) {
        let (a, next) = (step[0], step[1]);
        if a >= m.k() {
            return Err(Error::InvalidArgument(format!("action {a} out of range")));
        }
        check_state(m, next)?;
        prob *= m.action(a)[(s, next)];
        s = next;
    }
    Ok(prob)
}

fn check_state(m: &ControlledMP, s: usize) -> Result<()> {
    if s >= m.d() {
        return Err(Error::InvalidArgument(format!("state {s} out of range for d={}", m.d())));
    }
    Ok(())
}

fn product_for(m: &ControlledMP, actions: &[usize]) -> Matrix {
    let mut iter = actions.iter();
    let first = *iter.next().expect("nonempty");
    let mut p = m.action(first).clone();
    for &a in iter {
        p *= m.action(a);
    }
    p
}

/// Distribution over the state reached after executing `actions` from `s0`.
pub fn action_conditional_forward(
    m: &ControlledMP,
    s0: usize,
    actions: &ActionSeq,
) -> Result<DVector<f64>> {
    if actions.is_empty() {
        return Err(Error::InvalidArgument("empty action sequence".into()));
    }
    check_state(m, s0)?;
    if actions.as_slice().iter().any(|&a| a >= m.k()) {
        return Err(Error::InvalidArgument("action out of range".into()));
    }
    let p = product_for(m, actions.as_slice());
    let row = p.row(s0).transpose();
    let total = row.sum();
    if total <= 0.0 {
        return Err(Error::ZeroProbability(format!(
            "actions {:?} from state {s0}",
            actions.as_slice()
        )));
    }
    Ok(row / total)
}

/// Inverse-model computations with a configurable 0/0 threshold.
///
/// An entry is undefined when `|(M⁺)^n| <= zero_threshold`; the default of 0
/// is exact because the entries are sums of products of nonnegative numbers.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Inverter {
    pub zero_threshold: f64,
}

impl Inverter {
    pub fn new(zero_threshold: f64) -> Self {
        Inverter { zero_threshold }
    }

    fn mask(&self, denom: &Matrix) -> Mask {
        denom.map(|x| x.abs() > self.zero_threshold)
    }

    fn divide(num: &Matrix, denom: &Matrix, mask: &Mask) -> Matrix {
        Matrix::from_fn(num.nrows(), num.ncols(), |s, e| {
            if mask[(s, e)] {
                num[(s, e)] / denom[(s, e)]
            } else {
                0.0
            }
        })
    }

    pub fn one_step(&self, m: &ControlledMP) -> MaskedInverseModel {
        self.sequence(m, 1)
    }

    /// Full sequence-indexed model of order `n`: slice `seq.index(k)` holds
    /// `M^{a} ... M^{a^{n-1}} ⊘ (M⁺)^n`.
    pub fn sequence(&self, m: &ControlledMP, n: usize) -> MaskedInverseModel {
        assert!(n >= 1, "order must be positive");
        let plus = m.forward_marginal();
        let denom = matrix_power(&plus, n);
        let mask = self.mask(&denom);
        let values = sequence_products(m.actions(), n)
            .iter()
            .map(|p| Self::divide(p, &denom, &mask))
            .collect();
        MaskedInverseModel {
            k: m.k(),
            d: m.d(),
            order: n,
            kind: InverseKind::Sequence,
            values,
            defined: mask,
        }
    }

    pub fn multi_step(&self, m: &ControlledMP, actions: &ActionSeq) -> Result<InverseSlice> {
        if actions.is_empty() {
            return Err(Error::InvalidArgument("empty action sequence".into()));
        }
        if actions.as_slice().iter().any(|&a| a >= m.k()) {
            return Err(Error::InvalidArgument("action out of range".into()));
        }
        let denom = matrix_power(&m.forward_marginal(), actions.len());
        let mask = self.mask(&denom);
        let num = product_for(m, actions.as_slice());
        Ok(InverseSlice {
            values: Self::divide(&num, &denom, &mask),
            defined: mask,
        })
    }

    /// `B^{a+^{i-1}} = M^a (M⁺)^{i-1} ⊘ (M⁺)^i`.
    pub fn first_action(&self, m: &ControlledMP, horizon: usize) -> Result<MaskedInverseModel> {
        if horizon == 0 {
            return Err(Error::InvalidArgument("horizon must be positive".into()));
        }
        let plus = m.forward_marginal();
        let tail = matrix_power(&plus, horizon - 1);
        let denom = &plus * &tail;
        let mask = self.mask(&denom);
        let values = m
            .actions()
            .iter()
            .map(|ma| Self::divide(&(ma * &tail), &denom, &mask))
            .collect();
        Ok(MaskedInverseModel {
            k: m.k(),
            d: m.d(),
            order: horizon,
            kind: InverseKind::FirstAction,
            values,
            defined: mask,
        })
    }
}

/// `B^a = M^a ⊘ M⁺` with exact 0/0 masking.
pub fn one_step_inverse(m: &ControlledMP) -> MaskedInverseModel {
    Inverter::default().one_step(m)
}

/// Inverse model for one action sequence of length `n >= 1`, i.e.
/// `M^{a} ... M^{a^{n-1}} ⊘ (M⁺)^n`.
pub fn multi_step_inverse(m: &ControlledMP, actions: &ActionSeq) -> Result<InverseSlice> {
    Inverter::default().multi_step(m, actions)
}

/// All `k^n` sequence slices of the order-`n` inverse model.
pub fn sequence_inverse(m: &ControlledMP, n: usize) -> MaskedInverseModel {
    Inverter::default().sequence(m, n)
}

pub fn first_action_inverse(m: &ControlledMP, horizon: usize) -> Result<MaskedInverseModel> {
    Inverter::default().first_action(m, horizon)
}

/// `p(a a' ... | s s' s'' ...)` as a product of one-step inverse entries;
/// `None` if any factor is ⊥.
pub fn path_conditional_inverse(
    m: &ControlledMP,
    states: &[usize],
    actions: &ActionSeq,
) -> Result<Option<f64>> {
    if states.len() != actions.len() + 1 {
        return Err(Error::InvalidArgument(format!(
            "{} states for {} actions; need one more state than actions",
            states.len(),
            actions.len()
        )));
    }
    for &s in states {
        check_state(m, s)?;
    }
    let b = one_step_inverse(m);
    let mut prob = 1.0;
    for (t, &a) in actions.as_slice().iter().enumerate() {
        if a >= m.k() {
            return Err(Error::InvalidArgument("action out of range".into()));
        }
        match b.get(a, states[t], states[t + 1]) {
            Some(v) => prob *= v,
            None => return Ok(None),
        }
    }
    Ok(Some(prob))
}

/// True iff `M^a ⊙ M^b <= tol` entrywise for every pair `a != b`.
pub fn inverse_is_deterministic(m: &ControlledMP, tol: f64) -> bool {
    let k = m.k();
    for a in 0..k {
        for b in (a + 1)..k {
            let prod = m.action(a).component_mul(m.action(b));
            if prod.iter().any(|&x| x > tol) {
                return false;
            }
        }
    }
    true
}

/// `a^n` by repeated multiplication; `a^0 = Id`.
pub fn matrix_power(a: &Matrix, n: usize) -> Matrix {
    let mut p = Matrix::identity(a.nrows(), a.ncols());
    for _ in 0..n {
        p = &p * a;
    }
    p
}

/// `M^{a} M^{a'} ... ` for all `k^n` sequences, lexicographic order.
pub fn sequence_products(actions: &[Matrix], n: usize) -> Vec<Matrix> {
    let mut level: Vec<Matrix> = actions.to_vec();
    for _ in 1..n {
        let mut next = Vec::with_capacity(level.len() * actions.len());
        for p in &level {
            for ma in actions {
                next.push(p * ma);
            }
        }
        level = next;
    }
    level
}

// ---------------------------------------------------------------------------
// Equality of inverse models between two processes

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EqimMode {
    /// Compare every length-i action sequence.
    Sequence,
    /// Compare the first-action marginal of horizon i.
    FirstAction,
}

/// First index where two inverse models disagree.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub actions: Vec<usize>,
    pub s: usize,
    pub s_end: usize,
    pub lhs: Option<f64>,
    pub rhs: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EqimVerdict {
    Holds,
    Fails(Witness),
    MaskMismatch(Witness),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EqimReport {
    pub order: usize,
    pub mode: EqimMode,
    pub verdict: EqimVerdict,
    /// Largest |difference| over jointly defined entries.
    pub max_violation: f64,
    /// Every `(s, s_end)` whose definedness differs between the two models.
    pub mask_mismatches: Vec<(usize, usize)>,
}

impl EqimReport {
    pub fn holds(&self) -> bool {
        matches!(self.verdict, EqimVerdict::Holds)
    }

    /// Values agree on all jointly defined entries (masks may differ).
    pub fn values_agree(&self) -> bool {
        !matches!(self.verdict, EqimVerdict::Fails(_))
    }
}

/// Compare the order-`i` inverse models of `m` and `w`.
///
/// Value violations take precedence over mask mismatches in the verdict.
pub fn verify_eqim(
    m: &ControlledMP,
    w: &ControlledMP,
    i: usize,
    mode: EqimMode,
    tol: f64,
) -> Result<EqimReport> {
    if m.k() != w.k() || m.d() != w.d() {
        return Err(dim_err(format!(
            "(k, d) = ({}, {}) vs ({}, {})",
            m.k(),
            m.d(),
            w.k(),
            w.d()
        )));
    }
    if i == 0 {
        return Err(Error::InvalidArgument("order must be positive".into()));
    }
    let (bm, bw) = match mode {
        EqimMode::Sequence => (sequence_inverse(m, i), sequence_inverse(w, i)),
        EqimMode::FirstAction => (first_action_inverse(m, i)?, first_action_inverse(w, i)?),
    };
    Ok(compare_models(&bm, &bw, mode, tol))
}

pub(crate) fn compare_models(
    bm: &MaskedInverseModel,
    bw: &MaskedInverseModel,
    mode: EqimMode,
    tol: f64,
) -> EqimReport {
    let d = bm.d();
    let k = bm.k();
    let order = bm.order();
    let mut mismatches = Vec::new();
    let mut first_mask: Option<Witness> = None;
    let mut first_fail: Option<Witness> = None;
    let mut max_violation = 0.0_f64;
    let label = |idx: usize| match mode {
        EqimMode::Sequence => ActionSeq::from_index(idx, order, k).as_slice().to_vec(),
        EqimMode::FirstAction => vec![idx],
    };
    for s in 0..d {
        for e in 0..d {
            let (dm, dw) = (bm.is_defined(s, e), bw.is_defined(s, e));
            if dm != dw {
                mismatches.push((s, e));
                if first_mask.is_none() {
                    first_mask = Some(Witness {
                        actions: label(0),
                        s,
                        s_end: e,
                        lhs: bm.get(0, s, e),
                        rhs: bw.get(0, s, e),
                    });
                }
                continue;
            }
            if !dm {
                continue;
            }
            for idx in 0..bm.num_slices() {
                let (x, y) = (bm.slice(idx)[(s, e)], bw.slice(idx)[(s, e)]);
                let diff = (x - y).abs();
                max_violation = max_violation.max(diff);
                if diff > tol && first_fail.is_none() {
                    first_fail = Some(Witness {
                        actions: label(idx),
                        s,
                        s_end: e,
                        lhs: Some(x),
                        rhs: Some(y),
                    });
                }
            }
        }
    }
    let verdict = match (first_fail, first_mask) {
        (Some(w), _) => EqimVerdict::Fails(w),
        (None, Some(w)) => EqimVerdict::MaskMismatch(w),
        (None, None) => EqimVerdict::Holds,
    };
    EqimReport {
        order,
        mode,
        verdict,
        max_violation,
        mask_mismatches: mismatches,
    }
}

/// Residuals of the compact relation `A ⊙ (W W) = (B ⊙ W) W` with `W_{s+} = 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompactResidual {
    pub equation: f64,
    pub row_sum: f64,
}

impl CompactResidual {
    pub fn max(&self) -> f64 {
        self.equation.max(self.row_sum)
    }
}

pub fn verify_compact(a: &Matrix, b: &Matrix, w: &Matrix) -> Result<CompactResidual> {
    let d = w.nrows();
    if w.ncols() != d || a.shape() != (d, d) || b.shape() != (d, d) {
        return Err(dim_err("A, B and W must be square of equal size"));
    }
    let ww = w * w;
    let lhs = a.component_mul(&ww);
    let rhs = b.component_mul(w) * w;
    let equation = (lhs - rhs).amax();
    let row_sum = (0..d).map(|s| (w.row(s).sum() - 1.0).abs()).fold(0.0, f64::max);
    Ok(CompactResidual { equation, row_sum })
}
