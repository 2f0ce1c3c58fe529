//! Reduction of 1-in-3-SAT to the matrix problem
//! `A ⊙ (W W) = (C ⊙ W)(C ⊙ W)`, `[B ⊙ W]_{s+} = 1`, `Π W = W`.
//!
//! Columns of `W` hold `x_1, x̄_1, …, x_n, x̄_n, y_0, …, y_k` and every row is identical.

use std::fmt;

use nalgebra::DMatrix;
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::Matrix;

pub const VERIFY_TOL: f64 = 1e-9;
pub const BOOLEAN_TOL: f64 = 1e-6;
pub const BRUTE_FORCE_MAX_VARS: usize = 24;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct Literal {
    /// 1-based variable index.
    pub var: usize,
    pub negated: bool,
}

impl Literal {
    pub fn pos(var: usize) -> Self {
        Literal { var, negated: false }
    }

    pub fn neg(var: usize) -> Self {
        Literal { var, negated: true }
    }

    pub fn eval(&self, assignment: &[bool]) -> bool {
        assignment[self.var - 1] != self.negated
    }

    fn to_int(self) -> i64 {
        if self.negated {
            -(self.var as i64)
        } else {
            self.var as i64
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Cnf1in3 {
    n: usize,
    clauses: Vec<[Literal; 3]>,
}

impl Cnf1in3 {
    /// Validated formula; clauses repeating an identical literal are rejected since
    /// they cannot be written into a 0/1 `B`.
    pub fn new(n: usize, clauses: Vec<[Literal; 3]>) -> Result<Self> {
        if n == 0 || clauses.is_empty() {
            return Err(Error::InvalidArgument(
                "formula needs at least one variable and one clause".into(),
            ));
        }
        for (i, c) in clauses.iter().enumerate() {
            for l in c {
                if l.var == 0 || l.var > n {
                    return Err(Error::InvalidArgument(format!(
                        "clause {}: variable {} outside 1..={n}",
                        i + 1,
                        l.var
                    )));
                }
            }
            if c[0] == c[1] || c[0] == c[2] || c[1] == c[2] {
                return Err(Error::InvalidArgument(format!(
                    "clause {} repeats an identical literal",
                    i + 1
                )));
            }
        }
        Ok(Cnf1in3 { n, clauses })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.clauses.len()
    }

    pub fn clauses(&self) -> &[[Literal; 3]] {
        &self.clauses
    }

    /// Clauses with a number of true literals other than one.
    pub fn violated_clauses(&self, assignment: &[bool]) -> Vec<usize> {
        self.clauses
            .iter()
            .enumerate()
            .filter(|(_, c)| c.iter().filter(|l| l.eval(assignment)).count() != 1)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn satisfied_by(&self, assignment: &[bool]) -> bool {
        assignment.len() == self.n && self.violated_clauses(assignment).is_empty()
    }

    /// DIMACS-like text: `c` comments, a `p 1in3 n m` header, one clause of three
    /// signed literals per line with an optional trailing `0`.
    pub fn parse(text: &str) -> Result<Self> {
        let (n, clauses) = parse_clauses(text)?;
        Cnf1in3::new(n, clauses).map_err(|e| Error::Parse { line: 0, message: e.to_string() })
    }

    /// Random formula with three distinct literals per clause.
    pub fn random(n: usize, m: usize, rng: &mut impl Rng) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidArgument(
                "three distinct literals need at least two variables".into(),
            ));
        }
        let clauses = (0..m)
            .map(|_| loop {
                let c = [0; 3].map(|_| Literal {
                    var: rng.random_range(1..=n),
                    negated: rng.random_bool(0.5),
                });
                if c[0] != c[1] && c[0] != c[2] && c[1] != c[2] {
                    break c;
                }
            })
            .collect();
        Cnf1in3::new(n, clauses)
    }
}

impl fmt::Display for Cnf1in3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "p 1in3 {} {}", self.n, self.m())?;
        for c in &self.clauses {
            writeln!(f, "{} {} {} 0", c[0].to_int(), c[1].to_int(), c[2].to_int())?;
        }
        Ok(())
    }
}

/// Header and clauses without formula validation, so repeated literals survive.
pub fn parse_clauses(text: &str) -> Result<(usize, Vec<[Literal; 3]>)> {
    let mut header: Option<(usize, usize)> = None;
    let mut clauses = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('c') {
            continue;
        }
        let err = |message: String| Error::Parse { line: line_no, message };
        if line.starts_with('p') {
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() != 4 || parts[1] != "1in3" {
                return Err(err("expected header `p 1in3 <n> <m>`".into()));
            }
            let n = parts[2].parse().map_err(|_| err(format!("bad variable count {:?}", parts[2])))?;
            let m = parts[3].parse().map_err(|_| err(format!("bad clause count {:?}", parts[3])))?;
            if header.replace((n, m)).is_some() {
                return Err(err("duplicate header".into()));
            }
            continue;
        }
        let Some((n, _)) = header else {
            return Err(err("clause before header".into()));
        };
        let mut lits: Vec<i64> = line
            .split_whitespace()
            .map(|t| t.parse::<i64>().map_err(|_| err(format!("bad literal {t:?}"))))
            .collect::<Result<_>>()?;
        if lits.last() == Some(&0) {
            lits.pop();
        }
        if lits.len() != 3 || lits.contains(&0) {
            return Err(err(format!("expected 3 nonzero literals, found {}", lits.len())));
        }
        let clause = [0, 1, 2].map(|i| Literal {
            var: lits[i].unsigned_abs() as usize,
            negated: lits[i] < 0,
        });
        if clause.iter().any(|l| l.var > n) {
            return Err(err(format!("variable index exceeds n = {n}")));
        }
        clauses.push(clause);
    }
    let Some((n, m)) = header else {
        return Err(Error::Parse { line: 0, message: "missing `p 1in3` header".into() });
    };
    if clauses.len() != m {
        return Err(Error::Parse {
            line: 0,
            message: format!("header declares {m} clauses, found {}", clauses.len()),
        });
    }
    Ok((n, clauses))
}

/// `(d, number of dummy columns)` for `n` variables and `m` clauses.
pub fn encoding_dims(n: usize, m: usize) -> (usize, usize) {
    let d = (m + n + 2).max(2 * n + 1);
    let dummies = (m + 2).saturating_sub(n).max(1);
    (d, dummies)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "role", content = "index", rename_all = "snake_case")]
pub enum ColumnRole {
    X(usize),
    XBar(usize),
    Dummy(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "role", content = "index", rename_all = "snake_case")]
pub enum RowRole {
    /// `x_j + x̄_j = 1`.
    Variable(usize),
    /// Exactly one literal of clause `i` (0-based) is true.
    Clause(usize),
    /// `y_0 + … + y_k = 1`.
    DummySum,
    /// `y_0 = 1`; also used to fill rows the construction leaves empty.
    DummyPin,
}

#[derive(Clone, Debug, Serialize)]
pub struct SatEncoding {
    pub d: usize,
    pub n: usize,
    pub dummies: usize,
    #[serde(serialize_with = "crate::model::ser_matrix")]
    pub a: Matrix,
    #[serde(serialize_with = "crate::model::ser_matrix")]
    pub b: Matrix,
    #[serde(serialize_with = "crate::model::ser_matrix")]
    pub c: Matrix,
    #[serde(serialize_with = "crate::model::ser_matrix")]
    pub pi: Matrix,
    pub columns: Vec<ColumnRole>,
    pub rows: Vec<RowRole>,
}

pub fn encode(cnf: &Cnf1in3) -> SatEncoding {
    let (n, m) = (cnf.n(), cnf.m());
    let (d, dummies) = encoding_dims(n, m);
    let x = |j: usize| 2 * (j - 1);
    let mut b = Matrix::zeros(d, d);
    let mut rows = vec![RowRole::DummyPin; d];
    for j in 1..=n {
        b[(j - 1, x(j))] = 1.0;
        b[(j - 1, x(j) + 1)] = 1.0;
        rows[j - 1] = RowRole::Variable(j);
    }
    for (i, clause) in cnf.clauses().iter().enumerate() {
        for l in clause {
            b[(n + i, x(l.var) + usize::from(l.negated))] = 1.0;
        }
        rows[n + i] = RowRole::Clause(i);
    }
    for col in 2 * n..d {
        b[(d - 2, col)] = 1.0;
    }
    rows[d - 2] = RowRole::DummySum;
    for (s, role) in rows.iter().enumerate() {
        if *role == RowRole::DummyPin {
            b[(s, 2 * n)] = 1.0;
        }
    }
    let mut columns = Vec::with_capacity(d);
    for j in 1..=n {
        columns.push(ColumnRole::X(j));
        columns.push(ColumnRole::XBar(j));
    }
    columns.extend((0..dummies).map(ColumnRole::Dummy));
    let pi = DMatrix::from_fn(d, d, |s, t| if t == (s + 1) % d { 1.0 } else { 0.0 });
    SatEncoding {
        d,
        n,
        dummies,
        a: Matrix::identity(d, d) / (n as f64 + 1.0),
        b,
        c: Matrix::identity(d, d),
        pi,
        columns,
        rows,
    }
}

impl SatEncoding {
    /// The `W` whose identical rows hold the assignment, its complement and `y = (1, 0, …)`.
    pub fn assignment_to_w(&self, assignment: &[bool]) -> Result<Matrix> {
        if assignment.len() != self.n {
            return Err(Error::Dimension(format!(
                "assignment has {} values, formula has {} variables",
                assignment.len(),
                self.n
            )));
        }
        let row: Vec<f64> = self
            .columns
            .iter()
            .map(|c| match *c {
                ColumnRole::X(j) => f64::from(u8::from(assignment[j - 1])),
                ColumnRole::XBar(j) => f64::from(u8::from(!assignment[j - 1])),
                ColumnRole::Dummy(t) => f64::from(u8::from(t == 0)),
            })
            .collect();
        Ok(DMatrix::from_fn(self.d, self.d, |_, t| row[t]))
    }

    /// Checks the three equation families in `O(d³)`.
    pub fn verify(&self, w: &Matrix) -> Result<Verification> {
        self.verify_tol(w, VERIFY_TOL)
    }

    pub fn verify_tol(&self, w: &Matrix, tol: f64) -> Result<Verification> {
        if w.shape() != (self.d, self.d) {
            return Err(Error::Dimension(format!(
                "W is {}x{}, encoding has d = {}",
                w.nrows(),
                w.ncols(),
                self.d
            )));
        }
        let cw = self.c.component_mul(w);
        let quadratic = (self.a.component_mul(&(w * w)) - &cw * &cw).amax();
        let row_sums = self.b.component_mul(w).column_sum();
        let violated_rows: Vec<(usize, RowRole)> = (0..self.d)
            .filter(|&s| (row_sums[s] - 1.0).abs() > tol)
            .map(|s| (s, self.rows[s]))
            .collect();
        let linear = row_sums.iter().map(|r| (r - 1.0).abs()).fold(0.0, f64::max);
        let cyclic = (&self.pi * w - w).amax();
        Ok(Verification {
            ok: quadratic <= tol && linear <= tol && cyclic <= tol,
            quadratic_residual: quadratic,
            linear_residual: linear,
            cyclic_residual: cyclic,
            violated_rows,
        })
    }

    /// Rounds `W` to 0/1 and decodes the assignment if the rounded matrix verifies.
    pub fn decode_if_boolean(&self, w: &Matrix) -> Result<Decoded> {
        let dev = w.iter().map(|&x| x.abs().min((x - 1.0).abs())).fold(0.0, f64::max);
        if dev > BOOLEAN_TOL {
            return Ok(Decoded::NonBoolean { max_deviation: dev });
        }
        let rounded = w.map(f64::round);
        let check = self.verify(&rounded)?;
        if !check.ok {
            return Ok(Decoded::Rejected(check));
        }
        let assignment = (0..self.n).map(|j| rounded[(0, 2 * j)] == 1.0).collect();
        Ok(Decoded::Assignment(assignment))
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Verification {
    pub ok: bool,
    pub quadratic_residual: f64,
    pub linear_residual: f64,
    pub cyclic_residual: f64,
    pub violated_rows: Vec<(usize, RowRole)>,
}

impl Verification {
    /// 0-based indices of clauses whose row constraint fails.
    pub fn violated_clauses(&self) -> Vec<usize> {
        self.violated_rows
            .iter()
            .filter_map(|(_, r)| match r {
                RowRole::Clause(i) => Some(*i),
                _ => None,
            })
            .collect()
    }
}

#[derive(Clone, Debug, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Decoded {
    Assignment(Vec<bool>),
    NonBoolean { max_deviation: f64 },
    Rejected(Verification),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BruteForce {
    Satisfiable(Vec<bool>),
    Unsatisfiable,
}

/// Exhaustive search in ascending binary order (`x_1` is the least significant bit).
/// Works on raw clauses so repeated literals are allowed here.
pub fn brute_force_clauses(n: usize, clauses: &[[Literal; 3]]) -> Result<BruteForce> {
    if n > BRUTE_FORCE_MAX_VARS {
        return Err(Error::TooLarge(format!(
            "{n} variables exceeds the brute-force bound {BRUTE_FORCE_MAX_VARS}"
        )));
    }
    let mut assignment = vec![false; n];
    for bits in 0u32..(1u32 << n) {
        for (j, v) in assignment.iter_mut().enumerate() {
            *v = bits >> j & 1 == 1;
        }
        if clauses
            .iter()
            .all(|c| c.iter().filter(|l| l.eval(&assignment)).count() == 1)
        {
            return Ok(BruteForce::Satisfiable(assignment));
        }
    }
    Ok(BruteForce::Unsatisfiable)
}

pub fn brute_force(cnf: &Cnf1in3) -> Result<BruteForce> {
    brute_force_clauses(cnf.n(), cnf.clauses())
}

/// Some assignment-shaped `W` passes [`SatEncoding::verify`].
pub fn exists_verifying_assignment(enc: &SatEncoding) -> Result<Option<Vec<bool>>> {
    let n = enc.n;
    if n > BRUTE_FORCE_MAX_VARS {
        return Err(Error::TooLarge(format!("{n} variables")));
    }
    for bits in 0u32..(1u32 << n) {
        let a: Vec<bool> = (0..n).map(|j| bits >> j & 1 == 1).collect();
        if enc.verify(&enc.assignment_to_w(&a)?)?.ok {
            return Ok(Some(a));
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    fn single() -> Cnf1in3 {
        Cnf1in3::new(3, vec![[Literal::pos(1), Literal::pos(2), Literal::pos(3)]]).unwrap()
    }

    #[test]
    fn dims_formulas() {
        assert_eq!(encoding_dims(3, 1), (7, 1));
        assert_eq!(encoding_dims(1, 1), (4, 2));
        let enc = encode(&single());
        assert_eq!((enc.d, enc.dummies), (7, 1));
    }

    #[test]
    fn structure() {
        let enc = encode(&single());
        assert_eq!(&enc.pi * enc.pi.transpose(), Matrix::identity(7, 7));
        assert_eq!(enc.c, Matrix::identity(7, 7));
        assert!(enc.b.iter().all(|&x| x == 0.0 || x == 1.0));
        assert!((0..7).all(|s| enc.b.row(s).sum() >= 1.0));
        assert_eq!(enc.columns.len(), 7);
    }

    #[test]
    fn assignment_rows() {
        let enc = encode(&single());
        let w = enc.assignment_to_w(&[false, false, false]).unwrap();
        assert_eq!(w.row(3).iter().copied().collect::<Vec<_>>(), vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 1.0]);
        for s in 0..7 {
            assert_eq!(w.row(s).sum(), 4.0);
        }
    }

    #[test]
    fn verify_satisfying_and_not() {
        let enc = encode(&single());
        assert!(enc.verify(&enc.assignment_to_w(&[true, false, false]).unwrap()).unwrap().ok);
        let bad = enc.verify(&enc.assignment_to_w(&[true, true, false]).unwrap()).unwrap();
        assert!(!bad.ok);
        assert_eq!(bad.violated_clauses(), vec![0]);
        let zero = enc.verify(&Matrix::zeros(7, 7)).unwrap();
        assert!(!zero.ok && zero.linear_residual == 1.0);
    }

    #[test]
    fn decode() {
        let enc = encode(&single());
        let mut w = enc.assignment_to_w(&[false, true, false]).unwrap();
        w[(0, 0)] += 1e-8;
        assert!(matches!(enc.decode_if_boolean(&w).unwrap(), Decoded::Assignment(a) if a == vec![false, true, false]));
        w[(0, 0)] = 0.5;
        assert!(matches!(enc.decode_if_boolean(&w).unwrap(), Decoded::NonBoolean { .. }));
    }

    #[test]
    fn brute_force_examples() {
        assert_eq!(brute_force(&single()).unwrap(), BruteForce::Satisfiable(vec![true, false, false]));
        let triple = [Literal::pos(1); 3];
        assert_eq!(brute_force_clauses(1, &[triple]).unwrap(), BruteForce::Unsatisfiable);
        assert!(Cnf1in3::new(1, vec![triple]).is_err());
        let mixed = Cnf1in3::new(2, vec![[Literal::pos(1), Literal::neg(1), Literal::pos(2)]]).unwrap();
        assert!(matches!(brute_force(&mixed).unwrap(), BruteForce::Satisfiable(a) if !a[1]));
        assert!(matches!(brute_force_clauses(25, &[]), Err(Error::TooLarge(_))));
    }

    #[test]
    fn parse_roundtrip() {
        let text = "c example\np 1in3 3 2\n1 -2 3 0\n-1 2 -3\n";
        let cnf = Cnf1in3::parse(text).unwrap();
        assert_eq!(cnf.m(), 2);
        assert_eq!(cnf.clauses()[0][1], Literal::neg(2));
        assert_eq!(Cnf1in3::parse(&cnf.to_string()).unwrap(), cnf);
        assert!(matches!(Cnf1in3::parse("p 1in3 2 1\n1 2\n"), Err(Error::Parse { line: 2, .. })));
        assert!(Cnf1in3::parse("p 1in3 2 1\n1 1 2\n").is_err());
        assert!(Cnf1in3::parse("1 2 3\n").is_err());
    }

    #[test]
    fn padded_rows_for_few_clauses() {
        // n = 4, m = 1: d = 9 > n + m + 2, so rows are filled with the y_0 pin.
        let mut rng = rng_from_seed(1);
        let cnf = Cnf1in3::random(4, 1, &mut rng).unwrap();
        let enc = encode(&cnf);
        assert_eq!((enc.d, enc.dummies), (9, 1));
        let sat = brute_force(&cnf).unwrap();
        let BruteForce::Satisfiable(a) = sat else { panic!("single clause is satisfiable") };
        assert!(enc.verify(&enc.assignment_to_w(&a).unwrap()).unwrap().ok);
    }
}
