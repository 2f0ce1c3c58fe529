//! Dense SVD helpers: numerical rank, null spaces and minimum-norm solves.
//!
//! Every routine works on a *full* right singular basis: matrices with fewer
//! rows than columns are padded with zero rows before factorization, so the
//! trailing right singular vectors always span the null space.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Singular-value cutoff used to decide numerical rank.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
pub enum Threshold {
    /// `max(rows, cols) * eps * sigma_max`.
    #[default]
    Default,
    /// `factor * sigma_max`.
    Relative(f64),
    /// Fixed cutoff.
    Absolute(f64),
}

impl Threshold {
    pub fn cutoff(&self, sigma_max: f64, rows: usize, cols: usize) -> f64 {
        match *self {
            Threshold::Default => rows.max(cols) as f64 * f64::EPSILON * sigma_max,
            Threshold::Relative(f) => f * sigma_max,
            Threshold::Absolute(t) => t,
        }
    }
}

/// Full SVD with singular values sorted in descending order.
///
/// `values.len() == v.ncols() == a.ncols()`; when `a` has fewer rows than
/// columns the surplus values are exact zeros. `u` has `max(rows, cols)` rows.
#[derive(Clone, Debug)]
pub struct Svd {
    pub values: Vec<f64>,
    pub u: DMatrix<f64>,
    pub v: DMatrix<f64>,
    rows: usize,
    cols: usize,
}

impl Svd {
    pub fn new(a: &DMatrix<f64>) -> Self {
        let (rows, cols) = a.shape();
        if cols == 0 {
            return Svd {
                values: Vec::new(),
                u: DMatrix::zeros(rows, 0),
                v: DMatrix::zeros(0, 0),
                rows,
                cols,
            };
        }
        let padded = if rows < cols {
            let mut p = DMatrix::zeros(cols, cols);
            p.view_mut((0, 0), (rows, cols)).copy_from(a);
            p
        } else {
            a.clone()
        };
        let svd = padded.svd(true, true);
        let sv = svd.singular_values;
        let u = svd.u.expect("u requested");
        let v_t = svd.v_t.expect("v requested");
        let mut order: Vec<usize> = (0..sv.len()).collect();
        order.sort_by(|&x, &y| sv[y].partial_cmp(&sv[x]).unwrap_or(std::cmp::Ordering::Equal));
        let n = sv.len();
        let mut values = Vec::with_capacity(n);
        let mut us = DMatrix::zeros(u.nrows(), n);
        let mut vs = DMatrix::zeros(cols, n);
        for (dst, &src) in order.iter().enumerate() {
            values.push(sv[src]);
            us.set_column(dst, &u.column(src));
            vs.set_column(dst, &v_t.row(src).transpose());
        }
        Svd {
            values,
            u: us,
            v: vs,
            rows,
            cols,
        }
    }

    pub fn sigma_max(&self) -> f64 {
        self.values.first().copied().unwrap_or(0.0)
    }

    pub fn cutoff(&self, threshold: Threshold) -> f64 {
        threshold.cutoff(self.sigma_max(), self.rows, self.cols)
    }

    pub fn rank(&self, threshold: Threshold) -> usize {
        let cut = self.cutoff(threshold);
        self.values.iter().filter(|&&s| s > cut).count()
    }

    /// Orthonormal basis of the numerical null space, one column per vector.
    pub fn null_space(&self, threshold: Threshold) -> DMatrix<f64> {
        let r = self.rank(threshold);
        self.v.columns(r, self.cols - r).into_owned()
    }

    /// Minimum-norm least-squares solution of `a x = b`.
    pub fn solve(&self, b: &DVector<f64>, threshold: Threshold) -> DVector<f64> {
        let cut = self.cutoff(threshold);
        let mut padded = DVector::zeros(self.u.nrows());
        padded.rows_mut(0, b.len()).copy_from(b);
        let mut x = DVector::zeros(self.cols);
        for (i, &s) in self.values.iter().enumerate() {
            if s > cut {
                let coef = self.u.column(i).dot(&padded) / s;
                x.axpy(coef, &self.v.column(i), 1.0);
            }
        }
        x
    }

    /// Moore-Penrose pseudo-inverse with the given cutoff.
    pub fn pinv(&self, threshold: Threshold) -> DMatrix<f64> {
        let cut = self.cutoff(threshold);
        let mut p = DMatrix::zeros(self.cols, self.rows);
        for (i, &s) in self.values.iter().enumerate() {
            if s > cut {
                let ui = self.u.column(i).rows(0, self.rows).into_owned();
                p += (self.v.column(i) * ui.transpose()) / s;
            }
        }
        p
    }
}

pub fn singular_values(a: &DMatrix<f64>) -> Vec<f64> {
    let mut sv: Vec<f64> = if a.nrows() == 0 || a.ncols() == 0 {
        Vec::new()
    } else {
        a.singular_values().iter().copied().collect()
    };
    sv.sort_by(|x, y| y.partial_cmp(x).unwrap_or(std::cmp::Ordering::Equal));
    sv
}

pub fn rank(a: &DMatrix<f64>, threshold: Threshold) -> usize {
    let sv = singular_values(a);
    let cut = threshold.cutoff(sv.first().copied().unwrap_or(0.0), a.nrows(), a.ncols());
    sv.iter().filter(|&&s| s > cut).count()
}

/// Largest absolute entry; 0 for empty matrices.
pub fn max_abs(a: &DMatrix<f64>) -> f64 {
    a.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}
