//! Regression design `R_it = (X_it' B(U_it))'` built from regressors and bases.
//!
//! Columns are coefficient-major: the `L_1` columns of coefficient 1, then the
//! `L_2` columns of coefficient 2, and so on, matching the layout of `gamma`.

use nalgebra::{DMatrix, DVector};

use crate::bspline::Basis;
use crate::panel::PanelData;
use crate::{Error, Result};

/// Per-subject `T x q` design matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrices {
    subjects: Vec<DMatrix<f64>>,
    offsets: Vec<usize>,
}

fn block_offsets(bases: &[Basis]) -> Vec<usize> {
    let mut offsets = Vec::with_capacity(bases.len() + 1);
    offsets.push(0);
    for b in bases {
        offsets.push(offsets.last().unwrap() + b.n_functions());
    }
    offsets
}

fn fill_row(x: &[f64], u: f64, bases: &[Basis], offsets: &[usize], out: &mut [f64]) -> Result<()> {
    for (k, basis) in bases.iter().enumerate() {
        let mut local = vec![0.0; basis.degree() + 1];
        let start = basis.eval_local(u, &mut local)?;
        let base = offsets[k] + start;
        for (j, v) in local.iter().enumerate() {
            out[base + j] = x[k] * v;
        }
    }
    Ok(())
}

/// One design row: block `k` is `x[k] * B_k(u)`.
pub fn build_row(x: &[f64], u: f64, bases: &[Basis]) -> Result<DVector<f64>> {
    if x.len() != bases.len() {
        return Err(Error::LengthMismatch {
            expected: bases.len(),
            found: x.len(),
        });
    }
    let offsets = block_offsets(bases);
    let mut row = DVector::zeros(*offsets.last().unwrap());
    fill_row(x, u, bases, &offsets, row.as_mut_slice())?;
    Ok(row)
}

/// Builds `R_i` for every subject.
pub fn build_design(panel: &PanelData, bases: &[Basis]) -> Result<DesignMatrices> {
    let p = panel.n_regressors();
    if bases.len() != p {
        return Err(Error::LengthMismatch {
            expected: p,
            found: bases.len(),
        });
    }
    let offsets = block_offsets(bases);
    let q = *offsets.last().unwrap();
    let (n, t) = (panel.n_subjects(), panel.n_periods());
    let mut row = vec![0.0; q];
    let mut x = vec![0.0; p];
    let mut subjects = Vec::with_capacity(n);
    for i in 0..n {
        let mut r_i = DMatrix::zeros(t, q);
        for s in 0..t {
            for (k, xk) in x.iter_mut().enumerate() {
                *xk = panel.x(k)[(i, s)];
            }
            row.iter_mut().for_each(|v| *v = 0.0);
            fill_row(&x, panel.u()[(i, s)], bases, &offsets, &mut row)?;
            for (j, v) in row.iter().enumerate() {
                r_i[(s, j)] = *v;
            }
        }
        subjects.push(r_i);
    }
    Ok(DesignMatrices { subjects, offsets })
}

impl DesignMatrices {
    pub fn n_subjects(&self) -> usize {
        self.subjects.len()
    }

    pub fn n_columns(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    /// `R_i`, a `T x q` matrix.
    pub fn subject(&self, i: usize) -> &DMatrix<f64> {
        &self.subjects[i]
    }

    pub fn subjects(&self) -> &[DMatrix<f64>] {
        &self.subjects
    }

    /// Column range of coefficient `k`.
    pub fn block(&self, k: usize) -> std::ops::Range<usize> {
        self.offsets[k]..self.offsets[k + 1]
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    /// All rows stacked subject-major into an `NT x q` matrix.
    pub fn stacked(&self) -> DMatrix<f64> {
        let t = self.subjects.first().map_or(0, |m| m.nrows());
        let q = self.n_columns();
        let mut out = DMatrix::zeros(self.subjects.len() * t, q);
        for (i, r_i) in self.subjects.iter().enumerate() {
            out.view_mut((i * t, 0), (t, q)).copy_from(r_i);
        }
        out
    }

    /// `R_i gamma` for every subject, as an `N x T` matrix.
    pub fn fitted(&self, gamma: &DVector<f64>) -> DMatrix<f64> {
        let t = self.subjects.first().map_or(0, |m| m.nrows());
        let mut out = DMatrix::zeros(self.subjects.len(), t);
        for (i, r_i) in self.subjects.iter().enumerate() {
            let f = r_i * gamma;
            for s in 0..t {
                out[(i, s)] = f[s];
            }
        }
        out
    }

    /// The design restricted to a subset of subjects.
    pub fn select_subjects(&self, keep: impl Iterator<Item = usize>) -> DesignMatrices {
        DesignMatrices {
            subjects: keep.map(|i| self.subjects[i].clone()).collect(),
            offsets: self.offsets.clone(),
        }
    }
}
