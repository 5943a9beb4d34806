//! Least-squares dummy-variable estimation under additive fixed effects
//! `Y_it = X_it' beta(U_it) + mu_i + xi_t + eps_it` with `sum mu = sum xi = 0`.
//!
//! The effects are removed with the projector
//! `Gamma = I - (1/T) I_N (x) 1 1' - (1/N) 1 1' (x) I_T + (2/NT) 1 1'`,
//! applied as a streaming double demeaning.

use nalgebra::{DMatrix, DVector};

use crate::bspline::Basis;
use crate::design::{build_design, DesignMatrices};
use crate::ife::coefficient_value;
use crate::linalg::lstsq;
use crate::panel::PanelData;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LsdvFit {
    pub gamma: DVector<f64>,
    /// Subject effects, summing to zero.
    pub mu: DVector<f64>,
    /// Period effects, summing to zero.
    pub xi: DVector<f64>,
    pub residuals: DMatrix<f64>,
}

impl LsdvFit {
    pub fn beta(&self, bases: &[Basis], k: usize, u: f64) -> Result<f64> {
        coefficient_value(&self.gamma, bases, k, u)
    }

    /// `R gamma + mu_i + xi_t`.
    pub fn fitted_mean(&self, design: &DesignMatrices) -> DMatrix<f64> {
        let mut m = design.fitted(&self.gamma);
        for i in 0..m.nrows() {
            for t in 0..m.ncols() {
                m[(i, t)] += self.mu[i] + self.xi[t];
            }
        }
        m
    }
}

/// Row means, column means and grand mean of an `N x T` block stored
/// subject-major in `v`.
fn means(v: &[f64], n: usize, t: usize) -> (Vec<f64>, Vec<f64>, f64) {
    let mut row = vec![0.0; n];
    let mut col = vec![0.0; t];
    for i in 0..n {
        for s in 0..t {
            let x = v[i * t + s];
            row[i] += x;
            col[s] += x;
        }
    }
    let grand = row.iter().sum::<f64>() / (n * t) as f64;
    row.iter_mut().for_each(|r| *r /= t as f64);
    col.iter_mut().for_each(|c| *c /= n as f64);
    (row, col, grand)
}

/// `Gamma v` for a subject-major vector of length `N T`.
pub fn gamma_projector_apply(v: &[f64], n: usize, t: usize) -> Result<Vec<f64>> {
    if v.len() != n * t {
        return Err(Error::LengthMismatch {
            expected: n * t,
            found: v.len(),
        });
    }
    let (row, col, grand) = means(v, n, t);
    Ok((0..n * t)
        .map(|idx| {
            let (i, s) = (idx / t, idx % t);
            v[idx] - row[i] - col[s] + 2.0 * grand
        })
        .collect())
}

pub fn fit_lsdv(panel: &PanelData, bases: &[Basis]) -> Result<LsdvFit> {
    let design = build_design(panel, bases)?;
    fit_lsdv_design(&design, panel)
}

/// [`fit_lsdv`] on a prebuilt design.
pub fn fit_lsdv_design(design: &DesignMatrices, panel: &PanelData) -> Result<LsdvFit> {
    let (n, t) = (panel.n_subjects(), panel.n_periods());
    if design.n_subjects() != n {
        return Err(Error::ShapeMismatch {
            what: "design",
            expected: format!("{n} subjects"),
            found: format!("{} subjects", design.n_subjects()),
        });
    }
    let q = design.n_columns();
    let stacked = design.stacked();
    let mut a = DMatrix::zeros(n * t, q);
    for j in 0..q {
        let col = gamma_projector_apply(stacked.column(j).as_slice(), n, t)?;
        a.set_column(j, &DVector::from_vec(col));
    }
    // subject-major copy of Y
    let y: Vec<f64> = (0..n * t).map(|idx| panel.y()[(idx / t, idx % t)]).collect();
    let z = DVector::from_vec(gamma_projector_apply(&y, n, t)?);
    let gamma = lstsq(a, z)?;

    let fitted = design.fitted(&gamma);
    let e: Vec<f64> = (0..n * t)
        .map(|idx| y[idx] - fitted[(idx / t, idx % t)])
        .collect();
    // LS on the sum-zero dummies: xi_t = e_.t - e_.., mu_i = e_i. - e_..
    let (row, col, grand) = means(&e, n, t);
    let xi = DVector::from_iterator(t, col.iter().map(|c| c - grand));
    let mu = DVector::from_iterator(n, row.iter().map(|r| r - grand));
    let residuals = DMatrix::from_fn(n, t, |i, s| e[i * t + s] - mu[i] - xi[s]);
    Ok(LsdvFit {
        gamma,
        mu,
        xi,
        residuals,
    })
}
