//! Smoothing-parameter and factor-number selection.
//!
//! Knots are chosen by leave-one-subject-out cross-validation, scoring each
//! held-out series through the fold's own factor-space annihilator. The factor
//! count is chosen by an information criterion built from the trailing
//! eigenvalue mass of the residual covariance.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bspline::{make_basis, Basis, SplineSpec};
use crate::design::build_design;
use crate::ife::{fit_ife, fit_ife_design, FitInit, FitOptions};
use crate::linalg::sym_eigen_desc;
use crate::panel::PanelData;
use crate::{Error, Result};

/// Residual eigenvalue mass at or below this counts as an exact fit.
pub const EXACT_V: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub candidate_l: Vec<usize>,
    pub scores: Vec<f64>,
    pub best_l: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BicResult {
    pub candidate_r: Vec<usize>,
    pub scores: Vec<f64>,
    pub v_values: Vec<f64>,
    /// Candidates whose `V(r)` fell to [`EXACT_V`] or below; their log term
    /// is evaluated at the floor.
    pub degenerate: Vec<bool>,
    /// Per-factor penalty `(N+T) q / (NT) ln(NT/(N+T))`.
    pub penalty: f64,
    pub best_r: usize,
}

/// The same cubic-style basis for each of the `p` coefficients.
pub fn common_bases(panel: &PanelData, degree: usize, interior: usize) -> Result<Vec<Basis>> {
    let spec = SplineSpec::new(degree, interior as isize, panel.support());
    let basis = make_basis(&spec)?;
    Ok(vec![basis; panel.n_regressors()])
}

/// Leave-one-subject-out CV score for `interior` knots per coefficient.
///
/// Every fold is warm-started from the full-sample factors, so folds are
/// independent and can run in parallel.
pub fn cv_score(
    panel: &PanelData,
    degree: usize,
    interior: usize,
    r: usize,
    opts: &FitOptions,
) -> Result<f64> {
    let n = panel.n_subjects();
    if n < 3 {
        return Err(Error::TooSmall {
            n,
            t: panel.n_periods(),
        });
    }
    let bases = common_bases(panel, degree, interior)?;
    let design = build_design(panel, &bases)?;
    let warm = if r > 0 {
        let full = fit_ife_design(&design, panel, r, opts)?;
        FitInit::Given(full.factors.f)
    } else {
        FitInit::PcaOfY
    };
    let fold_opts = FitOptions {
        init: warm,
        ..opts.clone()
    };
    let t = panel.n_periods();
    let parts: Vec<Result<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let sub = panel.without_subject(i)?;
            let sub_design = design.select_subjects((0..n).filter(|&j| j != i));
            let fit = fit_ife_design(&sub_design, &sub, r, &fold_opts)?;
            let pred = design.subject(i) * &fit.gamma;
            let e = DVector::from_fn(t, |s, _| panel.y()[(i, s)] - pred[s]);
            let f = &fit.factors.f;
            let proj = if f.ncols() > 0 {
                &e - f * (f.tr_mul(&e) / t as f64)
            } else {
                e
            };
            Ok(proj.norm_squared())
        })
        .collect();
    let mut total = 0.0;
    for p in parts {
        total += p?;
    }
    Ok(total)
}

/// Evaluates [`cv_score`] over a grid of interior-knot counts.
pub fn select_knots(
    panel: &PanelData,
    degree: usize,
    grid: &[usize],
    r: usize,
    opts: &FitOptions,
) -> Result<CvResult> {
    let mut candidate_l = grid.to_vec();
    candidate_l.sort_unstable();
    candidate_l.dedup();
    if candidate_l.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let scores = candidate_l
        .iter()
        .map(|&l| cv_score(panel, degree, l, r, opts))
        .collect::<Result<Vec<_>>>()?;
    let best = argmin(&scores);
    Ok(CvResult {
        best_l: candidate_l[best],
        candidate_l,
        scores,
    })
}

/// First index of the minimum, so ties go to the smaller candidate.
fn argmin(scores: &[f64]) -> usize {
    let mut best = 0;
    for (j, s) in scores.iter().enumerate() {
        if *s < scores[best] {
            best = j;
        }
    }
    best
}

/// Eigenvalues (descending, clamped at zero) of `sum_i e_i e_i'` for the rows
/// of `e`, using whichever of the two Gram matrices is smaller.
fn residual_spectrum(e: &DMatrix<f64>) -> Result<Vec<f64>> {
    let m = if e.ncols() <= e.nrows() {
        e.tr_mul(e)
    } else {
        e * e.transpose()
    };
    let (vals, _) = sym_eigen_desc(m)?;
    Ok(vals.into_iter().map(|v| v.max(0.0)).collect())
}

/// `V(r) = (NT)^-1 sum_{j > r} mu_j(sum_i (Y_i - R_i g)(Y_i - R_i g)')`
/// where `g` is the `r`-factor estimate.
pub fn v_of_r(panel: &PanelData, bases: &[Basis], r: usize, opts: &FitOptions) -> Result<f64> {
    let fit = fit_ife(panel, bases, r, opts)?;
    let design = build_design(panel, bases)?;
    let e = panel.y() - design.fitted(&fit.gamma);
    let spectrum = residual_spectrum(&e)?;
    let nt = (panel.n_subjects() * panel.n_periods()) as f64;
    Ok(spectrum.iter().skip(r).sum::<f64>() / nt)
}

/// Chooses `r` in `0..=r_max` by
/// `BIC(r) = ln V(r) + r (N+T) q / (NT) ln(NT/(N+T))`.
pub fn bic_factor_number(
    panel: &PanelData,
    bases: &[Basis],
    r_max: usize,
    opts: &FitOptions,
) -> Result<BicResult> {
    let (n, t) = (panel.n_subjects(), panel.n_periods());
    if r_max > n.min(t) {
        return Err(Error::InvalidArgument(format!(
            "r_max = {r_max} exceeds min(N, T) = {}",
            n.min(t)
        )));
    }
    let q: usize = bases.iter().map(Basis::n_functions).sum();
    let (nf, tf) = (n as f64, t as f64);
    let penalty = (nf + tf) * q as f64 / (nf * tf) * (nf * tf / (nf + tf)).ln();
    let candidate_r: Vec<usize> = (0..=r_max).collect();
    let v_values = candidate_r
        .iter()
        .map(|&r| v_of_r(panel, bases, r, opts))
        .collect::<Result<Vec<_>>>()?;
    let degenerate: Vec<bool> = v_values.iter().map(|&v| v <= EXACT_V).collect();
    if degenerate.iter().all(|&d| d) {
        return Err(Error::AllDegenerate {
            smallest_exact_r: 0,
        });
    }
    let scores: Vec<f64> = candidate_r
        .iter()
        .zip(&v_values)
        .map(|(&r, &v)| v.max(EXACT_V).ln() + r as f64 * penalty)
        .collect();
    let best_r = candidate_r[argmin(&scores)];
    Ok(BicResult {
        candidate_r,
        scores,
        v_values,
        degenerate,
        penalty,
        best_r,
    })
}
