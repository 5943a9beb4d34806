//! Small dense helpers shared by the estimators.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::{Error, Result};

/// Gram reciprocal-condition floor below which a design counts as singular.
pub(crate) const RCOND_FLOOR: f64 = 1e-12;

/// Least squares `min ||a x - b||` by Householder QR.
///
/// The reciprocal condition of `a'a` is estimated from the singular values of
/// the triangular factor and must exceed [`RCOND_FLOOR`].
pub(crate) fn lstsq(a: DMatrix<f64>, b: DVector<f64>) -> Result<DVector<f64>> {
    let (rows, q) = a.shape();
    if rows < q || q == 0 {
        return Err(Error::SingularDesign { rcond: 0.0 });
    }
    let qr = a.qr();
    let r = qr.r();
    let sv = r.clone().singular_values();
    let smax = sv.max();
    let smin = sv.min();
    let rcond = if smax > 0.0 { (smin / smax).powi(2) } else { 0.0 };
    if !(rcond >= RCOND_FLOOR) {
        return Err(Error::SingularDesign { rcond });
    }
    let mut qtb = b;
    qr.q_tr_mul(&mut qtb);
    let rhs = qtb.rows(0, q).into_owned();
    r.solve_upper_triangular(&rhs)
        .ok_or(Error::SingularDesign { rcond })
}

/// Eigen decomposition of a symmetric matrix, eigenvalues descending.
pub(crate) fn sym_eigen_desc(m: DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let sym = (&m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::try_new(sym, f64::EPSILON, 100_000).ok_or(Error::EigenFailure)?;
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let vals = order.iter().map(|&j| eig.eigenvalues[j]).collect();
    let vecs = DMatrix::from_fn(m.nrows(), order.len(), |r, c| eig.eigenvectors[(r, order[c])]);
    Ok((vals, vecs))
}

/// Orthonormalizes the supplied columns in order (modified Gram-Schmidt) and
/// fills `None` slots with canonical directions orthogonal to everything
/// already placed.
pub(crate) fn orthonormal_completion(cols: Vec<Option<DVector<f64>>>, dim: usize) -> DMatrix<f64> {
    let mut placed: Vec<DVector<f64>> = Vec::with_capacity(cols.len());
    let mut next_canonical = 0usize;
    let orth = |v: &mut DVector<f64>, placed: &[DVector<f64>]| {
        for _ in 0..2 {
            for p in placed {
                let c = p.dot(v);
                v.axpy(-c, p, 1.0);
            }
        }
    };
    for col in cols {
        let mut candidate = col.and_then(|mut v| {
            orth(&mut v, &placed);
            let nrm = v.norm();
            (nrm > 1e-10).then(|| v / nrm)
        });
        while candidate.is_none() {
            let mut e = DVector::zeros(dim);
            e[next_canonical] = 1.0;
            next_canonical += 1;
            orth(&mut e, &placed);
            let nrm = e.norm();
            if nrm > 1e-8 {
                candidate = Some(e / nrm);
            }
        }
        placed.push(candidate.unwrap());
    }
    let mut out = DMatrix::zeros(dim, placed.len());
    for (j, v) in placed.iter().enumerate() {
        out.set_column(j, v);
    }
    out
}

/// Flips column signs so each column's largest-magnitude entry is positive.
pub(crate) fn fix_signs(m: &mut DMatrix<f64>) {
    for mut col in m.column_iter_mut() {
        let mut best = 0usize;
        for (r, v) in col.iter().enumerate() {
            if v.abs() > col[best].abs() {
                best = r;
            }
        }
        if col.len() > 0 && col[best] < 0.0 {
            col.neg_mut();
        }
    }
}
