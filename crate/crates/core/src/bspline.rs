//! B-spline bases on clamped, equally spaced knot vectors.

use serde::{Deserialize, Serialize};

use crate::panel::Support;
use crate::{Error, Result};

/// Boundary tolerance for evaluation just outside the support.
const BOUNDARY_TOL: f64 = 1e-12;

/// Degree and interior-knot count for one coefficient function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplineSpec {
    pub degree: usize,
    /// Signed so that negative requests can be reported rather than wrapped.
    pub interior_knots: isize,
    pub support: Support,
}

impl SplineSpec {
    pub fn new(degree: usize, interior_knots: isize, support: Support) -> Self {
        SplineSpec {
            degree,
            interior_knots,
            support,
        }
    }

    /// `L = l + m + 1`.
    pub fn n_functions(&self) -> Option<usize> {
        usize::try_from(self.interior_knots)
            .ok()
            .map(|l| l + self.degree + 1)
    }
}

/// A B-spline basis `B_1(u), ..., B_L(u)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Basis {
    knots: Vec<f64>,
    degree: usize,
    support: Support,
}

/// Builds the clamped basis with equally spaced interior knots.
pub fn make_basis(spec: &SplineSpec) -> Result<Basis> {
    let l = usize::try_from(spec.interior_knots).map_err(|_| {
        Error::InvalidSpec(format!(
            "interior knot count must be nonnegative, got {}",
            spec.interior_knots
        ))
    })?;
    let s = spec.support;
    if !(s.min.is_finite() && s.max.is_finite() && s.min < s.max) {
        return Err(Error::InvalidSpec(format!(
            "degenerate support [{}, {}]",
            s.min, s.max
        )));
    }
    let m = spec.degree;
    let mut knots = Vec::with_capacity(l + 2 * m + 2);
    knots.extend(std::iter::repeat_n(s.min, m + 1));
    knots.extend((1..=l).map(|j| s.min + s.width() * j as f64 / (l + 1) as f64));
    knots.extend(std::iter::repeat_n(s.max, m + 1));
    Ok(Basis {
        knots,
        degree: m,
        support: s,
    })
}

impl Basis {
    /// Rebuilds a basis from a stored knot vector (e.g. a fit summary).
    pub fn from_knots(knots: Vec<f64>, degree: usize) -> Result<Basis> {
        if knots.len() < 2 * degree + 2 {
            return Err(Error::InvalidSpec(format!(
                "{} knots too few for degree {degree}",
                knots.len()
            )));
        }
        if knots.windows(2).any(|w| !(w[0] <= w[1])) {
            return Err(Error::InvalidSpec("knot vector not nondecreasing".into()));
        }
        let support = Support::new(knots[degree], knots[knots.len() - degree - 1])
            .map_err(|e| Error::InvalidSpec(e.to_string()))?;
        Ok(Basis {
            knots,
            degree,
            support,
        })
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn support(&self) -> Support {
        self.support
    }

    pub fn n_functions(&self) -> usize {
        self.knots.len() - self.degree - 1
    }

    /// Index of the knot span containing `u`; `u = max` goes to the last span.
    fn span(&self, u: f64) -> usize {
        let last = self.n_functions() - 1;
        if u >= self.knots[last + 1] {
            return last;
        }
        // largest s in [m, last] with knots[s] <= u
        let (mut lo, mut hi) = (self.degree, last);
        while lo < hi {
            let mid = (lo + hi).div_ceil(2);
            if self.knots[mid] <= u {
                lo = mid;
            } else {
                hi = mid - 1;
            }
        }
        lo
    }

    fn clamp(&self, u: f64) -> Result<f64> {
        let s = self.support;
        let tol = BOUNDARY_TOL * s.width().max(1.0);
        if !(u >= s.min - tol && u <= s.max + tol) {
            return Err(Error::OutOfSupport {
                u,
                min: s.min,
                max: s.max,
            });
        }
        Ok(u.clamp(s.min, s.max))
    }

    /// The `m + 1` possibly nonzero basis values at `u` and the index of the
    /// first of them. Writes into `vals`, which must have length `m + 1`.
    pub fn eval_local(&self, u: f64, vals: &mut [f64]) -> Result<usize> {
        let m = self.degree;
        debug_assert_eq!(vals.len(), m + 1);
        let u = self.clamp(u)?;
        let s = self.span(u);
        let k = &self.knots;
        // Cox-de Boor recursion in triangular form
        let mut left = vec![0.0; m + 1];
        let mut right = vec![0.0; m + 1];
        vals[0] = 1.0;
        for j in 1..=m {
            left[j] = u - k[s + 1 - j];
            right[j] = k[s + j] - u;
            let mut saved = 0.0;
            for r in 0..j {
                let temp = vals[r] / (right[r + 1] + left[j - r]);
                vals[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            vals[j] = saved;
        }
        Ok(s - m)
    }

    /// All `L` basis values at `u`.
    pub fn eval(&self, u: f64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.n_functions()];
        let mut local = vec![0.0; self.degree + 1];
        let start = self.eval_local(u, &mut local)?;
        out[start..start + local.len()].copy_from_slice(&local);
        Ok(out)
    }

    /// `sum_l gamma_l B_l(u)`.
    pub fn eval_function(&self, gamma: &[f64], u: f64) -> Result<f64> {
        if gamma.len() != self.n_functions() {
            return Err(Error::LengthMismatch {
                expected: self.n_functions(),
                found: gamma.len(),
            });
        }
        let mut local = vec![0.0; self.degree + 1];
        let start = self.eval_local(u, &mut local)?;
        Ok(local
            .iter()
            .zip(&gamma[start..])
            .map(|(b, g)| b * g)
            .sum())
    }
}

/// Free-function form of [`Basis::eval`].
pub fn eval_basis(basis: &Basis, u: f64) -> Result<Vec<f64>> {
    basis.eval(u)
}

/// Free-function form of [`Basis::eval_function`].
pub fn eval_function(basis: &Basis, gamma: &[f64], u: f64) -> Result<f64> {
    basis.eval_function(gamma, u)
}
