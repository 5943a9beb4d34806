//! Balanced panel datasets.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Closed interval on which the index variable `U` lives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Support {
    pub min: f64,
    pub max: f64,
}

impl Support {
    pub fn new(min: f64, max: f64) -> Result<Self> {
        if !(min.is_finite() && max.is_finite() && min < max) {
            return Err(Error::InvalidSupport { min, max });
        }
        Ok(Support { min, max })
    }

    pub fn width(&self) -> f64 {
        self.max - self.min
    }

    pub fn contains(&self, u: f64) -> bool {
        u >= self.min && u <= self.max
    }

    /// `n` equally spaced points from `min` to `max` inclusive.
    pub fn grid(&self, n: usize) -> Vec<f64> {
        match n {
            0 => Vec::new(),
            1 => vec![self.min],
            _ => (0..n)
                .map(|j| {
                    if j == n - 1 {
                        self.max
                    } else {
                        self.min + self.width() * j as f64 / (n - 1) as f64
                    }
                })
                .collect(),
        }
    }
}

/// Unvalidated panel arrays as supplied by a caller.
///
/// `y` and `u` are `N x T`; `x` holds one `N x T` matrix per regressor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawPanel {
    pub y: DMatrix<f64>,
    pub x: Vec<DMatrix<f64>>,
    pub u: DMatrix<f64>,
    pub support: Option<Support>,
}

/// A validated balanced panel `(Y_it, X_it, U_it)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelData {
    y: DMatrix<f64>,
    x: Vec<DMatrix<f64>>,
    u: DMatrix<f64>,
    support: Support,
}

fn check_finite(what: &'static str, m: &DMatrix<f64>) -> Result<()> {
    for c in 0..m.ncols() {
        for r in 0..m.nrows() {
            if !m[(r, c)].is_finite() {
                return Err(Error::NonFinite { what, row: r, col: c });
            }
        }
    }
    Ok(())
}

fn check_shape(what: &'static str, m: &DMatrix<f64>, n: usize, t: usize) -> Result<()> {
    if m.shape() != (n, t) {
        return Err(Error::ShapeMismatch {
            what,
            expected: format!("{n}x{t}"),
            found: format!("{}x{}", m.nrows(), m.ncols()),
        });
    }
    Ok(())
}

/// Validates raw arrays into a [`PanelData`].
///
/// When no support is declared it is taken as the empirical `[min U, max U]`.
pub fn validate_panel(raw: RawPanel) -> Result<PanelData> {
    let (n, t) = raw.y.shape();
    check_shape("u", &raw.u, n, t)?;
    for xk in &raw.x {
        check_shape("x", xk, n, t)?;
    }
    if raw.x.is_empty() {
        return Err(Error::ShapeMismatch {
            what: "x",
            expected: "at least one regressor".into(),
            found: "0".into(),
        });
    }
    if n < 2 || t < 2 {
        return Err(Error::TooSmall { n, t });
    }
    check_finite("y", &raw.y)?;
    check_finite("u", &raw.u)?;
    for xk in &raw.x {
        check_finite("x", xk)?;
    }
    let support = match raw.support {
        Some(s) => {
            let s = Support::new(s.min, s.max)?;
            for c in 0..t {
                for r in 0..n {
                    let v = raw.u[(r, c)];
                    if !s.contains(v) {
                        return Err(Error::SupportViolation {
                            value: v,
                            row: r,
                            col: c,
                            min: s.min,
                            max: s.max,
                        });
                    }
                }
            }
            s
        }
        None => Support::new(raw.u.min(), raw.u.max())?,
    };
    Ok(PanelData {
        y: raw.y,
        x: raw.x,
        u: raw.u,
        support,
    })
}

impl PanelData {
    pub fn n_subjects(&self) -> usize {
        self.y.nrows()
    }

    pub fn n_periods(&self) -> usize {
        self.y.ncols()
    }

    pub fn n_regressors(&self) -> usize {
        self.x.len()
    }

    pub fn y(&self) -> &DMatrix<f64> {
        &self.y
    }

    /// Regressor `k` as an `N x T` matrix.
    pub fn x(&self, k: usize) -> &DMatrix<f64> {
        &self.x[k]
    }

    pub fn u(&self) -> &DMatrix<f64> {
        &self.u
    }

    pub fn support(&self) -> Support {
        self.support
    }

    /// Regressor vector `X_it`.
    pub fn x_at(&self, i: usize, t: usize) -> Vec<f64> {
        self.x.iter().map(|xk| xk[(i, t)]).collect()
    }

    pub fn to_raw(&self) -> RawPanel {
        RawPanel {
            y: self.y.clone(),
            x: self.x.clone(),
            u: self.u.clone(),
            support: Some(self.support),
        }
    }

    /// Same regressors and index, new response. The support is kept.
    pub fn with_response(&self, y: DMatrix<f64>) -> Result<PanelData> {
        check_shape("y", &y, self.n_subjects(), self.n_periods())?;
        check_finite("y", &y)?;
        Ok(PanelData {
            y,
            x: self.x.clone(),
            u: self.u.clone(),
            support: self.support,
        })
    }

    /// The panel with subject `i` removed; the support is kept so that
    /// spline bases built on the full panel stay valid.
    pub fn without_subject(&self, i: usize) -> Result<PanelData> {
        let n = self.n_subjects();
        if i >= n {
            return Err(Error::InvalidArgument(format!(
                "subject {i} out of range for N={n}"
            )));
        }
        if n <= 2 {
            return Err(Error::TooSmall {
                n: n - 1,
                t: self.n_periods(),
            });
        }
        Ok(PanelData {
            y: self.y.clone().remove_row(i),
            x: self.x.iter().map(|m| m.clone().remove_row(i)).collect(),
            u: self.u.clone().remove_row(i),
            support: self.support,
        })
    }
}
