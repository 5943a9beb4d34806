//! Iterative least-squares estimation under interactive fixed effects.
//!
//! The model is `Y_i = R_i gamma + F lambda_i + eps_i` with the
//! normalization `F'F/T = I_r` and `Lambda'Lambda` diagonal. Given `F`,
//! `gamma` solves the projected normal equations
//! `sum_i R_i' M_F R_i gamma = sum_i R_i' M_F Y_i` with `M_F = I - F F'/T`;
//! given `gamma`, `F` is `sqrt(T)` times the leading eigenvectors of
//! `W = (NT)^-1 sum_i (Y_i - R_i gamma)(Y_i - R_i gamma)'`. The two steps
//! alternate from a principal-components start until the least-squares
//! objective stops decreasing.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::bspline::Basis;
use crate::design::{build_design, DesignMatrices};
use crate::linalg::{fix_signs, lstsq, orthonormal_completion, sym_eigen_desc};
use crate::panel::PanelData;
use crate::{Error, Result};

/// Tolerance on `max |F'F/T - I|` accepted by the projector routines.
pub const NORMALIZATION_TOL: f64 = 1e-6;

/// Objective below this fraction of `||Y||^2` is treated as an exact fit.
const EXACT_FIT: f64 = 1e-26;

/// Eigenvalues at or below this fraction of the largest are treated as zero.
const DEGENERATE_EIGEN: f64 = 1e-12;

/// Common factors `F` (`T x r`) and loadings `Lambda` (`N x r`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorStructure {
    pub f: DMatrix<f64>,
    pub lambda: DMatrix<f64>,
}

impl FactorStructure {
    pub fn r(&self) -> usize {
        self.f.ncols()
    }

    /// `Lambda F'`, the `N x T` common component.
    pub fn common_component(&self) -> DMatrix<f64> {
        &self.lambda * self.f.transpose()
    }
}

/// Starting point of the alternation.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum FitInit {
    /// Principal components of `Y` (gamma = 0).
    #[default]
    PcaOfY,
    /// Principal components of the pooled least-squares residuals.
    GammaFirst,
    /// A caller-supplied factor matrix, renormalized internally.
    Given(DMatrix<f64>),
}

/// How `gamma` is updated inside the alternation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GammaUpdate {
    /// Pooled least squares of `Y - F Lambda'` on `R` given the current
    /// factors and loadings.
    #[default]
    Conditional,
    /// Concentrated update `gamma(F)` with `M_F` projected out.
    Projected,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub max_iterations: usize,
    /// Relative change threshold for both the objective and `gamma`.
    pub tolerance: f64,
    pub init: FitInit,
    pub update: GammaUpdate,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_iterations: 500,
            tolerance: 1e-8,
            init: FitInit::PcaOfY,
            update: GammaUpdate::Conditional,
        }
    }
}

impl FitOptions {
    fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidArgument("max_iterations must be >= 1".into()));
        }
        Ok(())
    }
}

/// Result of an interactive-effects fit.
#[derive(Debug, Clone, PartialEq)]
pub struct IfeFit {
    pub gamma: DVector<f64>,
    pub factors: FactorStructure,
    /// `Y - R gamma - F Lambda'`, `N x T`.
    pub residuals: DMatrix<f64>,
    /// Sum of squared residuals.
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Leading eigenvalues of `W`, descending.
    pub v_nt: Vec<f64>,
    /// Objective after each full `(gamma, F)` update.
    pub objective_path: Vec<f64>,
}

impl IfeFit {
    /// `beta_k(u)` from the fitted spline coefficients.
    pub fn beta(&self, bases: &[Basis], k: usize, u: f64) -> Result<f64> {
        coefficient_value(&self.gamma, bases, k, u)
    }

    /// Fitted mean `R gamma + F Lambda'` given the design it was fitted on.
    pub fn fitted_mean(&self, design: &DesignMatrices) -> DMatrix<f64> {
        design.fitted(&self.gamma) + self.factors.common_component()
    }
}

/// Evaluates coefficient function `k` of a stacked spline coefficient vector.
pub fn coefficient_value(gamma: &DVector<f64>, bases: &[Basis], k: usize, u: f64) -> Result<f64> {
    let start: usize = bases[..k].iter().map(Basis::n_functions).sum();
    let len = bases[k].n_functions();
    if start + len > gamma.len() {
        return Err(Error::LengthMismatch {
            expected: bases.iter().map(Basis::n_functions).sum(),
            found: gamma.len(),
        });
    }
    bases[k].eval_function(&gamma.as_slice()[start..start + len], u)
}

/// `max |F'F/T - I_r|`.
pub fn normalization_deviation(f: &DMatrix<f64>) -> f64 {
    let t = f.nrows() as f64;
    let g = f.tr_mul(f) / t;
    let mut dev = 0.0f64;
    for c in 0..g.ncols() {
        for r in 0..g.nrows() {
            let target = if r == c { 1.0 } else { 0.0 };
            dev = dev.max((g[(r, c)] - target).abs());
        }
    }
    dev
}

fn check_normalized(f: &DMatrix<f64>) -> Result<()> {
    let deviation = normalization_deviation(f);
    if !(deviation <= NORMALIZATION_TOL) {
        return Err(Error::NotNormalized { deviation });
    }
    Ok(())
}

fn project_out_unchecked(f: &DMatrix<f64>, a: &DMatrix<f64>) -> DMatrix<f64> {
    if f.ncols() == 0 {
        return a.clone();
    }
    let t = f.nrows() as f64;
    a - f * (f.tr_mul(a) / t)
}

/// `M_F A = A - F (F'A) / T`, without forming the `T x T` projector.
pub fn project_out(f: &DMatrix<f64>, a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if f.nrows() != a.nrows() {
        return Err(Error::ShapeMismatch {
            what: "project_out",
            expected: format!("{} rows", f.nrows()),
            found: format!("{} rows", a.nrows()),
        });
    }
    check_normalized(f)?;
    Ok(project_out_unchecked(f, a))
}

/// Rescales an arbitrary full-rank `T x r` matrix to an orthonormal basis of
/// the same column space with `F'F/T = I_r`.
pub fn normalize_factors(f: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (t, r) = f.shape();
    if r == 0 {
        return Ok(f.clone());
    }
    if r > t {
        return Err(Error::InvalidArgument(format!("r = {r} exceeds T = {t}")));
    }
    let scale = f.norm().max(f64::MIN_POSITIVE);
    let qr = f.clone().qr();
    let rr = qr.r();
    for j in 0..r {
        if rr[(j, j)].abs() <= 1e-10 * scale {
            return Err(Error::InvalidArgument(
                "factor matrix is rank deficient".into(),
            ));
        }
    }
    Ok(qr.q() * (t as f64).sqrt())
}

/// Least-squares `gamma` after projecting `M_F` out of every subject.
pub(crate) fn solve_projected(
    design: &DesignMatrices,
    y: &DMatrix<f64>,
    f: &DMatrix<f64>,
) -> Result<DVector<f64>> {
    let n = design.n_subjects();
    let t = y.ncols();
    let q = design.n_columns();
    let mut a = DMatrix::zeros(n * t, q);
    let mut z = DVector::zeros(n * t);
    for i in 0..n {
        let ra = project_out_unchecked(f, design.subject(i));
        a.view_mut((i * t, 0), (t, q)).copy_from(&ra);
        let yi = DMatrix::from_fn(t, 1, |s, _| y[(i, s)]);
        let zy = project_out_unchecked(f, &yi);
        z.rows_mut(i * t, t).copy_from(&zy.column(0));
    }
    lstsq(a, z)
}

fn check_dims(design: &DesignMatrices, panel: &PanelData) -> Result<()> {
    if design.n_subjects() != panel.n_subjects()
        || design.subjects().first().map(|m| m.nrows()) != Some(panel.n_periods())
    {
        return Err(Error::ShapeMismatch {
            what: "design",
            expected: format!("{} subjects x {} periods", panel.n_subjects(), panel.n_periods()),
            found: format!(
                "{} subjects x {} periods",
                design.n_subjects(),
                design.subjects().first().map_or(0, |m| m.nrows())
            ),
        });
    }
    Ok(())
}

/// Least squares on the stacked, unprojected design; factored once per fit.
struct PooledSolver {
    qr: nalgebra::linalg::QR<f64, nalgebra::Dyn, nalgebra::Dyn>,
    r: DMatrix<f64>,
}

impl PooledSolver {
    fn new(design: &DesignMatrices) -> Result<Self> {
        let qr = design.stacked().qr();
        let r = qr.r();
        let sv = r.clone().singular_values();
        let (smax, smin) = (sv.max(), sv.min());
        let rcond = if smax > 0.0 { (smin / smax).powi(2) } else { 0.0 };
        if !(rcond >= crate::linalg::RCOND_FLOOR) {
            return Err(Error::SingularDesign { rcond });
        }
        Ok(PooledSolver { qr, r })
    }

    /// `gamma` minimizing `sum_i ||target_i - R_i gamma||^2` (`target` is `N x T`).
    fn solve(&self, target: &DMatrix<f64>) -> Result<DVector<f64>> {
        let (n, t) = target.shape();
        let mut z = DVector::from_fn(n * t, |idx, _| target[(idx / t, idx % t)]);
        self.qr.q_tr_mul(&mut z);
        let q = self.r.ncols();
        self.r
            .solve_upper_triangular(&z.rows(0, q).into_owned())
            .ok_or(Error::SingularDesign { rcond: 0.0 })
    }
}

/// `gamma(F) = (sum R_i' M_F R_i)^-1 sum R_i' M_F Y_i`.
pub fn gamma_given_f(
    design: &DesignMatrices,
    panel: &PanelData,
    f: &DMatrix<f64>,
) -> Result<DVector<f64>> {
    check_dims(design, panel)?;
    if f.nrows() != panel.n_periods() {
        return Err(Error::ShapeMismatch {
            what: "factors",
            expected: format!("{} rows", panel.n_periods()),
            found: format!("{} rows", f.nrows()),
        });
    }
    check_normalized(f)?;
    solve_projected(design, panel.y(), f)
}

/// Leading `r` factors of the `N x T` residual matrix `e` and their eigenvalues.
pub(crate) fn leading_factors(e: &DMatrix<f64>, r: usize) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let (n, t) = e.shape();
    if r == 0 {
        return Ok((DMatrix::zeros(t, 0), Vec::new()));
    }
    if r > n.min(t) {
        return Err(Error::InvalidArgument(format!(
            "r = {r} exceeds min(N, T) = {}",
            n.min(t)
        )));
    }
    let scale = 1.0 / (n as f64 * t as f64);
    let (vals, dirs) = if t <= n {
        let (vals, vecs) = sym_eigen_desc(e.tr_mul(e) * scale)?;
        let cols = (0..r).map(|j| vecs.column(j).into_owned()).collect::<Vec<_>>();
        (vals, cols)
    } else {
        // dual problem: eigenvectors v of E E' map to E' v
        let (vals, vecs) = sym_eigen_desc(e * e.transpose() * scale)?;
        let cols = (0..r).map(|j| e.tr_mul(&vecs.column(j))).collect::<Vec<_>>();
        (vals, cols)
    };
    let top = vals[0].max(0.0);
    let slots = dirs
        .into_iter()
        .zip(&vals)
        .map(|(d, &v)| (top > 0.0 && v > DEGENERATE_EIGEN * top).then_some(d))
        .collect();
    let mut f = orthonormal_completion(slots, t);
    fix_signs(&mut f);
    f *= (t as f64).sqrt();
    let v_nt = vals[..r].iter().map(|v| v.max(0.0)).collect();
    Ok((f, v_nt))
}

fn residual_matrix(design: &DesignMatrices, y: &DMatrix<f64>, gamma: &DVector<f64>) -> DMatrix<f64> {
    y - design.fitted(gamma)
}

/// `F` and `V_NT` given `gamma`.
pub fn factors_given_gamma(
    design: &DesignMatrices,
    panel: &PanelData,
    gamma: &DVector<f64>,
    r: usize,
) -> Result<(DMatrix<f64>, Vec<f64>)> {
    check_dims(design, panel)?;
    if r == 0 {
        return Err(Error::InvalidArgument("factors_given_gamma needs r >= 1".into()));
    }
    leading_factors(&residual_matrix(design, panel.y(), gamma), r)
}

/// `lambda_i = F'(Y_i - R_i gamma)/T` for every subject, as an `N x r` matrix.
pub fn loadings(
    f: &DMatrix<f64>,
    design: &DesignMatrices,
    panel: &PanelData,
    gamma: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    check_dims(design, panel)?;
    check_normalized(f)?;
    let e = residual_matrix(design, panel.y(), gamma);
    Ok(&e * f / panel.n_periods() as f64)
}

/// Principal-components factors of `Y` itself.
pub fn init_factors(panel: &PanelData, r: usize) -> Result<DMatrix<f64>> {
    leading_factors(panel.y(), r).map(|(f, _)| f)
}

struct Assembled {
    residuals: DMatrix<f64>,
    lambda: DMatrix<f64>,
    objective: f64,
}

fn assemble(e: &DMatrix<f64>, f: &DMatrix<f64>) -> Assembled {
    let t = e.ncols() as f64;
    let lambda = e * f / t;
    let residuals = e - &lambda * f.transpose();
    let objective = residuals.norm_squared();
    Assembled {
        residuals,
        lambda,
        objective,
    }
}

/// Alternating estimation of `(gamma, F, Lambda)`.
pub fn fit_ife(panel: &PanelData, bases: &[Basis], r: usize, opts: &FitOptions) -> Result<IfeFit> {
    let design = build_design(panel, bases)?;
    fit_ife_design(&design, panel, r, opts)
}

/// [`fit_ife`] on a prebuilt design.
pub fn fit_ife_design(
    design: &DesignMatrices,
    panel: &PanelData,
    r: usize,
    opts: &FitOptions,
) -> Result<IfeFit> {
    check_dims(design, panel)?;
    opts.validate()?;
    let (n, t) = (panel.n_subjects(), panel.n_periods());
    if r > n.min(t) {
        return Err(Error::InvalidArgument(format!(
            "r = {r} exceeds min(N, T) = {}",
            n.min(t)
        )));
    }
    if design.n_columns() >= n * t {
        return Err(Error::InvalidArgument(format!(
            "q = {} must be below NT = {}",
            design.n_columns(),
            n * t
        )));
    }
    let y = panel.y();
    if r == 0 {
        let empty = DMatrix::zeros(t, 0);
        let gamma = solve_projected(design, y, &empty)?;
        let residuals = residual_matrix(design, y, &gamma);
        let objective = residuals.norm_squared();
        return Ok(IfeFit {
            gamma,
            factors: FactorStructure {
                f: empty,
                lambda: DMatrix::zeros(n, 0),
            },
            residuals,
            objective,
            iterations: 1,
            converged: true,
            v_nt: Vec::new(),
            objective_path: vec![objective],
        });
    }

    // starting factors and the residual they were extracted from
    let (mut f, start_resid) = match &opts.init {
        FitInit::PcaOfY => (leading_factors(y, r)?.0, y.clone()),
        FitInit::GammaFirst => {
            let g0 = solve_projected(design, y, &DMatrix::zeros(t, 0))?;
            let e0 = residual_matrix(design, y, &g0);
            (leading_factors(&e0, r)?.0, e0)
        }
        FitInit::Given(f0) => {
            if f0.shape() != (t, r) {
                return Err(Error::ShapeMismatch {
                    what: "initial factors",
                    expected: format!("{t}x{r}"),
                    found: format!("{}x{}", f0.nrows(), f0.ncols()),
                });
            }
            (normalize_factors(f0)?, y.clone())
        }
    };
    let pooled = match opts.update {
        GammaUpdate::Conditional => Some(PooledSolver::new(design)?),
        GammaUpdate::Projected => None,
    };
    // loadings paired with the current factors
    let mut lambda = &start_resid * &f / t as f64;
    let exact = EXACT_FIT * y.norm_squared().max(f64::MIN_POSITIVE);
    let mut path = Vec::new();
    let mut prev_gamma: Option<DVector<f64>> = None;
    let mut prev_obj = f64::INFINITY;
    let mut converged = false;
    let mut gamma = DVector::zeros(design.n_columns());
    let mut v_nt = Vec::new();
    let mut e = DMatrix::zeros(n, t);
    for _ in 0..opts.max_iterations {
        gamma = match &pooled {
            Some(solver) => solver.solve(&(y - &lambda * f.transpose()))?,
            None => solve_projected(design, y, &f)?,
        };
        e = residual_matrix(design, y, &gamma);
        let (f_new, v) = leading_factors(&e, r)?;
        f = f_new;
        v_nt = v;
        let step = assemble(&e, &f);
        let obj = step.objective;
        lambda = step.lambda;
        path.push(obj);
        let gamma_change = prev_gamma
            .as_ref()
            .map_or(f64::INFINITY, |g| (&gamma - g).norm() / (1.0 + gamma.norm()));
        let rel_decrease = (prev_obj - obj) / prev_obj.max(f64::MIN_POSITIVE);
        if obj <= exact || (rel_decrease < opts.tolerance && gamma_change < opts.tolerance) {
            converged = true;
            break;
        }
        prev_obj = obj;
        prev_gamma = Some(gamma.clone());
    }
    let Assembled {
        residuals,
        lambda,
        objective,
    } = assemble(&e, &f);
    Ok(IfeFit {
        gamma,
        factors: FactorStructure { f, lambda },
        residuals,
        objective,
        iterations: path.len(),
        converged,
        v_nt,
        objective_path: path,
    })
}

/// The infeasible estimator that treats the factors as observed.
///
/// `f_true` is renormalized to `F'F/T = I_r`; since `M_F` depends only on the
/// column space, any full-rank rescaling or rotation gives the same `gamma`.
pub fn fit_infeasible(panel: &PanelData, bases: &[Basis], f_true: &DMatrix<f64>) -> Result<IfeFit> {
    let design = build_design(panel, bases)?;
    fit_infeasible_design(&design, panel, f_true)
}

pub fn fit_infeasible_design(
    design: &DesignMatrices,
    panel: &PanelData,
    f_true: &DMatrix<f64>,
) -> Result<IfeFit> {
    check_dims(design, panel)?;
    if f_true.nrows() != panel.n_periods() {
        return Err(Error::ShapeMismatch {
            what: "factors",
            expected: format!("{} rows", panel.n_periods()),
            found: format!("{} rows", f_true.nrows()),
        });
    }
    let f = normalize_factors(f_true)?;
    let gamma = solve_projected(design, panel.y(), &f)?;
    let e = residual_matrix(design, panel.y(), &gamma);
    let Assembled {
        residuals,
        lambda,
        objective,
    } = assemble(&e, &f);
    let n = panel.n_subjects() as f64;
    let mut v_nt: Vec<f64> = (0..f.ncols())
        .map(|j| lambda.column(j).norm_squared() / n)
        .collect();
    v_nt.sort_by(|a, b| b.total_cmp(a));
    Ok(IfeFit {
        gamma,
        factors: FactorStructure { f, lambda },
        residuals,
        objective,
        iterations: 1,
        converged: true,
        v_nt,
        objective_path: vec![objective],
    })
}
