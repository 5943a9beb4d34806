//! Simulation designs and the replication harness for comparing the
//! infeasible (IE), interactive-effects (IFE) and dummy-variable (LSDVE)
//! estimators by average mean squared error.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bspline::Basis;
use crate::design::{build_design, DesignMatrices};
use crate::ife::{coefficient_value, fit_ife_design, fit_infeasible_design, normalize_factors, FitOptions};
use crate::lsdv::fit_lsdv_design;
use crate::panel::{validate_panel, PanelData, RawPanel};
use crate::rng::derive_seed;
use crate::selection::{common_bases, select_knots};
use crate::{Error, Result};

/// Error standard deviation of the simulation designs.
pub const DEFAULT_NOISE_SD: f64 = 2.0;

/// Number of true factors in the interactive design.
pub const TRUE_FACTORS: usize = 2;

/// `beta_1(u) = 2 - 5u + 5u^2`, `beta_2(u) = sin(pi u)`.
pub fn beta_true(k: usize, u: f64) -> f64 {
    match k {
        0 => 2.0 - 5.0 * u + 5.0 * u * u,
        1 => (u * std::f64::consts::PI).sin(),
        _ => panic!("the simulation designs have two coefficient functions"),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DgpKind {
    Interactive,
    Additive,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Effects {
    Interactive {
        /// `T x 2`
        f: DMatrix<f64>,
        /// `N x 2`
        lambda: DMatrix<f64>,
    },
    Additive {
        mu: DVector<f64>,
        xi: DVector<f64>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DgpTruth {
    pub effects: Effects,
    /// The drawn errors, `N x T`.
    pub noise: DMatrix<f64>,
    pub noise_sd: f64,
}

impl DgpTruth {
    pub fn beta(&self, k: usize, u: f64) -> f64 {
        beta_true(k, u)
    }

    /// The `N x T` unobserved effect component.
    pub fn effect_matrix(&self) -> DMatrix<f64> {
        match &self.effects {
            Effects::Interactive { f, lambda } => lambda * f.transpose(),
            Effects::Additive { mu, xi } => {
                DMatrix::from_fn(mu.len(), xi.len(), |i, t| mu[i] + xi[t])
            }
        }
    }
}

fn normal_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize, sd: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| {
        let z: f64 = StandardNormal.sample(rng);
        sd * z
    })
}

/// `U_it = omega_it + omega_i,t-1` with `omega ~ Uniform[0, 1/2]`, the
/// initial lag drawn from the same law.
fn index_matrix<R: Rng>(rng: &mut R, n: usize, t: usize) -> DMatrix<f64> {
    let unif = Uniform::new_inclusive(0.0, 0.5).expect("valid bounds");
    let omega = DMatrix::from_fn(n, t + 1, |_, _| unif.sample(rng));
    DMatrix::from_fn(n, t, |i, s| omega[(i, s + 1)] + omega[(i, s)])
}

fn assemble_panel(
    x2: DMatrix<f64>,
    u: DMatrix<f64>,
    effect: &DMatrix<f64>,
    noise: &DMatrix<f64>,
) -> Result<PanelData> {
    let (n, t) = u.shape();
    let y = DMatrix::from_fn(n, t, |i, s| {
        let uu = u[(i, s)];
        beta_true(0, uu) + x2[(i, s)] * beta_true(1, uu) + effect[(i, s)] + noise[(i, s)]
    });
    validate_panel(RawPanel {
        y,
        x: vec![DMatrix::from_element(n, t, 1.0), x2],
        u,
        support: None,
    })
}

fn check_size(n: usize, t: usize) -> Result<()> {
    if n < 2 || t < 2 {
        return Err(Error::TooSmall { n, t });
    }
    Ok(())
}

/// Interactive design: two standard-normal factors and loadings, regressor
/// `X = 1 + lambda'F + iota'lambda + iota'F + eta`, intercept regressor
/// carrying `beta_1`.
pub fn gen_interactive_dgp<R: Rng>(n: usize, t: usize, rng: &mut R) -> Result<(PanelData, DgpTruth)> {
    gen_interactive_dgp_with(n, t, DEFAULT_NOISE_SD, rng)
}

pub fn gen_interactive_dgp_with<R: Rng>(
    n: usize,
    t: usize,
    noise_sd: f64,
    rng: &mut R,
) -> Result<(PanelData, DgpTruth)> {
    check_size(n, t)?;
    let lambda = normal_matrix(rng, n, TRUE_FACTORS, 1.0);
    let f = normal_matrix(rng, t, TRUE_FACTORS, 1.0);
    let u = index_matrix(rng, n, t);
    let eta = normal_matrix(rng, n, t, 1.0);
    let noise = normal_matrix(rng, n, t, noise_sd);
    let common = &lambda * f.transpose();
    let x2 = DMatrix::from_fn(n, t, |i, s| {
        1.0 + common[(i, s)] + lambda.row(i).sum() + f.row(s).sum() + eta[(i, s)]
    });
    let panel = assemble_panel(x2, u, &common, &noise)?;
    Ok((
        panel,
        DgpTruth {
            effects: Effects::Interactive { f, lambda },
            noise,
            noise_sd,
        },
    ))
}

fn sum_zero_effects<R: Rng>(rng: &mut R, len: usize) -> DVector<f64> {
    let mut v = DVector::zeros(len);
    for j in 1..len {
        v[j] = <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng);
    }
    v[0] = -v.rows(1, len - 1).sum();
    v
}

/// Additive design: sum-zero `mu`, `xi`, regressor `X = 2 + 2 mu + 2 xi + eta`.
pub fn gen_additive_dgp<R: Rng>(n: usize, t: usize, rng: &mut R) -> Result<(PanelData, DgpTruth)> {
    gen_additive_dgp_with(n, t, DEFAULT_NOISE_SD, rng)
}

pub fn gen_additive_dgp_with<R: Rng>(
    n: usize,
    t: usize,
    noise_sd: f64,
    rng: &mut R,
) -> Result<(PanelData, DgpTruth)> {
    check_size(n, t)?;
    let mu = sum_zero_effects(rng, n);
    let xi = sum_zero_effects(rng, t);
    let u = index_matrix(rng, n, t);
    let eta = normal_matrix(rng, n, t, 1.0);
    let noise = normal_matrix(rng, n, t, noise_sd);
    let effect = DMatrix::from_fn(n, t, |i, s| mu[i] + xi[s]);
    let x2 = DMatrix::from_fn(n, t, |i, s| 2.0 + 2.0 * mu[i] + 2.0 * xi[s] + eta[(i, s)]);
    let panel = assemble_panel(x2, u, &effect, &noise)?;
    Ok((
        panel,
        DgpTruth {
            effects: Effects::Additive { mu, xi },
            noise,
            noise_sd,
        },
    ))
}

/// `(NT)^-1 sum_it (beta_hat_k(U_it) - beta_k(U_it))^2` for each `k`.
pub fn amse<E, B>(estimated: E, truth: B, panel: &PanelData) -> Result<Vec<f64>>
where
    E: Fn(usize, f64) -> Result<f64>,
    B: Fn(usize, f64) -> f64,
{
    let (n, t) = (panel.n_subjects(), panel.n_periods());
    (0..panel.n_regressors())
        .map(|k| {
            let mut acc = 0.0;
            for i in 0..n {
                for s in 0..t {
                    let u = panel.u()[(i, s)];
                    acc += (estimated(k, u)? - truth(k, u)).powi(2);
                }
            }
            Ok(acc / (n * t) as f64)
        })
        .collect()
}

/// Infeasible estimator for the additive design: the factors `(1, xi_t)`
/// are observed, loadings are free, and the loadings on the constant factor
/// sum to zero as the subject effects do. Without that restriction the level
/// of `beta_1` would be absorbed by the constant factor.
pub fn fit_infeasible_additive(
    design: &DesignMatrices,
    panel: &PanelData,
    xi: &DVector<f64>,
) -> Result<DVector<f64>> {
    let (n, t) = (panel.n_subjects(), panel.n_periods());
    if xi.len() != t {
        return Err(Error::LengthMismatch {
            expected: t,
            found: xi.len(),
        });
    }
    let raw = DMatrix::from_fn(t, 2, |s, c| if c == 0 { 1.0 } else { xi[s] });
    let f = normalize_factors(&raw)?;
    let q = design.n_columns();
    let mut gram = DMatrix::zeros(q, q);
    let mut rhs = DVector::zeros(q);
    let mut c = DVector::zeros(q);
    let mut s_y = 0.0;
    let tf = t as f64;
    for i in 0..n {
        let r_i = design.subject(i);
        let pr = r_i - &f * (f.tr_mul(r_i) / tf);
        let yi = DVector::from_fn(t, |s, _| panel.y()[(i, s)]);
        let py = &yi - &f * (f.tr_mul(&yi) / tf);
        gram += pr.tr_mul(&pr);
        rhs += pr.tr_mul(&py);
        c += r_i.row_sum().transpose();
        s_y += yi.sum();
    }
    let mut kkt = DMatrix::zeros(q + 1, q + 1);
    kkt.view_mut((0, 0), (q, q)).copy_from(&gram);
    kkt.view_mut((0, q), (q, 1)).copy_from(&c);
    kkt.view_mut((q, 0), (1, q)).copy_from(&c.transpose());
    let mut b = DVector::zeros(q + 1);
    b.rows_mut(0, q).copy_from(&rhs);
    b[q] = s_y;
    let lu = kkt.full_piv_lu();
    let sol = lu.solve(&b).ok_or(Error::SingularDesign { rcond: 0.0 })?;
    Ok(sol.rows(0, q).into_owned())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Estimator {
    #[serde(rename = "IE")]
    Ie,
    #[serde(rename = "IFE")]
    Ife,
    #[serde(rename = "LSDVE")]
    Lsdve,
}

impl Estimator {
    pub fn label(&self) -> &'static str {
        match self {
            Estimator::Ie => "IE",
            Estimator::Ife => "IFE",
            Estimator::Lsdve => "LSDVE",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase", deny_unknown_fields)]
pub enum KnotPolicy {
    Fixed { interior: usize },
    Cv { grid: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McSpec {
    pub dgp: DgpKind,
    /// `(N, T)` pairs.
    pub sizes: Vec<(usize, usize)>,
    pub estimators: Vec<Estimator>,
    pub replications: usize,
    pub base_seed: u64,
    #[serde(default = "default_r")]
    pub r: usize,
    #[serde(default = "default_knots")]
    pub knots: KnotPolicy,
    #[serde(default = "default_degree")]
    pub degree: usize,
    #[serde(default = "default_noise")]
    pub noise_sd: f64,
}

fn default_r() -> usize {
    TRUE_FACTORS
}
fn default_knots() -> KnotPolicy {
    KnotPolicy::Fixed { interior: 4 }
}
fn default_degree() -> usize {
    3
}
fn default_noise() -> f64 {
    DEFAULT_NOISE_SD
}

impl McSpec {
    pub fn new(dgp: DgpKind, sizes: Vec<(usize, usize)>, replications: usize, base_seed: u64) -> Self {
        McSpec {
            dgp,
            sizes,
            estimators: vec![Estimator::Ie, Estimator::Ife, Estimator::Lsdve],
            replications,
            base_seed,
            r: default_r(),
            knots: default_knots(),
            degree: default_degree(),
            noise_sd: default_noise(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.sizes.is_empty() {
            return bad("no (N, T) sizes".into());
        }
        if self.estimators.is_empty() {
            return bad("no estimators".into());
        }
        if self.replications == 0 {
            return bad("replications must be >= 1".into());
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return bad(format!("noise_sd must be nonnegative, got {}", self.noise_sd));
        }
        if let KnotPolicy::Cv { grid } = &self.knots {
            if grid.is_empty() {
                return Err(Error::EmptyGrid);
            }
        }
        for &(n, t) in &self.sizes {
            check_size(n, t)?;
            if self.estimators.contains(&Estimator::Ife) && self.r > n.min(t) {
                return bad(format!("r = {} exceeds min(N, T) for ({n}, {t})", self.r));
            }
            if matches!(self.knots, KnotPolicy::Cv { .. }) && n < 3 {
                return bad("cross-validated knots need N >= 3".into());
            }
        }
        Ok(())
    }
}

/// Mean AMSE of one estimator at one `(N, T)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McRow {
    pub n: usize,
    pub t: usize,
    /// One entry per coefficient function.
    pub mean_amse: Vec<f64>,
    /// Monte Carlo standard error of each mean.
    pub se_amse: Vec<f64>,
    pub replications_used: usize,
    pub failures: usize,
    /// Set when more than 2% of replications failed.
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub estimator: Estimator,
    pub dgp: DgpKind,
    pub replications: usize,
    pub base_seed: u64,
    pub rows: Vec<McRow>,
}

/// Seed of replication `rep` at `(n, t)`.
pub fn replication_seed(base_seed: u64, n: usize, t: usize, rep: usize) -> u64 {
    derive_seed(base_seed, &[n as u64, t as u64, rep as u64])
}

/// Simulated panel of one replication.
pub fn replication_data(spec: &McSpec, n: usize, t: usize, rep: usize) -> Result<(PanelData, DgpTruth)> {
    let mut rng = ChaCha8Rng::seed_from_u64(replication_seed(spec.base_seed, n, t, rep));
    match spec.dgp {
        DgpKind::Interactive => gen_interactive_dgp_with(n, t, spec.noise_sd, &mut rng),
        DgpKind::Additive => gen_additive_dgp_with(n, t, spec.noise_sd, &mut rng),
    }
}

fn replication_bases(spec: &McSpec, panel: &PanelData, opts: &FitOptions) -> Result<Vec<Basis>> {
    let interior = match &spec.knots {
        KnotPolicy::Fixed { interior } => *interior,
        KnotPolicy::Cv { grid } => select_knots(panel, spec.degree, grid, spec.r, opts)?.best_l,
    };
    common_bases(panel, spec.degree, interior)
}

fn estimate(
    est: Estimator,
    spec: &McSpec,
    design: &DesignMatrices,
    panel: &PanelData,
    truth: &DgpTruth,
    opts: &FitOptions,
) -> Result<DVector<f64>> {
    match est {
        Estimator::Ife => Ok(fit_ife_design(design, panel, spec.r, opts)?.gamma),
        Estimator::Lsdve => Ok(fit_lsdv_design(design, panel)?.gamma),
        Estimator::Ie => match &truth.effects {
            Effects::Interactive { f, .. } => Ok(fit_infeasible_design(design, panel, f)?.gamma),
            Effects::Additive { xi, .. } => fit_infeasible_additive(design, panel, xi),
        },
    }
}

/// AMSEs of every requested estimator for one replication.
pub fn run_replication(spec: &McSpec, n: usize, t: usize, rep: usize) -> Result<Vec<Result<Vec<f64>>>> {
    let opts = FitOptions::default();
    let (panel, truth) = replication_data(spec, n, t, rep)?;
    let bases = replication_bases(spec, &panel, &opts)?;
    let design = build_design(&panel, &bases)?;
    Ok(spec
        .estimators
        .iter()
        .map(|&est| {
            let gamma = estimate(est, spec, &design, &panel, &truth, &opts)?;
            amse(
                |k, u| coefficient_value(&gamma, &bases, k, u),
                |k, u| truth.beta(k, u),
                &panel,
            )
        })
        .collect())
}

fn summarize(n: usize, t: usize, values: &[&Result<Vec<f64>>], total: usize) -> McRow {
    let ok: Vec<&Vec<f64>> = values.iter().filter_map(|v| v.as_ref().ok()).collect();
    let used = ok.len();
    let p = ok.first().map_or(0, |v| v.len());
    let mut mean = vec![f64::NAN; p];
    let mut se = vec![f64::NAN; p];
    for k in 0..p {
        let m = ok.iter().map(|v| v[k]).sum::<f64>() / used as f64;
        mean[k] = m;
        if used > 1 {
            let var = ok.iter().map(|v| (v[k] - m).powi(2)).sum::<f64>() / (used - 1) as f64;
            se[k] = (var / used as f64).sqrt();
        }
    }
    let failures = total - used;
    McRow {
        n,
        t,
        mean_amse: mean,
        se_amse: se,
        replications_used: used,
        failures,
        flagged: failures * 50 > total,
    }
}

/// Runs every replication at every size; one report per estimator.
///
/// Replications run in parallel with seeds derived from
/// `(base_seed, N, T, replication)` and are reduced in replication order, so
/// the result does not depend on the thread count.
pub fn run_monte_carlo(spec: &McSpec) -> Result<Vec<McReport>> {
    spec.validate()?;
    let mut reports: Vec<McReport> = spec
        .estimators
        .iter()
        .map(|&estimator| McReport {
            estimator,
            dgp: spec.dgp,
            replications: spec.replications,
            base_seed: spec.base_seed,
            rows: Vec::new(),
        })
        .collect();
    for &(n, t) in &spec.sizes {
        let reps: Vec<Result<Vec<Result<Vec<f64>>>>> = (0..spec.replications)
            .into_par_iter()
            .map(|rep| run_replication(spec, n, t, rep))
            .collect();
        for (e, report) in reports.iter_mut().enumerate() {
            let failed_setup = Err(Error::InvalidArgument("replication setup failed".into()));
            let per_rep: Vec<&Result<Vec<f64>>> = reps
                .iter()
                .map(|r| match r {
                    Ok(v) => &v[e],
                    Err(_) => &failed_setup,
                })
                .collect();
            report.rows.push(summarize(n, t, &per_rep, spec.replications));
        }
    }
    Ok(reports)
}
