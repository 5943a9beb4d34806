//! The `fit`, `simulate` and `select` subcommands.

use std::path::{Path, PathBuf};

use serde::Serialize;
use vcpanel::bootstrap::{bootstrap_bands, bootstrap_bands_lsdv};
use vcpanel::ife::{coefficient_value, fit_ife};
use vcpanel::io::load_long_csv;
use vcpanel::lsdv::fit_lsdv;
use vcpanel::montecarlo::run_monte_carlo;
use vcpanel::selection::{bic_factor_number, common_bases, select_knots};
use vcpanel::{Basis, BicResult, BootstrapBands, CvResult, McReport, McSpec, PanelData, Support};

use crate::config::{BootstrapSettings, FactorChoice, KnotChoice, ModelKind, RunConfig, SimConfig};
use crate::error::{CliError, CliResult};
use crate::output::{
    curves_csv, json_artifact, mc_table_csv, write_all, Artifact, MC_REPORT_FILE, SCHEMA_VERSION,
    SELECTION_FILE, SUMMARY_FILE,
};

pub const THREADS_ENV: &str = "VCPANEL_THREADS";

/// Command-line values that replace the matching config keys.
#[derive(Debug, Clone, Default)]
pub struct RunOverrides {
    pub model: Option<ModelKind>,
    pub r: Option<usize>,
    pub r_max: Option<usize>,
    pub interior_knots: Option<usize>,
    pub knot_grid: Option<Vec<usize>>,
    pub degree: Option<usize>,
    pub seed: Option<u64>,
    pub grid_size: Option<usize>,
    pub bootstrap_draws: Option<usize>,
    pub alpha: Option<f64>,
    pub block_constant: Option<f64>,
    pub no_bootstrap: bool,
    pub threads: Option<usize>,
}

impl RunOverrides {
    pub fn apply(&self, c: &mut RunConfig) {
        if let Some(m) = self.model {
            c.model = m;
        }
        if let Some(r) = self.r {
            c.factors = FactorChoice::Fixed { r };
        }
        if let Some(r_max) = self.r_max {
            c.factors = FactorChoice::Bic { r_max };
        }
        if let Some(l) = self.interior_knots {
            c.knots = KnotChoice::Fixed { interior: l };
        }
        if let Some(g) = &self.knot_grid {
            c.knots = KnotChoice::Cv { grid: g.clone() };
        }
        if let Some(d) = self.degree {
            c.degree = d;
        }
        if let Some(s) = self.seed {
            c.seed = s;
        }
        if let Some(g) = self.grid_size {
            c.grid_size = g;
        }
        if self.bootstrap_draws.is_some() || self.alpha.is_some() || self.block_constant.is_some() {
            let b = c.bootstrap.get_or_insert_with(BootstrapSettings::default);
            if let Some(v) = self.bootstrap_draws {
                b.draws = v;
            }
            if let Some(v) = self.alpha {
                b.alpha = v;
            }
            if let Some(v) = self.block_constant {
                b.block_constant = v;
            }
        }
        if self.no_bootstrap {
            c.bootstrap = None;
        }
        if self.threads.is_some() {
            c.threads = self.threads;
        }
    }
}

/// Flag, then config, then the environment, then every available core.
pub fn resolve_threads(configured: Option<usize>) -> CliResult<usize> {
    if let Some(n) = configured {
        return Ok(n);
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(CliError::Invalid(format!("{THREADS_ENV} must be a positive integer, got {v:?}"))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

fn with_threads<T: Send>(n: usize, job: impl FnOnce() -> CliResult<T> + Send) -> CliResult<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .map_err(|e| CliError::Invalid(format!("cannot start {n} worker threads: {e}")))?;
    pool.install(job)
}

fn load(data: &Path, config: &RunConfig) -> CliResult<PanelData> {
    load_long_csv(data, &config.schema).map_err(|source| match source {
        vcpanel::Error::Io(_) => CliError::Data {
            path: data.to_path_buf(),
            source,
        },
        other => CliError::Core(other),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct Selection {
    pub interior_knots: usize,
    pub r: Option<usize>,
    pub knot_selection: Option<CvResult>,
    pub factor_selection: Option<BicResult>,
}

/// Knots first (at the fixed `r`, or `cv_factors` when `r` is selected),
/// then the factor count at the chosen knots.
fn choose(panel: &PanelData, config: &RunConfig) -> CliResult<Selection> {
    let opts = config.fit.options();
    let fixed_r = match config.factors {
        FactorChoice::Fixed { r } => Some(r),
        FactorChoice::Bic { .. } => None,
    };
    let (interior_knots, knot_selection) = match &config.knots {
        KnotChoice::Fixed { interior } => (*interior, None),
        KnotChoice::Cv { grid } => {
            let r_cv = match config.model {
                ModelKind::Ife => fixed_r.unwrap_or(config.cv_factors),
                // additive effects are a two-factor structure
                ModelKind::Lsdv => config.cv_factors,
            };
            let cv = select_knots(panel, config.degree, grid, r_cv, &opts)?;
            (cv.best_l, Some(cv))
        }
    };
    let (r, factor_selection) = match (config.model, &config.factors) {
        (ModelKind::Lsdv, _) => (None, None),
        (ModelKind::Ife, FactorChoice::Fixed { r }) => (Some(*r), None),
        (ModelKind::Ife, FactorChoice::Bic { r_max }) => {
            let bases = common_bases(panel, config.degree, interior_knots)?;
            let bic = bic_factor_number(panel, &bases, *r_max, &opts)?;
            (Some(bic.best_r), Some(bic))
        }
    };
    Ok(Selection {
        interior_knots,
        r,
        knot_selection,
        factor_selection,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct BootstrapSummary {
    pub draws: usize,
    pub alpha: f64,
    pub block_constant: f64,
    pub block_len: usize,
    pub z: f64,
    pub draws_used: usize,
    pub draws_failed: usize,
    pub draws_nonconverged: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct FitSummary {
    pub schema_version: u32,
    pub model: ModelKind,
    pub seed: u64,
    pub n_subjects: usize,
    pub n_periods: usize,
    pub n_regressors: usize,
    pub degree: usize,
    pub interior_knots: usize,
    pub support: Support,
    /// Knot vector shared by every coefficient function.
    pub knots: Vec<f64>,
    pub r: Option<usize>,
    pub gamma: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub objective: f64,
    pub v_nt: Vec<f64>,
    pub mu: Option<Vec<f64>>,
    pub xi: Option<Vec<f64>>,
    pub knot_selection: Option<CvResult>,
    pub factor_selection: Option<BicResult>,
    pub grid_size: usize,
    pub bootstrap: Option<BootstrapSummary>,
}

/// Evaluates every coefficient function of `gamma` on `grid`.
pub fn evaluate_curves(gamma: &[f64], bases: &[Basis], grid: &[f64]) -> CliResult<Vec<Vec<f64>>> {
    let g = nalgebra::DVector::from_column_slice(gamma);
    let mut out = Vec::with_capacity(bases.len());
    for k in 0..bases.len() {
        let curve = grid
            .iter()
            .map(|&u| coefficient_value(&g, bases, k, u))
            .collect::<vcpanel::Result<Vec<f64>>>()?;
        out.push(curve);
    }
    Ok(out)
}

fn fit_artifacts(panel: &PanelData, config: &RunConfig) -> CliResult<Vec<Artifact>> {
    let sel = choose(panel, config)?;
    let bases = common_bases(panel, config.degree, sel.interior_knots)?;
    let grid = panel.support().grid(config.grid_size);
    let opts = config.fit.options();
    let boot_cfg = config.bootstrap.as_ref().map(|b| config.bootstrap_config(b));

    struct Fitted {
        gamma: Vec<f64>,
        converged: bool,
        iterations: usize,
        objective: f64,
        v_nt: Vec<f64>,
        mu: Option<Vec<f64>>,
        xi: Option<Vec<f64>>,
        bands: Option<BootstrapBands>,
    }
    let fitted = match (config.model, sel.r) {
        (ModelKind::Ife, Some(r)) => {
            let fit = fit_ife(panel, &bases, r, &opts)?;
            let bands = match &boot_cfg {
                Some(b) => Some(bootstrap_bands(panel, &fit, &bases, b, &grid, &opts)?),
                None => None,
            };
            Fitted {
                gamma: fit.gamma.as_slice().to_vec(),
                converged: fit.converged,
                iterations: fit.iterations,
                objective: fit.objective,
                v_nt: fit.v_nt,
                mu: None,
                xi: None,
                bands,
            }
        }
        _ => {
            let fit = fit_lsdv(panel, &bases)?;
            let bands = match &boot_cfg {
                Some(b) => Some(bootstrap_bands_lsdv(panel, &fit, &bases, b, &grid)?),
                None => None,
            };
            Fitted {
                gamma: fit.gamma.as_slice().to_vec(),
                converged: true,
                iterations: 1,
                objective: fit.residuals.norm_squared(),
                v_nt: Vec::new(),
                mu: Some(fit.mu.as_slice().to_vec()),
                xi: Some(fit.xi.as_slice().to_vec()),
                bands,
            }
        }
    };

    let point = evaluate_curves(&fitted.gamma, &bases, &grid)?;
    let curves = curves_csv(&grid, &point, fitted.bands.as_ref());
    let bootstrap = fitted.bands.as_ref().zip(config.bootstrap.as_ref()).map(|(b, s)| BootstrapSummary {
        draws: s.draws,
        alpha: s.alpha,
        block_constant: s.block_constant,
        block_len: b.block_len,
        z: b.z,
        draws_used: b.draws_used,
        draws_failed: b.draws_failed,
        draws_nonconverged: b.draws_nonconverged,
    });
    let summary = FitSummary {
        schema_version: SCHEMA_VERSION,
        model: config.model,
        seed: config.seed,
        n_subjects: panel.n_subjects(),
        n_periods: panel.n_periods(),
        n_regressors: panel.n_regressors(),
        degree: config.degree,
        interior_knots: sel.interior_knots,
        support: panel.support(),
        knots: bases[0].knots().to_vec(),
        r: sel.r,
        gamma: fitted.gamma,
        converged: fitted.converged,
        iterations: fitted.iterations,
        objective: fitted.objective,
        v_nt: fitted.v_nt,
        mu: fitted.mu,
        xi: fitted.xi,
        knot_selection: sel.knot_selection,
        factor_selection: sel.factor_selection,
        grid_size: config.grid_size,
        bootstrap,
    };
    Ok(vec![json_artifact(SUMMARY_FILE, &summary), curves])
}

fn run_config(path: Option<&Path>, overrides: &RunOverrides) -> CliResult<RunConfig> {
    let mut config = match path {
        Some(p) => crate::config::read_toml(p)?,
        None => RunConfig::default(),
    };
    overrides.apply(&mut config);
    config.validate()?;
    Ok(config)
}

/// Fits the configured model and writes `summary.json` and `curves.csv`.
pub fn cmd_fit(
    config: Option<&Path>,
    data: &Path,
    out: &Path,
    overrides: &RunOverrides,
) -> CliResult<Vec<PathBuf>> {
    let config = run_config(config, overrides)?;
    let threads = resolve_threads(config.threads)?;
    let artifacts = with_threads(threads, || {
        let panel = load(data, &config)?;
        fit_artifacts(&panel, &config)
    })?;
    write_all(out, &artifacts)
}

#[derive(Debug, Clone, Serialize)]
struct SelectionReport {
    schema_version: u32,
    seed: u64,
    #[serde(flatten)]
    selection: Selection,
}

/// Runs knot and/or factor selection and writes `selection.json`.
pub fn cmd_select(
    config: Option<&Path>,
    data: &Path,
    out: &Path,
    overrides: &RunOverrides,
) -> CliResult<Vec<PathBuf>> {
    let config = run_config(config, overrides)?;
    if matches!(config.knots, KnotChoice::Fixed { .. }) && matches!(config.factors, FactorChoice::Fixed { .. }) {
        return Err(CliError::Invalid(
            "nothing to select: set knots.mode = \"cv\" and/or factors.mode = \"bic\"".into(),
        ));
    }
    let threads = resolve_threads(config.threads)?;
    let selection = with_threads(threads, || {
        let panel = load(data, &config)?;
        choose(&panel, &config)
    })?;
    let report = SelectionReport {
        schema_version: SCHEMA_VERSION,
        seed: config.seed,
        selection,
    };
    write_all(out, &[json_artifact(SELECTION_FILE, &report)])
}

#[derive(Debug, Clone, Default)]
pub struct SimOverrides {
    pub replications: Option<usize>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Serialize)]
struct SimReport<'a> {
    schema_version: u32,
    spec: &'a McSpec,
    reports: &'a [McReport],
}

/// Runs the Monte Carlo spec and writes `mc_table.csv` and `mc_report.json`.
pub fn cmd_simulate(spec: &Path, out: &Path, overrides: &SimOverrides) -> CliResult<Vec<PathBuf>> {
    let mut sim: SimConfig = crate::config::read_toml(spec)?;
    if let Some(r) = overrides.replications {
        sim.simulation.replications = r;
    }
    if let Some(s) = overrides.seed {
        sim.simulation.base_seed = s;
    }
    if overrides.threads.is_some() {
        sim.threads = overrides.threads;
    }
    if sim.threads == Some(0) {
        return Err(CliError::Invalid("threads must be positive".into()));
    }
    sim.simulation.validate()?;
    let threads = resolve_threads(sim.threads)?;
    let reports = with_threads(threads, || Ok(run_monte_carlo(&sim.simulation)?))?;
    let json = json_artifact(
        MC_REPORT_FILE,
        &SimReport {
            schema_version: SCHEMA_VERSION,
            spec: &sim.simulation,
            reports: &reports,
        },
    );
    write_all(out, &[mc_table_csv(&reports), json])
}
