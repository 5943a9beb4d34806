//! Varying-coefficient panel-data models with interactive fixed effects.
//!
//! Coefficient functions `beta_k(u)` are approximated with B-spline sieves and
//! estimated jointly with an unobserved factor structure `lambda_i' F_t` by
//! alternating least squares and principal components. The crate also covers
//! the additive fixed-effects special case (a least-squares dummy-variable
//! estimator applied through a double-demeaning projector), smoothing and
//! factor-number selection, residual block-bootstrap bands, and the
//! simulation designs used to benchmark the estimators.

pub mod bootstrap;
pub mod bspline;
pub mod design;
mod error;
pub(crate) mod linalg;
pub mod ife;
pub mod io;
pub mod lsdv;
pub mod montecarlo;
pub mod panel;
pub(crate) mod rng;
pub mod selection;

pub use bootstrap::{BootstrapBands, BootstrapConfig};
pub use bspline::{Basis, SplineSpec};
pub use design::DesignMatrices;
pub use error::{Error, Result};
pub use ife::{FactorStructure, FitInit, FitOptions, GammaUpdate, IfeFit};
pub use io::LongCsvSchema;
pub use lsdv::LsdvFit;
pub use montecarlo::{DgpKind, DgpTruth, Estimator, KnotPolicy, McReport, McSpec};
pub use panel::{PanelData, RawPanel, Support};
pub use selection::{BicResult, CvResult};
