//! Environment-aware indoor path loss analysis.
//!
//! The pipeline runs from measurement CSVs ([`ingest`]) through design
//! matrices ([`features`]) and least-squares fits ([`regression`]) to
//! significance tests ([`diagnostics`]) and residual distribution fits
//! ([`distfit`]). [`synth`] generates campaigns with known ground truth.
//!
//! The numeric code is generic over [`Real`] (`f32` or `f64`); the aliases
//! below name the `f64` instantiations.

pub mod diagnostics;
pub mod distfit;
pub mod error;
pub mod features;
pub mod ingest;
pub mod linalg;
pub mod regression;
pub mod scalar;
pub mod special;
pub mod synth;

pub use error::{Error, Result};
pub use scalar::Real;

pub use diagnostics::{anova_type2, coefficient_t_tests, residual_diagnostics};
pub use distfit::{fit_gmm, fit_mle, rank_candidates, Family};
pub use features::{build_design_matrix, ModelSpec};
pub use regression::{kfold_cv, lm_fit, ols_fit, predict};
pub use synth::{generate_dataset, SyntheticSpec};

pub type DesignMatrix64 = features::DesignMatrix<f64>;
pub type LabeledVector64 = features::LabeledVector<f64>;
pub type FitResult64 = regression::FitResult<f64>;
pub type Solver64 = regression::Solver<f64>;
pub type CvReport64 = regression::CvReport<f64>;
pub type AnovaTable64 = diagnostics::AnovaTable<f64>;
pub type ResidualDiagnostics64 = diagnostics::ResidualDiagnostics<f64>;
pub type Distribution64 = distfit::Distribution<f64>;
pub type DistributionFit64 = distfit::DistributionFit<f64>;
pub type GmmParams64 = distfit::GmmParams<f64>;
