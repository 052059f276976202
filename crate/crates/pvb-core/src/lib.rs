//! Estimation of binary diagnostic test accuracy (sensitivity,
//! specificity, predictive values) when disease verification is partial
//! and possibly selective.
//!
//! The crate provides the naive complete case analysis, the Bayes count
//! correction and its regression extension, multiple imputation, and a
//! likelihood method fitted by expectation maximization that allows the
//! verification decision to depend on the unobserved disease status.
//! Interval estimation covers analytic Wald forms, pooled imputation
//! variance, and the accelerated bias-corrected bootstrap.
//!
//! All estimators are generic over the floating scalar; the aliases below
//! fix the common double-precision case.

pub mod accuracy;
pub mod closed;
pub mod data;
pub mod em;
pub mod error;
mod linalg;
pub mod logit;
pub mod mi;
pub mod quantile;
mod scalar;
pub mod simgen;
pub mod uncertainty;

pub use accuracy::{AccuracyResult, Ci, CiKind, Estimate, Measure, Method};
pub use closed::{bg, cca, ebg, EbgConfig};
pub use em::{acc_em, build_pseudo_data, EmConfig, EmState, PseudoData, PseudoRow};
pub use error::{Error, ErrorCategory, Result};
pub use mi::{acc_mi, default_m, impute_once, MiConfig, MiMeasure, MiPooled};
pub use scalar::Scalar;
pub use simgen::{
    generate, load_sim_spec, parse_sim_spec, CovariateKind, CovariateSpec, Mechanism, SimSpec,
    SimTruth,
};
pub use uncertainty::{bca_interval, BootCiType, BootConfig, BootResult};

/// Double-precision dataset, the form every command line entry point uses.
pub type Dataset = data::Dataset<f64>;
pub type Record = data::Record<f64>;
pub type VerificationTable = data::VerificationTable;
