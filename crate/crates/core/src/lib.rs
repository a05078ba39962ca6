//! Imputation of a systematically missing target node under domain shift,
//! given a known linear-Gaussian causal DAG.
//!
//! The pipeline: fit every mechanism on fully observed source data
//! ([`fitting`]), freeze the invariant ones, and adapt only the target's
//! mechanism on unlabeled target data with first-order EM ([`em`]). Missing
//! values are then imputed by the exact Gaussian conditional mean
//! ([`conditioning`]).

// `!(x > 0.0)` guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod conditioning;
pub mod dag;
pub mod datagen;
pub mod data;
pub mod em;
pub mod error;
pub mod experiment;
pub mod fitting;
pub mod io;
pub mod kiiveri;
pub mod linalg;
pub mod metrics;
pub mod sem;
pub mod theory;

pub use conditioning::{conditional_law, conditional_law_from_params, impute_batch, ConditionalLaw};
pub use dag::{validate_topological_order, DagSpec};
pub use data::{split_target, ObservedData};
pub use error::{Error, Result};
pub use fitting::{fit_dag_source, refit_root_marginals};
pub use em::{adapt, impute_adapted, EmConfig, EmTrace};
pub use experiment::{run_experiment, ExperimentConfig, ExperimentReport, Method};
pub use kiiveri::kiiveri_adapt;
pub use sem::{implied_covariance, implied_precision, GaussianMoments, SemParams};
