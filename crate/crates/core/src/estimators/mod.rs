//! Identification of thermal models from traces.

mod bnn;
mod metrics;
mod nnls;
mod onerone;

pub use bnn::{
    fit_bnn, fit_bnn_traced, posterior_to_coeffs, predictive_samples, transfer, weight_count,
    BnnFit, GaussianPrior, LikelihoodEstimator, LrSchedule, Posterior, PriorConfig, TrainingConfig,
    TrainingMeta, LAYOUT_VERSION,
};
pub use metrics::{free_run_rmse, one_step_rmse, predict_one_step, rmse};
pub use nnls::{kkt_violation, nnls, NNLS_TOLERANCE};
pub use onerone::{fit_1r1c, OneROneCFit, VALIDITY_EPSILON};
