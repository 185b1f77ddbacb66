//! Black-box comparison models.

mod arimax;
mod diagnostics;

pub use arimax::{
    fit_arimax, fit_arimax_series, predict_arimax, predict_arimax_series, ArimaxModel, ArimaxOrder,
    MODEL_KIND,
};
pub use diagnostics::{acf, difference, pacf};
