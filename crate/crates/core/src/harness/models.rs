use serde::{Deserialize, Serialize};

use crate::baselines::{fit_arimax, predict_arimax, ArimaxModel, ArimaxOrder};
use crate::estimators::{
    fit_1r1c, fit_bnn, free_run_rmse, one_step_rmse, posterior_to_coeffs, rmse, transfer,
    OneROneCFit, Posterior, PriorConfig, TrainingConfig,
};
use crate::rcnet::DiffCoeffs;
use crate::timeseries::{build_regression, input_series, ControlSeries, Field, Trace};
use crate::{Error, Result, SAMPLES_PER_DAY};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "bnn_rc")]
    BnnRc,
    #[serde(rename = "onercone")]
    OneROneC,
    #[serde(rename = "arimax")]
    Arimax,
    #[serde(rename = "persistence")]
    Persistence,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [
        ModelKind::BnnRc,
        ModelKind::OneROneC,
        ModelKind::Arimax,
        ModelKind::Persistence,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::BnnRc => "bnn_rc",
            ModelKind::OneROneC => "onercone",
            ModelKind::Arimax => "arimax",
            ModelKind::Persistence => "persistence",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown model kind {s:?}")))
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Settings shared by every fit in an experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct FitSettings {
    pub order: usize,
    pub arimax_order: ArimaxOrder,
    pub prior: PriorConfig,
    pub training: TrainingConfig,
}

/// A trained model of any kind, as stored in model files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "model")]
pub enum FittedModel {
    #[serde(rename = "bnn_rc")]
    BnnRc(Posterior),
    #[serde(rename = "onercone")]
    OneROneC(OneROneCFit),
    #[serde(rename = "arimax")]
    Arimax(ArimaxModel),
    #[serde(rename = "persistence")]
    Persistence(ArimaxModel),
}

/// History before the test segment that ARIMA-type models see but are not
/// scored on.
pub const ARIMA_CONTEXT: usize = SAMPLES_PER_DAY;

/// One-step and (where defined) free-running RMSE with the scored sample count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub rmse: f64,
    pub free_run_rmse: Option<f64>,
    pub samples: usize,
}

impl FittedModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            FittedModel::BnnRc(_) => ModelKind::BnnRc,
            FittedModel::OneROneC(_) => ModelKind::OneROneC,
            FittedModel::Arimax(_) => ModelKind::Arimax,
            FittedModel::Persistence(_) => ModelKind::Persistence,
        }
    }

    pub fn fit(
        kind: ModelKind,
        train: &Trace,
        controls: &ControlSeries,
        settings: &FitSettings,
        seed: u64,
    ) -> Result<Self> {
        Ok(match kind {
            ModelKind::BnnRc => {
                let ds = build_regression(train, controls, settings.order)?;
                FittedModel::BnnRc(fit_bnn(&ds, &settings.prior, &settings.training, seed)?)
            }
            ModelKind::OneROneC => FittedModel::OneROneC(fit_1r1c(train, controls)?),
            ModelKind::Arimax => {
                FittedModel::Arimax(fit_arimax(train, controls, settings.arimax_order, seed)?)
            }
            ModelKind::Persistence => FittedModel::Persistence(ArimaxModel::persistence()),
        })
    }

    /// Adapts the model to a new home or season. The Bayesian model retrains
    /// with itself as prior; the other kinds have no prior mechanism and are
    /// refit on the budget alone.
    pub fn retrain(
        &self,
        train: &Trace,
        controls: &ControlSeries,
        settings: &FitSettings,
        seed: u64,
    ) -> Result<Self> {
        match self {
            FittedModel::BnnRc(p) => {
                let ds = build_regression(train, controls, p.order)?;
                Ok(FittedModel::BnnRc(transfer(
                    p,
                    &ds,
                    &settings.training,
                    seed,
                )?))
            }
            other => FittedModel::fit(other.kind(), train, controls, settings, seed),
        }
    }

    /// Samples of history `window` must carry before the first scored sample.
    pub fn context(&self) -> usize {
        match self {
            FittedModel::BnnRc(p) => p.order,
            FittedModel::OneROneC(_) => 1,
            FittedModel::Arimax(m) | FittedModel::Persistence(m) => {
                ARIMA_CONTEXT.max(m.order.warm_up())
            }
        }
    }

    pub fn coeffs(&self) -> Option<DiffCoeffs> {
        match self {
            FittedModel::BnnRc(p) => Some(posterior_to_coeffs(p)),
            FittedModel::OneROneC(f) => Some(f.to_coeffs()),
            _ => None,
        }
    }

    /// Scores every sample of `window` after the first [`context`](Self::context).
    pub fn evaluate(&self, window: &Trace, controls: &ControlSeries) -> Result<Evaluation> {
        let ctx = self.context();
        if window.len() <= ctx {
            return Err(Error::InsufficientData {
                needed: ctx + 1,
                available: window.len(),
            });
        }
        match self {
            FittedModel::Arimax(m) | FittedModel::Persistence(m) => {
                let pred = predict_arimax(m, window, controls)?;
                let y = window.values(Field::TIn)?;
                let skip = ctx - m.order.warm_up();
                Ok(Evaluation {
                    rmse: rmse(&pred[skip..], &y[ctx..])?,
                    free_run_rmse: None,
                    samples: y.len() - ctx,
                })
            }
            _ => {
                let dc = self.coeffs().expect("difference model");
                let ds = build_regression(window, controls, dc.order)?;
                let y = window.values(Field::TIn)?;
                let u = input_series(window, controls)?;
                Ok(Evaluation {
                    rmse: one_step_rmse(&dc, &ds)?,
                    free_run_rmse: Some(free_run_rmse(&dc, &u, &y)?),
                    samples: ds.len(),
                })
            }
        }
    }
}
