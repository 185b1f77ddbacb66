use crate::rcnet::{simulate_difference, DiffCoeffs, Input};
use crate::timeseries::RegressionDataset;
use crate::{Error, Result};

pub fn rmse(predicted: &[f64], actual: &[f64]) -> Result<f64> {
    if predicted.len() != actual.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} observations",
            predicted.len(),
            actual.len()
        )));
    }
    if predicted.is_empty() {
        return Err(Error::EmptyInput);
    }
    let sse: f64 = predicted
        .iter()
        .zip(actual)
        .map(|(p, a)| (p - a) * (p - a))
        .sum();
    Ok((sse / predicted.len() as f64).sqrt())
}

/// Teacher-forced one-step predictions, one per dataset row.
pub fn predict_one_step(model: &DiffCoeffs, dataset: &RegressionDataset) -> Result<Vec<f64>> {
    if model.order != dataset.order() {
        return Err(Error::Shape(format!(
            "model order {} on order-{} dataset",
            model.order,
            dataset.order()
        )));
    }
    Ok(dataset.rows().map(|row| model.predict_row(row)).collect())
}

pub fn one_step_rmse(model: &DiffCoeffs, dataset: &RegressionDataset) -> Result<f64> {
    rmse(&predict_one_step(model, dataset)?, dataset.targets())
}

/// Free-running RMSE: the model is seeded with the first `n` measurements and
/// then fed its own outputs. Scored on samples `n..`.
pub fn free_run_rmse(model: &DiffCoeffs, u: &[Input], y: &[f64]) -> Result<f64> {
    let n = model.order;
    let sim = simulate_difference(model, u, y)?;
    rmse(&sim[n..], &y[n..sim.len()])
}
