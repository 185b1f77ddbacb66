use serde::{Deserialize, Serialize};

use super::{derive_controls, ControlSeries, Field, Trace};
use crate::rcnet::{Input, MAX_ORDER};
use crate::{Error, Result};

/// Lagged design matrix for an order-`n` difference model.
///
/// Row layout (width `4n + 3`):
/// `[T_out(t), k_heat(t), k_cool(t), ..., T_out(t-n), k_heat(t-n), k_cool(t-n),
///   y(t-1), ..., y(t-n)]`, target `y(t) = T_in(t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionDataset {
    #[serde(default)]
    home_id: String,
    order: usize,
    inputs: Vec<f64>,
    targets: Vec<f64>,
    time_index: Vec<usize>,
}

pub fn check_order(order: usize) -> Result<()> {
    if (1..=MAX_ORDER).contains(&order) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "order must be in 1..={MAX_ORDER}, got {order}"
        )))
    }
}

impl RegressionDataset {
    pub fn width_for(order: usize) -> usize {
        4 * order + 3
    }

    pub fn empty(order: usize) -> Self {
        RegressionDataset {
            home_id: String::new(),
            order,
            inputs: Vec::new(),
            targets: Vec::new(),
            time_index: Vec::new(),
        }
    }

    /// Builds rows for every `t >= order`; rows whose lag window touches an
    /// `excluded` sample are skipped.
    pub fn from_series(
        order: usize,
        u: &[Input],
        y: &[f64],
        excluded: Option<&[bool]>,
    ) -> Result<Self> {
        check_order(order)?;
        if u.len() != y.len() || excluded.is_some_and(|e| e.len() != y.len()) {
            return Err(Error::Shape(
                "inputs, outputs and exclusion mask differ in length".into(),
            ));
        }
        if y.len() < order + 2 {
            return Err(Error::InsufficientData {
                needed: order + 2,
                available: y.len(),
            });
        }
        let width = Self::width_for(order);
        let rows = y.len() - order;
        let mut ds = RegressionDataset {
            home_id: String::new(),
            order,
            inputs: Vec::with_capacity(rows * width),
            targets: Vec::with_capacity(rows),
            time_index: Vec::with_capacity(rows),
        };
        for t in order..y.len() {
            if let Some(mask) = excluded {
                if mask[t - order..=t].iter().any(|&m| m) {
                    continue;
                }
            }
            for lag in 0..=order {
                ds.inputs.extend_from_slice(&u[t - lag]);
            }
            for lag in 1..=order {
                ds.inputs.push(y[t - lag]);
            }
            ds.targets.push(y[t]);
            ds.time_index.push(t);
        }
        Ok(ds)
    }

    pub fn with_home_id(mut self, home_id: impl Into<String>) -> Self {
        self.home_id = home_id.into();
        self
    }

    pub fn home_id(&self) -> &str {
        &self.home_id
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn width(&self) -> usize {
        Self::width_for(self.order)
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let w = self.width();
        &self.inputs[i * w..(i + 1) * w]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.inputs.chunks_exact(self.width())
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    /// Trace sample index of each row's target.
    pub fn time_index(&self) -> &[usize] {
        &self.time_index
    }
}

/// `(T_out, k_heat, k_cool)` per sample.
pub fn input_series(trace: &Trace, controls: &ControlSeries) -> Result<Vec<Input>> {
    let t_out = trace.values(Field::TOut)?;
    if controls.len() != t_out.len() {
        return Err(Error::Shape(
            "control series length differs from trace".into(),
        ));
    }
    Ok((0..t_out.len())
        .map(|i| [t_out[i], controls.heat(i), controls.cool(i)])
        .collect())
}

pub fn build_regression(
    trace: &Trace,
    controls: &ControlSeries,
    order: usize,
) -> Result<RegressionDataset> {
    let u = input_series(trace, controls)?;
    let y = trace.values(Field::TIn)?;
    Ok(
        RegressionDataset::from_series(order, &u, &y, Some(trace.long_gap()))?
            .with_home_id(trace.home_id()),
    )
}

/// Convenience: derive controls and build the dataset in one go.
pub fn regression_for(trace: &Trace, order: usize) -> Result<RegressionDataset> {
    let controls = derive_controls(trace)?;
    build_regression(trace, &controls, order)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timeseries::test_support::complete_trace;
    use crate::timeseries::{impute, HvacMode, TraceColumns};

    #[test]
    fn widths_and_counts() {
        let t_in: Vec<f64> = (0..100).map(|i| 60.0 + i as f64 * 0.01).collect();
        let t = complete_trace(&t_in, &vec![30.0; 100], 68.0, 75.0, HvacMode::Auto);
        let ds = regression_for(&t, 2).unwrap();
        assert_eq!((ds.len(), ds.width()), (98, 11));

        let t = complete_trace(&[1.0, 2.0, 3.0], &[0.0; 3], 68.0, 75.0, HvacMode::Off);
        let ds = regression_for(&t, 1).unwrap();
        assert_eq!((ds.len(), ds.width()), (2, 7));
    }

    #[test]
    fn lag_major_layout() {
        let t = complete_trace(
            &[70.0, 71.0, 72.0],
            &[10.0, 11.0, 12.0],
            71.5,
            80.0,
            HvacMode::Heat,
        );
        let ds = regression_for(&t, 1).unwrap();
        // t = 2: u(2) = (12, 0, 0), u(1) = (11, 1, 0), y(1) = 71
        assert_eq!(ds.row(1), &[12.0, 0.0, 0.0, 11.0, 1.0, 0.0, 71.0]);
        assert_eq!(ds.targets()[1], 72.0);
        assert_eq!(ds.time_index(), &[1, 2]);
    }

    #[test]
    fn constant_trace_gives_identical_rows() {
        let t = complete_trace(&[65.0; 10], &[65.0; 10], 60.0, 80.0, HvacMode::Auto);
        let ds = regression_for(&t, 3).unwrap();
        assert!(ds.targets().iter().all(|&y| y == 65.0));
        let first = ds.row(0).to_vec();
        assert!(ds.rows().all(|r| r == first.as_slice()));
    }

    #[test]
    fn too_short() {
        let t = complete_trace(&[1.0, 2.0, 3.0], &[0.0; 3], 68.0, 75.0, HvacMode::Off);
        assert!(matches!(
            regression_for(&t, 2),
            Err(Error::InsufficientData { .. })
        ));
        assert!(regression_for(&t, 6).is_err());
    }

    #[test]
    fn rows_skip_long_gaps() {
        let n = 30;
        let mut t_in: Vec<Option<f64>> = (0..n).map(|i| Some(i as f64)).collect();
        for v in &mut t_in[10..18] {
            *v = None;
        }
        let columns = TraceColumns {
            t_in,
            t_out: vec![Some(0.0); n],
            t_setheat: vec![Some(0.0); n],
            t_setcool: vec![Some(100.0); n],
            hvac_mode: vec![Some(HvacMode::Off); n],
            motion: vec![Some(false); n],
            humidity: vec![Some(0.5); n],
        };
        let trace =
            impute(&Trace::new("g", crate::timeseries::test_support::start(), columns).unwrap())
                .unwrap();
        let ds = regression_for(&trace, 2).unwrap();
        assert!(ds.time_index().iter().all(|&t| t < 10 || t >= 20));
        assert_eq!(ds.len(), (10 - 2) + (30 - 20));
    }

    #[test]
    fn train_rows_stay_inside_train_split() {
        let n = 4 * crate::SAMPLES_PER_DAY;
        let t_in: Vec<f64> = (0..n).map(|i| (i as f64 * 0.1).sin()).collect();
        let t = complete_trace(&t_in, &t_in, 0.0, 1.0, HvacMode::Auto);
        let (train, _) = t.split(2, 2).unwrap();
        let ds = regression_for(&train, 2).unwrap();
        assert!(ds.time_index().iter().all(|&i| i < train.len()));
        assert_eq!(ds.targets()[ds.len() - 1], t_in[train.len() - 1]);
    }
}
