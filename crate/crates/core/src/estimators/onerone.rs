use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::nnls;
use crate::rcnet::DiffCoeffs;
use crate::timeseries::{ControlSeries, Field, Trace};
use crate::{Error, Result};

/// Coefficients at or below this are treated as absent.
pub const VALIDITY_EPSILON: f64 = 1e-12;

/// Per-step 1R1C coefficients from
/// `T_in(t+1) − T_in(t) = a·(T_out(t) − T_in(t)) + b·k_heat(t) − c·k_cool(t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OneROneCFit {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub valid: bool,
    pub residual_norm: f64,
}

impl OneROneCFit {
    /// Equivalent order-1 difference model (forward Euler).
    pub fn to_coeffs(&self) -> DiffCoeffs {
        DiffCoeffs {
            order: 1,
            s: vec![[0.0; 3], [self.a, self.b, -self.c]],
            e: vec![self.a - 1.0],
            offset: 0.0,
        }
    }

    pub fn predict_next(&self, t_in: f64, t_out: f64, k_heat: bool, k_cool: bool) -> f64 {
        t_in + self.a * (t_out - t_in) + self.b * f64::from(u8::from(k_heat))
            - self.c * f64::from(u8::from(k_cool))
    }
}

pub fn fit_1r1c(train: &Trace, controls: &ControlSeries) -> Result<OneROneCFit> {
    let t_in = train.values(Field::TIn)?;
    let t_out = train.values(Field::TOut)?;
    if controls.len() != t_in.len() {
        return Err(Error::Shape(
            "control series length differs from trace".into(),
        ));
    }
    let gap = train.long_gap();
    let rows: Vec<usize> = (0..t_in.len() - 1)
        .filter(|&t| !gap[t] && !gap[t + 1])
        .collect();
    if rows.is_empty() {
        return Err(Error::InsufficientData {
            needed: 2,
            available: rows.len() + 1,
        });
    }

    let mut a = DMatrix::zeros(rows.len(), 3);
    let mut y = DVector::zeros(rows.len());
    for (r, &t) in rows.iter().enumerate() {
        a[(r, 0)] = t_out[t] - t_in[t];
        a[(r, 1)] = controls.heat(t);
        a[(r, 2)] = -controls.cool(t);
        y[r] = t_in[t + 1] - t_in[t];
    }
    let x = nnls(&a, &y)?;
    let residual_norm = (&a * &x - &y).norm();

    let heats = rows.iter().any(|&t| controls.k_heat[t]);
    let cools = rows.iter().any(|&t| controls.k_cool[t]);
    let valid = x[0] > VALIDITY_EPSILON
        && (!heats || x[1] > VALIDITY_EPSILON)
        && (!cools || x[2] > VALIDITY_EPSILON);
    Ok(OneROneCFit {
        a: x[0],
        b: x[1],
        c: x[2],
        valid,
        residual_norm,
    })
}
