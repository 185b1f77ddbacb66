use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{DiscretizedSystem, Input, StateSpace};
use crate::{Error, Result};

/// Compact input/output form of an order-`n` network:
/// `y(t) = Σ_{i=0..n} S_i·u(t−i) − Σ_{i=1..n} e_i·y(t−i) + offset`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffCoeffs {
    pub order: usize,
    pub s: Vec<[f64; 3]>,
    pub e: Vec<f64>,
    pub offset: f64,
}

impl DiffCoeffs {
    pub fn zeros(order: usize) -> Self {
        DiffCoeffs {
            order,
            s: vec![[0.0; 3]; order + 1],
            e: vec![0.0; order],
            offset: 0.0,
        }
    }

    /// Regression weights in row layout: `S_0, ..., S_n, −e_1, ..., −e_n, offset`.
    pub fn to_weights(&self) -> Vec<f64> {
        let mut w: Vec<f64> = self.s.iter().flatten().copied().collect();
        w.extend(self.e.iter().map(|e| -e));
        w.push(self.offset);
        w
    }

    pub fn from_weights(order: usize, weights: &[f64]) -> Result<Self> {
        if weights.len() != 4 * order + 4 {
            return Err(Error::Shape(format!(
                "{} weights for order {order}",
                weights.len()
            )));
        }
        let s = weights[..3 * (order + 1)]
            .chunks_exact(3)
            .map(|c| [c[0], c[1], c[2]])
            .collect();
        let e = weights[3 * (order + 1)..4 * order + 3]
            .iter()
            .map(|w| -w)
            .collect();
        Ok(DiffCoeffs {
            order,
            s,
            e,
            offset: weights[4 * order + 3],
        })
    }

    /// One prediction from a regression row (see `RegressionDataset`).
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let n = self.order;
        let mut y = self.offset;
        for (i, s) in self.s.iter().enumerate() {
            y += s[0] * row[3 * i] + s[1] * row[3 * i + 1] + s[2] * row[3 * i + 2];
        }
        for (i, e) in self.e.iter().enumerate() {
            y -= e * row[3 * (n + 1) + i];
        }
        y
    }

    /// Next output given `u(t), ..., u(t−n)` and `y(t−1), ..., y(t−n)`.
    pub fn step(&self, inputs_newest_first: &[Input], outputs_newest_first: &[f64]) -> f64 {
        let mut y = self.offset;
        for (s, u) in self.s.iter().zip(inputs_newest_first) {
            y += s[0] * u[0] + s[1] * u[1] + s[2] * u[2];
        }
        for (e, yl) in self.e.iter().zip(outputs_newest_first) {
            y -= e * yl;
        }
        y
    }

    /// `Σ S_i[T_out] − (1 + Σ e_i)`; zero for a passive network.
    pub fn dc_gain_residual(&self) -> f64 {
        let gain: f64 = self.s.iter().map(|s| s[0]).sum();
        gain - (1.0 + self.e.iter().sum::<f64>())
    }

    /// Steady output for constant inputs, or `None` when `1 + Σe = 0`.
    pub fn steady_output(&self, u: Input) -> Option<f64> {
        let denom = 1.0 + self.e.iter().sum::<f64>();
        if denom == 0.0 {
            return None;
        }
        let num: f64 = self
            .s
            .iter()
            .map(|s| s[0] * u[0] + s[1] * u[1] + s[2] * u[2])
            .sum::<f64>()
            + self.offset;
        Some(num / denom)
    }
}

fn trace(m: &DMatrix<f64>) -> f64 {
    m.diagonal().sum()
}

/// Characteristic-polynomial coefficients and adjugate terms of `(F·I − Φ)`
/// via the trace recursion `M_i = Φ M_{i−1} + e_i I`, `e_i = −tr(Φ M_{i−1}) / i`.
fn adjugate_terms(phi: &DMatrix<f64>) -> (Vec<DMatrix<f64>>, Vec<f64>, DMatrix<f64>) {
    let n = phi.nrows();
    let ident = DMatrix::<f64>::identity(n, n);
    let mut ms = vec![ident.clone()];
    let mut es = Vec::with_capacity(n);
    let mut last = ident.clone();
    for i in 1..=n {
        let pm = phi * &ms[i - 1];
        let e = -trace(&pm) / i as f64;
        es.push(e);
        let m = pm + &ident * e;
        if i < n {
            ms.push(m);
        } else {
            last = m;
        }
    }
    (ms, es, last)
}

/// `‖Φ M_{n−1} + e_n I‖_F / ‖Φ‖_F`.
pub fn cayley_hamilton_residual(ds: &DiscretizedSystem) -> f64 {
    let (_, _, residual) = adjugate_terms(&ds.phi);
    residual.norm() / ds.phi.norm()
}

pub fn difference_coefficients(ds: &DiscretizedSystem, ss: &StateSpace) -> Result<DiffCoeffs> {
    let n = ds.order();
    if ss.order() != n
        || ds.gamma1.shape() != (n, 3)
        || ds.gamma2.shape() != (n, 3)
        || ss.cm.shape() != (1, n)
    {
        return Err(Error::Shape(
            "discretized system does not match the state space".into(),
        ));
    }
    let (ms, e, residual) = adjugate_terms(&ds.phi);
    if residual.norm() > 1e-9 * ds.phi.norm() {
        return Err(Error::Numeric("Cayley-Hamilton residual"));
    }

    let g1_minus_g2 = &ds.gamma1 - &ds.gamma2;
    let row = |m: DMatrix<f64>| -> [f64; 3] {
        let r = &ss.cm * m;
        [r[(0, 0)], r[(0, 1)], r[(0, 2)]]
    };
    let mut s = Vec::with_capacity(n + 1);
    s.push(row(&ms[0] * &ds.gamma2));
    for i in 1..n {
        s.push(row(&ms[i - 1] * &g1_minus_g2 + &ms[i] * &ds.gamma2));
    }
    s.push(row(&ms[n - 1] * &g1_minus_g2));
    Ok(DiffCoeffs {
        order: n,
        s,
        e,
        offset: 0.0,
    })
}
