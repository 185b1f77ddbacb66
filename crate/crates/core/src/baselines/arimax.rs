use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::diagnostics::{
    difference, stationary_from_unconstrained, unconstrained_from_stationary,
};
use crate::timeseries::{input_series, ControlSeries, Field, Trace};
use crate::{Error, Result};

pub const MODEL_KIND: &str = "arimax";
const MAX_ITERATIONS: usize = 200;
/// Keeps partial autocorrelations within `tanh(8)` of ±1.
const TRANSFORM_BOUND: f64 = 8.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArimaxOrder {
    pub p: usize,
    pub d: usize,
    pub q: usize,
}

impl Default for ArimaxOrder {
    fn default() -> Self {
        ArimaxOrder { p: 1, d: 1, q: 2 }
    }
}

impl ArimaxOrder {
    pub const PERSISTENCE: ArimaxOrder = ArimaxOrder { p: 0, d: 1, q: 0 };

    pub fn warm_up(&self) -> usize {
        self.p.max(self.q) + self.d
    }

    fn parameter_count(&self) -> usize {
        self.p + self.q + 4
    }
}

/// Regression with ARMA errors on the `d`-times differenced series:
/// `z_t = c + βᵀΔᵈu_t + η_t`, `η_t = Σ φ_i η_{t−i} + ε_t + Σ θ_j ε_{t−j}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArimaxModel {
    pub model_kind: String,
    pub order: ArimaxOrder,
    pub ar: Vec<f64>,
    pub ma: Vec<f64>,
    /// On differenced `(T_out, k_heat, k_cool)`.
    pub exog: [f64; 3],
    pub intercept: f64,
    pub innovation_var: f64,
}

impl ArimaxModel {
    /// `ŷ_t = y_{t−1}`.
    pub fn persistence() -> Self {
        ArimaxModel {
            model_kind: MODEL_KIND.to_string(),
            order: ArimaxOrder::PERSISTENCE,
            ar: Vec::new(),
            ma: Vec::new(),
            exog: [0.0; 3],
            intercept: 0.0,
            innovation_var: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.ar.len() != self.order.p || self.ma.len() != self.order.q {
            return Err(Error::Shape(
                "coefficient counts do not match the order".into(),
            ));
        }
        if !(self.innovation_var > 0.0 && self.innovation_var.is_finite()) {
            return Err(Error::InvalidParameter(
                "innovation variance must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Differenced target and exogenous inputs.
struct Differenced {
    z: Vec<f64>,
    x: Vec<[f64; 3]>,
}

fn differenced(y: &[f64], u: &[[f64; 3]], d: usize) -> Result<Differenced> {
    let z = difference(y, d)?;
    let cols: Vec<Vec<f64>> = (0..3)
        .map(|j| difference(&u.iter().map(|r| r[j]).collect::<Vec<_>>(), d))
        .collect::<Result<_>>()?;
    let x = (0..z.len())
        .map(|t| [cols[0][t], cols[1][t], cols[2][t]])
        .collect();
    Ok(Differenced { z, x })
}

/// CSS innovations for `t ≥ p`, pre-sample innovations zero.
fn innovations(m: &ArimaxModel, data: &Differenced, out: &mut Vec<f64>) {
    let (p, q) = (m.order.p, m.order.q);
    let n = data.z.len();
    let mut eta = vec![0.0; n];
    let mut eps = vec![0.0; n];
    out.clear();
    for t in 0..n {
        let x = &data.x[t];
        eta[t] = data.z[t] - m.intercept - m.exog[0] * x[0] - m.exog[1] * x[1] - m.exog[2] * x[2];
        if t < p {
            continue;
        }
        let mut e = eta[t];
        for i in 0..p {
            e -= m.ar[i] * eta[t - 1 - i];
        }
        for j in 0..q {
            if t > j {
                e -= m.ma[j] * eps[t - 1 - j];
            }
        }
        eps[t] = e;
        out.push(e);
    }
}

/// Unconstrained parameter vector `[ar…, ma…, c, β₀, β₁, β₂]`.
fn unpack(order: ArimaxOrder, v: &[f64]) -> ArimaxModel {
    let (p, q) = (order.p, order.q);
    let ar = stationary_from_unconstrained(&v[..p]);
    let ma = stationary_from_unconstrained(&v[p..p + q])
        .into_iter()
        .map(|c| -c)
        .collect();
    ArimaxModel {
        model_kind: MODEL_KIND.to_string(),
        order,
        ar,
        ma,
        exog: [v[p + q + 1], v[p + q + 2], v[p + q + 3]],
        intercept: v[p + q],
        innovation_var: 1.0,
    }
}

fn pack(m: &ArimaxModel) -> Vec<f64> {
    let mut v = unconstrained_from_stationary(&m.ar);
    v.extend(unconstrained_from_stationary(
        &m.ma.iter().map(|c| -c).collect::<Vec<_>>(),
    ));
    v.push(m.intercept);
    v.extend(m.exog);
    v
}

/// Ordinary least squares of `z` on `[1, x]`.
fn ols_exog(data: &Differenced) -> (f64, [f64; 3]) {
    let n = data.z.len();
    let mut a = DMatrix::zeros(n, 4);
    for t in 0..n {
        a[(t, 0)] = 1.0;
        for j in 0..3 {
            a[(t, j + 1)] = data.x[t][j];
        }
    }
    let b = DVector::from_column_slice(&data.z);
    match a.svd(true, true).solve(&b, 1e-10) {
        Ok(s) => (s[0], [s[1], s[2], s[3]]),
        Err(_) => (0.0, [0.0; 3]),
    }
}

pub fn fit_arimax(
    train: &Trace,
    controls: &ControlSeries,
    order: ArimaxOrder,
    seed: u64,
) -> Result<ArimaxModel> {
    let y = train.values(Field::TIn)?;
    let u = input_series(train, controls)?;
    fit_arimax_series(&y, &u, order, seed)
}

/// `fit_arimax` on raw series. Estimation is deterministic; `seed` is kept
/// for interface parity with the other estimators.
pub fn fit_arimax_series(
    y: &[f64],
    u: &[[f64; 3]],
    order: ArimaxOrder,
    _seed: u64,
) -> Result<ArimaxModel> {
    let needed = 10 * order.parameter_count();
    if y.len() < needed {
        return Err(Error::InsufficientData {
            needed,
            available: y.len(),
        });
    }
    if u.len() != y.len() {
        return Err(Error::Shape("inputs and outputs differ in length".into()));
    }
    if order == ArimaxOrder::PERSISTENCE {
        let z = difference(y, 1)?;
        let mut m = ArimaxModel::persistence();
        m.intercept = z.iter().sum::<f64>() / z.len() as f64;
        m.innovation_var = variance_floor(
            z.iter().map(|v| (v - m.intercept).powi(2)).sum::<f64>() / z.len() as f64,
        );
        return Ok(m);
    }

    let data = differenced(y, u, order.d)?;
    let (c, beta) = ols_exog(&data);
    let init = ArimaxModel {
        model_kind: MODEL_KIND.to_string(),
        order,
        ar: vec![0.0; order.p],
        ma: vec![0.0; order.q],
        exog: beta,
        intercept: c,
        innovation_var: 1.0,
    };
    let v = levenberg_marquardt(order, &data, pack(&init))?;
    let mut m = unpack(order, &v);
    let mut res = Vec::new();
    innovations(&m, &data, &mut res);
    let dof = res.len().saturating_sub(order.parameter_count()).max(1);
    m.innovation_var = variance_floor(res.iter().map(|e| e * e).sum::<f64>() / dof as f64);
    Ok(m)
}

fn variance_floor(v: f64) -> f64 {
    v.max(f64::MIN_POSITIVE)
}

/// Minimizes the conditional sum of squares with a forward-difference Jacobian.
fn levenberg_marquardt(
    order: ArimaxOrder,
    data: &Differenced,
    mut v: Vec<f64>,
) -> Result<Vec<f64>> {
    let k = v.len();
    let mut r = Vec::new();
    let mut r_trial = Vec::new();
    innovations(&unpack(order, &v), data, &mut r);
    let mut sse: f64 = r.iter().map(|e| e * e).sum();
    if !sse.is_finite() {
        return Err(Error::Numeric(
            "non-finite sum of squares at the initial point",
        ));
    }
    let m = r.len();
    let mut lambda = 1e-3;
    let mut jac = DMatrix::<f64>::zeros(m, k);
    for _ in 0..MAX_ITERATIONS {
        for j in 0..k {
            let h = 1e-7 * v[j].abs().max(1e-3);
            let mut vj = v.clone();
            vj[j] += h;
            innovations(&unpack(order, &vj), data, &mut r_trial);
            for i in 0..m {
                jac[(i, j)] = (r_trial[i] - r[i]) / h;
            }
        }
        let jtj = jac.tr_mul(&jac);
        let jtr = jac.tr_mul(&DVector::from_column_slice(&r));
        if jtr.amax() <= 1e-12 * sse.max(f64::MIN_POSITIVE).sqrt() {
            return Ok(v);
        }
        let mut improved = false;
        for _ in 0..30 {
            let mut a = jtj.clone();
            for j in 0..k {
                a[(j, j)] += lambda * jtj[(j, j)].max(1e-12);
            }
            let Some(step) = a.cholesky().map(|c| c.solve(&jtr)) else {
                lambda *= 10.0;
                continue;
            };
            let mut trial: Vec<f64> = v.iter().zip(step.iter()).map(|(a, b)| a - b).collect();
            for t in &mut trial[..order.p + order.q] {
                *t = t.clamp(-TRANSFORM_BOUND, TRANSFORM_BOUND);
            }
            innovations(&unpack(order, &trial), data, &mut r_trial);
            let sse_trial: f64 = r_trial.iter().map(|e| e * e).sum();
            if sse_trial.is_finite() && sse_trial <= sse {
                let rel = (sse - sse_trial) / sse.max(f64::MIN_POSITIVE);
                let small_step =
                    step.amax() <= 1e-10 * (1.0 + v.iter().fold(0.0f64, |m, x| m.max(x.abs())));
                v = trial;
                std::mem::swap(&mut r, &mut r_trial);
                sse = sse_trial;
                lambda = (lambda / 10.0).max(1e-12);
                improved = true;
                if rel < 1e-8 || small_step {
                    return Ok(v);
                }
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            // no descent direction left at this precision
            return Ok(v);
        }
    }
    Err(Error::Convergence {
        what: "arimax",
        iterations: MAX_ITERATIONS,
    })
}

/// One-step forecasts of `T_in` on the original scale. Entry `i`
/// forecasts sample `warm_up + i`.
pub fn predict_arimax(
    model: &ArimaxModel,
    test: &Trace,
    controls: &ControlSeries,
) -> Result<Vec<f64>> {
    let y = test.values(Field::TIn)?;
    let u = input_series(test, controls)?;
    predict_arimax_series(model, &y, &u)
}

pub fn predict_arimax_series(model: &ArimaxModel, y: &[f64], u: &[[f64; 3]]) -> Result<Vec<f64>> {
    model.validate()?;
    let o = model.order;
    let warm = o.warm_up();
    if y.len() <= warm {
        return Err(Error::InsufficientData {
            needed: warm + 1,
            available: y.len(),
        });
    }
    if u.len() != y.len() {
        return Err(Error::Shape("inputs and outputs differ in length".into()));
    }
    let data = differenced(y, u, o.d)?;
    let mut eps = Vec::new();
    innovations(model, &data, &mut eps);
    // eps[j] is the innovation of differenced index j + p
    let binom: Vec<f64> = (0..=o.d)
        .map(|j| binomial(o.d, j) * if j % 2 == 0 { 1.0 } else { -1.0 })
        .collect();
    let mut out = Vec::with_capacity(y.len() - warm);
    for t in warm..y.len() {
        let zi = t - o.d;
        let forecast_z = data.z[zi] - eps[zi - o.p];
        // y_t = Δᵈy_t − Σ_{j≥1} (−1)^j C(d, j) y_{t−j}
        let level: f64 = (1..=o.d).map(|j| binom[j] * y[t - j]).sum();
        out.push(forecast_z - level);
    }
    Ok(out)
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}
