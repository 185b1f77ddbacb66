//! Variational Bayesian linear regressor over the difference-equation weights.
//!
//! The predictor is a single linear unit `ŷ = wᵀrow + bias` with a factorized
//! Gaussian posterior `q(w) = Π N(μ_i, σ_i²)`, `σ_i = softplus(ρ_i)`. Training
//! minimizes the per-row negative ELBO with Adam on minibatches.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::rcnet::DiffCoeffs;
use crate::timeseries::RegressionDataset;
use crate::{Error, Result};

pub const LAYOUT_VERSION: &str = "rc-diff-v1";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianPrior {
    pub mean: f64,
    pub std: f64,
}

/// Scale-mixture prior `π N(0, σ₁²) + (1 − π) N(0, σ₂²)` on every weight, or a
/// per-weight Gaussian override.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorConfig {
    pub sigma1: f64,
    pub sigma2: f64,
    pub pi: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub overrides: Option<Vec<GaussianPrior>>,
}

impl Default for PriorConfig {
    fn default() -> Self {
        PriorConfig {
            sigma1: 1.0,
            sigma2: 0.1,
            pi: 0.2,
            overrides: None,
        }
    }
}

impl PriorConfig {
    /// Gaussian prior centred on a trained posterior.
    pub fn from_posterior(p: &Posterior) -> Self {
        let overrides = p
            .means
            .iter()
            .zip(&p.scales)
            .map(|(&mean, &std)| GaussianPrior { mean, std })
            .collect();
        PriorConfig {
            overrides: Some(overrides),
            ..PriorConfig::default()
        }
    }

    pub fn validate(&self, order: usize) -> Result<()> {
        if !(self.sigma1 > self.sigma2 && self.sigma2 > 0.0 && self.sigma1.is_finite()) {
            return Err(Error::InvalidParameter(
                "prior needs sigma1 > sigma2 > 0".into(),
            ));
        }
        if !(self.pi > 0.0 && self.pi < 1.0) {
            return Err(Error::InvalidParameter(
                "prior mixing weight must lie in (0, 1)".into(),
            ));
        }
        if let Some(o) = &self.overrides {
            if o.len() != weight_count(order) {
                return Err(Error::Shape(format!(
                    "{} prior overrides for order {order}",
                    o.len()
                )));
            }
            if o.iter()
                .any(|g| !(g.std > 0.0 && g.std.is_finite() && g.mean.is_finite()))
            {
                return Err(Error::InvalidParameter(
                    "override priors need finite means and positive scales".into(),
                ));
            }
        }
        Ok(())
    }

    /// `−log p(w)` and its derivative under the mixture.
    fn neg_log_grad(&self, w: f64) -> (f64, f64) {
        let l1 = self.pi.ln() - self.sigma1.ln() - 0.5 * (w / self.sigma1).powi(2);
        let l2 = (1.0 - self.pi).ln() - self.sigma2.ln() - 0.5 * (w / self.sigma2).powi(2);
        let m = l1.max(l2);
        let lse = m + ((l1 - m).exp() + (l2 - m).exp()).ln();
        let r1 = (l1 - lse).exp();
        let r2 = (l2 - lse).exp();
        (
            -lse,
            w * (r1 / (self.sigma1 * self.sigma1) + r2 / (self.sigma2 * self.sigma2)),
        )
    }

    /// Curvature used to precondition the means.
    fn precision(&self, i: usize) -> f64 {
        match &self.overrides {
            Some(o) => 1.0 / (o[i].std * o[i].std),
            None => {
                let (a, b) = (self.pi / self.sigma1, (1.0 - self.pi) / self.sigma2);
                (a / (self.sigma1 * self.sigma1) + b / (self.sigma2 * self.sigma2)) / (a + b)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LikelihoodEstimator {
    /// Gaussian expectation of the squared error, exact for a linear unit.
    Analytic,
    /// Reparameterized weight samples.
    Sampled,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LrSchedule {
    Constant,
    /// Cosine decay from the base rate to `base * floor` over training.
    Cosine {
        floor: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub mc_samples: usize,
    pub noise_std: f64,
    pub init_scale: f64,
    pub schedule: LrSchedule,
    pub likelihood: LikelihoodEstimator,
    /// Run Adam on whitened mean coordinates.
    pub precondition: bool,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            learning_rate: 1e-3,
            batch_size: 256,
            epochs: 200,
            mc_samples: 1,
            noise_std: 0.1,
            init_scale: 0.05,
            schedule: LrSchedule::Constant,
            likelihood: LikelihoodEstimator::Analytic,
            precondition: true,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !(positive(self.learning_rate) && positive(self.noise_std) && positive(self.init_scale))
        {
            return Err(Error::InvalidParameter(
                "learning rate, noise and initial scale must be positive".into(),
            ));
        }
        if self.batch_size == 0 || self.epochs == 0 || self.mc_samples == 0 {
            return Err(Error::InvalidParameter(
                "batch size, epochs and Monte Carlo samples must be nonzero".into(),
            ));
        }
        if let LrSchedule::Cosine { floor } = self.schedule {
            if !(floor > 0.0 && floor <= 1.0) {
                return Err(Error::InvalidParameter(
                    "cosine floor must lie in (0, 1]".into(),
                ));
            }
        }
        Ok(())
    }

    fn rate(&self, step: usize, total: usize) -> f64 {
        match self.schedule {
            LrSchedule::Constant => self.learning_rate,
            LrSchedule::Cosine { floor } => {
                let frac = step as f64 / total.max(1) as f64;
                let c = 0.5 * (1.0 + (std::f64::consts::PI * frac).cos());
                self.learning_rate * (floor + (1.0 - floor) * c)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub home_id: String,
    pub samples: usize,
    pub seed: u64,
    pub steps: usize,
    pub final_loss: f64,
    pub prior: PriorConfig,
    pub config: TrainingConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Posterior {
    pub layout_version: String,
    pub order: usize,
    /// Row layout of `RegressionDataset`, bias last.
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
    pub noise_std: f64,
    pub training_meta: TrainingMeta,
}

impl Posterior {
    pub fn validate(&self) -> Result<()> {
        if self.layout_version != LAYOUT_VERSION {
            return Err(Error::InvalidParameter(format!(
                "unknown posterior layout {}",
                self.layout_version
            )));
        }
        let k = weight_count(self.order);
        if self.means.len() != k || self.scales.len() != k {
            return Err(Error::Shape(format!(
                "posterior of order {} needs {k} weights",
                self.order
            )));
        }
        if self.scales.iter().any(|s| !(*s > 0.0 && s.is_finite()))
            || self.means.iter().any(|m| !m.is_finite())
        {
            return Err(Error::InvalidParameter(
                "posterior scales must be positive and means finite".into(),
            ));
        }
        Ok(())
    }

    pub fn weight_count(&self) -> usize {
        self.means.len() - 1
    }

    pub fn bias_count(&self) -> usize {
        1
    }

    /// One draw of the coefficients from the posterior.
    pub fn sample_coeffs(&self, rng: &mut impl rand::Rng) -> DiffCoeffs {
        let w: Vec<f64> = self
            .means
            .iter()
            .zip(&self.scales)
            .map(|(m, s)| {
                let z: f64 = StandardNormal.sample(rng);
                m + s * z
            })
            .collect();
        DiffCoeffs::from_weights(self.order, &w).expect("posterior layout checked")
    }
}

/// Weights plus bias for order `n`.
pub fn weight_count(order: usize) -> usize {
    4 * order + 4
}

pub fn posterior_to_coeffs(p: &Posterior) -> DiffCoeffs {
    DiffCoeffs::from_weights(p.order, &p.means).expect("posterior layout checked")
}

/// Monte Carlo predictive mean and standard deviation per row, including the
/// observation noise.
pub fn predictive_samples(
    p: &Posterior,
    dataset: &RegressionDataset,
    draws: usize,
    seed: u64,
) -> Result<Vec<(f64, f64)>> {
    if p.order != dataset.order() {
        return Err(Error::Shape(format!(
            "posterior order {} on order-{} dataset",
            p.order,
            dataset.order()
        )));
    }
    if draws == 0 {
        return Err(Error::InvalidParameter("need at least one draw".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let models: Vec<DiffCoeffs> = (0..draws).map(|_| p.sample_coeffs(&mut rng)).collect();
    Ok(dataset
        .rows()
        .map(|row| {
            let ys: Vec<f64> = models.iter().map(|m| m.predict_row(row)).collect();
            let mean = ys.iter().sum::<f64>() / draws as f64;
            let var = ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / draws as f64;
            (mean, (var + p.noise_std * p.noise_std).sqrt())
        })
        .collect())
}

/// Posterior plus per-step minibatch losses.
#[derive(Debug, Clone)]
pub struct BnnFit {
    pub posterior: Posterior,
    pub losses: Vec<f64>,
}

pub fn fit_bnn(
    dataset: &RegressionDataset,
    prior: &PriorConfig,
    hyper: &TrainingConfig,
    seed: u64,
) -> Result<Posterior> {
    Ok(fit_bnn_traced(dataset, prior, hyper, seed, None)?.posterior)
}

/// Retrains `source` on `target_train` with the source posterior as prior.
/// An empty dataset returns the source unchanged.
pub fn transfer(
    source: &Posterior,
    target_train: &RegressionDataset,
    hyper: &TrainingConfig,
    seed: u64,
) -> Result<Posterior> {
    if target_train.is_empty() {
        return Ok(source.clone());
    }
    source.validate()?;
    if source.order != target_train.order() {
        return Err(Error::Shape(format!(
            "source order {} on order-{} dataset",
            source.order,
            target_train.order()
        )));
    }
    let prior = PriorConfig::from_posterior(source);
    Ok(fit_bnn_traced(
        target_train,
        &prior,
        hyper,
        seed,
        Some((&source.means, &source.scales)),
    )?
    .posterior)
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

fn softplus_inv(y: f64) -> f64 {
    if y > 30.0 {
        y
    } else {
        y.exp_m1().ln()
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(k: usize) -> Self {
        Adam {
            m: vec![0.0; k],
            v: vec![0.0; k],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = Self::BETA1 * self.m[i] + (1.0 - Self::BETA1) * grad[i];
            self.v[i] = Self::BETA2 * self.v[i] + (1.0 - Self::BETA2) * grad[i] * grad[i];
            params[i] -= lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + Self::EPS);
        }
    }
}

/// Upper-triangular `P` with `Pᵀ H P = I` for `H = XᵀX / N + s² Λ / N`, the
/// loss curvature in output units: a unit step in `θ` moves predictions by
/// about 1 °F RMS.
fn preconditioner(
    dataset: &RegressionDataset,
    prior: &PriorConfig,
    noise_std: f64,
) -> Result<DMatrix<f64>> {
    let k = dataset.width() + 1;
    let n = dataset.len() as f64;
    let mut h = DMatrix::<f64>::zeros(k, k);
    let mut x = vec![1.0; k];
    for row in dataset.rows() {
        x[..k - 1].copy_from_slice(row);
        for i in 0..k {
            for j in i..k {
                h[(i, j)] += x[i] * x[j];
            }
        }
    }
    let s2 = noise_std * noise_std;
    for i in 0..k {
        for j in i..k {
            h[(i, j)] /= n;
            h[(j, i)] = h[(i, j)];
        }
        h[(i, i)] += s2 * prior.precision(i) / n;
    }
    let chol = h
        .cholesky()
        .ok_or(Error::Numeric("preconditioner is not positive definite"))?;
    let lt = chol.l().transpose();
    lt.solve_upper_triangular(&DMatrix::identity(k, k))
        .ok_or(Error::Singular)
}

/// `fit_bnn` that also returns the loss of every step. `init` overrides the
/// default starting means and scales.
pub fn fit_bnn_traced(
    dataset: &RegressionDataset,
    prior: &PriorConfig,
    hyper: &TrainingConfig,
    seed: u64,
    init: Option<(&[f64], &[f64])>,
) -> Result<BnnFit> {
    if dataset.is_empty() {
        return Err(Error::EmptyInput);
    }
    let order = dataset.order();
    prior.validate(order)?;
    hyper.validate()?;
    let k = weight_count(order);
    let width = dataset.width();
    let rows = dataset.len();
    let nf = rows as f64;
    let s2 = hyper.noise_std * hyper.noise_std;

    let (mu0, sigma0): (Vec<f64>, Vec<f64>) = match init {
        Some((m, s)) => {
            if m.len() != k || s.len() != k {
                return Err(Error::Shape(
                    "initial posterior has the wrong length".into(),
                ));
            }
            (m.to_vec(), s.to_vec())
        }
        None => {
            let mut m = vec![0.0; k];
            m[3 * (order + 1)] = 1.0;
            (m, vec![hyper.init_scale; k])
        }
    };
    let p = if hyper.precondition {
        preconditioner(dataset, prior, hyper.noise_std)?
    } else {
        DMatrix::identity(k, k)
    };
    let mu0 = DVector::from_vec(mu0);

    // θ are the first k parameters, ρ the last k.
    let mut params = vec![0.0; 2 * k];
    for i in 0..k {
        params[k + i] = softplus_inv(sigma0[i]);
    }
    let mut adam = Adam::new(2 * k);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order_idx: Vec<usize> = (0..rows).collect();
    let batch = hyper.batch_size.min(rows);
    let steps_per_epoch = rows.div_ceil(batch);
    let total = steps_per_epoch * hyper.epochs;
    let mut losses = Vec::with_capacity(total);

    let mut grad = vec![0.0; 2 * k];
    let mut g_mu = vec![0.0; k];
    let mut g_sigma = vec![0.0; k];
    let mut eps = vec![0.0; k];
    let mut w = vec![0.0; k];
    let mut x = vec![1.0; k];
    let targets = dataset.targets();
    let mut step = 0;

    for _ in 0..hyper.epochs {
        order_idx.shuffle(&mut rng);
        for chunk in order_idx.chunks(batch) {
            let theta = DVector::from_column_slice(&params[..k]);
            let mu = &mu0 + &p * theta;
            let sigma: Vec<f64> = params[k..].iter().map(|&r| softplus(r)).collect();
            g_mu.iter_mut().for_each(|g| *g = 0.0);
            g_sigma.iter_mut().for_each(|g| *g = 0.0);
            let mut loss = 0.0;
            let bf = chunk.len() as f64;
            let draws = hyper.mc_samples as f64;

            for _ in 0..hyper.mc_samples {
                for i in 0..k {
                    eps[i] = StandardNormal.sample(&mut rng);
                    w[i] = mu[i] + sigma[i] * eps[i];
                }
                if prior.overrides.is_none() {
                    // single-sample KL estimate; d log q / dμ vanishes along the path
                    for i in 0..k {
                        let (nlp, dnlp) = prior.neg_log_grad(w[i]);
                        let log_q = -sigma[i].ln() - 0.5 * eps[i] * eps[i];
                        loss += (log_q + nlp) / (nf * draws);
                        g_mu[i] += dnlp / (nf * draws);
                        g_sigma[i] += (dnlp * eps[i] - 1.0 / sigma[i]) / (nf * draws);
                    }
                }
                if hyper.likelihood == LikelihoodEstimator::Sampled {
                    for &r in chunk {
                        x[..width].copy_from_slice(dataset.row(r));
                        let resid = targets[r] - x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
                        loss += 0.5 * resid * resid / (s2 * bf * draws);
                        let c = -resid / (s2 * bf * draws);
                        for i in 0..k {
                            g_mu[i] += c * x[i];
                            g_sigma[i] += c * x[i] * eps[i];
                        }
                    }
                }
            }
            if let Some(o) = &prior.overrides {
                for i in 0..k {
                    let (m, tau) = (o[i].mean, o[i].std);
                    let d = mu[i] - m;
                    loss += ((tau / sigma[i]).ln()
                        + (sigma[i] * sigma[i] + d * d) / (2.0 * tau * tau)
                        - 0.5)
                        / nf;
                    g_mu[i] += d / (tau * tau * nf);
                    g_sigma[i] += (sigma[i] / (tau * tau) - 1.0 / sigma[i]) / nf;
                }
            }
            if hyper.likelihood == LikelihoodEstimator::Analytic {
                for &r in chunk {
                    x[..width].copy_from_slice(dataset.row(r));
                    let mut pred = 0.0;
                    let mut var = 0.0;
                    for i in 0..k {
                        pred += x[i] * mu[i];
                        var += sigma[i] * sigma[i] * x[i] * x[i];
                    }
                    let resid = targets[r] - pred;
                    loss += 0.5 * (resid * resid + var) / (s2 * bf);
                    let c = -resid / (s2 * bf);
                    for i in 0..k {
                        g_mu[i] += c * x[i];
                        g_sigma[i] += sigma[i] * x[i] * x[i] / (s2 * bf);
                    }
                }
            }

            if !loss.is_finite() || g_mu.iter().chain(&g_sigma).any(|g| !g.is_finite()) {
                return Err(Error::Training { step });
            }
            losses.push(loss);
            let g_theta = p.tr_mul(&DVector::from_column_slice(&g_mu));
            for i in 0..k {
                grad[i] = g_theta[i];
                grad[k + i] = g_sigma[i] * sigmoid(params[k + i]);
            }
            adam.step(&mut params, &grad, hyper.rate(step, total));
            step += 1;
        }
    }

    let theta = DVector::from_column_slice(&params[..k]);
    let means: Vec<f64> = (&mu0 + &p * theta).iter().copied().collect();
    let scales: Vec<f64> = params[k..]
        .iter()
        .map(|&r| softplus(r).max(f64::MIN_POSITIVE))
        .collect();
    if means.iter().any(|m| !m.is_finite()) {
        return Err(Error::Training { step });
    }
    let posterior = Posterior {
        layout_version: LAYOUT_VERSION.to_string(),
        order,
        means,
        scales,
        noise_std: hyper.noise_std,
        training_meta: TrainingMeta {
            home_id: dataset.home_id().to_string(),
            samples: rows,
            seed,
            steps: step,
            final_loss: losses.last().copied().unwrap_or(f64::NAN),
            prior: prior.clone(),
            config: hyper.clone(),
        },
    };
    Ok(BnnFit { posterior, losses })
}
