use crate::{Error, Result};

/// Applies the first-difference operator `d` times.
pub fn difference(series: &[f64], d: usize) -> Result<Vec<f64>> {
    if series.len() <= d {
        return Err(Error::InsufficientData {
            needed: d + 1,
            available: series.len(),
        });
    }
    let mut out = series.to_vec();
    for _ in 0..d {
        out = out.windows(2).map(|w| w[1] - w[0]).collect();
    }
    Ok(out)
}

/// Sample autocorrelations `0..=max_lag` with the biased (1/N) autocovariance,
/// which keeps every value inside [−1, 1].
pub fn acf(series: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    if series.len() <= max_lag {
        return Err(Error::InsufficientData {
            needed: max_lag + 1,
            available: series.len(),
        });
    }
    let n = series.len() as f64;
    let mean = series.iter().sum::<f64>() / n;
    let centered: Vec<f64> = series.iter().map(|v| v - mean).collect();
    let c0 = centered.iter().map(|v| v * v).sum::<f64>() / n;
    if !(c0 > f64::EPSILON * mean.abs().max(1.0).powi(2)) {
        return Err(Error::DegenerateSeries);
    }
    Ok((0..=max_lag)
        .map(|k| {
            let ck = centered[k..]
                .iter()
                .zip(&centered)
                .map(|(a, b)| a * b)
                .sum::<f64>()
                / n;
            (ck / c0).clamp(-1.0, 1.0)
        })
        .collect())
}

/// Partial autocorrelations `1..=max_lag` by the Durbin–Levinson recursion.
/// Index 0 holds lag 1.
pub fn pacf(series: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    let r = acf(series, max_lag)?;
    Ok(durbin_levinson(&r[1..]).1)
}

/// AR coefficients of order `len(r)` and the partial autocorrelations, from
/// autocorrelations `r[0] = ρ(1), r[1] = ρ(2), ...`.
pub(crate) fn durbin_levinson(r: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut phi: Vec<f64> = Vec::with_capacity(r.len());
    let mut partial = Vec::with_capacity(r.len());
    let mut v = 1.0;
    for k in 0..r.len() {
        let num = r[k]
            - phi
                .iter()
                .enumerate()
                .map(|(j, p)| p * r[k - 1 - j])
                .sum::<f64>();
        let a = if v > 0.0 {
            (num / v).clamp(-1.0, 1.0)
        } else {
            0.0
        };
        let prev = phi.clone();
        for j in 0..k {
            phi[j] = prev[j] - a * prev[k - 1 - j];
        }
        phi.push(a);
        partial.push(a);
        v *= 1.0 - a * a;
    }
    (phi, partial)
}

/// Maps unconstrained reals to the coefficients of a polynomial with all roots
/// outside the unit circle, via partial autocorrelations `tanh(x_k)`.
pub(crate) fn stationary_from_unconstrained(x: &[f64]) -> Vec<f64> {
    let mut phi: Vec<f64> = Vec::with_capacity(x.len());
    for (k, &xk) in x.iter().enumerate() {
        let a = xk.tanh();
        let prev = phi.clone();
        for j in 0..k {
            phi[j] = prev[j] - a * prev[k - 1 - j];
        }
        phi.push(a);
    }
    phi
}

/// Inverse of [`stationary_from_unconstrained`] for a stationary polynomial.
pub(crate) fn unconstrained_from_stationary(phi: &[f64]) -> Vec<f64> {
    let mut cur = phi.to_vec();
    let mut x = vec![0.0; phi.len()];
    for k in (0..phi.len()).rev() {
        let a = cur[k].clamp(-1.0 + 1e-12, 1.0 - 1e-12);
        x[k] = a.atanh();
        let denom = 1.0 - a * a;
        let prev = cur.clone();
        for j in 0..k {
            cur[j] = (prev[j] + a * prev[k - 1 - j]) / denom;
        }
        cur.truncate(k);
    }
    x
}
