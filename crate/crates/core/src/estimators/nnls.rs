use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// KKT tolerance relative to `‖Aᵀy‖∞`.
pub const NNLS_TOLERANCE: f64 = 1e-8;

/// Lawson–Hanson active-set solution of `min ‖Ax − y‖₂` subject to `x ≥ 0`.
pub fn nnls(a: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    let (m, k) = a.shape();
    if m == 0 || k == 0 {
        return Err(Error::Shape(format!("design is {m}x{k}")));
    }
    if y.len() != m {
        return Err(Error::Shape(format!("{} targets for {m} rows", y.len())));
    }
    if a.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite entry in least-squares problem"));
    }

    let aty = a.tr_mul(y);
    let tol = NNLS_TOLERANCE * aty.amax();
    let mut x = DVector::zeros(k);
    if tol == 0.0 {
        return Ok(x);
    }
    let mut passive = vec![false; k];
    let mut w = aty;
    let max_iter = 3 * k;
    let mut iterations = 0;

    loop {
        let candidate = (0..k)
            .filter(|&j| !passive[j] && w[j] > tol)
            .max_by(|&i, &j| w[i].total_cmp(&w[j]));
        let Some(j) = candidate else { break };
        iterations += 1;
        if iterations > max_iter {
            return Err(Error::Convergence {
                what: "nnls",
                iterations: max_iter,
            });
        }
        passive[j] = true;

        loop {
            let z = solve_passive(a, y, &passive)?;
            if (0..k).all(|i| !passive[i] || z[i] > 0.0) {
                x = z;
                break;
            }
            let mut alpha = f64::INFINITY;
            for i in 0..k {
                if passive[i] && z[i] <= 0.0 {
                    alpha = alpha.min(x[i] / (x[i] - z[i]));
                }
            }
            for i in 0..k {
                if passive[i] {
                    x[i] += alpha * (z[i] - x[i]);
                    if x[i] <= 0.0 || (z[i] <= 0.0 && x[i] <= f64::EPSILON * x.amax()) {
                        x[i] = 0.0;
                        passive[i] = false;
                    }
                }
            }
            if !passive.iter().any(|&p| p) {
                break;
            }
        }
        w = a.tr_mul(&(y - a * &x));
        // A column dropped right after entering would be picked again forever.
        if !passive[j] {
            let again = (0..k)
                .filter(|&i| !passive[i] && w[i] > tol)
                .max_by(|&p, &q| w[p].total_cmp(&w[q]));
            if again == Some(j) {
                break;
            }
        }
    }
    Ok(x)
}

/// Unconstrained least squares on the passive columns; zeros elsewhere.
fn solve_passive(a: &DMatrix<f64>, y: &DVector<f64>, passive: &[bool]) -> Result<DVector<f64>> {
    let cols: Vec<usize> = (0..passive.len()).filter(|&j| passive[j]).collect();
    let sub = a.select_columns(&cols);
    let sol = sub
        .clone()
        .svd(true, true)
        .solve(
            y,
            f64::EPSILON * sub.nrows().max(sub.ncols()) as f64 * sub.norm(),
        )
        .map_err(|_| Error::Numeric("least-squares subproblem"))?;
    let mut z = DVector::zeros(passive.len());
    for (c, &j) in cols.iter().enumerate() {
        z[j] = sol[c];
    }
    Ok(z)
}

/// Largest KKT violation, relative to `‖Aᵀy‖∞`.
pub fn kkt_violation(a: &DMatrix<f64>, y: &DVector<f64>, x: &DVector<f64>) -> f64 {
    let scale = a.tr_mul(y).amax().max(f64::MIN_POSITIVE);
    let w = a.tr_mul(&(y - a * x));
    let mut worst: f64 = 0.0;
    for i in 0..x.len() {
        let v = if x[i] > 0.0 {
            w[i].abs()
        } else {
            w[i].max(0.0)
        };
        worst = worst.max(v / scale);
        worst = worst.max((-x[i]).max(0.0));
    }
    worst
}
