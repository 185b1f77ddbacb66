//! Matrix exponential by scaling and squaring with diagonal Padé approximants
//! (Higham, "The scaling and squaring method for the matrix exponential
//! revisited", 2005).

use nalgebra::DMatrix;

use crate::{Error, Result};

const PADE3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const PADE5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const PADE7: [f64; 8] = [
    17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0,
];
const PADE9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

// Largest 1-norm for which each degree meets double-precision backward error.
const THETA: [(usize, f64); 4] = [
    (3, 1.495585217958292e-2),
    (5, 2.539398330063230e-1),
    (7, 9.504178996162932e-1),
    (9, 2.097847961257068e0),
];
const THETA13: f64 = 5.371920351148152e0;

fn one_norm(a: &DMatrix<f64>) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn pade_low(a: &DMatrix<f64>, coeffs: &[f64]) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let a2 = a * a;
    let mut power = DMatrix::identity(n, n);
    let mut u = DMatrix::zeros(n, n);
    let mut v = DMatrix::zeros(n, n);
    for k in (0..coeffs.len()).step_by(2) {
        v += &power * coeffs[k];
        u += &power * coeffs[k + 1];
        power = &power * &a2;
    }
    (a * u, v)
}

fn pade13(a: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let b = &PADE13;
    let n = a.nrows();
    let ident = DMatrix::<f64>::identity(n, n);
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let inner_u = &a6 * b[13] + &a4 * b[11] + &a2 * b[9];
    let u = a * (&a6 * inner_u + &a6 * b[7] + &a4 * b[5] + &a2 * b[3] + &ident * b[1]);
    let inner_v = &a6 * b[12] + &a4 * b[10] + &a2 * b[8];
    let v = &a6 * inner_v + &a6 * b[6] + &a4 * b[4] + &a2 * b[2] + &ident * b[0];
    (u, v)
}

/// `exp(A * delta)`.
pub fn matrix_exponential(a: &DMatrix<f64>, delta: f64) -> Result<DMatrix<f64>> {
    if !a.is_square() {
        return Err(Error::Shape(format!(
            "matrix exponential of a {}x{} matrix",
            a.nrows(),
            a.ncols()
        )));
    }
    if !delta.is_finite() || a.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric("matrix exponential input"));
    }
    let n = a.nrows();
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let scaled = a * delta;
    let norm = one_norm(&scaled);

    let (u, v, squarings) = match THETA.iter().find(|(_, theta)| norm <= *theta) {
        Some(&(degree, _)) => {
            let coeffs: &[f64] = match degree {
                3 => &PADE3,
                5 => &PADE5,
                7 => &PADE7,
                _ => &PADE9,
            };
            let (u, v) = pade_low(&scaled, coeffs);
            (u, v, 0)
        }
        None => {
            let s = (norm / THETA13).log2().ceil().max(0.0) as i32;
            let reduced = &scaled * 2f64.powi(-s);
            let (u, v) = pade13(&reduced);
            (u, v, s)
        }
    };

    let p = &v + &u;
    let q = &v - &u;
    let mut result = q.lu().solve(&p).ok_or(Error::Singular)?;
    for _ in 0..squarings {
        result = &result * &result;
    }
    if result.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric("matrix exponential result"));
    }
    Ok(result)
}
