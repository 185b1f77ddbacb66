use nalgebra::DMatrix;

use super::{matrix_exponential, StateSpace};
use crate::{Error, Result};

/// Within-step behaviour of one input channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputHold {
    /// Linear interpolation between consecutive samples.
    Linear,
    /// Sample held constant until the next one.
    Zero,
}

/// Exact discretization for step `delta`:
/// `x(t+δ) = Φ x(t) + (Γ₁ − Γ₂) u(t) + Γ₂ u(t+δ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretizedSystem {
    pub step: f64,
    pub phi: DMatrix<f64>,
    pub gamma1: DMatrix<f64>,
    pub gamma2: DMatrix<f64>,
}

impl DiscretizedSystem {
    pub fn order(&self) -> usize {
        self.phi.nrows()
    }

    /// Largest eigenvalue modulus of Φ.
    pub fn spectral_radius(&self) -> f64 {
        self.phi
            .complex_eigenvalues()
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }
}

/// Discretization with every input linearly interpolated within a step.
pub fn discretize(ss: &StateSpace, delta: f64) -> Result<DiscretizedSystem> {
    discretize_with_hold(ss, delta, [InputHold::Linear; 3])
}

/// Γ₁ = A⁻¹(Φ − I)B and Γ₂ = A⁻¹(Γ₁/δ − B), obtained from one augmented
/// exponential `exp([[Aδ, Bδ, 0], [0, 0, I], [0, 0, 0]])` so that no
/// difference of nearly equal terms is formed. Zero-hold channels get a zero
/// Γ₂ column.
pub fn discretize_with_hold(
    ss: &StateSpace,
    delta: f64,
    hold: [InputHold; 3],
) -> Result<DiscretizedSystem> {
    let n = ss.order();
    let m = ss.b.ncols();
    if !ss.a.is_square() || ss.b.nrows() != n || m != 3 || ss.cm.shape() != (1, n) {
        return Err(Error::Shape("state-space matrices are inconsistent".into()));
    }
    if !(delta.is_finite() && delta > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "step must be positive, got {delta}"
        )));
    }
    if ss.a.clone().lu().determinant().abs() <= f64::MIN_POSITIVE
        || ss.a.clone().try_inverse().is_none()
    {
        return Err(Error::Singular);
    }

    let size = n + 2 * m;
    let mut aug = DMatrix::zeros(size, size);
    aug.view_mut((0, 0), (n, n)).copy_from(&ss.a);
    aug.view_mut((0, n), (n, m)).copy_from(&ss.b);
    for j in 0..m {
        aug[(n + j, n + m + j)] = 1.0 / delta;
    }
    // aug * δ = [[Aδ, Bδ, 0], [0, 0, I], [0, 0, 0]]
    let e = matrix_exponential(&aug, delta)?;
    let phi = e.view((0, 0), (n, n)).into_owned();
    let gamma1 = e.view((0, n), (n, m)).into_owned();
    let mut gamma2 = e.view((0, n + m), (n, m)).into_owned();
    for (j, h) in hold.iter().enumerate() {
        if *h == InputHold::Zero {
            gamma2.column_mut(j).fill(0.0);
        }
    }
    Ok(DiscretizedSystem {
        step: delta,
        phi,
        gamma1,
        gamma2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rcnet::{build_state_space, RcParams};

    fn scalar_system(a: f64, b: [f64; 3]) -> StateSpace {
        StateSpace {
            a: DMatrix::from_element(1, 1, -a),
            b: DMatrix::from_row_slice(1, 3, &b),
            cm: DMatrix::from_element(1, 1, 1.0),
            d: DMatrix::zeros(1, 3),
        }
    }

    #[test]
    fn scalar_closed_form() {
        let (a, delta) = (0.003, 300.0);
        let b = [0.003, 0.01, -0.02];
        let ds = discretize(&scalar_system(a, b), delta).unwrap();
        let decay = (-a * delta).exp();
        assert!((ds.phi[(0, 0)] - decay).abs() < 1e-15);
        for j in 0..3 {
            let g1 = (1.0 - decay) / a * b[j];
            let g2 = ((1.0 - decay) / (a * delta) - 1.0) * (-1.0 / a) * b[j];
            assert!((ds.gamma1[(0, j)] - g1).abs() <= 1e-12 * g1.abs());
            assert!((ds.gamma2[(0, j)] - g2).abs() <= 1e-9 * g2.abs());
        }
    }

    #[test]
    fn gamma_identities_hold() {
        let p = RcParams::new(vec![2.0, 4.0, 1.0], vec![300.0, 50.0, 100.0], 10.0, 8.0).unwrap();
        let ss = build_state_space(&p).unwrap();
        let ds = discretize(&ss, 300.0).unwrap();
        let n = 3;
        let a_inv = ss.a.clone().try_inverse().unwrap();
        let g1 = &a_inv * (&ds.phi - DMatrix::identity(n, n)) * &ss.b;
        let g2 = &a_inv * (&ds.gamma1 / 300.0 - &ss.b);
        assert!((&g1 - &ds.gamma1).norm() < 1e-10 * ds.gamma1.norm());
        assert!((&g2 - &ds.gamma2).norm() < 1e-8 * ds.gamma2.norm());
        assert!(ds.spectral_radius() < 1.0);
    }

    #[test]
    fn zero_hold_clears_gamma2_columns() {
        let p = RcParams::new(vec![2.0, 4.0], vec![300.0, 500.0], 10.0, 8.0).unwrap();
        let ss = build_state_space(&p).unwrap();
        let lin = discretize(&ss, 300.0).unwrap();
        let zoh = discretize_with_hold(
            &ss,
            300.0,
            [InputHold::Linear, InputHold::Zero, InputHold::Zero],
        )
        .unwrap();
        assert_eq!(zoh.gamma2.column(0), lin.gamma2.column(0));
        assert!(zoh.gamma2.column(1).iter().all(|&x| x == 0.0));
        assert_eq!(zoh.gamma1, lin.gamma1);
    }

    #[test]
    fn singular_a_is_rejected() {
        let ss = StateSpace {
            a: DMatrix::zeros(2, 2),
            b: DMatrix::zeros(2, 3),
            cm: DMatrix::from_row_slice(1, 2, &[0.0, 1.0]),
            d: DMatrix::zeros(1, 3),
        };
        assert!(matches!(discretize(&ss, 300.0), Err(Error::Singular)));
        assert!(discretize(&scalar_system(1.0, [1.0; 3]), 0.0).is_err());
    }
}
