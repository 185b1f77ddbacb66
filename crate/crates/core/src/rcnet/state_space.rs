use nalgebra::DMatrix;

use super::RcParams;
use crate::Result;

/// Continuous-time model `dx/dt = A x + B u`, `y = Cm x + D u` with state
/// `[T_1, ..., T_{n-1}, T_in]` and input `(T_out, k_heat, k_cool)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub cm: DMatrix<f64>,
    pub d: DMatrix<f64>,
}

impl StateSpace {
    pub fn order(&self) -> usize {
        self.a.nrows()
    }
}

pub fn build_state_space(params: &RcParams) -> Result<StateSpace> {
    params.validate()?;
    let n = params.order;
    let r = &params.resistances;
    let c = &params.capacitances;
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        // Conductance towards the outside (i = 0) or the previous node.
        let back = 1.0 / (c[i] * r[i]);
        a[(i, i)] -= back;
        if i > 0 {
            a[(i, i - 1)] = back;
        }
        if i + 1 < n {
            let fwd = 1.0 / (c[i] * r[i + 1]);
            a[(i, i)] -= fwd;
            a[(i, i + 1)] = fwd;
        }
    }
    let mut b = DMatrix::zeros(n, 3);
    b[(0, 0)] = 1.0 / (c[0] * r[0]);
    b[(n - 1, 1)] = params.q_heat / c[n - 1];
    b[(n - 1, 2)] = -params.q_cool / c[n - 1];
    let mut cm = DMatrix::zeros(1, n);
    cm[(0, n - 1)] = 1.0;
    Ok(StateSpace {
        a,
        b,
        cm,
        d: DMatrix::zeros(1, 3),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_order() {
        let ss =
            build_state_space(&RcParams::new(vec![1.0], vec![1.0], 1.0, 1.0).unwrap()).unwrap();
        assert_eq!(ss.a, DMatrix::from_row_slice(1, 1, &[-1.0]));
        assert_eq!(ss.b, DMatrix::from_row_slice(1, 3, &[1.0, 1.0, -1.0]));
        assert_eq!(ss.cm, DMatrix::from_row_slice(1, 1, &[1.0]));
        assert_eq!(ss.d, DMatrix::zeros(1, 3));
    }

    #[test]
    fn second_order() {
        let p = RcParams::new(vec![2.0, 4.0], vec![3.0, 5.0], 10.0, 8.0).unwrap();
        let ss = build_state_space(&p).unwrap();
        let expected = DMatrix::from_row_slice(
            2,
            2,
            &[
                -(1.0 / 6.0 + 1.0 / 12.0),
                1.0 / 12.0,
                1.0 / 20.0,
                -1.0 / 20.0,
            ],
        );
        assert!((ss.a.clone() - expected).norm() < 1e-15);
        assert_eq!(
            ss.b.row(1).iter().copied().collect::<Vec<_>>(),
            vec![0.0, 2.0, -1.6]
        );
        assert_eq!(
            ss.b.row(0).iter().copied().collect::<Vec<_>>(),
            vec![1.0 / 6.0, 0.0, 0.0]
        );
        assert_eq!(ss.cm, DMatrix::from_row_slice(1, 2, &[0.0, 1.0]));
    }

    #[test]
    fn tridiagonal_with_heat_balance() {
        let p =
            RcParams::new(vec![1.0, 2.0, 3.0, 4.0], vec![5.0, 6.0, 7.0, 8.0], 1.0, 1.0).unwrap();
        let ss = build_state_space(&p).unwrap();
        for i in 0..4 {
            assert!(ss.a[(i, i)] < 0.0);
            for j in 0..4 {
                if i.abs_diff(j) == 1 {
                    assert!(ss.a[(i, j)] > 0.0);
                } else if i != j {
                    assert_eq!(ss.a[(i, j)], 0.0);
                }
            }
            // Uniform temperatures equal to T_out are an equilibrium.
            let row_sum: f64 = ss.a.row(i).sum() + ss.b[(i, 0)];
            assert!(row_sum.abs() < 1e-15);
        }
        assert!(ss.a.clone().try_inverse().is_some());
    }
}
