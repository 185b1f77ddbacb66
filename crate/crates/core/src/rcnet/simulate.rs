use super::{DiffCoeffs, DiscretizedSystem, Input, StateSpace};
use crate::{Error, Result};

/// Envelope nodes start halfway between indoors and outdoors; the interior
/// node starts at the indoor reading.
pub fn initial_state(order: usize, t_in: f64, t_out: f64) -> Vec<f64> {
    let mut x = vec![0.5 * (t_in + t_out); order];
    x[order - 1] = t_in;
    x
}

/// Dense row-major copies of the step matrices, for the inner loop.
struct Stepper {
    n: usize,
    phi: Vec<f64>,
    now: Vec<f64>,
    next: Vec<f64>,
}

impl Stepper {
    fn new(ds: &DiscretizedSystem) -> Self {
        let n = ds.order();
        let g12 = &ds.gamma1 - &ds.gamma2;
        Stepper {
            n,
            phi: (0..n * n).map(|k| ds.phi[(k / n, k % n)]).collect(),
            now: (0..n * 3).map(|k| g12[(k / 3, k % 3)]).collect(),
            next: (0..n * 3).map(|k| ds.gamma2[(k / 3, k % 3)]).collect(),
        }
    }

    fn advance(&self, x: &[f64], u_now: &Input, u_next: &Input, out: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            let mut acc = 0.0;
            for j in 0..n {
                acc += self.phi[i * n + j] * x[j];
            }
            for j in 0..3 {
                acc += self.now[i * 3 + j] * u_now[j] + self.next[i * 3 + j] * u_next[j];
            }
            out[i] = acc;
        }
    }
}

impl DiscretizedSystem {
    /// Single state update from `u(t)` to `u(t+δ)`.
    pub fn advance(&self, x: &[f64], u_now: &Input, u_next: &Input) -> Vec<f64> {
        let mut out = vec![0.0; self.order()];
        Stepper::new(self).advance(x, u_now, u_next, &mut out);
        out
    }
}

/// Rolls the exact state recursion over `u`; one output per input row.
pub fn simulate_state_space(
    ds: &DiscretizedSystem,
    ss: &StateSpace,
    u: &[Input],
    x0: &[f64],
) -> Result<Vec<f64>> {
    let n = ds.order();
    if x0.len() != n || ss.order() != n {
        return Err(Error::Shape(format!(
            "initial state has {} entries for order {n}",
            x0.len()
        )));
    }
    let cm: Vec<f64> = ss.cm.iter().copied().collect();
    let output = |x: &[f64]| x.iter().zip(&cm).map(|(a, b)| a * b).sum::<f64>();

    let stepper = Stepper::new(ds);
    let mut x = x0.to_vec();
    let mut scratch = vec![0.0; n];
    let mut y = Vec::with_capacity(u.len());
    for t in 0..u.len() {
        y.push(output(&x));
        if t + 1 < u.len() {
            stepper.advance(&x, &u[t], &u[t + 1], &mut scratch);
            std::mem::swap(&mut x, &mut scratch);
        }
    }
    Ok(y)
}

/// Free-running difference equation: the first `n` outputs are `y_init`,
/// later ones feed back as lags.
pub fn simulate_difference(dc: &DiffCoeffs, u: &[Input], y_init: &[f64]) -> Result<Vec<f64>> {
    let n = dc.order;
    if y_init.len() < n {
        return Err(Error::InsufficientData {
            needed: n,
            available: y_init.len(),
        });
    }
    if u.len() < n + 1 {
        return Err(Error::InsufficientData {
            needed: n + 1,
            available: u.len(),
        });
    }
    let mut y: Vec<f64> = y_init[..n].to_vec();
    let mut inputs = Vec::with_capacity(n + 1);
    let mut lags = Vec::with_capacity(n);
    for t in n..u.len() {
        inputs.clear();
        inputs.extend((0..=n).map(|i| u[t - i]));
        lags.clear();
        lags.extend((1..=n).map(|i| y[t - i]));
        y.push(dc.step(&inputs, &lags));
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rcnet::{
        build_state_space, difference_coefficients, discretize, steady_state, RcParams,
    };
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params() -> RcParams {
        RcParams::new(vec![2.0, 4.0], vec![1200.0, 600.0], 0.8, 0.6).unwrap()
    }

    /// Forward Euler with `substeps` per sample and inputs interpolated linearly.
    fn euler_oracle(
        p: &RcParams,
        u: &[Input],
        x0: &[f64],
        delta: f64,
        substeps: usize,
    ) -> Vec<f64> {
        let ss = build_state_space(p).unwrap();
        let n = p.order;
        let h = delta / substeps as f64;
        let mut x = x0.to_vec();
        let mut y = vec![x[n - 1]];
        for t in 0..u.len() - 1 {
            for k in 0..substeps {
                let w = k as f64 / substeps as f64;
                let ui: Vec<f64> = (0..3)
                    .map(|j| u[t][j] * (1.0 - w) + u[t + 1][j] * w)
                    .collect();
                let dx: Vec<f64> = (0..n)
                    .map(|i| {
                        (0..n).map(|j| ss.a[(i, j)] * x[j]).sum::<f64>()
                            + (0..3).map(|j| ss.b[(i, j)] * ui[j]).sum::<f64>()
                    })
                    .collect();
                for i in 0..n {
                    x[i] += h * dx[i];
                }
            }
            y.push(x[n - 1]);
        }
        y
    }

    #[test]
    fn equilibrium_stays_put() {
        let p = params();
        let ss = build_state_space(&p).unwrap();
        let ds = discretize(&ss, 300.0).unwrap();
        let u = vec![[41.0, 0.0, 0.0]; 200];
        let y = simulate_state_space(&ds, &ss, &u, &[41.0, 41.0]).unwrap();
        assert_eq!(y.len(), 200);
        assert!(y.iter().all(|v| (v - 41.0).abs() < 1e-10));
    }

    #[test]
    fn heating_converges_to_steady_state() {
        let p = params();
        let ss = build_state_space(&p).unwrap();
        let ds = discretize(&ss, 300.0).unwrap();
        let u = vec![[20.0, 1.0, 0.0]; 2000];
        let y = simulate_state_space(&ds, &ss, &u, &[20.0, 20.0]).unwrap();
        let target = steady_state(&p, 20.0, true, false);
        assert!((y[1999] - target).abs() < 1e-6, "{} vs {target}", y[1999]);
    }

    #[test]
    fn matches_fine_euler() {
        let p = params();
        let ss = build_state_space(&p).unwrap();
        let ds = discretize(&ss, 300.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u: Vec<Input> = (0..100)
            .map(|_| {
                [
                    rng.random_range(10.0..40.0),
                    f64::from(rng.random_bool(0.3)),
                    f64::from(rng.random_bool(0.2)),
                ]
            })
            .collect();
        let x0 = [30.0, 60.0];
        let y = simulate_state_space(&ds, &ss, &u, &x0).unwrap();
        let oracle = euler_oracle(&p, &u, &x0, 300.0, 10_000);
        for (a, b) in y.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-4, "{a} vs {b}");
        }
    }

    #[test]
    fn difference_form_reproduces_state_space() {
        let p = RcParams::new(vec![1.5, 2.5, 1.0], vec![900.0, 700.0, 500.0], 1.0, 0.7).unwrap();
        let ss = build_state_space(&p).unwrap();
        let ds = discretize(&ss, 300.0).unwrap();
        let dc = difference_coefficients(&ds, &ss).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let u: Vec<Input> = (0..1000)
            .map(|_| {
                [
                    rng.random_range(0.0..50.0),
                    f64::from(rng.random_bool(0.3)),
                    f64::from(rng.random_bool(0.2)),
                ]
            })
            .collect();
        let y = simulate_state_space(&ds, &ss, &u, &[25.0, 40.0, 65.0]).unwrap();
        let z = simulate_difference(&dc, &u, &y[..3]).unwrap();
        for (a, b) in y.iter().zip(&z) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn difference_equilibrium_and_offset() {
        let p = params();
        let ss = build_state_space(&p).unwrap();
        let ds = discretize(&ss, 300.0).unwrap();
        let mut dc = difference_coefficients(&ds, &ss).unwrap();
        let u = vec![[55.0, 0.0, 0.0]; 3000];
        let y = simulate_difference(&dc, &u, &[55.0, 55.0]).unwrap();
        assert!(y.iter().all(|v| (v - 55.0).abs() < 1e-9));

        dc.offset = 1.0;
        let y = simulate_difference(&dc, &u, &[55.0, 55.0]).unwrap();
        let denom = 1.0 + dc.e.iter().sum::<f64>();
        let expected = 55.0 + 1.0 / denom;
        assert!(
            (y[2999] - expected).abs() < 1e-6 * expected.abs(),
            "{} vs {expected}",
            y[2999]
        );
    }

    #[test]
    fn shape_and_length_errors() {
        let p = params();
        let ss = build_state_space(&p).unwrap();
        let ds = discretize(&ss, 300.0).unwrap();
        let dc = difference_coefficients(&ds, &ss).unwrap();
        assert!(matches!(
            simulate_state_space(&ds, &ss, &[[0.0; 3]; 4], &[1.0]),
            Err(Error::Shape(_))
        ));
        assert!(matches!(
            simulate_difference(&dc, &[[0.0; 3]; 4], &[1.0]),
            Err(Error::InsufficientData { .. })
        ));
        assert!(simulate_difference(&dc, &[[0.0; 3]; 2], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn initial_state_layout() {
        assert_eq!(initial_state(3, 70.0, 30.0), vec![50.0, 50.0, 70.0]);
        assert_eq!(initial_state(1, 70.0, 30.0), vec![70.0]);
    }
}
