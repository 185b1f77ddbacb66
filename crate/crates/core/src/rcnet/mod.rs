//! nRnC thermal networks.
//!
//! The envelope is a chain of `n` resistors with `n - 1` envelope capacitors;
//! the interior is one more capacitor `C_n` that receives the HVAC heat flux.
//! Units are consistent but arbitrary: with time in seconds, `R * C` is a time
//! constant in seconds and `Q * R` a temperature lift in °F.

mod coeffs;
mod discretize;
mod expm;
mod simulate;
mod state_space;

pub use coeffs::{cayley_hamilton_residual, difference_coefficients, DiffCoeffs};
pub use discretize::{discretize, discretize_with_hold, DiscretizedSystem, InputHold};
pub use expm::matrix_exponential;
pub use simulate::{initial_state, simulate_difference, simulate_state_space};
pub use state_space::{build_state_space, StateSpace};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Largest supported network order.
pub const MAX_ORDER: usize = 5;

/// One input sample `(T_out, k_heat, k_cool)`.
pub type Input = [f64; 3];

/// Physical parameters of an nRnC network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RcParams {
    pub order: usize,
    pub resistances: Vec<f64>,
    pub capacitances: Vec<f64>,
    pub q_heat: f64,
    pub q_cool: f64,
}

impl RcParams {
    pub fn new(
        resistances: Vec<f64>,
        capacitances: Vec<f64>,
        q_heat: f64,
        q_cool: f64,
    ) -> Result<Self> {
        let p = RcParams {
            order: resistances.len(),
            resistances,
            capacitances,
            q_heat,
            q_cool,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.order == 0 || self.order > MAX_ORDER {
            return Err(Error::InvalidParameter(format!(
                "order {} outside 1..={MAX_ORDER}",
                self.order
            )));
        }
        if self.resistances.len() != self.order || self.capacitances.len() != self.order {
            return Err(Error::InvalidParameter(
                "need exactly `order` resistances and capacitances".into(),
            ));
        }
        let positive = |v: &f64| v.is_finite() && *v > 0.0;
        if !self.resistances.iter().all(positive) || !self.capacitances.iter().all(positive) {
            return Err(Error::InvalidParameter(
                "resistances and capacitances must be positive".into(),
            ));
        }
        if !(self.q_heat.is_finite()
            && self.q_heat >= 0.0
            && self.q_cool.is_finite()
            && self.q_cool >= 0.0)
        {
            return Err(Error::InvalidParameter(
                "heat fluxes must be non-negative".into(),
            ));
        }
        Ok(())
    }

    pub fn total_resistance(&self) -> f64 {
        self.resistances.iter().sum()
    }

    /// Same network with every capacitance (or resistance) scaled.
    pub fn scaled(&self, resistance_factor: f64, capacitance_factor: f64) -> RcParams {
        RcParams {
            order: self.order,
            resistances: self
                .resistances
                .iter()
                .map(|r| r * resistance_factor)
                .collect(),
            capacitances: self
                .capacitances
                .iter()
                .map(|c| c * capacitance_factor)
                .collect(),
            q_heat: self.q_heat,
            q_cool: self.q_cool,
        }
    }
}

/// Indoor equilibrium for constant inputs.
pub fn steady_state(params: &RcParams, t_out: f64, k_heat: bool, k_cool: bool) -> f64 {
    let q =
        f64::from(u8::from(k_heat)) * params.q_heat - f64::from(u8::from(k_cool)) * params.q_cool;
    t_out + q * params.total_resistance()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn steady_state_examples() {
        let p = RcParams::new(vec![2.0, 4.0], vec![1.0, 1.0], 5.0, 3.0).unwrap();
        assert_eq!(steady_state(&p, 30.0, false, false), 30.0);
        assert_eq!(steady_state(&p, 30.0, true, false), 60.0);
        assert_eq!(steady_state(&p, 90.0, false, true), 72.0);
    }

    #[test]
    fn rejects_invalid() {
        assert!(RcParams::new(vec![1.0, 0.0], vec![1.0, 1.0], 1.0, 1.0).is_err());
        assert!(RcParams::new(vec![1.0], vec![-1.0], 1.0, 1.0).is_err());
        assert!(RcParams::new(vec![1.0], vec![1.0, 2.0], 1.0, 1.0).is_err());
        assert!(RcParams::new(vec![1.0; 6], vec![1.0; 6], 1.0, 1.0).is_err());
        assert!(RcParams::new(vec![1.0], vec![1.0], -1.0, 1.0).is_err());
    }

    #[test]
    fn json_field_names() {
        let p = RcParams::new(vec![2.0], vec![3.0], 1.5, 0.5).unwrap();
        let v: serde_json::Value = serde_json::to_value(&p).unwrap();
        assert_eq!(v["order"], 1);
        assert_eq!(v["resistances"][0], 2.0);
        assert_eq!(v["capacitances"][0], 3.0);
        assert_eq!(v["q_heat"], 1.5);
        assert_eq!(v["q_cool"], 0.5);
        let back: RcParams = serde_json::from_value(v).unwrap();
        assert_eq!(back, p);
    }
}
