use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mobility family multiplying `u_xxx` in the flux.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mobility {
    /// `|u|^n`.
    Degenerate,
    /// `(eps^2 + u^2)^(n/2)`.
    Simple,
    /// `eps^n + (1 - eps) (eps^2 + u^2)^(n/2)`.
    Homotopy,
    /// `1`: the bi-harmonic flow.
    Unit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub n: f64,
    pub epsilon: f64,
    pub mobility: Mobility,
}

impl ModelParams {
    pub fn new(n: f64, epsilon: f64, mobility: Mobility) -> Result<Self> {
        let p = Self { n, epsilon, mobility };
        p.validate()?;
        Ok(p)
    }

    pub fn unit() -> Self {
        Self {
            n: 1.0,
            epsilon: 1.0,
            mobility: Mobility::Unit,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.n.is_finite() && self.n > 0.0) {
            return Err(Error::InvalidInput(format!("exponent n = {} must be > 0", self.n)));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::InvalidInput(format!(
                "epsilon = {} outside [0, 1]",
                self.epsilon
            )));
        }
        if self.mobility == Mobility::Degenerate && self.epsilon != 0.0 {
            return Err(Error::InvalidInput("degenerate mobility requires epsilon = 0".into()));
        }
        Ok(())
    }

    /// Whether the mobility is bounded below by a positive constant.
    pub fn is_uniformly_parabolic(&self) -> bool {
        match self.mobility {
            Mobility::Unit => true,
            Mobility::Degenerate => false,
            Mobility::Simple | Mobility::Homotopy => self.epsilon > 0.0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_requires_zero_epsilon() {
        assert!(ModelParams::new(1.0, 0.1, Mobility::Degenerate).is_err());
        assert!(ModelParams::new(1.0, 0.0, Mobility::Degenerate).is_ok());
    }

    #[test]
    fn rejects_bad_exponent_and_epsilon() {
        assert!(ModelParams::new(0.0, 0.1, Mobility::Simple).is_err());
        assert!(ModelParams::new(1.0, 1.5, Mobility::Simple).is_err());
        assert!(ModelParams::new(f64::NAN, 0.1, Mobility::Simple).is_err());
    }
}
