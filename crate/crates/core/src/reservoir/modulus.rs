use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

use super::readout::Readout;

pub type ModulusFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// How an output tolerance `ε` becomes a state tolerance `δ` for a readout.
#[derive(Clone)]
pub enum Modulus {
    /// `‖h(x) - h(x')‖ ≤ L·‖x - x'‖` on the relevant ball.
    Lipschitz(f64),
    /// User-supplied `ε ↦ δ` with `‖x - x'‖ < δ ⇒ ‖h(x) - h(x')‖ < ε`.
    Custom(ModulusFn),
}

impl fmt::Debug for Modulus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Lipschitz(l) => write!(f, "Lipschitz({l})"),
            Self::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

impl Modulus {
    /// Lipschitz bound of `h` on the ball of the given radius, or the
    /// override when one is supplied.
    pub fn resolve(readout: &Readout, radius: f64, supplied: Option<&Modulus>) -> Result<Self> {
        if let Some(m) = supplied {
            if let Self::Lipschitz(l) = m {
                if !(l.is_finite() && *l >= 0.0) {
                    return Err(Error::InvalidArgument(format!("Lipschitz constant {l} is invalid")));
                }
            }
            return Ok(m.clone());
        }
        Ok(Self::Lipschitz(readout.lipschitz_on_ball(radius)?))
    }

    pub fn lipschitz(&self) -> Option<f64> {
        match self {
            Self::Lipschitz(l) => Some(*l),
            Self::Custom(_) => None,
        }
    }

    /// State tolerance for output tolerance `eps`, capped at `cap`.
    pub fn delta_for(&self, eps: f64, cap: f64) -> Result<f64> {
        let d = match self {
            Self::Lipschitz(l) if *l > 0.0 => eps / l,
            Self::Lipschitz(_) => f64::INFINITY,
            Self::Custom(f) => f(eps),
        };
        if !(d > 0.0) {
            return Err(Error::InvalidArgument(format!("modulus gave non-positive δ = {d} for ε = {eps}")));
        }
        Ok(d.min(cap))
    }

    /// Output deviation implied by a state deviation `state_err`, given that
    /// `state_err < δ(eps)` for the allocated `eps`.
    pub fn output_bound(&self, state_err: f64, eps: f64, cap: f64) -> f64 {
        match self {
            Self::Lipschitz(l) => l * state_err,
            Self::Custom(_) => match self.delta_for(eps, cap) {
                Ok(d) if state_err < d => eps,
                _ => f64::INFINITY,
            },
        }
    }
}
