use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{mismatch, Error, Result};
use crate::linalg::{operator_norm, ComplexMatrix, C64, ZERO};

/// One monomial `coefficient · Π z_i^{exponents[i]}` added to output `output`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyTerm {
    pub exponents: Vec<u32>,
    pub coefficient: C64,
    pub output: usize,
}

impl PolyTerm {
    pub fn degree(&self) -> u32 {
        self.exponents.iter().sum()
    }

    fn eval(&self, z: &[C64]) -> C64 {
        self.exponents
            .iter()
            .zip(z)
            .filter(|(&e, _)| e > 0)
            .fold(self.coefficient, |acc, (&e, zi)| acc * zi.powu(e))
    }
}

pub type ReadoutFn = Arc<dyn Fn(&[C64]) -> Vec<C64> + Send + Sync>;

#[derive(Clone)]
pub enum ReadoutMap {
    /// `z ↦ L z + c + Σ terms`.
    Polynomial {
        linear: ComplexMatrix,
        constant: Vec<C64>,
        terms: Vec<PolyTerm>,
    },
    /// Arbitrary continuous map; carries no computable modulus.
    Custom {
        name: String,
        input_dim: usize,
        output_dim: usize,
        f: ReadoutFn,
    },
}

impl fmt::Debug for ReadoutMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Polynomial {
                linear,
                constant,
                terms,
            } => f
                .debug_struct("Polynomial")
                .field("linear", linear)
                .field("constant", constant)
                .field("terms", terms)
                .finish(),
            Self::Custom {
                name,
                input_dim,
                output_dim,
                ..
            } => write!(f, "Custom({name}: C^{input_dim} -> C^{output_dim})"),
        }
    }
}

/// Static readout `h`, optionally evaluated on a linearly transformed state
/// `h(A x)`.
#[derive(Debug, Clone)]
pub struct Readout {
    pre_transform: Option<ComplexMatrix>,
    map: ReadoutMap,
}

impl Readout {
    pub fn identity(n: usize) -> Self {
        Self::linear(ComplexMatrix::identity(n))
    }

    pub fn linear(linear: ComplexMatrix) -> Self {
        let d = linear.rows();
        Self {
            pre_transform: None,
            map: ReadoutMap::Polynomial {
                linear,
                constant: vec![ZERO; d],
                terms: Vec::new(),
            },
        }
    }

    pub fn affine(linear: ComplexMatrix, constant: Vec<C64>) -> Result<Self> {
        Self::polynomial(linear, constant, Vec::new())
    }

    pub fn polynomial(linear: ComplexMatrix, constant: Vec<C64>, terms: Vec<PolyTerm>) -> Result<Self> {
        let (d, n) = linear.shape();
        if constant.len() != d {
            return Err(mismatch("readout constant length", d, constant.len()));
        }
        for t in &terms {
            if t.exponents.len() != n {
                return Err(mismatch("monomial exponent count", n, t.exponents.len()));
            }
            if t.output >= d {
                return Err(mismatch("monomial output index", format!("< {d}"), t.output));
            }
        }
        Ok(Self {
            pre_transform: None,
            map: ReadoutMap::Polynomial {
                linear,
                constant,
                terms,
            },
        })
    }

    pub fn custom(name: impl Into<String>, input_dim: usize, output_dim: usize, f: ReadoutFn) -> Self {
        Self {
            pre_transform: None,
            map: ReadoutMap::Custom {
                name: name.into(),
                input_dim,
                output_dim,
                f,
            },
        }
    }

    pub fn with_pre_transform(mut self, a: ComplexMatrix) -> Result<Self> {
        let inner = self.map_input_dim();
        if a.rows() != inner {
            return Err(mismatch("readout pre-transform rows", inner, a.rows()));
        }
        self.pre_transform = Some(a);
        Ok(self)
    }

    pub fn pre_transform(&self) -> Option<&ComplexMatrix> {
        self.pre_transform.as_ref()
    }

    pub fn map(&self) -> &ReadoutMap {
        &self.map
    }

    fn map_input_dim(&self) -> usize {
        match &self.map {
            ReadoutMap::Polynomial { linear, .. } => linear.cols(),
            ReadoutMap::Custom { input_dim, .. } => *input_dim,
        }
    }

    /// Dimension of the state this readout accepts.
    pub fn input_dim(&self) -> usize {
        self.pre_transform
            .as_ref()
            .map_or_else(|| self.map_input_dim(), ComplexMatrix::cols)
    }

    pub fn output_dim(&self) -> usize {
        match &self.map {
            ReadoutMap::Polynomial { linear, .. } => linear.rows(),
            ReadoutMap::Custom { output_dim, .. } => *output_dim,
        }
    }

    /// `h ∘ T`: the same readout acting on `T x`.
    pub fn compose(&self, t: &ComplexMatrix) -> Result<Self> {
        if t.rows() != self.input_dim() {
            return Err(mismatch("readout domain transform rows", self.input_dim(), t.rows()));
        }
        let pre = match &self.pre_transform {
            Some(a) => a * t,
            None => t.clone(),
        };
        Ok(Self {
            pre_transform: Some(pre),
            map: self.map.clone(),
        })
    }

    pub fn evaluate(&self, x: &[C64]) -> Vec<C64> {
        let transformed;
        let z = match &self.pre_transform {
            Some(a) => {
                transformed = a.matvec(x);
                &transformed[..]
            }
            None => x,
        };
        match &self.map {
            ReadoutMap::Polynomial {
                linear,
                constant,
                terms,
            } => {
                let mut y = linear.matvec(z);
                for (yi, ci) in y.iter_mut().zip(constant) {
                    *yi += ci;
                }
                for t in terms {
                    y[t.output] += t.eval(z);
                }
                y
            }
            ReadoutMap::Custom { f, .. } => f(z),
        }
    }

    pub fn is_affine(&self) -> bool {
        matches!(&self.map, ReadoutMap::Polynomial { terms, .. } if terms.iter().all(|t| t.degree() <= 1))
    }

    /// Lipschitz constant valid on the closed 2-norm ball of the given radius
    /// in the state space.
    pub fn lipschitz_on_ball(&self, radius: f64) -> Result<f64> {
        let ReadoutMap::Polynomial { linear, terms, .. } = &self.map else {
            return Err(Error::Capability(
                "custom readouts need an explicitly supplied modulus".into(),
            ));
        };
        let pre_norm = match &self.pre_transform {
            Some(a) => operator_norm(a)?,
            None => 1.0,
        };
        let linear_gain = match &self.pre_transform {
            Some(a) => operator_norm(&(linear * a))?,
            None => operator_norm(linear)?,
        };
        if terms.is_empty() {
            return Ok(linear_gain);
        }
        // monomials of degree p have gradient norm ≤ p·r^{p-1} on the ball of radius r
        let inner_radius = pre_norm * radius;
        let poly: f64 = terms
            .iter()
            .filter(|t| t.degree() > 0)
            .map(|t| {
                let p = t.degree();
                t.coefficient.norm() * p as f64 * inner_radius.powi(p as i32 - 1)
            })
            .sum();
        Ok(linear_gain + pre_norm * poly)
    }
}
