//! Continuous Lagrangians `L(x, y)` in algebroid coordinates.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// First and second derivatives of a Lagrangian at one point.
#[derive(Clone, Debug)]
pub struct Derivatives {
    /// `∂L/∂x`
    pub dx: DVector<f64>,
    /// `∂L/∂y`
    pub dy: DVector<f64>,
    /// `∂²L/∂y∂y`
    pub dyy: DMatrix<f64>,
    /// `∂²L/∂y∂x`, rows indexed by `y`, columns by `x`.
    pub dyx: DMatrix<f64>,
}

pub trait Lagrangian: Send + Sync + std::fmt::Debug {
    fn value(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64;

    /// Closed-form derivatives, when the implementation knows them.
    fn derivatives(&self, _x: &DVector<f64>, _y: &DVector<f64>) -> Option<Derivatives> {
        None
    }
}

/// `V(x) = Σ_i Σ_k c_ik x_i^k`; one coefficient list per coordinate,
/// starting at degree 0.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SeparablePolynomial {
    pub coeffs: Vec<Vec<f64>>,
}

impl SeparablePolynomial {
    pub fn zero(n: usize) -> Self {
        Self { coeffs: vec![Vec::new(); n] }
    }

    /// `½ k |x|²`
    pub fn isotropic_quadratic(n: usize, k: f64) -> Self {
        Self { coeffs: vec![vec![0.0, 0.0, 0.5 * k]; n] }
    }

    pub fn value(&self, x: &DVector<f64>) -> f64 {
        self.coeffs
            .iter()
            .zip(x.iter())
            .map(|(c, &xi)| c.iter().rev().fold(0.0, |acc, &ck| acc * xi + ck))
            .sum()
    }

    pub fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            x.len(),
            self.coeffs.iter().zip(x.iter()).map(|(c, &xi)| {
                c.iter()
                    .enumerate()
                    .skip(1)
                    .rev()
                    .fold(0.0, |acc, (k, &ck)| acc * xi + k as f64 * ck)
            }),
        )
    }
}

/// `L(x, y) = ½ yᵀ M y − V(x)` with a constant symmetric mass matrix.
#[derive(Clone, Debug)]
pub struct QuadraticLagrangian {
    mass: DMatrix<f64>,
    potential: SeparablePolynomial,
}

impl QuadraticLagrangian {
    pub fn new(mass: DMatrix<f64>, potential: SeparablePolynomial) -> Result<Self> {
        if mass.nrows() != mass.ncols() {
            return Err(Error::InvalidInput("mass matrix must be square".into()));
        }
        if (&mass - mass.transpose()).amax() > 1e-12 * mass.amax().max(1.0) {
            return Err(Error::InvalidInput("mass matrix must be symmetric".into()));
        }
        if mass.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("mass matrix has non-finite entries".into()));
        }
        if potential.coeffs.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("potential has non-finite coefficients".into()));
        }
        Ok(Self { mass, potential })
    }

    pub fn mass(&self) -> &DMatrix<f64> {
        &self.mass
    }

    pub fn potential(&self) -> &SeparablePolynomial {
        &self.potential
    }
}

impl Lagrangian for QuadraticLagrangian {
    fn value(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        0.5 * y.dot(&(&self.mass * y)) - self.potential.value(x)
    }

    fn derivatives(&self, x: &DVector<f64>, y: &DVector<f64>) -> Option<Derivatives> {
        Some(Derivatives {
            dx: -self.potential.gradient(x),
            dy: &self.mass * y,
            dyy: self.mass.clone(),
            dyx: DMatrix::zeros(y.len(), x.len()),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_value_and_gradient() {
        let p = SeparablePolynomial { coeffs: vec![vec![1.0, 2.0, 3.0], vec![0.0, 0.0, 0.0, -1.0]] };
        let x = DVector::from_row_slice(&[2.0, 3.0]);
        assert_eq!(p.value(&x), 1.0 + 4.0 + 12.0 - 27.0);
        assert_eq!(p.gradient(&x), DVector::from_row_slice(&[2.0 + 12.0, -27.0]));
    }

    #[test]
    fn asymmetric_mass_is_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(QuadraticLagrangian::new(m, SeparablePolynomial::zero(2)).is_err());
    }
}
