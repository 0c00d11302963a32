//! Continuous-time HOCBF baseline with linear class-K gains.
//!
//! With `alpha_i(s) = a_i s` the auxiliary functions
//! `psi_i = d/dt psi_{i-1} + a_i psi_{i-1}` are fixed linear combinations of
//! `h, h^(1), .., h^(i)`, so they can be evaluated from the same derivative
//! chain the Taylor filter uses.

use crate::barrier::{ClassK, ClassKKind, DerivativeChain};
use crate::error::{Error, Result};
use crate::taylor::LinearConstraintRow;

#[derive(Debug, Clone, PartialEq)]
pub struct HocbfChainSpec {
    gains: Vec<f64>,
}

impl HocbfChainSpec {
    pub fn new(gains: Vec<f64>) -> Result<Self> {
        if gains.is_empty() {
            return Err(Error::InvalidParameter {
                name: "hocbf gains",
                reason: "need one gain per derivative level".into(),
            });
        }
        if let Some(g) = gains.iter().find(|g| !(**g > 0.0 && g.is_finite())) {
            return Err(Error::InvalidParameter {
                name: "hocbf gains",
                reason: format!("gains must be positive, got {g}"),
            });
        }
        Ok(Self { gains })
    }

    /// Build from class-K functions; only linear ones are accepted.
    pub fn from_classk(levels: &[ClassK]) -> Result<Self> {
        if let Some(k) = levels.iter().find(|k| k.kind != ClassKKind::Linear) {
            return Err(Error::NonlinearAlphaUnsupported(k.kind.name()));
        }
        Self::new(levels.iter().map(|k| k.gain).collect())
    }

    pub fn gains(&self) -> &[f64] {
        &self.gains
    }

    pub fn relative_degree(&self) -> usize {
        self.gains.len()
    }

    /// Coefficients of `psi_level` on `(h, h^(1), .., h^(level))`.
    pub fn coefficients(&self, level: usize) -> Vec<f64> {
        let mut coeffs = vec![1.0];
        for &a in &self.gains[..level] {
            // d/dt shifts every term one derivative up; a * psi keeps the order.
            let mut next = vec![0.0; coeffs.len() + 1];
            for (j, &c) in coeffs.iter().enumerate() {
                next[j + 1] += c;
                next[j] += a * c;
            }
            coeffs = next;
        }
        coeffs
    }

    fn check(&self, chain: &DerivativeChain) -> Result<()> {
        if chain.relative_degree() != self.relative_degree() {
            return Err(Error::DimensionMismatch {
                context: "hocbf gains vs relative degree",
                expected: chain.relative_degree(),
                got: self.relative_degree(),
            });
        }
        Ok(())
    }
}

/// `psi_0 .. psi_{r-1}` at the chain's state.
pub fn hocbf_psi_values(spec: &HocbfChainSpec, chain: &DerivativeChain) -> Result<Vec<f64>> {
    spec.check(chain)?;
    Ok((0..spec.relative_degree())
        .map(|level| {
            spec.coefficients(level)
                .iter()
                .enumerate()
                .map(|(j, c)| c * chain.derivative(j))
                .sum()
        })
        .collect())
}

/// Row enforcing `psi_r(x, u) >= 0`.
pub fn build_hocbf_row(spec: &HocbfChainSpec, chain: &DerivativeChain) -> Result<LinearConstraintRow> {
    spec.check(chain)?;
    let r = spec.relative_degree();
    let coeffs = spec.coefficients(r);
    let lower: f64 = (0..r).map(|j| coeffs[j] * chain.derivative(j)).sum();
    Ok(LinearConstraintRow {
        coeff_u: chain.top_input.clone(),
        coeff_eta: 0.0,
        rhs: -(chain.top_drift + lower),
    })
}
