//! The N-level diabatic ladder: alternating sloped (`λ − n·ε0`) and flat
//! (`n·ε0`) levels with nearest-neighbour couplings `Δ_n / 2`.
//!
//! Only adjacent diabatic levels couple, so every crossing between
//! non-adjacent levels is exact.

use serde::{Deserialize, Serialize};

use crate::error::{QslError, Result};
use crate::linalg::{HermitianMatrix, C64};

/// Model parameters: level count, nearest-neighbour gaps, crossing spacing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemSpec {
    pub n_levels: usize,
    pub gaps: Vec<f64>,
    pub spacing: f64,
}

impl SystemSpec {
    pub fn new(n_levels: usize, gaps: Vec<f64>, spacing: f64) -> Result<Self> {
        let spec = Self {
            n_levels,
            gaps,
            spacing,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Three-level system with gaps `Δ_A`, `Δ_B` at `λ = 0` and `λ = ε0`.
    pub fn three_level(delta_a: f64, delta_b: f64, spacing: f64) -> Result<Self> {
        Self::new(3, vec![delta_a, delta_b], spacing)
    }

    /// N levels with every gap equal to `gap`.
    pub fn uniform(n_levels: usize, gap: f64, spacing: f64) -> Result<Self> {
        Self::new(n_levels, vec![gap; n_levels.saturating_sub(1)], spacing)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_levels < 2 {
            return Err(QslError::InvalidParameter(format!(
                "n_levels must be at least 2, got {}",
                self.n_levels
            )));
        }
        if self.gaps.len() != self.n_levels - 1 {
            return Err(QslError::InvalidParameter(format!(
                "expected {} gaps for {} levels, got {}",
                self.n_levels - 1,
                self.n_levels,
                self.gaps.len()
            )));
        }
        if let Some((i, g)) = self
            .gaps
            .iter()
            .enumerate()
            .find(|(_, g)| !(g.is_finite() && **g > 0.0))
        {
            return Err(QslError::InvalidParameter(format!(
                "gap {i} must be positive and finite, got {g}"
            )));
        }
        if !(self.spacing.is_finite() && self.spacing > 0.0) {
            return Err(QslError::InvalidParameter(format!(
                "spacing must be positive and finite, got {}",
                self.spacing
            )));
        }
        Ok(())
    }

    pub fn min_gap(&self) -> f64 {
        self.gaps.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Diagonal of `H(λ)`: `λ − n·ε0` on `|2n⟩`, `n·ε0` on `|2n+1⟩`.
    pub fn diagonal(&self, lambda: f64) -> Vec<f64> {
        (0..self.n_levels)
            .map(|k| {
                let n = (k / 2) as f64;
                if k % 2 == 0 {
                    lambda - n * self.spacing
                } else {
                    n * self.spacing
                }
            })
            .collect()
    }

    /// Diagonal of `∂H/∂λ`: 1 on even diabatic states, 0 on odd ones.
    pub fn coupling_diagonal(&self) -> Vec<f64> {
        (0..self.n_levels)
            .map(|k| if k % 2 == 0 { 1.0 } else { 0.0 })
            .collect()
    }
}

pub fn build_hamiltonian(spec: &SystemSpec, lambda: f64) -> Result<HermitianMatrix> {
    spec.validate()?;
    Ok(hamiltonian_unchecked(spec, lambda))
}

pub(crate) fn hamiltonian_unchecked(spec: &SystemSpec, lambda: f64) -> HermitianMatrix {
    let mut h = HermitianMatrix::from_diagonal(&spec.diagonal(lambda));
    for (n, gap) in spec.gaps.iter().enumerate() {
        h.set_pair(n, n + 1, C64::new(gap / 2.0, 0.0));
    }
    h
}

/// `∂H/∂λ`, the projector onto even diabatic states.
pub fn coupling_derivative(spec: &SystemSpec) -> Result<HermitianMatrix> {
    spec.validate()?;
    Ok(HermitianMatrix::from_diagonal(&spec.coupling_diagonal()))
}

/// Ascending eigenvalues of `H(λ)`.
pub fn eigen_spectrum(spec: &SystemSpec, lambda: f64) -> Result<Vec<f64>> {
    Ok(build_hamiltonian(spec, lambda)?.eigh().values)
}
