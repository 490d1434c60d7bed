//! System states: pure amplitude vectors or density matrices on a fixed basis.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::linalg::{c, C64};

const NORM_TOL: f64 = 1e-10;
const PSD_SLACK: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SystemState {
    Pure(DVector<C64>),
    Mixed(DMatrix<C64>),
}

impl SystemState {
    pub fn pure(amplitudes: DVector<C64>) -> Result<Self> {
        if amplitudes.is_empty() {
            return Err(invalid("state", "empty amplitude vector"));
        }
        let norm = amplitudes.norm_squared();
        if !norm.is_finite() || (norm - 1.0).abs() > NORM_TOL {
            return Err(invalid("state", format!("amplitudes have squared norm {norm}, expected 1")));
        }
        Ok(Self::Pure(amplitudes))
    }

    /// `alpha |0> + beta |1>`
    pub fn qubit(alpha: C64, beta: C64) -> Result<Self> {
        Self::pure(DVector::from_vec(vec![alpha, beta]))
    }

    pub fn basis(n: usize, dim: usize) -> Result<Self> {
        if n >= dim {
            return Err(invalid("state", format!("basis index {n} out of range for dimension {dim}")));
        }
        Ok(Self::Pure(DVector::from_fn(dim, |k, _| c(if k == n { 1.0 } else { 0.0 }, 0.0))))
    }

    /// Diagonal mixture `sum_n p_n |n><n|`.
    pub fn diagonal(probs: &[f64]) -> Result<Self> {
        check_probabilities(probs)?;
        let dim = probs.len();
        Ok(Self::Mixed(DMatrix::from_fn(dim, dim, |r, col| {
            c(if r == col { probs[r] } else { 0.0 }, 0.0)
        })))
    }

    pub fn mixed(rho: DMatrix<C64>) -> Result<Self> {
        validate_density(&rho)?;
        Ok(Self::Mixed(rho))
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Pure(v) => v.len(),
            Self::Mixed(m) => m.nrows(),
        }
    }

    pub fn density_matrix(&self) -> DMatrix<C64> {
        match self {
            Self::Pure(v) => v * v.adjoint(),
            Self::Mixed(m) => m.clone(),
        }
    }

    /// Populations in the fixed basis.
    pub fn populations(&self) -> Vec<f64> {
        match self {
            Self::Pure(v) => v.iter().map(|z| z.norm_sqr()).collect(),
            Self::Mixed(m) => (0..m.nrows()).map(|k| m[(k, k)].re).collect(),
        }
    }

    pub fn purity(&self) -> f64 {
        let rho = self.density_matrix();
        (&rho * &rho).trace().re
    }

    /// Spectral decomposition into weighted pure states, dropping weights
    /// below `1e-14`.
    pub fn pure_components(&self) -> Vec<(f64, DVector<C64>)> {
        match self {
            Self::Pure(v) => vec![(1.0, v.clone())],
            Self::Mixed(m) => {
                let eig = SymmetricEigen::new(m.clone());
                let mut parts: Vec<(f64, DVector<C64>)> = eig
                    .eigenvalues
                    .iter()
                    .enumerate()
                    .filter(|(_, w)| **w > 1e-14)
                    .map(|(k, w)| (*w, eig.eigenvectors.column(k).into_owned()))
                    .collect();
                let total: f64 = parts.iter().map(|(w, _)| w).sum();
                for (w, _) in &mut parts {
                    *w /= total;
                }
                parts
            }
        }
    }
}

pub fn check_probabilities(probs: &[f64]) -> Result<()> {
    if probs.is_empty() {
        return Err(invalid("populations", "empty probability vector"));
    }
    if let Some(p) = probs.iter().find(|p| !(**p >= 0.0) || !p.is_finite()) {
        return Err(invalid("populations", format!("probability {p} is not a finite non-negative number")));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > NORM_TOL {
        return Err(invalid("populations", format!("probabilities sum to {total}, expected 1")));
    }
    Ok(())
}

/// Hermitian, unit trace and positive semidefinite up to a small slack.
pub fn validate_density(rho: &DMatrix<C64>) -> Result<()> {
    if rho.nrows() != rho.ncols() || rho.nrows() == 0 {
        return Err(invalid("rho", format!("density matrix must be square, got {}x{}", rho.nrows(), rho.ncols())));
    }
    let herm = (rho - rho.adjoint()).norm();
    if !(herm <= NORM_TOL) {
        return Err(invalid("rho", format!("density matrix is not Hermitian (deviation {herm:e})")));
    }
    let tr = rho.trace();
    if (tr.re - 1.0).abs() > NORM_TOL || tr.im.abs() > NORM_TOL {
        return Err(invalid("rho", format!("density matrix has trace {tr}")));
    }
    let min = min_eigenvalue(rho);
    if min < -PSD_SLACK {
        return Err(invalid("rho", format!("density matrix has negative eigenvalue {min:e}")));
    }
    Ok(())
}

pub fn min_eigenvalue(m: &DMatrix<C64>) -> f64 {
    let herm = (m + m.adjoint()) * c(0.5, 0.0);
    SymmetricEigen::new(herm).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn qubit_state_validation() {
        let s = 0.5f64.sqrt();
        let psi = SystemState::qubit(c(s, 0.0), c(0.0, s)).unwrap();
        assert_eq!(psi.dim(), 2);
        assert!((psi.purity() - 1.0).abs() < 1e-14);
        assert!(SystemState::qubit(c(1.0, 0.0), c(1.0, 0.0)).is_err());
        let pops = psi.populations();
        assert!((pops[0] - 0.5).abs() < 1e-15 && (pops[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn mixed_state_validation() {
        assert!(SystemState::diagonal(&[0.3, 0.7]).is_ok());
        assert!(SystemState::diagonal(&[0.3, 0.8]).is_err());
        assert!(SystemState::diagonal(&[-0.1, 1.1]).is_err());
        let bad = DMatrix::from_row_slice(2, 2, &[c(0.5, 0.0), c(0.6, 0.0), c(0.6, 0.0), c(0.5, 0.0)]);
        assert!(SystemState::mixed(bad).is_err());
        let nonherm = DMatrix::from_row_slice(2, 2, &[c(0.5, 0.0), c(0.1, 0.0), c(0.0, 0.0), c(0.5, 0.0)]);
        assert!(SystemState::mixed(nonherm).is_err());
    }

    #[test]
    fn decomposition_rebuilds_the_state() {
        let rho = DMatrix::from_row_slice(2, 2, &[c(0.6, 0.0), c(0.1, -0.2), c(0.1, 0.2), c(0.4, 0.0)]);
        let s = SystemState::mixed(rho.clone()).unwrap();
        let mut back = DMatrix::zeros(2, 2);
        for (w, v) in s.pure_components() {
            back += &v * v.adjoint() * c(w, 0.0);
        }
        assert!((back - rho).norm() < 1e-13);
        assert_eq!(SystemState::basis(1, 3).unwrap().populations(), vec![0.0, 1.0, 0.0]);
    }
}
