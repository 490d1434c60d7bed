//! System Hamiltonians: self-commuting spectra on a fixed basis and the
//! two-level atom in a ramped, rotating field.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::linalg::{bloch_operator, c, to_dmatrix, Ket2, Mat2, C64};

/// A single eigenvalue trajectory `E_n(t)`.
pub trait EnergyLevel: Send + Sync {
    fn energy(&self, t: f64) -> f64;

    /// `dE/dt`; central difference unless overridden.
    fn rate(&self, t: f64) -> f64 {
        let h = 1e-5 * (1.0 + t.abs());
        (self.energy(t + h) - self.energy(t - h)) / (2.0 * h)
    }

    /// `d^2E/dt^2`; central difference unless overridden.
    fn accel(&self, t: f64) -> f64 {
        let h = 1e-4 * (1.0 + t.abs());
        (self.energy(t + h) - 2.0 * self.energy(t) + self.energy(t - h)) / (h * h)
    }
}

/// `E(t) = c_0 + c_1 t + c_2 t^2 + ...`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polynomial {
    coeffs: Vec<f64>,
}

impl Polynomial {
    pub fn new(coeffs: Vec<f64>) -> Self {
        Self { coeffs }
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    fn eval_with(&self, t: f64, order: usize) -> f64 {
        let mut acc = 0.0;
        for (k, &ck) in self.coeffs.iter().enumerate().skip(order).rev() {
            let mut factor = 1.0;
            for j in 0..order {
                factor *= (k - j) as f64;
            }
            acc = acc * t + ck * factor;
        }
        acc
    }
}

impl EnergyLevel for Polynomial {
    fn energy(&self, t: f64) -> f64 {
        self.eval_with(t, 0)
    }

    fn rate(&self, t: f64) -> f64 {
        self.eval_with(t, 1)
    }

    fn accel(&self, t: f64) -> f64 {
        self.eval_with(t, 2)
    }
}

/// Wraps a closure as an energy level (derivatives by finite differences).
pub struct FnLevel<F>(pub F);

impl<F> EnergyLevel for FnLevel<F>
where
    F: Fn(f64) -> f64 + Send + Sync,
{
    fn energy(&self, t: f64) -> f64 {
        (self.0)(t)
    }
}

/// Self-commuting Hamiltonian `H(t) = sum_n E_n(t) |n><n|` on a fixed basis.
#[derive(Clone)]
pub struct SpectralSystem {
    levels: Vec<Arc<dyn EnergyLevel>>,
}

impl fmt::Debug for SpectralSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SpectralSystem").field("dim", &self.levels.len()).finish()
    }
}

impl SpectralSystem {
    pub fn new(levels: Vec<Arc<dyn EnergyLevel>>) -> Result<Self> {
        if levels.is_empty() {
            return Err(invalid("levels", "a spectral system needs at least one level"));
        }
        Ok(Self { levels })
    }

    /// One polynomial per level, coefficients in increasing power of `t`.
    pub fn polynomial(coeffs: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(
            coeffs
                .into_iter()
                .map(|c| Arc::new(Polynomial::new(c)) as Arc<dyn EnergyLevel>)
                .collect(),
        )
    }

    pub fn dim(&self) -> usize {
        self.levels.len()
    }

    pub fn level(&self, n: usize) -> &dyn EnergyLevel {
        self.levels[n].as_ref()
    }

    pub fn energy(&self, n: usize, t: f64) -> f64 {
        self.levels[n].energy(t)
    }

    pub fn energies(&self, t: f64) -> Vec<f64> {
        self.levels.iter().map(|l| l.energy(t)).collect()
    }

    /// Samples every level on `[from, to]` and rejects non-finite values.
    pub fn check_finite(&self, from: f64, to: f64) -> Result<()> {
        const SAMPLES: usize = 257;
        for (n, level) in self.levels.iter().enumerate() {
            for k in 0..SAMPLES {
                let t = from + (to - from) * k as f64 / (SAMPLES - 1) as f64;
                let e = level.energy(t);
                if !e.is_finite() {
                    return Err(invalid("levels", format!("level {n} is not finite at t = {t}: {e}")));
                }
            }
        }
        Ok(())
    }
}

/// Two-level atom in the field `B(t) = gamma t` rotating about `z` at polar
/// angle `theta`:
///
/// `H(t) = kappa^2 t [sin(theta) cos(omega t) sx + sin(theta) sin(omega t) sy + cos(theta) sz]`
/// with `kappa^2 = mu gamma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DrivenQubit {
    kappa: f64,
    omega: f64,
    theta: f64,
}

impl DrivenQubit {
    pub fn new(kappa: f64, omega: f64, theta: f64) -> Result<Self> {
        if !(kappa > 0.0) || !kappa.is_finite() {
            return Err(invalid("kappa", format!("must be positive and finite, got {kappa}")));
        }
        if !omega.is_finite() {
            return Err(invalid("omega", format!("must be finite, got {omega}")));
        }
        if !(0.0..=std::f64::consts::PI).contains(&theta) {
            return Err(invalid("theta", format!("polar angle must lie in [0, pi], got {theta}")));
        }
        Ok(Self { kappa, omega, theta })
    }

    /// `kappa = 1`, `omega = kappa`.
    pub fn figure_default(theta: f64) -> Result<Self> {
        Self::new(1.0, 1.0, theta)
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn with_theta(&self, theta: f64) -> Result<Self> {
        Self::new(self.kappa, self.omega, theta)
    }

    /// True when `H(t)` commutes with itself at all times (`sin(theta) = 0`).
    pub fn is_self_commuting(&self) -> bool {
        self.theta.sin().abs() < 1e-12
    }

    /// Unit field direction `n(t)`.
    pub fn direction(&self, t: f64) -> [f64; 3] {
        let (s, co) = self.theta.sin_cos();
        let (sw, cw) = (self.omega * t).sin_cos();
        [s * cw, s * sw, co]
    }

    fn direction_rate(&self, t: f64) -> [f64; 3] {
        let s = self.theta.sin();
        let (sw, cw) = (self.omega * t).sin_cos();
        [-self.omega * s * sw, self.omega * s * cw, 0.0]
    }

    fn direction_accel(&self, t: f64) -> [f64; 3] {
        let s = self.theta.sin();
        let (sw, cw) = (self.omega * t).sin_cos();
        let w2 = self.omega * self.omega;
        [-w2 * s * cw, -w2 * s * sw, 0.0]
    }

    pub fn hamiltonian(&self, t: f64) -> Mat2 {
        let k2 = self.kappa * self.kappa;
        let n = self.direction(t);
        bloch_operator([k2 * t * n[0], k2 * t * n[1], k2 * t * n[2]])
    }

    /// `dH/dt`
    pub fn hamiltonian_rate(&self, t: f64) -> Mat2 {
        let k2 = self.kappa * self.kappa;
        let n = self.direction(t);
        let dn = self.direction_rate(t);
        bloch_operator([0, 1, 2].map(|i| k2 * (n[i] + t * dn[i])))
    }

    /// `d^2H/dt^2`
    pub fn hamiltonian_accel(&self, t: f64) -> Mat2 {
        let k2 = self.kappa * self.kappa;
        let dn = self.direction_rate(t);
        let ddn = self.direction_accel(t);
        bloch_operator([0, 1, 2].map(|i| k2 * (2.0 * dn[i] + t * ddn[i])))
    }

    /// Instantaneous energies: level 0 is aligned with the field (`+kappa^2 t`),
    /// level 1 anti-aligned (`-kappa^2 t`).
    pub fn energies(&self, t: f64) -> [f64; 2] {
        let e = self.kappa * self.kappa * t;
        [e, -e]
    }

    /// Instantaneous eigenvectors in the same order as [`Self::energies`].
    ///
    /// At `theta = 0` these are `|0>` and `|1>`.
    pub fn eigenvectors(&self, t: f64) -> [Ket2; 2] {
        let half = 0.5 * self.theta;
        let (sh, ch) = half.sin_cos();
        let phase = C64::from_polar(1.0, self.omega * t);
        let up = Ket2::new(c(ch, 0.0), phase * sh);
        let down = Ket2::new(-phase.conj() * sh, c(ch, 0.0));
        [up, down]
    }

    /// The equivalent spectral system when `sin(theta) = 0`: `E_0 = kappa^2 t cos(theta)`,
    /// `E_1 = -E_0` on the `sigma_z` basis.
    pub fn aligned_spectrum(&self) -> Option<SpectralSystem> {
        if !self.is_self_commuting() {
            return None;
        }
        let slope = self.kappa * self.kappa * self.theta.cos().signum();
        SpectralSystem::polynomial(vec![vec![0.0, slope], vec![0.0, -slope]]).ok()
    }
}

/// Time-dependent Hamiltonian on a finite-dimensional space, with analytic
/// first and second time derivatives.
pub trait Hamiltonian {
    fn dim(&self) -> usize;
    fn matrix(&self, t: f64) -> DMatrix<C64>;
    fn rate(&self, t: f64) -> DMatrix<C64>;
    fn accel(&self, t: f64) -> DMatrix<C64>;
}

impl Hamiltonian for SpectralSystem {
    fn dim(&self) -> usize {
        self.levels.len()
    }

    fn matrix(&self, t: f64) -> DMatrix<C64> {
        DMatrix::from_fn(self.dim(), self.dim(), |r, col| {
            if r == col {
                c(self.levels[r].energy(t), 0.0)
            } else {
                c(0.0, 0.0)
            }
        })
    }

    fn rate(&self, t: f64) -> DMatrix<C64> {
        DMatrix::from_fn(self.dim(), self.dim(), |r, col| {
            if r == col {
                c(self.levels[r].rate(t), 0.0)
            } else {
                c(0.0, 0.0)
            }
        })
    }

    fn accel(&self, t: f64) -> DMatrix<C64> {
        DMatrix::from_fn(self.dim(), self.dim(), |r, col| {
            if r == col {
                c(self.levels[r].accel(t), 0.0)
            } else {
                c(0.0, 0.0)
            }
        })
    }
}

impl Hamiltonian for DrivenQubit {
    fn dim(&self) -> usize {
        2
    }

    fn matrix(&self, t: f64) -> DMatrix<C64> {
        to_dmatrix(&self.hamiltonian(t))
    }

    fn rate(&self, t: f64) -> DMatrix<C64> {
        to_dmatrix(&self.hamiltonian_rate(t))
    }

    fn accel(&self, t: f64) -> DMatrix<C64> {
        to_dmatrix(&self.hamiltonian_accel(t))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{commutator, frobenius, hermitian_eigenvalues};
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn polynomial_derivatives() {
        let p = Polynomial::new(vec![1.0, -2.0, 0.5, 3.0]);
        let t = 1.7;
        assert_relative_eq!(p.energy(t), 1.0 - 2.0 * t + 0.5 * t * t + 3.0 * t * t * t, epsilon = 1e-12);
        assert_relative_eq!(p.rate(t), -2.0 + t + 9.0 * t * t, epsilon = 1e-12);
        assert_relative_eq!(p.accel(t), 1.0 + 18.0 * t, epsilon = 1e-12);
        assert_eq!(Polynomial::new(vec![]).energy(2.0), 0.0);
    }

    #[test]
    fn fn_level_finite_differences() {
        let l = FnLevel(|t: f64| t.sin());
        assert_relative_eq!(l.rate(0.3), 0.3f64.cos(), epsilon = 1e-8);
        assert_relative_eq!(l.accel(0.3), -(0.3f64.sin()), epsilon = 1e-5);
    }

    #[test]
    fn spectral_system_validation() {
        assert!(SpectralSystem::new(vec![]).is_err());
        let bad = SpectralSystem::new(vec![Arc::new(FnLevel(|t: f64| 1.0 / (t - 1.0)))]).unwrap();
        assert!(bad.check_finite(0.0, 2.0).is_err());
    }

    #[test]
    fn theta_zero_is_diagonal_ramp() {
        let q = DrivenQubit::figure_default(0.0).unwrap();
        let h = q.hamiltonian(1.3);
        assert_relative_eq!(h[(0, 0)].re, 1.3, epsilon = 1e-15);
        assert_relative_eq!(h[(1, 1)].re, -1.3, epsilon = 1e-15);
        assert_eq!(h[(0, 1)].norm(), 0.0);
    }

    #[test]
    fn hamiltonian_is_hermitian_traceless_with_ramped_eigenvalues() {
        let q = DrivenQubit::new(1.0, 0.7, 1.1).unwrap();
        for t in [0.5, 2.0, 3.3] {
            let h = q.hamiltonian(t);
            assert!((h - h.adjoint()).norm() < 1e-15);
            assert!(h.trace().norm() < 1e-15);
            let ev = hermitian_eigenvalues(&h);
            assert_relative_eq!(ev[1], t, epsilon = 1e-13);
            assert_relative_eq!(ev[0], -t, epsilon = 1e-13);
            let vecs = q.eigenvectors(t);
            let e = q.energies(t);
            for k in 0..2 {
                assert!((h * vecs[k] - vecs[k] * c(e[k], 0.0)).norm() < 1e-13);
            }
        }
        let ev = hermitian_eigenvalues(&q.hamiltonian(2.0));
        assert_relative_eq!(ev[1], 2.0, epsilon = 1e-13);
    }

    #[test]
    fn analytic_derivatives_match_finite_differences() {
        let q = DrivenQubit::new(1.2, 0.9, 0.8).unwrap();
        let t = 2.4;
        let h = 1e-5;
        let fd = (q.hamiltonian(t + h) - q.hamiltonian(t - h)) / c(2.0 * h, 0.0);
        assert!((fd - q.hamiltonian_rate(t)).norm() < 1e-8);
        let fd2 = (q.hamiltonian_rate(t + h) - q.hamiltonian_rate(t - h)) / c(2.0 * h, 0.0);
        assert!((fd2 - q.hamiltonian_accel(t)).norm() < 1e-8);
    }

    #[test]
    fn self_commuting_at_theta_zero_and_pi() {
        for theta in [0.0, PI] {
            let q = DrivenQubit::figure_default(theta).unwrap();
            assert!(q.is_self_commuting());
            for (t, s) in [(0.3, 2.9), (1.0, 4.0), (2.0, 3.0)] {
                let comm = commutator(&q.hamiltonian(t), &q.hamiltonian(s));
                assert!(frobenius(&comm) < 1e-14);
            }
        }
        assert!(!DrivenQubit::figure_default(0.3).unwrap().is_self_commuting());
    }

    #[test]
    fn commutator_norm_follows_cross_product() {
        // [a.s, b.s] = 2i (a x b).s, so ||[H(t), H(t')]||_F = 2 sqrt(2) |a x b|.
        // With n = (s cos phi, s sin phi, cos theta):
        // |a x b|^2 = (t t')^2 sin^2(theta) [2 cos^2(theta) (1 - cos dphi) + sin^2(theta) sin^2 dphi]
        let oracle = |theta: f64, t: f64, tp: f64, omega: f64| {
            let (s, co) = theta.sin_cos();
            let dphi = omega * (tp - t);
            let cross2 = (t * tp).powi(2)
                * s
                * s
                * (2.0 * co * co * (1.0 - dphi.cos()) + s * s * dphi.sin().powi(2));
            2.0 * 2f64.sqrt() * cross2.sqrt()
        };
        for theta in [PI / 2.0, PI / 4.0, 0.3] {
            let q = DrivenQubit::new(1.0, 1.0, theta).unwrap();
            let (t, tp) = (2.0, 3.0);
            let got = frobenius(&commutator(&q.hamiltonian(t), &q.hamiltonian(tp)));
            assert_relative_eq!(got, oracle(theta, t, tp, 1.0), epsilon = 1e-12);
        }
        // the ratio between pi/2 and pi/4 tends to sqrt(2) = sin(pi/2)/sin(pi/4)
        // only for small phase separation
        let ratio = |dt: f64| {
            let a = DrivenQubit::new(1.0, 1.0, PI / 2.0).unwrap();
            let b = DrivenQubit::new(1.0, 1.0, PI / 4.0).unwrap();
            frobenius(&commutator(&a.hamiltonian(2.0), &a.hamiltonian(2.0 + dt)))
                / frobenius(&commutator(&b.hamiltonian(2.0), &b.hamiltonian(2.0 + dt)))
        };
        assert_relative_eq!(ratio(1e-4), 2f64.sqrt(), epsilon = 1e-6);
    }

    #[test]
    fn aligned_spectrum_matches_qubit_at_theta_pi() {
        let q = DrivenQubit::figure_default(PI).unwrap();
        let s = q.aligned_spectrum().unwrap();
        let h = q.hamiltonian(2.5);
        assert_relative_eq!(s.energy(0, 2.5), h[(0, 0)].re, epsilon = 1e-15);
        assert_relative_eq!(s.energy(1, 2.5), h[(1, 1)].re, epsilon = 1e-15);
        assert!(DrivenQubit::figure_default(1.0).unwrap().aligned_spectrum().is_none());
    }

    #[test]
    fn rejects_bad_qubit_parameters() {
        assert!(DrivenQubit::new(0.0, 1.0, 0.0).is_err());
        assert!(DrivenQubit::new(1.0, 1.0, -0.1).is_err());
        assert!(DrivenQubit::new(1.0, 1.0, 3.2).is_err());
    }
}
