//! The pointer particle: a free Gaussian wavepacket coupled to the system
//! energy through its momentum.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Pointer parameters (`hbar = 1`).
///
/// * `mass` sets how fast the packet disperses in position,
/// * `sigma_p` is the momentum width (position width is `1 / sigma_p`),
/// * `lambda` converts pointer displacement into work, `W = x / lambda`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApparatusSpec {
    mass: f64,
    sigma_p: f64,
    lambda: f64,
}

impl ApparatusSpec {
    pub fn new(mass: f64, sigma_p: f64, lambda: f64) -> Result<Self> {
        if !(mass > 0.0) || !mass.is_finite() {
            return Err(invalid("mass", format!("must be positive and finite, got {mass}")));
        }
        if !(sigma_p > 0.0) || !sigma_p.is_finite() {
            return Err(invalid("sigma_p", format!("must be positive and finite, got {sigma_p}")));
        }
        if lambda == 0.0 || !lambda.is_finite() {
            return Err(invalid("lambda", format!("must be non-zero and finite, got {lambda}")));
        }
        Ok(Self { mass, sigma_p, lambda })
    }

    /// Builds the pointer from the dimensionless ratio `kappa m / sigma_p^2`.
    pub fn from_mass_ratio(mass_ratio: f64, sigma_p: f64, lambda: f64, kappa: f64) -> Result<Self> {
        if !(kappa > 0.0) {
            return Err(invalid("kappa", format!("must be positive, got {kappa}")));
        }
        Self::new(mass_ratio * sigma_p * sigma_p / kappa, sigma_p, lambda)
    }

    /// `kappa m / sigma_p^2 = 1000`, `sigma_p = 2`, `lambda = 1` at `kappa = 1`.
    pub fn figure_default() -> Self {
        Self { mass: 4000.0, sigma_p: 2.0, lambda: 1.0 }
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn sigma_p(&self) -> f64 {
        self.sigma_p
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn sigma_x(&self) -> f64 {
        1.0 / self.sigma_p
    }

    /// Freely evolved momentum amplitude
    /// `psi(p, t) = (sqrt(pi) sigma_p)^(-1/2) exp(-(1/sigma_p^2 + i (t - t_p)/m) p^2 / 2)`.
    pub fn momentum_amplitude(&self, p: f64, t: f64, t_p: f64) -> Complex64 {
        let norm = (std::f64::consts::PI.sqrt() * self.sigma_p).powf(-0.5);
        let a = self.dispersion_parameter(t, t_p);
        norm * (-a * (0.5 * p * p)).exp()
    }

    /// `a = 1/sigma_p^2 + i (t - t_p)/m`.
    pub fn dispersion_parameter(&self, t: f64, t_p: f64) -> Complex64 {
        Complex64::new(1.0 / (self.sigma_p * self.sigma_p), (t - t_p) / self.mass)
    }

    /// Peak width in work units,
    /// `lambda Sigma(t) = (1/sigma_p^2 + sigma_p^2 (t - t_p)^2 / m^2)^(1/2)`.
    ///
    /// Each measured peak is `exp(-(W - c)^2 / Sigma^2) / (sqrt(pi) Sigma)`.
    pub fn sigma_width(&self, t: f64, t_p: f64) -> f64 {
        let s2 = self.sigma_p * self.sigma_p;
        let tau = (t - t_p) / self.mass;
        (1.0 / s2 + s2 * tau * tau).sqrt() / self.lambda.abs()
    }

    /// Same pointer with a different momentum width, keeping `m / sigma_p^2` fixed.
    pub fn rescaled(&self, sigma_p: f64) -> Result<Self> {
        let ratio = self.mass / (self.sigma_p * self.sigma_p);
        Self::new(ratio * sigma_p * sigma_p, sigma_p, self.lambda)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn rejects_bad_parameters() {
        assert!(ApparatusSpec::new(0.0, 1.0, 1.0).is_err());
        assert!(ApparatusSpec::new(1.0, -1.0, 1.0).is_err());
        assert!(ApparatusSpec::new(1.0, 1.0, 0.0).is_err());
        assert!(ApparatusSpec::new(1.0, 1.0, -1.0).is_ok());
    }

    #[test]
    fn amplitude_at_origin() {
        let a = ApparatusSpec::new(3.0, 1.7, 1.0).unwrap();
        let expected = (std::f64::consts::PI.sqrt() * 1.7).powf(-0.5);
        for t in [0.0, 0.5, 10.0] {
            let v = a.momentum_amplitude(0.0, t, 0.0);
            assert_relative_eq!(v.re, expected, epsilon = 1e-15);
            assert_eq!(v.im, 0.0);
        }
    }

    #[test]
    fn amplitude_normalized_by_quadrature() {
        let a = ApparatusSpec::new(2.0, 1.3, 1.0).unwrap();
        let n = 4000;
        let pmax = 12.0 * a.sigma_p();
        let dp = 2.0 * pmax / n as f64;
        let total: f64 = (0..=n)
            .map(|k| {
                let p = -pmax + k as f64 * dp;
                let w = if k == 0 || k == n { 0.5 } else { 1.0 };
                w * a.momentum_amplitude(p, 1.5, 0.0).norm_sqr()
            })
            .sum::<f64>()
            * dp;
        assert!((total - 1.0).abs() < 1e-10, "norm = {total}");
    }

    #[test]
    fn sigma_width_cases() {
        let a = ApparatusSpec::new(1.0, 1.0, 1.0).unwrap();
        assert_relative_eq!(a.sigma_width(1.0, 0.0), 2f64.sqrt(), epsilon = 1e-15);
        let b = ApparatusSpec::new(2.0, 4.0, 0.5).unwrap();
        assert_relative_eq!(b.sigma_width(3.0, 3.0), 1.0 / (0.5 * 4.0), epsilon = 1e-15);
        let heavy = ApparatusSpec::new(1e300, 4.0, 0.5).unwrap();
        assert_relative_eq!(heavy.sigma_width(1e3, 0.0), 0.5, epsilon = 1e-15);
    }

    proptest! {
        #[test]
        fn density_is_time_independent(p in -5.0f64..5.0, t in 0.0f64..50.0, m in 0.1f64..100.0, s in 0.2f64..4.0) {
            let a = ApparatusSpec::new(m, s, 1.0).unwrap();
            let d0 = a.momentum_amplitude(p, 0.0, 0.0).norm_sqr();
            let d1 = a.momentum_amplitude(p, t, 0.0).norm_sqr();
            prop_assert!((d0 - d1).abs() <= 1e-14 * d0.max(1e-300));
        }

        #[test]
        fn sigma_is_modulus_of_dispersion_parameter(t in 0.0f64..20.0, m in 0.1f64..1e4, s in 0.1f64..5.0, l in 0.1f64..3.0) {
            let a = ApparatusSpec::new(m, s, l).unwrap();
            let via_a = s * a.dispersion_parameter(t, 0.0).norm() / l;
            prop_assert!((a.sigma_width(t, 0.0) - via_a).abs() <= 1e-12 * via_a);
        }

        #[test]
        fn sigma_monotone_in_time_and_inverse_mass(t in 0.0f64..20.0, dt in 1e-3f64..5.0, m in 0.1f64..1e3, s in 0.1f64..5.0) {
            let a = ApparatusSpec::new(m, s, 1.0).unwrap();
            let lighter = ApparatusSpec::new(0.5 * m, s, 1.0).unwrap();
            prop_assert!(a.sigma_width(t + dt, 0.0) >= a.sigma_width(t, 0.0));
            prop_assert!(lighter.sigma_width(t, 0.0) >= a.sigma_width(t, 0.0));
            prop_assert!(a.sigma_width(t, 0.0) >= a.sigma_width(0.0, 0.0));
        }
    }
}
