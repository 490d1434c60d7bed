//! Adaptive Dormand–Prince 5(4) integrator with exact stop times.

use nalgebra::{DMatrix, Matrix2, Vector2};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// A point of the integrator's state space.
pub trait OdeState: Clone {
    fn scaled(&self, h: f64) -> Self;

    /// `self + h * k`
    fn add_scaled(&self, h: f64, k: &Self) -> Self;

    /// Accumulates `h * k` into `self`.
    fn axpy(&mut self, h: f64, k: &Self) {
        *self = self.add_scaled(h, k);
    }

    /// RMS of `err_i / (atol + rtol max(|y0_i|, |y1_i|))` over components.
    fn error_norm(err: &Self, y0: &Self, y1: &Self, atol: f64, rtol: f64) -> f64;
}

fn scaled_rms<'a>(
    err: impl Iterator<Item = &'a Complex64>,
    y0: impl Iterator<Item = &'a Complex64>,
    y1: impl Iterator<Item = &'a Complex64>,
    atol: f64,
    rtol: f64,
) -> f64 {
    let mut acc = 0.0;
    let mut n = 0usize;
    for ((e, a), b) in err.zip(y0).zip(y1) {
        let scale = atol + rtol * a.norm().max(b.norm());
        acc += (e.norm() / scale).powi(2);
        n += 1;
    }
    (acc / n.max(1) as f64).sqrt()
}

impl OdeState for Vector2<Complex64> {
    fn scaled(&self, h: f64) -> Self {
        Vector2::new(self[0] * h, self[1] * h)
    }

    fn add_scaled(&self, h: f64, k: &Self) -> Self {
        Vector2::new(self[0] + k[0] * h, self[1] + k[1] * h)
    }

    fn error_norm(err: &Self, y0: &Self, y1: &Self, atol: f64, rtol: f64) -> f64 {
        scaled_rms(err.iter(), y0.iter(), y1.iter(), atol, rtol)
    }
}

impl OdeState for Matrix2<Complex64> {
    fn scaled(&self, h: f64) -> Self {
        self * Complex64::new(h, 0.0)
    }

    fn add_scaled(&self, h: f64, k: &Self) -> Self {
        self + k * Complex64::new(h, 0.0)
    }

    fn error_norm(err: &Self, y0: &Self, y1: &Self, atol: f64, rtol: f64) -> f64 {
        scaled_rms(err.iter(), y0.iter(), y1.iter(), atol, rtol)
    }
}

impl OdeState for DMatrix<Complex64> {
    fn scaled(&self, h: f64) -> Self {
        self * Complex64::new(h, 0.0)
    }

    fn add_scaled(&self, h: f64, k: &Self) -> Self {
        self + k * Complex64::new(h, 0.0)
    }

    fn axpy(&mut self, h: f64, k: &Self) {
        *self += k * Complex64::new(h, 0.0);
    }

    fn error_norm(err: &Self, y0: &Self, y1: &Self, atol: f64, rtol: f64) -> f64 {
        scaled_rms(err.iter(), y0.iter(), y1.iter(), atol, rtol)
    }
}

/// Integrator settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dopri5 {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
    /// Initial step; `None` picks one from the first derivative.
    pub h_init: Option<f64>,
}

impl Default for Dopri5 {
    fn default() -> Self {
        Self { rtol: 1e-9, atol: 1e-11, max_steps: 5_000_000, h_init: None }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct OdeStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// b - b_hat
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

impl Dopri5 {
    pub fn with_tolerances(rtol: f64, atol: f64) -> Self {
        Self { rtol, atol, ..Self::default() }
    }

    /// Integrates `y' = rhs(t, y)` from `t0` through each time in `stops`
    /// (monotone, in the direction of integration), calling `visit(index, t, y)`
    /// at every stop. Returns the state at the last stop.
    pub fn integrate<S, F, V>(&self, rhs: F, t0: f64, y0: S, stops: &[f64], mut visit: V) -> Result<(S, OdeStats)>
    where
        S: OdeState,
        F: Fn(f64, &S) -> S,
        V: FnMut(usize, f64, &S),
    {
        let mut stats = OdeStats::default();
        let Some(&t_end) = stops.last() else {
            return Ok((y0, stats));
        };
        let dir = if t_end >= t0 { 1.0 } else { -1.0 };
        let span = (t_end - t0).abs();
        let mut t = t0;
        let mut y = y0;
        let mut k1 = rhs(t, &y);
        stats.evaluations += 1;

        let mut h = match self.h_init {
            Some(h) => h.abs(),
            None => {
                // Hairer's heuristic: h = 0.01 |y| / |y'| in the error norm
                let d0 = S::error_norm(&y, &y, &y, self.atol, self.rtol);
                let d1 = S::error_norm(&k1, &y, &y, self.atol, self.rtol);
                let guess = if d0 > 1e-5 && d1 > 1e-5 { 0.01 * d0 / d1 } else { span * 1e-3 };
                guess.min(span.max(1e-12))
            }
        };
        let mut last_ratio: f64 = 1e-4;
        let tiny = 1e-14 * (1.0 + t0.abs().max(t_end.abs()));

        for (idx, &stop) in stops.iter().enumerate() {
            if (stop - t) * dir < 0.0 {
                return Err(Error::InvalidParameter {
                    field: "stops",
                    reason: format!("stop {stop} lies behind t = {t}"),
                });
            }
            while (stop - t) * dir > tiny {
                if stats.accepted + stats.rejected >= self.max_steps {
                    return Err(Error::TooManySteps { max_steps: self.max_steps, t: stop });
                }
                let remaining = (stop - t).abs();
                let hit_stop = h >= remaining;
                let step = if hit_stop { remaining } else { h };
                let hs = step * dir;

                let k2 = rhs(t + C2 * hs, &y.add_scaled(hs * A21, &k1));
                let mut y3 = y.add_scaled(hs * A31, &k1);
                y3.axpy(hs * A32, &k2);
                let k3 = rhs(t + C3 * hs, &y3);
                let mut y4 = y.add_scaled(hs * A41, &k1);
                y4.axpy(hs * A42, &k2);
                y4.axpy(hs * A43, &k3);
                let k4 = rhs(t + C4 * hs, &y4);
                let mut y5 = y.add_scaled(hs * A51, &k1);
                y5.axpy(hs * A52, &k2);
                y5.axpy(hs * A53, &k3);
                y5.axpy(hs * A54, &k4);
                let k5 = rhs(t + C5 * hs, &y5);
                let mut y6 = y.add_scaled(hs * A61, &k1);
                y6.axpy(hs * A62, &k2);
                y6.axpy(hs * A63, &k3);
                y6.axpy(hs * A64, &k4);
                y6.axpy(hs * A65, &k5);
                let t_new = if hit_stop { stop } else { t + hs };
                let k6 = rhs(t + hs, &y6);
                let mut y_new = y.add_scaled(hs * B1, &k1);
                y_new.axpy(hs * B3, &k3);
                y_new.axpy(hs * B4, &k4);
                y_new.axpy(hs * B5, &k5);
                y_new.axpy(hs * B6, &k6);
                let k7 = rhs(t_new, &y_new);
                stats.evaluations += 6;

                let mut err = k1.scaled(hs * E1);
                err.axpy(hs * E3, &k3);
                err.axpy(hs * E4, &k4);
                err.axpy(hs * E5, &k5);
                err.axpy(hs * E6, &k6);
                err.axpy(hs * E7, &k7);
                let ratio = S::error_norm(&err, &y, &y_new, self.atol, self.rtol);

                if ratio <= 1.0 {
                    t = t_new;
                    y = y_new;
                    k1 = k7;
                    stats.accepted += 1;
                    // PI step-size control
                    let r = ratio.max(1e-10);
                    let factor = (0.9 * r.powf(-0.7 / 5.0) * last_ratio.powf(0.4 / 5.0)).clamp(0.2, 5.0);
                    last_ratio = r.max(1e-4);
                    if !hit_stop || factor < 1.0 {
                        h = step * factor;
                    }
                } else {
                    stats.rejected += 1;
                    let factor = if ratio.is_finite() { (0.9 * ratio.powf(-0.2)).max(0.2) } else { 0.1 };
                    h = step * factor;
                }
                if h < tiny {
                    return Err(Error::StepUnderflow { t, h });
                }
            }
            t = stop;
            visit(idx, t, &y);
        }
        Ok((y, stats))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    type C = Complex64;

    #[test]
    fn harmonic_phase_rotation() {
        // y' = -i w y  =>  y(t) = exp(-i w t)
        let w = 3.7;
        let rhs = |_t: f64, y: &Vector2<C>| Vector2::new(y[0] * C::new(0.0, -w), y[1] * C::new(0.0, w));
        let y0 = Vector2::new(C::new(1.0, 0.0), C::new(1.0, 0.0));
        let stops = [0.5, 1.0, 2.0];
        let mut seen = vec![];
        let (y, stats) = Dopri5::with_tolerances(1e-11, 1e-13)
            .integrate(rhs, 0.0, y0, &stops, |i, t, y| seen.push((i, t, y[0])))
            .unwrap();
        assert_eq!(seen.len(), 3);
        for (i, t, v) in seen {
            assert_eq!(t, stops[i]);
            let exact = C::from_polar(1.0, -w * t);
            assert!((v - exact).norm() < 1e-9, "t = {t}: {v} vs {exact}");
        }
        assert!((y[1] - C::from_polar(1.0, 2.0 * w)).norm() < 1e-9);
        assert!(stats.accepted > 10);
    }

    #[test]
    fn backward_integration_inverts_forward() {
        let rhs = |t: f64, y: &Matrix2<C>| {
            let h = Matrix2::new(C::new(t, 0.0), C::new(0.3, 0.0), C::new(0.3, 0.0), C::new(-t, 0.0));
            h * y * C::new(0.0, -1.0)
        };
        let solver = Dopri5::with_tolerances(1e-12, 1e-14);
        let (u, _) = solver.integrate(rhs, 0.0, Matrix2::identity(), &[2.0], |_, _, _| {}).unwrap();
        let (back, _) = solver.integrate(rhs, 2.0, u, &[0.0], |_, _, _| {}).unwrap();
        assert!((back - Matrix2::<C>::identity()).norm() < 1e-10);
        assert_relative_eq!((u.adjoint() * u - Matrix2::identity()).norm(), 0.0, epsilon = 1e-10);
    }

    #[test]
    fn step_budget_is_enforced() {
        let rhs = |_t: f64, y: &Vector2<C>| y * C::new(0.0, -1e4);
        let solver = Dopri5 { max_steps: 10, ..Dopri5::default() };
        let y0 = Vector2::new(C::new(1.0, 0.0), C::new(0.0, 0.0));
        let err = solver.integrate(rhs, 0.0, y0, &[10.0], |_, _, _| {}).unwrap_err();
        assert!(matches!(err, Error::TooManySteps { .. }));
    }

    #[test]
    fn empty_stops_return_initial_state() {
        let rhs = |_t: f64, y: &Vector2<C>| y.clone();
        let y0 = Vector2::new(C::new(2.0, 0.0), C::new(0.0, 0.0));
        let (y, _) = Dopri5::default().integrate(rhs, 0.0, y0, &[], |_, _, _| {}).unwrap();
        assert_eq!(y, y0);
    }
}
