//! Protocol timing: preparation, the two coupling windows and the final
//! pointer readout.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Half-width of a coupling window's numerical support, in units of `delta`.
///
/// `exp(-36)` is below double-precision noise relative to the window peak.
pub const WINDOW_SUPPORT: f64 = 6.0;

/// Ordered protocol times `t_p < t_i <= t_f < t_m` and the coupling window width.
///
/// `t_i == t_f` is accepted: both windows coincide and the coupling cancels
/// identically, which gives the trivial (pointer-only) distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProtocolSchedule {
    t_p: f64,
    t_i: f64,
    t_f: f64,
    t_m: f64,
    delta: f64,
}

impl ProtocolSchedule {
    pub fn new(t_p: f64, t_i: f64, t_f: f64, t_m: f64, delta: f64) -> Result<Self> {
        for (name, v) in [("t_p", t_p), ("t_i", t_i), ("t_f", t_f), ("t_m", t_m), ("delta", delta)] {
            if !v.is_finite() {
                return Err(invalid(name, format!("must be finite, got {v}")));
            }
        }
        if !(t_p < t_i) {
            return Err(invalid("t_i", format!("t_p = {t_p} must precede t_i = {t_i}")));
        }
        if !(t_i <= t_f) {
            return Err(invalid("t_f", format!("t_i = {t_i} must not follow t_f = {t_f}")));
        }
        if !(t_f < t_m) {
            return Err(invalid("t_m", format!("t_f = {t_f} must precede t_m = {t_m}")));
        }
        if !(delta > 0.0) {
            return Err(invalid("delta", format!("window width must be positive, got {delta}")));
        }
        Ok(Self { t_p, t_i, t_f, t_m, delta })
    }

    /// Parameters used for the driven-qubit figures: `t_p = 0`, `t_i = 2`,
    /// `t_f = 3`, `t_m = 4`, `delta = 0.2` (all in units of `1/kappa`).
    pub fn figure_default() -> Self {
        Self { t_p: 0.0, t_i: 2.0, t_f: 3.0, t_m: 4.0, delta: 0.2 }
    }

    pub fn t_p(&self) -> f64 {
        self.t_p
    }

    pub fn t_i(&self) -> f64 {
        self.t_i
    }

    pub fn t_f(&self) -> f64 {
        self.t_f
    }

    pub fn t_m(&self) -> f64 {
        self.t_m
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Same times with a different window width.
    pub fn with_delta(&self, delta: f64) -> Result<Self> {
        Self::new(self.t_p, self.t_i, self.t_f, self.t_m, delta)
    }

    /// True when the two windows do not overlap appreciably (`t_f - t_i > 6 delta`).
    pub fn windows_disjoint(&self) -> bool {
        self.t_f - self.t_i > WINDOW_SUPPORT * self.delta
    }

    /// Gaussian window `g(t) = exp(-t^2/delta^2) / (sqrt(pi) delta)`, unit area.
    pub fn window_value(&self, t: f64) -> f64 {
        let x = t / self.delta;
        (-x * x).exp() / (std::f64::consts::PI.sqrt() * self.delta)
    }

    /// Coupling profile `f(t) = g(t - t_f) - g(t - t_i)`.
    pub fn sampling_function(&self, t: f64) -> f64 {
        self.window_value(t - self.t_f) - self.window_value(t - self.t_i)
    }

    /// Numerical supports of the two windows, `[t_x - 6 delta, t_x + 6 delta]`,
    /// clipped to `[t_p, t_m]`. Returned as `(initial, final)`.
    pub fn window_supports(&self) -> ([f64; 2], [f64; 2]) {
        let w = WINDOW_SUPPORT * self.delta;
        let clip = |c: f64| [(c - w).max(self.t_p), (c + w).min(self.t_m)];
        (clip(self.t_i), clip(self.t_f))
    }

    /// Union of the window supports intersected with `[from, to]`, as sorted
    /// disjoint intervals.
    pub fn coupling_intervals(&self, from: f64, to: f64) -> Vec<[f64; 2]> {
        let (a, b) = self.window_supports();
        let mut out: Vec<[f64; 2]> = Vec::with_capacity(2);
        for [lo, hi] in [a, b] {
            let lo = lo.max(from);
            let hi = hi.min(to);
            if hi <= lo {
                continue;
            }
            match out.last_mut() {
                Some(last) if lo <= last[1] => last[1] = last[1].max(hi),
                _ => out.push([lo, hi]),
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn quad(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        // composite Simpson, test-only oracle
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for k in 1..n {
            let w = if k % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(a + k as f64 * h);
        }
        s * h / 3.0
    }

    #[test]
    fn rejects_misordered_times() {
        assert!(ProtocolSchedule::new(2.0, 1.0, 3.0, 4.0, 0.2).is_err());
        assert!(ProtocolSchedule::new(0.0, 3.0, 2.0, 4.0, 0.2).is_err());
        assert!(ProtocolSchedule::new(0.0, 2.0, 3.0, 3.0, 0.2).is_err());
        assert!(ProtocolSchedule::new(0.0, 2.0, 3.0, 4.0, 0.0).is_err());
        assert!(ProtocolSchedule::new(0.0, 2.0, 2.0, 4.0, 0.2).is_ok());
    }

    #[test]
    fn window_peak_and_tails() {
        let s = ProtocolSchedule::figure_default();
        assert_relative_eq!(s.window_value(0.0), 2.820947917738781, epsilon = 1e-12);
        assert_eq!(s.window_value(1e3), 0.0);
        assert_eq!(s.window_value(-1e3), 0.0);
    }

    #[test]
    fn window_has_unit_area() {
        let s = ProtocolSchedule::figure_default();
        let d = s.delta();
        let area = quad(|t| s.window_value(t), -6.0 * d, 6.0 * d, 2000);
        assert!((area - 1.0).abs() < 1e-12, "area = {area}");
    }

    #[test]
    fn sampling_function_peaks_at_final_window() {
        let s = ProtocolSchedule::figure_default();
        let expected = 1.0 / (std::f64::consts::PI.sqrt() * 0.2);
        // the initial window contributes exp(-25)/(sqrt(pi) delta)
        let leak = (-25.0f64).exp() * expected;
        assert_relative_eq!(s.sampling_function(3.0), expected - leak, epsilon = 1e-15);
        assert_relative_eq!(s.sampling_function(2.0), -(expected - leak), epsilon = 1e-15);
    }

    #[test]
    fn sampling_function_integrates_to_zero() {
        let s = ProtocolSchedule::figure_default();
        let total = quad(|t| s.sampling_function(t), s.t_p(), s.t_m(), 8000);
        assert!(total.abs() < 1e-10, "total = {total}");
    }

    #[test]
    fn coincident_windows_cancel() {
        let s = ProtocolSchedule::new(0.0, 2.5, 2.5, 4.0, 0.2).unwrap();
        for k in 0..100 {
            assert_eq!(s.sampling_function(k as f64 * 0.04), 0.0);
        }
    }

    #[test]
    fn coupling_intervals_merge_overlaps() {
        let s = ProtocolSchedule::figure_default();
        // t_f - t_i = 1 < 6 delta = 1.2 for the figure schedule: one merged segment
        let iv = s.coupling_intervals(0.0, 4.0);
        assert_eq!(iv.len(), 1);
        assert_relative_eq!(iv[0][0], 0.8, epsilon = 1e-12);
        assert_relative_eq!(iv[0][1], 4.0, epsilon = 1e-12);
        assert!(!s.windows_disjoint());

        let apart = ProtocolSchedule::new(0.0, 1.0, 3.0, 4.0, 0.1).unwrap();
        let iv = apart.coupling_intervals(0.0, 4.0);
        assert_eq!(iv.len(), 2);
        assert_relative_eq!(iv[0][1], 1.6, epsilon = 1e-12);
        assert_relative_eq!(iv[1][0], 2.4, epsilon = 1e-12);
        assert!(apart.windows_disjoint());
        assert!(apart.coupling_intervals(1.7, 2.3).is_empty());
    }
}
