//! Sampled work densities.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Which engine produced a distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    Analytic,
    Numeric,
    Mixture,
}

/// Uniform grid of work values, endpoints included.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorkGrid {
    start: f64,
    end: f64,
    points: usize,
}

impl WorkGrid {
    pub const DEFAULT_POINTS: usize = 4096;

    pub fn new(start: f64, end: f64, points: usize) -> Result<Self> {
        if !(start.is_finite() && end.is_finite()) || !(end > start) {
            return Err(invalid("work_grid", format!("need finite start < end, got [{start}, {end}]")));
        }
        if points < 3 {
            return Err(invalid("work_grid", format!("need at least 3 points, got {points}")));
        }
        Ok(Self { start, end, points })
    }

    /// Spans `[min(centers) - pad * width, max(centers) + pad * width]`.
    pub fn covering(centers: &[f64], width: f64, pad: f64, points: usize) -> Result<Self> {
        let lo = centers.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = centers.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !lo.is_finite() || !hi.is_finite() {
            return Err(invalid("centers", "need at least one finite center"));
        }
        Self::new(lo - pad * width, hi + pad * width, points)
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn end(&self) -> f64 {
        self.end
    }

    pub fn len(&self) -> usize {
        self.points
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        (self.end - self.start) / (self.points - 1) as f64
    }

    pub fn values(&self) -> Vec<f64> {
        let h = self.spacing();
        (0..self.points)
            .map(|k| if k + 1 == self.points { self.end } else { self.start + k as f64 * h })
            .collect()
    }
}

/// Trapezoid rule on (possibly non-uniform) samples.
pub fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(xs, ys)| 0.5 * (xs[1] - xs[0]) * (ys[0] + ys[1]))
        .sum()
}

/// A work density sampled on a grid together with its provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkDistribution {
    pub work: Vec<f64>,
    pub density: Vec<f64>,
    /// Time at which the pointer is read out.
    pub time: f64,
    pub engine: Engine,
    pub parameters: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl WorkDistribution {
    pub fn new(work: Vec<f64>, density: Vec<f64>, time: f64, engine: Engine) -> Result<Self> {
        if work.len() != density.len() {
            return Err(invalid(
                "density",
                format!("{} densities for {} grid points", density.len(), work.len()),
            ));
        }
        if work.len() < 2 {
            return Err(invalid("work", "need at least two grid points"));
        }
        if work.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid("work", "grid must be strictly increasing"));
        }
        if let Some((k, p)) = density.iter().enumerate().find(|(_, p)| !(**p >= 0.0) || !p.is_finite()) {
            return Err(invalid("density", format!("density at index {k} is {p}")));
        }
        Ok(Self { work, density, time, engine, parameters: BTreeMap::new(), warnings: Vec::new() })
    }

    pub fn with_parameter(mut self, key: &str, value: f64) -> Self {
        self.parameters.insert(key.to_owned(), value);
        self
    }

    pub fn mass(&self) -> f64 {
        trapezoid(&self.work, &self.density)
    }

    pub fn mean(&self) -> f64 {
        let wp: Vec<f64> = self.work.iter().zip(&self.density).map(|(w, p)| w * p).collect();
        trapezoid(&self.work, &wp)
    }

    /// Mass inside `[lo, hi]`, trapezoid on the grid points that fall inside.
    pub fn mass_between(&self, lo: f64, hi: f64) -> f64 {
        let (x, y): (Vec<f64>, Vec<f64>) = self
            .work
            .iter()
            .zip(&self.density)
            .filter(|(w, _)| **w >= lo && **w <= hi)
            .map(|(w, p)| (*w, *p))
            .unzip();
        trapezoid(&x, &y)
    }

    /// Fails unless the trapezoid mass lies in `[1 - eps, 1 + eps]`.
    pub fn check_normalized(&self, eps: f64) -> Result<()> {
        let m = self.mass();
        if (m - 1.0).abs() > eps {
            return Err(Error::Coverage(format!("distribution mass {m} is outside 1 +/- {eps}")));
        }
        Ok(())
    }

    /// Largest pointwise difference to another distribution on the same grid.
    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        if self.work != other.work {
            return Err(invalid("work", "distributions are sampled on different grids"));
        }
        Ok(self
            .density
            .iter()
            .zip(&other.density)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    /// `sum_k weight_k * dist_k` on a shared grid.
    pub fn convex_combination(parts: &[(f64, &WorkDistribution)]) -> Result<Self> {
        let Some((_, first)) = parts.first() else {
            return Err(invalid("components", "empty mixture"));
        };
        let total: f64 = parts.iter().map(|(w, _)| w).sum();
        if parts.iter().any(|(w, _)| *w < 0.0) || (total - 1.0).abs() > 1e-12 {
            return Err(invalid("weights", format!("mixture weights must be non-negative and sum to 1, got {total}")));
        }
        let mut density = vec![0.0; first.work.len()];
        let mut warnings = Vec::new();
        for (w, d) in parts {
            if d.work != first.work {
                return Err(invalid("work", "mixture components use different grids"));
            }
            for (acc, p) in density.iter_mut().zip(&d.density) {
                *acc += w * p;
            }
            warnings.extend(d.warnings.iter().cloned());
        }
        let mut out = Self::new(first.work.clone(), density, first.time, Engine::Mixture)?;
        out.parameters = first.parameters.clone();
        out.warnings = warnings;
        Ok(out)
    }

    /// Local maxima whose height exceeds `rel_height * max(density)`.
    pub fn peaks(&self, rel_height: f64) -> Vec<(f64, f64)> {
        let top = self.density.iter().copied().fold(0.0, f64::max);
        let d = &self.density;
        (1..d.len() - 1)
            .filter(|&k| d[k] > d[k - 1] && d[k] >= d[k + 1] && d[k] > rel_height * top)
            .map(|k| (self.work[k], d[k]))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn gaussian(grid: &[f64], c: f64, s: f64) -> Vec<f64> {
        grid.iter()
            .map(|w| (-(w - c) * (w - c) / (s * s)).exp() / (std::f64::consts::PI.sqrt() * s))
            .collect()
    }

    #[test]
    fn grid_endpoints_are_exact() {
        let g = WorkGrid::new(-3.0, 5.0, 1001).unwrap();
        let v = g.values();
        assert_eq!(v[0], -3.0);
        assert_eq!(v[1000], 5.0);
        assert_relative_eq!(g.spacing(), 0.008, epsilon = 1e-15);
        assert!(WorkGrid::new(1.0, 1.0, 10).is_err());
        assert!(WorkGrid::new(0.0, 1.0, 2).is_err());
    }

    #[test]
    fn rejects_negative_or_mismatched_density() {
        assert!(WorkDistribution::new(vec![0.0, 1.0], vec![0.5, -0.1], 0.0, Engine::Analytic).is_err());
        assert!(WorkDistribution::new(vec![0.0, 1.0], vec![0.5], 0.0, Engine::Analytic).is_err());
        assert!(WorkDistribution::new(vec![0.0, 1.0], vec![0.5, f64::NAN], 0.0, Engine::Analytic).is_err());
    }

    #[test]
    fn gaussian_mass_mean_and_peaks() {
        let grid = WorkGrid::covering(&[1.5], 0.5, 8.0, 2001).unwrap().values();
        let d = WorkDistribution::new(grid.clone(), gaussian(&grid, 1.5, 0.5), 4.0, Engine::Analytic).unwrap();
        assert!((d.mass() - 1.0).abs() < 1e-12);
        assert!((d.mean() - 1.5).abs() < 1e-12);
        d.check_normalized(1e-10).unwrap();
        let peaks = d.peaks(0.1);
        assert_eq!(peaks.len(), 1);
        assert!((peaks[0].0 - 1.5).abs() < 1e-2);
        assert!((d.mass_between(1.5, 100.0) - 0.5).abs() < 1e-3);
    }

    #[test]
    fn convex_combination_is_linear() {
        let grid = WorkGrid::new(-6.0, 6.0, 801).unwrap().values();
        let a = WorkDistribution::new(grid.clone(), gaussian(&grid, -1.0, 0.5), 4.0, Engine::Numeric).unwrap();
        let b = WorkDistribution::new(grid.clone(), gaussian(&grid, 1.0, 0.5), 4.0, Engine::Numeric).unwrap();
        let m = WorkDistribution::convex_combination(&[(0.25, &a), (0.75, &b)]).unwrap();
        for k in 0..grid.len() {
            assert_relative_eq!(m.density[k], 0.25 * a.density[k] + 0.75 * b.density[k], epsilon = 1e-15);
        }
        assert_eq!(m.engine, Engine::Mixture);
        assert!(WorkDistribution::convex_combination(&[(0.5, &a)]).is_err());
        let same = WorkDistribution::convex_combination(&[(1.0, &a), (0.0, &b)]).unwrap();
        assert_eq!(same.density, a.density);
    }
}
