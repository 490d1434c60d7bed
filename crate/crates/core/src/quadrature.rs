//! Globally adaptive Gauss–Kronrod (7/15) quadrature.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

// Gauss weights for the odd-indexed Kronrod nodes (1, 3, 5, 7).
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// Integration tolerances. Converged when the summed error estimate is below
/// `max(abs_tol, rel_tol * |I|)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self { abs_tol: 1e-10, rel_tol: 1e-12, max_intervals: 2000 }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
    pub intervals: usize,
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn kronrod15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Segment {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kron = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let dx = half * XGK[j];
        let s = f(center - dx) + f(center + dx);
        kron += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    Segment {
        a,
        b,
        value: kron * half,
        error: ((kron - gauss) * half).abs(),
    }
}

/// Integrates `f` over `[a, b]`. Reversed bounds flip the sign.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, opts: QuadOptions) -> Result<QuadResult> {
    integrate_with_breaks(f, &[a, b], opts)
}

/// Integrates over consecutive breakpoints `pts[0] .. pts[last]`, seeding one
/// segment per gap so that known features (window edges) are not straddled.
pub fn integrate_with_breaks<F: Fn(f64) -> f64>(f: F, pts: &[f64], opts: QuadOptions) -> Result<QuadResult> {
    if pts.len() < 2 {
        return Ok(QuadResult { value: 0.0, error: 0.0, intervals: 0 });
    }
    let (first, last) = (pts[0], pts[pts.len() - 1]);
    if first == last {
        return Ok(QuadResult { value: 0.0, error: 0.0, intervals: 0 });
    }
    if first > last {
        let rev: Vec<f64> = pts.iter().rev().copied().collect();
        let r = integrate_with_breaks(f, &rev, opts)?;
        return Ok(QuadResult { value: -r.value, ..r });
    }

    let mut heap = BinaryHeap::new();
    for w in pts.windows(2) {
        if w[1] > w[0] {
            heap.push(kronrod15(&f, w[0], w[1]));
        }
    }
    loop {
        let (value, error) = heap.iter().fold((0.0, 0.0), |(v, e), s| (v + s.value, e + s.error));
        let target = opts.abs_tol.max(opts.rel_tol * value.abs());
        if error <= target {
            return Ok(QuadResult { value, error, intervals: heap.len() });
        }
        if heap.len() >= opts.max_intervals {
            return Err(Error::Quadrature { achieved: error, requested: target });
        }
        let worst = heap.pop().expect("non-empty heap");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            return Err(Error::Quadrature { achieved: error, requested: target });
        }
        heap.push(kronrod15(&f, worst.a, mid));
        heap.push(kronrod15(&f, mid, worst.b));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn polynomials_are_exact() {
        let r = integrate(|x| 3.0 * x * x - x + 2.0, -1.0, 2.0, QuadOptions::default()).unwrap();
        assert_relative_eq!(r.value, 9.0 - 1.5 + 6.0, epsilon = 1e-13);
        assert_eq!(r.intervals, 1);
    }

    #[test]
    fn reversed_and_empty_bounds() {
        let f = |x: f64| x.exp();
        let fwd = integrate(f, 0.0, 1.0, QuadOptions::default()).unwrap().value;
        let rev = integrate(f, 1.0, 0.0, QuadOptions::default()).unwrap().value;
        assert_relative_eq!(fwd, -rev, epsilon = 1e-15);
        assert_eq!(integrate(f, 1.0, 1.0, QuadOptions::default()).unwrap().value, 0.0);
    }

    #[test]
    fn narrow_gaussian_moment() {
        let d: f64 = 0.01;
        let g = |t: f64| (-(t - 0.3) * (t - 0.3) / (d * d)).exp() / (std::f64::consts::PI.sqrt() * d);
        let r = integrate_with_breaks(|t| t * g(t), &[0.3 - 6.0 * d, 0.3 + 6.0 * d], QuadOptions::default()).unwrap();
        assert_relative_eq!(r.value, 0.3, epsilon = 1e-10);
    }

    #[test]
    fn reports_non_convergence() {
        let opts = QuadOptions { abs_tol: 1e-14, rel_tol: 0.0, max_intervals: 4 };
        let err = integrate(|x: f64| (1.0 / x.max(1e-300)).sin(), 1e-6, 1.0, opts).unwrap_err();
        assert!(matches!(err, Error::Quadrature { .. }));
    }
}
