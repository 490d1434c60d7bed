//! Small dense helpers on top of `nalgebra` for 2x2 and NxN complex matrices.

use nalgebra::{DMatrix, Matrix2, Vector2};
use num_complex::Complex64;

pub type C64 = Complex64;
pub type Mat2 = Matrix2<C64>;
pub type Ket2 = Vector2<C64>;

pub const I: C64 = C64::new(0.0, 1.0);

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn pauli_x() -> Mat2 {
    Mat2::new(c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0))
}

pub fn pauli_y() -> Mat2 {
    Mat2::new(c(0.0, 0.0), c(0.0, -1.0), c(0.0, 1.0), c(0.0, 0.0))
}

pub fn pauli_z() -> Mat2 {
    Mat2::new(c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0))
}

/// `v . sigma` for a real 3-vector.
pub fn bloch_operator(v: [f64; 3]) -> Mat2 {
    Mat2::new(
        c(v[2], 0.0),
        c(v[0], -v[1]),
        c(v[0], v[1]),
        c(-v[2], 0.0),
    )
}

pub fn commutator(a: &Mat2, b: &Mat2) -> Mat2 {
    a * b - b * a
}

/// `|psi><psi|`
pub fn projector(psi: &Ket2) -> Mat2 {
    psi * psi.adjoint()
}

/// `Re tr[a b]` without forming the product.
pub fn trace_product_re(a: &Mat2, b: &Mat2) -> f64 {
    (a[(0, 0)] * b[(0, 0)] + a[(0, 1)] * b[(1, 0)] + a[(1, 0)] * b[(0, 1)] + a[(1, 1)] * b[(1, 1)]).re
}

/// Eigenvalues of a Hermitian 2x2 matrix in ascending order.
pub fn hermitian_eigenvalues(m: &Mat2) -> [f64; 2] {
    let a = m[(0, 0)].re;
    let d = m[(1, 1)].re;
    let b = m[(0, 1)];
    let mean = 0.5 * (a + d);
    let half = 0.5 * (a - d);
    let r = (half * half + b.norm_sqr()).sqrt();
    [mean - r, mean + r]
}

/// Eigenpairs of a Hermitian 2x2 matrix, ascending eigenvalues.
pub fn hermitian_eigen(m: &Mat2) -> ([f64; 2], [Ket2; 2]) {
    let vals = hermitian_eigenvalues(m);
    let b = m[(0, 1)];
    let a = m[(0, 0)].re;
    let d = m[(1, 1)].re;
    if b.norm() <= 1e-300 {
        let e0 = Ket2::new(c(1.0, 0.0), c(0.0, 0.0));
        let e1 = Ket2::new(c(0.0, 0.0), c(1.0, 0.0));
        return if a <= d { (vals, [e0, e1]) } else { (vals, [e1, e0]) };
    }
    let vec_for = |lam: f64| {
        // (a - lam) x + b y = 0 and conj(b) x + (d - lam) y = 0; pick the better-conditioned row
        let v = if (a - lam).abs() > (d - lam).abs() {
            Ket2::new(-b, c(a - lam, 0.0))
        } else {
            Ket2::new(c(d - lam, 0.0), -b.conj())
        };
        v / c(v.norm(), 0.0)
    };
    (vals, [vec_for(vals[0]), vec_for(vals[1])])
}

pub fn frobenius(m: &Mat2) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Embeds a 2x2 matrix as a dynamically sized one.
pub fn to_dmatrix(m: &Mat2) -> DMatrix<C64> {
    DMatrix::from_fn(2, 2, |r, col| m[(r, col)])
}

pub fn from_dmatrix(m: &DMatrix<C64>) -> Mat2 {
    Mat2::new(m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)])
}

/// Pairwise summation; the result depends only on the order of `xs`.
pub fn pairwise_sum<T>(xs: &[T]) -> T
where
    T: Copy + std::ops::Add<Output = T> + Default,
{
    const BLOCK: usize = 32;
    if xs.len() <= BLOCK {
        xs.iter().fold(T::default(), |acc, &x| acc + x)
    } else {
        let mid = xs.len() / 2;
        pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigen_of_bloch_operator() {
        let m = bloch_operator([0.3, -0.4, 1.2]) * c(2.0, 0.0);
        let (vals, vecs) = hermitian_eigen(&m);
        let r = 2.0 * (0.09f64 + 0.16 + 1.44).sqrt();
        assert!((vals[0] + r).abs() < 1e-14 && (vals[1] - r).abs() < 1e-14);
        for k in 0..2 {
            let resid = m * vecs[k] - vecs[k] * c(vals[k], 0.0);
            assert!(resid.norm() < 1e-13);
        }
        assert!(hermitian_eigen(&pauli_z()).1[0][1].norm() > 0.99);
    }

    #[test]
    fn pauli_algebra() {
        let comm = commutator(&pauli_x(), &pauli_y());
        assert!((comm - pauli_z() * c(0.0, 2.0)).norm() < 1e-15);
        let psi = Ket2::new(c(0.6, 0.0), c(0.0, 0.8));
        let rho = projector(&psi);
        assert!((trace_product_re(&pauli_z(), &rho) - (0.36 - 0.64)).abs() < 1e-15);
    }

    #[test]
    fn pairwise_sum_matches_naive_for_integers() {
        let xs: Vec<f64> = (0..1000).map(|k| k as f64).collect();
        assert_eq!(pairwise_sum(&xs), 499500.0);
    }
}
