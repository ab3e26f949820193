//! Dense Hermitian eigensolver (cyclic Jacobi) generic over real and
//! complex scalars.
//!
//! The factorization module needs full spectra of kernels that are at most
//! a few hundred rows, where Jacobi is simple, accurate to near machine
//! precision, and free of external linear-algebra backends. The same code
//! path serves `f64` and `Complex64`; complex arithmetic on real-valued
//! inputs keeps imaginary parts at exactly zero, so both paths agree
//! bit for bit.

use num_complex::Complex64;
use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};

/// Scalar field of a wave-function sample: `f64` or `Complex64`.
pub trait Scalar:
    Copy
    + PartialEq
    + Debug
    + Send
    + Sync
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + 'static
{
    fn zero() -> Self;
    fn one() -> Self;
    fn from_real(x: f64) -> Self;
    fn conj(self) -> Self;
    /// `|z|`
    fn modulus(self) -> f64;
    /// `|z|^2`
    fn modulus_sqr(self) -> f64;
    fn real(self) -> f64;
    fn imag(self) -> f64;
    /// Multiplication by a real factor.
    fn scale(self, s: f64) -> Self;
    fn is_finite_scalar(self) -> bool;
}

impl Scalar for f64 {
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn from_real(x: f64) -> Self {
        x
    }
    fn conj(self) -> Self {
        self
    }
    fn modulus(self) -> f64 {
        self.abs()
    }
    fn modulus_sqr(self) -> f64 {
        self * self
    }
    fn real(self) -> f64 {
        self
    }
    fn imag(self) -> f64 {
        0.0
    }
    fn scale(self, s: f64) -> Self {
        self * s
    }
    fn is_finite_scalar(self) -> bool {
        self.is_finite()
    }
}

impl Scalar for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn one() -> Self {
        Complex64::new(1.0, 0.0)
    }
    fn from_real(x: f64) -> Self {
        Complex64::new(x, 0.0)
    }
    fn conj(self) -> Self {
        Complex64::conj(&self)
    }
    fn modulus(self) -> f64 {
        // hypot(re, 0) == |re|, so real-valued inputs match the f64 path
        self.re.hypot(self.im)
    }
    fn modulus_sqr(self) -> f64 {
        self.re * self.re + self.im * self.im
    }
    fn real(self) -> f64 {
        self.re
    }
    fn imag(self) -> f64 {
        self.im
    }
    fn scale(self, s: f64) -> Self {
        Complex64::new(self.re * s, self.im * s)
    }
    fn is_finite_scalar(self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }
}

/// Eigendecomposition of a Hermitian matrix: real eigenvalues in
/// decreasing order with matching orthonormal eigenvectors.
#[derive(Debug, Clone)]
pub struct Eigen<T> {
    pub values: Vec<f64>,
    /// `vectors[m]` is the eigenvector of `values[m]`, length n.
    pub vectors: Vec<Vec<T>>,
}

const MAX_SWEEPS: usize = 64;

/// Full eigendecomposition of the Hermitian matrix `a` (row-major, n x n)
/// by cyclic Jacobi rotations.
///
/// Panics if `a` is not square of size `n` or not finite. Symmetry is the
/// caller's responsibility; only the upper triangle's conjugate structure
/// is assumed.
pub fn hermitian_eigen<T: Scalar>(a: &[T], n: usize) -> Eigen<T> {
    assert_eq!(a.len(), n * n, "matrix shape mismatch");
    assert!(a.iter().all(|x| x.is_finite_scalar()), "non-finite matrix entry");
    let mut m = a.to_vec();
    let mut v = vec![T::zero(); n * n];
    for i in 0..n {
        v[i * n + i] = T::one();
    }
    let scale: f64 = m.iter().map(|x| x.modulus_sqr()).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    let tol = 1e-15 * scale;

    for _sweep in 0..MAX_SWEEPS {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in (p + 1)..n {
                off += m[p * n + q].modulus_sqr();
            }
        }
        if off.sqrt() <= tol {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let g = m[p * n + q];
                let ag = g.modulus();
                if ag == 0.0 {
                    continue;
                }
                let alpha = m[p * n + p].real();
                let beta = m[q * n + q].real();
                // unit phase folding the pivot to a real 2x2 block
                let u = g / T::from_real(ag);
                let tau = (beta - alpha) / (2.0 * ag);
                let t = if tau.abs() > 1e150 {
                    1.0 / (2.0 * tau)
                } else if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    1.0 / (tau - (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                let su = u.scale(s);
                let cu = u.scale(c);

                // rows p and q of U^H M
                for i in 0..n {
                    let mp = m[p * n + i];
                    let mq = m[q * n + i];
                    m[p * n + i] = mp.scale(c) - u * mq.scale(s);
                    m[q * n + i] = mp.scale(s) + u * mq.scale(c);
                }
                // columns p and q of (U^H M) U
                for i in 0..n {
                    let mp = m[i * n + p];
                    let mq = m[i * n + q];
                    m[i * n + p] = mp.scale(c) - su.conj() * mq;
                    m[i * n + q] = mp.scale(s) + cu.conj() * mq;
                }
                // exact zeros on the pivot pair
                m[p * n + q] = T::zero();
                m[q * n + p] = T::zero();
                // accumulate V <- V U
                for i in 0..n {
                    let vp = v[i * n + p];
                    let vq = v[i * n + q];
                    v[i * n + p] = vp.scale(c) - su.conj() * vq;
                    v[i * n + q] = vp.scale(s) + cu.conj() * vq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[j * n + j].real().total_cmp(&m[i * n + i].real()));
    let values: Vec<f64> = order.iter().map(|&i| m[i * n + i].real()).collect();
    let vectors: Vec<Vec<T>> = order
        .iter()
        .map(|&col| (0..n).map(|row| v[row * n + col]).collect())
        .collect();
    Eigen { values, vectors }
}

/// Real symmetric eigendecomposition; see [`hermitian_eigen`].
pub fn symmetric_eigen(a: &[f64], n: usize) -> Eigen<f64> {
    hermitian_eigen(a, n)
}
