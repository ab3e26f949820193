//! Variational separable approximation of gridded wave functions.
//!
//! For a two-variable function the best product `phi_1(x_1) phi_2(x_2)`
//! minimizing `J = ||psi - phi_1 phi_2||^2` comes from the top eigenpair
//! of the kernel
//!
//! ```text
//! K(x_1, x_1') = integral psi(x_1, x_2) conj(psi(x_1', x_2)) dx_2,
//! ```
//!
//! a positive operator whose trace is `||psi||^2`. Further terms deflate
//! the next eigenpairs, the residual after rank k is
//! `||psi||^2 - sum_{i<=k} nu_i`, and each `phi_2` carries the weight
//! `||phi_2^(i)||^2 = nu_i` (the Lagrange bookkeeping is `mu = nu`,
//! `lambda = 2 nu`).
//!
//! Three variables are handled stepwise: pick an outer variable, find the
//! best split `phi_1(x_s1, x_o) phi_2(x_s2, x_o)` (which decouples into
//! independent two-variable problems per outer node), then rank-1
//! factorize each two-variable factor. The result depends on which
//! variable is chosen as outer; all three choices are legitimate outputs
//! and the residuals quantify the order dependence.
//!
//! Integrals become quadrature sums with per-axis trapezoid weights. All
//! inner products, norms and eigenproblems below are taken in those
//! weighted spaces.

pub mod gridfile;

use crate::linalg::{hermitian_eigen, Scalar};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum FactorizationError {
    #[error("axis needs at least 2 nodes, got {0}")]
    AxisTooShort(usize),
    #[error("axis range must be increasing, got [{min}, {max}]")]
    BadAxisRange { min: f64, max: f64 },
    #[error("expected {expected} values for the grid, got {got}")]
    ValueCount { expected: usize, got: usize },
    #[error("values must be finite")]
    NonFiniteValue,
    #[error("operation needs a {expected}-variable function, got {got} axes")]
    WrongDimension { expected: usize, got: usize },
    #[error("rank {rank} exceeds the smallest node count {max}")]
    RankTooLarge { rank: usize, max: usize },
    #[error("outer axis {0} out of range for a 3-variable function")]
    BadOuterAxis(usize),
}

/// Coordinate grid of one variable with its quadrature weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl Axis {
    /// Uniform grid on `[min, max]` with trapezoid weights.
    pub fn uniform(min: f64, max: f64, n: usize) -> Result<Self, FactorizationError> {
        if n < 2 {
            return Err(FactorizationError::AxisTooShort(n));
        }
        if !(max > min) || !min.is_finite() || !max.is_finite() {
            return Err(FactorizationError::BadAxisRange { min, max });
        }
        let h = (max - min) / (n - 1) as f64;
        let nodes = (0..n).map(|i| min + h * i as f64).collect();
        let mut weights = vec![h; n];
        weights[0] = 0.5 * h;
        weights[n - 1] = 0.5 * h;
        Ok(Self { nodes, weights })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn min(&self) -> f64 {
        self.nodes[0]
    }

    pub fn max(&self) -> f64 {
        *self.nodes.last().unwrap()
    }
}

/// Sampled wave function on a tensor grid of 2 or 3 axes, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GriddedFunction<T: Scalar> {
    axes: Vec<Axis>,
    values: Vec<T>,
}

impl<T: Scalar> GriddedFunction<T> {
    pub fn new(axes: Vec<Axis>, values: Vec<T>) -> Result<Self, FactorizationError> {
        if !(2..=3).contains(&axes.len()) {
            return Err(FactorizationError::WrongDimension { expected: 2, got: axes.len() });
        }
        let expected: usize = axes.iter().map(Axis::len).product();
        if values.len() != expected {
            return Err(FactorizationError::ValueCount { expected, got: values.len() });
        }
        if values.iter().any(|v| !v.is_finite_scalar()) {
            return Err(FactorizationError::NonFiniteValue);
        }
        Ok(Self { axes, values })
    }

    /// Samples `f` on the tensor grid.
    pub fn from_fn2(
        axis1: Axis,
        axis2: Axis,
        f: impl Fn(f64, f64) -> T,
    ) -> Result<Self, FactorizationError> {
        let mut values = Vec::with_capacity(axis1.len() * axis2.len());
        for &x1 in axis1.nodes() {
            for &x2 in axis2.nodes() {
                values.push(f(x1, x2));
            }
        }
        Self::new(vec![axis1, axis2], values)
    }

    pub fn from_fn3(
        axis1: Axis,
        axis2: Axis,
        axis3: Axis,
        f: impl Fn(f64, f64, f64) -> T,
    ) -> Result<Self, FactorizationError> {
        let mut values = Vec::with_capacity(axis1.len() * axis2.len() * axis3.len());
        for &x1 in axis1.nodes() {
            for &x2 in axis2.nodes() {
                for &x3 in axis3.nodes() {
                    values.push(f(x1, x2, x3));
                }
            }
        }
        Self::new(vec![axis1, axis2, axis3], values)
    }

    pub fn ndim(&self) -> usize {
        self.axes.len()
    }

    pub fn axis(&self, i: usize) -> &Axis {
        &self.axes[i]
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    /// Quadrature norm `||psi||^2`.
    pub fn norm_sqr(&self) -> f64 {
        let mut total = 0.0;
        self.for_each_weighted(|w, v| total += w * v.modulus_sqr());
        total
    }

    /// Rescales so the quadrature norm is 1. No-op on the zero function.
    pub fn normalized(mut self) -> Self {
        let norm = self.norm_sqr().sqrt();
        if norm > 0.0 {
            for v in &mut self.values {
                *v = v.scale(1.0 / norm);
            }
        }
        self
    }

    fn for_each_weighted(&self, mut f: impl FnMut(f64, T)) {
        match self.axes.len() {
            2 => {
                let (n1, n2) = (self.axes[0].len(), self.axes[1].len());
                for i in 0..n1 {
                    let w1 = self.axes[0].weights[i];
                    for j in 0..n2 {
                        f(w1 * self.axes[1].weights[j], self.values[i * n2 + j]);
                    }
                }
            }
            3 => {
                let (n2, n3) = (self.axes[1].len(), self.axes[2].len());
                for (idx, &v) in self.values.iter().enumerate() {
                    let k = idx % n3;
                    let j = (idx / n3) % n2;
                    let i = idx / (n2 * n3);
                    let w = self.axes[0].weights[i] * self.axes[1].weights[j] * self.axes[2].weights[k];
                    f(w, v);
                }
            }
            _ => unreachable!("validated at construction"),
        }
    }

    /// Swaps the two axes of a 2-variable function (conjugating values so
    /// the represented object is the adjoint map).
    pub fn transposed(&self) -> Result<Self, FactorizationError> {
        if self.ndim() != 2 {
            return Err(FactorizationError::WrongDimension { expected: 2, got: self.ndim() });
        }
        let (n1, n2) = (self.axes[0].len(), self.axes[1].len());
        let mut values = vec![T::zero(); n1 * n2];
        for i in 0..n1 {
            for j in 0..n2 {
                values[j * n1 + i] = self.values[i * n2 + j];
            }
        }
        Self::new(vec![self.axes[1].clone(), self.axes[0].clone()], values)
    }
}

/// Kernel of the axis-1 eigenproblem: `K_ij = sum_k w2_k psi_ik conj(psi_jk)`,
/// Hermitian and positive in the axis-1 weighted inner product.
#[derive(Debug, Clone)]
pub struct Kernel<T: Scalar> {
    /// Row-major `n1 x n1` entries.
    pub matrix: Vec<T>,
    /// Axis-1 grid carrying the weights of the inner product.
    pub axis: Axis,
}

impl<T: Scalar> Kernel<T> {
    pub fn n(&self) -> usize {
        self.axis.len()
    }

    /// Weighted trace `sum_i w_i K_ii`, equal to `||psi||^2`.
    pub fn trace(&self) -> f64 {
        let n = self.n();
        (0..n).map(|i| self.axis.weights[i] * self.matrix[i * n + i].real()).sum()
    }

    /// `(K phi)_i = sum_j w_j K_ij phi_j`.
    pub fn apply(&self, phi: &[T]) -> Vec<T> {
        let n = self.n();
        let mut out = vec![T::zero(); n];
        for i in 0..n {
            let mut acc = T::zero();
            for j in 0..n {
                acc += self.matrix[i * n + j] * phi[j].scale(self.axis.weights[j]);
            }
            out[i] = acc;
        }
        out
    }

    /// Eigenvalues in the weighted space (decreasing).
    pub fn eigenvalues(&self) -> Vec<f64> {
        let s = self.symmetrized();
        hermitian_eigen(&s, self.n()).values
    }

    /// Similarity transform to the plain Hermitian matrix
    /// `S_ij = sqrt(w_i) K_ij sqrt(w_j)` whose spectrum matches the
    /// weighted operator.
    fn symmetrized(&self) -> Vec<T> {
        let n = self.n();
        let mut s = vec![T::zero(); n * n];
        for i in 0..n {
            for j in 0..n {
                let w = (self.axis.weights[i] * self.axis.weights[j]).sqrt();
                s[i * n + j] = self.matrix[i * n + j].scale(w);
            }
        }
        s
    }
}

/// Kernel over the first axis of a 2-variable function.
pub fn build_kernel<T: Scalar>(psi: &GriddedFunction<T>) -> Result<Kernel<T>, FactorizationError> {
    if psi.ndim() != 2 {
        return Err(FactorizationError::WrongDimension { expected: 2, got: psi.ndim() });
    }
    let (n1, n2) = (psi.axes[0].len(), psi.axes[1].len());
    let w2 = psi.axes[1].weights();
    let mut matrix = vec![T::zero(); n1 * n1];
    for i in 0..n1 {
        for j in 0..=i {
            let mut acc = T::zero();
            for k in 0..n2 {
                acc += (psi.values[i * n2 + k] * psi.values[j * n2 + k].conj()).scale(w2[k]);
            }
            matrix[i * n1 + j] = acc;
            matrix[j * n1 + i] = acc.conj();
        }
    }
    Ok(Kernel { matrix, axis: psi.axes[0].clone() })
}

/// One separable term: `phi1` normalized on axis 1, `phi2` carrying the
/// weight `nu` on axis 2.
#[derive(Debug, Clone)]
pub struct FactorPair<T> {
    pub phi1: Vec<T>,
    pub phi2: Vec<T>,
}

#[derive(Debug, Clone)]
pub struct FactorizationResult<T: Scalar> {
    pub factors: Vec<FactorPair<T>>,
    /// Extracted eigenvalues, decreasing and clamped at zero.
    pub eigenvalues: Vec<f64>,
    /// `||psi||^2 - sum nu_i`, clamped at zero.
    pub residual: f64,
    pub norm_sqr: f64,
    /// Groups of extracted eigenvalues closer than `1e-10 * nu_1`
    /// (start index, length). Factors inside a group are a deterministic
    /// but arbitrary basis of the near-degenerate subspace.
    pub degenerate_groups: Vec<(usize, usize)>,
    pub axes: [Axis; 2],
}

impl<T: Scalar> FactorizationResult<T> {
    /// `mu_i = ||phi2^(i)||^2`; the variational bookkeeping demands
    /// `mu_i = nu_i` and Lagrange value `2 nu_i`.
    pub fn mu(&self, i: usize) -> f64 {
        let w2 = self.axes[1].weights();
        self.factors[i].phi2.iter().zip(w2).map(|(v, &w)| w * v.modulus_sqr()).sum()
    }

    /// Largest deviation of the reconstruction identity
    /// `J = ||psi||^2 - sum nu_i` recomputed from the stored pieces.
    pub fn extracted_sum(&self) -> f64 {
        self.eigenvalues.iter().sum()
    }
}

fn apply_sign_convention<T: Scalar>(phi: &mut [T]) -> T {
    let max = phi.iter().map(|v| v.modulus()).fold(0.0, f64::max);
    if max == 0.0 {
        return T::one();
    }
    let pivot = phi.iter().find(|v| v.modulus() > 1e-12 * max).copied().unwrap_or(T::one());
    let phase = pivot / T::from_real(pivot.modulus());
    let correction = phase.conj();
    for v in phi.iter_mut() {
        *v = *v * correction;
    }
    correction
}

/// Best rank-`rank` separable approximation of a 2-variable function.
pub fn factorize2<T: Scalar>(
    psi: &GriddedFunction<T>,
    rank: usize,
) -> Result<FactorizationResult<T>, FactorizationError> {
    if psi.ndim() != 2 {
        return Err(FactorizationError::WrongDimension { expected: 2, got: psi.ndim() });
    }
    let (n1, n2) = (psi.axes[0].len(), psi.axes[1].len());
    let max_rank = n1.min(n2);
    if rank == 0 || rank > max_rank {
        return Err(FactorizationError::RankTooLarge { rank, max: max_rank });
    }
    let kernel = build_kernel(psi)?;
    let eig = hermitian_eigen(&kernel.symmetrized(), n1);

    let w1 = psi.axes[0].weights();
    let w2 = psi.axes[1].weights();
    let mut factors = Vec::with_capacity(rank);
    let mut eigenvalues = Vec::with_capacity(rank);
    for m in 0..rank {
        let nu = eig.values[m].max(0.0);
        eigenvalues.push(nu);
        let mut phi1: Vec<T> = eig.vectors[m]
            .iter()
            .zip(w1)
            .map(|(&u, &w)| u.scale(1.0 / w.sqrt()))
            .collect();
        apply_sign_convention(&mut phi1);
        let mut phi2 = vec![T::zero(); n2];
        for (k, out) in phi2.iter_mut().enumerate() {
            let mut acc = T::zero();
            for i in 0..n1 {
                acc += (phi1[i].conj() * psi.values[i * n2 + k]).scale(w1[i]);
            }
            *out = acc;
        }
        factors.push(FactorPair { phi1, phi2 });
    }

    let mut degenerate_groups = Vec::new();
    if rank >= 2 {
        let gap_floor = 1e-10 * eigenvalues[0].max(f64::MIN_POSITIVE);
        let mut start = 0usize;
        for m in 1..rank {
            let gap = eigenvalues[m - 1] - eigenvalues[m];
            if gap >= gap_floor {
                if m - start > 1 {
                    degenerate_groups.push((start, m - start));
                }
                start = m;
            }
        }
        if rank - start > 1 {
            degenerate_groups.push((start, rank - start));
        }
    }

    let norm_sqr = psi.norm_sqr();
    let residual = (norm_sqr - eigenvalues.iter().sum::<f64>()).max(0.0);
    Ok(FactorizationResult {
        factors,
        eigenvalues,
        residual,
        norm_sqr,
        degenerate_groups,
        axes: [psi.axes[0].clone(), psi.axes[1].clone()],
    })
}

/// Stepwise three-variable factorization with `outer_axis` as the shared
/// variable of the first split.
#[derive(Debug, Clone)]
pub struct Factor3Result<T: Scalar> {
    /// Single-variable factors indexed by the original axis number.
    pub chi: [Vec<T>; 3],
    /// Quadrature residual `||psi - chi1 chi2 chi3||^2`.
    pub residual: f64,
    pub outer_axis: usize,
}

/// The paper's stepwise procedure: minimize
/// `||psi - phi_1(x_s1, x_o) phi_2(x_s2, x_o)||^2` (which decouples into a
/// rank-1 problem per outer node), then rank-1 factorize both two-variable
/// factors and collect the outer dependence into
/// `chi_o = phi_1o * phi_2o`.
pub fn factorize3_stepwise<T: Scalar>(
    psi: &GriddedFunction<T>,
    outer_axis: usize,
) -> Result<Factor3Result<T>, FactorizationError> {
    if psi.ndim() != 3 {
        return Err(FactorizationError::WrongDimension { expected: 3, got: psi.ndim() });
    }
    if outer_axis >= 3 {
        return Err(FactorizationError::BadOuterAxis(outer_axis));
    }
    let selected: Vec<usize> = (0..3).filter(|&a| a != outer_axis).collect();
    let (s1, s2) = (selected[0], selected[1]);
    let (a1, a2, ao) = (&psi.axes[s1], &psi.axes[s2], &psi.axes[outer_axis]);
    let (n1, n2, no) = (a1.len(), a2.len(), ao.len());

    let dims = [psi.axes[0].len(), psi.axes[1].len(), psi.axes[2].len()];
    let full_index = |idx: [usize; 3]| (idx[0] * dims[1] + idx[1]) * dims[2] + idx[2];

    // fiber-wise rank-1 split per outer node
    let mut factor_a = vec![T::zero(); n1 * no];
    let mut factor_b = vec![T::zero(); n2 * no];
    for k in 0..no {
        let mut fiber_values = Vec::with_capacity(n1 * n2);
        for i in 0..n1 {
            for j in 0..n2 {
                let mut idx = [0usize; 3];
                idx[s1] = i;
                idx[s2] = j;
                idx[outer_axis] = k;
                fiber_values.push(psi.values[full_index(idx)]);
            }
        }
        let fiber = GriddedFunction::new(vec![a1.clone(), a2.clone()], fiber_values)?;
        if fiber.norm_sqr() == 0.0 {
            continue;
        }
        let split = factorize2(&fiber, 1)?;
        for i in 0..n1 {
            factor_a[i * no + k] = split.factors[0].phi1[i];
        }
        for j in 0..n2 {
            factor_b[j * no + k] = split.factors[0].phi2[j];
        }
    }

    // rank-1 factorize both two-variable factors against the outer axis
    let fa = GriddedFunction::new(vec![a1.clone(), ao.clone()], factor_a)?;
    let fb = GriddedFunction::new(vec![a2.clone(), ao.clone()], factor_b)?;
    let ra = factorize2(&fa, 1)?;
    let rb = factorize2(&fb, 1)?;
    let chi_s1 = ra.factors[0].phi1.clone();
    let g1 = &ra.factors[0].phi2;
    let chi_s2 = rb.factors[0].phi1.clone();
    let g2 = &rb.factors[0].phi2;
    let chi_o: Vec<T> = g1.iter().zip(g2).map(|(&x, &y)| x * y).collect();

    let mut chi: [Vec<T>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    chi[s1] = chi_s1;
    chi[s2] = chi_s2;
    chi[outer_axis] = chi_o;

    // residual of the assembled product on the original grid
    let mut residual = 0.0;
    for i in 0..dims[0] {
        for j in 0..dims[1] {
            for k in 0..dims[2] {
                let idx = full_index([i, j, k]);
                let prod = chi[0][i] * chi[1][j] * chi[2][k];
                let diff = psi.values[idx] - prod;
                let w = psi.axes[0].weights[i] * psi.axes[1].weights[j] * psi.axes[2].weights[k];
                residual += w * diff.modulus_sqr();
            }
        }
    }
    Ok(Factor3Result { chi, residual, outer_axis })
}

/// Runs the stepwise procedure for every outer-axis choice.
pub fn factorize3_all<T: Scalar>(
    psi: &GriddedFunction<T>,
) -> Result<[Factor3Result<T>; 3], FactorizationError> {
    Ok([
        factorize3_stepwise(psi, 0)?,
        factorize3_stepwise(psi, 1)?,
        factorize3_stepwise(psi, 2)?,
    ])
}

/// Index of the smallest-residual choice.
pub fn best_outer_axis<T: Scalar>(results: &[Factor3Result<T>; 3]) -> usize {
    results
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.residual.total_cmp(&b.1.residual))
        .map(|(i, _)| i)
        .unwrap()
}
