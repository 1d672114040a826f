//! Dense complex linear algebra: Gram systems, Cholesky solves and a power
//! iteration for the largest Gram eigenvalue.

use std::ops::{Index, IndexMut};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::counting::{record, Kernel};
use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Relative accuracy targeted by the default power iteration.
pub const DEFAULT_POWER_TOL: f64 = 1e-6;
pub const DEFAULT_POWER_ITERS: usize = 500;
/// One-sided inflation applied to estimated `lambda_max` before checking
/// parameter conditions.
pub const LAMBDA_SAFETY_FACTOR: f64 = 1.01;

const POWER_START_SEED: u64 = 0x5e_ed0f_7a11;

/// Dense complex matrix stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![C64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = C64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = C64::new(d, 0.0);
        }
        m
    }

    /// Builds a matrix from row-major entries, rejecting bad lengths and
    /// non-finite values.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                context: "matrix entries",
                expected: rows * cols,
                actual: data.len(),
            });
        }
        if !all_finite(&data) {
            return Err(Error::NonFinite("matrix entries"));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[C64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<C64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn is_finite(&self) -> bool {
        all_finite(&self.data)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z * c).collect(),
        }
    }

    /// `max |A - A^H|` over all entries; `+inf` when not square.
    pub fn hermitian_defect(&self) -> f64 {
        if self.rows != self.cols {
            return f64::INFINITY;
        }
        let mut defect: f64 = 0.0;
        for i in 0..self.rows {
            for j in i..self.cols {
                defect = defect.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        defect
    }

    pub fn add_to_diagonal(&mut self, d: f64) {
        for i in 0..self.rows.min(self.cols) {
            self[(i, i)] += d;
        }
    }

    /// `A v`
    pub fn mul_vec(&self, v: &[C64]) -> Vec<C64> {
        assert_eq!(v.len(), self.cols, "mul_vec dimension");
        record(Kernel::MatVec, 4 * (self.rows * self.cols) as u64);
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(a, x)| a * x).sum())
            .collect()
    }

    /// `A^H v`, accumulated row by row so `A` is read contiguously.
    pub fn adjoint_mul_vec(&self, v: &[C64]) -> Vec<C64> {
        assert_eq!(v.len(), self.rows, "adjoint_mul_vec dimension");
        record(Kernel::MatVec, 4 * (self.rows * self.cols) as u64);
        adjoint_mul_vec_uncounted(self, v)
    }

    pub fn matmul(&self, other: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.cols, other.rows, "matmul dimension");
        let mut out = ComplexMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        out
    }
}

fn adjoint_mul_vec_uncounted(a: &ComplexMatrix, v: &[C64]) -> Vec<C64> {
    let mut out = vec![C64::new(0.0, 0.0); a.cols];
    for (i, vi) in v.iter().enumerate() {
        for (o, aij) in out.iter_mut().zip(a.row(i)) {
            *o += aij.conj() * vi;
        }
    }
    out
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;

    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

pub fn all_finite(v: &[C64]) -> bool {
    v.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

pub fn norm_sqr(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

pub fn norm(v: &[C64]) -> f64 {
    norm_sqr(v).sqrt()
}

/// `Re <a, b>` with the conjugate-linear first argument.
pub fn re_inner(a: &[C64], b: &[C64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.re * y.re + x.im * y.im).sum()
}

pub fn sub(a: &[C64], b: &[C64]) -> Vec<C64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// `sum_k |a_k - b_k|^2`
pub fn dist_sqr(a: &[C64], b: &[C64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum()
}

/// `H^H H`, computed on the upper triangle and mirrored so the result is
/// exactly Hermitian with a real diagonal.
pub fn gram_matrix(h: &ComplexMatrix) -> ComplexMatrix {
    let (b, u) = (h.rows(), h.cols());
    let mut g = ComplexMatrix::zeros(u, u);
    for row in 0..b {
        let hr = h.row(row);
        for i in 0..u {
            let ci = hr[i].conj();
            g[(i, i)].re += hr[i].norm_sqr();
            for j in i + 1..u {
                g[(i, j)] += ci * hr[j];
            }
        }
    }
    for i in 0..u {
        g[(i, i)].im = 0.0;
        for j in 0..i {
            g[(i, j)] = g[(j, i)].conj();
        }
    }
    // 2 real mults per diagonal term, 4 per strict upper-triangle term
    record(Kernel::Gram, (b * (2 * u + 4 * u * (u - 1) / 2)) as u64);
    g
}

/// `H^H r`
pub fn matched_filter(h: &ComplexMatrix, r: &[C64]) -> Vec<C64> {
    record(Kernel::MatchedFilter, 4 * (h.rows() * h.cols()) as u64);
    adjoint_mul_vec_uncounted(h, r)
}

/// Lower-triangular `L` with positive real diagonal such that `A = L L^H`.
#[derive(Debug, Clone, PartialEq)]
pub struct CholeskyFactor {
    lower: ComplexMatrix,
    inv_diag: Vec<f64>,
}

impl CholeskyFactor {
    pub fn dim(&self) -> usize {
        self.inv_diag.len()
    }

    pub fn lower(&self) -> &ComplexMatrix {
        &self.lower
    }

    /// `L L^H`
    pub fn reconstruct(&self) -> ComplexMatrix {
        self.lower.matmul(&self.lower.adjoint())
    }

    /// Solves `L L^H v = b` in place.
    pub fn solve_in_place(&self, v: &mut [C64]) {
        let n = self.dim();
        assert_eq!(v.len(), n, "cholesky solve dimension");
        // forward: L z = b
        for i in 0..n {
            let row = &self.lower.row(i)[..i];
            let acc: C64 = row.iter().zip(&v[..i]).map(|(l, z)| l * z).sum();
            v[i] = (v[i] - acc) * self.inv_diag[i];
        }
        // backward: L^H v = z, column-oriented so row i of L is read contiguously
        for i in (0..n).rev() {
            v[i] *= self.inv_diag[i];
            let vi = v[i];
            for (vk, l) in v[..i].iter_mut().zip(&self.lower.row(i)[..i]) {
                *vk -= l.conj() * vi;
            }
        }
        // off-diagonal products plus one real-by-complex scaling per entry, twice
        record(Kernel::TriangularSolve, (4 * n * (n - 1) + 4 * n) as u64);
    }

    pub fn solve(&self, b: &[C64]) -> Vec<C64> {
        let mut v = b.to_vec();
        self.solve_in_place(&mut v);
        v
    }
}

/// Cholesky factorization of a Hermitian positive definite matrix.
///
/// Only the lower triangle of `a` is read.
pub fn cholesky(a: &ComplexMatrix) -> Result<CholeskyFactor> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::DimensionMismatch {
            context: "cholesky (square)",
            expected: n,
            actual: a.cols(),
        });
    }
    let mut lower = ComplexMatrix::zeros(n, n);
    let mut inv_diag = vec![0.0; n];
    let mut mults = 0u64;
    for j in 0..n {
        let ljrow: Vec<C64> = lower.row(j)[..j].to_vec();
        let pivot = a[(j, j)].re - ljrow.iter().map(|z| z.norm_sqr()).sum::<f64>();
        mults += 2 * j as u64;
        // pivots lost to cancellation at working precision count as singular
        let floor = f64::EPSILON * n as f64 * a[(j, j)].re.abs();
        if !(pivot > floor) || !pivot.is_finite() {
            return Err(Error::NotPositiveDefinite { index: j, pivot });
        }
        let d = pivot.sqrt();
        lower[(j, j)] = C64::new(d, 0.0);
        inv_diag[j] = 1.0 / d;
        for i in j + 1..n {
            let acc: C64 = lower.row(i)[..j]
                .iter()
                .zip(&ljrow)
                .map(|(lik, ljk)| lik * ljk.conj())
                .sum();
            lower[(i, j)] = (a[(i, j)] - acc) * inv_diag[j];
        }
        mults += ((n - j - 1) * (4 * j + 2)) as u64;
    }
    record(Kernel::Cholesky, mults);
    Ok(CholeskyFactor { lower, inv_diag })
}

/// The iteration-independent part of the `x_0` update: `H^H H`, `H^H r` and a
/// Cholesky factor of `H^H H + rho I`.
#[derive(Debug, Clone)]
pub struct GramSystem {
    gram: ComplexMatrix,
    matched_filter: Vec<C64>,
    rho: f64,
    factor: CholeskyFactor,
}

impl GramSystem {
    pub fn new(h: &ComplexMatrix, r: &[C64], rho: f64) -> Result<Self> {
        check_channel(h, r)?;
        Self::from_parts(gram_matrix(h), matched_filter(h, r), rho)
    }

    /// Reuses a precomputed Gram matrix and matched filter (e.g. across a
    /// `rho` sweep on one channel realization).
    pub fn from_parts(gram: ComplexMatrix, matched_filter: Vec<C64>, rho: f64) -> Result<Self> {
        if !(rho > 0.0) || !rho.is_finite() {
            return Err(Error::InvalidParameter(format!("rho must be positive and finite, got {rho}")));
        }
        if gram.rows() != gram.cols() {
            return Err(Error::DimensionMismatch {
                context: "gram (square)",
                expected: gram.rows(),
                actual: gram.cols(),
            });
        }
        if matched_filter.len() != gram.rows() {
            return Err(Error::DimensionMismatch {
                context: "matched filter",
                expected: gram.rows(),
                actual: matched_filter.len(),
            });
        }
        let mut shifted = gram.clone();
        shifted.add_to_diagonal(rho);
        let factor = cholesky(&shifted)?;
        Ok(Self {
            gram,
            matched_filter,
            rho,
            factor,
        })
    }

    pub fn gram(&self) -> &ComplexMatrix {
        &self.gram
    }

    pub fn matched_filter(&self) -> &[C64] {
        &self.matched_filter
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn factor(&self) -> &CholeskyFactor {
        &self.factor
    }

    pub fn dim(&self) -> usize {
        self.matched_filter.len()
    }

    /// Solves `(H^H H + rho I) v = b`.
    pub fn solve(&self, b: &[C64]) -> Result<Vec<C64>> {
        if b.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                context: "gram solve rhs",
                expected: self.dim(),
                actual: b.len(),
            });
        }
        Ok(self.factor.solve(b))
    }

    pub(crate) fn solve_in_place(&self, v: &mut [C64]) {
        self.factor.solve_in_place(v);
    }
}

/// Shape and finiteness checks shared by every detector entry point.
pub(crate) fn check_channel(h: &ComplexMatrix, r: &[C64]) -> Result<()> {
    if h.rows() < h.cols() {
        return Err(Error::InvalidParameter(format!(
            "channel must have at least as many rows (B={}) as columns (U={})",
            h.rows(),
            h.cols()
        )));
    }
    if r.len() != h.rows() {
        return Err(Error::DimensionMismatch {
            context: "received vector",
            expected: h.rows(),
            actual: r.len(),
        });
    }
    if !h.is_finite() {
        return Err(Error::NonFinite("channel matrix"));
    }
    if !all_finite(r) {
        return Err(Error::NonFinite("received vector"));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralEstimate {
    pub lambda_max: f64,
    /// Gershgorin lower bound on the smallest eigenvalue, clamped at zero.
    pub lambda_min_lower: f64,
    /// Estimated relative error of `lambda_max` at exit.
    pub tolerance: f64,
    pub iterations_used: usize,
    pub converged: bool,
}

impl SpectralEstimate {
    /// `lambda_max` inflated by [`LAMBDA_SAFETY_FACTOR`].
    pub fn safe_lambda_max(&self) -> f64 {
        self.lambda_max * LAMBDA_SAFETY_FACTOR
    }
}

/// Largest eigenvalue of a Hermitian PSD matrix by power iteration from a
/// fixed pseudo-random start.
///
/// Stops once the Rayleigh-quotient increment, extrapolated with the observed
/// contraction ratio, falls below `tol` relative. Running out of iterations is
/// not an error: the best estimate comes back with `converged == false`.
pub fn spectral_estimate(g: &ComplexMatrix, tol: f64, max_iters: usize) -> Result<SpectralEstimate> {
    if !(tol > 0.0 && tol < 1.0) {
        return Err(Error::InvalidParameter(format!("tolerance must lie in (0, 1), got {tol}")));
    }
    if !g.is_finite() {
        return Err(Error::NonFinite("spectral input"));
    }
    let defect = g.hermitian_defect();
    if defect > 1e-12 * g.max_abs().max(f64::MIN_POSITIVE) {
        return Err(Error::NotHermitian { defect });
    }
    let n = g.rows();
    let lambda_min_lower = gershgorin_lower(g);
    if n == 0 {
        return Ok(SpectralEstimate {
            lambda_max: 0.0,
            lambda_min_lower: 0.0,
            tolerance: 0.0,
            iterations_used: 0,
            converged: true,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(POWER_START_SEED);
    let mut v: Vec<C64> = (0..n)
        .map(|_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
        .collect();
    let nv = norm(&v);
    v.iter_mut().for_each(|z| *z /= nv);

    let mut theta = 0.0;
    let mut prev_step = f64::INFINITY;
    let mut est_err = f64::INFINITY;
    for it in 1..=max_iters {
        let w = g.mul_vec(&v);
        let next = re_inner(&v, &w) / norm_sqr(&v);
        let wn = norm(&w);
        if wn == 0.0 {
            return Ok(SpectralEstimate {
                lambda_max: 0.0,
                lambda_min_lower,
                tolerance: 0.0,
                iterations_used: it,
                converged: true,
            });
        }
        let step = (next - theta).abs();
        theta = next;
        v = w.into_iter().map(|z| z / wn).collect();
        if it > 1 {
            let ratio = if prev_step > 0.0 { (step / prev_step).min(0.999) } else { 0.0 };
            est_err = step * (ratio / (1.0 - ratio)).max(1.0) / theta;
            if est_err <= tol {
                return Ok(SpectralEstimate {
                    lambda_max: theta,
                    lambda_min_lower: lambda_min_lower.min(theta),
                    tolerance: est_err,
                    iterations_used: it,
                    converged: true,
                });
            }
        }
        prev_step = step;
    }
    Ok(SpectralEstimate {
        lambda_max: theta,
        lambda_min_lower: lambda_min_lower.min(theta),
        tolerance: est_err,
        iterations_used: max_iters,
        converged: false,
    })
}

fn gershgorin_lower(g: &ComplexMatrix) -> f64 {
    (0..g.rows())
        .map(|i| {
            let off: f64 = (0..g.cols()).filter(|&j| j != i).map(|j| g[(i, j)].norm()).sum();
            g[(i, i)].re - off
        })
        .fold(f64::INFINITY, f64::min)
        .max(0.0)
}
