//! Reference detectors: linear MMSE/ZF, their Neumann-series and Gauss-Seidel
//! approximations, box-constrained ADMM, and exhaustive ML.

use crate::error::{Error, Result};
use crate::model::{hard_slice, Constellation};
use crate::numerics::{
    all_finite, check_channel, cholesky, dist_sqr, gram_matrix, matched_filter, ComplexMatrix, GramSystem, C64,
};

/// Largest `U * Q` the exhaustive search accepts (`4^16` candidates).
pub const ML_SEARCH_LIMIT: usize = 16;
pub const DEFAULT_NEUMANN_TERMS: usize = 3;
pub const DEFAULT_GS_SWEEPS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineKind {
    Mmse,
    Zf,
    Neumann,
    GaussSeidel,
    BoxAdmm,
    MlExhaustive,
}

impl BaselineKind {
    pub fn name(self) -> &'static str {
        match self {
            BaselineKind::Mmse => "mmse",
            BaselineKind::Zf => "zf",
            BaselineKind::Neumann => "neumann",
            BaselineKind::GaussSeidel => "gauss_seidel",
            BaselineKind::BoxAdmm => "box_admm",
            BaselineKind::MlExhaustive => "ml_exhaustive",
        }
    }
}

impl std::str::FromStr for BaselineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "mmse" => BaselineKind::Mmse,
            "zf" => BaselineKind::Zf,
            "neumann" => BaselineKind::Neumann,
            "gauss_seidel" => BaselineKind::GaussSeidel,
            "box_admm" => BaselineKind::BoxAdmm,
            "ml_exhaustive" | "ml" => BaselineKind::MlExhaustive,
            other => return Err(Error::InvalidParameter(format!("unknown baseline detector '{other}'"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineConfig {
    pub kind: BaselineKind,
    /// Gauss-Seidel sweeps or box-ADMM iterations.
    pub iters: usize,
    pub neumann_terms: usize,
    pub box_rho: f64,
}

impl BaselineConfig {
    pub fn new(kind: BaselineKind) -> Self {
        let iters = match kind {
            BaselineKind::BoxAdmm => 30,
            _ => DEFAULT_GS_SWEEPS,
        };
        Self {
            kind,
            iters,
            neumann_terms: DEFAULT_NEUMANN_TERMS,
            box_rho: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if matches!(self.kind, BaselineKind::GaussSeidel | BaselineKind::BoxAdmm) && self.iters == 0 {
            return Err(Error::InvalidParameter(format!("{} needs iters >= 1", self.kind.name())));
        }
        if self.kind == BaselineKind::Neumann && self.neumann_terms == 0 {
            return Err(Error::InvalidParameter("neumann needs terms >= 1".into()));
        }
        if self.kind == BaselineKind::BoxAdmm && !(self.box_rho > 0.0 && self.box_rho.is_finite()) {
            return Err(Error::InvalidParameter(format!("box_admm rho must be positive, got {}", self.box_rho)));
        }
        Ok(())
    }

    pub fn detect(&self, h: &ComplexMatrix, r: &[C64], c: &Constellation, noise_var: f64) -> Result<Vec<C64>> {
        self.validate()?;
        match self.kind {
            BaselineKind::Mmse => mmse(h, r, c, noise_var),
            BaselineKind::Zf => zf(h, r, c),
            BaselineKind::Neumann => neumann_mmse(h, r, c, noise_var, self.neumann_terms),
            BaselineKind::GaussSeidel => gauss_seidel_mmse(h, r, c, noise_var, self.iters),
            BaselineKind::BoxAdmm => box_admm(h, r, c, self.box_rho, self.iters),
            BaselineKind::MlExhaustive => ml_bruteforce(h, r, c),
        }
    }
}

fn regularizer(c: &Constellation, noise_var: f64) -> Result<f64> {
    if !(noise_var >= 0.0) || !noise_var.is_finite() {
        return Err(Error::InvalidParameter(format!("noise variance must be finite and >= 0, got {noise_var}")));
    }
    Ok(noise_var / c.symbol_energy())
}

/// `A = H^H H + (noise_var / Es) I` and `H^H r`.
fn regularized_system(h: &ComplexMatrix, r: &[C64], c: &Constellation, noise_var: f64) -> Result<(ComplexMatrix, Vec<C64>)> {
    check_channel(h, r)?;
    let kappa = regularizer(c, noise_var)?;
    let mut a = gram_matrix(h);
    a.add_to_diagonal(kappa);
    Ok((a, matched_filter(h, r)))
}

/// Unsliced linear MMSE estimate.
pub fn mmse_estimate(h: &ComplexMatrix, r: &[C64], c: &Constellation, noise_var: f64) -> Result<Vec<C64>> {
    let (a, b) = regularized_system(h, r, c, noise_var)?;
    Ok(cholesky(&a)?.solve(&b))
}

pub fn mmse(h: &ComplexMatrix, r: &[C64], c: &Constellation, noise_var: f64) -> Result<Vec<C64>> {
    Ok(hard_slice(&mmse_estimate(h, r, c, noise_var)?, c))
}

pub fn zf(h: &ComplexMatrix, r: &[C64], c: &Constellation) -> Result<Vec<C64>> {
    mmse(h, r, c, 0.0)
}

fn diagonal(a: &ComplexMatrix) -> Result<Vec<f64>> {
    (0..a.rows())
        .map(|i| {
            let d = a[(i, i)].re;
            if d == 0.0 {
                Err(Error::ZeroDiagonal(i))
            } else {
                Ok(d)
            }
        })
        .collect()
}

/// `sum_{n<terms} (-D^-1 E)^n D^-1 b` for `A = D + E`.
pub fn neumann_solve(a: &ComplexMatrix, b: &[C64], terms: usize) -> Result<Vec<C64>> {
    if terms == 0 {
        return Err(Error::InvalidParameter("neumann needs terms >= 1".into()));
    }
    let d = diagonal(a)?;
    let n = d.len();
    let mut term: Vec<C64> = b.iter().zip(&d).map(|(v, di)| v / di).collect();
    let mut sum = term.clone();
    for _ in 1..terms {
        term = (0..n)
            .map(|i| {
                let row = a.row(i);
                let off: C64 = (0..n).filter(|&j| j != i).map(|j| row[j] * term[j]).sum();
                -off / d[i]
            })
            .collect();
        for (s, t) in sum.iter_mut().zip(&term) {
            *s += t;
        }
    }
    Ok(sum)
}

pub fn neumann_estimate(h: &ComplexMatrix, r: &[C64], c: &Constellation, noise_var: f64, terms: usize) -> Result<Vec<C64>> {
    let (a, b) = regularized_system(h, r, c, noise_var)?;
    neumann_solve(&a, &b, terms)
}

pub fn neumann_mmse(h: &ComplexMatrix, r: &[C64], c: &Constellation, noise_var: f64, terms: usize) -> Result<Vec<C64>> {
    Ok(hard_slice(&neumann_estimate(h, r, c, noise_var, terms)?, c))
}

/// `sweeps` forward Gauss-Seidel sweeps on `A x = b` starting from `start`.
pub fn gauss_seidel_solve(a: &ComplexMatrix, b: &[C64], start: &[C64], sweeps: usize) -> Result<Vec<C64>> {
    if start.len() != a.rows() || b.len() != a.rows() {
        return Err(Error::DimensionMismatch {
            context: "Gauss-Seidel system",
            expected: a.rows(),
            actual: b.len().min(start.len()),
        });
    }
    let d = diagonal(a)?;
    let mut x = start.to_vec();
    for _ in 0..sweeps {
        for i in 0..x.len() {
            let row = a.row(i);
            let off: C64 = (0..x.len()).filter(|&j| j != i).map(|j| row[j] * x[j]).sum();
            x[i] = (b[i] - off) / d[i];
        }
    }
    Ok(x)
}

pub fn gauss_seidel_estimate(h: &ComplexMatrix, r: &[C64], c: &Constellation, noise_var: f64, sweeps: usize) -> Result<Vec<C64>> {
    if sweeps == 0 {
        return Err(Error::InvalidParameter("gauss_seidel needs iters >= 1".into()));
    }
    let (a, b) = regularized_system(h, r, c, noise_var)?;
    gauss_seidel_solve(&a, &b, &vec![C64::new(0.0, 0.0); b.len()], sweeps)
}

pub fn gauss_seidel_mmse(h: &ComplexMatrix, r: &[C64], c: &Constellation, noise_var: f64, sweeps: usize) -> Result<Vec<C64>> {
    Ok(hard_slice(&gauss_seidel_estimate(h, r, c, noise_var, sweeps)?, c))
}

/// Iterates of the box-constrained ADMM after one iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxAdmmState {
    /// Box-projected copy.
    pub x: Vec<C64>,
    /// Unconstrained least-squares variable.
    pub z: Vec<C64>,
    pub y: Vec<C64>,
}

/// ADMM on `min 1/2 ||r - H z||^2  s.t. z = x, x in box`, returning the final state.
///
/// Each iteration: `x = P(z + y/rho)`, `z = (H^H H + rho I)^-1 (H^H r + rho x - y)`,
/// `y += rho (z - x)`, starting from zeros.
pub fn box_admm_observed(
    h: &ComplexMatrix,
    r: &[C64],
    c: &Constellation,
    rho: f64,
    iters: usize,
    observer: &mut dyn FnMut(&BoxAdmmState),
) -> Result<BoxAdmmState> {
    check_channel(h, r)?;
    if !(rho > 0.0) || !rho.is_finite() {
        return Err(Error::InvalidParameter(format!("box_admm rho must be positive, got {rho}")));
    }
    let system = GramSystem::new(h, r, rho)?;
    let bound = c.max_level();
    let n = h.cols();
    let zero = vec![C64::new(0.0, 0.0); n];
    let mut s = BoxAdmmState {
        x: zero.clone(),
        z: zero.clone(),
        y: zero,
    };
    let project = |v: f64| v.clamp(-bound, bound);
    for k in 1..=iters {
        for i in 0..n {
            let v = s.z[i] + s.y[i] / rho;
            s.x[i] = C64::new(project(v.re), project(v.im));
        }
        let rhs: Vec<C64> = (0..n).map(|i| system.matched_filter()[i] + s.x[i] * rho - s.y[i]).collect();
        s.z = system.solve(&rhs)?;
        for i in 0..n {
            s.y[i] += (s.z[i] - s.x[i]) * rho;
        }
        if !all_finite(&s.z) || !all_finite(&s.y) {
            return Err(Error::NonFiniteIterate { iteration: k });
        }
        observer(&s);
    }
    Ok(s)
}

pub fn box_admm(h: &ComplexMatrix, r: &[C64], c: &Constellation, rho: f64, iters: usize) -> Result<Vec<C64>> {
    let s = box_admm_observed(h, r, c, rho, iters, &mut |_| {})?;
    Ok(hard_slice(&s.z, c))
}

/// Exhaustive minimizer of `||r - H x||^2` over the constellation.
///
/// Candidates are visited in lexicographic order (user 0 most significant,
/// points in constellation order) and only a strictly smaller residual
/// replaces the incumbent, so ties resolve to the lexicographically first.
pub fn ml_bruteforce(h: &ComplexMatrix, r: &[C64], c: &Constellation) -> Result<Vec<C64>> {
    check_channel(h, r)?;
    let (b, u) = (h.rows(), h.cols());
    let size = u * c.q_order() as usize;
    if size > ML_SEARCH_LIMIT {
        return Err(Error::SearchSpaceTooLarge {
            size,
            limit: ML_SEARCH_LIMIT,
        });
    }
    let points = c.points();
    let m = points.len();
    // contrib[j][p] = H[:, j] * points[p]
    let contrib: Vec<Vec<Vec<C64>>> = (0..u)
        .map(|j| {
            let col = h.column(j);
            points.iter().map(|p| col.iter().map(|hv| hv * p).collect()).collect()
        })
        .collect();

    // partial[j] = r - sum_{i<j} H[:, i] x_i, rebuilt from the changed digit down
    let mut partial = vec![r.to_vec(); u + 1];
    let mut digits = vec![0usize; u];
    let mut best = f64::INFINITY;
    let mut best_digits = digits.clone();
    let mut from = 0;
    loop {
        for j in from..u {
            let (head, tail) = partial.split_at_mut(j + 1);
            for ((dst, src), hx) in tail[0].iter_mut().zip(&head[j]).zip(&contrib[j][digits[j]]) {
                *dst = src - hx;
            }
        }
        let cost: f64 = partial[u].iter().map(C64::norm_sqr).sum();
        if cost < best {
            best = cost;
            best_digits.clone_from(&digits);
        }
        // odometer, last user fastest
        let mut j = u;
        loop {
            if j == 0 {
                debug_assert!(b > 0);
                return Ok(best_digits.iter().map(|&d| points[d]).collect());
            }
            j -= 1;
            digits[j] += 1;
            if digits[j] < m {
                break;
            }
            digits[j] = 0;
        }
        from = j;
    }
}

/// `||r - H x||^2`
pub fn ls_objective(h: &ComplexMatrix, r: &[C64], x: &[C64]) -> f64 {
    dist_sqr(r, &h.mul_vec(x))
}
