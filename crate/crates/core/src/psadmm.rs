//! Penalized sharing ADMM detection.
//!
//! The relaxed detection problem
//!
//! ```text
//! min  1/2 ||r - H x0||^2 - sum_q alpha_q/2 ||x_q||^2
//! s.t. x0 = sum_q 2^(q-1) x_q,   Re(x_q), Im(x_q) in [-1, 1]
//! ```
//!
//! is solved by Gauss-Seidel sweeps over the parts `x_q` (closed-form clipped
//! updates), an exact `x0` solve against a cached Cholesky factor of
//! `H^H H + rho I`, and a dual ascent step on `y`. Parameter validation, the
//! iteration bound, and per-iteration checks of the descent, dual-bound and
//! dual-identity properties live here as well.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::counting::{record, Kernel};
use crate::error::{Condition, Error, Result};
use crate::model::{hard_slice, recompose_parts, Constellation};
use crate::numerics::{
    all_finite, check_channel, dist_sqr, gram_matrix, matched_filter, norm, norm_sqr, re_inner, spectral_estimate,
    ComplexMatrix, GramSystem, SpectralEstimate, C64, DEFAULT_POWER_ITERS, DEFAULT_POWER_TOL,
};

/// Relative shrink applied to `rho` when choosing the `x0` strong-convexity
/// modulus under the conservative bound `lambda_min >= 0`.
pub const GAMMA_SHRINK: f64 = 1e-6;
/// Relative slack of the descent check.
pub const DESCENT_SLACK: f64 = 1e-9;
/// Absolute slack of the dual-bound check.
pub const DUAL_BOUND_SLACK: f64 = 1e-12;
/// Relative tolerance of the dual identity `y = -H^H (H x0 - r)`.
pub const DUAL_IDENTITY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OutputMode {
    /// Slice the continuous `x0` to the nearest constellation point.
    #[default]
    SliceX0,
    /// Take the sign of each part `x_q` and recompose.
    RecomposeSign,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Initialization {
    #[default]
    Zeros,
    /// Every entry of every variable set to `1 + j`.
    Ones,
    /// Every entry of every variable set to `-1 - j`.
    MinusOnes,
    /// Parts uniform in the box, `x0` uniform in the constellation's box, `y = 0`.
    Random { seed: u64 },
    /// Zero primal variables with `y = H^H r`, so `y = -grad l(x0)` holds from the start.
    DualConsistent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsAdmmParams {
    pub rho: f64,
    /// `alpha_q` for `q = 1..=Q`, one per part.
    pub alphas: Vec<f64>,
    pub max_iters: usize,
    /// Stop once `sum_q ||dx_q||^2 + ||dx0||^2 <= eps` (if `early_stop`).
    pub eps: f64,
    pub early_stop: bool,
    pub output_mode: OutputMode,
    pub diagnostics: bool,
    pub init: Initialization,
    /// Run even when the convergence conditions fail.
    pub override_validation: bool,
}

impl PsAdmmParams {
    /// `K = 30`, `eps = 1e-6`, early stopping on, zero initialization.
    pub fn new(rho: f64, alphas: Vec<f64>) -> Self {
        Self {
            rho,
            alphas,
            max_iters: 30,
            eps: 1e-6,
            early_stop: true,
            output_mode: OutputMode::SliceX0,
            diagnostics: false,
            init: Initialization::Zeros,
            override_validation: false,
        }
    }

    pub fn q_order(&self) -> usize {
        self.alphas.len()
    }

    /// Range checks on the values alone (no channel needed).
    pub fn check_values(&self) -> Result<()> {
        if !(self.rho > 0.0) || !self.rho.is_finite() {
            return Err(Error::InvalidParameter(format!("rho must be positive and finite, got {}", self.rho)));
        }
        if self.alphas.is_empty() {
            return Err(Error::InvalidParameter("need one alpha per part (Q >= 1)".into()));
        }
        if let Some(a) = self.alphas.iter().find(|a| !(**a >= 0.0) || !a.is_finite()) {
            return Err(Error::InvalidParameter(format!("alpha must be finite and nonnegative, got {a}")));
        }
        if !(self.eps > 0.0) {
            return Err(Error::InvalidParameter(format!("eps must be positive, got {}", self.eps)));
        }
        Ok(())
    }
}

/// `2^part` for zero-based part index.
fn weight(part: usize) -> f64 {
    (1u64 << part) as f64
}

/// `4^part * rho - alpha`, the strong-convexity modulus of the part subproblem.
pub fn penalty_margin(rho: f64, alpha: f64, part: usize) -> f64 {
    weight(part) * weight(part) * rho - alpha
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsAdmmState {
    /// `xq[part]` is `x_(part+1)`.
    pub xq: Vec<Vec<C64>>,
    pub x0: Vec<C64>,
    pub y: Vec<C64>,
    pub k: usize,
}

impl PsAdmmState {
    pub fn zeros(users: usize, q_order: usize) -> Self {
        let z = vec![C64::new(0.0, 0.0); users];
        Self {
            xq: vec![z.clone(); q_order],
            x0: z.clone(),
            y: z,
            k: 0,
        }
    }

    /// `sum_q 2^(q-1) x_q`
    pub fn aggregate(&self) -> Vec<C64> {
        recompose_parts(&self.xq)
    }

    pub fn is_finite(&self) -> bool {
        all_finite(&self.x0) && all_finite(&self.y) && self.xq.iter().all(|p| all_finite(p))
    }

    pub fn in_box(&self) -> bool {
        self.xq
            .iter()
            .flatten()
            .all(|z| (-1.0..=1.0).contains(&z.re) && (-1.0..=1.0).contains(&z.im))
    }

    fn initial(init: Initialization, users: usize, q_order: usize, h: &ComplexMatrix, r: &[C64]) -> Self {
        let fill = |v: C64| Self {
            xq: vec![vec![v; users]; q_order],
            x0: vec![v; users],
            y: vec![v; users],
            k: 0,
        };
        match init {
            Initialization::Zeros => Self::zeros(users, q_order),
            Initialization::Ones => fill(C64::new(1.0, 1.0)),
            Initialization::MinusOnes => fill(C64::new(-1.0, -1.0)),
            Initialization::Random { seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut unit = || C64::new(rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0));
                let xq = (0..q_order).map(|_| (0..users).map(|_| unit()).collect()).collect();
                let top = weight(q_order) - 1.0;
                let x0 = (0..users).map(|_| unit() * top).collect();
                Self {
                    xq,
                    x0,
                    y: vec![C64::new(0.0, 0.0); users],
                    k: 0,
                }
            }
            Initialization::DualConsistent => {
                let mut s = Self::zeros(users, q_order);
                s.y = h.adjoint_mul_vec(r);
                s
            }
        }
    }
}

/// Strong-convexity moduli and the descent constant of the convergence
/// analysis, for one validated (parameters, channel) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceBudget {
    pub gamma_q: Vec<f64>,
    pub gamma: f64,
    /// `min({gamma_q/2}, gamma/2 - lambda_max^2/rho)`
    pub c: f64,
    /// The (upper-bounded) `lambda_max` the constant was computed with.
    pub lambda_max: f64,
    /// Iteration bound, filled in after a run.
    pub t_bound: Option<u64>,
}

/// Upper estimate of `lambda_max` used for every parameter-dependent check:
/// the power-iteration estimate inflated by its own error estimate when it
/// converged, or by [`LAMBDA_SAFETY_FACTOR`](crate::numerics::LAMBDA_SAFETY_FACTOR) when it did not.
pub fn lambda_upper(spec: &SpectralEstimate) -> f64 {
    if spec.converged {
        spec.lambda_max * (1.0 + spec.tolerance)
    } else {
        spec.safe_lambda_max()
    }
}

/// Checks `4^(q-1) rho > alpha_q` for every part and `rho > sqrt(2) lambda_max`,
/// and returns the resulting convergence constants.
pub fn validate_params(p: &PsAdmmParams, spec: &SpectralEstimate) -> Result<ConvergenceBudget> {
    p.check_values()?;
    let mut gamma_q = Vec::with_capacity(p.alphas.len());
    for (part, &alpha) in p.alphas.iter().enumerate() {
        let margin = penalty_margin(p.rho, alpha, part);
        if margin <= 0.0 {
            return Err(Error::ConditionViolation {
                condition: Condition::Penalty { q: part + 1 },
                margin,
            });
        }
        gamma_q.push(margin);
    }
    let lambda = lambda_upper(spec);
    let margin = p.rho - std::f64::consts::SQRT_2 * lambda;
    if margin <= 0.0 {
        return Err(Error::ConditionViolation {
            condition: Condition::RhoSpectral,
            margin,
        });
    }
    let gamma = p.rho * (1.0 - GAMMA_SHRINK);
    let x0_term = gamma / 2.0 - lambda * lambda / p.rho;
    let c = gamma_q.iter().map(|g| g / 2.0).fold(x0_term, f64::min);
    if c <= 0.0 {
        // only reachable within a relative 1e-6 band above sqrt(2) lambda_max
        return Err(Error::ConditionViolation {
            condition: Condition::RhoSpectral,
            margin: c,
        });
    }
    Ok(ConvergenceBudget {
        gamma_q,
        gamma,
        c,
        lambda_max: lambda,
        t_bound: None,
    })
}

fn check_state(state: &PsAdmmState, p: &PsAdmmParams, users: usize) -> Result<()> {
    if state.xq.len() != p.q_order() {
        return Err(Error::DimensionMismatch {
            context: "number of parts",
            expected: p.q_order(),
            actual: state.xq.len(),
        });
    }
    for v in state.xq.iter().chain([&state.x0, &state.y]) {
        if v.len() != users {
            return Err(Error::DimensionMismatch {
                context: "state vector",
                expected: users,
                actual: v.len(),
            });
        }
    }
    Ok(())
}

/// `l(x) = 1/2 ||r - H x||^2`
pub fn data_fit(h: &ComplexMatrix, r: &[C64], x: &[C64]) -> f64 {
    let hx = h.mul_vec(x);
    0.5 * dist_sqr(r, &hx)
}

/// `f = 1/2 ||r - H x0||^2 - sum_q alpha_q/2 ||x_q||^2`
pub fn objective(state: &PsAdmmState, alphas: &[f64], h: &ComplexMatrix, r: &[C64]) -> f64 {
    let penalty: f64 = alphas.iter().zip(&state.xq).map(|(a, x)| 0.5 * a * norm_sqr(x)).sum();
    data_fit(h, r, &state.x0) - penalty
}

/// Augmented Lagrangian
/// `f + Re<x0 - sum 2^(q-1) x_q, y> + rho/2 ||x0 - sum 2^(q-1) x_q||^2`.
pub fn augmented_lagrangian(state: &PsAdmmState, p: &PsAdmmParams, h: &ComplexMatrix, r: &[C64]) -> Result<f64> {
    check_channel(h, r)?;
    check_state(state, p, h.cols())?;
    let gap: Vec<C64> = state.x0.iter().zip(state.aggregate()).map(|(a, s)| a - s).collect();
    Ok(objective(state, &p.alphas, h, r) + re_inner(&gap, &state.y) + 0.5 * p.rho * norm_sqr(&gap))
}

fn clip(v: f64) -> f64 {
    v.clamp(-1.0, 1.0)
}

/// Exact block minimizer of `-margin/2 |x|^2 - Re(conj(x) g)` over the box, per
/// component: clipped `g / margin` when `margin > 0`, otherwise the vertex `sign(g)`.
fn part_minimizer(g: f64, margin: f64) -> f64 {
    if margin > 0.0 {
        clip(g / margin)
    } else if g < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// Updates `x_(part+1)` in place using the current (already refreshed for
/// lower parts) values of all other parts.
///
/// Fails on a nonpositive `4^part rho - alpha` unless validation is
/// overridden, in which case the (vertex) block minimizer is used.
pub fn update_xq(state: &mut PsAdmmState, p: &PsAdmmParams, part: usize) -> Result<()> {
    let q_order = p.q_order();
    if part >= q_order {
        return Err(Error::InvalidParameter(format!("part index {part} out of range for Q={q_order}")));
    }
    let users = state.x0.len();
    check_state(state, p, users)?;
    let margin = penalty_margin(p.rho, p.alphas[part], part);
    if margin <= 0.0 && !p.override_validation {
        return Err(Error::ConditionViolation {
            condition: Condition::Penalty { q: part + 1 },
            margin,
        });
    }
    let w = weight(part);
    let rho = p.rho;
    let (before, rest) = state.xq.split_at_mut(part);
    let (current, after) = rest.split_first_mut().expect("part in range");
    for j in 0..users {
        let mut t = state.x0[j];
        for (i, other) in before.iter().enumerate() {
            t -= other[j] * weight(i);
        }
        for (i, other) in after.iter().enumerate() {
            t -= other[j] * weight(part + 1 + i);
        }
        // gradient-free numerator 2^(q-1) (rho t + y), divided by the modulus
        let g = (t * rho + state.y[j]) * w;
        current[j] = C64::new(part_minimizer(g.re, margin), part_minimizer(g.im, margin));
    }
    // (Q-1) weight products, then rho* and 2^(q-1)*, all real-by-complex
    record(Kernel::VectorScale, (2 * users * (q_order + 1)) as u64);
    Ok(())
}

/// `x0 = (H^H H + rho I)^-1 (H^H r + rho sum_q 2^(q-1) x_q - y)`
pub fn update_x0(state: &mut PsAdmmState, p: &PsAdmmParams, system: &GramSystem) -> Result<()> {
    check_state(state, p, system.dim())?;
    if (system.rho() - p.rho).abs() > 1e-15 * p.rho {
        return Err(Error::InvalidParameter(format!(
            "Gram system built for rho={} but parameters use rho={}",
            system.rho(),
            p.rho
        )));
    }
    let aggregate = aggregate_counted(&state.xq);
    x0_step(state, &aggregate, p.rho, system);
    Ok(())
}

fn aggregate_counted(xq: &[Vec<C64>]) -> Vec<C64> {
    record(Kernel::VectorScale, (2 * xq.len() * xq.first().map_or(0, Vec::len)) as u64);
    recompose_parts(xq)
}

fn x0_step(state: &mut PsAdmmState, aggregate: &[C64], rho: f64, system: &GramSystem) {
    let mf = system.matched_filter();
    for (j, x) in state.x0.iter_mut().enumerate() {
        *x = mf[j] + aggregate[j] * rho - state.y[j];
    }
    record(Kernel::VectorScale, (2 * aggregate.len()) as u64);
    system.solve_in_place(&mut state.x0);
}

/// `y += rho (x0 - sum_q 2^(q-1) x_q)`
pub fn update_y(state: &mut PsAdmmState, p: &PsAdmmParams) -> Result<()> {
    check_state(state, p, state.x0.len())?;
    let aggregate = aggregate_counted(&state.xq);
    y_step(state, &aggregate, p.rho);
    Ok(())
}

fn y_step(state: &mut PsAdmmState, aggregate: &[C64], rho: f64) {
    for ((y, x0), s) in state.y.iter_mut().zip(&state.x0).zip(aggregate) {
        *y += (x0 - s) * rho;
    }
    record(Kernel::VectorScale, (2 * aggregate.len()) as u64);
}

/// One record per iteration `k -> k+1`.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    /// 1-based index of the iteration that produced this record.
    pub k: usize,
    pub lagrangian: f64,
    pub objective: f64,
    /// `sum_q ||x_q^(k+1) - x_q^k||^2 + ||x0^(k+1) - x0^k||^2`
    pub residual: f64,
    /// `||x0 - sum_q 2^(q-1) x_q||`
    pub primal_gap: f64,
    /// `||y^(k+1) - y^k||`
    pub dual_step: f64,
    pub x0_step: f64,
    /// `||y^(k+1) + H^H (H x0^(k+1) - r)||`
    pub dual_identity_residual: f64,
    /// The dual identity held at the start of this iteration, which the
    /// dual-bound and descent properties rely on.
    pub dual_consistent_start: bool,
    pub lemma1_ok: bool,
    pub lemma2_ok: bool,
    pub dual_identity_ok: bool,
    pub box_ok: bool,
    /// Lagrangian stays above `-sum_q alpha_q U`.
    pub lower_bound_ok: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationTrace {
    pub initial_lagrangian: f64,
    pub initial_objective: f64,
    /// Upper estimate of `lambda_max` used by the dual-bound check.
    pub lambda_max: f64,
    /// Parameters passed validation, so the per-iteration properties are guaranteed.
    pub params_validated: bool,
    pub records: Vec<IterationRecord>,
}

impl IterationTrace {
    /// First `k` with `residual <= eps`.
    pub fn first_below(&self, eps: f64) -> Option<usize> {
        self.records.iter().find(|r| r.residual <= eps).map(|r| r.k)
    }
}

/// Iteration-independent data for one `(H, r)`, reusable across parameter sets.
#[derive(Debug, Clone)]
pub struct Precomputed {
    pub gram: ComplexMatrix,
    pub matched_filter: Vec<C64>,
    pub spectral: Option<SpectralEstimate>,
}

impl Precomputed {
    pub fn new(h: &ComplexMatrix, r: &[C64]) -> Result<Self> {
        check_channel(h, r)?;
        Ok(Self {
            gram: gram_matrix(h),
            matched_filter: matched_filter(h, r),
            spectral: None,
        })
    }

    pub fn with_spectral(mut self) -> Result<Self> {
        self.ensure_spectral()?;
        Ok(self)
    }

    pub fn ensure_spectral(&mut self) -> Result<SpectralEstimate> {
        if let Some(s) = self.spectral {
            return Ok(s);
        }
        let s = spectral_estimate(&self.gram, DEFAULT_POWER_TOL, DEFAULT_POWER_ITERS)?;
        self.spectral = Some(s);
        Ok(s)
    }
}

#[derive(Debug, Clone)]
pub struct Detection {
    pub symbols: Vec<C64>,
    pub state: PsAdmmState,
    pub iterations: usize,
    /// First iteration whose residual fell to `eps` or below.
    pub first_eps_iteration: Option<usize>,
    pub trace: Option<IterationTrace>,
    /// Present when a spectral estimate was available and the parameters validated.
    pub budget: Option<ConvergenceBudget>,
    /// Why validation failed, for runs that overrode it.
    pub violation: Option<Error>,
}

/// Runs the detector from scratch on `(H, r)`.
pub fn detect(h: &ComplexMatrix, r: &[C64], c: &Constellation, p: &PsAdmmParams) -> Result<Detection> {
    let mut pre = Precomputed::new(h, r)?;
    detect_observed(h, r, &mut pre, c, p, &mut |_| {})
}

/// Runs the detector with precomputed Gram data; `observer` sees the state
/// after every iteration.
///
/// A spectral estimate is computed (and cached in `pre`) unless validation is
/// overridden and diagnostics are off.
pub fn detect_observed(
    h: &ComplexMatrix,
    r: &[C64],
    pre: &mut Precomputed,
    c: &Constellation,
    p: &PsAdmmParams,
    observer: &mut dyn FnMut(&PsAdmmState),
) -> Result<Detection> {
    p.check_values()?;
    check_channel(h, r)?;
    if p.q_order() != c.q_order() as usize {
        return Err(Error::DimensionMismatch {
            context: "alphas vs constellation Q",
            expected: c.q_order() as usize,
            actual: p.q_order(),
        });
    }
    let users = h.cols();
    if pre.gram.rows() != users || pre.matched_filter.len() != users {
        return Err(Error::DimensionMismatch {
            context: "precomputed Gram data",
            expected: users,
            actual: pre.gram.rows(),
        });
    }

    let spectral = if p.override_validation && !p.diagnostics {
        pre.spectral
    } else {
        Some(pre.ensure_spectral()?)
    };
    let (mut budget, violation) = match spectral.map(|s| validate_params(p, &s)) {
        Some(Ok(b)) => (Some(b), None),
        Some(Err(e)) if p.override_validation => (None, Some(e)),
        Some(Err(e)) => return Err(e),
        None => (None, None),
    };

    let system = GramSystem::from_parts(pre.gram.clone(), pre.matched_filter.clone(), p.rho)?;
    let mut state = PsAdmmState::initial(p.init, users, p.q_order(), h, r);
    let track_lagrangian = p.diagnostics || budget.is_some();
    let initial_lagrangian = if track_lagrangian {
        augmented_lagrangian(&state, p, h, r)?
    } else {
        f64::NAN
    };
    let lambda = spectral.as_ref().map_or(f64::NAN, lambda_upper);
    let mut trace = p.diagnostics.then(|| IterationTrace {
        initial_lagrangian,
        initial_objective: objective(&state, &p.alphas, h, r),
        lambda_max: lambda,
        params_validated: budget.is_some(),
        records: Vec::with_capacity(p.max_iters),
    });
    let alpha_floor: f64 = -p.alphas.iter().map(|a| a * users as f64).sum::<f64>();

    let mut prev = state.clone();
    let mut prev_lagrangian = initial_lagrangian;
    let mut prev_identity_ok = p.diagnostics && dual_identity_residual(&state, h, r).1;
    let mut first_eps_iteration = None;
    let mut iterations = 0;

    for k in 1..=p.max_iters {
        prev.clone_from(&state);
        for part in 0..p.q_order() {
            update_xq(&mut state, p, part)?;
        }
        let aggregate = aggregate_counted(&state.xq);
        x0_step(&mut state, &aggregate, p.rho, &system);
        y_step(&mut state, &aggregate, p.rho);
        state.k = k;
        iterations = k;

        if !all_finite(&state.x0) || !all_finite(&state.y) {
            return Err(Error::NonFiniteIterate { iteration: k });
        }
        let dx0 = dist_sqr(&state.x0, &prev.x0);
        let residual = dx0 + state.xq.iter().zip(&prev.xq).map(|(a, b)| dist_sqr(a, b)).sum::<f64>();

        if let Some(trace) = trace.as_mut() {
            let lagrangian = augmented_lagrangian(&state, p, h, r)?;
            let dual_step = dist_sqr(&state.y, &prev.y).sqrt();
            let gap: Vec<C64> = state.x0.iter().zip(&aggregate).map(|(a, s)| a - s).collect();
            let (identity_residual, identity_ok) = dual_identity_residual(&state, h, r);
            let rec = IterationRecord {
                k,
                lagrangian,
                objective: objective(&state, &p.alphas, h, r),
                residual,
                primal_gap: norm(&gap),
                dual_step,
                x0_step: dx0.sqrt(),
                dual_identity_residual: identity_residual,
                dual_consistent_start: prev_identity_ok,
                lemma1_ok: dual_step * dual_step <= lambda * lambda * dx0 + DUAL_BOUND_SLACK,
                lemma2_ok: lagrangian <= prev_lagrangian + DESCENT_SLACK * (1.0 + prev_lagrangian.abs()),
                dual_identity_ok: identity_ok,
                box_ok: state.in_box(),
                lower_bound_ok: lagrangian >= alpha_floor - DESCENT_SLACK * (1.0 + alpha_floor.abs()),
            };
            prev_lagrangian = lagrangian;
            prev_identity_ok = identity_ok;
            trace.records.push(rec);
        }
        observer(&state);

        if residual <= p.eps && first_eps_iteration.is_none() {
            first_eps_iteration = Some(k);
            if p.early_stop {
                break;
            }
        }
    }

    if let Some(b) = budget.as_mut() {
        let final_lagrangian = match trace.as_ref().and_then(|t| t.records.last()) {
            Some(rec) => rec.lagrangian,
            None => augmented_lagrangian(&state, p, h, r)?,
        };
        b.t_bound = Some(iteration_bound(b, initial_lagrangian, final_lagrangian, p.eps)?);
    }

    let symbols = match p.output_mode {
        OutputMode::SliceX0 => hard_slice(&state.x0, c),
        OutputMode::RecomposeSign => {
            let signs: Vec<Vec<C64>> = state
                .xq
                .iter()
                .map(|part| part.iter().map(|z| C64::new(sign(z.re), sign(z.im))).collect())
                .collect();
            recompose_parts(&signs)
        }
    };
    Ok(Detection {
        symbols,
        state,
        iterations,
        first_eps_iteration,
        trace,
        budget,
        violation,
    })
}

fn sign(v: f64) -> f64 {
    if v < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// `(||y + H^H (H x0 - r)||, within tolerance)`
fn dual_identity_residual(state: &PsAdmmState, h: &ComplexMatrix, r: &[C64]) -> (f64, bool) {
    let hx = h.mul_vec(&state.x0);
    let diff: Vec<C64> = hx.iter().zip(r).map(|(a, b)| a - b).collect();
    let grad = h.adjoint_mul_vec(&diff);
    let res = norm(&state.y.iter().zip(&grad).map(|(y, g)| y + g).collect::<Vec<_>>());
    (res, res <= DUAL_IDENTITY_TOL * (1.0 + norm(&state.y)))
}

/// `ceil((L_initial - L_star) / (C eps))`, zero when there is nothing to descend.
pub fn iteration_bound(budget: &ConvergenceBudget, l_initial: f64, l_star: f64, eps: f64) -> Result<u64> {
    if !(budget.c > 0.0) {
        return Err(Error::InvalidParameter(format!("descent constant must be positive, got {}", budget.c)));
    }
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter(format!("eps must be positive, got {eps}")));
    }
    if !l_initial.is_finite() || !l_star.is_finite() {
        return Err(Error::NonFinite("Lagrangian values"));
    }
    let gap = l_initial - l_star;
    if gap <= 0.0 {
        return Ok(0);
    }
    Ok((gap / (budget.c * eps)).ceil() as u64)
}

/// Largest projected-gradient violation `||x_q - P(x_q - grad_q)||_inf` over
/// the parts; zero exactly at points satisfying the box variational inequality.
pub fn stationarity_residual(xq_star: &[Vec<C64>], p: &PsAdmmParams, h: &ComplexMatrix, r: &[C64]) -> Result<f64> {
    check_channel(h, r)?;
    if xq_star.len() != p.q_order() {
        return Err(Error::DimensionMismatch {
            context: "number of parts",
            expected: p.q_order(),
            actual: xq_star.len(),
        });
    }
    if let Some(bad) = xq_star.iter().find(|x| x.len() != h.cols()) {
        return Err(Error::DimensionMismatch {
            context: "part length",
            expected: h.cols(),
            actual: bad.len(),
        });
    }
    let x = recompose_parts(xq_star);
    let hx = h.mul_vec(&x);
    let resid: Vec<C64> = hx.iter().zip(r).map(|(a, b)| a - b).collect();
    let grad_l = h.adjoint_mul_vec(&resid);
    let mut worst: f64 = 0.0;
    for (part, xq) in xq_star.iter().enumerate() {
        let (w, alpha) = (weight(part), p.alphas[part]);
        for (xj, gl) in xq.iter().zip(&grad_l) {
            let g = gl * w - xj * alpha;
            worst = worst
                .max((xj.re - clip(xj.re - g.re)).abs())
                .max((xj.im - clip(xj.im - g.im)).abs());
        }
    }
    Ok(worst)
}
