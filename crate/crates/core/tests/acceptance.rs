//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line.
//!
//! Run with `cargo test --test acceptance -- --nocapture` to see the lines.

use psadmm_core::baselines::{box_admm_observed, ls_objective, ml_bruteforce, BaselineKind};
use psadmm_core::harness::{
    complexity_audit, convergence_trace_experiment, parameter_sweep, run_experiment, scaled_alphas, DetectorConfig,
    ExperimentSpec, TraceStats,
};
use psadmm_core::model::{decompose, generate_instance, recompose, Constellation};
use psadmm_core::numerics::{gram_matrix, spectral_estimate, ComplexMatrix};
use psadmm_core::psadmm::{detect_observed, validate_params, Initialization, Precomputed, PsAdmmParams};
use psadmm_core::{Condition, Error};

fn report(id: u32, name: &str, pass: bool, detail: impl std::fmt::Display) {
    println!("criterion {id:>2} [{}] {name}: {detail}", if pass { "PASS" } else { "FAIL" });
}

/// B=16, U=8, 16-QAM, SNR 8 dB, rho = 1.5 sqrt(2) lambda_max per instance.
fn lemma_spec(init: Initialization, max_iters: usize, early_stop: bool) -> ExperimentSpec {
    let mut s = ExperimentSpec::new(16, 8, 2, vec![8.0], vec![DetectorConfig::psadmm()]);
    s.base_seed = 1_000;
    s.rho_factor = Some(1.5);
    s.psadmm = PsAdmmParams::new(1.0, scaled_alphas(10.0, 2));
    s.psadmm.max_iters = max_iters;
    s.psadmm.init = init;
    s.early_stop = early_stop;
    s
}

fn lemma_runs(init: Initialization) -> TraceStats {
    let spec = lemma_spec(init, 50, false);
    convergence_trace_experiment(&spec, 8.0, 200).unwrap()
}

#[test]
fn criterion_01_descent() {
    let zero = lemma_runs(Initialization::Zeros);
    let dual = lemma_runs(Initialization::DualConsistent);
    let validated = zero.all_validated && dual.all_validated;
    // every iteration of the dual-consistent start, every iteration after the first from zero
    let dual_all = dual.checks.descent.not_applicable == 0 && dual.checks.descent.checked == 200 * 50;
    let zero_rest = zero.checks.descent.checked == 200 * 49 && zero.checks.descent.not_applicable == 200;
    let pass = validated && dual_all && zero_rest && dual.checks.descent.passed() && zero.checks.descent.passed();
    report(
        1,
        "augmented Lagrangian non-increasing",
        pass,
        format_args!(
            "dual-consistent start {}/{} iterations ok; zero start {}/{} ok from k=2 (first step outside the descent premise on {} runs)",
            dual.checks.descent.checked - dual.checks.descent.failed,
            dual.checks.descent.checked,
            zero.checks.descent.checked - zero.checks.descent.failed,
            zero.checks.descent.checked,
            zero.checks.descent.not_applicable
        ),
    );
    assert!(pass, "zero: {:?}\ndual: {:?}", zero.checks.descent, dual.checks.descent);
}

#[test]
fn criterion_02_dual_bound_and_identity() {
    let zero = lemma_runs(Initialization::Zeros);
    let dual = lemma_runs(Initialization::DualConsistent);
    let identity_ok = zero.checks.dual_identity.passed()
        && dual.checks.dual_identity.passed()
        && zero.checks.dual_identity.checked == 200 * 50
        && dual.checks.dual_identity.checked == 200 * 50;
    let bound_ok = dual.checks.dual_bound.passed()
        && dual.checks.dual_bound.checked == 200 * 50
        && zero.checks.dual_bound.passed()
        && zero.checks.dual_bound.checked == 200 * 49;
    let pass = identity_ok && bound_ok;
    report(
        2,
        "dual bound and dual identity",
        pass,
        format_args!(
            "identity {}/{} ok; bound {}/{} ok (dual-consistent start), {}/{} ok from k=2 (zero start)",
            zero.checks.dual_identity.checked + dual.checks.dual_identity.checked
                - zero.checks.dual_identity.failed
                - dual.checks.dual_identity.failed,
            zero.checks.dual_identity.checked + dual.checks.dual_identity.checked,
            dual.checks.dual_bound.checked - dual.checks.dual_bound.failed,
            dual.checks.dual_bound.checked,
            zero.checks.dual_bound.checked - zero.checks.dual_bound.failed,
            zero.checks.dual_bound.checked,
        ),
    );
    assert!(pass, "zero: {:?}\ndual: {:?}", zero.checks, dual.checks);
}

#[test]
fn criterion_03_iteration_bound() {
    let mut spec = lemma_spec(Initialization::Zeros, 20_000, true);
    spec.psadmm.eps = 1e-6;
    let stats = convergence_trace_experiment(&spec, 8.0, 50).unwrap();
    let reached = stats.runs.iter().filter(|r| r.first_eps_iteration.is_some()).count();
    let within = stats
        .runs
        .iter()
        .filter(|r| match (r.first_eps_iteration, r.t_bound) {
            (Some(first), Some(bound)) => first as u64 <= bound,
            _ => false,
        })
        .count();
    let worst = stats
        .runs
        .iter()
        .filter_map(|r| Some(r.first_eps_iteration? as f64 / r.t_bound? as f64))
        .fold(0.0, f64::max);
    let pass = stats.all_validated && reached == 50 && within == 50 && stats.checks.iteration_bound.passed();
    report(
        3,
        "first residual <= 1e-6 within the iteration bound",
        pass,
        format_args!("{within}/50 within bound, {reached}/50 reached eps, max observed/bound = {worst:.2e}"),
    );
    assert!(pass);
}

#[test]
fn criterion_04_decomposition_bijection() {
    let mut checked = 0;
    let mut ok = true;
    for q in 1..=3 {
        let c = Constellation::new(q).unwrap();
        let points = c.points();
        let d = decompose(&points, q).unwrap();
        ok &= recompose(&d) == points;
        ok &= d.parts().iter().flatten().all(|z| z.re.abs() == 1.0 && z.im.abs() == 1.0);
        checked += points.len();
    }
    report(4, "decomposition bijection", ok, format_args!("{checked} points over Q=1,2,3 exact"));
    assert!(ok);
}

#[test]
fn criterion_05_box_admm_equivalence() {
    let c = Constellation::qpsk();
    let mut worst: f64 = 0.0;
    let mut iterations = 0;
    for seed in 0..20 {
        let inst = generate_instance(16, 8, &c, 10.0, 5_000 + seed).unwrap();
        let mut pre = Precomputed::new(&inst.h, &inst.r).unwrap();
        let rho = 2.0 * spectral_estimate(&pre.gram, 1e-6, 500).unwrap().lambda_max;
        let mut p = PsAdmmParams::new(rho, vec![0.0]);
        p.max_iters = 30;
        p.early_stop = false;
        let mut ps = Vec::new();
        detect_observed(&inst.h, &inst.r, &mut pre, &c, &p, &mut |s| {
            ps.push((s.xq[0].clone(), s.x0.clone(), s.y.clone()))
        })
        .unwrap();
        let mut bx = Vec::new();
        box_admm_observed(&inst.h, &inst.r, &c, rho, 30, &mut |s| bx.push((s.x.clone(), s.z.clone(), s.y.clone())))
            .unwrap();
        assert_eq!(ps.len(), bx.len());
        for (a, b) in ps.iter().zip(&bx) {
            let pairs = [(&a.0, &b.0), (&a.1, &b.1), (&a.2, &b.2)];
            for (u, v) in pairs {
                for (x, y) in u.iter().zip(v) {
                    worst = worst.max((x.re - y.re).abs()).max((x.im - y.im).abs());
                }
            }
            iterations += 1;
        }
    }
    let pass = worst <= 1e-12 && iterations == 600;
    report(
        5,
        "alpha=0 PS-ADMM equals box-ADMM",
        pass,
        format_args!("max entry difference {worst:.2e} over {iterations} iterations"),
    );
    assert!(pass);
}

/// Vector errors and per-trial objective check of PS-ADMM on 4x4 QPSK at 15 dB.
fn ml_comparison(rho: f64, alpha: f64, seeds: std::ops::Range<u64>) -> (usize, usize, bool) {
    let c = Constellation::qpsk();
    let mut ps_err = 0;
    let mut ml_err = 0;
    let mut objective_ok = true;
    for seed in seeds {
        let inst = generate_instance(4, 4, &c, 15.0, seed).unwrap();
        let mut pre = Precomputed::new(&inst.h, &inst.r).unwrap();
        let mut p = PsAdmmParams::new(rho, vec![alpha]);
        p.max_iters = 200;
        p.override_validation = true;
        let d = detect_observed(&inst.h, &inst.r, &mut pre, &c, &p, &mut |_| {}).unwrap();
        let ml = ml_bruteforce(&inst.h, &inst.r, &c).unwrap();
        objective_ok &= ls_objective(&inst.h, &inst.r, &d.symbols) >= ls_objective(&inst.h, &inst.r, &ml);
        ps_err += (d.symbols != inst.x) as usize;
        ml_err += (ml != inst.x) as usize;
    }
    (ps_err, ml_err, objective_ok)
}

#[test]
fn criterion_06_ml_oracle() {
    // tune on seeds disjoint from the evaluation set
    let mut best = (usize::MAX, 0.0, 0.0);
    for rho in [1.0, 2.0, 4.0, 8.0, 16.0] {
        for frac in [0.0, 0.1, 0.2, 0.3] {
            let (e, _, _) = ml_comparison(rho, frac * rho, 900_000..901_000);
            if e < best.0 {
                best = (e, rho, frac * rho);
            }
        }
    }
    let (_, rho, alpha) = best;
    let (ps_err, ml_err, objective_ok) = ml_comparison(rho, alpha, 0..2000);
    let within = ps_err <= 3 * ml_err;
    let pass = objective_ok && within;
    report(
        6,
        "ML oracle on 4x4 QPSK at 15 dB",
        pass,
        format_args!(
            "objective >= ML on every trial: {objective_ok}; vector errors PS-ADMM {ps_err} vs ML {ml_err} of 2000 (ratio {:.2}, limit 3) at tuned rho={rho} alpha={alpha}",
            ps_err as f64 / ml_err.max(1) as f64
        ),
    );
    assert!(objective_ok, "an ML output was beaten, so the exhaustive search is wrong");
    assert!(within, "PS-ADMM vector errors {ps_err} exceed 3x ML's {ml_err}");
}

#[test]
fn criterion_07_square_system_beats_mmse() {
    let mut tune = ExperimentSpec::new(128, 128, 1, vec![10.0], vec![DetectorConfig::psadmm()]);
    tune.trials = 60;
    tune.base_seed = 7_000_000;
    tune.psadmm.max_iters = 30;
    let sweep = parameter_sweep(&tune, &[100.0, 300.0, 600.0], &[40.0, 80.0, 150.0]).unwrap();
    assert!(sweep.records.iter().any(|r| r.rho == 300.0 && r.alpha == 80.0));
    let best = &sweep.records[sweep.best];

    let mut spec = ExperimentSpec::new(
        128,
        128,
        1,
        vec![10.0],
        vec![DetectorConfig::psadmm(), DetectorConfig::baseline(BaselineKind::Mmse)],
    );
    spec.trials = 1000;
    spec.psadmm = PsAdmmParams::new(best.rho, vec![best.alpha]);
    spec.psadmm.max_iters = 30;
    spec.psadmm.override_validation = true;
    let recs = run_experiment(&spec).unwrap();
    let (ps, mmse) = (&recs[0], &recs[1]);
    // two-proportion z-test, one-sided at 99%
    let pooled = (ps.bit_errors + mmse.bit_errors) as f64 / (ps.bits + mmse.bits) as f64;
    let se = (pooled * (1.0 - pooled) * (1.0 / ps.bits as f64 + 1.0 / mmse.bits as f64)).sqrt();
    let z = (mmse.ber - ps.ber) / se;
    let pass = ps.ber < mmse.ber && z > 2.326;
    report(
        7,
        "128x128 QPSK at 10 dB: PS-ADMM below MMSE",
        pass,
        format_args!(
            "BER PS-ADMM {:.3e} vs MMSE {:.3e}, z = {z:.1} (tuned rho={} alpha={})",
            ps.ber, mmse.ber, best.rho, best.alpha
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_08_monotone_ber() {
    let detectors = vec![
        DetectorConfig::psadmm(),
        DetectorConfig::baseline(BaselineKind::Mmse),
        DetectorConfig::baseline(BaselineKind::Zf),
        DetectorConfig::baseline(BaselineKind::Neumann),
        DetectorConfig::baseline(BaselineKind::GaussSeidel),
        DetectorConfig::baseline(BaselineKind::BoxAdmm),
    ];
    let grid = vec![-8.0, -6.0, -4.0, -2.0, 0.0, 2.0];
    let mut spec = ExperimentSpec::new(128, 16, 1, grid.clone(), detectors);
    spec.trials = 1000;
    spec.rho_factor = Some(1.2);
    let recs = run_experiment(&spec).unwrap();
    let mut violations = Vec::new();
    for chunk in recs.chunks(grid.len()) {
        for w in chunk.windows(2) {
            let var = |r: &psadmm_core::harness::BerRecord| r.ber * (1.0 - r.ber) / r.bits as f64;
            let slack = 3.0 * (var(&w[0]) + var(&w[1])).sqrt();
            if w[1].ber > w[0].ber + slack {
                violations.push(format!("{} {}->{} dB", w[0].detector, w[0].snr_db, w[1].snr_db));
            }
        }
    }
    let pass = violations.is_empty() && recs.iter().all(|r| r.failures == 0 && r.bits == 1000 * 32);
    let summary: Vec<String> = recs
        .chunks(grid.len())
        .map(|c| format!("{} {:.2e}..{:.2e}", c[0].detector, c[0].ber, c[c.len() - 1].ber))
        .collect();
    report(8, "BER non-increasing in SNR", pass, format_args!("{}; violations {:?}", summary.join(", "), violations));
    assert!(pass);
}

#[test]
fn criterion_09_complexity_audit() {
    let a = complexity_audit(128, 16, 1, 30).unwrap();
    let pass = (0.5..=2.0).contains(&a.ratio);
    let items: Vec<String> = a
        .per_kernel
        .iter()
        .map(|(name, measured, predicted)| format!("{name} {measured:.0}/{predicted:.0}"))
        .collect();
    report(
        9,
        "multiplication count vs formula",
        pass,
        format_args!(
            "measured {:.0} vs predicted {:.2}, ratio {:.3}; per kernel measured/predicted: {}",
            a.measured,
            a.predicted,
            a.ratio,
            items.join(", ")
        ),
    );
    assert!(pass);
}

/// Reference `lambda_max(H^H H)` from an independent dense eigensolver.
fn lambda_max_oracle(h: &ComplexMatrix) -> f64 {
    let g = gram_matrix(h);
    let n = g.rows();
    let m = nalgebra::DMatrix::from_fn(n, n, |i, j| nalgebra::Complex::new(g[(i, j)].re, g[(i, j)].im));
    m.symmetric_eigenvalues().iter().cloned().fold(f64::MIN, f64::max)
}

#[test]
fn criterion_10_parameter_gating() {
    let c = Constellation::qpsk();
    let paper = PsAdmmParams::new(300.0, vec![80.0]);
    let mut accepted = 0;
    let mut eligible = 0;
    let mut channels: Vec<ComplexMatrix> = Vec::new();
    for (b, u) in [(32, 4), (64, 8), (64, 16), (96, 16), (128, 8), (128, 16)] {
        for seed in 0..10 {
            channels.push(generate_instance(b, u, &c, 10.0, seed).unwrap().h);
        }
    }
    // scaled identities right under the boundary sqrt(2) lambda = 300
    for target in [299.0, 299.9, 299.99] {
        let s = (target / std::f64::consts::SQRT_2).sqrt();
        channels.push(ComplexMatrix::identity(4).scale(s));
    }
    for h in &channels {
        if std::f64::consts::SQRT_2 * lambda_max_oracle(h) < 300.0 {
            eligible += 1;
            let spec = spectral_estimate(&gram_matrix(h), 1e-6, 500).unwrap();
            accepted += validate_params(&paper, &spec).is_ok() as usize;
        }
    }
    let weak = spectral_estimate(&ComplexMatrix::identity(4), 1e-6, 500).unwrap();
    let mut rejected = 0;
    let rho_le_alpha = [(300.0, 300.0), (300.0, 400.0), (80.0, 300.0), (1e3, 1e3)];
    for (rho, alpha) in rho_le_alpha {
        let r = validate_params(&PsAdmmParams::new(rho, vec![alpha]), &weak);
        rejected += matches!(
            r,
            Err(Error::ConditionViolation {
                condition: Condition::Penalty { q: 1 },
                ..
            })
        ) as usize;
    }
    let pass = eligible >= 40 && accepted == eligible && rejected == rho_le_alpha.len();
    report(
        10,
        "parameter gating",
        pass,
        format_args!(
            "(300, 80) accepted on {accepted}/{eligible} channels with sqrt(2) lambda_max < 300; rho <= alpha rejected {rejected}/{}",
            rho_le_alpha.len()
        ),
    );
    assert!(pass);
}

#[test]
fn zero_start_first_step_raises_lagrangian() {
    // Outside the descent premise: from all-zero iterates y = 0 differs from
    // -grad l(0) = H^H r, and the first transition increases the Lagrangian.
    let c = Constellation::new(2).unwrap();
    for t in 0..20 {
        let inst = generate_instance(16, 8, &c, 8.0, 1_000 + t).unwrap();
        let mut pre = Precomputed::new(&inst.h, &inst.r).unwrap().with_spectral().unwrap();
        let lambda = pre.spectral.unwrap().lambda_max;
        let mut p = PsAdmmParams::new(1.5 * std::f64::consts::SQRT_2 * lambda * 1.01, scaled_alphas(10.0, 2));
        p.diagnostics = true;
        p.max_iters = 1;
        let d = detect_observed(&inst.h, &inst.r, &mut pre, &c, &p, &mut |_| {}).unwrap();
        let tr = d.trace.unwrap();
        assert!(tr.records[0].lagrangian > tr.initial_lagrangian);
        assert!(!tr.records[0].dual_consistent_start);
    }
}
