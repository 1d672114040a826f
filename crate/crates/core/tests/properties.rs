use nalgebra::{Complex, DMatrix};
use proptest::prelude::*;

use psadmm_core::baselines::{ls_objective, ml_bruteforce, mmse, zf};
use psadmm_core::model::{
    bits_to_symbols, decompose, generate_instance, hard_slice, recompose, symbols_to_bits, BitBlock, Constellation,
};
use psadmm_core::numerics::{
    cholesky, dist_sqr, gram_matrix, norm, spectral_estimate, ComplexMatrix, GramSystem, C64,
};
use psadmm_core::psadmm::{detect_observed, lambda_upper, PsAdmmParams, Precomputed};

fn lambda_max_oracle(g: &ComplexMatrix) -> f64 {
    let n = g.rows();
    let m = DMatrix::from_fn(n, n, |i, j| Complex::new(g[(i, j)].re, g[(i, j)].im));
    m.symmetric_eigenvalues().iter().cloned().fold(f64::MIN, f64::max)
}

fn bits_strategy(max_users: usize) -> impl Strategy<Value = (u32, Vec<u8>)> {
    (1u32..=4, 1..=max_users).prop_flat_map(|(q, u)| (Just(q), proptest::collection::vec(0u8..=1, u * 2 * q as usize)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bit_mapping_round_trip((q, bits) in bits_strategy(8)) {
        let c = Constellation::new(q).unwrap();
        let block = BitBlock::new(bits).unwrap();
        let symbols = bits_to_symbols(&block, &c).unwrap();
        prop_assert!(symbols.iter().all(|s| c.contains(*s)));
        prop_assert_eq!(symbols_to_bits(&symbols, &c).unwrap(), block);
    }

    #[test]
    fn decomposition_round_trip((q, bits) in bits_strategy(8)) {
        let c = Constellation::new(q).unwrap();
        let x = bits_to_symbols(&BitBlock::new(bits).unwrap(), &c).unwrap();
        let d = decompose(&x, q).unwrap();
        prop_assert_eq!(d.parts().len(), q as usize);
        prop_assert!(d.parts().iter().flatten().all(|z| z.re.abs() == 1.0 && z.im.abs() == 1.0));
        prop_assert_eq!(recompose(&d), x);
    }

    #[test]
    fn slicing_is_idempotent_and_nearest(q in 1u32..=3, re in -12.0f64..12.0, im in -12.0f64..12.0) {
        let c = Constellation::new(q).unwrap();
        let v = [C64::new(re, im)];
        let s = hard_slice(&v, &c);
        prop_assert!(c.contains(s[0]));
        prop_assert_eq!(hard_slice(&s, &c), s.clone());
        let d = (s[0] - v[0]).norm_sqr();
        prop_assert!(c.points().iter().all(|p| (p - v[0]).norm_sqr() >= d - 1e-12));
    }

    #[test]
    fn gram_solve_residual(b in 2usize..12, du in 0usize..4, seed in any::<u64>(), rho in 0.01f64..100.0) {
        let u = b.saturating_sub(du).max(1);
        let inst = generate_instance(b, u, &Constellation::qpsk(), 10.0, seed).unwrap();
        let sys = GramSystem::new(&inst.h, &inst.r, rho).unwrap();
        let rhs: Vec<C64> = (0..u).map(|i| C64::new(i as f64 - 1.5, 0.5 * i as f64)).collect();
        let x = sys.solve(&rhs).unwrap();
        let mut a = gram_matrix(&inst.h);
        a.add_to_diagonal(rho);
        let back = a.mul_vec(&x);
        prop_assert!(dist_sqr(&back, &rhs).sqrt() <= 1e-10 * (1.0 + norm(&rhs)));
        let l = cholesky(&a).unwrap().reconstruct();
        prop_assert!(l.as_slice().iter().zip(a.as_slice()).all(|(p, q)| (p - q).norm() <= 1e-10 * (1.0 + a.max_abs())));
    }

    #[test]
    fn spectral_estimate_matches_oracle_and_scales(b in 2usize..16, u in 1usize..8, seed in any::<u64>(), scale in 0.1f64..50.0) {
        let u = u.min(b);
        let h = generate_instance(b, u, &Constellation::qpsk(), 10.0, seed).unwrap().h;
        let g = gram_matrix(&h);
        let truth = lambda_max_oracle(&g);
        let est = spectral_estimate(&g, 1e-6, 5000).unwrap();
        prop_assert!(est.lambda_max <= truth * (1.0 + 1e-12));
        if est.converged {
            prop_assert!(lambda_upper(&est) >= truth * (1.0 - 1e-9), "upper {} < truth {}", lambda_upper(&est), truth);
        }
        prop_assert!((est.lambda_max - truth).abs() <= 1e-4 * truth);
        prop_assert!(est.lambda_min_lower <= truth);
        let scaled = spectral_estimate(&g.scale(scale), 1e-6, 5000).unwrap();
        prop_assert!((scaled.lambda_max - scale * est.lambda_max).abs() <= 1e-4 * scale * truth);
    }

    #[test]
    fn psadmm_iterates_stay_boxed_and_dual_consistent(seed in any::<u64>(), q in 1u32..=2, alpha_frac in 0.0f64..0.9, rho_factor in 1.05f64..4.0) {
        let c = Constellation::new(q).unwrap();
        let inst = generate_instance(12, 6, &c, 8.0, seed).unwrap();
        let mut pre = Precomputed::new(&inst.h, &inst.r).unwrap().with_spectral().unwrap();
        let rho = rho_factor * std::f64::consts::SQRT_2 * lambda_upper(&pre.spectral.unwrap());
        let alphas = (0..q).map(|i| alpha_frac * rho * 4f64.powi(i as i32)).collect();
        let mut p = PsAdmmParams::new(rho, alphas);
        p.diagnostics = true;
        p.early_stop = false;
        p.max_iters = 25;
        let mut boxed = true;
        let d = detect_observed(&inst.h, &inst.r, &mut pre, &c, &p, &mut |s| boxed &= s.in_box()).unwrap();
        prop_assert!(boxed);
        let trace = d.trace.unwrap();
        prop_assert!(trace.params_validated);
        for r in &trace.records {
            prop_assert!(r.dual_identity_ok && r.box_ok && r.lower_bound_ok);
            if r.dual_consistent_start {
                prop_assert!(r.lemma1_ok && r.lemma2_ok, "k={} {:?}", r.k, r);
            }
        }
        prop_assert!(trace.records.iter().skip(1).all(|r| r.dual_consistent_start));
        prop_assert!(d.symbols.iter().all(|s| c.contains(*s)));
    }

    #[test]
    fn ml_is_never_beaten(seed in any::<u64>(), snr in 0.0f64..20.0) {
        let c = Constellation::qpsk();
        let inst = generate_instance(4, 3, &c, snr, seed).unwrap();
        let ml = ml_bruteforce(&inst.h, &inst.r, &c).unwrap();
        let best = ls_objective(&inst.h, &inst.r, &ml);
        let mut p = PsAdmmParams::new(50.0, vec![5.0]);
        p.override_validation = true;
        let mut pre = Precomputed::new(&inst.h, &inst.r).unwrap();
        let ps = detect_observed(&inst.h, &inst.r, &mut pre, &c, &p, &mut |_| {}).unwrap().symbols;
        for other in [mmse(&inst.h, &inst.r, &c, inst.noise_var).unwrap(), zf(&inst.h, &inst.r, &c).unwrap(), ps] {
            prop_assert!(ls_objective(&inst.h, &inst.r, &other) >= best);
        }
    }
}
