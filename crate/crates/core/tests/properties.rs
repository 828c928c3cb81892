use std::sync::Arc;

use harvest_core::diffusion::{fundamental_solutions_with, make_diffusion, DiffusionSpec, PairConfig, PairMode};
use harvest_core::free_boundary::{solve_boundaries, sweep_c};
use harvest_core::payoff::PayoffTag;
use harvest_core::resolvent::{g_function, q_theta, resolvent, ResolventConfig};
use proptest::prelude::*;

mod common;
use common::*;

fn gbm_params() -> impl Strategy<Value = (f64, f64, f64)> {
    (-0.5f64..0.5, 0.2f64..1.5, 0.1f64..2.0)
}

fn cheap() -> ProptestConfig {
    ProptestConfig { cases: 24, ..ProptestConfig::default() }
}

proptest! {
    #![proptest_config(cheap())]

    #[test]
    fn wronskian_identity_numerical((b, s, r) in gbm_params(), lx in -6.0f64..6.0) {
        let d = make_diffusion(DiffusionSpec::gbm(b, s, r)).unwrap();
        let pair = fundamental_solutions_with(&d, PairMode::Numerical, &PairConfig::default()).unwrap();
        let x = 10f64.powf(lx);
        prop_assert!(pair.wronskian_defect(x) < 1e-8, "{}", pair.wronskian_defect(x));
    }

    #[test]
    fn wronskian_identity_square_root(alpha in 0.2f64..3.0, lx in -1.3f64..1.3) {
        let d = make_diffusion(DiffusionSpec::mean_rev_sqrt(alpha)).unwrap();
        let pair = fundamental_solutions_with(&d, PairMode::Numerical, &PairConfig::default()).unwrap();
        let x = 10f64.powf(lx);
        prop_assert!(pair.wronskian_defect(x) < 1e-8, "{}", pair.wronskian_defect(x));
    }

    #[test]
    fn resolvent_of_discount_is_one((b, s, r) in gbm_params(), lx in -4.0f64..4.0) {
        let d = make_diffusion(DiffusionSpec::gbm(b, s, r)).unwrap();
        let pair = fundamental_solutions_with(&d, PairMode::Auto, &PairConfig::default()).unwrap();
        let t = resolvent(&pair, Arc::new(move |_| r), &[], &ResolventConfig::default()).unwrap();
        let x = 10f64.powf(lx);
        prop_assert!((t.value(x).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn g_of_multiple_of_discount((b, s, r) in gbm_params(), k in -5.0f64..5.0, lx in -3.0f64..3.0) {
        let d = make_diffusion(DiffusionSpec::gbm(b, s, r)).unwrap();
        let pair = fundamental_solutions_with(&d, PairMode::Auto, &PairConfig::default()).unwrap();
        let t = resolvent(&pair, Arc::new(move |_| k * r), &[], &ResolventConfig::default()).unwrap();
        let x = 10f64.powf(lx);
        prop_assert!((g_function(&t, x).unwrap() - k).abs() < 1e-9);
    }

    #[test]
    fn q_theta_increases_beyond_xi(alpha in 0.2f64..0.9, u in 0.0f64..3.0, v in 0.001f64..1.0) {
        let pb = problem(DiffusionSpec::gbm(0.0, 1.0, 1.0), PayoffTag::PowerH { alpha, k: 1.0 }, 0.1);
        let x1 = pb.theta.xi * 10f64.powf(u);
        let x2 = x1 * 10f64.powf(v);
        let q = |x| q_theta(&pb.r_theta, &pb.theta, x).unwrap();
        prop_assert!(q(x2) > q(x1), "{} {}", q(x1), q(x2));
    }

    #[test]
    fn boundaries_monotone_in_cost(lc in -4.0f64..0.5, step in 0.01f64..1.0, which in 0usize..3) {
        let pb = [power_h(0.1), linear_capped(0.01), piecewise(5.0, 0.05)][which].clone();
        let (c1, c2) = (10f64.powf(lc), 10f64.powf(lc + step));
        let sw = sweep_c(&pb, &[c1, c2]).unwrap();
        let s: Vec<_> = sw.rows.iter().map(|r| r.solution.clone().unwrap()).collect();
        if let (Some(b1), Some(b2)) = (s[0].beta_star, s[1].beta_star) {
            prop_assert!(b2 > b1);
            prop_assert!(s[1].gamma_star.unwrap() < s[0].gamma_star.unwrap());
        }
        prop_assert!(sw.monotone);
    }

    #[test]
    fn classification_invariant_under_shift(k in -3.0f64..3.0, lc in -2.0f64..1.0, which in 0usize..3) {
        let c = 10f64.powf(lc);
        let pb = [power_h(c), linear_capped(c), power_capped(c)][which].clone();
        let s = solve_boundaries(&pb);
        let t = solve_boundaries(&pb.with_theta(pb.theta.shifted(k)).unwrap());
        match (s, t) {
            (Ok(s), Ok(t)) => {
                prop_assert_eq!(s.case, t.case);
                for (a, b) in [(s.gamma_star, t.gamma_star), (s.beta_star, t.beta_star), (s.beta_circ, t.beta_circ)] {
                    prop_assert_eq!(a.is_some(), b.is_some());
                    if let (Some(a), Some(b)) = (a, b) {
                        prop_assert!((a - b).abs() < 1e-6 * a.max(1.0), "{a} vs {b}");
                    }
                }
            }
            // a cost on a threshold is ambiguous either way
            (Err(e), Err(f)) => prop_assert_eq!(std::mem::discriminant(&e), std::mem::discriminant(&f)),
            (s, t) => prop_assert!(false, "{s:?} vs {t:?}"),
        }
    }
}

#[test]
fn boundaries_close_in_on_x_lower() {
    for pb in [power_h(0.1), linear_capped(0.1), power_capped(0.1), piecewise(5.0, 0.05)] {
        let mut last = f64::INFINITY;
        for c in [1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8, 1e-9] {
            let s = solve_boundaries(&pb.with_cost(c)).unwrap();
            let xl = s.structural.x_lower.value();
            let (g, b) = (s.gamma_star.unwrap(), s.beta_star.unwrap());
            assert!(g < xl && xl < b);
            let gap = (xl - g).max(b - xl);
            assert!(gap < last, "{:?} c = {c}", pb.payoff.tag);
            // width ~ c^{1/3} once c is small
            if c <= 1e-6 {
                assert!((last / gap - 10f64.cbrt()).abs() < 0.1, "{:?} c = {c}: {}", pb.payoff.tag, last / gap);
            }
            last = gap;
        }
    }
}

#[test]
fn power_h_small_cost_oracle() {
    let s = solve_boundaries(&power_h(1e-9)).unwrap();
    assert!(rel_err(s.gamma_star.unwrap(), 0.44360595077931127) < 1e-8);
    assert!(rel_err(s.beta_star.unwrap(), 0.44528584834583699) < 1e-8);
}
