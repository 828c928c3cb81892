mod common;

use common::*;
use harvest_core::error::Error;
use harvest_core::free_boundary::*;
use harvest_core::numeric::{log_grid, Extended};
use harvest_core::problem::Problem;

fn finite(e: Extended) -> f64 {
    e.finite().unwrap_or_else(|| panic!("expected finite, got {e:?}"))
}

// Closed forms for h = √x, k ≡ 1, b = 0, σ = r = 1: R_Θ = 8/9·√x − x, ψ = x².
fn d5(x: f64) -> f64 {
    (4.0 / 9.0 * x.powf(-0.5) - 1.0) / (2.0 * x)
}

fn g5(x: f64) -> f64 {
    8.0 / 9.0 * x.sqrt() - x - d5(x) * x * x
}

#[test]
fn x_lower_examples() {
    assert_eq!(structural_points(&piecewise(7.0, 0.1)).unwrap().x_lower, Extended::PosInf);
    assert!(structural_points(&piecewise(5.0, 0.05)).unwrap().x_lower.is_finite());
    let sp = structural_points(&power_h(0.1)).unwrap();
    assert!(rel_err(finite(sp.x_lower), 4.0 / 9.0) < 1e-9);
}

#[test]
fn x_upper_examples() {
    let sp = structural_points(&power_h(0.1)).unwrap();
    assert_eq!(sp.l0, Some(Extended::PosInf));
    assert_eq!(sp.x_upper, Extended::PosInf);

    let sp = structural_points(&power_capped(0.1)).unwrap();
    let l0 = finite(sp.l0.unwrap());
    assert!((l0 + 0.6).abs() < 1e-6, "l0 = {l0}");
    assert!(finite(sp.x_upper) > finite(sp.x_lower));

    let pb = problem(
        harvest_core::diffusion::DiffusionSpec::gbm(0.5, 0.5, 0.25),
        harvest_core::payoff::PayoffTag::LinearCapped { alpha: -0.5 },
        0.1,
    );
    assert_eq!(structural_points(&pb).unwrap().x_upper, Extended::PosInf);
}

#[test]
fn structural_invariants() {
    for pb in [power_h(0.1), linear_capped(0.1), power_capped(0.1), piecewise(5.0, 0.05), piecewise(7.0, 0.1), sqrt_mr(0.3, 0.2, 0.1)] {
        let sp = structural_points(&pb).unwrap();
        let tag = &pb.payoff.tag;
        assert_eq!(sp.x_lower.is_finite(), sp.q_infinity.value() > 0.0, "{tag:?}");
        if let Extended::Finite(xl) = sp.x_lower {
            assert!(xl > sp.xi, "{tag:?}");
            let l0 = sp.l0.unwrap();
            assert_eq!(sp.x_upper == Extended::PosInf, l0.value() >= 0.0, "{tag:?}");
            if let Extended::Finite(xu) = sp.x_upper {
                assert!(xu > xl, "{tag:?}");
            }
        }
    }
}

#[test]
fn gamma_tends_to_x_lower() {
    let pb = power_h(0.1);
    let sp = structural_points(&pb).unwrap();
    let xl = finite(sp.x_lower);
    let gaps: Vec<f64> = [1e-2, 1e-3, 1e-4].iter().map(|d| (gamma_of_beta(&pb, &sp, xl + d).unwrap() - xl).abs()).collect();
    assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2], "{gaps:?}");
    assert!(gaps[2] < 2e-4);
}

#[test]
fn gamma_at_twice_x_lower() {
    let pb = power_h(0.1);
    let sp = structural_points(&pb).unwrap();
    let xl = finite(sp.x_lower);
    let g = gamma_of_beta(&pb, &sp, 2.0 * xl).unwrap();
    assert!(g > 0.0 && g < xl);
    assert!(rel_err(g, 0.28733570907273660) < 1e-8, "{g}");
    // unique crossing on a fine grid
    let target = d5(2.0 * xl);
    let grid = log_grid(1e-4, xl, 10_000);
    let crossings = grid.windows(2).filter(|w| (d5(w[0]) - target).signum() != (d5(w[1]) - target).signum()).count();
    assert_eq!(crossings, 1);
}

#[test]
fn gamma_strictly_decreasing() {
    for pb in [power_h(0.1), power_capped(0.1), piecewise(5.0, 0.05)] {
        let sp = structural_points(&pb).unwrap();
        let xl = finite(sp.x_lower);
        let hi = sp.x_upper.finite().unwrap_or(10.0 * xl);
        let bs = log_grid(xl * 1.01, hi * 0.99, 12);
        let gs: Vec<f64> = bs.iter().map(|&b| gamma_of_beta(&pb, &sp, b).unwrap()).collect();
        assert!(gs.windows(2).all(|w| w[1] < w[0]), "{:?} {gs:?}", pb.payoff.tag);
    }
}

#[test]
fn gamma_outside_range_is_rejected() {
    let pb = power_h(0.1);
    let sp = structural_points(&pb).unwrap();
    assert!(matches!(gamma_of_beta(&pb, &sp, 0.3), Err(Error::RootNotBracketed(_))));
}

#[test]
fn f_is_additive() {
    for pb in [power_h(0.1), linear_capped(0.1), sqrt_mr(0.3, 0.2, 0.1)] {
        // at an entrance 0, F(0, ·) carries D(β)ψ(0) and does not telescope
        let natural = pb.zero.psi == 0.0;
        for (g, m, b) in [(0.1, 0.7, 2.0), (0.0, 0.3, 1.5), (0.02, 0.05, 9.0)] {
            if g == 0.0 && !natural {
                continue;
            }
            let lhs = f_gamma_beta(&pb, g, m).unwrap() + f_gamma_beta(&pb, m, b).unwrap();
            let rhs = f_gamma_beta(&pb, g, b).unwrap();
            assert!((lhs - rhs).abs() <= 1e-9 * rhs.abs().max(1.0), "{:?}", pb.payoff.tag);
        }
    }
}

#[test]
fn f_along_gamma_curve() {
    let pb = power_h(0.1);
    let sp = structural_points(&pb).unwrap();
    let xl = finite(sp.x_lower);
    let f = |b: f64| f_gamma_beta(&pb, gamma_of_beta(&pb, &sp, b).unwrap(), b).unwrap();
    assert!(f(xl + 1e-4).abs() < 1e-9);
    let vals: Vec<f64> = log_grid(xl * 1.001, 20.0, 15).iter().map(|&b| f(b)).collect();
    assert!(vals.windows(2).all(|w| w[1] < w[0]), "{vals:?}");
}

#[test]
fn threshold_examples() {
    let th = c_thresholds(&linear_capped(0.1), &structural_points(&linear_capped(0.1)).unwrap()).unwrap();
    assert!((finite(th.c_circ) - 5.0).abs() < 1e-6, "{th:?}");
    let th = c_thresholds(&power_capped(0.1), &structural_points(&power_capped(0.1)).unwrap()).unwrap();
    assert!((finite(th.c_circ) - 2.0).abs() < 1e-6, "{th:?}");
    let th = c_thresholds(&power_h(0.1), &structural_points(&power_h(0.1)).unwrap()).unwrap();
    assert_eq!(th.c_star, Extended::PosInf);
}

fn check_case_one(pb: &Problem) -> FreeBoundarySolution {
    let s = solve_boundaries(pb).unwrap();
    assert_eq!(s.case, Case::I, "{:?} c = {}", pb.payoff.tag, pb.cost());
    let (g, b) = (s.gamma_star.unwrap(), s.beta_star.unwrap());
    let xl = finite(s.structural.x_lower);
    assert!(g < xl && xl < b && b < s.structural.x_upper.value());
    assert!(s.residual_1.unwrap() < 1e-7 && s.residual_2.unwrap() < 1e-7);
    s
}

#[test]
fn power_h_is_case_one_for_any_cost() {
    for c in [1e-4, 0.01, 0.1, 1.0, 10.0, 100.0] {
        check_case_one(&power_h(c));
    }
}

#[test]
fn power_h_boundaries_match_oracle() {
    let cases = [
        (0.01, 0.31808594590197678, 0.70800469545203203),
        (0.1, 0.25461437654918430, 1.3049470712221408),
        (1.0, 0.21358710734446741, 4.3915021260209358),
    ];
    for (c, g, b) in cases {
        let s = check_case_one(&power_h(c));
        assert!(rel_err(s.gamma_star.unwrap(), g) < 1e-8, "c = {c}");
        assert!(rel_err(s.beta_star.unwrap(), b) < 1e-8, "c = {c}");
    }
}

#[test]
fn residuals_small_across_examples() {
    for pb in [linear_capped(0.1), power_capped(0.1), piecewise(5.0, 0.05), sqrt_mr(0.3, 0.2, 0.1)] {
        check_case_one(&pb);
    }
}

#[test]
fn case_two_examples() {
    for pb in [linear_capped(1.0), power_capped(1.0), sqrt_mr(0.7, 0.2, 3.0)] {
        let s = solve_boundaries(&pb).unwrap();
        assert_eq!(s.case, Case::II, "{:?}", pb.payoff.tag);
        assert!(s.beta_circ.unwrap() >= finite(s.structural.x_upper));
        assert!(s.residual_2.unwrap() < 1e-7);
        let f = f_gamma_beta(&pb, 0.0, s.beta_circ.unwrap()).unwrap();
        assert!((f + pb.cost()).abs() < 1e-7);
    }
}

#[test]
fn case_three_and_four() {
    let s = solve_boundaries(&piecewise(7.0, 0.1)).unwrap();
    assert_eq!(s.case, Case::III);
    assert!(s.k_infinity.abs() < 1e-10);
    let s = solve_boundaries(&power_capped(2.5)).unwrap();
    assert_eq!(s.case, Case::IV);
    assert!(s.k_infinity > 0.0);
    let s = solve_boundaries(&linear_capped(6.0)).unwrap();
    assert_eq!(s.case, Case::III);
}

#[test]
fn classification_table() {
    for pb in [power_h(0.3), linear_capped(0.3), linear_capped(2.0), linear_capped(7.0), power_capped(0.05), power_capped(1.5), power_capped(3.0), piecewise(7.0, 1.0)] {
        let s = solve_boundaries(&pb).unwrap();
        let c = pb.cost();
        let sp = &s.structural;
        let th = &s.thresholds;
        let expected = if !sp.x_lower.is_finite() || c >= th.c_circ.value().max(th.c_star.value()) {
            if s.k_infinity > 0.0 { Case::IV } else { Case::III }
        } else if c < th.c_star.value() {
            Case::I
        } else {
            Case::II
        };
        assert_eq!(s.case, expected, "{:?} c = {c}", pb.payoff.tag);
    }
}

#[test]
fn threshold_tie_is_ambiguous() {
    let pb = linear_capped(0.1);
    let th = c_thresholds(&pb, &structural_points(&pb).unwrap()).unwrap();
    let pb = pb.with_cost(th.c_circ.value());
    assert!(matches!(solve_boundaries(&pb), Err(Error::ThresholdAmbiguity { .. })));
}

#[test]
fn sign_pattern_of_derivative_ratio() {
    for pb in [power_h(0.1), linear_capped(0.1), power_capped(0.1), piecewise(5.0, 0.05)] {
        let s = check_case_one(&pb);
        let (g, b) = (s.gamma_star.unwrap(), s.beta_star.unwrap());
        let db = pb.d_ratio(b).unwrap();
        for x in log_grid(g * 1e-3, g * 0.999, 20) {
            assert!(pb.d_ratio(x).unwrap() - db > 0.0, "{:?} below gamma at {x}", pb.payoff.tag);
        }
        for x in log_grid(g * 1.001, b * 0.999, 20) {
            assert!(pb.d_ratio(x).unwrap() - db < 0.0, "{:?} between at {x}", pb.payoff.tag);
        }
    }
}

#[test]
fn shift_invariance() {
    for pb in [power_h(0.1), linear_capped(0.1)] {
        let s = solve_boundaries(&pb).unwrap();
        let shifted = pb.with_theta(pb.theta.shifted(0.75)).unwrap();
        let t = solve_boundaries(&shifted).unwrap();
        assert!((finite(s.structural.x_lower) - finite(t.structural.x_lower)).abs() < 1e-6);
        assert!((s.beta_star.unwrap() - t.beta_star.unwrap()).abs() < 1e-6);
        assert!((s.gamma_star.unwrap() - t.gamma_star.unwrap()).abs() < 1e-6);
    }
}

// Grid search over closed forms, refined once around the coarse winner.
fn grid_search(c: f64, mut gr: (f64, f64), mut br: (f64, f64)) -> (f64, f64) {
    let mut best = (0.0, 0.0);
    for _ in 0..2 {
        let gs = log_grid(gr.0, gr.1, 500);
        let bs = log_grid(br.0, br.1, 500);
        let (dg, gg): (Vec<f64>, Vec<f64>) = gs.iter().map(|&x| (d5(x), g5(x))).unzip();
        let (db, gb): (Vec<f64>, Vec<f64>) = bs.iter().map(|&x| (d5(x), g5(x))).unzip();
        let mut score = f64::INFINITY;
        for i in 0..gs.len() {
            for j in 0..bs.len() {
                let r = (dg[i] - db[j]).abs().max((gb[j] - gg[i] + c).abs());
                if r < score {
                    score = r;
                    best = (gs[i], bs[j]);
                }
            }
        }
        gr = (best.0 * 0.98, best.0 * 1.02);
        br = (best.1 * 0.98, best.1 * 1.02);
    }
    best
}

#[test]
fn brute_force_grid_agrees() {
    let xl = 4.0 / 9.0;
    for c in [0.01, 0.1, 1.0] {
        let (g, b) = grid_search(c, (xl * 1e-2, xl), (xl, xl * 100.0));
        let s = solve_boundaries(&power_h(c)).unwrap();
        assert!((g - s.gamma_star.unwrap()).abs() < 1e-3, "c = {c}: {g}");
        assert!((b - s.beta_star.unwrap()).abs() < 1e-3, "c = {c}: {b}");
    }
}

#[test]
fn epsilon_schedules() {
    let mut s = solve_boundaries(&linear_capped(1.0)).unwrap();
    s.beta_circ = Some(2.0);
    assert_eq!(epsilon_sequence(&s, 3, None).unwrap(), vec![(2.0, 0.5), (2.0, 0.25), (2.0, 0.125)]);
    let s = solve_boundaries(&power_capped(2.5)).unwrap();
    assert_eq!(epsilon_sequence(&s, 2, None).unwrap(), vec![(4.0, 1.0), (8.0, 1.0)]);
    assert_eq!(epsilon_sequence(&s, 1, Some(3.0)).unwrap(), vec![(12.0, 3.0)]);
    let s = solve_boundaries(&power_h(0.1)).unwrap();
    assert!(matches!(epsilon_sequence(&s, 2, None), Err(Error::WrongCase(_))));
}

#[test]
fn sweep_is_monotone_in_case_one() {
    let grid = log_grid(1e-3, 10.0, 12);
    let sw = sweep_c(&power_h(0.1), &grid).unwrap();
    assert_eq!(sw.rows.len(), grid.len());
    assert!(sw.monotone);
    let betas: Vec<f64> = sw.rows.iter().map(|r| r.solution.as_ref().unwrap().beta_star.unwrap()).collect();
    assert!(betas.windows(2).all(|w| w[0] < w[1]));
    assert!(sw.rows.iter().zip(&grid).all(|(r, &c)| r.c == c));
}

#[test]
fn single_point_sweep() {
    let sw = sweep_c(&power_h(0.1), &[0.5]).unwrap();
    assert_eq!(sw.rows.len(), 1);
    assert_eq!(sw.rows[0].case(), Some(Case::I));
}

#[test]
fn sweep_rejects_unsorted_grid() {
    assert!(matches!(sweep_c(&power_h(0.1), &[0.5, 0.2]), Err(Error::Precondition(_))));
}
