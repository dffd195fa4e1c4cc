use bda::hypergrad::{hypergrad_forward, hypergrad_reverse};
use bda::inner::{aggregated_step, run_inner};
use bda::problems::{Counterexample, LlsQuadratic};
use bda::verify::check_nonexpansive;
use bda::{project_box, AggregationSchedule, AlphaRule, BetaRule, BilevelProblem, BoxRegion, InnerMode, RealVector};
use proptest::prelude::*;

fn vec_in(len: usize, lo: f64, hi: f64) -> impl Strategy<Value = RealVector> {
    proptest::collection::vec(lo..hi, len).prop_map(RealVector::from_vec)
}

fn lls_schedule(p: &LlsQuadratic, mu: f64) -> AggregationSchedule {
    let sm = p.smoothness();
    AggregationSchedule {
        mu,
        s_u: 1.0 / sm.upper_lipschitz.unwrap(),
        s_l: 1.0 / sm.lower_lipschitz.unwrap(),
        alpha: AlphaRule::Harmonic,
        beta: BetaRule::Declining { start: 1.0, lower: 0.5 },
        diagnostic: false,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn projection_is_one_lipschitz(
        a in vec_in(6, -5.0, 5.0),
        b in vec_in(6, -5.0, 5.0),
        lo in -2.0f64..0.0,
        width in 0.0f64..3.0,
    ) {
        let region = BoxRegion::cube(6, lo, lo + width).unwrap();
        let pa = project_box(&a, &region).unwrap();
        let pb = project_box(&b, &region).unwrap();
        prop_assert!((&pa - &pb).norm() <= (&a - &b).norm() + 1e-12);
        prop_assert_eq!(project_box(&pa, &region).unwrap(), pa);
    }

    #[test]
    fn alpha_rules_are_nonincreasing_in_unit_interval(c in 0.01f64..1.0, k in 0usize..10_000) {
        for rule in [AlphaRule::Harmonic, AlphaRule::Scaled { c }] {
            let (a, b) = (rule.at(k), rule.at(k + 1));
            prop_assert!(a > 0.0 && a <= 1.0);
            prop_assert!(b <= a);
        }
    }

    #[test]
    fn beta_rules_stay_in_range_with_bounded_variation(
        lower in 0.05f64..1.0,
        frac in 0.0f64..1.0,
        k in 1usize..10_000,
    ) {
        let start = lower + frac * (1.0 - lower);
        for rule in [BetaRule::Constant { b: lower }, BetaRule::Declining { start, lower }] {
            let (prev, cur) = (rule.at(k - 1), rule.at(k));
            prop_assert!(cur >= rule.lower() - 1e-15 && cur <= 1.0 + 1e-15);
            let bound = rule.c_beta() / ((k + 1) as f64).powi(2);
            prop_assert!((cur - prev).abs() <= bound + 1e-15);
        }
    }

    #[test]
    fn unprojected_step_is_convex_combination(
        x in vec_in(2, -1.0, 1.0),
        y in vec_in(3, -2.0, 2.0),
        mu in 0.01f64..0.99,
        k in 0usize..50,
        seed in 0u64..1000,
    ) {
        let p = LlsQuadratic::random(2, 3, seed).unwrap();
        let sched = lls_schedule(&p, mu);
        let st = aggregated_step(&p, &x, &y, k, &sched).unwrap();
        let mix = st.z_u * mu + st.z_l * (1.0 - mu);
        prop_assert!((&st.y_next - &mix).amax() <= 1e-12 * (1.0 + y.amax()));
        prop_assert!(st.proj_active.iter().all(|a| !a));
    }

    #[test]
    fn iterates_stay_in_compact_region(
        x in vec_in(3, -1.0, 1.0),
        y0 in vec_in(6, -2.0, 2.0),
        mu in 0.01f64..0.99,
    ) {
        let p = Counterexample::with_regions(3, 1.0, Some(2.0)).unwrap();
        let sched = AggregationSchedule { mu, s_u: 1e-3, s_l: 0.5, diagnostic: true, ..AggregationSchedule::reference() };
        let trace = run_inner(&p, &x, Some(&y0), 30, &sched, InnerMode::Bda).unwrap();
        for rec in &trace.records {
            prop_assert!(p.region_y().contains(&rec.y));
            prop_assert!(rec.f_val.is_finite() && rec.upper_val.is_finite());
        }
        prop_assert_eq!(trace.records.len(), 31);
    }

    #[test]
    fn counterexample_lower_ignores_tail(
        x in vec_in(4, -3.0, 3.0),
        w in vec_in(8, -3.0, 3.0),
        tail in vec_in(4, -3.0, 3.0),
    ) {
        let p = Counterexample::new(4).unwrap();
        let mut moved = w.clone();
        moved.rows_mut(4, 4).copy_from(&tail);
        prop_assert_eq!(p.lower(&x, &w), p.lower(&x, &moved));
        prop_assert_eq!(p.grad_y_lower(&x, &w).rows(4, 4).amax(), 0.0);
        prop_assert!(p.lower_optimal_value(&x).unwrap() <= p.lower(&x, &w) + 1e-12);
    }

    #[test]
    fn lls_lower_level_is_strongly_convex(seed in 0u64..1000, n in 1usize..4, m in 1usize..6) {
        let p = LlsQuadratic::random(n, m, seed).unwrap();
        let x = RealVector::zeros(n);
        let y = RealVector::zeros(m);
        let sigma = p.smoothness().lower_strong_convexity.unwrap();
        let h = p.hess_yy_lower(&x, &y).unwrap();
        let min_eig = h.symmetric_eigenvalues().min();
        prop_assert!(min_eig >= sigma * (1.0 - 1e-10));
        let y_bar = p.lower_solution(&x).unwrap();
        prop_assert!(p.lower_optimal_value(&x).unwrap() <= p.lower(&x, &y_bar) + 1e-12);
    }

    #[test]
    fn forward_matches_reverse_on_lls(
        x in vec_in(2, -1.0, 1.0),
        seed in 0u64..500,
        steps in 0usize..40,
        mu in 0.05f64..0.95,
    ) {
        let p = LlsQuadratic::random(2, 3, seed).unwrap();
        let sched = lls_schedule(&p, mu);
        let rev = hypergrad_reverse(&p, &x, None, steps, &sched, InnerMode::Bda, None).unwrap();
        let fwd = hypergrad_forward(&p, &x, None, steps, &sched, InnerMode::Bda, true).unwrap();
        let scale = 1.0 + rev.gradient.amax();
        prop_assert!((&rev.gradient - &fwd.gradient).amax() <= 1e-10 * scale);
    }

    #[test]
    fn lower_auxiliary_point_is_nonexpansive(
        x in vec_in(3, -1.0, 1.0),
        y0 in vec_in(4, -3.0, 3.0),
        seed in 0u64..500,
        mu in 0.05f64..0.95,
    ) {
        let p = LlsQuadratic::random(3, 4, seed).unwrap();
        let sched = lls_schedule(&p, mu);
        let trace = run_inner(&p, &x, Some(&y0), 40, &sched, InnerMode::Bda).unwrap();
        prop_assert!(check_nonexpansive(&p, &x, &trace).unwrap().passed());
    }
}
