use orthate::estimators::pairwise;
use orthate::score::{
    coefficient_system, compute_coefficients, eval_correction, eval_score, solve_coefficients_oracle, Moments, ScoreInput,
};
use proptest::prelude::*;

fn mixture() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1usize..5).prop_flat_map(|n| (prop::collection::vec(0.03f64..0.97, n), prop::collection::vec(0.1f64..1.0, n)))
}

fn orders() -> impl Strategy<Value = (usize, usize)> {
    (2usize..=7).prop_flat_map(|r| (Just(r), 2..=r))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn recursion_matches_dense_solve((pis, w) in mixture(), (r, k) in orders()) {
        let m = Moments::bernoulli_mixture(&pis, &w, r).unwrap();
        let fast = compute_coefficients(r, k, &m).unwrap().to_vec();
        let slow = solve_coefficients_oracle(r, k, &m).unwrap().to_vec();
        let scale = fast.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        for (x, y) in fast.iter().zip(&slow) {
            prop_assert!((x - y).abs() <= 1e-9 * x.abs().max(y.abs()) + 1e-12 * scale, "{x} vs {y}");
        }
    }

    #[test]
    fn coefficients_satisfy_their_system((pis, w) in mixture(), (r, k) in orders()) {
        let m = Moments::bernoulli_mixture(&pis, &w, r).unwrap();
        let c = compute_coefficients(r, k, &m).unwrap().to_vec();
        let (a, rhs) = coefficient_system(r, k, &m);
        for row in 0..k {
            let lhs: f64 = (0..k).map(|j| a[row * k + j] * c[j]).sum();
            let scale = (0..k).map(|j| (a[row * k + j] * c[j]).abs()).fold(1.0f64, f64::max);
            prop_assert!((lhs - rhs[row]).abs() <= 1e-9 * scale);
        }
    }

    #[test]
    fn correction_has_unit_conditional_mean(pi in 0.03f64..0.97, (r, k) in orders()) {
        // For a single Bernoulli(pi) residual the mean of A is exact.
        let m = Moments::bernoulli(pi, r).unwrap();
        let c = compute_coefficients(r, k, &m).unwrap();
        let mean = pi * c.correction_at(1.0 - pi, &m) + (1.0 - pi) * c.correction_at(-pi, &m);
        prop_assert!((mean - 1.0).abs() < 1e-8 * c.bar_b_r().abs().max(1.0));
    }

    #[test]
    fn summands_are_centered_under_exact_moments(pi in 0.03f64..0.97, (r, k) in orders()) {
        let m = Moments::bernoulli(pi, r).unwrap();
        let c = compute_coefficients(r, k, &m).unwrap();
        for q in 1..k {
            let centered = |v: f64| c.b(q) * (v.powi(q as i32) - m.get(q));
            let mean = pi * centered(1.0 - pi) + (1.0 - pi) * centered(-pi);
            prop_assert!(mean.abs() < 1e-10 * c.b(q).abs().max(1.0));
        }
    }

    #[test]
    fn score_is_affine_in_the_outcome_prediction(
        pi in 0.05f64..0.95,
        a in 0.05f64..0.95,
        t in 0u8..2,
        y in -5.0f64..5.0,
        theta in -5.0f64..5.0,
        g in prop::array::uniform3(-5.0f64..5.0),
        (r, k) in orders(),
    ) {
        let m = Moments::bernoulli(pi, r).unwrap();
        let c = compute_coefficients(r, k, &m).unwrap();
        let input = |g: f64| ScoreInput { treated_indicator: t, propensity: a, outcome: y, outcome_prediction: g, theta };
        let corr = eval_correction(&input(0.0), &c, &m).unwrap();
        let psi: Vec<f64> = g.iter().map(|&v| eval_score(&input(v), &c, &m).unwrap()).collect();
        let scale = psi.iter().fold(1.0f64, |s, v| s.max(v.abs())) * corr.abs().max(1.0);
        for j in 0..3 {
            let expected = psi[0] + (corr - 1.0) * (g[j] - g[0]);
            prop_assert!((psi[j] - expected).abs() <= 1e-9 * scale);
        }
    }

    #[test]
    fn analytic_derivative_matches_central_difference(
        pi in 0.1f64..0.9,
        v in -0.9f64..0.9,
        (r, k) in orders(),
        order in 1usize..3,
    ) {
        let m = Moments::bernoulli(pi, r).unwrap();
        let c = compute_coefficients(r, k, &m).unwrap();
        // d/da at residual v = t - a, so a step +h in a is a step -h in v.
        let h = 1e-4;
        let f = |v: f64| c.correction_at(v, &m);
        let numeric = match order {
            1 => (f(v - h) - f(v + h)) / (2.0 * h),
            _ => (f(v + h) - 2.0 * f(v) + f(v - h)) / (h * h),
        };
        let analytic = c.correction_derivative(v, order);
        let scale = c.to_vec().iter().fold(1.0f64, |s, x| s.max(x.abs())) * 64.0;
        prop_assert!((numeric - analytic).abs() <= 1e-5 * scale, "{numeric} vs {analytic}");
    }

    #[test]
    fn pairwise_effects_are_antisymmetric(theta in prop::collection::vec(-1e6f64..1e6, 2..8)) {
        let p = pairwise(&theta);
        for i in 0..theta.len() {
            prop_assert_eq!(p[i][i], 0.0);
            for k in 0..theta.len() {
                prop_assert_eq!(p[i][k], -p[k][i]);
            }
        }
    }
}

#[test]
fn binary_second_order_coefficients_match_closed_form() {
    // With r = k = 2 the recursion gives b_1 = -2 m1 / m2.
    let m = Moments::bernoulli(0.3, 2).unwrap();
    let c = compute_coefficients(2, 2, &m).unwrap();
    assert!((c.bar_b_r() - 1.0 / m.get(2)).abs() < 1e-15);
    assert!((c.b(1) + 2.0 * m.get(1) / m.get(2)).abs() < 1e-15);
}

#[test]
fn degenerate_top_moment_is_rejected() {
    let m = Moments::new(vec![0.0, 0.0]).unwrap();
    assert!(compute_coefficients(2, 2, &m).is_err());
    assert!(solve_coefficients_oracle(2, 2, &m).is_err());
}

#[test]
fn invalid_orders_are_rejected() {
    let m = Moments::bernoulli(0.4, 4).unwrap();
    assert!(compute_coefficients(3, 1, &m).is_err());
    assert!(compute_coefficients(3, 4, &m).is_err());
    assert!(compute_coefficients(5, 2, &m).is_err());
}
