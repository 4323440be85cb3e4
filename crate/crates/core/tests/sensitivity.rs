use austen::{
    bias, bias_contour, delta_from_r2, digamma_bracket, r2_par, tau_hat, trigamma_variance_term, AlphaGrid,
    Estimand, PredictionFrame, SensitivityParams,
};
use proptest::prelude::*;

fn frame_from(rows: &[(f64, bool, f64, f64)]) -> PredictionFrame {
    // force both arms
    let t: Vec<bool> = rows
        .iter()
        .enumerate()
        .map(|(i, r)| if i == 0 { true } else if i == 1 { false } else { r.1 })
        .collect();
    let q0: Vec<f64> = rows.iter().map(|r| r.3).collect();
    let q1: Vec<f64> = rows.iter().map(|r| r.3 + 1.5).collect();
    let y: Vec<f64> = rows
        .iter()
        .zip(&t)
        .map(|(r, &ti)| r.2 + if ti { r.3 + 1.5 } else { r.3 })
        .collect();
    PredictionFrame::new(y, t, rows.iter().map(|r| r.0).collect(), q0, q1).unwrap()
}

fn rows() -> impl Strategy<Value = Vec<(f64, bool, f64, f64)>> {
    prop::collection::vec((0.02f64..0.98, any::<bool>(), -3.0f64..3.0, -5.0f64..5.0), 4..60)
        .prop_filter("nonzero residuals", |r| r.iter().any(|x| x.2.abs() > 1e-3))
}

fn closed_form(frame: &PredictionFrame, alpha: f64, delta: f64, estimand: Estimand) -> f64 {
    let rows: Vec<usize> = (0..frame.len())
        .filter(|&i| estimand == Estimand::Ate || frame.t()[i])
        .collect();
    let mean = rows.iter().map(|&i| {
        let g = frame.g()[i];
        1.0 / (g * (1.0 - g))
    }).sum::<f64>() / rows.len() as f64;
    delta * alpha / (1.0 - alpha) * mean
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn bias_matches_closed_form(r in rows(), alpha in 0.005f64..0.995, delta in -5.0f64..5.0) {
        let f = frame_from(&r);
        let p = SensitivityParams::with_delta(alpha, delta).unwrap();
        for est in [Estimand::Ate, Estimand::Att] {
            let got = bias(&p, &f, est).unwrap();
            let want = closed_form(&f, alpha, delta, est);
            prop_assert!((got - want).abs() <= 1e-9 * want.abs().max(1e-300), "{got} vs {want}");
        }
    }

    #[test]
    fn bias_linear_in_delta(r in rows(), alpha in 0.01f64..0.99, delta in 0.1f64..5.0, k in -4.0f64..4.0) {
        let f = frame_from(&r);
        let b1 = bias(&SensitivityParams::with_delta(alpha, delta).unwrap(), &f, Estimand::Ate).unwrap();
        let bk = bias(&SensitivityParams::with_delta(alpha, k * delta).unwrap(), &f, Estimand::Ate).unwrap();
        prop_assert!((bk - k * b1).abs() <= 1e-12 * b1.abs().max(1.0) * k.abs().max(1.0));
    }

    #[test]
    fn r2_quadratic_in_delta(r in rows(), alpha in 0.01f64..0.99, delta in 0.01f64..3.0) {
        let f = frame_from(&r);
        let r1 = r2_par(&SensitivityParams::with_delta(alpha, delta).unwrap(), &f).unwrap();
        let r2 = r2_par(&SensitivityParams::with_delta(alpha, 2.0 * delta).unwrap(), &f).unwrap();
        // doubling is exact in binary floating point
        prop_assert_eq!(r2, 4.0 * r1);
    }

    #[test]
    fn delta_r2_round_trip(r in rows(), alpha in 0.01f64..0.99, target in 0.0f64..=1.0) {
        let f = frame_from(&r);
        let d = delta_from_r2(target, alpha, &f).unwrap();
        prop_assert!(d >= 0.0);
        let back = r2_par(&SensitivityParams::with_delta(alpha, d).unwrap(), &f).unwrap();
        prop_assert!((back - target).abs() < 1e-9);
    }

    #[test]
    fn contour_passes_through_generating_point(r in rows(), alpha in 0.05f64..0.95, delta in 0.1f64..3.0) {
        let f = frame_from(&r);
        let p = SensitivityParams::with_delta(alpha, delta).unwrap();
        let target = bias(&p, &f, Estimand::Ate).unwrap();
        let want = r2_par(&p, &f).unwrap();
        let grid = AlphaGrid::new(vec![alpha]).unwrap();
        let c = bias_contour(target, &f, Estimand::Ate, &grid).unwrap();
        if want <= 1.0 {
            prop_assert!(c.points[0].feasible);
            prop_assert!((c.points[0].r2 - want).abs() < 1e-6);
        } else {
            prop_assert!(!c.points[0].feasible);
            prop_assert_eq!(c.points[0].r2, 1.0);
        }
    }

    #[test]
    fn bias_increasing_in_alpha(r in rows(), delta in 0.1f64..3.0) {
        let f = frame_from(&r);
        let grid = AlphaGrid::default();
        let vals: Vec<f64> = grid.values().iter()
            .map(|&a| bias(&SensitivityParams::with_delta(a, delta).unwrap(), &f, Estimand::Ate).unwrap())
            .collect();
        prop_assert!(vals.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn contour_decreasing_on_feasible_region(r in rows(), target in 0.01f64..2.0) {
        let f = frame_from(&r);
        let c = bias_contour(target, &f, Estimand::Ate, &AlphaGrid::default()).unwrap();
        let feasible: Vec<f64> = c.points.iter().filter(|p| p.feasible).map(|p| p.r2).collect();
        prop_assert!(feasible.windows(2).all(|w| w[1] <= w[0]));
        prop_assert!(c.points.iter().all(|p| p.r2 >= 0.0 && p.r2 <= 1.0));
        prop_assert!(c.points.iter().all(|p| p.feasible || p.r2 == 1.0));
    }

    #[test]
    fn att_equals_ate_for_constant_propensity(r in rows(), g in 0.05f64..0.95, alpha in 0.01f64..0.99) {
        let mut r = r;
        for row in &mut r {
            row.0 = g;
        }
        let f = frame_from(&r);
        let p = SensitivityParams::with_delta(alpha, 1.3).unwrap();
        prop_assert_eq!(bias(&p, &f, Estimand::Ate).unwrap(), bias(&p, &f, Estimand::Att).unwrap());
    }

    #[test]
    fn variance_term_symmetry(g in 0.01f64..0.99, alpha in 0.01f64..0.99) {
        let a = trigamma_variance_term(g, true, alpha).unwrap();
        let b = trigamma_variance_term(1.0 - g, false, alpha).unwrap();
        prop_assert!(a > 0.0);
        prop_assert!((a - b).abs() <= 1e-12 * a);
    }
}

#[test]
fn bracket_examples() {
    assert!((digamma_bracket(0.5, 0.5).unwrap() - 4.0).abs() < 1e-12);
    assert!((digamma_bracket(0.2, 0.5).unwrap() - 6.25).abs() < 1e-12);
    assert!(digamma_bracket(0.3, 1e-9).unwrap() < 1e-8);
}

#[test]
fn variance_term_examples() {
    let want = std::f64::consts::PI.powi(2) - 4.0;
    assert!((trigamma_variance_term(0.5, true, 0.5).unwrap() - want).abs() < 1e-12);
    assert!((trigamma_variance_term(0.5, false, 0.5).unwrap() - want).abs() < 1e-12);
    assert!(trigamma_variance_term(0.5, true, 1e-6).unwrap() < 1e-5);
}

#[test]
fn unit_r2_at_matching_residual_scale() {
    // residual² = π² - 4 on every row
    let r = (std::f64::consts::PI.powi(2) - 4.0).sqrt();
    let f = PredictionFrame::new(vec![r, -r], vec![true, false], vec![0.5; 2], vec![0.0; 2], vec![0.0; 2]).unwrap();
    let p = SensitivityParams::with_delta(0.5, 1.0).unwrap();
    assert!((r2_par(&p, &f).unwrap() - 1.0).abs() < 1e-12);
    assert!((delta_from_r2(1.0, 0.5, &f).unwrap() - 1.0).abs() < 1e-12);
    assert!((bias(&p, &f, Estimand::Ate).unwrap() - 4.0).abs() < 1e-12);
    assert_eq!(delta_from_r2(0.0, 0.5, &f).unwrap(), 0.0);
}

#[test]
fn tau_hat_examples() {
    let f = PredictionFrame::new(vec![0.0; 2], vec![true, false], vec![0.5; 2], vec![1.0, 1.0], vec![2.0, 3.0]).unwrap();
    assert_eq!(tau_hat(&f, Estimand::Ate).unwrap(), 1.5);
    assert_eq!(tau_hat(&f, Estimand::Att).unwrap(), 1.0);
}

#[test]
fn required_r2_has_positive_limit_near_alpha_one() {
    // the needed R² tends to target² mean[t/(1-g)² + (1-t)/g²] / (mse mean[1/(g(1-g))]²)
    let f = PredictionFrame::new(
        vec![1.0, -1.0, 1.0, -1.0],
        vec![true, false, true, false],
        vec![0.3, 0.6, 0.5, 0.2],
        vec![0.0; 4],
        vec![0.0; 4],
    )
    .unwrap();
    let target = 0.2;
    let g = f.g();
    let t = f.t();
    let tail = (0..4)
        .map(|i| if t[i] { 1.0 / (1.0 - g[i]).powi(2) } else { 1.0 / g[i].powi(2) })
        .sum::<f64>()
        / 4.0;
    let inv = g.iter().map(|g| 1.0 / (g * (1.0 - g))).sum::<f64>() / 4.0;
    let limit = target * target * tail / (f.mean_sq_residual() * inv * inv);
    let c = bias_contour(target, &f, Estimand::Ate, &AlphaGrid::new(vec![0.999999]).unwrap()).unwrap();
    assert!((c.points[0].r2 - limit).abs() < 1e-4 * limit, "{} vs {limit}", c.points[0].r2);
}
