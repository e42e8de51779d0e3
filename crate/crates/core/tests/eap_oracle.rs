//! Posterior means from the default quadrature against a dense trapezoid integrator.

use irtcat::calibration::{estimate_ability_eap, QuadratureGrid, THETA_MAX, THETA_MIN};
use irtcat::irt::ItemParams;
use proptest::prelude::*;

const DENSE_NODES: usize = 10_001;

fn p3(theta: f64, a: f64, b: f64, c: f64) -> f64 {
    c + (1.0 - c) / (1.0 + (-a * (theta - b)).exp())
}

/// Posterior mean under a N(0, 1) prior truncated to the estimation range.
fn dense_posterior_mean(responses: &[(ItemParams, bool)]) -> f64 {
    let h = (THETA_MAX - THETA_MIN) / (DENSE_NODES - 1) as f64;
    let log_post: Vec<(f64, f64)> = (0..DENSE_NODES)
        .map(|k| {
            let t = THETA_MIN + h * k as f64;
            let ll: f64 = responses
                .iter()
                .map(|(it, r)| {
                    let p = p3(t, it.a, it.b, it.c);
                    if *r { p.ln() } else { (1.0 - p).ln() }
                })
                .sum();
            (t, ll - 0.5 * t * t)
        })
        .collect();
    let top = log_post.iter().map(|x| x.1).fold(f64::NEG_INFINITY, f64::max);
    let (mut num, mut den) = (0.0, 0.0);
    for (k, (t, lp)) in log_post.iter().enumerate() {
        let w = if k == 0 || k == DENSE_NODES - 1 { 0.5 } else { 1.0 };
        let d = w * (lp - top).exp();
        num += d * t;
        den += d;
    }
    num / den
}

fn arb_responses() -> impl Strategy<Value = Vec<(ItemParams, bool)>> {
    prop::collection::vec(
        (0.3f64..2.5, -3.0f64..3.0, 0.0f64..0.35, any::<bool>()).prop_map(|(a, b, c, r)| (ItemParams::new("q", a, b, c), r)),
        0..40,
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn eap_matches_dense_integration(responses in arb_responses()) {
        let grid = QuadratureGrid::default();
        let est = estimate_ability_eap(responses.iter().map(|(it, r)| (it, *r)), &grid).unwrap();
        let oracle = dense_posterior_mean(&responses);
        prop_assert!((est.theta - oracle).abs() <= 1e-3, "eap {} dense {}", est.theta, oracle);
    }
}
