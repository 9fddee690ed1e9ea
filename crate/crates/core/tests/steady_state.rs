use proptest::prelude::*;
use qaoi_core::model::{State, SubMdpParams, ThresholdPolicy};
use qaoi_core::steady_state::{
    build_blocks, power_p1, policy_averages, stationary_distribution, stationary_oracle, zeta, Mat2,
};

fn params_strategy(p_one: bool) -> impl Strategy<Value = (SubMdpParams, ThresholdPolicy)> {
    (0.02f64..0.98, 0.02f64..0.98, 0.05f64..0.98, 2usize..=30)
        .prop_flat_map(move |(l, g, p, d)| {
            let p = if p_one { 1.0 } else { p };
            let params = SubMdpParams::new(l, g, p, d).unwrap();
            (Just(params), 1..=d + 1, 1..=d + 1)
        })
        .prop_map(|(params, h0, h1)| (params, ThresholdPolicy::new(h0, h1, params.d_max).unwrap()))
}

fn assert_matches_oracle(params: &SubMdpParams, policy: &ThresholdPolicy) {
    let fast = stationary_distribution(params, policy).unwrap();
    let slow = stationary_oracle(params, policy).unwrap();
    for (i, (x, y)) in fast.mu.prob.iter().zip(&slow.mu.prob).enumerate() {
        assert!(
            (x - y).abs() < 1e-9,
            "{params:?} {policy}: state {} has {x} vs oracle {y}",
            params.state(i)
        );
    }
    assert!((fast.j - slow.j).abs() < 1e-9 * params.d_max as f64);
    assert!((fast.a - slow.a).abs() < 1e-9);
    let (j, a) = policy_averages(params, policy).unwrap();
    assert!((j - fast.j).abs() < 1e-9 && (a - fast.a).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn generic_path_matches_power_iteration((params, policy) in params_strategy(false)) {
        assert_matches_oracle(&params, &policy);
    }

    #[test]
    fn error_free_path_matches_power_iteration((params, policy) in params_strategy(true)) {
        assert_matches_oracle(&params, &policy);
    }

    #[test]
    fn distribution_invariants((params, policy) in params_strategy(false)) {
        let avg = stationary_distribution(&params, &policy).unwrap();
        prop_assert!((avg.mu.total() - 1.0).abs() < 1e-12);
        prop_assert!(avg.mu.prob.iter().all(|&m| m >= 0.0));
        prop_assert!((0.0..=1.0).contains(&avg.a));
        prop_assert!(avg.j <= params.d_max as f64 + 1e-12);
        let first = avg.mu.get(State::new(1, false)) + avg.mu.get(State::new(1, true));
        for age in 1..=policy.lower().min(params.d_max - 1) {
            let at = avg.mu.get(State::new(age, false)) + avg.mu.get(State::new(age, true));
            prop_assert!((at - first).abs() < 1e-12);
        }
    }

    #[test]
    fn error_free_mass_stops_at_upper_threshold((params, policy) in params_strategy(true)) {
        let avg = stationary_distribution(&params, &policy).unwrap();
        for age in policy.upper() + 1..=params.d_max {
            prop_assert_eq!(avg.mu.get(State::new(age, false)), 0.0);
            prop_assert_eq!(avg.mu.get(State::new(age, true)), 0.0);
        }
    }

    #[test]
    fn power_p1_semigroup(l in 0.01f64..0.99, g in 0.01f64..0.99, m in 0usize..40, n in 0usize..40) {
        let params = SubMdpParams::new(l, g, 0.5, 10).unwrap();
        let lhs = power_p1(&params, m + n);
        let rhs = power_p1(&params, m) * power_p1(&params, n);
        prop_assert!(lhs.max_abs_diff(&rhs) < 1e-12);
    }

    #[test]
    fn zeta_is_antisymmetric((params, a) in params_strategy(false), h0 in 1usize..=31, h1 in 1usize..=31) {
        let d = params.d_max;
        let b = ThresholdPolicy::new(h0.min(d + 1), h1.min(d + 1), d).unwrap();
        if let (Ok(x), Ok(y)) = (zeta(&params, &a, &b), zeta(&params, &b, &a)) {
            prop_assert!((x - y).abs() <= 1e-9 * x.abs().max(1.0));
        }
    }
}

#[test]
fn power_p1_converges_to_query_split() {
    let params = SubMdpParams::new(0.4, 0.3, 0.7, 10).unwrap();
    let limit = Mat2::new(3.0 / 7.0, 3.0 / 7.0, 4.0 / 7.0, 4.0 / 7.0);
    assert!(power_p1(&params, 200).max_abs_diff(&limit) < 1e-14);
}

#[test]
fn boundary_policies_have_extreme_activity() {
    for p in [0.3, 0.7, 1.0] {
        let params = SubMdpParams::new(0.35, 0.55, p, 12).unwrap();
        let always = stationary_distribution(&params, &ThresholdPolicy::always()).unwrap();
        let never = stationary_distribution(&params, &ThresholdPolicy::never(12)).unwrap();
        assert!((always.a - 1.0).abs() < 1e-12);
        assert_eq!(never.a, 0.0);
    }
}

#[test]
fn error_free_always_policy_via_oracle() {
    let params = SubMdpParams::new(0.4, 0.3, 1.0, 10).unwrap();
    let slow = stationary_oracle(&params, &ThresholdPolicy::always()).unwrap();
    assert!((slow.mu.get(State::new(1, false)) - 3.0 / 7.0).abs() < 1e-12);
    assert!((slow.j - 4.0 / 7.0).abs() < 1e-12);
    assert!((slow.a - 1.0).abs() < 1e-12);
}

#[test]
fn blocks_have_invertible_closing_systems() {
    let params = SubMdpParams::new(0.2, 0.9, 0.6, 8).unwrap();
    for h0 in 1..=9 {
        for h1 in 1..=9 {
            let b = build_blocks(&params, &ThresholdPolicy::new(h0, h1, 8).unwrap()).unwrap();
            assert_eq!(b.p4.is_none(), h0 == 9 && h1 == 9);
        }
    }
}
