use qaoi_core::dp::{
    discounted_index_table, discounted_policy_evaluation, discounted_value_iteration,
    joint_policy_evaluation, oracle_whittle_index, relative_value_iteration, solve_joint_mdp,
    OracleOptions,
};
use qaoi_core::model::{successors, Action, State, SubMdpParams, ThresholdPolicy};
use qaoi_core::steady_state::policy_averages;
use qaoi_core::whittle::whittle_table;

fn params(l: f64, g: f64, p: f64, d: usize) -> SubMdpParams {
    SubMdpParams::new(l, g, p, d).unwrap()
}

fn cost_grid(top: f64, steps: usize) -> impl Iterator<Item = f64> {
    (0..=steps).map(move |k| top * k as f64 / steps as f64)
}

// ── Discounted value iteration ───────────────────────────────────────────

#[test]
fn discounted_values_grow_with_age() {
    let params = params(0.4, 0.3, 0.7, 20);
    for c in [0.0, 2.0, 5.0, 40.0] {
        let vt = discounted_value_iteration(&params, c, 0.99, 1e-8).unwrap();
        for q in [false, true] {
            for age in 1..20 {
                let here = vt.value(State::new(age, q));
                let next = vt.value(State::new(age + 1, q));
                assert!(here <= next + 1e-9, "C={c}: V{} = {here} > V{} = {next}", State::new(age, q), State::new(age + 1, q));
            }
        }
    }
}

#[test]
fn discounted_extremes_and_threshold_shape() {
    let params = params(0.4, 0.3, 0.7, 20);
    let free = discounted_value_iteration(&params, 0.0, 0.99, 1e-8).unwrap();
    assert!(free.policy.iter().all(|a| a.is_active()));
    let dear = discounted_value_iteration(&params, 1e9, 0.99, 1e-8).unwrap();
    assert!(dear.policy.iter().all(|a| !a.is_active()));
    for c in cost_grid(60.0, 30) {
        let vt = discounted_value_iteration(&params, c, 0.99, 1e-8).unwrap();
        vt.thresholds().unwrap();
    }
}

#[test]
fn policy_evaluation_decomposes_and_active_time_dominates() {
    let params = params(0.35, 0.5, 0.6, 12);
    let c = 3.0;
    for h0 in [1, 4, 9, 13] {
        for h1 in [1, 3, 7, 13] {
            let policy = ThresholdPolicy::new(h0, h1, 12).unwrap();
            let ev = discounted_policy_evaluation(&params, &policy, c, 0.95, 1e-10).unwrap();
            for s in params.states() {
                let i = params.index(s);
                let taken = policy.action(s);
                assert!((ev.v[i] - ev.j[i] - c * ev.active_time(s, taken)).abs() < 1e-8);
                assert!(
                    ev.active_time(s, Action::Schedule) >= ev.active_time(s, Action::Idle) - 1e-9,
                    "{policy} at {s}"
                );
            }
        }
    }
}

#[test]
fn never_and_always_active_times() {
    let params = params(0.35, 0.5, 0.6, 12);
    let beta = 0.9;
    let never = discounted_policy_evaluation(&params, &params.never_schedule(), 1.0, beta, 1e-12).unwrap();
    assert!(never.a_time.iter().all(|a| a[0].abs() < 1e-12));
    let always = discounted_policy_evaluation(&params, &ThresholdPolicy::always(), 1.0, beta, 1e-12).unwrap();
    for a in &always.a_time {
        assert!((a[1] - 1.0 / (1.0 - beta)).abs() < 1e-9);
    }
}

// ── Average-cost relative value iteration ────────────────────────────────

#[test]
fn rvi_satisfies_the_bellman_equation() {
    let params = params(0.4, 0.3, 0.7, 15);
    let c = 4.0;
    let sol = relative_value_iteration(&params, c, 1e-11).unwrap();
    assert_eq!(sol.bias(State::new(1, false)), 0.0);
    for s in params.states() {
        let q = |a: Action| {
            let cost = if s.query { s.age as f64 } else { 0.0 } + if a.is_active() { c } else { 0.0 };
            cost + successors(&params, s, a).iter().map(|(t, pr)| pr * sol.bias(t)).sum::<f64>()
        };
        let best = q(Action::Idle).min(q(Action::Schedule));
        assert!((sol.gain + sol.bias(s) - best).abs() < 1e-7, "{s}");
    }
}

#[test]
fn rvi_gain_matches_threshold_policy_average() {
    let params = params(0.6, 0.25, 0.8, 20);
    for c in [0.0, 3.0, 12.0] {
        let sol = relative_value_iteration(&params, c, 1e-11).unwrap();
        let policy = sol.thresholds().unwrap();
        let (j, a) = policy_averages(&params, &policy).unwrap();
        assert!((sol.gain - (j + c * a)).abs() < 1e-7, "C={c}");
    }
    let sol = relative_value_iteration(&SubMdpParams::new(0.5, 0.5, 0.7, 10).unwrap(), 1e9, 1e-10).unwrap();
    assert!((sol.gain - 5.0).abs() < 1e-6);
}

#[test]
fn passive_sets_only_grow_with_cost() {
    let params = params(0.4, 0.3, 0.7, 20);
    let mut previous: Vec<State> = Vec::new();
    for c in cost_grid(50.0, 60) {
        let sol = relative_value_iteration(&params, c, 1e-10).unwrap();
        sol.thresholds().unwrap();
        let passive = sol.passive_set();
        assert!(previous.iter().all(|s| passive.contains(s)), "passive set shrank at C={c}");
        previous = passive;
    }
    assert!(relative_value_iteration(&params, 0.0, 1e-10).unwrap().passive_set().is_empty());
}

#[test]
fn memoryless_queries_give_equal_thresholds() {
    for p in [0.5, 1.0] {
        let params = params(0.4, 0.6, p, 20);
        for c in cost_grid(40.0, 40) {
            let policy = relative_value_iteration(&params, c, 1e-10).unwrap().thresholds().unwrap();
            assert_eq!(policy.h0, policy.h1, "C={c}, p={p}");
        }
    }
}

#[test]
fn discounted_gain_approaches_average_gain() {
    for (l, g, p) in [(0.4, 0.3, 0.7), (0.2, 0.6, 1.0), (0.7, 0.7, 0.5)] {
        let params = params(l, g, p, 10);
        let c = 2.0;
        let avg = relative_value_iteration(&params, c, 1e-11).unwrap().gain;
        let gap = |beta: f64| {
            let vt = discounted_value_iteration(&params, c, beta, 1e-9).unwrap();
            vt.value.iter().map(|v| ((1.0 - beta) * v - avg).abs()).fold(0.0, f64::max)
        };
        let gaps = [gap(0.9), gap(0.99), gap(0.999)];
        assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2], "{gaps:?}");
    }
}

// ── Index oracles ────────────────────────────────────────────────────────

#[test]
fn oracle_index_separates_active_from_passive() {
    let params = params(0.4, 0.3, 0.7, 12);
    let tol = 1e-7;
    for s in [State::new(1, true), State::new(4, false), State::new(9, true)] {
        let w = oracle_whittle_index(&params, s, tol).unwrap();
        let below = relative_value_iteration(&params, w - 10.0 * tol, 1e-11).unwrap();
        let above = relative_value_iteration(&params, w + 10.0 * tol, 1e-11).unwrap();
        assert!(below.action(s).is_active(), "{s} idle below {w}");
        assert!(!above.action(s).is_active(), "{s} active above {w}");
    }
}

#[test]
fn oracle_orders_interleaved_states() {
    let params = params(0.5, 0.7, 0.7, 50);
    let states = [(7, false), (10, true), (8, false), (11, true), (9, false), (12, true)];
    let values: Vec<f64> = states
        .iter()
        .map(|&(age, q)| oracle_whittle_index(&params, State::new(age, q), 1e-6).unwrap())
        .collect();
    assert!(values.windows(2).all(|w| w[0] < w[1]), "{values:?}");
}

#[test]
fn discounted_indices_grow_with_age() {
    let params = params(0.4, 0.3, 0.7, 12);
    let table = discounted_index_table(&params, 0.99, &OracleOptions::default()).unwrap();
    for q in [false, true] {
        for age in 1..12 {
            let i = params.index(State::new(age, q));
            assert!(table[i] <= table[i + 1] + 1e-6);
        }
    }
    assert!(table.iter().all(|&w| w > 0.0));
}

// ── Joint MDP ────────────────────────────────────────────────────────────

#[test]
fn joint_optimum_beats_index_rule() {
    let arms = [params(0.4, 0.3, 0.8, 6), params(0.6, 0.5, 0.6, 6)];
    let opt = solve_joint_mdp(&arms, 1, 1e-9).unwrap();
    let tables: Vec<_> = arms.iter().map(|a| whittle_table(a).unwrap()).collect();
    let rule = |states: &[State]| {
        let (w0, w1) = (tables[0].index(states[0]), tables[1].index(states[1]));
        if w1 > w0 { 0b10 } else { 0b01 }
    };
    let whittle = joint_policy_evaluation(&arms, 1, rule, 1e-10).unwrap();
    assert!(opt.gain <= whittle + 1e-7, "{} vs {whittle}", opt.gain);
    let idle = joint_policy_evaluation(&arms, 1, |_| 0, 1e-10).unwrap();
    let expected: f64 = arms.iter().map(|a| 6.0 * a.lambda / (a.lambda + a.gamma)).sum();
    assert!((idle - expected).abs() < 1e-7);
}

#[test]
fn joint_solver_rejects_oversized_budgets() {
    let arms = [params(0.4, 0.3, 0.8, 4), params(0.6, 0.5, 0.6, 4)];
    assert!(solve_joint_mdp(&arms, 3, 1e-9).is_err());
    assert!(solve_joint_mdp(&arms, 0, 1e-9).is_err());
    let rule = |_: &[State]| 0b11;
    assert!(joint_policy_evaluation(&arms, 1, rule, 1e-9).is_err());
}
