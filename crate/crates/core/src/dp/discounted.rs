use super::{check_tol, expectations, qaoi_cost, DiscountedPolicyEvaluation, ValueTable};
use crate::error::{Error, Result};
use crate::model::{Action, SubMdpParams, ThresholdPolicy};

const MAX_SWEEPS: usize = 50_000_000;

fn check_beta(beta: f64) -> Result<()> {
    if beta > 0.0 && beta < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("beta must lie in (0, 1), got {beta}")))
    }
}

/// Value iteration from `V ≡ 0` until the sup-norm change drops below
/// `tol·(1−β)/(2β)`, which puts the iterate within `tol/2` of the fixed point.
pub fn discounted_value_iteration(
    params: &SubMdpParams,
    c: f64,
    beta: f64,
    tol: f64,
) -> Result<ValueTable> {
    discounted_value_iteration_from(params, c, beta, tol, None)
}

/// As [`discounted_value_iteration`], starting from `init` when given.
pub fn discounted_value_iteration_from(
    params: &SubMdpParams,
    c: f64,
    beta: f64,
    tol: f64,
    init: Option<&[f64]>,
) -> Result<ValueTable> {
    params.validate()?;
    check_tol(tol)?;
    check_beta(beta)?;
    let n = params.num_states();
    let mut v = match init {
        Some(w) if w.len() == n => w.to_vec(),
        _ => vec![0.0; n],
    };
    let mut next = vec![0.0; n];
    let stop = tol * (1.0 - beta) / (2.0 * beta);
    for sweep in 1..=MAX_SWEEPS {
        let mut change = 0.0_f64;
        for (i, slot) in next.iter_mut().enumerate() {
            let (idle, active) = expectations(params, &v, i);
            let cost = qaoi_cost(params, i);
            let best = (cost + beta * idle).min(cost + c + beta * active);
            change = change.max((best - v[i]).abs());
            *slot = best;
        }
        std::mem::swap(&mut v, &mut next);
        if change < stop {
            let policy = greedy(params, &v, c, beta);
            return Ok(ValueTable {
                d_max: params.d_max,
                value: v,
                policy,
                iterations: sweep,
            });
        }
    }
    Err(Error::numerical(
        "discounted value iteration",
        format!("no convergence in {MAX_SWEEPS} sweeps"),
    ))
}

fn greedy(params: &SubMdpParams, v: &[f64], c: f64, beta: f64) -> Vec<Action> {
    (0..v.len())
        .map(|i| {
            let (idle, active) = expectations(params, v, i);
            Action::from_active(c + beta * active < beta * idle)
        })
        .collect()
}

/// Fixed-point evaluation of a threshold policy's discounted QAoI and
/// active times.
pub fn discounted_policy_evaluation(
    params: &SubMdpParams,
    policy: &ThresholdPolicy,
    c: f64,
    beta: f64,
    tol: f64,
) -> Result<DiscountedPolicyEvaluation> {
    params.validate()?;
    check_tol(tol)?;
    check_beta(beta)?;
    let n = params.num_states();
    let actions: Vec<bool> = params
        .states()
        .map(|s| policy.action(s).is_active())
        .collect();
    let stop = tol * (1.0 - beta) / (2.0 * beta);
    let iterate = |cost: &dyn Fn(usize) -> f64| -> Result<Vec<f64>> {
        let mut x = vec![0.0; n];
        let mut next = vec![0.0; n];
        for _ in 0..MAX_SWEEPS {
            let mut change = 0.0_f64;
            for (i, slot) in next.iter_mut().enumerate() {
                let (idle, active) = expectations(params, &x, i);
                let e = if actions[i] { active } else { idle };
                let val = cost(i) + beta * e;
                change = change.max((val - x[i]).abs());
                *slot = val;
            }
            std::mem::swap(&mut x, &mut next);
            if change < stop {
                return Ok(x);
            }
        }
        Err(Error::numerical(
            "discounted policy evaluation",
            format!("no convergence in {MAX_SWEEPS} sweeps"),
        ))
    };
    let j = iterate(&|i| qaoi_cost(params, i))?;
    let a = iterate(&|i| actions[i] as u8 as f64)?;
    let a_time: Vec<[f64; 2]> = (0..n)
        .map(|i| {
            let (idle, active) = expectations(params, &a, i);
            [beta * idle, 1.0 + beta * active]
        })
        .collect();
    let v = (0..n).map(|i| j[i] + c * a[i]).collect();
    Ok(DiscountedPolicyEvaluation {
        d_max: params.d_max,
        v,
        j,
        a_time,
    })
}
