//! Closed forms for `p = 1`, where a scheduled node always resets.
//!
//! Ages beyond `Ĥ` carry no mass, ages up to `H` follow the free query chain,
//! and on `H < D ≤ Ĥ` only the lagging query branch survives. Every sum that
//! enters `J` and `A` is a geometric or arithmetico-geometric series, so one
//! policy costs `O(log d_max)`.

use super::blocks::{lagging_query, power_p1, powu, TerminalCase};
use super::mat2::solve2;
use crate::error::{Error, Result};
use crate::model::{State, StateDistribution, SubMdpParams, ThresholdPolicy};

#[derive(Debug, Clone, Copy)]
pub(crate) struct ClosedForm {
    pub mu1: [f64; 2],
    pub j: f64,
    pub a: f64,
}

/// Shape parameters shared by the averages and the full reconstruction.
struct Shape {
    h: usize,
    lag: usize,
    r: f64,
    t: f64,
    case: TerminalCase,
}

fn shape(params: &SubMdpParams, policy: &ThresholdPolicy) -> Shape {
    let lag = lagging_query(policy).unwrap_or(false);
    let r = params.query_prob(lag, lag);
    Shape {
        h: policy.lower(),
        lag: lag as usize,
        r,
        t: 1.0 - r,
        case: TerminalCase::classify(policy, params.d_max),
    }
}

/// `Σ_{k=1}^{n} k x^{k-1}`.
pub(crate) fn arith_geo(x: f64, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    if (1.0 - x).abs() < 1e-3 {
        let mut acc = 0.0;
        let mut pow = 1.0;
        for k in 1..=n {
            acc += k as f64 * pow;
            pow *= x;
        }
        return acc;
    }
    let nf = n as f64;
    let xn = powu(x, n);
    (1.0 - (nf + 1.0) * xn + nf * xn * x) / ((1.0 - x) * (1.0 - x))
}

pub(crate) fn solve(params: &SubMdpParams, policy: &ThresholdPolicy) -> Result<ClosedForm> {
    let d_max = params.d_max;
    let (l, g) = (params.lambda, params.gamma);
    if policy.is_never(d_max) {
        return Ok(ClosedForm {
            mu1: [0.0, 0.0],
            j: d_max as f64 * l / (l + g),
            a: 0.0,
        });
    }
    let sh = shape(params, policy);
    let Shape { h, lag, r, t, case } = sh;
    let hf = h as f64;

    // x = μ_{H,lag} as a linear form in μ_1.
    let x_form = power_p1(params, h - 1).row(lag);
    let (rho, span) = match case {
        TerminalCase::LowerOnly | TerminalCase::LowerAtCap => (0.0, 1.0 / t),
        _ => {
            let rho = powu(r, policy.upper() - h);
            (rho, (1.0 - rho) / t)
        }
    };
    let norm = [hf + span * x_form[0], hf + span * x_form[1]];
    // Active mass on the lagging branch is rho·x; the rest of the mass at
    // age H schedules on the other branch before reaching Ĥ.
    let mut active = [[0.0; 2]; 2];
    active[lag] = [rho * x_form[0], rho * x_form[1]];
    active[1 - lag] = [1.0 - rho * x_form[0], 1.0 - rho * x_form[1]];
    let balance = [
        1.0 - (1.0 - l) * active[0][0] - g * active[1][0],
        -(1.0 - l) * active[0][1] - g * active[1][1],
    ];
    let mu1 = solve2([norm, balance], [1.0, 0.0])
        .ok_or_else(|| Error::numerical(case.tag(), "error-free system is singular"))?;

    let s = mu1[0] + mu1[1];
    let x = x_form[0] * mu1[0] + x_form[1] * mu1[1];
    let sum = l + g;
    let e = 1.0 - sum;
    let delta = g * mu1[1] - l * mu1[0];
    // Σ_{D=1}^{k} D·μ_{D,1} over the free-chain prefix.
    let prefix = |k: usize| {
        let kf = k as f64;
        (l * s * kf * (kf + 1.0) / 2.0 + delta * arith_geo(e, k)) / sum
    };
    // Σ_{k=1}^{n} (H+k)·r^{k-1}.
    let band = |n: usize| hf * (1.0 - powu(r, n)) / t + arith_geo(r, n);
    let lag_is_query = lag == 1;
    let band_weight = if lag_is_query { r * x } else { t * x };

    let j = match case {
        TerminalCase::LowerOnly => {
            let n = d_max - 1 - h;
            let z = powu(r, n) * x;
            let top = if lag_is_query { r * z / t } else { z };
            prefix(h) + band_weight * band(n) + d_max as f64 * top
        }
        TerminalCase::LowerAtCap => {
            let top = if lag_is_query { x / t } else { s };
            prefix(d_max - 1) + d_max as f64 * top
        }
        _ => prefix(h) + band_weight * band(policy.upper() - h),
    };
    Ok(ClosedForm { mu1, j, a: s })
}

/// Full stationary table from a solved closed form.
pub(crate) fn distribution(
    params: &SubMdpParams,
    policy: &ThresholdPolicy,
    closed: &ClosedForm,
) -> StateDistribution {
    let d_max = params.d_max;
    let mut mu = StateDistribution::zeros(d_max);
    let mut put = |age: usize, v: [f64; 2]| {
        *mu.get_mut(State::new(age, false)) = v[0];
        *mu.get_mut(State::new(age, true)) = v[1];
    };
    if policy.is_never(d_max) {
        let (l, g) = (params.lambda, params.gamma);
        put(d_max, [g / (l + g), l / (l + g)]);
        return mu;
    }
    let Shape { h, lag, r, t, case } = shape(params, policy);
    let p1 = super::blocks::query_matrix(params);

    let free_top = if case == TerminalCase::LowerAtCap { d_max - 1 } else { h };
    let mut cur = closed.mu1;
    put(1, cur);
    for age in 2..=free_top {
        cur = p1.apply(cur);
        put(age, cur);
    }
    let band_value = |x: f64, k: usize| {
        let mut v = [0.0; 2];
        v[lag] = powu(r, k) * x;
        v[1 - lag] = t * powu(r, k - 1) * x;
        v
    };
    match case {
        TerminalCase::LowerAtCap => {
            let y = p1.apply(cur);
            let mut v = [0.0; 2];
            v[lag] = y[lag] / t;
            v[1 - lag] = y[0] + y[1];
            put(d_max, v);
        }
        TerminalCase::LowerOnly => {
            let x = cur[lag];
            let n = d_max - 1 - h;
            for k in 1..=n {
                put(h + k, band_value(x, k));
            }
            let z = powu(r, n) * x;
            let mut v = [0.0; 2];
            v[lag] = r * z / t;
            v[1 - lag] = z;
            put(d_max, v);
        }
        _ => {
            let x = cur[lag];
            for k in 1..=(policy.upper() - h) {
                put(h + k, band_value(x, k));
            }
        }
    }
    mu
}
