//! Stationary behaviour of one arm under a threshold policy: the stationary
//! distribution, the average QAoI `J`, the scheduling rate `A`, and the
//! cost ratio `ζ` used to step between neighbouring threshold policies.
//!
//! For `p < 1` the stationary vector at age `D` is a fixed matrix times the
//! age-1 vector, so the whole distribution follows from a 2×2 linear system
//! (normalisation plus the age-1 balance). For `p = 1` the same system is
//! solved in closed form.

mod bias;
mod blocks;
mod error_free;
mod mat2;
mod oracle;
mod renewal;

pub use bias::{policy_bias, PolicyBias, RelativeValues};
pub use renewal::{error_free_bias, ErrorFreeBias};
pub use blocks::{build_blocks, power_p1, power_p2, power_p3, query_matrix, BlockMatrices, TerminalCase};
pub use mat2::Mat2;
pub use oracle::stationary_oracle;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{State, StateDistribution, SubMdpParams, ThresholdPolicy};
use mat2::solve2;

const NEGATIVE_TOL: f64 = 1e-14;

/// Relative values of a scheduling threshold policy: excursion sums at
/// `p = 1`, a backward sweep otherwise.
pub fn relative_values(params: &SubMdpParams, policy: &ThresholdPolicy) -> Result<Box<dyn RelativeValues>> {
    if params.p == 1.0 {
        Ok(Box::new(error_free_bias(params, policy)?))
    } else {
        Ok(Box::new(policy_bias(params, policy)?))
    }
}

/// Long-run behaviour of a threshold policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyAverages {
    /// Average QAoI, `Σ D·μ(D, 1)`.
    pub j: f64,
    /// Average scheduling rate.
    pub a: f64,
    pub mu: StateDistribution,
}

/// `J` and `A` read off a stationary table.
pub(crate) fn averages_from_distribution(
    policy: &ThresholdPolicy,
    mu: StateDistribution,
) -> PolicyAverages {
    let mut j = 0.0;
    let mut a = 0.0;
    for (s, m) in mu.support() {
        if s.query {
            j += s.age as f64 * m;
        }
        if s.age >= policy.threshold(s.query) {
            a += m;
        }
    }
    PolicyAverages {
        j,
        a: a.min(1.0),
        mu,
    }
}

/// Stationary distribution, `J` and `A` of `policy`.
pub fn stationary_distribution(
    params: &SubMdpParams,
    policy: &ThresholdPolicy,
) -> Result<PolicyAverages> {
    params.validate()?;
    let policy = ThresholdPolicy::new(policy.h0, policy.h1, params.d_max)?;
    if policy.is_never(params.d_max) {
        let closed = error_free::solve(params, &policy)?;
        let mu = error_free::distribution(params, &policy, &closed);
        return Ok(PolicyAverages {
            j: closed.j,
            a: 0.0,
            mu,
        });
    }
    if params.p == 1.0 {
        let closed = error_free::solve(params, &policy)?;
        let mu = error_free::distribution(params, &policy, &closed);
        check_and_clamp(mu, "error-free").map(|mu| PolicyAverages {
            j: closed.j,
            a: closed.a,
            mu,
        })
    } else {
        let blocks = build_blocks(params, &policy)?;
        let mu = propagate(&blocks)?;
        Ok(averages_from_distribution(&policy, mu))
    }
}

/// `(J, A)` only. At `p = 1` this skips building the table.
pub fn policy_averages(params: &SubMdpParams, policy: &ThresholdPolicy) -> Result<(f64, f64)> {
    if params.p == 1.0 || policy.is_never(params.d_max) {
        params.validate()?;
        let policy = ThresholdPolicy::new(policy.h0, policy.h1, params.d_max)?;
        let closed = error_free::solve(params, &policy)?;
        return Ok((closed.j, closed.a));
    }
    let avg = stationary_distribution(params, policy)?;
    Ok((avg.j, avg.a))
}

/// `(J(π1) − J(π2)) / (A(π2) − A(π1))`.
pub fn zeta(params: &SubMdpParams, pi1: &ThresholdPolicy, pi2: &ThresholdPolicy) -> Result<f64> {
    let (j1, a1) = policy_averages(params, pi1)?;
    let (j2, a2) = policy_averages(params, pi2)?;
    if a1 == a2 {
        return Err(Error::UndefinedRatio { active_time: a1 });
    }
    Ok((j1 - j2) / (a2 - a1))
}

// ── Generic path (p < 1) ─────────────────────────────────────────────────

/// Writes `μ_D = M_D μ_1` for every age, solves for `μ_1` and expands.
fn propagate(blocks: &BlockMatrices) -> Result<StateDistribution> {
    let params = &blocks.params;
    let policy = &blocks.policy;
    let d_max = params.d_max;
    let (h, h_hat) = (policy.lower(), policy.upper());
    let p4 = blocks
        .p4
        .ok_or_else(|| Error::numerical(blocks.case.tag(), "no closing block"))?;

    let mut maps = Vec::with_capacity(d_max);
    maps.push(Mat2::IDENTITY);
    for age in 2..d_max {
        let block = if age <= h {
            blocks.p1
        } else if age <= h_hat {
            blocks.p2
        } else {
            blocks.p3
        };
        let prev = maps[age - 2];
        maps.push(block * prev);
    }
    let prev = maps[d_max - 2];
    maps.push(p4 * prev);

    // Linear forms in μ_1: total mass and scheduled mass per query branch.
    let mut norm = [0.0; 2];
    let mut active = [[0.0; 2]; 2];
    for (i, m) in maps.iter().enumerate() {
        let age = i + 1;
        let cols = m.col_sums();
        norm[0] += cols[0];
        norm[1] += cols[1];
        for q in 0..2 {
            if age >= policy.threshold(q == 1) {
                let row = m.row(q);
                active[q][0] += row[0];
                active[q][1] += row[1];
            }
        }
    }
    let (l, g, p) = (params.lambda, params.gamma, params.p);
    let balance_idle = [
        1.0 - p * ((1.0 - l) * active[0][0] + g * active[1][0]),
        -p * ((1.0 - l) * active[0][1] + g * active[1][1]),
    ];
    let balance_query = [
        -p * (l * active[0][0] + (1.0 - g) * active[1][0]),
        1.0 - p * (l * active[0][1] + (1.0 - g) * active[1][1]),
    ];
    // Either balance row closes the system; use the better conditioned one.
    let det = |row: [f64; 2]| (norm[0] * row[1] - norm[1] * row[0]).abs();
    let balance = if det(balance_idle) >= det(balance_query) {
        balance_idle
    } else {
        balance_query
    };
    let mu1 = solve2([norm, balance], [1.0, 0.0])
        .ok_or_else(|| Error::numerical(blocks.case.tag(), "age-1 system is singular"))?;

    let mut mu = StateDistribution::zeros(d_max);
    for (i, m) in maps.iter().enumerate() {
        let v = m.apply(mu1);
        *mu.get_mut(State::new(i + 1, false)) = v[0];
        *mu.get_mut(State::new(i + 1, true)) = v[1];
    }
    check_and_clamp(mu, blocks.case.tag())
}

fn check_and_clamp(mut mu: StateDistribution, case: &str) -> Result<StateDistribution> {
    for (i, m) in mu.prob.iter_mut().enumerate() {
        if *m < -NEGATIVE_TOL {
            return Err(Error::numerical(
                case,
                format!("negative stationary mass {m:e} at flat index {i}"),
            ));
        }
        if *m < 0.0 {
            *m = 0.0;
        }
    }
    Ok(mu)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn never_policy_closed_form() {
        let params = SubMdpParams::new(0.5, 0.5, 0.7, 10).unwrap();
        let avg = stationary_distribution(&params, &ThresholdPolicy::never(10)).unwrap();
        assert!(close(avg.j, 5.0, 1e-12));
        assert_eq!(avg.a, 0.0);
        assert!(close(avg.mu.total(), 1.0, 1e-12));
    }

    #[test]
    fn always_policy_error_free() {
        let params = SubMdpParams::new(0.4, 0.3, 1.0, 10).unwrap();
        let avg = stationary_distribution(&params, &ThresholdPolicy::always()).unwrap();
        assert!(close(avg.mu.get(State::new(1, false)), 3.0 / 7.0, 1e-14));
        assert!(close(avg.mu.get(State::new(1, true)), 4.0 / 7.0, 1e-14));
        assert!(close(avg.j, 4.0 / 7.0, 1e-14));
        assert!(close(avg.a, 1.0, 1e-14));
    }

    #[test]
    fn matches_oracle_on_reference_policy() {
        let params = SubMdpParams::new(0.4, 0.3, 0.7, 30).unwrap();
        let policy = ThresholdPolicy::new(5, 3, 30).unwrap();
        let fast = stationary_distribution(&params, &policy).unwrap();
        let slow = stationary_oracle(&params, &policy).unwrap();
        for (x, y) in fast.mu.prob.iter().zip(&slow.mu.prob) {
            assert!(close(*x, *y, 1e-9), "{x} vs {y}");
        }
        assert!(close(fast.j, slow.j, 1e-9));
        assert!(close(fast.a, slow.a, 1e-9));
    }

    #[test]
    fn zeta_between_never_and_always() {
        let params = SubMdpParams::new(0.4, 0.6, 1.0, 10).unwrap();
        let never = ThresholdPolicy::never(10);
        let always = ThresholdPolicy::always();
        assert!(close(zeta(&params, &never, &always).unwrap(), 3.6, 1e-12));
        assert!(close(zeta(&params, &always, &never).unwrap(), 3.6, 1e-12));
        assert!(matches!(
            zeta(&params, &always, &always),
            Err(Error::UndefinedRatio { .. })
        ));
    }
}
