use super::{check_tol, expectations, qaoi_cost, AverageRewardSolution};
use crate::error::{Error, Result};
use crate::model::{Action, SubMdpParams};

/// Knobs of relative value iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RviOptions {
    /// Stop once the span of successive bias differences drops below this.
    pub tol: f64,
    /// Weight of the Bellman update against the previous iterate. Values
    /// below 1 make every chain aperiodic without changing gain, bias or
    /// policy; `p = 1` threshold chains are periodic otherwise.
    pub damping: f64,
    pub max_sweeps: usize,
}

impl Default for RviOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            damping: 0.5,
            max_sweeps: 20_000_000,
        }
    }
}

/// Relative value iteration anchored at `(1, 0)`.
pub fn relative_value_iteration(
    params: &SubMdpParams,
    c: f64,
    tol: f64,
) -> Result<AverageRewardSolution> {
    let opts = RviOptions {
        tol,
        ..RviOptions::default()
    };
    relative_value_iteration_from(params, c, &opts, None)
}

/// As [`relative_value_iteration`], optionally warm-started from a bias.
pub fn relative_value_iteration_from(
    params: &SubMdpParams,
    c: f64,
    opts: &RviOptions,
    init: Option<&[f64]>,
) -> Result<AverageRewardSolution> {
    params.validate()?;
    check_tol(opts.tol)?;
    let tau = opts.damping;
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::Domain(format!("damping must lie in (0, 1], got {tau}")));
    }
    let n = params.num_states();
    let mut w = match init {
        Some(h) if h.len() == n => h.to_vec(),
        _ => vec![0.0; n],
    };
    let mut next = vec![0.0; n];
    for sweep in 1..=opts.max_sweeps {
        for (i, slot) in next.iter_mut().enumerate() {
            let (idle, active) = expectations(params, &w, i);
            let best = qaoi_cost(params, i) + idle.min(c + active);
            *slot = tau * best + (1.0 - tau) * w[i];
        }
        let anchor = next[0];
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for (x, old) in next.iter_mut().zip(&w) {
            *x -= anchor;
            let d = *x - old;
            lo = lo.min(d);
            hi = hi.max(d);
        }
        std::mem::swap(&mut w, &mut next);
        if hi - lo < opts.tol {
            let policy: Vec<Action> = (0..n)
                .map(|i| {
                    let (idle, active) = expectations(params, &w, i);
                    Action::from_active(c + active < idle)
                })
                .collect();
            return Ok(AverageRewardSolution {
                d_max: params.d_max,
                gain: anchor / tau,
                bias: w,
                policy,
                iterations: sweep,
            });
        }
    }
    Err(Error::numerical(
        "relative value iteration",
        format!("no convergence in {} sweeps", opts.max_sweeps),
    ))
}

/// Optimal policy at each cost of `costs`, each solve warm-started from the
/// previous bias.
pub fn cost_sweep(params: &SubMdpParams, costs: &[f64], tol: f64) -> Result<Vec<AverageRewardSolution>> {
    let opts = RviOptions {
        tol,
        ..RviOptions::default()
    };
    let mut out: Vec<AverageRewardSolution> = Vec::with_capacity(costs.len());
    for &c in costs {
        let warm = out.last().map(|s| s.bias.as_slice());
        out.push(relative_value_iteration_from(params, c, &opts, warm)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ThresholdPolicy;
    use crate::steady_state::stationary_distribution;

    #[test]
    fn free_scheduling_matches_always_policy() {
        let params = SubMdpParams::new(0.4, 0.3, 0.7, 20).unwrap();
        let sol = relative_value_iteration(&params, 0.0, 1e-10).unwrap();
        assert!(sol.policy.iter().all(|a| a.is_active()));
        let avg = stationary_distribution(&params, &ThresholdPolicy::always()).unwrap();
        assert!((sol.gain - avg.j).abs() < 1e-8);
        assert_eq!(sol.bias[0], 0.0);
    }

    #[test]
    fn prohibitive_cost_gives_never_schedule_gain() {
        let params = SubMdpParams::new(0.5, 0.5, 0.7, 10).unwrap();
        let sol = relative_value_iteration(&params, 1e9, 1e-10).unwrap();
        assert!((sol.gain - 5.0).abs() < 1e-8);
    }

    #[test]
    fn bellman_residual_is_small() {
        let params = SubMdpParams::new(0.3, 0.6, 1.0, 15).unwrap();
        let c = 4.0;
        let sol = relative_value_iteration(&params, c, 1e-11).unwrap();
        for i in 0..params.num_states() {
            let (idle, active) = expectations(&params, &sol.bias, i);
            let rhs = qaoi_cost(&params, i) + idle.min(c + active);
            assert!((sol.gain + sol.bias[i] - rhs).abs() < 1e-8);
        }
    }
}
