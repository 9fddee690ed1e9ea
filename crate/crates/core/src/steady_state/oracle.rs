//! Brute-force stationary distribution of the explicit one-step kernel.

use super::{averages_from_distribution, PolicyAverages};
use crate::error::{Error, Result};
use crate::model::{policy_action, successors, StateDistribution, SubMdpParams, ThresholdPolicy};

const TOL: f64 = 1e-13;
const MAX_ITERS: usize = 1_000_000;

/// Power iteration on the lazy chain `(I + K) / 2`, which shares the
/// stationary law of `K` but cannot be periodic (`p = 1` chains often are).
pub fn stationary_oracle(params: &SubMdpParams, policy: &ThresholdPolicy) -> Result<PolicyAverages> {
    params.validate()?;
    let n = params.num_states();
    let kernel: Vec<Vec<(usize, f64)>> = params
        .states()
        .map(|s| {
            successors(params, s, policy_action(policy, s))
                .iter()
                .map(|(next, prob)| (params.index(next), prob))
                .collect()
        })
        .collect();

    let mut mu = vec![1.0 / n as f64; n];
    let mut next = vec![0.0; n];
    for _ in 0..MAX_ITERS {
        next.iter_mut().zip(&mu).for_each(|(nx, m)| *nx = 0.5 * m);
        for (from, row) in kernel.iter().enumerate() {
            let mass = 0.5 * mu[from];
            for &(to, prob) in row {
                next[to] += mass * prob;
            }
        }
        let total: f64 = next.iter().sum();
        next.iter_mut().for_each(|x| *x /= total);
        let change: f64 = next.iter().zip(&mu).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut mu, &mut next);
        if change < TOL {
            let dist = StateDistribution {
                d_max: params.d_max,
                prob: mu,
            };
            return Ok(averages_from_distribution(policy, dist));
        }
    }
    Err(Error::numerical(
        "oracle",
        format!("power iteration did not converge in {MAX_ITERS} sweeps"),
    ))
}
