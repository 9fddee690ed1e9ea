//! Dynamic-programming ground truth for one arm with a per-schedule cost
//! `C`: discounted value iteration, average-cost relative value iteration,
//! brute-force index search by bisection on `C`, and an exact solver for
//! tiny multi-arm instances.
//!
//! Every solver breaks exact action ties toward idling.

mod average;
mod bisect;
mod discounted;
mod joint;

pub use average::{cost_sweep, relative_value_iteration, relative_value_iteration_from, RviOptions};
pub use bisect::{discounted_index_table, oracle_whittle_index, oracle_whittle_table, OracleOptions};
pub use discounted::{discounted_policy_evaluation, discounted_value_iteration, discounted_value_iteration_from};
pub use joint::{joint_policy_evaluation, solve_joint_mdp, JointSolution, DEFAULT_JOINT_CAP};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Action, State, SubMdpParams, ThresholdPolicy};

/// Converged discounted values with their greedy policy, indexed by flat
/// state index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueTable {
    pub d_max: usize,
    pub value: Vec<f64>,
    pub policy: Vec<Action>,
    pub iterations: usize,
}

impl ValueTable {
    pub fn value(&self, s: State) -> f64 {
        self.value[s.q() * self.d_max + s.age - 1]
    }

    pub fn action(&self, s: State) -> Action {
        self.policy[s.q() * self.d_max + s.age - 1]
    }

    pub fn thresholds(&self) -> Result<ThresholdPolicy> {
        extract_thresholds(&self.policy, self.d_max)
    }
}

/// Gain, bias (zero at `(1, 0)`) and greedy policy of the average-cost
/// problem, indexed by flat state index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AverageRewardSolution {
    pub d_max: usize,
    pub gain: f64,
    pub bias: Vec<f64>,
    pub policy: Vec<Action>,
    pub iterations: usize,
}

impl AverageRewardSolution {
    pub fn bias(&self, s: State) -> f64 {
        self.bias[s.q() * self.d_max + s.age - 1]
    }

    pub fn action(&self, s: State) -> Action {
        self.policy[s.q() * self.d_max + s.age - 1]
    }

    pub fn thresholds(&self) -> Result<ThresholdPolicy> {
        extract_thresholds(&self.policy, self.d_max)
    }

    /// States idled by the policy.
    pub fn passive_set(&self) -> Vec<State> {
        self.policy
            .iter()
            .enumerate()
            .filter(|(_, a)| !a.is_active())
            .map(|(i, _)| State::new(i % self.d_max + 1, i >= self.d_max))
            .collect()
    }
}

/// Values `J`, `A` and the action-anchored active times of a fixed threshold
/// policy under discounting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscountedPolicyEvaluation {
    pub d_max: usize,
    /// `j + C·A`.
    pub v: Vec<f64>,
    /// Discounted QAoI.
    pub j: Vec<f64>,
    /// `a_time[s][a]`: discounted active time when `a` is taken first and the
    /// policy afterwards.
    pub a_time: Vec<[f64; 2]>,
}

impl DiscountedPolicyEvaluation {
    pub fn active_time(&self, s: State, a: Action) -> f64 {
        self.a_time[s.q() * self.d_max + s.age - 1][a.is_active() as usize]
    }
}

/// Reads per-branch thresholds off a state-indexed policy.
pub fn extract_thresholds(policy: &[Action], d_max: usize) -> Result<ThresholdPolicy> {
    if policy.len() != 2 * d_max {
        return Err(Error::Domain(format!(
            "policy covers {} states, expected {}",
            policy.len(),
            2 * d_max
        )));
    }
    let mut thresholds = [d_max + 1; 2];
    for (q, threshold) in thresholds.iter_mut().enumerate() {
        let row = &policy[q * d_max..(q + 1) * d_max];
        if let Some(first) = row.iter().position(|a| a.is_active()) {
            if let Some(gap) = row[first..].iter().position(|a| !a.is_active()) {
                return Err(Error::Structural(format!(
                    "policy is not threshold-type: idles at {} after scheduling at {}",
                    State::new(first + gap + 1, q == 1),
                    State::new(first + 1, q == 1)
                )));
            }
            *threshold = first + 1;
        }
    }
    ThresholdPolicy::new(thresholds[0], thresholds[1], d_max)
}

// ── Shared one-step expectations ─────────────────────────────────────────

/// `(E[w(next) | idle], E[w(next) | schedule])` from flat state `i`.
#[inline]
pub(crate) fn expectations(params: &SubMdpParams, w: &[f64], i: usize) -> (f64, f64) {
    let d_max = params.d_max;
    let q = i >= d_max;
    let age = i % d_max + 1;
    let grown = params.next_age(age) - 1;
    let p0 = params.query_prob(q, false);
    let p1 = params.query_prob(q, true);
    let idle = p0 * w[grown] + p1 * w[d_max + grown];
    let reset = p0 * w[0] + p1 * w[d_max];
    (idle, params.p * reset + (1.0 - params.p) * idle)
}

#[inline]
pub(crate) fn qaoi_cost(params: &SubMdpParams, i: usize) -> f64 {
    if i >= params.d_max {
        (i - params.d_max + 1) as f64
    } else {
        0.0
    }
}

pub(crate) fn check_tol(tol: f64) -> Result<()> {
    if tol > 0.0 && tol.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("tolerance must be positive, got {tol}")))
    }
}
