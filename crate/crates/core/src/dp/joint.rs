//! Exact average-cost optimum of a small network with a hard channel budget.
//!
//! The joint state is the tuple of per-arm states, flattened in mixed radix
//! with arm 0 fastest. Actions are bitmasks of at most `m` arms. The
//! transition kernel is never stored: each sweep recomputes the product of
//! per-arm successor lists.

use serde::{Deserialize, Serialize};

use super::check_tol;
use crate::error::{Error, Result};
use crate::model::{successors, Action, State, SubMdpParams};

pub const DEFAULT_JOINT_CAP: u128 = 1_000_000;

const DAMPING: f64 = 0.5;
const MAX_SWEEPS: usize = 10_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointSolution {
    pub arms: Vec<SubMdpParams>,
    pub channels: usize,
    /// Optimal long-run average of `Σ_i D_i q_i`.
    pub gain: f64,
    pub bias: Vec<f64>,
    /// Scheduled-arm bitmask per joint state.
    pub policy: Vec<u64>,
    pub iterations: usize,
}

impl JointSolution {
    pub fn encode(&self, states: &[State]) -> usize {
        encode(&self.arms, states)
    }

    pub fn action_mask(&self, states: &[State]) -> u64 {
        self.policy[self.encode(states)]
    }

    /// Optimal average QAoI per arm.
    pub fn esqaoi(&self) -> f64 {
        self.gain / self.arms.len() as f64
    }
}

fn encode(arms: &[SubMdpParams], states: &[State]) -> usize {
    let mut idx = 0;
    let mut stride = 1;
    for (params, s) in arms.iter().zip(states) {
        idx += params.index(*s) * stride;
        stride *= params.num_states();
    }
    idx
}

fn decode(arms: &[SubMdpParams], mut idx: usize, out: &mut [State]) {
    for (params, slot) in arms.iter().zip(out.iter_mut()) {
        let n = params.num_states();
        *slot = params.state(idx % n);
        idx /= n;
    }
}

struct JointSpace<'a> {
    arms: &'a [SubMdpParams],
    strides: Vec<usize>,
    size: usize,
}

impl<'a> JointSpace<'a> {
    fn new(arms: &'a [SubMdpParams], m: usize, cap: u128) -> Result<Self> {
        if arms.is_empty() || arms.len() > 63 {
            return Err(Error::Domain(format!(
                "joint solver needs 1..=63 arms, got {}",
                arms.len()
            )));
        }
        if m == 0 || m > arms.len() {
            return Err(Error::Domain(format!(
                "channel count {m} outside 1..={}",
                arms.len()
            )));
        }
        let mut needed: u128 = 1;
        for params in arms {
            params.validate()?;
            needed = needed.saturating_mul(params.num_states() as u128);
        }
        if needed > cap {
            return Err(Error::Capacity { needed, cap });
        }
        let mut strides = Vec::with_capacity(arms.len());
        let mut stride = 1;
        for params in arms {
            strides.push(stride);
            stride *= params.num_states();
        }
        Ok(Self {
            arms,
            strides,
            size: needed as usize,
        })
    }

    /// `E[w(next)]` from `states` under `mask`.
    fn expect(&self, states: &[State], mask: u64, w: &[f64]) -> f64 {
        let lists: Vec<Vec<(usize, f64)>> = self
            .arms
            .iter()
            .zip(states)
            .enumerate()
            .map(|(i, (params, s))| {
                let a = Action::from_active(mask >> i & 1 == 1);
                successors(params, *s, a)
                    .iter()
                    .map(|(next, prob)| (params.index(next) * self.strides[i], prob))
                    .collect()
            })
            .collect();
        let mut total = 0.0;
        let mut pos = vec![0usize; lists.len()];
        loop {
            let mut idx = 0;
            let mut prob = 1.0;
            for (list, &k) in lists.iter().zip(&pos) {
                idx += list[k].0;
                prob *= list[k].1;
            }
            total += prob * w[idx];
            let mut arm = 0;
            loop {
                if arm == lists.len() {
                    return total;
                }
                pos[arm] += 1;
                if pos[arm] < lists[arm].len() {
                    break;
                }
                pos[arm] = 0;
                arm += 1;
            }
        }
    }
}

fn cost(states: &[State]) -> f64 {
    states
        .iter()
        .map(|s| if s.query { s.age as f64 } else { 0.0 })
        .sum()
}

fn masks(n: usize, m: usize) -> Vec<u64> {
    (0..1u64 << n).filter(|x| x.count_ones() as usize <= m).collect()
}

/// Optimal joint policy by damped relative value iteration, anchored at the
/// all-`(1, 0)` state. Ties keep the earliest mask in increasing order,
/// starting from "schedule nobody".
pub fn solve_joint_mdp(configs: &[SubMdpParams], m: usize, tol: f64) -> Result<JointSolution> {
    solve_joint_mdp_with_cap(configs, m, tol, DEFAULT_JOINT_CAP)
}

pub fn solve_joint_mdp_with_cap(
    configs: &[SubMdpParams],
    m: usize,
    tol: f64,
    cap: u128,
) -> Result<JointSolution> {
    check_tol(tol)?;
    let space = JointSpace::new(configs, m, cap)?;
    let actions = masks(configs.len(), m);
    let mut states = vec![State::new(1, false); configs.len()];
    let mut w = vec![0.0; space.size];
    let mut next = vec![0.0; space.size];
    for sweep in 1..=MAX_SWEEPS {
        for (j, slot) in next.iter_mut().enumerate() {
            decode(configs, j, &mut states);
            let best = actions
                .iter()
                .map(|&mask| space.expect(&states, mask, &w))
                .fold(f64::INFINITY, f64::min);
            *slot = DAMPING * (cost(&states) + best) + (1.0 - DAMPING) * w[j];
        }
        let anchor = next[0];
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for (x, old) in next.iter_mut().zip(&w) {
            *x -= anchor;
            lo = lo.min(*x - old);
            hi = hi.max(*x - old);
        }
        std::mem::swap(&mut w, &mut next);
        if hi - lo < tol {
            let policy = (0..space.size)
                .map(|j| {
                    decode(configs, j, &mut states);
                    let mut best = (f64::INFINITY, 0);
                    for &mask in &actions {
                        let v = space.expect(&states, mask, &w);
                        if v < best.0 {
                            best = (v, mask);
                        }
                    }
                    best.1
                })
                .collect();
            return Ok(JointSolution {
                arms: configs.to_vec(),
                channels: m,
                gain: anchor / DAMPING,
                bias: w,
                policy,
                iterations: sweep,
            });
        }
    }
    Err(Error::numerical(
        "joint relative value iteration",
        format!("no convergence in {MAX_SWEEPS} sweeps"),
    ))
}

/// Exact long-run average of `Σ_i D_i q_i` under a stationary scheduling
/// rule given as a bitmask per joint state.
pub fn joint_policy_evaluation(
    configs: &[SubMdpParams],
    m: usize,
    rule: impl Fn(&[State]) -> u64,
    tol: f64,
) -> Result<f64> {
    check_tol(tol)?;
    let space = JointSpace::new(configs, m, DEFAULT_JOINT_CAP)?;
    let mut states = vec![State::new(1, false); configs.len()];
    let mut chosen = Vec::with_capacity(space.size);
    for j in 0..space.size {
        decode(configs, j, &mut states);
        let mask = rule(&states);
        if mask.count_ones() as usize > m {
            return Err(Error::Contract(format!(
                "rule schedules {} arms with budget {m}",
                mask.count_ones()
            )));
        }
        chosen.push(mask);
    }
    let mut w = vec![0.0; space.size];
    let mut next = vec![0.0; space.size];
    for _ in 0..MAX_SWEEPS {
        for (j, slot) in next.iter_mut().enumerate() {
            decode(configs, j, &mut states);
            let e = space.expect(&states, chosen[j], &w);
            *slot = DAMPING * (cost(&states) + e) + (1.0 - DAMPING) * w[j];
        }
        let anchor = next[0];
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for (x, old) in next.iter_mut().zip(&w) {
            *x -= anchor;
            lo = lo.min(*x - old);
            hi = hi.max(*x - old);
        }
        std::mem::swap(&mut w, &mut next);
        if hi - lo < tol {
            return Ok(anchor / DAMPING);
        }
    }
    Err(Error::numerical(
        "joint policy evaluation",
        format!("no convergence in {MAX_SWEEPS} sweeps"),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dp::relative_value_iteration;

    #[test]
    fn single_arm_network_matches_free_scheduling() {
        let arm = SubMdpParams::new(0.4, 0.3, 0.7, 8).unwrap();
        let joint = solve_joint_mdp(&[arm], 1, 1e-10).unwrap();
        let single = relative_value_iteration(&arm, 0.0, 1e-10).unwrap();
        assert!((joint.gain - single.gain).abs() < 1e-7);
    }

    #[test]
    fn symmetric_arms_get_symmetric_policy() {
        let arm = SubMdpParams::new(0.4, 0.3, 0.8, 5).unwrap();
        let arms = [arm, arm];
        let joint = solve_joint_mdp(&arms, 1, 1e-11).unwrap();
        let space = JointSpace::new(&arms, 1, DEFAULT_JOINT_CAP).unwrap();
        let swap = |mask: u64| (mask & 1) << 1 | (mask >> 1 & 1);
        for a in arm.states() {
            for b in arm.states() {
                let gap = joint.bias[joint.encode(&[a, b])] - joint.bias[joint.encode(&[b, a])];
                assert!(gap.abs() < 1e-7);
                let ab = joint.action_mask(&[a, b]);
                let ba = joint.action_mask(&[b, a]);
                if swap(ab) != ba {
                    // Only an exact tie may break the mirror image.
                    let q = |m| space.expect(&[b, a], m, &joint.bias);
                    assert!((q(ba) - q(swap(ab))).abs() < 1e-7);
                }
            }
        }
    }

    #[test]
    fn capacity_is_enforced() {
        let arm = SubMdpParams::new(0.4, 0.3, 0.8, 50).unwrap();
        assert!(matches!(
            solve_joint_mdp(&[arm; 4], 1, 1e-8),
            Err(Error::Capacity { .. })
        ));
    }
}
