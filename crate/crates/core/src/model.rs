//! Single-arm model: the age/query state of one node, its transition kernel
//! and the per-slot cost of the decoupled sub-problem.
//!
//! A node's age `D` lives in `1..=d_max` and is clamped at `d_max`. Its query
//! flag follows a two-state Markov chain with `P(0→1) = lambda` and
//! `P(1→0) = gamma`. Scheduling the node resets the age to 1 with probability
//! `p`; otherwise the age grows by one. The age and query components evolve
//! independently.
//!
//! States are flattened as `q * d_max + (age - 1)`, so all solvers share a
//! single indexing of the `2 * d_max` states.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parameters of one arm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubMdpParams {
    /// Probability of a query arriving after a query-free slot.
    pub lambda: f64,
    /// Probability of the query state switching off after a query slot.
    pub gamma: f64,
    /// Per-transmission success probability.
    pub p: f64,
    /// Age truncation.
    pub d_max: usize,
}

impl SubMdpParams {
    pub fn new(lambda: f64, gamma: f64, p: f64, d_max: usize) -> Result<Self> {
        let params = Self {
            lambda,
            gamma,
            p,
            d_max,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        let open_unit = |x: f64| x > 0.0 && x < 1.0;
        if !open_unit(self.lambda) {
            return Err(Error::Domain(format!(
                "lambda must lie in (0, 1), got {}",
                self.lambda
            )));
        }
        if !open_unit(self.gamma) {
            return Err(Error::Domain(format!(
                "gamma must lie in (0, 1), got {}",
                self.gamma
            )));
        }
        if !(self.p > 0.0 && self.p <= 1.0) {
            return Err(Error::Domain(format!(
                "p must lie in (0, 1], got {}",
                self.p
            )));
        }
        if self.d_max < 2 {
            return Err(Error::Domain(format!(
                "d_max must be at least 2, got {}",
                self.d_max
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn num_states(&self) -> usize {
        2 * self.d_max
    }

    /// Flat index of a state; assumes the state is valid.
    #[inline]
    pub fn index(&self, s: State) -> usize {
        s.query as usize * self.d_max + (s.age - 1)
    }

    #[inline]
    pub fn state(&self, index: usize) -> State {
        State {
            age: index % self.d_max + 1,
            query: index >= self.d_max,
        }
    }

    /// All states in flat-index order.
    pub fn states(&self) -> impl Iterator<Item = State> + '_ {
        (0..self.num_states()).map(move |i| self.state(i))
    }

    pub fn check_state(&self, s: State) -> Result<()> {
        if s.age == 0 || s.age > self.d_max {
            return Err(Error::InvalidState {
                state: s,
                d_max: self.d_max,
            });
        }
        Ok(())
    }

    /// `min(age + 1, d_max)`.
    #[inline]
    pub fn next_age(&self, age: usize) -> usize {
        (age + 1).min(self.d_max)
    }

    /// Row-stochastic query transition probability `P(q → q')`.
    #[inline]
    pub fn query_prob(&self, from: bool, to: bool) -> f64 {
        match (from, to) {
            (false, false) => 1.0 - self.lambda,
            (false, true) => self.lambda,
            (true, false) => self.gamma,
            (true, true) => 1.0 - self.gamma,
        }
    }

    /// Long-run fraction of slots carrying a query, `lambda / (lambda + gamma)`.
    pub fn query_duty_cycle(&self) -> f64 {
        self.lambda / (self.lambda + self.gamma)
    }

    pub fn never_schedule(&self) -> ThresholdPolicy {
        ThresholdPolicy::never(self.d_max)
    }

    /// `true` when `lambda + gamma = 1`, i.e. queries are i.i.d. across slots.
    pub fn memoryless_queries(&self) -> bool {
        (self.lambda + self.gamma - 1.0).abs() < 1e-12
    }
}

/// Age and query flag of one arm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct State {
    pub age: usize,
    pub query: bool,
}

impl State {
    pub fn new(age: usize, query: bool) -> Self {
        Self { age, query }
    }

    #[inline]
    pub fn q(&self) -> usize {
        self.query as usize
    }
}

impl fmt::Display for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "<{},{}>", self.age, self.q())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    Idle,
    Schedule,
}

impl Action {
    #[inline]
    pub fn is_active(self) -> bool {
        matches!(self, Action::Schedule)
    }

    #[inline]
    pub fn from_active(active: bool) -> Self {
        if active {
            Action::Schedule
        } else {
            Action::Idle
        }
    }
}

/// `π(h0; h1)`: schedule iff the age reaches the threshold of the current
/// query flag. A threshold of `d_max + 1` never schedules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ThresholdPolicy {
    pub h0: usize,
    pub h1: usize,
}

impl ThresholdPolicy {
    pub fn new(h0: usize, h1: usize, d_max: usize) -> Result<Self> {
        for (name, h) in [("h0", h0), ("h1", h1)] {
            if h == 0 || h > d_max + 1 {
                return Err(Error::Domain(format!(
                    "{name} = {h} outside [1, {}]",
                    d_max + 1
                )));
            }
        }
        Ok(Self { h0, h1 })
    }

    pub fn always() -> Self {
        Self { h0: 1, h1: 1 }
    }

    pub fn never(d_max: usize) -> Self {
        Self {
            h0: d_max + 1,
            h1: d_max + 1,
        }
    }

    #[inline]
    pub fn threshold(&self, query: bool) -> usize {
        if query {
            self.h1
        } else {
            self.h0
        }
    }

    #[inline]
    pub fn with_threshold(&self, query: bool, h: usize) -> Self {
        if query {
            Self { h0: self.h0, h1: h }
        } else {
            Self { h0: h, h1: self.h1 }
        }
    }

    /// `min(h0, h1)`.
    pub fn lower(&self) -> usize {
        self.h0.min(self.h1)
    }

    /// `max(h0, h1)`.
    pub fn upper(&self) -> usize {
        self.h0.max(self.h1)
    }

    pub fn is_never(&self, d_max: usize) -> bool {
        self.h0 > d_max && self.h1 > d_max
    }

    #[inline]
    pub fn action(&self, s: State) -> Action {
        policy_action(self, s)
    }
}

impl fmt::Display for ThresholdPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "π({};{})", self.h0, self.h1)
    }
}

/// A probability table over the `2 * d_max` states of one arm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateDistribution {
    pub d_max: usize,
    pub prob: Vec<f64>,
}

impl StateDistribution {
    pub fn zeros(d_max: usize) -> Self {
        Self {
            d_max,
            prob: vec![0.0; 2 * d_max],
        }
    }

    #[inline]
    pub fn get(&self, s: State) -> f64 {
        self.prob[s.query as usize * self.d_max + s.age - 1]
    }

    #[inline]
    pub fn get_mut(&mut self, s: State) -> &mut f64 {
        &mut self.prob[s.query as usize * self.d_max + s.age - 1]
    }

    pub fn total(&self) -> f64 {
        self.prob.iter().sum()
    }

    /// `(state, probability)` pairs with positive mass.
    pub fn support(&self) -> impl Iterator<Item = (State, f64)> + '_ {
        let d_max = self.d_max;
        self.prob.iter().enumerate().filter_map(move |(i, &m)| {
            (m > 0.0).then(|| {
                (
                    State {
                        age: i % d_max + 1,
                        query: i >= d_max,
                    },
                    m,
                )
            })
        })
    }
}

// ── Kernel ───────────────────────────────────────────────────────────────

/// Up to four successor states with their probabilities.
#[derive(Debug, Clone, Copy)]
pub struct Successors {
    entries: [(State, f64); 4],
    len: usize,
}

impl Successors {
    pub fn iter(&self) -> impl Iterator<Item = (State, f64)> + '_ {
        self.entries[..self.len].iter().copied()
    }
}

/// Sparse one-step successor list of `(s, a)`; zero-probability entries are
/// dropped.
#[inline]
pub fn successors(params: &SubMdpParams, s: State, a: Action) -> Successors {
    let grown = params.next_age(s.age);
    let mut entries = [(State::new(1, false), 0.0); 4];
    let mut len = 0;
    let mut push = |age: usize, weight: f64| {
        if weight <= 0.0 {
            return;
        }
        for q in [false, true] {
            let pq = params.query_prob(s.query, q);
            if pq > 0.0 {
                entries[len] = (State::new(age, q), weight * pq);
                len += 1;
            }
        }
    };
    if a.is_active() {
        push(1, params.p);
        push(grown, 1.0 - params.p);
    } else {
        push(grown, 1.0);
    }
    Successors { entries, len }
}

/// Exact one-step distribution of the successor of `s` under action `a`.
pub fn transition_distribution(
    params: &SubMdpParams,
    s: State,
    a: Action,
) -> Result<StateDistribution> {
    params.check_state(s)?;
    let mut out = StateDistribution::zeros(params.d_max);
    for (next, prob) in successors(params, s, a).iter() {
        *out.get_mut(next) += prob;
    }
    Ok(out)
}

/// Per-slot cost `D·q + C·a` of the decoupled sub-problem.
#[inline]
pub fn immediate_cost(s: State, a: Action, c: f64) -> f64 {
    let qaoi = if s.query { s.age as f64 } else { 0.0 };
    if a.is_active() {
        qaoi + c
    } else {
        qaoi
    }
}

#[inline]
pub fn policy_action(policy: &ThresholdPolicy, s: State) -> Action {
    Action::from_active(s.age >= policy.threshold(s.query))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> SubMdpParams {
        SubMdpParams::new(0.4, 0.3, 0.7, 50).unwrap()
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn transition_active_from_age_five() {
        let dist = transition_distribution(&params(), State::new(5, false), Action::Schedule).unwrap();
        assert!(close(dist.get(State::new(1, false)), 0.42));
        assert!(close(dist.get(State::new(1, true)), 0.28));
        assert!(close(dist.get(State::new(6, false)), 0.18));
        assert!(close(dist.get(State::new(6, true)), 0.12));
        assert_eq!(dist.support().count(), 4);
    }

    #[test]
    fn transition_passive_and_clamped() {
        let dist = transition_distribution(&params(), State::new(5, false), Action::Idle).unwrap();
        assert!(close(dist.get(State::new(6, false)), 0.6));
        assert!(close(dist.get(State::new(6, true)), 0.4));

        let dist = transition_distribution(&params(), State::new(50, true), Action::Idle).unwrap();
        assert!(close(dist.get(State::new(50, false)), 0.3));
        assert!(close(dist.get(State::new(50, true)), 0.7));
    }

    #[test]
    fn transition_rejects_bad_age() {
        assert!(matches!(
            transition_distribution(&params(), State::new(51, false), Action::Idle),
            Err(Error::InvalidState { .. })
        ));
        assert!(transition_distribution(&params(), State::new(0, true), Action::Idle).is_err());
    }

    #[test]
    fn error_free_resets_deterministically() {
        let p = SubMdpParams::new(0.4, 0.3, 1.0, 10).unwrap();
        let dist = transition_distribution(&p, State::new(7, true), Action::Schedule).unwrap();
        assert!(dist.support().all(|(s, _)| s.age == 1));
        assert!(close(dist.total(), 1.0));
    }

    #[test]
    fn costs() {
        assert_eq!(immediate_cost(State::new(7, true), Action::Schedule, 2.5), 9.5);
        assert_eq!(immediate_cost(State::new(7, false), Action::Idle, 2.5), 0.0);
        assert_eq!(immediate_cost(State::new(1, true), Action::Idle, 0.0), 1.0);
    }

    #[test]
    fn threshold_actions() {
        let pol = ThresholdPolicy::new(3, 5, 50).unwrap();
        assert_eq!(policy_action(&pol, State::new(4, false)), Action::Schedule);
        assert_eq!(policy_action(&pol, State::new(4, true)), Action::Idle);
        let never = ThresholdPolicy::never(50);
        assert!(params().states().all(|s| policy_action(&never, s) == Action::Idle));
    }

    #[test]
    fn params_validation() {
        assert!(SubMdpParams::new(0.0, 0.3, 0.7, 10).is_err());
        assert!(SubMdpParams::new(0.4, 1.0, 0.7, 10).is_err());
        assert!(SubMdpParams::new(0.4, 0.3, 0.0, 10).is_err());
        assert!(SubMdpParams::new(0.4, 0.3, 1.0, 10).is_ok());
        assert!(SubMdpParams::new(0.4, 0.3, 0.7, 1).is_err());
        assert!(ThresholdPolicy::new(0, 1, 10).is_err());
        assert!(ThresholdPolicy::new(11, 12, 10).is_err());
    }

    #[test]
    fn flat_indexing_round_trips() {
        let p = params();
        for (i, s) in p.states().enumerate() {
            assert_eq!(p.index(s), i);
        }
        assert_eq!(p.state(0), State::new(1, false));
        assert_eq!(p.state(50), State::new(1, true));
    }
}
