//! Scheduling rules. Index rules rank arms by a per-state score and take the
//! top `M`, ties going to the lower arm id.

use std::cmp::Ordering;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{per_distinct_arm, NetworkConfig, NetworkState};
use crate::dp::{discounted_index_table, solve_joint_mdp, JointSolution, OracleOptions};
use crate::error::{Error, Result};
use crate::model::{Action, State, SubMdpParams};
use crate::whittle::{aoi_whittle_table, whittle_table, WhittleTable};

/// Tolerance of the joint relative value iteration behind `Optimal`.
const JOINT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Scheduler {
    /// Average-cost Whittle index of the current state.
    Whittle,
    /// Discounted Whittle index, found by bisection on discounted value
    /// iteration.
    Discounted { beta: f64 },
    /// `D·p·P(query next slot)`.
    Greedy,
    /// Whittle index of the age alone, as if a query were always pending.
    Aoi,
    /// Each arm asks with probability `rate`; up to `M` askers are picked
    /// uniformly.
    Random { rate: f64 },
    /// Exact joint optimum; small networks only.
    Optimal,
}

impl Scheduler {
    pub const NAMES: [&'static str; 6] = ["whittle", "discounted", "greedy", "aoi", "random", "optimal"];

    pub fn name(&self) -> &'static str {
        match self {
            Scheduler::Whittle => "whittle",
            Scheduler::Discounted { .. } => "discounted",
            Scheduler::Greedy => "greedy",
            Scheduler::Aoi => "aoi",
            Scheduler::Random { .. } => "random",
            Scheduler::Optimal => "optimal",
        }
    }

    /// Parses a scheduler name; `discounted` takes `beta`, `random` uses
    /// rate 1.
    pub fn from_name(name: &str, beta: f64) -> Result<Self> {
        let s = match name {
            "whittle" => Scheduler::Whittle,
            "discounted" => Scheduler::Discounted { beta },
            "greedy" => Scheduler::Greedy,
            "aoi" => Scheduler::Aoi,
            "random" => Scheduler::Random { rate: 1.0 },
            "optimal" => Scheduler::Optimal,
            other => {
                return Err(Error::Domain(format!(
                    "unknown scheduler {other:?}; expected one of {}",
                    Self::NAMES.join(", ")
                )))
            }
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Scheduler::Discounted { beta } if !(beta > 0.0 && beta < 1.0) => {
                Err(Error::Domain(format!("beta must lie in (0, 1), got {beta}")))
            }
            Scheduler::Random { rate } if !(0.0..=1.0).contains(&rate) => {
                Err(Error::Domain(format!("random rate must lie in [0, 1], got {rate}")))
            }
            _ => Ok(()),
        }
    }
}

/// `D·p·[λ(1−q) + (1−γ)q]`: expected QAoI removed next slot by scheduling.
#[inline]
pub fn greedy_score(params: &SubMdpParams, s: State) -> f64 {
    let next_query = if s.query { 1.0 - params.gamma } else { params.lambda };
    s.age as f64 * params.p * next_query
}

/// Marks the `m` highest scores active; ties go to the lower index.
pub fn schedule_top(scores: &[f64], m: usize, out: &mut [Action]) {
    top_into(scores, m, out, &mut Vec::new());
}

fn top_into(scores: &[f64], m: usize, out: &mut [Action], order: &mut Vec<usize>) {
    let n = scores.len();
    out.fill(Action::Idle);
    let m = m.min(n);
    if m == 0 {
        return;
    }
    order.clear();
    order.extend(0..n);
    let rank = |a: &usize, b: &usize| match scores[*b].total_cmp(&scores[*a]) {
        Ordering::Equal => a.cmp(b),
        other => other,
    };
    if m < n {
        order.select_nth_unstable_by(m - 1, rank);
    }
    for &i in &order[..m] {
        out[i] = Action::Schedule;
    }
}

pub fn greedy_rank(config: &NetworkConfig, state: &NetworkState) -> Vec<Action> {
    let scores: Vec<f64> = config
        .arms
        .iter()
        .zip(&state.arms)
        .map(|(params, &s)| greedy_score(params, s))
        .collect();
    let mut out = vec![Action::Idle; scores.len()];
    schedule_top(&scores, config.channels, &mut out);
    out
}

pub fn whittle_schedule(tables: &[WhittleTable], state: &NetworkState, m: usize) -> Result<Vec<Action>> {
    if tables.len() != state.arms.len() {
        return Err(Error::Contract(format!(
            "{} tables for {} arms",
            tables.len(),
            state.arms.len()
        )));
    }
    let scores = tables
        .iter()
        .zip(&state.arms)
        .map(|(t, &s)| {
            t.params
                .check_state(s)
                .map_err(|_| Error::Contract(format!("no index for {s} in a table with d_max {}", t.params.d_max)))?;
            Ok(t.index(s))
        })
        .collect::<Result<Vec<f64>>>()?;
    let mut out = vec![Action::Idle; scores.len()];
    schedule_top(&scores, m, &mut out);
    Ok(out)
}

// ── Prepared rules ───────────────────────────────────────────────────────

/// Buffers reused across the slots of an episode.
#[derive(Debug, Default)]
pub(super) struct Scratch {
    scores: Vec<f64>,
    order: Vec<usize>,
}

#[derive(Debug, Clone)]
enum Rule {
    /// Per-arm score by flat state index.
    Scores(Vec<Vec<f64>>),
    Random(f64),
    Joint(Box<JointSolution>),
}

/// A scheduler with its per-arm tables computed.
#[derive(Debug, Clone)]
pub struct PreparedScheduler {
    arms: Vec<SubMdpParams>,
    rule: Rule,
}

impl PreparedScheduler {
    pub fn new(kind: &Scheduler, arms: &[SubMdpParams], channels: usize) -> Result<Self> {
        kind.validate()?;
        let rule = match *kind {
            Scheduler::Whittle => {
                Rule::Scores(per_distinct_arm(arms, |a| Ok(whittle_table(a)?.as_slice().to_vec()))?)
            }
            Scheduler::Discounted { beta } => {
                let opts = OracleOptions {
                    bisection_tol: 1e-6,
                    solver_tol: 1e-8,
                    ..OracleOptions::default()
                };
                Rule::Scores(per_distinct_arm(arms, |a| discounted_index_table(a, beta, &opts))?)
            }
            Scheduler::Greedy => Rule::Scores(
                arms.iter()
                    .map(|a| a.states().map(|s| greedy_score(a, s)).collect())
                    .collect(),
            ),
            Scheduler::Aoi => Rule::Scores(per_distinct_arm(arms, |a| {
                let t = aoi_whittle_table(a)?;
                Ok(a.states().map(|s| t.index(s.age)).collect())
            })?),
            Scheduler::Random { rate } => Rule::Random(rate),
            Scheduler::Optimal => Rule::Joint(Box::new(solve_joint_mdp(arms, channels, JOINT_TOL)?)),
        };
        Ok(Self {
            arms: arms.to_vec(),
            rule,
        })
    }

    /// Whittle rule from tables computed elsewhere, e.g. loaded from a cache.
    pub fn from_whittle_tables(tables: &[WhittleTable]) -> Self {
        Self {
            arms: tables.iter().map(|t| t.params).collect(),
            rule: Rule::Scores(tables.iter().map(|t| t.as_slice().to_vec()).collect()),
        }
    }

    pub fn arms(&self) -> usize {
        self.arms.len()
    }

    /// Writes this slot's actions for `states` into `out`.
    pub fn choose<R: Rng>(&self, states: &[State], m: usize, rng: &mut R, out: &mut [Action]) {
        self.choose_with(states, m, rng, out, &mut Scratch::default());
    }

    pub(super) fn choose_with<R: Rng>(
        &self,
        states: &[State],
        m: usize,
        rng: &mut R,
        out: &mut [Action],
        scratch: &mut Scratch,
    ) {
        let Scratch { scores, order } = scratch;
        scores.clear();
        match &self.rule {
            Rule::Scores(tables) => {
                scores.extend(
                    tables
                        .iter()
                        .zip(&self.arms)
                        .zip(states)
                        .map(|((t, params), &s)| t[params.index(s)]),
                );
                top_into(scores, m, out, order);
            }
            Rule::Random(rate) => {
                // One draw per arm whatever the outcome, so the stream
                // advances by a fixed amount per slot.
                scores.extend(states.iter().map(|_| {
                    let u: f64 = rng.random();
                    if u < *rate { u } else { f64::NEG_INFINITY }
                }));
                top_into(scores, m, out, order);
                for (a, s) in out.iter_mut().zip(scores.iter()) {
                    if *s == f64::NEG_INFINITY {
                        *a = Action::Idle;
                    }
                }
            }
            Rule::Joint(sol) => {
                let mask = sol.action_mask(states);
                for (i, a) in out.iter_mut().enumerate() {
                    *a = Action::from_active(mask >> i & 1 == 1);
                }
            }
        }
    }
}
