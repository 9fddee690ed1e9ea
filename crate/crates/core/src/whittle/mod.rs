//! Whittle indices of one arm by walking up the chain of threshold policies.
//!
//! The walk starts at "always schedule", `π(1; 1)`, whose passive set is
//! empty. At each step one (or both) of the thresholds moves up to the next
//! value that changes the scheduling rate. The next index level is the cost
//! ratio `ζ` between the current policy and the candidate. It is evaluated as
//! the scheduling cost at which the first newly idle state is indifferent
//! under the current policy's relative values. That equals `ζ` exactly and
//! avoids the cancellation in `(J' − J) / (A − A')` when the newly idle
//! states carry little stationary mass. The states that turn passive form
//! the level's group. The walk ends once every state is passive.

mod aoi;
mod table;

pub use aoi::{aoi_whittle_table, AoiTable};
pub use table::{Boundary, IndexRow, WhittleTable};

use log::{debug, info};

use crate::error::{Error, Result};
use crate::model::{State, SubMdpParams, ThresholdPolicy};
use crate::steady_state::{policy_averages, relative_values, RelativeValues};

/// Relative gap below which two candidate ratios count as tied.
const TIE_TOL: f64 = 1e-9;

/// Smallest threshold above the current one on branch `query` whose policy
/// idles a newly recurrent state, and therefore changes the scheduling rate.
///
/// Raising `h_q` to `h'` idles `(D, q)` for `h_q ≤ D < h'`. The rate changes
/// exactly when one of those states is recurrent under the current policy.
/// Recurrence is decided structurally, not from floating-point masses, which
/// underflow at remote ages long before they vanish.
pub fn next_threshold(params: &SubMdpParams, policy: &ThresholdPolicy, query: bool) -> Result<usize> {
    params.validate()?;
    let policy = ThresholdPolicy::new(policy.h0, policy.h1, params.d_max)?;
    let h = policy.threshold(query);
    if h > params.d_max {
        return Err(Error::Domain(format!(
            "branch q={} of {policy} already never schedules",
            query as u8
        )));
    }
    (h..=params.d_max)
        .find(|&age| is_recurrent(params, &policy, State::new(age, query)))
        .map(|age| age + 1)
        .ok_or_else(|| {
            Error::Structural(format!(
                "no state on branch q={} of {policy} is recurrent",
                query as u8
            ))
        })
}

/// Recurrence of `s` under a policy that schedules somewhere. With both query
/// transitions possible, a failed or withheld transmission lets the age grow
/// into every state when `p < 1`; when `p = 1` every scheduled state resets,
/// so exactly the ages up to `max(h0, h1)` recur.
pub(crate) fn is_recurrent(params: &SubMdpParams, policy: &ThresholdPolicy, s: State) -> bool {
    params.p < 1.0 || s.age <= policy.upper()
}

/// Index table for `p < 1`.
pub fn compute_whittle_table(params: &SubMdpParams) -> Result<WhittleTable> {
    params.validate()?;
    if params.p >= 1.0 {
        return Err(Error::Domain(
            "compute_whittle_table needs p < 1; use compute_whittle_table_error_free".into(),
        ));
    }
    walk(params)
}

/// Index table for `p = 1`, where every relative value is a closed-form
/// excursion sum.
pub fn compute_whittle_table_error_free(params: &SubMdpParams) -> Result<WhittleTable> {
    params.validate()?;
    if params.p != 1.0 {
        return Err(Error::Domain(format!(
            "error-free table needs p = 1, got {}",
            params.p
        )));
    }
    walk(params)
}

/// Dispatches on `p`.
pub fn whittle_table(params: &SubMdpParams) -> Result<WhittleTable> {
    if params.p == 1.0 {
        compute_whittle_table_error_free(params)
    } else {
        compute_whittle_table(params)
    }
}

// ── The walk ─────────────────────────────────────────────────────────────

/// The current boundary policy: its averages and, unless it never
/// schedules, its relative values.
struct Current {
    j: f64,
    a: f64,
    values: Option<Box<dyn RelativeValues>>,
}

impl Current {
    fn new(params: &SubMdpParams, policy: ThresholdPolicy) -> Result<Self> {
        if policy.is_never(params.d_max) {
            let (j, a) = policy_averages(params, &policy)?;
            return Ok(Self { j, a, values: None });
        }
        let values = relative_values(params, &policy)?;
        let (j, a) = values.averages();
        Ok(Self {
            j,
            a,
            values: Some(values),
        })
    }

    /// Lowest cost at which one of `flipped` becomes indifferent.
    fn level(&self, params: &SubMdpParams, flipped: &[State]) -> Result<f64> {
        let values = self
            .values
            .as_ref()
            .ok_or_else(|| Error::Contract("the never-schedule policy has no next level".into()))?;
        let mut level = f64::INFINITY;
        for &s in flipped {
            level = level.min(values.indifference_cost(params, s)?);
        }
        Ok(level)
    }
}

fn walk(params: &SubMdpParams) -> Result<WhittleTable> {
    let d_max = params.d_max;
    let never = d_max + 1;
    let lockstep = params.memoryless_queries();
    let mut table = WhittleTable::empty(*params);
    let mut trace: Vec<String> = Vec::new();
    let mut policy = ThresholdPolicy::always();

    loop {
        let here = Current::new(params, policy)?;
        table.push_boundary(policy, here.j, here.a);
        if policy.is_never(d_max) {
            break;
        }
        let first_idle = |q: bool| State::new(policy.threshold(q), q);
        let raise = |q: bool| -> Result<ThresholdPolicy> {
            Ok(policy.with_threshold(q, next_threshold(params, &policy, q)?))
        };
        let both = |c0: ThresholdPolicy, c1: ThresholdPolicy| ThresholdPolicy {
            h0: c0.h0,
            h1: c1.h1,
        };

        let (next, level) = if policy.h0 == never || policy.h1 == never {
            let q = policy.h0 == never;
            (raise(q)?, here.level(params, &[first_idle(q)])?)
        } else if lockstep {
            let cand = both(raise(false)?, raise(true)?);
            (cand, here.level(params, &[first_idle(false), first_idle(true)])?)
        } else {
            let z0 = here.level(params, &[first_idle(false)])?;
            let z1 = here.level(params, &[first_idle(true)])?;
            if tied(z0, z1) {
                info!("{policy}: both branches tie at {z0}; advancing both thresholds");
                (both(raise(false)?, raise(true)?), z0.min(z1))
            } else if z0 < z1 {
                (raise(false)?, z0)
            } else {
                (raise(true)?, z1)
            }
        };
        trace.push(format!("{policy} -> {next} at {level}"));

        if let Some(&last) = table.levels.last() {
            if level < last * (1.0 - TIE_TOL) {
                return Err(structural(
                    format!("index level decreased from {last} to {level}"),
                    &trace,
                ));
            }
        }
        let newly_passive: Vec<State> = [false, true]
            .into_iter()
            .flat_map(|q| (policy.threshold(q)..next.threshold(q)).map(move |age| State::new(age, q)))
            .collect();
        debug!("{} states join level {level}", newly_passive.len());
        table.assign(level, newly_passive, TIE_TOL);
        policy = next;
    }
    table.finish()?;
    Ok(table)
}

fn tied(a: f64, b: f64) -> bool {
    (a - b).abs() <= TIE_TOL * a.abs().max(b.abs())
}

fn structural(message: String, trace: &[String]) -> Error {
    Error::Structural(format!("{message}; trace: [{}]", trace.join("; ")))
}
