//! Relative values at `p = 1` from the cost of one excursion.
//!
//! With error-free transmissions every scheduled slot resets the age to 1, so
//! the relative value of a state is the cost accrued up to and including its
//! first scheduled slot, plus the relative value of the age-1 state it
//! resets into. The excursion splits into a stretch where both branches idle
//! (a 2-state chain with geometric mixing) and a stretch where only the
//! lagging branch idles (a geometric holding time). Both sum in closed form,
//! so any single relative value costs `O(log D_m)`.

use super::bias::RelativeValues;
use super::blocks::{lagging_query, powu};
use super::error_free::arith_geo;
use super::mat2::solve2;
use crate::error::{Error, Result};
use crate::model::{State, SubMdpParams, ThresholdPolicy};

/// `Σ_{k<n} x^k`.
fn geo(x: f64, n: usize) -> f64 {
    if (1.0 - x).abs() < 1e-3 {
        let mut acc = 0.0;
        let mut pow = 1.0;
        for _ in 0..n {
            acc += pow;
            pow *= x;
        }
        return acc;
    }
    (1.0 - powu(x, n)) / (1.0 - x)
}

/// `Σ_{k<n} (start + k) x^k`.
fn ramp(x: f64, start: usize, n: usize) -> f64 {
    (start as f64 - 1.0) * geo(x, n) + arith_geo(x, n)
}

/// Totals from a start state through its first scheduled slot.
#[derive(Debug, Default, Clone, Copy)]
struct Excursion {
    qaoi: f64,
    slots: f64,
    /// Distribution of the query flag in the slot after the reset.
    next: [f64; 2],
}

impl Excursion {
    fn schedule(&mut self, params: &SubMdpParams, query: bool, age: usize, weight: f64) {
        self.slots += weight;
        if query {
            self.qaoi += weight * age as f64;
        }
        for (i, to) in [false, true].into_iter().enumerate() {
            self.next[i] += weight * params.query_prob(query, to);
        }
    }
}

fn excursion(params: &SubMdpParams, policy: &ThresholdPolicy, s: State) -> Excursion {
    let d_max = params.d_max;
    let (l, g) = (params.lambda, params.gamma);
    let h = [policy.h0, policy.h1];
    let low = h[0].min(h[1]);
    let mut ex = Excursion::default();
    let mut age = s.age;
    let mut v = if s.query { [0.0, 1.0] } else { [1.0, 0.0] };

    // Both branches idle: the queried mass relaxes to λ/(λ+γ) at rate 1−λ−γ.
    if age < low {
        let n = low - age;
        let kappa = 1.0 - l - g;
        let settled = l / (l + g);
        let dev = v[1] - settled;
        let nf = n as f64;
        ex.slots = nf;
        ex.qaoi = settled * (nf * age as f64 + nf * (nf - 1.0) / 2.0) + dev * ramp(kappa, age, n);
        let q1 = settled + powu(kappa, n) * dev;
        v = [1.0 - q1, q1];
        age = low;
    }

    for (i, q) in [false, true].into_iter().enumerate() {
        if age >= h[i] {
            ex.schedule(params, q, age, v[i]);
        }
    }
    let Some(lag) = lagging_query(policy) else {
        return ex;
    };
    let li = lag as usize;
    if age >= h[li] {
        return ex;
    }

    // Only the lagging branch idles; it holds with probability `r` per slot
    // and otherwise flips to the other branch, which schedules at once.
    let other = !lag;
    let m = v[li];
    let r = params.query_prob(lag, lag);
    let t = 1.0 - r;
    let top = h[li].min(d_max);
    let k = top - age;
    ex.slots += m * geo(r, k);
    if lag {
        ex.qaoi += m * ramp(r, age, k);
    }
    let flips = m * t * geo(r, k);
    ex.slots += flips;
    if other {
        ex.qaoi += m * t * ramp(r, age + 1, k);
    }
    for (i, to) in [false, true].into_iter().enumerate() {
        ex.next[i] += flips * params.query_prob(other, to);
    }

    let held = m * powu(r, k);
    if h[li] <= d_max {
        ex.schedule(params, lag, top, held);
    } else {
        // Never scheduled on the lagging branch: idles at the clamp age
        // until the query flag flips.
        ex.slots += held / t;
        if lag {
            ex.qaoi += held / t * d_max as f64;
        }
        ex.schedule(params, other, d_max, held);
    }
    ex
}

/// Relative values of a threshold policy at `p = 1`, evaluated on demand,
/// with `(1, 0)` pinned to zero.
#[derive(Debug, Clone)]
pub struct ErrorFreeBias {
    params: SubMdpParams,
    policy: ThresholdPolicy,
    pub j: f64,
    pub a: f64,
    u_qaoi: f64,
    u_active: f64,
}

pub fn error_free_bias(params: &SubMdpParams, policy: &ThresholdPolicy) -> Result<ErrorFreeBias> {
    params.validate()?;
    if params.p != 1.0 {
        return Err(Error::Domain(format!(
            "excursion relative values need p = 1, got {}",
            params.p
        )));
    }
    let policy = ThresholdPolicy::new(policy.h0, policy.h1, params.d_max)?;
    if policy.is_never(params.d_max) {
        return Err(Error::Domain(
            "relative values anchored at (1, 0) need a policy that schedules".into(),
        ));
    }
    let e = [
        excursion(params, &policy, State::new(1, false)),
        excursion(params, &policy, State::new(1, true)),
    ];
    // h(1,q) = cost − gain·slots + next₁·u, with h(1,0) = 0 and h(1,1) = u.
    let system = [
        [e[0].slots, -e[0].next[1]],
        [e[1].slots, 1.0 - e[1].next[1]],
    ];
    let solve = |k: [f64; 2]| {
        solve2(system, k).ok_or_else(|| Error::numerical("relative values", "renewal system is singular"))
    };
    let [j, u_qaoi] = solve([e[0].qaoi, e[1].qaoi])?;
    let [a, u_active] = solve([1.0, 1.0])?;
    Ok(ErrorFreeBias {
        params: *params,
        policy,
        j,
        a,
        u_qaoi,
        u_active,
    })
}

impl RelativeValues for ErrorFreeBias {
    fn averages(&self) -> (f64, f64) {
        (self.j, self.a)
    }

    fn qaoi(&self, s: State) -> f64 {
        let e = excursion(&self.params, &self.policy, s);
        e.qaoi - self.j * e.slots + e.next[1] * self.u_qaoi
    }

    fn active(&self, s: State) -> f64 {
        let e = excursion(&self.params, &self.policy, s);
        1.0 - self.a * e.slots + e.next[1] * self.u_active
    }
}
