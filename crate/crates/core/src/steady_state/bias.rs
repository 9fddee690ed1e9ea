//! Relative values of a threshold policy for the QAoI cost and for the
//! activity indicator, found by one backward sweep over ages.
//!
//! Each relative value is carried as an affine function of the two unknowns
//! (gain, relative value of `(1, 1)`), with `(1, 0)` pinned to zero. The
//! sweep multiplies by sub-stochastic rows only, so it is stable at every
//! age, including ages the policy almost never visits.

use super::mat2::{solve2, Mat2};
use crate::error::{Error, Result};
use crate::model::{State, SubMdpParams, ThresholdPolicy};

/// Gains and relative values of a threshold policy.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyBias {
    pub d_max: usize,
    /// Average QAoI.
    pub j: f64,
    /// Scheduling rate.
    pub a: f64,
    /// Relative QAoI cost, by flat state index.
    pub h_qaoi: Vec<f64>,
    /// Relative activity count, by flat state index.
    pub h_active: Vec<f64>,
}

/// Affine form `k + g_coef·g + u_coef·u` per query flag, for both costs.
#[derive(Clone, Copy, Default)]
struct Affine {
    qaoi: [f64; 2],
    active: [f64; 2],
    g: [f64; 2],
    u: [f64; 2],
}

pub fn policy_bias(params: &SubMdpParams, policy: &ThresholdPolicy) -> Result<PolicyBias> {
    params.validate()?;
    let policy = ThresholdPolicy::new(policy.h0, policy.h1, params.d_max)?;
    if policy.is_never(params.d_max) {
        return Err(Error::Domain(
            "relative values anchored at (1, 0) need a policy that schedules".into(),
        ));
    }
    let d_max = params.d_max;
    let p = params.p;
    let rows = |age: usize| -> ([f64; 2], [bool; 2]) {
        let act = [age >= policy.h0, age >= policy.h1];
        let keep = act.map(|a| if a { 1.0 - p } else { 1.0 });
        (keep, act)
    };
    let qp = |q: usize, q2: usize| params.query_prob(q == 1, q2 == 1);
    let cost = |age: usize, q: usize| if q == 1 { age as f64 } else { 0.0 };

    let mut forms = vec![Affine::default(); d_max];

    // Clamp age: (I - M) h = c - g + r·u.
    let (keep, act) = rows(d_max);
    let m = Mat2::new(
        keep[0] * qp(0, 0),
        keep[0] * qp(0, 1),
        keep[1] * qp(1, 0),
        keep[1] * qp(1, 1),
    );
    let k = (Mat2::IDENTITY - m).inverse().ok_or_else(|| {
        Error::numerical("relative values", "clamp-age system is singular")
    })?;
    let reset = |q: usize, act: [bool; 2]| if act[q] { p * qp(q, 1) } else { 0.0 };
    forms[d_max - 1] = Affine {
        qaoi: k.apply([cost(d_max, 0), cost(d_max, 1)]),
        active: k.apply([act[0] as u8 as f64, act[1] as u8 as f64]),
        g: k.apply([-1.0, -1.0]),
        u: k.apply([reset(0, act), reset(1, act)]),
    };

    for age in (1..d_max).rev() {
        let next = forms[age];
        let (keep, act) = rows(age);
        let mut here = Affine::default();
        for q in 0..2 {
            let mix = |v: [f64; 2]| keep[q] * (qp(q, 0) * v[0] + qp(q, 1) * v[1]);
            here.qaoi[q] = cost(age, q) + mix(next.qaoi);
            here.active[q] = act[q] as u8 as f64 + mix(next.active);
            here.g[q] = -1.0 + mix(next.g);
            here.u[q] = reset(q, act) + mix(next.u);
        }
        forms[age - 1] = here;
    }

    // Pin h(1,0) = 0 and h(1,1) = u.
    let first = forms[0];
    let system = [[first.g[0], first.u[0]], [first.g[1], first.u[1] - 1.0]];
    let solve = |k: [f64; 2]| {
        solve2(system, [-k[0], -k[1]])
            .ok_or_else(|| Error::numerical("relative values", "age-1 system is singular"))
    };
    let [j, u_j] = solve(first.qaoi)?;
    let [a, u_a] = solve(first.active)?;

    let mut h_qaoi = vec![0.0; 2 * d_max];
    let mut h_active = vec![0.0; 2 * d_max];
    for (i, f) in forms.iter().enumerate() {
        for q in 0..2 {
            h_qaoi[q * d_max + i] = f.qaoi[q] + f.g[q] * j + f.u[q] * u_j;
            h_active[q * d_max + i] = f.active[q] + f.g[q] * a + f.u[q] * u_a;
        }
    }
    Ok(PolicyBias {
        d_max,
        j,
        a,
        h_qaoi,
        h_active,
    })
}

/// Relative values of a threshold policy for the QAoI cost and the activity
/// indicator, with the matching gains.
pub trait RelativeValues {
    /// `(J, A)`.
    fn averages(&self) -> (f64, f64);
    fn qaoi(&self, s: State) -> f64;
    fn active(&self, s: State) -> f64;

    /// Scheduling cost at which idling `s` and scheduling it once, then
    /// following the policy, cost the same on average.
    ///
    /// Scheduling `s` changes the next-slot relative value by
    /// `p·Σ P(q→q')·[h(1,q') − h(D+1,q')]` for each cost, so the two actions
    /// tie at `C = −p·δ_qaoi / (1 + p·δ_active)`.
    fn indifference_cost(&self, params: &SubMdpParams, s: State) -> Result<f64> {
        params.check_state(s)?;
        let grown = params.next_age(s.age);
        let delta = |h: &dyn Fn(State) -> f64| {
            [false, true]
                .into_iter()
                .map(|q2| {
                    params.query_prob(s.query, q2) * (h(State::new(1, q2)) - h(State::new(grown, q2)))
                })
                .sum::<f64>()
        };
        let d_qaoi = delta(&|x| self.qaoi(x));
        let d_active = delta(&|x| self.active(x));
        let denom = 1.0 + params.p * d_active;
        if denom <= 0.0 {
            return Err(Error::Structural(format!(
                "scheduling {s} does not raise the activity count (margin {denom})"
            )));
        }
        Ok(-params.p * d_qaoi / denom)
    }
}

impl RelativeValues for PolicyBias {
    fn averages(&self) -> (f64, f64) {
        (self.j, self.a)
    }

    fn qaoi(&self, s: State) -> f64 {
        self.h_qaoi[s.q() * self.d_max + s.age - 1]
    }

    fn active(&self, s: State) -> f64 {
        self.h_active[s.q() * self.d_max + s.age - 1]
    }
}
