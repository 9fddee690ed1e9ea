//! Index search by bisection on the scheduling cost.
//!
//! A state's index is the smallest `C` at which the optimal policy idles in
//! it. All requested states are searched together: every solve at a probe
//! cost splits the current group into states already idle (index below the
//! probe) and states still scheduled (index above), and each half is
//! refined on its own bracket, warm-started from the probe's values.

use std::rc::Rc;

use super::average::{relative_value_iteration_from, RviOptions};
use super::check_tol;
use super::discounted::discounted_value_iteration_from;
use crate::error::{Error, Result};
use crate::model::{Action, State, SubMdpParams};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleOptions {
    /// Width of the final bracket on `C`.
    pub bisection_tol: f64,
    /// Tolerance handed to the inner solver.
    pub solver_tol: f64,
    /// Give up if a state is still scheduled at this cost.
    pub c_cap: f64,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self {
            bisection_tol: 1e-7,
            solver_tol: 1e-10,
            c_cap: 1e12,
        }
    }
}

type Probe<'a> = dyn FnMut(f64, Option<&[f64]>) -> Result<(Vec<Action>, Vec<f64>)> + 'a;

fn search(targets: Vec<usize>, opts: &OracleOptions, solve: &mut Probe<'_>) -> Result<Vec<(usize, f64)>> {
    check_tol(opts.bisection_tol)?;
    let (policy, warm0) = solve(0.0, None)?;
    if let Some(&i) = targets.iter().find(|&&i| !policy[i].is_active()) {
        return Err(Error::Structural(format!(
            "flat state {i} is already idle at C = 0; no non-negative index"
        )));
    }
    let warm0 = Rc::new(warm0);
    let mut hi = 1.0;
    let mut warm_hi = warm0.clone();
    loop {
        let (policy, w) = solve(hi, Some(&warm_hi))?;
        warm_hi = Rc::new(w);
        if targets.iter().all(|&i| !policy[i].is_active()) {
            break;
        }
        hi *= 2.0;
        if hi > opts.c_cap {
            return Err(Error::numerical(
                "index bisection",
                format!("states still scheduled at C = {}", opts.c_cap),
            ));
        }
    }

    let mut out = Vec::with_capacity(targets.len());
    let mut stack = vec![(0.0, hi, targets, warm0)];
    while let Some((lo, hi, group, warm)) = stack.pop() {
        if hi - lo <= opts.bisection_tol {
            let mid = 0.5 * (lo + hi);
            out.extend(group.into_iter().map(|i| (i, mid)));
            continue;
        }
        let mid = 0.5 * (lo + hi);
        let (policy, w) = solve(mid, Some(&warm))?;
        let w = Rc::new(w);
        let (idle, busy): (Vec<usize>, Vec<usize>) =
            group.into_iter().partition(|&i| !policy[i].is_active());
        if !idle.is_empty() {
            stack.push((lo, mid, idle, w.clone()));
        }
        if !busy.is_empty() {
            stack.push((mid, hi, busy, w));
        }
    }
    Ok(out)
}

fn rvi_probe<'a>(params: &'a SubMdpParams, opts: &OracleOptions) -> impl FnMut(f64, Option<&[f64]>) -> Result<(Vec<Action>, Vec<f64>)> + 'a {
    let rvi = RviOptions {
        tol: opts.solver_tol,
        ..RviOptions::default()
    };
    move |c, warm| {
        let sol = relative_value_iteration_from(params, c, &rvi, warm)?;
        Ok((sol.policy, sol.bias))
    }
}

/// Average-cost Whittle index of one state by bisection over relative value
/// iteration.
pub fn oracle_whittle_index(params: &SubMdpParams, s: State, tol: f64) -> Result<f64> {
    params.validate()?;
    params.check_state(s)?;
    let opts = OracleOptions {
        bisection_tol: tol,
        ..OracleOptions::default()
    };
    let mut probe = rvi_probe(params, &opts);
    let found = search(vec![params.index(s)], &opts, &mut probe)?;
    Ok(found[0].1)
}

/// Average-cost Whittle indices of every state, by flat state index.
pub fn oracle_whittle_table(params: &SubMdpParams, opts: &OracleOptions) -> Result<Vec<f64>> {
    params.validate()?;
    let mut probe = rvi_probe(params, opts);
    collect(params, search((0..params.num_states()).collect(), opts, &mut probe)?)
}

/// Discounted Whittle indices of every state by bisection over discounted
/// value iteration.
pub fn discounted_index_table(params: &SubMdpParams, beta: f64, opts: &OracleOptions) -> Result<Vec<f64>> {
    params.validate()?;
    let solver_tol = opts.solver_tol;
    let mut probe = |c: f64, warm: Option<&[f64]>| -> Result<(Vec<Action>, Vec<f64>)> {
        let vt = discounted_value_iteration_from(params, c, beta, solver_tol, warm)?;
        Ok((vt.policy, vt.value))
    };
    collect(params, search((0..params.num_states()).collect(), opts, &mut probe)?)
}

fn collect(params: &SubMdpParams, found: Vec<(usize, f64)>) -> Result<Vec<f64>> {
    let mut table = vec![f64::NAN; params.num_states()];
    for (i, c) in found {
        table[i] = c;
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dp::relative_value_iteration;

    #[test]
    fn index_separates_active_and_passive() {
        let params = SubMdpParams::new(0.4, 0.3, 0.7, 12).unwrap();
        let s = State::new(4, true);
        let tol = 1e-7;
        let w = oracle_whittle_index(&params, s, tol).unwrap();
        let below = relative_value_iteration(&params, w - 10.0 * tol, 1e-11).unwrap();
        let above = relative_value_iteration(&params, w + 10.0 * tol, 1e-11).unwrap();
        assert!(below.action(s).is_active());
        assert!(!above.action(s).is_active());
    }

    #[test]
    fn table_agrees_with_single_state_search() {
        let params = SubMdpParams::new(0.3, 0.5, 0.6, 8).unwrap();
        let table = oracle_whittle_table(&params, &OracleOptions::default()).unwrap();
        for s in [State::new(2, false), State::new(5, true)] {
            let single = oracle_whittle_index(&params, s, 1e-7).unwrap();
            assert!((table[params.index(s)] - single).abs() < 1e-6);
        }
    }
}
