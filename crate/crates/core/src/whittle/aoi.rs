//! Query-agnostic baseline: indices of an arm that is queried every slot.
//!
//! With the query flag pinned to 1 the state is the age alone and the cost
//! is the age itself, i.e. the classic average-AoI restless bandit. Its
//! indices are indifference costs along single thresholds `H`, as in the
//! two-branch walk.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::SubMdpParams;

use super::TIE_TOL;

/// Index per age (`index[D - 1]`); the query parameters are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AoiTable {
    pub p: f64,
    pub d_max: usize,
    pub index: Vec<f64>,
}

impl AoiTable {
    #[inline]
    pub fn index(&self, age: usize) -> f64 {
        self.index[age - 1]
    }
}

/// Relative age and relative activity count of "schedule iff age ≥ h" on
/// the age-only chain, pinned to zero at age 1. Only needs `h ≤ d_max`.
fn age_chain_values(p: f64, d_max: usize, h: usize) -> (Vec<f64>, Vec<f64>) {
    // Each value is `k + g_coef·gain`; sweep down from the clamp age, which
    // schedules and stays put on failure.
    let mut forms = vec![[0.0; 4]; d_max];
    forms[d_max - 1] = [d_max as f64 / p, 1.0 / p, -1.0 / p, -1.0 / p];
    for age in (1..d_max).rev() {
        let keep = if age >= h { 1.0 - p } else { 1.0 };
        let next = forms[age];
        let act = (age >= h) as u8 as f64;
        forms[age - 1] = [
            age as f64 + keep * next[0],
            act + keep * next[1],
            -1.0 + keep * next[2],
            -1.0 + keep * next[3],
        ];
    }
    let gain_j = -forms[0][0] / forms[0][2];
    let gain_a = -forms[0][1] / forms[0][3];
    let qaoi = forms.iter().map(|f| f[0] + f[2] * gain_j).collect();
    let active = forms.iter().map(|f| f[1] + f[3] * gain_a).collect();
    (qaoi, active)
}

pub fn aoi_whittle_table(params: &SubMdpParams) -> Result<AoiTable> {
    params.validate()?;
    let (p, d_max) = (params.p, params.d_max);
    let mut index = Vec::with_capacity(d_max);
    for h in 1..=d_max {
        // Idling age h costs the relative value of age h+1 instead of a reset
        // to age 1 with probability p.
        let (qaoi, active) = age_chain_values(p, d_max, h);
        let grown = (h + 1).min(d_max) - 1;
        let level = p * qaoi[grown] / (1.0 - p * active[grown]);
        let level = match index.last() {
            Some(&last) if level < last * (1.0 - TIE_TOL) => {
                return Err(Error::Structural(format!(
                    "age-only index decreases at age {h}: {last} then {level}"
                )));
            }
            // Ages D_m − 1 and D_m share successors, so their indices tie.
            Some(&last) if level <= last * (1.0 + TIE_TOL) => last,
            _ => level,
        };
        index.push(level);
    }
    Ok(AoiTable { p, d_max, index })
}
