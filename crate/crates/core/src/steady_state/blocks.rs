//! Per-age block transition matrices of a threshold policy and their powers.
//!
//! Under `π(h0; h1)` with `H = min(h0, h1)` and `Ĥ = max(h0, h1)` the
//! stationary mass of age `D` satisfies `μ_D = B_D · μ_{D-1}`, where the block
//! `B_D` depends only on which band `D` falls into.

use serde::{Deserialize, Serialize};

use super::mat2::Mat2;
use crate::error::{Error, Result};
use crate::model::{SubMdpParams, ThresholdPolicy};

/// How the age `d_max` row closes the chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TerminalCase {
    /// `H ≤ Ĥ < d_max`: both query branches schedule before the clamp.
    BothBelow,
    /// `H < Ĥ = d_max`.
    UpperAtCap,
    /// `H = Ĥ = d_max`.
    BothAtCap,
    /// `H < d_max`, `Ĥ = d_max + 1`: one branch never schedules.
    LowerOnly,
    /// `H = d_max`, `Ĥ = d_max + 1`.
    LowerAtCap,
    /// Both branches never schedule.
    Never,
}

impl TerminalCase {
    pub fn classify(policy: &ThresholdPolicy, d_max: usize) -> Self {
        let (lo, hi) = (policy.lower(), policy.upper());
        let never = d_max + 1;
        if lo == never {
            TerminalCase::Never
        } else if hi == never {
            if lo < d_max {
                TerminalCase::LowerOnly
            } else {
                TerminalCase::LowerAtCap
            }
        } else if hi < d_max {
            TerminalCase::BothBelow
        } else if lo < d_max {
            TerminalCase::UpperAtCap
        } else {
            TerminalCase::BothAtCap
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            TerminalCase::BothBelow => "H<=H^<Dm",
            TerminalCase::UpperAtCap => "H<H^=Dm",
            TerminalCase::BothAtCap => "H=H^=Dm",
            TerminalCase::LowerOnly => "H<Dm,H^=Dm+1",
            TerminalCase::LowerAtCap => "H=Dm,H^=Dm+1",
            TerminalCase::Never => "never",
        }
    }
}

/// The four blocks of a threshold policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockMatrices {
    /// Both branches idle (`D ≤ H`).
    pub p1: Mat2,
    /// Exactly one branch schedules (`H < D ≤ Ĥ`).
    pub p2: Mat2,
    /// Both branches schedule (`Ĥ < D < d_max`).
    pub p3: Mat2,
    /// Closed-form map from `μ_{d_max-1}` to `μ_{d_max}`; `None` for the
    /// never-schedule policy, whose clamp row is absorbing.
    pub p4: Option<Mat2>,
    pub case: TerminalCase,
    pub policy: ThresholdPolicy,
    pub params: SubMdpParams,
}

impl BlockMatrices {
    /// Query branch that idles on `H < D ≤ Ĥ`, or `None` when `h0 = h1`.
    pub fn lagging_query(&self) -> Option<bool> {
        lagging_query(&self.policy)
    }
}

pub(crate) fn lagging_query(policy: &ThresholdPolicy) -> Option<bool> {
    use std::cmp::Ordering;
    match policy.h0.cmp(&policy.h1) {
        Ordering::Greater => Some(false),
        Ordering::Less => Some(true),
        Ordering::Equal => None,
    }
}

/// Column-stochastic query matrix `[[1-λ, γ], [λ, 1-γ]]`.
pub fn query_matrix(params: &SubMdpParams) -> Mat2 {
    let (l, g) = (params.lambda, params.gamma);
    Mat2::new(1.0 - l, g, l, 1.0 - g)
}

pub fn build_blocks(params: &SubMdpParams, policy: &ThresholdPolicy) -> Result<BlockMatrices> {
    params.validate()?;
    let policy = ThresholdPolicy::new(policy.h0, policy.h1, params.d_max)?;
    let case = TerminalCase::classify(&policy, params.d_max);
    let p = params.p;
    let p1 = query_matrix(params);
    let p2 = match lagging_query(&policy) {
        Some(false) => p1 * Mat2::new(1.0, 0.0, 0.0, 1.0 - p),
        Some(true) => p1 * Mat2::new(1.0 - p, 0.0, 0.0, 1.0),
        None => Mat2::IDENTITY,
    };
    let p3 = p1.scale(1.0 - p);

    let resolvent = |m: Mat2, name: &str| -> Result<Mat2> {
        (Mat2::IDENTITY - m).inverse().ok_or_else(|| {
            Error::numerical(case.tag(), format!("I - {name} is singular"))
        })
    };
    let p4 = match case {
        TerminalCase::BothBelow => Some(resolvent(p3, "P3")? * p3),
        TerminalCase::UpperAtCap => Some(resolvent(p3, "P3")? * p2),
        TerminalCase::BothAtCap => Some(resolvent(p3, "P3")? * p1),
        TerminalCase::LowerOnly => Some(resolvent(p2, "P2")? * p2),
        TerminalCase::LowerAtCap => Some(resolvent(p2, "P2")? * p1),
        TerminalCase::Never => None,
    };
    Ok(BlockMatrices {
        p1,
        p2,
        p3,
        p4,
        case,
        policy,
        params: *params,
    })
}

// ── Powers ───────────────────────────────────────────────────────────────

/// `P1^n` in closed form from `(1-λ-γ)^n`.
pub fn power_p1(params: &SubMdpParams, n: usize) -> Mat2 {
    if n == 0 {
        return Mat2::IDENTITY;
    }
    let (l, g) = (params.lambda, params.gamma);
    let sum = l + g;
    let e = powu(1.0 - sum, n);
    Mat2::new(
        (g + l * e) / sum,
        g * (1.0 - e) / sum,
        l * (1.0 - e) / sum,
        (l + g * e) / sum,
    )
}

/// `P3^n = (1-p)^n P1^n`.
pub fn power_p3(params: &SubMdpParams, n: usize) -> Mat2 {
    if n == 0 {
        return Mat2::IDENTITY;
    }
    power_p1(params, n).scale(powu(1.0 - params.p, n))
}

/// `P2^n`; closed form when `p = 1`, square-and-multiply otherwise.
pub fn power_p2(blocks: &BlockMatrices, n: usize) -> Mat2 {
    if n == 0 {
        return Mat2::IDENTITY;
    }
    if blocks.params.p == 1.0 {
        let (l, g) = (blocks.params.lambda, blocks.params.gamma);
        return match blocks.lagging_query() {
            Some(false) => Mat2::new(powu(1.0 - l, n), 0.0, l * powu(1.0 - l, n - 1), 0.0),
            Some(true) => Mat2::new(0.0, g * powu(1.0 - g, n - 1), 0.0, powu(1.0 - g, n)),
            None => Mat2::IDENTITY,
        };
    }
    blocks.p2.pow(n)
}

#[inline]
pub(crate) fn powu(x: f64, n: usize) -> f64 {
    match i32::try_from(n) {
        Ok(k) => x.powi(k),
        Err(_) => x.powf(n as f64),
    }
}
