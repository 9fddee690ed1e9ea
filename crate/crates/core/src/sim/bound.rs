//! Lower bound on the achievable average QAoI from the relaxed problem,
//! where the channel budget only has to hold on average.
//!
//! For a cost `C` per transmission the relaxation decouples, and each arm's
//! best threshold policy is one of its table's boundary policies. The dual
//! function is concave and piecewise linear in `C`. Any value of it is a
//! valid bound; the search only tightens it.

use super::{per_distinct_arm, NetworkConfig};
use crate::error::{Error, Result};
use crate::whittle::{whittle_table, WhittleTable};

const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// `(1/N)[Σ_i min_π (J_i^π + C·A_i^π) − C·M]`.
pub fn dual_value(tables: &[WhittleTable], channels: usize, c: f64) -> f64 {
    let relaxed: f64 = tables
        .iter()
        .map(|t| {
            t.boundaries
                .iter()
                .map(|b| b.j + c * b.a)
                .fold(f64::INFINITY, f64::min)
        })
        .sum();
    (relaxed - c * channels as f64) / tables.len() as f64
}

/// Maximises the dual over `C ∈ [0, max index]` by golden-section search.
pub fn lower_bound_from_tables(tables: &[WhittleTable], channels: usize, tol: f64) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(Error::Domain(format!("tolerance must be positive, got {tol}")));
    }
    if tables.is_empty() {
        return Err(Error::Domain("no arms".into()));
    }
    let g = |c: f64| dual_value(tables, channels, c);
    let (mut lo, mut hi) = (0.0, tables.iter().map(|t| t.max_index()).fold(0.0, f64::max));
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let (mut g1, mut g2) = (g(x1), g(x2));
    while hi - lo > tol {
        if g1 < g2 {
            lo = x1;
            x1 = x2;
            g1 = g2;
            x2 = lo + INV_PHI * (hi - lo);
            g2 = g(x2);
        } else {
            hi = x2;
            x2 = x1;
            g2 = g1;
            x1 = hi - INV_PHI * (hi - lo);
            g1 = g(x1);
        }
    }
    Ok(g1.max(g2).max(g(0.0)))
}

pub fn lower_bound(config: &NetworkConfig, tol: f64) -> Result<f64> {
    let tables = per_distinct_arm(&config.arms, whittle_table)?;
    lower_bound_from_tables(&tables, config.channels, tol)
}
