//! The five subcommands. Each builds rows plus an optional JSON-only
//! payload; `main` renders and writes them.

use qaoi_core::dp::{cost_sweep, oracle_whittle_table, OracleOptions};
use qaoi_core::sim::{lower_bound_from_tables, run_prepared, NetworkConfig, PreparedScheduler, Scheduler};
use qaoi_core::steady_state::{stationary_distribution, stationary_oracle};
use qaoi_core::whittle::WhittleTable;
use qaoi_core::{State, SubMdpParams};
use rayon::prelude::*;
use serde::Serialize;

use crate::cache::TableCache;
use crate::config::{ExperimentConfig, Point, SweepField};
use crate::error::CliError;

/// Tolerance of the golden-section search behind the lower bound.
const BOUND_TOL: f64 = 1e-9;
const RVI_TOL: f64 = 1e-9;
const INDEX_TOL: f64 = 1e-5;
const STATIONARY_TOL: f64 = 1e-9;

/// What a command produced.
pub struct Output {
    pub rows: Rows,
    pub tables: Option<Vec<WhittleTable>>,
    pub error_free: bool,
    /// Property checks that failed, serialized for replay.
    pub failures: Vec<String>,
}

pub enum Rows {
    Index(Vec<IndexRow>),
    Simulate(Vec<SimulateRow>),
    Verify(Vec<VerifyRow>),
    Bound(Vec<BoundRow>),
    Sweep(Vec<SweepRow>),
}

#[derive(Debug, Serialize)]
pub struct IndexRow {
    pub lambda: f64,
    pub gamma: f64,
    pub p: f64,
    pub d_max: usize,
    #[serde(rename = "D")]
    pub age: usize,
    pub q: u8,
    pub index: f64,
    pub level: usize,
}

#[derive(Debug, Serialize)]
pub struct SimulateRow {
    pub policy: String,
    pub lambda: f64,
    pub gamma_summary: String,
    pub esqaoi: f64,
    pub stderr: Option<f64>,
    pub schedule_rate_mean: Option<f64>,
    pub seed: u64,
    pub runs: usize,
    pub horizon: usize,
}

#[derive(Debug, Serialize)]
pub struct VerifyRow {
    pub property: &'static str,
    pub lambda: f64,
    pub gamma: f64,
    pub p: f64,
    pub d_max: usize,
    pub passed: bool,
    pub worst_deviation: f64,
    pub tolerance: f64,
}

#[derive(Debug, Serialize)]
pub struct BoundRow {
    pub lambda: f64,
    pub gamma_summary: String,
    pub arms: usize,
    pub channels: usize,
    pub lower_bound: f64,
}

#[derive(Debug, Serialize)]
pub struct SweepRow {
    pub lambda: f64,
    pub gamma: f64,
    pub p: f64,
    pub d_max: usize,
    pub c: f64,
    pub h0: usize,
    pub h1: usize,
    pub passive_states: usize,
}

// ── Helpers ──────────────────────────────────────────────────────────────

fn distinct_arms(points: &[Point]) -> Vec<SubMdpParams> {
    let mut out: Vec<SubMdpParams> = Vec::new();
    for arm in points.iter().flat_map(|p| &p.arms) {
        if !out.contains(arm) {
            out.push(*arm);
        }
    }
    out
}

fn tables_for(cache: &TableCache, arms: &[SubMdpParams]) -> Result<Vec<WhittleTable>, CliError> {
    arms.par_iter().map(|a| cache.table(a)).collect()
}

/// Tables for each arm of a point, looked up in the distinct set.
fn point_tables(arms: &[SubMdpParams], distinct: &[SubMdpParams], tables: &[WhittleTable]) -> Vec<WhittleTable> {
    arms.iter()
        .map(|a| tables[distinct.iter().position(|d| d == a).expect("distinct covers all arms")].clone())
        .collect()
}

fn lambda_of(config: &ExperimentConfig, point: &Point) -> f64 {
    match (&config.sweep, point.value) {
        (Some(s), Some(v)) if s.field == SweepField::Lambda => v,
        _ => point.arms.iter().map(|a| a.lambda).sum::<f64>() / point.arms.len() as f64,
    }
}

/// Distinct `γ` values in arm order, joined by `|`.
fn gamma_summary(point: &Point) -> String {
    let mut seen: Vec<f64> = Vec::new();
    for a in &point.arms {
        if !seen.contains(&a.gamma) {
            seen.push(a.gamma);
        }
    }
    seen.iter().map(|g| g.to_string()).collect::<Vec<_>>().join("|")
}

fn uses_error_free(arms: &[SubMdpParams]) -> bool {
    arms.iter().any(|a| a.p == 1.0)
}

/// `0, step, 2·step, …` up to the first point at or beyond `top`, then
/// `top + 1`, where every state must be idle.
fn cost_grid(top: f64, step: f64) -> Vec<f64> {
    let steps = (top / step).ceil() as usize;
    let mut grid: Vec<f64> = (0..=steps).map(|k| k as f64 * step).collect();
    grid.push(top + 1.0);
    grid
}

// ── Commands ─────────────────────────────────────────────────────────────

pub fn index(config: &ExperimentConfig, cache: &TableCache) -> Result<Output, CliError> {
    let arms = distinct_arms(&config.points());
    let tables = tables_for(cache, &arms)?;
    let rows = tables
        .iter()
        .flat_map(|t| {
            let p = t.params;
            t.rows().into_iter().map(move |r| IndexRow {
                lambda: p.lambda,
                gamma: p.gamma,
                p: p.p,
                d_max: p.d_max,
                age: r.age,
                q: r.q,
                index: r.index,
                level: t.level_of(State::new(r.age, r.q == 1)),
            })
        })
        .collect();
    Ok(Output {
        rows: Rows::Index(rows),
        error_free: uses_error_free(&arms),
        tables: Some(tables),
        failures: Vec::new(),
    })
}

pub fn simulate(config: &ExperimentConfig, cache: &TableCache) -> Result<Output, CliError> {
    config.validate_network()?;
    let points = config.points();
    let distinct = distinct_arms(&points);
    let tables = tables_for(cache, &distinct)?;
    let mut rows = Vec::new();
    for point in &points {
        let mine = point_tables(&point.arms, &distinct, &tables);
        let lambda = lambda_of(config, point);
        let gammas = gamma_summary(point);
        for scheduler in config.schedulers() {
            let net = NetworkConfig {
                arms: point.arms.clone(),
                channels: config.channels,
                horizon: config.horizon,
                runs: config.runs,
                seed: config.seed,
                scheduler,
                burn_in: config.burn_in.unwrap_or(0),
                initial_query: config.initial_query.unwrap_or_default(),
            };
            let rule = match scheduler {
                Scheduler::Whittle => PreparedScheduler::from_whittle_tables(&mine),
                _ => PreparedScheduler::new(&scheduler, &point.arms, config.channels)?,
            };
            let report = run_prepared(&net, &rule)?;
            rows.push(SimulateRow {
                policy: report.scheduler.clone(),
                lambda,
                gamma_summary: gammas.clone(),
                esqaoi: report.esqaoi,
                stderr: Some(report.stderr),
                schedule_rate_mean: Some(report.schedule_rate_mean()),
                seed: config.seed,
                runs: config.runs,
                horizon: config.horizon,
            });
        }
        rows.push(SimulateRow {
            policy: "lower_bound".into(),
            lambda,
            gamma_summary: gammas,
            esqaoi: lower_bound_from_tables(&mine, config.channels, BOUND_TOL)?,
            stderr: None,
            schedule_rate_mean: None,
            seed: config.seed,
            runs: config.runs,
            horizon: config.horizon,
        });
    }
    Ok(Output {
        rows: Rows::Simulate(rows),
        error_free: uses_error_free(&distinct),
        tables: None,
        failures: Vec::new(),
    })
}

pub fn lower_bound(config: &ExperimentConfig, cache: &TableCache) -> Result<Output, CliError> {
    config.validate_network()?;
    let points = config.points();
    let distinct = distinct_arms(&points);
    let tables = tables_for(cache, &distinct)?;
    let rows = points
        .iter()
        .map(|point| {
            let mine = point_tables(&point.arms, &distinct, &tables);
            Ok(BoundRow {
                lambda: lambda_of(config, point),
                gamma_summary: gamma_summary(point),
                arms: point.arms.len(),
                channels: config.channels,
                lower_bound: lower_bound_from_tables(&mine, config.channels, BOUND_TOL)?,
            })
        })
        .collect::<Result<_, CliError>>()?;
    Ok(Output {
        rows: Rows::Bound(rows),
        error_free: uses_error_free(&distinct),
        tables: None,
        failures: Vec::new(),
    })
}

/// Optimal thresholds along a cost grid, per distinct arm.
pub fn sweep(config: &ExperimentConfig, cache: &TableCache) -> Result<Output, CliError> {
    let arms = distinct_arms(&config.points());
    let tables = tables_for(cache, &arms)?;
    let per_arm: Vec<Vec<SweepRow>> = tables
        .par_iter()
        .map(|t| {
            let p = t.params;
            let grid = cost_grid(t.max_index(), config.c_step());
            let sols = cost_sweep(&p, &grid, RVI_TOL)?;
            grid.iter()
                .zip(&sols)
                .map(|(&c, sol)| {
                    let policy = sol.thresholds()?;
                    Ok(SweepRow {
                        lambda: p.lambda,
                        gamma: p.gamma,
                        p: p.p,
                        d_max: p.d_max,
                        c,
                        h0: policy.h0,
                        h1: policy.h1,
                        passive_states: sol.passive_set().len(),
                    })
                })
                .collect::<Result<Vec<_>, CliError>>()
        })
        .collect::<Result<_, CliError>>()?;
    Ok(Output {
        rows: Rows::Sweep(per_arm.into_iter().flatten().collect()),
        error_free: uses_error_free(&arms),
        tables: None,
        failures: Vec::new(),
    })
}

/// Runs the property suites on every distinct arm.
pub fn verify(config: &ExperimentConfig, cache: &TableCache) -> Result<Output, CliError> {
    let arms = distinct_arms(&config.points());
    let tables = tables_for(cache, &arms)?;
    let step = config.c_step();
    let per_arm: Vec<Vec<VerifyRow>> = tables
        .par_iter()
        .map(|t| verify_arm(t, step))
        .collect::<Result<_, CliError>>()?;
    let rows: Vec<VerifyRow> = per_arm.into_iter().flatten().collect();
    let failures = rows
        .iter()
        .filter(|r| !r.passed)
        .map(|r| {
            serde_json::json!({
                "property": r.property,
                "arm": {"lambda": r.lambda, "gamma": r.gamma, "p": r.p, "d_max": r.d_max},
                "worst_deviation": r.worst_deviation,
                "tolerance": r.tolerance,
            })
            .to_string()
        })
        .collect();
    Ok(Output {
        rows: Rows::Verify(rows),
        error_free: uses_error_free(&arms),
        tables: None,
        failures,
    })
}

fn verify_arm(table: &WhittleTable, step: f64) -> Result<Vec<VerifyRow>, CliError> {
    let params = table.params;
    let row = |property, worst: f64, tolerance: f64| VerifyRow {
        property,
        lambda: params.lambda,
        gamma: params.gamma,
        p: params.p,
        d_max: params.d_max,
        passed: worst <= tolerance,
        worst_deviation: worst,
        tolerance,
    };
    let mut rows = Vec::new();

    // Passive sets along the cost grid: empty at zero, nested, full at the end.
    let grid = cost_grid(table.max_index(), step);
    let sols = cost_sweep(&params, &grid, RVI_TOL)?;
    let passive: Vec<Vec<State>> = sols.iter().map(|s| s.passive_set()).collect();
    let mut violations = passive[0].len() + (params.num_states() - passive[passive.len() - 1].len());
    for pair in passive.windows(2) {
        violations += pair[0].iter().filter(|s| !pair[1].contains(s)).count();
    }
    rows.push(row("passive_set_monotone", violations as f64, 0.0));

    if params.memoryless_queries() {
        let mut worst = 0usize;
        for sol in &sols {
            let policy = sol.thresholds()?;
            worst = worst.max(policy.h0.abs_diff(policy.h1));
        }
        rows.push(row("equal_thresholds", worst as f64, 0.0));
    }

    let opts = OracleOptions {
        bisection_tol: 1e-9,
        ..OracleOptions::default()
    };
    let oracle = oracle_whittle_table(&params, &opts)?;
    let worst = table
        .as_slice()
        .iter()
        .zip(&oracle)
        .map(|(a, b)| (a - b).abs() / b.abs().max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max);
    rows.push(row("index_matches_oracle", worst, INDEX_TOL));

    let mut worst = 0.0f64;
    for b in &table.boundaries {
        let fast = stationary_distribution(&params, &b.policy)?;
        let slow = stationary_oracle(&params, &b.policy)?;
        for (x, y) in fast.mu.prob.iter().zip(&slow.mu.prob) {
            worst = worst.max((x - y).abs());
        }
        worst = worst.max((fast.j - slow.j).abs() / slow.j.abs().max(1.0));
        worst = worst.max((fast.a - slow.a).abs());
    }
    rows.push(row("stationary_matches_oracle", worst, STATIONARY_TOL));
    Ok(rows)
}
