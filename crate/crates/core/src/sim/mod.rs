//! Multi-node uplink simulator: `N` arms share `M` channels per slot.
//!
//! Every episode starts from age 1 on every arm and runs `horizon` slots.
//! Each arm draws its channel outcome and query transition from its own
//! ChaCha8 stream, keyed by the master seed and `(episode, arm)`, so two
//! schedulers run on the same seed see the same channel and query
//! randomness. Episodes run in parallel; their results are reduced in
//! episode order, so a report depends only on the configuration.

mod bound;
mod schedulers;

pub use bound::{dual_value, lower_bound, lower_bound_from_tables};
pub use schedulers::{greedy_rank, greedy_score, schedule_top, whittle_schedule, PreparedScheduler, Scheduler};

use schedulers::Scratch;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Action, State, SubMdpParams};

// ── Configuration ────────────────────────────────────────────────────────

/// How the query flags of an episode's first slot are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitialQuery {
    /// From each arm's stationary split, `P(q = 1) = λ/(λ+γ)`.
    #[default]
    Stationary,
    /// No query pending on any arm.
    Idle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub arms: Vec<SubMdpParams>,
    pub channels: usize,
    pub horizon: usize,
    pub runs: usize,
    pub seed: u64,
    pub scheduler: Scheduler,
    /// Slots discarded from the start of each episode.
    #[serde(default)]
    pub burn_in: usize,
    #[serde(default)]
    pub initial_query: InitialQuery,
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        let n = self.arms.len();
        if self.channels == 0 || self.channels >= n {
            return Err(Error::Domain(format!(
                "need 0 < channels < arms, got {} channels for {n} arms",
                self.channels
            )));
        }
        if self.horizon == 0 || self.runs == 0 {
            return Err(Error::Domain("horizon and runs must be at least 1".into()));
        }
        if self.burn_in >= self.horizon {
            return Err(Error::Domain(format!(
                "burn-in {} leaves no slots of a {}-slot horizon",
                self.burn_in, self.horizon
            )));
        }
        for arm in &self.arms {
            arm.validate()?;
        }
        self.scheduler.validate()
    }
}

/// Joint state of all arms.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkState {
    pub arms: Vec<State>,
    pub slot: u64,
}

impl NetworkState {
    /// Every arm at age 1 with no query pending.
    pub fn fresh(n: usize) -> Self {
        Self {
            arms: vec![State::new(1, false); n],
            slot: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub scheduler: String,
    /// Mean over episodes of `Σ_t Σ_i D_i q_i / (N·T)`.
    pub esqaoi: f64,
    /// Standard error of `esqaoi` across episodes; zero for a single run.
    pub stderr: f64,
    /// Average QAoI of each arm.
    pub per_arm_qaoi: Vec<f64>,
    /// Fraction of slots each arm was scheduled.
    pub schedule_rate: Vec<f64>,
    pub runs: usize,
    pub horizon: usize,
    pub seed: u64,
}

impl SimulationReport {
    pub fn schedule_rate_mean(&self) -> f64 {
        pairwise_sum(&self.schedule_rate) / self.schedule_rate.len() as f64
    }
}

// ── Dynamics ─────────────────────────────────────────────────────────────

/// Stream of arm `arm` (or the scheduler's, at `arm = N`) in `episode`.
pub fn arm_stream(seed: u64, episode: usize, arm: usize, n: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((episode * (n + 1) + arm) as u64);
    rng
}

/// Advances one arm. Both uniforms are drawn whatever the action, so the
/// stream stays aligned across schedulers.
#[inline]
fn advance<R: Rng>(params: &SubMdpParams, s: State, scheduled: bool, rng: &mut R) -> State {
    let delivery: f64 = rng.random();
    let flip: f64 = rng.random();
    let age = if scheduled && delivery < params.p {
        1
    } else {
        params.next_age(s.age)
    };
    let query = if s.query {
        flip >= params.gamma
    } else {
        flip < params.lambda
    };
    State::new(age, query)
}

/// One slot: each scheduled arm is delivered with its success probability,
/// every query flag moves along its chain, independently per arm.
pub fn step<R: Rng>(
    config: &NetworkConfig,
    state: &NetworkState,
    actions: &[Action],
    rngs: &mut [R],
) -> Result<NetworkState> {
    let n = config.arms.len();
    if actions.len() != n || state.arms.len() != n || rngs.len() < n {
        return Err(Error::Contract(format!(
            "{n} arms need {n} states, actions and streams"
        )));
    }
    let scheduled = actions.iter().filter(|a| a.is_active()).count();
    if scheduled > config.channels {
        return Err(Error::Contract(format!(
            "{scheduled} arms scheduled with {} channels",
            config.channels
        )));
    }
    let arms = config
        .arms
        .iter()
        .zip(&state.arms)
        .zip(actions)
        .zip(rngs.iter_mut())
        .map(|(((params, &s), a), rng)| {
            params.check_state(s)?;
            Ok(advance(params, s, a.is_active(), rng))
        })
        .collect::<Result<_>>()?;
    Ok(NetworkState {
        arms,
        slot: state.slot + 1,
    })
}

// ── Experiments ──────────────────────────────────────────────────────────

/// Per-arm totals of one episode over the measured slots.
struct Episode {
    qaoi: Vec<f64>,
    scheduled: Vec<u64>,
}

fn run_episode(config: &NetworkConfig, rule: &PreparedScheduler, episode: usize) -> Episode {
    let n = config.arms.len();
    let mut rngs: Vec<ChaCha8Rng> = (0..=n).map(|i| arm_stream(config.seed, episode, i, n)).collect();
    let mut states: Vec<State> = config
        .arms
        .iter()
        .zip(rngs.iter_mut())
        .map(|(params, rng)| {
            let draw: f64 = rng.random();
            let queried = match config.initial_query {
                InitialQuery::Stationary => draw < params.lambda / (params.lambda + params.gamma),
                InitialQuery::Idle => false,
            };
            State::new(1, queried)
        })
        .collect();
    let mut qaoi = vec![0.0; n];
    let mut scheduled = vec![0u64; n];
    let mut actions = vec![Action::Idle; n];
    let (arm_rngs, scheduler_rng) = rngs.split_at_mut(n);
    let scheduler_rng = &mut scheduler_rng[0];
    let mut scratch = Scratch::default();
    for t in 0..config.horizon {
        rule.choose_with(&states, config.channels, scheduler_rng, &mut actions, &mut scratch);
        if t >= config.burn_in {
            for (i, s) in states.iter().enumerate() {
                if s.query {
                    qaoi[i] += s.age as f64;
                }
                scheduled[i] += actions[i].is_active() as u64;
            }
        }
        for (i, s) in states.iter_mut().enumerate() {
            *s = advance(&config.arms[i], *s, actions[i].is_active(), &mut arm_rngs[i]);
        }
    }
    Episode { qaoi, scheduled }
}

/// Runs `runs` episodes with the configured scheduler.
pub fn run_experiment(config: &NetworkConfig) -> Result<SimulationReport> {
    config.validate()?;
    let rule = PreparedScheduler::new(&config.scheduler, &config.arms, config.channels)?;
    run_prepared(config, &rule)
}

/// As [`run_experiment`] with a scheduler already prepared for these arms,
/// so index tables can be shared across runs.
pub fn run_prepared(config: &NetworkConfig, rule: &PreparedScheduler) -> Result<SimulationReport> {
    config.validate()?;
    let n = config.arms.len();
    if rule.arms() != n {
        return Err(Error::Contract(format!(
            "scheduler prepared for {} arms, network has {n}",
            rule.arms()
        )));
    }
    let episodes: Vec<Episode> = (0..config.runs)
        .into_par_iter()
        .map(|e| run_episode(config, rule, e))
        .collect();

    let slots = (config.horizon - config.burn_in) as f64;
    let per_episode: Vec<f64> = episodes
        .iter()
        .map(|e| pairwise_sum(&e.qaoi) / (n as f64 * slots))
        .collect();
    let runs = config.runs as f64;
    let esqaoi = pairwise_sum(&per_episode) / runs;
    let stderr = if config.runs > 1 {
        let dev: Vec<f64> = per_episode.iter().map(|x| (x - esqaoi).powi(2)).collect();
        (pairwise_sum(&dev) / (runs - 1.0) / runs).sqrt()
    } else {
        0.0
    };
    let column = |f: &dyn Fn(&Episode) -> f64| -> f64 {
        let xs: Vec<f64> = episodes.iter().map(f).collect();
        pairwise_sum(&xs) / (runs * slots)
    };
    let per_arm_qaoi = (0..n).map(|i| column(&|e| e.qaoi[i])).collect();
    let schedule_rate = (0..n).map(|i| column(&|e| e.scheduled[i] as f64)).collect();
    Ok(SimulationReport {
        scheduler: config.scheduler.name().to_string(),
        esqaoi,
        stderr,
        per_arm_qaoi,
        schedule_rate,
        runs: config.runs,
        horizon: config.horizon,
        seed: config.seed,
    })
}

/// Evaluates `f` once per distinct arm, in parallel.
pub(crate) fn per_distinct_arm<T: Clone + Send>(
    arms: &[SubMdpParams],
    f: impl Fn(&SubMdpParams) -> Result<T> + Sync,
) -> Result<Vec<T>> {
    let mut distinct: Vec<SubMdpParams> = Vec::new();
    for a in arms {
        if !distinct.contains(a) {
            distinct.push(*a);
        }
    }
    let values: Vec<T> = distinct.par_iter().map(&f).collect::<Result<_>>()?;
    Ok(arms
        .iter()
        .map(|a| values[distinct.iter().position(|d| d == a).unwrap()].clone())
        .collect())
}

/// Sum with `O(log n)` rounding growth; the split points depend only on
/// the length, so results are reproducible.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 8 {
        return xs.iter().sum();
    }
    let (a, b) = xs.split_at(xs.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}
