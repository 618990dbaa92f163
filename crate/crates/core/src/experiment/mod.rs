//! Seeded gridworld sweeps over the regularization strength `ω`, the Q-gap
//! threshold `B` and the seed, with CSV reports.

mod calibrate;
mod config;
mod report;
mod scenarios;

pub use calibrate::{calibrate_prior_demos, calibrate_thresholds, qgap_candidates, Thresholds, SUCCESS_BANDS};
pub use config::{Environment, ExperimentConfig, PriorSpec};
pub use report::{report, summarize, write_metrics_csv, SummaryRow, METRICS_HEADER};
pub use scenarios::{
    failure_cases, omega_ablation, termination_pathology, Comparison, FailureCaseReport, LargeOmega, OmegaAblation,
    PathologyReport, DEFAULT_OMEGA,
};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::intervention::InterventionStrategy;
use crate::mdp::PolicyTable;
use crate::rift::{prior_from_demos, prior_from_intervention_rl, random_prior, rift_loop, RoundMetrics, RunMetrics};

/// Output directory used when none is given on the command line.
pub const OUT_DIR_ENV: &str = "RIFT_LAB_OUT";

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RunKey {
    pub omega: f64,
    pub threshold: f64,
    pub seed: u64,
}

impl RunKey {
    pub fn run_id(&self) -> String {
        format!("w{}-b{}-s{}", self.omega, self.threshold, self.seed)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunResult {
    pub key: RunKey,
    pub metrics: RunMetrics,
}

/// All runs of a sweep in `(ω, B, seed)` order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SweepResult {
    pub runs: Vec<RunResult>,
}

impl SweepResult {
    /// `(key, round metrics)` for every round of every run.
    pub fn rows(&self) -> impl Iterator<Item = (&RunKey, &RoundMetrics)> {
        self.runs.iter().flat_map(|r| r.metrics.rounds.iter().map(move |m| (&r.key, m)))
    }

    pub fn final_rows(&self) -> impl Iterator<Item = (&RunKey, &RoundMetrics)> {
        self.runs.iter().filter_map(|r| r.metrics.last().map(|m| (&r.key, m)))
    }

    /// Final-round values of `field` for one `(ω, B)` cell, in seed order.
    pub fn final_values(&self, omega: f64, threshold: f64, field: impl Fn(&RoundMetrics) -> f64) -> Vec<f64> {
        self.final_rows()
            .filter(|(k, _)| k.omega == omega && k.threshold == threshold)
            .map(|(_, m)| field(m))
            .collect()
    }

    pub fn mean_final_success(&self, omega: f64, threshold: f64) -> f64 {
        mean(&self.final_values(omega, threshold, |m| m.success_rate))
    }
}

pub(crate) fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        f64::NAN
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Builds the configured prior; `threshold` is the cell's Q-gap threshold.
pub fn build_prior(env: &Environment, config: &ExperimentConfig, threshold: f64) -> Result<PolicyTable> {
    let mdp = &env.mdp;
    match &config.prior {
        PriorSpec::Demos { demos, smoothing, seed } => {
            prior_from_demos(mdp, &env.expert, *demos, *smoothing, config.max_horizon, *seed)
        }
        PriorSpec::InterventionRl { threshold: fixed, seed } => {
            let strategy = InterventionStrategy::q_gap(env.expert_q.clone(), fixed.unwrap_or(threshold))?;
            prior_from_intervention_rl(mdp, &strategy, &config.rift_config(0.0, *seed))
        }
        PriorSpec::Random { concentration, seed } => {
            random_prior(mdp.num_states(), mdp.num_actions(), *concentration, *seed)
        }
    }
}

/// One fine-tuning run from `prior` against the Q-gap strategy at `key.threshold`.
pub fn run_cell(env: &Environment, prior: &PolicyTable, config: &ExperimentConfig, key: RunKey) -> Result<RunMetrics> {
    let strategy = InterventionStrategy::q_gap(env.expert_q.clone(), key.threshold)?;
    let rift = config.rift_config(key.omega, key.seed);
    rift_loop(&env.mdp, prior, &strategy, &rift, env.mdp.reward()).map(|(_, metrics)| metrics)
}

/// Mean final success over the configured seeds for one `(ω, B)` cell from
/// `prior`; seeds run on the current rayon pool.
pub fn mean_final_success_at(
    env: &Environment,
    prior: &PolicyTable,
    config: &ExperimentConfig,
    omega: f64,
    threshold: f64,
) -> Result<f64> {
    let finals = config
        .seeds
        .par_iter()
        .map(|&seed| {
            let key = RunKey { omega, threshold, seed };
            run_cell(env, prior, config, key).map(|m| m.last().map_or(0.0, |r| r.success_rate))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(mean(&finals))
}

pub(crate) fn thread_pool(jobs: Option<usize>) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| Error::Argument(format!("cannot start worker pool: {e}")))
}

/// Runs every `(ω, B, seed)` cell. Cells run on up to `jobs` threads; results
/// are returned in cross-product order regardless.
pub fn run_experiment(config: &ExperimentConfig, jobs: Option<usize>) -> Result<SweepResult> {
    run_sweep(&config.environment()?, config, jobs)
}

/// [`run_experiment`] on an already compiled environment.
pub fn run_sweep(env: &Environment, config: &ExperimentConfig, jobs: Option<usize>) -> Result<SweepResult> {
    let thresholds = config.require_thresholds()?;
    let pool = thread_pool(jobs)?;
    let priors: Vec<PolicyTable> = match config.prior {
        PriorSpec::InterventionRl { threshold: None, .. } => pool.install(|| {
            thresholds
                .par_iter()
                .map(|&b| build_prior(env, config, b).map_err(|e| e.in_cell(format!("prior for B={b}"))))
                .collect::<Result<_>>()
        })?,
        _ => vec![build_prior(env, config, thresholds[0])?; thresholds.len()],
    };
    let mut cells = Vec::new();
    for &omega in &config.omega_list {
        for (bi, &threshold) in thresholds.iter().enumerate() {
            for &seed in &config.seeds {
                cells.push((bi, RunKey { omega, threshold, seed }));
            }
        }
    }
    let runs = pool.install(|| {
        cells
            .par_iter()
            .map(|&(bi, key)| {
                run_cell(env, &priors[bi], config, key)
                    .map(|metrics| RunResult { key, metrics })
                    .map_err(|e| e.in_cell(key.run_id()))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(SweepResult { runs })
}
