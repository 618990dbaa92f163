//! Residual intervention fine-tuning: alternate e-stop data collection with a
//! residual fit anchored to a prior policy. Setting `ω = 0` turns the same
//! loop into the unregularized baseline that learns from the stop signal
//! alone.

mod fit;
mod priors;

pub use fit::{estimate_phi, estimate_phi_counts, fit_residual_from_dataset, PhiEstimate};
pub use priors::{prior_from_demos, prior_from_intervention_rl, random_prior};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::intervention::{
    collect_with_phi, rollout_with_phi, ActionSelection, EndCause, InterventionStrategy, RolloutDataset,
};
use crate::maxent::SolveOptions;
use crate::mdp::{exact_visitation, PolicyTable, TabularMdp, PRIOR_MIN_PROB};
use crate::rng::hash64;
use crate::rql::discounted_kl;
use crate::table::SaTable;

/// How a stopped transition is bootstrapped.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BootstrapMode {
    /// Target `−e + γ V(s')` for every record.
    #[default]
    Truncation,
    /// Target `−e` with no bootstrap when `e = 1`.
    Termination,
}

/// Where the fit gets its stop statistics from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PhiEstimator {
    /// Empirical `φ̂` with the known dynamics.
    #[default]
    ModelBased,
    /// Fitted iteration over the recorded transitions only.
    SampleBased,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalSettings {
    pub episodes: usize,
    pub max_horizon: usize,
    pub success_threshold: f64,
    /// Act with the per-state mode instead of sampling.
    pub deterministic: bool,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            episodes: 1000,
            max_horizon: 100,
            success_threshold: 0.5,
            deterministic: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RiftConfig {
    pub omega: f64,
    pub rounds: usize,
    pub episodes_per_round: usize,
    pub max_horizon: usize,
    pub bootstrap_mode: BootstrapMode,
    /// Entropy temperature of the unregularized fit, used only when `ω = 0`.
    pub rlif_temperature: f64,
    /// `φ̂` assumed for pairs the data never visited.
    pub phi_default: f64,
    /// Stop after a round whose evaluation intervention rate is below this.
    pub stop_intervention_rate: Option<f64>,
    pub seed: u64,
    pub fresh_data_per_round: bool,
    pub estimator: PhiEstimator,
    /// Replace the residual reward `−φ̂` by zero (the stop event still shapes
    /// termination-mode targets).
    pub zero_residual_reward: bool,
    pub eval: EvalSettings,
    pub solve: SolveOptions,
}

impl Default for RiftConfig {
    fn default() -> Self {
        Self {
            omega: 0.001,
            rounds: 5,
            episodes_per_round: 100,
            max_horizon: 100,
            bootstrap_mode: BootstrapMode::Truncation,
            rlif_temperature: 0.01,
            phi_default: 0.0,
            stop_intervention_rate: None,
            seed: 0,
            fresh_data_per_round: false,
            estimator: PhiEstimator::ModelBased,
            zero_residual_reward: false,
            eval: EvalSettings::default(),
            solve: SolveOptions::default(),
        }
    }
}

impl RiftConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.omega >= 0.0 && self.omega.is_finite()) {
            return Err(Error::Config(format!("omega must be finite and nonnegative, got {}", self.omega)));
        }
        if self.rounds == 0 || self.episodes_per_round == 0 || self.max_horizon == 0 {
            return Err(Error::Config("rounds, episodes_per_round and max_horizon must be positive".into()));
        }
        if !(self.rlif_temperature > 0.0 && self.rlif_temperature.is_finite()) {
            return Err(Error::Config(format!(
                "rlif_temperature must be positive, got {}",
                self.rlif_temperature
            )));
        }
        if !(0.0..=1.0).contains(&self.phi_default) {
            return Err(Error::Config(format!("phi_default {} outside [0, 1]", self.phi_default)));
        }
        if self.eval.episodes == 0 || self.eval.max_horizon == 0 {
            return Err(Error::Config("evaluation episodes and horizon must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RoundMetrics {
    /// Round 0 describes the starting policy.
    pub round: usize,
    pub success_rate: f64,
    pub mean_return: f64,
    pub intervention_rate: f64,
    pub kl_to_prior: f64,
    pub dataset_size: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunMetrics {
    pub rounds: Vec<RoundMetrics>,
}

impl RunMetrics {
    pub fn initial(&self) -> Option<&RoundMetrics> {
        self.rounds.first()
    }

    pub fn last(&self) -> Option<&RoundMetrics> {
        self.rounds.last()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PolicyEvaluation {
    pub success_rate: f64,
    pub mean_return: f64,
    /// `E_d[V^π]` for the plain discounted return; only for stochastic evaluation.
    pub discounted_return: Option<f64>,
}

// Fixed evaluation streams so that identical policies score identically.
const EVAL_STREAM: u64 = 0x6576_616c;
const RATE_STREAM: u64 = 0x7261_7465;

fn selection(deterministic: bool) -> ActionSelection {
    if deterministic {
        ActionSelection::Mode
    } else {
        ActionSelection::Sample
    }
}

/// Rollouts in the plain MDP under `eval_reward`; an episode succeeds when its
/// undiscounted return reaches `success_threshold`.
pub fn evaluate_policy(
    mdp: &TabularMdp,
    policy: &PolicyTable,
    eval_reward: &SaTable,
    settings: &EvalSettings,
    seed: u64,
) -> Result<PolicyEvaluation> {
    mdp.check_policy(policy)?;
    mdp.check_table(eval_reward, "evaluation reward")?;
    if settings.episodes == 0 {
        return Err(Error::Argument("evaluation needs at least one episode".into()));
    }
    let no_stop = SaTable::zeros(mdp.num_states(), mdp.num_actions());
    let mut successes = 0usize;
    let mut total = 0.0;
    for i in 0..settings.episodes {
        let ep = rollout_with_phi(
            mdp,
            policy,
            &no_stop,
            settings.max_horizon,
            hash64(seed, i as u64),
            selection(settings.deterministic),
        )?;
        let ret: f64 = ep.records.iter().map(|r| eval_reward[(r.state, r.action)]).sum();
        total += ret;
        if ret >= settings.success_threshold {
            successes += 1;
        }
    }
    let discounted_return = if settings.deterministic {
        None
    } else {
        let occ = exact_visitation(mdp, policy)?;
        Some(occ.mu.dot(eval_reward) / (1.0 - mdp.discount()))
    };
    Ok(PolicyEvaluation {
        success_rate: successes as f64 / settings.episodes as f64,
        mean_return: total / settings.episodes as f64,
        discounted_return,
    })
}

#[allow(clippy::too_many_arguments)]
fn measure_round(
    mdp: &TabularMdp,
    policy: &PolicyTable,
    prior: &PolicyTable,
    phi: &SaTable,
    eval_reward: &SaTable,
    config: &RiftConfig,
    round: usize,
    dataset_size: usize,
) -> Result<RoundMetrics> {
    let eval = evaluate_policy(mdp, policy, eval_reward, &config.eval, hash64(config.seed, EVAL_STREAM))?;
    let rate_data = collect_with_phi(
        mdp,
        policy,
        phi,
        config.eval.episodes,
        config.eval.max_horizon,
        hash64(config.seed, RATE_STREAM),
        selection(config.eval.deterministic),
    )?;
    let stopped = rate_data.episode_bounds.iter().filter(|b| b.end_cause == EndCause::Estop).count();
    Ok(RoundMetrics {
        round,
        success_rate: eval.success_rate,
        mean_return: eval.mean_return,
        intervention_rate: stopped as f64 / config.eval.episodes as f64,
        kl_to_prior: discounted_kl(mdp, policy, prior)?.max(0.0),
        dataset_size,
    })
}

/// Collect-then-fit loop started from `prior`.
///
/// Round `k` collects `episodes_per_round` e-stop episodes with the current
/// policy from stream `hash64(seed, k)` and refits on the cumulative data (or
/// on the fresh batch alone). With `ω = 0` the fit ignores the prior and the
/// KL metric is still measured against it.
pub fn rift_loop(
    mdp: &TabularMdp,
    prior: &PolicyTable,
    strategy: &InterventionStrategy,
    config: &RiftConfig,
    eval_reward: &SaTable,
) -> Result<(PolicyTable, RunMetrics)> {
    config.validate()?;
    mdp.check_policy(prior)?;
    let phi = strategy.phi_table(mdp.num_states(), mdp.num_actions())?;
    let prior = if config.omega > 0.0 {
        prior.ensure_interior(PRIOR_MIN_PROB)
    } else {
        prior.clone()
    };
    let mut metrics = RunMetrics::default();
    metrics.rounds.push(measure_round(mdp, &prior, &prior, &phi, eval_reward, config, 0, 0)?);
    let mut policy = prior.clone();
    let mut data = RolloutDataset::default();
    for round in 1..=config.rounds {
        let batch = collect_with_phi(
            mdp,
            &policy,
            &phi,
            config.episodes_per_round,
            config.max_horizon,
            hash64(config.seed, round as u64),
            ActionSelection::Sample,
        )?;
        if config.fresh_data_per_round {
            data = batch;
        } else {
            data.extend(batch);
        }
        policy = fit_residual_from_dataset(mdp, &prior, &data, config)?;
        let m = measure_round(mdp, &policy, &prior, &phi, eval_reward, config, round, data.len())?;
        metrics.rounds.push(m);
        if config.stop_intervention_rate.is_some_and(|t| m.intervention_rate < t) {
            break;
        }
    }
    Ok((policy, metrics))
}

/// The unregularized baseline: the same loop with `ω = 0`, fitting max-ent
/// RL on `−φ̂` from `Q ≡ 0`. `initial_policy` only collects the first batch.
pub fn rlif_train(
    mdp: &TabularMdp,
    initial_policy: &PolicyTable,
    strategy: &InterventionStrategy,
    config: &RiftConfig,
    eval_reward: &SaTable,
) -> Result<(PolicyTable, RunMetrics)> {
    let config = RiftConfig {
        omega: 0.0,
        ..config.clone()
    };
    rift_loop(mdp, initial_policy, strategy, &config, eval_reward)
}
