use rayon::prelude::*;

use crate::error::Result;
use crate::intervention::InterventionStrategy;
use crate::mdp::PolicyTable;
use crate::rift::{prior_from_intervention_rl, random_prior, rift_loop, BootstrapMode, RiftConfig, RunMetrics};
use crate::rng::hash64;

use super::{build_prior, mean, run_sweep, thread_pool, Environment, ExperimentConfig};

/// Regularization strength used when a scenario calls for the default.
pub const DEFAULT_OMEGA: f64 = 0.001;

const PRIOR_STREAM: u64 = 0x0050_5249_4f52;

/// Final success of the regularized and unregularized loops from one prior,
/// averaged over seeds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Comparison {
    pub rift: f64,
    pub rlif: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LargeOmega {
    pub omega: f64,
    pub prior_success: f64,
    pub success: f64,
    pub kl_to_prior: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FailureCaseReport {
    pub threshold: f64,
    /// Prior produced by the unregularized baseline itself.
    pub intervention_rl: Comparison,
    /// Dirichlet(1) prior.
    pub random: Comparison,
    pub large_omega: LargeOmega,
}

/// Mean final success per threshold (rows) and `ω` (columns).
#[derive(Clone, Debug, PartialEq)]
pub struct OmegaAblation {
    pub omegas: Vec<f64>,
    pub thresholds: Vec<f64>,
    pub success: Vec<Vec<f64>>,
}

impl OmegaAblation {
    /// Index of the best `ω` for threshold row `b`; ties go to the smaller `ω`.
    pub fn best_index(&self, b: usize) -> usize {
        let row = &self.success[b];
        let mut best = 0;
        for (i, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = i;
            }
        }
        best
    }

    pub fn best_omega(&self, b: usize) -> f64 {
        self.omegas[self.best_index(b)]
    }

    /// Whether two neighbouring `ω` values both come within `tol` of the best.
    pub fn has_window(&self, b: usize, tol: f64) -> bool {
        let row = &self.success[b];
        let best = row[self.best_index(b)];
        row.windows(2).any(|w| w.iter().all(|v| *v >= best - tol))
    }
}

/// Mean final metrics of termination-mode training with a zero residual
/// reward, next to the prior and the truncation-mode control.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PathologyReport {
    pub prior_success: f64,
    pub prior_intervention_rate: f64,
    pub success: f64,
    pub intervention_rate: f64,
    pub kl_to_prior: f64,
    /// Largest per-state TV between the truncation-mode policy and the prior.
    pub truncation_tv: f64,
}

impl PathologyReport {
    pub fn rate_drop(&self) -> f64 {
        self.prior_intervention_rate - self.intervention_rate
    }

    /// The termination run reduced interventions by at least 0.1 while either
    /// losing success or drifting from the prior by KL 0.1.
    pub fn termination_pathology(&self) -> bool {
        self.rate_drop() >= 0.1 && (self.success < self.prior_success || self.kl_to_prior >= 0.1)
    }
}

fn runs(
    env: &Environment,
    prior: &PolicyTable,
    config: &ExperimentConfig,
    threshold: f64,
    adjust: impl Fn(&mut RiftConfig) + Sync,
) -> Result<Vec<(PolicyTable, RunMetrics)>> {
    let strategy = InterventionStrategy::q_gap(env.expert_q.clone(), threshold)?;
    config
        .seeds
        .par_iter()
        .map(|&seed| {
            let mut rc = config.rift_config(0.0, seed);
            adjust(&mut rc);
            rift_loop(&env.mdp, prior, &strategy, &rc, env.mdp.reward())
        })
        .collect()
}

fn mean_final(runs: &[(PolicyTable, RunMetrics)], f: impl Fn(&crate::rift::RoundMetrics) -> f64) -> f64 {
    mean(&runs.iter().filter_map(|(_, m)| m.last().map(&f)).collect::<Vec<_>>())
}

fn mean_initial(runs: &[(PolicyTable, RunMetrics)], f: impl Fn(&crate::rift::RoundMetrics) -> f64) -> f64 {
    mean(&runs.iter().filter_map(|(_, m)| m.initial().map(&f)).collect::<Vec<_>>())
}

fn compare(env: &Environment, prior: &PolicyTable, config: &ExperimentConfig, threshold: f64) -> Result<Comparison> {
    let rift = runs(env, prior, config, threshold, |c| c.omega = DEFAULT_OMEGA)?;
    let rlif = runs(env, prior, config, threshold, |_| {})?;
    Ok(Comparison {
        rift: mean_final(&rift, |m| m.success_rate),
        rlif: mean_final(&rlif, |m| m.success_rate),
    })
}

/// The three settings where regularizing toward the prior should not help:
/// a prior that is already the baseline's output, a random prior, and an
/// overwhelming `ω` that pins the policy to the configured prior.
pub fn failure_cases(
    env: &Environment,
    config: &ExperimentConfig,
    threshold: f64,
    large_omega: f64,
    jobs: Option<usize>,
) -> Result<FailureCaseReport> {
    thread_pool(jobs)?.install(|| {
        let strategy = InterventionStrategy::q_gap(env.expert_q.clone(), threshold)?;
        let prior_seed = hash64(config.seeds[0], PRIOR_STREAM);
        let rl_prior = prior_from_intervention_rl(&env.mdp, &strategy, &config.rift_config(0.0, prior_seed))?;
        let intervention_rl = compare(env, &rl_prior, config, threshold)?;

        let rand_prior = random_prior(env.mdp.num_states(), env.mdp.num_actions(), 1.0, prior_seed)?;
        let random = compare(env, &rand_prior, config, threshold)?;

        let prior = build_prior(env, config, threshold)?;
        let pinned = runs(env, &prior, config, threshold, |c| c.omega = large_omega)?;
        Ok(FailureCaseReport {
            threshold,
            intervention_rl,
            random,
            large_omega: LargeOmega {
                omega: large_omega,
                prior_success: mean_initial(&pinned, |m| m.success_rate),
                success: mean_final(&pinned, |m| m.success_rate),
                kl_to_prior: mean_final(&pinned, |m| m.kl_to_prior),
            },
        })
    })
}

/// Sweeps `omegas` under each threshold with the configured prior.
pub fn omega_ablation(
    env: &Environment,
    config: &ExperimentConfig,
    omegas: &[f64],
    thresholds: &[f64],
    jobs: Option<usize>,
) -> Result<OmegaAblation> {
    let sweep_config = ExperimentConfig {
        omega_list: omegas.to_vec(),
        b_list: thresholds.to_vec(),
        ..config.clone()
    };
    let result = run_sweep(env, &sweep_config, jobs)?;
    let success = thresholds
        .iter()
        .map(|&b| omegas.iter().map(|&w| result.mean_final_success(w, b)).collect())
        .collect();
    Ok(OmegaAblation {
        omegas: omegas.to_vec(),
        thresholds: thresholds.to_vec(),
        success,
    })
}

/// Termination-mode training on the configured prior with the residual
/// reward zeroed, plus the same run in truncation mode as a control.
pub fn termination_pathology(
    env: &Environment,
    config: &ExperimentConfig,
    threshold: f64,
    omega: f64,
    jobs: Option<usize>,
) -> Result<PathologyReport> {
    thread_pool(jobs)?.install(|| {
        let prior = build_prior(env, config, threshold)?.ensure_interior(crate::mdp::PRIOR_MIN_PROB);
        let zeroed = |mode: BootstrapMode| {
            move |c: &mut RiftConfig| {
                c.omega = omega;
                c.bootstrap_mode = mode;
                c.zero_residual_reward = true;
                c.stop_intervention_rate = None;
            }
        };
        let term = runs(env, &prior, config, threshold, zeroed(BootstrapMode::Termination))?;
        let trunc = runs(env, &prior, config, threshold, zeroed(BootstrapMode::Truncation))?;
        let truncation_tv = trunc.iter().map(|(pi, _)| pi.max_tv_distance(&prior)).fold(0.0, f64::max);
        Ok(PathologyReport {
            prior_success: mean_initial(&term, |m| m.success_rate),
            prior_intervention_rate: mean_initial(&term, |m| m.intervention_rate),
            success: mean_final(&term, |m| m.success_rate),
            intervention_rate: mean_final(&term, |m| m.intervention_rate),
            kl_to_prior: mean_final(&term, |m| m.kl_to_prior),
            truncation_tv,
        })
    })
}
