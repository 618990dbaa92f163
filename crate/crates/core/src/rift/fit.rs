use crate::error::{Error, Result};
use crate::intervention::RolloutDataset;
use crate::maxent::{policy_from_q, soft_max, soft_value_iteration, SoftQTable};
use crate::mdp::{PolicyTable, TabularMdp};
use crate::rql::{check_interior, residual_soft_q_iteration, residual_soft_values};
use crate::table::SaTable;

use super::{BootstrapMode, PhiEstimator, RiftConfig};

/// Per-pair visit counts and stop frequencies from a dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct PhiEstimate {
    pub phi: SaTable,
    pub visits: Vec<usize>,
}

/// Empirical stop probability per pair; unvisited pairs get `default`.
pub fn estimate_phi(dataset: &RolloutDataset, num_states: usize, num_actions: usize, default: f64) -> Result<SaTable> {
    estimate_phi_counts(dataset, num_states, num_actions, default).map(|e| e.phi)
}

pub fn estimate_phi_counts(
    dataset: &RolloutDataset,
    num_states: usize,
    num_actions: usize,
    default: f64,
) -> Result<PhiEstimate> {
    if !(0.0..=1.0).contains(&default) {
        return Err(Error::Domain(format!("default stop probability {default} outside [0, 1]")));
    }
    let mut visits = vec![0usize; num_states * num_actions];
    let mut stops = vec![0usize; num_states * num_actions];
    for r in &dataset.records {
        if r.state >= num_states || r.action >= num_actions || r.next_state >= num_states {
            return Err(Error::Shape(format!(
                "record ({}, {}, {}) outside {num_states}×{num_actions}",
                r.state, r.action, r.next_state
            )));
        }
        let i = r.state * num_actions + r.action;
        visits[i] += 1;
        stops[i] += usize::from(r.estop);
    }
    let phi = SaTable::from_fn(num_states, num_actions, |s, a| {
        let i = s * num_actions + a;
        if visits[i] == 0 {
            default
        } else {
            stops[i] as f64 / visits[i] as f64
        }
    });
    Ok(PhiEstimate { phi, visits })
}

/// `Q(s,a) = reward(s,a) + γ Σ_{s'} kernel(s,a,s') V(s')` with a possibly
/// sub-stochastic kernel.
struct Backup {
    reward: SaTable,
    kernel: Vec<Vec<(usize, f64)>>,
}

enum SoftValue<'a> {
    Residual { omega: f64, prior_log: &'a SaTable },
    Plain { alpha: f64 },
}

impl SoftValue<'_> {
    fn values(&self, q: &SaTable) -> Vec<f64> {
        match self {
            SoftValue::Residual { omega, prior_log } => residual_soft_values(q, prior_log, *omega),
            SoftValue::Plain { alpha } => q.rows().map(|row| soft_max(row, *alpha)).collect(),
        }
    }
}

impl Backup {
    fn solve(&self, gamma: f64, value: &SoftValue<'_>, config: &RiftConfig) -> Result<SaTable> {
        let (ns, na) = self.reward.shape();
        let mut q = SaTable::zeros(ns, na);
        let mut residual = f64::INFINITY;
        for _ in 0..config.solve.max_iters {
            let v = value.values(&q);
            let next = SaTable::from_fn(ns, na, |s, a| {
                let boot: f64 = self.kernel[s * na + a].iter().map(|&(n, p)| p * v[n]).sum();
                self.reward[(s, a)] + gamma * boot
            });
            residual = next.max_abs_diff(&q);
            q = next;
            if residual <= config.solve.tol {
                return Ok(q);
            }
        }
        Err(Error::Convergence {
            iterations: config.solve.max_iters,
            residual,
        })
    }
}

fn residual_reward(phi: &SaTable, config: &RiftConfig) -> SaTable {
    if config.zero_residual_reward {
        SaTable::zeros(phi.num_states(), phi.num_actions())
    } else {
        phi.map(|p| -p)
    }
}

/// Known dynamics with the stop event folded in: continuation mass is
/// `1 − φ̂(s,a)` under termination and `1` under truncation.
fn model_backup(mdp: &TabularMdp, phi: &SaTable, config: &RiftConfig) -> Backup {
    let na = mdp.num_actions();
    let kernel = (0..mdp.num_pairs())
        .map(|i| {
            let (s, a) = (i / na, i % na);
            let keep = match config.bootstrap_mode {
                BootstrapMode::Truncation => 1.0,
                BootstrapMode::Termination => 1.0 - phi[(s, a)],
            };
            mdp.successors(s, a).iter().map(|&(n, p)| (n, keep * p)).collect()
        })
        .collect();
    Backup {
        reward: residual_reward(phi, config),
        kernel,
    }
}

/// Empirical targets averaged per pair. Stopped records bootstrap only
/// under truncation; unvisited pairs keep `Q = 0`.
fn sample_backup(dataset: &RolloutDataset, ns: usize, na: usize, config: &RiftConfig) -> Result<Backup> {
    let est = estimate_phi_counts(dataset, ns, na, 0.0)?;
    let mut boot: Vec<Vec<(usize, f64)>> = vec![Vec::new(); ns * na];
    for r in &dataset.records {
        if r.estop && config.bootstrap_mode == BootstrapMode::Termination {
            continue;
        }
        let i = r.state * na + r.action;
        let w = 1.0 / est.visits[i] as f64;
        match boot[i].iter_mut().find(|(n, _)| *n == r.next_state) {
            Some(entry) => entry.1 += w,
            None => boot[i].push((r.next_state, w)),
        }
    }
    for row in &mut boot {
        row.sort_by_key(|&(n, _)| n);
    }
    Ok(Backup {
        reward: residual_reward(&est.phi, config),
        kernel: boot,
    })
}

/// Fits the fine-tuned policy to the dataset.
///
/// With `ω > 0` the fit is residual and anchored to `prior`; with `ω = 0` it
/// is the unregularized fit at `rlif_temperature` and `prior` is ignored.
pub fn fit_residual_from_dataset(
    mdp: &TabularMdp,
    prior: &PolicyTable,
    dataset: &RolloutDataset,
    config: &RiftConfig,
) -> Result<PolicyTable> {
    config.validate()?;
    mdp.check_policy(prior)?;
    let (ns, na) = (mdp.num_states(), mdp.num_actions());
    let gamma = mdp.discount();
    let regularized = config.omega > 0.0;
    if regularized {
        check_interior(prior)?;
    }
    match config.estimator {
        PhiEstimator::ModelBased => {
            let phi = estimate_phi(dataset, ns, na, config.phi_default)?;
            if config.bootstrap_mode == BootstrapMode::Truncation {
                let reward = residual_reward(&phi, config);
                return if regularized {
                    residual_soft_q_iteration(mdp, prior, &reward, config.omega, config.solve).map(|(_, pi)| pi)
                } else {
                    let q = soft_value_iteration(&mdp.with_reward(reward)?, config.rlif_temperature, config.solve)?;
                    Ok(policy_from_q(&q))
                };
            }
            let backup = model_backup(mdp, &phi, config);
            finish(&backup, gamma, prior, config)
        }
        PhiEstimator::SampleBased => {
            let backup = sample_backup(dataset, ns, na, config)?;
            finish(&backup, gamma, prior, config)
        }
    }
}

fn finish(backup: &Backup, gamma: f64, prior: &PolicyTable, config: &RiftConfig) -> Result<PolicyTable> {
    if config.omega > 0.0 {
        let prior_log = prior.log_probs();
        let value = SoftValue::Residual {
            omega: config.omega,
            prior_log: &prior_log,
        };
        let q = backup.solve(gamma, &value, config)?;
        let logits = q.zip_map(&prior_log, |q, lp| (q + config.omega * lp) / config.omega)?;
        Ok(PolicyTable::softmax(&logits))
    } else {
        let alpha = config.rlif_temperature;
        let q = backup.solve(gamma, &SoftValue::Plain { alpha }, config)?;
        Ok(policy_from_q(&SoftQTable::new(q, alpha)?))
    }
}
