//! Residual soft Q-learning and the KL-regularized fine-tuning objective.
//!
//! Fine-tuning a prior `π₀` with residual reward `r_R` at regularization
//! strength `ω` runs the residual Bellman iteration
//!
//! ```text
//! Q_R(s,a) = r_R(s,a) + γ E_{s'}[ ω log Σ_{a'} exp Q̃_R(s',a') ],
//! Q̃_R(s,a) = (Q_R(s,a) + ω log π₀(a|s)) / ω,
//! ```
//!
//! with the entropy temperature tied to `ω`. The fixed point's policy
//! `π₁ ∝ exp Q̃_R` maximizes `E[Σ γᵗ (r_R − ω KL(π ‖ π₀))]`, which
//! [`finetune_equivalent_direct`] computes independently as a plain
//! maximum-entropy solve with composite reward `r_R + ω log π₀`.

use crate::error::{Error, Result};
use crate::intervention::InterventionStrategy;
use crate::maxent::{policy_from_q, soft_value_iteration, SolveOptions};
use crate::mdp::{exact_visitation, PolicyTable, TabularMdp, PRIOR_MIN_PROB};
use crate::table::{log_sum_exp, SaTable};

/// Converged residual soft-Q function together with the prior it refers to.
#[derive(Clone, Debug, PartialEq)]
pub struct ResidualQTable {
    pub q_r: SaTable,
    pub omega: f64,
    pub alpha: f64,
    pub prior_log_probs: SaTable,
}

impl ResidualQTable {
    /// `Q̃_R = (Q_R + ω log π₀) / α`
    pub fn logits(&self) -> SaTable {
        let mut out = self.q_r.clone();
        for s in 0..out.num_states() {
            for (a, x) in out.row_mut(s).iter_mut().enumerate() {
                *x = (*x + self.omega * self.prior_log_probs[(s, a)]) / self.alpha;
            }
        }
        out
    }

    /// `π₁(a|s) ∝ exp Q̃_R(s,a)`
    pub fn policy(&self) -> PolicyTable {
        PolicyTable::softmax(&self.logits())
    }

    /// `α log Σ_a exp Q̃_R(s,a)` for every state.
    pub fn soft_values(&self) -> Vec<f64> {
        residual_soft_values(&self.q_r, &self.prior_log_probs, self.omega)
    }
}

pub(crate) fn residual_soft_values(q_r: &SaTable, prior_log: &SaTable, omega: f64) -> Vec<f64> {
    let mut logits = vec![0.0; q_r.num_actions()];
    (0..q_r.num_states())
        .map(|s| {
            for (a, l) in logits.iter_mut().enumerate() {
                *l = (q_r[(s, a)] + omega * prior_log[(s, a)]) / omega;
            }
            omega * log_sum_exp(&logits)
        })
        .collect()
}

pub(crate) fn check_omega(omega: f64) -> Result<()> {
    if omega > 0.0 && omega.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("ω must be positive and finite, got {omega}")))
    }
}

pub(crate) fn check_interior(prior: &PolicyTable) -> Result<()> {
    if prior.is_interior(PRIOR_MIN_PROB) {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "prior has an entry {:e} below the interior floor {PRIOR_MIN_PROB:e}",
            prior.min_prob()
        )))
    }
}

/// Fixed point of the residual Bellman operator, iterated from `Q_R ≡ 0`
/// (which reproduces the prior).
pub fn residual_soft_q_iteration(
    mdp: &TabularMdp,
    prior: &PolicyTable,
    residual_reward: &SaTable,
    omega: f64,
    opts: SolveOptions,
) -> Result<(ResidualQTable, PolicyTable)> {
    mdp.check_policy(prior)?;
    mdp.check_table(residual_reward, "residual reward")?;
    check_omega(omega)?;
    check_interior(prior)?;
    let prior_log = prior.log_probs();
    let gamma = mdp.discount();
    let mut q_r = SaTable::zeros(mdp.num_states(), mdp.num_actions());
    let mut residual = f64::INFINITY;
    for _ in 0..opts.max_iters {
        let v = residual_soft_values(&q_r, &prior_log, omega);
        let next = SaTable::from_fn(mdp.num_states(), mdp.num_actions(), |s, a| {
            residual_reward[(s, a)] + gamma * mdp.expected_next(s, a, &v)
        });
        residual = next.max_abs_diff(&q_r);
        q_r = next;
        if residual <= opts.tol {
            let table = ResidualQTable {
                q_r,
                omega,
                alpha: omega,
                prior_log_probs: prior_log,
            };
            let policy = table.policy();
            return Ok((table, policy));
        }
    }
    Err(Error::Convergence {
        iterations: opts.max_iters,
        residual,
    })
}

/// Maximum-entropy solve at temperature `ω` with reward `r_R + ω log π₀`.
pub fn finetune_equivalent_direct(
    mdp: &TabularMdp,
    prior: &PolicyTable,
    residual_reward: &SaTable,
    omega: f64,
    opts: SolveOptions,
) -> Result<PolicyTable> {
    mdp.check_policy(prior)?;
    check_omega(omega)?;
    check_interior(prior)?;
    let composite = residual_reward.zip_map(&prior.log_probs(), |r, lp| r + omega * lp)?;
    let q = soft_value_iteration(&mdp.with_reward(composite)?, omega, opts)?;
    Ok(policy_from_q(&q))
}

/// Visitation-weighted KL `Σ_s ρ^π(s) KL(π(s) ‖ π₀(s))`.
pub fn discounted_kl(mdp: &TabularMdp, policy: &PolicyTable, prior: &PolicyTable) -> Result<f64> {
    mdp.check_policy(prior)?;
    let occ = exact_visitation(mdp, policy)?;
    let mut total = 0.0;
    for (s, &rho) in occ.rho.iter().enumerate() {
        if rho > 0.0 {
            total += rho * policy.kl_to(prior, s);
        }
    }
    Ok(total)
}

/// `J_FT(π | r) = (1/(1−γ)) Σ_s ρ^π(s) [Σ_a π(a|s) r(s,a) − ω KL(π(s) ‖ π₀(s))]`.
pub fn evaluate_j_ft(
    mdp: &TabularMdp,
    policy: &PolicyTable,
    reward: &SaTable,
    prior: &PolicyTable,
    omega: f64,
) -> Result<f64> {
    mdp.check_table(reward, "reward")?;
    mdp.check_policy(prior)?;
    if !(omega >= 0.0) {
        return Err(Error::Domain(format!("ω must be nonnegative, got {omega}")));
    }
    let occ = exact_visitation(mdp, policy)?;
    let mut total = 0.0;
    for (s, &rho) in occ.rho.iter().enumerate() {
        if rho <= 0.0 {
            continue;
        }
        let expected: f64 = policy.row(s).iter().zip(reward.row(s)).map(|(p, r)| p * r).sum();
        let kl = if omega > 0.0 { policy.kl_to(prior, s) } else { 0.0 };
        if kl.is_infinite() {
            return Err(Error::Domain(format!("policy puts mass where the prior has none in state {s}")));
        }
        total += rho * (expected - omega * kl);
    }
    Ok(total / (1.0 - mdp.discount()))
}

/// `J_INT(π) = J_FT(π | −φ)`.
pub fn evaluate_j_int(
    mdp: &TabularMdp,
    policy: &PolicyTable,
    strategy: &InterventionStrategy,
    prior: &PolicyTable,
    omega: f64,
) -> Result<f64> {
    let phi = strategy.phi_table(mdp.num_states(), mdp.num_actions())?;
    evaluate_j_ft(mdp, policy, &phi.map(|x| -x), prior, omega)
}
