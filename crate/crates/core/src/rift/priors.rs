//! Prior policies of varying quality.

use crate::error::{Error, Result};
use crate::intervention::{collect_with_phi, ActionSelection, InterventionStrategy};
use crate::mdp::{PolicyTable, TabularMdp, PRIOR_MIN_PROB};
use crate::rng::{dirichlet, rng_from_seed};
use crate::table::SaTable;

use super::{rlif_train, RiftConfig};

/// Smoothed maximum-likelihood policy from `num_demos` expert rollouts:
/// `(count(s,a) + λ) / (count(s) + |A| λ)`.
pub fn prior_from_demos(
    mdp: &TabularMdp,
    expert: &PolicyTable,
    num_demos: usize,
    smoothing: f64,
    max_horizon: usize,
    seed: u64,
) -> Result<PolicyTable> {
    if !(smoothing > 0.0 && smoothing.is_finite()) {
        return Err(Error::Domain(format!("smoothing must be positive, got {smoothing}")));
    }
    mdp.check_policy(expert)?;
    let mut counts = SaTable::zeros(mdp.num_states(), mdp.num_actions());
    if num_demos > 0 {
        let no_stop = SaTable::zeros(mdp.num_states(), mdp.num_actions());
        let demos = collect_with_phi(mdp, expert, &no_stop, num_demos, max_horizon, seed, ActionSelection::Sample)?;
        for r in &demos.records {
            counts[(r.state, r.action)] += 1.0;
        }
    }
    let smoothed = counts.map(|c| c + smoothing);
    Ok(PolicyTable::from_weights(&smoothed)?.ensure_interior(PRIOR_MIN_PROB))
}

/// The unregularized baseline trained from the uniform policy, used as a prior.
pub fn prior_from_intervention_rl(
    mdp: &TabularMdp,
    strategy: &InterventionStrategy,
    config: &RiftConfig,
) -> Result<PolicyTable> {
    let uniform = PolicyTable::uniform(mdp.num_states(), mdp.num_actions());
    let (pi, _) = rlif_train(mdp, &uniform, strategy, config, mdp.reward())?;
    Ok(pi.ensure_interior(PRIOR_MIN_PROB))
}

/// Rows drawn from a symmetric Dirichlet; an infinite concentration gives the
/// uniform policy.
pub fn random_prior(num_states: usize, num_actions: usize, concentration: f64, seed: u64) -> Result<PolicyTable> {
    if !(concentration > 0.0) {
        return Err(Error::Domain(format!("concentration must be positive, got {concentration}")));
    }
    if concentration.is_infinite() {
        return Ok(PolicyTable::uniform(num_states, num_actions));
    }
    let mut rng = rng_from_seed(seed);
    let rows: Vec<Vec<f64>> = (0..num_states).map(|_| dirichlet(&mut rng, num_actions, concentration)).collect();
    Ok(PolicyTable::from_weights(&SaTable::from_rows(&rows)?)?.ensure_interior(PRIOR_MIN_PROB))
}
