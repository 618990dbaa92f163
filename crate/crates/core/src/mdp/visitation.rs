//! Discounted occupancy measures: exact (linear solve), per-timestep
//! (push-forward) and Monte-Carlo (seeded rollouts).

use nalgebra::{DMatrix, DVector};

use super::{PolicyTable, TabularMdp};
use crate::error::{Error, Result};
use crate::rng::{hash64, rng_from_seed, sample_index, uniform};
use crate::table::SaTable;

/// Discounted state-action occupancy `μ` and its state marginal `ρ`.
#[derive(Clone, Debug, PartialEq)]
pub struct VisitationDistribution {
    pub mu: SaTable,
    pub rho: Vec<f64>,
}

impl VisitationDistribution {
    fn from_mu(mu: SaTable) -> Self {
        let rho = mu.rows().map(|r| r.iter().sum()).collect();
        Self { mu, rho }
    }
}

/// State-action transition matrix `W[i, j] = T(s_j | s_i, a_i) π(a_j | s_j)`,
/// with pairs enumerated as `i = s·|A| + a`.
pub fn transition_matrix(mdp: &TabularMdp, policy: &PolicyTable) -> Result<DMatrix<f64>> {
    mdp.check_policy(policy)?;
    let na = mdp.num_actions();
    let n = mdp.num_pairs();
    let mut w = DMatrix::zeros(n, n);
    for s in 0..mdp.num_states() {
        for a in 0..na {
            let i = s * na + a;
            for &(next, p) in mdp.successors(s, a) {
                for (b, &pb) in policy.row(next).iter().enumerate() {
                    w[(i, next * na + b)] += p * pb;
                }
            }
        }
    }
    Ok(w)
}

/// `μ₀(s, a) = d(s) π(a|s)` as a flat vector.
pub(crate) fn initial_pair_dist(mdp: &TabularMdp, policy: &PolicyTable) -> DVector<f64> {
    let na = mdp.num_actions();
    DVector::from_fn(mdp.num_pairs(), |i, _| mdp.initial_dist()[i / na] * policy.prob(i / na, i % na))
}

/// Solves `μᵀ (I − γW) = (1 − γ) μ₀ᵀ` by dense LU.
pub fn exact_visitation(mdp: &TabularMdp, policy: &PolicyTable) -> Result<VisitationDistribution> {
    let gamma = mdp.discount();
    let w = transition_matrix(mdp, policy)?;
    let n = w.nrows();
    // (I − γW)ᵀ μ = (1 − γ) μ₀
    let system = DMatrix::from_fn(n, n, |r, c| if r == c { 1.0 } else { 0.0 } - gamma * w[(c, r)]);
    let rhs = initial_pair_dist(mdp, policy) * (1.0 - gamma);
    let mu = system
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Solver("occupancy system is singular".into()))?;
    let mu = SaTable::new(mdp.num_states(), mdp.num_actions(), mu.iter().map(|&x| x.max(0.0)).collect())?;
    Ok(VisitationDistribution::from_mu(mu))
}

/// `(ρ_t, μ_t)` after `t` push-forward steps from `ρ₀ = d`.
pub fn per_timestep_visitation(mdp: &TabularMdp, policy: &PolicyTable, t: usize) -> Result<(Vec<f64>, SaTable)> {
    mdp.check_policy(policy)?;
    let mut rho = mdp.initial_dist().to_vec();
    for _ in 0..t {
        let mut next = vec![0.0; mdp.num_states()];
        for (s, &mass) in rho.iter().enumerate() {
            if mass == 0.0 {
                continue;
            }
            for (a, &pa) in policy.row(s).iter().enumerate() {
                for &(n, p) in mdp.successors(s, a) {
                    next[n] += mass * pa * p;
                }
            }
        }
        rho = next;
    }
    let mu = SaTable::from_fn(mdp.num_states(), mdp.num_actions(), |s, a| rho[s] * policy.prob(s, a));
    Ok((rho, mu))
}

/// Empirical occupancy together with per-entry standard errors.
#[derive(Clone, Debug)]
pub struct MonteCarloVisitation {
    pub distribution: VisitationDistribution,
    /// Standard error of each `μ(s, a)` estimate across episodes.
    pub stderr: SaTable,
}

/// Empirical discounted occupancy from seeded rollouts.
pub fn monte_carlo_visitation(
    mdp: &TabularMdp,
    policy: &PolicyTable,
    episodes: usize,
    horizon: usize,
    seed: u64,
) -> Result<VisitationDistribution> {
    monte_carlo_visitation_with_stderr(mdp, policy, episodes, horizon, seed).map(|mc| mc.distribution)
}

/// Episode `i` draws from the stream `hash64(seed, i)`: one draw for the
/// initial state, then per step one for the action and one for the transition.
pub fn monte_carlo_visitation_with_stderr(
    mdp: &TabularMdp,
    policy: &PolicyTable,
    episodes: usize,
    horizon: usize,
    seed: u64,
) -> Result<MonteCarloVisitation> {
    mdp.check_policy(policy)?;
    if episodes == 0 || horizon == 0 {
        return Err(Error::Argument("episodes and horizon must be positive".into()));
    }
    let gamma = mdp.discount();
    if gamma.powi(horizon.min(i32::MAX as usize) as i32) >= 1e-6 {
        log::warn!("horizon {horizon} truncates γ^h = {:e} of the occupancy mass", gamma.powf(horizon as f64));
    }
    let na = mdp.num_actions();
    let n = mdp.num_pairs();
    let mut sum = vec![0.0; n];
    let mut sum_sq = vec![0.0; n];
    let mut episode_mass = vec![0.0; n];
    let mut touched: Vec<usize> = Vec::new();

    for ep in 0..episodes {
        let mut rng = rng_from_seed(hash64(seed, ep as u64));
        let mut s = sample_index(mdp.initial_dist(), uniform(&mut rng));
        let mut weight = 1.0 - gamma;
        for _ in 0..horizon {
            let a = sample_index(policy.row(s), uniform(&mut rng));
            let i = s * na + a;
            if episode_mass[i] == 0.0 {
                touched.push(i);
            }
            episode_mass[i] += weight;
            s = sample_index(mdp.transition_row(s, a), uniform(&mut rng));
            weight *= gamma;
            if weight == 0.0 {
                break;
            }
        }
        for &i in &touched {
            sum[i] += episode_mass[i];
            sum_sq[i] += episode_mass[i] * episode_mass[i];
            episode_mass[i] = 0.0;
        }
        touched.clear();
    }

    let count = episodes as f64;
    let mean: Vec<f64> = sum.iter().map(|x| x / count).collect();
    let stderr: Vec<f64> = if episodes > 1 {
        mean.iter()
            .zip(&sum_sq)
            .map(|(&m, &sq)| {
                let var = ((sq - count * m * m) / (count - 1.0)).max(0.0);
                (var / count).sqrt()
            })
            .collect()
    } else {
        vec![0.0; n]
    };
    let mu = SaTable::new(mdp.num_states(), na, mean)?;
    Ok(MonteCarloVisitation {
        distribution: VisitationDistribution::from_mu(mu),
        stderr: SaTable::new(mdp.num_states(), na, stderr)?,
    })
}
