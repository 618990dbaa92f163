//! Finite MDPs, tabular policies and occupancy measures.

mod gridworld;
mod visitation;

pub use gridworld::{build_gridworld, parse_grid, Cell, GridAction, GridworldSpec};
pub use visitation::{
    exact_visitation, monte_carlo_visitation, monte_carlo_visitation_with_stderr, per_timestep_visitation,
    transition_matrix, MonteCarloVisitation, VisitationDistribution,
};

use crate::error::{Error, Result};
use crate::table::{argmax, SaTable};

/// Smallest probability a prior may assign to any action.
pub const PRIOR_MIN_PROB: f64 = 1e-6;

const PROB_TOL: f64 = 1e-12;

/// A finite MDP `(S, A, r, T, d, γ)`.
///
/// Transition probabilities are stored densely as `[state][action][next_state]`
/// with a sparse successor list kept alongside for sampling and backups.
#[derive(Clone, Debug)]
pub struct TabularMdp {
    num_states: usize,
    num_actions: usize,
    reward: SaTable,
    transition: Vec<f64>,
    initial_dist: Vec<f64>,
    discount: f64,
    successors: Vec<Vec<(usize, f64)>>,
    absorbing: Vec<bool>,
}

impl TabularMdp {
    pub fn new(
        num_states: usize,
        num_actions: usize,
        reward: SaTable,
        transition: Vec<f64>,
        initial_dist: Vec<f64>,
        discount: f64,
    ) -> Result<Self> {
        if num_states == 0 || num_actions == 0 {
            return Err(Error::Shape("MDP needs at least one state and one action".into()));
        }
        reward.check_shape(num_states, num_actions, "reward")?;
        if transition.len() != num_states * num_actions * num_states {
            return Err(Error::Shape(format!(
                "transition table has {} entries, expected {}",
                transition.len(),
                num_states * num_actions * num_states
            )));
        }
        if initial_dist.len() != num_states {
            return Err(Error::Shape(format!(
                "initial distribution has {} entries, expected {num_states}",
                initial_dist.len()
            )));
        }
        if !(0.0..1.0).contains(&discount) {
            return Err(Error::Domain(format!("discount {discount} outside [0, 1)")));
        }
        if reward.as_slice().iter().any(|r| !r.is_finite()) {
            return Err(Error::Domain("reward table has non-finite entries".into()));
        }
        check_distribution(&initial_dist, "initial distribution")?;

        let mut successors = Vec::with_capacity(num_states * num_actions);
        for (sa, row) in transition.chunks(num_states).enumerate() {
            check_distribution(row, &format!("transition row (s={}, a={})", sa / num_actions, sa % num_actions))?;
            successors.push(row.iter().enumerate().filter(|(_, &p)| p > 0.0).map(|(s, &p)| (s, p)).collect());
        }
        let absorbing = (0..num_states)
            .map(|s| (0..num_actions).all(|a| transition[(s * num_actions + a) * num_states + s] == 1.0))
            .collect();

        Ok(Self {
            num_states,
            num_actions,
            reward,
            transition,
            initial_dist,
            discount,
            successors,
            absorbing,
        })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn num_pairs(&self) -> usize {
        self.num_states * self.num_actions
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn reward(&self) -> &SaTable {
        &self.reward
    }

    pub fn initial_dist(&self) -> &[f64] {
        &self.initial_dist
    }

    pub fn transition_prob(&self, s: usize, a: usize, next: usize) -> f64 {
        self.transition[(s * self.num_actions + a) * self.num_states + next]
    }

    /// Dense next-state distribution for `(s, a)`.
    pub fn transition_row(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.num_actions + a) * self.num_states;
        &self.transition[start..start + self.num_states]
    }

    /// Next states with positive probability.
    pub fn successors(&self, s: usize, a: usize) -> &[(usize, f64)] {
        &self.successors[s * self.num_actions + a]
    }

    /// `E_{s' ~ T(.|s,a)}[values[s']]`
    pub fn expected_next(&self, s: usize, a: usize, values: &[f64]) -> f64 {
        self.successors(s, a).iter().map(|&(n, p)| p * values[n]).sum()
    }

    /// True when every action self-loops with probability one.
    pub fn is_absorbing(&self, s: usize) -> bool {
        self.absorbing[s]
    }

    /// Same dynamics with a different reward table.
    pub fn with_reward(&self, reward: SaTable) -> Result<Self> {
        reward.check_shape(self.num_states, self.num_actions, "reward")?;
        if reward.as_slice().iter().any(|r| !r.is_finite()) {
            return Err(Error::Domain("reward table has non-finite entries".into()));
        }
        Ok(Self {
            reward,
            ..self.clone()
        })
    }

    /// Same MDP with a different discount.
    pub fn with_discount(&self, discount: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&discount) {
            return Err(Error::Domain(format!("discount {discount} outside [0, 1)")));
        }
        Ok(Self {
            discount,
            ..self.clone()
        })
    }

    pub(crate) fn check_policy(&self, policy: &PolicyTable) -> Result<()> {
        policy.probs().check_shape(self.num_states, self.num_actions, "policy")
    }

    pub(crate) fn check_table(&self, table: &SaTable, what: &str) -> Result<()> {
        table.check_shape(self.num_states, self.num_actions, what)
    }
}

fn check_distribution(p: &[f64], what: &str) -> Result<()> {
    if p.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
        return Err(Error::Domain(format!("{what} has negative or non-finite entries")));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > PROB_TOL {
        return Err(Error::Domain(format!("{what} sums to {total}, not 1")));
    }
    Ok(())
}

/// Stochastic policy `π(a|s)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyTable {
    probs: SaTable,
}

impl PolicyTable {
    pub fn new(probs: SaTable) -> Result<Self> {
        for (s, row) in probs.rows().enumerate() {
            check_distribution(row, &format!("policy row {s}"))?;
        }
        Ok(Self { probs })
    }

    pub fn uniform(num_states: usize, num_actions: usize) -> Self {
        Self {
            probs: SaTable::filled(num_states, num_actions, 1.0 / num_actions as f64),
        }
    }

    /// Point-mass policy choosing `actions[s]` in state `s`.
    pub fn deterministic(actions: &[usize], num_actions: usize) -> Result<Self> {
        if let Some(&bad) = actions.iter().find(|&&a| a >= num_actions) {
            return Err(Error::Argument(format!("action {bad} out of range")));
        }
        Ok(Self {
            probs: SaTable::from_fn(actions.len(), num_actions, |s, a| if actions[s] == a { 1.0 } else { 0.0 }),
        })
    }

    /// Row-wise normalization of nonnegative weights; all-zero rows become uniform.
    pub fn from_weights(weights: &SaTable) -> Result<Self> {
        let (ns, na) = weights.shape();
        let mut probs = weights.clone();
        for s in 0..ns {
            let row = probs.row_mut(s);
            if row.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
                return Err(Error::Domain(format!("weights in row {s} must be finite and nonnegative")));
            }
            let total: f64 = row.iter().sum();
            if total > 0.0 {
                row.iter_mut().for_each(|w| *w /= total);
            } else {
                row.iter_mut().for_each(|w| *w = 1.0 / na as f64);
            }
        }
        Ok(Self { probs })
    }

    /// Row-wise softmax of `logits`.
    pub fn softmax(logits: &SaTable) -> Self {
        let mut probs = logits.clone();
        for s in 0..probs.num_states() {
            let row = probs.row_mut(s);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            row.iter_mut().for_each(|x| *x = (*x - max).exp());
            let total: f64 = row.iter().sum();
            row.iter_mut().for_each(|x| *x /= total);
        }
        Self { probs }
    }

    pub fn probs(&self) -> &SaTable {
        &self.probs
    }

    pub fn num_states(&self) -> usize {
        self.probs.num_states()
    }

    pub fn num_actions(&self) -> usize {
        self.probs.num_actions()
    }

    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[(s, a)]
    }

    pub fn row(&self, s: usize) -> &[f64] {
        self.probs.row(s)
    }

    /// Most likely action, lowest index on ties.
    pub fn mode(&self, s: usize) -> usize {
        argmax(self.probs.row(s))
    }

    pub fn min_prob(&self) -> f64 {
        self.probs.as_slice().iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn is_interior(&self, min_prob: f64) -> bool {
        self.min_prob() >= min_prob * (1.0 - 1e-9)
    }

    /// Mixes with the uniform policy at weight `|A|·min_prob` when some entry
    /// falls below `min_prob`; interior policies are returned unchanged.
    pub fn ensure_interior(&self, min_prob: f64) -> Self {
        if self.is_interior(min_prob) {
            return self.clone();
        }
        let na = self.num_actions() as f64;
        let keep = 1.0 - na * min_prob;
        Self {
            probs: self.probs.map(|p| keep * p + min_prob),
        }
    }

    pub fn log_probs(&self) -> SaTable {
        self.probs.map(f64::ln)
    }

    pub fn entropy(&self, s: usize) -> f64 {
        -self.row(s).iter().filter(|&&p| p > 0.0).map(|&p| p * p.ln()).sum::<f64>()
    }

    /// `D_KL(π(s) ‖ other(s))`; infinite when `other` misses mass of `π`.
    pub fn kl_to(&self, other: &PolicyTable, s: usize) -> f64 {
        kl_divergence(self.row(s), other.row(s))
    }

    /// Largest per-state total-variation distance.
    pub fn max_tv_distance(&self, other: &PolicyTable) -> f64 {
        (0..self.num_states())
            .map(|s| 0.5 * self.row(s).iter().zip(other.row(s)).map(|(p, q)| (p - q).abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

/// `Σ p log(p/q)`, treating `0 log 0 = 0`.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(&pi, _)| pi > 0.0)
        .map(|(&pi, &qi)| if qi > 0.0 { pi * (pi / qi).ln() } else { f64::INFINITY })
        .sum()
}
