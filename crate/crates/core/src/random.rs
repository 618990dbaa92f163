//! Random instance generators used by the verification suite and tests.
//!
//! Transition rows are symmetric Dirichlet(1) draws, rewards are uniform on
//! `[-1, 1]` and the initial distribution is uniform over states.

use crate::error::Result;
use crate::mdp::{PolicyTable, TabularMdp, PRIOR_MIN_PROB};
use crate::rng::{dirichlet, uniform, LabRng};
use crate::table::SaTable;

pub fn random_table(rng: &mut LabRng, num_states: usize, num_actions: usize, lo: f64, hi: f64) -> SaTable {
    SaTable::from_fn(num_states, num_actions, |_, _| lo + (hi - lo) * uniform(rng))
}

pub fn random_mdp(rng: &mut LabRng, num_states: usize, num_actions: usize, discount: f64) -> Result<TabularMdp> {
    let reward = random_table(rng, num_states, num_actions, -1.0, 1.0);
    let mut transition = Vec::with_capacity(num_states * num_actions * num_states);
    for _ in 0..num_states * num_actions {
        transition.extend(dirichlet(rng, num_states, 1.0));
    }
    let initial = vec![1.0 / num_states as f64; num_states];
    TabularMdp::new(num_states, num_actions, reward, transition, initial, discount)
}

/// Dirichlet rows pushed into the simplex interior.
pub fn random_policy(rng: &mut LabRng, num_states: usize, num_actions: usize, concentration: f64) -> PolicyTable {
    let rows: Vec<Vec<f64>> = (0..num_states).map(|_| dirichlet(rng, num_actions, concentration)).collect();
    let table = SaTable::from_rows(&rows).expect("rectangular rows");
    PolicyTable::from_weights(&table)
        .expect("dirichlet rows are nonnegative")
        .ensure_interior(PRIOR_MIN_PROB)
}

/// Random sizes in `[1, max_states] × [1, max_actions]` (at least two actions
/// when `max_actions ≥ 2`) and a discount in `[0.3, 0.9]`.
pub fn random_shape(rng: &mut LabRng, max_states: usize, max_actions: usize) -> (usize, usize, f64) {
    let ns = 1 + (uniform(rng) * max_states as f64) as usize;
    let na = if max_actions >= 2 {
        2 + (uniform(rng) * (max_actions - 1) as f64) as usize
    } else {
        1
    };
    let gamma = 0.3 + 0.6 * uniform(rng);
    (ns.min(max_states), na.min(max_actions), gamma)
}
