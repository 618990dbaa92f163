//! Walks the reward → soft-Q → (policy, value) → soft-Q → reward cycle on a
//! random MDP and reports how much of the reward survives the round trip.

use rift_lab::maxent::{
    policy_from_q, q_from_policy_value, reward_from_q, soft_value_iteration, value_from_q, SolveOptions,
};
use rift_lab::random::{random_mdp, random_table};
use rift_lab::rng::rng_from_seed;

fn main() -> rift_lab::Result<()> {
    let mut rng = rng_from_seed(3);
    let mdp = random_mdp(&mut rng, 5, 3, 0.9)?;
    let alpha = 0.7;
    let opts = SolveOptions::with_tol(1e-12);

    let q = soft_value_iteration(&mdp, alpha, opts)?;
    let pi = policy_from_q(&q);
    let v = value_from_q(&q);
    let q_back = q_from_policy_value(&pi, &v)?;
    let r_back = reward_from_q(&mdp, &q_back)?;

    println!("policy at state 0: {:?}", pi.row(0));
    println!("|Q - Q'|_inf = {:.3e}", q.q.max_abs_diff(&q_back.q));
    println!("|r - r'|_inf = {:.3e}", mdp.reward().max_abs_diff(&r_back));

    // shaping the reward by a potential leaves the policy unchanged
    let phi = random_table(&mut rng, mdp.num_states(), 1, -1.0, 1.0);
    let shaped = rift_lab::table::SaTable::from_fn(mdp.num_states(), mdp.num_actions(), |s, a| {
        let next: f64 = (0..mdp.num_states()).map(|t| mdp.transition_prob(s, a, t) * phi[(t, 0)]).sum();
        mdp.reward()[(s, a)] + mdp.discount() * next - phi[(s, 0)]
    });
    let shaped_pi = policy_from_q(&soft_value_iteration(&mdp.with_reward(shaped)?, alpha, opts)?);
    println!("policy TV after potential shaping = {:.3e}", pi.max_tv_distance(&shaped_pi));
    Ok(())
}
