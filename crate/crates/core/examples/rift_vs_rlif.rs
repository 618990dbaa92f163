//! One seed of the regularized loop against the unregularized baseline from
//! the same behavior-cloned prior, under the most and least informative
//! thresholds of the corridor config.

use std::path::Path;

use rift_lab::experiment::{build_prior, ExperimentConfig};
use rift_lab::intervention::InterventionStrategy;
use rift_lab::rift::{rift_loop, rlif_train};

fn main() -> rift_lab::Result<()> {
    let config = ExperimentConfig::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/corridor.toml"))?;
    let env = config.environment()?;
    let prior = build_prior(&env, &config, config.b_list[0])?;
    println!("prior:\n{}", env.render_policy(&prior));

    let (lo, hi) = (config.b_list[0], *config.b_list.last().expect("non-empty"));
    for (label, b) in [("least informative", lo), ("most informative", hi)] {
        let strategy = InterventionStrategy::q_gap(env.expert_q.clone(), b)?;
        let rc = config.rift_config(0.001, 0);
        let (pi, rift) = rift_loop(&env.mdp, &prior, &strategy, &rc, env.mdp.reward())?;
        let (_, rlif) = rlif_train(&env.mdp, &prior, &strategy, &rc, env.mdp.reward())?;
        println!("{label} B = {b:.4}");
        println!("  round  RIFT success  RLIF success");
        for (a, b) in rift.rounds.iter().zip(&rlif.rounds) {
            println!("  {:>5}  {:>12.3}  {:>12.3}", a.round, a.success_rate, b.success_rate);
        }
        println!("{}", env.render_policy(&pi));
    }
    Ok(())
}
