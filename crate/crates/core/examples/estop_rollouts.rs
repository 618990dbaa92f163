//! Collects e-stop episodes on the corridor gridworld with a Q-gap supervisor
//! and writes them as CSV.

use std::path::Path;

use rift_lab::experiment::ExperimentConfig;
use rift_lab::intervention::{collect_dataset, EndCause, InterventionStrategy};
use rift_lab::mdp::PolicyTable;
use rift_lab::rift::estimate_phi;

fn main() -> rift_lab::Result<()> {
    let config = ExperimentConfig::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/corridor.toml"))?;
    let env = config.environment()?;
    let uniform = PolicyTable::uniform(env.mdp.num_states(), env.mdp.num_actions());

    for &b in &config.b_list {
        let strategy = InterventionStrategy::q_gap(env.expert_q.clone(), b)?;
        let data = collect_dataset(&env.mdp, &uniform, &strategy, 500, config.max_horizon, 5)?;
        let ends = |cause| data.episodes().filter(|(_, end)| *end == cause).count();
        let phi = estimate_phi(&data, env.mdp.num_states(), env.mdp.num_actions(), 0.0)?;
        println!(
            "B={b:.4}: {} transitions, {} stops, {} terminal, {} horizon, mean phi-hat {:.3}",
            data.len(),
            ends(EndCause::Estop),
            ends(EndCause::Terminal),
            ends(EndCause::Horizon),
            phi.sum() / (env.mdp.num_pairs() as f64)
        );
    }

    let out = std::env::temp_dir().join("estop_rollouts.csv");
    let strategy = InterventionStrategy::q_gap(env.expert_q.clone(), config.b_list[0])?;
    collect_dataset(&env.mdp, &uniform, &strategy, 20, config.max_horizon, 5)?.save_csv(&out)?;
    println!("wrote {}", out.display());
    Ok(())
}
