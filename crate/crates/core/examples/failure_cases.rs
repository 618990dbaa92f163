//! Settings where anchoring to the prior buys nothing, plus the termination
//! bootstrap with the residual reward switched off.

use std::path::Path;

use rift_lab::experiment::{failure_cases, termination_pathology, ExperimentConfig, DEFAULT_OMEGA};

fn main() -> rift_lab::Result<()> {
    let config = ExperimentConfig::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/corridor.toml"))?;
    let env = config.environment()?;
    let b_med = config.b_list[1];
    let f = failure_cases(&env, &config, b_med, 100.0, None)?;
    println!("B = {b_med:.4}");
    println!("intervention-RL prior: RIFT {:.3}  RLIF {:.3}", f.intervention_rl.rift, f.intervention_rl.rlif);
    println!("random prior:          RIFT {:.3}  RLIF {:.3}", f.random.rift, f.random.rlif);
    println!(
        "omega = 100:           success {:.3} vs prior {:.3}, KL {:.2e}",
        f.large_omega.success, f.large_omega.prior_success, f.large_omega.kl_to_prior
    );

    let b_high = *config.b_list.last().expect("non-empty");
    let p = termination_pathology(&env, &config, b_high, DEFAULT_OMEGA, None)?;
    println!(
        "termination, zero residual: interventions {:.3} -> {:.3}, success {:.3} -> {:.3}, KL {:.2e}",
        p.prior_intervention_rate, p.intervention_rate, p.prior_success, p.success, p.kl_to_prior
    );
    println!("truncation, zero residual: max TV to prior {:.2e}", p.truncation_tv);
    Ok(())
}
