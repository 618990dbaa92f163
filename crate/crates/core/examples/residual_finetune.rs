//! Fine-tunes a prior with residual soft Q iteration and checks it against a
//! direct max-ent solve of the composite reward, for several ω.

use rift_lab::maxent::SolveOptions;
use rift_lab::random::{random_mdp, random_policy, random_table};
use rift_lab::rng::rng_from_seed;
use rift_lab::rql::{discounted_kl, evaluate_j_ft, finetune_equivalent_direct, residual_soft_q_iteration};

fn main() -> rift_lab::Result<()> {
    let mut rng = rng_from_seed(21);
    let mdp = random_mdp(&mut rng, 6, 3, 0.85)?;
    let prior = random_policy(&mut rng, 6, 3, 1.0);
    let residual = random_table(&mut rng, 6, 3, -1.0, 1.0);
    let opts = SolveOptions::with_tol(1e-12);

    println!("omega    max TV(residual, direct)   KL to prior   J_FT");
    for omega in [0.01, 0.1, 1.0, 10.0] {
        let (_, pi) = residual_soft_q_iteration(&mdp, &prior, &residual, omega, opts)?;
        let direct = finetune_equivalent_direct(&mdp, &prior, &residual, omega, opts)?;
        println!(
            "{omega:<7}  {:<25.3e}  {:<12.5}  {:.5}",
            pi.max_tv_distance(&direct),
            discounted_kl(&mdp, &pi, &prior)?,
            evaluate_j_ft(&mdp, &pi, &residual, &prior, omega)?
        );
    }
    Ok(())
}
