//! Final success across five decades of ω under the least and most
//! informative thresholds of the corridor config.

use std::path::Path;

use rift_lab::experiment::{omega_ablation, ExperimentConfig};

fn main() -> rift_lab::Result<()> {
    let config = ExperimentConfig::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/corridor.toml"))?;
    let env = config.environment()?;
    let omegas = [1e-4, 1e-3, 1e-2, 1e-1, 1.0];
    let thresholds = [config.b_list[0], *config.b_list.last().expect("non-empty")];
    let ab = omega_ablation(&env, &config, &omegas, &thresholds, None)?;
    print!("{:<10}", "B \\ omega");
    for w in omegas {
        print!("{w:>8}");
    }
    println!();
    for (i, b) in thresholds.iter().enumerate() {
        print!("{b:<10.4}");
        for s in &ab.success[i] {
            print!("{s:>8.3}");
        }
        println!("   best omega {}", ab.best_omega(i));
    }
    Ok(())
}
