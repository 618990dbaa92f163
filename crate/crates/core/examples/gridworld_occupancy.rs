//! Compiles a small gridworld, solves the soft-optimal expert and compares the
//! exact discounted occupancy with a Monte-Carlo estimate.

use rift_lab::maxent::{policy_from_q, soft_value_iteration, SolveOptions};
use rift_lab::mdp::{build_gridworld, exact_visitation, monte_carlo_visitation_with_stderr, GridworldSpec};

const GRID: &str = "\
#######
#S...G#
#.#X#.#
#.....#
#######
";

fn main() -> rift_lab::Result<()> {
    let grid = GridworldSpec::from_text(GRID, -0.02, 1.0, -1.0, 0.1, 0.9)?;
    let mdp = build_gridworld(&grid)?;
    let expert = policy_from_q(&soft_value_iteration(&mdp, 0.05, SolveOptions::default())?);

    let exact = exact_visitation(&mdp, &expert)?;
    let mc = monte_carlo_visitation_with_stderr(&mdp, &expert, 50_000, 150, 11)?;

    println!("state  cell     exact rho  monte-carlo rho");
    let cells = grid.state_cells();
    for (s, cell) in cells.iter().enumerate() {
        let est: f64 = mc.distribution.mu.row(s).iter().sum();
        println!("{s:>5}  {cell:?}  {:>9.5}  {:>9.5}", exact.rho[s], est);
    }
    let mut worst_z = 0.0_f64;
    for s in 0..mdp.num_states() {
        for a in 0..mdp.num_actions() {
            let se = mc.stderr[(s, a)];
            if se > 0.0 {
                worst_z = worst_z.max(((mc.distribution.mu[(s, a)] - exact.mu[(s, a)]) / se).abs());
            }
        }
    }
    println!("largest |z| over state-action pairs: {worst_z:.2}");
    Ok(())
}
