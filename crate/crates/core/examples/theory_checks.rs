//! Runs a reduced version of the numerical verification suite.

use rift_lab::theory::{run_suite, SuiteSize};

fn main() -> rift_lab::Result<()> {
    let size = SuiteSize {
        equivalence: 10,
        gradient: 5,
        identities: 5,
        bijection: 10,
        stationarity: 10,
        monte_carlo_episodes: 20_000,
    };
    let outcomes = run_suite(1, size)?;
    for o in &outcomes {
        println!("{}", o.line());
    }
    if outcomes.iter().any(|o| !o.passed) {
        std::process::exit(1);
    }
    Ok(())
}
