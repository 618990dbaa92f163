use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rift_lab::experiment::{
    build_prior, calibrate_thresholds, failure_cases, report, run_cell, run_experiment, summarize, write_metrics_csv,
    ExperimentConfig, RunKey, RunResult, SweepResult, OUT_DIR_ENV,
};
use rift_lab::rift::evaluate_policy;
use rift_lab::theory::{run_suite, SuiteSize};
use rift_lab::Result;

#[derive(Parser)]
#[command(name = "rift-lab", version, about = "Tabular e-stop fine-tuning laboratory", arg_required_else_help = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Master seed (verify suite seed, or the single run's seed for `train`).
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory; defaults to $RIFT_LAB_OUT, then `out`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for independent (ω, B, seed) cells; 0 uses every core.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run every numerical check and print one line per check.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Fewer instances and Monte-Carlo episodes.
        #[arg(long)]
        quick: bool,
    },
    /// Solve the expert, build the prior and print both success rates.
    Solve {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// One run at the first ω and B of the config.
    Train {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        omega: Option<f64>,
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// The full (ω, B, seed) sweep with CSV reports.
    Sweep {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Intervention-RL prior, random prior and very large ω.
    FailureCases {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 100.0)]
        large_omega: f64,
    },
    /// Search Q-gap thresholds for the three baseline success bands.
    Calibrate {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

fn out_dir(common: &Common) -> PathBuf {
    common
        .out
        .clone()
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn verify(common: &Common, quick: bool) -> Result<bool> {
    let size = if quick {
        SuiteSize {
            equivalence: 20,
            gradient: 10,
            identities: 10,
            bijection: 20,
            stationarity: 20,
            monte_carlo_episodes: 20_000,
        }
    } else {
        SuiteSize::default()
    };
    let outcomes = run_suite(common.seed, size)?;
    for o in &outcomes {
        println!("{}", o.line());
    }
    Ok(outcomes.iter().all(|o| o.passed))
}

fn solve(config: &ExperimentConfig, common: &Common) -> Result<()> {
    let env = config.environment()?;
    let settings = config.eval_settings();
    let threshold = config.b_list.first().copied().unwrap_or(f64::INFINITY);
    let prior = build_prior(&env, config, threshold)?;
    let expert = evaluate_policy(&env.mdp, &env.expert, env.mdp.reward(), &settings, common.seed)?;
    let prior_eval = evaluate_policy(&env.mdp, &prior, env.mdp.reward(), &settings, common.seed)?;
    println!("expert (mode actions):\n{}", env.render_policy(&env.expert));
    println!("prior (mode actions):\n{}", env.render_policy(&prior));
    println!("expert success {:.4}  mean return {:.4}", expert.success_rate, expert.mean_return);
    println!("prior  success {:.4}  mean return {:.4}", prior_eval.success_rate, prior_eval.mean_return);
    Ok(())
}

fn train(config: &ExperimentConfig, common: &Common, omega: Option<f64>, threshold: Option<f64>) -> Result<()> {
    let env = config.environment()?;
    let key = RunKey {
        omega: omega.unwrap_or(config.omega_list[0]),
        threshold: match threshold {
            Some(b) => b,
            None => config.require_thresholds()?[0],
        },
        seed: common.seed,
    };
    let prior = build_prior(&env, config, key.threshold)?;
    let metrics = run_cell(&env, &prior, config, key)?;
    println!("round  success  return    interventions  kl_to_prior  data");
    for m in &metrics.rounds {
        println!(
            "{:>5}  {:>7.4}  {:>8.4}  {:>13.4}  {:>11.6}  {:>4}",
            m.round, m.success_rate, m.mean_return, m.intervention_rate, m.kl_to_prior, m.dataset_size
        );
    }
    let dir = out_dir(common);
    std::fs::create_dir_all(&dir).map_err(|e| rift_lab::Error::Io { path: dir.clone(), source: e })?;
    let path = dir.join("metrics.csv");
    let file = std::fs::File::create(&path).map_err(|e| rift_lab::Error::Io { path: path.clone(), source: e })?;
    write_metrics_csv(&SweepResult { runs: vec![RunResult { key, metrics }] }, file)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn sweep(config: &ExperimentConfig, common: &Common) -> Result<()> {
    let result = run_experiment(config, common.jobs)?;
    println!("omega       B           seeds  success          interventions    kl_to_prior");
    for r in summarize(&result) {
        println!(
            "{:<10}  {:<10.4}  {:>5}  {:.4} ± {:.4}  {:.4} ± {:.4}  {:.5} ± {:.5}",
            r.omega,
            r.threshold,
            r.seeds,
            r.success.0,
            r.success.1,
            r.intervention_rate.0,
            r.intervention_rate.1,
            r.kl_to_prior.0,
            r.kl_to_prior.1
        );
    }
    for path in report(&result, &out_dir(common))? {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn calibrate(config: &ExperimentConfig, common: &Common) -> Result<()> {
    let env = config.environment()?;
    let prior = build_prior(&env, config, f64::INFINITY)?;
    let t = calibrate_thresholds(&env, &prior, config, common.jobs)?;
    println!("# baseline success {:.4} / {:.4} / {:.4}", t.success.0, t.success.1, t.success.2);
    println!("B_list = [{}, {}, {}]", t.b_low, t.b_med, t.b_high);
    Ok(())
}

fn failures(config: &ExperimentConfig, common: &Common, large_omega: f64) -> Result<()> {
    let env = config.environment()?;
    let prior = build_prior(&env, config, f64::INFINITY)?;
    let threshold = calibrate_thresholds(&env, &prior, config, common.jobs)?.b_med;
    let f = failure_cases(&env, config, threshold, large_omega, common.jobs)?;
    println!("B = {threshold}");
    println!(
        "intervention-RL prior  RIFT {:.4}  RLIF {:.4}",
        f.intervention_rl.rift, f.intervention_rl.rlif
    );
    println!("random prior           RIFT {:.4}  RLIF {:.4}", f.random.rift, f.random.rlif);
    println!(
        "omega = {}           success {:.4} (prior {:.4})  kl_to_prior {:.3e}",
        f.large_omega.omega, f.large_omega.success, f.large_omega.prior_success, f.large_omega.kl_to_prior
    );
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    let load = |path: &PathBuf| ExperimentConfig::load(path);
    match cli.command {
        Command::Verify { common, quick } => return verify(&common, quick),
        Command::Solve { config, common } => solve(&load(&config)?, &common)?,
        Command::Train {
            config,
            common,
            omega,
            threshold,
        } => train(&load(&config)?, &common, omega, threshold)?,
        Command::Sweep { config, common } => sweep(&load(&config)?, &common)?,
        Command::FailureCases {
            config,
            common,
            large_omega,
        } => failures(&load(&config)?, &common, large_omega)?,
        Command::Calibrate { config, common } => calibrate(&load(&config)?, &common)?,
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
