use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::maxent::{policy_from_q, soft_value_iteration, SoftQTable, SolveOptions};
use crate::mdp::{build_gridworld, GridworldSpec, PolicyTable, TabularMdp};
use crate::rift::{BootstrapMode, EvalSettings, PhiEstimator, RiftConfig};

fn default_gamma() -> f64 {
    0.95
}
fn default_alpha_expert() -> f64 {
    0.001
}
fn default_omega_list() -> Vec<f64> {
    vec![0.001]
}
fn default_rlif_temperature() -> f64 {
    0.01
}
fn default_success_threshold() -> f64 {
    0.5
}
fn default_true() -> bool {
    true
}
fn default_seeds() -> Vec<u64> {
    vec![0]
}
fn default_concentration() -> f64 {
    1.0
}

/// How the prior policy is built.
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PriorSpec {
    /// Smoothed behavior cloning of expert rollouts.
    Demos { demos: usize, smoothing: f64, seed: u64 },
    /// The unregularized baseline's output, trained against the cell's
    /// threshold unless one is given.
    InterventionRl {
        #[serde(default)]
        threshold: Option<f64>,
        #[serde(default)]
        seed: u64,
    },
    /// Symmetric Dirichlet rows.
    Random {
        #[serde(default = "default_concentration")]
        concentration: f64,
        seed: u64,
    },
}

/// A sweep over `(ω, B, seed)` on one gridworld.
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Grid file, resolved against the config file's directory.
    pub grid_file: PathBuf,
    pub step_reward: f64,
    pub goal_reward: f64,
    pub hazard_reward: f64,
    #[serde(default)]
    pub slip_prob: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_alpha_expert")]
    pub alpha_expert: f64,
    #[serde(default = "default_omega_list")]
    pub omega_list: Vec<f64>,
    #[serde(default, alias = "B_list")]
    pub b_list: Vec<f64>,
    pub prior: PriorSpec,
    pub rounds: usize,
    pub episodes_per_round: usize,
    pub max_horizon: usize,
    pub eval_episodes: usize,
    #[serde(default = "default_true")]
    pub eval_deterministic: bool,
    #[serde(default = "default_success_threshold")]
    pub success_threshold: f64,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub bootstrap_mode: BootstrapMode,
    #[serde(default)]
    pub fresh_data_per_round: bool,
    #[serde(default)]
    pub estimator: PhiEstimator,
    #[serde(default = "default_rlif_temperature")]
    pub rlif_temperature: f64,
    #[serde(default)]
    pub phi_default: f64,
    #[serde(default)]
    pub stop_intervention_rate: Option<f64>,
}

impl ExperimentConfig {
    /// Parses TOML text; relative grid paths are resolved against `base_dir`.
    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self> {
        let mut config: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if config.grid_file.is_relative() {
            config.grid_file = base_dir.join(&config.grid_file);
        }
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::from_toml_str(&text, base).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.omega_list.is_empty() || self.seeds.is_empty() {
            return Err(Error::Config("omega_list and seeds must be non-empty".into()));
        }
        if let Some(w) = self.omega_list.iter().find(|w| !(**w >= 0.0 && w.is_finite())) {
            return Err(Error::Config(format!("omega_list entry {w} must be finite and nonnegative")));
        }
        if let Some(b) = self.b_list.iter().find(|b| !(**b > 0.0)) {
            return Err(Error::Config(format!("B_list entry {b} must be positive")));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::Config(format!("gamma {} outside [0, 1)", self.gamma)));
        }
        if !(self.alpha_expert > 0.0) {
            return Err(Error::Config("alpha_expert must be positive".into()));
        }
        if self.eval_episodes == 0 {
            return Err(Error::Config("eval_episodes must be positive".into()));
        }
        self.rift_config(0.0, 0).validate()
    }

    /// Sweep config with a non-empty `B_list`.
    pub fn require_thresholds(&self) -> Result<&[f64]> {
        if self.b_list.is_empty() {
            Err(Error::Config("B_list must be non-empty for a sweep".into()))
        } else {
            Ok(&self.b_list)
        }
    }

    pub fn eval_settings(&self) -> EvalSettings {
        EvalSettings {
            episodes: self.eval_episodes,
            max_horizon: self.max_horizon,
            success_threshold: self.success_threshold,
            deterministic: self.eval_deterministic,
        }
    }

    pub fn rift_config(&self, omega: f64, seed: u64) -> RiftConfig {
        RiftConfig {
            omega,
            rounds: self.rounds,
            episodes_per_round: self.episodes_per_round,
            max_horizon: self.max_horizon,
            bootstrap_mode: self.bootstrap_mode,
            rlif_temperature: self.rlif_temperature,
            phi_default: self.phi_default,
            stop_intervention_rate: self.stop_intervention_rate,
            seed,
            fresh_data_per_round: self.fresh_data_per_round,
            estimator: self.estimator,
            zero_residual_reward: false,
            eval: self.eval_settings(),
            solve: SolveOptions::default(),
        }
    }

    pub fn gridworld(&self) -> Result<GridworldSpec> {
        let text = std::fs::read_to_string(&self.grid_file).map_err(|e| Error::io(&self.grid_file, e))?;
        GridworldSpec::from_text(
            &text,
            self.step_reward,
            self.goal_reward,
            self.hazard_reward,
            self.slip_prob,
            self.gamma,
        )
    }

    pub fn environment(&self) -> Result<Environment> {
        Environment::new(self.gridworld()?, self.alpha_expert)
    }
}

/// The compiled gridworld and its soft-optimal expert.
#[derive(Clone, Debug)]
pub struct Environment {
    pub grid: GridworldSpec,
    pub mdp: TabularMdp,
    pub expert_q: SoftQTable,
    pub expert: PolicyTable,
}

impl Environment {
    pub fn new(grid: GridworldSpec, alpha_expert: f64) -> Result<Self> {
        let mdp = build_gridworld(&grid)?;
        let expert_q = soft_value_iteration(&mdp, alpha_expert, SolveOptions::default())?;
        let expert = policy_from_q(&expert_q);
        Ok(Self {
            grid,
            mdp,
            expert_q,
            expert,
        })
    }

    /// Renders the mode action of `policy` on the grid.
    pub fn render_policy(&self, policy: &PolicyTable) -> String {
        use crate::mdp::{Cell, GridAction};
        self.grid.render(|s, cell| match cell {
            Cell::Goal => 'G',
            Cell::Hazard => 'X',
            _ => GridAction::ALL[policy.mode(s)].symbol(),
        })
    }
}
