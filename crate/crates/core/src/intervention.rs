//! Intervention strategies and the e-stop rollout protocol.
//!
//! A rollout samples `a ∼ π(·|s)`, advances `s' ∼ T(·|s,a)`, then draws the
//! stop flag `e ∼ Bernoulli(φ(s,a))`. The episode ends at the first stop, on
//! entering an absorbing state, or at the horizon. Every step consumes exactly
//! three uniforms in that order, so episodes are reproducible from their seed.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::maxent::SoftQTable;
use crate::mdp::{PolicyTable, TabularMdp};
use crate::rng::{hash64, rng_from_seed, sample_index, uniform};
use crate::table::{argmax, SaTable};

/// Stop probability model `φ : S × A → [0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub enum InterventionStrategy {
    /// Stops when `Q*(s, a*(s)) − Q*(s, a) > threshold`.
    QGap { expert_q: SoftQTable, threshold: f64 },
    /// Stops with probability `ϕ(s)` regardless of the action.
    StateBased { phi_state: Vec<f64> },
    RandomUniform { p: f64 },
    ExplicitTable { phi: SaTable },
}

fn check_unit(x: f64, what: &str) -> Result<()> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(Error::Domain(format!("{what} {x} outside [0, 1]")))
    }
}

impl InterventionStrategy {
    pub fn q_gap(expert_q: SoftQTable, threshold: f64) -> Result<Self> {
        if !(threshold > 0.0) {
            return Err(Error::Domain(format!("Q-gap threshold must be positive, got {threshold}")));
        }
        Ok(Self::QGap { expert_q, threshold })
    }

    pub fn state_based(phi_state: Vec<f64>) -> Result<Self> {
        for &x in &phi_state {
            check_unit(x, "state stop probability")?;
        }
        Ok(Self::StateBased { phi_state })
    }

    pub fn random_uniform(p: f64) -> Result<Self> {
        check_unit(p, "stop probability")?;
        Ok(Self::RandomUniform { p })
    }

    pub fn explicit(phi: SaTable) -> Result<Self> {
        for &x in phi.as_slice() {
            check_unit(x, "stop probability")?;
        }
        Ok(Self::ExplicitTable { phi })
    }

    /// `φ(s, a)`; Q-gap ties at exactly the threshold do not stop.
    pub fn phi_value(&self, s: usize, a: usize) -> Result<f64> {
        let out_of_range = |ns: usize, na: usize| s >= ns || a >= na;
        match self {
            Self::QGap { expert_q, threshold } => {
                let (ns, na) = expert_q.q.shape();
                if out_of_range(ns, na) {
                    return Err(Error::Argument(format!("pair ({s}, {a}) outside {ns}×{na}")));
                }
                let row = expert_q.q.row(s);
                let gap = row[argmax(row)] - row[a];
                Ok(if gap > *threshold { 1.0 } else { 0.0 })
            }
            Self::StateBased { phi_state } => phi_state
                .get(s)
                .copied()
                .ok_or_else(|| Error::Argument(format!("state {s} outside {} states", phi_state.len()))),
            Self::RandomUniform { p } => Ok(*p),
            Self::ExplicitTable { phi } => {
                let (ns, na) = phi.shape();
                if out_of_range(ns, na) {
                    return Err(Error::Argument(format!("pair ({s}, {a}) outside {ns}×{na}")));
                }
                Ok(phi[(s, a)])
            }
        }
    }

    /// Tabulates `φ` over the given shape.
    pub fn phi_table(&self, num_states: usize, num_actions: usize) -> Result<SaTable> {
        let mut out = SaTable::zeros(num_states, num_actions);
        for s in 0..num_states {
            for a in 0..num_actions {
                out[(s, a)] = self.phi_value(s, a)?;
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TransitionRecord {
    pub state: usize,
    pub action: usize,
    pub next_state: usize,
    pub estop: bool,
}

impl TransitionRecord {
    /// Intervention reward `−e`.
    pub fn reward(&self) -> f64 {
        if self.estop {
            -1.0
        } else {
            0.0
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EndCause {
    Estop,
    Horizon,
    Terminal,
}

impl EndCause {
    pub fn as_str(self) -> &'static str {
        match self {
            EndCause::Estop => "estop",
            EndCause::Horizon => "horizon",
            EndCause::Terminal => "terminal",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Episode {
    pub records: Vec<TransitionRecord>,
    pub end_cause: EndCause,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EpisodeBounds {
    pub start: usize,
    pub end: usize,
    pub end_cause: EndCause,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RolloutDataset {
    pub records: Vec<TransitionRecord>,
    pub episode_bounds: Vec<EpisodeBounds>,
}

impl RolloutDataset {
    pub fn push_episode(&mut self, episode: Episode) {
        let start = self.records.len();
        self.records.extend(episode.records);
        self.episode_bounds.push(EpisodeBounds {
            start,
            end: self.records.len(),
            end_cause: episode.end_cause,
        });
    }

    pub fn extend(&mut self, other: RolloutDataset) {
        for b in other.episode_bounds {
            self.push_episode(Episode {
                records: other.records[b.start..b.end].to_vec(),
                end_cause: b.end_cause,
            });
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn num_episodes(&self) -> usize {
        self.episode_bounds.len()
    }

    pub fn num_estops(&self) -> usize {
        self.records.iter().filter(|r| r.estop).count()
    }

    pub fn episodes(&self) -> impl Iterator<Item = (&[TransitionRecord], EndCause)> {
        self.episode_bounds.iter().map(|b| (&self.records[b.start..b.end], b.end_cause))
    }

    /// Writes the dataset as CSV with one row per transition.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["episode", "step", "state", "action", "next_state", "estop", "end_cause"])?;
        for (ep, (records, cause)) in self.episodes().enumerate() {
            for (step, r) in records.iter().enumerate() {
                w.write_record([
                    ep.to_string(),
                    step.to_string(),
                    r.state.to_string(),
                    r.action.to_string(),
                    r.next_state.to_string(),
                    u8::from(r.estop).to_string(),
                    cause.as_str().to_string(),
                ])?;
            }
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

/// How actions are chosen during a rollout.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum ActionSelection {
    #[default]
    Sample,
    /// Per-state mode of the policy, lowest index on ties. The action uniform
    /// is still drawn so streams line up with sampled rollouts.
    Mode,
}

/// One e-stop episode from a seed.
pub fn rollout_with_estop(
    mdp: &TabularMdp,
    policy: &PolicyTable,
    strategy: &InterventionStrategy,
    max_horizon: usize,
    seed: u64,
) -> Result<Episode> {
    rollout_with_estop_using(mdp, policy, strategy, max_horizon, seed, ActionSelection::Sample)
}

pub fn rollout_with_estop_using(
    mdp: &TabularMdp,
    policy: &PolicyTable,
    strategy: &InterventionStrategy,
    max_horizon: usize,
    seed: u64,
    selection: ActionSelection,
) -> Result<Episode> {
    let phi = strategy.phi_table(mdp.num_states(), mdp.num_actions())?;
    rollout_with_phi(mdp, policy, &phi, max_horizon, seed, selection)
}

pub(crate) fn rollout_with_phi(
    mdp: &TabularMdp,
    policy: &PolicyTable,
    phi: &SaTable,
    max_horizon: usize,
    seed: u64,
    selection: ActionSelection,
) -> Result<Episode> {
    mdp.check_policy(policy)?;
    mdp.check_table(phi, "stop probability table")?;
    if max_horizon == 0 {
        return Err(Error::Argument("max_horizon must be positive".into()));
    }
    let mut rng = rng_from_seed(seed);
    let mut s = sample_index(mdp.initial_dist(), uniform(&mut rng));
    let mut records = Vec::new();
    if mdp.is_absorbing(s) {
        return Ok(Episode {
            records,
            end_cause: EndCause::Terminal,
        });
    }
    for _ in 0..max_horizon {
        let u_action = uniform(&mut rng);
        let a = match selection {
            ActionSelection::Sample => sample_index(policy.row(s), u_action),
            ActionSelection::Mode => policy.mode(s),
        };
        let next = sample_index(mdp.transition_row(s, a), uniform(&mut rng));
        let estop = uniform(&mut rng) < phi[(s, a)];
        records.push(TransitionRecord {
            state: s,
            action: a,
            next_state: next,
            estop,
        });
        if estop {
            return Ok(Episode {
                records,
                end_cause: EndCause::Estop,
            });
        }
        s = next;
        if mdp.is_absorbing(s) {
            return Ok(Episode {
                records,
                end_cause: EndCause::Terminal,
            });
        }
    }
    Ok(Episode {
        records,
        end_cause: EndCause::Horizon,
    })
}

/// Concatenates `num_episodes` rollouts; episode `i` uses seed `hash64(seed, i)`.
pub fn collect_dataset(
    mdp: &TabularMdp,
    policy: &PolicyTable,
    strategy: &InterventionStrategy,
    num_episodes: usize,
    max_horizon: usize,
    seed: u64,
) -> Result<RolloutDataset> {
    let phi = strategy.phi_table(mdp.num_states(), mdp.num_actions())?;
    collect_with_phi(mdp, policy, &phi, num_episodes, max_horizon, seed, ActionSelection::Sample)
}

pub(crate) fn collect_with_phi(
    mdp: &TabularMdp,
    policy: &PolicyTable,
    phi: &SaTable,
    num_episodes: usize,
    max_horizon: usize,
    seed: u64,
    selection: ActionSelection,
) -> Result<RolloutDataset> {
    if num_episodes == 0 {
        return Err(Error::Argument("num_episodes must be positive".into()));
    }
    let mut data = RolloutDataset::default();
    for i in 0..num_episodes {
        data.push_episode(rollout_with_phi(mdp, policy, phi, max_horizon, hash64(seed, i as u64), selection)?);
    }
    Ok(data)
}

/// Fraction of episodes that end in an e-stop.
pub fn intervention_rate(
    mdp: &TabularMdp,
    policy: &PolicyTable,
    strategy: &InterventionStrategy,
    episodes: usize,
    max_horizon: usize,
    seed: u64,
    selection: ActionSelection,
) -> Result<f64> {
    let phi = strategy.phi_table(mdp.num_states(), mdp.num_actions())?;
    let data = collect_with_phi(mdp, policy, &phi, episodes, max_horizon, seed, selection)?;
    let stopped = data.episode_bounds.iter().filter(|b| b.end_cause == EndCause::Estop).count();
    Ok(stopped as f64 / episodes as f64)
}
