//! Numerical checks of the imitation-gap gradient identities.
//!
//! `Ψ(π) = Σ_s ρ^{π*}(s) KL(π*(s) ‖ π(s))` measures how far a candidate is
//! from the expert on the expert's own state distribution. When the candidate
//! is the soft-optimal policy of a reward `r̂` at temperature `α`, its gradient
//! in `r̂` is the occupancy mismatch `(μ^π̂ − μ^{π*}) / α`. The functions below
//! compute both sides of that and related identities so they can be compared.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::intervention::InterventionStrategy;
use crate::maxent::{
    policy_from_q, q_from_policy_value, reward_from_q, soft_value_iteration, value_from_q, SoftQTable, SolveOptions,
};
use crate::maxent::evaluate_maxent_objective;
use crate::mdp::{
    exact_visitation, monte_carlo_visitation_with_stderr, transition_matrix, PolicyTable, TabularMdp,
};
use crate::random::{random_mdp, random_policy, random_shape, random_table};
use crate::rng::{hash64, rng_from_seed, LabRng};
use crate::rql::{finetune_equivalent_direct, residual_soft_q_iteration};
use crate::table::SaTable;

/// Finite-difference step used by every derivative check.
pub const FD_STEP: f64 = 1e-5;

/// Solver options inside finite-difference loops.
pub fn tight_solve() -> SolveOptions {
    SolveOptions::with_tol(1e-12)
}

/// `max |a − n| / max(‖a‖∞, ‖n‖∞)`, zero when both vanish.
pub fn normwise_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let abs = max_abs_error(analytic, numeric);
    let scale = analytic.iter().chain(numeric).fold(0.0_f64, |m, x| m.max(x.abs()));
    if scale == 0.0 {
        0.0
    } else {
        abs / scale
    }
}

fn max_abs_error(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()))
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradientReport {
    pub analytic: SaTable,
    pub numeric: SaTable,
    pub max_abs_err: f64,
    pub max_rel_err: f64,
}

impl GradientReport {
    pub fn new(analytic: SaTable, numeric: SaTable) -> Result<Self> {
        analytic.check_same_shape(&numeric)?;
        let max_abs_err = max_abs_error(analytic.as_slice(), numeric.as_slice());
        let max_rel_err = normwise_relative_error(analytic.as_slice(), numeric.as_slice());
        Ok(Self {
            analytic,
            numeric,
            max_abs_err,
            max_rel_err,
        })
    }
}

/// `Ψ(candidate)` against `expert`.
pub fn compute_psi(mdp: &TabularMdp, expert: &PolicyTable, candidate: &PolicyTable) -> Result<f64> {
    mdp.check_policy(candidate)?;
    let occ = exact_visitation(mdp, expert)?;
    psi_with_weights(&occ.rho, expert, candidate)
}

fn psi_with_weights(rho: &[f64], expert: &PolicyTable, candidate: &PolicyTable) -> Result<f64> {
    let mut total = 0.0;
    for (s, &w) in rho.iter().enumerate() {
        if w <= 0.0 {
            continue;
        }
        let kl = expert.kl_to(candidate, s);
        if kl.is_infinite() {
            return Err(Error::Domain(format!("candidate misses expert mass in state {s}")));
        }
        total += w * kl;
    }
    Ok(total)
}

/// `∂Ψ/∂r̂ = (μ^candidate − μ^expert) / α`, where the candidate is the
/// soft-optimal policy of `r̂` at temperature `α`.
pub fn psi_gradient_analytic(
    mdp: &TabularMdp,
    expert: &PolicyTable,
    candidate: &PolicyTable,
    alpha: f64,
) -> Result<SaTable> {
    let mu_hat = exact_visitation(mdp, candidate)?.mu;
    let mu_star = exact_visitation(mdp, expert)?.mu;
    mu_hat.zip_map(&mu_star, |a, b| (a - b) / alpha)
}

fn soft_policy_of(mdp: &TabularMdp, reward: &SaTable, alpha: f64, opts: SolveOptions) -> Result<PolicyTable> {
    let q = soft_value_iteration(&mdp.with_reward(reward.clone())?, alpha, opts)?;
    Ok(policy_from_q(&q))
}

fn central_difference(
    base: &SaTable,
    epsilon: f64,
    mut f: impl FnMut(&SaTable) -> Result<f64>,
) -> Result<SaTable> {
    let (ns, na) = base.shape();
    let mut out = SaTable::zeros(ns, na);
    let mut probe = base.clone();
    for s in 0..ns {
        for a in 0..na {
            let x = base[(s, a)];
            probe[(s, a)] = x + epsilon;
            let up = f(&probe)?;
            probe[(s, a)] = x - epsilon;
            let down = f(&probe)?;
            probe[(s, a)] = x;
            out[(s, a)] = (up - down) / (2.0 * epsilon);
        }
    }
    Ok(out)
}

/// Central differences of `r̂ ↦ Ψ(soft-optimal policy of r̂)`.
pub fn psi_gradient_fd(
    mdp: &TabularMdp,
    expert: &PolicyTable,
    reward_hat: &SaTable,
    alpha: f64,
    epsilon: f64,
) -> Result<SaTable> {
    mdp.check_table(reward_hat, "reward estimate")?;
    let rho = exact_visitation(mdp, expert)?.rho;
    central_difference(reward_hat, epsilon, |r| {
        psi_with_weights(&rho, expert, &soft_policy_of(mdp, r, alpha, tight_solve())?)
    })
}

/// `∂Ψ/∂Q̂ = ρ^{π*}(s) (π̂(a|s) − π*(a|s)) / α` against central differences of
/// `Q̂ ↦ Ψ(softmax(Q̂ / α))`.
pub fn psi_q_derivative_check(mdp: &TabularMdp, expert: &PolicyTable, q_hat: &SoftQTable) -> Result<GradientReport> {
    mdp.check_table(&q_hat.q, "soft-Q estimate")?;
    let alpha = q_hat.temperature;
    let rho = exact_visitation(mdp, expert)?.rho;
    let pi_hat = policy_from_q(q_hat);
    let analytic = SaTable::from_fn(mdp.num_states(), mdp.num_actions(), |s, a| {
        rho[s] * (pi_hat.prob(s, a) - expert.prob(s, a)) / alpha
    });
    let numeric = central_difference(&q_hat.q, FD_STEP, |q| {
        let pi = policy_from_q(&SoftQTable {
            q: q.clone(),
            temperature: alpha,
        });
        psi_with_weights(&rho, expert, &pi)
    })?;
    GradientReport::new(analytic, numeric)
}

/// `∂Q̂/∂r̂ = (I − γ W_π̂)⁻¹` checked against finite differences of the soft
/// solver and against the truncated series `Σ_{t ≤ T} γᵗ Wᵗ`.
#[derive(Clone, Debug, PartialEq)]
pub struct JacobianReport {
    pub analytic: DMatrix<f64>,
    pub numeric: DMatrix<f64>,
    pub max_abs_err: f64,
    pub max_rel_err: f64,
    pub series_terms: usize,
    pub series_err: f64,
    /// `γ^{T+1} / (1 − γ)`
    pub series_bound: f64,
}

pub const NEUMANN_TERMS: usize = 200;

pub fn jacobian_check(mdp: &TabularMdp, candidate_reward: &SaTable, alpha: f64) -> Result<JacobianReport> {
    mdp.check_table(candidate_reward, "reward estimate")?;
    let gamma = mdp.discount();
    let pi_hat = soft_policy_of(mdp, candidate_reward, alpha, tight_solve())?;
    let w = transition_matrix(mdp, &pi_hat)?;
    let n = w.nrows();
    let system = DMatrix::<f64>::identity(n, n) - &w * gamma;
    let analytic = system
        .try_inverse()
        .ok_or_else(|| Error::Solver("I − γW is singular".into()))?;

    let na = mdp.num_actions();
    let mut numeric = DMatrix::<f64>::zeros(n, n);
    let mut probe = candidate_reward.clone();
    for j in 0..n {
        let (s, a) = (j / na, j % na);
        let x = candidate_reward[(s, a)];
        probe[(s, a)] = x + FD_STEP;
        let up = soft_value_iteration(&mdp.with_reward(probe.clone())?, alpha, tight_solve())?;
        probe[(s, a)] = x - FD_STEP;
        let down = soft_value_iteration(&mdp.with_reward(probe.clone())?, alpha, tight_solve())?;
        probe[(s, a)] = x;
        for i in 0..n {
            numeric[(i, j)] = (up.q.as_slice()[i] - down.q.as_slice()[i]) / (2.0 * FD_STEP);
        }
    }

    let mut series = DMatrix::<f64>::identity(n, n);
    let mut term = DMatrix::<f64>::identity(n, n);
    for _ in 0..NEUMANN_TERMS {
        term = &term * &w * gamma;
        series += &term;
    }
    let series_err = max_abs_error(analytic.as_slice(), series.as_slice());
    Ok(JacobianReport {
        max_abs_err: max_abs_error(analytic.as_slice(), numeric.as_slice()),
        max_rel_err: normwise_relative_error(analytic.as_slice(), numeric.as_slice()),
        analytic,
        numeric,
        series_terms: NEUMANN_TERMS,
        series_err,
        series_bound: gamma.powi(NEUMANN_TERMS as i32 + 1) / (1.0 - gamma),
    })
}

/// `|J_ME(π* | r̂) − (E_d[V̂] − α Ψ(π̂) / (1 − γ))|` with `V̂, π̂` the soft
/// solution of `r̂`.
pub fn characterization_check(mdp: &TabularMdp, expert: &PolicyTable, reward_hat: &SaTable, alpha: f64) -> Result<f64> {
    mdp.check_table(reward_hat, "reward estimate")?;
    let mdp_hat = mdp.with_reward(reward_hat.clone())?;
    let q = soft_value_iteration(&mdp_hat, alpha, tight_solve())?;
    let v = value_from_q(&q);
    let pi_hat = policy_from_q(&q);
    let lhs = evaluate_maxent_objective(mdp, expert, reward_hat, alpha)?;
    let start_value: f64 = mdp.initial_dist().iter().zip(&v.v).map(|(d, v)| d * v).sum();
    let rhs = start_value - alpha / (1.0 - mdp.discount()) * compute_psi(mdp, expert, &pi_hat)?;
    Ok((lhs - rhs).abs())
}

/// Both sides of `⟨ϕ, ∇Ψ⟩ = (1/α) Σ_s ϕ(s) (ρ^π̂(s) − ρ^{π*}(s))` for a
/// state-only stop probability `ϕ`.
pub fn state_based_alignment(
    mdp: &TabularMdp,
    expert: &PolicyTable,
    candidate: &PolicyTable,
    phi_state: &[f64],
    alpha: f64,
) -> Result<(f64, f64)> {
    if phi_state.len() != mdp.num_states() {
        return Err(Error::Shape(format!(
            "state stop vector has {} entries, expected {}",
            phi_state.len(),
            mdp.num_states()
        )));
    }
    let grad = psi_gradient_analytic(mdp, expert, candidate, alpha)?;
    let phi = SaTable::from_fn(mdp.num_states(), mdp.num_actions(), |s, _| phi_state[s]);
    let lhs = phi.dot(&grad);
    let rho_hat = exact_visitation(mdp, candidate)?.rho;
    let rho_star = exact_visitation(mdp, expert)?.rho;
    let rhs = (0..mdp.num_states())
        .map(|s| phi_state[s] * (rho_hat[s] - rho_star[s]))
        .sum::<f64>()
        / alpha;
    Ok((lhs, rhs))
}

/// `(⟨φ, ∇Ψ(prior)⟩, Ψ(fine-tuned) − Ψ(prior))` where the fine-tuned policy
/// solves the residual problem with reward `−φ` at strength `ω`.
pub fn alignment_predicts_improvement(
    mdp: &TabularMdp,
    expert: &PolicyTable,
    prior: &PolicyTable,
    strategy: &InterventionStrategy,
    omega: f64,
) -> Result<(f64, f64)> {
    let phi = strategy.phi_table(mdp.num_states(), mdp.num_actions())?;
    let grad = psi_gradient_analytic(mdp, expert, prior, omega)?;
    let alignment = phi.dot(&grad);
    let (_, tuned) = residual_soft_q_iteration(mdp, prior, &phi.map(|x| -x), omega, SolveOptions::default())?;
    let delta = compute_psi(mdp, expert, &tuned)? - compute_psi(mdp, expert, prior)?;
    Ok((alignment, delta))
}

/// Outcome of one named check over an instance suite.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub instances: usize,
    pub worst: f64,
    pub threshold: f64,
    pub passed: bool,
}

impl CheckOutcome {
    fn at_most(name: &'static str, instances: usize, worst: f64, threshold: f64) -> Self {
        Self {
            name,
            instances,
            worst,
            threshold,
            passed: worst <= threshold,
        }
    }

    pub fn line(&self) -> String {
        format!(
            "{:<28} instances={:<4} worst={:<12.3e} threshold={:<10.1e} {}",
            self.name,
            self.instances,
            self.worst,
            self.threshold,
            if self.passed { "PASS" } else { "FAIL" }
        )
    }
}

fn instance_rng(seed: u64, stream: u64, i: usize) -> LabRng {
    rng_from_seed(hash64(hash64(seed, stream), i as u64))
}

/// Residual iteration against the direct composite-reward solve.
pub fn check_equivalence(seed: u64, instances: usize) -> Result<CheckOutcome> {
    let omegas = [0.01, 0.1, 1.0];
    let mut worst = 0.0_f64;
    for i in 0..instances {
        let mut rng = instance_rng(seed, 1, i);
        let (ns, na, gamma) = random_shape(&mut rng, 6, 3);
        let mdp = random_mdp(&mut rng, ns, na, gamma)?;
        let prior = random_policy(&mut rng, ns, na, 1.0);
        let r = random_table(&mut rng, ns, na, -1.0, 1.0);
        let omega = omegas[i % omegas.len()];
        let (_, residual) = residual_soft_q_iteration(&mdp, &prior, &r, omega, tight_solve())?;
        let direct = finetune_equivalent_direct(&mdp, &prior, &r, omega, tight_solve())?;
        worst = worst.max(residual.max_tv_distance(&direct));
    }
    Ok(CheckOutcome::at_most("residual_equivalence_tv", instances, worst, 1e-6))
}

/// Analytic reward gradient of `Ψ` against finite differences, plus the
/// zero-sum property of the analytic gradient.
pub fn check_reward_gradient(seed: u64, instances: usize) -> Result<[CheckOutcome; 2]> {
    let alphas = [0.5, 1.0, 2.0];
    let mut worst_rel = 0.0_f64;
    let mut worst_sum = 0.0_f64;
    for i in 0..instances {
        let mut rng = instance_rng(seed, 2, i);
        let (ns, na, gamma) = random_shape(&mut rng, 6, 3);
        let mdp = random_mdp(&mut rng, ns, na, gamma)?;
        let expert = random_policy(&mut rng, ns, na, 1.0);
        let r_hat = random_table(&mut rng, ns, na, -1.0, 1.0);
        let alpha = alphas[i % alphas.len()];
        let candidate = soft_policy_of(&mdp, &r_hat, alpha, tight_solve())?;
        let analytic = psi_gradient_analytic(&mdp, &expert, &candidate, alpha)?;
        let numeric = psi_gradient_fd(&mdp, &expert, &r_hat, alpha, FD_STEP)?;
        worst_rel = worst_rel.max(normwise_relative_error(analytic.as_slice(), numeric.as_slice()));
        worst_sum = worst_sum.max(analytic.sum().abs());
    }
    Ok([
        CheckOutcome::at_most("reward_gradient_rel_err", instances, worst_rel, 1e-4),
        CheckOutcome::at_most("reward_gradient_sum", instances, worst_sum, 1e-10),
    ])
}

/// Characterization identity, `Q̂` derivative, Jacobian (finite differences
/// and series) and the state-only alignment identity.
pub fn check_gradient_identities(seed: u64, instances: usize) -> Result<Vec<CheckOutcome>> {
    let alphas = [0.1, 1.0, 5.0];
    let mut characterization = 0.0_f64;
    let mut q_derivative = 0.0_f64;
    let mut jac_fd = 0.0_f64;
    let mut jac_series = 0.0_f64;
    let mut state_based = 0.0_f64;
    for i in 0..instances {
        let mut rng = instance_rng(seed, 3, i);
        let (ns, na, gamma) = random_shape(&mut rng, 6, 3);
        let mdp = random_mdp(&mut rng, ns, na, gamma)?;
        let expert = random_policy(&mut rng, ns, na, 1.0);
        let r_hat = random_table(&mut rng, ns, na, -1.0, 1.0);
        let alpha = alphas[i % alphas.len()];
        characterization = characterization.max(characterization_check(&mdp, &expert, &r_hat, alpha)?);

        let q_hat = SoftQTable::new(random_table(&mut rng, ns, na, -2.0, 2.0), alpha)?;
        q_derivative = q_derivative.max(psi_q_derivative_check(&mdp, &expert, &q_hat)?.max_rel_err);

        // the series bound is only representable above rounding for large γ
        let high = mdp.with_discount(0.9 + 0.08 * crate::rng::uniform(&mut rng))?;
        let jac = jacobian_check(&high, &r_hat, alpha)?;
        jac_fd = jac_fd.max(jac.max_rel_err);
        // ratio to the series bound; passes when ≤ 1
        jac_series = jac_series.max(jac.series_err / jac.series_bound.max(f64::MIN_POSITIVE));

        let phi_state: Vec<f64> = (0..ns).map(|_| crate::rng::uniform(&mut rng)).collect();
        let candidate = policy_from_q(&q_hat);
        let (lhs, rhs) = state_based_alignment(&mdp, &expert, &candidate, &phi_state, alpha)?;
        state_based = state_based.max((lhs - rhs).abs());
    }
    Ok(vec![
        CheckOutcome::at_most("characterization_residual", instances, characterization, 1e-7),
        CheckOutcome::at_most("q_derivative_rel_err", instances, q_derivative, 1e-5),
        CheckOutcome::at_most("jacobian_fd_rel_err", instances, jac_fd, 1e-4),
        CheckOutcome::at_most("jacobian_series_err/bound", instances, jac_series, 1.0),
        CheckOutcome::at_most("state_based_alignment", instances, state_based, 1e-10),
    ])
}

/// `r → Q → (π, V) → Q → r` recovery on random instances.
pub fn check_bijection_round_trip(seed: u64, instances: usize) -> Result<CheckOutcome> {
    let alphas = [0.1, 1.0, 5.0];
    let opts = SolveOptions::default();
    let mut worst = 0.0_f64;
    for i in 0..instances {
        let mut rng = instance_rng(seed, 4, i);
        let (ns, na, gamma) = random_shape(&mut rng, 6, 3);
        let mdp = random_mdp(&mut rng, ns, na, gamma)?;
        let alpha = alphas[i % alphas.len()];
        let q = soft_value_iteration(&mdp, alpha, opts)?;
        let q_back = q_from_policy_value(&policy_from_q(&q), &value_from_q(&q))?;
        let r_back = reward_from_q(&mdp, &q_back)?;
        worst = worst.max(r_back.max_abs_diff(mdp.reward()));
    }
    Ok(CheckOutcome::at_most("bijection_round_trip", instances, worst, 10.0 * opts.tol))
}

/// Stationarity of the exact occupancy on random MDPs.
pub fn check_stationarity(seed: u64, instances: usize) -> Result<CheckOutcome> {
    let mut worst = 0.0_f64;
    for i in 0..instances {
        let mut rng = instance_rng(seed, 5, i);
        let (ns, na, gamma) = random_shape(&mut rng, 8, 4);
        let mdp = random_mdp(&mut rng, ns, na, gamma)?;
        let pi = random_policy(&mut rng, ns, na, 1.0);
        worst = worst.max(stationarity_residual(&mdp, &pi)?);
    }
    Ok(CheckOutcome::at_most("occupancy_stationarity", instances, worst, 1e-9))
}

/// `‖μᵀ(I − γW) − (1 − γ)μ₀ᵀ‖∞`
pub fn stationarity_residual(mdp: &TabularMdp, policy: &PolicyTable) -> Result<f64> {
    let occ = exact_visitation(mdp, policy)?;
    let w = transition_matrix(mdp, policy)?;
    let n = w.nrows();
    let na = mdp.num_actions();
    let mu = occ.mu.as_slice();
    let gamma = mdp.discount();
    let mut worst = 0.0_f64;
    for j in 0..n {
        let flow: f64 = (0..n).map(|i| mu[i] * w[(i, j)]).sum();
        let start = mdp.initial_dist()[j / na] * policy.prob(j / na, j % na);
        worst = worst.max((mu[j] - gamma * flow - (1.0 - gamma) * start).abs());
    }
    Ok(worst)
}

/// Largest `|MC − exact| / SE` over pairs on a random 3-state MDP.
pub fn check_monte_carlo(seed: u64, episodes: usize) -> Result<CheckOutcome> {
    let mut rng = instance_rng(seed, 6, 0);
    let mdp = random_mdp(&mut rng, 3, 2, 0.5)?;
    let pi = random_policy(&mut rng, 3, 2, 1.0);
    let exact = exact_visitation(&mdp, &pi)?;
    let mc = monte_carlo_visitation_with_stderr(&mdp, &pi, episodes, 25, hash64(seed, 7))?;
    let mut worst = 0.0_f64;
    for (i, (&m, &e)) in mc.distribution.mu.as_slice().iter().zip(exact.mu.as_slice()).enumerate() {
        let se = mc.stderr.as_slice()[i];
        let z = if se > 0.0 {
            (m - e).abs() / se
        } else if (m - e).abs() < 1e-12 {
            0.0
        } else {
            f64::INFINITY
        };
        worst = worst.max(z);
    }
    Ok(CheckOutcome::at_most("monte_carlo_z_score", episodes, worst, 3.0))
}

/// Instance counts for [`run_suite`].
#[derive(Clone, Copy, Debug)]
pub struct SuiteSize {
    pub equivalence: usize,
    pub gradient: usize,
    pub identities: usize,
    pub bijection: usize,
    pub stationarity: usize,
    pub monte_carlo_episodes: usize,
}

impl Default for SuiteSize {
    fn default() -> Self {
        Self {
            equivalence: 100,
            gradient: 50,
            identities: 50,
            bijection: 100,
            stationarity: 100,
            monte_carlo_episodes: 200_000,
        }
    }
}

/// Every numerical check at its pinned threshold.
pub fn run_suite(seed: u64, size: SuiteSize) -> Result<Vec<CheckOutcome>> {
    let mut out = vec![check_equivalence(seed, size.equivalence)?];
    out.extend(check_reward_gradient(seed, size.gradient)?);
    out.extend(check_gradient_identities(seed, size.identities)?);
    out.push(check_bijection_round_trip(seed, size.bijection)?);
    out.push(check_stationarity(seed, size.stationarity)?);
    out.push(check_monte_carlo(seed, size.monte_carlo_episodes)?);
    Ok(out)
}
