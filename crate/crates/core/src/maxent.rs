//! Maximum-entropy RL on tabular MDPs.
//!
//! Soft-Q functions, policies, soft values and rewards are related by closed
//! form maps (`policy_from_q`, `value_from_q`, `q_from_policy_value`,
//! `reward_from_q`, `reward_from_policy_value`) plus one implicit map, the
//! soft Bellman fixed point solved by [`soft_value_iteration`].

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::mdp::{exact_visitation, PolicyTable, TabularMdp};
use crate::table::{log_sum_exp, SaTable};

/// Tolerance and iteration cap for fixed-point solvers.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iters: 100_000,
        }
    }
}

impl SolveOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            tol,
            ..Self::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SoftQTable {
    pub q: SaTable,
    pub temperature: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SoftValueTable {
    pub v: Vec<f64>,
    pub temperature: f64,
}

impl SoftQTable {
    pub fn new(q: SaTable, temperature: f64) -> Result<Self> {
        check_temperature(temperature)?;
        if q.as_slice().iter().any(|x| !x.is_finite()) {
            return Err(Error::Domain("soft-Q table has non-finite entries".into()));
        }
        Ok(Self { q, temperature })
    }
}

fn check_temperature(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("temperature must be positive and finite, got {alpha}")))
    }
}

/// `α log Σ_a exp(q_a / α)`
pub(crate) fn soft_max(row: &[f64], alpha: f64) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + alpha * row.iter().map(|q| ((q - max) / alpha).exp()).sum::<f64>().ln()
}

/// One application of the soft Bellman operator.
pub fn soft_bellman_backup(mdp: &TabularMdp, q: &SaTable, alpha: f64) -> SaTable {
    let v: Vec<f64> = q.rows().map(|row| soft_max(row, alpha)).collect();
    let gamma = mdp.discount();
    SaTable::from_fn(mdp.num_states(), mdp.num_actions(), |s, a| {
        mdp.reward()[(s, a)] + gamma * mdp.expected_next(s, a, &v)
    })
}

/// Solves `Q(s,a) = r(s,a) + γ E_{s'}[α log Σ_{a'} exp(Q(s',a')/α)]` from `Q ≡ 0`.
///
/// The returned table has soft Bellman residual at most `opts.tol`.
pub fn soft_value_iteration(mdp: &TabularMdp, alpha: f64, opts: SolveOptions) -> Result<SoftQTable> {
    check_temperature(alpha)?;
    let mut q = SaTable::zeros(mdp.num_states(), mdp.num_actions());
    let mut residual = f64::INFINITY;
    for _ in 0..opts.max_iters {
        let next = soft_bellman_backup(mdp, &q, alpha);
        residual = next.max_abs_diff(&q);
        q = next;
        // ‖B[q] − q‖ ≤ γ · residual ≤ tol once residual ≤ tol
        if residual <= opts.tol {
            return SoftQTable::new(q, alpha);
        }
    }
    Err(Error::Convergence {
        iterations: opts.max_iters,
        residual,
    })
}

/// Row-wise softmax of `Q/α`.
pub fn policy_from_q(q: &SoftQTable) -> PolicyTable {
    let alpha = q.temperature;
    PolicyTable::softmax(&q.q.map(|x| x / alpha))
}

/// `V(s) = α log Σ_a exp(Q(s,a)/α)`
pub fn value_from_q(q: &SoftQTable) -> SoftValueTable {
    SoftValueTable {
        v: q.q.rows().map(|row| soft_max(row, q.temperature)).collect(),
        temperature: q.temperature,
    }
}

/// Soft advantage `A = Q − V`.
pub fn advantage(q: &SoftQTable) -> SaTable {
    let alpha = q.temperature;
    let mut out = q.q.clone();
    for s in 0..out.num_states() {
        let row = out.row_mut(s);
        let v = alpha * log_sum_exp(&row.iter().map(|x| x / alpha).collect::<Vec<_>>());
        row.iter_mut().for_each(|x| *x -= v);
    }
    out
}

/// `Q(s,a) = α log π(a|s) + V(s)`
pub fn q_from_policy_value(policy: &PolicyTable, v: &SoftValueTable) -> Result<SoftQTable> {
    if policy.num_states() != v.v.len() {
        return Err(Error::Shape("policy and value table disagree on the state count".into()));
    }
    if policy.min_prob() <= 0.0 {
        return Err(Error::Domain("policy must be strictly positive".into()));
    }
    let alpha = v.temperature;
    let q = SaTable::from_fn(policy.num_states(), policy.num_actions(), |s, a| {
        alpha * policy.prob(s, a).ln() + v.v[s]
    });
    SoftQTable::new(q, alpha)
}

/// `r(s,a) = Q(s,a) − γ E_{s'}[V(s')]`
pub fn reward_from_q(mdp: &TabularMdp, q: &SoftQTable) -> Result<SaTable> {
    mdp.check_table(&q.q, "soft-Q table")?;
    let v = value_from_q(q).v;
    let gamma = mdp.discount();
    Ok(SaTable::from_fn(mdp.num_states(), mdp.num_actions(), |s, a| {
        q.q[(s, a)] - gamma * mdp.expected_next(s, a, &v)
    }))
}

/// `r(s,a) = α log π(a|s) + V(s) − γ E_{s'}[V(s')]`, the potential-shaped form.
pub fn reward_from_policy_value(mdp: &TabularMdp, policy: &PolicyTable, v: &SoftValueTable) -> Result<SaTable> {
    mdp.check_policy(policy)?;
    if v.v.len() != mdp.num_states() {
        return Err(Error::Shape("value table has the wrong state count".into()));
    }
    if policy.min_prob() <= 0.0 {
        return Err(Error::Domain("policy must be strictly positive".into()));
    }
    let alpha = v.temperature;
    let gamma = mdp.discount();
    Ok(SaTable::from_fn(mdp.num_states(), mdp.num_actions(), |s, a| {
        alpha * policy.prob(s, a).ln() + v.v[s] - gamma * mdp.expected_next(s, a, &v.v)
    }))
}

/// Exact soft `(Q^π, V^π)` for a fixed policy.
///
/// `V^π` solves `(I − γ P_π) V = r_π + α H[π]`, then `Q^π = r + γ P V^π`.
pub fn soft_policy_evaluation(
    mdp: &TabularMdp,
    policy: &PolicyTable,
    reward: &SaTable,
    alpha: f64,
) -> Result<(SoftQTable, SoftValueTable)> {
    check_temperature(alpha)?;
    mdp.check_policy(policy)?;
    mdp.check_table(reward, "reward")?;
    let ns = mdp.num_states();
    let gamma = mdp.discount();
    let mut system = DMatrix::<f64>::identity(ns, ns);
    let mut rhs = DVector::<f64>::zeros(ns);
    for s in 0..ns {
        let mut bonus = alpha * policy.entropy(s);
        for (a, &pa) in policy.row(s).iter().enumerate() {
            if pa == 0.0 {
                continue;
            }
            bonus += pa * reward[(s, a)];
            for &(n, p) in mdp.successors(s, a) {
                system[(s, n)] -= gamma * pa * p;
            }
        }
        rhs[s] = bonus;
    }
    let v = system
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Solver("policy evaluation system is singular".into()))?;
    let v: Vec<f64> = v.iter().copied().collect();
    let q = SaTable::from_fn(ns, mdp.num_actions(), |s, a| reward[(s, a)] + gamma * mdp.expected_next(s, a, &v));
    Ok((
        SoftQTable::new(q, alpha)?,
        SoftValueTable {
            v,
            temperature: alpha,
        },
    ))
}

/// `J_ME(π | r) = E_{s₀∼d}[V^π(s₀)]`
pub fn evaluate_maxent_objective(mdp: &TabularMdp, policy: &PolicyTable, reward: &SaTable, alpha: f64) -> Result<f64> {
    let (_, v) = soft_policy_evaluation(mdp, policy, reward, alpha)?;
    Ok(mdp.initial_dist().iter().zip(&v.v).map(|(d, v)| d * v).sum())
}

/// The same objective through the occupancy measure:
/// `(1/(1−γ)) Σ_{s,a} μ^π(s,a) (r(s,a) + α H[π(s)])`.
pub fn evaluate_maxent_objective_occupancy(
    mdp: &TabularMdp,
    policy: &PolicyTable,
    reward: &SaTable,
    alpha: f64,
) -> Result<f64> {
    check_temperature(alpha)?;
    mdp.check_table(reward, "reward")?;
    let occ = exact_visitation(mdp, policy)?;
    let mut total = 0.0;
    for s in 0..mdp.num_states() {
        let h = policy.entropy(s);
        for a in 0..mdp.num_actions() {
            total += occ.mu[(s, a)] * (reward[(s, a)] + alpha * h);
        }
    }
    Ok(total / (1.0 - mdp.discount()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_state(rewards: &[f64], gamma: f64) -> TabularMdp {
        let na = rewards.len();
        TabularMdp::new(1, na, SaTable::new(1, na, rewards.to_vec()).unwrap(), vec![1.0; na], vec![1.0], gamma).unwrap()
    }

    fn q_row(row: &[f64], alpha: f64) -> SoftQTable {
        SoftQTable::new(SaTable::from_rows(&[row.to_vec()]).unwrap(), alpha).unwrap()
    }

    #[test]
    fn single_action_geometric_series() {
        for alpha in [0.01, 1.0, 5.0] {
            let q = soft_value_iteration(&one_state(&[1.0], 0.9), alpha, SolveOptions::default()).unwrap();
            assert!((q.q[(0, 0)] - 10.0).abs() < 1e-8);
        }
    }

    #[test]
    fn two_action_closed_form() {
        // V = 0.5 V + log(e + 1)
        let q = soft_value_iteration(&one_state(&[1.0, 0.0], 0.5), 1.0, SolveOptions::with_tol(1e-13)).unwrap();
        let v = value_from_q(&q).v[0];
        assert!((v - 2.0 * (1.0 + 1f64.exp()).ln()).abs() < 1e-11);
        assert!((v - 2.626523).abs() < 1e-6);
        assert!((q.q[(0, 0)] - 2.313262).abs() < 1e-6);
        assert!((q.q[(0, 1)] - 1.313262).abs() < 1e-6);
    }

    #[test]
    fn zero_discount_returns_reward() {
        let m = one_state(&[0.3, -2.0, 4.0], 0.0);
        let q = soft_value_iteration(&m, 0.7, SolveOptions::default()).unwrap();
        assert_eq!(q.q.as_slice(), &[0.3, -2.0, 4.0]);
    }

    #[test]
    fn convergence_error_reports_residual() {
        let m = one_state(&[1.0], 0.99);
        let err = soft_value_iteration(&m, 1.0, SolveOptions { tol: 1e-12, max_iters: 5 }).unwrap_err();
        match err {
            Error::Convergence { iterations: 5, residual } => assert!(residual > 0.5),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn policy_examples() {
        let p = policy_from_q(&q_row(&[0.0, 0.0], 1.0));
        assert_eq!(p.row(0), &[0.5, 0.5]);
        let p = policy_from_q(&q_row(&[3f64.ln(), 0.0], 1.0));
        assert!((p.prob(0, 0) - 0.75).abs() < 1e-15);
        let p = policy_from_q(&q_row(&[250.0 + 3f64.ln(), 250.0], 1.0));
        assert!((p.prob(0, 0) - 0.75).abs() < 1e-13);
    }

    #[test]
    fn value_examples() {
        assert!((value_from_q(&q_row(&[0.0, 0.0], 1.0)).v[0] - 2f64.ln()).abs() < 1e-15);
        assert_eq!(value_from_q(&q_row(&[7.0], 1.0)).v[0], 7.0);
        let v = value_from_q(&q_row(&[2.0, 0.0], 0.5)).v[0];
        assert!((v - 0.5 * (4f64.exp() + 1.0).ln()).abs() < 1e-14);
        assert!((v - 2.009075).abs() < 1e-6);
    }

    #[test]
    fn small_temperature_stays_finite() {
        let v = value_from_q(&q_row(&[2.0, 0.0, -5.0], 1e-3)).v[0];
        assert!((v - 2.0).abs() < 1e-12);
        let p = policy_from_q(&q_row(&[2.0, 1.999, -5.0], 1e-3));
        assert!(p.row(0).iter().all(|x| x.is_finite()));
    }

    #[test]
    fn advantage_examples() {
        let a = advantage(&q_row(&[0.0, 0.0], 1.0));
        assert!((a[(0, 0)] + 2f64.ln()).abs() < 1e-15);
        assert!((a[(0, 1)] + 2f64.ln()).abs() < 1e-15);
        let a = advantage(&q_row(&[3f64.ln(), 0.0], 1.0));
        assert!((a[(0, 0)] - 0.75f64.ln()).abs() < 1e-15);
        assert!((a[(0, 1)] - 0.25f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn q_from_policy_value_examples() {
        let v = SoftValueTable { v: vec![0.0], temperature: 1.0 };
        let q = q_from_policy_value(&PolicyTable::uniform(1, 2), &v).unwrap();
        assert!((q.q[(0, 0)] + 2f64.ln()).abs() < 1e-15);
        let pi = PolicyTable::new(SaTable::from_rows(&[vec![0.75, 0.25]]).unwrap()).unwrap();
        let v = SoftValueTable { v: vec![0.5], temperature: 1.0 };
        let q = q_from_policy_value(&pi, &v).unwrap();
        assert!((q.q[(0, 0)] - (0.5 + 0.75f64.ln())).abs() < 1e-15);
        assert!((q.q[(0, 1)] - (0.5 + 0.25f64.ln())).abs() < 1e-15);
        let zero = PolicyTable::deterministic(&[0], 2).unwrap();
        assert!(matches!(q_from_policy_value(&zero, &v), Err(Error::Domain(_))));
    }

    #[test]
    fn reward_from_q_examples() {
        let m = one_state(&[1.0], 0.9);
        let r = reward_from_q(&m, &q_row(&[10.0], 0.3)).unwrap();
        assert!((r[(0, 0)] - 1.0).abs() < 1e-14);
        let m0 = one_state(&[0.0, 0.0], 0.0);
        let q = q_row(&[0.4, -1.2], 1.0);
        assert_eq!(reward_from_q(&m0, &q).unwrap(), q.q);
    }

    #[test]
    fn reward_from_policy_value_examples() {
        let m = one_state(&[0.0, 0.0, 0.0], 0.8);
        let pi = PolicyTable::new(SaTable::from_rows(&[vec![0.2, 0.3, 0.5]]).unwrap()).unwrap();
        let v0 = SoftValueTable { v: vec![0.0], temperature: 2.0 };
        let r = reward_from_policy_value(&m, &pi, &v0).unwrap();
        for a in 0..3 {
            assert!((r[(0, a)] - 2.0 * pi.prob(0, a).ln()).abs() < 1e-15);
        }
        let vc = SoftValueTable { v: vec![3.0], temperature: 1.0 };
        let r = reward_from_policy_value(&m, &PolicyTable::uniform(1, 3), &vc).unwrap();
        for a in 0..3 {
            assert!((r[(0, a)] - ((1.0f64 / 3.0).ln() + 3.0 * 0.2)).abs() < 1e-14);
        }
    }

    #[test]
    fn policy_evaluation_single_action_chain() {
        let m = TabularMdp::new(
            2,
            1,
            SaTable::new(2, 1, vec![1.0, 2.0]).unwrap(),
            vec![0.0, 1.0, 0.0, 1.0],
            vec![1.0, 0.0],
            0.5,
        )
        .unwrap();
        let (q, v) = soft_policy_evaluation(&m, &PolicyTable::uniform(2, 1), m.reward(), 3.0).unwrap();
        assert!((v.v[1] - 4.0).abs() < 1e-14);
        assert!((v.v[0] - 3.0).abs() < 1e-14);
        assert!((q.q[(0, 0)] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn policy_evaluation_zero_discount() {
        let m = one_state(&[0.5, -0.5], 0.0);
        let pi = PolicyTable::new(SaTable::from_rows(&[vec![0.1, 0.9]]).unwrap()).unwrap();
        let (q, _) = soft_policy_evaluation(&m, &pi, m.reward(), 1.0).unwrap();
        assert_eq!(&q.q, m.reward());
    }

    #[test]
    fn objective_examples() {
        let m = one_state(&[1.0], 0.9);
        let j = evaluate_maxent_objective(&m, &PolicyTable::uniform(1, 1), m.reward(), 0.5).unwrap();
        assert!((j - 10.0).abs() < 1e-12);
        let m = one_state(&[0.0, 0.0], 0.9);
        let j = evaluate_maxent_objective(&m, &PolicyTable::uniform(1, 2), m.reward(), 1e-9).unwrap();
        assert!(j.abs() < 1e-7);
    }

    #[test]
    fn rejects_bad_temperature() {
        let m = one_state(&[1.0], 0.9);
        assert!(soft_value_iteration(&m, 0.0, SolveOptions::default()).is_err());
        assert!(soft_value_iteration(&m, -1.0, SolveOptions::default()).is_err());
    }
}
