//! Derived examples checked against independent oracles written here from
//! first principles (loops, series, closed forms), not against the crate's
//! own helpers.

use rift_lab::intervention::{collect_dataset, InterventionStrategy};
use rift_lab::maxent::{
    evaluate_maxent_objective, evaluate_maxent_objective_occupancy, policy_from_q, q_from_policy_value,
    reward_from_policy_value, reward_from_q, soft_policy_evaluation, soft_value_iteration, value_from_q, SoftQTable,
    SoftValueTable, SolveOptions,
};
use rift_lab::mdp::{
    build_gridworld, exact_visitation, monte_carlo_visitation_with_stderr, per_timestep_visitation,
    transition_matrix, GridworldSpec, PolicyTable, TabularMdp,
};
use rift_lab::random::{random_mdp, random_policy, random_table};
use rift_lab::rift::{estimate_phi_counts, evaluate_policy, fit_residual_from_dataset, EvalSettings, PhiEstimator, RiftConfig};
use rift_lab::rng::{rng_from_seed, LabRng};
use rift_lab::rql::{evaluate_j_ft, evaluate_j_int, finetune_equivalent_direct, residual_soft_q_iteration};
use rift_lab::table::SaTable;
use rift_lab::theory::{
    alignment_predicts_improvement, characterization_check, jacobian_check, psi_gradient_analytic, psi_gradient_fd,
    state_based_alignment, FD_STEP,
};

const HAZARD_GRID: &str = "\
#######
#S...G#
#.#X#.#
#.....#
#######
";

fn tight() -> SolveOptions {
    SolveOptions::with_tol(1e-12)
}

fn hazard_grid(discount: f64) -> TabularMdp {
    build_gridworld(&GridworldSpec::from_text(HAZARD_GRID, -0.02, 1.0, -1.0, 0.0, discount).unwrap()).unwrap()
}

/// `W[(s,a),(s',a')] = T(s'|s,a) π(a'|s')`, one entry at a time.
fn brute_force_w(mdp: &TabularMdp, pi: &PolicyTable) -> Vec<Vec<f64>> {
    let (ns, na) = (mdp.num_states(), mdp.num_actions());
    let mut w = vec![vec![0.0; ns * na]; ns * na];
    for s in 0..ns {
        for a in 0..na {
            for t in 0..ns {
                for b in 0..na {
                    w[s * na + a][t * na + b] = mdp.transition_prob(s, a, t) * pi.prob(t, b);
                }
            }
        }
    }
    w
}

fn initial_pairs(mdp: &TabularMdp, pi: &PolicyTable) -> Vec<f64> {
    let na = mdp.num_actions();
    (0..mdp.num_pairs()).map(|j| mdp.initial_dist()[j / na] * pi.prob(j / na, j % na)).collect()
}

fn push_forward(w: &[Vec<f64>], mu: &[f64]) -> Vec<f64> {
    let n = mu.len();
    (0..n).map(|j| (0..n).map(|i| mu[i] * w[i][j]).sum()).collect()
}

/// Total variation per state, maximized over states.
fn max_tv(p: &PolicyTable, q: &PolicyTable) -> f64 {
    (0..p.num_states())
        .map(|s| 0.5 * (0..p.num_actions()).map(|a| (p.prob(s, a) - q.prob(s, a)).abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn perturb(rng: &mut LabRng, pi: &PolicyTable, scale: f64) -> PolicyTable {
    use rand::Rng;
    let w = SaTable::from_fn(pi.num_states(), pi.num_actions(), |s, a| {
        pi.prob(s, a) * (scale * (rng.random::<f64>() - 0.5)).exp()
    });
    PolicyTable::from_weights(&w).unwrap()
}

#[test]
fn transition_matrix_matches_double_loop() {
    let mut rng = rng_from_seed(101);
    let mdp = random_mdp(&mut rng, 3, 2, 0.9).unwrap();
    let pi = PolicyTable::uniform(3, 2);
    let w = transition_matrix(&mdp, &pi).unwrap();
    let oracle = brute_force_w(&mdp, &pi);
    for i in 0..6 {
        for j in 0..6 {
            assert!((w[(i, j)] - oracle[i][j]).abs() < 1e-15);
        }
    }
}

#[test]
fn exact_visitation_matches_truncated_series() {
    let mut rng = rng_from_seed(102);
    let mdp = random_mdp(&mut rng, 4, 3, 0.9).unwrap();
    let pi = random_policy(&mut rng, 4, 3, 1.0);
    let w = brute_force_w(&mdp, &pi);
    let mut mu_t = initial_pairs(&mdp, &pi);
    let mut series = vec![0.0; mu_t.len()];
    let gamma = mdp.discount();
    for t in 0..=200 {
        let weight = (1.0 - gamma) * gamma.powi(t);
        for (acc, m) in series.iter_mut().zip(&mu_t) {
            *acc += weight * m;
        }
        mu_t = push_forward(&w, &mu_t);
    }
    let exact = exact_visitation(&mdp, &pi).unwrap();
    for (e, o) in exact.mu.as_slice().iter().zip(&series) {
        assert!((e - o).abs() < 1e-8, "{e} vs {o}");
    }
}

#[test]
fn timestep_visitation_matches_five_pushes() {
    let mut rng = rng_from_seed(103);
    let mdp = random_mdp(&mut rng, 5, 2, 0.8).unwrap();
    let pi = random_policy(&mut rng, 5, 2, 1.0);
    let w = brute_force_w(&mdp, &pi);
    let mut mu = initial_pairs(&mdp, &pi);
    for _ in 0..5 {
        mu = push_forward(&w, &mu);
    }
    let (rho, mu5) = per_timestep_visitation(&mdp, &pi, 5).unwrap();
    for (a, b) in mu5.as_slice().iter().zip(&mu) {
        assert!((a - b).abs() < 1e-14);
    }
    for s in 0..5 {
        assert!((rho[s] - (mu[2 * s] + mu[2 * s + 1])).abs() < 1e-14);
    }
}

#[test]
fn monte_carlo_occupancy_within_three_standard_errors() {
    let mut rng = rng_from_seed(104);
    let mdp = random_mdp(&mut rng, 3, 2, 0.5).unwrap();
    let pi = random_policy(&mut rng, 3, 2, 1.0);
    let exact = exact_visitation(&mdp, &pi).unwrap();
    let mc = monte_carlo_visitation_with_stderr(&mdp, &pi, 200_000, 40, 7).unwrap();
    for j in 0..6 {
        let (s, a) = (j / 2, j % 2);
        let diff = (mc.distribution.mu[(s, a)] - exact.mu[(s, a)]).abs();
        assert!(diff <= 3.0 * mc.stderr[(s, a)], "pair {j}: diff {diff}, se {}", mc.stderr[(s, a)]);
    }
}

#[test]
fn monte_carlo_error_shrinks_with_more_episodes() {
    let mut rng = rng_from_seed(105);
    let mdp = random_mdp(&mut rng, 3, 2, 0.6).unwrap();
    let pi = random_policy(&mut rng, 3, 2, 1.0);
    let exact = exact_visitation(&mdp, &pi).unwrap();
    let err = |episodes| {
        monte_carlo_visitation_with_stderr(&mdp, &pi, episodes, 50, 9)
            .unwrap()
            .distribution
            .mu
            .max_abs_diff(&exact.mu)
    };
    assert!(err(200_000) < err(2_000));
}

#[test]
fn two_action_soft_fixed_point_frozen() {
    // V = 0.5 V + log(e + 1)  =>  V = 2 log(1 + e)
    let v = 2.0 * (1.0 + std::f64::consts::E).ln();
    assert!((v - 2.626523).abs() < 1e-6);
    let mdp = TabularMdp::new(1, 2, SaTable::from_rows(&[vec![1.0, 0.0]]).unwrap(), vec![1.0, 1.0], vec![1.0], 0.5)
        .unwrap();
    let q = soft_value_iteration(&mdp, 1.0, tight()).unwrap();
    assert!((q.q[(0, 0)] - (1.0 + 0.5 * v)).abs() < 1e-10);
    assert!((q.q[(0, 1)] - 0.5 * v).abs() < 1e-10);
    assert!((q.q[(0, 0)] - 2.313262).abs() < 1e-6);
    assert!((q.q[(0, 1)] - 1.313262).abs() < 1e-6);
}

#[test]
fn soft_value_direct_evaluation_frozen() {
    let oracle = 0.5 * (4.0_f64.exp() + 1.0).ln();
    assert!((oracle - 2.009075).abs() < 1e-6);
    let q = SoftQTable::new(SaTable::from_rows(&[vec![2.0, 0.0]]).unwrap(), 0.5).unwrap();
    assert!((value_from_q(&q).v[0] - oracle).abs() < 1e-15);
    let adv = rift_lab::maxent::advantage(&SoftQTable::new(SaTable::from_rows(&[vec![3.0_f64.ln(), 0.0]]).unwrap(), 1.0).unwrap());
    assert!((adv[(0, 0)] - 0.75_f64.ln()).abs() < 1e-15);
    assert!((adv[(0, 1)] - 0.25_f64.ln()).abs() < 1e-15);
}

#[test]
fn random_q_round_trips_through_solver() {
    let mut rng = rng_from_seed(106);
    for _ in 0..20 {
        let mdp = random_mdp(&mut rng, 5, 3, 0.9).unwrap();
        let q = SoftQTable::new(random_table(&mut rng, 5, 3, -2.0, 2.0), 0.8).unwrap();
        let r = reward_from_q(&mdp, &q).unwrap();
        let tol = 1e-11;
        let solved = soft_value_iteration(&mdp.with_reward(r).unwrap(), 0.8, SolveOptions::with_tol(tol)).unwrap();
        assert!(solved.q.max_abs_diff(&q.q) <= 10.0 * tol / (1.0 - 0.9));
    }
}

#[test]
fn reward_from_policy_value_is_the_composition() {
    let mut rng = rng_from_seed(107);
    for _ in 0..20 {
        let mdp = random_mdp(&mut rng, 4, 3, 0.7).unwrap();
        let pi = random_policy(&mut rng, 4, 3, 1.0);
        let v = SoftValueTable {
            v: random_table(&mut rng, 4, 1, -1.0, 1.0).into_vec(),
            temperature: 1.3,
        };
        let direct = reward_from_policy_value(&mdp, &pi, &v).unwrap();
        // r = α log π + V(s) − γ Σ T V, written out
        let oracle = SaTable::from_fn(4, 3, |s, a| {
            let next: f64 = (0..4).map(|t| mdp.transition_prob(s, a, t) * v.v[t]).sum();
            1.3 * pi.prob(s, a).ln() + v.v[s] - 0.7 * next
        });
        assert!(direct.max_abs_diff(&oracle) < 1e-12);
        let composed = reward_from_q(&mdp, &q_from_policy_value(&pi, &v).unwrap()).unwrap();
        assert!(direct.max_abs_diff(&composed) < 1e-12);
    }
}

#[test]
fn optimal_policy_is_self_consistent_under_evaluation() {
    let mut rng = rng_from_seed(108);
    for alpha in [0.1, 1.0, 3.0] {
        let mdp = random_mdp(&mut rng, 6, 3, 0.9).unwrap();
        let q = soft_value_iteration(&mdp, alpha, tight()).unwrap();
        let pi = policy_from_q(&q);
        let (_, v_pi) = soft_policy_evaluation(&mdp, &pi, mdp.reward(), alpha).unwrap();
        let v_star = value_from_q(&q);
        for (a, b) in v_pi.v.iter().zip(&v_star.v) {
            assert!((a - b).abs() < 1e-8);
        }
    }
}

#[test]
fn objective_occupancy_and_value_forms_agree() {
    let mut rng = rng_from_seed(109);
    for _ in 0..20 {
        let mdp = random_mdp(&mut rng, 5, 3, 0.85).unwrap();
        let pi = random_policy(&mut rng, 5, 3, 1.0);
        let r = random_table(&mut rng, 5, 3, -1.0, 1.0);
        let a = evaluate_maxent_objective(&mdp, &pi, &r, 0.4).unwrap();
        let b = evaluate_maxent_objective_occupancy(&mdp, &pi, &r, 0.4).unwrap();
        assert!((a - b).abs() < 1e-8);
    }
}

#[test]
fn residual_iteration_matches_direct_solve() {
    let mut rng = rng_from_seed(110);
    for _ in 0..20 {
        let mdp = random_mdp(&mut rng, 6, 3, 0.9).unwrap();
        let prior = random_policy(&mut rng, 6, 3, 1.0);
        let r = random_table(&mut rng, 6, 3, -1.0, 1.0);
        let (_, pi) = residual_soft_q_iteration(&mdp, &prior, &r, 0.3, tight()).unwrap();
        let direct = finetune_equivalent_direct(&mdp, &prior, &r, 0.3, tight()).unwrap();
        assert!(max_tv(&pi, &direct) <= 1e-6);
    }
}

#[test]
fn fine_tuned_policy_beats_random_perturbations() {
    let mut rng = rng_from_seed(111);
    let mdp = random_mdp(&mut rng, 5, 3, 0.8).unwrap();
    let prior = random_policy(&mut rng, 5, 3, 1.0);
    let r = random_table(&mut rng, 5, 3, -1.0, 0.0);
    let omega = 0.5;
    let (_, pi) = residual_soft_q_iteration(&mdp, &prior, &r, omega, tight()).unwrap();
    let best = evaluate_j_ft(&mdp, &pi, &r, &prior, omega).unwrap();
    for _ in 0..30 {
        let other = perturb(&mut rng, &pi, 1.0);
        assert!(evaluate_j_ft(&mdp, &other, &r, &prior, omega).unwrap() <= best + 1e-6);
    }
}

#[test]
fn j_int_equals_j_ft_with_tabulated_stop_reward() {
    let mdp = hazard_grid(0.9);
    let expert_q = soft_value_iteration(&mdp, 0.05, tight()).unwrap();
    let strategy = InterventionStrategy::q_gap(expert_q, 0.1).unwrap();
    let mut rng = rng_from_seed(112);
    let prior = random_policy(&mut rng, mdp.num_states(), 4, 1.0);
    let pi = random_policy(&mut rng, mdp.num_states(), 4, 1.0);
    let phi = strategy.phi_table(mdp.num_states(), 4).unwrap();
    let reward = SaTable::from_fn(mdp.num_states(), 4, |s, a| -phi[(s, a)]);
    let a = evaluate_j_int(&mdp, &pi, &strategy, &prior, 0.2).unwrap();
    let b = evaluate_j_ft(&mdp, &pi, &reward, &prior, 0.2).unwrap();
    assert!((a - b).abs() < 1e-12);
}

#[test]
fn stop_frequencies_concentrate_on_phi() {
    let mut rng = rng_from_seed(113);
    let mdp = random_mdp(&mut rng, 3, 2, 0.9).unwrap();
    let pi = PolicyTable::uniform(3, 2);
    let strategy = InterventionStrategy::random_uniform(0.3).unwrap();
    let data = collect_dataset(&mdp, &pi, &strategy, 20_000, 30, 17).unwrap();
    let est = estimate_phi_counts(&data, 3, 2, 0.0).unwrap();
    let mut checked = 0;
    for s in 0..3 {
        for a in 0..2 {
            let n = est.visits[s * 2 + a];
            if n >= 500 {
                let se = (0.3 * 0.7 / n as f64).sqrt();
                assert!((est.phi[(s, a)] - 0.3).abs() <= 3.0 * se, "cell ({s},{a})");
                checked += 1;
            }
        }
    }
    assert!(checked > 0);
}

#[test]
fn stop_does_not_change_next_state_distribution() {
    // T(·|s,a) for the final record of stopped episodes, against the true row
    let mdp = TabularMdp::new(
        2,
        1,
        SaTable::zeros(2, 1),
        vec![0.3, 0.7, 0.6, 0.4],
        vec![0.5, 0.5],
        0.9,
    )
    .unwrap();
    let pi = PolicyTable::uniform(2, 1);
    let strategy = InterventionStrategy::random_uniform(0.5).unwrap();
    let data = collect_dataset(&mdp, &pi, &strategy, 40_000, 20, 23).unwrap();
    let mut counts = [[0usize; 2]; 2];
    for b in &data.episode_bounds {
        let last = &data.records[b.end - 1];
        if last.estop {
            counts[last.state][last.next_state] += 1;
        }
    }
    for (s, c) in counts.iter().enumerate() {
        let n = (c[0] + c[1]) as f64;
        let p = mdp.transition_prob(s, 0, 1);
        let freq = c[1] as f64 / n;
        assert!((freq - p).abs() <= 3.0 * (p * (1.0 - p) / n).sqrt(), "state {s}: {freq} vs {p}");
    }
}

#[test]
fn sample_based_fit_agrees_with_model_based_on_heavy_data() {
    let mut rng = rng_from_seed(114);
    let mdp = random_mdp(&mut rng, 3, 2, 0.8).unwrap();
    let prior = random_policy(&mut rng, 3, 2, 1.0);
    let phi = random_table(&mut rng, 3, 2, 0.0, 0.6);
    let strategy = InterventionStrategy::explicit(phi).unwrap();
    let data = collect_dataset(&mdp, &prior, &strategy, 30_000, 30, 29).unwrap();
    let base = RiftConfig {
        omega: 0.5,
        ..RiftConfig::default()
    };
    let model = fit_residual_from_dataset(&mdp, &prior, &data, &base).unwrap();
    let sample = fit_residual_from_dataset(
        &mdp,
        &prior,
        &data,
        &RiftConfig {
            estimator: PhiEstimator::SampleBased,
            ..base
        },
    )
    .unwrap();
    assert!(max_tv(&model, &sample) <= 0.02, "TV {}", max_tv(&model, &sample));
}

#[test]
fn reward_gradient_matches_finite_differences() {
    let mut rng = rng_from_seed(115);
    for alpha in [0.5, 1.0, 2.0] {
        let mdp = random_mdp(&mut rng, 4, 3, 0.8).unwrap();
        let expert = random_policy(&mut rng, 4, 3, 1.0);
        let r_hat = random_table(&mut rng, 4, 3, -1.0, 1.0);
        let candidate = policy_from_q(&soft_value_iteration(&mdp.with_reward(r_hat.clone()).unwrap(), alpha, tight()).unwrap());
        let analytic = psi_gradient_analytic(&mdp, &expert, &candidate, alpha).unwrap();
        let numeric = psi_gradient_fd(&mdp, &expert, &r_hat, alpha, FD_STEP).unwrap();
        let scale = analytic.max_abs().max(numeric.max_abs());
        assert!(analytic.max_abs_diff(&numeric) / scale <= 1e-4);
        assert!(analytic.sum().abs() <= 1e-10);
    }
}

#[test]
fn jacobian_three_way_agreement() {
    let mut rng = rng_from_seed(116);
    let mdp = random_mdp(&mut rng, 3, 2, 0.9).unwrap();
    let r_hat = random_table(&mut rng, 3, 2, -1.0, 1.0);
    let report = jacobian_check(&mdp, &r_hat, 0.7).unwrap();
    assert!(report.max_rel_err <= 1e-4);
    assert!(report.series_err <= report.series_bound);
    // γ = 0 gives the identity
    let flat = jacobian_check(&mdp.with_discount(0.0).unwrap(), &r_hat, 0.7).unwrap();
    assert!((flat.analytic.clone() - nalgebra::DMatrix::<f64>::identity(6, 6)).amax() < 1e-15);
}

#[test]
fn characterization_holds_across_temperatures() {
    let mut rng = rng_from_seed(117);
    for alpha in [0.1, 1.0, 5.0] {
        let mdp = random_mdp(&mut rng, 5, 3, 0.85).unwrap();
        let expert = random_policy(&mut rng, 5, 3, 1.0);
        let r_hat = random_table(&mut rng, 5, 3, -1.0, 1.0);
        assert!(characterization_check(&mdp, &expert, &r_hat, alpha).unwrap() <= 1e-7);
    }
}

#[test]
fn state_based_alignment_exact() {
    let mut rng = rng_from_seed(118);
    for _ in 0..20 {
        let mdp = random_mdp(&mut rng, 5, 3, 0.9).unwrap();
        let expert = random_policy(&mut rng, 5, 3, 1.0);
        let candidate = random_policy(&mut rng, 5, 3, 1.0);
        let phi = random_table(&mut rng, 5, 1, 0.0, 1.0).into_vec();
        let (lhs, rhs) = state_based_alignment(&mdp, &expert, &candidate, &phi, 0.6).unwrap();
        assert!((lhs - rhs).abs() <= 1e-10);
    }
}

fn alignment_instance(seed: u64, adversarial: bool) -> (f64, f64) {
    let mdp = hazard_grid(0.9);
    let ns = mdp.num_states();
    let expert_q = soft_value_iteration(&mdp, 0.05, tight()).unwrap();
    let expert = policy_from_q(&expert_q);
    let mut rng = rng_from_seed(seed);
    let prior = random_policy(&mut rng, ns, 4, 1.0);
    let strategy = if adversarial {
        let rho = exact_visitation(&mdp, &expert).unwrap().rho;
        let cutoff = 1.0 / ns as f64;
        InterventionStrategy::state_based(rho.iter().map(|&p| if p > cutoff { 1.0 } else { 0.0 }).collect()).unwrap()
    } else {
        InterventionStrategy::q_gap(expert_q, 0.1).unwrap()
    };
    alignment_predicts_improvement(&mdp, &expert, &prior, &strategy, 0.5).unwrap()
}

#[test]
fn q_gap_stops_usually_reduce_imitation_gap() {
    let improved = (0..50).filter(|&i| alignment_instance(1000 + i, false).1 < 0.0).count();
    assert!(improved >= 40, "{improved}/50 instances improved");
}

#[test]
fn stopping_on_expert_states_usually_hurts() {
    let worse = (0..50).filter(|&i| alignment_instance(2000 + i, true).1 > 0.0).count();
    assert!(worse > 25, "{worse}/50 instances got worse");
}

#[test]
fn uniform_policy_on_hazard_maze_trails_expert() {
    let mdp = hazard_grid(0.9);
    let expert = policy_from_q(&soft_value_iteration(&mdp, 0.01, tight()).unwrap());
    let settings = EvalSettings {
        episodes: 2000,
        max_horizon: 50,
        success_threshold: 0.5,
        deterministic: false,
    };
    let reward = mdp.reward().clone();
    let uniform = PolicyTable::uniform(mdp.num_states(), 4);
    let e = evaluate_policy(&mdp, &expert, &reward, &settings, 3).unwrap().success_rate;
    let u = evaluate_policy(&mdp, &uniform, &reward, &settings, 3).unwrap().success_rate;
    assert!(e > 0.95 && u < e - 0.3, "expert {e}, uniform {u}");
}
