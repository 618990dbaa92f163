use proptest::prelude::*;

use rift_lab::intervention::{collect_dataset, InterventionStrategy};
use rift_lab::maxent::{
    evaluate_maxent_objective, policy_from_q, q_from_policy_value, reward_from_q, soft_value_iteration, value_from_q,
    SoftQTable, SolveOptions,
};
use rift_lab::mdp::{exact_visitation, per_timestep_visitation, transition_matrix, PolicyTable, TabularMdp};
use rift_lab::random::{random_mdp, random_policy, random_table};
use rift_lab::rift::{rift_loop, EvalSettings, RiftConfig};
use rift_lab::rng::{rng_from_seed, LabRng};
use rift_lab::rql::{finetune_equivalent_direct, residual_soft_q_iteration};
use rift_lab::table::SaTable;
use rift_lab::theory::stationarity_residual;

fn instance(seed: u64, ns: usize, na: usize, gamma: f64) -> (LabRng, TabularMdp) {
    let mut rng = rng_from_seed(seed);
    let mdp = random_mdp(&mut rng, ns, na, gamma).unwrap();
    (rng, mdp)
}

fn tight() -> SolveOptions {
    SolveOptions::with_tol(1e-12)
}

fn cases(n: u32) -> ProptestConfig {
    ProptestConfig {
        failure_persistence: None,
        ..ProptestConfig::with_cases(n)
    }
}

proptest! {
    #![proptest_config(cases(64))]

    #[test]
    fn transition_rows_are_stochastic(seed in any::<u64>(), ns in 1usize..8, na in 1usize..4, gamma in 0.0..0.99f64) {
        let (mut rng, mdp) = instance(seed, ns, na, gamma);
        let pi = random_policy(&mut rng, ns, na, 0.5);
        let w = transition_matrix(&mdp, &pi).unwrap();
        for i in 0..w.nrows() {
            prop_assert!((w.row(i).sum() - 1.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn occupancy_is_stationary(seed in any::<u64>(), ns in 1usize..9, na in 1usize..5, gamma in 0.0..0.99f64) {
        let (mut rng, mdp) = instance(seed, ns, na, gamma);
        let pi = random_policy(&mut rng, ns, na, 1.0);
        prop_assert!(stationarity_residual(&mdp, &pi).unwrap() <= 1e-9);
        let mu = exact_visitation(&mdp, &pi).unwrap().mu;
        prop_assert!((mu.sum() - 1.0).abs() <= 1e-9);
        prop_assert!(mu.as_slice().iter().all(|&x| x >= -1e-15));
    }

    #[test]
    fn timestep_series_converges(seed in any::<u64>(), ns in 1usize..6, na in 1usize..4, gamma in 0.1..0.9f64, horizon in 0usize..30) {
        let (mut rng, mdp) = instance(seed, ns, na, gamma);
        let pi = random_policy(&mut rng, ns, na, 1.0);
        let exact = exact_visitation(&mdp, &pi).unwrap().mu;
        let mut partial = SaTable::zeros(ns, na);
        for t in 0..=horizon {
            let (_, mu_t) = per_timestep_visitation(&mdp, &pi, t).unwrap();
            let w = (1.0 - gamma) * gamma.powi(t as i32);
            partial = partial.zip_map(&mu_t, |a, b| a + w * b).unwrap();
        }
        prop_assert!(exact.max_abs_diff(&partial) <= gamma.powi(horizon as i32 + 1) + 1e-12);
    }

    #[test]
    fn reward_round_trip(seed in any::<u64>(), ns in 1usize..7, na in 1usize..4, gamma in 0.0..0.9f64, alpha in prop::sample::select(vec![0.1, 1.0, 5.0])) {
        let (_, mdp) = instance(seed, ns, na, gamma);
        let opts = tight();
        let q = soft_value_iteration(&mdp, alpha, opts).unwrap();
        let back = q_from_policy_value(&policy_from_q(&q), &value_from_q(&q)).unwrap();
        let r = reward_from_q(&mdp, &back).unwrap();
        prop_assert!(r.max_abs_diff(mdp.reward()) <= 10.0 * opts.tol);
    }

    #[test]
    fn softmax_ignores_per_state_shifts(seed in any::<u64>(), ns in 1usize..6, na in 1usize..5, shifts in prop::collection::vec(-64i32..64, 6)) {
        // dyadic logits and integer shifts keep every addition exact
        let mut rng = rng_from_seed(seed);
        let q = random_table(&mut rng, ns, na, -8.0, 8.0).map(|x| (x * 1024.0).round() / 1024.0);
        let shifted = SaTable::from_fn(ns, na, |s, a| q[(s, a)] + shifts[s] as f64);
        let p = policy_from_q(&SoftQTable::new(q, 1.0).unwrap());
        let p_shift = policy_from_q(&SoftQTable::new(shifted, 1.0).unwrap());
        prop_assert_eq!(p.probs(), p_shift.probs());
    }

    #[test]
    fn soft_value_bounds(seed in any::<u64>(), ns in 1usize..6, na in 1usize..5, alpha in 0.01..10.0f64) {
        let mut rng = rng_from_seed(seed);
        let q = SoftQTable::new(random_table(&mut rng, ns, na, -50.0, 50.0), alpha).unwrap();
        let v = value_from_q(&q);
        for s in 0..ns {
            let m = q.q.row(s).iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(v.v[s] >= m - 1e-12);
            prop_assert!(v.v[s] <= m + alpha * (na as f64).ln() + 1e-12);
        }
    }

    #[test]
    fn phi_values_are_probabilities(seed in any::<u64>(), ns in 1usize..6, na in 1usize..4, b in 0.001..5.0f64, p in 0.0..=1.0f64) {
        let mut rng = rng_from_seed(seed);
        let q = SoftQTable::new(random_table(&mut rng, ns, na, -3.0, 3.0), 0.5).unwrap();
        let strategies = [
            InterventionStrategy::q_gap(q, b).unwrap(),
            InterventionStrategy::state_based(random_table(&mut rng, ns, 1, 0.0, 1.0).into_vec()).unwrap(),
            InterventionStrategy::random_uniform(p).unwrap(),
            InterventionStrategy::explicit(random_table(&mut rng, ns, na, 0.0, 1.0)).unwrap(),
        ];
        for strategy in &strategies {
            let phi = strategy.phi_table(ns, na).unwrap();
            prop_assert!(phi.as_slice().iter().all(|x| (0.0..=1.0).contains(x)));
        }
    }

    #[test]
    fn record_reward_is_minus_stop(seed in any::<u64>(), p in 0.0..=1.0f64) {
        let (mut rng, mdp) = instance(seed, 4, 2, 0.9);
        let pi = random_policy(&mut rng, 4, 2, 1.0);
        let data = collect_dataset(&mdp, &pi, &InterventionStrategy::random_uniform(p).unwrap(), 20, 15, seed).unwrap();
        for r in &data.records {
            prop_assert_eq!(r.reward(), if r.estop { -1.0 } else { 0.0 });
        }
    }
}

proptest! {
    #![proptest_config(cases(32))]

    #[test]
    fn optimal_policy_dominates_random_policies(seed in any::<u64>(), ns in 1usize..6, na in 1usize..4, gamma in 0.0..0.9f64, alpha in 0.1..2.0f64) {
        let (mut rng, mdp) = instance(seed, ns, na, gamma);
        let best = policy_from_q(&soft_value_iteration(&mdp, alpha, tight()).unwrap());
        let j_best = evaluate_maxent_objective(&mdp, &best, mdp.reward(), alpha).unwrap();
        for _ in 0..20 {
            let other = random_policy(&mut rng, ns, na, 1.0);
            prop_assert!(evaluate_maxent_objective(&mdp, &other, mdp.reward(), alpha).unwrap() <= j_best + 1e-6);
        }
    }

    #[test]
    fn residual_equivalence(seed in any::<u64>(), ns in 1usize..7, na in 1usize..4, gamma in 0.0..0.9f64, omega in prop::sample::select(vec![0.01, 0.1, 1.0])) {
        let (mut rng, mdp) = instance(seed, ns, na, gamma);
        let prior = random_policy(&mut rng, ns, na, 1.0);
        let r = random_table(&mut rng, ns, na, -1.0, 1.0);
        let (_, pi) = residual_soft_q_iteration(&mdp, &prior, &r, omega, tight()).unwrap();
        let direct = finetune_equivalent_direct(&mdp, &prior, &r, omega, tight()).unwrap();
        prop_assert!(pi.max_tv_distance(&direct) <= 1e-6);
    }

    #[test]
    fn large_omega_stays_near_prior(seed in any::<u64>(), ns in 1usize..7, na in 1usize..4, gamma in 0.0..0.9f64) {
        let (mut rng, mdp) = instance(seed, ns, na, gamma);
        let prior = random_policy(&mut rng, ns, na, 1.0);
        let r = random_table(&mut rng, ns, na, -1.0, 0.0);
        let (_, pi) = residual_soft_q_iteration(&mdp, &prior, &r, 1e3, tight()).unwrap();
        prop_assert!(pi.max_tv_distance(&prior) <= 1e-2);
    }

    #[test]
    fn constant_residual_shift_is_invisible(seed in any::<u64>(), ns in 1usize..6, na in 1usize..4, gamma in 0.0..0.9f64, c in -3.0..3.0f64, omega in 0.05..2.0f64) {
        let (mut rng, mdp) = instance(seed, ns, na, gamma);
        let prior = random_policy(&mut rng, ns, na, 1.0);
        let r = random_table(&mut rng, ns, na, -1.0, 1.0);
        let (_, a) = residual_soft_q_iteration(&mdp, &prior, &r, omega, tight()).unwrap();
        let (_, b) = residual_soft_q_iteration(&mdp, &prior, &r.map(|x| x + c), omega, tight()).unwrap();
        prop_assert!(a.max_tv_distance(&b) <= 1e-8);
    }
}

proptest! {
    #![proptest_config(cases(12))]

    #[test]
    fn loop_neutral_without_signal_and_under_constant_stops(seed in any::<u64>(), ns in 2usize..5, na in 2usize..4, omega in 0.01..1.0f64, always in any::<bool>()) {
        let (mut rng, mdp) = instance(seed, ns, na, 0.8);
        let prior = random_policy(&mut rng, ns, na, 1.0);
        let strategy = InterventionStrategy::random_uniform(if always { 1.0 } else { 0.0 }).unwrap();
        let config = RiftConfig {
            omega,
            rounds: 2,
            episodes_per_round: 30,
            max_horizon: 20,
            seed,
            // unvisited pairs must carry the same constant reward
            phi_default: if always { 1.0 } else { 0.0 },
            eval: EvalSettings { episodes: 10, max_horizon: 20, ..EvalSettings::default() },
            ..RiftConfig::default()
        };
        let (pi, _) = rift_loop(&mdp, &prior, &strategy, &config, mdp.reward()).unwrap();
        let tol = if always { 1e-4 } else { 1e-6 };
        prop_assert!(pi.max_tv_distance(&prior) <= tol);
    }
}

#[test]
fn uniform_policy_rows_are_uniform() {
    let pi = PolicyTable::uniform(3, 4);
    assert!(pi.probs().as_slice().iter().all(|&p| p == 0.25));
}
