//! Property tests: randomized invariants over generated inputs.

mod common;

use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::SeedableRng;

use driftbench::drift::{make_discrete_drift, DiscreteDistribution};
use driftbench::harness::{run_experiment, Experiment, ExperimentConfig};
use driftbench::losses::{population_grad, population_value, prox, CVaRLossModel, Regularizer};
use driftbench::optim::StepSchedule;
use driftbench::regret::RegretLedger;
use driftbench::transport::w1_discrete;

fn law_strategy(max_atoms: usize, dimension: usize) -> impl Strategy<Value = DiscreteDistribution> {
    (1..=max_atoms)
        .prop_flat_map(move |atoms| {
            (
                proptest::collection::vec(
                    proptest::collection::vec(-4.0..4.0f64, dimension),
                    atoms,
                ),
                proptest::collection::vec(0.05..1.0f64, atoms),
            )
        })
        .prop_map(|(atoms, raw)| {
            let total: f64 = raw.iter().sum();
            let weights = raw.iter().map(|w| w / total).collect();
            DiscreteDistribution::new(atoms, weights).unwrap()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn w1_metric_axioms(
        p in law_strategy(4, 2),
        q in law_strategy(4, 2),
        r in law_strategy(4, 2),
    ) {
        let (pq, _) = w1_discrete(&p, &q).unwrap();
        let (qp, _) = w1_discrete(&q, &p).unwrap();
        let (qr, _) = w1_discrete(&q, &r).unwrap();
        let (pr, _) = w1_discrete(&p, &r).unwrap();
        let (pp, _) = w1_discrete(&p, &p).unwrap();
        prop_assert!(pq >= 0.0);
        prop_assert!(pp.abs() <= 1e-12);
        prop_assert!((pq - qp).abs() <= 1e-12);
        prop_assert!(pr <= pq + qr + 1e-9);
    }

    #[test]
    fn prox_is_nonexpansive(
        x in proptest::collection::vec(-5.0..5.0f64, 3),
        y in proptest::collection::vec(-5.0..5.0f64, 3),
        gamma in 0.01..3.0f64,
        weight in 0.05..2.0f64,
        kind in 0..3usize,
    ) {
        let regularizer = match kind {
            0 => Regularizer::None,
            1 => Regularizer::cube(3, -1.0, 1.0),
            _ => Regularizer::l1(weight).unwrap(),
        };
        let px = prox(&regularizer, &x, gamma).unwrap();
        let py = prox(&regularizer, &y, gamma).unwrap();
        let moved: f64 = px.iter().zip(&py).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let original: f64 = x.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        prop_assert!(moved <= original + 1e-12);
    }

    #[test]
    fn drift_sequences_respect_their_budgets(seed in 0..500u64) {
        let mut rng = StdRng::seed_from_u64(seed);
        let horizon = 20;
        let eta: Vec<f64> = (1..horizon).map(|t| 0.5 / (t as f64)).collect();
        let laws = make_discrete_drift(4, 2, horizon, &eta, &mut rng).unwrap();
        prop_assert_eq!(laws.len(), horizon);
        for (t, pair) in laws.windows(2).enumerate() {
            let (dist, _) = w1_discrete(&pair[0], &pair[1]).unwrap();
            prop_assert!(
                dist <= eta[t] + 1e-9,
                "step {}: moved {} > budget {}", t, dist, eta[t]
            );
        }
    }

    #[test]
    fn cvar_population_grad_matches_central_difference(
        theta in proptest::collection::vec(-1.0..1.0f64, 2),
        h in -1.5..1.5f64,
        alpha in 0.2..0.95f64,
        law in law_strategy(5, 3),
    ) {
        let model = CVaRLossModel::new(alpha).unwrap();
        let mut x = theta.clone();
        x.push(h);
        let analytic = population_grad(&model, &x, &law).unwrap();
        // Skip points whose finite-difference stencil straddles a kink.
        prop_assume!(!analytic.has_ties());
        let margin_ok = law.atoms().iter().all(|atom| {
            let (u, d) = (&atom[..2], atom[2]);
            let residual: f64 = theta.iter().zip(u).map(|(t, ui)| t * ui).sum::<f64>() - d;
            (residual * residual - h).abs() > 1e-3
        });
        prop_assume!(margin_ok);
        let numeric = common::central_difference(
            |z| population_value(&model, z, &law).unwrap(),
            &x,
            1e-6,
        );
        for (a, n) in analytic.grad.iter().zip(&numeric) {
            prop_assert!((a - n).abs() <= 1e-4, "analytic {} vs numeric {}", a, n);
        }
    }

    #[test]
    fn schedules_are_positive_and_monotone(c in 0.001..0.5f64, horizon in 1..2000u64) {
        let fixed = StepSchedule::constant_over_sqrt_horizon(c, horizon).unwrap();
        let decaying = StepSchedule::decaying_over_sqrt_round(c).unwrap();
        let mut previous = f64::INFINITY;
        for t in 1..=40 {
            let fixed_step = fixed.step_size(t).unwrap();
            prop_assert!((fixed_step - c / (horizon as f64).sqrt()).abs() <= 1e-15);
            let step = decaying.step_size(t).unwrap();
            prop_assert!(step > 0.0 && step <= previous);
            previous = step;
        }
    }

    #[test]
    fn relative_regret_starts_at_one(
        gaps in proptest::collection::vec(0.01..5.0f64, 2..30),
    ) {
        let mut ledger = RegretLedger::new();
        for (i, gap) in gaps.iter().enumerate() {
            ledger.record(i as u64 + 1, 1.0 + gap, 1.0).unwrap();
        }
        let series = ledger.relative_regret_series().unwrap();
        prop_assert_eq!(series.len(), gaps.len());
        prop_assert!((series[0] - 1.0).abs() <= 1e-12);
        for value in &series {
            prop_assert!(value.is_finite() && *value >= 0.0);
        }
    }
}

#[test]
fn thread_count_does_not_change_results() {
    let mut config = ExperimentConfig::default_for(Experiment::AdaptiveFiltering);
    config.horizon = 60;
    config.runs = 12;
    config.seed = 7;
    let default_pool = run_experiment(&config).unwrap();
    let single = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap()
        .install(|| run_experiment(&config))
        .unwrap();
    let four = rayon::ThreadPoolBuilder::new()
        .num_threads(4)
        .build()
        .unwrap()
        .install(|| run_experiment(&config))
        .unwrap();
    assert_eq!(
        default_pool.mean_relative_regret,
        single.mean_relative_regret
    );
    assert_eq!(default_pool.mean_relative_regret, four.mean_relative_regret);
    assert_eq!(default_pool.std_relative_regret, four.std_relative_regret);
}
