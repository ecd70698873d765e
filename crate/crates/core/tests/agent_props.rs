use armrl::agent::{select_action, AgentHyper, DdpgAgent, OuNoise};
use armrl::armsim::{EpisodeOutcome, Scenario};
use armrl::harness::config::RunConfig;
use armrl::harness::evaluate::OutcomeCounts;
use armrl::harness::metrics::read_log;
use armrl::harness::train::{train, METRICS_FILE};
use armrl::replay::INPUT_DIM;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn agent(seed: u64) -> DdpgAgent {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DdpgAgent::new(AgentHyper::default(), &[12, 12], &mut rng).unwrap()
}

fn max_gap(a: &armrl::diffnet::NetworkParams, b: &armrl::diffnet::NetworkParams) -> f64 {
    a.iter_all()
        .zip(b.iter_all())
        .fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn soft_update_shrinks_gap_by_retained_fraction(seed in any::<u64>(), shift in 0.01f64..2.0) {
        let mut a = agent(seed);
        a.actor.for_each_mut(|w| *w += shift);
        a.critic.for_each_mut(|w| *w -= shift);
        let (ga, gc) = (max_gap(&a.target_actor, &a.actor), max_gap(&a.target_critic, &a.critic));
        a.soft_update().unwrap();
        let rho = a.hyper.polyak_retained;
        prop_assert!((max_gap(&a.target_actor, &a.actor) - rho * ga).abs() < 1e-12);
        prop_assert!((max_gap(&a.target_critic, &a.critic) - rho * gc).abs() < 1e-12);
    }

    #[test]
    fn behaviour_actions_stay_in_box(seed in any::<u64>(), scale in 0.1f64..50.0, sigma in 0.0f64..3.0) {
        let a = agent(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let mut noise = OuNoise::new(0.15, sigma);
        for explore in [true, false] {
            for _ in 0..20 {
                let x: Vec<f64> = (0..INPUT_DIM).map(|_| scale * rng.random_range(-1.0..1.0)).collect();
                let act = select_action(&a, &x, &mut noise, &mut rng, explore).unwrap();
                prop_assert!(act.0.iter().all(|v| (-1.0..=1.0).contains(v)));
            }
        }
    }

    #[test]
    fn outcome_rates_partition(outcomes in prop::collection::vec(0u8..3, 1..300)) {
        let mut c = OutcomeCounts::default();
        for o in &outcomes {
            let o = match o {
                0 => EpisodeOutcome::Success,
                1 => EpisodeOutcome::FailToReach,
                _ => EpisodeOutcome::Collision,
            };
            c.record(o, -1.0);
        }
        prop_assert_eq!(c.total(), outcomes.len());
        for r in [c.success_rate(), c.fail_rate(), c.collision_rate()] {
            prop_assert!((0.0..=1.0).contains(&r));
        }
        prop_assert!((c.success_rate() + c.fail_rate() + c.collision_rate() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn log_epochs_increase_and_rates_are_probabilities() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig {
        epochs: 4,
        cycles_per_epoch: 1,
        batches_per_cycle: 2,
        batch_size: 16,
        buffer_size: 2000,
        hidden_layers: vec![8],
        test_rollouts: 4,
        record_wall_clock: true,
        ..RunConfig::default()
    };
    cfg.env = cfg.env.with_scenario(Scenario::S2);
    train(cfg, dir.path(), false, |_| {}).unwrap();
    let rows = read_log(&dir.path().join(METRICS_FILE)).unwrap();
    assert_eq!(rows.len(), 4);
    for (i, r) in rows.iter().enumerate() {
        assert_eq!(r.epoch, i);
        assert!(r.wall_clock_s >= 0.0);
        let sum = r.test_success_rate + r.test_fail_rate + r.test_collision_rate;
        assert!((sum - 1.0).abs() < 1e-12);
    }
}
