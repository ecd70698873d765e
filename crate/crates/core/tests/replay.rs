use armrl::harness::verify::random_episodes;
use armrl::replay::InputNormalizer;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn zero_reward(_: &[f64; 3], _: &[f64; 3], _: f64) -> armrl::Result<f64> {
    Ok(0.0)
}

#[test]
fn sampling_covers_every_stored_episode_uniformly() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let buf = random_episodes(20, &mut rng).unwrap();
    let norm = InputNormalizer::new(200.0, 5.0, false);
    let mut counts = [0usize; 20];
    let draws = 40_000;
    for _ in 0..draws / 1000 {
        let batch = buf
            .sample_batch(1000, 0.8, &mut rng, zero_reward, &norm)
            .unwrap();
        for &(slot, _, _) in &batch.sources {
            counts[slot] += 1;
        }
    }
    let expected = draws as f64 / 20.0;
    let chi2: f64 = counts
        .iter()
        .map(|&c| (c as f64 - expected).powi(2) / expected)
        .sum();
    // 19 degrees of freedom, upper 0.1% point
    assert!(chi2 < 43.82, "chi-square {chi2:.2} over {counts:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn relabeled_goals_come_from_strictly_later_states(seed in any::<u64>(), p in 0.0f64..=1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let buf = random_episodes(3, &mut rng).unwrap();
        let norm = InputNormalizer::new(200.0, 5.0, false);
        let batch = buf.sample_batch(256, p, &mut rng, zero_reward, &norm).unwrap();
        for (i, &(slot, t, future)) in batch.sources.iter().enumerate() {
            let ep = buf.episode(slot).unwrap();
            match future {
                Some(f) => {
                    prop_assert!(f > t && f <= ep.len());
                    prop_assert_eq!(batch.goals[i], ep.achieved_goals[f]);
                }
                None => prop_assert_eq!(batch.goals[i], ep.desired_goals[t]),
            }
            prop_assert_eq!(batch.next_achieved[i], ep.achieved_goals[t + 1]);
            prop_assert_eq!(batch.obstacle_distances[i], ep.obstacle_distances[t]);
        }
        if p == 0.0 {
            prop_assert_eq!(batch.relabeled_count(), 0);
        }
    }
}
