//! Qualitative convergence smoke check. The sample-size convergence
//! statement bounds how far the empirical adversarial loss can sit from its
//! population value, so the measurable desk-scale trace is the train/test
//! gap of the trained pair's adversarial loss shrinking as n grows. (The
//! raw (defense, attack) test loss itself approaches the game value from
//! either side and is not monotone in n.)

use advgame::data::{generate_2d, Family2D};
use advgame::models::{build_classification_pair, LpConstraint, LpNorm};
use advgame::training::{train_game, GameConfig};

#[test]
fn adversarial_generalization_gap_shrinks_with_sample_size() {
    let constraint = LpConstraint::new(LpNorm::Inf, 0.2).unwrap();
    let mut mean_gap = [0.0f64; 2];
    let seeds = [21u64, 25, 26];
    for (slot, n) in [150usize, 1200].into_iter().enumerate() {
        for &seed in &seeds {
            let data = generate_2d(Family2D::Circles, n, 0.05, seed).unwrap();
            // Equal optimizer budget for both sample sizes: full-batch steps.
            let cfg = GameConfig::classification(150, constraint, seed);
            let (defense, attack) = build_classification_pair(2, 2, constraint, seed).unwrap();
            let (_, _, record) = train_game(defense, attack, &data, &cfg).unwrap();
            let last = record.epochs.last().unwrap();
            mean_gap[slot] += (last.test_adv_loss - last.train_adv_loss).abs();
        }
        mean_gap[slot] /= seeds.len() as f64;
    }
    assert!(
        mean_gap[1] < mean_gap[0],
        "adversarial train/test gap should shrink with n: {mean_gap:?}"
    );
}
