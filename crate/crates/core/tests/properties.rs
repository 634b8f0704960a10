//! Property tests: metric oracles, metric invariances, row independence of
//! eval-mode transforms and idempotent activations.

mod support;

use cmc_core::data::EmbeddingSet;
use cmc_core::eval::{mean_average_precision, rank1_identification, IdentificationTask};
use cmc_core::heads::sim_loss;
use cmc_core::kernel::{l2_normalize_fwd, relu_fwd, Tensor2};
use cmc_core::net::{build_transform, MlpConfig, RbtConfig, TransformConfig};
use cmc_core::train::transform_rows;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use support::oracle;

fn scaled(s: &EmbeddingSet, rng: &mut ChaCha8Rng) -> EmbeddingSet {
    let mut data = s.data().clone();
    for r in 0..data.rows() {
        let k = 2f32.powi(rng.random_range(-6..=6));
        data.row_mut(r).iter_mut().for_each(|v| *v *= k);
    }
    s.with_data(data, s.model_tag()).unwrap()
}

fn permuted(s: &EmbeddingSet, rng: &mut ChaCha8Rng) -> EmbeddingSet {
    let mut idx: Vec<usize> = (0..s.n()).collect();
    idx.shuffle(rng);
    s.subset(&idx).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rank1_matches_brute_force(seed in any::<u64>()) {
        let task = oracle::random_identification(&mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(rank1_identification(&task).unwrap().value, oracle::brute_rank1(&task));
    }

    #[test]
    fn map_matches_brute_force(seed in any::<u64>()) {
        let (q, g) = oracle::random_retrieval(&mut ChaCha8Rng::seed_from_u64(seed));
        let got = mean_average_precision(&q, &g).unwrap().value;
        prop_assert!((got - oracle::brute_map(&q, &g)).abs() < 1e-12);
    }

    #[test]
    fn power_of_two_row_scaling_leaves_metrics_unchanged(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let task = oracle::random_identification(&mut rng);
        let scaled_task = IdentificationTask {
            probes: scaled(&task.probes, &mut rng),
            gallery_true: scaled(&task.gallery_true, &mut rng),
            distractors: task.distractors.as_ref().map(|d| scaled(d, &mut rng)),
        };
        prop_assert_eq!(
            rank1_identification(&task).unwrap().per_probe_ranks,
            rank1_identification(&scaled_task).unwrap().per_probe_ranks
        );
        let (q, g) = oracle::random_retrieval(&mut rng);
        prop_assert_eq!(
            mean_average_precision(&q, &g).unwrap().value,
            mean_average_precision(&scaled(&q, &mut rng), &scaled(&g, &mut rng)).unwrap().value
        );
    }

    #[test]
    fn probe_and_query_order_does_not_matter(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let task = oracle::random_identification(&mut rng);
        let shuffled = IdentificationTask { probes: permuted(&task.probes, &mut rng), ..task.clone() };
        prop_assert_eq!(
            rank1_identification(&task).unwrap().value,
            rank1_identification(&shuffled).unwrap().value
        );
        let (q, g) = oracle::random_retrieval(&mut rng);
        let a = mean_average_precision(&q, &g).unwrap().value;
        let b = mean_average_precision(&permuted(&q, &mut rng), &g).unwrap().value;
        prop_assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn eval_transforms_treat_rows_independently(
        seed in any::<u64>(),
        rows in 2usize..40,
        rbt in any::<bool>(),
    ) {
        let cfg = if rbt {
            TransformConfig::Rbt(RbtConfig::face(12, 16, 2))
        } else {
            TransformConfig::Mlp(MlpConfig { in_dim: 12, out_dim: 16, hidden_layers: 2, hidden_width: 20 })
        };
        let net = build_transform::<f32>(cfg, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let x = Tensor2::from_vec(rows, 12, (0..rows * 12).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let batch = transform_rows(&net, &x).unwrap();
        for r in 0..rows {
            let single = transform_rows(&net, &Tensor2::from_rows(&[x.row(r).to_vec()]).unwrap()).unwrap();
            for (a, b) in batch.row(r).iter().zip(single.row(0)) {
                prop_assert!((a - b).abs() <= 1e-5 * (1.0 + a.abs()), "row {}: {} vs {}", r, a, b);
            }
        }
    }

    #[test]
    fn normalize_and_relu_are_idempotent(seed in any::<u64>(), rows in 1usize..8, cols in 1usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Tensor2<f64> = Tensor2::from_vec(
            rows,
            cols,
            (0..rows * cols).map(|_| rng.random_range(0.1..2.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 }).collect(),
        ).unwrap();
        let (once, _) = l2_normalize_fwd(&x).unwrap();
        let (twice, _) = l2_normalize_fwd(&once).unwrap();
        for (a, b) in once.data().iter().zip(twice.data()) {
            prop_assert!((a - b).abs() < 1e-15);
        }
        prop_assert_eq!(relu_fwd(&relu_fwd(&x)), relu_fwd(&x));
    }

    #[test]
    fn sim_loss_is_symmetric_and_nonnegative(seed in any::<u64>(), rows in 1usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut t = || Tensor2::<f64>::from_vec(rows, 5, (0..rows * 5).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let (a, b) = (t(), t());
        let ab = sim_loss(&a, &b).unwrap().value;
        prop_assert!(ab >= 0.0);
        prop_assert!((ab - sim_loss(&b, &a).unwrap().value).abs() < 1e-15);
    }
}
