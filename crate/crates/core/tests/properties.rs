use proptest::prelude::*;

use poolal::clustering::kernel_kmeans;
use poolal::dataset::{generate_five_class_contaminated, generate_three_class_toy, stratified_split, Dataset};
use poolal::engine::{ActiveState, Classifier, HeuristicConfig, SvmTuning};
use poolal::heuristics::{score_mclu, score_ms, HeuristicId};
use poolal::kernels::Kernel;
use poolal::matrix::Matrix;
use poolal::models::lda::train_lda;
use poolal::models::platt::PlattSigmoid;
use poolal::models::svm::MulticlassSvm;
use poolal::models::SvmParams;

fn toy_model(seed: u64) -> (Dataset, MulticlassSvm) {
    let ds = generate_three_class_toy(12, seed).unwrap();
    let params = SvmParams::new(Kernel::rbf(0.7).unwrap(), 5.0);
    let model = MulticlassSvm::train(ds.features(), ds.labels(), 3, &params).unwrap();
    (ds, model)
}

fn pool_from(points: &[(f64, f64)]) -> Matrix {
    let rows: Vec<[f64; 2]> = points.iter().map(|&(a, b)| [a, b]).collect();
    Matrix::from_rows(&rows)
}

fn fixed_svm() -> Classifier {
    Classifier::Svm(SvmTuning::Fixed(SvmParams::new(Kernel::rbf(0.5).unwrap(), 10.0)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn split_is_disjoint_and_reproducible(seed in any::<u64>(), initial in 1usize..6, pool in 1usize..60) {
        let ds = generate_three_class_toy(30, seed).unwrap();
        let a = stratified_split(&ds, initial, pool, seed).unwrap();
        let b = stratified_split(&ds, initial, pool, seed).unwrap();
        prop_assert_eq!(&a.labeled_idx, &b.labeled_idx);
        prop_assert_eq!(&a.pool_idx, &b.pool_idx);
        prop_assert_eq!(&a.test_idx, &b.test_idx);
        let mut seen = vec![0u8; ds.len()];
        for &i in a.labeled_idx.iter().chain(&a.pool_idx).chain(&a.test_idx) {
            seen[i] += 1;
        }
        prop_assert!(seen.iter().all(|&s| s == 1));
        prop_assert_eq!(a.pool_idx.len(), pool);
    }

    #[test]
    fn generators_are_finite(seed in any::<u64>(), outliers in 0.0f64..0.5) {
        prop_assert!(generate_three_class_toy(10, seed).unwrap().features().is_finite());
        prop_assert!(generate_five_class_contaminated(10, outliers, seed).unwrap().features().is_finite());
    }

    #[test]
    fn margin_scores_permute_with_the_pool(
        points in prop::collection::vec((-1.0f64..3.0, -1.0f64..2.5), 2..15),
        shift in 0usize..15,
    ) {
        let (_, model) = toy_model(1);
        let pool = pool_from(&points);
        let order: Vec<usize> = (0..points.len()).map(|i| (i + shift) % points.len()).collect();
        let permuted = pool.select_rows(&order);
        let (ms, ms_p) = (score_ms(&model, &pool), score_ms(&model, &permuted));
        let (mc, mc_p) = (score_mclu(&model, &pool).unwrap(), score_mclu(&model, &permuted).unwrap());
        for (k, &i) in order.iter().enumerate() {
            prop_assert_eq!(ms.scores[i], ms_p.scores[k]);
            prop_assert_eq!(mc.scores[i], mc_p.scores[k]);
        }
    }

    #[test]
    fn ms_argmin_survives_monotone_transforms(
        points in prop::collection::vec((-1.0f64..3.0, -1.0f64..2.5), 1..15),
        scale in 0.1f64..10.0,
        power in 0.2f64..3.0,
    ) {
        let (_, model) = toy_model(2);
        let pool = pool_from(&points);
        let best = score_ms(&model, &pool).ranking()[0];
        let transformed: Vec<f64> = pool
            .rows()
            .map(|x| {
                model
                    .decision_values(x)
                    .iter()
                    .map(|f| scale * f.abs().powf(power) + 1.0)
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let mut oracle = 0;
        for (i, &v) in transformed.iter().enumerate() {
            if v < transformed[oracle] {
                oracle = i;
            }
        }
        prop_assert_eq!(best, oracle);
    }

    #[test]
    fn lda_posteriors_sum_to_one_and_ignore_translation(
        seed in any::<u64>(),
        offset in prop::collection::vec(-50.0f64..50.0, 4),
    ) {
        let ds = generate_five_class_contaminated(8, 0.1, seed).unwrap();
        let model = train_lda(ds.features(), ds.labels(), 5, 0.1).unwrap();
        let mut shifted = ds.features().clone();
        for i in 0..shifted.nrows() {
            shifted.row_mut(i).iter_mut().zip(&offset).for_each(|(v, o)| *v += o);
        }
        let moved = train_lda(&shifted, ds.labels(), 5, 0.1).unwrap();
        for i in 0..ds.len() {
            let p = model.posterior(ds.features().row(i));
            let q = moved.posterior(shifted.row(i));
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            for (a, b) in p.iter().zip(&q) {
                prop_assert!((a - b).abs() <= 1e-8, "{} vs {}", a, b);
            }
        }
    }

    #[test]
    fn platt_is_monotone_for_negative_slope(a in -10.0f64..-1e-3, b in -5.0f64..5.0, f in -20.0f64..20.0, step in 1e-3f64..5.0) {
        let s = PlattSigmoid { a_slope: a, b_offset: b };
        prop_assert!(s.probability(f + step) > s.probability(f) || s.probability(f) == 1.0);
    }

    #[test]
    fn kernel_kmeans_is_seed_deterministic(seed in any::<u64>(), k in 1usize..5) {
        let ds = generate_three_class_toy(10, seed).unwrap();
        let kernel = Kernel::rbf(0.5).unwrap();
        let a = kernel_kmeans(ds.features(), &kernel, k, seed, 50).unwrap();
        let b = kernel_kmeans(ds.features(), &kernel, k, seed, 50).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert!(a.sizes().iter().all(|&s| s > 0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn batches_are_fresh_pool_samples(seed in any::<u64>(), q in 1usize..9) {
        let ds = generate_three_class_toy(25, seed).unwrap();
        let split = stratified_split(&ds, 3, 40, seed).unwrap();
        for id in HeuristicId::ALL.into_iter().filter(|&id| id != HeuristicId::KlMax) {
            let mut state = ActiveState::new(&ds, &split, fixed_svm(), HeuristicConfig::new(id), seed).unwrap();
            let mut labeled: Vec<usize> = state.labeled().to_vec();
            for _ in 0..3 {
                let pool_before = state.pool().len();
                let selected = state.run_iteration(q).unwrap().selected.clone();
                let mut distinct = selected.clone();
                distinct.sort_unstable();
                distinct.dedup();
                prop_assert_eq!(distinct.len(), q, "{} returned duplicates", id);
                prop_assert!(selected.iter().all(|i| !labeled.contains(i)), "{} re-selected a labeled sample", id);
                prop_assert!(selected.iter().all(|i| split.pool_idx.contains(i)));
                labeled.extend(&selected);
                prop_assert_eq!(state.labeled().len(), labeled.len());
                prop_assert_eq!(state.pool().len(), pool_before - q);
                prop_assert!(state.pool().iter().all(|i| !state.labeled().contains(i)));
            }
        }
    }
}
