//! Large-margin heuristics over one-against-all SVM decision values.

use rand::seq::SliceRandom;

use crate::clustering::{binary_split_largest, kernel_kmeans_gram, ClusterAssignment, ClusterError};
use crate::engine::{diversity_batch, BatchBuilder};
use crate::kernels::{self_gram, Kernel};
use crate::matrix::Matrix;
use crate::models::{BinarySvm, MulticlassSvm};
use crate::seed;

use super::{HeuristicError, Orientation, ScoreVector};

/// Lloyd iterations for batch clustering.
const CLUSTER_MAX_ITER: usize = 100;

/// Smallest absolute decision value.
pub fn ms_value(decisions: &[f64]) -> f64 {
    decisions.iter().map(|f| f.abs()).fold(f64::INFINITY, f64::min)
}

/// Gap between the two largest absolute decision values.
pub fn mclu_value(decisions: &[f64]) -> f64 {
    let (mut first, mut second) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for f in decisions.iter().map(|f| f.abs()) {
        if f > first {
            second = first;
            first = f;
        } else if f > second {
            second = f;
        }
    }
    first - second
}

/// Margin sampling (minimize).
pub fn score_ms(model: &MulticlassSvm, pool: &Matrix) -> ScoreVector {
    let scores = pool.rows().map(|x| ms_value(&model.decision_values(x))).collect();
    ScoreVector::new(scores, Orientation::Minimize)
}

/// Multiclass-level uncertainty (minimize).
pub fn score_mclu(model: &MulticlassSvm, pool: &Matrix) -> Result<ScoreVector, HeuristicError> {
    if model.n_classes() < 2 {
        return Err(HeuristicError::InvalidParameter("MCLU needs at least two classes".into()));
    }
    let scores = pool.rows().map(|x| mclu_value(&model.decision_values(x))).collect();
    Ok(ScoreVector::new(scores, Orientation::Minimize))
}

/// MCLU for three or more classes. With two one-against-all machines the
/// MCLU gap is identically zero, so margin sampling is used instead.
pub fn multiclass_uncertainty(model: &MulticlassSvm, pool: &Matrix) -> Result<ScoreVector, HeuristicError> {
    if model.n_classes() == 2 {
        log::info!("binary problem: MCLU replaced by MS");
        return Ok(score_ms(model, pool));
    }
    score_mclu(model, pool)
}

fn check_batch(q: usize, available: usize) -> Result<(), HeuristicError> {
    if q > available {
        Err(HeuristicError::PoolTooSmall { q, available })
    } else {
        Ok(())
    }
}

/// The uncertain subset: pool positions (ascending) and their scores.
fn uncertain_subset(scores: &ScoreVector, q: usize, subset_size: usize) -> (Vec<usize>, Vec<f64>) {
    let subset = scores.best_subset(subset_size.max(q));
    let values = subset.iter().map(|&i| scores.scores[i]).collect();
    (subset, values)
}

/// Support vector selection: a binary SVM separates the labeled support
/// vectors from the other labeled samples; `q` candidates on the support
/// side are drawn at random. If there are too few, the rest are the
/// negatives closest to that boundary.
pub fn select_ssc(model: &MulticlassSvm, labeled: &Matrix, pool: &Matrix, q: usize, seed_: u64) -> Result<Vec<usize>, HeuristicError> {
    check_batch(q, pool.nrows())?;
    let sv = model.support_positions();
    if sv.is_empty() || sv.len() == labeled.nrows() {
        return Err(HeuristicError::SscDegenerate);
    }
    let mut y = vec![-1.0; labeled.nrows()];
    sv.iter().for_each(|&i| y[i] = 1.0);
    let p = model.params();
    let detector = BinarySvm::train(labeled, &y, p.kernel, p.c, p.tol)?;
    let f: Vec<f64> = pool.rows().map(|x| detector.decision_value(x)).collect();
    let (mut positives, mut negatives): (Vec<usize>, Vec<usize>) = (0..pool.nrows()).partition(|&i| f[i] > 0.0);
    positives.shuffle(&mut seed::rng(seed_));
    positives.truncate(q);
    if positives.len() < q {
        negatives.sort_by(|&a, &b| f[a].abs().total_cmp(&f[b].abs()).then(a.cmp(&b)));
        let missing = q - positives.len();
        positives.extend(negatives.into_iter().take(missing));
    }
    Ok(positives)
}

/// Most ambiguous and orthogonal: greedy kernel-diversity batch over the
/// `subset_size` best MS candidates.
pub fn select_mao(model: &MulticlassSvm, pool: &Matrix, q: usize, subset_size: usize) -> Result<Vec<usize>, HeuristicError> {
    check_batch(q, pool.nrows())?;
    let (subset, u) = uncertain_subset(&score_ms(model, pool), q, subset_size);
    let candidates = pool.select_rows(&subset);
    let builder = BatchBuilder::Mao {
        kernel: model.kernel(),
        candidates: &candidates,
    };
    Ok(diversity_batch(&u, &builder, q)?.into_iter().map(|k| subset[k]).collect())
}

/// MCLU with angle-based diversity, trading uncertainty against similarity
/// to the batch with weight `lambda`.
pub fn select_mclu_abd(model: &MulticlassSvm, pool: &Matrix, q: usize, subset_size: usize, lambda: f64) -> Result<Vec<usize>, HeuristicError> {
    check_batch(q, pool.nrows())?;
    let (subset, u) = uncertain_subset(&multiclass_uncertainty(model, pool)?, q, subset_size);
    let candidates = pool.select_rows(&subset);
    let builder = BatchBuilder::Abd {
        kernel: model.kernel(),
        candidates: &candidates,
        lambda,
    };
    Ok(diversity_batch(&u, &builder, q)?.into_iter().map(|k| subset[k]).collect())
}

/// For each candidate, the training position of its closest support vector
/// (feature-space distance, lowest position on ties) among all machines.
pub fn closest_support_vectors(model: &MulticlassSvm, labeled: &Matrix, candidates: &Matrix) -> Result<Vec<usize>, HeuristicError> {
    let sv = model.support_positions();
    if sv.is_empty() {
        return Err(HeuristicError::NoSupportVectors);
    }
    let kernel = model.kernel();
    Ok(candidates
        .rows()
        .map(|x| {
            let mut best = sv[0];
            let mut best_d = f64::INFINITY;
            for &s in &sv {
                let d = kernel.feature_distance2(x, labeled.row(s));
                if d < best_d {
                    best = s;
                    best_d = d;
                }
            }
            best
        })
        .collect())
}

/// Closest support vector: the most uncertain MS candidates, each with a
/// closest support vector not yet represented in the batch.
pub fn select_csv(model: &MulticlassSvm, labeled: &Matrix, pool: &Matrix, q: usize, subset_size: usize) -> Result<Vec<usize>, HeuristicError> {
    check_batch(q, pool.nrows())?;
    let (subset, u) = uncertain_subset(&score_ms(model, pool), q, subset_size);
    let closest = closest_support_vectors(model, labeled, &pool.select_rows(&subset))?;
    let builder = BatchBuilder::Csv { closest_sv: &closest };
    Ok(diversity_batch(&u, &builder, q)?.into_iter().map(|k| subset[k]).collect())
}

/// Position of the smallest uncertainty among `members`, lowest on ties.
fn argmin_member(members: &[usize], uncertainty: &[f64]) -> usize {
    let mut best = members[0];
    for &m in &members[1..] {
        if uncertainty[m] < uncertainty[best] {
            best = m;
        }
    }
    best
}

/// Kernel k-means with `k = q` over the candidates, then the most uncertain
/// member of each cluster, in cluster-id order. Returns candidate positions.
pub fn ecbd_batch(candidates: &Matrix, uncertainty: &[f64], kernel: &Kernel, q: usize, seed_: u64) -> Result<Vec<usize>, HeuristicError> {
    check_batch(q, candidates.nrows())?;
    if q == 0 {
        return Ok(Vec::new());
    }
    let gram = self_gram(kernel, candidates);
    let clusters = kernel_kmeans_gram(&gram, q, seed_, CLUSTER_MAX_ITER)?;
    Ok((0..q).map(|c| argmin_member(&clusters.members(c), uncertainty)).collect())
}

/// MCLU with enhanced cluster-based diversity.
pub fn select_mclu_ecbd(model: &MulticlassSvm, pool: &Matrix, q: usize, subset_size: usize, seed_: u64) -> Result<Vec<usize>, HeuristicError> {
    check_batch(q, pool.nrows())?;
    let (subset, u) = uncertain_subset(&multiclass_uncertainty(model, pool)?, q, subset_size);
    let picks = ecbd_batch(&pool.select_rows(&subset), &u, &model.kernel(), q, seed_)?;
    Ok(picks.into_iter().map(|k| subset[k]).collect())
}

/// Hierarchical clustering of candidates together with the previous bounded
/// support vectors. The largest cluster is split in two until `q` clusters
/// hold no bounded support vector; the most uncertain candidate of each of
/// the `q` largest clean clusters is returned (candidate positions).
pub fn hmcs_batch(
    candidates: &Matrix,
    uncertainty: &[f64],
    bounded_svs: &Matrix,
    kernel: &Kernel,
    q: usize,
    seed_: u64,
) -> Result<Vec<usize>, HeuristicError> {
    let m = candidates.nrows();
    check_batch(q, m)?;
    if q == 0 {
        return Ok(Vec::new());
    }
    let universe = if bounded_svs.nrows() == 0 {
        candidates.clone()
    } else {
        candidates.vstack(bounded_svs)
    };
    let gram = self_gram(kernel, &universe);
    let is_bsv = |i: usize| i >= m;
    let clean = |part: &ClusterAssignment| -> Vec<usize> {
        let mut dirty = vec![false; part.k];
        for (i, &c) in part.labels.iter().enumerate() {
            dirty[c] |= is_bsv(i);
        }
        (0..part.k).filter(|&c| !dirty[c]).collect()
    };

    let mut part = ClusterAssignment::single(universe.nrows(), &gram);
    let mut round = 0u64;
    while clean(&part).len() < q {
        match binary_split_largest(&part, &gram, seed::mix(seed_, round)) {
            Ok(next) => part = next,
            Err(ClusterError::AllSingletons) => break,
            Err(e) => return Err(e.into()),
        }
        round += 1;
    }

    let sizes = part.sizes();
    let mut chosen = clean(&part);
    chosen.sort_by_key(|&c| (std::cmp::Reverse(sizes[c]), c));
    if chosen.len() < q {
        return Err(HeuristicError::PoolTooSmall {
            q,
            available: chosen.len(),
        });
    }
    Ok(chosen[..q]
        .iter()
        .map(|&c| argmin_member(&part.members(c), uncertainty))
        .collect())
}

/// Informative hierarchical margin cluster sampling. `prev_bounded_svs` are
/// the feature rows of the bounded support vectors of the previous model.
pub fn select_hmcs_i(
    model: &MulticlassSvm,
    pool: &Matrix,
    q: usize,
    subset_size: usize,
    prev_bounded_svs: &Matrix,
    seed_: u64,
) -> Result<Vec<usize>, HeuristicError> {
    check_batch(q, pool.nrows())?;
    let (subset, u) = uncertain_subset(&multiclass_uncertainty(model, pool)?, q, subset_size);
    let picks = hmcs_batch(&pool.select_rows(&subset), &u, prev_bounded_svs, &model.kernel(), q, seed_)?;
    Ok(picks.into_iter().map(|k| subset[k]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_gaussian_mixture, generate_three_class_toy, ClassSpec};
    use crate::models::SvmParams;

    fn toy_model() -> (MulticlassSvm, Matrix, Matrix) {
        let ds = generate_three_class_toy(10, 11).unwrap();
        let pool = generate_three_class_toy(15, 12).unwrap();
        let m = MulticlassSvm::train(ds.features(), ds.labels(), 3, &SvmParams::new(Kernel::rbf(0.5).unwrap(), 10.0)).unwrap();
        (m, ds.features().clone(), pool.features().clone())
    }

    fn distinct(batch: &[usize], q: usize, pool: usize) {
        let mut s = batch.to_vec();
        s.sort_unstable();
        s.dedup();
        assert_eq!(s.len(), q);
        assert!(s.iter().all(|&i| i < pool));
    }

    #[test]
    fn value_examples() {
        assert!((ms_value(&[1.2, -0.4, -2.0]) - 0.4).abs() < 1e-15);
        assert_eq!(mclu_value(&[2.0, -1.0, -0.5]), 1.0);
        assert_eq!(mclu_value(&[-1.5, 1.5, 0.2]), 0.0);
        assert_eq!(mclu_value(&[0.7, -0.7]), 0.0);
        assert_eq!(ms_value(&[0.0, 3.0]), 0.0);
    }

    #[test]
    fn ms_permutation_invariant() {
        let (m, _, pool) = toy_model();
        let s = score_ms(&m, &pool);
        let perm: Vec<usize> = (0..pool.nrows()).rev().collect();
        let sp = score_ms(&m, &pool.select_rows(&perm));
        for (k, &i) in perm.iter().enumerate() {
            assert_eq!(sp.scores[k], s.scores[i]);
        }
        let mc = score_mclu(&m, &pool).unwrap();
        let mcp = score_mclu(&m, &pool.select_rows(&perm)).unwrap();
        for (k, &i) in perm.iter().enumerate() {
            assert_eq!(mcp.scores[k], mc.scores[i]);
        }
    }

    #[test]
    fn unbounded_sv_has_unit_margin() {
        let specs = [
            ClassSpec::isotropic(vec![0.0, 0.0], 0.5, 15),
            ClassSpec::isotropic(vec![1.5, 0.5], 0.5, 15),
        ];
        let ds = generate_gaussian_mixture(&specs, 3).unwrap();
        let params = SvmParams {
            tol: 1e-6,
            ..SvmParams::new(Kernel::rbf(0.5).unwrap(), 10.0)
        };
        let m = MulticlassSvm::train(ds.features(), ds.labels(), 2, &params).unwrap();
        let machine = &m.machines()[0];
        let free = machine
            .support_idx
            .iter()
            .zip(&machine.alphas)
            .find(|(_, &a)| a < machine.upper_bounds[0] - 1e-9)
            .map(|(&i, _)| i)
            .expect("free support vector");
        let s = score_ms(&m, &ds.features().select_rows(&[free]));
        assert!((s.scores[0] - 1.0).abs() < 1e-3, "{}", s.scores[0]);
    }

    #[test]
    fn binary_substitutes_ms() {
        let specs = [
            ClassSpec::isotropic(vec![0.0, 0.0], 0.5, 10),
            ClassSpec::isotropic(vec![2.0, 0.0], 0.5, 10),
        ];
        let ds = generate_gaussian_mixture(&specs, 1).unwrap();
        let m = MulticlassSvm::train(ds.features(), ds.labels(), 2, &SvmParams::new(Kernel::rbf(0.5).unwrap(), 1.0)).unwrap();
        let mclu = score_mclu(&m, ds.features()).unwrap();
        assert!(mclu.scores.iter().all(|s| s.abs() < 1e-9));
        assert_eq!(multiclass_uncertainty(&m, ds.features()).unwrap(), score_ms(&m, ds.features()));
    }

    #[test]
    fn selectors_return_distinct_batches() {
        let (m, x, pool) = toy_model();
        let u = pool.nrows();
        distinct(&select_mao(&m, &pool, 6, 18).unwrap(), 6, u);
        distinct(&select_mclu_abd(&m, &pool, 6, 18, 0.6).unwrap(), 6, u);
        distinct(&select_csv(&m, &x, &pool, 6, 18).unwrap(), 6, u);
        distinct(&select_mclu_ecbd(&m, &pool, 6, 18, 2).unwrap(), 6, u);
        distinct(&select_hmcs_i(&m, &pool, 6, 18, &x.select_rows(&m.bounded_positions()), 2).unwrap(), 6, u);
        distinct(&select_ssc(&m, &x, &pool, 6, 2).unwrap(), 6, u);
        assert!(select_mao(&m, &pool, u + 1, 3).is_err());
    }

    #[test]
    fn q_one_is_argmin() {
        let (m, x, pool) = toy_model();
        let ms_best = score_ms(&m, &pool).best().unwrap();
        assert_eq!(select_mao(&m, &pool, 1, 3).unwrap(), vec![ms_best]);
        assert_eq!(select_csv(&m, &x, &pool, 1, 3).unwrap(), vec![ms_best]);
        let mclu = score_mclu(&m, &pool).unwrap();
        assert_eq!(select_mclu_abd(&m, &pool, 4, 12, 1.0).unwrap(), mclu.top(4));
    }

    #[test]
    fn ssc_deterministic_and_degenerate() {
        let (m, x, pool) = toy_model();
        assert_eq!(select_ssc(&m, &x, &pool, 5, 9).unwrap(), select_ssc(&m, &x, &pool, 5, 9).unwrap());
        // Two points: both are support vectors.
        let tiny = Matrix::from_rows(&[[0.0], [1.0]]);
        let m2 = MulticlassSvm::train(&tiny, &[0, 1], 2, &SvmParams::new(Kernel::Linear, 1.0)).unwrap();
        assert_eq!(select_ssc(&m2, &tiny, &pool.select_cols(&[0]), 2, 0), Err(HeuristicError::SscDegenerate));
    }

    #[test]
    fn ecbd_examples() {
        let c = Matrix::from_rows(&[[0.0], [0.1], [5.0], [5.2], [10.0]]);
        let u = [0.3, 0.1, 0.5, 0.4, 0.2];
        // q = subset size: singletons, whole subset
        let mut all = ecbd_batch(&c, &u, &Kernel::Linear, 5, 1).unwrap();
        all.sort_unstable();
        assert_eq!(all, vec![0, 1, 2, 3, 4]);
        // a lone far point forms its own cluster and is selected
        let two = Matrix::from_rows(&[[0.0], [0.1], [0.2], [20.0]]);
        let mut b = ecbd_batch(&two, &[0.1, 0.05, 0.3, 0.9], &Kernel::Linear, 2, 4).unwrap();
        b.sort_unstable();
        assert_eq!(b, vec![1, 3]);
    }

    #[test]
    fn hmcs_trace() {
        // P = {0, 0.1, 0.2}, Q1 = {100, 100.1}, Q2 = {103, 103.1} plus a bounded SV at 103.05.
        // Split 1 separates P from Q1 ∪ Q2 ∪ bSV, split 2 separates Q1 from Q2 ∪ bSV.
        // Clean clusters: P (3) and Q1 (2).
        let c = Matrix::from_rows(&[[0.0], [0.1], [0.2], [100.0], [100.1], [103.0], [103.1]]);
        let bsv = Matrix::from_rows(&[[103.05]]);
        let u = [0.5, 0.2, 0.3, 0.4, 0.6, 0.0, 0.01];
        for seed_ in 0..10 {
            let b = hmcs_batch(&c, &u, &bsv, &Kernel::Linear, 2, seed_).unwrap();
            assert_eq!(b, vec![1, 3], "seed {seed_}");
        }
        // without bounded SVs the most uncertain candidate of Q2 is reachable
        let b = hmcs_batch(&c, &u, &Matrix::zeros(0, 1), &Kernel::Linear, 2, 0).unwrap();
        assert!(b.contains(&5));
    }

    #[test]
    fn hmcs_isolated_bsv_never_selected() {
        let c = Matrix::from_rows(&[[0.0], [0.1], [5.0], [5.1]]);
        let bsv = Matrix::from_rows(&[[50.0]]);
        let b = hmcs_batch(&c, &[0.1, 0.2, 0.3, 0.4], &bsv, &Kernel::Linear, 2, 0).unwrap();
        assert_eq!(b, vec![0, 2]);
        let mut all = hmcs_batch(&c, &[0.1, 0.2, 0.3, 0.4], &bsv, &Kernel::Linear, 4, 0).unwrap();
        all.sort_unstable();
        assert_eq!(all, vec![0, 1, 2, 3]);
    }
}
