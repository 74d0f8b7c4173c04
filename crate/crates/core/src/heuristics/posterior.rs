//! Posterior-probability heuristics: KL-max and breaking ties.

use rayon::prelude::*;

use crate::matrix::Matrix;
use crate::models::{Learner, Model};

use super::{HeuristicError, Orientation, ScoreVector};

fn posteriors(model: &Model, xs: &Matrix) -> Result<Vec<Vec<f64>>, HeuristicError> {
    Ok(xs.rows().map(|x| model.posterior(x)).collect::<Result<_, _>>()?)
}

/// Expected change of the pool posteriors when a candidate is added with its
/// most probable label (maximize). For candidate `i` with posterior `p_i`
/// and retrained posteriors `p+`, the score is
/// `sum_w p_i(w) / (u-1) * sum_{j != i} p+_j(w) ln(p+_j(w) / p_j(w))`.
///
/// Each candidate needs a retraining, which is cheap for LDA. SVM learners
/// are refused unless `allow_svm` is set. A candidate whose retraining fails
/// is excluded with a `-inf` score.
pub fn score_kl_max(
    labeled: &Matrix,
    labels: &[usize],
    n_classes: usize,
    pool: &Matrix,
    learner: &Learner,
    allow_svm: bool,
    seed: u64,
) -> Result<ScoreVector, HeuristicError> {
    if learner.is_svm() && !allow_svm {
        return Err(HeuristicError::ExpensiveKlMax);
    }
    let u = pool.nrows();
    if u < 2 {
        return Err(HeuristicError::PoolTooSmall { q: 2, available: u });
    }
    let learner = learner.with_calibration(true);
    let base = posteriors(&learner.fit(labeled, labels, n_classes, seed)?, pool)?;
    let norm = 1.0 / (u - 1) as f64;

    let scores = (0..u)
        .into_par_iter()
        .map(|i| {
            let tentative = crate::models::svm::argmax(&base[i]);
            let mut x = labeled.clone();
            x.push_row(pool.row(i));
            let mut y = labels.to_vec();
            y.push(tentative);
            let retrained = match learner.fit(&x, &y, n_classes, seed).map_err(HeuristicError::from).and_then(|m| posteriors(&m, pool)) {
                Ok(p) => p,
                Err(e) => {
                    log::warn!("KL-max: retraining with candidate {i} failed: {e}");
                    return f64::NEG_INFINITY;
                }
            };
            let mut score = 0.0;
            for w in 0..n_classes {
                let kl: f64 = (0..u)
                    .filter(|&j| j != i)
                    .map(|j| {
                        let plus = retrained[j][w];
                        if plus <= 0.0 {
                            0.0
                        } else {
                            plus * (plus / base[j][w].max(f64::MIN_POSITIVE)).ln()
                        }
                    })
                    .sum();
                score += norm * kl * base[i][w];
            }
            score
        })
        .collect();
    Ok(ScoreVector::new(scores, Orientation::Maximize))
}

/// Breaking ties: gap between the two largest posteriors (minimize).
pub fn score_bt(posteriors: &[Vec<f64>]) -> Result<ScoreVector, HeuristicError> {
    let scores = posteriors
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let valid = p.len() >= 2 && p.iter().all(|&v| v.is_finite() && v >= 0.0) && (p.iter().sum::<f64>() - 1.0).abs() <= 1e-6;
            if !valid {
                return Err(HeuristicError::MalformedProbability(i));
            }
            let (mut first, mut second) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
            for &v in p {
                if v > first {
                    second = first;
                    first = v;
                } else if v > second {
                    second = v;
                }
            }
            Ok(first - second)
        })
        .collect::<Result<_, _>>()?;
    Ok(ScoreVector::new(scores, Orientation::Minimize))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::generate_three_class_toy;
    use crate::kernels::Kernel;
    use crate::models::SvmParams;

    #[test]
    fn bt_examples() {
        let s = score_bt(&[vec![0.5, 0.5], vec![0.9, 0.05, 0.05]]).unwrap();
        assert_eq!(s.scores[0], 0.0);
        assert!((s.scores[1] - 0.85).abs() < 1e-12);
        assert!(matches!(score_bt(&[vec![0.5, 0.4]]), Err(HeuristicError::MalformedProbability(0))));
        assert!(score_bt(&[vec![1.0]]).is_err());
    }

    #[test]
    fn bt_ranking_matches_pairwise() {
        let ps: Vec<Vec<f64>> = (0..10)
            .map(|i| {
                let a = 0.1 + 0.07 * i as f64;
                let b = (1.0 - a) * 0.6;
                vec![a, b, 1.0 - a - b]
            })
            .collect();
        let s = score_bt(&ps).unwrap();
        let gaps: Vec<f64> = ps
            .iter()
            .map(|p| {
                let mut best = f64::NEG_INFINITY;
                for a in 0..3 {
                    for b in 0..3 {
                        if a != b && (0..3).all(|c| c == a || p[c] <= p[a]) && (0..3).all(|c| c == a || c == b || p[c] <= p[b]) {
                            best = best.max(p[a] - p[b]);
                        }
                    }
                }
                best
            })
            .collect();
        let mut oracle: Vec<usize> = (0..10).collect();
        oracle.sort_by(|&a, &b| gaps[a].total_cmp(&gaps[b]).then(a.cmp(&b)));
        assert_eq!(s.ranking(), oracle);
    }

    #[test]
    fn kl_max_guards_and_range() {
        let ds = generate_three_class_toy(6, 1).unwrap();
        let pool = generate_three_class_toy(3, 2).unwrap();
        let svm = Learner::Svm {
            params: SvmParams::new(Kernel::rbf(0.5).unwrap(), 1.0),
            calibrate: true,
        };
        assert_eq!(
            score_kl_max(ds.features(), ds.labels(), 3, pool.features(), &svm, false, 0),
            Err(HeuristicError::ExpensiveKlMax)
        );
        let lda = Learner::Lda { shrinkage: 0.1 };
        let s = score_kl_max(ds.features(), ds.labels(), 3, pool.features(), &lda, false, 0).unwrap();
        assert_eq!(s.len(), 9);
        assert!(s.scores.iter().all(|&v| v.is_finite()), "{:?}", s.scores);
        let one = pool.features().select_rows(&[0]);
        assert!(score_kl_max(ds.features(), ds.labels(), 3, &one, &lda, false, 0).is_err());
    }
}
