//! Greedy diversity loop shared by MAO, MCLU-ABD and cSV.

use std::collections::HashSet;

use crate::heuristics::HeuristicError;
use crate::kernels::Kernel;
use crate::matrix::Matrix;

/// Diversity criterion used after the first (most uncertain) pick.
#[derive(Debug, Clone, Copy)]
pub enum BatchBuilder<'a> {
    /// Minimize the largest kernel value to any selected candidate.
    Mao { kernel: Kernel, candidates: &'a Matrix },
    /// Minimize `lambda * uncertainty + (1 - lambda) * max normalized similarity`.
    Abd {
        kernel: Kernel,
        candidates: &'a Matrix,
        lambda: f64,
    },
    /// Most uncertain candidate whose closest support vector is not yet
    /// represented; plain uncertainty order once none is left.
    Csv { closest_sv: &'a [usize] },
}

/// Builds a batch of `q` positions into the uncertain subset. `uncertainty`
/// holds one value per subset member (smaller is more uncertain). The first
/// pick is the uncertainty argmin; every later pick minimizes the builder's
/// criterion over the remaining candidates. Ties go to the lower position.
pub fn diversity_batch(uncertainty: &[f64], builder: &BatchBuilder<'_>, q: usize) -> Result<Vec<usize>, HeuristicError> {
    let m = uncertainty.len();
    if q > m {
        return Err(HeuristicError::PoolTooSmall { q, available: m });
    }
    if let BatchBuilder::Abd { lambda, .. } = builder {
        if !(0.0..=1.0).contains(lambda) {
            return Err(HeuristicError::InvalidParameter(format!("lambda {lambda} outside [0, 1]")));
        }
    }
    let expected_len = match builder {
        BatchBuilder::Mao { candidates, .. } | BatchBuilder::Abd { candidates, .. } => candidates.nrows(),
        BatchBuilder::Csv { closest_sv } => closest_sv.len(),
    };
    if expected_len != m {
        return Err(HeuristicError::InvalidParameter(format!(
            "{m} uncertainty values for {expected_len} candidates"
        )));
    }
    if q == 0 {
        return Ok(Vec::new());
    }

    let mut remaining: Vec<usize> = (0..m).collect();
    let mut batch = Vec::with_capacity(q);
    // Running max similarity to the batch, per subset position.
    let mut max_sim = vec![f64::NEG_INFINITY; m];
    let mut used_sv = HashSet::new();

    let take = |remaining: &mut Vec<usize>, crit: &dyn Fn(usize) -> f64| -> usize {
        let mut best = 0;
        for k in 1..remaining.len() {
            if crit(remaining[k]) < crit(remaining[best]) {
                best = k;
            }
        }
        remaining.remove(best)
    };

    let mut pick = take(&mut remaining, &|r| uncertainty[r]);
    loop {
        batch.push(pick);
        if batch.len() == q {
            break;
        }
        match builder {
            BatchBuilder::Mao { kernel, candidates } => {
                for &r in &remaining {
                    max_sim[r] = max_sim[r].max(kernel.eval(candidates.row(r), candidates.row(pick)));
                }
                pick = take(&mut remaining, &|r| max_sim[r]);
            }
            BatchBuilder::Abd {
                kernel,
                candidates,
                lambda,
            } => {
                for &r in &remaining {
                    let s = kernel.normalized_similarity(candidates.row(r), candidates.row(pick))?;
                    max_sim[r] = max_sim[r].max(s);
                }
                pick = take(&mut remaining, &|r| lambda * uncertainty[r] + (1.0 - lambda) * max_sim[r]);
            }
            BatchBuilder::Csv { closest_sv } => {
                used_sv.insert(closest_sv[pick]);
                let fresh = remaining.iter().any(|&r| !used_sv.contains(&closest_sv[r]));
                pick = if fresh {
                    take(&mut remaining, &|r| {
                        if used_sv.contains(&closest_sv[r]) {
                            f64::INFINITY
                        } else {
                            uncertainty[r]
                        }
                    })
                } else {
                    take(&mut remaining, &|r| uncertainty[r])
                };
            }
        }
    }
    Ok(batch)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn q_one_is_uncertainty_argmin() {
        let x = Matrix::from_rows(&[[0.0], [1.0], [2.0]]);
        let u = [0.5, 0.2, 0.2];
        let b = BatchBuilder::Mao {
            kernel: Kernel::rbf(1.0).unwrap(),
            candidates: &x,
        };
        assert_eq!(diversity_batch(&u, &b, 1).unwrap(), vec![1]);
        assert!(diversity_batch(&u, &b, 4).is_err());
    }

    #[test]
    fn mao_prefers_far_points() {
        // picks 0 first, then the farthest (3), then 1 or 2 by max similarity
        let x = Matrix::from_rows(&[[0.0], [0.2], [1.0], [3.0]]);
        let b = BatchBuilder::Mao {
            kernel: Kernel::rbf(1.0).unwrap(),
            candidates: &x,
        };
        assert_eq!(diversity_batch(&[0.0, 0.1, 0.2, 0.3], &b, 3).unwrap(), vec![0, 3, 2]);
    }

    #[test]
    fn duplicate_selected_last() {
        let x = Matrix::from_rows(&[[0.0], [0.0], [1.0], [2.0]]);
        let b = BatchBuilder::Mao {
            kernel: Kernel::rbf(0.5).unwrap(),
            candidates: &x,
        };
        assert_eq!(diversity_batch(&[0.0, 0.1, 0.2, 0.3], &b, 4).unwrap(), vec![0, 3, 2, 1]);
    }

    #[test]
    fn abd_lambda_one_is_uncertainty_order() {
        let x = Matrix::from_rows(&[[0.0], [0.0], [0.1], [5.0]]);
        let b = BatchBuilder::Abd {
            kernel: Kernel::rbf(1.0).unwrap(),
            candidates: &x,
            lambda: 1.0,
        };
        assert_eq!(diversity_batch(&[0.4, 0.1, 0.3, 0.2], &b, 4).unwrap(), vec![1, 3, 2, 0]);
        let bad = BatchBuilder::Abd {
            kernel: Kernel::Linear,
            candidates: &x,
            lambda: 1.5,
        };
        assert!(diversity_batch(&[0.4, 0.1, 0.3, 0.2], &bad, 1).is_err());
    }

    #[test]
    fn csv_skips_shared_support_vector() {
        // 0 and 1 share closest SV 7; 1 is skipped for 2
        let sv = [7, 7, 9, 9];
        let b = BatchBuilder::Csv { closest_sv: &sv };
        assert_eq!(diversity_batch(&[0.1, 0.2, 0.3, 0.4], &b, 2).unwrap(), vec![0, 2]);
        // only two distinct SVs: the rest fall back to uncertainty order
        assert_eq!(diversity_batch(&[0.1, 0.2, 0.3, 0.4], &b, 4).unwrap(), vec![0, 2, 1, 3]);
    }
}
