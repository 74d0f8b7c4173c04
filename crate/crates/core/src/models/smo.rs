//! SMO solver for the C-SVM dual
//!
//! ```text
//! max_a  sum_i a_i - 1/2 sum_ij a_i a_j y_i y_j K_ij
//! s.t.   0 <= a_i <= C_i,  sum_i a_i y_i = 0
//! ```
//!
//! Working sets of two are chosen as the maximal violating pair; the pair
//! update and clipping follow the usual two-variable analytic step.

use crate::kernels::Gram;

use super::ModelError;

/// Curvature floor for non-positive-definite pairs.
const TAU: f64 = 1e-12;

#[derive(Debug, Clone)]
pub(crate) struct DualSolution {
    pub alphas: Vec<f64>,
    pub bias: f64,
    pub objective: f64,
    pub updates: usize,
}

pub(crate) fn solve(gram: &Gram, y: &[f64], upper: &[f64], tol: f64, max_updates: usize) -> Result<DualSolution, ModelError> {
    let n = y.len();
    debug_assert_eq!(gram.nrows(), n);
    let mut alpha = vec![0.0; n];
    // Gradient of 1/2 a'Qa - e'a.
    let mut grad = vec![-1.0; n];
    let mut updates = 0usize;

    while let Some((i, j, gap)) = select_pair(y, &alpha, &grad, upper) {
        if gap < tol {
            break;
        }
        if updates >= max_updates {
            return Err(ModelError::NonConvergence { updates, gap });
        }
        updates += 1;

        let (ci, cj) = (upper[i], upper[j]);
        let (old_i, old_j) = (alpha[i], alpha[j]);
        let kii = gram.get(i, i);
        let kjj = gram.get(j, j);
        let kij = gram.get(i, j);
        let mut quad = kii + kjj - 2.0 * kij;
        if quad <= 0.0 {
            quad = TAU;
        }
        let (mut ai, mut aj) = (old_i, old_j);
        if y[i] != y[j] {
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = ai - aj;
            ai += delta;
            aj += delta;
            if diff > 0.0 {
                if aj < 0.0 {
                    aj = 0.0;
                    ai = diff;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = -diff;
            }
            if diff > ci - cj {
                if ai > ci {
                    ai = ci;
                    aj = ci - diff;
                }
            } else if aj > cj {
                aj = cj;
                ai = cj + diff;
            }
        } else {
            let delta = (grad[i] - grad[j]) / quad;
            let sum = ai + aj;
            ai -= delta;
            aj += delta;
            if sum > ci {
                if ai > ci {
                    ai = ci;
                    aj = sum - ci;
                }
            } else if aj < 0.0 {
                aj = 0.0;
                ai = sum;
            }
            if sum > cj {
                if aj > cj {
                    aj = cj;
                    ai = sum - cj;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = sum;
            }
        }
        alpha[i] = ai;
        alpha[j] = aj;

        let di = (ai - old_i) * y[i];
        let dj = (aj - old_j) * y[j];
        let (row_i, row_j) = (gram.row(i), gram.row(j));
        for t in 0..n {
            grad[t] += y[t] * (row_i[t] * di + row_j[t] * dj);
        }
    }

    let bias = compute_bias(y, &alpha, &grad, upper);
    let objective = alpha.iter().sum::<f64>() - 0.5 * alpha.iter().zip(&grad).map(|(a, g)| a * (g + 1.0)).sum::<f64>();
    Ok(DualSolution {
        alphas: alpha,
        bias,
        objective,
        updates,
    })
}

#[inline]
fn in_up(y: f64, a: f64, c: f64) -> bool {
    (y > 0.0 && a < c) || (y < 0.0 && a > 0.0)
}

#[inline]
fn in_low(y: f64, a: f64, c: f64) -> bool {
    (y > 0.0 && a > 0.0) || (y < 0.0 && a < c)
}

/// Returns `(i, j, m - M)` with `i = argmax_{I_up} -y G`, `j = argmin_{I_low} -y G`.
fn select_pair(y: &[f64], alpha: &[f64], grad: &[f64], upper: &[f64]) -> Option<(usize, usize, f64)> {
    let mut best_up = (usize::MAX, f64::NEG_INFINITY);
    let mut best_low = (usize::MAX, f64::INFINITY);
    for t in 0..y.len() {
        let v = -y[t] * grad[t];
        if in_up(y[t], alpha[t], upper[t]) && v > best_up.1 {
            best_up = (t, v);
        }
        if in_low(y[t], alpha[t], upper[t]) && v < best_low.1 {
            best_low = (t, v);
        }
    }
    if best_up.0 == usize::MAX || best_low.0 == usize::MAX {
        return None;
    }
    Some((best_up.0, best_low.0, best_up.1 - best_low.1))
}

fn compute_bias(y: &[f64], alpha: &[f64], grad: &[f64], upper: &[f64]) -> f64 {
    let mut free_sum = 0.0;
    let mut free_n = 0usize;
    let mut m = f64::NEG_INFINITY;
    let mut big_m = f64::INFINITY;
    for t in 0..y.len() {
        let v = -y[t] * grad[t];
        if alpha[t] > 0.0 && alpha[t] < upper[t] {
            free_sum += v;
            free_n += 1;
        }
        if in_up(y[t], alpha[t], upper[t]) {
            m = m.max(v);
        }
        if in_low(y[t], alpha[t], upper[t]) {
            big_m = big_m.min(v);
        }
    }
    if free_n > 0 {
        free_sum / free_n as f64
    } else if m.is_finite() && big_m.is_finite() {
        0.5 * (m + big_m)
    } else if m.is_finite() {
        m
    } else {
        big_m
    }
}
