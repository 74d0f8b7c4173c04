//! Platt sigmoid calibration of SVM decision values.

use super::ModelError;

/// `p(f) = 1 / (1 + exp(a_slope * f + b_offset))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlattSigmoid {
    pub a_slope: f64,
    pub b_offset: f64,
}

impl PlattSigmoid {
    pub fn probability(&self, f: f64) -> f64 {
        sigmoid_of(self.a_slope * f + self.b_offset)
    }
}

/// `1 / (1 + exp(z))` without overflow.
#[inline]
fn sigmoid_of(z: f64) -> f64 {
    if z >= 0.0 {
        let e = (-z).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + z.exp())
    }
}

/// Smoothed targets `t+ = (N+ + 1)/(N+ + 2)`, `t- = 1/(N- + 2)`.
pub fn platt_targets(labels: &[f64]) -> Vec<f64> {
    let pos = labels.iter().filter(|&&y| y > 0.0).count() as f64;
    let neg = labels.len() as f64 - pos;
    let hi = (pos + 1.0) / (pos + 2.0);
    let lo = 1.0 / (neg + 2.0);
    labels.iter().map(|&y| if y > 0.0 { hi } else { lo }).collect()
}

/// Negative log-likelihood of `targets` under the sigmoid `(a, b)`.
pub fn platt_nll(decision: &[f64], targets: &[f64], a: f64, b: f64) -> f64 {
    decision
        .iter()
        .zip(targets)
        .map(|(&f, &t)| {
            let z = a * f + b;
            if z >= 0.0 {
                t * z + (-z).exp().ln_1p()
            } else {
                (t - 1.0) * z + z.exp().ln_1p()
            }
        })
        .sum()
}

/// Gradient of [`platt_nll`] with respect to `(a, b)`.
pub fn platt_gradient(decision: &[f64], targets: &[f64], a: f64, b: f64) -> [f64; 2] {
    let mut g = [0.0; 2];
    for (&f, &t) in decision.iter().zip(targets) {
        let d = t - sigmoid_of(a * f + b);
        g[0] += d * f;
        g[1] += d;
    }
    g
}

/// Fits `(A, B)` by Newton's method with backtracking on the regularized
/// targets. `labels` are +1 / -1.
pub fn fit_platt(decision: &[f64], labels: &[f64]) -> Result<PlattSigmoid, ModelError> {
    if decision.len() != labels.len() {
        return Err(ModelError::InvalidParameter("decision/label length mismatch".into()));
    }
    if decision.len() < 2 {
        return Err(ModelError::InvalidParameter("platt fit needs at least 2 samples".into()));
    }
    if decision.iter().any(|f| !f.is_finite()) {
        return Err(ModelError::InvalidParameter("non-finite decision value".into()));
    }
    let pos = labels.iter().filter(|&&y| y > 0.0).count();
    if pos == 0 || pos == labels.len() {
        return Err(ModelError::SingleClass);
    }
    let neg = labels.len() - pos;
    let targets = platt_targets(labels);

    const MAX_ITER: usize = 200;
    const MIN_STEP: f64 = 1e-12;
    const SIGMA: f64 = 1e-12;
    const GRAD_TOL: f64 = 1e-10;

    let mut a = 0.0;
    let mut b = ((neg as f64 + 1.0) / (pos as f64 + 1.0)).ln();
    let mut fval = platt_nll(decision, &targets, a, b);
    for _ in 0..MAX_ITER {
        let (mut h11, mut h22, mut h21) = (SIGMA, SIGMA, 0.0);
        let (mut g1, mut g2) = (0.0, 0.0);
        for (&f, &t) in decision.iter().zip(&targets) {
            let p = sigmoid_of(a * f + b);
            let w = p * (1.0 - p);
            h11 += f * f * w;
            h22 += w;
            h21 += f * w;
            let d = t - p;
            g1 += f * d;
            g2 += d;
        }
        if g1.abs() < GRAD_TOL && g2.abs() < GRAD_TOL {
            break;
        }
        let det = h11 * h22 - h21 * h21;
        let da = -(h22 * g1 - h21 * g2) / det;
        let db = -(-h21 * g1 + h11 * g2) / det;
        let gd = g1 * da + g2 * db;

        let mut step = 1.0;
        let mut accepted = false;
        while step >= MIN_STEP {
            let (na, nb) = (a + step * da, b + step * db);
            let nf = platt_nll(decision, &targets, na, nb);
            if nf < fval + 1e-4 * step * gd {
                a = na;
                b = nb;
                fval = nf;
                accepted = true;
                break;
            }
            step /= 2.0;
        }
        if !accepted {
            break;
        }
    }
    if !(a.is_finite() && b.is_finite()) {
        return Err(ModelError::InvalidParameter("platt fit diverged".into()));
    }
    Ok(PlattSigmoid {
        a_slope: a,
        b_offset: b,
    })
}
