//! Linear discriminant analysis with a shared, diagonally shrunk covariance.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::matrix::Matrix;

use super::svm::{argmax, normalize};
use super::ModelError;

/// Default shrinkage toward the diagonal.
pub const DEFAULT_SHRINKAGE: f64 = 0.1;

/// Smallest eigenvalue allowed relative to the largest before the pooled
/// covariance counts as singular.
const CONDITION_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct LdaModel {
    pub class_means: Vec<Vec<f64>>,
    pub pooled_covariance: Matrix,
    pub priors: Vec<f64>,
    pub shrinkage: f64,
    /// `Sigma^-1 mu_c`.
    weights: Vec<DVector<f64>>,
    /// `-1/2 mu_c' Sigma^-1 mu_c + ln prior_c`.
    offsets: Vec<f64>,
}

impl LdaModel {
    /// Linear discriminant scores, one per class.
    pub fn scores(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.offsets)
            .map(|(w, o)| w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + o)
            .collect()
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        argmax(&self.scores(x))
    }

    /// Gaussian posterior with shared covariance: softmax of the scores.
    pub fn posterior(&self, x: &[f64]) -> Vec<f64> {
        let s = self.scores(x);
        let m = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        normalize(s.iter().map(|v| (v - m).exp()).collect())
    }

    pub fn n_classes(&self) -> usize {
        self.priors.len()
    }
}

/// Fits class means, priors from class frequencies and the pooled
/// within-class covariance `S / (n - N)`, then shrinks it to
/// `(1 - shrinkage) S + shrinkage diag(S)`.
///
/// With `shrinkage > 0` the divisor is floored at 1, so fewer samples than
/// dimensions are accepted as long as every feature varies within classes.
pub fn train_lda(x: &Matrix, y: &[usize], n_classes: usize, shrinkage: f64) -> Result<LdaModel, ModelError> {
    if !(0.0..=1.0).contains(&shrinkage) {
        return Err(ModelError::InvalidParameter(format!("shrinkage {shrinkage} outside [0, 1]")));
    }
    if x.nrows() != y.len() {
        return Err(ModelError::InvalidParameter("training set size mismatch".into()));
    }
    let d = x.ncols();
    let n = y.len();
    let mut counts = vec![0usize; n_classes];
    let mut means = vec![vec![0.0; d]; n_classes];
    for (row, &label) in x.rows().zip(y) {
        if label >= n_classes {
            return Err(ModelError::UnknownClass(label));
        }
        counts[label] += 1;
        for (m, v) in means[label].iter_mut().zip(row) {
            *m += v;
        }
    }
    if let Some(c) = counts.iter().position(|&k| k == 0) {
        return Err(ModelError::EmptyClass(c));
    }
    for (m, &k) in means.iter_mut().zip(&counts) {
        m.iter_mut().for_each(|v| *v /= k as f64);
    }

    let mut scatter = DMatrix::<f64>::zeros(d, d);
    let mut centered = DVector::<f64>::zeros(d);
    for (row, &label) in x.rows().zip(y) {
        for ((c, v), m) in centered.iter_mut().zip(row).zip(&means[label]) {
            *c = v - m;
        }
        scatter.ger(1.0, &centered, &centered, 1.0);
    }
    let dof = n.saturating_sub(n_classes);
    let divisor = if dof == 0 {
        if shrinkage > 0.0 {
            1.0
        } else {
            return Err(ModelError::SingularCovariance);
        }
    } else {
        dof as f64
    };
    let mut cov = scatter / divisor;
    for i in 0..d {
        for j in 0..d {
            if i != j {
                cov[(i, j)] *= 1.0 - shrinkage;
            }
        }
    }

    let eig = cov.clone().symmetric_eigen();
    let max_eig = eig.eigenvalues.iter().copied().fold(0.0f64, f64::max);
    let min_eig = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if max_eig <= 0.0 || max_eig.is_nan() || min_eig <= CONDITION_FLOOR * max_eig {
        return Err(ModelError::SingularCovariance);
    }
    let chol: Cholesky<f64, Dyn> = Cholesky::new(cov.clone()).ok_or(ModelError::SingularCovariance)?;

    let priors: Vec<f64> = counts.iter().map(|&k| k as f64 / n as f64).collect();
    let mut weights = Vec::with_capacity(n_classes);
    let mut offsets = Vec::with_capacity(n_classes);
    for (m, p) in means.iter().zip(&priors) {
        let mu = DVector::from_column_slice(m);
        let w = chol.solve(&mu);
        offsets.push(-0.5 * mu.dot(&w) + p.ln());
        weights.push(w);
    }
    let mut pooled = Matrix::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            pooled.row_mut(i)[j] = cov[(i, j)];
        }
    }
    Ok(LdaModel {
        class_means: means,
        pooled_covariance: pooled,
        priors,
        shrinkage,
        weights,
        offsets,
    })
}
