//! Base classifiers: binary SVM (SMO), one-against-all multiclass SVM with
//! Platt calibration, LDA, and cross-validated SVM hyperparameter search.

pub mod cv;
pub mod lda;
pub mod platt;
mod smo;
pub mod svm;

pub use cv::{cross_validate, CvOutcome};
pub use lda::{train_lda, LdaModel};
pub use platt::{fit_platt, PlattSigmoid};
pub use svm::{BinarySvm, MulticlassSvm, SvmParams};

use crate::kernels::{self_gram, Gram};
use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("training data contains a single class")]
    SingleClass,
    #[error("SMO did not converge after {updates} updates (KKT gap {gap:e})")]
    NonConvergence { updates: usize, gap: f64 },
    #[error("unknown class id {0}")]
    UnknownClass(usize),
    #[error("class {0} has no samples")]
    EmptyClass(usize),
    #[error("singular covariance")]
    SingularCovariance,
    #[error("SVM has no Platt calibration")]
    NotCalibrated,
    #[error("empty hyperparameter grid")]
    EmptyGrid,
    #[error("need at least {needed} samples per class, smallest class has {available}")]
    TooFewSamples { needed: usize, available: usize },
    #[error("{0}")]
    InvalidParameter(String),
}

/// Platt folds used when calibrating one-against-all machines.
pub const PLATT_FOLDS: usize = 3;

/// How to fit a base classifier.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Learner {
    Svm { params: SvmParams, calibrate: bool },
    Lda { shrinkage: f64 },
}

/// A trained base classifier.
#[derive(Debug, Clone)]
pub enum Model {
    Svm(MulticlassSvm),
    Lda(LdaModel),
}

impl Learner {
    pub fn fit(&self, x: &Matrix, y: &[usize], n_classes: usize, seed: u64) -> Result<Model, ModelError> {
        match self {
            Learner::Svm { params, .. } => {
                let gram = self_gram(&params.kernel, x);
                self.fit_with_gram(x, y, n_classes, seed, &gram)
            }
            Learner::Lda { shrinkage } => Ok(Model::Lda(train_lda(x, y, n_classes, *shrinkage)?)),
        }
    }

    /// Like [`Learner::fit`], reusing a Gram matrix of `x` (ignored for LDA).
    pub fn fit_with_gram(&self, x: &Matrix, y: &[usize], n_classes: usize, seed: u64, gram: &Gram) -> Result<Model, ModelError> {
        match self {
            Learner::Svm { params, calibrate } => {
                let mut model = MulticlassSvm::train_with_gram(x, y, n_classes, params, gram)?;
                if *calibrate {
                    calibrate_platt(&mut model, x, y, gram, PLATT_FOLDS, seed)?;
                }
                Ok(Model::Svm(model))
            }
            Learner::Lda { shrinkage } => Ok(Model::Lda(train_lda(x, y, n_classes, *shrinkage)?)),
        }
    }

    pub fn is_svm(&self) -> bool {
        matches!(self, Learner::Svm { .. })
    }

    pub fn with_calibration(self, on: bool) -> Self {
        match self {
            Learner::Svm { params, .. } => Learner::Svm { params, calibrate: on },
            lda => lda,
        }
    }
}

impl Model {
    pub fn n_classes(&self) -> usize {
        match self {
            Model::Svm(m) => m.n_classes(),
            Model::Lda(m) => m.n_classes(),
        }
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        match self {
            Model::Svm(m) => m.predict(x),
            Model::Lda(m) => m.predict(x),
        }
    }

    pub fn predict_many(&self, xs: &Matrix) -> Vec<usize> {
        xs.rows().map(|x| self.predict(x)).collect()
    }

    /// Class posterior; SVMs must be Platt-calibrated.
    pub fn posterior(&self, x: &[f64]) -> Result<Vec<f64>, ModelError> {
        match self {
            Model::Svm(m) => m.posterior(x),
            Model::Lda(m) => Ok(m.posterior(x)),
        }
    }

    pub fn as_svm(&self) -> Option<&MulticlassSvm> {
        match self {
            Model::Svm(m) => Some(m),
            Model::Lda(_) => None,
        }
    }

    /// Fraction of `xs` predicted as `y`.
    pub fn accuracy(&self, xs: &Matrix, y: &[usize]) -> f64 {
        if y.is_empty() {
            return 0.0;
        }
        let correct = xs.rows().zip(y).filter(|(x, &t)| self.predict(x) == t).count();
        correct as f64 / y.len() as f64
    }
}

/// Fits one sigmoid per class on out-of-fold decision values. Samples whose
/// fold cannot be trained (a single class left) fall back to in-sample values.
pub fn calibrate_platt(model: &mut MulticlassSvm, x: &Matrix, y: &[usize], gram: &Gram, folds: usize, seed: u64) -> Result<(), ModelError> {
    let n_classes = model.n_classes();
    let n = y.len();
    let params = *model.params();
    let mut decisions: Vec<Vec<f64>> = vec![Vec::new(); n];
    let smallest = {
        let mut counts = vec![0usize; n_classes];
        y.iter().for_each(|&l| counts[l] += 1);
        counts.into_iter().filter(|&c| c > 0).min().unwrap_or(0)
    };
    let folds = folds.min(smallest.max(1)).max(1);
    if folds >= 2 {
        let assignment = cv::stratified_folds(y, n_classes, folds, seed);
        for f in 0..folds {
            let (test, train): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| assignment[i] == f);
            let xt = x.select_rows(&train);
            let yt: Vec<usize> = train.iter().map(|&i| y[i]).collect();
            match MulticlassSvm::train_with_gram(&xt, &yt, n_classes, &params, &gram.submatrix(&train)) {
                Ok(fold_model) => {
                    for &i in &test {
                        let k_row: Vec<f64> = train.iter().map(|&j| gram.get(i, j)).collect();
                        decisions[i] = fold_model.machines().iter().map(|m| m.decision_from_kernel_row(&k_row)).collect();
                    }
                }
                Err(ModelError::SingleClass) => {}
                Err(e) => return Err(e),
            }
        }
    }
    for (i, d) in decisions.iter_mut().enumerate() {
        if d.is_empty() {
            *d = model.machines().iter().map(|m| m.decision_from_kernel_row(gram.row(i))).collect();
        }
    }

    let sigmoids = (0..n_classes)
        .map(|class| {
            let f: Vec<f64> = decisions.iter().map(|d| d[class]).collect();
            let t: Vec<f64> = y.iter().map(|&l| if l == class { 1.0 } else { -1.0 }).collect();
            match fit_platt(&f, &t) {
                Ok(s) => Ok(s),
                // Class absent from the training set: near-zero probability everywhere.
                Err(ModelError::SingleClass) => Ok(PlattSigmoid {
                    a_slope: 0.0,
                    b_offset: 30.0,
                }),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    model.set_platt(sigmoids)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::generate_three_class_toy;
    use crate::kernels::Kernel;

    #[test]
    fn calibrated_svm_posteriors() {
        let ds = generate_three_class_toy(30, 3).unwrap();
        let learner = Learner::Svm {
            params: SvmParams::new(Kernel::rbf(1.0).unwrap(), 10.0),
            calibrate: true,
        };
        let model = learner.fit(ds.features(), ds.labels(), 3, 5).unwrap();
        let svm = model.as_svm().unwrap();
        for s in svm.platt().unwrap() {
            assert!(s.a_slope < 0.0);
        }
        for x in ds.features().rows() {
            let p = model.posterior(x).unwrap();
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(p.iter().all(|&v| v >= 0.0));
        }
        // Posterior is monotone in each machine's decision value.
        let s = svm.platt().unwrap()[0];
        let mut prev = 0.0;
        for f in [-3.0, -1.0, -0.1, 0.0, 0.4, 2.0] {
            let p = s.probability(f);
            assert!(p > prev);
            prev = p;
        }
    }

    #[test]
    fn lda_learner_roundtrip() {
        let ds = generate_three_class_toy(30, 3).unwrap();
        let model = Learner::Lda { shrinkage: 0.1 }.fit(ds.features(), ds.labels(), 3, 0).unwrap();
        assert!(model.accuracy(ds.features(), ds.labels()) > 0.8);
        assert!(model.as_svm().is_none());
    }
}
