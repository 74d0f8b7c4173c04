//! Binary SVM trained by SMO and the one-against-all multiclass ensemble.

use crate::kernels::{self_gram, Gram, Kernel};
use crate::matrix::Matrix;

use super::platt::PlattSigmoid;
use super::{smo, ModelError};

/// Defaults for SVM training.
pub const DEFAULT_TOL: f64 = 1e-3;
pub const MAX_UPDATES: usize = 1_000_000;

/// Trained binary machine `f(x) = sum_j a_j y_j K(x_j, x) + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct BinarySvm {
    /// Positions of the support vectors in the training set.
    pub support_idx: Vec<usize>,
    pub alphas: Vec<f64>,
    pub signed_labels: Vec<f64>,
    pub bias: f64,
    pub kernel: Kernel,
    pub c_penalty: f64,
    /// Per-support upper bound (equals `c_penalty` unless class weighting is on).
    pub upper_bounds: Vec<f64>,
    support_vectors: Matrix,
    dual_objective: f64,
}

impl BinarySvm {
    /// Trains on `x` with labels in {+1, -1}.
    pub fn train(x: &Matrix, y: &[f64], kernel: Kernel, c: f64, tol: f64) -> Result<Self, ModelError> {
        let gram = self_gram(&kernel, x);
        Self::train_with_gram(x, y, &gram, kernel, c, tol, None)
    }

    /// Trains against a precomputed Gram matrix of `x`. `class_weights`, when
    /// given, scales C for the positive and negative class respectively.
    pub fn train_with_gram(
        x: &Matrix,
        y: &[f64],
        gram: &Gram,
        kernel: Kernel,
        c: f64,
        tol: f64,
        class_weights: Option<(f64, f64)>,
    ) -> Result<Self, ModelError> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(ModelError::InvalidParameter(format!("C must be positive, got {c}")));
        }
        if tol <= 0.0 || tol.is_nan() {
            return Err(ModelError::InvalidParameter(format!("tol must be positive, got {tol}")));
        }
        if x.nrows() != y.len() || gram.nrows() != y.len() {
            return Err(ModelError::InvalidParameter("training set size mismatch".into()));
        }
        if let Some(bad) = y.iter().find(|&&v| v != 1.0 && v != -1.0) {
            return Err(ModelError::InvalidParameter(format!("binary labels must be +1/-1, got {bad}")));
        }
        if !(y.iter().any(|&v| v > 0.0) && y.iter().any(|&v| v < 0.0)) {
            return Err(ModelError::SingleClass);
        }
        let (wp, wn) = class_weights.unwrap_or((1.0, 1.0));
        let upper: Vec<f64> = y.iter().map(|&v| if v > 0.0 { c * wp } else { c * wn }).collect();
        let sol = smo::solve(gram, y, &upper, tol, MAX_UPDATES)?;
        log::trace!("SMO converged after {} updates on {} samples", sol.updates, y.len());

        let support_idx: Vec<usize> = (0..y.len()).filter(|&i| sol.alphas[i] > 0.0).collect();
        Ok(Self {
            alphas: support_idx.iter().map(|&i| sol.alphas[i]).collect(),
            signed_labels: support_idx.iter().map(|&i| y[i]).collect(),
            upper_bounds: support_idx.iter().map(|&i| upper[i]).collect(),
            support_vectors: x.select_rows(&support_idx),
            support_idx,
            bias: sol.bias,
            kernel,
            c_penalty: c,
            dual_objective: sol.objective,
        })
    }

    /// A machine without support vectors answering `bias` everywhere. Used for
    /// a one-against-all class that is absent from a training subset.
    pub fn constant(kernel: Kernel, c: f64, bias: f64) -> Self {
        Self {
            support_idx: Vec::new(),
            alphas: Vec::new(),
            signed_labels: Vec::new(),
            bias,
            kernel,
            c_penalty: c,
            upper_bounds: Vec::new(),
            support_vectors: Matrix::zeros(0, 0),
            dual_objective: 0.0,
        }
    }

    pub fn decision_value(&self, x: &[f64]) -> f64 {
        self.support_vectors
            .rows()
            .zip(self.alphas.iter().zip(&self.signed_labels))
            .map(|(sv, (a, y))| a * y * self.kernel.eval(sv, x))
            .sum::<f64>()
            + self.bias
    }

    /// Decision value from kernel values against the whole training set
    /// (`k_row[p] = K(x_p, x)` for training position `p`).
    pub fn decision_from_kernel_row(&self, k_row: &[f64]) -> f64 {
        self.support_idx
            .iter()
            .zip(self.alphas.iter().zip(&self.signed_labels))
            .map(|(&p, (a, y))| a * y * k_row[p])
            .sum::<f64>()
            + self.bias
    }

    pub fn support_vectors(&self) -> &Matrix {
        &self.support_vectors
    }

    /// Dual objective `sum a - 1/2 a'Qa` at the solution.
    pub fn dual_objective(&self) -> f64 {
        self.dual_objective
    }

    /// Training positions whose coefficient sits at the upper bound.
    pub fn bounded_support(&self) -> impl Iterator<Item = usize> + '_ {
        self.support_idx
            .iter()
            .zip(self.alphas.iter().zip(&self.upper_bounds))
            .filter(|(_, (a, c))| **a >= **c * (1.0 - 1e-12))
            .map(|(&p, _)| p)
    }
}

/// Hyperparameters of a one-against-all SVM.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvmParams {
    pub kernel: Kernel,
    pub c: f64,
    pub tol: f64,
    /// Scale C per machine by inverse class frequency. Off by default.
    pub balance_classes: bool,
}

impl SvmParams {
    pub fn new(kernel: Kernel, c: f64) -> Self {
        Self {
            kernel,
            c,
            tol: DEFAULT_TOL,
            balance_classes: false,
        }
    }
}

/// One binary machine per class (class vs rest), optionally Platt-calibrated.
#[derive(Debug, Clone, PartialEq)]
pub struct MulticlassSvm {
    machines: Vec<BinarySvm>,
    n_classes: usize,
    params: SvmParams,
    platt: Option<Vec<PlattSigmoid>>,
}

impl MulticlassSvm {
    pub fn train(x: &Matrix, y: &[usize], n_classes: usize, params: &SvmParams) -> Result<Self, ModelError> {
        let gram = self_gram(&params.kernel, x);
        Self::train_with_gram(x, y, n_classes, params, &gram)
    }

    /// Classes absent from `y` get a constant machine at -1. At least two
    /// classes must be present.
    pub fn train_with_gram(x: &Matrix, y: &[usize], n_classes: usize, params: &SvmParams, gram: &Gram) -> Result<Self, ModelError> {
        let mut counts = vec![0usize; n_classes];
        for &label in y {
            if label >= n_classes {
                return Err(ModelError::UnknownClass(label));
            }
            counts[label] += 1;
        }
        if counts.iter().filter(|&&n| n > 0).count() < 2 {
            return Err(ModelError::SingleClass);
        }
        let n = y.len() as f64;
        let machines = (0..n_classes)
            .map(|class| {
                if counts[class] == 0 {
                    return Ok(BinarySvm::constant(params.kernel, params.c, -1.0));
                }
                let signed: Vec<f64> = y.iter().map(|&l| if l == class { 1.0 } else { -1.0 }).collect();
                let weights = params.balance_classes.then(|| {
                    let pos = counts[class] as f64;
                    (n / (2.0 * pos), n / (2.0 * (n - pos)))
                });
                BinarySvm::train_with_gram(x, &signed, gram, params.kernel, params.c, params.tol, weights)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            machines,
            n_classes,
            params: *params,
            platt: None,
        })
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn kernel(&self) -> Kernel {
        self.params.kernel
    }

    pub fn params(&self) -> &SvmParams {
        &self.params
    }

    pub fn machines(&self) -> &[BinarySvm] {
        &self.machines
    }

    pub fn machine(&self, class: usize) -> Result<&BinarySvm, ModelError> {
        self.machines.get(class).ok_or(ModelError::UnknownClass(class))
    }

    /// `f(x, class)`.
    pub fn decision_value(&self, x: &[f64], class: usize) -> Result<f64, ModelError> {
        Ok(self.machine(class)?.decision_value(x))
    }

    pub fn decision_values(&self, x: &[f64]) -> Vec<f64> {
        self.machines.iter().map(|m| m.decision_value(x)).collect()
    }

    pub fn decision_values_many(&self, xs: &Matrix) -> Vec<Vec<f64>> {
        xs.rows().map(|x| self.decision_values(x)).collect()
    }

    /// Argmax of the decision values; ties go to the lowest class id.
    pub fn predict(&self, x: &[f64]) -> usize {
        argmax(&self.decision_values(x))
    }

    pub fn platt(&self) -> Option<&[PlattSigmoid]> {
        self.platt.as_deref()
    }

    pub fn set_platt(&mut self, sigmoids: Vec<PlattSigmoid>) -> Result<(), ModelError> {
        if sigmoids.len() != self.n_classes {
            return Err(ModelError::InvalidParameter(format!(
                "{} sigmoids for {} classes",
                sigmoids.len(),
                self.n_classes
            )));
        }
        self.platt = Some(sigmoids);
        Ok(())
    }

    /// Per-class sigmoid outputs renormalized to sum to one.
    pub fn posterior(&self, x: &[f64]) -> Result<Vec<f64>, ModelError> {
        let platt = self.platt.as_ref().ok_or(ModelError::NotCalibrated)?;
        let raw: Vec<f64> = self
            .machines
            .iter()
            .zip(platt)
            .map(|(m, s)| s.probability(m.decision_value(x)))
            .collect();
        Ok(normalize(raw))
    }

    /// Union over machines of training positions with a nonzero coefficient, ascending.
    pub fn support_positions(&self) -> Vec<usize> {
        let mut all: Vec<usize> = self.machines.iter().flat_map(|m| m.support_idx.iter().copied()).collect();
        all.sort_unstable();
        all.dedup();
        all
    }

    /// Union over machines of training positions at the upper bound, ascending.
    pub fn bounded_positions(&self) -> Vec<usize> {
        let mut all: Vec<usize> = self.machines.iter().flat_map(|m| m.bounded_support()).collect();
        all.sort_unstable();
        all.dedup();
        all
    }
}

/// Index of the largest value, lowest index on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

pub(crate) fn normalize(mut p: Vec<f64>) -> Vec<f64> {
    let s: f64 = p.iter().sum();
    if s > 0.0 && s.is_finite() {
        p.iter_mut().for_each(|v| *v /= s);
    } else {
        let u = 1.0 / p.len() as f64;
        p.iter_mut().for_each(|v| *v = u);
    }
    p
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::generate_separable_blobs;

    fn kkt_violation(svm: &BinarySvm, x: &Matrix, y: &[f64]) -> f64 {
        let mut alpha = vec![0.0; y.len()];
        for (&p, &a) in svm.support_idx.iter().zip(&svm.alphas) {
            alpha[p] = a;
        }
        let c = svm.c_penalty;
        let mut worst = 0.0f64;
        for i in 0..y.len() {
            let m = y[i] * svm.decision_value(x.row(i));
            let v = if alpha[i] == 0.0 {
                (1.0 - m).max(0.0)
            } else if alpha[i] < c {
                (m - 1.0).abs()
            } else {
                (m - 1.0).max(0.0)
            };
            worst = worst.max(v);
        }
        worst
    }

    #[test]
    fn two_point_analytic() {
        let x = Matrix::from_rows(&[[0.0], [1.0]]);
        let y = [1.0, -1.0];
        let svm = BinarySvm::train(&x, &y, Kernel::Linear, 1e6, 1e-3).unwrap();
        // w = -2, b = 1: both points are unbounded support vectors with a = 2.
        assert!(svm.decision_value(&[0.5]).abs() < 1e-4);
        assert!((svm.decision_value(&[0.0]) - 1.0).abs() < 1e-3);
        assert!((svm.decision_value(&[1.0]) + 1.0).abs() < 1e-3);
        for a in &svm.alphas {
            assert!((a - 2.0).abs() < 1e-3);
        }
    }

    #[test]
    fn single_class_rejected() {
        let x = Matrix::from_rows(&[[0.0], [1.0]]);
        assert!(matches!(
            BinarySvm::train(&x, &[1.0, 1.0], Kernel::Linear, 1.0, 1e-3),
            Err(ModelError::SingleClass)
        ));
        assert!(BinarySvm::train(&x, &[1.0, 0.0], Kernel::Linear, 1.0, 1e-3).is_err());
    }

    #[test]
    fn separable_blobs_fit_exactly() {
        let ds = generate_separable_blobs(20, 3).unwrap();
        let params = SvmParams::new(Kernel::rbf(0.5).unwrap(), 100.0);
        let model = MulticlassSvm::train(ds.features(), ds.labels(), 3, &params).unwrap();
        for (x, &y) in ds.features().rows().zip(ds.labels()) {
            assert_eq!(model.predict(x), y);
        }
        for (class, m) in model.machines().iter().enumerate() {
            let signed: Vec<f64> = ds.labels().iter().map(|&l| if l == class { 1.0 } else { -1.0 }).collect();
            let eq: f64 = m.alphas.iter().zip(&m.signed_labels).map(|(a, y)| a * y).sum();
            assert!(eq.abs() < 1e-6);
            assert!(m.alphas.iter().all(|&a| a > 0.0 && a <= m.c_penalty));
            assert!(kkt_violation(m, ds.features(), &signed) <= params.tol);
        }
    }

    #[test]
    fn unbounded_support_vectors_on_margin() {
        let ds = generate_separable_blobs(15, 8).unwrap();
        let params = SvmParams::new(Kernel::rbf(0.3).unwrap(), 10.0);
        let model = MulticlassSvm::train(ds.features(), ds.labels(), 3, &params).unwrap();
        let mut checked = 0;
        for m in model.machines() {
            for ((&p, &a), &c) in m.support_idx.iter().zip(&m.alphas).zip(&m.upper_bounds) {
                if a < c {
                    let f = m.decision_value(ds.features().row(p));
                    assert!((f.abs() - 1.0).abs() <= params.tol, "|f| = {}", f.abs());
                    checked += 1;
                }
            }
        }
        assert!(checked > 0);
    }

    #[test]
    fn decision_value_matches_explicit_loop() {
        let ds = generate_separable_blobs(10, 1).unwrap();
        let params = SvmParams::new(Kernel::rbf(0.8).unwrap(), 1.0);
        let model = MulticlassSvm::train(ds.features(), ds.labels(), 3, &params).unwrap();
        let x = [1.0, 2.0];
        for class in 0..3 {
            let m = model.machine(class).unwrap();
            let mut f = m.bias;
            for (k, &p) in m.support_idx.iter().enumerate() {
                f += m.alphas[k] * m.signed_labels[k] * params.kernel.eval(ds.features().row(p), &x);
            }
            assert!((model.decision_value(&x, class).unwrap() - f).abs() < 1e-12);
        }
        assert!(matches!(model.decision_value(&x, 3), Err(ModelError::UnknownClass(3))));
        assert!(matches!(model.posterior(&x), Err(ModelError::NotCalibrated)));
    }

    #[test]
    fn argmax_ties_lowest() {
        assert_eq!(argmax(&[2.0, -1.0, -0.5]), 0);
        assert_eq!(argmax(&[1.0, 1.0, 0.0]), 0);
        assert_eq!(argmax(&[0.0, 1.0, 1.0]), 1);
    }

    #[test]
    fn absent_class_gets_constant_machine() {
        let x = Matrix::from_rows(&[[0.0], [1.0], [3.0], [4.0]]);
        let model = MulticlassSvm::train(&x, &[0, 0, 2, 2], 3, &SvmParams::new(Kernel::Linear, 1.0)).unwrap();
        assert_eq!(model.decision_value(&[2.0], 1).unwrap(), -1.0);
        assert_eq!(model.predict(&[0.0]), 0);
        assert_eq!(model.predict(&[4.0]), 2);
    }

    #[test]
    fn balanced_weights_change_bounds() {
        let x = Matrix::from_rows(&[[0.0], [0.2], [0.4], [0.5], [1.0]]);
        let mut params = SvmParams::new(Kernel::Linear, 0.5);
        params.balance_classes = true;
        let model = MulticlassSvm::train(&x, &[0, 0, 0, 1, 0], 2, &params).unwrap();
        let m = model.machine(1).unwrap();
        assert!(m.upper_bounds.iter().any(|&c| (c - 0.5 * 5.0 / 2.0).abs() < 1e-12));
    }
}
