//! Stratified k-fold cross-validation over an SVM (kernel, C) grid.

use rand::seq::SliceRandom;

use crate::kernels::{self_gram, Gram, Kernel};
use crate::matrix::Matrix;
use crate::seed;

use super::svm::{MulticlassSvm, SvmParams};
use super::ModelError;

/// Default penalty grid, log-spaced over 1..1e3.
///
/// Penalties below 1 are left out on purpose: with a handful of labels many
/// grid points tie on fold accuracy, and the smaller-C tie-break then picks a
/// nearly constant machine.
pub const DEFAULT_C_GRID: [f64; 4] = [1.0, 10.0, 100.0, 1000.0];
/// Default RBF widths as multiples of `1/d` for `d` standardized features.
pub const DEFAULT_GAMMA_SCALES: [f64; 3] = [0.1, 1.0, 10.0];

/// Kernels searched by cross-validation.
#[derive(Debug, Clone, PartialEq)]
pub enum KernelGrid {
    Explicit(Vec<Kernel>),
    /// RBF kernels with `gamma = scale / d`.
    RbfPerFeature(Vec<f64>),
}

impl Default for KernelGrid {
    fn default() -> Self {
        KernelGrid::RbfPerFeature(DEFAULT_GAMMA_SCALES.to_vec())
    }
}

impl KernelGrid {
    pub fn resolve(&self, n_features: usize) -> Vec<Kernel> {
        match self {
            KernelGrid::Explicit(ks) => ks.clone(),
            KernelGrid::RbfPerFeature(scales) => {
                let d = n_features.max(1) as f64;
                scales.iter().map(|&s| Kernel::Rbf { gamma: s / d }).collect()
            }
        }
    }
}

impl std::fmt::Display for KernelGrid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            KernelGrid::Explicit(ks) => {
                let names: Vec<String> = ks.iter().map(|k| k.to_string()).collect();
                write!(f, "{}", names.join(" "))
            }
            KernelGrid::RbfPerFeature(scales) => {
                let names: Vec<String> = scales.iter().map(|s| format!("rbf({s}/d)")).collect();
                write!(f, "{}", names.join(" "))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvOutcome {
    pub kernel: Kernel,
    pub c: f64,
    /// Mean fold accuracy of the winner.
    pub accuracy: f64,
    /// Folds actually used (reduced when a class has fewer samples than requested).
    pub folds_used: usize,
}

/// Assigns each sample a fold in `0..folds`, class by class, after a seeded
/// shuffle within each class.
pub fn stratified_folds(y: &[usize], n_classes: usize, folds: usize, seed: u64) -> Vec<usize> {
    let mut rng = seed::rng(seed);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, &label) in y.iter().enumerate() {
        by_class[label].push(i);
    }
    let mut assignment = vec![0; y.len()];
    let mut next = 0usize;
    for mut members in by_class {
        members.shuffle(&mut rng);
        for i in members {
            assignment[i] = next % folds;
            next += 1;
        }
    }
    assignment
}

/// Picks the grid point with the highest mean fold accuracy. Ties go to the
/// smaller C, then to the smaller gamma.
#[allow(clippy::too_many_arguments)]
pub fn cross_validate(
    x: &Matrix,
    y: &[usize],
    n_classes: usize,
    kernel_grid: &[Kernel],
    c_grid: &[f64],
    folds: usize,
    seed: u64,
    tol: f64,
) -> Result<CvOutcome, ModelError> {
    cross_validate_with(x, y, n_classes, kernel_grid, c_grid, folds, seed, tol, |k| self_gram(k, x))
}

/// [`cross_validate`] with a caller-supplied Gram matrix of `x` per kernel.
#[allow(clippy::too_many_arguments)]
pub fn cross_validate_with(
    x: &Matrix,
    y: &[usize],
    n_classes: usize,
    kernel_grid: &[Kernel],
    c_grid: &[f64],
    folds: usize,
    seed: u64,
    tol: f64,
    mut gram_for: impl FnMut(&Kernel) -> Gram,
) -> Result<CvOutcome, ModelError> {
    if kernel_grid.is_empty() || c_grid.is_empty() {
        return Err(ModelError::EmptyGrid);
    }
    if folds < 2 {
        return Err(ModelError::InvalidParameter("cross-validation needs at least 2 folds".into()));
    }
    let mut counts = vec![0usize; n_classes];
    for &label in y {
        if label >= n_classes {
            return Err(ModelError::UnknownClass(label));
        }
        counts[label] += 1;
    }
    let smallest = counts.iter().copied().filter(|&c| c > 0).min().unwrap_or(0);
    let folds_used = folds.min(smallest);
    if folds_used < 2 {
        return Err(ModelError::TooFewSamples {
            needed: 2,
            available: smallest,
        });
    }
    if folds_used < folds {
        log::warn!("cross-validation reduced from {folds} to {folds_used} folds (smallest class has {smallest} samples)");
    }

    let mut kernels = kernel_grid.to_vec();
    kernels.sort_by(|a, b| a.gamma().total_cmp(&b.gamma()));
    let mut cs = c_grid.to_vec();
    cs.sort_by(f64::total_cmp);

    let assignment = stratified_folds(y, n_classes, folds_used, seed);
    let fold_sets: Vec<(Vec<usize>, Vec<usize>)> = (0..folds_used)
        .map(|f| {
            let (test, train): (Vec<usize>, Vec<usize>) = (0..y.len()).partition(|&i| assignment[i] == f);
            (train, test)
        })
        .collect();

    let grams: Vec<Gram> = kernels.iter().map(&mut gram_for).collect();
    let mut best: Option<CvOutcome> = None;
    for &c in &cs {
        for (kernel, gram) in kernels.iter().zip(&grams) {
            let params = SvmParams {
                tol,
                ..SvmParams::new(*kernel, c)
            };
            let mut acc_sum = 0.0;
            for (train, test) in &fold_sets {
                let xt = x.select_rows(train);
                let yt: Vec<usize> = train.iter().map(|&i| y[i]).collect();
                let model = MulticlassSvm::train_with_gram(&xt, &yt, n_classes, &params, &gram.submatrix(train))?;
                let correct = test
                    .iter()
                    .filter(|&&i| {
                        let k_row: Vec<f64> = train.iter().map(|&j| gram.get(i, j)).collect();
                        let f: Vec<f64> = model.machines().iter().map(|m| m.decision_from_kernel_row(&k_row)).collect();
                        super::svm::argmax(&f) == y[i]
                    })
                    .count();
                acc_sum += correct as f64 / test.len() as f64;
            }
            let accuracy = acc_sum / folds_used as f64;
            if best.as_ref().is_none_or(|b| accuracy > b.accuracy + 1e-12) {
                best = Some(CvOutcome {
                    kernel: *kernel,
                    c,
                    accuracy,
                    folds_used,
                });
            }
        }
    }
    Ok(best.expect("non-empty grid"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_separable_blobs, generate_three_class_toy};

    #[test]
    fn folds_are_stratified() {
        let y: Vec<usize> = (0..30).map(|i| i % 3).collect();
        let a = stratified_folds(&y, 3, 5, 7);
        for f in 0..5 {
            for c in 0..3 {
                let n = (0..30).filter(|&i| a[i] == f && y[i] == c).count();
                assert_eq!(n, 2);
            }
        }
        assert_eq!(a, stratified_folds(&y, 3, 5, 7));
    }

    #[test]
    fn single_point_grid_returned() {
        let ds = generate_three_class_toy(10, 1).unwrap();
        let k = Kernel::rbf(0.5).unwrap();
        let out = cross_validate(ds.features(), ds.labels(), 3, &[k], &[3.0], 5, 0, 1e-3).unwrap();
        assert_eq!(out.kernel, k);
        assert_eq!(out.c, 3.0);
        assert_eq!(out.folds_used, 5);
    }

    #[test]
    fn empty_grid_and_small_classes() {
        let ds = generate_three_class_toy(10, 1).unwrap();
        assert!(matches!(
            cross_validate(ds.features(), ds.labels(), 3, &[], &[1.0], 5, 0, 1e-3),
            Err(ModelError::EmptyGrid)
        ));
        let small = generate_three_class_toy(3, 1).unwrap();
        let out = cross_validate(small.features(), small.labels(), 3, &[Kernel::Linear], &[1.0], 5, 0, 1e-3).unwrap();
        assert_eq!(out.folds_used, 3);
    }

    #[test]
    fn deterministic_and_accurate_on_separable() {
        let ds = generate_separable_blobs(20, 4).unwrap();
        let kernels = KernelGrid::default().resolve(2);
        let a = cross_validate(ds.features(), ds.labels(), 3, &kernels, &DEFAULT_C_GRID, 5, 9, 1e-3).unwrap();
        let b = cross_validate(ds.features(), ds.labels(), 3, &kernels, &DEFAULT_C_GRID, 5, 9, 1e-3).unwrap();
        assert_eq!(a, b);
        assert!(a.accuracy >= 0.95, "cv accuracy {}", a.accuracy);
    }
}
