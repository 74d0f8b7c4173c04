//! Kernel functions and Gram matrices.

use std::collections::HashMap;
use std::fmt;

use crate::matrix::{dot, squared_distance, Matrix};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum KernelError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("rbf gamma must be positive and finite, got {0}")]
    BadGamma(f64),
    #[error("zero self-similarity; normalized similarity undefined")]
    ZeroSelfSimilarity,
}

/// Kernel choice. RBF is `exp(-gamma * |a-b|^2)`, linear is the dot product.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Kernel {
    Rbf { gamma: f64 },
    Linear,
}

impl Kernel {
    pub fn rbf(gamma: f64) -> Result<Self, KernelError> {
        if gamma > 0.0 && gamma.is_finite() {
            Ok(Kernel::Rbf { gamma })
        } else {
            Err(KernelError::BadGamma(gamma))
        }
    }

    /// Width parameter, 0 for the linear kernel. Used for grid ordering.
    pub fn gamma(&self) -> f64 {
        match self {
            Kernel::Rbf { gamma } => *gamma,
            Kernel::Linear => 0.0,
        }
    }

    /// Evaluates the kernel. Panics on a dimension mismatch; use
    /// [`Kernel::try_eval`] for untrusted input.
    #[inline]
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        assert_eq!(a.len(), b.len(), "kernel dimension mismatch");
        match self {
            Kernel::Rbf { gamma } => (-gamma * squared_distance(a, b)).exp(),
            Kernel::Linear => dot(a, b),
        }
    }

    pub fn try_eval(&self, a: &[f64], b: &[f64]) -> Result<f64, KernelError> {
        if a.len() != b.len() {
            return Err(KernelError::DimensionMismatch(a.len(), b.len()));
        }
        Ok(self.eval(a, b))
    }

    /// Feature-space cosine `K(a,b) / sqrt(K(a,a) K(b,b))`.
    pub fn normalized_similarity(&self, a: &[f64], b: &[f64]) -> Result<f64, KernelError> {
        let kab = self.try_eval(a, b)?;
        if let Kernel::Rbf { .. } = self {
            return Ok(kab);
        }
        let kaa = self.eval(a, a);
        let kbb = self.eval(b, b);
        if kaa <= 0.0 || kbb <= 0.0 {
            return Err(KernelError::ZeroSelfSimilarity);
        }
        Ok((kab / (kaa * kbb).sqrt()).clamp(-1.0, 1.0))
    }

    /// Squared feature-space distance `K(a,a) - 2K(a,b) + K(b,b)`.
    #[inline]
    pub fn feature_distance2(&self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Kernel::Rbf { .. } => 2.0 - 2.0 * self.eval(a, b),
            Kernel::Linear => squared_distance(a, b),
        }
    }
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Kernel::Rbf { gamma } => write!(f, "rbf(gamma={gamma})"),
            Kernel::Linear => write!(f, "linear"),
        }
    }
}

/// Dense Gram matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Gram {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Gram {
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Square sub-matrix over `idx` (positions into this matrix).
    pub fn submatrix(&self, idx: &[usize]) -> Gram {
        let mut data = Vec::with_capacity(idx.len() * idx.len());
        for &i in idx {
            let row = self.row(i);
            data.extend(idx.iter().map(|&j| row[j]));
        }
        Gram {
            rows: idx.len(),
            cols: idx.len(),
            data,
        }
    }

    pub fn as_matrix(&self) -> Matrix {
        Matrix::from_vec(self.rows, self.cols, self.data.clone())
    }
}

/// Entry `(i, j)` is `kernel(rows_i, cols_j)`.
pub fn gram_matrix(kernel: &Kernel, rows: &Matrix, cols: &Matrix) -> Result<Gram, KernelError> {
    if rows.nrows() > 0 && cols.nrows() > 0 && rows.ncols() != cols.ncols() {
        return Err(KernelError::DimensionMismatch(rows.ncols(), cols.ncols()));
    }
    let mut data = Vec::with_capacity(rows.nrows() * cols.nrows());
    for a in rows.rows() {
        data.extend(cols.rows().map(|b| kernel.eval(a, b)));
    }
    Ok(Gram {
        rows: rows.nrows(),
        cols: cols.nrows(),
        data,
    })
}

/// Symmetric Gram matrix of a sample set with itself.
pub fn self_gram(kernel: &Kernel, samples: &Matrix) -> Gram {
    let n = samples.nrows();
    let mut data = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let v = kernel.eval(samples.row(i), samples.row(j));
            data[i * n + j] = v;
            data[j * n + i] = v;
        }
    }
    Gram { rows: n, cols: n, data }
}

/// Gram matrices over a fixed sample universe (X ∪ U of one trial), computed
/// once per kernel and reused as samples move from the pool to the labeled set.
#[derive(Debug)]
pub struct GramCache {
    universe: Matrix,
    position: HashMap<usize, usize>,
    grams: HashMap<u64, Gram>,
}

impl GramCache {
    /// `indices` are dataset row ids; `features` the full dataset matrix.
    pub fn new(features: &Matrix, indices: &[usize]) -> Self {
        Self {
            universe: features.select_rows(indices),
            position: indices.iter().enumerate().map(|(p, &i)| (i, p)).collect(),
            grams: HashMap::new(),
        }
    }

    fn key(kernel: &Kernel) -> u64 {
        match kernel {
            Kernel::Rbf { gamma } => gamma.to_bits(),
            Kernel::Linear => u64::MAX,
        }
    }

    /// Sub-Gram over dataset rows `idx`, all of which must be in the universe.
    pub fn sub_gram(&mut self, kernel: &Kernel, idx: &[usize]) -> Gram {
        let pos: Vec<usize> = idx
            .iter()
            .map(|i| *self.position.get(i).expect("row outside the cached universe"))
            .collect();
        let universe = &self.universe;
        let full = self
            .grams
            .entry(Self::key(kernel))
            .or_insert_with(|| self_gram(kernel, universe));
        full.submatrix(&pos)
    }

    pub fn contains(&self, idx: usize) -> bool {
        self.position.contains_key(&idx)
    }
}
