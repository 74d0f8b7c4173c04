//! Labeled datasets, CSV ingestion, synthetic generators and stratified
//! splitting into labeled / pool / test index sets.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::matrix::Matrix;
use crate::seed;

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("label column {0} not found in header")]
    MissingLabelColumn(String),
    #[error("non-numeric feature cell {value:?} at row {row}, column {column:?}")]
    NonNumeric {
        row: usize,
        column: String,
        value: String,
    },
    #[error("non-finite feature at row {row}, column {column}")]
    NonFinite { row: usize, column: usize },
    #[error("need at least 2 distinct labels, found {0}")]
    TooFewClasses(usize),
    #[error("label {label} out of range for {n_classes} classes")]
    LabelOutOfRange { label: usize, n_classes: usize },
    #[error("class {0} has no samples")]
    EmptyClass(usize),
    #[error("{features} feature rows but {labels} labels")]
    LengthMismatch { features: usize, labels: usize },
    #[error("every class needs samples (class spec {0} has count 0)")]
    EmptyClassSpec(usize),
    #[error("covariance of class spec {0} is not symmetric positive definite")]
    NotPositiveDefinite(usize),
    #[error("class spec {index}: {detail}")]
    BadClassSpec { index: usize, detail: String },
    #[error("class {class} has {available} samples, {required} required")]
    InsufficientSamples {
        class: usize,
        available: usize,
        required: usize,
    },
    #[error("requested {requested} labeled+pool samples but only {available} exist")]
    SplitTooLarge { requested: usize, available: usize },
    #[error("{0}")]
    Invalid(String),
}

/// Feature matrix with dense integer class labels in `0..n_classes`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Matrix,
    labels: Vec<usize>,
    n_classes: usize,
}

impl Dataset {
    /// Validates the invariants: matching lengths, finite features, labels in
    /// range, and every class present at least once.
    pub fn new(features: Matrix, labels: Vec<usize>, n_classes: usize) -> Result<Self, DatasetError> {
        if features.nrows() != labels.len() {
            return Err(DatasetError::LengthMismatch {
                features: features.nrows(),
                labels: labels.len(),
            });
        }
        for (r, row) in features.rows().enumerate() {
            if let Some(c) = row.iter().position(|v| !v.is_finite()) {
                return Err(DatasetError::NonFinite { row: r, column: c });
            }
        }
        let mut counts = vec![0usize; n_classes];
        for &y in &labels {
            if y >= n_classes {
                return Err(DatasetError::LabelOutOfRange { label: y, n_classes });
            }
            counts[y] += 1;
        }
        if let Some(c) = counts.iter().position(|&n| n == 0) {
            return Err(DatasetError::EmptyClass(c));
        }
        Ok(Self {
            features,
            labels,
            n_classes,
        })
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }

    /// Returns a copy with every feature column mapped through `scaling`.
    pub fn rescaled(&self, scaling: &Scaling) -> Dataset {
        Dataset {
            features: scaling.apply(&self.features),
            labels: self.labels.clone(),
            n_classes: self.n_classes,
        }
    }
}

/// Original label strings, indexed by dense class id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMapping {
    pub original: Vec<String>,
}

impl LabelMapping {
    pub fn original_label(&self, class: usize) -> Option<&str> {
        self.original.get(class).map(String::as_str)
    }

    pub fn dense_id(&self, original: &str) -> Option<usize> {
        self.original.iter().position(|l| l == original)
    }
}

/// Which CSV column holds the label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LabelColumn {
    Name(String),
    Index(usize),
}

impl fmt::Display for LabelColumn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LabelColumn::Name(n) => write!(f, "{n:?}"),
            LabelColumn::Index(i) => write!(f, "#{i}"),
        }
    }
}

/// Reads a headed CSV file. All columns except the label column must be numeric.
/// Labels are re-encoded densely: numerically sorted when every label parses as a
/// number, lexicographically otherwise.
pub fn load_csv(path: impl AsRef<Path>, label_column: &LabelColumn) -> Result<(Dataset, LabelMapping), DatasetError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_csv(file, label_column)
}

/// [`load_csv`] over any reader.
pub fn read_csv<R: std::io::Read>(reader: R, label_column: &LabelColumn) -> Result<(Dataset, LabelMapping), DatasetError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    let label_pos = match label_column {
        LabelColumn::Name(name) => header.iter().position(|h| h == name),
        LabelColumn::Index(i) => (*i < header.len()).then_some(*i),
    }
    .ok_or_else(|| DatasetError::MissingLabelColumn(label_column.to_string()))?;

    let d = header.len() - 1;
    let mut data = Vec::new();
    let mut raw_labels = Vec::new();
    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        for (c, cell) in record.iter().enumerate() {
            if c == label_pos {
                raw_labels.push(cell.to_owned());
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| DatasetError::NonNumeric {
                row: r,
                column: header[c].clone(),
                value: cell.to_owned(),
            })?;
            if !v.is_finite() {
                let column = if c > label_pos { c - 1 } else { c };
                return Err(DatasetError::NonFinite { row: r, column });
            }
            data.push(v);
        }
    }

    let distinct: BTreeSet<&str> = raw_labels.iter().map(String::as_str).collect();
    if distinct.len() < 2 {
        return Err(DatasetError::TooFewClasses(distinct.len()));
    }
    let mut original: Vec<String> = distinct.into_iter().map(str::to_owned).collect();
    let numeric: Option<Vec<f64>> = original.iter().map(|s| s.parse::<f64>().ok()).collect();
    if let Some(values) = numeric {
        let mut paired: Vec<(f64, String)> = values.into_iter().zip(original).collect();
        paired.sort_by(|a, b| a.0.total_cmp(&b.0));
        original = paired.into_iter().map(|(_, s)| s).collect();
    }
    let mapping = LabelMapping { original };
    let labels = raw_labels
        .iter()
        .map(|l| mapping.dense_id(l).expect("label collected above"))
        .collect::<Vec<_>>();
    let features = Matrix::from_vec(labels.len(), d, data);
    let n_classes = mapping.original.len();
    Ok((Dataset::new(features, labels, n_classes)?, mapping))
}

/// Writes a dataset as CSV with header `x0,..,x{d-1},label`.
pub fn write_csv<W: std::io::Write>(ds: &Dataset, writer: W) -> Result<(), DatasetError> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = (0..ds.dim()).map(|j| format!("x{j}")).collect();
    header.push("label".into());
    wtr.write_record(&header)?;
    for (row, &y) in ds.features.rows().zip(&ds.labels) {
        let mut rec: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        rec.push(y.to_string());
        wtr.write_record(&rec)?;
    }
    wtr.flush().map_err(|source| DatasetError::Io {
        path: "<csv writer>".into(),
        source,
    })?;
    Ok(())
}

/// One Gaussian class: mean vector, full covariance, sample count.
#[derive(Debug, Clone)]
pub struct ClassSpec {
    pub mean: Vec<f64>,
    pub covariance: Matrix,
    pub count: usize,
}

impl ClassSpec {
    pub fn isotropic(mean: Vec<f64>, variance: f64, count: usize) -> Self {
        let d = mean.len();
        let mut cov = Matrix::zeros(d, d);
        for i in 0..d {
            cov.row_mut(i)[i] = variance;
        }
        Self {
            mean,
            covariance: cov,
            count,
        }
    }
}

/// Draws `count` samples per class spec, class `i` receiving label `i`.
/// Samples are emitted class by class.
pub fn generate_gaussian_mixture(class_specs: &[ClassSpec], seed: u64) -> Result<Dataset, DatasetError> {
    if class_specs.len() < 2 {
        return Err(DatasetError::TooFewClasses(class_specs.len()));
    }
    let d = class_specs[0].mean.len();
    let factors = class_specs
        .iter()
        .enumerate()
        .map(|(i, spec)| {
            if spec.count == 0 {
                return Err(DatasetError::EmptyClassSpec(i));
            }
            cholesky_factor(i, spec, d)
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut rng = seed::rng(seed);
    let total: usize = class_specs.iter().map(|s| s.count).sum();
    let mut data = Vec::with_capacity(total * d);
    let mut labels = Vec::with_capacity(total);
    for (class, (spec, l)) in class_specs.iter().zip(&factors).enumerate() {
        for _ in 0..spec.count {
            let z = DVector::from_iterator(d, (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)));
            let x = l * z;
            data.extend(x.iter().zip(&spec.mean).map(|(v, m)| v + m));
            labels.push(class);
        }
    }
    Dataset::new(Matrix::from_vec(total, d, data), labels, class_specs.len())
}

fn cholesky_factor(index: usize, spec: &ClassSpec, d: usize) -> Result<DMatrix<f64>, DatasetError> {
    let cov = &spec.covariance;
    if spec.mean.len() != d || cov.nrows() != d || cov.ncols() != d {
        return Err(DatasetError::BadClassSpec {
            index,
            detail: format!("expected dimension {d}"),
        });
    }
    let m = DMatrix::from_row_slice(d, d, cov.as_slice());
    let scale = m.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1.0);
    if (&m - m.transpose()).iter().any(|v| v.abs() > 1e-12 * scale) {
        return Err(DatasetError::NotPositiveDefinite(index));
    }
    m.cholesky()
        .map(|c| c.l())
        .ok_or(DatasetError::NotPositiveDefinite(index))
}

/// Class means of the three-class toy: vertices of an equilateral triangle
/// with side 2, so the three classes meet around the centroid.
pub const TOY_MEANS: [[f64; 2]; 3] = [[0.0, 0.0], [2.0, 0.0], [1.0, 1.732_050_807_568_877_2]];
/// Shared isotropic standard deviation of the toy classes. With side 2 this
/// puts roughly 9% of the samples on the wrong side of a Bayes boundary.
pub const TOY_SIGMA: f64 = 0.6;

/// Two-dimensional, three-class toy problem of partially overlapping Gaussians.
pub fn generate_three_class_toy(n_per_class: usize, seed: u64) -> Result<Dataset, DatasetError> {
    if n_per_class == 0 {
        return Err(DatasetError::Invalid("n_per_class must be at least 1".into()));
    }
    let specs: Vec<ClassSpec> = TOY_MEANS
        .iter()
        .map(|m| ClassSpec::isotropic(m.to_vec(), TOY_SIGMA * TOY_SIGMA, n_per_class))
        .collect();
    generate_gaussian_mixture(&specs, seed)
}

/// Three well separated 2-D blobs (means 6 apart, unit variance). Linearly
/// separable with overwhelming probability at moderate sample counts.
pub fn generate_separable_blobs(n_per_class: usize, seed: u64) -> Result<Dataset, DatasetError> {
    let specs: Vec<ClassSpec> = [[0.0, 0.0], [6.0, 0.0], [3.0, 5.2]]
        .iter()
        .map(|m| ClassSpec::isotropic(m.to_vec(), 0.25, n_per_class))
        .collect();
    generate_gaussian_mixture(&specs, seed)
}

/// Five 4-D Gaussian classes with correlated covariances; `outlier_fraction`
/// of each class is redrawn from a covariance inflated nine-fold.
pub fn generate_five_class_contaminated(n_per_class: usize, outlier_fraction: f64, seed: u64) -> Result<Dataset, DatasetError> {
    if !(0.0..1.0).contains(&outlier_fraction) {
        return Err(DatasetError::Invalid("outlier_fraction must lie in [0, 1)".into()));
    }
    let means = [
        [0.0, 0.0, 0.0, 0.0],
        [2.5, 0.0, 0.5, 0.0],
        [0.0, 2.5, 0.0, 0.5],
        [2.0, 2.0, 1.5, -1.0],
        [1.0, 1.0, -1.5, 1.5],
    ];
    let base = Matrix::from_rows(&[
        [1.0, 0.3, 0.1, 0.0],
        [0.3, 1.0, 0.0, 0.1],
        [0.1, 0.0, 1.0, 0.3],
        [0.0, 0.1, 0.3, 1.0],
    ]);
    let n_out = ((n_per_class as f64) * outlier_fraction).round() as usize;
    let n_in = n_per_class - n_out;
    let scaled = |k: f64| Matrix::from_vec(4, 4, base.as_slice().iter().map(|v| v * k).collect());
    let inliers: Vec<ClassSpec> = means
        .iter()
        .map(|m| ClassSpec {
            mean: m.to_vec(),
            covariance: scaled(0.6),
            count: n_in,
        })
        .collect();
    let main = generate_gaussian_mixture(&inliers, seed)?;
    if n_out == 0 {
        return Ok(main);
    }
    let outliers: Vec<ClassSpec> = means
        .iter()
        .map(|m| ClassSpec {
            mean: m.to_vec(),
            covariance: scaled(5.4),
            count: n_out,
        })
        .collect();
    let extra = generate_gaussian_mixture(&outliers, seed::mix(seed, 1))?;
    let features = main.features.vstack(&extra.features);
    let mut labels = main.labels;
    labels.extend(extra.labels);
    Dataset::new(features, labels, 5)
}

/// Twelve strongly overlapping 8-D Gaussian classes, a small stand-in for a
/// hard many-class spectral problem.
pub fn generate_twelve_class_overlapping(n_per_class: usize, seed: u64) -> Result<Dataset, DatasetError> {
    let d = 8;
    let mut rng = seed::rng(seed::mix(seed, 0xA11));
    let specs: Vec<ClassSpec> = (0..12)
        .map(|_| {
            let mean: Vec<f64> = (0..d).map(|_| rng.random_range(-1.5..1.5)).collect();
            ClassSpec::isotropic(mean, 0.5, n_per_class)
        })
        .collect();
    generate_gaussian_mixture(&specs, seed)
}

/// Per-feature affine map `(x - mean) / scale`.
#[derive(Debug, Clone, PartialEq)]
pub struct Scaling {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Scaling {
    pub fn identity(d: usize) -> Self {
        Self {
            mean: vec![0.0; d],
            scale: vec![1.0; d],
        }
    }

    /// Zero mean and unit (population) variance over the given rows. Constant
    /// features keep scale 1.
    pub fn standardize(features: &Matrix, rows: &[usize]) -> Self {
        let d = features.ncols();
        let n = rows.len().max(1) as f64;
        let mut mean = vec![0.0; d];
        for &i in rows {
            for (m, v) in mean.iter_mut().zip(features.row(i)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for &i in rows {
            for ((s, v), m) in var.iter_mut().zip(features.row(i)).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let scale = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, scale }
    }

    pub fn apply(&self, m: &Matrix) -> Matrix {
        let mut out = m.clone();
        for i in 0..out.nrows() {
            for ((v, mu), s) in out.row_mut(i).iter_mut().zip(&self.mean).zip(&self.scale) {
                *v = (*v - mu) / s;
            }
        }
        out
    }
}

/// Labeled set X, pool U and held-out test set, as row indices of a [`Dataset`].
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub labeled_idx: Vec<usize>,
    pub pool_idx: Vec<usize>,
    pub test_idx: Vec<usize>,
    /// Standardization fitted on X ∪ U.
    pub scaling: Scaling,
}

impl Split {
    /// X ∪ U in ascending index order.
    pub fn training_universe(&self) -> Vec<usize> {
        let mut all: Vec<usize> = self.labeled_idx.iter().chain(&self.pool_idx).copied().collect();
        all.sort_unstable();
        all
    }
}

/// Draws exactly `per_class_initial` labeled samples per class, then
/// `pool_size` pool samples uniformly from the remainder. Everything left over
/// is the test set.
pub fn stratified_split(ds: &Dataset, per_class_initial: usize, pool_size: usize, seed: u64) -> Result<Split, DatasetError> {
    let n = ds.len();
    let requested = per_class_initial * ds.n_classes() + pool_size;
    if requested > n {
        return Err(DatasetError::SplitTooLarge { requested, available: n });
    }
    if pool_size == 0 {
        return Err(DatasetError::Invalid("pool must contain at least one sample".into()));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); ds.n_classes()];
    for (i, &y) in ds.labels().iter().enumerate() {
        by_class[y].push(i);
    }
    for (class, members) in by_class.iter().enumerate() {
        if members.len() < per_class_initial {
            return Err(DatasetError::InsufficientSamples {
                class,
                available: members.len(),
                required: per_class_initial,
            });
        }
    }

    let mut rng = seed::rng(seed);
    let mut labeled = Vec::with_capacity(per_class_initial * ds.n_classes());
    let mut rest = Vec::with_capacity(n);
    for mut members in by_class {
        members.shuffle(&mut rng);
        labeled.extend_from_slice(&members[..per_class_initial]);
        rest.extend_from_slice(&members[per_class_initial..]);
    }
    rest.sort_unstable();
    rest.shuffle(&mut rng);
    let mut pool = rest[..pool_size].to_vec();
    let mut test = rest[pool_size..].to_vec();
    labeled.sort_unstable();
    pool.sort_unstable();
    test.sort_unstable();

    let mut universe: Vec<usize> = labeled.iter().chain(&pool).copied().collect();
    universe.sort_unstable();
    let scaling = Scaling::standardize(ds.features(), &universe);
    Ok(Split {
        labeled_idx: labeled,
        pool_idx: pool,
        test_idx: test,
        scaling,
    })
}
