//! Pool-based active learning.
//!
//! Three heuristic families are provided over from-scratch base learners:
//!
//! - committee: normalized entropy query-by-bagging and adaptive maximum
//!   disagreement over feature views;
//! - large margin: margin sampling, multiclass level uncertainty, support
//!   vector detection, and the diversity-constrained batch builders
//!   (angle-based, closest support vector, kernel k-means, hierarchical);
//! - posterior probability: KL-max and breaking ties.
//!
//! [`engine`] runs the iterative select–label–retrain loop, and [`bench`]
//! repeats it over seeded trials to produce learning curves.

pub mod bench;
pub mod clustering;
pub mod dataset;
pub mod engine;
pub mod heuristics;
pub mod kernels;
pub mod matrix;
pub mod models;
pub mod seed;

pub use dataset::{Dataset, Split};
pub use kernels::Kernel;
pub use matrix::Matrix;
