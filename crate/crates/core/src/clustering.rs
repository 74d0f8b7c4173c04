//! Kernel k-means (Lloyd iterations on Gram entries only) and hierarchical
//! binary splitting of the largest cluster.

use rand::Rng;

use crate::kernels::{self_gram, Gram, Kernel};
use crate::matrix::Matrix;
use crate::seed;

/// Empty-cluster repairs allowed per run.
const MAX_REPAIRS: usize = 3;
/// Iteration cap used when splitting a cluster in two.
const SPLIT_MAX_ITER: usize = 100;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ClusterError {
    #[error("k = {k} but only {n} samples")]
    TooManyClusters { k: usize, n: usize },
    #[error("k and max_iter must be at least 1")]
    InvalidParameter,
    #[error("empty cluster could not be repaired after {0} reseeds")]
    EmptyCluster(usize),
    #[error("all clusters are singletons")]
    AllSingletons,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAssignment {
    /// Cluster id per sample.
    pub labels: Vec<usize>,
    pub k: usize,
    /// Within-cluster feature-space distortion.
    pub objective: f64,
    /// Objective after every assignment step, first entry from the initial seeding.
    pub history: Vec<f64>,
}

impl ClusterAssignment {
    /// Everything in cluster 0.
    pub fn single(n: usize, gram: &Gram) -> Self {
        let labels = vec![0; n];
        let objective = objective(gram, &labels, 1);
        Self {
            labels,
            k: 1,
            objective,
            history: vec![objective],
        }
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k];
        for &l in &self.labels {
            s[l] += 1;
        }
        s
    }

    pub fn members(&self, cluster: usize) -> Vec<usize> {
        (0..self.labels.len()).filter(|&i| self.labels[i] == cluster).collect()
    }
}

pub fn kernel_kmeans(samples: &Matrix, kernel: &Kernel, k: usize, seed: u64, max_iter: usize) -> Result<ClusterAssignment, ClusterError> {
    kernel_kmeans_gram(&self_gram(kernel, samples), k, seed, max_iter)
}

pub fn kernel_kmeans_gram(gram: &Gram, k: usize, seed: u64, max_iter: usize) -> Result<ClusterAssignment, ClusterError> {
    let n = gram.nrows();
    if k == 0 || max_iter == 0 {
        return Err(ClusterError::InvalidParameter);
    }
    if k > n {
        return Err(ClusterError::TooManyClusters { k, n });
    }
    let seeds = kmeanspp_seeds(gram, k, seed);
    kernel_kmeans_from_seeds(gram, &seeds, max_iter)
}

/// k-means++ seeding with feature-space distances: first seed uniform, each
/// further seed drawn with probability proportional to its squared distance to
/// the nearest chosen seed. Returns `k` distinct sample indices.
pub fn kmeanspp_seeds(gram: &Gram, k: usize, seed: u64) -> Vec<usize> {
    let n = gram.nrows();
    let mut rng = seed::rng(seed);
    let mut chosen = Vec::with_capacity(k);
    let mut is_chosen = vec![false; n];
    let first = rng.random_range(0..n);
    chosen.push(first);
    is_chosen[first] = true;
    let mut d2: Vec<f64> = (0..n).map(|i| dist2(gram, i, first)).collect();
    while chosen.len() < k {
        let total: f64 = (0..n).filter(|&i| !is_chosen[i]).map(|i| d2[i]).sum();
        let next = if total > 0.0 {
            let mut r = rng.random::<f64>() * total;
            let mut pick = None;
            for i in (0..n).filter(|&i| !is_chosen[i]) {
                if d2[i] <= 0.0 {
                    continue;
                }
                pick = Some(i);
                r -= d2[i];
                if r < 0.0 {
                    break;
                }
            }
            pick.expect("positive total implies a candidate")
        } else {
            let free: Vec<usize> = (0..n).filter(|&i| !is_chosen[i]).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen.push(next);
        is_chosen[next] = true;
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(dist2(gram, i, next));
        }
    }
    chosen
}

#[inline]
fn dist2(gram: &Gram, i: usize, j: usize) -> f64 {
    (gram.get(i, i) - 2.0 * gram.get(i, j) + gram.get(j, j)).max(0.0)
}

/// Lloyd iterations starting from clusters centred on the `seeds` samples.
pub fn kernel_kmeans_from_seeds(gram: &Gram, seeds: &[usize], max_iter: usize) -> Result<ClusterAssignment, ClusterError> {
    let n = gram.nrows();
    let k = seeds.len();
    if k == 0 || max_iter == 0 {
        return Err(ClusterError::InvalidParameter);
    }
    if k > n {
        return Err(ClusterError::TooManyClusters { k, n });
    }
    let mut labels: Vec<usize> = (0..n)
        .map(|i| {
            let mut best = 0;
            let mut best_d = dist2(gram, i, seeds[0]);
            for (c, &s) in seeds.iter().enumerate().skip(1) {
                let d = dist2(gram, i, s);
                if d < best_d {
                    best = c;
                    best_d = d;
                }
            }
            best
        })
        .collect();
    let mut repairs = 0;
    repair_empty(gram, &mut labels, k, &mut repairs)?;
    let mut history = vec![objective(gram, &labels, k)];

    for _ in 0..max_iter {
        let dists = centroid_distances(gram, &labels, k);
        let next: Vec<usize> = (0..n)
            .map(|i| {
                let row = &dists[i * k..(i + 1) * k];
                let mut best = labels[i];
                for (c, &d) in row.iter().enumerate() {
                    if d < row[best] {
                        best = c;
                    }
                }
                best
            })
            .collect();
        if next == labels {
            break;
        }
        labels = next;
        repair_empty(gram, &mut labels, k, &mut repairs)?;
        let obj = objective(gram, &labels, k);
        debug_assert!(
            obj <= history.last().unwrap() + 1e-9 * (1.0 + history.last().unwrap().abs()),
            "kernel k-means objective increased"
        );
        history.push(obj);
    }
    Ok(ClusterAssignment {
        objective: *history.last().unwrap(),
        labels,
        k,
        history,
    })
}

/// Row-major `n x k` matrix of `|phi(x_i) - mu_c|^2`.
fn centroid_distances(gram: &Gram, labels: &[usize], k: usize) -> Vec<f64> {
    let n = labels.len();
    let mut size = vec![0usize; k];
    for &l in labels {
        size[l] += 1;
    }
    // cross[i*k + c] = sum_{j in c} K_ij
    let mut cross = vec![0.0; n * k];
    for i in 0..n {
        let row = gram.row(i);
        for (j, &l) in labels.iter().enumerate() {
            cross[i * k + l] += row[j];
        }
    }
    let mut self_term = vec![0.0; k];
    for (i, &l) in labels.iter().enumerate() {
        self_term[l] += cross[i * k + l];
    }
    for c in 0..k {
        if size[c] > 0 {
            self_term[c] /= (size[c] * size[c]) as f64;
        }
    }
    let mut out = vec![f64::INFINITY; n * k];
    for i in 0..n {
        let kii = gram.get(i, i);
        for c in 0..k {
            if size[c] > 0 {
                out[i * k + c] = (kii - 2.0 * cross[i * k + c] / size[c] as f64 + self_term[c]).max(0.0);
            }
        }
    }
    out
}

/// Total within-cluster distortion `sum_c [sum_{i in c} K_ii - 1/|c| sum_{i,j in c} K_ij]`.
pub fn objective(gram: &Gram, labels: &[usize], k: usize) -> f64 {
    let mut size = vec![0usize; k];
    let mut diag = vec![0.0; k];
    let mut block = vec![0.0; k];
    for (i, &li) in labels.iter().enumerate() {
        size[li] += 1;
        diag[li] += gram.get(i, i);
        let row = gram.row(i);
        for (j, &lj) in labels.iter().enumerate() {
            if lj == li {
                block[li] += row[j];
            }
        }
    }
    (0..k)
        .filter(|&c| size[c] > 0)
        .map(|c| (diag[c] - block[c] / size[c] as f64).max(0.0))
        .sum()
}

/// Moves the sample farthest from its centroid into each empty cluster.
fn repair_empty(gram: &Gram, labels: &mut [usize], k: usize, repairs: &mut usize) -> Result<(), ClusterError> {
    loop {
        let mut size = vec![0usize; k];
        for &l in labels.iter() {
            size[l] += 1;
        }
        let Some(empty) = size.iter().position(|&s| s == 0) else {
            return Ok(());
        };
        *repairs += 1;
        if *repairs > MAX_REPAIRS {
            return Err(ClusterError::EmptyCluster(MAX_REPAIRS));
        }
        let dists = centroid_distances(gram, labels, k);
        let far = (0..labels.len())
            .filter(|&i| size[labels[i]] >= 2)
            .max_by(|&a, &b| dists[a * k + labels[a]].total_cmp(&dists[b * k + labels[b]]).then(b.cmp(&a)))
            .ok_or(ClusterError::EmptyCluster(*repairs))?;
        labels[far] = empty;
    }
}

/// Splits the largest cluster (lowest id on ties) in two with kernel k-means;
/// the second half receives the new id `k`.
pub fn binary_split_largest(partition: &ClusterAssignment, gram: &Gram, seed: u64) -> Result<ClusterAssignment, ClusterError> {
    let sizes = partition.sizes();
    let mut largest = 0;
    for (c, &s) in sizes.iter().enumerate() {
        if s > sizes[largest] {
            largest = c;
        }
    }
    if sizes[largest] < 2 {
        return Err(ClusterError::AllSingletons);
    }
    let members = partition.members(largest);
    let halves = kernel_kmeans_gram(&gram.submatrix(&members), 2, seed, SPLIT_MAX_ITER)?;
    let mut labels = partition.labels.clone();
    for (&m, &h) in members.iter().zip(&halves.labels) {
        if h == 1 {
            labels[m] = partition.k;
        }
    }
    let k = partition.k + 1;
    let objective = objective(gram, &labels, k);
    Ok(ClusterAssignment {
        labels,
        k,
        objective,
        history: vec![objective],
    })
}
