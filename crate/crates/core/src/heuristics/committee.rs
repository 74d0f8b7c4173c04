//! Committee heuristics: normalized entropy query-by-bagging and adaptive
//! maximum disagreement over feature views.

use rand::Rng;

use crate::matrix::Matrix;
use crate::models::{Learner, Model};
use crate::seed;

use super::{HeuristicError, Orientation, ScoreVector};

/// Bag redraws allowed per committee member.
const MAX_BAG_DRAWS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CommitteeConfig {
    pub k_members: usize,
    pub bag_fraction: f64,
    pub seed: u64,
}

impl CommitteeConfig {
    /// Seven members on 75% bags.
    pub fn svm_default(seed: u64) -> Self {
        Self {
            k_members: 7,
            bag_fraction: 0.75,
            seed,
        }
    }

    /// Twelve members on 85% bags.
    pub fn lda_default(seed: u64) -> Self {
        Self {
            k_members: 12,
            bag_fraction: 0.85,
            seed,
        }
    }

    pub fn for_learner(learner: &Learner, seed: u64) -> Self {
        if learner.is_svm() {
            Self::svm_default(seed)
        } else {
            Self::lda_default(seed)
        }
    }

    fn validate(&self) -> Result<(), HeuristicError> {
        if self.k_members < 2 {
            return Err(HeuristicError::InvalidParameter("committee needs at least 2 members".into()));
        }
        if !(self.bag_fraction > 0.0 && self.bag_fraction <= 1.0) {
            return Err(HeuristicError::InvalidParameter(format!(
                "bag fraction {} outside (0, 1]",
                self.bag_fraction
            )));
        }
        Ok(())
    }
}

/// Vote entropy divided by `ln(N_i)`, where `N_i` is the number of classes
/// that received at least one vote. Zero when the committee agrees.
pub fn normalized_vote_entropy(votes: &[usize]) -> f64 {
    let total: usize = votes.iter().sum();
    let distinct = votes.iter().filter(|&&v| v > 0).count();
    if distinct < 2 {
        return 0.0;
    }
    let h: f64 = votes
        .iter()
        .filter(|&&v| v > 0)
        .map(|&v| {
            let p = v as f64 / total as f64;
            -p * p.ln()
        })
        .sum();
    (h / (distinct as f64).ln()).clamp(0.0, 1.0)
}

fn train_bag(
    labeled: &Matrix,
    labels: &[usize],
    n_classes: usize,
    learner: &Learner,
    bag_size: usize,
    seed_: u64,
) -> Result<Model, HeuristicError> {
    let mut rng = seed::rng(seed_);
    let l = labels.len();
    for _ in 0..MAX_BAG_DRAWS {
        let bag: Vec<usize> = (0..bag_size).map(|_| rng.random_range(0..l)).collect();
        let yb: Vec<usize> = bag.iter().map(|&i| labels[i]).collect();
        let mut seen = vec![false; n_classes];
        yb.iter().for_each(|&c| seen[c] = true);
        if seen.iter().filter(|&&s| s).count() < 2 {
            continue;
        }
        match learner.fit(&labeled.select_rows(&bag), &yb, n_classes, seed_) {
            Ok(m) => return Ok(m),
            Err(e) => log::debug!("bootstrap bag rejected: {e}"),
        }
    }
    Err(HeuristicError::BagsUntrainable(MAX_BAG_DRAWS))
}

/// nEQB: committee of bootstrap-trained models, candidates scored by the
/// normalized entropy of their votes (maximize).
pub fn score_neqb(
    labeled: &Matrix,
    labels: &[usize],
    n_classes: usize,
    pool: &Matrix,
    committee: &CommitteeConfig,
    learner: &Learner,
) -> Result<ScoreVector, HeuristicError> {
    committee.validate()?;
    let learner = learner.with_calibration(false);
    let bag_size = ((committee.bag_fraction * labels.len() as f64).round() as usize).max(2);
    let mut votes = vec![vec![0usize; n_classes]; pool.nrows()];
    for m in 0..committee.k_members {
        let model = train_bag(labeled, labels, n_classes, &learner, bag_size, seed::mix(committee.seed, m as u64))?;
        for (v, x) in votes.iter_mut().zip(pool.rows()) {
            v[model.predict(x)] += 1;
        }
    }
    let scores = votes.iter().map(|v| normalized_vote_entropy(v)).collect();
    Ok(ScoreVector::new(scores, Orientation::Maximize))
}

/// Disjoint feature subsets covering every input dimension.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ViewPartition {
    views: Vec<Vec<usize>>,
}

impl ViewPartition {
    pub fn new(views: Vec<Vec<usize>>, d: usize) -> Result<Self, HeuristicError> {
        let mut seen = vec![false; d];
        for view in &views {
            if view.is_empty() {
                return Err(HeuristicError::InvalidParameter("empty view".into()));
            }
            for &f in view {
                if f >= d || std::mem::replace(&mut seen[f], true) {
                    return Err(HeuristicError::InvalidParameter(format!("feature {f} out of range or repeated")));
                }
            }
        }
        if seen.iter().any(|&s| !s) {
            return Err(HeuristicError::InvalidParameter("views do not cover every feature".into()));
        }
        Ok(Self { views })
    }

    /// `v` contiguous blocks of near-equal width.
    pub fn contiguous(d: usize, v: usize) -> Result<Self, HeuristicError> {
        if v == 0 || v > d {
            return Err(HeuristicError::InvalidParameter(format!("cannot cut {d} features into {v} views")));
        }
        let views = (0..v).map(|b| (b * d / v..(b + 1) * d / v).collect()).collect();
        Self::new(views, d)
    }

    /// Groups features connected by `|corr| >= threshold` over the rows of
    /// `x`, then merges the two smallest groups (or splits the largest) until
    /// exactly `v` views remain.
    pub fn correlation_blocks(x: &Matrix, v: usize, threshold: f64) -> Result<Self, HeuristicError> {
        let d = x.ncols();
        if v == 0 || v > d {
            return Err(HeuristicError::InvalidParameter(format!("cannot cut {d} features into {v} views")));
        }
        let corr = correlation(x);
        let mut component = vec![usize::MAX; d];
        let mut groups: Vec<Vec<usize>> = Vec::new();
        for start in 0..d {
            if component[start] != usize::MAX {
                continue;
            }
            let id = groups.len();
            let mut stack = vec![start];
            let mut members = Vec::new();
            component[start] = id;
            while let Some(f) = stack.pop() {
                members.push(f);
                for g in 0..d {
                    if component[g] == usize::MAX && corr[f * d + g].abs() >= threshold {
                        component[g] = id;
                        stack.push(g);
                    }
                }
            }
            members.sort_unstable();
            groups.push(members);
        }
        while groups.len() > v {
            let order = size_order(&groups);
            let (a, b) = (order[0].min(order[1]), order[0].max(order[1]));
            let merged = groups.remove(b);
            groups[a].extend(merged);
            groups[a].sort_unstable();
        }
        while groups.len() < v {
            let largest = *size_order(&groups).last().expect("non-empty");
            let g = &mut groups[largest];
            let tail = g.split_off(g.len() / 2);
            groups.push(tail);
        }
        groups.sort_by_key(|g| g[0]);
        Self::new(groups, d)
    }

    pub fn views(&self) -> &[Vec<usize>] {
        &self.views
    }

    pub fn len(&self) -> usize {
        self.views.len()
    }

    pub fn is_empty(&self) -> bool {
        self.views.is_empty()
    }
}

/// Group indices by ascending size, lowest index first on ties.
fn size_order(groups: &[Vec<usize>]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..groups.len()).collect();
    order.sort_by_key(|&g| (groups[g].len(), g));
    order
}

fn correlation(x: &Matrix) -> Vec<f64> {
    let (n, d) = (x.nrows() as f64, x.ncols());
    let mean: Vec<f64> = (0..d).map(|j| x.rows().map(|r| r[j]).sum::<f64>() / n).collect();
    let mut cov = vec![0.0; d * d];
    for r in x.rows() {
        for a in 0..d {
            for b in 0..d {
                cov[a * d + b] += (r[a] - mean[a]) * (r[b] - mean[b]);
            }
        }
    }
    let sd: Vec<f64> = (0..d).map(|a| cov[a * d + a].sqrt()).collect();
    (0..d * d)
        .map(|ab| {
            let (a, b) = (ab / d, ab % d);
            if a == b {
                1.0
            } else if sd[a] > 0.0 && sd[b] > 0.0 {
                cov[ab] / (sd[a] * sd[b])
            } else {
                0.0
            }
        })
        .collect()
}

/// Per-view class weights; for each view the weights over classes sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewWeights {
    /// `w[v][class]`.
    w: Vec<Vec<f64>>,
}

impl ViewWeights {
    pub fn uniform(n_classes: usize, n_views: usize) -> Self {
        Self {
            w: vec![vec![1.0 / n_classes as f64; n_classes]; n_views],
        }
    }

    /// From `w[v][class]`; each view's column is renormalized to sum to one.
    pub fn from_columns(w: Vec<Vec<f64>>) -> Result<Self, HeuristicError> {
        let mut out = Self { w };
        for col in &out.w {
            if col.iter().any(|&x| !(x >= 0.0 && x.is_finite())) || col.iter().sum::<f64>() <= 0.0 {
                return Err(HeuristicError::InvalidParameter("view weights must be nonnegative with a positive sum".into()));
            }
        }
        out.renormalize();
        Ok(out)
    }

    pub fn get(&self, view: usize, class: usize) -> f64 {
        self.w[view][class]
    }

    pub fn n_views(&self) -> usize {
        self.w.len()
    }

    pub fn n_classes(&self) -> usize {
        self.w.first().map_or(0, Vec::len)
    }

    fn renormalize(&mut self) {
        for col in &mut self.w {
            let s: f64 = col.iter().sum();
            col.iter_mut().for_each(|x| *x /= s);
        }
    }
}

/// Weighted multiview vote entropy of one candidate given each view's
/// predicted class. The probability of class `c` is
/// `sum_v W(v,c) [pred_v = c] / (N_i * sum_v W(v,c))`, with `N_i` the number of
/// distinct predicted classes.
pub fn multiview_entropy(predictions: &[usize], weights: &ViewWeights) -> f64 {
    let mut classes: Vec<usize> = predictions.to_vec();
    classes.sort_unstable();
    classes.dedup();
    let n_i = classes.len() as f64;
    let mut h = 0.0;
    for &c in &classes {
        let num: f64 = predictions
            .iter()
            .enumerate()
            .filter(|(_, &p)| p == c)
            .map(|(v, _)| weights.get(v, c))
            .sum();
        let den: f64 = n_i * (0..weights.n_views()).map(|v| weights.get(v, c)).sum::<f64>();
        if num > 0.0 && den > 0.0 {
            let p = num / den;
            h -= p * p.ln();
        }
    }
    h
}

/// AMD scores plus each candidate's per-view predictions, needed later to
/// update the weights.
#[derive(Debug, Clone, PartialEq)]
pub struct AmdScores {
    pub scores: ScoreVector,
    /// `predictions[i][v]`.
    pub predictions: Vec<Vec<usize>>,
}

/// AMD: one model per view, candidates in the subset with the most distinct
/// predicted classes scored by multiview entropy; the rest are excluded.
#[allow(clippy::too_many_arguments)]
pub fn score_amd(
    labeled: &Matrix,
    labels: &[usize],
    n_classes: usize,
    pool: &Matrix,
    views: &ViewPartition,
    weights: &ViewWeights,
    learner: &Learner,
    seed_: u64,
) -> Result<AmdScores, HeuristicError> {
    if weights.n_views() != views.len() || weights.n_classes() != n_classes {
        return Err(HeuristicError::InvalidParameter("view weights do not match views and classes".into()));
    }
    let learner = learner.with_calibration(false);
    let mut predictions = vec![Vec::with_capacity(views.len()); pool.nrows()];
    for (v, cols) in views.views().iter().enumerate() {
        let model = learner.fit(&labeled.select_cols(cols), labels, n_classes, seed::mix(seed_, v as u64))?;
        let sub = pool.select_cols(cols);
        for (p, x) in predictions.iter_mut().zip(sub.rows()) {
            p.push(model.predict(x));
        }
    }
    let distinct: Vec<usize> = predictions
        .iter()
        .map(|p| {
            let mut s = p.clone();
            s.sort_unstable();
            s.dedup();
            s.len()
        })
        .collect();
    let top = distinct.iter().copied().max().unwrap_or(0);
    let scores = predictions
        .iter()
        .zip(&distinct)
        .map(|(p, &n)| if n == top { multiview_entropy(p, weights) } else { f64::NEG_INFINITY })
        .collect();
    Ok(AmdScores {
        scores: ScoreVector::new(scores, Orientation::Maximize),
        predictions,
    })
}

/// Adds one to `W(v, y)` for every selected sample whose view-`v` prediction
/// equals its true label `y`, then renormalizes each view's column.
pub fn update_amd_weights(weights: &ViewWeights, true_labels: &[usize], per_view_predictions: &[Vec<usize>]) -> ViewWeights {
    let mut out = weights.clone();
    for (&y, preds) in true_labels.iter().zip(per_view_predictions) {
        for (v, &p) in preds.iter().enumerate() {
            if p == y {
                out.w[v][y] += 1.0;
            }
        }
    }
    out.renormalize();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::generate_three_class_toy;
    use crate::kernels::Kernel;
    use crate::models::SvmParams;
    use proptest::prelude::*;

    #[test]
    fn vote_entropy_examples() {
        assert_eq!(normalized_vote_entropy(&[7, 0, 0]), 0.0);
        assert!((normalized_vote_entropy(&[4, 4, 0]) - 1.0).abs() < 1e-12);
        // 6/2 split: -(0.75 ln 0.75 + 0.25 ln 0.25) / ln 2
        assert!((normalized_vote_entropy(&[6, 2]) - 0.8113).abs() < 1e-4);
        assert!((normalized_vote_entropy(&[3, 3, 3]) - 1.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn vote_entropy_bounded(votes in prop::collection::vec(0usize..20, 1..8)) {
            prop_assume!(votes.iter().sum::<usize>() > 0);
            let s = normalized_vote_entropy(&votes);
            prop_assert!((0.0..=1.0).contains(&s));
        }
    }

    #[test]
    fn multiview_examples() {
        let w = ViewWeights::uniform(2, 2);
        assert_eq!(multiview_entropy(&[1, 1], &w), 0.0);
        assert!((multiview_entropy(&[0, 1], &w) - std::f64::consts::LN_2).abs() < 1e-12);
        // view 1 carries no weight on class 1: its vote for class 1 adds no mass
        let w = ViewWeights::from_columns(vec![vec![0.5, 0.5], vec![1.0, 0.0]]).unwrap();
        let p0: f64 = 0.5 / (2.0 * 1.5);
        let expected = -p0 * p0.ln();
        assert!((multiview_entropy(&[0, 1], &w) - expected).abs() < 1e-12);
    }

    #[test]
    fn weight_updates() {
        let w = ViewWeights::uniform(3, 2);
        assert_eq!(update_amd_weights(&w, &[0, 1], &[vec![2, 2], vec![0, 2]]), w);
        let u = update_amd_weights(&w, &[2], &[vec![2, 0]]);
        // view 0: (1/3, 1/3, 4/3) / 2
        assert!((u.get(0, 2) - 4.0 / 6.0).abs() < 1e-12);
        assert!((u.get(0, 0) - 1.0 / 6.0).abs() < 1e-12);
        assert_eq!(u.w[1], w.w[1]);
        for col in &u.w {
            assert!((col.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn partitions() {
        let p = ViewPartition::contiguous(5, 2).unwrap();
        assert_eq!(p.views(), &[vec![0, 1], vec![2, 3, 4]]);
        assert!(ViewPartition::contiguous(2, 3).is_err());
        assert!(ViewPartition::new(vec![vec![0], vec![0, 1]], 2).is_err());
        assert!(ViewPartition::new(vec![vec![0]], 2).is_err());

        // features 0,1 perfectly correlated; 2,3 perfectly correlated; independent across.
        let rows: Vec<[f64; 4]> = (0..20)
            .map(|i| {
                let a = i as f64;
                let b = ((i * 7) % 11) as f64;
                [a, 2.0 * a + 1.0, b, -b]
            })
            .collect();
        let x = Matrix::from_rows(&rows);
        let p = ViewPartition::correlation_blocks(&x, 2, 0.9).unwrap();
        assert_eq!(p.views(), &[vec![0, 1], vec![2, 3]]);
        let p3 = ViewPartition::correlation_blocks(&x, 3, 0.9).unwrap();
        assert_eq!(p3.len(), 3);
        let p1 = ViewPartition::correlation_blocks(&x, 1, 0.9).unwrap();
        assert_eq!(p1.views(), &[vec![0, 1, 2, 3]]);
    }

    #[test]
    fn neqb_on_toy() {
        let ds = generate_three_class_toy(8, 3).unwrap();
        let pool = generate_three_class_toy(10, 4).unwrap();
        let learner = Learner::Svm {
            params: SvmParams::new(Kernel::rbf(0.5).unwrap(), 10.0),
            calibrate: false,
        };
        let cfg = CommitteeConfig::svm_default(5);
        let s = score_neqb(ds.features(), ds.labels(), 3, pool.features(), &cfg, &learner).unwrap();
        assert_eq!(s.len(), 30);
        assert!(s.scores.iter().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(s, score_neqb(ds.features(), ds.labels(), 3, pool.features(), &cfg, &learner).unwrap());
        let lda = Learner::Lda { shrinkage: 0.1 };
        let s = score_neqb(ds.features(), ds.labels(), 3, pool.features(), &CommitteeConfig::lda_default(1), &lda).unwrap();
        assert!(s.scores.iter().all(|v| (0.0..=1.0).contains(v)));
        let bad = CommitteeConfig { k_members: 1, ..cfg };
        assert!(score_neqb(ds.features(), ds.labels(), 3, pool.features(), &bad, &learner).is_err());
    }

    #[test]
    fn amd_prefilter() {
        let ds = generate_three_class_toy(8, 3).unwrap();
        let pool = generate_three_class_toy(10, 4).unwrap();
        let views = ViewPartition::contiguous(2, 2).unwrap();
        let w = ViewWeights::uniform(3, 2);
        let lda = Learner::Lda { shrinkage: 0.1 };
        let out = score_amd(ds.features(), ds.labels(), 3, pool.features(), &views, &w, &lda, 0).unwrap();
        assert_eq!(out.predictions.len(), 30);
        let max_distinct = out
            .predictions
            .iter()
            .map(|p| if p[0] == p[1] { 1 } else { 2 })
            .max()
            .unwrap();
        for (p, &s) in out.predictions.iter().zip(&out.scores.scores) {
            let d = if p[0] == p[1] { 1 } else { 2 };
            assert_eq!(d == max_distinct, s.is_finite());
        }
    }
}
