//! Query heuristics.
//!
//! Scoring heuristics return a [`ScoreVector`] over the pool; selection
//! heuristics return a batch of `q` distinct pool positions. Pool positions
//! index the rows of the pool matrix handed in by the caller.

mod committee;
mod margin;
mod posterior;

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;

pub use committee::{
    multiview_entropy, normalized_vote_entropy, score_amd, score_neqb, update_amd_weights, AmdScores, CommitteeConfig,
    ViewPartition, ViewWeights,
};
pub use margin::{
    closest_support_vectors, ecbd_batch, hmcs_batch, mclu_value, ms_value, multiclass_uncertainty, score_mclu, score_ms,
    select_csv, select_hmcs_i, select_mao, select_mclu_abd, select_mclu_ecbd, select_ssc,
};
pub use posterior::{score_bt, score_kl_max};

use crate::clustering::ClusterError;
use crate::kernels::KernelError;
use crate::models::ModelError;
use crate::seed;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum HeuristicError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error("batch of {q} requested from {available} candidates")]
    PoolTooSmall { q: usize, available: usize },
    #[error("no trainable bootstrap bag after {0} draws")]
    BagsUntrainable(usize),
    #[error("labeled set has all or no support vectors; support detection undefined")]
    SscDegenerate,
    #[error("model has no support vectors")]
    NoSupportVectors,
    #[error("probability vector {0} is malformed")]
    MalformedProbability(usize),
    #[error("KL-max with an SVM base learner retrains u+1 SVMs per iteration; enable the override to allow it")]
    ExpensiveKlMax,
    #[error("{0}")]
    InvalidParameter(String),
}

/// Which extreme of a score is most informative.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    Maximize,
    Minimize,
}

/// Per-candidate heuristic scores. Non-finite entries mark excluded
/// candidates and always rank last.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector {
    pub scores: Vec<f64>,
    pub orientation: Orientation,
}

impl ScoreVector {
    pub fn new(scores: Vec<f64>, orientation: Orientation) -> Self {
        Self { scores, orientation }
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// Sort key where smaller is more informative.
    fn key(&self, i: usize) -> f64 {
        let s = self.scores[i];
        if !s.is_finite() {
            return f64::INFINITY;
        }
        match self.orientation {
            Orientation::Minimize => s,
            Orientation::Maximize => -s,
        }
    }

    /// Pool positions from most to least informative; ties by position.
    pub fn ranking(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.scores.len()).collect();
        idx.sort_by(|&a, &b| self.key(a).total_cmp(&self.key(b)).then(a.cmp(&b)));
        idx
    }

    /// The `q` most informative positions, best first.
    pub fn top(&self, q: usize) -> Vec<usize> {
        let mut r = self.ranking();
        r.truncate(q);
        r
    }

    /// The `size` most informative positions in ascending position order.
    pub fn best_subset(&self, size: usize) -> Vec<usize> {
        let mut s = self.top(size);
        s.sort_unstable();
        s
    }

    /// Most informative position (lowest on ties).
    pub fn best(&self) -> Option<usize> {
        self.ranking().first().copied()
    }
}

/// Uniform draw of `q` pool positions without replacement.
pub fn select_random(pool_size: usize, q: usize, seed: u64) -> Result<Vec<usize>, HeuristicError> {
    if q > pool_size {
        return Err(HeuristicError::PoolTooSmall { q, available: pool_size });
    }
    let mut idx: Vec<usize> = (0..pool_size).collect();
    let mut rng = seed::rng(seed);
    let (chosen, _) = idx.partial_shuffle(&mut rng, q);
    Ok(chosen.to_vec())
}

/// Heuristic identifiers as used on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum HeuristicId {
    Neqb,
    Amd,
    Ms,
    Mclu,
    Ssc,
    Mao,
    MncluAbd,
    Csv,
    MncluEcbd,
    HmcsI,
    KlMax,
    Bt,
    Random,
}

impl HeuristicId {
    pub const ALL: [HeuristicId; 13] = [
        HeuristicId::Neqb,
        HeuristicId::Amd,
        HeuristicId::Ms,
        HeuristicId::Mclu,
        HeuristicId::Ssc,
        HeuristicId::Mao,
        HeuristicId::MncluAbd,
        HeuristicId::Csv,
        HeuristicId::MncluEcbd,
        HeuristicId::HmcsI,
        HeuristicId::KlMax,
        HeuristicId::Bt,
        HeuristicId::Random,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            HeuristicId::Neqb => "neqb",
            HeuristicId::Amd => "amd",
            HeuristicId::Ms => "ms",
            HeuristicId::Mclu => "mclu",
            HeuristicId::Ssc => "ssc",
            HeuristicId::Mao => "mao",
            HeuristicId::MncluAbd => "mclu-abd",
            HeuristicId::Csv => "csv",
            HeuristicId::MncluEcbd => "mclu-ecbd",
            HeuristicId::HmcsI => "hmcs-i",
            HeuristicId::KlMax => "kl-max",
            HeuristicId::Bt => "bt",
            HeuristicId::Random => "random",
        }
    }

    /// Large-margin heuristics need SVM decision values.
    pub fn requires_svm(&self) -> bool {
        matches!(
            self,
            HeuristicId::Ms
                | HeuristicId::Mclu
                | HeuristicId::Ssc
                | HeuristicId::Mao
                | HeuristicId::MncluAbd
                | HeuristicId::Csv
                | HeuristicId::MncluEcbd
                | HeuristicId::HmcsI
        )
    }

    /// Heuristics that read class posteriors from the current model.
    pub fn requires_posterior(&self) -> bool {
        matches!(self, HeuristicId::Bt)
    }
}

impl fmt::Display for HeuristicId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for HeuristicId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        HeuristicId::ALL
            .into_iter()
            .find(|h| h.as_str() == s)
            .ok_or_else(|| format!("unknown heuristic {s:?}"))
    }
}
