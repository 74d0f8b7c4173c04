//! The active-learning loop: fit on the labeled set, score the pool, ask the
//! oracle for a batch, move it to the labeled set, repeat.

mod diversity;

use std::time::{Duration, Instant};

use rand::Rng;

pub use diversity::{diversity_batch, BatchBuilder};

use crate::dataset::{Dataset, Split};
use crate::heuristics::{
    self, CommitteeConfig, HeuristicError, HeuristicId, ViewPartition, ViewWeights,
};
use crate::kernels::{GramCache, Kernel};
use crate::matrix::Matrix;
use crate::models::cv::{cross_validate_with, KernelGrid, DEFAULT_C_GRID};
use crate::models::svm::DEFAULT_TOL;
use crate::models::{Learner, Model, ModelError, SvmParams};
use crate::seed::{self, stream};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EngineError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("iteration {iteration}: {source}")]
    Heuristic { iteration: usize, source: HeuristicError },
    #[error("{0}")]
    Incompatible(String),
    #[error("pool is empty")]
    EmptyPool,
    #[error("{0}")]
    InvalidConfig(String),
}

/// Cross-validated SVM hyperparameter search.
#[derive(Debug, Clone, PartialEq)]
pub struct CvConfig {
    pub kernel_grid: KernelGrid,
    pub c_grid: Vec<f64>,
    pub folds: usize,
    /// Hyperparameters are searched again every this many iterations.
    pub refit_every: usize,
    pub tol: f64,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self {
            kernel_grid: KernelGrid::default(),
            c_grid: DEFAULT_C_GRID.to_vec(),
            folds: 5,
            refit_every: 10,
            tol: DEFAULT_TOL,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SvmTuning {
    Fixed(SvmParams),
    CrossValidated(CvConfig),
}

/// Base classifier used by the loop.
#[derive(Debug, Clone, PartialEq)]
pub enum Classifier {
    Svm(SvmTuning),
    Lda { shrinkage: f64 },
}

impl Classifier {
    pub fn is_svm(&self) -> bool {
        matches!(self, Classifier::Svm(_))
    }
}

/// How AMD cuts the features into views.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ViewMode {
    Contiguous(usize),
    Correlation { views: usize, threshold: f64 },
}

/// A heuristic plus its tunables.
#[derive(Debug, Clone, PartialEq)]
pub struct HeuristicConfig {
    pub id: HeuristicId,
    /// Uncertain subset size as a multiple of `q`.
    pub subset_factor: usize,
    /// Uncertainty weight of MCLU-ABD.
    pub lambda: f64,
    /// Committee size and bag fraction; learner-specific defaults when unset.
    pub committee: Option<(usize, f64)>,
    pub views: ViewMode,
    /// Lets KL-max retrain SVMs.
    pub allow_svm_kl_max: bool,
    /// Record bounded support vectors after every fit.
    pub track_bounded_svs: bool,
}

impl HeuristicConfig {
    pub fn new(id: HeuristicId) -> Self {
        Self {
            id,
            subset_factor: 3,
            lambda: 0.6,
            committee: None,
            views: ViewMode::Contiguous(2),
            allow_svm_kl_max: false,
            track_bounded_svs: true,
        }
    }
}

/// Simulated labeling authority: returns the ground truth, optionally
/// corrupted with uniform label noise.
#[derive(Debug, Clone)]
pub struct Oracle {
    labels: Vec<usize>,
    n_classes: usize,
    noise: Option<(f64, u64)>,
}

impl Oracle {
    pub fn new(dataset: &Dataset) -> Self {
        Self {
            labels: dataset.labels().to_vec(),
            n_classes: dataset.n_classes(),
            noise: None,
        }
    }

    /// With probability `rate`, answers a uniformly drawn wrong class.
    pub fn with_noise(mut self, rate: f64, seed_: u64) -> Self {
        self.noise = Some((rate, seed_));
        self
    }

    pub fn label(&self, idx: usize) -> usize {
        let truth = self.labels[idx];
        match self.noise {
            Some((rate, s)) if self.n_classes > 1 => {
                let mut rng = seed::rng(seed::mix(s, idx as u64));
                if rng.random::<f64>() < rate {
                    let other = rng.random_range(0..self.n_classes - 1);
                    if other >= truth {
                        other + 1
                    } else {
                        other
                    }
                } else {
                    truth
                }
            }
            _ => truth,
        }
    }
}

/// When to stop querying. The loop also ends when the pool is exhausted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StoppingRule {
    pub max_iterations: Option<usize>,
    /// Labels acquired from the pool, initial training set excluded.
    pub label_budget: Option<usize>,
}

impl StoppingRule {
    pub fn iterations(n: usize) -> Self {
        Self {
            max_iterations: Some(n),
            label_budget: None,
        }
    }

    /// Batch size allowed for the next iteration; 0 means stop.
    fn next_batch(&self, q: usize, iterations: usize, acquired: usize, pool: usize) -> usize {
        if self.max_iterations.is_some_and(|m| iterations >= m) {
            return 0;
        }
        let left = self.label_budget.map_or(usize::MAX, |b| b.saturating_sub(acquired));
        q.min(left).min(pool)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    /// Dataset indices labeled in this iteration.
    pub selected: Vec<usize>,
    /// Training set size after the iteration.
    pub labels_used: usize,
    /// Test accuracy of the model refit after the iteration.
    pub accuracy: f64,
    pub elapsed: Duration,
}

/// One trial of the loop. Features are rescaled with the split's scaling.
#[derive(Debug)]
pub struct ActiveState {
    data: Dataset,
    oracle: Oracle,
    /// Labels known to the learner, indexed by dataset row.
    known: Vec<Option<usize>>,
    labeled: Vec<usize>,
    pool: Vec<usize>,
    test: Vec<usize>,
    iteration: usize,
    history: Vec<IterationRecord>,
    prev_bounded_svs: Vec<usize>,
    classifier: Classifier,
    heuristic: HeuristicConfig,
    svm_params: Option<SvmParams>,
    /// Always set once construction succeeds.
    model: Option<Model>,
    accuracy: f64,
    amd: Option<(ViewPartition, ViewWeights)>,
    cache: GramCache,
    seed: u64,
}

impl ActiveState {
    /// Fits the initial model (tuning hyperparameters if requested).
    pub fn new(dataset: &Dataset, split: &Split, classifier: Classifier, heuristic: HeuristicConfig, seed_: u64) -> Result<Self, EngineError> {
        Self::with_oracle(dataset, split, classifier, heuristic, Oracle::new(dataset), seed_)
    }

    pub fn with_oracle(
        dataset: &Dataset,
        split: &Split,
        classifier: Classifier,
        heuristic: HeuristicConfig,
        oracle: Oracle,
        seed_: u64,
    ) -> Result<Self, EngineError> {
        check_compatible(&classifier, &heuristic)?;
        if heuristic.subset_factor == 0 {
            return Err(EngineError::InvalidConfig("subset factor must be at least 1".into()));
        }
        let data = dataset.rescaled(&split.scaling);
        let universe = split.training_universe();
        let cache = GramCache::new(data.features(), &universe);
        let mut known = vec![None; data.len()];
        for &i in &split.labeled_idx {
            known[i] = Some(dataset.labels()[i]);
        }
        let amd = if heuristic.id == HeuristicId::Amd {
            let views = match heuristic.views {
                ViewMode::Contiguous(v) => ViewPartition::contiguous(data.dim(), v.min(data.dim())),
                ViewMode::Correlation { views, threshold } => {
                    ViewPartition::correlation_blocks(&data.features().select_rows(&universe), views.min(data.dim()), threshold)
                }
            }
            .map_err(|e| EngineError::InvalidConfig(e.to_string()))?;
            let weights = ViewWeights::uniform(data.n_classes(), views.len());
            Some((views, weights))
        } else {
            None
        };
        let mut labeled = split.labeled_idx.clone();
        labeled.sort_unstable();
        let mut pool = split.pool_idx.clone();
        pool.sort_unstable();
        let mut state = Self {
            data,
            oracle,
            known,
            labeled,
            pool,
            test: split.test_idx.clone(),
            iteration: 0,
            history: Vec::new(),
            prev_bounded_svs: Vec::new(),
            classifier,
            heuristic,
            svm_params: None,
            model: None,
            accuracy: 0.0,
            amd,
            cache,
            seed: seed_,
        };
        let params = state.tuned_params(&state.labeled.clone(), true)?;
        let model = state.fit(&state.labeled.clone(), params)?;
        state.accuracy = state.test_accuracy(&model);
        state.prev_bounded_svs = state.bounded_svs(&model, &state.labeled);
        state.svm_params = params;
        state.model = Some(model);
        Ok(state)
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn labeled(&self) -> &[usize] {
        &self.labeled
    }

    pub fn pool(&self) -> &[usize] {
        &self.pool
    }

    pub fn test(&self) -> &[usize] {
        &self.test
    }

    pub fn history(&self) -> &[IterationRecord] {
        &self.history
    }

    pub fn model(&self) -> &Model {
        self.model.as_ref().expect("model fitted at construction")
    }

    /// Test accuracy of the current model.
    pub fn accuracy(&self) -> f64 {
        self.accuracy
    }

    pub fn svm_params(&self) -> Option<&SvmParams> {
        self.svm_params.as_ref()
    }

    /// Dataset indices of the bounded support vectors of the current model.
    pub fn prev_bounded_svs(&self) -> &[usize] {
        &self.prev_bounded_svs
    }

    pub fn amd_weights(&self) -> Option<&ViewWeights> {
        self.amd.as_ref().map(|(_, w)| w)
    }

    fn labels_of(&self, idx: &[usize]) -> Vec<usize> {
        idx.iter().map(|&i| self.known[i].expect("training row without a label")).collect()
    }

    fn learner(&self, params: Option<SvmParams>) -> Learner {
        match &self.classifier {
            Classifier::Svm(_) => Learner::Svm {
                params: params.expect("svm parameters resolved"),
                calibrate: matches!(self.heuristic.id, HeuristicId::Bt | HeuristicId::KlMax),
            },
            Classifier::Lda { shrinkage } => Learner::Lda { shrinkage: *shrinkage },
        }
    }

    /// Hyperparameters for a fit on `idx`; searched again when `due`.
    fn tuned_params(&mut self, idx: &[usize], due: bool) -> Result<Option<SvmParams>, EngineError> {
        let cv = match &self.classifier {
            Classifier::Lda { .. } => return Ok(None),
            Classifier::Svm(SvmTuning::Fixed(p)) => return Ok(Some(*p)),
            Classifier::Svm(SvmTuning::CrossValidated(cv)) => cv.clone(),
        };
        if !due {
            return Ok(self.svm_params);
        }
        let x = self.data.features().select_rows(idx);
        let y = self.labels_of(idx);
        tune(&x, &y, self.data.n_classes(), &cv, &mut self.cache, idx, seed::mix(self.seed, stream::CV)).map(Some)
    }

    fn fit(&mut self, idx: &[usize], params: Option<SvmParams>) -> Result<Model, EngineError> {
        let learner = self.learner(params);
        let x = self.data.features().select_rows(idx);
        let y = self.labels_of(idx);
        let n = self.data.n_classes();
        let platt_seed = seed::mix(self.seed, stream::PLATT);
        Ok(match params {
            Some(p) => {
                let gram = self.cache.sub_gram(&p.kernel, idx);
                learner.fit_with_gram(&x, &y, n, platt_seed, &gram)?
            }
            None => learner.fit(&x, &y, n, platt_seed)?,
        })
    }

    fn test_accuracy(&self, model: &Model) -> f64 {
        let y: Vec<usize> = self.test.iter().map(|&i| self.data.labels()[i]).collect();
        model.accuracy(&self.data.features().select_rows(&self.test), &y)
    }

    fn bounded_svs(&self, model: &Model, idx: &[usize]) -> Vec<usize> {
        match model.as_svm() {
            Some(svm) if self.heuristic.track_bounded_svs => svm.bounded_positions().into_iter().map(|p| idx[p]).collect(),
            _ => Vec::new(),
        }
    }

    /// Runs one iteration with batch size `q` (clipped to the pool). The state
    /// is left untouched when anything fails.
    pub fn run_iteration(&mut self, q: usize) -> Result<&IterationRecord, EngineError> {
        if self.pool.is_empty() {
            return Err(EngineError::EmptyPool);
        }
        if q == 0 {
            return Err(EngineError::InvalidConfig("batch size must be at least 1".into()));
        }
        let start = Instant::now();
        let q = q.min(self.pool.len());
        let iteration = self.iteration + 1;
        let hseed = seed::mix(seed::mix(self.seed, stream::HEURISTIC), iteration as u64);
        let (positions, view_predictions) = self
            .select(q, hseed)
            .map_err(|source| EngineError::Heuristic { iteration, source })?;
        let selected: Vec<usize> = positions.iter().map(|&p| self.pool[p]).collect();
        let answers: Vec<usize> = selected.iter().map(|&i| self.oracle.label(i)).collect();

        let mut labeled = self.labeled.clone();
        labeled.extend(&selected);
        labeled.sort_unstable();
        let mut taken = vec![false; self.pool.len()];
        positions.iter().for_each(|&p| taken[p] = true);
        let pool: Vec<usize> = self.pool.iter().zip(&taken).filter(|(_, &t)| !t).map(|(&i, _)| i).collect();

        let previous: Vec<Option<usize>> = selected.iter().map(|&i| self.known[i]).collect();
        for (&i, &y) in selected.iter().zip(&answers) {
            self.known[i] = Some(y);
        }
        let refit_every = match &self.classifier {
            Classifier::Svm(SvmTuning::CrossValidated(cv)) => cv.refit_every.max(1),
            _ => usize::MAX,
        };
        let due = iteration.is_multiple_of(refit_every) || pool.is_empty();
        let fitted = self
            .tuned_params(&labeled, due)
            .and_then(|params| Ok((params, self.fit(&labeled, params)?)));
        let (params, model) = match fitted {
            Ok(v) => v,
            Err(e) => {
                for (&i, prev) in selected.iter().zip(previous) {
                    self.known[i] = prev;
                }
                return Err(e);
            }
        };

        if let (Some(preds), Some((_, weights))) = (view_predictions, self.amd.as_mut()) {
            let chosen: Vec<Vec<usize>> = positions.iter().map(|&p| preds[p].clone()).collect();
            *weights = heuristics::update_amd_weights(weights, &answers, &chosen);
        }
        self.accuracy = self.test_accuracy(&model);
        self.prev_bounded_svs = self.bounded_svs(&model, &labeled);
        self.labeled = labeled;
        self.pool = pool;
        self.svm_params = params;
        self.model = Some(model);
        self.iteration = iteration;
        self.history.push(IterationRecord {
            selected,
            labels_used: self.labeled.len(),
            accuracy: self.accuracy,
            elapsed: start.elapsed(),
        });
        Ok(self.history.last().expect("just pushed"))
    }

    /// Pool positions of the next batch, plus per-view predictions for AMD.
    #[allow(clippy::type_complexity)]
    fn select(&self, q: usize, hseed: u64) -> Result<(Vec<usize>, Option<Vec<Vec<usize>>>), HeuristicError> {
        let h = &self.heuristic;
        let pool_x = self.data.features().select_rows(&self.pool);
        let x = self.data.features().select_rows(&self.labeled);
        let y = self.labels_of(&self.labeled);
        let n = self.data.n_classes();
        let subset = h.subset_factor * q;
        let learner = self.learner(self.svm_params);
        let svm = || self.model().as_svm().ok_or_else(|| HeuristicError::InvalidParameter("heuristic needs an SVM".into()));

        let batch = match h.id {
            HeuristicId::Random => heuristics::select_random(self.pool.len(), q, hseed)?,
            HeuristicId::Ms => heuristics::score_ms(svm()?, &pool_x).top(q),
            HeuristicId::Mclu => heuristics::multiclass_uncertainty(svm()?, &pool_x)?.top(q),
            HeuristicId::Ssc => match heuristics::select_ssc(svm()?, &x, &pool_x, q, hseed) {
                Err(HeuristicError::SscDegenerate) => {
                    log::info!("SSC undefined on this labeled set; using MS");
                    heuristics::score_ms(svm()?, &pool_x).top(q)
                }
                other => other?,
            },
            HeuristicId::Mao => heuristics::select_mao(svm()?, &pool_x, q, subset)?,
            HeuristicId::MncluAbd => heuristics::select_mclu_abd(svm()?, &pool_x, q, subset, h.lambda)?,
            HeuristicId::Csv => heuristics::select_csv(svm()?, &x, &pool_x, q, subset)?,
            HeuristicId::MncluEcbd => {
                heuristics::select_mclu_ecbd(svm()?, &pool_x, q, subset, seed::mix(hseed, stream::CLUSTER))?
            }
            HeuristicId::HmcsI => {
                let bsv = self.data.features().select_rows(&self.prev_bounded_svs);
                heuristics::select_hmcs_i(svm()?, &pool_x, q, subset, &bsv, seed::mix(hseed, stream::CLUSTER))?
            }
            HeuristicId::Neqb => {
                let bag_seed = seed::mix(hseed, stream::BAGS);
                let committee = match h.committee {
                    Some((k_members, bag_fraction)) => CommitteeConfig {
                        k_members,
                        bag_fraction,
                        seed: bag_seed,
                    },
                    None => CommitteeConfig::for_learner(&learner, bag_seed),
                };
                heuristics::score_neqb(&x, &y, n, &pool_x, &committee, &learner)?.top(q)
            }
            HeuristicId::Amd => {
                let (views, weights) = self.amd.as_ref().expect("views built for AMD");
                let out = heuristics::score_amd(&x, &y, n, &pool_x, views, weights, &learner, hseed)?;
                return Ok((out.scores.top(q), Some(out.predictions)));
            }
            HeuristicId::KlMax => {
                heuristics::score_kl_max(&x, &y, n, &pool_x, &learner, h.allow_svm_kl_max, seed::mix(self.seed, stream::PLATT))?
                    .top(q)
            }
            HeuristicId::Bt => {
                let post = pool_x.rows().map(|r| self.model().posterior(r)).collect::<Result<Vec<_>, _>>()?;
                heuristics::score_bt(&post)?.top(q)
            }
        };
        Ok((batch, None))
    }
}

fn check_compatible(classifier: &Classifier, h: &HeuristicConfig) -> Result<(), EngineError> {
    if h.id.requires_svm() && !classifier.is_svm() {
        return Err(EngineError::Incompatible(format!("{} needs the SVM classifier", h.id)));
    }
    if h.id == HeuristicId::KlMax && classifier.is_svm() && !h.allow_svm_kl_max {
        return Err(EngineError::Incompatible(
            "kl-max retrains the model once per candidate; use lda or allow svm explicitly".into(),
        ));
    }
    if !(0.0..=1.0).contains(&h.lambda) {
        return Err(EngineError::InvalidConfig(format!("lambda {} outside [0, 1]", h.lambda)));
    }
    Ok(())
}

/// Cross-validated hyperparameters on rows `idx`. Falls back to an RBF of
/// width `1/d` and `C = 10` when the labeled set is too small for two folds.
fn tune(
    x: &Matrix,
    y: &[usize],
    n_classes: usize,
    cv: &CvConfig,
    cache: &mut GramCache,
    idx: &[usize],
    seed_: u64,
) -> Result<SvmParams, EngineError> {
    let kernels = cv.kernel_grid.resolve(x.ncols());
    let out = cross_validate_with(x, y, n_classes, &kernels, &cv.c_grid, cv.folds, seed_, cv.tol, |k| {
        cache.sub_gram(k, idx)
    });
    match out {
        Ok(best) => Ok(SvmParams {
            tol: cv.tol,
            ..SvmParams::new(best.kernel, best.c)
        }),
        Err(ModelError::TooFewSamples { .. }) => {
            log::warn!("too few labels per class for cross-validation; using default hyperparameters");
            let gamma = 1.0 / x.ncols().max(1) as f64;
            Ok(SvmParams {
                tol: cv.tol,
                ..SvmParams::new(Kernel::Rbf { gamma }, 10.0)
            })
        }
        Err(e) => Err(e.into()),
    }
}

/// The upper-bound reference: the classifier fit on the whole training
/// universe (labeled set plus pool) of a split. Returns the model and its
/// test accuracy. Uses the same seeds as the loop, so a loop that exhausts
/// its pool ends with exactly this model.
pub fn standard_model(dataset: &Dataset, split: &Split, classifier: &Classifier, seed_: u64) -> Result<(Model, f64), EngineError> {
    let data = dataset.rescaled(&split.scaling);
    let universe = split.training_universe();
    let mut cache = GramCache::new(data.features(), &universe);
    let x = data.features().select_rows(&universe);
    let y: Vec<usize> = universe.iter().map(|&i| data.labels()[i]).collect();
    let n = data.n_classes();
    let model = match classifier {
        Classifier::Lda { shrinkage } => Learner::Lda { shrinkage: *shrinkage }.fit(&x, &y, n, 0)?,
        Classifier::Svm(tuning) => {
            let params = match tuning {
                SvmTuning::Fixed(p) => *p,
                SvmTuning::CrossValidated(cv) => tune(&x, &y, n, cv, &mut cache, &universe, seed::mix(seed_, stream::CV))?,
            };
            let gram = cache.sub_gram(&params.kernel, &universe);
            Learner::Svm { params, calibrate: false }.fit_with_gram(&x, &y, n, 0, &gram)?
        }
    };
    let ty: Vec<usize> = split.test_idx.iter().map(|&i| data.labels()[i]).collect();
    let acc = model.accuracy(&data.features().select_rows(&split.test_idx), &ty);
    Ok((model, acc))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub labels_used: usize,
    pub accuracy: f64,
}

/// One trial's learning curve. `failure` is set when an iteration failed;
/// the points up to that iteration are kept.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialCurve {
    pub points: Vec<CurvePoint>,
    pub selected: Vec<Vec<usize>>,
    pub failure: Option<EngineError>,
}

impl TrialCurve {
    pub fn is_complete(&self) -> bool {
        self.failure.is_none()
    }
}

/// Runs the loop until the stopping rule or pool exhaustion, recording test
/// accuracy before the first query and after every iteration.
pub fn run_curve(
    dataset: &Dataset,
    split: &Split,
    classifier: &Classifier,
    heuristic: &HeuristicConfig,
    q: usize,
    stopping: &StoppingRule,
    seed_: u64,
) -> Result<TrialCurve, EngineError> {
    run_curve_with_oracle(dataset, split, classifier, heuristic, q, stopping, Oracle::new(dataset), seed_)
}

/// [`run_curve`] with a custom oracle.
#[allow(clippy::too_many_arguments)]
pub fn run_curve_with_oracle(
    dataset: &Dataset,
    split: &Split,
    classifier: &Classifier,
    heuristic: &HeuristicConfig,
    q: usize,
    stopping: &StoppingRule,
    oracle: Oracle,
    seed_: u64,
) -> Result<TrialCurve, EngineError> {
    if q == 0 {
        return Err(EngineError::InvalidConfig("batch size must be at least 1".into()));
    }
    let mut state = ActiveState::with_oracle(dataset, split, classifier.clone(), heuristic.clone(), oracle, seed_)?;
    let initial = state.labeled.len();
    let mut curve = TrialCurve {
        points: vec![CurvePoint {
            labels_used: initial,
            accuracy: state.accuracy,
        }],
        selected: Vec::new(),
        failure: None,
    };
    loop {
        let batch = stopping.next_batch(q, state.iteration, state.labeled.len() - initial, state.pool.len());
        if batch == 0 {
            break;
        }
        match state.run_iteration(batch) {
            Ok(rec) => {
                curve.points.push(CurvePoint {
                    labels_used: rec.labels_used,
                    accuracy: rec.accuracy,
                });
                curve.selected.push(rec.selected.clone());
            }
            Err(e) => {
                log::warn!("trial stopped early: {e}");
                curve.failure = Some(e);
                break;
            }
        }
    }
    Ok(curve)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_three_class_toy, stratified_split};

    fn setup() -> (Dataset, Split) {
        let ds = generate_three_class_toy(60, 5).unwrap();
        let split = stratified_split(&ds, 5, 60, 6).unwrap();
        (ds, split)
    }

    fn fixed_svm() -> Classifier {
        Classifier::Svm(SvmTuning::Fixed(SvmParams::new(Kernel::rbf(0.5).unwrap(), 10.0)))
    }

    fn invariants(state: &ActiveState, n_pool: usize, n_init: usize) {
        let mut all: Vec<usize> = state.labeled().iter().chain(state.pool()).copied().collect();
        let before = all.len();
        all.sort_unstable();
        all.dedup();
        assert_eq!(all.len(), before, "labeled and pool overlap");
        assert_eq!(state.labeled().len() + state.pool().len(), n_pool + n_init);
    }

    #[test]
    fn iteration_moves_batch() {
        let (ds, split) = setup();
        let mut s = ActiveState::new(&ds, &split, fixed_svm(), HeuristicConfig::new(HeuristicId::Ms), 1).unwrap();
        let rec = s.run_iteration(5).unwrap().clone();
        assert_eq!(rec.selected.len(), 5);
        assert_eq!(s.pool().len(), 55);
        assert_eq!(s.labeled().len(), 20);
        invariants(&s, 60, 15);
        assert!(rec.selected.iter().all(|i| split.pool_idx.contains(i)));
    }

    #[test]
    fn oversized_batch_takes_rest() {
        let ds = generate_three_class_toy(30, 5).unwrap();
        let split = stratified_split(&ds, 5, 7, 6).unwrap();
        let curve = run_curve(&ds, &split, &fixed_svm(), &HeuristicConfig::new(HeuristicId::Ms), 10, &StoppingRule::default(), 2).unwrap();
        assert_eq!(curve.points.len(), 2);
        assert_eq!(curve.points[1].labels_used, 22);
        assert!(curve.is_complete());
    }

    #[test]
    fn deterministic() {
        let (ds, split) = setup();
        for id in [HeuristicId::Random, HeuristicId::MncluEcbd, HeuristicId::Neqb] {
            let h = HeuristicConfig::new(id);
            let a = run_curve(&ds, &split, &fixed_svm(), &h, 6, &StoppingRule::iterations(3), 4).unwrap();
            let b = run_curve(&ds, &split, &fixed_svm(), &h, 6, &StoppingRule::iterations(3), 4).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn zero_iterations_and_budget() {
        let (ds, split) = setup();
        let h = HeuristicConfig::new(HeuristicId::Random);
        let c = run_curve(&ds, &split, &fixed_svm(), &h, 6, &StoppingRule::iterations(0), 4).unwrap();
        assert_eq!(c.points.len(), 1);
        let budget = StoppingRule {
            max_iterations: None,
            label_budget: Some(16),
        };
        let c = run_curve(&ds, &split, &fixed_svm(), &h, 6, &budget, 4).unwrap();
        let used: Vec<usize> = c.points.iter().map(|p| p.labels_used).collect();
        assert_eq!(used, vec![15, 21, 27, 31]);
    }

    #[test]
    fn exhaustion_matches_standard() {
        let (ds, split) = setup();
        let cls = Classifier::Svm(SvmTuning::CrossValidated(CvConfig::default()));
        let (_, standard) = standard_model(&ds, &split, &cls, 8).unwrap();
        let c = run_curve(&ds, &split, &cls, &HeuristicConfig::new(HeuristicId::Random), 20, &StoppingRule::default(), 8).unwrap();
        assert_eq!(c.points.last().unwrap().labels_used, 75);
        assert!((c.points.last().unwrap().accuracy - standard).abs() < 1e-12);
    }

    #[test]
    fn every_heuristic_runs() {
        let (ds, split) = setup();
        for id in HeuristicId::ALL {
            let cls = if id == HeuristicId::KlMax { Classifier::Lda { shrinkage: 0.1 } } else { fixed_svm() };
            let c = run_curve(&ds, &split, &cls, &HeuristicConfig::new(id), 6, &StoppingRule::iterations(2), 3).unwrap();
            assert!(c.is_complete(), "{id}: {:?}", c.failure);
            let mut seen: Vec<usize> = c.selected.concat();
            let n = seen.len();
            seen.sort_unstable();
            seen.dedup();
            assert_eq!(seen.len(), n, "{id} reselected a sample");
        }
    }

    #[test]
    fn incompatible_configs() {
        let (ds, split) = setup();
        let lda = Classifier::Lda { shrinkage: 0.1 };
        assert!(matches!(
            ActiveState::new(&ds, &split, lda, HeuristicConfig::new(HeuristicId::Mao), 0),
            Err(EngineError::Incompatible(_))
        ));
        assert!(matches!(
            ActiveState::new(&ds, &split, fixed_svm(), HeuristicConfig::new(HeuristicId::KlMax), 0),
            Err(EngineError::Incompatible(_))
        ));
    }

    #[test]
    fn amd_weights_stay_normalized() {
        let (ds, split) = setup();
        let lda = Classifier::Lda { shrinkage: 0.1 };
        let mut s = ActiveState::new(&ds, &split, lda, HeuristicConfig::new(HeuristicId::Amd), 0).unwrap();
        for _ in 0..3 {
            s.run_iteration(4).unwrap();
        }
        let w = s.amd_weights().unwrap();
        for v in 0..w.n_views() {
            let sum: f64 = (0..w.n_classes()).map(|c| w.get(v, c)).sum();
            assert!((sum - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn noisy_oracle() {
        let (ds, _) = setup();
        let clean = Oracle::new(&ds);
        assert!((0..ds.len()).all(|i| clean.label(i) == ds.labels()[i]));
        let noisy = Oracle::new(&ds).with_noise(1.0, 3);
        assert!((0..ds.len()).all(|i| noisy.label(i) != ds.labels()[i]));
    }
}
