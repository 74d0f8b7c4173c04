//! Repeated seeded trials, curve aggregation, comparison tables and CSV export.

use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;

use crate::dataset::{
    self, generate_five_class_contaminated, generate_separable_blobs, generate_three_class_toy, generate_twelve_class_overlapping,
    stratified_split, Dataset, DatasetError, LabelColumn, Split,
};
use crate::engine::{run_curve_with_oracle, standard_model, Classifier, CurvePoint, EngineError, HeuristicConfig, Oracle, StoppingRule, SvmTuning};
use crate::heuristics::HeuristicId;
use crate::seed::{self, stream};

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("trial curves have different labels_used grids")]
    Misaligned,
    #[error("budget {0} is not on every curve's grid")]
    OffGrid(usize),
    #[error("no random-sampling curve to compare against")]
    NoRandom,
    #[error("{0}")]
    Config(String),
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
}

/// Synthetic dataset generators, written `kind:n=<per class>[,outliers=<f>]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SynthSpec {
    /// Three overlapping 2-D Gaussian classes.
    Toy3 { n_per_class: usize },
    /// Three well separated 2-D Gaussian classes.
    Blobs { n_per_class: usize },
    /// Five 4-D classes with a fraction of wide-variance outliers.
    Mixture5 { n_per_class: usize, outlier_fraction: f64 },
    /// Twelve overlapping 8-D classes.
    Mixture12 { n_per_class: usize },
}

impl SynthSpec {
    pub fn generate(&self, seed_: u64) -> Result<Dataset, DatasetError> {
        match *self {
            SynthSpec::Toy3 { n_per_class } => generate_three_class_toy(n_per_class, seed_),
            SynthSpec::Blobs { n_per_class } => generate_separable_blobs(n_per_class, seed_),
            SynthSpec::Mixture5 {
                n_per_class,
                outlier_fraction,
            } => generate_five_class_contaminated(n_per_class, outlier_fraction, seed_),
            SynthSpec::Mixture12 { n_per_class } => generate_twelve_class_overlapping(n_per_class, seed_),
        }
    }
}

impl FromStr for SynthSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (kind, args) = s.split_once(':').unwrap_or((s, ""));
        let mut n = None;
        let mut outliers = 0.1;
        for kv in args.split(',').filter(|a| !a.is_empty()) {
            let (k, v) = kv.split_once('=').ok_or_else(|| format!("expected key=value, got {kv:?}"))?;
            match k {
                "n" => n = Some(v.parse::<usize>().map_err(|e| format!("n: {e}"))?),
                "outliers" => outliers = v.parse::<f64>().map_err(|e| format!("outliers: {e}"))?,
                _ => return Err(format!("unknown generator option {k:?}")),
            }
        }
        let n_per_class = n.unwrap_or(200);
        match kind {
            "toy3" => Ok(SynthSpec::Toy3 { n_per_class }),
            "blobs" => Ok(SynthSpec::Blobs { n_per_class }),
            "mixture5" => Ok(SynthSpec::Mixture5 {
                n_per_class,
                outlier_fraction: outliers,
            }),
            "mixture12" => Ok(SynthSpec::Mixture12 { n_per_class }),
            _ => Err(format!("unknown generator {kind:?} (toy3, blobs, mixture5, mixture12)")),
        }
    }
}

impl fmt::Display for SynthSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SynthSpec::Toy3 { n_per_class } => write!(f, "toy3:n={n_per_class}"),
            SynthSpec::Blobs { n_per_class } => write!(f, "blobs:n={n_per_class}"),
            SynthSpec::Mixture5 {
                n_per_class,
                outlier_fraction,
            } => write!(f, "mixture5:n={n_per_class},outliers={outlier_fraction}"),
            SynthSpec::Mixture12 { n_per_class } => write!(f, "mixture12:n={n_per_class}"),
        }
    }
}

/// Where samples come from. Synthetic data is regenerated for every trial.
#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Csv { path: PathBuf, label: LabelColumn },
    Synth(SynthSpec),
}

/// Batch size per iteration: `N+5`, `N+20` (N classes) or a fixed count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BatchSize {
    NPlus5,
    NPlus20,
    Fixed(usize),
}

impl BatchSize {
    pub fn resolve(&self, n_classes: usize) -> usize {
        match self {
            BatchSize::NPlus5 => n_classes + 5,
            BatchSize::NPlus20 => n_classes + 20,
            BatchSize::Fixed(q) => *q,
        }
    }
}

impl FromStr for BatchSize {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "n+5" | "N+5" => Ok(BatchSize::NPlus5),
            "n+20" | "N+20" => Ok(BatchSize::NPlus20),
            _ => match s.parse::<usize>() {
                Ok(q) if q > 0 => Ok(BatchSize::Fixed(q)),
                _ => Err(format!("batch size must be n+5, n+20 or a positive integer, got {s:?}")),
            },
        }
    }
}

impl fmt::Display for BatchSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BatchSize::NPlus5 => f.write_str("n+5"),
            BatchSize::NPlus20 => f.write_str("n+20"),
            BatchSize::Fixed(q) => write!(f, "{q}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub source: DataSource,
    pub classifier: Classifier,
    /// Random sampling is added as a baseline when absent.
    pub heuristics: Vec<HeuristicConfig>,
    pub q: BatchSize,
    pub trials: usize,
    pub stopping: StoppingRule,
    pub master_seed: u64,
    /// Initial labeled samples per class.
    pub per_class_initial: usize,
    pub pool_size: usize,
    /// Oracle label-noise rate; 0 is a perfect oracle.
    pub noise_rate: f64,
}

impl ExperimentConfig {
    fn validate(&self) -> Result<(), BenchError> {
        if self.trials == 0 {
            return Err(BenchError::Config("at least one trial is required".into()));
        }
        if !(0.0..1.0).contains(&self.noise_rate) {
            return Err(BenchError::Config(format!("noise rate {} outside [0, 1)", self.noise_rate)));
        }
        let mut ids: Vec<HeuristicId> = self.heuristics.iter().map(|h| h.id).collect();
        let n = ids.len();
        ids.sort();
        ids.dedup();
        if ids.len() != n {
            return Err(BenchError::Config("each heuristic may appear only once".into()));
        }
        Ok(())
    }

    /// Configured heuristics, with random sampling appended if missing.
    pub fn resolved_heuristics(&self) -> Vec<HeuristicConfig> {
        let mut hs = self.heuristics.clone();
        if !hs.iter().any(|h| h.id == HeuristicId::Random) {
            hs.push(HeuristicConfig::new(HeuristicId::Random));
        }
        hs
    }

    pub fn trial_seed(&self, trial: usize) -> u64 {
        seed::mix(self.master_seed, trial as u64)
    }
}

/// Pointwise mean and population standard deviation over trials.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveStat {
    pub labels_used: usize,
    pub mean_acc: f64,
    pub std_acc: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearningCurve {
    pub heuristic: String,
    pub points: Vec<CurveStat>,
    /// Trials that completed and entered the aggregate.
    pub trials: usize,
}

impl LearningCurve {
    pub fn at(&self, labels_used: usize) -> Option<&CurveStat> {
        self.points.iter().find(|p| p.labels_used == labels_used)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialFailure {
    pub heuristic: HeuristicId,
    pub trial: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub curves: Vec<LearningCurve>,
    /// Accuracy of the model trained on the whole labeled set plus pool.
    pub standard_mean: f64,
    pub standard_std: f64,
    pub failures: Vec<TrialFailure>,
    /// Batch size after resolving presets.
    pub q: usize,
    pub n_classes: usize,
}

/// Pointwise mean and population std of aligned trial histories.
pub fn aggregate(histories: &[Vec<CurvePoint>]) -> Result<Vec<CurveStat>, BenchError> {
    let first = histories.first().ok_or(BenchError::Misaligned)?;
    for h in histories {
        if h.len() != first.len() || h.iter().zip(first).any(|(a, b)| a.labels_used != b.labels_used) {
            return Err(BenchError::Misaligned);
        }
    }
    let k = histories.len() as f64;
    Ok((0..first.len())
        .map(|i| {
            let mean = histories.iter().map(|h| h[i].accuracy).sum::<f64>() / k;
            let var = histories.iter().map(|h| (h[i].accuracy - mean).powi(2)).sum::<f64>() / k;
            CurveStat {
                labels_used: first[i].labels_used,
                mean_acc: mean,
                std_acc: var.sqrt(),
            }
        })
        .collect())
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn trial_data(cfg: &ExperimentConfig, base: Option<&Dataset>, trial: usize) -> Result<(Dataset, Split), BenchError> {
    let ts = cfg.trial_seed(trial);
    let ds = match (&cfg.source, base) {
        (DataSource::Synth(spec), _) => spec.generate(seed::mix(ts, stream::DATA))?,
        (DataSource::Csv { .. }, Some(ds)) => ds.clone(),
        (DataSource::Csv { .. }, None) => unreachable!("csv loaded before trials"),
    };
    let split = stratified_split(&ds, cfg.per_class_initial, cfg.pool_size, seed::mix(ts, stream::SPLIT))?;
    Ok((ds, split))
}

/// Runs every heuristic (plus random sampling) on `trials` seeded trials.
/// Trials share their dataset, split and cross-validation seed across
/// heuristics. Trials and heuristics run in parallel; the result does not
/// depend on the number of worker threads.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult, BenchError> {
    cfg.validate()?;
    let base = match &cfg.source {
        DataSource::Csv { path, label } => Some(dataset::load_csv(path, label)?.0),
        DataSource::Synth(_) => None,
    };
    let data: Vec<(Dataset, Split)> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| trial_data(cfg, base.as_ref(), t))
        .collect::<Result<_, _>>()?;
    let n_classes = data[0].0.n_classes();
    let q = cfg.q.resolve(n_classes);
    if q == 0 {
        return Err(BenchError::Config("batch size must be at least 1".into()));
    }
    if matches!(cfg.classifier, Classifier::Lda { .. }) {
        log::info!("LDA is a linear classifier; nonlinear class boundaries will limit its accuracy");
    }

    let standards: Vec<f64> = data
        .par_iter()
        .enumerate()
        .map(|(t, (ds, split))| standard_model(ds, split, &cfg.classifier, cfg.trial_seed(t)).map(|(_, acc)| acc))
        .collect::<Result<_, _>>()?;
    let (standard_mean, standard_std) = mean_std(&standards);

    let heuristics = cfg.resolved_heuristics();
    let tasks: Vec<(usize, usize)> = (0..heuristics.len()).flat_map(|h| (0..cfg.trials).map(move |t| (h, t))).collect();
    let runs: Vec<Result<Vec<CurvePoint>, String>> = tasks
        .par_iter()
        .map(|&(h, t)| {
            let (ds, split) = &data[t];
            let ts = cfg.trial_seed(t);
            let mut oracle = Oracle::new(ds);
            if cfg.noise_rate > 0.0 {
                oracle = oracle.with_noise(cfg.noise_rate, seed::mix(ts, stream::NOISE));
            }
            match run_curve_with_oracle(ds, split, &cfg.classifier, &heuristics[h], q, &cfg.stopping, oracle, ts) {
                Ok(c) if c.is_complete() => Ok(c.points),
                Ok(c) => Err(c.failure.map(|e| e.to_string()).unwrap_or_default()),
                Err(e) => Err(e.to_string()),
            }
        })
        .collect();

    let mut curves = Vec::with_capacity(heuristics.len());
    let mut failures = Vec::new();
    for (h, cfg_h) in heuristics.iter().enumerate() {
        let mut done = Vec::new();
        for t in 0..cfg.trials {
            match &runs[h * cfg.trials + t] {
                Ok(points) => done.push(points.clone()),
                Err(message) => {
                    log::warn!("{} trial {t} failed: {message}", cfg_h.id);
                    failures.push(TrialFailure {
                        heuristic: cfg_h.id,
                        trial: t,
                        message: message.clone(),
                    });
                }
            }
        }
        let points = if done.is_empty() { Vec::new() } else { aggregate(&done)? };
        curves.push(LearningCurve {
            heuristic: cfg_h.id.to_string(),
            points,
            trials: done.len(),
        });
    }
    Ok(ExperimentResult {
        curves,
        standard_mean,
        standard_std,
        failures,
        q,
        n_classes,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub heuristic: String,
    pub mean_acc: f64,
    pub std_acc: f64,
    /// Mean accuracy minus that of random sampling at the same budget.
    pub diff_vs_random: f64,
}

/// Accuracy of every curve at `budget` labels, best first (ties by name).
pub fn compare(curves: &[LearningCurve], budget: usize) -> Result<Vec<ComparisonRow>, BenchError> {
    let random = curves
        .iter()
        .find(|c| c.heuristic == HeuristicId::Random.as_str())
        .ok_or(BenchError::NoRandom)?
        .at(budget)
        .ok_or(BenchError::OffGrid(budget))?
        .mean_acc;
    let mut rows = curves
        .iter()
        .map(|c| {
            let p = c.at(budget).ok_or(BenchError::OffGrid(budget))?;
            Ok(ComparisonRow {
                heuristic: c.heuristic.clone(),
                mean_acc: p.mean_acc,
                std_acc: p.std_acc,
                diff_vs_random: p.mean_acc - random,
            })
        })
        .collect::<Result<Vec<_>, BenchError>>()?;
    rows.sort_by(|a, b| b.mean_acc.total_cmp(&a.mean_acc).then_with(|| a.heuristic.cmp(&b.heuristic)));
    Ok(rows)
}

/// Largest `labels_used` present on every non-empty curve.
pub fn common_budget(curves: &[LearningCurve]) -> Option<usize> {
    let mut grids = curves.iter().filter(|c| !c.points.is_empty());
    let first = grids.next()?;
    let others: Vec<&LearningCurve> = grids.collect();
    first
        .points
        .iter()
        .rev()
        .map(|p| p.labels_used)
        .find(|&b| others.iter().all(|c| c.at(b).is_some()))
}

pub const CURVE_HEADER: &str = "labels_used,mean_acc,std_acc";
pub const SUMMARY_HEADER: &str = "heuristic,mean_acc,std_acc,diff_vs_random";

pub fn curve_csv(curve: &LearningCurve) -> String {
    let mut s = format!("{CURVE_HEADER}\n");
    for p in &curve.points {
        let _ = writeln!(s, "{},{},{}", p.labels_used, p.mean_acc, p.std_acc);
    }
    s
}

pub fn parse_curve_csv(heuristic: &str, text: &str) -> Result<LearningCurve, String> {
    let mut lines = text.lines();
    if lines.next() != Some(CURVE_HEADER) {
        return Err(format!("expected header {CURVE_HEADER:?}"));
    }
    let points = lines
        .filter(|l| !l.is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 3 {
                return Err(format!("bad row {l:?}"));
            }
            Ok(CurveStat {
                labels_used: f[0].parse().map_err(|e| format!("{l:?}: {e}"))?,
                mean_acc: f[1].parse().map_err(|e| format!("{l:?}: {e}"))?,
                std_acc: f[2].parse().map_err(|e| format!("{l:?}: {e}"))?,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(LearningCurve {
        heuristic: heuristic.to_string(),
        points,
        trials: 0,
    })
}

pub fn summary_csv(rows: &[ComparisonRow]) -> String {
    let mut s = format!("{SUMMARY_HEADER}\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{},{}", r.heuristic, r.mean_acc, r.std_acc, r.diff_vs_random);
    }
    s
}

fn config_echo(cfg: &ExperimentConfig, result: &ExperimentResult) -> String {
    let mut s = String::new();
    let source = match &cfg.source {
        DataSource::Csv { path, label } => format!("csv {} label={label}", path.display()),
        DataSource::Synth(spec) => format!("synth {spec}"),
    };
    let _ = writeln!(s, "source = {source}");
    match &cfg.classifier {
        Classifier::Lda { shrinkage } => {
            let _ = writeln!(s, "classifier = lda shrinkage={shrinkage}");
        }
        Classifier::Svm(SvmTuning::Fixed(p)) => {
            let _ = writeln!(s, "classifier = svm kernel={} c={} tol={}", p.kernel, p.c, p.tol);
        }
        Classifier::Svm(SvmTuning::CrossValidated(cv)) => {
            let cs: Vec<String> = cv.c_grid.iter().map(|c| c.to_string()).collect();
            let _ = writeln!(
                s,
                "classifier = svm cv folds={} refit_every={} tol={} kernels=[{}] c=[{}]",
                cv.folds,
                cv.refit_every,
                cv.tol,
                cv.kernel_grid,
                cs.join(" ")
            );
        }
    }
    for h in cfg.resolved_heuristics() {
        let committee = h.committee.map_or("default".to_string(), |(k, f)| format!("{k}x{f}"));
        let _ = writeln!(
            s,
            "heuristic = {} subset_factor={} lambda={} committee={} views={:?} kl_max_svm={}",
            h.id, h.subset_factor, h.lambda, committee, h.views, h.allow_svm_kl_max
        );
    }
    let _ = writeln!(s, "q = {} (resolved {} for {} classes)", cfg.q, result.q, result.n_classes);
    let _ = writeln!(s, "per_class_initial = {}", cfg.per_class_initial);
    let _ = writeln!(s, "pool_size = {}", cfg.pool_size);
    let _ = writeln!(
        s,
        "stopping = max_iterations={:?} label_budget={:?}",
        cfg.stopping.max_iterations, cfg.stopping.label_budget
    );
    let _ = writeln!(s, "noise_rate = {}", cfg.noise_rate);
    let _ = writeln!(s, "master_seed = {}", cfg.master_seed);
    for t in 0..cfg.trials {
        let _ = writeln!(s, "trial {t} seed = {}", cfg.trial_seed(t));
    }
    let _ = writeln!(s, "standard_mean_acc = {}", result.standard_mean);
    let _ = writeln!(s, "standard_std_acc = {}", result.standard_std);
    for c in &result.curves {
        let _ = writeln!(s, "completed_trials {} = {}", c.heuristic, c.trials);
    }
    for f in &result.failures {
        let _ = writeln!(s, "failure {} trial {} = {}", f.heuristic, f.trial, f.message);
    }
    s
}

/// Writes `curve_<id>.csv` per heuristic, `summary.csv` (comparison at the
/// largest common budget) and `config.txt` into `dir`.
pub fn export(cfg: &ExperimentConfig, result: &ExperimentResult, dir: &Path) -> Result<(), BenchError> {
    fs::create_dir_all(dir)?;
    for c in &result.curves {
        fs::write(dir.join(format!("curve_{}.csv", c.heuristic)), curve_csv(c))?;
    }
    let rows = match common_budget(&result.curves) {
        Some(b) => compare(&result.curves, b)?,
        None => Vec::new(),
    };
    fs::write(dir.join("summary.csv"), summary_csv(&rows))?;
    fs::write(dir.join("config.txt"), config_echo(cfg, result))?;
    Ok(())
}

/// Reads every `curve_<id>.csv` in `dir`, sorted by id.
pub fn load_curves(dir: &Path) -> Result<Vec<LearningCurve>, BenchError> {
    let mut curves = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else { continue };
        let Some(id) = name.strip_prefix("curve_").and_then(|n| n.strip_suffix(".csv")) else {
            continue;
        };
        let text = fs::read_to_string(&path)?;
        curves.push(parse_curve_csv(id, &text).map_err(|message| BenchError::Parse { path: path.clone(), message })?);
    }
    curves.sort_by(|a, b| a.heuristic.cmp(&b.heuristic));
    Ok(curves)
}
