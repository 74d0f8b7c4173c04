use std::fs::File;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use log::info;

use poolal::bench::{self, BatchSize, BenchError, DataSource, ExperimentConfig, SynthSpec};
use poolal::dataset::{self, DatasetError, LabelColumn};
use poolal::engine::{Classifier, CvConfig, EngineError, HeuristicConfig, StoppingRule, SvmTuning, ViewMode};
use poolal::heuristics::HeuristicId;
use poolal::kernels::Kernel;
use poolal::models::lda::DEFAULT_SHRINKAGE;
use poolal::models::SvmParams;

const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Parser)]
#[command(name = "poolal", version, about = "Pool-based active learning benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset as CSV.
    Synth {
        #[arg(long, value_enum)]
        kind: SynthKind,
        /// Samples per class.
        #[arg(long, default_value_t = 200)]
        n: usize,
        /// Outlier fraction for the contaminated mixture.
        #[arg(long, default_value_t = 0.1)]
        outliers: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run an active-learning experiment and write its curves.
    Run(Box<RunArgs>),
    /// Rank the curves of a finished run at a label budget.
    Compare {
        #[arg(long)]
        dir: PathBuf,
        /// Training set size to compare at; defaults to the largest common one.
        #[arg(long)]
        budget: Option<usize>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SynthKind {
    Toy3,
    Blobs,
    /// Alias of mixture5.
    Mixture,
    Mixture5,
    Mixture12,
}

#[derive(Clone, Copy, ValueEnum)]
enum ClassifierKind {
    Svm,
    Lda,
}

#[derive(clap::Args)]
struct RunArgs {
    /// CSV file with a header row.
    #[arg(long, conflicts_with = "synth", required_unless_present = "synth")]
    data: Option<PathBuf>,
    /// Generator spec, e.g. `toy3:n=200` or `mixture5:n=100,outliers=0.1`.
    #[arg(long)]
    synth: Option<SynthSpec>,
    /// Label column name, or `#<index>`.
    #[arg(long, default_value = "label")]
    label_col: String,
    #[arg(long, value_enum, default_value = "svm")]
    classifier: ClassifierKind,
    /// Comma-separated heuristic ids; random sampling is always added.
    #[arg(long, value_delimiter = ',', default_value = "ms")]
    heuristics: Vec<HeuristicId>,
    /// Batch size: n+5, n+20 or an integer.
    #[arg(long, default_value = "n+5")]
    q: BatchSize,
    #[arg(long, default_value_t = 10)]
    trials: usize,
    /// Iteration cap; unset runs until the pool (or budget) is exhausted.
    #[arg(long)]
    iters: Option<usize>,
    /// Cap on labels acquired from the pool.
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Initial labeled samples per class.
    #[arg(long, default_value_t = 5)]
    initial: usize,
    /// Pool size; the remaining samples form the test set.
    #[arg(long, default_value_t = 300)]
    pool: usize,
    /// Fixed RBF width (skips cross-validation; needs --c).
    #[arg(long, requires = "c")]
    gamma: Option<f64>,
    /// Fixed SVM penalty (skips cross-validation; needs --gamma).
    #[arg(long, requires = "gamma")]
    c: Option<f64>,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    /// Iterations between hyperparameter searches.
    #[arg(long, default_value_t = 10)]
    refit_every: usize,
    #[arg(long, default_value_t = DEFAULT_SHRINKAGE)]
    shrinkage: f64,
    /// Uncertainty weight of mclu-abd.
    #[arg(long, default_value_t = 0.6)]
    lambda: f64,
    /// Uncertain subset size as a multiple of q.
    #[arg(long, default_value_t = 3)]
    subset_factor: usize,
    /// Committee size for neqb.
    #[arg(long)]
    committee: Option<usize>,
    /// Bootstrap fraction for neqb.
    #[arg(long)]
    bag_fraction: Option<f64>,
    /// Number of AMD views.
    #[arg(long, default_value_t = 2)]
    views: usize,
    /// Build AMD views from feature correlations above this threshold.
    #[arg(long)]
    view_correlation: Option<f64>,
    /// Allow kl-max with the SVM classifier (slow).
    #[arg(long)]
    kl_max_svm: bool,
    /// Oracle label-noise rate.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<BenchError> for Failure {
    fn from(e: BenchError) -> Self {
        match &e {
            BenchError::Config(_)
            | BenchError::NoRandom
            | BenchError::OffGrid(_)
            | BenchError::Parse { .. }
            | BenchError::Engine(EngineError::Incompatible(_) | EngineError::InvalidConfig(_))
            | BenchError::Dataset(
                DatasetError::Io { .. }
                | DatasetError::Csv(_)
                | DatasetError::MissingLabelColumn(_)
                | DatasetError::NonNumeric { .. }
                | DatasetError::InsufficientSamples { .. }
                | DatasetError::SplitTooLarge { .. },
            ) => Failure::Config(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

fn label_column(s: &str) -> LabelColumn {
    match s.strip_prefix('#').and_then(|i| i.parse().ok()) {
        Some(i) => LabelColumn::Index(i),
        None => LabelColumn::Name(s.to_string()),
    }
}

fn experiment(args: RunArgs) -> Result<ExperimentConfig, Failure> {
    let source = match (args.data, args.synth) {
        (Some(path), None) => DataSource::Csv {
            path,
            label: label_column(&args.label_col),
        },
        (None, Some(spec)) => DataSource::Synth(spec),
        _ => return Err(Failure::Config("exactly one of --data and --synth is required".into())),
    };
    let classifier = match args.classifier {
        ClassifierKind::Lda => Classifier::Lda { shrinkage: args.shrinkage },
        ClassifierKind::Svm => match (args.gamma, args.c) {
            (Some(gamma), Some(c)) => {
                let kernel = Kernel::rbf(gamma).map_err(|e| Failure::Config(e.to_string()))?;
                Classifier::Svm(SvmTuning::Fixed(SvmParams::new(kernel, c)))
            }
            _ => Classifier::Svm(SvmTuning::CrossValidated(CvConfig {
                folds: args.folds,
                refit_every: args.refit_every,
                ..CvConfig::default()
            })),
        },
    };
    let committee = match (args.committee, args.bag_fraction) {
        (None, None) => None,
        (k, f) => {
            let default_k = if matches!(args.classifier, ClassifierKind::Svm) { 7 } else { 12 };
            let default_f = if matches!(args.classifier, ClassifierKind::Svm) { 0.75 } else { 0.85 };
            Some((k.unwrap_or(default_k), f.unwrap_or(default_f)))
        }
    };
    let views = match args.view_correlation {
        Some(threshold) => ViewMode::Correlation {
            views: args.views,
            threshold,
        },
        None => ViewMode::Contiguous(args.views),
    };
    let heuristics = args
        .heuristics
        .iter()
        .map(|&id| HeuristicConfig {
            subset_factor: args.subset_factor,
            lambda: args.lambda,
            committee,
            views,
            allow_svm_kl_max: args.kl_max_svm,
            ..HeuristicConfig::new(id)
        })
        .collect();
    Ok(ExperimentConfig {
        source,
        classifier,
        heuristics,
        q: args.q,
        trials: args.trials,
        stopping: StoppingRule {
            max_iterations: args.iters,
            label_budget: args.budget,
        },
        master_seed: args.seed,
        per_class_initial: args.initial,
        pool_size: args.pool,
        noise_rate: args.noise,
    })
}

fn synth(kind: SynthKind, n: usize, outliers: f64, seed: u64, out: PathBuf) -> Result<(), Failure> {
    let spec = match kind {
        SynthKind::Toy3 => SynthSpec::Toy3 { n_per_class: n },
        SynthKind::Blobs => SynthSpec::Blobs { n_per_class: n },
        SynthKind::Mixture | SynthKind::Mixture5 => SynthSpec::Mixture5 {
            n_per_class: n,
            outlier_fraction: outliers,
        },
        SynthKind::Mixture12 => SynthSpec::Mixture12 { n_per_class: n },
    };
    let ds = spec.generate(seed).map_err(|e| Failure::Config(e.to_string()))?;
    let file = File::create(&out).map_err(|e| Failure::Runtime(format!("{}: {e}", out.display())))?;
    dataset::write_csv(&ds, file).map_err(|e| Failure::Runtime(e.to_string()))?;
    info!("wrote {} samples to {}", ds.len(), out.display());
    Ok(())
}

fn run(args: RunArgs) -> Result<(), Failure> {
    let out = args.out.clone();
    let cfg = experiment(args)?;
    let result = bench::run_experiment(&cfg)?;
    bench::export(&cfg, &result, &out)?;
    for c in &result.curves {
        if let Some(last) = c.points.last() {
            info!(
                "{:>10}: {} labels, accuracy {:.4} ± {:.4} over {} trials",
                c.heuristic, last.labels_used, last.mean_acc, last.std_acc, c.trials
            );
        }
    }
    if !result.failures.is_empty() {
        log::warn!("{} trial(s) failed; see config.txt", result.failures.len());
    }
    Ok(())
}

fn compare(dir: PathBuf, budget: Option<usize>) -> Result<(), Failure> {
    let curves = bench::load_curves(&dir)?;
    let budget = match budget {
        Some(b) => b,
        None => bench::common_budget(&curves).ok_or_else(|| Failure::Config("no curves with a common budget".into()))?,
    };
    let rows = bench::compare(&curves, budget)?;
    let mut stdout = io::stdout().lock();
    let table = bench::summary_csv(&rows);
    let _ = writeln!(stdout, "budget,{budget}");
    let _ = stdout.write_all(table.as_bytes());
    Ok(())
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(v) = std::env::var("AL_THREADS") else { return Ok(()) };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::Config(format!("AL_THREADS must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Runtime(e.to_string()))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let outcome = configure_threads().and_then(|()| match cli.command {
        Command::Synth {
            kind,
            n,
            outliers,
            seed,
            out,
        } => synth(kind, n, outliers, seed, out),
        Command::Run(args) => run(*args),
        Command::Compare { dir, budget } => compare(dir, budget),
    });
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}
