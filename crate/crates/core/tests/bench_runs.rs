use poolal::bench::{self, BatchSize, DataSource, ExperimentConfig, SynthSpec};
use poolal::engine::{Classifier, HeuristicConfig, StoppingRule, SvmTuning};
use poolal::heuristics::HeuristicId;
use poolal::kernels::Kernel;
use poolal::models::SvmParams;

fn config(spec: SynthSpec, heuristics: &[HeuristicId], trials: usize, stopping: StoppingRule) -> ExperimentConfig {
    ExperimentConfig {
        source: DataSource::Synth(spec),
        classifier: Classifier::Svm(SvmTuning::Fixed(SvmParams::new(Kernel::rbf(0.5).unwrap(), 10.0))),
        heuristics: heuristics.iter().map(|&id| HeuristicConfig::new(id)).collect(),
        q: BatchSize::NPlus5,
        trials,
        stopping,
        master_seed: 42,
        per_class_initial: 3,
        pool_size: 64,
        noise_rate: 0.0,
    }
}

#[test]
fn random_curve_meets_standard_at_exhaustion() {
    let cfg = config(SynthSpec::Toy3 { n_per_class: 40 }, &[], 3, StoppingRule::default());
    let result = bench::run_experiment(&cfg).unwrap();
    let random = &result.curves[0];
    assert_eq!(random.heuristic, "random");
    let last = random.points.last().unwrap();
    assert_eq!(last.labels_used, 9 + 64);
    assert!((last.mean_acc - result.standard_mean).abs() <= 1e-12);
}

#[test]
fn curves_are_well_formed_and_bounded() {
    let cfg = config(SynthSpec::Toy3 { n_per_class: 40 }, &[HeuristicId::Ms, HeuristicId::Bt], 4, StoppingRule::iterations(5));
    let result = bench::run_experiment(&cfg).unwrap();
    assert_eq!(result.curves.len(), 3);
    for c in &result.curves {
        assert_eq!(c.trials, 4);
        for w in c.points.windows(2) {
            assert!(w[0].labels_used < w[1].labels_used);
        }
        for p in &c.points {
            assert!((0.0..=1.0).contains(&p.mean_acc) && p.std_acc >= 0.0);
            // Population std of values in [0,1] never exceeds 0.5.
            assert!(p.std_acc <= 0.5);
        }
    }
}

#[test]
fn single_trial_has_zero_spread() {
    let cfg = config(SynthSpec::Blobs { n_per_class: 30 }, &[HeuristicId::Ms], 1, StoppingRule::iterations(3));
    let result = bench::run_experiment(&cfg).unwrap();
    assert!(result.curves.iter().flat_map(|c| &c.points).all(|p| p.std_acc == 0.0));
}

#[test]
fn export_round_trips_and_is_reproducible() {
    let cfg = config(SynthSpec::Toy3 { n_per_class: 30 }, &[HeuristicId::Ms, HeuristicId::MncluAbd], 2, StoppingRule::iterations(3));
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let result = bench::run_experiment(&cfg).unwrap();
    bench::export(&cfg, &result, a.path()).unwrap();
    bench::export(&cfg, &bench::run_experiment(&cfg).unwrap(), b.path()).unwrap();

    let loaded = bench::load_curves(a.path()).unwrap();
    let mut expected = result.curves.clone();
    expected.sort_by(|x, y| x.heuristic.cmp(&y.heuristic));
    assert_eq!(loaded.len(), expected.len());
    for (l, e) in loaded.iter().zip(&expected) {
        assert_eq!(l.heuristic, e.heuristic);
        assert_eq!(l.points, e.points);
    }
    let header = std::fs::read_to_string(a.path().join("curve_ms.csv")).unwrap();
    assert!(header.starts_with("labels_used,mean_acc,std_acc\n"));
    for name in ["curve_ms.csv", "curve_mclu-abd.csv", "curve_random.csv", "summary.csv", "config.txt"] {
        assert_eq!(std::fs::read(a.path().join(name)).unwrap(), std::fs::read(b.path().join(name)).unwrap(), "{name}");
    }
}

#[test]
fn margin_sampling_beats_random_on_separable_toy() {
    let cfg = config(
        SynthSpec::Blobs { n_per_class: 60 },
        &[HeuristicId::Ms],
        6,
        StoppingRule {
            max_iterations: None,
            label_budget: Some(32),
        },
    );
    let result = bench::run_experiment(&cfg).unwrap();
    let rows = bench::compare(&result.curves, 9 + 32).unwrap();
    let ms = rows.iter().find(|r| r.heuristic == "ms").unwrap();
    assert!(ms.diff_vs_random >= 0.0, "{rows:?}");
    for c in &result.curves {
        for p in &c.points {
            assert!(p.mean_acc <= result.standard_mean + 0.02, "{} at {}", c.heuristic, p.labels_used);
        }
    }
}
