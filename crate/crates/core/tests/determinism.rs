use wigner_lss::harness::{run_experiment, EnsembleChoice, ExperimentConfig, ExperimentKind, Report, TestFunctionSpec};
use wigner_lss::ensembles::EntryKind;
use wigner_lss::ClosedForm;

fn strip_clock(mut r: Report) -> Report {
    r.wall_clock_seconds = 0.0;
    r
}

fn configs() -> Vec<ExperimentConfig> {
    vec![
        ExperimentConfig {
            ensemble: EnsembleChoice::Wigner,
            entry: Some(EntryKind::Laplace),
            test_function: Some(TestFunctionSpec::Closed(ClosedForm::poly(&[0.0, 1.0, 1.0]))),
            ..ExperimentConfig::new(ExperimentKind::Clt, 30, 200, 17)
        },
        ExperimentConfig {
            sizes: Some(vec![20, 40, 80]),
            ..ExperimentConfig::new(ExperimentKind::CountingVariance, 20, 300, 4)
        },
        ExperimentConfig {
            energies: Some(vec![-0.5, 0.5]),
            etas: Some(vec![0.3]),
            ..ExperimentConfig::new(ExperimentKind::CovarianceGrid, 40, 200, 9)
        },
        ExperimentConfig {
            time: Some(0.2),
            dt: Some(5e-3),
            ..ExperimentConfig::new(ExperimentKind::Homogenization, 30, 4, 2)
        },
    ]
}

#[test]
fn same_seed_gives_identical_reports() {
    for cfg in configs() {
        let a = strip_clock(run_experiment(&cfg).unwrap());
        let b = strip_clock(run_experiment(&cfg).unwrap());
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap(),
            "{}",
            cfg.kind
        );
    }
}

#[test]
fn thread_count_does_not_change_results() {
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
    for cfg in configs() {
        let a = strip_clock(one.install(|| run_experiment(&cfg)).unwrap());
        let b = strip_clock(four.install(|| run_experiment(&cfg)).unwrap());
        assert_eq!(a, b, "{}", cfg.kind);
    }
}

#[test]
fn different_seeds_give_different_samples() {
    let cfg = &configs()[0];
    let other = ExperimentConfig { seed: cfg.seed + 1, ..cfg.clone() };
    let a = run_experiment(cfg).unwrap();
    let b = run_experiment(&other).unwrap();
    assert_ne!(a.metrics[0].empirical, b.metrics[0].empirical);
}
