use robust_bands::band::BudgetRule;
use robust_bands::simulators::{simulate_var, RandomSource, VarModel};
use robust_bands::solver::SolveOptions;
use robust_bands::tuner::{kfold_partition, tune_gamma, TunerConfig};

fn config(warm_start: bool) -> TunerConfig {
    TunerConfig {
        folds: 2,
        max_iterations: 8,
        seed: 3,
        options: SolveOptions::exact(),
        warm_start,
    }
}

#[test]
fn tuning_is_reproducible() {
    let set = simulate_var(&VarModel::default(), 120, RandomSource::new(21)).unwrap();
    let rule = BudgetRule::default();
    let a = tune_gamma(&set, 0.1, &config(false), &rule).unwrap();
    let b = tune_gamma(&set, 0.1, &config(false), &rule).unwrap();
    assert_eq!(a.gamma_hat, b.gamma_hat);
    assert_eq!(a.trace, b.trace);
    assert_eq!(a.band().upper(), b.band().upper());
    assert_eq!(a.trace.len(), 8);
    assert!(a.gamma_hat > 0.0 && a.gamma_hat < 1.0);
    assert_eq!(a.band().gamma(), Some(a.gamma_hat));
}

#[test]
fn warm_starts_leave_results_unchanged_at_zero_gap() {
    let rule = BudgetRule::SampleEnvelope { margin: 0.3 };
    for seed in [1, 2, 3] {
        let set = simulate_var(&VarModel::default(), 100, RandomSource::new(seed)).unwrap();
        let cold = tune_gamma(&set, 0.1, &config(false), &rule).unwrap();
        let warm = tune_gamma(&set, 0.1, &config(true), &rule).unwrap();
        for ((gc, fc), (gw, fw)) in cold.trace.iter().zip(&warm.trace) {
            assert_eq!(gc, gw);
            assert!((fc - fw).abs() < 1e-12, "seed {seed}: f {fc} vs {fw} at gamma {gc}");
        }
        assert!((cold.solve.objective - warm.solve.objective).abs() <= 1e-9);
    }
}

#[test]
fn held_out_folds_are_fixed_by_seed() {
    assert_eq!(kfold_partition(200, 4, 9).unwrap(), kfold_partition(200, 4, 9).unwrap());
    assert_ne!(kfold_partition(200, 4, 9).unwrap(), kfold_partition(200, 4, 10).unwrap());
}

#[test]
fn too_few_paths_for_folds_is_an_error() {
    let set = simulate_var(&VarModel::default(), 3, RandomSource::new(1)).unwrap();
    let cfg = TunerConfig {
        folds: 4,
        ..config(false)
    };
    assert!(tune_gamma(&set, 0.1, &cfg, &BudgetRule::default()).is_err());
}
