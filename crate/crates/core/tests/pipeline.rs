use ldp_pate::bayesian::{run_chain, GibbsConfig, Observed};
use ldp_pate::frequentist::{estimate_custom_dm, estimate_custom_ipw, estimate_naive, estimate_ols};
use ldp_pate::mechanisms::{privatize_custom_a, privatize_custom_b, privatize_joint};
use ldp_pate::simulation::{generate_dataset, run_grid, true_pate, DgpConfig, Estimator, Grid, GridCell};
use ldp_pate::{derive_stream, PrivacyBudget, Scenario};

fn data(n: usize, seed: u64) -> ldp_pate::RawDataset {
    let cfg = DgpConfig { n, ..DgpConfig::default() };
    generate_dataset(&cfg, &derive_stream(seed, 0)).unwrap().dataset
}

#[test]
fn weak_privacy_recovers_the_effect() {
    let d = data(20_000, 1);
    let tau = true_pate();
    let rng = derive_stream(1, 1);

    let budget = PrivacyBudget::joint_with_covariates(300.0, 300.0, 300.0).unwrap();
    let joint = privatize_joint(&d, &budget, &rng).unwrap();
    let naive = estimate_naive(&joint, 0.5, 300.0, 0.05).unwrap();
    let ols = estimate_ols(&joint, 0.5, 300.0, 0.05).unwrap();
    assert!((naive.estimate - tau).abs() < 0.02, "naive {}", naive.estimate);
    assert!((ols.estimate - tau).abs() < 0.01, "ols {}", ols.estimate);
    assert!(ols.std_error < naive.std_error);

    let a = privatize_custom_a(&d, 300.0, &rng).unwrap();
    let ipw = estimate_custom_ipw(&a, 0.05).unwrap();
    assert!(ipw.ci_lower <= tau && tau <= ipw.ci_upper, "{ipw:?}");

    let b = privatize_custom_b(&d, 100.0, 100.0, 100.0, &rng).unwrap();
    let dm = estimate_custom_dm(&b, 0.05).unwrap();
    assert!(dm.ci_lower <= tau && tau <= dm.ci_upper, "{dm:?}");
}

#[test]
fn chain_is_reproducible() {
    let d = data(200, 2);
    let rel = privatize_custom_a(&d, 2.0, &derive_stream(2, 1)).unwrap();
    let obs = Observed::CustomA { records: &rel, p: 0.5, eps_a: 2.0 };
    let cfg = GibbsConfig { iterations: 60, burn_in: 30, seed: 9, ..GibbsConfig::default() };
    let a = run_chain(&obs, &cfg).unwrap();
    let b = run_chain(&obs, &cfg).unwrap();
    assert_eq!(a.draws, b.draws);
    assert_eq!(a.draws.len(), 30);
    let other = run_chain(&obs, &GibbsConfig { seed: 10, ..cfg }).unwrap();
    assert_ne!(a.draws, other.draws);
}

#[test]
fn grid_rows_follow_cells_and_ignore_thread_count() {
    let cells = vec![
        GridCell::equal_split(Scenario::Joint, Estimator::Naive, 3.0, 300, 6).unwrap(),
        GridCell::equal_split(Scenario::CustomB, Estimator::CustomDm, 3.0, 300, 6).unwrap(),
        GridCell::equal_split(Scenario::JointWithCovariates, Estimator::Ols, 3.0, 300, 6).unwrap(),
    ];
    let grid = Grid::new(cells);
    let run = |t: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .unwrap()
            .install(|| run_grid(&grid, 5).unwrap())
    };
    let one = run(1);
    let four = run(4);
    assert_eq!(one.len(), 3);
    assert_eq!(one[1].estimator, Estimator::CustomDm);
    for (x, y) in one.iter().zip(&four) {
        assert_eq!(x.mse.to_bits(), y.mse.to_bits());
        assert_eq!(x.coverage.to_bits(), y.coverage.to_bits());
    }
}
