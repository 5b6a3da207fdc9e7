use dime_core::autoencoder::{train_autoencoder, AeConfig, LinkSystem};
use dime_core::estimators::{train_estimator, CorrelatedGaussian, EstimatorKind, EstimatorSpec};
use dime_core::evalharness::{
    bpsk_error_rate, gaussian_mi_oracle, simulate_bler, sweep_mi, write_mi_csv, BlerConfig,
};
use dime_core::exec::Execution;
use dime_core::rng_from_seed;

#[test]
fn gaussian_oracle_values() {
    assert!(gaussian_mi_oracle(0.0, 1).unwrap().abs() < 1e-15);
    assert!((gaussian_mi_oracle(0.5, 1).unwrap() - 0.1438).abs() < 5e-5);
    assert!((gaussian_mi_oracle(0.8, 1).unwrap() - 0.5108).abs() < 5e-5);
    assert!((gaussian_mi_oracle(0.5, 10).unwrap() - 1.438).abs() < 5e-4);
}

#[test]
fn antipodal_reference_tracks_bpsk() {
    let sys = LinkSystem::antipodal_reference();
    let cfg = BlerConfig {
        min_errors: 400,
        max_blocks: 2_000_000,
        chunk: 50_000,
    };
    let pts = simulate_bler(&sys, &[0.0, 4.0], &cfg, 11, Execution::Sequential).unwrap();
    for p in pts {
        let expected = bpsk_error_rate(p.ebn0_db);
        let se = (expected * (1.0 - expected) / p.blocks as f64).sqrt();
        assert!((p.bler - expected).abs() <= 4.0 * se, "{p:?} vs {expected}");
    }
}

#[test]
fn execution_modes_give_identical_results() {
    let mut cfg = AeConfig::new(4, 2);
    cfg.iterations = 30;
    cfg.batch_size = 64;
    cfg.smoothing_window = 10;
    let (sys, _) = train_autoencoder(&cfg, &mut rng_from_seed(2)).unwrap();
    let bler_cfg = BlerConfig {
        min_errors: 50,
        max_blocks: 20_000,
        chunk: 5_000,
    };
    let grid = [0.0, 3.0, 6.0];
    assert_eq!(
        simulate_bler(&sys, &grid, &bler_cfg, 8, Execution::Sequential).unwrap(),
        simulate_bler(&sys, &grid, &bler_cfg, 8, Execution::Parallel).unwrap()
    );
    let specs = [EstimatorSpec {
        smoothing_window: 5,
        ..EstimatorSpec::new(EstimatorKind::gamma(1.0))
            .with_iterations(10)
            .with_batch_size(32)
    }];
    let seq = sweep_mi(&sys, &specs, &grid, 3, Execution::Sequential).unwrap();
    let par = sweep_mi(&sys, &specs, &grid, 3, Execution::Parallel).unwrap();
    let (mut a, mut b) = (Vec::new(), Vec::new());
    write_mi_csv(&seq, &mut a).unwrap();
    write_mi_csv(&par, &mut b).unwrap();
    assert_eq!(a, b);
}

#[test]
fn short_gamma_run_moves_toward_oracle() {
    let mut sampler = CorrelatedGaussian::new(1, 0.8).unwrap();
    let spec = EstimatorSpec {
        smoothing_window: 100,
        ..EstimatorSpec::new(EstimatorKind::gamma(1.0))
            .with_iterations(400)
            .with_batch_size(256)
    };
    let trained = train_estimator(&spec, &mut sampler, &mut rng_from_seed(5)).unwrap();
    let est = trained.trace.final_mi_nats;
    assert!(est > 0.3 && est < 0.6, "{est}");
    let mut csv = Vec::new();
    trained.trace.write_csv(&mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert!(text.starts_with("iter,value,mi_nats,mi_bits,clip_events\n"));
    assert!(!text.contains('\r'));
}
