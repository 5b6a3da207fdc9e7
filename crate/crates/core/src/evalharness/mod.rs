//! Evaluation: BLER Monte-Carlo, MI-vs-SNR sweeps, the correlated-Gaussian
//! benchmark, the γ-DIME value landscape, the gradient-check suite and CSV
//! export.

mod bench;
mod bler;
mod export;
mod landscape;
mod mi;
mod suite;

pub use bench::{default_gaussian_cases, run_gaussian_bench, BenchRow, GaussianCase};
pub use bler::{bpsk_error_rate, q_function, simulate_bler, BlerConfig, BlerPoint};
pub(crate) use export::writer as csv_writer;
pub use export::{
    export_results, write_bench_csv, write_bler_csv, write_landscape_csv, write_mi_csv,
};
pub use landscape::{
    default_d_grid, landscape_value, uniform_d_grid, value_landscape, LandscapeCurve,
};
pub use mi::{
    capacity_reference_bits, rayleigh_ergodic_capacity_bits, sweep_mi, LinkSampler, MiSweepPoint,
};
pub use suite::{gradcheck_suite, suite_estimators, SuiteEntry, SuiteReport, SUITE_TOLERANCE};

pub use crate::estimators::gaussian_mi_nats as gaussian_mi_oracle;

/// `-4, -2, .., 20` dB.
pub fn default_ebn0_grid() -> Vec<f64> {
    (0..=12).map(|k| -4.0 + 2.0 * k as f64).collect()
}
