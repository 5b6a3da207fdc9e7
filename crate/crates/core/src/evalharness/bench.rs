use crate::error::{Error, Result};
use crate::estimators::{train_estimator, CorrelatedGaussian, EstimatorSpec};
use crate::exec::{map_indexed, Execution};
use crate::rng_from_seed;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussianCase {
    pub dim: usize,
    pub rho: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub estimator: String,
    pub dim: usize,
    pub rho: f64,
    pub oracle_nats: f64,
    pub estimate_nats: f64,
    pub abs_error: f64,
    pub seed: u64,
    pub failure: Option<String>,
}

/// Dimensions {1, 5, 10} crossed with ρ ∈ {0, 0.2, 0.5, 0.8}.
pub fn default_gaussian_cases() -> Vec<GaussianCase> {
    [1, 5, 10]
        .into_iter()
        .flat_map(|dim| {
            [0.0, 0.2, 0.5, 0.8]
                .into_iter()
                .map(move |rho| GaussianCase { dim, rho })
        })
        .collect()
}

/// Every estimator on every case. Unit `u` (case major, estimator minor)
/// draws from `seed + u`.
pub fn run_gaussian_bench(
    cases: &[GaussianCase],
    specs: &[EstimatorSpec],
    seed: u64,
    exec: Execution,
) -> Result<Vec<BenchRow>> {
    if cases.is_empty() || specs.is_empty() {
        return Err(Error::invalid(
            "bench",
            "needs at least one case and one estimator",
        ));
    }
    for s in specs {
        s.validate()?;
    }
    let samplers = cases
        .iter()
        .map(|c| CorrelatedGaussian::new(c.dim, c.rho))
        .collect::<Result<Vec<_>>>()?;
    let units: Vec<(usize, usize)> = (0..cases.len())
        .flat_map(|c| (0..specs.len()).map(move |e| (c, e)))
        .collect();
    map_indexed(&units, exec, |u, &(c, e)| {
        let unit_seed = seed.wrapping_add(u as u64);
        let mut sampler = samplers[c];
        let oracle = sampler.mutual_information();
        let (estimate, failure) =
            match train_estimator(&specs[e], &mut sampler, &mut rng_from_seed(unit_seed)) {
                Ok(t) => (t.trace.final_mi_nats, None),
                Err(err) if err.is_numerical() => (f64::NAN, Some(err.to_string())),
                Err(err) => return Err(err),
            };
        Ok(BenchRow {
            estimator: specs[e].kind.name(),
            dim: cases[c].dim,
            rho: cases[c].rho,
            oracle_nats: oracle,
            estimate_nats: estimate,
            abs_error: (estimate - oracle).abs(),
            seed: unit_seed,
            failure,
        })
    })
    .into_iter()
    .collect()
}
