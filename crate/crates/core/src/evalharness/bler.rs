use rand::Rng;

use crate::autoencoder::LinkSystem;
use crate::channel::ChannelModel;
use crate::error::{Error, Result};
use crate::estimators::gather_rows;
use crate::exec::{map_indexed, Execution};
use crate::rng_from_seed;

/// Stop a grid point after `min_errors` block errors or `max_blocks`
/// blocks, whichever comes first.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BlerConfig {
    pub min_errors: u64,
    pub max_blocks: u64,
    /// Blocks decoded per batch.
    pub chunk: usize,
}

impl Default for BlerConfig {
    fn default() -> Self {
        Self {
            min_errors: 100,
            max_blocks: 1_000_000,
            chunk: 10_000,
        }
    }
}

impl BlerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_errors == 0 {
            return Err(Error::invalid("min_errors", "must be at least 1"));
        }
        if self.max_blocks == 0 {
            return Err(Error::invalid("max_blocks", "must be at least 1"));
        }
        if self.chunk == 0 {
            return Err(Error::invalid("chunk", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlerPoint {
    pub ebn0_db: f64,
    pub blocks: u64,
    pub errors: u64,
    pub bler: f64,
    pub seed: u64,
}

impl BlerPoint {
    /// Binomial standard error `sqrt(p (1 − p) / blocks)` at the observed rate.
    pub fn standard_error(&self) -> f64 {
        (self.bler * (1.0 - self.bler) / self.blocks as f64).sqrt()
    }
}

/// Monte-Carlo block error rate per Eb/N0 point. Point `i` draws from
/// `seed + i`, so results do not depend on `exec`.
pub fn simulate_bler(
    sys: &LinkSystem,
    ebn0_grid: &[f64],
    cfg: &BlerConfig,
    seed: u64,
    exec: Execution,
) -> Result<Vec<BlerPoint>> {
    cfg.validate()?;
    if ebn0_grid.is_empty() {
        return Err(Error::invalid("ebn0_db", "grid is empty"));
    }
    let codebook = sys.codebook()?;
    if codebook.rows() != sys.m || codebook.cols() != 2 * sys.n {
        return Err(Error::Shape(format!(
            "encoder emits {:?}, expected [{}, {}]",
            codebook.shape(),
            sys.m,
            2 * sys.n
        )));
    }
    map_indexed(ebn0_grid, exec, |i, &ebn0_db| {
        let point_seed = seed.wrapping_add(i as u64);
        let channel = ChannelModel::from_ebn0(sys.channel, ebn0_db, sys.rate_bits())?;
        let mut rng = rng_from_seed(point_seed);
        let (mut blocks, mut errors) = (0u64, 0u64);
        while errors < cfg.min_errors && blocks < cfg.max_blocks {
            let b = (cfg.max_blocks - blocks).min(cfg.chunk as u64) as usize;
            let messages: Vec<usize> = (0..b).map(|_| rng.random_range(0..sys.m)).collect();
            let x = gather_rows(&codebook, &messages);
            let y = channel.realize(b, x.cols(), &mut rng)?.apply(&x)?;
            let decoded = sys.decode(&y)?;
            errors += decoded
                .iter()
                .zip(&messages)
                .filter(|(d, s)| d != s)
                .count() as u64;
            blocks += b as u64;
        }
        Ok(BlerPoint {
            ebn0_db,
            blocks,
            errors,
            bler: errors as f64 / blocks as f64,
            seed: point_seed,
        })
    })
    .into_iter()
    .collect()
}

/// Gaussian tail `Q(x) = P(N(0, 1) > x)`.
pub fn q_function(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(x / std::f64::consts::SQRT_2)
}

/// Error rate of ideal antipodal signalling, `Q(sqrt(2 Eb/N0))`.
pub fn bpsk_error_rate(ebn0_db: f64) -> f64 {
    q_function((2.0 * 10f64.powf(ebn0_db / 10.0)).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_references() {
        assert!((q_function(0.0) - 0.5).abs() < 1e-15);
        assert!((q_function(1.959_963_985) - 0.025).abs() < 1e-9);
        let p7 = bpsk_error_rate(7.0);
        assert!((p7 - 7.727e-4).abs() < 1e-6, "{p7}");
    }

    #[test]
    fn stopping_rule_and_seeds() {
        let sys = LinkSystem::antipodal_reference();
        let cfg = BlerConfig {
            min_errors: 50,
            max_blocks: 20_000,
            chunk: 1000,
        };
        let pts = simulate_bler(&sys, &[0.0, 30.0], &cfg, 11, Execution::Sequential).unwrap();
        assert!(pts[0].errors >= 50 && pts[0].blocks < 20_000 && pts[0].blocks % 1000 == 0);
        assert_eq!((pts[1].errors, pts[1].blocks), (0, 20_000));
        assert_eq!((pts[0].seed, pts[1].seed), (11, 12));
        let par = simulate_bler(&sys, &[0.0, 30.0], &cfg, 11, Execution::Parallel).unwrap();
        assert_eq!(pts, par);
        assert!(simulate_bler(&sys, &[], &cfg, 0, Execution::Sequential).is_err());
    }
}
