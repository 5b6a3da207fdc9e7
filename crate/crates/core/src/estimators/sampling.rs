use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::diffcore::Tensor;
use crate::error::{Error, Result};

/// Uniformly random derangement of `0..len` (no index maps to itself).
pub fn derangement(len: usize, rng: &mut impl Rng) -> Result<Vec<usize>> {
    if len < 2 {
        return Err(Error::invalid(
            "batch",
            format!("a derangement needs at least 2 items, got {len}"),
        ));
    }
    let mut perm: Vec<usize> = (0..len).collect();
    // rejection: ~e shuffles on average
    loop {
        perm.shuffle(rng);
        if perm.iter().enumerate().all(|(i, &p)| i != p) {
            return Ok(perm);
        }
    }
}

/// `ys` rows re-ordered by a random derangement.
pub fn make_unpaired(ys: &Tensor, rng: &mut impl Rng) -> Result<Tensor> {
    let perm = derangement(ys.rows(), rng)?;
    Ok(gather_rows(ys, &perm))
}

pub(crate) fn gather_rows(t: &Tensor, index: &[usize]) -> Tensor {
    let c = t.cols();
    let mut data = Vec::with_capacity(index.len() * c);
    for &i in index {
        data.extend_from_slice(t.row(i));
    }
    Tensor::matrix(index.len(), c, data).expect("sized by construction")
}

/// Paired draws `(x_i, y_i)` from the joint. The product-of-marginals view
/// pairs `x_i` with `y_{π(i)}` for a derangement `π`.
#[derive(Clone, Debug)]
pub struct SampleBatch {
    pub xs: Tensor,
    pub ys: Tensor,
    pub unpaired_index: Vec<usize>,
}

impl SampleBatch {
    pub fn new(xs: Tensor, ys: Tensor, rng: &mut impl Rng) -> Result<Self> {
        if xs.rows() != ys.rows() {
            return Err(Error::Shape(format!(
                "{} xs vs {} ys",
                xs.rows(),
                ys.rows()
            )));
        }
        let unpaired_index = derangement(xs.rows(), rng)?;
        Ok(Self {
            xs,
            ys,
            unpaired_index,
        })
    }

    pub fn len(&self) -> usize {
        self.xs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.rows() == 0
    }

    pub fn unpaired_ys(&self) -> Tensor {
        gather_rows(&self.ys, &self.unpaired_index)
    }
}

/// Source of joint samples.
pub trait JointSampler {
    fn x_dim(&self) -> usize;
    fn y_dim(&self) -> usize;
    fn sample<R: Rng>(&mut self, batch: usize, rng: &mut R) -> Result<SampleBatch>;
}

/// `x ~ N(0, I_d)`, `y = ρ x + sqrt(1 − ρ²) z` componentwise.
#[derive(Clone, Copy, Debug)]
pub struct CorrelatedGaussian {
    pub dim: usize,
    pub rho: f64,
}

impl CorrelatedGaussian {
    pub fn new(dim: usize, rho: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("dim", "must be at least 1"));
        }
        if !(rho.abs() < 1.0) {
            return Err(Error::invalid("rho", "must satisfy |rho| < 1"));
        }
        Ok(Self { dim, rho })
    }

    /// Exact MI in nats.
    pub fn mutual_information(&self) -> f64 {
        gaussian_mi_nats(self.rho, self.dim).expect("validated at construction")
    }
}

impl JointSampler for CorrelatedGaussian {
    fn x_dim(&self) -> usize {
        self.dim
    }

    fn y_dim(&self) -> usize {
        self.dim
    }

    fn sample<R: Rng>(&mut self, batch: usize, rng: &mut R) -> Result<SampleBatch> {
        let n = batch * self.dim;
        let s = (1.0 - self.rho * self.rho).sqrt();
        let mut xs = Vec::with_capacity(n);
        let mut ys = Vec::with_capacity(n);
        for _ in 0..n {
            let x: f64 = rng.sample(StandardNormal);
            let z: f64 = rng.sample(StandardNormal);
            xs.push(x);
            ys.push(self.rho * x + s * z);
        }
        SampleBatch::new(
            Tensor::matrix(batch, self.dim, xs)?,
            Tensor::matrix(batch, self.dim, ys)?,
            rng,
        )
    }
}

/// `−(d/2) ln(1 − ρ²)`: MI of `d` independent pairs with correlation `ρ`.
pub fn gaussian_mi_nats(rho: f64, dims: usize) -> Result<f64> {
    if !(rho.abs() < 1.0) {
        return Err(Error::invalid("rho", "must satisfy |rho| < 1"));
    }
    Ok(-(dims as f64) / 2.0 * (1.0 - rho * rho).ln())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng_from_seed;

    #[test]
    fn two_items_swap() {
        let mut rng = rng_from_seed(0);
        assert_eq!(derangement(2, &mut rng).unwrap(), vec![1, 0]);
        let ys = Tensor::column(vec![10.0, 20.0]);
        assert_eq!(make_unpaired(&ys, &mut rng).unwrap().data(), &[20.0, 10.0]);
    }

    #[test]
    fn three_items_hit_both_derangements() {
        let mut rng = rng_from_seed(1);
        let mut seen = std::collections::BTreeSet::new();
        for _ in 0..200 {
            let p = derangement(3, &mut rng).unwrap();
            assert!(p.iter().enumerate().all(|(i, &v)| i != v));
            seen.insert(p);
        }
        let expected: std::collections::BTreeSet<Vec<usize>> =
            [vec![1, 2, 0], vec![2, 0, 1]].into_iter().collect();
        assert_eq!(seen, expected);
    }

    #[test]
    fn too_small_batches_fail() {
        let mut rng = rng_from_seed(0);
        assert!(derangement(1, &mut rng).is_err());
        assert!(derangement(0, &mut rng).is_err());
    }

    #[test]
    fn gaussian_oracle_values() {
        assert_eq!(gaussian_mi_nats(0.0, 7).unwrap(), 0.0);
        assert!((gaussian_mi_nats(0.8, 1).unwrap() - 0.510_825_6).abs() < 1e-6);
        assert!((gaussian_mi_nats(0.5, 10).unwrap() - 1.438_410_4).abs() < 1e-6);
        assert!(gaussian_mi_nats(1.0, 1).is_err());
        assert!(gaussian_mi_nats(-1.2, 1).is_err());
    }

    #[test]
    fn gaussian_sampler_correlation() {
        let mut rng = rng_from_seed(9);
        let mut s = CorrelatedGaussian::new(2, 0.6).unwrap();
        let b = s.sample(20_000, &mut rng).unwrap();
        let xy: f64 =
            b.xs.data()
                .iter()
                .zip(b.ys.data())
                .map(|(x, y)| x * y)
                .sum::<f64>()
                / 40_000.0;
        assert!((xy - 0.6).abs() < 0.02, "{xy}");
        assert!(b.unpaired_index.iter().enumerate().all(|(i, &p)| i != p));
    }
}
