use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::pool::{SamplePool, SelectionBatch};
use crate::seed;

/// Task performance of a model trained on `pool.labeled() ∪ hypothetical`.
///
/// Implementations read only the labeled set from `pool`, never its
/// features, and must be deterministic in `(labeled, hypothetical, seed)`
/// with values in `[0, 1]`.
pub trait PerformanceOracle: Send + Sync {
    fn evaluate(&self, pool: &SamplePool, hypothetical: &SelectionBatch, seed: u64) -> Result<f64>;
}

impl<T: PerformanceOracle + ?Sized> PerformanceOracle for &T {
    fn evaluate(&self, pool: &SamplePool, hypothetical: &SelectionBatch, seed: u64) -> Result<f64> {
        (**self).evaluate(pool, hypothetical, seed)
    }
}

/// Adds seeded Gaussian noise to another oracle and clamps to `[0, 1]`.
#[derive(Debug, Clone)]
pub struct NoisyOracle<O> {
    pub inner: O,
    pub sigma: f64,
}

impl<O: PerformanceOracle> PerformanceOracle for NoisyOracle<O> {
    fn evaluate(&self, pool: &SamplePool, hypothetical: &SelectionBatch, seed: u64) -> Result<f64> {
        let clean = self.inner.evaluate(pool, hypothetical, seed)?;
        if self.sigma == 0.0 {
            return Ok(clean);
        }
        let normal = Normal::new(0.0, self.sigma).map_err(|e| Error::Config(format!("noise sigma: {e}")))?;
        let mut rng = seed::rng(seed, &[seed::tag("oracle-noise")]);
        Ok((clean + normal.sample(&mut rng)).clamp(0.0, 1.0))
    }
}
