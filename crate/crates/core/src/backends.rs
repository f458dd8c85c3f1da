//! Synthetic performance oracles with planted structure.
//!
//! A [`ClusterWorld`] hides cluster labels behind a pool of Gaussian blobs
//! and scores an annotated set by the test accuracy of a nearest-centroid
//! classifier fit on it. A [`CoverageWorld`] scores the fraction of the pool
//! lying within a radius of some annotated point. Worlds are regenerated
//! from their config, never stored point by point.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracle::{NoisyOracle, PerformanceOracle};
use crate::pool::{euclidean, FeatureVector, SampleId, SamplePool, SelectionBatch};
use crate::seed;

const MAX_CENTROID_ATTEMPTS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterConfig {
    pub clusters: usize,
    pub per_cluster: usize,
    pub dim: usize,
    pub spread: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct ClusterWorld {
    pub config: ClusterConfig,
    pub pool: SamplePool,
    labels: Vec<usize>,
    test_features: Vec<FeatureVector>,
    test_labels: Vec<usize>,
    pub centroids: Vec<FeatureVector>,
}

fn gaussian_point<R: Rng + ?Sized>(center: &[f64], spread: f64, rng: &mut R) -> FeatureVector {
    FeatureVector(
        center
            .iter()
            .map(|&c| {
                let z: f64 = StandardNormal.sample(rng);
                c + spread * z
            })
            .collect(),
    )
}

/// Draws well-separated centroids in `[-1, 1]^dim` and Gaussian pool and
/// test points around them. Pool ids are shuffled so id order carries no
/// cluster information.
pub fn generate_cluster_pool(config: &ClusterConfig) -> Result<ClusterWorld> {
    let &ClusterConfig { clusters, per_cluster, dim, spread, seed: world_seed } = config;
    if clusters < 2 {
        return Err(Error::Config(format!("need at least 2 clusters, got {clusters}")));
    }
    if !(spread > 0.0 && spread.is_finite()) {
        return Err(Error::Config(format!("cluster spread must be positive, got {spread}")));
    }
    if per_cluster == 0 || dim == 0 {
        return Err(Error::Config("cluster size and dimension must be positive".into()));
    }
    let mut rng = seed::rng(world_seed, &[seed::tag("cluster-world")]);
    let min_sep = 4.0 * spread;
    let mut centroids: Vec<FeatureVector> = Vec::with_capacity(clusters);
    while centroids.len() < clusters {
        let mut attempts = 0;
        loop {
            let cand = FeatureVector((0..dim).map(|_| rng.random_range(-1.0..=1.0)).collect());
            if centroids.iter().all(|c| c.distance(&cand) >= min_sep) {
                centroids.push(cand);
                break;
            }
            attempts += 1;
            if attempts >= MAX_CENTROID_ATTEMPTS {
                return Err(Error::CentroidSeparation(min_sep));
            }
        }
    }

    let mut pool: Vec<(FeatureVector, usize)> = Vec::with_capacity(clusters * per_cluster);
    for (k, c) in centroids.iter().enumerate() {
        for _ in 0..per_cluster {
            pool.push((gaussian_point(c.as_slice(), spread, &mut rng), k));
        }
    }
    pool.shuffle(&mut rng);
    let mut test_features = Vec::with_capacity(clusters * per_cluster);
    let mut test_labels = Vec::with_capacity(clusters * per_cluster);
    for (k, c) in centroids.iter().enumerate() {
        for _ in 0..per_cluster {
            test_features.push(gaussian_point(c.as_slice(), spread, &mut rng));
            test_labels.push(k);
        }
    }
    let (features, labels): (Vec<_>, Vec<_>) = pool.into_iter().unzip();
    Ok(ClusterWorld {
        config: config.clone(),
        pool: SamplePool::new(features)?,
        labels,
        test_features,
        test_labels,
        centroids,
    })
}

fn annotated(labeled: impl Iterator<Item = SampleId>, hypothetical: &[SampleId]) -> Vec<SampleId> {
    let mut ids: Vec<SampleId> = labeled.chain(hypothetical.iter().copied()).collect();
    ids.sort_unstable();
    ids.dedup();
    ids
}

impl ClusterWorld {
    pub fn num_classes(&self) -> usize {
        self.config.clusters
    }

    pub fn test_len(&self) -> usize {
        self.test_labels.len()
    }

    /// Per-class means of the annotated samples; `None` for absent classes.
    fn class_means(&self, ids: &[SampleId]) -> Vec<Option<Vec<f64>>> {
        let dim = self.pool.dim();
        let mut sums = vec![vec![0.0; dim]; self.num_classes()];
        let mut counts = vec![0usize; self.num_classes()];
        for &id in ids {
            let k = self.labels[id];
            counts[k] += 1;
            for (s, v) in sums[k].iter_mut().zip(self.pool.feature(id).as_slice()) {
                *s += v;
            }
        }
        sums.into_iter()
            .zip(counts)
            .map(|(s, n)| (n > 0).then(|| s.into_iter().map(|v| v / n as f64).collect()))
            .collect()
    }

    /// Test accuracy of a nearest-centroid classifier fit on
    /// `labeled ∪ hypothetical`. With nothing annotated, chance level `1/C`.
    pub fn cluster_oracle(&self, labeled: &[SampleId], hypothetical: &[SampleId]) -> f64 {
        let ids = annotated(labeled.iter().copied(), hypothetical);
        if ids.is_empty() {
            return 1.0 / self.num_classes() as f64;
        }
        let means = self.class_means(&ids);
        let correct = self
            .test_features
            .iter()
            .zip(&self.test_labels)
            .filter(|(x, &y)| nearest_class(&means, x.as_slice()) == Some(y))
            .count();
        correct as f64 / self.test_len() as f64
    }

    /// Softmax over negative distances to the labeled class means; classes
    /// with no labeled sample get probability 0.
    pub fn predictive_distribution(&self, labeled: &[SampleId], id: SampleId) -> Result<Vec<f64>> {
        if labeled.is_empty() {
            return Err(Error::Probe("predictive distribution needs at least one labeled sample".into()));
        }
        if id >= self.pool.len() {
            return Err(Error::IdOutOfRange(id, self.pool.len()));
        }
        let means = self.class_means(&annotated(labeled.iter().copied(), &[]));
        let x = self.pool.feature(id).as_slice();
        let dists: Vec<Option<f64>> = means.iter().map(|m| m.as_ref().map(|m| euclidean(m, x))).collect();
        Ok(softmax_neg(&dists))
    }

    pub fn hidden_label(&self, id: SampleId) -> usize {
        self.labels[id]
    }
}

/// Softmax of `-d` over present entries; absent entries get 0.
pub(crate) fn softmax_neg(dists: &[Option<f64>]) -> Vec<f64> {
    let min = dists.iter().flatten().copied().fold(f64::INFINITY, f64::min);
    let weights: Vec<f64> = dists.iter().map(|d| d.map_or(0.0, |d| (min - d).exp())).collect();
    let total: f64 = weights.iter().sum();
    weights.into_iter().map(|w| w / total).collect()
}

fn nearest_class(means: &[Option<Vec<f64>>], x: &[f64]) -> Option<usize> {
    means
        .iter()
        .enumerate()
        .filter_map(|(k, m)| m.as_ref().map(|m| (k, euclidean(m, x))))
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
        .map(|(k, _)| k)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageConfig {
    pub size: usize,
    pub dim: usize,
    pub radius: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct CoverageWorld {
    pub config: CoverageConfig,
    pub pool: SamplePool,
}

/// Uniform points in the unit cube.
pub fn generate_coverage_pool(config: &CoverageConfig) -> Result<CoverageWorld> {
    if !(config.radius > 0.0 && config.radius.is_finite()) {
        return Err(Error::Config(format!("coverage radius must be positive, got {}", config.radius)));
    }
    if config.size == 0 || config.dim == 0 {
        return Err(Error::Config("coverage pool size and dimension must be positive".into()));
    }
    let mut rng = seed::rng(config.seed, &[seed::tag("coverage-world")]);
    let features =
        (0..config.size).map(|_| FeatureVector((0..config.dim).map(|_| rng.random::<f64>()).collect())).collect();
    Ok(CoverageWorld { config: config.clone(), pool: SamplePool::new(features)? })
}

impl CoverageWorld {
    pub fn from_pool(pool: SamplePool, radius: f64) -> Self {
        let config = CoverageConfig { size: pool.len(), dim: pool.dim(), radius, seed: 0 };
        Self { config, pool }
    }

    /// Fraction of pool points within `radius` of an annotated point.
    pub fn coverage_oracle(&self, labeled: &[SampleId], hypothetical: &[SampleId]) -> f64 {
        let ids = annotated(labeled.iter().copied(), hypothetical);
        let r = self.config.radius;
        let covered = self
            .pool
            .features()
            .iter()
            .filter(|x| ids.iter().any(|&id| x.distance(self.pool.feature(id)) <= r))
            .count();
        covered as f64 / self.pool.len() as f64
    }
}

fn check_same_world(world: &SamplePool, pool: &SamplePool) -> Result<()> {
    if world.len() != pool.len() {
        return Err(Error::SizeMismatch(pool.len(), world.len()));
    }
    Ok(())
}

impl PerformanceOracle for ClusterWorld {
    fn evaluate(&self, pool: &SamplePool, hypothetical: &SelectionBatch, _seed: u64) -> Result<f64> {
        check_same_world(&self.pool, pool)?;
        hypothetical.check_unlabeled(pool)?;
        let labeled: Vec<SampleId> = pool.labeled().iter().copied().collect();
        Ok(self.cluster_oracle(&labeled, hypothetical.ids()))
    }
}

impl PerformanceOracle for CoverageWorld {
    fn evaluate(&self, pool: &SamplePool, hypothetical: &SelectionBatch, _seed: u64) -> Result<f64> {
        check_same_world(&self.pool, pool)?;
        hypothetical.check_unlabeled(pool)?;
        let labeled: Vec<SampleId> = pool.labeled().iter().copied().collect();
        Ok(self.coverage_oracle(&labeled, hypothetical.ids()))
    }
}

/// Class-probability probe used by uncertainty baselines.
pub trait ClassProbe: Send + Sync {
    fn predictive_distribution(&self, pool: &SamplePool, id: SampleId) -> Result<Vec<f64>>;
}

impl ClassProbe for ClusterWorld {
    fn predictive_distribution(&self, pool: &SamplePool, id: SampleId) -> Result<Vec<f64>> {
        check_same_world(&self.pool, pool)?;
        let labeled: Vec<SampleId> = pool.labeled().iter().copied().collect();
        ClusterWorld::predictive_distribution(self, &labeled, id)
    }
}

/// Serializable recipe for a world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum WorldSpec {
    Cluster(ClusterConfig),
    Coverage(CoverageConfig),
}

impl WorldSpec {
    pub fn generate(&self) -> Result<World> {
        match self {
            WorldSpec::Cluster(c) => generate_cluster_pool(c).map(World::Cluster),
            WorldSpec::Coverage(c) => generate_coverage_pool(c).map(World::Coverage),
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        let mut s = self.clone();
        match &mut s {
            WorldSpec::Cluster(c) => c.seed = seed,
            WorldSpec::Coverage(c) => c.seed = seed,
        }
        s
    }

    pub fn pool_size(&self) -> usize {
        match self {
            WorldSpec::Cluster(c) => c.clusters * c.per_cluster,
            WorldSpec::Coverage(c) => c.size,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

#[derive(Debug, Clone)]
pub enum World {
    Cluster(ClusterWorld),
    Coverage(CoverageWorld),
}

impl World {
    pub fn pool(&self) -> &SamplePool {
        match self {
            World::Cluster(w) => &w.pool,
            World::Coverage(w) => &w.pool,
        }
    }

    pub fn probe(&self) -> Option<&dyn ClassProbe> {
        match self {
            World::Cluster(w) => Some(w),
            World::Coverage(_) => None,
        }
    }

    pub fn with_noise(&self, sigma: f64) -> NoisyOracle<&World> {
        NoisyOracle { inner: self, sigma }
    }
}

impl PerformanceOracle for World {
    fn evaluate(&self, pool: &SamplePool, hypothetical: &SelectionBatch, seed: u64) -> Result<f64> {
        match self {
            World::Cluster(w) => w.evaluate(pool, hypothetical, seed),
            World::Coverage(w) => w.evaluate(pool, hypothetical, seed),
        }
    }
}
