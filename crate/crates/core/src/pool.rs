//! Pool and partition model shared by every selection strategy.
//!
//! Samples are addressed by dense integer ids `0..n`. All state transitions
//! return new values and leave their inputs untouched.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type SampleId = usize;

/// Pre-computed feature vector of one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn distance(&self, other: &FeatureVector) -> f64 {
        euclidean(&self.0, &other.0)
    }
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Feature matrix with a labeled/unlabeled partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplePool {
    dim: usize,
    features: Vec<FeatureVector>,
    labeled: BTreeSet<SampleId>,
}

impl SamplePool {
    pub fn new(features: Vec<FeatureVector>) -> Result<Self> {
        Self::with_labeled(features, BTreeSet::new())
    }

    pub fn with_labeled(features: Vec<FeatureVector>, labeled: BTreeSet<SampleId>) -> Result<Self> {
        let first = features.first().ok_or(Error::EmptyPool)?;
        let dim = first.dim();
        for f in &features {
            if f.dim() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: f.dim() });
            }
            if f.0.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("pool features".into()));
            }
        }
        if let Some(&bad) = labeled.iter().find(|&&id| id >= features.len()) {
            return Err(Error::IdOutOfRange(bad, features.len()));
        }
        Ok(Self { dim, features, labeled })
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn features(&self) -> &[FeatureVector] {
        &self.features
    }

    pub fn feature(&self, id: SampleId) -> &FeatureVector {
        &self.features[id]
    }

    pub fn labeled(&self) -> &BTreeSet<SampleId> {
        &self.labeled
    }

    pub fn is_labeled(&self, id: SampleId) -> bool {
        self.labeled.contains(&id)
    }

    /// Unlabeled ids in ascending order.
    pub fn unlabeled(&self) -> Vec<SampleId> {
        (0..self.len()).filter(|id| !self.labeled.contains(id)).collect()
    }

    pub fn unlabeled_count(&self) -> usize {
        self.len() - self.labeled.len()
    }

    /// Stable hash of the sorted labeled ids.
    pub fn fingerprint(&self) -> u64 {
        labeled_fingerprint(self.labeled.iter().copied())
    }

    /// Copy of this pool with `ids` moved into the labeled set.
    pub fn label(&self, ids: &[SampleId]) -> Result<Self> {
        let mut next = self.clone();
        for &id in ids {
            if id >= self.len() {
                return Err(Error::IdOutOfRange(id, self.len()));
            }
            if !next.labeled.insert(id) {
                return Err(if self.labeled.contains(&id) {
                    Error::AlreadyLabeled(id)
                } else {
                    Error::DuplicateId(id)
                });
            }
        }
        Ok(next)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let raw: SamplePool = serde_json::from_str(&fs::read_to_string(path)?)?;
        Self::with_labeled(raw.features, raw.labeled)
    }
}

pub fn labeled_fingerprint(sorted_ids: impl IntoIterator<Item = SampleId>) -> u64 {
    sorted_ids.into_iter().fold(0xcbf2_9ce4_8422_2325_u64, |h, id| {
        (id as u64).to_le_bytes().iter().fold(h, |h, &b| (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3))
    })
}

/// Per-dimension z-scoring with population variance. Zero-variance
/// dimensions become all zeros.
pub fn standardize_features(pool: &SamplePool) -> Result<SamplePool> {
    if pool.is_empty() {
        return Err(Error::EmptyPool);
    }
    let n = pool.len() as f64;
    let mut out: Vec<FeatureVector> = pool.features.clone();
    for j in 0..pool.dim {
        let mean = pool.features.iter().map(|f| f.0[j]).sum::<f64>() / n;
        let var = pool.features.iter().map(|f| (f.0[j] - mean).powi(2)).sum::<f64>() / n;
        let std = var.sqrt();
        for f in &mut out {
            f.0[j] = if std > 0.0 { (f.0[j] - mean) / std } else { 0.0 };
        }
    }
    SamplePool::with_labeled(out, pool.labeled.clone())
}

/// Ordered set of distinct sample ids proposed for annotation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SelectionBatch {
    ids: Vec<SampleId>,
}

impl SelectionBatch {
    pub fn new(ids: Vec<SampleId>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for &id in &ids {
            if !seen.insert(id) {
                return Err(Error::DuplicateId(id));
            }
        }
        Ok(Self { ids })
    }

    /// Checks the batch against a pool: ids in range and unlabeled.
    pub fn for_pool(ids: Vec<SampleId>, pool: &SamplePool) -> Result<Self> {
        let batch = Self::new(ids)?;
        batch.check_unlabeled(pool)?;
        Ok(batch)
    }

    pub fn check_unlabeled(&self, pool: &SamplePool) -> Result<()> {
        for &id in &self.ids {
            if id >= pool.len() {
                return Err(Error::IdOutOfRange(id, pool.len()));
            }
            if pool.is_labeled(id) {
                return Err(Error::AlreadyLabeled(id));
            }
        }
        Ok(())
    }

    pub fn empty() -> Self {
        Self { ids: Vec::new() }
    }

    pub fn ids(&self) -> &[SampleId] {
        &self.ids
    }

    pub fn budget(&self) -> usize {
        self.ids.len()
    }

    pub fn sorted_ids(&self) -> Vec<SampleId> {
        let mut ids = self.ids.clone();
        ids.sort_unstable();
        ids
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub cycle: usize,
    pub labeled: usize,
    pub performance: f64,
}

/// Active-learning state at the start of cycle `cycle`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ALCycleState {
    pub cycle: usize,
    pub pool: SamplePool,
    pub history: Vec<CurvePoint>,
}

impl ALCycleState {
    pub fn new(pool: SamplePool) -> Self {
        Self { cycle: 0, pool, history: Vec::new() }
    }

    /// Label `batch` and advance to the next cycle.
    pub fn apply_selection(&self, batch: &SelectionBatch) -> Result<ALCycleState> {
        batch.check_unlabeled(&self.pool)?;
        Ok(ALCycleState { cycle: self.cycle + 1, pool: self.pool.label(batch.ids())?, history: self.history.clone() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pool(rows: &[&[f64]]) -> SamplePool {
        SamplePool::new(rows.iter().map(|r| FeatureVector(r.to_vec())).collect()).unwrap()
    }

    fn column(p: &SamplePool, j: usize) -> Vec<f64> {
        p.features().iter().map(|f| f.0[j]).collect()
    }

    #[test]
    fn standardize_examples() {
        let s = standardize_features(&pool(&[&[0.0], &[2.0]])).unwrap();
        assert_eq!(column(&s, 0), vec![-1.0, 1.0]);

        let s = standardize_features(&pool(&[&[5.0], &[5.0], &[5.0]])).unwrap();
        assert_eq!(column(&s, 0), vec![0.0, 0.0, 0.0]);

        let s = standardize_features(&pool(&[&[0.0, 1.0], &[4.0, 1.0]])).unwrap();
        assert_eq!(s.feature(0).0, vec![-1.0, 0.0]);
        assert_eq!(s.feature(1).0, vec![1.0, 0.0]);
    }

    #[test]
    fn empty_pool_rejected() {
        assert!(matches!(SamplePool::new(vec![]), Err(Error::EmptyPool)));
    }

    #[test]
    fn ragged_pool_rejected() {
        let r = SamplePool::new(vec![FeatureVector(vec![0.0]), FeatureVector(vec![0.0, 1.0])]);
        assert!(matches!(r, Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn apply_selection_examples() {
        let p = pool(&[&[0.0], &[1.0], &[2.0], &[3.0]]).label(&[0]).unwrap();
        let s = ALCycleState::new(p);

        let next = s.apply_selection(&SelectionBatch::new(vec![1, 2]).unwrap()).unwrap();
        assert_eq!(next.pool.labeled().iter().copied().collect::<Vec<_>>(), vec![0, 1, 2]);
        assert_eq!(next.cycle, 1);
        assert_eq!(s.cycle, 0);
        assert_eq!(s.pool.labeled().len(), 1);

        let err = s.apply_selection(&SelectionBatch::new(vec![3, 0]).unwrap()).unwrap_err();
        assert!(matches!(err, Error::AlreadyLabeled(0)));

        let err = s.apply_selection(&SelectionBatch::new(vec![9]).unwrap()).unwrap_err();
        assert!(matches!(err, Error::IdOutOfRange(9, 4)));

        let next = s.apply_selection(&SelectionBatch::empty()).unwrap();
        assert_eq!(next.pool, s.pool);
        assert_eq!(next.cycle, 1);
    }

    #[test]
    fn duplicate_ids_rejected() {
        assert!(matches!(SelectionBatch::new(vec![1, 1]), Err(Error::DuplicateId(1))));
    }

    #[test]
    fn fingerprint_tracks_labeled_set() {
        let p = pool(&[&[0.0], &[1.0], &[2.0]]);
        let a = p.label(&[0, 2]).unwrap();
        let b = p.label(&[2, 0]).unwrap();
        assert_eq!(a.fingerprint(), b.fingerprint());
        assert_ne!(a.fingerprint(), p.fingerprint());
    }
}
