//! Lookup-table performance estimator.
//!
//! Before agent training in a cycle, `M` random candidate batches are
//! evaluated by the oracle. Queries are then answered by W1 proximity to
//! those entries: an inverse-distance weighted mean of the `k` nearest, or a
//! direct oracle call when even the nearest entry is unusually far.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracle::PerformanceOracle;
use crate::pool::{ALCycleState, SampleId, SamplePool, SelectionBatch};
use crate::seed;
use crate::wasserstein::batch_wasserstein;

pub const DEFAULT_NEIGHBORS: usize = 5;
pub const DEFAULT_WEIGHT_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LutEntry {
    pub ids: Vec<SampleId>,
    pub performance: f64,
    pub seed: u64,
}

/// Which distance population the fallback threshold is computed from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ThresholdMode {
    /// Recomputed for every query from its distances to all entries.
    #[default]
    PerQuery,
    /// Fixed at build time from all pairwise distances between the entries.
    /// Stricter against batches unlike anything in the table.
    Preset,
}

impl std::str::FromStr for ThresholdMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "preset" => Ok(Self::Preset),
            "per-query" => Ok(Self::PerQuery),
            other => Err(Error::Config(format!("unknown threshold mode {other:?} (expected preset | per-query)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct LutHeader {
    budget: usize,
    size: usize,
    fingerprint: u64,
    master_seed: u64,
    threshold_mode: ThresholdMode,
    preset_threshold: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LookupTable {
    pub budget: usize,
    /// Number of entries evaluated at build time; fallbacks are appended after.
    pub built_size: usize,
    pub fingerprint: u64,
    pub master_seed: u64,
    pub threshold_mode: ThresholdMode,
    /// `mean - std` of pairwise entry distances at build time; `None` when
    /// the table had fewer than three entries (per-query rule is used then).
    pub preset_threshold: Option<f64>,
    pub entries: Vec<LutEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimateSource {
    Lut,
    Direct,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateResult {
    pub value: f64,
    pub source: EstimateSource,
    pub min_distance: f64,
    pub threshold: f64,
}

fn entry_seed(master: u64, index: usize) -> u64 {
    seed::derive(master, &[seed::tag("lut-eval"), index as u64])
}

/// Evaluates `size` uniformly random `budget`-subsets of the unlabeled ids
/// in parallel. Entry `l` draws its subset and oracle seed from streams
/// keyed by `l`, so the table does not depend on scheduling.
pub fn build_lut<O, R>(
    state: &ALCycleState,
    oracle: &O,
    size: usize,
    budget: usize,
    threshold_mode: ThresholdMode,
    rng: &mut R,
) -> Result<LookupTable>
where
    O: PerformanceOracle + ?Sized,
    R: Rng + ?Sized,
{
    if size < 2 {
        return Err(Error::Config(format!("lookup table needs at least 2 entries, got {size}")));
    }
    let pool = &state.pool;
    let unlabeled = pool.unlabeled();
    if budget > unlabeled.len() {
        return Err(Error::BudgetTooLarge { budget, available: unlabeled.len() });
    }
    let master_seed: u64 = rng.random();
    let entries = (0..size)
        .into_par_iter()
        .map(|l| {
            let mut pick = seed::rng(master_seed, &[seed::tag("lut-batch"), l as u64]);
            let ids: Vec<SampleId> = unlabeled.choose_multiple(&mut pick, budget).copied().collect();
            let eval_seed = entry_seed(master_seed, l);
            let batch = SelectionBatch::new(ids)?;
            let performance = oracle.evaluate(pool, &batch, eval_seed)?;
            if !performance.is_finite() {
                return Err(Error::NonFinite(format!("oracle value for table entry {l}")));
            }
            Ok(LutEntry { ids: batch.ids().to_vec(), performance, seed: eval_seed })
        })
        .collect::<Result<Vec<_>>>()?;
    let preset_threshold = if budget == 0 || entries.len() < 3 {
        None
    } else {
        Some(fallback_threshold(&pairwise_distances(pool, &entries)?)?)
    };
    Ok(LookupTable {
        budget,
        built_size: size,
        fingerprint: pool.fingerprint(),
        master_seed,
        threshold_mode,
        preset_threshold,
        entries,
    })
}

fn pairwise_distances(pool: &SamplePool, entries: &[LutEntry]) -> Result<Vec<f64>> {
    (0..entries.len())
        .into_par_iter()
        .flat_map_iter(|i| (0..i).map(move |j| (i, j)))
        .map(|(i, j)| {
            batch_wasserstein(
                &LookupTable::features(pool, &entries[i].ids),
                &LookupTable::features(pool, &entries[j].ids),
            )
        })
        .collect()
}

/// `mean - population_std` of the distances.
pub fn fallback_threshold(distances: &[f64]) -> Result<f64> {
    if distances.len() < 2 {
        return Err(Error::TooFewValues(distances.len()));
    }
    let n = distances.len() as f64;
    let mean = distances.iter().sum::<f64>() / n;
    let var = distances.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n;
    Ok(mean - var.sqrt())
}

impl LookupTable {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn features<'a>(pool: &'a SamplePool, ids: &[SampleId]) -> Vec<&'a [f64]> {
        ids.iter().map(|&id| pool.feature(id).as_slice()).collect()
    }

    /// W1 distance from `query` to every entry, in entry order.
    pub fn distances(&self, query: &SelectionBatch, pool: &SamplePool) -> Result<Vec<f64>> {
        let q = Self::features(pool, query.ids());
        self.entries.iter().map(|e| batch_wasserstein(&q, &Self::features(pool, &e.ids))).collect()
    }

    /// Estimate the oracle value of `query`. Falls back to the oracle (and
    /// appends the result as a new entry) when the nearest entry lies beyond
    /// the fallback threshold.
    pub fn estimate_performance<O: PerformanceOracle + ?Sized>(
        &mut self,
        query: &SelectionBatch,
        pool: &SamplePool,
        neighbors: usize,
        weight_eps: f64,
        oracle: &O,
    ) -> Result<EstimateResult> {
        if pool.fingerprint() != self.fingerprint {
            return Err(Error::StaleLookupTable { built: self.fingerprint, current: pool.fingerprint() });
        }
        if query.budget() != self.budget {
            return Err(Error::SizeMismatch(query.budget(), self.budget));
        }
        query.check_unlabeled(pool)?;
        let distances = self.distances(query, pool)?;
        let threshold = match (self.threshold_mode, self.preset_threshold) {
            (ThresholdMode::Preset, Some(t)) => t,
            _ => fallback_threshold(&distances)?,
        };
        let (nearest, min_distance) = distances
            .iter()
            .copied()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("table has at least 2 entries");

        if min_distance == 0.0 {
            return Ok(EstimateResult {
                value: self.entries[nearest].performance,
                source: EstimateSource::Lut,
                min_distance,
                threshold,
            });
        }

        if min_distance > threshold {
            let eval_seed = entry_seed(self.master_seed, self.entries.len());
            let value = oracle.evaluate(pool, query, eval_seed)?;
            if !value.is_finite() {
                return Err(Error::NonFinite("oracle value".into()));
            }
            self.entries.push(LutEntry { ids: query.ids().to_vec(), performance: value, seed: eval_seed });
            return Ok(EstimateResult { value, source: EstimateSource::Direct, min_distance, threshold });
        }

        let mut ranked: Vec<(usize, f64)> = distances.into_iter().enumerate().collect();
        ranked.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        let (num, den) = ranked.iter().take(neighbors.max(1)).fold((0.0, 0.0), |(num, den), &(l, d)| {
            let w = 1.0 / (d + weight_eps);
            (num + w * self.entries[l].performance, den + w)
        });
        Ok(EstimateResult { value: num / den, source: EstimateSource::Lut, min_distance, threshold })
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        let header = LutHeader {
            budget: self.budget,
            size: self.built_size,
            fingerprint: self.fingerprint,
            master_seed: self.master_seed,
            threshold_mode: self.threshold_mode,
            preset_threshold: self.preset_threshold,
        };
        writeln!(out, "{}", serde_json::to_string(&header)?)?;
        for e in &self.entries {
            writeln!(out, "{}", serde_json::to_string(e)?)?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines().enumerate();
        let header: LutHeader = match lines.next() {
            Some((_, line)) => {
                serde_json::from_str(&line?).map_err(|e| Error::Parse { line: 1, msg: e.to_string() })?
            }
            None => return Err(Error::Parse { line: 1, msg: "missing header".into() }),
        };
        let mut entries = Vec::new();
        for (i, line) in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let e: LutEntry =
                serde_json::from_str(&line).map_err(|e| Error::Parse { line: i + 1, msg: e.to_string() })?;
            if e.ids.len() != header.budget {
                return Err(Error::Parse {
                    line: i + 1,
                    msg: format!("entry has {} ids, table budget is {}", e.ids.len(), header.budget),
                });
            }
            entries.push(e);
        }
        Ok(Self {
            budget: header.budget,
            built_size: header.size,
            fingerprint: header.fingerprint,
            master_seed: header.master_seed,
            threshold_mode: header.threshold_mode,
            preset_threshold: header.preset_threshold,
            entries,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf)?;
        fs::write(path, buf)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_jsonl(BufReader::new(fs::File::open(path)?))
    }
}
