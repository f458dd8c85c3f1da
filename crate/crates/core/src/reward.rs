//! Performance-gain reward, moving reference baseline and one end-to-end
//! policy-gradient iteration.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::agent::{adam_update, backprop_policy, AdamConfig, AgentParams, Trajectory};
use crate::error::{Error, Result};
use crate::lut::{EstimateSource, LookupTable};
use crate::oracle::PerformanceOracle;
use crate::pool::{ALCycleState, SampleId, SamplePool, SelectionBatch};

/// Gain of `map_i` over `map_prev`.
pub fn delta_map(map_i: f64, map_prev: f64) -> Result<f64> {
    if !map_i.is_finite() || !map_prev.is_finite() {
        return Err(Error::NonFinite("performance".into()));
    }
    Ok(map_i - map_prev)
}

/// How the reference baseline absorbs a new measurement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum BaselineMode {
    /// `ref' = λ·ref + (1-λ)·(map - ref)`, the recurrence exactly as printed.
    #[default]
    AsWritten,
    /// `ref' = λ·ref + (1-λ)·map`.
    StandardEma,
}

impl std::str::FromStr for BaselineMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "as-written" => Ok(Self::AsWritten),
            "standard-ema" => Ok(Self::StandardEma),
            other => {
                Err(Error::Config(format!("unknown baseline mode {other:?} (expected as-written | standard-ema)")))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardState {
    pub reference: f64,
    pub lambda: f64,
    pub mode: BaselineMode,
    pub initialized: bool,
}

impl RewardState {
    pub fn new(lambda: f64, mode: BaselineMode) -> Result<Self> {
        check_lambda(lambda)?;
        Ok(Self { reference: 0.0, lambda, mode, initialized: false })
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::Config(format!("baseline momentum must lie in [0, 1], got {lambda}")));
    }
    Ok(())
}

/// Fold `map_i` into the reference. The first call only seeds it.
pub fn update_reference(state: &RewardState, map_i: f64) -> Result<RewardState> {
    check_lambda(state.lambda)?;
    if !map_i.is_finite() {
        return Err(Error::NonFinite("performance".into()));
    }
    let mut next = *state;
    next.initialized = true;
    if !state.initialized {
        next.reference = map_i;
        return Ok(next);
    }
    let (lambda, r) = (state.lambda, state.reference);
    next.reference = match state.mode {
        BaselineMode::AsWritten => lambda * r + (1.0 - lambda) * (map_i - r),
        BaselineMode::StandardEma => lambda * r + (1.0 - lambda) * map_i,
    };
    Ok(next)
}

/// `map_i - ref`, against the reference from before this iteration's update.
pub fn policy_advantage(map_i: f64, state: &RewardState) -> Result<f64> {
    if !state.initialized {
        return Err(Error::UninitializedBaseline);
    }
    delta_map(map_i, state.reference)
}

/// Audit record of one RL iteration, one JSON object per log line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    #[serde(rename = "i")]
    pub iteration: usize,
    pub ids: Vec<SampleId>,
    #[serde(rename = "perf")]
    pub performance: f64,
    pub source: EstimateSource,
    pub advantage: f64,
    pub loss: f64,
    pub logprob: f64,
    pub ref_before: f64,
}

pub fn write_iteration_log<W: Write>(records: &[IterationRecord], mut out: W) -> Result<()> {
    for r in records {
        writeln!(out, "{}", serde_json::to_string(r)?)?;
    }
    Ok(())
}

/// Source of performance values for candidate batches during training.
pub trait PerformanceEstimator {
    fn estimate(&mut self, pool: &SamplePool, batch: &SelectionBatch) -> Result<(f64, EstimateSource)>;
}

/// Lookup-table estimates with direct-oracle fallback.
pub struct LutEstimator<'a, O: ?Sized> {
    pub table: &'a mut LookupTable,
    pub oracle: &'a O,
    pub neighbors: usize,
    pub weight_eps: f64,
}

impl<O: PerformanceOracle + ?Sized> PerformanceEstimator for LutEstimator<'_, O> {
    fn estimate(&mut self, pool: &SamplePool, batch: &SelectionBatch) -> Result<(f64, EstimateSource)> {
        let r = self.table.estimate_performance(batch, pool, self.neighbors, self.weight_eps, self.oracle)?;
        Ok((r.value, r.source))
    }
}

/// Calls the oracle for every query.
pub struct DirectEstimator<'a, O: ?Sized> {
    pub oracle: &'a O,
    pub seed: u64,
}

impl<O: PerformanceOracle + ?Sized> PerformanceEstimator for DirectEstimator<'_, O> {
    fn estimate(&mut self, pool: &SamplePool, batch: &SelectionBatch) -> Result<(f64, EstimateSource)> {
        Ok((self.oracle.evaluate(pool, batch, self.seed)?, EstimateSource::Direct))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RlConfig {
    pub budget: usize,
    pub adam: AdamConfig,
    pub clip_norm: f64,
}

impl Default for RlConfig {
    fn default() -> Self {
        Self { budget: 10, adam: AdamConfig::default(), clip_norm: 5.0 }
    }
}

/// One training iteration: score a fresh visit order, draw a batch, estimate
/// its performance, take a policy-gradient step against the pre-update
/// reference, then fold the measurement into the reference.
///
/// On error nothing is returned, so the caller's agent and reward state stay
/// as they were.
pub fn rl_iteration<E, R>(
    iteration: usize,
    agent: &AgentParams,
    state: &ALCycleState,
    reward: &RewardState,
    estimator: &mut E,
    cfg: &RlConfig,
    rng: &mut R,
) -> Result<(AgentParams, RewardState, IterationRecord)>
where
    E: PerformanceEstimator + ?Sized,
    R: Rng + ?Sized,
{
    let pool = &state.pool;
    if pool.unlabeled_count() < cfg.budget {
        return Err(Error::BudgetTooLarge { budget: cfg.budget, available: pool.unlabeled_count() });
    }
    let trajectory = Trajectory::sample(agent, pool, cfg.budget, rng)?;
    let (raw, source) = estimator.estimate(pool, &trajectory.batch)?;
    if !raw.is_finite() {
        return Err(Error::NonFinite("estimated performance".into()));
    }
    let performance = raw.clamp(0.0, 1.0);

    // An unseeded baseline is seeded by this measurement, giving zero advantage.
    let ref_before = if reward.initialized { reward.reference } else { performance };
    let advantage = if reward.initialized { policy_advantage(performance, reward)? } else { 0.0 };

    let mut grads = backprop_policy(agent, &trajectory, advantage)?;
    let next_agent = if grads.values().all(|g| g == 0.0) {
        agent.clone()
    } else {
        grads.clip_global_norm(cfg.clip_norm);
        adam_update(agent, &grads, &cfg.adam)?
    };
    let next_reward = update_reference(reward, performance)?;

    let record = IterationRecord {
        iteration,
        ids: trajectory.batch.ids().to_vec(),
        performance,
        source,
        advantage,
        loss: -advantage * trajectory.logprob,
        logprob: trajectory.logprob,
        ref_before,
    };
    Ok((next_agent, next_reward, record))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn delta_examples() {
        assert!((delta_map(0.7, 0.6).unwrap() - 0.1).abs() < 1e-15);
        assert_eq!(delta_map(0.42, 0.42).unwrap(), 0.0);
        assert!((delta_map(0.3, 0.6).unwrap() + 0.3).abs() < 1e-15);
        assert!(delta_map(f64::NAN, 0.1).is_err());
    }

    fn seeded(reference: f64, lambda: f64, mode: BaselineMode) -> RewardState {
        RewardState { reference, lambda, mode, initialized: true }
    }

    #[test]
    fn reference_examples() {
        let r = update_reference(&seeded(0.5, 0.5, BaselineMode::AsWritten), 0.7).unwrap();
        assert!((r.reference - 0.35).abs() < 1e-15);
        let r = update_reference(&seeded(0.5, 1.0, BaselineMode::AsWritten), 0.7).unwrap();
        assert_eq!(r.reference, 0.5);
        let r = update_reference(&seeded(0.5, 0.5, BaselineMode::StandardEma), 0.7).unwrap();
        assert!((r.reference - 0.6).abs() < 1e-15);
    }

    #[test]
    fn first_update_seeds_reference() {
        let s = RewardState::new(0.5, BaselineMode::AsWritten).unwrap();
        let r = update_reference(&s, 0.8).unwrap();
        assert!(r.initialized);
        assert_eq!(r.reference, 0.8);
    }

    #[test]
    fn lambda_outside_unit_interval() {
        assert!(matches!(RewardState::new(1.5, BaselineMode::StandardEma), Err(Error::Config(_))));
        let bad = seeded(0.5, -0.1, BaselineMode::StandardEma);
        assert!(matches!(update_reference(&bad, 0.5), Err(Error::Config(_))));
    }

    #[test]
    fn advantage_examples() {
        let s = seeded(0.5, 0.5, BaselineMode::AsWritten);
        assert!((policy_advantage(0.7, &s).unwrap() - 0.2).abs() < 1e-15);
        assert_eq!(policy_advantage(0.5, &s).unwrap(), 0.0);
        assert!((policy_advantage(0.4, &s).unwrap() + 0.1).abs() < 1e-15);
        let fresh = RewardState::new(0.5, BaselineMode::AsWritten).unwrap();
        assert!(matches!(policy_advantage(0.4, &fresh), Err(Error::UninitializedBaseline)));
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("as-written".parse::<BaselineMode>().unwrap(), BaselineMode::AsWritten);
        assert_eq!("standard-ema".parse::<BaselineMode>().unwrap(), BaselineMode::StandardEma);
        assert!("ema".parse::<BaselineMode>().is_err());
    }
}
