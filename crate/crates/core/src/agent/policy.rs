//! Sequential scoring over the unlabeled pool, the stochastic batch policy
//! used during training, deterministic top-B inference, and the policy
//! gradient through the whole chain.

use rand::seq::SliceRandom;
use rand::Rng;

use super::decoder::{self, DecoderCache};
use super::lstm::{self, sigmoid, LstmStepCache};
use super::params::{AgentParams, PolicyWeights};
use crate::error::{Error, Result};
use crate::pool::{SampleId, SamplePool, SelectionBatch};

#[derive(Debug, Clone)]
struct StepCache {
    lstm: LstmStepCache,
    decoder: DecoderCache,
}

/// Forward activations of one pass over a visit order.
#[derive(Debug, Clone)]
pub struct ScoreCache {
    pub version: u64,
    steps: Vec<StepCache>,
}

impl ScoreCache {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

fn check_order(pool: &SamplePool, order: &[SampleId]) -> Result<()> {
    let mut seen = vec![false; pool.len()];
    for &id in order {
        if id >= pool.len() {
            return Err(Error::IdOutOfRange(id, pool.len()));
        }
        if pool.is_labeled(id) {
            return Err(Error::AlreadyLabeled(id));
        }
        if std::mem::replace(&mut seen[id], true) {
            return Err(Error::DuplicateId(id));
        }
    }
    if order.len() != pool.unlabeled_count() {
        return Err(Error::SizeMismatch(order.len(), pool.unlabeled_count()));
    }
    Ok(())
}

/// Scores the samples of `order` in sequence. Step `k` sees the sample's
/// features concatenated with `sigmoid(logit[k-1])` (0 at the first step);
/// hidden and cell states start at zero. Logits are returned in visit order.
pub fn score_pool(agent: &AgentParams, pool: &SamplePool, order: &[SampleId]) -> Result<(Vec<f64>, ScoreCache)> {
    check_order(pool, order)?;
    score_sequence(&agent.weights, pool, order)
        .map(|(logits, steps)| (logits, ScoreCache { version: agent.version, steps }))
}

fn score_sequence(w: &PolicyWeights, pool: &SamplePool, order: &[SampleId]) -> Result<(Vec<f64>, Vec<StepCache>)> {
    if pool.dim() != w.feature_dim() {
        return Err(Error::DimensionMismatch { expected: w.feature_dim(), got: pool.dim() });
    }
    let hid = w.lstm.hidden;
    let mut h = vec![0.0; hid];
    let mut c = vec![0.0; hid];
    let mut prev_signal = 0.0;
    let mut logits = Vec::with_capacity(order.len());
    let mut steps = Vec::with_capacity(order.len());
    let mut x = vec![0.0; w.lstm.input];
    for &id in order {
        let (feat, last) = x.split_at_mut(pool.dim());
        feat.copy_from_slice(pool.feature(id).as_slice());
        last[0] = prev_signal;
        let lstm_cache = lstm::forward(&w.lstm, &h, &c, &x)?;
        let (z, dec_cache) = decoder::forward(&w.decoder, &lstm_cache.h)?;
        h.clone_from(&lstm_cache.h);
        c.clone_from(&lstm_cache.c);
        prev_signal = sigmoid(z);
        logits.push(z);
        steps.push(StepCache { lstm: lstm_cache, decoder: dec_cache });
    }
    Ok((logits, steps))
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Log-probability of drawing `positions` in order, without replacement,
/// from `softmax(logits)` (Plackett-Luce).
pub fn plackett_luce_logprob(logits: &[f64], positions: &[usize]) -> f64 {
    let mut remaining = vec![true; logits.len()];
    let mut logprob = 0.0;
    for &a in positions {
        let lse = log_sum_exp(logits.iter().zip(&remaining).filter(|(_, &r)| r).map(|(&z, _)| z));
        logprob += logits[a] - lse;
        remaining[a] = false;
    }
    logprob
}

/// Gradient of [`plackett_luce_logprob`] with respect to every logit.
pub fn plackett_luce_grad(logits: &[f64], positions: &[usize]) -> Vec<f64> {
    let mut remaining = vec![true; logits.len()];
    let mut grad = vec![0.0; logits.len()];
    for &a in positions {
        let lse = log_sum_exp(logits.iter().zip(&remaining).filter(|(_, &r)| r).map(|(&z, _)| z));
        for (m, g) in grad.iter_mut().enumerate() {
            if remaining[m] {
                *g -= (logits[m] - lse).exp();
            }
        }
        grad[a] += 1.0;
        remaining[a] = false;
    }
    grad
}

/// Sequential softmax sampling without replacement. Returns the drawn
/// positions in draw order and their joint log-probability. Consumes one
/// uniform draw per pick.
pub fn sample_plackett_luce<R: Rng + ?Sized>(logits: &[f64], budget: usize, rng: &mut R) -> Result<(Vec<usize>, f64)> {
    if budget > logits.len() {
        return Err(Error::BudgetTooLarge { budget, available: logits.len() });
    }
    if logits.iter().any(|z| !z.is_finite()) {
        return Err(Error::NonFinite("logits".into()));
    }
    let mut remaining = vec![true; logits.len()];
    let mut picks = Vec::with_capacity(budget);
    let mut logprob = 0.0;
    for _ in 0..budget {
        let max = logits.iter().zip(&remaining).filter(|(_, &r)| r).map(|(&z, _)| z).fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> =
            logits.iter().zip(&remaining).map(|(&z, &r)| if r { (z - max).exp() } else { 0.0 }).collect();
        let total: f64 = weights.iter().sum();
        let target = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut pick = None;
        for (m, &w) in weights.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            acc += w;
            pick = Some(m);
            if target < acc {
                break;
            }
        }
        let a = pick.expect("at least one remaining candidate");
        logprob += (weights[a] / total).ln();
        remaining[a] = false;
        picks.push(a);
    }
    Ok((picks, logprob))
}

/// Stochastic training-time selection over `(ids, logits)` pairs.
pub fn sample_batch<R: Rng + ?Sized>(
    ids: &[SampleId],
    logits: &[f64],
    budget: usize,
    rng: &mut R,
) -> Result<(SelectionBatch, f64)> {
    if ids.len() != logits.len() {
        return Err(Error::SizeMismatch(ids.len(), logits.len()));
    }
    let (picks, _) = sample_plackett_luce(logits, budget, rng)?;
    let logprob = plackett_luce_logprob(logits, &picks);
    Ok((SelectionBatch::new(picks.iter().map(|&p| ids[p]).collect())?, logprob))
}

/// The `budget` ids with the largest logits; ties go to the smaller id.
pub fn select_top_b(ids: &[SampleId], logits: &[f64], budget: usize) -> Result<SelectionBatch> {
    if ids.len() != logits.len() {
        return Err(Error::SizeMismatch(ids.len(), logits.len()));
    }
    if budget > ids.len() {
        return Err(Error::BudgetTooLarge { budget, available: ids.len() });
    }
    let mut ranked: Vec<(SampleId, f64)> = ids.iter().copied().zip(logits.iter().copied()).collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    SelectionBatch::new(ranked.into_iter().take(budget).map(|(id, _)| id).collect())
}

/// One sampled episode: a visit order, its logits, and the drawn batch.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub order: Vec<SampleId>,
    pub logits: Vec<f64>,
    /// Positions in `order` of the drawn samples, in draw order.
    pub positions: Vec<usize>,
    pub batch: SelectionBatch,
    pub logprob: f64,
    pub cache: ScoreCache,
}

impl Trajectory {
    /// Shuffle the unlabeled ids, score them, and draw a batch of `budget`.
    pub fn sample<R: Rng + ?Sized>(agent: &AgentParams, pool: &SamplePool, budget: usize, rng: &mut R) -> Result<Self> {
        let mut order = pool.unlabeled();
        order.shuffle(rng);
        Self::sample_with_order(agent, pool, order, budget, rng)
    }

    pub fn sample_with_order<R: Rng + ?Sized>(
        agent: &AgentParams,
        pool: &SamplePool,
        order: Vec<SampleId>,
        budget: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let (logits, cache) = score_pool(agent, pool, &order)?;
        let (positions, _) = sample_plackett_luce(&logits, budget, rng)?;
        Self::from_positions(order, logits, cache, positions)
    }

    /// Build a trajectory for a fixed draw, e.g. to re-evaluate a batch.
    pub fn from_positions(
        order: Vec<SampleId>,
        logits: Vec<f64>,
        cache: ScoreCache,
        positions: Vec<usize>,
    ) -> Result<Self> {
        let logprob = plackett_luce_logprob(&logits, &positions);
        let batch = SelectionBatch::new(positions.iter().map(|&p| order[p]).collect())?;
        Ok(Self { order, logits, positions, batch, logprob, cache })
    }
}

/// Gradients of `-advantage * logprob(trajectory)` with respect to every
/// parameter, through the Plackett-Luce term, decoder, LSTM chain and the
/// prev-score feedback path.
pub fn backprop_policy(agent: &AgentParams, trajectory: &Trajectory, advantage: f64) -> Result<PolicyWeights> {
    if trajectory.cache.version != agent.version {
        return Err(Error::StaleTrajectory { cached: trajectory.cache.version, current: agent.version });
    }
    if !advantage.is_finite() {
        return Err(Error::NonFinite("advantage".into()));
    }
    let w = &agent.weights;
    let steps = &trajectory.cache.steps;
    let hid = w.lstm.hidden;
    let dlogp = plackett_luce_grad(&trajectory.logits, &trajectory.positions);

    let mut grad = w.zeros_like();
    let mut dh_next = vec![0.0; hid];
    let mut dc_next = vec![0.0; hid];
    let mut dsignal_next = 0.0;
    for k in (0..steps.len()).rev() {
        let mut dz = -advantage * dlogp[k];
        if k + 1 < steps.len() {
            let s = sigmoid(trajectory.logits[k]);
            dz += dsignal_next * s * (1.0 - s);
        }
        let mut dh = decoder::backward(&w.decoder, &steps[k].decoder, dz, &mut grad.decoder);
        for (a, b) in dh.iter_mut().zip(&dh_next) {
            *a += b;
        }
        let (dx, dh_prev, dc_prev) = lstm::backward(&w.lstm, &steps[k].lstm, &dh, &dc_next, &mut grad.lstm);
        dsignal_next = dx[w.lstm.input - 1];
        dh_next = dh_prev;
        dc_next = dc_prev;
    }
    Ok(grad)
}

/// Loss `-advantage * logprob` for a fixed visit order and draw, recomputed
/// from scratch. Used by gradient checks.
pub fn policy_loss(
    weights: &PolicyWeights,
    pool: &SamplePool,
    order: &[SampleId],
    positions: &[usize],
    advantage: f64,
) -> Result<f64> {
    let (logits, _) = score_sequence(weights, pool, order)?;
    Ok(-advantage * plackett_luce_logprob(&logits, positions))
}
