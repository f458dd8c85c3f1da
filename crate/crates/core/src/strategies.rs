//! Comparison strategies: uniform random, max-entropy, and k-center greedy.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::backends::ClassProbe;
use crate::error::{Error, Result};
use crate::pool::{ALCycleState, SampleId, SelectionBatch};

/// Strategy names accepted on the command line and in configs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrategyKind {
    Random,
    Entropy,
    Coreset,
    /// The reinforcement-learned sampling agent.
    Mgral,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 4] = [Self::Random, Self::Entropy, Self::Coreset, Self::Mgral];

    pub fn name(self) -> &'static str {
        match self {
            Self::Random => "random",
            Self::Entropy => "entropy",
            Self::Coreset => "coreset",
            Self::Mgral => "mgral",
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| {
            Error::Config(format!("unknown strategy {s:?} (expected random | entropy | coreset | mgral)"))
        })
    }
}

fn check_budget(state: &ALCycleState, budget: usize) -> Result<()> {
    let available = state.pool.unlabeled_count();
    if budget > available {
        return Err(Error::BudgetTooLarge { budget, available });
    }
    Ok(())
}

/// Uniform random `budget`-subset of the unlabeled ids, in draw order.
/// Consumes exactly `budget` draws (partial Fisher-Yates).
pub fn random_select<R: Rng + ?Sized>(state: &ALCycleState, budget: usize, rng: &mut R) -> Result<SelectionBatch> {
    check_budget(state, budget)?;
    let mut ids = state.pool.unlabeled();
    for i in 0..budget {
        let j = rng.random_range(i..ids.len());
        ids.swap(i, j);
    }
    ids.truncate(budget);
    SelectionBatch::new(ids)
}

/// Shannon entropy in nats.
pub fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&x| x > 0.0).map(|&x| x * x.ln()).sum::<f64>()
}

/// Top-`budget` unlabeled samples by predictive entropy, ties to smaller id.
pub fn entropy_select<P: ClassProbe + ?Sized>(
    state: &ALCycleState,
    budget: usize,
    probe: &P,
) -> Result<SelectionBatch> {
    check_budget(state, budget)?;
    let mut scored = state
        .pool
        .unlabeled()
        .into_iter()
        .map(|id| Ok((id, entropy(&probe.predictive_distribution(&state.pool, id)?))))
        .collect::<Result<Vec<(SampleId, f64)>>>()?;
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    SelectionBatch::new(scored.into_iter().take(budget).map(|(id, _)| id).collect())
}

/// Greedy farthest-first traversal from the labeled set. With nothing
/// labeled, the first pick is the sample farthest from the pool centroid.
pub fn kcenter_greedy(state: &ALCycleState, budget: usize) -> Result<SelectionBatch> {
    check_budget(state, budget)?;
    let pool = &state.pool;
    let n = pool.len();
    let mut min_dist = vec![f64::INFINITY; n];
    let mut taken: Vec<bool> = (0..n).map(|id| pool.is_labeled(id)).collect();
    let relax = |min_dist: &mut [f64], center: SampleId| {
        let c = pool.feature(center);
        for (id, d) in min_dist.iter_mut().enumerate() {
            *d = d.min(pool.feature(id).distance(c));
        }
    };
    for &id in pool.labeled() {
        relax(&mut min_dist, id);
    }
    if pool.labeled().is_empty() {
        let mut centroid = vec![0.0; pool.dim()];
        for f in pool.features() {
            for (c, v) in centroid.iter_mut().zip(f.as_slice()) {
                *c += v / n as f64;
            }
        }
        for (id, d) in min_dist.iter_mut().enumerate() {
            *d = crate::pool::euclidean(pool.feature(id).as_slice(), &centroid);
        }
    }

    let mut picks = Vec::with_capacity(budget);
    for _ in 0..budget {
        let next = (0..n)
            .filter(|&id| !taken[id])
            .max_by(|&a, &b| min_dist[a].total_cmp(&min_dist[b]).then(b.cmp(&a)))
            .expect("budget checked against unlabeled count");
        if picks.is_empty() && pool.labeled().is_empty() {
            min_dist.iter_mut().for_each(|d| *d = f64::INFINITY);
        }
        taken[next] = true;
        picks.push(next);
        relax(&mut min_dist, next);
    }
    SelectionBatch::new(picks)
}

/// Covering radius: the largest distance from any pool point to its nearest
/// center among `centers`.
pub fn covering_radius(state: &ALCycleState, centers: &[SampleId]) -> f64 {
    let pool = &state.pool;
    pool.features()
        .iter()
        .map(|x| centers.iter().map(|&c| x.distance(pool.feature(c))).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pool::{FeatureVector, SamplePool};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn state(xs: &[f64], labeled: &[usize]) -> ALCycleState {
        let pool = SamplePool::new(xs.iter().map(|&x| FeatureVector(vec![x])).collect()).unwrap();
        ALCycleState::new(pool.label(labeled).unwrap())
    }

    struct Fixed(Vec<Vec<f64>>);

    impl ClassProbe for Fixed {
        fn predictive_distribution(&self, _: &SamplePool, id: SampleId) -> Result<Vec<f64>> {
            Ok(self.0[id].clone())
        }
    }

    #[test]
    fn names_round_trip() {
        for k in StrategyKind::ALL {
            assert_eq!(k.name().parse::<StrategyKind>().unwrap(), k);
        }
        assert!("cdal".parse::<StrategyKind>().is_err());
    }

    #[test]
    fn random_takes_everything_when_budget_is_full() {
        let s = state(&[0.0, 1.0, 2.0, 3.0], &[1]);
        let b = random_select(&s, 3, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(b.sorted_ids(), vec![0, 2, 3]);
        assert!(random_select(&s, 4, &mut ChaCha8Rng::seed_from_u64(1)).is_err());
    }

    #[test]
    fn random_replays_with_seed() {
        let s = state(&[0.0; 10], &[]);
        let a = random_select(&s, 4, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b = random_select(&s, 4, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn entropy_values() {
        assert_eq!(entropy(&[1.0]), 0.0);
        assert!((entropy(&[0.5, 0.5]) - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn entropy_prefers_uniform() {
        let s = state(&[0.0, 1.0, 2.0], &[]);
        let probe = Fixed(vec![vec![0.9, 0.1], vec![0.5, 0.5], vec![0.7, 0.3]]);
        assert_eq!(entropy_select(&s, 1, &probe).unwrap().ids(), &[1]);
        let certain = Fixed(vec![vec![1.0, 0.0], vec![0.5, 0.5], vec![1.0, 0.0]]);
        assert_eq!(entropy_select(&s, 1, &certain).unwrap().ids(), &[1]);
    }

    #[test]
    fn entropy_ties_take_lowest_ids() {
        let s = state(&[0.0, 1.0, 2.0, 3.0], &[0]);
        let probe = Fixed(vec![vec![0.3, 0.7]; 4]);
        assert_eq!(entropy_select(&s, 2, &probe).unwrap().ids(), &[1, 2]);
    }

    #[test]
    fn kcenter_examples() {
        let s = state(&[0.0, 1.0, 10.0], &[0]);
        assert_eq!(kcenter_greedy(&s, 1).unwrap().ids(), &[2]);
        assert_eq!(kcenter_greedy(&s, 2).unwrap().ids(), &[2, 1]);
    }

    #[test]
    fn kcenter_cold_start_uses_centroid() {
        // Centroid 2.5; farthest is id 3 at 7.5.
        let s = state(&[0.0, 1.0, 1.0, 10.0], &[]);
        let b = kcenter_greedy(&s, 2).unwrap();
        assert_eq!(b.ids(), &[3, 0]);
    }

    #[test]
    fn kcenter_ties_take_smaller_id() {
        let s = state(&[0.0, -1.0, 1.0], &[0]);
        assert_eq!(kcenter_greedy(&s, 1).unwrap().ids(), &[1]);
    }
}
