//! Reinforced batch active learning.
//!
//! An LSTM scoring agent walks the unlabeled pool and is trained with
//! REINFORCE to pick batches that raise downstream task performance. Batch
//! performance during training comes from a lookup table of pre-evaluated
//! random batches, queried by Wasserstein distance in feature space.
//!
//! Modules, bottom up:
//! - [`pool`]: samples, labeled/unlabeled partition, cycle state
//! - [`agent`]: LSTM policy, Plackett-Luce batch sampling, backprop, Adam
//! - [`wasserstein`] and [`lut`]: optimal-transport lookup-table estimator
//! - [`reward`]: gain reward, moving reference baseline, one RL iteration
//! - [`backends`]: synthetic oracles standing in for detector training
//! - [`strategies`]: random, entropy and k-center greedy baselines
//! - [`experiment`]: full AL loop, comparison matrix, CSV and SVG output

pub mod agent;
pub mod backends;
pub mod error;
pub mod experiment;
pub mod lut;
pub mod oracle;
pub mod pool;
pub mod reward;
pub mod seed;
pub mod strategies;
pub mod wasserstein;

pub use error::{Error, Result};
