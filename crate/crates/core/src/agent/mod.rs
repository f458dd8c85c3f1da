//! LSTM sampling agent.
//!
//! The agent walks the unlabeled pool in a visit order. At each step the
//! sample's feature vector plus the previous step's score goes through a
//! shared LSTM cell and a two-layer decoder, producing one logit per sample.
//! Training draws batches from the Plackett-Luce distribution over those
//! logits; inference takes the top-B.

pub mod adam;
pub mod checkpoint;
pub mod decoder;
pub mod lstm;
pub mod params;
pub mod policy;

pub use adam::{adam_update, AdamConfig};
pub use checkpoint::{AgentCheckpoint, RngPosition};
pub use decoder::decode_score;
pub use lstm::lstm_step;
pub use params::{AdamState, AgentParams, DecoderParams, LstmParams, PolicyWeights};
pub use policy::{
    backprop_policy, plackett_luce_grad, plackett_luce_logprob, policy_loss, sample_batch, sample_plackett_luce,
    score_pool, select_top_b, ScoreCache, Trajectory,
};
