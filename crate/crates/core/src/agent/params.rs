use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of LSTM gates; rows are stacked as input, forget, cell, output.
pub const GATES: usize = 4;

pub(crate) const INIT_RANGE: f64 = 0.08;

/// Weights of a single LSTM cell shared across every step of the sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmParams {
    pub input: usize,
    pub hidden: usize,
    /// `4H x I`, row-major.
    pub w_input: Vec<f64>,
    /// `4H x H`, row-major.
    pub w_hidden: Vec<f64>,
    pub bias: Vec<f64>,
}

impl LstmParams {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            input,
            hidden,
            w_input: vec![0.0; GATES * hidden * input],
            w_hidden: vec![0.0; GATES * hidden * hidden],
            bias: vec![0.0; GATES * hidden],
        }
    }

    /// Bias of the forget gate for hidden unit `j`.
    pub fn forget_bias_mut(&mut self, j: usize) -> &mut f64 {
        &mut self.bias[self.hidden + j]
    }
}

/// Two-layer tanh MLP mapping a hidden state to one logit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecoderParams {
    pub hidden: usize,
    pub mid: usize,
    /// `mid x hidden`, row-major.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
}

impl DecoderParams {
    pub fn zeros(hidden: usize) -> Self {
        let mid = (hidden / 2).max(1);
        Self { hidden, mid, w1: vec![0.0; mid * hidden], b1: vec![0.0; mid], w2: vec![0.0; mid], b2: 0.0 }
    }
}

/// All trainable tensors of the policy. Also used as the gradient and
/// optimizer-moment container, since those share the same shapes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyWeights {
    pub lstm: LstmParams,
    pub decoder: DecoderParams,
}

impl PolicyWeights {
    /// Zero tensors for a feature dimension `dim`; hidden width is `dim + 1`.
    pub fn zeros(dim: usize) -> Self {
        let width = dim + 1;
        Self { lstm: LstmParams::zeros(width, width), decoder: DecoderParams::zeros(width) }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            lstm: LstmParams::zeros(self.lstm.input, self.lstm.hidden),
            decoder: DecoderParams::zeros(self.decoder.hidden),
        }
    }

    /// Uniform weights in `[-0.08, 0.08]`, zero biases, forget-gate bias 1.
    pub fn init<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Self {
        let mut w = Self::zeros(dim);
        for v in w
            .lstm
            .w_input
            .iter_mut()
            .chain(w.lstm.w_hidden.iter_mut())
            .chain(w.decoder.w1.iter_mut())
            .chain(w.decoder.w2.iter_mut())
        {
            *v = rng.random_range(-INIT_RANGE..=INIT_RANGE);
        }
        for j in 0..w.lstm.hidden {
            *w.lstm.forget_bias_mut(j) = 1.0;
        }
        w
    }

    /// Feature dimension this policy expects (input width minus the prev-score slot).
    pub fn feature_dim(&self) -> usize {
        self.lstm.input - 1
    }

    pub fn blocks(&self) -> [(&'static str, &[f64]); 7] {
        [
            ("lstm.w_input", &self.lstm.w_input),
            ("lstm.w_hidden", &self.lstm.w_hidden),
            ("lstm.bias", &self.lstm.bias),
            ("decoder.w1", &self.decoder.w1),
            ("decoder.b1", &self.decoder.b1),
            ("decoder.w2", &self.decoder.w2),
            ("decoder.b2", std::slice::from_ref(&self.decoder.b2)),
        ]
    }

    pub fn blocks_mut(&mut self) -> [(&'static str, &mut [f64]); 7] {
        [
            ("lstm.w_input", &mut self.lstm.w_input),
            ("lstm.w_hidden", &mut self.lstm.w_hidden),
            ("lstm.bias", &mut self.lstm.bias),
            ("decoder.w1", &mut self.decoder.w1),
            ("decoder.b1", &mut self.decoder.b1),
            ("decoder.w2", &mut self.decoder.w2),
            ("decoder.b2", std::slice::from_mut(&mut self.decoder.b2)),
        ]
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.blocks().into_iter().flat_map(|(_, b)| b.iter().copied())
    }

    pub fn num_params(&self) -> usize {
        self.blocks().iter().map(|(_, b)| b.len()).sum()
    }

    pub fn global_norm(&self) -> f64 {
        self.values().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        for (_, b) in self.blocks_mut() {
            b.iter_mut().for_each(|v| *v *= factor);
        }
    }

    /// Rescale in place so the global L2 norm is at most `max_norm`.
    /// Returns the norm before clipping.
    pub fn clip_global_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.global_norm();
        if norm > max_norm && norm > 0.0 {
            self.scale(max_norm / norm);
        }
        norm
    }

    pub fn check_finite(&self) -> Result<()> {
        for (name, b) in self.blocks() {
            if b.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(name.to_string()));
            }
        }
        Ok(())
    }

    pub(crate) fn same_shape(&self, other: &Self) -> bool {
        self.blocks().iter().zip(other.blocks().iter()).all(|(a, b)| a.1.len() == b.1.len())
            && self.lstm.input == other.lstm.input
            && self.lstm.hidden == other.lstm.hidden
    }
}

/// Adam moment estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: PolicyWeights,
    pub v: PolicyWeights,
    pub step: u64,
}

/// The trainable sampling policy plus its optimizer state.
///
/// `version` increases on every parameter update so cached forward passes
/// can be matched against the weights that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentParams {
    pub weights: PolicyWeights,
    pub adam: AdamState,
    pub version: u64,
}

impl AgentParams {
    pub fn new(weights: PolicyWeights) -> Self {
        let m = weights.zeros_like();
        let v = weights.zeros_like();
        Self { weights, adam: AdamState { m, v, step: 0 }, version: 0 }
    }

    pub fn init<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Self {
        Self::new(PolicyWeights::init(dim, rng))
    }

    pub fn feature_dim(&self) -> usize {
        self.weights.feature_dim()
    }

    pub fn hidden(&self) -> usize {
        self.weights.lstm.hidden
    }
}
