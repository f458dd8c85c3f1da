use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::params::AgentParams;
use crate::error::{Error, Result};

/// Position of a ChaCha stream: its seed and word offset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngPosition {
    pub seed: [u8; 32],
    pub stream: u64,
    /// Decimal string; JSON numbers cannot carry 128 bits.
    pub word_pos: String,
}

impl RngPosition {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        Self { seed: rng.get_seed(), stream: rng.get_stream(), word_pos: rng.get_word_pos().to_string() }
    }

    pub fn restore(&self) -> Result<ChaCha8Rng> {
        let pos: u128 =
            self.word_pos.parse().map_err(|_| Error::Config(format!("bad rng word position {:?}", self.word_pos)))?;
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(pos);
        Ok(rng)
    }
}

/// Serialized agent: weights, Adam moments and step, and the RNG stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentCheckpoint {
    pub agent: AgentParams,
    pub rng: RngPosition,
}

impl AgentCheckpoint {
    pub fn new(agent: &AgentParams, rng: &ChaCha8Rng) -> Self {
        Self { agent: agent.clone(), rng: RngPosition::capture(rng) }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut agent = AgentParams::init(3, &mut rng);
        agent.adam.m.decoder.b2 = 1.0 / 3.0;
        agent.adam.v.lstm.bias[2] = std::f64::consts::PI * 1e-300;
        agent.adam.step = 17;
        let _: [u64; 5] = rng.random();
        let ck = AgentCheckpoint::new(&agent, &rng);
        let back = AgentCheckpoint::from_json(&ck.to_json().unwrap()).unwrap();
        assert_eq!(back, ck);
        for (a, b) in back.agent.weights.values().zip(agent.weights.values()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        let mut resumed = back.rng.restore().unwrap();
        assert_eq!(resumed.random::<u64>(), rng.random::<u64>());
    }
}
