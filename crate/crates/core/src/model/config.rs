use serde::{Deserialize, Serialize};

use crate::error::{NastError, Result};
use crate::vocab::NUM_RESERVED;

/// Architecture and decoding geometry of a model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Size of the joint, blank-extended vocabulary.
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub enc_layers: usize,
    pub dec_layers: usize,
    pub heads: usize,
    pub ffn_dim: usize,
    /// Decoder positions per source token.
    pub lambda: usize,
    /// Chunk wait used in training; inference may override it.
    pub k: usize,
    pub dropout: f64,
    /// Longest accepted source sentence.
    pub max_positions: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            vocab_size: 35,
            embed_dim: 64,
            enc_layers: 2,
            dec_layers: 2,
            heads: 4,
            ffn_dim: 128,
            lambda: 3,
            k: 0,
            dropout: 0.0,
            max_positions: 256,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(NastError::Config(m));
        if self.lambda < 1 {
            return fail("lambda must be at least 1".into());
        }
        if self.heads == 0 || self.embed_dim % self.heads != 0 {
            return fail(format!(
                "embed_dim {} is not divisible by {} heads",
                self.embed_dim, self.heads
            ));
        }
        if self.vocab_size <= NUM_RESERVED {
            return fail(format!("vocab_size {} leaves no corpus tokens", self.vocab_size));
        }
        if self.embed_dim == 0 || self.ffn_dim == 0 || self.max_positions == 0 {
            return fail("dimensions must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail(format!("dropout {} outside [0, 1)", self.dropout));
        }
        Ok(())
    }
}
