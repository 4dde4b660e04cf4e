//! The streaming transformer: a causal encoder and a chunked, upsampled,
//! non-autoregressive decoder with chunk wait-k cross-attention.

mod config;
mod forward;
mod incremental;
mod masks;
mod params;

pub use config::ModelConfig;
pub use forward::{positional_encoding, posterior_from_tensor, upsampled_ids, ForwardOptions, ForwardPass};
pub use incremental::IncrementalDecoder;
pub use masks::{build_masks, moment, position_moment, Masks};
pub use params::{init_params, param_shapes, ParamSet};

use crate::error::{CheckpointError, NastError, Result};
use crate::numeric::Scalar;
use crate::vocab::TokenId;

/// Hidden-state grid of the decoder: chunk `i` (1-based) owns positions
/// `(i−1)λ+1 ..= iλ`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DecoderGrid {
    pub lambda: usize,
    pub src_len: usize,
}

impl DecoderGrid {
    pub fn frames(&self) -> usize {
        self.lambda * self.src_len
    }

    /// 1-based `(chunk, offset)` to 1-based position.
    pub fn position(&self, chunk: usize, offset: usize) -> usize {
        debug_assert!((1..=self.src_len).contains(&chunk) && (1..=self.lambda).contains(&offset));
        (chunk - 1) * self.lambda + offset
    }

    /// 1-based position to 1-based `(chunk, offset)`.
    pub fn chunk_of(&self, pos: usize) -> (usize, usize) {
        ((pos - 1) / self.lambda + 1, (pos - 1) % self.lambda + 1)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NastModel<T: Scalar = f32> {
    config: ModelConfig,
    params: ParamSet<T>,
}

impl<T: Scalar> NastModel<T> {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let params = init_params(&config, seed);
        Ok(Self { config, params })
    }

    /// Wraps existing parameters after checking names and shapes against `config`.
    pub fn from_params(config: ModelConfig, params: ParamSet<T>) -> Result<Self> {
        config.validate()?;
        let expected = param_shapes(&config);
        for (name, shape) in &expected {
            let Some(pos) = params.position(name) else {
                return Err(CheckpointError::MissingTensor(name.clone()).into());
            };
            let found = params.tensors()[pos].shape();
            if found != shape.as_slice() {
                return Err(CheckpointError::ShapeMismatch {
                    name: name.clone(),
                    found: found.to_vec(),
                    expected: shape.clone(),
                }
                .into());
            }
        }
        if let Some(extra) = params.names().iter().find(|n| !expected.iter().any(|(e, _)| e == *n)) {
            return Err(CheckpointError::UnknownTensor(extra.clone()).into());
        }
        Ok(Self { config, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Same parameters with a different stored chunk wait.
    pub fn with_k(mut self, k: usize) -> Self {
        self.config.k = k;
        self
    }

    pub fn params(&self) -> &ParamSet<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet<T> {
        &mut self.params
    }

    pub fn cast<U: Scalar>(&self) -> NastModel<U> {
        NastModel {
            config: self.config.clone(),
            params: self.params.cast(),
        }
    }

    pub fn grid(&self, src_len: usize) -> DecoderGrid {
        DecoderGrid {
            lambda: self.config.lambda,
            src_len,
        }
    }

    pub(crate) fn check_source(&self, source: &[TokenId]) -> Result<()> {
        if source.is_empty() {
            return Err(NastError::contract("empty source sentence"));
        }
        if source.len() > self.config.max_positions {
            return Err(NastError::TooLong {
                len: source.len(),
                max: self.config.max_positions,
            });
        }
        if let Some(&bad) = source.iter().find(|&&t| t as usize >= self.config.vocab_size) {
            return Err(NastError::contract(format!("source id {bad} outside vocabulary")));
        }
        Ok(())
    }
}
