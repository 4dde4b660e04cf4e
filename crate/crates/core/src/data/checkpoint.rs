//! Binary checkpoint: magic, version, embedded config text, named f32 tensors.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CheckpointError, NastError, Result};
use crate::model::{ModelConfig, NastModel, ParamSet};
use crate::numeric::Tensor;
use crate::train::TrainConfig;
use crate::vocab::Vocab;

pub const MAGIC: &[u8; 8] = b"NASTCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Embedded {
    model: ModelConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    train: Option<TrainConfig>,
    vocab: VocabSection,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct VocabSection {
    tokens: Vec<String>,
}

/// A trained model together with its vocabulary and, when it came out of
/// training, the training hyperparameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: NastModel<f32>,
    pub vocab: Vocab,
    pub train: Option<TrainConfig>,
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

pub fn checkpoint_to_bytes(ckpt: &Checkpoint) -> Result<Vec<u8>> {
    let (model, vocab) = (&ckpt.model, &ckpt.vocab);
    let embedded = Embedded {
        model: model.config().clone(),
        train: ckpt.train.clone(),
        vocab: VocabSection {
            tokens: vocab.corpus_tokens().map(str::to_string).collect(),
        },
    };
    let text = toml::to_string(&embedded).map_err(|e| CheckpointError::BadConfig(e.to_string()))?;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, FORMAT_VERSION);
    put_u32(&mut out, text.len() as u32);
    out.extend_from_slice(text.as_bytes());
    let params = model.params();
    put_u32(&mut out, params.len() as u32);
    for (name, t) in params.iter() {
        put_u32(&mut out, name.len() as u32);
        out.extend_from_slice(name.as_bytes());
        put_u32(&mut out, t.shape().len() as u32);
        for &d in t.shape() {
            put_u32(&mut out, d as u32);
        }
        for &v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], CheckpointError> {
        if self.buf.len() - self.pos < n {
            return Err(CheckpointError::Truncated(what.to_string()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

pub fn checkpoint_from_bytes(buf: &[u8]) -> Result<Checkpoint> {
    if buf.len() < MAGIC.len() || &buf[..MAGIC.len()] != MAGIC {
        return Err(CheckpointError::BadMagic.into());
    }
    let mut r = Reader { buf, pos: MAGIC.len() };
    let version = r.u32("header")?;
    if version != FORMAT_VERSION {
        return Err(CheckpointError::VersionMismatch {
            found: version,
            expected: FORMAT_VERSION,
        }
        .into());
    }
    let len = r.u32("header")? as usize;
    let text = std::str::from_utf8(r.take(len, "config")?)
        .map_err(|e| CheckpointError::BadConfig(e.to_string()))?;
    let embedded: Embedded = toml::from_str(text).map_err(|e| CheckpointError::BadConfig(e.to_string()))?;
    embedded
        .model
        .validate()
        .map_err(|e| CheckpointError::BadConfig(e.to_string()))?;
    if let Some(train) = &embedded.train {
        train.validate().map_err(|e| CheckpointError::BadConfig(e.to_string()))?;
    }
    let vocab = Vocab::from_tokens(&embedded.vocab.tokens).map_err(|e| CheckpointError::BadConfig(e.to_string()))?;
    if vocab.len() != embedded.model.vocab_size {
        return Err(CheckpointError::BadConfig(format!(
            "vocabulary has {} symbols, model expects {}",
            vocab.len(),
            embedded.model.vocab_size
        ))
        .into());
    }

    let expected = crate::model::param_shapes(&embedded.model);
    let count = r.u32("tensor table")? as usize;
    let mut params = ParamSet::default();
    for _ in 0..count {
        let name_len = r.u32("tensor table")? as usize;
        let name = String::from_utf8(r.take(name_len, "tensor name")?.to_vec())
            .map_err(|_| CheckpointError::BadConfig("tensor name is not UTF-8".into()))?;
        let Some((_, shape)) = expected.iter().find(|(n, _)| *n == name) else {
            return Err(CheckpointError::UnknownTensor(name).into());
        };
        if params.position(&name).is_some() {
            return Err(CheckpointError::BadConfig(format!("tensor `{name}` appears twice")).into());
        }
        let rank = r.u32(&name)? as usize;
        let mut dims = Vec::with_capacity(rank.min(8));
        for _ in 0..rank {
            dims.push(r.u32(&name)? as usize);
        }
        if &dims != shape {
            return Err(CheckpointError::ShapeMismatch {
                name,
                found: dims,
                expected: shape.clone(),
            }
            .into());
        }
        let n: usize = dims.iter().product();
        let raw = r.take(n * 4, &name)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        params.insert(name, Tensor::from_parts(dims, data));
    }
    // Restore canonical parameter order.
    let mut ordered = ParamSet::default();
    for (name, _) in &expected {
        let Some(pos) = params.position(name) else {
            return Err(CheckpointError::MissingTensor(name.clone()).into());
        };
        ordered.insert(name.clone(), params.tensors()[pos].clone());
    }
    let model = NastModel::from_params(embedded.model.clone(), ordered)?;
    Ok(Checkpoint {
        model,
        vocab,
        train: embedded.train,
    })
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let bytes = checkpoint_to_bytes(ckpt)?;
    fs::write(path, bytes).map_err(|e| NastError::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| NastError::io(path, e))?;
    checkpoint_from_bytes(&bytes)
}
