use std::fmt;
use std::str::FromStr;

use super::trace::{ReadWriteTrace, TraceEvent};
use crate::error::{NastError, Result};
use crate::lattice::{collapse, collapse_after};
use crate::model::{moment, IncrementalDecoder, NastModel};
use crate::numeric::Scalar;
use crate::vocab::{TokenId, BLANK};

/// How a decoded chunk is merged into the emitted prefix.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum CollapseMode {
    /// Collapse the chunk on its own and drop its first token when it equals the
    /// last emitted token.
    #[default]
    PaperLiteral,
    /// Carry the last raw symbol (blank included) across chunk boundaries, which
    /// reproduces collapsing the whole alignment at once.
    Exact,
}

impl FromStr for CollapseMode {
    type Err = NastError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper-literal" => Ok(Self::PaperLiteral),
            "exact" => Ok(Self::Exact),
            other => Err(NastError::Config(format!(
                "unknown collapse mode {other:?} (expected paper-literal or exact)"
            ))),
        }
    }
}

impl fmt::Display for CollapseMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::PaperLiteral => "paper-literal",
            Self::Exact => "exact",
        })
    }
}

/// Produces the raw argmax alignment of successive chunks.
pub trait ChunkDecoder {
    fn lambda(&self) -> usize;
    fn push_source(&mut self, token: TokenId) -> Result<()>;
    /// Raw alignment of the next undecoded chunk with `moment` source tokens visible.
    fn decode_next_chunk(&mut self, moment: usize) -> Result<Vec<TokenId>>;
}

/// First index of the maximum of each `cols`-wide row.
pub(crate) fn argmax_rows<T: Scalar>(x: &[T], cols: usize) -> Vec<TokenId> {
    x.chunks(cols)
        .map(|row| {
            let mut best = 0;
            for (v, &lp) in row.iter().enumerate() {
                if lp > row[best] {
                    best = v;
                }
            }
            best as TokenId
        })
        .collect()
}

/// Model-backed decoder over cached encoder and decoder states.
pub struct ModelChunkDecoder<'m, T: Scalar = f32> {
    inner: IncrementalDecoder<'m, T>,
    lambda: usize,
    vocab: usize,
}

impl<'m, T: Scalar> ModelChunkDecoder<'m, T> {
    pub fn new(model: &'m NastModel<T>) -> Self {
        Self {
            inner: IncrementalDecoder::new(model),
            lambda: model.config().lambda,
            vocab: model.config().vocab_size,
        }
    }
}

impl<T: Scalar> ChunkDecoder for ModelChunkDecoder<'_, T> {
    fn lambda(&self) -> usize {
        self.lambda
    }

    fn push_source(&mut self, token: TokenId) -> Result<()> {
        self.inner.push_source(token)
    }

    fn decode_next_chunk(&mut self, moment: usize) -> Result<Vec<TokenId>> {
        let lp = self.inner.decode_next_chunk(moment)?;
        Ok(argmax_rows(&lp, self.vocab))
    }
}

/// Replays a fixed raw alignment, for model-free testing.
pub struct ScriptedDecoder {
    lambda: usize,
    raw: Vec<TokenId>,
    read: usize,
    next_chunk: usize,
}

impl ScriptedDecoder {
    pub fn new(raw: Vec<TokenId>, lambda: usize) -> Result<Self> {
        if lambda == 0 || raw.len() % lambda != 0 {
            return Err(NastError::contract(format!(
                "raw alignment of length {} is not a whole number of {lambda}-position chunks",
                raw.len()
            )));
        }
        Ok(Self {
            lambda,
            raw,
            read: 0,
            next_chunk: 0,
        })
    }

    pub fn source_len(&self) -> usize {
        self.raw.len() / self.lambda
    }
}

impl ChunkDecoder for ScriptedDecoder {
    fn lambda(&self) -> usize {
        self.lambda
    }

    fn push_source(&mut self, _token: TokenId) -> Result<()> {
        if self.read == self.source_len() {
            return Err(NastError::contract("script has no more source tokens"));
        }
        self.read += 1;
        Ok(())
    }

    fn decode_next_chunk(&mut self, moment: usize) -> Result<Vec<TokenId>> {
        if self.next_chunk >= self.read || moment > self.read {
            return Err(NastError::contract("chunk decoded before its source arrived"));
        }
        let c = self.next_chunk;
        self.next_chunk += 1;
        Ok(self.raw[c * self.lambda..(c + 1) * self.lambda].to_vec())
    }
}

/// One decoded chunk.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChunkOutput {
    /// 1-based chunk index.
    pub chunk: usize,
    /// Source tokens read when the chunk was decoded.
    pub moment: usize,
    /// Argmax symbol per position, blanks included.
    pub raw: Vec<TokenId>,
    /// The chunk collapsed on its own.
    pub collapsed: Vec<TokenId>,
    /// Tokens appended to the output by this chunk.
    pub emitted: Vec<TokenId>,
}

/// Merges one chunk's raw alignment into `prefix`; returns the newly emitted tokens.
fn merge(mode: CollapseMode, prefix: &[TokenId], carry: TokenId, raw: &[TokenId]) -> Vec<TokenId> {
    match mode {
        CollapseMode::Exact => collapse_after(carry, raw),
        CollapseMode::PaperLiteral => {
            let mut c = collapse(raw);
            if let (Some(&last), Some(&first)) = (prefix.last(), c.first()) {
                if last == first {
                    c.remove(0);
                }
            }
            c
        }
    }
}

/// Merges consecutive `lambda`-sized chunks of `raw` under `mode`.
pub fn merge_chunks(raw: &[TokenId], lambda: usize, mode: CollapseMode) -> Vec<TokenId> {
    let mut out = Vec::new();
    let mut carry = BLANK;
    for chunk in raw.chunks(lambda) {
        let e = merge(mode, &out, carry, chunk);
        out.extend(e);
        carry = *chunk.last().expect("non-empty chunk");
    }
    out
}

/// Offline decoding of a full raw alignment: global collapse in exact mode,
/// chunk-by-chunk merging in paper-literal mode.
pub fn offline_reference_decode(raw: &[TokenId], lambda: usize, mode: CollapseMode) -> Vec<TokenId> {
    match mode {
        CollapseMode::Exact => collapse(raw),
        CollapseMode::PaperLiteral => merge_chunks(raw, lambda, mode),
    }
}

/// Full-source forward pass of `model` at chunk wait `k`, then [`offline_reference_decode`].
pub fn offline_decode<T: Scalar>(
    model: &NastModel<T>,
    source: &[TokenId],
    k: usize,
    mode: CollapseMode,
) -> Result<Vec<TokenId>> {
    let lp = model.log_probs(source, k)?;
    let raw = argmax_rows(lp.data(), lp.cols());
    Ok(offline_reference_decode(&raw, model.config().lambda, mode))
}

/// Incremental simultaneous-translation state for one sentence.
pub struct StreamSession<D: ChunkDecoder> {
    decoder: D,
    k: usize,
    mode: CollapseMode,
    prefix: Vec<TokenId>,
    carry: TokenId,
    read: usize,
    decoded: usize,
    finalized: bool,
    trace: ReadWriteTrace,
    chunks: Vec<ChunkOutput>,
}

impl<'m, T: Scalar> StreamSession<ModelChunkDecoder<'m, T>> {
    pub fn for_model(model: &'m NastModel<T>, k: usize, mode: CollapseMode) -> Self {
        Self::new(ModelChunkDecoder::new(model), k, mode)
    }
}

impl<D: ChunkDecoder> StreamSession<D> {
    pub fn new(decoder: D, k: usize, mode: CollapseMode) -> Self {
        Self {
            decoder,
            k,
            mode,
            prefix: Vec::new(),
            carry: BLANK,
            read: 0,
            decoded: 0,
            finalized: false,
            trace: ReadWriteTrace::default(),
            chunks: Vec::new(),
        }
    }

    pub fn prefix(&self) -> &[TokenId] {
        &self.prefix
    }

    pub fn chunks(&self) -> &[ChunkOutput] {
        &self.chunks
    }

    pub fn tokens_read(&self) -> usize {
        self.read
    }

    pub fn is_finalized(&self) -> bool {
        self.finalized
    }

    fn decode_chunk(&mut self, moment: usize) -> Result<Vec<TokenId>> {
        let raw = self.decoder.decode_next_chunk(moment)?;
        if raw.len() != self.decoder.lambda() {
            return Err(NastError::contract("decoder returned a chunk of the wrong size"));
        }
        self.decoded += 1;
        let emitted = merge(self.mode, &self.prefix, self.carry, &raw);
        self.carry = *raw.last().expect("lambda >= 1");
        for &token in &emitted {
            self.trace.push(TraceEvent::Write {
                token,
                tokens_read: self.read,
            });
        }
        self.prefix.extend_from_slice(&emitted);
        self.chunks.push(ChunkOutput {
            chunk: self.decoded,
            moment,
            collapsed: collapse(&raw),
            raw,
            emitted: emitted.clone(),
        });
        Ok(emitted)
    }

    /// Reads one source token; decodes chunk `r − k` once `r ≥ k + 1` tokens are read.
    pub fn push(&mut self, token: TokenId) -> Result<Vec<TokenId>> {
        if self.finalized {
            return Err(NastError::SessionState("push after finalize"));
        }
        self.decoder.push_source(token)?;
        self.read += 1;
        self.trace.push(TraceEvent::Read {
            index: self.read,
            tokens_read: self.read,
        });
        if self.read > self.k {
            debug_assert_eq!(self.decoded + 1, self.read - self.k);
            return self.decode_chunk(self.read);
        }
        Ok(Vec::new())
    }

    /// Decodes every remaining chunk against the full source and closes the session.
    pub fn finalize(&mut self) -> Result<(Vec<TokenId>, ReadWriteTrace)> {
        if self.finalized {
            return Err(NastError::SessionState("finalize called twice"));
        }
        if self.read == 0 {
            return Err(NastError::SessionState("finalize before any source token"));
        }
        let mut out = Vec::new();
        while self.decoded < self.read {
            debug_assert_eq!(moment(self.decoded + 1, self.k, self.read)?, self.read);
            out.extend(self.decode_chunk(self.read)?);
        }
        self.finalized = true;
        Ok((out, self.trace.clone()))
    }
}

/// Streams `source` through a fresh session, one token per push, then finalizes.
pub fn stream_translate<T: Scalar>(
    model: &NastModel<T>,
    source: &[TokenId],
    k: usize,
    mode: CollapseMode,
) -> Result<(Vec<TokenId>, ReadWriteTrace)> {
    let mut session = StreamSession::for_model(model, k, mode);
    let mut out = Vec::new();
    for &t in source {
        out.extend(session.push(t)?);
    }
    let (tail, trace) = session.finalize()?;
    out.extend(tail);
    Ok((out, trace))
}

#[cfg(test)]
mod tests {
    use super::*;

    const A: TokenId = 3;
    const B: TokenId = 4;
    const E: TokenId = BLANK;

    fn stream(raw: &[TokenId], lambda: usize, k: usize, mode: CollapseMode) -> Vec<TokenId> {
        let dec = ScriptedDecoder::new(raw.to_vec(), lambda).unwrap();
        let n = dec.source_len();
        let mut s = StreamSession::new(dec, k, mode);
        let mut out = Vec::new();
        for _ in 0..n {
            out.extend(s.push(7).unwrap());
        }
        out.extend(s.finalize().unwrap().0);
        out
    }

    #[test]
    fn divergence_case() {
        let raw = [A, E, A, B];
        assert_eq!(offline_reference_decode(&raw, 2, CollapseMode::PaperLiteral), [A, B]);
        assert_eq!(offline_reference_decode(&raw, 2, CollapseMode::Exact), [A, A, B]);
        assert_eq!(stream(&raw, 2, 0, CollapseMode::PaperLiteral), [A, B]);
        assert_eq!(stream(&raw, 2, 1, CollapseMode::Exact), [A, A, B]);
    }

    #[test]
    fn push_examples() {
        let mut s = StreamSession::new(ScriptedDecoder::new(vec![A, A, E, E], 2).unwrap(), 0, CollapseMode::PaperLiteral);
        assert_eq!(s.push(9).unwrap(), [A]);
        assert!(s.push(9).unwrap().is_empty());
        let (rest, trace) = s.finalize().unwrap();
        assert!(rest.is_empty());
        assert_eq!(trace.policy(), [1]);
    }

    #[test]
    fn repeated_boundary_token_is_merged() {
        // prefix ends with A; next chunk collapses to [A, B]
        assert_eq!(stream(&[A, A, A, B], 2, 0, CollapseMode::PaperLiteral), [A, B]);
        assert_eq!(stream(&[A, A, A, B], 2, 0, CollapseMode::Exact), [A, B]);
    }

    #[test]
    fn finalize_schedule() {
        let dec = ScriptedDecoder::new(vec![A, B, A, B, A], 1).unwrap();
        let mut s = StreamSession::new(dec, 2, CollapseMode::Exact);
        for _ in 0..5 {
            s.push(7).unwrap();
        }
        assert_eq!(s.chunks().len(), 3);
        s.finalize().unwrap();
        let late: Vec<usize> = s.chunks()[3..].iter().map(|c| c.chunk).collect();
        assert_eq!(late, [4, 5]);
        assert!(s.chunks().iter().all(|c| c.moment == (c.chunk + 2).min(5)));
    }

    #[test]
    fn state_errors() {
        let mut s = StreamSession::new(ScriptedDecoder::new(vec![A], 1).unwrap(), 0, CollapseMode::Exact);
        assert!(matches!(s.finalize(), Err(NastError::SessionState(_))));
        s.push(7).unwrap();
        s.finalize().unwrap();
        assert!(matches!(s.finalize(), Err(NastError::SessionState(_))));
        assert!(matches!(s.push(7), Err(NastError::SessionState(_))));
    }
}
