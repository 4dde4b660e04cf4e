//! Incremental inference: the encoder grows one source token at a time and the
//! decoder runs one chunk at a time against cached keys and values.
//!
//! Each step calls the same row-wise kernels as the tape forward pass over the
//! same rows, so cached results are bitwise identical to a full recomputation.

use super::forward::positional_encoding;
use super::params::{AttnNames, LayerNames, DEC_LN, EMBED, ENC_LN, OUT_B, OUT_W};
use super::NastModel;
use crate::error::{NastError, Result};
use crate::numeric::{kernels, Scalar};
use crate::vocab::TokenId;

#[derive(Default, Clone)]
struct KvCache<T> {
    keys: Vec<T>,
    values: Vec<T>,
}

impl<T: Scalar> KvCache<T> {
    fn rows(&self, d: usize) -> usize {
        self.keys.len() / d
    }
}

/// Cached encoder and decoder state for one sentence.
pub struct IncrementalDecoder<'m, T: Scalar = f32> {
    model: &'m NastModel<T>,
    source: Vec<TokenId>,
    enc_self: Vec<KvCache<T>>,
    /// Cross-attention keys/values of every decoder layer over the encoder outputs.
    cross: Vec<KvCache<T>>,
    dec_self: Vec<KvCache<T>>,
    chunks_decoded: usize,
}

impl<'m, T: Scalar> IncrementalDecoder<'m, T> {
    pub fn new(model: &'m NastModel<T>) -> Self {
        let cfg = model.config();
        Self {
            model,
            source: Vec::new(),
            enc_self: vec![KvCache::default(); cfg.enc_layers],
            cross: vec![KvCache::default(); cfg.dec_layers],
            dec_self: vec![KvCache::default(); cfg.dec_layers],
            chunks_decoded: 0,
        }
    }

    pub fn source_len(&self) -> usize {
        self.source.len()
    }

    pub fn chunks_decoded(&self) -> usize {
        self.chunks_decoded
    }

    fn param(&self, name: &str) -> &[T] {
        self.model.params().get(name).data()
    }

    fn lin(&self, x: &[T], w: &str, b: &str) -> Vec<T> {
        self.lin_opt(x, w, Some(b))
    }

    fn lin_opt(&self, x: &[T], w: &str, b: Option<&str>) -> Vec<T> {
        let wt = self.model.params().get(w);
        let rows = x.len() / wt.rows();
        kernels::linear(x, wt.data(), b.map(|b| self.param(b)), rows, wt.rows(), wt.cols())
    }

    fn ln(&self, x: &[T], names: (&str, &str)) -> Vec<T> {
        let d = self.model.config().embed_dim;
        kernels::layer_norm(x, self.param(names.0), self.param(names.1), d).0
    }

    fn add_in_place(h: &mut [T], delta: &[T]) {
        for (a, &b) in h.iter_mut().zip(delta) {
            *a = *a + b;
        }
    }

    fn embed(&self, ids: &[TokenId], start: usize) -> Vec<T> {
        let d = self.model.config().embed_dim;
        let table = self.model.params().get(EMBED);
        let pe = positional_encoding::<T>(start, ids.len(), d);
        let mut out = Vec::with_capacity(ids.len() * d);
        for (r, &id) in ids.iter().enumerate() {
            out.extend(table.row(id as usize).iter().zip(&pe[r * d..(r + 1) * d]).map(|(&e, &p)| e + p));
        }
        out
    }

    /// Self-attention of `rows` new query rows against the cache after appending
    /// their own keys/values; every new row sees `horizon` keys.
    fn cached_attention(&self, cache: &mut KvCache<T>, a: &[T], names: &AttnNames, horizon: usize) -> Vec<T> {
        let cfg = self.model.config();
        let d = cfg.embed_dim;
        let q = self.lin(a, &names.wq, &names.bq);
        cache.keys.extend(self.lin_opt(a, &names.wk, None));
        cache.values.extend(self.lin(a, &names.wv, &names.bv));
        let rows = a.len() / d;
        let horizons = vec![horizon; rows];
        let (out, _) = kernels::attention(
            &q,
            &cache.keys[..horizon * d],
            &cache.values[..horizon * d],
            d,
            cfg.heads,
            &horizons,
        );
        self.lin(&out, &names.wo, &names.bo)
    }

    fn ffn(&self, h: &mut Vec<T>, names: &LayerNames) {
        let a = self.ln(h, (&names.ln_ffn.0, &names.ln_ffn.1));
        let f = kernels::relu(&self.lin(&a, &names.w1, &names.b1));
        let f = self.lin(&f, &names.w2, &names.b2);
        Self::add_in_place(h, &f);
    }

    /// Encodes one more source token and extends every decoder layer's cross-attention cache.
    pub fn push_source(&mut self, token: TokenId) -> Result<()> {
        let cfg = self.model.config().clone();
        if self.source.len() >= cfg.max_positions {
            return Err(NastError::TooLong {
                len: self.source.len() + 1,
                max: cfg.max_positions,
            });
        }
        if token as usize >= cfg.vocab_size {
            return Err(NastError::contract(format!("source id {token} outside vocabulary")));
        }
        let pos = self.source.len();
        self.source.push(token);
        let mut h = self.embed(&[token], pos);
        let mut caches = std::mem::take(&mut self.enc_self);
        for (l, cache) in caches.iter_mut().enumerate() {
            let names = LayerNames::new("enc", l);
            let a = self.ln(&h, (&names.ln1.0, &names.ln1.1));
            let att = self.cached_attention(cache, &a, &names.self_attn, pos + 1);
            Self::add_in_place(&mut h, &att);
            self.ffn(&mut h, &names);
        }
        self.enc_self = caches;
        let enc = self.ln(&h, ENC_LN);
        let mut cross = std::mem::take(&mut self.cross);
        for (l, cache) in cross.iter_mut().enumerate() {
            let names = LayerNames::new("dec", l);
            cache.keys.extend(self.lin_opt(&enc, &names.cross_attn.wk, None));
            cache.values.extend(self.lin(&enc, &names.cross_attn.wv, &names.cross_attn.bv));
        }
        self.cross = cross;
        Ok(())
    }

    /// Decodes the next chunk, cross-attending to the first `moment` source tokens.
    /// Returns its `[λ, |V|]` log-probabilities.
    pub fn decode_next_chunk(&mut self, moment: usize) -> Result<Vec<T>> {
        let cfg = self.model.config().clone();
        let d = cfg.embed_dim;
        let chunk = self.chunks_decoded;
        if chunk >= self.source.len() {
            return Err(NastError::contract("no source token left to decode a chunk for"));
        }
        if moment < chunk + 1 || moment > self.source.len() {
            return Err(NastError::contract(format!(
                "chunk {} cannot be decoded after {moment} of {} source tokens",
                chunk + 1,
                self.source.len()
            )));
        }
        let lambda = cfg.lambda;
        let ids = vec![self.source[chunk]; lambda];
        let mut h = self.embed(&ids, chunk * lambda);
        let horizon = (chunk + 1) * lambda;
        let mut self_caches = std::mem::take(&mut self.dec_self);
        for (l, cache) in self_caches.iter_mut().enumerate() {
            let names = LayerNames::new("dec", l);
            let a = self.ln(&h, (&names.ln1.0, &names.ln1.1));
            let att = self.cached_attention(cache, &a, &names.self_attn, horizon);
            Self::add_in_place(&mut h, &att);

            let a = self.ln(&h, (&names.ln_cross.0, &names.ln_cross.1));
            let xa = &names.cross_attn;
            let q = self.lin(&a, &xa.wq, &xa.bq);
            let cross = &self.cross[l];
            debug_assert!(cross.rows(d) >= moment);
            let (out, _) = kernels::attention(
                &q,
                &cross.keys[..moment * d],
                &cross.values[..moment * d],
                d,
                cfg.heads,
                &vec![moment; lambda],
            );
            let att = self.lin(&out, &xa.wo, &xa.bo);
            Self::add_in_place(&mut h, &att);
            self.ffn(&mut h, &names);
        }
        self.dec_self = self_caches;
        let h = self.ln(&h, DEC_LN);
        let logits = self.lin(&h, OUT_W, OUT_B);
        self.chunks_decoded += 1;
        Ok(kernels::log_softmax_rows(&logits, cfg.vocab_size))
    }
}
