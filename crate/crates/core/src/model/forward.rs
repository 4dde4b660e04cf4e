//! Full-sequence forward pass recorded on a [`Tape`].

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::masks::build_masks;
use super::params::{AttnNames, LayerNames, DEC_LN, EMBED, ENC_LN, OUT_B, OUT_W};
use super::NastModel;
use crate::error::Result;
use crate::lattice::{AlignmentPosterior, PosteriorMeta};
use crate::numeric::{Scalar, Tape, Tensor, Var};
use crate::vocab::TokenId;

/// Sinusoidal encoding of absolute positions `start..start + n`, shape `[n, d]`.
pub fn positional_encoding<T: Scalar>(start: usize, n: usize, d: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(n * d);
    for pos in start..start + n {
        for i in 0..d {
            let pair = (i / 2) as f64;
            let angle = pos as f64 / 10000f64.powf(2.0 * pair / d as f64);
            let v = if i % 2 == 0 { angle.sin() } else { angle.cos() };
            out.push(T::from_f64_lossy(v));
        }
    }
    out
}

/// Decoder input ids: every source token repeated `lambda` times.
pub fn upsampled_ids(source: &[TokenId], lambda: usize) -> Vec<TokenId> {
    source
        .iter()
        .flat_map(|&t| std::iter::repeat(t).take(lambda))
        .collect()
}

pub struct ForwardOptions<'a> {
    /// Chunk wait applied to cross-attention.
    pub k: usize,
    /// Decoder input ids per position (defaults to the upsampled source). Glancing
    /// passes a copy with some positions replaced.
    pub decoder_ids: Option<&'a [TokenId]>,
    /// Enables dropout (at the configured rate) when set.
    pub dropout_rng: Option<&'a mut ChaCha8Rng>,
    pub requires_grad: bool,
}

impl ForwardOptions<'_> {
    pub fn inference(k: usize) -> Self {
        Self {
            k,
            decoder_ids: None,
            dropout_rng: None,
            requires_grad: false,
        }
    }
}

/// Handles produced by [`NastModel::forward_on_tape`].
pub struct ForwardPass {
    /// `[λ|x|, |V|]` log-probabilities.
    pub log_probs: Var,
    /// One leaf per parameter, in parameter order.
    pub param_vars: Vec<Var>,
    pub encoder_states: Var,
}

struct Ctx<'t, 'r, T: Scalar> {
    tape: &'t mut Tape<T>,
    vars: Vec<Var>,
    model: &'t NastModel<T>,
    dropout: Option<&'r mut ChaCha8Rng>,
}

impl<T: Scalar> Ctx<'_, '_, T> {
    fn p(&self, name: &str) -> Var {
        self.vars[self.model.params().position(name).expect("known parameter")]
    }

    fn ln(&mut self, x: Var, names: (&str, &str)) -> Var {
        let (g, b) = (self.p(names.0), self.p(names.1));
        self.tape.layer_norm(x, g, b)
    }

    fn lin(&mut self, x: Var, w: &str, b: &str) -> Var {
        let (w, b) = (self.p(w), self.p(b));
        self.tape.linear(x, w, Some(b))
    }

    fn drop(&mut self, x: Var) -> Var {
        let rate = self.model.config().dropout;
        let Some(rng) = self.dropout.as_deref_mut() else { return x };
        if rate <= 0.0 {
            return x;
        }
        let n = self.tape.value(x).numel();
        let keep = T::from_f64_lossy(1.0 / (1.0 - rate));
        let mask = (0..n)
            .map(|_| if rng.gen::<f64>() < rate { T::zero() } else { keep })
            .collect();
        self.tape.dropout(x, mask)
    }

    fn attention(&mut self, query_in: Var, kv_in: Var, names: &AttnNames, horizons: &[usize]) -> Var {
        let heads = self.model.config().heads;
        let q = self.lin(query_in, &names.wq, &names.bq);
        let wk = self.p(&names.wk);
        let k = self.tape.linear(kv_in, wk, None);
        let v = self.lin(kv_in, &names.wv, &names.bv);
        let a = self.tape.attention(q, k, v, heads, horizons);
        self.lin(a, &names.wo, &names.bo)
    }

    fn ffn(&mut self, h: Var, names: &LayerNames) -> Var {
        let a = self.ln(h, (&names.ln_ffn.0, &names.ln_ffn.1));
        let f = self.lin(a, &names.w1, &names.b1);
        let f = self.tape.relu(f);
        let f = self.lin(f, &names.w2, &names.b2);
        let f = self.drop(f);
        self.tape.add(h, f)
    }

    fn embed(&mut self, ids: &[TokenId]) -> Var {
        let d = self.model.config().embed_dim;
        let table = self.p(EMBED);
        let idx: Vec<usize> = ids.iter().map(|&i| i as usize).collect();
        let e = self.tape.embedding(table, &idx);
        let pe = self
            .tape
            .constant(Tensor::from_parts(vec![ids.len(), d], positional_encoding(0, ids.len(), d)));
        let h = self.tape.add(e, pe);
        self.drop(h)
    }
}

impl<T: Scalar> NastModel<T> {
    /// Records the encoder and decoder on `tape` and returns the output handles.
    pub fn forward_on_tape(
        &self,
        tape: &mut Tape<T>,
        source: &[TokenId],
        opts: ForwardOptions<'_>,
    ) -> Result<ForwardPass> {
        self.check_source(source)?;
        let cfg = self.config();
        let frames = source.len() * cfg.lambda;
        let default_ids;
        let dec_ids = match opts.decoder_ids {
            Some(ids) => {
                assert_eq!(ids.len(), frames, "one decoder input per position");
                ids
            }
            None => {
                default_ids = upsampled_ids(source, cfg.lambda);
                &default_ids
            }
        };
        let masks = build_masks(source.len(), cfg.lambda, opts.k);
        let vars = self
            .params()
            .tensors()
            .iter()
            .map(|t| tape.leaf(t.clone(), opts.requires_grad))
            .collect::<Vec<_>>();
        let mut cx = Ctx {
            tape,
            vars: vars.clone(),
            model: self,
            dropout: opts.dropout_rng,
        };

        let mut h = cx.embed(source);
        for l in 0..cfg.enc_layers {
            let names = LayerNames::new("enc", l);
            let a = cx.ln(h, (&names.ln1.0, &names.ln1.1));
            let att = cx.attention(a, a, &names.self_attn, &masks.encoder);
            let att = cx.drop(att);
            h = cx.tape.add(h, att);
            h = cx.ffn(h, &names);
        }
        let enc = cx.ln(h, ENC_LN);

        let mut h = cx.embed(dec_ids);
        for l in 0..cfg.dec_layers {
            let names = LayerNames::new("dec", l);
            let a = cx.ln(h, (&names.ln1.0, &names.ln1.1));
            let att = cx.attention(a, a, &names.self_attn, &masks.decoder);
            let att = cx.drop(att);
            h = cx.tape.add(h, att);
            let a = cx.ln(h, (&names.ln_cross.0, &names.ln_cross.1));
            let att = cx.attention(a, enc, &names.cross_attn, &masks.cross);
            let att = cx.drop(att);
            h = cx.tape.add(h, att);
            h = cx.ffn(h, &names);
        }
        let h = cx.ln(h, DEC_LN);
        let logits = cx.lin(h, OUT_W, OUT_B);
        let log_probs = cx.tape.log_softmax(logits);
        Ok(ForwardPass {
            log_probs,
            param_vars: vars,
            encoder_states: enc,
        })
    }

    /// Encoder output states, `[|x|, d]`.
    pub fn encoder_forward(&self, source: &[TokenId]) -> Result<Tensor<T>> {
        let mut tape = Tape::new();
        let pass = self.forward_on_tape(&mut tape, source, ForwardOptions::inference(0))?;
        Ok(tape.value(pass.encoder_states).clone())
    }

    /// Decoder log-probabilities `[λ|x|, |V|]` at the model's precision.
    pub fn log_probs(&self, source: &[TokenId], k: usize) -> Result<Tensor<T>> {
        let mut tape = Tape::new();
        let pass = self.forward_on_tape(&mut tape, source, ForwardOptions::inference(k))?;
        Ok(tape.value(pass.log_probs).clone())
    }

    /// Full-source decoder distribution as an alignment posterior.
    pub fn decoder_forward(&self, source: &[TokenId], k: usize) -> Result<AlignmentPosterior> {
        let lp = self.log_probs(source, k)?;
        posterior_from_tensor(&lp, self.config().lambda, k, source.len())
    }
}

pub fn posterior_from_tensor<T: Scalar>(
    log_probs: &Tensor<T>,
    lambda: usize,
    k: usize,
    src_len: usize,
) -> Result<AlignmentPosterior> {
    let data = log_probs.data().iter().map(|v| v.to_f64().unwrap()).collect();
    AlignmentPosterior::new(
        data,
        log_probs.cols(),
        PosteriorMeta {
            lambda,
            k,
            src_len,
        },
    )
}
