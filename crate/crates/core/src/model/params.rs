use std::collections::HashMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::ModelConfig;
use crate::numeric::{Scalar, Tensor};

/// Ordered, named parameter tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSet<T: Scalar = f32> {
    names: Vec<String>,
    tensors: Vec<Tensor<T>>,
    index: HashMap<String, usize>,
}

impl<T: Scalar> Default for ParamSet<T> {
    fn default() -> Self {
        Self {
            names: Vec::new(),
            tensors: Vec::new(),
            index: HashMap::new(),
        }
    }
}

impl<T: Scalar> ParamSet<T> {
    pub fn insert(&mut self, name: impl Into<String>, t: Tensor<T>) {
        let name = name.into();
        assert!(!self.index.contains_key(&name), "duplicate parameter {name}");
        self.index.insert(name.clone(), self.names.len());
        self.names.push(name);
        self.tensors.push(t);
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor<T>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.tensors
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn get(&self, name: &str) -> &Tensor<T> {
        &self.tensors[self.index[name]]
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.index.get(name).map(|&i| &mut self.tensors[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn num_elements(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    pub fn cast<U: Scalar>(&self) -> ParamSet<U> {
        ParamSet {
            names: self.names.clone(),
            tensors: self.tensors.iter().map(Tensor::cast).collect(),
            index: self.index.clone(),
        }
    }

    /// All elements concatenated in parameter order, widened to `f64`.
    pub fn flatten(&self) -> Vec<f64> {
        self.tensors
            .iter()
            .flat_map(|t| t.data().iter().map(|v| v.to_f64().unwrap()))
            .collect()
    }

    pub fn assign_flat(&mut self, flat: &[f64]) {
        let mut off = 0;
        for t in &mut self.tensors {
            for v in t.data_mut() {
                *v = T::from_f64_lossy(flat[off]);
                off += 1;
            }
        }
        assert_eq!(off, flat.len());
    }
}

/// Names of the tensors of one attention block.
pub(crate) struct AttnNames {
    pub wq: String,
    pub bq: String,
    pub wk: String,
    pub wv: String,
    pub bv: String,
    pub wo: String,
    pub bo: String,
}

impl AttnNames {
    pub fn new(prefix: &str) -> Self {
        let n = |s: &str| format!("{prefix}.{s}");
        Self {
            wq: n("wq"),
            bq: n("bq"),
            wk: n("wk"),
            wv: n("wv"),
            bv: n("bv"),
            wo: n("wo"),
            bo: n("bo"),
        }
    }
}

pub(crate) struct LayerNames {
    pub ln1: (String, String),
    pub self_attn: AttnNames,
    /// Decoder layers only.
    pub ln_cross: (String, String),
    pub cross_attn: AttnNames,
    pub ln_ffn: (String, String),
    pub w1: String,
    pub b1: String,
    pub w2: String,
    pub b2: String,
}

impl LayerNames {
    pub fn new(side: &str, layer: usize) -> Self {
        let p = format!("{side}.{layer}");
        let ln = |s: &str| (format!("{p}.{s}.g"), format!("{p}.{s}.b"));
        Self {
            ln1: ln("ln_self"),
            self_attn: AttnNames::new(&format!("{p}.self")),
            ln_cross: ln("ln_cross"),
            cross_attn: AttnNames::new(&format!("{p}.cross")),
            ln_ffn: ln("ln_ffn"),
            w1: format!("{p}.ffn.w1"),
            b1: format!("{p}.ffn.b1"),
            w2: format!("{p}.ffn.w2"),
            b2: format!("{p}.ffn.b2"),
        }
    }
}

pub(crate) const EMBED: &str = "embed";
pub(crate) const ENC_LN: (&str, &str) = ("enc.ln.g", "enc.ln.b");
pub(crate) const DEC_LN: (&str, &str) = ("dec.ln.g", "dec.ln.b");
pub(crate) const OUT_W: &str = "out.w";
pub(crate) const OUT_B: &str = "out.b";

fn uniform<T: Scalar>(rng: &mut ChaCha8Rng, shape: &[usize], bound: f64) -> Tensor<T> {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| T::from_f64_lossy(rng.gen_range(-bound..bound)))
        .collect();
    Tensor::from_parts(shape.to_vec(), data)
}

fn xavier<T: Scalar>(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize) -> Tensor<T> {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    uniform(rng, &[fan_in, fan_out], bound)
}

fn add_attention<T: Scalar>(ps: &mut ParamSet<T>, rng: &mut ChaCha8Rng, names: &AttnNames, d: usize) {
    // Keys carry no bias: it would shift every score of a query equally.
    for (w, b) in [
        (&names.wq, Some(&names.bq)),
        (&names.wk, None),
        (&names.wv, Some(&names.bv)),
        (&names.wo, Some(&names.bo)),
    ] {
        ps.insert(w.clone(), xavier(rng, d, d));
        if let Some(b) = b {
            ps.insert(b.clone(), Tensor::zeros(&[d]));
        }
    }
}

fn add_ln<T: Scalar>(ps: &mut ParamSet<T>, names: &(String, String), d: usize) {
    ps.insert(names.0.clone(), Tensor::full(&[d], T::one()));
    ps.insert(names.1.clone(), Tensor::zeros(&[d]));
}

fn add_layer<T: Scalar>(ps: &mut ParamSet<T>, rng: &mut ChaCha8Rng, cfg: &ModelConfig, side: &str, layer: usize) {
    let d = cfg.embed_dim;
    let names = LayerNames::new(side, layer);
    add_ln(ps, &names.ln1, d);
    add_attention(ps, rng, &names.self_attn, d);
    if side == "dec" {
        add_ln(ps, &names.ln_cross, d);
        add_attention(ps, rng, &names.cross_attn, d);
    }
    add_ln(ps, &names.ln_ffn, d);
    ps.insert(names.w1.clone(), xavier(rng, d, cfg.ffn_dim));
    ps.insert(names.b1.clone(), Tensor::zeros(&[cfg.ffn_dim]));
    ps.insert(names.w2.clone(), xavier(rng, cfg.ffn_dim, d));
    ps.insert(names.b2.clone(), Tensor::zeros(&[d]));
}

/// Freshly initialized parameters for `cfg`, deterministic in `seed`.
pub fn init_params<T: Scalar>(cfg: &ModelConfig, seed: u64) -> ParamSet<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = cfg.embed_dim;
    let mut ps = ParamSet::default();
    ps.insert(EMBED, uniform(&mut rng, &[cfg.vocab_size, d], 1.0));
    for l in 0..cfg.enc_layers {
        add_layer(&mut ps, &mut rng, cfg, "enc", l);
    }
    add_ln(&mut ps, &(ENC_LN.0.to_string(), ENC_LN.1.to_string()), d);
    for l in 0..cfg.dec_layers {
        add_layer(&mut ps, &mut rng, cfg, "dec", l);
    }
    add_ln(&mut ps, &(DEC_LN.0.to_string(), DEC_LN.1.to_string()), d);
    ps.insert(OUT_W, xavier(&mut rng, d, cfg.vocab_size));
    ps.insert(OUT_B, Tensor::zeros(&[cfg.vocab_size]));
    ps
}

/// Expected shape of every parameter for `cfg`, in parameter order.
pub fn param_shapes(cfg: &ModelConfig) -> Vec<(String, Vec<usize>)> {
    init_params::<f32>(cfg, 0)
        .iter()
        .map(|(n, t)| (n.to_string(), t.shape().to_vec()))
        .collect()
}
