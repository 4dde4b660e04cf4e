//! Synthetic parallel corpora with known word alignments.

use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::corpus::{ParallelCorpus, SentencePair};
use crate::error::{NastError, Result};
use crate::metrics::AlignmentLinks;
use crate::vocab::{TokenId, Vocab, NUM_RESERVED};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SynthTask {
    /// Target equals source.
    Copy,
    /// Each adjacent pair of the source is swapped with probability 1/2.
    LocalSwap,
    /// Source is subject, object, verb phrases; target reorders them to subject, verb, object.
    Sov2Svo,
}

impl FromStr for SynthTask {
    type Err = NastError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "copy" => Ok(Self::Copy),
            "local-swap" => Ok(Self::LocalSwap),
            "sov2svo" => Ok(Self::Sov2Svo),
            other => Err(NastError::Config(format!(
                "unknown task {other:?} (expected copy, local-swap or sov2svo)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub task: SynthTask,
    pub n: usize,
    pub min_len: usize,
    pub max_len: usize,
    /// Number of corpus tokens (reserved symbols excluded).
    pub vocab_size: usize,
    pub seed: u64,
}

/// Token spellings: `w{i}` for copy and local-swap; `s{i}`, `o{i}`, `v{i}` for
/// the three disjoint classes of sov2svo.
fn synth_vocab(task: SynthTask, size: usize) -> Result<(Vocab, Vec<Vec<TokenId>>)> {
    let names: Vec<String> = match task {
        SynthTask::Copy | SynthTask::LocalSwap => (0..size).map(|i| format!("w{i}")).collect(),
        SynthTask::Sov2Svo => {
            let per = size / 3;
            ["s", "o", "v"]
                .iter()
                .flat_map(|c| (0..per).map(move |i| format!("{c}{i}")))
                .collect()
        }
    };
    let vocab = Vocab::from_tokens(&names)?;
    let ids: Vec<TokenId> = (0..names.len()).map(|i| (i + NUM_RESERVED) as TokenId).collect();
    let classes = match task {
        SynthTask::Sov2Svo => ids.chunks(size / 3).map(<[TokenId]>::to_vec).collect(),
        _ => vec![ids],
    };
    Ok((vocab, classes))
}

fn draw(rng: &mut ChaCha8Rng, class: &[TokenId], n: usize) -> Vec<TokenId> {
    (0..n).map(|_| class[rng.gen_range(0..class.len())]).collect()
}

/// Generates a corpus and its vocabulary; identical configs give identical corpora.
pub fn synth_generate(cfg: &SynthConfig) -> Result<(Vocab, ParallelCorpus)> {
    if cfg.min_len == 0 || cfg.min_len > cfg.max_len {
        return Err(NastError::Config(format!(
            "invalid length range {}..={}",
            cfg.min_len, cfg.max_len
        )));
    }
    if cfg.vocab_size == 0 {
        return Err(NastError::Config("vocab_size must be positive".into()));
    }
    if cfg.task == SynthTask::Sov2Svo {
        if cfg.vocab_size < 3 {
            return Err(NastError::Config(format!(
                "sov2svo needs at least 3 tokens for its subject/object/verb classes, got {}",
                cfg.vocab_size
            )));
        }
        if cfg.min_len < 3 {
            return Err(NastError::Config("sov2svo sentences need at least 3 tokens".into()));
        }
    }
    let (vocab, classes) = synth_vocab(cfg.task, cfg.vocab_size)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut pairs = Vec::with_capacity(cfg.n);
    let mut links = Vec::with_capacity(cfg.n);
    for _ in 0..cfg.n {
        let len = rng.gen_range(cfg.min_len..=cfg.max_len);
        let (source, target, l) = match cfg.task {
            SynthTask::Copy => {
                let s = draw(&mut rng, &classes[0], len);
                (s.clone(), s, AlignmentLinks::new((0..len).map(|i| (i, i))))
            }
            SynthTask::LocalSwap => {
                let s = draw(&mut rng, &classes[0], len);
                // perm[t] = source index of target position t
                let mut perm: Vec<usize> = (0..len).collect();
                for i in (0..len.saturating_sub(1)).step_by(2) {
                    if rng.gen_bool(0.5) {
                        perm.swap(i, i + 1);
                    }
                }
                let t = perm.iter().map(|&j| s[j]).collect();
                (s, t, AlignmentLinks::new(perm.iter().enumerate().map(|(t, &j)| (t, j))))
            }
            SynthTask::Sov2Svo => {
                let nv = rng.gen_range(1..=2.min(len - 2));
                let rest = len - nv;
                let ns = rng.gen_range(1..rest);
                let no = rest - ns;
                let subj = draw(&mut rng, &classes[0], ns);
                let obj = draw(&mut rng, &classes[1], no);
                let verb = draw(&mut rng, &classes[2], nv);
                let source = [subj.as_slice(), &obj, &verb].concat();
                let target = [subj.as_slice(), &verb, &obj].concat();
                let mut l: Vec<(usize, usize)> = (0..ns).map(|i| (i, i)).collect();
                l.extend((0..nv).map(|i| (ns + i, ns + no + i)));
                l.extend((0..no).map(|i| (ns + nv + i, ns + i)));
                (source, target, AlignmentLinks::new(l))
            }
        };
        pairs.push(SentencePair { source, target });
        links.push(l);
    }
    Ok((vocab, ParallelCorpus::new(pairs, Some(links))?))
}
