use std::fs;
use std::path::Path;

use crate::error::{NastError, Result};
use crate::lattice::min_frames;
use crate::metrics::AlignmentLinks;
use crate::vocab::{TokenId, Vocab, BLANK};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SentencePair {
    pub source: Vec<TokenId>,
    pub target: Vec<TokenId>,
}

impl SentencePair {
    /// Whether some alignment of `λ|x|` frames collapses to the target.
    pub fn feasible(&self, lambda: usize) -> bool {
        !self.target.is_empty() && min_frames(&self.target) <= lambda * self.source.len()
    }
}

/// Aligned source/target id sequences, with optional gold word alignments.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParallelCorpus {
    pairs: Vec<SentencePair>,
    links: Option<Vec<AlignmentLinks>>,
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| NastError::io(path, e))?;
    Ok(text.lines().map(str::to_string).collect())
}

fn write_lines<I: IntoIterator<Item = String>>(path: &Path, lines: I) -> Result<()> {
    let mut out = String::new();
    for l in lines {
        out.push_str(&l);
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| NastError::io(path, e))
}

impl ParallelCorpus {
    pub fn new(pairs: Vec<SentencePair>, links: Option<Vec<AlignmentLinks>>) -> Result<Self> {
        if let Some(l) = &links {
            if l.len() != pairs.len() {
                return Err(NastError::contract(format!(
                    "{} link sets for {} sentence pairs",
                    l.len(),
                    pairs.len()
                )));
            }
            for (i, (links, p)) in l.iter().zip(&pairs).enumerate() {
                links
                    .check_bounds(p.target.len(), p.source.len())
                    .map_err(|e| NastError::contract(format!("pair {i}: {e}")))?;
            }
        }
        if let Some(i) = pairs
            .iter()
            .position(|p| p.source.contains(&BLANK) || p.target.contains(&BLANK))
        {
            return Err(NastError::contract(format!("pair {i} contains the blank id")));
        }
        Ok(Self { pairs, links })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[SentencePair] {
        &self.pairs
    }

    pub fn links(&self) -> Option<&[AlignmentLinks]> {
        self.links.as_deref()
    }

    /// Drops pairs whose target cannot be produced from `λ|x|` frames (and empty
    /// sentences). Returns the filtered corpus and the number dropped.
    pub fn filter_feasible(self, lambda: usize) -> (Self, usize) {
        let keep: Vec<bool> = self
            .pairs
            .iter()
            .map(|p| !p.source.is_empty() && p.feasible(lambda))
            .collect();
        let dropped = keep.iter().filter(|k| !**k).count();
        fn pick<X>(v: Vec<X>, keep: &[bool]) -> Vec<X> {
            v.into_iter().zip(keep).filter(|(_, k)| **k).map(|(x, _)| x).collect()
        }
        let links = self.links.map(|l| pick(l, &keep));
        let pairs = pick(self.pairs, &keep);
        if dropped > 0 {
            log::info!("dropped {dropped} pairs infeasible at lambda={lambda}");
        }
        (Self { pairs, links }, dropped)
    }

    /// Splits off the last `n` pairs.
    pub fn split_tail(mut self, n: usize) -> (Self, Self) {
        let at = self.pairs.len().saturating_sub(n);
        let tail_pairs = self.pairs.split_off(at);
        let tail_links = self.links.as_mut().map(|l| l.split_off(at));
        (
            self,
            Self {
                pairs: tail_pairs,
                links: tail_links,
            },
        )
    }

    /// Reads whitespace-tokenized source and target files (and an optional links file).
    pub fn load(source: &Path, target: &Path, links: Option<&Path>, vocab: &Vocab) -> Result<Self> {
        let src = read_lines(source)?;
        let tgt = read_lines(target)?;
        if src.len() != tgt.len() {
            return Err(NastError::Parse {
                location: target.display().to_string(),
                message: format!("{} target lines for {} source lines", tgt.len(), src.len()),
            });
        }
        let pairs = src
            .iter()
            .zip(&tgt)
            .map(|(s, t)| SentencePair {
                source: vocab.encode(s),
                target: vocab.encode(t),
            })
            .collect();
        let links = match links {
            Some(path) => Some(
                read_lines(path)?
                    .iter()
                    .enumerate()
                    .map(|(i, l)| {
                        AlignmentLinks::parse(l).map_err(|e| NastError::Parse {
                            location: format!("{}:{}", path.display(), i + 1),
                            message: e.to_string(),
                        })
                    })
                    .collect::<Result<Vec<_>>>()?,
            ),
            None => None,
        };
        Self::new(pairs, links)
    }

    /// Writes `{stem}.src`, `{stem}.tgt` and, when present, `{stem}.links` into `dir`.
    pub fn save(&self, dir: &Path, stem: &str, vocab: &Vocab) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| NastError::io(dir, e))?;
        write_lines(
            &dir.join(format!("{stem}.src")),
            self.pairs.iter().map(|p| vocab.decode(&p.source)),
        )?;
        write_lines(
            &dir.join(format!("{stem}.tgt")),
            self.pairs.iter().map(|p| vocab.decode(&p.target)),
        )?;
        if let Some(links) = &self.links {
            write_lines(&dir.join(format!("{stem}.links")), links.iter().map(|l| l.to_string()))?;
        }
        Ok(())
    }
}
