use std::fmt::Write;

use super::alignment::{hallucination_rate, partition_by_difficulty};
use super::bleu::{corpus_bleu, BleuStats};
use super::latency::{latency_metrics_lenient, LatencyMetrics};
use super::links::AlignmentLinks;
use crate::error::{NastError, Result};
use crate::stream::ReadWriteTrace;
use crate::vocab::TokenId;

/// Scores of one subset of the corpus.
#[derive(Clone, Debug, PartialEq)]
pub struct SubsetScores {
    pub name: String,
    pub sentences: usize,
    pub bleu: f64,
    /// Mean over sentences with a non-empty output.
    pub latency: Option<LatencyMetrics>,
    /// Sentences whose policy never reached the end of the source.
    pub unfinished: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub all: SubsetScores,
    /// Unlinked hypothesis tokens over all hypothesis tokens.
    pub hallucination: Option<f64>,
    /// Easy, medium and hard thirds by reference cross count.
    pub difficulty: Option<[SubsetScores; 3]>,
}

/// Inputs to [`evaluate_corpus`]; every present slice is parallel to `hypotheses`.
pub struct CorpusEval<'a> {
    pub hypotheses: &'a [Vec<TokenId>],
    pub references: &'a [Vec<TokenId>],
    pub traces: Option<&'a [ReadWriteTrace]>,
    pub hypothesis_links: Option<&'a [AlignmentLinks]>,
    pub reference_links: Option<&'a [AlignmentLinks]>,
}

fn subset(name: &str, idx: &[usize], ev: &CorpusEval<'_>) -> Result<SubsetScores> {
    let hyps: Vec<Vec<TokenId>> = idx.iter().map(|&i| ev.hypotheses[i].clone()).collect();
    let refs: Vec<Vec<TokenId>> = idx.iter().map(|&i| ev.references[i].clone()).collect();
    let bleu = if idx.is_empty() {
        0.0
    } else {
        corpus_bleu(&hyps, &refs)?
    };
    let mut latency = None;
    let mut unfinished = 0;
    if let Some(traces) = ev.traces {
        let mut sum = LatencyMetrics::default();
        let mut n = 0;
        for &i in idx {
            let trace = &traces[i];
            if trace.emitted() != ev.hypotheses[i] {
                return Err(NastError::InvalidTrace(format!(
                    "sentence {i}: trace writes differ from the hypothesis"
                )));
            }
            if trace.policy().is_empty() {
                continue;
            }
            let rec = trace.policy_record()?;
            if rec.cutoff().is_none() {
                unfinished += 1;
            }
            let m = latency_metrics_lenient(&rec)?;
            sum.al += m.al;
            sum.ap += m.ap;
            sum.cw += m.cw;
            sum.dal += m.dal;
            n += 1;
        }
        if n > 0 {
            let d = n as f64;
            latency = Some(LatencyMetrics {
                al: sum.al / d,
                ap: sum.ap / d,
                cw: sum.cw / d,
                dal: sum.dal / d,
            });
        }
    }
    Ok(SubsetScores {
        name: name.to_string(),
        sentences: idx.len(),
        bleu,
        latency,
        unfinished,
    })
}

/// BLEU and latency over a corpus, plus hallucination and difficulty splits when links are given.
pub fn evaluate_corpus(ev: &CorpusEval<'_>) -> Result<MetricsReport> {
    let n = ev.hypotheses.len();
    let check = |what: &str, len: Option<usize>| match len {
        Some(l) if l != n => Err(NastError::contract(format!("{l} {what} for {n} hypotheses"))),
        _ => Ok(()),
    };
    check("references", Some(ev.references.len()))?;
    check("traces", ev.traces.map(<[_]>::len))?;
    check("hypothesis link sets", ev.hypothesis_links.map(<[_]>::len))?;
    check("reference link sets", ev.reference_links.map(<[_]>::len))?;
    if n == 0 {
        return Err(NastError::contract("empty corpus"));
    }
    let all_idx: Vec<usize> = (0..n).collect();
    let all = subset("all", &all_idx, ev)?;
    let hallucination = match ev.hypothesis_links {
        Some(links) => {
            let (mut unlinked, mut total) = (0.0, 0usize);
            for (h, l) in ev.hypotheses.iter().zip(links) {
                unlinked += hallucination_rate(h.len(), l)? * h.len() as f64;
                total += h.len();
            }
            Some(if total == 0 { 0.0 } else { unlinked / total as f64 })
        }
        None => None,
    };
    let difficulty = match ev.reference_links {
        Some(links) => {
            let [e, m, h] = partition_by_difficulty(links);
            Some([subset("easy", &e, ev)?, subset("medium", &m, ev)?, subset("hard", &h, ev)?])
        }
        None => None,
    };
    Ok(MetricsReport {
        all,
        hallucination,
        difficulty,
    })
}

impl MetricsReport {
    fn subsets(&self) -> Vec<&SubsetScores> {
        let mut v = vec![&self.all];
        if let Some(d) = &self.difficulty {
            v.extend(d.iter());
        }
        v
    }

    /// `key = value` lines.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for sub in self.subsets() {
            let p = if sub.name == "all" { String::new() } else { format!("{}.", sub.name) };
            writeln!(s, "{p}sentences = {}", sub.sentences).unwrap();
            writeln!(s, "{p}bleu = {:.2}", sub.bleu).unwrap();
            if let Some(l) = sub.latency {
                writeln!(s, "{p}al = {:.4}", l.al).unwrap();
                writeln!(s, "{p}ap = {:.4}", l.ap).unwrap();
                writeln!(s, "{p}cw = {:.4}", l.cw).unwrap();
                writeln!(s, "{p}dal = {:.4}", l.dal).unwrap();
                writeln!(s, "{p}unfinished = {}", sub.unfinished).unwrap();
            }
        }
        if let Some(h) = self.hallucination {
            writeln!(s, "hallucination = {h:.4}").unwrap();
        }
        s
    }

    /// One CSV row per subset.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("subset,sentences,bleu,al,ap,cw,dal,hallucination\n");
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        for sub in self.subsets() {
            let l = sub.latency;
            let h = if sub.name == "all" { self.hallucination } else { None };
            writeln!(
                s,
                "{},{},{:.6},{},{},{},{},{}",
                sub.name,
                sub.sentences,
                sub.bleu,
                opt(l.map(|l| l.al)),
                opt(l.map(|l| l.ap)),
                opt(l.map(|l| l.cw)),
                opt(l.map(|l| l.dal)),
                opt(h)
            )
            .unwrap();
        }
        s
    }
}

/// Sentence-level BLEU statistics, exposed for per-sentence inspection.
pub fn sentence_bleu(hyp: &[TokenId], reference: &[TokenId]) -> f64 {
    BleuStats::sentence(hyp, reference).score()
}
