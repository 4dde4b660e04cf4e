//! Latency metrics, BLEU, hallucination rate and difficulty partitioning.

mod alignment;
mod bleu;
mod latency;
mod links;
mod report;

pub use alignment::{cross_count, hallucination_rate, lexical_links, partition_by_difficulty};
pub use bleu::{corpus_bleu, BleuStats};
pub use latency::{latency_metrics, latency_metrics_lenient, LatencyMetrics, PolicyRecord};
pub use links::AlignmentLinks;
pub use report::{evaluate_corpus, sentence_bleu, CorpusEval, MetricsReport, SubsetScores};
