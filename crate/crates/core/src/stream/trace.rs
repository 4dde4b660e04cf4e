use serde::{Deserialize, Serialize};

use crate::error::{NastError, Result};
use crate::metrics::PolicyRecord;
use crate::vocab::TokenId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum TraceEvent {
    /// Source token `index` (1-based) was read.
    Read { index: usize, tokens_read: usize },
    /// `token` was written after `tokens_read` source tokens.
    Write { token: TokenId, tokens_read: usize },
}

impl TraceEvent {
    pub fn tokens_read(&self) -> usize {
        match *self {
            TraceEvent::Read { tokens_read, .. } | TraceEvent::Write { tokens_read, .. } => tokens_read,
        }
    }
}

/// One serialized line: an event tagged with its sentence number.
#[derive(Serialize, Deserialize)]
struct TraceLine {
    sentence: usize,
    #[serde(flatten)]
    event: TraceEvent,
}

/// Ordered READ/WRITE events of one streamed sentence.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ReadWriteTrace {
    events: Vec<TraceEvent>,
}

impl ReadWriteTrace {
    pub fn from_events(events: Vec<TraceEvent>) -> Self {
        Self { events }
    }

    pub fn events(&self) -> &[TraceEvent] {
        &self.events
    }

    pub(crate) fn push(&mut self, e: TraceEvent) {
        self.events.push(e);
    }

    pub fn source_len(&self) -> usize {
        self.events
            .iter()
            .filter(|e| matches!(e, TraceEvent::Read { .. }))
            .count()
    }

    pub fn emitted(&self) -> Vec<TokenId> {
        self.events
            .iter()
            .filter_map(|e| match *e {
                TraceEvent::Write { token, .. } => Some(token),
                _ => None,
            })
            .collect()
    }

    /// `g(t)`: tokens read when target token `t` was written.
    pub fn policy(&self) -> Vec<usize> {
        self.events
            .iter()
            .filter_map(|e| match *e {
                TraceEvent::Write { tokens_read, .. } => Some(tokens_read),
                _ => None,
            })
            .collect()
    }

    /// Checks read numbering, monotone `g` and that writes never run ahead of reads.
    pub fn validate(&self) -> Result<()> {
        let mut read = 0;
        let mut last_g = 0;
        for (i, e) in self.events.iter().enumerate() {
            match *e {
                TraceEvent::Read { index, tokens_read } => {
                    read += 1;
                    if index != read || tokens_read != read {
                        return Err(NastError::InvalidTrace(format!("event {i}: read out of order")));
                    }
                }
                TraceEvent::Write { tokens_read, .. } => {
                    if tokens_read != read || tokens_read < last_g {
                        return Err(NastError::InvalidTrace(format!(
                            "event {i}: write claims {tokens_read} tokens read, {read} were"
                        )));
                    }
                    last_g = tokens_read;
                }
            }
        }
        Ok(())
    }

    pub fn policy_record(&self) -> Result<PolicyRecord> {
        self.validate()?;
        PolicyRecord::new(self.policy(), self.source_len())
    }

    /// Appends this trace as JSON lines tagged with `sentence`.
    pub fn write_jsonl(&self, sentence: usize, out: &mut String) {
        for &event in &self.events {
            out.push_str(&serde_json::to_string(&TraceLine { sentence, event }).expect("events serialize"));
            out.push('\n');
        }
    }

    /// Parses JSON lines into per-sentence traces, in sentence order.
    pub fn parse_jsonl(text: &str) -> Result<Vec<ReadWriteTrace>> {
        let mut traces: Vec<ReadWriteTrace> = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec: TraceLine = serde_json::from_str(line).map_err(|e| NastError::Parse {
                location: format!("trace line {}", n + 1),
                message: e.to_string(),
            })?;
            if rec.sentence + 1 < traces.len() || rec.sentence > traces.len() {
                return Err(NastError::InvalidTrace(format!(
                    "line {}: sentence {} out of order",
                    n + 1,
                    rec.sentence
                )));
            }
            if rec.sentence == traces.len() {
                traces.push(ReadWriteTrace::default());
            }
            traces[rec.sentence].push(rec.event);
        }
        Ok(traces)
    }
}
