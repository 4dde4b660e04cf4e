use std::collections::BTreeSet;
use std::fmt;

use crate::error::{NastError, Result};

/// Word alignment as `(target index, source index)` pairs, 0-based.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AlignmentLinks {
    pairs: BTreeSet<(usize, usize)>,
}

impl AlignmentLinks {
    pub fn new<I: IntoIterator<Item = (usize, usize)>>(pairs: I) -> Self {
        Self {
            pairs: pairs.into_iter().collect(),
        }
    }

    /// Parses one line of whitespace-separated `t-s` pairs.
    pub fn parse(line: &str) -> Result<Self> {
        let mut pairs = BTreeSet::new();
        for item in line.split_whitespace() {
            let bad = || NastError::Parse {
                location: format!("link {item:?}"),
                message: "expected <target>-<source> with non-negative integers".into(),
            };
            let (t, s) = item.split_once('-').ok_or_else(bad)?;
            pairs.insert((t.parse().map_err(|_| bad())?, s.parse().map_err(|_| bad())?));
        }
        Ok(Self { pairs })
    }

    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.pairs.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn check_bounds(&self, target_len: usize, source_len: usize) -> Result<()> {
        match self.pairs.iter().find(|&&(t, s)| t >= target_len || s >= source_len) {
            Some((t, s)) => Err(NastError::contract(format!(
                "link {t}-{s} outside a {target_len}x{source_len} sentence pair"
            ))),
            None => Ok(()),
        }
    }
}

impl fmt::Display for AlignmentLinks {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (t, s) in &self.pairs {
            if !first {
                f.write_str(" ")?;
            }
            write!(f, "{t}-{s}")?;
            first = false;
        }
        Ok(())
    }
}
