use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::error::{NastError, Result};

/// Token id type. Every id indexes a row of the output distribution.
pub type TokenId = u32;

pub const BLANK: TokenId = 0;
pub const PAD: TokenId = 1;
pub const UNK: TokenId = 2;
pub const NUM_RESERVED: usize = 3;

pub const RESERVED: [&str; NUM_RESERVED] = ["<blank>", "<pad>", "<unk>"];

/// Symbol table with the blank, pad and unk ids reserved at 0, 1, 2.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    symbols: Vec<String>,
    index: HashMap<String, TokenId>,
}

impl Vocab {
    /// Builds a vocabulary from corpus tokens, in order, skipping duplicates.
    pub fn from_tokens<I, S>(tokens: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut symbols: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        let mut index: HashMap<String, TokenId> = symbols
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i as TokenId))
            .collect();
        for tok in tokens {
            let tok = tok.as_ref();
            if tok.is_empty() || tok.chars().any(char::is_whitespace) {
                return Err(NastError::Config(format!("invalid vocabulary token {tok:?}")));
            }
            if RESERVED.contains(&tok) {
                return Err(NastError::Config(format!("{tok} is a reserved symbol")));
            }
            if !index.contains_key(tok) {
                index.insert(tok.to_string(), symbols.len() as TokenId);
                symbols.push(tok.to_string());
            }
        }
        Ok(Self { symbols, index })
    }

    /// Builds a vocabulary covering every token of the given sentences, sorted.
    pub fn from_corpus<'a, I>(sentences: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut seen: Vec<&str> = sentences.into_iter().flat_map(str::split_whitespace).collect();
        seen.sort_unstable();
        seen.dedup();
        Self::from_tokens(seen)
    }

    /// Reads a vocab file: one token per line, ids assigned after the reserved symbols.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| NastError::io(path, e))?;
        Self::from_tokens(text.lines().map(str::trim).filter(|l| !l.is_empty()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_file_string()).map_err(|e| NastError::io(path, e))
    }

    pub fn to_file_string(&self) -> String {
        let mut out = String::new();
        for s in self.corpus_tokens() {
            out.push_str(s);
            out.push('\n');
        }
        out
    }

    /// Non-reserved symbols in id order.
    pub fn corpus_tokens(&self) -> impl Iterator<Item = &str> {
        self.symbols[NUM_RESERVED..].iter().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, token: &str) -> TokenId {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn get(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    pub fn symbol(&self, id: TokenId) -> &str {
        self.symbols
            .get(id as usize)
            .map(String::as_str)
            .unwrap_or(RESERVED[UNK as usize])
    }

    pub fn encode(&self, line: &str) -> Vec<TokenId> {
        line.split_whitespace().map(|t| self.id(t)).collect()
    }

    pub fn decode(&self, ids: &[TokenId]) -> String {
        ids.iter().map(|&i| self.symbol(i)).collect::<Vec<_>>().join(" ")
    }
}
