//! Sequence, block and marginal types shared by every stage of generation.
//!
//! Token id `0` is the reserved MASK token; real tokens are `1..=V`.
//! A sequence is a prompt followed by `N` blocks of `L` positions that are
//! denoised strictly left to right.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SpiffyError};

pub type TokenId = u32;

pub const MASK: TokenId = 0;

/// One block of `L` positions, some of which may still hold [`MASK`].
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Block {
    tokens: Vec<TokenId>,
}

impl Block {
    pub fn masked(len: usize) -> Self {
        Block {
            tokens: vec![MASK; len],
        }
    }

    pub fn from_tokens(tokens: Vec<TokenId>) -> Self {
        Block { tokens }
    }

    pub fn tokens(&self) -> &[TokenId] {
        &self.tokens
    }

    pub fn into_tokens(self) -> Vec<TokenId> {
        self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn get(&self, pos: usize) -> TokenId {
        self.tokens[pos]
    }

    pub fn is_masked(&self, pos: usize) -> bool {
        self.tokens[pos] == MASK
    }

    pub fn set(&mut self, pos: usize, token: TokenId) {
        self.tokens[pos] = token;
    }

    pub fn unmasked_count(&self) -> usize {
        self.tokens.iter().filter(|&&t| t != MASK).count()
    }

    pub fn masked_count(&self) -> usize {
        self.len() - self.unmasked_count()
    }

    pub fn masked_positions(&self) -> impl Iterator<Item = usize> + '_ {
        self.tokens
            .iter()
            .enumerate()
            .filter(|(_, &t)| t == MASK)
            .map(|(i, _)| i)
    }

    pub fn is_complete(&self) -> bool {
        self.tokens.iter().all(|&t| t != MASK)
    }

    pub fn is_fully_masked(&self) -> bool {
        self.tokens.iter().all(|&t| t == MASK)
    }

    /// True when every unmasked position of `self` holds the same token in `other`.
    pub fn is_unmasked_subset_of(&self, other: &Block) -> bool {
        self.len() == other.len()
            && self
                .tokens
                .iter()
                .zip(&other.tokens)
                .all(|(&a, &b)| a == MASK || a == b)
    }
}

impl fmt::Display for Block {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for &t in &self.tokens {
            if !first {
                f.write_str(" ")?;
            }
            first = false;
            if t == MASK {
                f.write_str("_")?;
            } else {
                write!(f, "{t}")?;
            }
        }
        Ok(())
    }
}

/// Prompt plus `N` blocks and the index of the block being denoised.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SequenceState {
    pub prompt: Vec<TokenId>,
    pub block_len: usize,
    pub blocks: Vec<Block>,
    pub active: usize,
}

impl SequenceState {
    /// Fresh state: every block masked, block 0 active.
    pub fn new(prompt: Vec<TokenId>, n_blocks: usize, block_len: usize) -> Self {
        SequenceState {
            prompt,
            block_len,
            blocks: (0..n_blocks).map(|_| Block::masked(block_len)).collect(),
            active: 0,
        }
    }

    pub fn n_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn gen_len(&self) -> usize {
        self.blocks.len() * self.block_len
    }

    pub fn active_block(&self) -> &Block {
        &self.blocks[self.active]
    }

    /// Absolute position of the first slot of block `k`.
    pub fn block_offset(&self, k: usize) -> usize {
        self.prompt.len() + k * self.block_len
    }

    /// Prompt followed by every block, MASK included.
    pub fn flatten(&self) -> Vec<TokenId> {
        let mut out = Vec::with_capacity(self.prompt.len() + self.gen_len());
        out.extend_from_slice(&self.prompt);
        for b in &self.blocks {
            out.extend_from_slice(b.tokens());
        }
        out
    }

    /// Generated tokens only (no prompt).
    pub fn generated(&self) -> Vec<TokenId> {
        self.blocks.iter().flat_map(|b| b.tokens().iter().copied()).collect()
    }

    pub fn with_active_block(&self, block: Block) -> SequenceState {
        let mut s = self.clone();
        s.blocks[s.active] = block;
        s
    }

    pub fn masked_count(&self) -> usize {
        self.blocks.iter().map(Block::masked_count).sum()
    }
}

/// One broken [`SequenceState`] invariant.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub block: Option<usize>,
    pub rule: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.rule)
    }
}

pub fn validate_sequence(state: &SequenceState) -> Vec<Violation> {
    let mut out = Vec::new();
    if state.blocks.is_empty() {
        out.push(Violation {
            block: None,
            rule: "sequence has no blocks".into(),
        });
        return out;
    }
    if state.active >= state.blocks.len() {
        out.push(Violation {
            block: None,
            rule: format!("active index {} out of range 0..{}", state.active, state.blocks.len()),
        });
    }
    if let Some(p) = state.prompt.iter().position(|&t| t == MASK) {
        out.push(Violation {
            block: None,
            rule: format!("prompt contains MASK at position {p}"),
        });
    }
    for (i, b) in state.blocks.iter().enumerate() {
        if b.len() != state.block_len {
            out.push(Violation {
                block: Some(i),
                rule: format!("block {i} has length {}, expected {}", b.len(), state.block_len),
            });
            continue;
        }
        if i < state.active && !b.is_complete() {
            out.push(Violation {
                block: Some(i),
                rule: format!("block {i} not fully unmasked"),
            });
        }
        if i > state.active && !b.is_fully_masked() {
            out.push(Violation {
                block: Some(i),
                rule: format!("block {i} not fully masked"),
            });
        }
    }
    out
}

pub(crate) fn ensure_valid(state: &SequenceState) -> Result<()> {
    let v = validate_sequence(state);
    if v.is_empty() {
        Ok(())
    } else {
        let msgs: Vec<String> = v.iter().map(ToString::to_string).collect();
        Err(SpiffyError::InvalidState(msgs.join("; ")))
    }
}

/// Per-position probability rows over the real vocabulary for one block.
///
/// Row `n`, column `v - 1` holds the probability of token `v` at position `n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Marginals {
    vocab: usize,
    probs: Vec<f64>,
}

impl Marginals {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let vocab = rows.first().map(Vec::len).unwrap_or(0);
        if vocab == 0 {
            return Err(SpiffyError::InvalidArgument(
                "marginals need at least one non-empty row".into(),
            ));
        }
        let mut probs = Vec::with_capacity(rows.len() * vocab);
        for (n, row) in rows.iter().enumerate() {
            if row.len() != vocab {
                return Err(SpiffyError::InvalidArgument(format!(
                    "row {n} has {} entries, expected {vocab}",
                    row.len()
                )));
            }
            if row.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(SpiffyError::InvalidArgument(format!(
                    "row {n} has an entry outside [0, 1]"
                )));
            }
            probs.extend_from_slice(row);
        }
        Ok(Marginals { vocab, probs })
    }

    pub(crate) fn from_flat(vocab: usize, probs: Vec<f64>) -> Self {
        debug_assert!(vocab > 0 && probs.len().is_multiple_of(vocab));
        Marginals { vocab, probs }
    }

    /// All rows one-hot on the block's tokens; masked positions are uniform.
    pub fn one_hot(block: &Block, vocab: usize) -> Self {
        let mut probs = vec![0.0; block.len() * vocab];
        for (n, &t) in block.tokens().iter().enumerate() {
            let row = &mut probs[n * vocab..(n + 1) * vocab];
            if t == MASK {
                row.fill(1.0 / vocab as f64);
            } else {
                row[t as usize - 1] = 1.0;
            }
        }
        Marginals { vocab, probs }
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab
    }

    pub fn len(&self) -> usize {
        self.probs.len() / self.vocab
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn row(&self, n: usize) -> &[f64] {
        &self.probs[n * self.vocab..(n + 1) * self.vocab]
    }

    pub fn prob(&self, n: usize, token: TokenId) -> f64 {
        self.row(n)[token as usize - 1]
    }

    /// Highest probability at position `n` and its token; ties go to the lower id.
    pub fn top1(&self, n: usize) -> (f64, TokenId) {
        let row = self.row(n);
        let mut best = 0;
        for v in 1..row.len() {
            if row[v] > row[best] {
                best = v;
            }
        }
        (row[best], best as TokenId + 1)
    }

    /// Bitwise equality of every probability.
    pub fn bit_eq(&self, other: &Marginals) -> bool {
        self.vocab == other.vocab
            && self.probs.len() == other.probs.len()
            && self
                .probs
                .iter()
                .zip(&other.probs)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }

    /// Checks the row invariants against the block these marginals describe.
    pub fn check_against(&self, block: &Block, tol: f64) -> Result<()> {
        if self.len() != block.len() {
            return Err(SpiffyError::InvalidArgument(format!(
                "{} rows for a block of length {}",
                self.len(),
                block.len()
            )));
        }
        for n in 0..self.len() {
            let row = self.row(n);
            if row.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(SpiffyError::InvalidArgument(format!(
                    "row {n} has an entry outside [0, 1]"
                )));
            }
            let t = block.get(n);
            if t == MASK {
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > tol {
                    return Err(SpiffyError::InvalidArgument(format!("row {n} sums to {sum}")));
                }
            } else {
                let ok = row
                    .iter()
                    .enumerate()
                    .all(|(v, &p)| p == if v + 1 == t as usize { 1.0 } else { 0.0 });
                if !ok {
                    return Err(SpiffyError::InvalidArgument(format!(
                        "row {n} is not one-hot on token {t}"
                    )));
                }
            }
        }
        Ok(())
    }
}
