//! Diffusion-LM oracle interface and a count-based toy masked denoiser.
//!
//! The toy denoiser mixes three smoothed count distributions for every masked
//! position: a left bigram conditioned on the nearest unmasked token to the
//! left, a right bigram conditioned on the nearest unmasked token to the
//! right, and a unigram. A context that sits behind `g` masked positions keeps
//! only `0.5^g` of its mixture weight; the remainder moves to the unigram.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SpiffyError};
use crate::state::{ensure_valid, Block, Marginals, SequenceState, TokenId, MASK};

/// A denoiser that returns per-position marginals for the active block.
///
/// Implementations must be deterministic, and the batched entry point must
/// return exactly what independent calls would.
pub trait DlmOracle: Sync {
    fn vocab_size(&self) -> usize;

    /// Marginals for the active block of any valid state, complete blocks included.
    fn marginals(&self, state: &SequenceState) -> Result<Marginals>;

    fn forward(&self, state: &SequenceState) -> Result<Marginals> {
        ensure_valid(state)?;
        if state.active_block().is_complete() {
            return Err(SpiffyError::NothingToDenoise(state.active));
        }
        self.marginals(state)
    }

    /// Target marginals plus one set per draft, each draft standing in for the
    /// active block. Accounted as a single model call by the engine.
    fn forward_batched(&self, state: &SequenceState, drafts: &[Block]) -> Result<(Marginals, Vec<Marginals>)> {
        let target = self.forward(state)?;
        let mut per_draft = Vec::with_capacity(drafts.len());
        for d in drafts {
            if d.len() != state.block_len {
                return Err(SpiffyError::DraftLength {
                    got: d.len(),
                    expected: state.block_len,
                });
            }
            per_draft.push(self.marginals(&state.with_active_block(d.clone()))?);
        }
        Ok((target, per_draft))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mixture {
    pub left: f64,
    pub right: f64,
    pub unigram: f64,
}

impl Mixture {
    pub fn new(left: f64, right: f64, unigram: f64) -> Result<Self> {
        let m = Mixture { left, right, unigram };
        m.validate()?;
        Ok(m)
    }

    fn validate(&self) -> Result<()> {
        let w = [self.left, self.right, self.unigram];
        if w.iter().any(|x| x.is_nan() || *x < 0.0) {
            return Err(SpiffyError::InvalidArgument(
                "mixture weights must be non-negative".into(),
            ));
        }
        let sum: f64 = w.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(SpiffyError::InvalidArgument(format!(
                "mixture weights sum to {sum}, expected 1"
            )));
        }
        Ok(())
    }
}

impl Default for Mixture {
    fn default() -> Self {
        Mixture {
            left: 0.6,
            right: 0.2,
            unigram: 0.2,
        }
    }
}

/// Serialized form of a [`ToyDenoiser`]: hyperparameters plus exact counts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub vocab: usize,
    pub alpha: f64,
    pub lambdas: Mixture,
    /// `bigram_left[a][b - 1]`: times `b` directly follows `a`. Row 0 is unused.
    pub bigram_left: Vec<Vec<u64>>,
    /// `bigram_right[a][b - 1]`: times `b` directly precedes `a`. Row 0 is unused.
    pub bigram_right: Vec<Vec<u64>>,
    pub unigram: Vec<u64>,
}

#[derive(Clone, Debug)]
pub struct ToyDenoiser {
    doc: ModelDocument,
    // Smoothed distributions, row-major, `vocab` columns each.
    left_probs: Vec<f64>,
    right_probs: Vec<f64>,
    uni_probs: Vec<f64>,
}

fn smooth(counts: &[u64], alpha: f64) -> impl Iterator<Item = f64> + '_ {
    let total: u64 = counts.iter().sum();
    let denom = total as f64 + alpha * counts.len() as f64;
    counts.iter().map(move |&c| (c as f64 + alpha) / denom)
}

impl ToyDenoiser {
    pub fn train(corpus: &[Vec<TokenId>], vocab: usize, alpha: f64, lambdas: Mixture) -> Result<Self> {
        if corpus.iter().all(Vec::is_empty) {
            return Err(SpiffyError::EmptyCorpus);
        }
        let mut left = vec![vec![0u64; vocab]; vocab + 1];
        let mut right = vec![vec![0u64; vocab]; vocab + 1];
        let mut uni = vec![0u64; vocab];
        for seq in corpus {
            for &t in seq {
                if t == MASK || t as usize > vocab {
                    return Err(SpiffyError::TokenOutOfRange { token: t, vocab });
                }
                uni[t as usize - 1] += 1;
            }
            for w in seq.windows(2) {
                let (a, b) = (w[0] as usize, w[1] as usize);
                left[a][b - 1] += 1;
                right[b][a - 1] += 1;
            }
        }
        Self::from_document(ModelDocument {
            vocab,
            alpha,
            lambdas,
            bigram_left: left,
            bigram_right: right,
            unigram: uni,
        })
    }

    pub fn from_document(doc: ModelDocument) -> Result<Self> {
        let v = doc.vocab;
        if v == 0 {
            return Err(SpiffyError::InvalidArgument("vocabulary is empty".into()));
        }
        if doc.alpha.is_nan() || doc.alpha <= 0.0 {
            return Err(SpiffyError::InvalidArgument(format!(
                "alpha must be positive, got {}",
                doc.alpha
            )));
        }
        doc.lambdas.validate()?;
        let table_ok = |t: &Vec<Vec<u64>>| t.len() == v + 1 && t.iter().all(|r| r.len() == v);
        if !table_ok(&doc.bigram_left) || !table_ok(&doc.bigram_right) || doc.unigram.len() != v {
            return Err(SpiffyError::InvalidArgument(format!(
                "count tables do not match vocabulary size {v}"
            )));
        }
        let flatten = |t: &Vec<Vec<u64>>| -> Vec<f64> { t.iter().flat_map(|row| smooth(row, doc.alpha)).collect() };
        let left_probs = flatten(&doc.bigram_left);
        let right_probs = flatten(&doc.bigram_right);
        let uni_probs = smooth(&doc.unigram, doc.alpha).collect();
        Ok(ToyDenoiser {
            doc,
            left_probs,
            right_probs,
            uni_probs,
        })
    }

    pub fn document(&self) -> &ModelDocument {
        &self.doc
    }

    pub fn bigram_left(&self, a: TokenId, b: TokenId) -> u64 {
        self.doc.bigram_left[a as usize][b as usize - 1]
    }

    pub fn bigram_right(&self, a: TokenId, b: TokenId) -> u64 {
        self.doc.bigram_right[a as usize][b as usize - 1]
    }

    pub fn unigram(&self, b: TokenId) -> u64 {
        self.doc.unigram[b as usize - 1]
    }

    /// Smoothed unigram distribution, index `v - 1` for token `v`.
    pub fn unigram_distribution(&self) -> &[f64] {
        &self.uni_probs
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.doc)?;
        std::fs::write(path, text + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_document(serde_json::from_str(&text)?)
    }

    fn row_into(&self, out: &mut [f64], left: Option<(TokenId, u32)>, right: Option<(TokenId, u32)>) {
        let v = self.doc.vocab;
        let lam = self.doc.lambdas;
        let wl = left.map_or(0.0, |(_, gap)| lam.left * 0.5f64.powi(gap as i32));
        let wr = right.map_or(0.0, |(_, gap)| lam.right * 0.5f64.powi(gap as i32));
        let wu = lam.unigram + (lam.left - wl) + (lam.right - wr);
        for (o, &u) in out.iter_mut().zip(&self.uni_probs) {
            *o = wu * u;
        }
        if let Some((a, _)) = left {
            let row = &self.left_probs[a as usize * v..(a as usize + 1) * v];
            for (o, &p) in out.iter_mut().zip(row) {
                *o += wl * p;
            }
        }
        if let Some((c, _)) = right {
            let row = &self.right_probs[c as usize * v..(c as usize + 1) * v];
            for (o, &p) in out.iter_mut().zip(row) {
                *o += wr * p;
            }
        }
    }
}

impl DlmOracle for ToyDenoiser {
    fn vocab_size(&self) -> usize {
        self.doc.vocab
    }

    fn marginals(&self, state: &SequenceState) -> Result<Marginals> {
        let v = self.doc.vocab;
        let seq = state.flatten();
        if let Some(&t) = seq.iter().find(|&&t| t as usize > v) {
            return Err(SpiffyError::TokenOutOfRange { token: t, vocab: v });
        }
        let start = state.block_offset(state.active);
        let end = start + state.block_len;

        // Nearest unmasked neighbour on each side, with the number of masked
        // positions skipped on the way.
        let mut left_ctx = vec![None; state.block_len];
        let mut last: Option<(TokenId, u32)> = None;
        for (pos, &t) in seq.iter().enumerate().take(end) {
            if pos >= start {
                left_ctx[pos - start] = last;
            }
            last = if t == MASK {
                last.map(|(a, g)| (a, g + 1))
            } else {
                Some((t, 0))
            };
        }
        let mut right_ctx = vec![None; state.block_len];
        let mut next: Option<(TokenId, u32)> = None;
        for pos in (start..seq.len()).rev() {
            if pos < end {
                right_ctx[pos - start] = next;
            }
            let t = seq[pos];
            next = if t == MASK {
                next.map(|(a, g)| (a, g + 1))
            } else {
                Some((t, 0))
            };
        }

        let mut probs = vec![0.0; state.block_len * v];
        let block = state.active_block();
        for n in 0..state.block_len {
            let row = &mut probs[n * v..(n + 1) * v];
            match block.get(n) {
                MASK => self.row_into(row, left_ctx[n], right_ctx[n]),
                t => row[t as usize - 1] = 1.0,
            }
        }
        Ok(Marginals::from_flat(v, probs))
    }
}

/// Reads whitespace-separated token ids, one sequence per non-empty line.
pub fn parse_corpus(text: &str, origin: &str) -> Result<Vec<Vec<TokenId>>> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let seq = line
            .split_whitespace()
            .map(|tok| {
                tok.parse::<TokenId>()
                    .map_err(|_| SpiffyError::parse(origin, idx + 1, format!("`{tok}` is not a token id")))
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(pos) = seq.iter().position(|&t| t == MASK) {
            return Err(SpiffyError::parse(
                origin,
                idx + 1,
                format!("token {pos} is the reserved MASK id 0"),
            ));
        }
        out.push(seq);
    }
    Ok(out)
}

pub fn read_corpus(path: &Path) -> Result<Vec<Vec<TokenId>>> {
    let text = std::fs::read_to_string(path)?;
    parse_corpus(&text, &path.display().to_string())
}

pub fn format_corpus(seqs: &[Vec<TokenId>]) -> String {
    let mut out = String::new();
    for s in seqs {
        let line: Vec<String> = s.iter().map(ToString::to_string).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(corpus: &[Vec<TokenId>], v: usize, lam: Mixture) -> ToyDenoiser {
        ToyDenoiser::train(corpus, v, 0.5, lam).unwrap()
    }

    #[test]
    fn counts_from_alternating_corpus() {
        let m = model(&[vec![1, 2, 1, 2, 1, 2]], 2, Mixture::default());
        // pairs (1,2),(2,1),(1,2),(2,1),(1,2)
        assert_eq!(m.bigram_left(1, 2), 3);
        assert_eq!(m.bigram_left(2, 1), 2);
        assert_eq!(m.bigram_left(1, 1), 0);
        assert_eq!(m.bigram_right(1, 2), 2);
        assert_eq!(m.bigram_right(2, 1), 3);
        assert_eq!(m.unigram(1), 3);
        assert_eq!(m.unigram(2), 3);
    }

    #[test]
    fn single_token_corpus() {
        let m = model(&[vec![1]], 3, Mixture::default());
        assert_eq!(m.unigram(1), 1);
        for a in 1..=3 {
            for b in 1..=3 {
                assert_eq!(m.bigram_left(a, b), 0);
                assert_eq!(m.bigram_right(a, b), 0);
            }
        }
    }

    #[test]
    fn pure_smoothing_is_uniform() {
        let doc = ModelDocument {
            vocab: 4,
            alpha: 1.0,
            lambdas: Mixture::default(),
            bigram_left: vec![vec![0; 4]; 5],
            bigram_right: vec![vec![0; 4]; 5],
            unigram: vec![0; 4],
        };
        let m = ToyDenoiser::from_document(doc).unwrap();
        let s = SequenceState::new(vec![2], 1, 3);
        let out = m.forward(&s).unwrap();
        for n in 0..3 {
            for &p in out.row(n) {
                assert!((p - 0.25).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn training_errors() {
        assert!(matches!(
            ToyDenoiser::train(&[], 3, 1.0, Mixture::default()),
            Err(SpiffyError::EmptyCorpus)
        ));
        let err = ToyDenoiser::train(&[vec![1, 7]], 3, 1.0, Mixture::default()).unwrap_err();
        assert!(err.to_string().contains('7'));
        assert!(Mixture::new(0.5, 0.5, 0.5).is_err());
    }

    #[test]
    fn both_neighbours_agree_on_successor() {
        // Corpus "1 2 1 2 1 2": position between two 1s should predict 2.
        let m = model(&[vec![1, 2, 1, 2, 1, 2]], 2, Mixture::default());
        let mut s = SequenceState::new(vec![1], 1, 3);
        s.blocks[0] = Block::from_tokens(vec![MASK, 1, 2]);
        let out = m.forward(&s).unwrap();
        assert_eq!(out.top1(0).1, 2);
    }

    #[test]
    fn hand_computed_row() {
        // V=2, alpha=0.5, lambdas (0.6, 0.2, 0.2). Corpus "1 2 1 2 1 2".
        // Block [MASK, MASK, 1] after prompt [1]:
        //   position 0: left 1 gap 0, right 1 gap 1.
        let m = model(&[vec![1, 2, 1, 2, 1, 2]], 2, Mixture::default());
        let mut s = SequenceState::new(vec![1], 1, 3);
        s.blocks[0] = Block::from_tokens(vec![MASK, MASK, 1]);
        let out = m.forward(&s).unwrap();
        let p_left = [0.5 / 4.0, 3.5 / 4.0]; // counts (0,3) + 0.5 over 3 + 1
        let p_right = [0.5 / 3.0, 2.5 / 3.0]; // counts (0,2) + 0.5 over 2 + 1
        let p_uni = [0.5, 0.5];
        let wl = 0.6;
        let wr = 0.2 * 0.5;
        let wu = 0.2 + 0.1;
        for b in 0..2 {
            let expect = wl * p_left[b] + wr * p_right[b] + wu * p_uni[b];
            assert!((out.row(0)[b] - expect).abs() < 1e-12);
        }
        assert_eq!(out.row(2), &[1.0, 0.0]);
    }

    #[test]
    fn unigram_only_mixture_ignores_context() {
        let m = model(&[vec![1, 2, 3, 1, 2, 3, 3]], 3, Mixture::new(0.0, 0.0, 1.0).unwrap());
        let mut s = SequenceState::new(vec![2, 1], 1, 4);
        s.blocks[0] = Block::from_tokens(vec![MASK, 3, MASK, MASK]);
        let out = m.forward(&s).unwrap();
        for n in [0, 2, 3] {
            assert_eq!(out.row(n), m.unigram_distribution());
        }
    }

    #[test]
    fn deterministic_and_normalized() {
        let m = model(&[vec![1, 2, 3, 4, 1, 3, 2, 4]], 4, Mixture::default());
        let mut s = SequenceState::new(vec![1, 2], 2, 4);
        s.blocks[0] = Block::from_tokens(vec![MASK, 4, MASK, MASK]);
        let a = m.forward(&s).unwrap();
        let b = m.forward(&s).unwrap();
        assert!(a.bit_eq(&b));
        a.check_against(s.active_block(), 1e-9).unwrap();
    }

    #[test]
    fn complete_block_cannot_be_denoised() {
        let m = model(&[vec![1, 2]], 2, Mixture::default());
        let mut s = SequenceState::new(vec![1], 1, 2);
        s.blocks[0] = Block::from_tokens(vec![1, 2]);
        assert!(matches!(m.forward(&s), Err(SpiffyError::NothingToDenoise(0))));
        // The infallible entry point still answers, with one-hot rows.
        let out = m.marginals(&s).unwrap();
        assert_eq!(out.row(1), &[0.0, 1.0]);
    }

    #[test]
    fn batched_matches_independent_calls() {
        let m = model(&[vec![1, 2, 3, 1, 3, 2, 2, 1]], 3, Mixture::default());
        let s = SequenceState::new(vec![3], 2, 3);
        let drafts = vec![
            Block::from_tokens(vec![1, MASK, MASK]),
            Block::from_tokens(vec![MASK, MASK, 2]),
            Block::from_tokens(vec![2, 3, MASK]),
        ];
        let (target, per) = m.forward_batched(&s, &drafts).unwrap();
        assert!(target.bit_eq(&m.forward(&s).unwrap()));
        for (d, got) in drafts.iter().zip(&per) {
            let want = m.forward(&s.with_active_block(d.clone())).unwrap();
            assert!(got.bit_eq(&want));
        }
        let (_, none) = m.forward_batched(&s, &[]).unwrap();
        assert!(none.is_empty());
        let (t, same) = m.forward_batched(&s, &[s.active_block().clone()]).unwrap();
        assert!(same[0].bit_eq(&t));
        assert!(m.forward_batched(&s, &[Block::masked(2)]).is_err());
    }

    #[test]
    fn model_document_round_trip() {
        let m = model(&[vec![1, 2, 3, 2]], 3, Mixture::default());
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.json");
        m.save(&p).unwrap();
        let back = ToyDenoiser::load(&p).unwrap();
        assert_eq!(back.document(), m.document());
    }

    #[test]
    fn corpus_parsing() {
        let seqs = parse_corpus("1 2 3\n\n4 5\n", "c.txt").unwrap();
        assert_eq!(seqs, vec![vec![1, 2, 3], vec![4, 5]]);
        let err = parse_corpus("1 2\n3 x\n", "c.txt").unwrap_err();
        assert_eq!(err.to_string(), "c.txt:2: `x` is not a token id");
        assert!(parse_corpus("1 0 2\n", "c.txt").is_err());
        assert_eq!(format_corpus(&seqs), "1 2 3\n4 5\n");
    }
}
