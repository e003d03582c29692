//! Seeded Markov-chain corpus used by the bundled data and the tests.
//!
//! Content tokens sit on one long successor cycle. From a token the chain
//! usually moves one place along the cycle, sometimes two or three, and
//! otherwise jumps to a uniform random token. A few tokens lead to
//! end-of-text (token 1) instead of their cycle successor, and every sequence
//! ends with a run of end-of-text tokens, like padded model output.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::state::TokenId;

pub const EOT: TokenId = 1;
const FIRST_CONTENT: TokenId = 2;

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSpec {
    /// Vocabulary size, end-of-text included.
    pub vocab: usize,
    pub sequences: usize,
    pub min_len: usize,
    pub max_len: usize,
    /// `jumps[d]`: probability of moving `d + 1` places along the cycle.
    pub jumps: Vec<f64>,
    /// Number of cycle tokens, evenly spaced, whose successor is end-of-text.
    pub exits: usize,
    pub min_pad: usize,
    pub max_pad: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            vocab: 96,
            sequences: 300,
            min_len: 40,
            max_len: 120,
            jumps: vec![0.45, 0.3, 0.2],
            exits: 1,
            min_pad: 1,
            max_pad: 2,
            seed: 7,
        }
    }
}

impl SyntheticSpec {
    /// Successor of every token (index = token id); end-of-text maps to itself.
    pub fn successors(&self) -> Vec<TokenId> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x5eed);
        let mut cycle: Vec<TokenId> = (FIRST_CONTENT..=self.vocab as TokenId).collect();
        cycle.shuffle(&mut rng);
        let mut succ = vec![EOT; self.vocab + 1];
        for (i, &t) in cycle.iter().enumerate() {
            succ[t as usize] = cycle[(i + 1) % cycle.len()];
        }
        if let Some(stride) = cycle.len().checked_div(self.exits) {
            for e in 0..self.exits {
                succ[cycle[e * stride] as usize] = EOT;
            }
        }
        succ
    }

    fn content(&self, rng: &mut ChaCha8Rng) -> TokenId {
        rng.gen_range(FIRST_CONTENT..=self.vocab as TokenId)
    }

    fn step(&self, rng: &mut ChaCha8Rng, succ: &[TokenId], a: TokenId) -> TokenId {
        let mut r: f64 = rng.gen();
        for (d, &p) in self.jumps.iter().enumerate() {
            if r < p {
                let mut t = a;
                for _ in 0..=d {
                    t = succ[t as usize];
                }
                return t;
            }
            r -= p;
        }
        self.content(rng)
    }

    fn sequence(&self, rng: &mut ChaCha8Rng, succ: &[TokenId], len: usize, pad: usize) -> Vec<TokenId> {
        let mut out = Vec::with_capacity(len + pad);
        let mut a = self.content(rng);
        for _ in 0..len {
            out.push(a);
            a = self.step(rng, succ, a);
            if a == EOT {
                break;
            }
        }
        out.extend(std::iter::repeat_n(EOT, pad));
        out
    }

    pub fn corpus(&self) -> Vec<Vec<TokenId>> {
        let succ = self.successors();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        (0..self.sequences)
            .map(|_| {
                let len = rng.gen_range(self.min_len..=self.max_len);
                let pad = rng.gen_range(self.min_pad..=self.max_pad);
                self.sequence(&mut rng, &succ, len, pad)
            })
            .collect()
    }

    /// `count` prompts of up to `len` content tokens, drawn with their own
    /// seed so they are disjoint from the corpus sequences.
    pub fn prompts(&self, count: usize, len: usize, seed: u64) -> Vec<Vec<TokenId>> {
        let succ = self.successors();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count).map(|_| self.sequence(&mut rng, &succ, len, 0)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_in_range() {
        let spec = SyntheticSpec::default();
        let a = spec.corpus();
        assert_eq!(a, spec.corpus());
        assert_eq!(a.len(), spec.sequences);
        assert!(a.iter().flatten().all(|&t| t >= 1 && t as usize <= spec.vocab));
        assert!(a.iter().map(Vec::len).sum::<usize>() >= 10_000);
        assert!(a.iter().all(|s| s.ends_with(&[EOT])));
    }

    #[test]
    fn successor_cycle_with_exits() {
        let spec = SyntheticSpec {
            vocab: 10,
            exits: 3,
            ..SyntheticSpec::default()
        };
        let succ = spec.successors();
        assert_eq!(succ.iter().skip(2).filter(|&&t| t == EOT).count(), 3);
        let mut targets: Vec<TokenId> = succ[2..].iter().copied().filter(|&t| t != EOT).collect();
        targets.sort();
        targets.dedup();
        assert_eq!(targets.len(), 6);
    }

    #[test]
    fn prompts_have_no_eot() {
        let p = SyntheticSpec::default().prompts(20, 8, 1);
        assert!(p.iter().all(|s| !s.is_empty() && s.len() <= 8 && !s.contains(&EOT)));
    }
}
