//! Unmasking schedules and the generation configuration file.
//!
//! The configuration file is a flat `key = value` document. Recognised keys:
//! `W`, `L`, `schedule.mode`, `schedule.s`, `schedule.p`, `top_k_vocab`,
//! `eot_token`, `seed`. Blank lines and `#` comments are ignored.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SpiffyError};
use crate::state::{SequenceState, TokenId};

/// How many tokens each denoising step commits.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum Schedule {
    /// Exactly `min(s, remaining)` tokens per step.
    Fixed { s: usize },
    /// Every position whose top-1 probability is at least `p`, and never fewer than one.
    Threshold { p: f64 },
}

impl Schedule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Schedule::Fixed { s: 0 } => Err(SpiffyError::Config("fixed schedule needs s >= 1".into())),
            Schedule::Threshold { p } if !(p > 0.0 && p <= 1.0) => {
                Err(SpiffyError::Config(format!("threshold {p} outside (0, 1]")))
            }
            _ => Ok(()),
        }
    }

    /// Tokens per draft-graph level; `None` for data-dependent schedules.
    pub fn tokens_per_level(&self) -> Option<usize> {
        match *self {
            Schedule::Fixed { s } => Some(s),
            Schedule::Threshold { .. } => None,
        }
    }
}

impl fmt::Display for Schedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Schedule::Fixed { s } => write!(f, "fixed:{s}"),
            Schedule::Threshold { p } => write!(f, "threshold:{p}"),
        }
    }
}

impl FromStr for Schedule {
    type Err = SpiffyError;

    fn from_str(s: &str) -> Result<Self> {
        let (mode, value) = s
            .split_once(':')
            .ok_or_else(|| SpiffyError::Config(format!("schedule `{s}` is not mode:value")))?;
        let sched = match mode.trim() {
            "fixed" => Schedule::Fixed {
                s: value
                    .trim()
                    .parse()
                    .map_err(|_| SpiffyError::Config(format!("bad fixed rate `{value}`")))?,
            },
            "threshold" => Schedule::Threshold {
                p: value
                    .trim()
                    .parse()
                    .map_err(|_| SpiffyError::Config(format!("bad threshold `{value}`")))?,
            },
            other => return Err(SpiffyError::Config(format!("unknown schedule mode `{other}`"))),
        };
        sched.validate()?;
        Ok(sched)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    /// Total generation length `W`.
    pub gen_len: usize,
    /// Block size `L`.
    pub block_len: usize,
    pub schedule: Schedule,
    /// Largest vocabulary rank a draft may use.
    pub top_k_vocab: usize,
    pub eot_token: TokenId,
    pub seed: u64,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            gen_len: 256,
            block_len: 32,
            schedule: Schedule::Fixed { s: 1 },
            top_k_vocab: 3,
            eot_token: 1,
            seed: 0,
        }
    }
}

impl GenerationConfig {
    pub fn n_blocks(&self) -> usize {
        self.gen_len / self.block_len
    }

    pub fn validate(&self) -> Result<()> {
        if self.block_len == 0 || self.gen_len == 0 {
            return Err(SpiffyError::Config("W and L must be positive".into()));
        }
        if !self.gen_len.is_multiple_of(self.block_len) {
            return Err(SpiffyError::Config(format!(
                "W={} is not divisible by L={}",
                self.gen_len, self.block_len
            )));
        }
        if self.top_k_vocab == 0 {
            return Err(SpiffyError::Config("top_k_vocab must be >= 1".into()));
        }
        self.schedule.validate()
    }

    pub fn initial_state(&self, prompt: Vec<TokenId>) -> SequenceState {
        SequenceState::new(prompt, self.n_blocks(), self.block_len)
    }

    pub fn to_kv_string(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("W = {}\n", self.gen_len));
        out.push_str(&format!("L = {}\n", self.block_len));
        match self.schedule {
            Schedule::Fixed { s } => {
                out.push_str("schedule.mode = fixed\n");
                out.push_str(&format!("schedule.s = {s}\n"));
            }
            Schedule::Threshold { p } => {
                out.push_str("schedule.mode = threshold\n");
                out.push_str(&format!("schedule.p = {p}\n"));
            }
        }
        out.push_str(&format!("top_k_vocab = {}\n", self.top_k_vocab));
        out.push_str(&format!("eot_token = {}\n", self.eot_token));
        out.push_str(&format!("seed = {}\n", self.seed));
        out
    }

    /// Parses the `key = value` format; missing keys keep their defaults.
    pub fn from_kv_str(text: &str, origin: &str) -> Result<Self> {
        let mut cfg = GenerationConfig::default();
        let mut mode: Option<String> = None;
        let mut s_val: Option<usize> = None;
        let mut p_val: Option<f64> = None;
        for (idx, raw) in text.lines().enumerate() {
            let lineno = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| SpiffyError::parse(origin, lineno, "expected `key = value`"))?;
            let (key, value) = (key.trim(), value.trim());
            let bad = |what: &str| SpiffyError::parse(origin, lineno, format!("bad {what} `{value}`"));
            match key {
                "W" => cfg.gen_len = value.parse().map_err(|_| bad("W"))?,
                "L" => cfg.block_len = value.parse().map_err(|_| bad("L"))?,
                "schedule.mode" => mode = Some(value.to_string()),
                "schedule.s" => s_val = Some(value.parse().map_err(|_| bad("schedule.s"))?),
                "schedule.p" => p_val = Some(value.parse().map_err(|_| bad("schedule.p"))?),
                "top_k_vocab" => cfg.top_k_vocab = value.parse().map_err(|_| bad("top_k_vocab"))?,
                "eot_token" => cfg.eot_token = value.parse().map_err(|_| bad("eot_token"))?,
                "seed" => cfg.seed = value.parse().map_err(|_| bad("seed"))?,
                other => return Err(SpiffyError::parse(origin, lineno, format!("unknown key `{other}`"))),
            }
        }
        cfg.schedule = match mode.as_deref() {
            None | Some("fixed") => Schedule::Fixed { s: s_val.unwrap_or(1) },
            Some("threshold") => Schedule::Threshold {
                p: p_val.ok_or_else(|| SpiffyError::Config(format!("{origin}: threshold mode needs schedule.p")))?,
            },
            Some(other) => {
                return Err(SpiffyError::Config(format!(
                    "{origin}: unknown schedule.mode `{other}`"
                )))
            }
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_kv_str(&text, &path.display().to_string())
    }
}

/// Model calls vanilla decoding still needs from `state` onwards.
///
/// Threshold schedules are data dependent; they return the masked count,
/// which bounds the call count because every step commits at least one token.
pub fn remaining_nfe_without_speculation(state: &SequenceState, schedule: &Schedule) -> usize {
    state
        .blocks
        .iter()
        .map(|b| {
            let masked = b.masked_count();
            match *schedule {
                Schedule::Fixed { s } => masked.div_ceil(s),
                Schedule::Threshold { .. } => masked,
            }
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::{Block, MASK};

    #[test]
    fn schedule_syntax() {
        assert_eq!("fixed:4".parse::<Schedule>().unwrap(), Schedule::Fixed { s: 4 });
        assert_eq!(
            "threshold:0.9".parse::<Schedule>().unwrap(),
            Schedule::Threshold { p: 0.9 }
        );
        assert!("fixed:0".parse::<Schedule>().is_err());
        assert!("threshold:1.5".parse::<Schedule>().is_err());
        assert!("greedy".parse::<Schedule>().is_err());
        assert_eq!(Schedule::Threshold { p: 0.7 }.to_string(), "threshold:0.7");
    }

    #[test]
    fn remaining_nfe_fully_masked() {
        let s = SequenceState::new(vec![1], 8, 32);
        assert_eq!(remaining_nfe_without_speculation(&s, &Schedule::Fixed { s: 1 }), 256);
        assert_eq!(remaining_nfe_without_speculation(&s, &Schedule::Fixed { s: 4 }), 64);
        assert_eq!(
            remaining_nfe_without_speculation(&s, &Schedule::Threshold { p: 0.9 }),
            256
        );
    }

    #[test]
    fn remaining_nfe_partial_block() {
        // 5 of 32 unmasked in block 0: 27 left there, 7 more blocks of 32.
        let mut s = SequenceState::new(vec![1], 8, 32);
        let mut toks = vec![MASK; 32];
        for t in toks.iter_mut().take(5) {
            *t = 2;
        }
        s.blocks[0] = Block::from_tokens(toks);
        assert_eq!(remaining_nfe_without_speculation(&s, &Schedule::Fixed { s: 1 }), 251);
    }

    #[test]
    fn config_file_round_trip_and_errors() {
        let cfg = GenerationConfig {
            gen_len: 64,
            block_len: 16,
            schedule: Schedule::Threshold { p: 0.85 },
            top_k_vocab: 4,
            eot_token: 9,
            seed: 42,
        };
        let text = cfg.to_kv_string();
        assert_eq!(GenerationConfig::from_kv_str(&text, "cfg").unwrap(), cfg);

        let err = GenerationConfig::from_kv_str("W = 10\nL = 3\n", "cfg").unwrap_err();
        assert!(err.to_string().contains("not divisible"));
        let err = GenerationConfig::from_kv_str("W = 8\nbogus = 1\n", "cfg").unwrap_err();
        assert!(err.to_string().contains("cfg:2"));
    }
}
