//! Lossless speculative decoding for block-wise masked diffusion language models.
//!
//! Drafts of future block states are built from the model's own marginals
//! according to a directed draft graph, verified in the same model call that
//! advances the true state, and accepted only when they equal a state
//! vanilla decoding would reach. Output is identical to vanilla decoding;
//! only the number of model calls changes.

pub mod batch;
pub mod calibration;
pub mod cli;
pub mod config;
pub mod drafting;
pub mod engine;
pub mod error;
pub mod model;
pub mod state;
pub mod synthetic;
pub mod verification;

pub use config::{remaining_nfe_without_speculation, GenerationConfig, Schedule};
pub use drafting::{build_graph, DraftBlock, DraftFormula, DraftGraphSpec, RankPair, RankingView};
pub use engine::{generate_speculative, generate_vanilla, EngineOptions, Generation, RunReport};
pub use error::{Result, SpiffyError};
pub use model::{DlmOracle, Mixture, ToyDenoiser};
pub use state::{validate_sequence, Block, Marginals, SequenceState, TokenId, MASK};
