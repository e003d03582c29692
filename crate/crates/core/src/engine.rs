//! Block-wise generation loops and NFE accounting.
//!
//! Vanilla generation calls the model once per denoising step. Speculative
//! generation builds drafts from the distribution that produced the current
//! state, verifies them together with the current state in one batched call,
//! and commits every step that a matching draft covers.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::batch::{build_mask, build_position_ids, PackShape};
use crate::config::{GenerationConfig, Schedule};
use crate::drafting::{rank_positions, rank_vocab, spawn_drafts, DraftBlock, DraftGraphSpec, RankingView};
use crate::error::{Result, SpiffyError};
use crate::model::DlmOracle;
use crate::state::{Block, Marginals, TokenId};
use crate::verification::{advance, verify_with, VerifyOutcome};

/// Deliberate verification bugs, for checking that the lossless check catches them.
#[doc(hidden)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Fault {
    /// Accepts any draft whose unmasked count matches, ignoring its tokens.
    IgnoreContent,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct EngineOptions {
    /// Keep every committed block state.
    pub keep_trace: bool,
    /// Time each stage; also builds the attention mask and position ids.
    pub profile: bool,
    #[doc(hidden)]
    pub fault: Option<Fault>,
}

impl EngineOptions {
    pub fn traced() -> Self {
        EngineOptions {
            keep_trace: true,
            ..Self::default()
        }
    }
}

/// Cumulative wall time per stage, in nanoseconds.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageTimings {
    pub vocab_sort: u64,
    pub position_sort: u64,
    pub drafting: u64,
    pub mask: u64,
    pub position_ids: u64,
    pub verify: u64,
    pub model: u64,
}

impl StageTimings {
    pub fn stages(&self) -> [(&'static str, u64); 7] {
        [
            ("vocab_sort", self.vocab_sort),
            ("position_sort", self.position_sort),
            ("drafting", self.drafting),
            ("mask", self.mask),
            ("position_ids", self.position_ids),
            ("verify", self.verify),
            ("model", self.model),
        ]
    }

    fn add(&mut self, other: &StageTimings) {
        self.vocab_sort += other.vocab_sort;
        self.position_sort += other.position_sort;
        self.drafting += other.drafting;
        self.mask += other.mask;
        self.position_ids += other.position_ids;
        self.verify += other.verify;
        self.model += other.model;
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockStats {
    pub block: usize,
    pub nfe: usize,
    pub acceptances: usize,
    /// Tokens committed by every denoising step of the block.
    pub realized_s: Vec<usize>,
    /// Steps covered by accepted drafts.
    pub saved_s: Vec<usize>,
}

impl BlockStats {
    pub fn tokens(&self) -> usize {
        self.realized_s.iter().sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub total_nfe: usize,
    /// One call per committed token: the fixed:1 vanilla cost.
    pub baseline_nfe: usize,
    pub acceptances: usize,
    pub per_block: Vec<BlockStats>,
    pub eot_block: Option<usize>,
    pub speedup_all: f64,
    pub speedup_to_eot: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage_timings: Option<StageTimings>,
}

impl RunReport {
    fn finish(per_block: Vec<BlockStats>, eot_block: Option<usize>, stage_timings: Option<StageTimings>) -> Self {
        let mut report = RunReport {
            total_nfe: per_block.iter().map(|b| b.nfe).sum(),
            baseline_nfe: per_block.iter().map(BlockStats::tokens).sum(),
            acceptances: per_block.iter().map(|b| b.acceptances).sum(),
            per_block,
            eot_block,
            speedup_all: 0.0,
            speedup_to_eot: 0.0,
            stage_timings,
        };
        report.speedup_all = compute_speedup(&report, false);
        report.speedup_to_eot = compute_speedup(&report, true);
        report
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub block: usize,
    pub state: Block,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Generation {
    /// Generated tokens (prompt excluded).
    pub tokens: Vec<TokenId>,
    pub trace: Vec<TraceEntry>,
    pub report: RunReport,
}

fn elapsed_ns(start: Instant) -> u64 {
    start.elapsed().as_nanos().min(u64::MAX as u128) as u64
}

fn check_prompt(prompt: &[TokenId], vocab: usize) -> Result<()> {
    if let Some(&t) = prompt.iter().find(|&&t| t == 0 || t as usize > vocab) {
        return Err(SpiffyError::TokenOutOfRange { token: t, vocab });
    }
    Ok(())
}

fn find_eot(tokens: &[TokenId], eot: TokenId) -> bool {
    tokens.contains(&eot)
}

pub fn generate_vanilla<M: DlmOracle + ?Sized>(
    model: &M,
    prompt: &[TokenId],
    config: &GenerationConfig,
    options: EngineOptions,
) -> Result<Generation> {
    config.validate()?;
    check_prompt(prompt, model.vocab_size())?;
    let mut state = config.initial_state(prompt.to_vec());
    let mut trace = Vec::new();
    let mut per_block = Vec::with_capacity(config.n_blocks());
    let mut timings = options.profile.then(StageTimings::default);
    let mut eot_block = None;

    for k in 0..config.n_blocks() {
        state.active = k;
        let mut stats = BlockStats {
            block: k,
            nfe: 0,
            acceptances: 0,
            realized_s: Vec::new(),
            saved_s: Vec::new(),
        };
        while !state.blocks[k].is_complete() {
            let t0 = Instant::now();
            let marginals = model.forward(&state)?;
            if let Some(t) = timings.as_mut() {
                t.model += elapsed_ns(t0);
            }
            stats.nfe += 1;
            let (next, s) = advance(&state.blocks[k], &marginals, &config.schedule)?;
            stats.realized_s.push(s);
            state.blocks[k] = next;
            if options.keep_trace {
                trace.push(TraceEntry {
                    block: k,
                    state: state.blocks[k].clone(),
                });
            }
        }
        if eot_block.is_none() && find_eot(state.blocks[k].tokens(), config.eot_token) {
            eot_block = Some(k);
        }
        per_block.push(stats);
    }
    Ok(Generation {
        tokens: state.generated(),
        trace,
        report: RunReport::finish(per_block, eot_block, timings),
    })
}

/// Checks that `graph` can be used with `config`.
pub fn check_graph(graph: &DraftGraphSpec, config: &GenerationConfig) -> Result<()> {
    if let Schedule::Fixed { s } = config.schedule {
        if !graph.is_empty() && graph.tokens_per_level() != s {
            return Err(SpiffyError::Config(format!(
                "graph has {} tokens per level but the schedule is {}",
                graph.tokens_per_level(),
                config.schedule
            )));
        }
    }
    if graph.max_vocab_rank() as usize > config.top_k_vocab {
        return Err(SpiffyError::Config(format!(
            "graph uses vocabulary rank {} above top_k_vocab = {}",
            graph.max_vocab_rank(),
            config.top_k_vocab
        )));
    }
    Ok(())
}

pub fn generate_speculative<M: DlmOracle + ?Sized>(
    model: &M,
    prompt: &[TokenId],
    config: &GenerationConfig,
    graph: &DraftGraphSpec,
    options: EngineOptions,
) -> Result<Generation> {
    config.validate()?;
    check_graph(graph, config)?;
    check_prompt(prompt, model.vocab_size())?;
    let mut state = config.initial_state(prompt.to_vec());
    let mut trace = Vec::new();
    let mut per_block = Vec::with_capacity(config.n_blocks());
    let mut timings = options.profile.then(StageTimings::default);
    let mut eot_block = None;

    for k in 0..config.n_blocks() {
        state.active = k;
        let mut stats = BlockStats {
            block: k,
            nfe: 0,
            acceptances: 0,
            realized_s: Vec::new(),
            saved_s: Vec::new(),
        };
        // Distribution that produced the current block state; none at block start.
        let mut drafting: Option<Marginals> = None;
        while !state.blocks[k].is_complete() {
            let block = &state.blocks[k];
            let mut local = StageTimings::default();
            let drafts = match (&drafting, graph.is_empty()) {
                (Some(m), false) => {
                    let t0 = Instant::now();
                    let positions = rank_positions(m, block);
                    local.position_sort = elapsed_ns(t0);
                    let t0 = Instant::now();
                    let vocab = rank_vocab(m, &positions, config.top_k_vocab);
                    local.vocab_sort = elapsed_ns(t0);
                    let t0 = Instant::now();
                    let drafts = spawn_drafts(graph, &RankingView { positions, vocab }, block)?;
                    local.drafting = elapsed_ns(t0);
                    drafts
                }
                _ => Vec::new(),
            };

            if options.profile {
                let shape = PackShape::of(&state, drafts.len())?;
                let t0 = Instant::now();
                let mask = build_mask(&shape);
                local.mask = elapsed_ns(t0);
                let t0 = Instant::now();
                let ids = build_position_ids(&shape);
                local.position_ids = elapsed_ns(t0);
                debug_assert_eq!(mask.side(), ids.len());
            }

            let draft_blocks: Vec<Block> = drafts.iter().map(|d| d.block.clone()).collect();
            let t0 = Instant::now();
            let (target, draft_marginals) = model.forward_batched(&state, &draft_blocks)?;
            local.model = elapsed_ns(t0);
            stats.nfe += 1;

            let t0 = Instant::now();
            let outcome = run_verify(block, &target, &drafts, &draft_marginals, config, options.fault)?;
            local.verify = elapsed_ns(t0);

            stats.acceptances += outcome.acceptances();
            stats.saved_s.extend_from_slice(outcome.saved_s());
            stats.realized_s.extend_from_slice(&outcome.realized_s);
            drafting = Some(outcome.adopted_marginals.unwrap_or(target));
            state.blocks[k] = outcome.new_block;
            if options.keep_trace {
                trace.push(TraceEntry {
                    block: k,
                    state: state.blocks[k].clone(),
                });
            }
            if let Some(t) = timings.as_mut() {
                t.add(&local);
            }
        }
        if eot_block.is_none() && find_eot(state.blocks[k].tokens(), config.eot_token) {
            eot_block = Some(k);
        }
        per_block.push(stats);
    }
    Ok(Generation {
        tokens: state.generated(),
        trace,
        report: RunReport::finish(per_block, eot_block, timings),
    })
}

fn run_verify(
    block: &Block,
    target: &Marginals,
    drafts: &[DraftBlock],
    draft_marginals: &[Marginals],
    config: &GenerationConfig,
    fault: Option<Fault>,
) -> Result<VerifyOutcome> {
    match fault {
        None => verify_with(block, target, drafts, draft_marginals, &config.schedule, |d, b| {
            &d.block == b
        }),
        Some(Fault::IgnoreContent) => {
            verify_with(block, target, drafts, draft_marginals, &config.schedule, |_, _| true)
        }
    }
}

/// `baseline / total` NFEs, optionally restricted to blocks up to the EOT block.
pub fn compute_speedup(report: &RunReport, up_to_eot: bool) -> f64 {
    let last = match (up_to_eot, report.eot_block) {
        (true, Some(b)) => b,
        _ => usize::MAX,
    };
    let (base, total) = report
        .per_block
        .iter()
        .filter(|b| b.block <= last)
        .fold((0usize, 0usize), |(x, y), b| (x + b.tokens(), y + b.nfe));
    if total == 0 {
        return 1.0;
    }
    base as f64 / total as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockSummary {
    pub block: usize,
    /// Runs that reached this block before or at their EOT block.
    pub runs: usize,
    pub mean_speedup: f64,
    /// Mean accepted drafts per model call.
    pub mean_acceptance_rate: f64,
}

/// Per-block means over `reports`, counting each run only up to its EOT block.
pub fn per_block_summary(reports: &[RunReport]) -> Result<Vec<BlockSummary>> {
    let Some(first) = reports.first() else {
        return Ok(Vec::new());
    };
    let n = first.per_block.len();
    if reports.iter().any(|r| r.per_block.len() != n) {
        return Err(SpiffyError::InvalidArgument(
            "reports have different block counts".into(),
        ));
    }
    let mut out = Vec::new();
    for k in 0..n {
        let (mut runs, mut speed, mut rate) = (0usize, 0.0, 0.0);
        for r in reports {
            if r.eot_block.is_some_and(|e| k > e) {
                continue;
            }
            let b = &r.per_block[k];
            if b.nfe == 0 {
                continue;
            }
            runs += 1;
            speed += b.tokens() as f64 / b.nfe as f64;
            rate += b.acceptances as f64 / b.nfe as f64;
        }
        if runs > 0 {
            out.push(BlockSummary {
                block: k,
                runs,
                mean_speedup: speed / runs as f64,
                mean_acceptance_rate: rate / runs as f64,
            });
        }
    }
    Ok(out)
}

/// Each stage as a percentage of cumulative model time.
pub fn profile_stages(report: &RunReport) -> Result<Vec<(String, f64)>> {
    let t = report
        .stage_timings
        .ok_or_else(|| SpiffyError::InvalidArgument("report has no stage timings".into()))?;
    if t.model == 0 {
        return Err(SpiffyError::InvalidArgument("model time is zero".into()));
    }
    Ok(t.stages()
        .iter()
        .filter(|(name, _)| *name != "model")
        .map(|&(name, ns)| (name.to_string(), 100.0 * ns as f64 / t.model as f64))
        .collect())
}

/// Sums stage timings over several reports.
pub fn total_timings(reports: &[RunReport]) -> Option<StageTimings> {
    let mut acc: Option<StageTimings> = None;
    for r in reports {
        if let Some(t) = &r.stage_timings {
            acc.get_or_insert_with(StageTimings::default).add(t);
        }
    }
    acc
}

/// Whether `sub` appears in `full` in order.
pub fn is_subsequence<T: PartialEq>(sub: &[T], full: &[T]) -> bool {
    let mut it = full.iter();
    sub.iter().all(|x| it.any(|y| y == x))
}

/// First place speculative and vanilla runs disagree.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Divergence {
    Tokens {
        index: usize,
        vanilla: TokenId,
        speculative: TokenId,
    },
    /// A committed speculative state that vanilla never visits, with the
    /// vanilla state at the same block and unmasked count if one exists.
    Trace {
        speculative: TraceEntry,
        vanilla: Option<TraceEntry>,
    },
}

impl std::fmt::Display for Divergence {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Divergence::Tokens {
                index,
                vanilla,
                speculative,
            } => write!(f, "token {index}: vanilla {vanilla}, speculative {speculative}"),
            Divergence::Trace { speculative, vanilla } => {
                write!(f, "block {}: speculative {}", speculative.block, speculative.state)?;
                match vanilla {
                    Some(v) => write!(f, " vs vanilla {}", v.state),
                    None => write!(f, " has no vanilla counterpart"),
                }
            }
        }
    }
}

/// Runs both generators and compares outputs and traces.
pub fn check_lossless<M: DlmOracle + ?Sized>(
    model: &M,
    prompt: &[TokenId],
    config: &GenerationConfig,
    graph: &DraftGraphSpec,
    fault: Option<Fault>,
) -> Result<Option<Divergence>> {
    let vanilla = generate_vanilla(model, prompt, config, EngineOptions::traced())?;
    let options = EngineOptions {
        keep_trace: true,
        profile: false,
        fault,
    };
    let spec = generate_speculative(model, prompt, config, graph, options)?;
    Ok(first_divergence(&vanilla, &spec))
}

pub fn first_divergence(vanilla: &Generation, speculative: &Generation) -> Option<Divergence> {
    let mut it = vanilla.trace.iter();
    for entry in &speculative.trace {
        if !it.any(|v| v == entry) {
            let counterpart = vanilla
                .trace
                .iter()
                .find(|v| v.block == entry.block && v.state.unmasked_count() == entry.state.unmasked_count())
                .cloned();
            return Some(Divergence::Trace {
                speculative: entry.clone(),
                vanilla: counterpart,
            });
        }
    }
    vanilla
        .tokens
        .iter()
        .zip(&speculative.tokens)
        .enumerate()
        .find(|(_, (a, b))| a != b)
        .map(|(index, (&vanilla, &speculative))| Divergence::Tokens {
            index,
            vanilla,
            speculative,
        })
}

/// Vanilla and speculative reports for one prompt.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PromptRun {
    pub prompt_index: usize,
    pub vanilla: RunReport,
    pub speculative: RunReport,
    pub lossless: bool,
}

/// Runs every prompt both ways in parallel; results are in prompt order.
pub fn bench<M: DlmOracle + ?Sized>(
    model: &M,
    prompts: &[Vec<TokenId>],
    config: &GenerationConfig,
    graph: &DraftGraphSpec,
    options: EngineOptions,
) -> Result<Vec<PromptRun>> {
    check_graph(graph, config)?;
    prompts
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let vanilla = generate_vanilla(model, p, config, options)?;
            let speculative = generate_speculative(model, p, config, graph, options)?;
            Ok(PromptRun {
                prompt_index: i,
                lossless: vanilla.tokens == speculative.tokens,
                vanilla: vanilla.report,
                speculative: speculative.report,
            })
        })
        .collect()
}

/// Aggregate speedup: summed baselines over summed NFEs.
pub fn aggregate_speedup<'a>(reports: impl IntoIterator<Item = &'a RunReport>, up_to_eot: bool) -> f64 {
    let (mut base, mut total) = (0usize, 0usize);
    for r in reports {
        let last = match (up_to_eot, r.eot_block) {
            (true, Some(b)) => b,
            _ => usize::MAX,
        };
        for b in r.per_block.iter().filter(|b| b.block <= last) {
            base += b.tokens();
            total += b.nfe;
        }
    }
    if total == 0 {
        1.0
    } else {
        base as f64 / total as f64
    }
}
