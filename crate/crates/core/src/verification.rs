//! Draft block verification.
//!
//! One verification call advances the true block with the target
//! marginals, then repeatedly looks for a draft whose content equals the new
//! state. An accepted draft already carries the model's marginals for that
//! state, so the block can advance again without another model call.

use crate::config::Schedule;
use crate::drafting::{rank_positions, DraftBlock};
use crate::error::{Result, SpiffyError};
use crate::state::{Block, Marginals};

/// Unmasks the next step's tokens greedily under `schedule`.
///
/// Returns the new block and the number of tokens committed.
pub fn advance(block: &Block, marginals: &Marginals, schedule: &Schedule) -> Result<(Block, usize)> {
    if block.is_complete() {
        return Err(SpiffyError::InvalidArgument("block has no masked positions".into()));
    }
    if marginals.len() != block.len() {
        return Err(SpiffyError::InvalidArgument(format!(
            "{} marginal rows for a block of length {}",
            marginals.len(),
            block.len()
        )));
    }
    let order = rank_positions(marginals, block);
    let count = match *schedule {
        Schedule::Fixed { s } => s.min(order.len()),
        Schedule::Threshold { p } => order.iter().take_while(|&&n| marginals.top1(n).0 >= p).count().max(1),
    };
    let mut out = block.clone();
    for &n in &order[..count] {
        out.set(n, marginals.top1(n).1);
    }
    Ok((out, count))
}

#[derive(Clone, Debug, PartialEq)]
pub struct VerifyOutcome {
    pub new_block: Block,
    pub steps_advanced: usize,
    /// Tokens committed by each step, in order.
    pub realized_s: Vec<usize>,
    /// Levels of accepted drafts, in acceptance order.
    pub accepted_levels: Vec<usize>,
    /// Marginals of the last accepted draft, i.e. the distribution that
    /// produced `new_block`. `None` when nothing was accepted.
    pub adopted_marginals: Option<Marginals>,
}

impl VerifyOutcome {
    pub fn acceptances(&self) -> usize {
        self.accepted_levels.len()
    }

    /// Tokens committed by steps that needed no model call of their own.
    pub fn saved_s(&self) -> &[usize] {
        &self.realized_s[1..]
    }
}

pub fn verify(
    block: &Block,
    target: &Marginals,
    drafts: &[DraftBlock],
    draft_marginals: &[Marginals],
    schedule: &Schedule,
) -> Result<VerifyOutcome> {
    verify_with(block, target, drafts, draft_marginals, schedule, |d, b| &d.block == b)
}

/// [`verify`] with a pluggable content test.
pub(crate) fn verify_with(
    block: &Block,
    target: &Marginals,
    drafts: &[DraftBlock],
    draft_marginals: &[Marginals],
    schedule: &Schedule,
    matches: impl Fn(&DraftBlock, &Block) -> bool,
) -> Result<VerifyOutcome> {
    if drafts.len() != draft_marginals.len() {
        return Err(SpiffyError::MisalignedDrafts {
            drafts: drafts.len(),
            marginals: draft_marginals.len(),
        });
    }
    let (mut current, s) = advance(block, target, schedule)?;
    let mut realized_s = vec![s];
    let mut accepted_levels = Vec::new();
    let mut adopted: Option<usize> = None;
    let mut remaining: Vec<usize> = (0..drafts.len()).collect();

    while !current.is_complete() {
        let count = current.unmasked_count();
        // Drafts behind the current count can never match again.
        remaining.retain(|&m| drafts[m].step_tag >= count);
        let hit = remaining
            .iter()
            .position(|&m| drafts[m].step_tag == count && matches(&drafts[m], &current));
        let Some(slot) = hit else { break };
        let m = remaining.remove(slot);
        accepted_levels.push(drafts[m].level);
        adopted = Some(m);
        let (next, s) = advance(&current, &draft_marginals[m], schedule)?;
        realized_s.push(s);
        current = next;
    }

    Ok(VerifyOutcome {
        new_block: current,
        steps_advanced: realized_s.len(),
        realized_s,
        accepted_levels,
        adopted_marginals: adopted.map(|m| draft_marginals[m].clone()),
    })
}

/// Model-call reduction `sum(S) / (sum(S) - sum(accepted S))`.
pub fn nfe_saving_factor(total_s: &[usize], accepted_s: &[usize]) -> Result<f64> {
    let mut pool = total_s.to_vec();
    for s in accepted_s {
        let Some(idx) = pool.iter().position(|x| x == s) else {
            return Err(SpiffyError::InvalidArgument(format!(
                "accepted step size {s} is not among the realized steps"
            )));
        };
        pool.swap_remove(idx);
    }
    let total: usize = total_s.iter().sum();
    let saved: usize = accepted_s.iter().sum();
    if total == saved {
        return Err(SpiffyError::InvalidArgument(
            "every step accepted: the final state always needs one model call".into(),
        ));
    }
    Ok(total as f64 / (total - saved) as f64)
}
