//! Ranking of unmasking candidates and materialization of draft blocks.

mod graph;

use std::cmp::Ordering;
use std::collections::HashSet;

use serde::{Deserialize, Serialize};

pub use graph::{build_graph, greedy_chain, three_route_example, DraftFormula, DraftGraphSpec, RankPair};

use crate::error::{Result, SpiffyError};
use crate::state::{Block, Marginals, TokenId};

/// Masked positions ordered by confidence, each with its best token choices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RankingView {
    /// Masked positions by descending top-1 probability; ties by ascending index.
    pub positions: Vec<usize>,
    /// `vocab[r]`: tokens for `positions[r]` by descending probability, ties by
    /// ascending id, truncated to `top_k`.
    pub vocab: Vec<Vec<TokenId>>,
}

fn by_confidence(a: (f64, usize), b: (f64, usize)) -> Ordering {
    b.0.total_cmp(&a.0).then(a.1.cmp(&b.1))
}

/// Masked positions of `block` sorted by descending top-1 probability.
pub fn rank_positions(marginals: &Marginals, block: &Block) -> Vec<usize> {
    let mut scored: Vec<(f64, usize)> = block.masked_positions().map(|n| (marginals.top1(n).0, n)).collect();
    scored.sort_by(|&a, &b| by_confidence(a, b));
    scored.into_iter().map(|(_, n)| n).collect()
}

/// Top-`top_k` tokens at each position, most likely first.
pub fn rank_vocab(marginals: &Marginals, positions: &[usize], top_k: usize) -> Vec<Vec<TokenId>> {
    positions
        .iter()
        .map(|&n| {
            let row = marginals.row(n);
            let mut ids: Vec<usize> = (0..row.len()).collect();
            ids.sort_by(|&a, &b| by_confidence((row[a], a), (row[b], b)));
            ids.truncate(top_k);
            ids.into_iter().map(|v| v as TokenId + 1).collect()
        })
        .collect()
}

pub fn rank(marginals: &Marginals, block: &Block, top_k: usize) -> Result<RankingView> {
    if block.is_complete() {
        return Err(SpiffyError::InvalidArgument(
            "block has no masked positions to rank".into(),
        ));
    }
    if marginals.len() != block.len() {
        return Err(SpiffyError::InvalidArgument(format!(
            "{} marginal rows for a block of length {}",
            marginals.len(),
            block.len()
        )));
    }
    let positions = rank_positions(marginals, block);
    let vocab = rank_vocab(marginals, &positions, top_k);
    Ok(RankingView { positions, vocab })
}

impl RankingView {
    /// `(i, j)` of `token` at block position `pos`, if both are in range.
    pub fn rank_of(&self, pos: usize, token: TokenId) -> Option<RankPair> {
        let i = self.positions.iter().position(|&p| p == pos)?;
        let j = self.vocab[i].iter().position(|&t| t == token)?;
        Some(RankPair::new(i as u32 + 1, j as u32 + 1))
    }
}

/// A speculated future state of the active block.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DraftBlock {
    pub block: Block,
    pub formula: DraftFormula,
    pub level: usize,
    /// Unmasked count this draft represents; stands in for its timestep.
    pub step_tag: usize,
}

/// Applies `formula` to `block`; `Ok(None)` when a rank is out of range.
pub fn materialize(
    formula: &DraftFormula,
    ranking: &RankingView,
    block: &Block,
    level: usize,
) -> Result<Option<DraftBlock>> {
    let mut seen = HashSet::new();
    let mut out = block.clone();
    for pair in formula.pairs() {
        if !seen.insert(pair.position) {
            return Err(SpiffyError::InvalidFormula(format!(
                "position rank {} appears twice",
                pair.position
            )));
        }
        let i = pair.position as usize - 1;
        let j = pair.vocab as usize - 1;
        let Some(&pos) = ranking.positions.get(i) else {
            return Ok(None);
        };
        let Some(&token) = ranking.vocab[i].get(j) else {
            return Ok(None);
        };
        out.set(pos, token);
    }
    Ok(Some(DraftBlock {
        step_tag: out.unmasked_count(),
        block: out,
        formula: formula.clone(),
        level,
    }))
}

/// Materializes every graph node in scan order (level, then declaration).
///
/// A node survives when it materializes and, above level 1, at least one of
/// its parents survived. Drafts with identical content keep the first copy.
pub fn spawn_drafts(graph: &DraftGraphSpec, ranking: &RankingView, block: &Block) -> Result<Vec<DraftBlock>> {
    let mut survived = vec![false; graph.len()];
    let mut seen: HashSet<Block> = HashSet::new();
    let mut out = Vec::new();
    for node in graph.scan_order() {
        let level = graph.level(node);
        if level > 1 && !graph.parents(node).iter().any(|&p| survived[p]) {
            continue;
        }
        let Some(draft) = materialize(&graph.nodes()[node], ranking, block, level)? else {
            continue;
        };
        survived[node] = true;
        if seen.insert(draft.block.clone()) {
            out.push(draft);
        }
    }
    Ok(out)
}
