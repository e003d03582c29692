//! Block-attention mask and position ids for verifying drafts in one call.
//!
//! Packed layout: `[prompt | block 0 .. block N-1 | draft 1 | .. | draft D]`,
//! each draft occupying `L` slots. Context rows see the whole context. Draft
//! rows see the context minus block `k`, plus their own slots. Drafts reuse
//! block `k`'s position ids.

use std::fmt::Write as _;

use crate::error::{Result, SpiffyError};
use crate::model::DlmOracle;
use crate::state::{Block, Marginals, SequenceState, TokenId, MASK};

/// Shape of one packed verification call.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PackShape {
    pub prompt_len: usize,
    pub n_blocks: usize,
    pub block_len: usize,
    pub active: usize,
    pub drafts: usize,
}

impl PackShape {
    pub fn new(prompt_len: usize, n_blocks: usize, block_len: usize, active: usize, drafts: usize) -> Result<Self> {
        if n_blocks == 0 || block_len == 0 {
            return Err(SpiffyError::InvalidArgument("N and L must be positive".into()));
        }
        if active >= n_blocks {
            return Err(SpiffyError::InvalidArgument(format!(
                "active block {active} out of range for N={n_blocks}"
            )));
        }
        Ok(PackShape {
            prompt_len,
            n_blocks,
            block_len,
            active,
            drafts,
        })
    }

    pub fn of(state: &SequenceState, drafts: usize) -> Result<Self> {
        Self::new(
            state.prompt.len(),
            state.n_blocks(),
            state.block_len,
            state.active,
            drafts,
        )
    }

    pub fn context_len(&self) -> usize {
        self.prompt_len + self.n_blocks * self.block_len
    }

    pub fn side(&self) -> usize {
        self.context_len() + self.drafts * self.block_len
    }

    fn active_range(&self) -> std::ops::Range<usize> {
        let start = self.prompt_len + self.active * self.block_len;
        start..start + self.block_len
    }

    fn draft_range(&self, m: usize) -> std::ops::Range<usize> {
        let start = self.context_len() + m * self.block_len;
        start..start + self.block_len
    }
}

/// Square boolean matrix; `get(q, k)` is true when query `q` may attend to key `k`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AttentionMask {
    side: usize,
    cells: Vec<bool>,
}

impl AttentionMask {
    pub fn side(&self) -> usize {
        self.side
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.cells[row * self.side + col]
    }

    pub fn row(&self, row: usize) -> &[bool] {
        &self.cells[row * self.side..(row + 1) * self.side]
    }

    pub fn row_count(&self, row: usize) -> usize {
        self.row(row).iter().filter(|&&c| c).count()
    }

    /// One line of `0`/`1` characters per row.
    pub fn to_grid(&self) -> String {
        let mut out = String::with_capacity(self.side * (self.side + 1));
        for r in 0..self.side {
            for &c in self.row(r) {
                out.push(if c { '1' } else { '0' });
            }
            out.push('\n');
        }
        out
    }

    pub fn from_grid(text: &str) -> Result<Self> {
        let rows: Vec<&str> = text.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
        let side = rows.len();
        let mut cells = Vec::with_capacity(side * side);
        for (r, line) in rows.iter().enumerate() {
            if line.len() != side {
                return Err(SpiffyError::parse("<grid>", r + 1, format!("expected {side} cells")));
            }
            for ch in line.chars() {
                match ch {
                    '0' => cells.push(false),
                    '1' => cells.push(true),
                    _ => return Err(SpiffyError::parse("<grid>", r + 1, format!("bad cell `{ch}`"))),
                }
            }
        }
        Ok(AttentionMask { side, cells })
    }
}

pub fn build_mask(shape: &PackShape) -> AttentionMask {
    let side = shape.side();
    let ctx = shape.context_len();
    let active = shape.active_range();
    let mut cells = vec![false; side * side];
    for r in 0..ctx {
        cells[r * side..r * side + ctx].fill(true);
    }
    for m in 0..shape.drafts {
        let own = shape.draft_range(m);
        for r in own.clone() {
            let row = &mut cells[r * side..(r + 1) * side];
            for (c, cell) in row.iter_mut().enumerate().take(ctx) {
                *cell = !active.contains(&c);
            }
            row[own.clone()].fill(true);
        }
    }
    AttentionMask { side, cells }
}

pub fn build_position_ids(shape: &PackShape) -> Vec<usize> {
    let mut ids: Vec<usize> = (0..shape.context_len()).collect();
    for _ in 0..shape.drafts {
        ids.extend(shape.active_range());
    }
    ids
}

/// Packed token row for `state` followed by every draft.
pub fn pack_tokens(state: &SequenceState, drafts: &[Block]) -> Vec<TokenId> {
    let mut out = state.flatten();
    for d in drafts {
        out.extend_from_slice(d.tokens());
    }
    out
}

/// Evaluates a packed call by reading each segment's view off the mask.
///
/// For every segment (the context, then each draft) this collects the
/// visible keys of the segment's first row, places them at their position
/// ids, and asks `model` for the active block's marginals. Agreement with
/// `forward_batched` shows the mask describes the computation exactly.
pub fn evaluate_packed<M: DlmOracle + ?Sized>(
    model: &M,
    shape: &PackShape,
    tokens: &[TokenId],
    mask: &AttentionMask,
    position_ids: &[usize],
) -> Result<(Marginals, Vec<Marginals>)> {
    let side = shape.side();
    if tokens.len() != side || mask.side() != side || position_ids.len() != side {
        return Err(SpiffyError::InvalidArgument(format!(
            "packed inputs disagree with shape side {side}"
        )));
    }
    let view = |row: usize| -> Result<Marginals> {
        let mut seq: Vec<Option<TokenId>> = vec![None; shape.context_len()];
        for (col, &visible) in mask.row(row).iter().enumerate() {
            if !visible {
                continue;
            }
            let pos = position_ids[col];
            let slot = seq
                .get_mut(pos)
                .ok_or_else(|| SpiffyError::InvalidArgument(format!("position id {pos} outside the context")))?;
            if slot.replace(tokens[col]).is_some() {
                return Err(SpiffyError::InvalidArgument(format!(
                    "row {row} sees position {pos} twice"
                )));
            }
        }
        let seq: Vec<TokenId> = seq
            .into_iter()
            .enumerate()
            .map(|(pos, t)| {
                t.ok_or_else(|| SpiffyError::InvalidArgument(format!("row {row} cannot see position {pos}")))
            })
            .collect::<Result<_>>()?;
        let (prompt, gen) = seq.split_at(shape.prompt_len);
        let state = SequenceState {
            prompt: prompt.to_vec(),
            block_len: shape.block_len,
            blocks: gen
                .chunks(shape.block_len)
                .map(|c| Block::from_tokens(c.to_vec()))
                .collect(),
            active: shape.active,
        };
        model.marginals(&state)
    };
    let target_row = shape.active_range().start;
    if tokens[shape.active_range()].iter().all(|&t| t != MASK) {
        return Err(SpiffyError::NothingToDenoise(shape.active));
    }
    let target = view(target_row)?;
    let per_draft = (0..shape.drafts)
        .map(|m| view(shape.draft_range(m).start))
        .collect::<Result<_>>()?;
    Ok((target, per_draft))
}

/// Human-readable dump: header with the shape, then the grid.
pub fn dump_mask(shape: &PackShape, mask: &AttentionMask) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "# prompt_len={} N={} L={} k={} D={}",
        shape.prompt_len, shape.n_blocks, shape.block_len, shape.active, shape.drafts
    );
    out.push_str(&mask.to_grid());
    out
}
