//! Offline calibration of the draft graph.
//!
//! Vanilla generations are replayed step by step. At each state the tokens
//! unmasked over the next few steps are ranked against the distribution
//! that produced the state, which is exactly what drafting will see at
//! inference time. Frequent rank sets become candidate nodes and an
//! exhaustive search picks the best-scoring reachable subset.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::GenerationConfig;
use crate::drafting::{rank, DraftFormula, DraftGraphSpec, RankPair};
use crate::error::{Result, SpiffyError};
use crate::model::DlmOracle;
use crate::state::{Block, Marginals, TokenId};
use crate::verification::advance;

pub const DEFAULT_TABLE_WIDTH: usize = 3;

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CalibrationRecord {
    pub sample_id: usize,
    /// Global denoising step of the origin state.
    pub origin_step: usize,
    pub lookahead: usize,
    pub formula: DraftFormula,
}

impl fmt::Display for CalibrationRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.sample_id, self.origin_step, self.lookahead)?;
        for p in self.formula.pairs() {
            write!(f, " {p}")?;
        }
        Ok(())
    }
}

/// Block states and the marginals computed at each of them, for one block.
struct BlockTrace {
    states: Vec<Block>,
    marginals: Vec<Marginals>,
    first_step: usize,
}

fn vanilla_traces<M: DlmOracle + ?Sized>(
    model: &M,
    prompt: &[TokenId],
    config: &GenerationConfig,
) -> Result<Vec<BlockTrace>> {
    let mut state = config.initial_state(prompt.to_vec());
    let mut out = Vec::with_capacity(config.n_blocks());
    let mut step = 0;
    for k in 0..config.n_blocks() {
        state.active = k;
        let mut trace = BlockTrace {
            states: vec![state.blocks[k].clone()],
            marginals: Vec::new(),
            first_step: step,
        };
        while !state.blocks[k].is_complete() {
            let m = model.forward(&state)?;
            let (next, _) = advance(&state.blocks[k], &m, &config.schedule)?;
            trace.marginals.push(m);
            trace.states.push(next.clone());
            state.blocks[k] = next;
            step += 1;
        }
        out.push(trace);
    }
    Ok(out)
}

fn records_for_block(
    trace: &BlockTrace,
    sample_id: usize,
    lookahead: usize,
    top_k: usize,
) -> Result<Vec<CalibrationRecord>> {
    let mut out = Vec::new();
    let steps = trace.marginals.len();
    // The origin at step t is drafted from the marginals of step t - 1, so
    // the first state of a block has nothing to draft from.
    for t in 1..steps {
        let origin = &trace.states[t];
        let ranking = rank(&trace.marginals[t - 1], origin, top_k)?;
        for ell in 1..=lookahead.min(steps - t) {
            let future = &trace.states[t + ell];
            let pairs: Option<Vec<RankPair>> = origin
                .masked_positions()
                .filter(|&n| !future.is_masked(n))
                .map(|n| ranking.rank_of(n, future.get(n)))
                .collect();
            let Some(pairs) = pairs else { continue };
            out.push(CalibrationRecord {
                sample_id,
                origin_step: trace.first_step + t,
                lookahead: ell,
                formula: DraftFormula::new(pairs)?,
            });
        }
    }
    Ok(out)
}

/// Replays vanilla generation for every prompt and emits one record per
/// (origin, lookahead) whose tokens are all within the drafting ranks.
///
/// Prompts run in parallel; records come back in prompt order.
pub fn collect_records<M: DlmOracle + ?Sized>(
    model: &M,
    prompts: &[Vec<TokenId>],
    config: &GenerationConfig,
    lookahead: usize,
) -> Result<Vec<CalibrationRecord>> {
    if lookahead == 0 {
        return Err(SpiffyError::InvalidArgument("lookahead must be >= 1".into()));
    }
    config.validate()?;
    let per_prompt: Vec<Vec<CalibrationRecord>> = prompts
        .par_iter()
        .enumerate()
        .map(|(id, p)| {
            let mut recs = Vec::new();
            for trace in vanilla_traces(model, p, config)? {
                recs.extend(records_for_block(&trace, id, lookahead, config.top_k_vocab)?);
            }
            Ok(recs)
        })
        .collect::<Result<_>>()?;
    Ok(per_prompt.into_iter().flatten().collect())
}

pub fn format_records(records: &[CalibrationRecord]) -> String {
    let mut out = String::from("# sample_id origin_step lookahead i:j ...\n");
    for r in records {
        out.push_str(&r.to_string());
        out.push('\n');
    }
    out
}

pub fn parse_records(text: &str, origin: &str) -> Result<Vec<CalibrationRecord>> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |m: String| SpiffyError::parse(origin, idx + 1, m);
        let mut fields = line.split_whitespace();
        let mut num = |what: &str| -> Result<usize> {
            let f = fields.next().ok_or_else(|| err(format!("missing {what}")))?;
            f.parse().map_err(|_| err(format!("bad {what} `{f}`")))
        };
        let sample_id = num("sample_id")?;
        let origin_step = num("origin_step")?;
        let lookahead = num("lookahead")?;
        let formula = DraftFormula::new(
            fields
                .map(|f| f.parse::<RankPair>().map_err(|e| err(e.to_string())))
                .collect::<Result<_>>()?,
        )
        .map_err(|e| err(e.to_string()))?;
        out.push(CalibrationRecord {
            sample_id,
            origin_step,
            lookahead,
            formula,
        });
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableEntry {
    pub formula: DraftFormula,
    pub count: u64,
}

/// Most frequent rank sets per level, level 1 first.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateTable {
    pub tokens_per_level: usize,
    pub levels: Vec<Vec<TableEntry>>,
}

impl CandidateTable {
    pub fn len(&self) -> usize {
        self.levels.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(level, entry)` in level order, then table order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, &TableEntry)> {
        self.levels
            .iter()
            .enumerate()
            .flat_map(|(k, es)| es.iter().map(move |e| (k + 1, e)))
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("tokens_per_level = {}\n# level count formula\n", self.tokens_per_level);
        for (level, e) in self.entries() {
            out.push_str(&format!("{level} {} {}\n", e.count, e.formula));
        }
        out
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut table = CandidateTable {
            tokens_per_level: 1,
            levels: Vec::new(),
        };
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |m: String| SpiffyError::parse(origin, idx + 1, m);
            if let Some((key, value)) = line.split_once('=') {
                if key.trim() != "tokens_per_level" {
                    return Err(err(format!("unknown key `{}`", key.trim())));
                }
                table.tokens_per_level = value.trim().parse().map_err(|_| err("bad tokens_per_level".into()))?;
                continue;
            }
            let mut fields = line.splitn(3, char::is_whitespace);
            let level: usize = fields
                .next()
                .and_then(|f| f.parse().ok())
                .filter(|&l| l >= 1)
                .ok_or_else(|| err("bad level".into()))?;
            let count: u64 = fields
                .next()
                .and_then(|f| f.trim().parse().ok())
                .ok_or_else(|| err("bad count".into()))?;
            let formula: DraftFormula = fields
                .next()
                .unwrap_or("")
                .parse()
                .map_err(|e: SpiffyError| err(e.to_string()))?;
            if formula.len() != level * table.tokens_per_level {
                return Err(err(format!(
                    "level {level} formula `{formula}` has {} pairs",
                    formula.len()
                )));
            }
            if table.levels.len() < level {
                table.levels.resize(level, Vec::new());
            }
            table.levels[level - 1].push(TableEntry { formula, count });
        }
        Ok(table)
    }
}

/// Counts identical rank sets among the lookahead-`k` records for every
/// level `k`, keeping the `width` most frequent.
pub fn build_table(
    records: &[CalibrationRecord],
    lookahead: usize,
    tokens_per_level: usize,
    width: usize,
) -> CandidateTable {
    let mut levels = Vec::with_capacity(lookahead);
    for k in 1..=lookahead {
        let mut counts: HashMap<&DraftFormula, u64> = HashMap::new();
        for r in records {
            if r.lookahead == k && r.formula.len() == k * tokens_per_level {
                *counts.entry(&r.formula).or_default() += 1;
            }
        }
        let mut entries: Vec<TableEntry> = counts
            .into_iter()
            .map(|(f, c)| TableEntry {
                formula: f.clone(),
                count: c,
            })
            .collect();
        entries.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.formula.cmp(&b.formula)));
        entries.truncate(width);
        levels.push(entries);
    }
    while levels.last().is_some_and(Vec::is_empty) {
        levels.pop();
    }
    CandidateTable {
        tokens_per_level,
        levels,
    }
}

/// Subgraph scoring objective.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Strategy {
    /// Sum of node counts.
    Degree0,
    /// Node counts plus the counts of each node's direct parents.
    Degree1,
    /// Node counts plus, recursively, the totals of every parent.
    Total,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Degree0, Strategy::Degree1, Strategy::Total];
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Degree0 => "degree-0",
            Strategy::Degree1 => "degree-1",
            Strategy::Total => "total",
        })
    }
}

impl FromStr for Strategy {
    type Err = SpiffyError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "degree-0" | "degree0" => Ok(Strategy::Degree0),
            "degree-1" | "degree1" => Ok(Strategy::Degree1),
            "total" => Ok(Strategy::Total),
            other => Err(SpiffyError::InvalidArgument(format!(
                "unknown strategy `{other}` (expected degree-0, degree-1 or total)"
            ))),
        }
    }
}

/// Parent indices of every candidate among the candidates.
fn parent_lists(formulas: &[&DraftFormula], tokens_per_level: usize) -> Vec<Vec<usize>> {
    formulas
        .iter()
        .map(|child| {
            (0..formulas.len())
                .filter(|&p| {
                    formulas[p].len() + tokens_per_level == child.len() && formulas[p].is_proper_subset_of(child)
                })
                .collect()
        })
        .collect()
}

/// Score of the subset `chosen` (candidate indices, parents before children).
pub fn score_subset(counts: &[u64], parents: &[Vec<usize>], chosen: &[usize], strategy: Strategy) -> u128 {
    let mut member = vec![false; counts.len()];
    for &c in chosen {
        member[c] = true;
    }
    let mut total: HashMap<usize, u128> = HashMap::new();
    let mut score = 0u128;
    for &q in chosen {
        let in_q = parents[q].iter().copied().filter(|&p| member[p]);
        let s = match strategy {
            Strategy::Degree0 => counts[q] as u128,
            Strategy::Degree1 => counts[q] as u128 + in_q.map(|p| counts[p] as u128).sum::<u128>(),
            Strategy::Total => {
                let t = counts[q] as u128 + in_q.map(|p| total[&p]).sum::<u128>();
                total.insert(q, t);
                t
            }
        };
        score += s;
    }
    score
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Selection {
    pub graph: DraftGraphSpec,
    pub score: u128,
}

struct Search<'a> {
    levels: &'a [usize],
    counts: &'a [u64],
    parents: &'a [Vec<usize>],
    formulas: &'a [&'a DraftFormula],
    budget: usize,
    strategy: Strategy,
    chosen: Vec<usize>,
    best: Option<(u128, Vec<usize>)>,
}

impl Search<'_> {
    fn better(&self, score: u128, cand: &[usize], best: &(u128, Vec<usize>)) -> bool {
        if score != best.0 {
            return score > best.0;
        }
        if cand.len() != best.1.len() {
            return cand.len() < best.1.len();
        }
        let key = |set: &[usize]| {
            let mut fs: Vec<&DraftFormula> = set.iter().map(|&i| self.formulas[i]).collect();
            fs.sort();
            fs
        };
        key(cand) < key(&best.1)
    }

    fn dfs(&mut self, next: usize) {
        if next == self.counts.len() {
            if self.chosen.is_empty() {
                return;
            }
            let score = score_subset(self.counts, self.parents, &self.chosen, self.strategy);
            let take = match &self.best {
                None => true,
                Some(b) => self.better(score, &self.chosen, b),
            };
            if take {
                self.best = Some((score, self.chosen.clone()));
            }
            return;
        }
        let reachable = self.levels[next] == 1 || self.parents[next].iter().any(|p| self.chosen.contains(p));
        if reachable && self.chosen.len() < self.budget {
            self.chosen.push(next);
            self.dfs(next + 1);
            self.chosen.pop();
        }
        self.dfs(next + 1);
    }
}

/// Exhaustive search for the best root-reachable subset of at most `budget` candidates.
pub fn select_subgraph(table: &CandidateTable, budget: usize, strategy: Strategy) -> Result<Selection> {
    if budget == 0 {
        return Err(SpiffyError::InvalidArgument("budget D must be >= 1".into()));
    }
    if table.levels.first().is_none_or(Vec::is_empty) {
        return Err(SpiffyError::NoLevelOneCandidates);
    }
    let tpl = table.tokens_per_level;
    let mut levels = Vec::new();
    let mut counts = Vec::new();
    let mut formulas = Vec::new();
    for (level, e) in table.entries() {
        if e.formula.len() != level * tpl {
            return Err(SpiffyError::InvalidArgument(format!(
                "level {level} entry `{}` has {} pairs",
                e.formula,
                e.formula.len()
            )));
        }
        levels.push(level);
        counts.push(e.count);
        formulas.push(&e.formula);
    }
    let parents = parent_lists(&formulas, tpl);
    let mut search = Search {
        levels: &levels,
        counts: &counts,
        parents: &parents,
        formulas: &formulas,
        budget,
        strategy,
        chosen: Vec::new(),
        best: None,
    };
    search.dfs(0);
    let (score, chosen) = search.best.ok_or(SpiffyError::NoLevelOneCandidates)?;
    let nodes = chosen.iter().map(|&i| formulas[i].clone()).collect();
    let graph = DraftGraphSpec::with_budget(nodes, tpl, budget)?;
    Ok(Selection { graph, score })
}

/// Scores an arbitrary graph against a table; nodes absent from the table count 0.
pub fn score_graph(table: &CandidateTable, graph: &DraftGraphSpec, strategy: Strategy) -> u128 {
    let lookup: HashMap<&DraftFormula, u64> = table.entries().map(|(_, e)| (&e.formula, e.count)).collect();
    let counts: Vec<u64> = graph
        .nodes()
        .iter()
        .map(|f| lookup.get(f).copied().unwrap_or(0))
        .collect();
    let parents: Vec<Vec<usize>> = (0..graph.len()).map(|n| graph.parents(n).to_vec()).collect();
    score_subset(&counts, &parents, &graph.scan_order(), strategy)
}

pub fn save_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f(s: &str) -> DraftFormula {
        s.parse().unwrap()
    }

    fn rec(sample_id: usize, origin_step: usize, lookahead: usize, formula: &str) -> CalibrationRecord {
        CalibrationRecord {
            sample_id,
            origin_step,
            lookahead,
            formula: f(formula),
        }
    }

    fn table(entries: &[(usize, &str, u64)]) -> CandidateTable {
        let mut t = CandidateTable {
            tokens_per_level: 1,
            levels: Vec::new(),
        };
        for &(level, formula, count) in entries {
            if t.levels.len() < level {
                t.levels.resize(level, Vec::new());
            }
            t.levels[level - 1].push(TableEntry {
                formula: f(formula),
                count,
            });
        }
        t
    }

    #[test]
    fn record_lines_round_trip() {
        let recs = vec![rec(0, 3, 1, "1:1"), rec(2, 7, 2, "1:1 2:3")];
        let text = format_records(&recs);
        assert_eq!(parse_records(&text, "r").unwrap(), recs);
        let err = parse_records("0 1\n", "recs.txt").unwrap_err();
        assert!(err.to_string().starts_with("recs.txt:1:"));
    }

    #[test]
    fn table_counts_and_truncates() {
        let mut recs = Vec::new();
        for (formula, n) in [("1:1", 5), ("2:1", 4), ("1:2", 3), ("3:1", 2)] {
            for i in 0..n {
                recs.push(rec(0, i, 1, formula));
            }
        }
        for i in 0..7 {
            recs.push(rec(1, i, 2, "1:1 2:1"));
        }
        for i in 0..3 {
            recs.push(rec(1, i, 2, "1:1 3:1"));
        }
        // Wrong size for its lookahead: ignored.
        recs.push(rec(1, 9, 2, "1:1"));
        let t = build_table(&recs, 2, 1, 3);
        let l1: Vec<(String, u64)> = t.levels[0].iter().map(|e| (e.formula.to_string(), e.count)).collect();
        assert_eq!(l1, vec![("1:1".into(), 5), ("2:1".into(), 4), ("1:2".into(), 3)]);
        assert_eq!(t.levels[1][0].count, 7);
        assert_eq!(t.levels[1][1].count, 3);
        assert_eq!(CandidateTable::parse(&t.to_text(), "t").unwrap(), t);
    }

    #[test]
    fn ties_sorted_by_formula() {
        let recs = vec![rec(0, 1, 1, "2:1"), rec(0, 2, 1, "1:1")];
        let t = build_table(&recs, 1, 1, 3);
        assert_eq!(t.levels[0][0].formula, f("1:1"));
    }

    #[test]
    fn two_candidate_scores() {
        let t = table(&[(1, "1:1", 10), (2, "1:1 2:1", 6)]);
        let s0 = select_subgraph(&t, 2, Strategy::Degree0).unwrap();
        assert_eq!(s0.score, 16);
        assert_eq!(s0.graph.len(), 2);
        let s1 = select_subgraph(&t, 2, Strategy::Degree1).unwrap();
        assert_eq!(s1.score, 26);
        assert_eq!(s1.graph, s0.graph);
        let one = select_subgraph(&t, 1, Strategy::Total).unwrap();
        assert_eq!(one.graph.nodes(), &[f("1:1")]);
    }

    #[test]
    fn multi_parent_bonus() {
        let t = table(&[(1, "1:1", 10), (1, "2:1", 9), (2, "1:1 2:1", 5), (2, "1:1 3:1", 6)]);
        // Degree-1 prefers the node with two present parents.
        let s = select_subgraph(&t, 3, Strategy::Degree1).unwrap();
        assert_eq!(s.score, 10 + 9 + 5 + 19);
        let s = select_subgraph(&t, 3, Strategy::Degree0).unwrap();
        assert_eq!(s.score, 10 + 9 + 6);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            select_subgraph(&table(&[(2, "1:1 2:1", 3)]), 2, Strategy::Degree0),
            Err(SpiffyError::NoLevelOneCandidates)
        ));
        assert!(select_subgraph(&table(&[(1, "1:1", 3)]), 0, Strategy::Degree0).is_err());
        assert_eq!("degree-1".parse::<Strategy>().unwrap(), Strategy::Degree1);
        assert!("deg".parse::<Strategy>().is_err());
    }
}
