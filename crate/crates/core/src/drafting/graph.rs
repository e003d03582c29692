//! Draft formulas and the directed draft graph built from them.
//!
//! A formula is a set of `(i, j)` rank pairs: unmask the token with
//! vocabulary rank `j` at the position with position rank `i`. Node `A` is a
//! parent of node `B` when `B` adds exactly one level's worth of pairs to
//! `A`. Unlike a draft tree a node can have several parents.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SpiffyError};

/// One `(i, j)` pair, both 1-based.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RankPair {
    /// Position rank `i`.
    pub position: u32,
    /// Vocabulary rank `j`.
    pub vocab: u32,
}

impl RankPair {
    pub const fn new(position: u32, vocab: u32) -> Self {
        RankPair { position, vocab }
    }
}

impl fmt::Display for RankPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.position, self.vocab)
    }
}

impl FromStr for RankPair {
    type Err = SpiffyError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || SpiffyError::InvalidFormula(format!("`{s}` is not an i:j pair"));
        let (i, j) = s.split_once(':').ok_or_else(bad)?;
        let pair = RankPair::new(i.parse().map_err(|_| bad())?, j.parse().map_err(|_| bad())?);
        if pair.position == 0 || pair.vocab == 0 {
            return Err(SpiffyError::InvalidFormula(format!("ranks are 1-based, got `{s}`")));
        }
        Ok(pair)
    }
}

/// Canonical (sorted by position rank) set of rank pairs.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<RankPair>", into = "Vec<RankPair>")]
pub struct DraftFormula {
    pairs: Vec<RankPair>,
}

impl DraftFormula {
    pub fn new(mut pairs: Vec<RankPair>) -> Result<Self> {
        pairs.sort();
        for p in &pairs {
            if p.position == 0 || p.vocab == 0 {
                return Err(SpiffyError::InvalidFormula(format!("ranks are 1-based, got {p}")));
            }
        }
        if let Some(w) = pairs.windows(2).find(|w| w[0].position == w[1].position) {
            return Err(SpiffyError::InvalidFormula(format!(
                "position rank {} appears twice",
                w[0].position
            )));
        }
        Ok(DraftFormula { pairs })
    }

    /// Convenience constructor from `(i, j)` tuples.
    pub fn from_pairs(pairs: &[(u32, u32)]) -> Result<Self> {
        Self::new(pairs.iter().map(|&(i, j)| RankPair::new(i, j)).collect())
    }

    pub fn pairs(&self) -> &[RankPair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn max_vocab_rank(&self) -> u32 {
        self.pairs.iter().map(|p| p.vocab).max().unwrap_or(0)
    }

    /// Proper-subset test on the pair sets.
    pub fn is_proper_subset_of(&self, other: &DraftFormula) -> bool {
        self.len() < other.len() && self.pairs.iter().all(|p| other.pairs.binary_search(p).is_ok())
    }

    /// `c_{i,j}` labels, as drawn in graph figures.
    pub fn label(&self) -> String {
        let parts: Vec<String> = self
            .pairs
            .iter()
            .map(|p| format!("c_{{{},{}}}", p.position, p.vocab))
            .collect();
        parts.join(" ")
    }
}

impl TryFrom<Vec<RankPair>> for DraftFormula {
    type Error = SpiffyError;
    fn try_from(v: Vec<RankPair>) -> Result<Self> {
        DraftFormula::new(v)
    }
}

impl From<DraftFormula> for Vec<RankPair> {
    fn from(f: DraftFormula) -> Self {
        f.pairs
    }
}

impl fmt::Display for DraftFormula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.pairs.iter().map(ToString::to_string).collect();
        f.write_str(&parts.join(" "))
    }
}

impl FromStr for DraftFormula {
    type Err = SpiffyError;
    fn from_str(s: &str) -> Result<Self> {
        DraftFormula::new(s.split_whitespace().map(str::parse).collect::<Result<_>>()?)
    }
}

/// Validated draft graph: nodes, their levels and parent edges.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DraftGraphSpec {
    budget: usize,
    tokens_per_level: usize,
    nodes: Vec<DraftFormula>,
    levels: Vec<usize>,
    /// Indices of parent nodes; empty for level-1 nodes, whose parent is the root.
    parents: Vec<Vec<usize>>,
}

/// Validates `formulas` and computes every parent edge.
pub fn build_graph(formulas: Vec<DraftFormula>, tokens_per_level: usize) -> Result<DraftGraphSpec> {
    let budget = formulas.len();
    DraftGraphSpec::with_budget(formulas, tokens_per_level, budget)
}

impl DraftGraphSpec {
    pub fn empty(tokens_per_level: usize) -> Self {
        DraftGraphSpec {
            budget: 0,
            tokens_per_level,
            nodes: Vec::new(),
            levels: Vec::new(),
            parents: Vec::new(),
        }
    }

    pub fn with_budget(formulas: Vec<DraftFormula>, tokens_per_level: usize, budget: usize) -> Result<Self> {
        if tokens_per_level == 0 {
            return Err(SpiffyError::InvalidGraph("tokens_per_level must be >= 1".into()));
        }
        if formulas.len() > budget {
            return Err(SpiffyError::InvalidGraph(format!(
                "{} nodes exceed the draft budget D={budget}",
                formulas.len()
            )));
        }
        let mut levels = Vec::with_capacity(formulas.len());
        for (idx, f) in formulas.iter().enumerate() {
            if f.is_empty() {
                return Err(SpiffyError::InvalidGraph("empty formula is the implicit root".into()));
            }
            if f.len() % tokens_per_level != 0 {
                return Err(SpiffyError::InvalidGraph(format!(
                    "formula `{f}` has {} pairs, not a multiple of {tokens_per_level}",
                    f.len()
                )));
            }
            if formulas[..idx].contains(f) {
                return Err(SpiffyError::InvalidGraph(format!("formula `{f}` appears twice")));
            }
            levels.push(f.len() / tokens_per_level);
        }
        let mut parents = vec![Vec::new(); formulas.len()];
        for (b, fb) in formulas.iter().enumerate() {
            for (a, fa) in formulas.iter().enumerate() {
                if fa.len() + tokens_per_level == fb.len() && fa.is_proper_subset_of(fb) {
                    parents[b].push(a);
                }
            }
            if levels[b] > 1 && parents[b].is_empty() {
                return Err(SpiffyError::InvalidGraph(format!(
                    "formula `{fb}` is unreachable: no parent in the graph"
                )));
            }
        }
        Ok(DraftGraphSpec {
            budget,
            tokens_per_level,
            nodes: formulas,
            levels,
            parents,
        })
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    pub fn tokens_per_level(&self) -> usize {
        self.tokens_per_level
    }

    pub fn nodes(&self) -> &[DraftFormula] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn level(&self, node: usize) -> usize {
        self.levels[node]
    }

    pub fn depth(&self) -> usize {
        self.levels.iter().copied().max().unwrap_or(0)
    }

    /// Parent node indices; empty means the root is the only parent.
    pub fn parents(&self, node: usize) -> &[usize] {
        &self.parents[node]
    }

    /// Number of incoming edges, counting the root edge of level-1 nodes.
    pub fn in_degree(&self, node: usize) -> usize {
        if self.levels[node] == 1 {
            1
        } else {
            self.parents[node].len()
        }
    }

    pub fn max_vocab_rank(&self) -> u32 {
        self.nodes.iter().map(DraftFormula::max_vocab_rank).max().unwrap_or(0)
    }

    /// Node indices sorted by level, then declaration order.
    pub fn scan_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.nodes.len()).collect();
        order.sort_by_key(|&n| (self.levels[n], n));
        order
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("D = {}\n", self.budget));
        out.push_str(&format!("tokens_per_level = {}\n", self.tokens_per_level));
        for n in &self.nodes {
            out.push_str(&n.to_string());
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut budget = None;
        let mut tpl = None;
        let mut nodes = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some((key, value)) = line.split_once('=') {
                let value: usize = value
                    .trim()
                    .parse()
                    .map_err(|_| SpiffyError::parse(origin, idx + 1, format!("bad value `{}`", value.trim())))?;
                match key.trim() {
                    "D" => budget = Some(value),
                    "tokens_per_level" => tpl = Some(value),
                    other => return Err(SpiffyError::parse(origin, idx + 1, format!("unknown key `{other}`"))),
                }
                continue;
            }
            let f: DraftFormula = line
                .parse()
                .map_err(|e: SpiffyError| SpiffyError::parse(origin, idx + 1, e.to_string()))?;
            nodes.push(f);
        }
        let tpl = tpl.unwrap_or(1);
        let budget = budget.unwrap_or(nodes.len());
        DraftGraphSpec::with_budget(nodes, tpl, budget).map_err(|e| SpiffyError::InvalidGraph(format!("{origin}: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    /// Graphviz rendering: one rank per level, root on top, parent edges.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph draft_graph {\n");
        out.push_str("  rankdir=TB;\n");
        out.push_str("  node [shape=box];\n");
        out.push_str("  root [label=\"X_k(t)\"];\n");
        for (n, f) in self.nodes.iter().enumerate() {
            out.push_str(&format!("  n{n} [label=\"{}\"];\n", f.label()));
        }
        for level in 1..=self.depth() {
            let members: Vec<String> = (0..self.nodes.len())
                .filter(|&n| self.levels[n] == level)
                .map(|n| format!("n{n};"))
                .collect();
            out.push_str(&format!("  {{ rank=same; {} }}\n", members.join(" ")));
        }
        for n in 0..self.nodes.len() {
            if self.levels[n] == 1 {
                out.push_str(&format!("  root -> n{n};\n"));
            }
            for &p in &self.parents[n] {
                out.push_str(&format!("  n{p} -> n{n};\n"));
            }
        }
        out.push_str("}\n");
        out
    }
}

/// The six-node graph with three routes into its level-3 node.
pub fn three_route_example() -> DraftGraphSpec {
    let f = |p: &[(u32, u32)]| DraftFormula::from_pairs(p).expect("static formula");
    build_graph(
        vec![
            f(&[(1, 1)]),
            f(&[(2, 1)]),
            f(&[(1, 1), (2, 1)]),
            f(&[(1, 1), (3, 1)]),
            f(&[(2, 1), (3, 1)]),
            f(&[(1, 1), (2, 1), (3, 1)]),
        ],
        1,
    )
    .expect("static graph is valid")
}

/// `{(1,1)}`, `{(1,1),(2,1)}`, ... up to `depth` pairs.
pub fn greedy_chain(depth: usize, tokens_per_level: usize) -> DraftGraphSpec {
    let nodes = (1..=depth)
        .map(|lvl| {
            let pairs: Vec<(u32, u32)> = (1..=(lvl * tokens_per_level) as u32).map(|i| (i, 1)).collect();
            DraftFormula::from_pairs(&pairs).expect("chain formula")
        })
        .collect();
    build_graph(nodes, tokens_per_level).expect("chain graph is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f(p: &[(u32, u32)]) -> DraftFormula {
        DraftFormula::from_pairs(p).unwrap()
    }

    #[test]
    fn formula_is_canonical_and_rejects_duplicates() {
        let a = f(&[(3, 1), (1, 2)]);
        assert_eq!(a.to_string(), "1:2 3:1");
        assert!(DraftFormula::from_pairs(&[(1, 1), (1, 2)]).is_err());
        assert!(DraftFormula::from_pairs(&[(0, 1)]).is_err());
        assert_eq!("2:1 1:1".parse::<DraftFormula>().unwrap(), f(&[(1, 1), (2, 1)]));
    }

    #[test]
    fn level_three_node_has_three_parents() {
        let g = three_route_example();
        assert_eq!(g.len(), 6);
        assert_eq!(g.level(5), 3);
        assert_eq!(g.parents(5), &[2, 3, 4]);
        assert_eq!(g.in_degree(5), 3);
        // {(1,1),(3,1)} is reachable only through {(1,1)}.
        assert_eq!(g.parents(3), &[0]);
        assert_eq!(g.parents(2), &[0, 1]);
    }

    #[test]
    fn single_node_chain() {
        let g = build_graph(vec![f(&[(1, 1)])], 1).unwrap();
        assert_eq!(g.level(0), 1);
        assert!(g.parents(0).is_empty());
        assert_eq!(g.in_degree(0), 1);
    }

    #[test]
    fn missing_parent_is_unreachable() {
        let err = build_graph(vec![f(&[(1, 1), (2, 1)])], 1).unwrap_err();
        assert!(err.to_string().contains("1:1 2:1"));
        assert!(err.to_string().contains("unreachable"));
    }

    #[test]
    fn level_size_must_divide() {
        assert!(build_graph(vec![f(&[(1, 1)])], 2).is_err());
        let g = build_graph(vec![f(&[(1, 1), (2, 1)]), f(&[(1, 1), (2, 1), (3, 1), (4, 1)])], 2).unwrap();
        assert_eq!(g.level(1), 2);
        assert_eq!(g.parents(1), &[0]);
    }

    #[test]
    fn budget_is_enforced() {
        assert!(DraftGraphSpec::with_budget(vec![f(&[(1, 1)]), f(&[(2, 1)])], 1, 1).is_err());
    }

    #[test]
    fn text_round_trip() {
        let g = three_route_example();
        let back = DraftGraphSpec::parse(&g.to_text(), "g").unwrap();
        assert_eq!(back, g);
        let empty = DraftGraphSpec::parse("D = 0\ntokens_per_level = 1\n", "g").unwrap();
        assert!(empty.is_empty());
        let err = DraftGraphSpec::parse("D = 2\n1:1\n1:x\n", "g.txt").unwrap_err();
        assert!(err.to_string().starts_with("g.txt:3:"));
    }

    #[test]
    fn dot_export() {
        let dot = three_route_example().to_dot();
        assert_eq!(dot.matches("-> n5;").count(), 3);
        assert!(dot.contains("c_{1,1} c_{2,1} c_{3,1}"));
        assert!(dot.contains("{ rank=same; n2; n3; n4; }"));

        let one = build_graph(vec![f(&[(1, 1)])], 1).unwrap().to_dot();
        assert_eq!(one.matches("->").count(), 1);
        let empty = DraftGraphSpec::empty(1).to_dot();
        assert!(empty.contains("root"));
        assert_eq!(empty.matches("->").count(), 0);
    }

    #[test]
    fn scan_order_is_level_then_declaration() {
        let g = build_graph(vec![f(&[(1, 1)]), f(&[(1, 1), (2, 1)]), f(&[(2, 1)])], 1).unwrap();
        assert_eq!(g.scan_order(), vec![0, 2, 1]);
    }
}
