//! Rooted finite graphs (trees, unicyclic and edge-added variants) and half-edge multigraphs.

mod ball;
mod config;
mod generators;
mod io;

pub(crate) use ball::bfs_ball;
pub use ball::{build_block, count_cycles_in_ball, induced_edges, neighborhood, Block};
pub use config::{cutoff_line_match, preprocess_graph, sample_config_model, HalfEdgeGraph, PreprocessReport};
pub use generators::{
    build_line_family, cover_of_unicyclic, sample_egw, sample_gw, sample_gw_mixed, sample_gwc1, sample_gwc2, LineVariant,
    SizeCap, DEFAULT_SIZE_CAP,
};
pub use io::{read_half_edge_graph, read_rooted_graph, write_half_edge_graph, write_rooted_graph};

use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

pub const BOTTOM: &str = "bottom";
pub const END: &str = "end";
pub const LEAVES: &str = "leaves";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GraphKind {
    GwTree,
    Gwc1,
    Gwc2,
    Egw,
    LineF,
    LineA,
    General,
}

impl fmt::Display for GraphKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GraphKind::GwTree => "gw-tree",
            GraphKind::Gwc1 => "gwc1",
            GraphKind::Gwc2 => "gwc2",
            GraphKind::Egw => "egw",
            GraphKind::LineF => "line-F",
            GraphKind::LineA => "line-A",
            GraphKind::General => "general",
        })
    }
}

impl FromStr for GraphKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "gw-tree" => GraphKind::GwTree,
            "gwc1" => GraphKind::Gwc1,
            "gwc2" => GraphKind::Gwc2,
            "egw" => GraphKind::Egw,
            "line-F" => GraphKind::LineF,
            "line-A" => GraphKind::LineA,
            "general" => GraphKind::General,
            other => return Err(Error::Parse(format!("unknown graph kind {other:?}"))),
        })
    }
}

impl GraphKind {
    pub fn is_tree(self) -> bool {
        matches!(self, GraphKind::GwTree | GraphKind::LineF | GraphKind::LineA)
    }
}

/// Parameters a family was generated with, kept so leaf predicates can be re-evaluated.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FamilyParams {
    /// Tree depth `l`.
    pub depth: Option<usize>,
    /// Attachment depth `h` of edge-added graphs.
    pub h: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct RootedGraph {
    edges: Vec<(usize, usize)>,
    adjacency: Vec<Vec<usize>>,
    root: usize,
    depth_of: Vec<usize>,
    cycles: Vec<Vec<usize>>,
    kind: GraphKind,
    params: FamilyParams,
    leaf_sets: BTreeMap<String, Vec<usize>>,
    origin: Option<Vec<usize>>,
}

impl RootedGraph {
    /// Builds adjacency and depths. Multi-edges are kept as repeated entries; a self-loop lists its vertex twice.
    pub fn new(n: usize, edges: Vec<(usize, usize)>, root: usize, kind: GraphKind) -> Result<Self> {
        if root >= n {
            return Err(Error::Graph(format!("root {root} outside 0..{n}")));
        }
        let mut adjacency = vec![Vec::new(); n];
        for &(u, v) in &edges {
            if u >= n || v >= n {
                return Err(Error::Graph(format!("edge ({u},{v}) outside 0..{n}")));
            }
            adjacency[u].push(v);
            adjacency[v].push(u);
        }
        for a in adjacency.iter_mut() {
            a.sort_unstable();
        }
        let depth_of = bfs_depths(&adjacency, &[root]);
        Ok(Self {
            edges,
            adjacency,
            root,
            depth_of,
            cycles: Vec::new(),
            kind,
            params: FamilyParams::default(),
            leaf_sets: BTreeMap::new(),
            origin: None,
        })
    }

    pub(crate) fn with_cycles(mut self, cycles: Vec<Vec<usize>>) -> Self {
        self.cycles = cycles;
        self
    }
    pub(crate) fn with_params(mut self, params: FamilyParams) -> Self {
        self.params = params;
        self
    }
    pub fn with_leaf_set(mut self, name: &str, mut set: Vec<usize>) -> Self {
        set.sort_unstable();
        set.dedup();
        self.leaf_sets.insert(name.to_string(), set);
        self
    }
    pub fn with_origin(mut self, origin: Vec<usize>) -> Self {
        self.origin = Some(origin);
        self
    }

    pub fn n(&self) -> usize {
        self.adjacency.len()
    }
    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }
    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adjacency[v]
    }
    pub fn degree(&self, v: usize) -> usize {
        self.adjacency[v].len()
    }
    pub fn root(&self) -> usize {
        self.root
    }
    pub fn depth_of(&self, v: usize) -> usize {
        self.depth_of[v]
    }
    pub fn depths(&self) -> &[usize] {
        &self.depth_of
    }
    /// Height of the graph seen from the root.
    pub fn max_depth(&self) -> usize {
        self.depth_of.iter().copied().filter(|&d| d != usize::MAX).max().unwrap_or(0)
    }
    pub fn cycle(&self) -> Option<&[usize]> {
        if self.cycles.len() == 1 {
            Some(&self.cycles[0])
        } else {
            None
        }
    }
    pub fn cycles(&self) -> &[Vec<usize>] {
        &self.cycles
    }
    pub fn kind(&self) -> GraphKind {
        self.kind
    }
    pub fn params(&self) -> FamilyParams {
        self.params
    }
    pub fn leaf_set(&self, name: &str) -> Option<&[usize]> {
        self.leaf_sets.get(name).map(|v| v.as_slice())
    }
    pub fn leaf_sets(&self) -> &BTreeMap<String, Vec<usize>> {
        &self.leaf_sets
    }
    pub fn origin(&self) -> Option<&[usize]> {
        self.origin.as_deref()
    }
    pub fn is_tree(&self) -> bool {
        self.edges.len() + 1 == self.n() && self.depth_of.iter().all(|&d| d != usize::MAX)
    }

    /// Vertices at distance exactly `l` from the root.
    pub fn level(&self, l: usize) -> Vec<usize> {
        (0..self.n()).filter(|&v| self.depth_of[v] == l).collect()
    }

    /// Children of `v` in the BFS tree from the root (neighbors one level deeper, with multiplicity).
    pub fn children(&self, v: usize) -> Vec<usize> {
        self.adjacency[v].iter().copied().filter(|&u| self.depth_of[u] == self.depth_of[v] + 1).collect()
    }

    /// Subtree of descendants of `v` in a tree, rooted at `v`. Leaf sets are restricted; `origin` maps back.
    pub fn subtree(&self, v: usize) -> RootedGraph {
        let mut order = vec![v];
        let mut local = BTreeMap::new();
        local.insert(v, 0usize);
        let mut i = 0;
        while i < order.len() {
            let x = order[i];
            for c in self.children(x) {
                if let std::collections::btree_map::Entry::Vacant(e) = local.entry(c) {
                    e.insert(order.len());
                    order.push(c);
                }
            }
            i += 1;
        }
        let edges = order.iter().skip(1).map(|&c| {
            let parent = self.adjacency[c].iter().copied().find(|&p| self.depth_of[p] + 1 == self.depth_of[c]).expect("non-root has a parent");
            (local[&parent], local[&c])
        });
        let edges: Vec<_> = edges.collect();
        let base = self.depth_of[v];
        let mut g = RootedGraph::new(order.len(), edges, 0, GraphKind::GwTree).expect("subtree is well formed").with_params(FamilyParams {
            depth: self.params.depth.map(|d| d.saturating_sub(base)),
            h: None,
        });
        for (name, set) in &self.leaf_sets {
            let restricted: Vec<usize> = set.iter().filter_map(|x| local.get(x).copied()).collect();
            g = g.with_leaf_set(name, restricted);
        }
        let origin = match &self.origin {
            Some(o) => order.iter().map(|&x| o[x]).collect(),
            None => order.clone(),
        };
        g.with_origin(origin)
    }

    /// Subtrees hanging off the root's children.
    pub fn root_subtrees(&self) -> Vec<RootedGraph> {
        self.children(self.root).into_iter().map(|c| self.subtree(c)).collect()
    }

    /// Checks the structural invariants of the graph's kind.
    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        let bad = |m: String| Err(Error::Graph(format!("{}: {m}", self.kind)));
        if self.depth_of.contains(&usize::MAX) {
            return bad("not connected".into());
        }
        let expected_edges = match self.kind {
            GraphKind::GwTree | GraphKind::LineF | GraphKind::LineA => Some(n - 1),
            GraphKind::Gwc1 | GraphKind::Gwc2 => Some(n),
            GraphKind::Egw => Some(n - 1 + self.cycles.len()),
            GraphKind::General => None,
        };
        if let Some(e) = expected_edges {
            if self.edges.len() != e {
                return bad(format!("{} edges, expected {e}", self.edges.len()));
            }
        }
        if self.depth_of != bfs_depths(&self.adjacency, &[self.root]) {
            return bad("depths disagree with BFS".into());
        }
        for c in &self.cycles {
            for i in 0..c.len() {
                let (a, b) = (c[i], c[(i + 1) % c.len()]);
                let mult = self.adjacency[a].iter().filter(|&&x| x == b).count();
                let need = if c.len() == 2 { 2 } else { 1 };
                if mult < need {
                    return bad(format!("cycle step {a}->{b} missing"));
                }
            }
        }
        if matches!(self.kind, GraphKind::Gwc1 | GraphKind::Gwc2) && self.cycles.len() != 1 {
            return bad("unicyclic kind without exactly one cycle".into());
        }
        if self.kind == GraphKind::Gwc2 {
            let c = &self.cycles[0];
            if c[0] != self.root {
                return bad("root is not v1 of the cycle".into());
            }
            if self.degree(self.root) != 2 {
                return bad("root carries a tree".into());
            }
        }
        if let Some(expected) = self.recompute_bottom()? {
            if self.leaf_set(BOTTOM) != Some(expected.as_slice()) {
                return bad("bottom leaf set disagrees with its predicate".into());
            }
        }
        match self.kind {
            GraphKind::LineF if self.leaf_set(END).map(|s| s.len()) != Some(1) => bad("line-F needs one end vertex".into()),
            GraphKind::LineA if self.leaf_set(END).map(|s| s.len()) != Some(2) => bad("line-A needs two end vertices".into()),
            _ => Ok(()),
        }
    }

    /// Re-evaluates the defining predicate of the bottom leaf set, when the kind has one and a depth is recorded.
    pub fn recompute_bottom(&self) -> Result<Option<Vec<usize>>> {
        let Some(l) = self.params.depth else { return Ok(None) };
        if !self.leaf_sets.contains_key(BOTTOM) {
            return Ok(None);
        }
        let set = match self.kind {
            GraphKind::GwTree => self.level(l),
            GraphKind::Gwc1 | GraphKind::Gwc2 => {
                let c = &self.cycles[0];
                let d = bfs_depths_avoiding(&self.adjacency, c);
                (0..self.n()).filter(|&v| d[v] == l).collect()
            }
            GraphKind::Egw => {
                let h = self.params.h.ok_or_else(|| Error::Graph("egw without h".into()))?;
                let sources: Vec<usize> = self.cycles.iter().flatten().copied().collect();
                let dc = bfs_depths(&self.adjacency, &sources);
                (0..self.n()).filter(|&v| self.depth_of[v] >= l && dc[v] >= l - h).collect()
            }
            _ => return Ok(None),
        };
        Ok(Some(set))
    }

    /// For a graph with one annotated cycle: the cycle vertex whose hanging tree contains each vertex.
    pub fn tree_owner(&self) -> Option<Vec<usize>> {
        let c = self.cycle()?;
        let mut owner = vec![usize::MAX; self.n()];
        let on_cycle: Vec<bool> = (0..self.n()).map(|v| c.contains(&v)).collect();
        for &s in c {
            owner[s] = s;
            let mut q = VecDeque::from([s]);
            while let Some(x) = q.pop_front() {
                for &y in &self.adjacency[x] {
                    if !on_cycle[y] && owner[y] == usize::MAX {
                        owner[y] = s;
                        q.push_back(y);
                    }
                }
            }
        }
        Some(owner)
    }
}

/// Multi-source BFS distances; unreachable vertices get `usize::MAX`.
pub(crate) fn bfs_depths(adjacency: &[Vec<usize>], sources: &[usize]) -> Vec<usize> {
    let mut d = vec![usize::MAX; adjacency.len()];
    let mut q = VecDeque::new();
    for &s in sources {
        if d[s] != 0 {
            d[s] = 0;
            q.push_back(s);
        }
    }
    while let Some(x) = q.pop_front() {
        for &y in &adjacency[x] {
            if d[y] == usize::MAX {
                d[y] = d[x] + 1;
                q.push_back(y);
            }
        }
    }
    d
}

/// Distance of each vertex from its own cycle vertex, never walking along the cycle.
fn bfs_depths_avoiding(adjacency: &[Vec<usize>], cycle: &[usize]) -> Vec<usize> {
    let mut d = vec![usize::MAX; adjacency.len()];
    let mut q = VecDeque::new();
    for &s in cycle {
        d[s] = 0;
    }
    for &s in cycle {
        q.push_back(s);
    }
    while let Some(x) = q.pop_front() {
        for &y in &adjacency[x] {
            if d[y] == usize::MAX {
                d[y] = d[x] + 1;
                q.push_back(y);
            }
        }
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn star_children_and_subtrees() {
        let g = RootedGraph::new(4, vec![(0, 1), (0, 2), (2, 3)], 0, GraphKind::GwTree).unwrap();
        assert_eq!(g.children(0), vec![1, 2]);
        let subs = g.root_subtrees();
        assert_eq!(subs.len(), 2);
        assert_eq!(subs[1].n(), 2);
        assert_eq!(subs[1].origin().unwrap(), &[2, 3]);
        g.validate().unwrap();
    }

    #[test]
    fn validate_catches_bad_edge_count() {
        let g = RootedGraph::new(3, vec![(0, 1), (1, 2), (2, 0)], 0, GraphKind::GwTree).unwrap();
        assert!(g.validate().is_err());
        let g = RootedGraph::new(3, vec![(0, 1)], 0, GraphKind::General).unwrap();
        assert!(g.validate().is_err(), "disconnected");
    }
}
