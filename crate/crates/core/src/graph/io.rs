//! Edge-list text format.
//!
//! ```text
//! n m root kind
//! u v            (m lines)
//! param depth 3  (optional)
//! cycle k        (optional, repeated; followed by one line of k ids)
//! leaves name k  (optional, repeated; followed by one line of k ids)
//! ```

use std::fmt::Write as _;

use super::{FamilyParams, GraphKind, HalfEdgeGraph, RootedGraph};
use crate::error::{Error, Result};

fn ids_line(ids: &[usize]) -> String {
    ids.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

pub fn write_rooted_graph(g: &RootedGraph) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{} {} {} {}", g.n(), g.edge_count(), g.root(), g.kind());
    for &(u, v) in g.edges() {
        let _ = writeln!(s, "{u} {v}");
    }
    let p = g.params();
    if let Some(d) = p.depth {
        let _ = writeln!(s, "param depth {d}");
    }
    if let Some(h) = p.h {
        let _ = writeln!(s, "param h {h}");
    }
    for c in g.cycles() {
        let _ = writeln!(s, "cycle {}\n{}", c.len(), ids_line(c));
    }
    for (name, set) in g.leaf_sets() {
        let _ = writeln!(s, "leaves {name} {}\n{}", set.len(), ids_line(set));
    }
    s
}

fn parse_usize(tok: Option<&str>, what: &str, line: usize) -> Result<usize> {
    let tok = tok.ok_or_else(|| Error::Parse(format!("line {line}: missing {what}")))?;
    tok.parse().map_err(|e| Error::Parse(format!("line {line}: {what} {tok:?}: {e}")))
}

fn parse_ids(line: Option<(usize, &str)>, k: usize, what: &str) -> Result<Vec<usize>> {
    let (no, text) = line.ok_or_else(|| Error::Parse(format!("missing id line for {what}")))?;
    let ids = text.split_whitespace().map(|t| t.parse::<usize>().map_err(|e| Error::Parse(format!("line {no}: {t:?}: {e}")))).collect::<Result<Vec<_>>>()?;
    if ids.len() != k {
        return Err(Error::Parse(format!("line {no}: expected {k} ids for {what}, got {}", ids.len())));
    }
    Ok(ids)
}

pub fn read_rooted_graph(text: &str) -> Result<RootedGraph> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let (no, header) = lines.next().ok_or_else(|| Error::Parse("empty graph file".into()))?;
    let mut tok = header.split_whitespace();
    let n = parse_usize(tok.next(), "n", no)?;
    let m = parse_usize(tok.next(), "m", no)?;
    let root = parse_usize(tok.next(), "root", no)?;
    let kind: GraphKind = tok.next().unwrap_or("general").parse()?;
    let mut edges = Vec::with_capacity(m);
    for _ in 0..m {
        let (no, l) = lines.next().ok_or_else(|| Error::Parse(format!("expected {m} edge lines")))?;
        let mut t = l.split_whitespace();
        edges.push((parse_usize(t.next(), "u", no)?, parse_usize(t.next(), "v", no)?));
    }
    let mut params = FamilyParams::default();
    let mut cycles = Vec::new();
    let mut sets = Vec::new();
    while let Some((no, l)) = lines.next() {
        let mut t = l.split_whitespace();
        match t.next() {
            Some("param") => match t.next() {
                Some("depth") => params.depth = Some(parse_usize(t.next(), "depth", no)?),
                Some("h") => params.h = Some(parse_usize(t.next(), "h", no)?),
                other => return Err(Error::Parse(format!("line {no}: unknown param {other:?}"))),
            },
            Some("cycle") => {
                let k = parse_usize(t.next(), "cycle length", no)?;
                cycles.push(parse_ids(lines.next(), k, "cycle")?);
            }
            Some("leaves") => {
                let name = t.next().ok_or_else(|| Error::Parse(format!("line {no}: leaves without name")))?.to_string();
                let k = parse_usize(t.next(), "leaf count", no)?;
                sets.push((name.clone(), parse_ids(lines.next(), k, &name)?));
            }
            other => return Err(Error::Parse(format!("line {no}: unexpected section {other:?}"))),
        }
    }
    let mut g = RootedGraph::new(n, edges, root, kind)?.with_params(params).with_cycles(cycles);
    for (name, set) in sets {
        if set.iter().any(|&x| x >= n) {
            return Err(Error::Parse(format!("leaf set {name} references a vertex outside 0..{n}")));
        }
        g = g.with_leaf_set(&name, set);
    }
    Ok(g)
}

pub fn write_half_edge_graph(g: &HalfEdgeGraph) -> String {
    let mut s = String::new();
    let edges = g.edges();
    let _ = writeln!(s, "{} {} 0 general", g.n(), edges.len());
    for (u, v) in edges {
        let _ = writeln!(s, "{u} {v}");
    }
    s
}

pub fn read_half_edge_graph(text: &str) -> Result<HalfEdgeGraph> {
    let g = read_rooted_graph(text)?;
    HalfEdgeGraph::from_edges(g.n(), g.edges())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::OffspringDistribution;
    use crate::graph::{sample_egw, SizeCap};
    use crate::seed::derive_seed;

    #[test]
    fn round_trip_egw() {
        let d = OffspringDistribution::poisson(1.5).unwrap();
        let g = sample_egw(&d, &d, 1, 3, 3, &derive_seed(3, &["io".into()]), SizeCap::default()).unwrap();
        let text = write_rooted_graph(&g);
        let back = read_rooted_graph(&text).unwrap();
        assert_eq!(write_rooted_graph(&back), text);
        back.validate().unwrap();
    }

    #[test]
    fn rejects_garbage() {
        assert!(read_rooted_graph("2 1 0 gw-tree\n0 x\n").is_err());
        assert!(read_rooted_graph("2 2 0 gw-tree\n0 1\n").is_err());
        assert!(read_rooted_graph("2 1 5 gw-tree\n0 1\n").is_err());
        assert!(read_rooted_graph("2 1 0 nonsense\n0 1\n").is_err());
    }

    #[test]
    fn half_edge_round_trip() {
        let g = HalfEdgeGraph::from_edges(3, &[(0, 1), (1, 1), (1, 2), (1, 2)]).unwrap();
        let back = read_half_edge_graph(&write_half_edge_graph(&g)).unwrap();
        assert_eq!(back.edges(), g.edges());
    }
}
