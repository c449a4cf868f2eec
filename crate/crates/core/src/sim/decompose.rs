//! Block decomposition of a plain run on a sparse graph.
//!
//! A copy `(u, s)` runs the process on the block of `u` from `{u}` at time `s`, restricted to the block's
//! own edges but on the global timeline. Every 0 to 1 flip at a bottom leaf of the block spawns a new copy.
//! Infection paths leave a block only through its bottom leaves, so the union of copies is the direct process
//! and the last copy to die out ends exactly when the direct run does.
//!
//! Overlapping blocks can report the same leaf infection more than once. A copy is a deterministic function of
//! `(u, s)` on a fixed timeline, so each distinct pair is run once and repeats are only tallied.

use std::collections::{HashSet, VecDeque};

use serde::Serialize;

use super::engine::{run, Mode, SimGraph, SimParams, Status};
use super::timeline::EventTimeline;
use crate::error::{Error, Result};
use crate::graph::{Block, HalfEdgeGraph};

pub const MAX_COPIES: usize = 1_000_000;

#[derive(Debug, Clone, Serialize)]
pub struct Decomposition {
    /// Time the last copy died out.
    pub termination: f64,
    /// Survival time of the direct run on the same timeline.
    pub direct: f64,
    /// Distinct copies (center, start time), the initial one first.
    pub copies: Vec<(usize, f64)>,
    /// Copies counted with multiplicity, the initial one included.
    pub spawned: usize,
    pub censored: bool,
}

/// `blocks[v]` must be the block centered at `v`.
pub fn decomposed_simulate(g: &HalfEdgeGraph, blocks: &[Block], params: &SimParams, v: usize, tl: &EventTimeline) -> Result<Decomposition> {
    if blocks.len() != g.n() || blocks.iter().enumerate().any(|(i, b)| b.center != i) {
        return Err(Error::InvalidArgument("need one block per vertex, indexed by center".into()));
    }
    let mut full = SimGraph::from_half_edge(g);
    let direct = run(&mut full, tl, params, &[v], Mode::Plain, 0, 0.0, |_| false)?;

    let mut copies = vec![(v, 0.0)];
    let mut seen = HashSet::from([(v, 0u64)]);
    let mut spawned_total = 1usize;
    let mut queue = VecDeque::from([(v, 0.0)]);
    let mut termination: f64 = 0.0;
    let mut censored = false;
    while let Some((u, s)) = queue.pop_front() {
        let b = &blocks[u];
        let root = b.vertices.binary_search(&u).expect("center lies in its block");
        let mut sub = SimGraph::restrict(g, &b.vertices, root);
        let remaining = params.horizon - s;
        if remaining <= 0.0 {
            censored = true;
            continue;
        }
        let p = SimParams { horizon: remaining, ..*params };
        let mut spawned = Vec::new();
        let out = run(&mut sub, tl, &p, &[root], Mode::Plain, root, s, |f| {
            let w = b.vertices[f.vertex];
            if f.up && !f.initial && b.is_leaf(w) {
                spawned.push((w, f.time));
            }
            false
        })?;
        if out.status != Status::Extinct {
            censored = true;
        }
        termination = termination.max(out.end_time);
        spawned_total += spawned.len();
        for c in spawned {
            if !seen.insert((c.0, c.1.to_bits())) {
                continue;
            }
            if copies.len() >= MAX_COPIES {
                return Err(Error::Coupling(format!("more than {MAX_COPIES} block copies")));
            }
            copies.push(c);
            queue.push_back(c);
        }
    }
    censored |= direct.status != Status::Extinct;
    if !censored && termination != direct.end_time {
        return Err(Error::Coupling(format!(
            "decomposed termination {termination} differs from direct survival time {} (start {v})",
            direct.end_time
        )));
    }
    Ok(Decomposition { termination, direct: direct.end_time, copies, spawned: spawned_total, censored })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::build_block;
    use crate::seed::derive_seed;

    fn blocks(g: &HalfEdgeGraph, r: usize) -> Vec<Block> {
        (0..g.n()).map(|v| build_block(g, v, r).unwrap()).collect()
    }

    #[test]
    fn tree_decomposition_matches_direct() {
        // a binary-ish tree on 15 vertices
        let edges: Vec<(usize, usize)> = (1..15).map(|i| ((i - 1) / 2, i)).collect();
        let g = HalfEdgeGraph::from_edges(15, &edges).unwrap();
        let bs = blocks(&g, 2);
        let p = SimParams::new(1.2);
        let mut spawned = 0;
        for i in 0..100u64 {
            let tl = EventTimeline::new(&derive_seed(2, &["dec".into(), i.into()]), 2.0).unwrap();
            let d = decomposed_simulate(&g, &bs, &p, (i % 15) as usize, &tl).unwrap();
            assert!(!d.censored);
            assert_eq!(d.termination, d.direct);
            assert!(d.spawned >= d.copies.len());
            spawned += d.copies.len() - 1;
        }
        assert!(spawned > 0);
    }

    #[test]
    fn unicyclic_decomposition_matches_direct() {
        let g = HalfEdgeGraph::from_edges(8, &[(0, 1), (1, 2), (2, 0), (2, 3), (3, 4), (4, 5), (5, 6), (6, 7)]).unwrap();
        let bs = blocks(&g, 2);
        let p = SimParams::new(1.5);
        for i in 0..100u64 {
            let tl = EventTimeline::new(&derive_seed(3, &["dec".into(), i.into()]), 2.0).unwrap();
            let d = decomposed_simulate(&g, &bs, &p, (i % 8) as usize, &tl).unwrap();
            assert_eq!(d.termination, d.direct);
        }
    }

    #[test]
    fn zero_lambda_single_copy() {
        let edges: Vec<(usize, usize)> = (1..7).map(|i| (i - 1, i)).collect();
        let g = HalfEdgeGraph::from_edges(7, &edges).unwrap();
        let bs = blocks(&g, 1);
        let tl = EventTimeline::new(&derive_seed(4, &["dec".into()]), 2.0).unwrap();
        let d = decomposed_simulate(&g, &bs, &SimParams::new(0.0), 3, &tl).unwrap();
        assert_eq!(d.copies.len(), 1);
    }
}
