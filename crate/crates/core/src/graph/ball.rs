use std::collections::{HashMap, VecDeque};

use super::{GraphKind, HalfEdgeGraph, RootedGraph, LEAVES};
use crate::error::{Error, Result};

/// Multi-source BFS up to `radius`; returns vertices in BFS order with their distances.
pub(crate) fn bfs_ball(g: &HalfEdgeGraph, sources: &[usize], radius: usize) -> (Vec<usize>, HashMap<usize, usize>) {
    let mut dist = HashMap::new();
    let mut order = Vec::new();
    let mut q = VecDeque::new();
    for &s in sources {
        if dist.insert(s, 0).is_none() {
            order.push(s);
            q.push_back(s);
        }
    }
    while let Some(x) = q.pop_front() {
        let dx = dist[&x];
        if dx == radius {
            continue;
        }
        for y in g.neighbors(x) {
            if let std::collections::hash_map::Entry::Vacant(e) = dist.entry(y) {
                e.insert(dx + 1);
                order.push(y);
                q.push_back(y);
            }
        }
    }
    (order, dist)
}

/// Matched half-edge pairs (h, partner(h)), h < partner, with both endpoints in the set.
pub fn induced_edges<F: Fn(usize) -> bool>(g: &HalfEdgeGraph, vertices: &[usize], contains: F) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for &v in vertices {
        for h in g.half_edges(v) {
            let p = g.partner(h);
            if h < p && contains(g.owner(p)) {
                out.push((h, p));
            }
        }
    }
    out.sort_unstable();
    out
}

/// The ball N(v, radius) as a rooted graph; `origin` holds the original vertex ids.
pub fn neighborhood(g: &HalfEdgeGraph, v: usize, radius: usize) -> RootedGraph {
    let (order, dist) = bfs_ball(g, &[v], radius);
    let local: HashMap<usize, usize> = order.iter().enumerate().map(|(i, &x)| (x, i)).collect();
    let edges: Vec<(usize, usize)> = induced_edges(g, &order, |x| dist.contains_key(&x))
        .into_iter()
        .map(|(a, b)| (local[&g.owner(a)], local[&g.owner(b)]))
        .collect();
    RootedGraph::new(order.len(), edges, 0, GraphKind::General).expect("ball is well formed").with_origin(order)
}

/// Independent cycles in the ball: edges - vertices + 1 (self-loops and multi-edges count).
pub fn count_cycles_in_ball(g: &HalfEdgeGraph, v: usize, radius: usize) -> usize {
    let (order, dist) = bfs_ball(g, &[v], radius);
    let e = induced_edges(g, &order, |x| dist.contains_key(&x)).len();
    e + 1 - order.len()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CycleInfo {
    pub vertices: Vec<usize>,
    /// Distance from the center to the cycle.
    pub h: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub center: usize,
    /// Sorted original vertex ids.
    pub vertices: Vec<usize>,
    pub radius: usize,
    pub cycle: Option<CycleInfo>,
    /// Sorted bottom leaves.
    pub leaves: Vec<usize>,
}

impl Block {
    pub fn contains(&self, v: usize) -> bool {
        self.vertices.binary_search(&v).is_ok()
    }

    pub fn is_leaf(&self, v: usize) -> bool {
        self.leaves.binary_search(&v).is_ok()
    }

    /// The block as a rooted graph rooted at its center, leaves attached as a named set.
    pub fn to_rooted(&self, g: &HalfEdgeGraph) -> RootedGraph {
        let mut order = vec![self.center];
        order.extend(self.vertices.iter().copied().filter(|&x| x != self.center));
        let local: HashMap<usize, usize> = order.iter().enumerate().map(|(i, &x)| (x, i)).collect();
        let edges: Vec<(usize, usize)> = induced_edges(g, &order, |x| self.contains(x))
            .into_iter()
            .map(|(a, b)| (local[&g.owner(a)], local[&g.owner(b)]))
            .collect();
        let leaves = self.leaves.iter().map(|x| local[x]).collect();
        RootedGraph::new(order.len(), edges, 0, GraphKind::General)
            .expect("block is well formed")
            .with_leaf_set(LEAVES, leaves)
            .with_origin(order)
    }
}

/// Vertices of the unique cycle of a unicyclic vertex set (its 2-core).
fn two_core(g: &HalfEdgeGraph, vertices: &[usize], contains: impl Fn(usize) -> bool) -> Vec<usize> {
    let mut deg: HashMap<usize, usize> = vertices.iter().map(|&v| (v, 0)).collect();
    for (a, b) in induced_edges(g, vertices, &contains) {
        *deg.get_mut(&g.owner(a)).unwrap() += 1;
        *deg.get_mut(&g.owner(b)).unwrap() += 1;
    }
    let mut stack: Vec<usize> = vertices.iter().copied().filter(|v| deg[v] <= 1).collect();
    let mut removed: HashMap<usize, bool> = HashMap::new();
    while let Some(x) = stack.pop() {
        if removed.insert(x, true).is_some() {
            continue;
        }
        for y in g.neighbors(x) {
            if y != x && contains(y) && !removed.contains_key(&y) {
                let d = deg.get_mut(&y).unwrap();
                *d -= 1;
                if *d == 1 {
                    stack.push(y);
                }
            }
        }
    }
    let mut core: Vec<usize> = vertices.iter().copied().filter(|v| !removed.contains_key(v)).collect();
    core.sort_unstable();
    core
}

/// Block B_v: the ball N(v, l_n), extended by N(u, l_n - h) around every vertex u of its cycle if it has one.
pub fn build_block(g: &HalfEdgeGraph, v: usize, l_n: usize) -> Result<Block> {
    let (ball, dist_v) = bfs_ball(g, &[v], l_n);
    let e = induced_edges(g, &ball, |x| dist_v.contains_key(&x)).len();
    let cycles = e + 1 - ball.len();
    if cycles >= 2 {
        return Err(Error::Graph(format!("ball N({v},{l_n}) has {cycles} independent cycles")));
    }
    if cycles == 0 {
        let mut vertices = ball;
        vertices.sort_unstable();
        let mut leaves: Vec<usize> = vertices.iter().copied().filter(|x| dist_v[x] >= l_n).collect();
        leaves.sort_unstable();
        return Ok(Block { center: v, vertices, radius: l_n, cycle: None, leaves });
    }
    let cyc = two_core(g, &ball, |x| dist_v.contains_key(&x));
    let h = cyc.iter().map(|c| dist_v[c]).min().expect("nonempty cycle");
    let (around, dist_c) = bfs_ball(g, &cyc, l_n - h);
    let mut vertices = ball;
    vertices.extend(around);
    vertices.sort_unstable();
    vertices.dedup();
    let inside = |x: usize| vertices.binary_search(&x).is_ok();
    let total = induced_edges(g, &vertices, inside).len() + 1 - vertices.len();
    if total >= 2 {
        return Err(Error::Graph(format!("block at {v} contains {total} independent cycles")));
    }
    let (_, dist_far) = bfs_ball(g, &[v], 2 * l_n + 1);
    let leaves: Vec<usize> = vertices
        .iter()
        .copied()
        .filter(|x| dist_far.get(x).copied().unwrap_or(usize::MAX) >= l_n && dist_c.get(x).copied().unwrap_or(usize::MAX) >= l_n - h)
        .collect();
    Ok(Block { center: v, vertices, radius: l_n, cycle: Some(CycleInfo { vertices: cyc, h }), leaves })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn triangle_with_tail() -> HalfEdgeGraph {
        // triangle 0-1-2, path 2-3-4-5
        HalfEdgeGraph::from_edges(6, &[(0, 1), (1, 2), (2, 0), (2, 3), (3, 4), (4, 5)]).unwrap()
    }

    #[test]
    fn triangle_ball() {
        let g = HalfEdgeGraph::from_edges(3, &[(0, 1), (1, 2), (2, 0)]).unwrap();
        assert_eq!(count_cycles_in_ball(&g, 0, 1), 1);
        let b = neighborhood(&g, 1, 1);
        assert_eq!((b.n(), b.edge_count()), (3, 3));
    }

    #[test]
    fn self_loop_and_multi_edge_count() {
        let g = HalfEdgeGraph::from_edges(3, &[(0, 0), (0, 1), (1, 2), (1, 2)]).unwrap();
        assert_eq!(count_cycles_in_ball(&g, 0, 0), 1);
        assert_eq!(count_cycles_in_ball(&g, 0, 2), 2);
        assert!(build_block(&g, 0, 2).is_err());
    }

    #[test]
    fn tree_block_is_ball() {
        let g = HalfEdgeGraph::from_edges(5, &[(0, 1), (1, 2), (2, 3), (3, 4)]).unwrap();
        let b = build_block(&g, 2, 1).unwrap();
        assert_eq!(b.vertices, vec![1, 2, 3]);
        assert_eq!(b.leaves, vec![1, 3]);
        assert!(b.cycle.is_none());
    }

    #[test]
    fn unicyclic_block_extends_around_cycle() {
        let g = triangle_with_tail();
        // center 4, l_n = 2: ball {2,3,4,5}; no cycle inside -> tree case
        let b = build_block(&g, 4, 2).unwrap();
        assert!(b.cycle.is_none());
        // center 3, l_n = 2: ball {0,1,2,3,4,5} contains the triangle, h = 1
        let b = build_block(&g, 3, 2).unwrap();
        let c = b.cycle.clone().unwrap();
        assert_eq!(c.vertices, vec![0, 1, 2]);
        assert_eq!(c.h, 1);
        assert_eq!(b.vertices, vec![0, 1, 2, 3, 4, 5]);
        // leaves: dist to 3 >= 2 and dist to cycle >= 1; cycle vertices 0, 1 fail the second test
        assert_eq!(b.leaves, vec![5]);
        let r = b.to_rooted(&g);
        assert_eq!(r.leaf_set(LEAVES).unwrap().len(), 1);
    }
}
