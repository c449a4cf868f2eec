use super::linalg::{Csr, Solved, System};
use crate::error::{Error, Result};
use crate::graph::RootedGraph;
use crate::sim::Mode;

pub const MAX_VERTICES: usize = 22;

/// The contact process as a finite chain on bitmask states.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainSpec {
    pub lambda: f64,
    /// Neighbors with edge multiplicity; self-loops dropped.
    pub adj: Vec<Vec<(usize, u32)>>,
    /// Permanently infected parents feeding each vertex.
    pub sources: Vec<u32>,
}

impl ChainSpec {
    pub fn new(n: usize, edges: &[(usize, usize)], lambda: f64) -> Result<Self> {
        if n > MAX_VERTICES {
            return Err(Error::StateSpace { vertices: n, cap: MAX_VERTICES });
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!("lambda must be finite and nonnegative, got {lambda}")));
        }
        let mut adj: Vec<Vec<(usize, u32)>> = vec![Vec::new(); n];
        for &(u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::Graph(format!("edge ({u},{v}) outside 0..{n}")));
            }
            if u == v {
                continue;
            }
            for (a, b) in [(u, v), (v, u)] {
                match adj[a].iter_mut().find(|e| e.0 == b) {
                    Some(e) => e.1 += 1,
                    None => adj[a].push((b, 1)),
                }
            }
        }
        Ok(Self { lambda, adj, sources: vec![0; n] })
    }

    pub fn from_graph(g: &RootedGraph, lambda: f64, mode: Mode) -> Result<Self> {
        let mut s = Self::new(g.n(), g.edges(), lambda)?;
        if mode == Mode::RootAdded {
            s.sources[g.root()] = 1;
        }
        Ok(s)
    }

    /// Disjoint union of root-added trees; returns the chain and the position of each tree's root.
    pub fn forest(trees: &[RootedGraph], lambda: f64) -> Result<(Self, Vec<usize>)> {
        let total: usize = trees.iter().map(|t| t.n()).sum();
        if total > MAX_VERTICES {
            return Err(Error::StateSpace { vertices: total, cap: MAX_VERTICES });
        }
        let mut edges = Vec::new();
        let mut roots = Vec::new();
        let mut off = 0;
        for t in trees {
            edges.extend(t.edges().iter().map(|&(u, v)| (u + off, v + off)));
            roots.push(t.root() + off);
            off += t.n();
        }
        let mut s = Self::new(total, &edges, lambda)?;
        for &r in &roots {
            s.sources[r] += 1;
        }
        Ok((s, roots))
    }

    pub fn n(&self) -> usize {
        self.adj.len()
    }

    /// Rate at which healthy `w` becomes infected in state `x`.
    pub fn infection_rate(&self, w: usize, x: usize) -> f64 {
        let pressure: u32 = self.adj[w].iter().filter(|(u, _)| x >> u & 1 == 1).map(|&(_, m)| m).sum::<u32>() + self.sources[w];
        self.lambda * pressure as f64
    }

    /// Outgoing transitions of state `x` (target, rate), zero rates omitted.
    pub fn transitions(&self, x: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (0..self.n()).filter_map(move |v| {
            let bit = 1 << v;
            if x & bit != 0 {
                Some((x ^ bit, 1.0))
            } else {
                let r = self.infection_rate(v, x);
                (r > 0.0).then_some((x | bit, r))
            }
        })
    }
}

/// Generator restricted to the nonzero states, negated: state `x` sits at index `x - 1`.
#[derive(Debug, Clone)]
pub struct Chain {
    pub spec: ChainSpec,
    forward: System,
    backward: Option<System>,
}

impl Chain {
    pub fn build(spec: ChainSpec) -> Result<Self> {
        let n = spec.n();
        let states = (1usize << n) - 1;
        let mut indptr = Vec::with_capacity(states + 1);
        indptr.push(0);
        let mut indices = Vec::new();
        let mut data = Vec::new();
        let mut row: Vec<(usize, f64)> = Vec::with_capacity(n + 1);
        for x in 1..=states {
            row.clear();
            let mut out = 0.0;
            for (y, rate) in spec.transitions(x) {
                debug_assert!(rate >= 0.0);
                out += rate;
                if y != 0 {
                    row.push((y - 1, -rate));
                }
            }
            row.push((x - 1, out));
            row.sort_unstable_by_key(|e| e.0);
            for &(j, a) in &row {
                indices.push(j as u32);
                data.push(a);
            }
            indptr.push(indices.len());
        }
        let a = Csr { n: states, indptr, indices, data };
        Ok(Self { spec, forward: System::new(a), backward: None })
    }

    pub fn matrix(&self) -> &Csr {
        &self.forward.a
    }

    pub fn states(&self) -> usize {
        self.forward.a.n
    }

    /// Expected hitting times of the empty state from every nonzero state.
    pub fn hitting_times(&mut self) -> Result<Solved> {
        let b = vec![1.0; self.states()];
        self.forward.solve(&b)
    }

    pub fn solve_transpose(&mut self, b: &[f64]) -> Result<Solved> {
        if self.backward.is_none() {
            self.backward = Some(System::new(self.forward.a.transpose()));
        }
        self.backward.as_mut().expect("built above").solve(b)
    }

    /// Expected time spent in each nonzero state before hitting the empty state, from `x0`.
    pub fn occupation(&mut self, x0: usize) -> Result<Solved> {
        if x0 == 0 || x0 > self.states() {
            return Err(Error::InvalidArgument(format!("start state {x0} is not a nonzero state")));
        }
        let mut e = vec![0.0; self.states()];
        e[x0 - 1] = 1.0;
        self.solve_transpose(&e)
    }

    /// Expected number of 0 to 1 flips at `w` given occupation times `occ`.
    pub fn marked_count(&self, occ: &[f64], w: usize) -> f64 {
        let bit = 1 << w;
        occ.iter()
            .enumerate()
            .filter(|&(i, _)| (i + 1) & bit == 0)
            .map(|(i, &t)| t * self.spec.infection_rate(w, i + 1))
            .sum()
    }
}
