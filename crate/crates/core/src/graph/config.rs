use rand::seq::SliceRandom;
use rand::Rng;
use serde::Serialize;

use crate::distributions::{OffspringDistribution, PreprocessParams};
use crate::error::{Error, Result};
use crate::seed::StreamKey;

const PARITY_RETRY_CAP: usize = 1_000_000;

/// Configuration-model multigraph: half-edges are numbered vertex by vertex and `partner` is a perfect matching.
#[derive(Debug, Clone, PartialEq)]
pub struct HalfEdgeGraph {
    degrees: Vec<usize>,
    offsets: Vec<usize>,
    owner: Vec<usize>,
    partner: Vec<usize>,
    heights: Option<Vec<f64>>,
    line: Option<Vec<f64>>,
}

impl HalfEdgeGraph {
    /// Builds from degrees and a partner array; checks that the matching is a fixed-point-free involution.
    pub fn from_partner(degrees: Vec<usize>, partner: Vec<usize>) -> Result<Self> {
        let mut offsets = Vec::with_capacity(degrees.len() + 1);
        let mut owner = Vec::new();
        offsets.push(0);
        for (v, &d) in degrees.iter().enumerate() {
            owner.extend(std::iter::repeat_n(v, d));
            offsets.push(owner.len());
        }
        if partner.len() != owner.len() {
            return Err(Error::Graph(format!("{} half-edges but {} partners", owner.len(), partner.len())));
        }
        for (h, &p) in partner.iter().enumerate() {
            if p >= partner.len() || p == h || partner[p] != h {
                return Err(Error::Graph(format!("half-edge {h} is not properly matched")));
            }
        }
        Ok(Self { degrees, offsets, owner, partner, heights: None, line: None })
    }

    /// Builds from an edge list; the slots of each vertex are filled in edge order.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut degrees = vec![0usize; n];
        for &(u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::Graph(format!("edge ({u},{v}) outside 0..{n}")));
            }
            degrees[u] += 1;
            degrees[v] += 1;
        }
        let mut next: Vec<usize> = Vec::with_capacity(n);
        let mut acc = 0;
        for &d in &degrees {
            next.push(acc);
            acc += d;
        }
        let mut partner = vec![0usize; acc];
        for &(u, v) in edges {
            let a = next[u];
            next[u] += 1;
            let b = next[v];
            next[v] += 1;
            partner[a] = b;
            partner[b] = a;
        }
        Self::from_partner(degrees, partner)
    }

    pub fn n(&self) -> usize {
        self.degrees.len()
    }
    pub fn degrees(&self) -> &[usize] {
        &self.degrees
    }
    pub fn degree(&self, v: usize) -> usize {
        self.degrees[v]
    }
    pub fn half_edge_count(&self) -> usize {
        self.partner.len()
    }
    pub fn edge_count(&self) -> usize {
        self.partner.len() / 2
    }
    pub fn half_edges(&self, v: usize) -> std::ops::Range<usize> {
        self.offsets[v]..self.offsets[v + 1]
    }
    pub fn owner(&self, h: usize) -> usize {
        self.owner[h]
    }
    pub fn partner(&self, h: usize) -> usize {
        self.partner[h]
    }
    /// (vertex, local slot) of a half-edge.
    pub fn slot(&self, h: usize) -> (usize, usize) {
        let v = self.owner[h];
        (v, h - self.offsets[v])
    }
    /// Neighbors of `v` through each of its half-edges (repeated for multi-edges; `v` itself for self-loops).
    pub fn neighbors(&self, v: usize) -> impl Iterator<Item = usize> + '_ {
        self.half_edges(v).map(move |h| self.owner[self.partner[h]])
    }
    /// Matched pairs (h, partner) with h < partner.
    pub fn matching(&self) -> Vec<(usize, usize)> {
        (0..self.partner.len()).filter(|&h| h < self.partner[h]).map(|h| (h, self.partner[h])).collect()
    }
    /// Edges as vertex pairs in matching order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.matching().into_iter().map(|(a, b)| (self.owner[a], self.owner[b])).collect()
    }
    pub fn heights(&self) -> Option<&[f64]> {
        self.heights.as_deref()
    }
    /// Cut-off line height after each matching step.
    pub fn line_heights(&self) -> Option<&[f64]> {
        self.line.as_deref()
    }
}

fn sample_even_degrees<R: Rng>(n: usize, dist: &OffspringDistribution, rng: &mut R) -> Result<Vec<usize>> {
    for _ in 0..PARITY_RETRY_CAP {
        let degrees: Vec<usize> = (0..n).map(|_| dist.sample(rng)).collect();
        if degrees.iter().sum::<usize>() % 2 == 0 {
            return Ok(degrees);
        }
    }
    Err(Error::Rejection(format!("no even degree sum among {PARITY_RETRY_CAP} draws of {n} x {}", dist.label())))
}

/// i.i.d. degrees conditioned on an even sum (full resampling), paired uniformly.
pub fn sample_config_model(n: usize, dist: &OffspringDistribution, seed: &StreamKey) -> Result<HalfEdgeGraph> {
    if n < 2 {
        return Err(Error::InvalidArgument("configuration model needs n >= 2".into()));
    }
    let mut rng = seed.rng();
    let degrees = sample_even_degrees(n, dist, &mut rng)?;
    let total: usize = degrees.iter().sum();
    let mut order: Vec<usize> = (0..total).collect();
    order.shuffle(&mut rng);
    let mut partner = vec![0usize; total];
    for pair in order.chunks_exact(2) {
        partner[pair[0]] = pair[1];
        partner[pair[1]] = pair[0];
    }
    HalfEdgeGraph::from_partner(degrees, partner)
}

/// Cut-off line matching: the lowest-indexed unmatched half-edge is matched to the highest unmatched one.
pub fn cutoff_line_match(degrees: &[usize], seed: &StreamKey) -> Result<HalfEdgeGraph> {
    let total: usize = degrees.iter().sum();
    if !total.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!("degree sum {total} is odd")));
    }
    let mut rng = seed.rng();
    let heights: Vec<f64> = (0..total).map(|_| rng.random::<f64>()).collect();
    let mut by_height: Vec<usize> = (0..total).collect();
    by_height.sort_by(|&a, &b| heights[b].total_cmp(&heights[a]).then(a.cmp(&b)));
    let mut matched = vec![false; total];
    let mut partner = vec![usize::MAX; total];
    let mut line = Vec::with_capacity(total / 2);
    let mut top = 0;
    for a in 0..total {
        if matched[a] {
            continue;
        }
        matched[a] = true;
        while matched[by_height[top]] {
            top += 1;
        }
        let b = by_height[top];
        matched[b] = true;
        partner[a] = b;
        partner[b] = a;
        line.push(heights[b]);
    }
    let mut g = HalfEdgeGraph::from_partner(degrees.to_vec(), partner)?;
    g.heights = Some(heights);
    g.line = Some(line);
    Ok(g)
}

#[derive(Debug, Clone, Serialize)]
pub struct PreprocessReport {
    pub n: usize,
    pub n_prime: usize,
    pub removed: usize,
    pub removed_fraction: f64,
    /// n' >= n - 3 eta0 n (holds with high probability, not surely).
    pub within_bound: bool,
    pub total_removal: bool,
    /// Empirical degree measure of the remaining graph, indexed by degree.
    pub degree_measure: Vec<f64>,
    /// Original vertex id of each kept vertex.
    pub kept: Vec<usize>,
}

/// Deletes vertices of degree above j1 together with their matched half-edges.
pub fn preprocess_graph(g: &HalfEdgeGraph, dist: &OffspringDistribution, params: &PreprocessParams) -> Result<(HalfEdgeGraph, PreprocessReport)> {
    params.validate(dist)?;
    let n = g.n();
    let keep: Vec<bool> = g.degrees().iter().map(|&d| d <= params.j1).collect();
    let kept: Vec<usize> = (0..n).filter(|&v| keep[v]).collect();
    let mut new_id = vec![usize::MAX; n];
    for (i, &v) in kept.iter().enumerate() {
        new_id[v] = i;
    }
    let edges: Vec<(usize, usize)> = g
        .edges()
        .into_iter()
        .filter(|&(u, v)| keep[u] && keep[v])
        .map(|(u, v)| (new_id[u], new_id[v]))
        .collect();
    let out = HalfEdgeGraph::from_edges(kept.len(), &edges)?;
    let n_prime = out.n();
    let maxd = out.degrees().iter().copied().max().unwrap_or(0);
    let mut degree_measure = vec![0.0; maxd + 1];
    for &d in out.degrees() {
        degree_measure[d] += 1.0 / n_prime.max(1) as f64;
    }
    let report = PreprocessReport {
        n,
        n_prime,
        removed: n - n_prime,
        removed_fraction: (n - n_prime) as f64 / n as f64,
        within_bound: n_prime as f64 >= n as f64 - 3.0 * params.eta0 * n as f64,
        total_removal: n_prime == 0,
        degree_measure,
        kept,
    };
    Ok((out, report))
}
