use std::collections::HashSet;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{bfs_ball, GraphKind, HalfEdgeGraph, RootedGraph};
use crate::seed::StreamKey;
use crate::sim::{run, EventTimeline, Mode, SimGraph, SimParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GoodTreeParams {
    pub s0: f64,
    pub l0: usize,
    pub k: usize,
    pub theta: f64,
    pub eps: f64,
}

impl GoodTreeParams {
    pub fn new(s0: f64, l0: usize, k: usize, theta: f64, eps: f64) -> Result<Self> {
        if !(theta > 1.0) || !(eps > 0.0 && eps < 1.0) || !(s0 > 0.0) || l0 == 0 || k == 0 {
            return Err(Error::InvalidArgument(format!("good-tree parameters need s0 > 0, L0, k >= 1, theta > 1, eps in (0,1); got {s0}, {l0}, {k}, {theta}, {eps}")));
        }
        Ok(Self { s0, l0, k, theta, eps })
    }
}

/// Which infected set is intersected with generation kL0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum GoodTreeVariant {
    /// Infected at time k s0.
    AtTime,
    /// Infected at some time in [0, k s0].
    Union,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GoodTreeResult {
    pub p_hat: f64,
    pub se: f64,
    pub successes: usize,
    pub replicas: usize,
    pub good: bool,
}

/// Vertices at depth <= `depth`, relabelled in BFS order with the root at 0.
fn truncate(tree: &RootedGraph, depth: usize) -> Result<RootedGraph> {
    let keep: Vec<usize> = (0..tree.n()).filter(|&v| tree.depth_of(v) <= depth).collect();
    let mut local = vec![usize::MAX; tree.n()];
    for (i, &v) in keep.iter().enumerate() {
        local[v] = i;
    }
    let edges = tree
        .edges()
        .iter()
        .filter(|&&(u, v)| local[u] != usize::MAX && local[v] != usize::MAX)
        .map(|&(u, v)| (local[u], local[v]))
        .collect();
    RootedGraph::new(keep.len(), edges, local[tree.root()], GraphKind::General)
}

/// Estimates P(|infected ∩ generation kL0| >= θ^k) for the process from the root on the tree cut at depth kL0,
/// observed at time k s0 (or over [0, k s0]).
pub fn is_good_tree(tree: &RootedGraph, params: &GoodTreeParams, lambda: f64, replicas: usize, seed: &StreamKey, variant: GoodTreeVariant) -> Result<GoodTreeResult> {
    if replicas == 0 {
        return Err(Error::InvalidArgument("need at least one replica".into()));
    }
    let depth = params.k * params.l0;
    let horizon = params.k as f64 * params.s0;
    let need = params.theta.powi(params.k as i32);
    let cut = truncate(tree, depth)?;
    let sg = SimGraph::from_rooted(&cut);
    let root = cut.root();
    let hits: Vec<Result<bool>> = (0..replicas)
        .into_par_iter()
        .map(|i| {
            let mut net = sg.clone();
            let tl = EventTimeline::new(&seed.child(i as u64), lambda.max(f64::MIN_POSITIVE))?;
            let params = SimParams::new(lambda).with_horizon(horizon);
            let mut now = 0usize;
            let mut ever: HashSet<usize> = HashSet::new();
            run(&mut net, &tl, &params, &[root], Mode::Plain, root, 0.0, |f| {
                if f.depth == depth {
                    if f.up {
                        now += 1;
                        ever.insert(f.vertex);
                    } else {
                        now -= 1;
                    }
                }
                false
            })?;
            let count = match variant {
                GoodTreeVariant::AtTime => now,
                GoodTreeVariant::Union => ever.len(),
            };
            Ok(count as f64 >= need)
        })
        .collect();
    let mut successes = 0;
    for h in hits {
        successes += h? as usize;
    }
    let p_hat = successes as f64 / replicas as f64;
    let se = (p_hat * (1.0 - p_hat) / replicas as f64).sqrt();
    Ok(GoodTreeResult { p_hat, se, successes, replicas, good: p_hat - 2.0 * se > params.eps })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GoodVertexParams {
    pub n: usize,
    pub kappa: usize,
    pub c0: f64,
    pub j0: usize,
    pub d_tilde: f64,
    pub lambda: f64,
    pub theta: f64,
    pub l0: usize,
    pub l1: usize,
    pub a: f64,
    pub l2: usize,
    pub l: usize,
    /// μ(j0), used only for the reported reference value of p0.
    pub mu_j0: Option<f64>,
}

impl GoodVertexParams {
    /// l1 = ⌈2 log_d̃ log(n/κ)⌉ (at least 1); A solves (λd̃/2) θ^{A/2} = 2; l2 = ⌈A l1⌉; l = 4 + l1 + l2 L0.
    #[allow(clippy::too_many_arguments)]
    pub fn new(n: usize, kappa: usize, c0: f64, j0: usize, d_tilde: f64, lambda: f64, theta: f64, l0: usize) -> Result<Self> {
        if !(d_tilde > 1.0) || kappa == 0 || kappa >= n || !(theta > 1.0) || !(lambda > 0.0) || j0 < 2 {
            return Err(Error::InvalidArgument(format!(
                "good-vertex parameters need d~ > 1, 0 < kappa < n, theta > 1, lambda > 0, j0 >= 2; got d~={d_tilde}, kappa={kappa}, n={n}, theta={theta}, lambda={lambda}, j0={j0}"
            )));
        }
        let inner = (n as f64 / kappa as f64).ln();
        let l1 = if inner > 1.0 { (2.0 * inner.ln() / d_tilde.ln()).ceil().max(1.0) as usize } else { 1 };
        Ok(Self::with_l1(n, kappa, c0, j0, d_tilde, lambda, theta, l0, l1))
    }

    /// Same derived quantities with l1 given directly.
    #[allow(clippy::too_many_arguments)]
    pub fn with_l1(n: usize, kappa: usize, c0: f64, j0: usize, d_tilde: f64, lambda: f64, theta: f64, l0: usize, l1: usize) -> Self {
        let a = (2.0 * (4.0 / (lambda * d_tilde)).ln() / theta.ln()).max(0.0);
        let l2 = (a * l1 as f64).ceil() as usize;
        Self { n, kappa, c0, j0, d_tilde, lambda, theta, l0, l1, a, l2, l: 4 + l1 + l2 * l0, mu_j0: None }
    }

    pub fn with_mu_j0(mut self, p: f64) -> Self {
        self.mu_j0 = Some(p);
        self
    }

    /// Outgoing half-edges N(v,3) must have: j0 (j0 − 1)³.
    pub fn boundary_target(&self) -> usize {
        self.j0 * (self.j0 - 1).pow(3)
    }

    pub fn expansion_target(&self) -> f64 {
        self.c0 * self.d_tilde.powi(self.l1 as i32)
    }

    /// μ(j0)^{j0⁴} c0^{j0 (j0−1)³}, when μ(j0) is known.
    pub fn p0_reference(&self) -> Option<f64> {
        self.mu_j0.map(|m| m.powi(self.j0.pow(4) as i32) * self.c0.powi(self.boundary_target() as i32))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct VertexVerdict {
    pub vertex: usize,
    pub good: bool,
    pub boundary: usize,
    /// Smallest branch expansion over the outgoing half-edges of N(v,3).
    pub min_expansion: usize,
    /// The component ends within distance 3 + l1 of v.
    pub truncated: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct GoodScan {
    pub verdicts: Vec<VertexVerdict>,
    pub good: Vec<usize>,
    pub p0_hat: f64,
    pub p0_reference: Option<f64>,
}

/// Outgoing half-edges of a vertex set: half-edges at members whose partner's owner is outside.
fn outgoing(g: &HalfEdgeGraph, inside: impl Fn(usize) -> bool, members: impl Iterator<Item = usize>) -> Vec<usize> {
    members.flat_map(|x| g.half_edges(x)).filter(|&h| !inside(g.owner(g.partner(h)))).collect()
}

pub fn classify_vertex(g: &HalfEdgeGraph, v: usize, params: &GoodVertexParams) -> VertexVerdict {
    let radius = 3 + params.l1;
    let (order, dist) = bfs_ball(g, &[v], radius);
    let d = |x: usize| dist.get(&x).copied();
    let in3 = |x: usize| d(x).is_some_and(|k| k <= 3);
    let boundary = outgoing(g, in3, order.iter().copied().filter(|&x| in3(x)));
    let truncated = outgoing(g, |x| d(x).is_some(), order.iter().copied()).is_empty();
    let mut min_expansion = usize::MAX;
    if boundary.len() == params.boundary_target() && !truncated {
        for &h in &boundary {
            // descendants of the far endpoint along geodesics from v, out to distance 3 + l1
            let w = g.owner(g.partner(h));
            let mut seen = HashSet::from([w]);
            let mut frontier = vec![w];
            let mut leaves = Vec::new();
            while let Some(x) = frontier.pop() {
                let dx = d(x).expect("inside ball");
                if dx == radius {
                    leaves.push(x);
                    continue;
                }
                for y in g.neighbors(x) {
                    if d(y) == Some(dx + 1) && seen.insert(y) {
                        frontier.push(y);
                    }
                }
            }
            let expansion = outgoing(g, |x| d(x).is_some(), leaves.into_iter()).len();
            min_expansion = min_expansion.min(expansion);
        }
    }
    let good = !truncated && boundary.len() == params.boundary_target() && min_expansion != usize::MAX && min_expansion as f64 >= params.expansion_target();
    VertexVerdict { vertex: v, good, boundary: boundary.len(), min_expansion: if min_expansion == usize::MAX { 0 } else { min_expansion }, truncated }
}

/// Marks every vertex good or not and reports the good fraction.
pub fn good_vertex_scan(g: &HalfEdgeGraph, params: &GoodVertexParams) -> GoodScan {
    let verdicts: Vec<VertexVerdict> = (0..g.n()).into_par_iter().map(|v| classify_vertex(g, v, params)).collect();
    let good: Vec<usize> = verdicts.iter().filter(|r| r.good).map(|r| r.vertex).collect();
    let p0_hat = if g.n() == 0 { 0.0 } else { good.len() as f64 / g.n() as f64 };
    GoodScan { verdicts, good, p0_hat, p0_reference: params.p0_reference() }
}

impl GoodScan {
    pub fn truncated(&self) -> usize {
        self.verdicts.iter().filter(|r| r.truncated).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::OffspringDistribution;
    use crate::graph::{sample_config_model, sample_gw, SizeCap};
    use crate::seed::derive_seed;

    fn binary_tree(depth: usize) -> RootedGraph {
        let n = (1 << (depth + 1)) - 1;
        let edges = (1..n).map(|v| ((v - 1) / 2, v)).collect();
        RootedGraph::new(n, edges, 0, GraphKind::General).unwrap()
    }

    #[test]
    fn zero_lambda_and_impossible_targets() {
        let tree = binary_tree(4);
        let seed = derive_seed(5, &["good".into()]);
        let p = GoodTreeParams::new(3.0, 2, 2, 1.1, 0.1).unwrap();
        let r = is_good_tree(&tree, &p, 0.0, 100, &seed, GoodTreeVariant::AtTime).unwrap();
        assert_eq!(r.p_hat, 0.0);
        assert!(!r.good);
        // θ^k = 25 > 16 leaves at depth 4
        let p = GoodTreeParams::new(3.0, 2, 2, 5.0, 0.1).unwrap();
        let r = is_good_tree(&tree, &p, 5.0, 100, &seed, GoodTreeVariant::Union).unwrap();
        assert_eq!(r.p_hat, 0.0);
        assert!(GoodTreeParams::new(3.0, 2, 2, 1.0, 0.1).is_err());
    }

    #[test]
    fn union_dominates_at_time() {
        let tree = binary_tree(4);
        let seed = derive_seed(6, &["good".into()]);
        let p = GoodTreeParams::new(1.5, 2, 2, 2.0, 0.1).unwrap();
        let a = is_good_tree(&tree, &p, 1.0, 300, &seed, GoodTreeVariant::AtTime).unwrap();
        let u = is_good_tree(&tree, &p, 1.0, 300, &seed, GoodTreeVariant::Union).unwrap();
        assert!(u.successes >= a.successes);
    }

    #[test]
    fn supercritical_binary_trees_are_good() {
        let law = OffspringDistribution::point_mass(2);
        let p = GoodTreeParams::new(3.0, 2, 2, 1.1, 0.1).unwrap();
        let root = derive_seed(7, &["good-cal".into()]);
        let good = (0..10u64)
            .filter(|&i| {
                let tree = sample_gw(&law, 6, &root.child("tree").child(i), SizeCap(1 << 12)).unwrap();
                is_good_tree(&tree, &p, 5.0, 200, &root.child("run").child(i), GoodTreeVariant::AtTime).unwrap().good
            })
            .count();
        assert!(good >= 9, "{good}");
    }

    #[test]
    fn complete_graph_has_no_good_vertex() {
        let edges: Vec<(usize, usize)> = (0..4).flat_map(|a| (a + 1..4).map(move |b| (a, b))).collect();
        let g = HalfEdgeGraph::from_edges(4, &edges).unwrap();
        let params = GoodVertexParams::with_l1(4, 1, 0.1, 3, 2.0, 1.0, 1.5, 1, 1);
        let scan = good_vertex_scan(&g, &params);
        assert!(scan.good.is_empty());
        assert!(scan.verdicts.iter().all(|r| r.boundary == 0 && r.truncated));
    }

    #[test]
    fn random_regular_graph_has_good_vertices() {
        let g = sample_config_model(20_000, &OffspringDistribution::point_mass(3), &derive_seed(8, &["regular".into()])).unwrap();
        let params = GoodVertexParams::with_l1(20_000, 10, 0.5, 3, 2.0, 1.0, 1.5, 1, 2).with_mu_j0(1.0);
        let scan = good_vertex_scan(&g, &params);
        assert!(scan.p0_hat > 0.5, "{}", scan.p0_hat);
        assert_eq!(scan.p0_reference, Some(0.5f64.powi(24)));
        // a tree-like ball gives exactly 3·2³ outgoing half-edges and 2^l1 per branch
        let tree_like = scan.verdicts.iter().find(|r| r.good).unwrap();
        assert_eq!(tree_like.boundary, 24);
        assert_eq!(tree_like.min_expansion, 4);
    }

    #[test]
    fn derived_lengths() {
        let p = GoodVertexParams::new(10_000, 10, 0.1, 3, 2.0, 1.0, 2.0, 2).unwrap();
        // ln(1000) = 6.91, 2 log2(6.91) = 5.58
        assert_eq!(p.l1, 6);
        // (λd̃/2) θ^{A/2} = 2 with λd̃ = 2: A = 2
        assert!((p.a - 2.0).abs() < 1e-12);
        assert_eq!(p.l2, 12);
        assert_eq!(p.l, 4 + 6 + 24);
    }
}
