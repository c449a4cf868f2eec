use rand::Rng;

use super::{FamilyParams, GraphKind, RootedGraph, BOTTOM, END};
use crate::distributions::OffspringDistribution;
use crate::error::{Error, Result};
use crate::seed::StreamKey;

pub const DEFAULT_SIZE_CAP: usize = 5_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SizeCap(pub usize);

impl Default for SizeCap {
    fn default() -> Self {
        SizeCap(DEFAULT_SIZE_CAP)
    }
}

const EGW_RETRY_CAP: usize = 1_000_000;

struct Builder {
    n: usize,
    edges: Vec<(usize, usize)>,
    cap: usize,
}

impl Builder {
    fn new(cap: SizeCap) -> Self {
        Self { n: 0, edges: Vec::new(), cap: cap.0 }
    }

    fn vertex(&mut self) -> Result<usize> {
        if self.n >= self.cap {
            return Err(Error::SizeCap(format!("graph grew past {} vertices", self.cap)));
        }
        self.n += 1;
        Ok(self.n - 1)
    }

    fn edge(&mut self, u: usize, v: usize) {
        self.edges.push((u, v));
    }

    /// Grows a GW tree below `root` to `depth` levels; returns the vertices at each level.
    fn grow<R: Rng>(
        &mut self,
        rng: &mut R,
        root: usize,
        root_law: &OffspringDistribution,
        other_law: &OffspringDistribution,
        depth: usize,
    ) -> Result<Vec<Vec<usize>>> {
        let mut levels = vec![vec![root]];
        for h in 0..depth {
            let mut next = Vec::new();
            for &v in &levels[h] {
                let law = if h == 0 { root_law } else { other_law };
                let k = law.sample(rng);
                for _ in 0..k {
                    let c = self.vertex()?;
                    self.edge(v, c);
                    next.push(c);
                }
            }
            if next.is_empty() {
                break;
            }
            levels.push(next);
        }
        Ok(levels)
    }
}

fn expected_size(root_mean: f64, other_mean: f64, depth: usize) -> f64 {
    let mut total = 1.0;
    let mut gen = 1.0;
    for h in 0..depth {
        gen *= if h == 0 { root_mean } else { other_mean };
        total += gen;
    }
    total
}

fn guard(expected: f64, cap: SizeCap) -> Result<()> {
    if expected > cap.0 as f64 {
        return Err(Error::SizeCap(format!("expected size {expected:.3e} exceeds cap {}", cap.0)));
    }
    Ok(())
}

pub fn sample_gw(dist: &OffspringDistribution, depth: usize, seed: &StreamKey, cap: SizeCap) -> Result<RootedGraph> {
    sample_gw_mixed(dist, dist, depth, seed, cap)
}

/// GW tree whose root uses `root_dist` and every other vertex `other_dist`.
pub fn sample_gw_mixed(
    root_dist: &OffspringDistribution,
    other_dist: &OffspringDistribution,
    depth: usize,
    seed: &StreamKey,
    cap: SizeCap,
) -> Result<RootedGraph> {
    guard(expected_size(root_dist.mean(), other_dist.mean(), depth), cap)?;
    let mut rng = seed.rng();
    let mut b = Builder::new(cap);
    let root = b.vertex()?;
    let levels = b.grow(&mut rng, root, root_dist, other_dist, depth)?;
    let bottom = levels.get(depth).cloned().unwrap_or_default();
    Ok(RootedGraph::new(b.n, b.edges, root, GraphKind::GwTree)?
        .with_params(FamilyParams { depth: Some(depth), h: None })
        .with_leaf_set(BOTTOM, bottom))
}

/// Cycle v1..vm with GW trees at every cycle vertex (`skip_first`: none at v1).
fn cycle_with_trees<R: Rng>(
    b: &mut Builder,
    rng: &mut R,
    first: usize,
    m: usize,
    dist: &OffspringDistribution,
    depth: usize,
    skip_first: bool,
) -> Result<Vec<usize>> {
    let mut cycle = vec![first];
    for _ in 1..m {
        cycle.push(b.vertex()?);
    }
    // for m = 2 this yields the double edge v1 = v2
    for i in 0..m {
        b.edge(cycle[i], cycle[(i + 1) % m]);
    }
    for (i, &c) in cycle.iter().enumerate() {
        if i == 0 && skip_first {
            continue;
        }
        b.grow(rng, c, dist, dist, depth)?;
    }
    Ok(cycle)
}

fn unicyclic(dist: &OffspringDistribution, m: usize, depth: usize, seed: &StreamKey, cap: SizeCap, gwc2: bool) -> Result<RootedGraph> {
    guard(m as f64 * expected_size(dist.mean(), dist.mean(), depth), cap)?;
    let mut rng = seed.rng();
    let mut b = Builder::new(cap);
    let v1 = b.vertex()?;
    let cycle = cycle_with_trees(&mut b, &mut rng, v1, m, dist, depth, gwc2)?;
    let kind = if gwc2 { GraphKind::Gwc2 } else { GraphKind::Gwc1 };
    let g = RootedGraph::new(b.n, b.edges, v1, kind)?.with_cycles(vec![cycle]).with_params(FamilyParams { depth: Some(depth), h: None });
    let bottom = {
        let probe = g.clone().with_leaf_set(BOTTOM, Vec::new());
        probe.recompute_bottom()?.unwrap_or_default()
    };
    Ok(g.with_leaf_set(BOTTOM, bottom))
}

/// Cycle of length `m` with GW trees at all cycle vertices, rooted at v1. `m = 1` is a plain GW tree.
pub fn sample_gwc1(dist: &OffspringDistribution, m: usize, depth: usize, seed: &StreamKey, cap: SizeCap) -> Result<RootedGraph> {
    match m {
        0 => Err(Error::InvalidArgument("cycle length must be at least 1".into())),
        1 => sample_gw(dist, depth, seed, cap),
        _ => unicyclic(dist, m, depth, seed, cap, false),
    }
}

/// As `sample_gwc1` but v1 carries no tree.
pub fn sample_gwc2(dist: &OffspringDistribution, m: usize, depth: usize, seed: &StreamKey, cap: SizeCap) -> Result<RootedGraph> {
    if m < 2 {
        return Err(Error::InvalidArgument("gwc2 needs cycle length at least 2".into()));
    }
    unicyclic(dist, m, depth, seed, cap, true)
}

/// GW tree conditioned to reach `depth`, with a GWC2 of depth `depth - h` attached at every depth-`h` vertex.
pub fn sample_egw(
    root_dist: &OffspringDistribution,
    other_dist: &OffspringDistribution,
    h: usize,
    m: usize,
    depth: usize,
    seed: &StreamKey,
    cap: SizeCap,
) -> Result<RootedGraph> {
    if m < 2 {
        return Err(Error::InvalidArgument("egw needs cycle length at least 2".into()));
    }
    if depth < h + 1 {
        return Err(Error::InvalidArgument(format!("egw needs depth >= h + 1 (depth {depth}, h {h})")));
    }
    let base = expected_size(root_dist.mean(), other_dist.mean(), depth);
    let at_h = expected_size(root_dist.mean(), other_dist.mean(), h);
    guard(base + at_h * m as f64 * expected_size(other_dist.mean(), other_dist.mean(), depth - h), cap)?;
    let mut rng = seed.rng();
    for _ in 0..EGW_RETRY_CAP {
        let mut b = Builder::new(cap);
        let root = b.vertex()?;
        let levels = b.grow(&mut rng, root, root_dist, other_dist, depth)?;
        if levels.len() <= depth {
            continue;
        }
        let mut cycles = Vec::new();
        for &u in &levels[h] {
            cycles.push(cycle_with_trees(&mut b, &mut rng, u, m, other_dist, depth - h, true)?);
        }
        let g = RootedGraph::new(b.n, b.edges, root, GraphKind::Egw)?
            .with_cycles(cycles)
            .with_params(FamilyParams { depth: Some(depth), h: Some(h) });
        let probe = g.clone().with_leaf_set(BOTTOM, Vec::new());
        let bottom = probe.recompute_bottom()?.unwrap_or_default();
        return Ok(g.with_leaf_set(BOTTOM, bottom));
    }
    Err(Error::Rejection(format!(
        "no tree reached depth {depth} in {EGW_RETRY_CAP} attempts; survival probability estimate < {:e}",
        1.0 / EGW_RETRY_CAP as f64
    )))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LineVariant {
    /// Line v1..vm, trees at v1..v_{m-1}, root v1, end {vm}.
    F { m: usize },
    /// Line v_{-m1}..v_{m2}, trees at interior vertices, root v0, ends both endpoints.
    A { m1: usize, m2: usize },
}

pub fn build_line_family(dist: &OffspringDistribution, variant: LineVariant, depth: usize, seed: &StreamKey, cap: SizeCap) -> Result<RootedGraph> {
    let (len, root, has_tree): (usize, usize, Box<dyn Fn(usize) -> bool>) = match variant {
        LineVariant::F { m } => {
            if m == 0 {
                return Err(Error::InvalidArgument("line-F needs m >= 1".into()));
            }
            (m, 0, Box::new(move |i| i + 1 < m))
        }
        LineVariant::A { m1, m2 } => {
            if m1 == 0 || m2 == 0 {
                return Err(Error::InvalidArgument("line-A needs m1, m2 >= 1".into()));
            }
            let len = m1 + m2 + 1;
            (len, m1, Box::new(move |i| i > 0 && i + 1 < len))
        }
    };
    guard(len as f64 * expected_size(dist.mean(), dist.mean(), depth), cap)?;
    let mut rng = seed.rng();
    let mut b = Builder::new(cap);
    let line: Vec<usize> = (0..len).map(|_| b.vertex()).collect::<Result<_>>()?;
    for w in line.windows(2) {
        b.edge(w[0], w[1]);
    }
    for (i, &v) in line.iter().enumerate() {
        if has_tree(i) {
            b.grow(&mut rng, v, dist, dist, depth)?;
        }
    }
    let (kind, ends) = match variant {
        LineVariant::F { .. } => (GraphKind::LineF, vec![len - 1]),
        LineVariant::A { .. } => (GraphKind::LineA, vec![0, len - 1]),
    };
    Ok(RootedGraph::new(b.n, b.edges, root, kind)?
        .with_params(FamilyParams { depth: Some(depth), h: None })
        .with_leaf_set(END, ends))
}

/// The cover (A1, A2) of a unicyclic graph: two lines that unroll the cycle, copying the hanging trees.
pub fn cover_of_unicyclic(hg: &RootedGraph) -> Result<(RootedGraph, RootedGraph)> {
    let cycle = match (hg.kind(), hg.cycle()) {
        (GraphKind::Gwc1, Some(c)) if c.len() >= 2 => c.to_vec(),
        _ => return Err(Error::Graph("cover needs a gwc1 graph with a cycle of length >= 2".into())),
    };
    let owner = hg.tree_owner().expect("one cycle");
    let m = cycle.len();
    // m' = ceil((m+1)/2), 1-indexed
    let mp = (m + 1).div_ceil(2);
    let idx = |j: usize| cycle[j - 1];
    let mut seq1: Vec<usize> = (mp..=m).chain(1..mp).map(idx).collect();
    seq1.push(idx(mp));
    let root1 = m - mp + 1;
    let mut seq2: Vec<usize> = (1..=m).map(idx).collect();
    seq2.push(idx(1));
    let root2 = mp - 1;
    let a1 = unroll(hg, &owner, &seq1, root1)?;
    let a2 = unroll(hg, &owner, &seq2, root2)?;
    Ok((a1, a2))
}

/// Lays `seq` out as a line, copying the hanging tree of every interior entry.
fn unroll(hg: &RootedGraph, owner: &[usize], seq: &[usize], root_pos: usize) -> Result<RootedGraph> {
    let len = seq.len();
    let mut origin: Vec<usize> = seq.to_vec();
    let mut edges: Vec<(usize, usize)> = (0..len - 1).map(|i| (i, i + 1)).collect();
    for (i, &c) in seq.iter().enumerate() {
        if i == 0 || i + 1 == len {
            continue;
        }
        // BFS inside the tree owned by c
        let mut stack = vec![(c, i)];
        let mut seen = std::collections::HashSet::from([c]);
        while let Some((x, lx)) = stack.pop() {
            for &y in hg.neighbors(x) {
                if owner[y] == c && y != c && seen.insert(y) {
                    let ly = origin.len();
                    origin.push(y);
                    edges.push((lx, ly));
                    stack.push((y, ly));
                }
            }
        }
    }
    let depth = hg.params().depth;
    Ok(RootedGraph::new(origin.len(), edges, root_pos, GraphKind::LineA)?
        .with_params(FamilyParams { depth, h: None })
        .with_leaf_set(END, vec![0, len - 1])
        .with_origin(origin))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::derive_seed;

    fn key(i: u64) -> StreamKey {
        derive_seed(11, &["gen".into(), i.into()])
    }

    #[test]
    fn gw_deterministic_shapes() {
        let pm2 = OffspringDistribution::point_mass(2);
        let g = sample_gw(&pm2, 3, &key(0), SizeCap::default()).unwrap();
        assert_eq!(g.n(), 15);
        g.validate().unwrap();
        assert_eq!(g.leaf_set(BOTTOM).unwrap().len(), 8);
        let single = sample_gw(&OffspringDistribution::poisson(3.0).unwrap(), 0, &key(1), SizeCap::default()).unwrap();
        assert_eq!(single.n(), 1);
        let mixed = sample_gw_mixed(&OffspringDistribution::point_mass(3), &pm2, 2, &key(2), SizeCap::default()).unwrap();
        // 1 + 3 + 3 * 2
        assert_eq!(mixed.n(), 10);
        assert_eq!(mixed.degree(0), 3);
        assert!(mixed.level(1).iter().all(|&v| mixed.children(v).len() == 2));
    }

    #[test]
    fn gw_size_guard() {
        let p = OffspringDistribution::poisson(20.0).unwrap();
        assert!(matches!(sample_gw(&p, 8, &key(3), SizeCap::default()), Err(Error::SizeCap(_))));
    }

    #[test]
    fn gw_is_deterministic() {
        let p = OffspringDistribution::poisson(2.0).unwrap();
        let a = sample_gw(&p, 4, &key(4), SizeCap::default()).unwrap();
        let b = sample_gw(&p, 4, &key(4), SizeCap::default()).unwrap();
        assert_eq!(a.edges(), b.edges());
    }

    #[test]
    fn unicyclic_shapes() {
        let pm0 = OffspringDistribution::point_mass(0);
        let tri = sample_gwc2(&pm0, 3, 4, &key(5), SizeCap::default()).unwrap();
        assert_eq!((tri.n(), tri.edge_count()), (3, 3));
        tri.validate().unwrap();
        let pm1 = OffspringDistribution::point_mass(1);
        let g = sample_gwc1(&pm1, 4, 2, &key(6), SizeCap::default()).unwrap();
        assert_eq!(g.n(), 12);
        assert_eq!(g.cycles().len(), 1);
        g.validate().unwrap();
        assert_eq!(g.leaf_set(BOTTOM).unwrap().len(), 4);
        let t = sample_gwc1(&pm1, 1, 2, &key(7), SizeCap::default()).unwrap();
        assert_eq!(t.kind(), GraphKind::GwTree);
        let two = sample_gwc2(&pm1, 2, 1, &key(8), SizeCap::default()).unwrap();
        two.validate().unwrap();
        assert_eq!((two.n(), two.edge_count()), (3, 3));
    }

    #[test]
    fn egw_hand_built_example() {
        // path rho-a-b; at a: double edge a=x and x-y. Bottom: b and y.
        let pm1 = OffspringDistribution::point_mass(1);
        let g = sample_egw(&pm1, &pm1, 1, 2, 2, &key(9), SizeCap::default()).unwrap();
        g.validate().unwrap();
        assert_eq!(g.n(), 5);
        assert_eq!(g.edge_count(), 5);
        let a = g.level(1)[0];
        let c = &g.cycles()[0];
        assert_eq!(c[0], a);
        let x = c[1];
        assert_eq!(g.neighbors(a).iter().filter(|&&v| v == x).count(), 2);
        let bottom = g.leaf_set(BOTTOM).unwrap().to_vec();
        assert_eq!(bottom.len(), 2);
        let b = g.level(2).into_iter().find(|&v| v != x).unwrap();
        let y = g.neighbors(x).iter().copied().find(|&v| v != a).unwrap();
        let mut want = vec![b, y];
        want.sort();
        assert_eq!(bottom, want);
    }

    #[test]
    fn egw_h0_matches_gwc1_shape() {
        let pm2 = OffspringDistribution::point_mass(2);
        let e = sample_egw(&pm2, &pm2, 0, 3, 2, &key(10), SizeCap::default()).unwrap();
        let c = sample_gwc1(&pm2, 3, 2, &key(11), SizeCap::default()).unwrap();
        assert_eq!(e.n(), c.n());
        assert_eq!(e.edge_count(), c.edge_count());
        assert_eq!(e.cycles()[0][0], e.root());
    }

    #[test]
    fn egw_subcritical_conditioning_fails() {
        let pm0 = OffspringDistribution::point_mass(0);
        let pm1 = OffspringDistribution::point_mass(1);
        assert!(matches!(sample_egw(&pm0, &pm1, 0, 2, 1, &key(12), SizeCap::default()), Err(Error::Rejection(_))));
    }

    #[test]
    fn line_families() {
        let pm0 = OffspringDistribution::point_mass(0);
        let f1 = build_line_family(&pm0, LineVariant::F { m: 1 }, 3, &key(13), SizeCap::default()).unwrap();
        assert_eq!(f1.n(), 1);
        assert_eq!(f1.leaf_set(END).unwrap(), &[0]);
        let a = build_line_family(&pm0, LineVariant::A { m1: 1, m2: 1 }, 3, &key(14), SizeCap::default()).unwrap();
        assert_eq!(a.n(), 3);
        assert_eq!(a.root(), 1);
        a.validate().unwrap();
        let pm1 = OffspringDistribution::point_mass(1);
        let f3 = build_line_family(&pm1, LineVariant::F { m: 3 }, 2, &key(15), SizeCap::default()).unwrap();
        // trees of depth 2 (3 vertices each) at v1, v2
        assert_eq!(f3.n(), 3 + 2 * 2);
        f3.validate().unwrap();
    }

    #[test]
    fn cover_m4_and_m2() {
        let pm1 = OffspringDistribution::point_mass(1);
        let h = sample_gwc1(&pm1, 4, 1, &key(16), SizeCap::default()).unwrap();
        let c = h.cycle().unwrap().to_vec();
        let (a1, a2) = cover_of_unicyclic(&h).unwrap();
        let o1 = a1.origin().unwrap();
        let o2 = a2.origin().unwrap();
        // A1 endpoints v3, v3~ ; A2 endpoints v1, v1~
        assert_eq!((o1[0], o1[4]), (c[2], c[2]));
        assert_eq!((o2[0], o2[4]), (c[0], c[0]));
        assert_eq!(o1[a1.root()], c[0]);
        assert_eq!(o2[a2.root()], c[2]);
        a1.validate().unwrap();
        a2.validate().unwrap();
        // every tree has 2 vertices; A1 drops v3's tree, A2 drops v1's
        assert_eq!(a1.n(), h.n() + 1 - 1);
        assert_eq!(a2.n(), h.n() + 1 - 1);

        let h2 = sample_gwc1(&pm1, 2, 1, &key(17), SizeCap::default()).unwrap();
        let (b1, _) = cover_of_unicyclic(&h2).unwrap();
        let c2 = h2.cycle().unwrap();
        let o = b1.origin().unwrap();
        assert_eq!(&o[..3], &[c2[1], c2[0], c2[1]]);
        assert_eq!(b1.n(), 4);
        assert_eq!(b1.degree(0), 1);
        assert_eq!(b1.degree(2), 1);
    }
}
