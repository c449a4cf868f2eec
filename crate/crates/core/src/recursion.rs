//! Recursive inequalities for excursion times, survival times and infection counts, checked against exact values.

use std::fmt;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::distributions::OffspringDistribution;
use crate::error::{Error, Result};
use crate::exact::{analyze, ExactResult};
use crate::graph::{build_line_family, GraphKind, LineVariant, RootedGraph, SizeCap, END};
use crate::seed::StreamKey;

/// Slack allowed on `lhs <= rhs`.
pub const SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Inequality {
    /// S ≤ ∏(1 + λ S_i)
    SProduct,
    /// R ≤ (1 + λ ΣR_i) / (1 − λ² ΣR_i) when λ² ΣR_i < 1
    RRecursion,
    /// S / (1 + λ S) ≤ R
    SVsR,
    /// S ≤ (1 + λ ΣS_i) / (1 − λ − 2λ² ΣS_i) when λ + 2λ² ΣS_i < 1
    CombinedTypical,
    /// Mˡ ≤ λ Σ_i Mˡ⁻¹(T_i) ∏_{j≠i} (1 + λ S_j)
    MProduct,
    /// M̄ˡ ≤ λ Σ M̄ˡ⁻¹(T_i) / (1 − λ² ΣR_i) when λ² ΣR_i < 1
    MbarRecursion,
    /// Mˡ ≤ (1 + λ S) M̄ˡ
    MVsMbar,
    /// B ≤ λ B(F) / (1 − λ − 2λ²(S(F) + ΣS_i)) when λ + 2λ²(S(F) + ΣS_i) < 1
    BTypical,
    /// B ≤ λ B(F) ∏(1 + λ S_i)
    BAtypical,
}

impl Inequality {
    pub fn guarded(self) -> bool {
        matches!(self, Inequality::RRecursion | Inequality::CombinedTypical | Inequality::MbarRecursion | Inequality::BTypical)
    }
}

impl fmt::Display for Inequality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Inequality::SProduct => "S_product",
            Inequality::RRecursion => "R_recursion",
            Inequality::SVsR => "S_vs_R",
            Inequality::CombinedTypical => "S_typical",
            Inequality::MProduct => "M_product",
            Inequality::MbarRecursion => "Mbar_recursion",
            Inequality::MVsMbar => "M_vs_Mbar",
            Inequality::BTypical => "B_typical",
            Inequality::BAtypical => "B_atypical",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecursionReport {
    pub instance: String,
    pub inequality: Inequality,
    pub lambda: f64,
    pub l: Option<usize>,
    pub lhs: f64,
    pub rhs: f64,
    /// False only when a guarded inequality's precondition fails (the row is vacuous).
    pub precondition_held: bool,
    pub satisfied: bool,
    pub margin: f64,
}

impl RecursionReport {
    fn new(instance: &str, inequality: Inequality, lambda: f64, l: Option<usize>, lhs: f64, rhs: f64, precondition_held: bool) -> Self {
        let satisfied = !precondition_held || lhs <= rhs + SLACK;
        let margin = if precondition_held { rhs - lhs } else { f64::NAN };
        Self { instance: instance.to_string(), inequality, lambda, l, lhs, rhs, precondition_held, satisfied, margin }
    }

    pub fn guarded(&self) -> bool {
        self.inequality.guarded()
    }

    pub fn csv_header() -> &'static str {
        "instance,inequality,lambda,l,lhs,rhs,margin,guard,satisfied"
    }

    pub fn csv_row(&self) -> String {
        let guard = match (self.guarded(), self.precondition_held) {
            (false, _) => "none",
            (true, true) => "held",
            (true, false) => "vacuous",
        };
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.instance,
            self.inequality,
            fmt12(self.lambda),
            self.l.map(|l| l.to_string()).unwrap_or_default(),
            fmt12(self.lhs),
            fmt12(self.rhs),
            fmt12(self.margin),
            guard,
            self.satisfied
        )
    }
}

/// Fixed 12-significant-digit formatting used in every emitted table.
pub fn fmt12(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:.11e}")
    }
}

/// Exact values of a tree and of the subtrees hanging off its root.
struct Values {
    whole: ExactResult,
    subs: Vec<ExactResult>,
}

fn values(tree: &RootedGraph, lambda: f64, max_l: usize) -> Result<Values> {
    if !tree.is_tree() {
        return Err(Error::Graph(format!("{} graph is not a tree", tree.kind())));
    }
    let whole = analyze(tree, lambda, max_l)?;
    let subs = tree.root_subtrees().iter().map(|t| analyze(t, lambda, max_l)).collect::<Result<_>>()?;
    Ok(Values { whole, subs })
}

fn s_rows(id: &str, lambda: f64, v: &Values) -> Vec<RecursionReport> {
    let s = v.whole.s;
    let r = v.whole.r;
    let sum_s: f64 = v.subs.iter().map(|t| t.s).sum();
    let sum_r: f64 = v.subs.iter().map(|t| t.r).sum();
    let prod: f64 = v.subs.iter().map(|t| 1.0 + lambda * t.s).product();
    let l2 = lambda * lambda;
    let r_guard = l2 * sum_r < 1.0;
    let typ_guard = lambda + 2.0 * l2 * sum_s < 1.0;
    vec![
        RecursionReport::new(id, Inequality::SProduct, lambda, None, s, prod, true),
        RecursionReport::new(id, Inequality::RRecursion, lambda, None, r, (1.0 + lambda * sum_r) / (1.0 - l2 * sum_r), r_guard),
        RecursionReport::new(id, Inequality::SVsR, lambda, None, s / (1.0 + lambda * s), r, true),
        RecursionReport::new(id, Inequality::CombinedTypical, lambda, None, s, (1.0 + lambda * sum_s) / (1.0 - lambda - 2.0 * l2 * sum_s), typ_guard),
    ]
}

fn m_rows(id: &str, lambda: f64, l: usize, v: &Values) -> Vec<RecursionReport> {
    let factors: Vec<f64> = v.subs.iter().map(|t| 1.0 + lambda * t.s).collect();
    let rhs_m: f64 = v
        .subs
        .iter()
        .enumerate()
        .map(|(i, t)| lambda * t.m[l - 1] * factors.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, f)| f).product::<f64>())
        .sum();
    let sum_r: f64 = v.subs.iter().map(|t| t.r).sum();
    let l2 = lambda * lambda;
    let rhs_mbar = lambda * v.subs.iter().map(|t| t.mbar[l - 1]).sum::<f64>() / (1.0 - l2 * sum_r);
    let w = &v.whole;
    vec![
        RecursionReport::new(id, Inequality::MProduct, lambda, Some(l), w.m[l], rhs_m, true),
        RecursionReport::new(id, Inequality::MbarRecursion, lambda, Some(l), w.mbar[l], rhs_mbar, l2 * sum_r < 1.0),
        RecursionReport::new(id, Inequality::MVsMbar, lambda, Some(l), w.m[l], (1.0 + lambda * w.s) * w.mbar[l], true),
    ]
}

fn single(rows: Vec<RecursionReport>, which: Inequality) -> RecursionReport {
    rows.into_iter().find(|r| r.inequality == which).expect("row produced")
}

pub fn check_s_product(id: &str, tree: &RootedGraph, lambda: f64) -> Result<RecursionReport> {
    Ok(single(s_rows(id, lambda, &values(tree, lambda, 0)?), Inequality::SProduct))
}

pub fn check_r_recursion(id: &str, tree: &RootedGraph, lambda: f64) -> Result<RecursionReport> {
    Ok(single(s_rows(id, lambda, &values(tree, lambda, 0)?), Inequality::RRecursion))
}

pub fn check_s_vs_r(id: &str, tree: &RootedGraph, lambda: f64) -> Result<RecursionReport> {
    Ok(single(s_rows(id, lambda, &values(tree, lambda, 0)?), Inequality::SVsR))
}

pub fn check_combined_typical(id: &str, tree: &RootedGraph, lambda: f64) -> Result<RecursionReport> {
    Ok(single(s_rows(id, lambda, &values(tree, lambda, 0)?), Inequality::CombinedTypical))
}

fn check_level(l: usize) -> Result<()> {
    if l == 0 {
        return Err(Error::InvalidArgument("the depth recursions start at l = 1".into()));
    }
    Ok(())
}

pub fn check_m_product(id: &str, tree: &RootedGraph, lambda: f64, l: usize) -> Result<RecursionReport> {
    check_level(l)?;
    Ok(single(m_rows(id, lambda, l, &values(tree, lambda, l)?), Inequality::MProduct))
}

pub fn check_mbar_recursion(id: &str, tree: &RootedGraph, lambda: f64, l: usize) -> Result<RecursionReport> {
    check_level(l)?;
    Ok(single(m_rows(id, lambda, l, &values(tree, lambda, l)?), Inequality::MbarRecursion))
}

pub fn check_m_vs_mbar(id: &str, tree: &RootedGraph, lambda: f64, l: usize) -> Result<RecursionReport> {
    check_level(l)?;
    Ok(single(m_rows(id, lambda, l, &values(tree, lambda, l)?), Inequality::MVsMbar))
}

/// All tree inequalities for one tree at one λ and the given depths.
pub fn check_tree(id: &str, tree: &RootedGraph, lambda: f64, levels: &[usize]) -> Result<Vec<RecursionReport>> {
    for &l in levels {
        check_level(l)?;
    }
    let v = values(tree, lambda, levels.iter().copied().max().unwrap_or(0))?;
    let mut rows = s_rows(id, lambda, &v);
    for &l in levels {
        rows.extend(m_rows(id, lambda, l, &v));
    }
    Ok(rows)
}

/// Both end-count recursions for a line graph with at least two line vertices, split at the root into the
/// tail line `F` (the child whose subtree holds the end) and the hanging trees.
pub fn check_b_recursions(id: &str, line: &RootedGraph, lambda: f64) -> Result<[RecursionReport; 2]> {
    if line.kind() != GraphKind::LineF {
        return Err(Error::Graph(format!("expected a line-F graph, got {}", line.kind())));
    }
    let ends = line.leaf_set(END).unwrap_or(&[]);
    if ends.contains(&line.root()) {
        return Err(Error::InvalidArgument("the end recursions start at m = 2".into()));
    }
    let subs = line.root_subtrees();
    let (tail, trees): (Vec<_>, Vec<_>) = subs.into_iter().partition(|t| t.leaf_set(END).is_some_and(|e| !e.is_empty()));
    let [tail] = <[RootedGraph; 1]>::try_from(tail).map_err(|_| Error::Graph("end must lie in exactly one root subtree".into()))?;
    let tail = RootedGraph::new(tail.n(), tail.edges().to_vec(), 0, GraphKind::LineF)?.with_leaf_set(END, tail.leaf_set(END).expect("checked").to_vec());
    let whole = analyze(line, lambda, 0)?;
    let f = analyze(&tail, lambda, 0)?;
    let sub: Vec<ExactResult> = trees.iter().map(|t| analyze(t, lambda, 0)).collect::<Result<_>>()?;
    let b = whole.b.expect("line graph has an end set");
    let bf = f.b.expect("tail keeps the end set");
    let sum_s = f.s + sub.iter().map(|t| t.s).sum::<f64>();
    let l2 = lambda * lambda;
    let guard = lambda + 2.0 * l2 * sum_s < 1.0;
    let prod: f64 = sub.iter().map(|t| 1.0 + lambda * t.s).product();
    Ok([
        RecursionReport::new(id, Inequality::BTypical, lambda, None, b, lambda * bf / (1.0 - lambda - 2.0 * l2 * sum_s), guard),
        RecursionReport::new(id, Inequality::BAtypical, lambda, None, b, lambda * bf * prod, true),
    ])
}

/// Certified upper bound on S: leaves get 1, and each vertex takes the smaller of the product bound and the
/// typical bound (when its guard holds) with the children's bounds substituted.
pub fn recursive_bound_calculator(tree: &RootedGraph, lambda: f64) -> f64 {
    let n = tree.n();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&v| std::cmp::Reverse(tree.depth_of(v)));
    let mut bound = vec![1.0; n];
    for v in order {
        let kids = tree.children(v);
        if kids.is_empty() {
            continue;
        }
        let sum: f64 = kids.iter().map(|&c| bound[c]).sum();
        let prod: f64 = kids.iter().map(|&c| 1.0 + lambda * bound[c]).product();
        let denom = 1.0 - lambda - 2.0 * lambda * lambda * sum;
        bound[v] = if denom > 0.0 { prod.min((1.0 + lambda * sum) / denom) } else { prod };
    }
    bound[tree.root()]
}

/// Offspring laws cycled through the random panel: bushy, binary, path-like and mixed.
pub fn panel_laws() -> Vec<OffspringDistribution> {
    [
        (vec![(0, 0.6), (3, 0.4)], "two-point(0,3)"),
        (vec![(0, 0.5), (3, 0.5)], "two-point(0,3,0.5)"),
        (vec![(0, 0.45), (2, 0.55)], "two-point(0,2)"),
        (vec![(0, 0.25), (1, 0.75)], "two-point(0,1)"),
        (vec![(0, 0.4), (1, 0.2), (2, 0.2), (3, 0.2)], "mixed(0..3)"),
    ]
    .into_iter()
    .map(|(p, l)| OffspringDistribution::from_pairs(&p, l).expect("valid panel law"))
    .collect()
}

pub const PANEL_MIN: usize = 2;
pub const PANEL_MAX: usize = 12;
const PANEL_ATTEMPTS: usize = 100_000;

/// A GW tree with `lo <= |V| <= hi`, by rejection.
pub fn sample_small_tree(dist: &OffspringDistribution, lo: usize, hi: usize, seed: &StreamKey) -> Result<RootedGraph> {
    let mut rng = seed.rng();
    'attempt: for _ in 0..PANEL_ATTEMPTS {
        let mut edges = Vec::new();
        let mut n = 1;
        let mut frontier = vec![0usize];
        while let Some(v) = frontier.pop() {
            let k = dist.sample(&mut rng);
            for _ in 0..k {
                if n == hi {
                    continue 'attempt;
                }
                edges.push((v, n));
                frontier.insert(0, n);
                n += 1;
            }
        }
        if n >= lo {
            return RootedGraph::new(n, edges, 0, GraphKind::GwTree);
        }
    }
    Err(Error::Rejection(format!("no tree with {lo} <= |V| <= {hi} in {PANEL_ATTEMPTS} attempts")))
}

/// The random tree panel: `count` trees, laws cycled, one derived stream per instance.
pub fn tree_panel(seed: &StreamKey, count: usize) -> Result<Vec<(String, RootedGraph)>> {
    let laws = panel_laws();
    (0..count)
        .map(|i| {
            let law = &laws[i % laws.len()];
            let t = sample_small_tree(law, PANEL_MIN, PANEL_MAX, &seed.child("tree").child(i as u64))?;
            Ok((format!("tree-{i}"), t))
        })
        .collect()
}

/// Line-F panel: m ∈ {2, 3}, hanging trees of depth ≤ 1, total size within the exact cap.
pub fn line_panel(seed: &StreamKey, count: usize) -> Result<Vec<(String, RootedGraph)>> {
    let law = OffspringDistribution::from_pairs(&[(0, 0.4), (1, 0.3), (2, 0.2), (3, 0.1)], "line-panel")?;
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let m = 2 + i % 2;
        let depth = (i / 2) % 2;
        let key = seed.child("line").child(i as u64);
        let mut attempt = 0u64;
        let g = loop {
            let g = build_line_family(&law, LineVariant::F { m }, depth, &key.child(attempt), SizeCap::default())?;
            if g.n() <= PANEL_MAX {
                break g;
            }
            attempt += 1;
        };
        out.push((format!("F{m}-{i}"), g));
    }
    Ok(out)
}

pub const SWEEP_LAMBDAS: [f64; 4] = [0.1, 0.5, 1.0, 2.0];
pub const SWEEP_LEVELS: [usize; 2] = [1, 2];

#[derive(Debug, Clone, Serialize)]
pub struct SweepSummary {
    pub rows: usize,
    pub violations: usize,
    pub guarded_rows: usize,
    pub guarded_active: usize,
    /// Fraction of guarded rows whose precondition held.
    pub guard_active_fraction: f64,
    /// Vacuous fraction per guarded inequality.
    pub vacuous_by_inequality: Vec<(Inequality, f64)>,
}

pub fn summarize(rows: &[RecursionReport]) -> SweepSummary {
    let guarded: Vec<&RecursionReport> = rows.iter().filter(|r| r.guarded()).collect();
    let active = guarded.iter().filter(|r| r.precondition_held).count();
    let mut kinds: Vec<Inequality> = guarded.iter().map(|r| r.inequality).collect();
    kinds.sort();
    kinds.dedup();
    let vacuous_by_inequality = kinds
        .into_iter()
        .map(|k| {
            let of: Vec<_> = guarded.iter().filter(|r| r.inequality == k).collect();
            (k, of.iter().filter(|r| !r.precondition_held).count() as f64 / of.len() as f64)
        })
        .collect();
    SweepSummary {
        rows: rows.len(),
        violations: rows.iter().filter(|r| !r.satisfied).count(),
        guarded_rows: guarded.len(),
        guarded_active: active,
        guard_active_fraction: if guarded.is_empty() { 0.0 } else { active as f64 / guarded.len() as f64 },
        vacuous_by_inequality,
    }
}

/// Every tree and line inequality over the panels and λ grid. Rows come back in panel order.
pub fn run_sweep(trees: &[(String, RootedGraph)], lines: &[(String, RootedGraph)], lambdas: &[f64], levels: &[usize]) -> Result<Vec<RecursionReport>> {
    let jobs: Vec<(&String, &RootedGraph, f64, bool)> = trees
        .iter()
        .flat_map(|(id, g)| lambdas.iter().map(move |&l| (id, g, l, true)))
        .chain(lines.iter().flat_map(|(id, g)| lambdas.iter().map(move |&l| (id, g, l, false))))
        .collect();
    let parts: Vec<Result<Vec<RecursionReport>>> = jobs
        .par_iter()
        .map(|&(id, g, lambda, is_tree)| {
            if is_tree {
                check_tree(id, g, lambda, levels)
            } else {
                check_b_recursions(id, g, lambda).map(|r| r.to_vec())
            }
        })
        .collect();
    let mut rows = Vec::new();
    for p in parts {
        rows.extend(p?);
    }
    Ok(rows)
}

pub fn sweep_csv(rows: &[RecursionReport]) -> String {
    let mut s = String::from(RecursionReport::csv_header());
    s.push('\n');
    for r in rows {
        s.push_str(&r.csv_row());
        s.push('\n');
    }
    s
}

/// Draws a sample from the panel's laws; exposed for property tests.
pub fn random_panel_tree<R: Rng>(rng: &mut R, seed: &StreamKey) -> Result<RootedGraph> {
    let laws = panel_laws();
    let law = &laws[rng.random_range(0..laws.len())];
    sample_small_tree(law, 1, PANEL_MAX, &seed.child(rng.random::<u64>()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::expected_excursion_time;
    use crate::seed::derive_seed;

    fn tree(n: usize, edges: Vec<(usize, usize)>) -> RootedGraph {
        RootedGraph::new(n, edges, 0, GraphKind::GwTree).unwrap()
    }

    #[test]
    fn single_vertex_equalities() {
        let g = tree(1, vec![]);
        let s = check_s_product("single", &g, 1.0).unwrap();
        assert_eq!((s.lhs, s.rhs), (1.0, 1.0));
        let r = check_r_recursion("single", &g, 1.0).unwrap();
        assert_eq!((r.lhs, r.rhs), (1.0, 1.0));
        let v = check_s_vs_r("single", &g, 1.0).unwrap();
        assert_eq!((v.lhs, v.rhs), (0.5, 1.0));
        let t = check_combined_typical("single", &g, 0.5).unwrap();
        assert!(t.precondition_held && (t.rhs - 2.0).abs() < 1e-15);
    }

    #[test]
    fn edge_values() {
        let g = tree(2, vec![(0, 1)]);
        let s = check_s_product("edge", &g, 1.0).unwrap();
        assert!((s.lhs - 1.6).abs() < 1e-12 && (s.rhs - 2.0).abs() < 1e-12);
        let r = check_r_recursion("edge", &g, 1.0).unwrap();
        assert!(!r.precondition_held && r.satisfied);
        let r = check_r_recursion("edge", &g, 0.5).unwrap();
        assert!((r.lhs - 1.25).abs() < 1e-12 && (r.rhs - 2.0).abs() < 1e-12 && r.satisfied);
        let v = check_s_vs_r("edge", &g, 1.0).unwrap();
        assert!((v.lhs - 1.6 / 2.6).abs() < 1e-12);
        let m = check_m_product("edge", &g, 1.0, 1).unwrap();
        assert!((m.rhs - 1.0).abs() < 1e-12 && m.lhs <= 1.0);
        assert!(check_m_product("edge", &g, 1.0, 0).is_err());
        let t = check_combined_typical("edge", &g, 0.2).unwrap();
        assert!(t.precondition_held && t.satisfied);
    }

    #[test]
    fn zero_lambda_counts() {
        let g = tree(3, vec![(0, 1), (0, 2)]);
        for r in [check_mbar_recursion("z", &g, 0.0, 1).unwrap(), check_m_vs_mbar("z", &g, 0.0, 1).unwrap()] {
            assert_eq!((r.lhs, r.rhs), (0.0, 0.0));
        }
    }

    #[test]
    fn b_recursions_on_bare_path() {
        let law = OffspringDistribution::point_mass(0);
        let g = build_line_family(&law, LineVariant::F { m: 2 }, 1, &derive_seed(1, &["b".into()]), SizeCap::default()).unwrap();
        let [t, a] = check_b_recursions("F2", &g, 0.5).unwrap();
        // the tail is a single end vertex (B = 1, S = 1); guard 0.5 + 0.5 = 1 fails
        assert!(!t.precondition_held);
        assert!((a.rhs - 0.5).abs() < 1e-12 && a.satisfied);
        let [t, _] = check_b_recursions("F2", &g, 0.2).unwrap();
        assert!(t.precondition_held && t.satisfied);
    }

    #[test]
    fn bound_calculator_examples() {
        assert_eq!(recursive_bound_calculator(&tree(1, vec![]), 1.0), 1.0);
        let edge = tree(2, vec![(0, 1)]);
        assert_eq!(recursive_bound_calculator(&edge, 1.0), 2.0);
        assert!(recursive_bound_calculator(&edge, 1.0) >= expected_excursion_time(&edge, 1.0).unwrap().value);
    }

    #[test]
    fn panel_is_reproducible_and_in_range() {
        let seed = derive_seed(7, &["panel".into()]);
        let a = tree_panel(&seed, 30).unwrap();
        let b = tree_panel(&seed, 30).unwrap();
        for ((_, x), (_, y)) in a.iter().zip(&b) {
            assert_eq!(x.edges(), y.edges());
            assert!((PANEL_MIN..=PANEL_MAX).contains(&x.n()));
        }
        assert!(a.iter().any(|(_, t)| (0..t.n()).all(|v| t.children(v).len() <= 1)), "panel has a path");
    }

    #[test]
    fn small_sweep_has_no_violations() {
        let seed = derive_seed(7, &["sweep".into()]);
        let trees = tree_panel(&seed, 10).unwrap();
        let lines = line_panel(&seed, 4).unwrap();
        let rows = run_sweep(&trees, &lines, &SWEEP_LAMBDAS, &SWEEP_LEVELS).unwrap();
        let s = summarize(&rows);
        assert_eq!(s.violations, 0, "{}", sweep_csv(&rows));
        assert!(s.guarded_active > 0);
    }
}
