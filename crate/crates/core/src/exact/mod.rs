//! Exact expectations on small graphs from the full chain on {0,1}^V.
//!
//! Hitting times solve `A h = 1` and occupation measures solve `Aᵀ n = e_x`, where `A` is the negated
//! generator on the nonzero states. Expected flip counts are occupation times weighted by the flip rate.

mod chain;
pub mod linalg;

use std::collections::BTreeMap;

use serde::Serialize;

pub use chain::{Chain, ChainSpec, MAX_VERTICES};

use crate::error::{Error, Result};
use crate::graph::{RootedGraph, END};
use crate::sim::{CountVariant, Mode};

/// An exact value with the relative residual of the solve that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Value {
    pub value: f64,
    pub residual: f64,
}

impl Value {
    fn exact(value: f64) -> Self {
        Self { value, residual: 0.0 }
    }
}

fn root_state(g: &RootedGraph) -> usize {
    1 << g.root()
}

fn hitting_from_root(g: &RootedGraph, lambda: f64, mode: Mode) -> Result<Value> {
    let mut c = Chain::build(ChainSpec::from_graph(g, lambda, mode)?)?;
    let h = c.hitting_times()?;
    Ok(Value { value: h.x[root_state(g) - 1], residual: h.residual })
}

/// Expected absorption time of the plain process from the root alone.
pub fn expected_survival_time(g: &RootedGraph, lambda: f64) -> Result<Value> {
    hitting_from_root(g, lambda, Mode::Plain)
}

/// Expected time for the root-added process from the root alone to first empty the graph.
pub fn expected_excursion_time(g: &RootedGraph, lambda: f64) -> Result<Value> {
    hitting_from_root(g, lambda, Mode::RootAdded)
}

/// Stationary mass of the empty state for the root-added chain, from the balance equations
/// `Aᵀ π_T = q₀ π(0)` on the nonzero states.
pub fn stationary_at_zero(g: &RootedGraph, lambda: f64) -> Result<Value> {
    let spec = ChainSpec::from_graph(g, lambda, Mode::RootAdded)?;
    let mut c = Chain::build(spec.clone())?;
    let mut q0 = vec![0.0; c.states()];
    for (y, rate) in spec.transitions(0) {
        q0[y - 1] += rate;
    }
    let s = c.solve_transpose(&q0)?;
    let mass: f64 = s.x.iter().sum();
    Ok(Value { value: 1.0 / (1.0 + mass), residual: s.residual })
}

/// Expected number of 0 to 1 flips at each marked vertex, starting from the root alone and stopping at the
/// empty state. The initial infection is not a flip here.
pub fn expected_transition_counts(g: &RootedGraph, lambda: f64, mode: Mode, marks: &[usize]) -> Result<(Vec<f64>, f64)> {
    if let Some(&w) = marks.iter().find(|&&w| w >= g.n()) {
        return Err(Error::InvalidArgument(format!("mark {w} outside 0..{}", g.n())));
    }
    let mut c = Chain::build(ChainSpec::from_graph(g, lambda, mode)?)?;
    let occ = c.occupation(root_state(g))?;
    Ok((marks.iter().map(|&w| c.marked_count(&occ.x, w)).collect(), occ.residual))
}

/// Expected infections at depth-`l` vertices, the initial one included; 0 when the graph has no such vertex.
pub fn expected_leaf_infections(g: &RootedGraph, lambda: f64, l: usize, variant: CountVariant) -> Result<Value> {
    if l > g.max_depth() {
        return Ok(Value::exact(0.0));
    }
    if g.n() == 1 {
        return Ok(Value::exact(1.0));
    }
    let marks = g.level(l);
    let mode = match variant {
        CountVariant::Excursion => Mode::RootAdded,
        CountVariant::Plain => Mode::Plain,
    };
    let (counts, residual) = expected_transition_counts(g, lambda, mode, &marks)?;
    let initial = if l == 0 { 1.0 } else { 0.0 };
    Ok(Value { value: initial + counts.iter().sum::<f64>(), residual })
}

/// Expected infections at the end set during one excursion, the initial one included when the root is an end.
pub fn expected_end_infections(g: &RootedGraph, lambda: f64) -> Result<Value> {
    let ends = g.leaf_set(END).ok_or_else(|| Error::Graph(format!("{} graph has no end set", g.kind())))?.to_vec();
    if ends.is_empty() {
        return Err(Error::Graph("empty end set".into()));
    }
    let (counts, residual) = expected_transition_counts(g, lambda, Mode::RootAdded, &ends)?;
    let initial = if ends.contains(&g.root()) { 1.0 } else { 0.0 };
    Ok(Value { value: initial + counts.iter().sum::<f64>(), residual })
}

#[derive(Debug, Clone, Serialize)]
pub struct ProductExcursion {
    /// Hitting time of the all-healthy state from the root of tree i alone.
    pub per_tree: Vec<f64>,
    pub mean: f64,
    /// |1 + λ D S^⊗ − ∏(1 + λ S(T_i))|
    pub identity_error: f64,
    pub residual: f64,
}

pub const PRODUCT_IDENTITY_TOL: f64 = 1e-8;

/// Excursions of the product of root-added chains on the given trees.
pub fn product_chain_excursion(trees: &[RootedGraph], lambda: f64) -> Result<ProductExcursion> {
    if trees.is_empty() {
        return Err(Error::InvalidArgument("product chain needs at least one tree".into()));
    }
    let (spec, roots) = ChainSpec::forest(trees, lambda)?;
    let mut c = Chain::build(spec)?;
    let h = c.hitting_times()?;
    let per_tree: Vec<f64> = roots.iter().map(|&r| h.x[(1 << r) - 1]).collect();
    let mean = per_tree.iter().sum::<f64>() / per_tree.len() as f64;
    let mut product = 1.0;
    let mut residual = h.residual;
    for t in trees {
        let s = expected_excursion_time(t, lambda)?;
        residual = residual.max(s.residual);
        product *= 1.0 + lambda * s.value;
    }
    let identity_error = (1.0 + lambda * trees.len() as f64 * mean - product).abs();
    if identity_error > PRODUCT_IDENTITY_TOL * product {
        return Err(Error::Solver(format!("product identity off by {identity_error:.3e}")));
    }
    Ok(ProductExcursion { per_tree, mean, identity_error, residual })
}

/// Everything computable for one graph at one λ.
#[derive(Debug, Clone, Serialize)]
pub struct ExactResult {
    pub vertices: usize,
    pub lambda: f64,
    #[serde(rename = "R")]
    pub r: f64,
    #[serde(rename = "S")]
    pub s: f64,
    pub pi0: f64,
    /// Excursion counts at depth l, indexed by l.
    #[serde(rename = "M")]
    pub m: Vec<f64>,
    /// Plain-run counts at depth l, indexed by l.
    #[serde(rename = "Mbar")]
    pub mbar: Vec<f64>,
    #[serde(rename = "B")]
    pub b: Option<f64>,
    pub residuals: BTreeMap<String, f64>,
}

/// Solves both chains once and reads off every observable, for depths `0..=max_l`.
pub fn analyze(g: &RootedGraph, lambda: f64, max_l: usize) -> Result<ExactResult> {
    let root = root_state(g);
    let mut residuals = BTreeMap::new();
    let levels: Vec<Vec<usize>> = (0..=max_l).map(|l| g.level(l)).collect();
    let counts = |c: &Chain, occ: &[f64]| -> Vec<f64> {
        levels
            .iter()
            .enumerate()
            .map(|(l, marks)| {
                if marks.is_empty() {
                    0.0
                } else if g.n() == 1 {
                    1.0
                } else {
                    (l == 0) as u8 as f64 + marks.iter().map(|&w| c.marked_count(occ, w)).sum::<f64>()
                }
            })
            .collect()
    };

    let plain = ChainSpec::from_graph(g, lambda, Mode::Plain)?;
    let mut c = Chain::build(plain)?;
    let h = c.hitting_times()?;
    residuals.insert("R".into(), h.residual);
    let r = h.x[root - 1];
    let occ = c.occupation(root)?;
    residuals.insert("Mbar".into(), occ.residual);
    let mbar = counts(&c, &occ.x);

    let added = ChainSpec::from_graph(g, lambda, Mode::RootAdded)?;
    let mut c = Chain::build(added.clone())?;
    let h = c.hitting_times()?;
    residuals.insert("S".into(), h.residual);
    let s = h.x[root - 1];
    let occ = c.occupation(root)?;
    residuals.insert("M".into(), occ.residual);
    let m = counts(&c, &occ.x);
    let b = match g.leaf_set(END) {
        Some(ends) if !ends.is_empty() => {
            let initial = if ends.contains(&g.root()) { 1.0 } else { 0.0 };
            Some(initial + ends.iter().map(|&w| c.marked_count(&occ.x, w)).sum::<f64>())
        }
        _ => None,
    };
    let mut q0 = vec![0.0; c.states()];
    for (y, rate) in added.transitions(0) {
        q0[y - 1] += rate;
    }
    let pi = c.solve_transpose(&q0)?;
    residuals.insert("pi0".into(), pi.residual);
    let pi0 = 1.0 / (1.0 + pi.x.iter().sum::<f64>());

    Ok(ExactResult { vertices: g.n(), lambda, r, s, pi0, m, mbar, b, residuals })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::GraphKind;

    fn tree(n: usize, edges: Vec<(usize, usize)>) -> RootedGraph {
        RootedGraph::new(n, edges, 0, GraphKind::GwTree).unwrap()
    }

    #[test]
    fn single_vertex() {
        let g = tree(1, vec![]);
        assert_eq!(expected_survival_time(&g, 1.0).unwrap().value, 1.0);
        assert_eq!(expected_excursion_time(&g, 1.0).unwrap().value, 1.0);
        assert!((stationary_at_zero(&g, 1.0).unwrap().value - 0.5).abs() < 1e-15);
    }

    #[test]
    fn edge_closed_forms() {
        let g = tree(2, vec![(0, 1)]);
        for lambda in [0.1, 1.0, 2.0] {
            let r = expected_survival_time(&g, lambda).unwrap();
            assert!((r.value - (1.0 + lambda / 2.0)).abs() < 1e-12);
        }
        assert!((expected_excursion_time(&g, 1.0).unwrap().value - 1.6).abs() < 1e-12);
        assert!((stationary_at_zero(&g, 1.0).unwrap().value - 1.0 / 2.6).abs() < 1e-12);
    }

    #[test]
    fn path3_and_star2_by_hand() {
        // star with two leaves, plain, lambda = 1: states by (root, a, b) infected sets
        // solved independently as a 7x7 dense system written out from the transition rules
        let lambda = 1.0;
        let states: Vec<usize> = (1..8).collect();
        let adj = |v: usize| -> Vec<usize> { if v == 0 { vec![1, 2] } else { vec![0] } };
        let mut a = nalgebra::DMatrix::<f64>::zeros(7, 7);
        for (i, &x) in states.iter().enumerate() {
            for v in 0..3 {
                let bit = 1 << v;
                let (y, rate) = if x & bit != 0 { (x ^ bit, 1.0) } else { (x | bit, lambda * adj(v).iter().filter(|&&u| x >> u & 1 == 1).count() as f64) };
                a[(i, i)] += rate;
                if y != 0 && rate > 0.0 {
                    a[(i, y - 1)] -= rate;
                }
            }
        }
        let h = a.lu().solve(&nalgebra::DVector::from_element(7, 1.0)).unwrap();
        let star = tree(3, vec![(0, 1), (0, 2)]);
        assert!((expected_survival_time(&star, lambda).unwrap().value - h[0]).abs() < 1e-12);

        // path 0-1-2 rooted at an end, plain, lambda = 1: R from the same construction
        let adjp = |v: usize| -> Vec<usize> { match v { 0 => vec![1], 1 => vec![0, 2], _ => vec![1] } };
        let mut a = nalgebra::DMatrix::<f64>::zeros(7, 7);
        for (i, &x) in states.iter().enumerate() {
            for v in 0..3 {
                let bit = 1 << v;
                let (y, rate) = if x & bit != 0 { (x ^ bit, 1.0) } else { (x | bit, lambda * adjp(v).iter().filter(|&&u| x >> u & 1 == 1).count() as f64) };
                a[(i, i)] += rate;
                if y != 0 && rate > 0.0 {
                    a[(i, y - 1)] -= rate;
                }
            }
        }
        let h = a.lu().solve(&nalgebra::DVector::from_element(7, 1.0)).unwrap();
        let path = tree(3, vec![(0, 1), (1, 2)]);
        assert!((expected_survival_time(&path, lambda).unwrap().value - h[0]).abs() < 1e-12);
    }

    #[test]
    fn count_conventions() {
        let single = tree(1, vec![]);
        assert_eq!(expected_leaf_infections(&single, 1.0, 0, CountVariant::Excursion).unwrap().value, 1.0);
        assert_eq!(expected_leaf_infections(&single, 1.0, 1, CountVariant::Excursion).unwrap().value, 0.0);
        let edge = tree(2, vec![(0, 1)]);
        assert_eq!(expected_leaf_infections(&edge, 0.0, 1, CountVariant::Excursion).unwrap().value, 0.0);
        let (c, _) = expected_transition_counts(&edge, 0.0, Mode::Plain, &[0]).unwrap();
        assert_eq!(c[0], 0.0);
    }

    #[test]
    fn edge_leaf_count_by_hand() {
        // excursion on the edge: occupation times t1 (root only), t2 (leaf only), t3 (both) from the root
        // t = e1 · A^{-1}; the leaf is infected from state {root} at rate lambda, the root from {leaf} at 2 lambda
        let lambda: f64 = 1.0;
        let a = nalgebra::Matrix3::new(1.0 + lambda, 0.0, -lambda, 0.0, 1.0 + 2.0 * lambda, -2.0 * lambda, -1.0, -1.0, 2.0);
        let occ = a.transpose().lu().solve(&nalgebra::Vector3::new(1.0, 0.0, 0.0)).unwrap();
        let m1 = lambda * occ[0];
        let edge = tree(2, vec![(0, 1)]);
        assert!((expected_leaf_infections(&edge, lambda, 1, CountVariant::Excursion).unwrap().value - m1).abs() < 1e-12);
        assert!((occ.iter().sum::<f64>() - 1.6).abs() < 1e-12);
    }

    #[test]
    fn product_chain_examples() {
        let single = tree(1, vec![]);
        let p = product_chain_excursion(&[single.clone(), single.clone()], 1.0).unwrap();
        assert!((p.mean - 1.5).abs() < 1e-12);
        let p = product_chain_excursion(&[single.clone(), single.clone(), single.clone()], 0.5).unwrap();
        assert!((p.mean - (1.5f64.powi(3) - 1.0) / 1.5).abs() < 1e-12);
        let edge = tree(2, vec![(0, 1)]);
        let p = product_chain_excursion(std::slice::from_ref(&edge), 0.7).unwrap();
        assert!((p.mean - expected_excursion_time(&edge, 0.7).unwrap().value).abs() < 1e-12);
    }

    #[test]
    fn analyze_agrees_with_single_ops() {
        let g = tree(5, vec![(0, 1), (0, 2), (1, 3), (1, 4)]);
        let e = analyze(&g, 0.8, 3).unwrap();
        assert!((e.r - expected_survival_time(&g, 0.8).unwrap().value).abs() < 1e-12);
        assert!((e.s - expected_excursion_time(&g, 0.8).unwrap().value).abs() < 1e-12);
        assert!((e.pi0 * (1.0 + 0.8 * e.s) - 1.0).abs() < 1e-12);
        for l in 0..=3 {
            assert!((e.m[l] - expected_leaf_infections(&g, 0.8, l, CountVariant::Excursion).unwrap().value).abs() < 1e-12);
            assert!((e.mbar[l] - expected_leaf_infections(&g, 0.8, l, CountVariant::Plain).unwrap().value).abs() < 1e-12);
        }
        assert_eq!(e.m[3], 0.0);
        assert!(e.r <= e.s);
    }

    #[test]
    fn sparse_path_matches_dense() {
        // 10 vertices: 1023 states, above the direct-dense threshold
        let edges: Vec<(usize, usize)> = (1..10).map(|i| ((i - 1) / 2, i)).collect();
        let g = tree(10, edges);
        let spec = ChainSpec::from_graph(&g, 1.3, Mode::RootAdded).unwrap();
        let mut c = Chain::build(spec.clone()).unwrap();
        let h = c.hitting_times().unwrap();
        assert!(h.residual < 1e-12);
        let c2 = Chain::build(spec).unwrap();
        let d = linalg::dense_solve(&c2_matrix(&c2), &vec![1.0; c2.states()]).unwrap();
        assert!((h.x[0] - d.x[0]).abs() < 1e-9 * d.x[0]);
    }

    fn c2_matrix(c: &Chain) -> linalg::Csr {
        c.matrix().clone()
    }
}
