//! Single-realization observables: survival and excursion times, infection counts.

use serde::Serialize;

use super::engine::{run, simulate, Mode, Network, Outcome, SimParams, Trajectory};
use super::timeline::EventTimeline;
use crate::error::Result;

/// Plain run from `init`; the end time is the survival time when not censored.
pub fn survival_time<N: Network>(net: &mut N, tl: &EventTimeline, params: &SimParams, init: &[usize]) -> Result<Outcome> {
    run(net, tl, params, init, Mode::Plain, 0, 0.0, |_| false)
}

/// Root-added run from the root alone, stopped the first time every vertex is healthy.
pub fn excursion_time<N: Network>(net: &mut N, tl: &EventTimeline, params: &SimParams, root: usize) -> Result<Outcome> {
    run(net, tl, params, &[root], Mode::RootAdded, root, 0.0, |_| false)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CountVariant {
    /// One root-added excursion.
    Excursion,
    /// One plain run from the root.
    Plain,
}

impl CountVariant {
    fn mode(self) -> Mode {
        match self {
            CountVariant::Excursion => Mode::RootAdded,
            CountVariant::Plain => Mode::Plain,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Count {
    pub count: u64,
    pub outcome: Outcome,
}

/// Number of 0 to 1 flips at marked vertices during one run from the root; the initial infection counts.
pub fn count_infections<N: Network, F: Fn(usize) -> bool>(
    net: &mut N,
    tl: &EventTimeline,
    params: &SimParams,
    root: usize,
    variant: CountVariant,
    marked: F,
) -> Result<Count> {
    let mut count = 0u64;
    let outcome = run(net, tl, params, &[root], variant.mode(), root, 0.0, |f| {
        if f.up && marked(f.vertex) {
            count += 1;
        }
        false
    })?;
    Ok(Count { count, outcome })
}

/// Infections at depth-`l` vertices. `max_depth` is the depth of the tree; `l > max_depth` gives 0 without running.
pub fn leaf_infection_count<N: Network>(
    net: &mut N,
    tl: &EventTimeline,
    params: &SimParams,
    root: usize,
    l: usize,
    max_depth: usize,
    variant: CountVariant,
) -> Result<Option<Count>> {
    if l > max_depth {
        return Ok(None);
    }
    let depths: Vec<usize> = (0..net.len()).map(|v| net.depth(v)).collect();
    count_infections(net, tl, params, root, variant, |v| depths[v] == l).map(Some)
}

/// Infections at the end set of a line graph during one excursion.
pub fn end_infection_count<N: Network>(net: &mut N, tl: &EventTimeline, params: &SimParams, root: usize, ends: &[usize]) -> Result<Count> {
    let mut mark = vec![false; net.len()];
    for &e in ends {
        mark[e] = true;
    }
    count_infections(net, tl, params, root, CountVariant::Excursion, |v| mark[v])
}

/// Infection rate `lambda_prime` with recovery rate `recovery`; recoveries are the rate-1 clocks
/// each kept with probability `recovery`.
pub fn reparametrized_simulate<N: Network>(
    net: &mut N,
    tl: &EventTimeline,
    params: &SimParams,
    lambda_prime: f64,
    recovery: f64,
    init: &[usize],
) -> Result<Trajectory> {
    let p = SimParams { lambda: lambda_prime, recovery, ..*params };
    simulate(net, tl, &p, init, Mode::Plain, 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{GraphKind, RootedGraph};
    use crate::seed::derive_seed;
    use crate::sim::{SimGraph, Status};

    fn graph(n: usize, edges: Vec<(usize, usize)>) -> SimGraph {
        SimGraph::from_rooted(&RootedGraph::new(n, edges, 0, GraphKind::GwTree).unwrap())
    }

    fn tl(tag: &str, i: u64) -> EventTimeline {
        EventTimeline::new(&derive_seed(11, &[tag.into(), i.into()]), 2.0).unwrap()
    }

    fn mean_se(x: &[f64]) -> (f64, f64) {
        let n = x.len() as f64;
        let m = x.iter().sum::<f64>() / n;
        let v = x.iter().map(|y| (y - m).powi(2)).sum::<f64>() / (n - 1.0);
        (m, (v / n).sqrt())
    }

    #[test]
    fn edge_survival_mean() {
        // absorption system for the edge: R = 1 + lambda/2
        let mut g = graph(2, vec![(0, 1)]);
        let p = SimParams::new(1.0);
        let xs: Vec<f64> = (0..20_000).map(|i| survival_time(&mut g, &tl("r", i), &p, &[0]).unwrap().end_time).collect();
        let (m, se) = mean_se(&xs);
        assert!((m - 1.5).abs() < 3.0 * se, "{m} {se}");
    }

    #[test]
    fn edge_excursion_mean() {
        // s = 1/(1+l) + l/(1+l) b, b = 1/2 + (s+c)/2, c = 1/(1+2l) + 2l/(1+2l) b at l = 1
        let (s, _b, _c) = {
            let l: f64 = 1.0;
            // substitute c and b into s and solve the 3x3 system by elimination
            let a = nalgebra::Matrix3::new(1.0, -l / (1.0 + l), 0.0, -0.5, 1.0, -0.5, 0.0, -2.0 * l / (1.0 + 2.0 * l), 1.0);
            let rhs = nalgebra::Vector3::new(1.0 / (1.0 + l), 0.5, 1.0 / (1.0 + 2.0 * l));
            let x = a.lu().solve(&rhs).unwrap();
            (x[0], x[1], x[2])
        };
        assert!((s - 1.6).abs() < 1e-12);
        let mut g = graph(2, vec![(0, 1)]);
        let p = SimParams::new(1.0);
        let xs: Vec<f64> = (0..20_000).map(|i| excursion_time(&mut g, &tl("s", i), &p, 0).unwrap().end_time).collect();
        let (m, se) = mean_se(&xs);
        assert!((m - s).abs() < 3.0 * se, "{m} {se}");
    }

    #[test]
    fn r_below_s_on_shared_timeline() {
        let mut g = graph(4, vec![(0, 1), (0, 2), (2, 3)]);
        let p = SimParams::new(1.3);
        for i in 0..300 {
            let t = tl("rs", i);
            let r = survival_time(&mut g, &t, &p, &[0]).unwrap();
            let s = excursion_time(&mut g, &t, &p, 0).unwrap();
            assert!(r.end_time <= s.end_time);
        }
    }

    #[test]
    fn depth_conventions() {
        let mut single = graph(1, vec![]);
        let p = SimParams::new(1.0);
        for i in 0..50 {
            let c = leaf_infection_count(&mut single, &tl("m0", i), &p, 0, 0, 0, CountVariant::Excursion).unwrap().unwrap();
            assert_eq!(c.count, 1);
            assert!(leaf_infection_count(&mut single, &tl("m0", i), &p, 0, 1, 0, CountVariant::Excursion).unwrap().is_none());
        }
    }

    #[test]
    fn zero_lambda_never_reaches_end() {
        let mut line = graph(2, vec![(0, 1)]);
        let p = SimParams::new(0.0);
        for i in 0..50 {
            let c = end_infection_count(&mut line, &tl("b", i), &p, 0, &[1]).unwrap();
            assert_eq!(c.count, 0);
            assert_eq!(c.outcome.status, Status::Extinct);
        }
    }

    #[test]
    fn single_vertex_end_counts_root() {
        let mut g = graph(1, vec![]);
        let p = SimParams::new(1.0);
        for i in 0..50 {
            assert!(end_infection_count(&mut g, &tl("b1", i), &p, 0, &[0]).unwrap().count >= 1);
        }
    }

    #[test]
    fn recovery_thinning_scales_time() {
        // one vertex: recovery rate r gives Exp(r)
        let mut g = graph(1, vec![]);
        let p = SimParams::new(1.0);
        let xs: Vec<f64> = (0..20_000).map(|i| reparametrized_simulate(&mut g, &tl("rep", i), &p, 1.0, 0.5, &[0]).unwrap().end_time).collect();
        let (m, se) = mean_se(&xs);
        assert!((m - 2.0).abs() < 3.0 * se, "{m} {se}");
    }
}
