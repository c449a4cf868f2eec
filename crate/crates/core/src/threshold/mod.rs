//! Monte Carlo threshold estimates, survival-time scaling and the good-tree / good-vertex constructs.

mod good;
mod tail;

pub use good::{good_vertex_scan, is_good_tree, GoodScan, GoodTreeParams, GoodTreeResult, GoodTreeVariant, GoodVertexParams};
pub use tail::{streaming_bound, tail_probe_s, TailRow, TailTable};

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::distributions::OffspringDistribution;
use crate::error::{Error, Result};
use crate::graph::sample_config_model;
use crate::seed::StreamKey;
use crate::sim::{run, EventTimeline, LazyGwTree, Mode, Outcome, SimGraph, SimParams, Status};
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Proxy {
    /// Some vertex at depth L is ever infected.
    ReachDepth,
    /// The process is still alive at the horizon.
    AliveAtHorizon,
}

impl std::fmt::Display for Proxy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Proxy::ReachDepth => "reach-depth",
            Proxy::AliveAtHorizon => "alive-at-horizon",
        })
    }
}

impl std::str::FromStr for Proxy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reach-depth" | "reach-depth-L" => Ok(Proxy::ReachDepth),
            "alive-at-horizon" => Ok(Proxy::AliveAtHorizon),
            other => Err(Error::Parse(format!("unknown proxy {other:?}"))),
        }
    }
}

pub const MIN_REPLICAS: usize = 100;
/// Upper limit on lazily grown tree size per replica; hitting it is tallied as censoring.
pub const TREE_CAP: usize = 5_000_000;
pub const DEFAULT_P_STAR: f64 = 0.05;
/// The largest λ any bracket is widened to.
pub const LAMBDA_MAX: f64 = 4.0;
const WIDENINGS: usize = 3;

/// Smallest L with d^L ≥ 10⁴.
pub fn default_depth(d: f64) -> Result<usize> {
    if !(d > 1.0) {
        return Err(Error::InvalidArgument(format!("no finite depth L has {d}^L >= 1e4")));
    }
    Ok((4.0 * std::f64::consts::LN_10 / d.ln() - 1e-12).ceil().max(1.0) as usize)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SurvivalEstimate {
    pub lambda: f64,
    pub p_hat: f64,
    pub se: f64,
    pub successes: usize,
    pub replicas: usize,
    /// Runs stopped by the horizon, event cap or tree cap before the proxy was decided.
    pub censored: usize,
}

/// Keys for replica `i`: one for the tree, one for the timeline. Probes at different λ reuse them.
fn replica_keys(seed: &StreamKey, i: usize) -> (StreamKey, StreamKey) {
    (seed.child("tree").child(i as u64), seed.child("timeline").child(i as u64))
}

/// One replica of the proxy event on a fresh lazily grown tree.
pub fn proxy_replica(law: &OffspringDistribution, lambda: f64, depth: usize, horizon: f64, proxy: Proxy, base: f64, seed: &StreamKey, i: usize) -> Result<(bool, bool)> {
    let (tk, lk) = replica_keys(seed, i);
    let tl = EventTimeline::new(&lk, base)?;
    let mut tree = LazyGwTree::new(law, &tk, depth).with_cap(TREE_CAP);
    let params = SimParams::new(lambda).with_horizon(horizon);
    let mut reached = false;
    let out = run(&mut tree, &tl, &params, &[0], Mode::Plain, 0, 0.0, |f| {
        if proxy == Proxy::ReachDepth && f.up && f.depth == depth {
            reached = true;
            return true;
        }
        false
    })?;
    let capped = tree.hit_cap();
    Ok(match proxy {
        Proxy::ReachDepth => (reached, !reached && (out.censored() || capped)),
        Proxy::AliveAtHorizon => {
            let alive = out.status != Status::Extinct;
            (alive, out.status == Status::EventCapCensored || capped)
        }
    })
}

/// Fraction of replicas where the proxy event occurs. `base` is the timeline's infection base rate; probes that
/// share `seed` and `base` are coupled, so the estimate is nondecreasing in λ.
pub fn survival_probability(
    law: &OffspringDistribution,
    lambda: f64,
    depth: usize,
    horizon: f64,
    proxy: Proxy,
    replicas: usize,
    seed: &StreamKey,
    base: f64,
) -> Result<SurvivalEstimate> {
    if replicas < MIN_REPLICAS {
        return Err(Error::InvalidArgument(format!("need at least {MIN_REPLICAS} replicas, got {replicas}")));
    }
    let results: Vec<Result<(bool, bool)>> =
        (0..replicas).into_par_iter().map(|i| proxy_replica(law, lambda, depth, horizon, proxy, base, seed, i)).collect();
    let mut successes = 0;
    let mut censored = 0;
    for r in results {
        let (s, c) = r?;
        successes += s as usize;
        censored += c as usize;
    }
    let p_hat = successes as f64 / replicas as f64;
    let se = (p_hat * (1.0 - p_hat) / replicas as f64).sqrt();
    Ok(SurvivalEstimate { lambda, p_hat, se, successes, replicas, censored })
}

#[derive(Debug, Clone, Serialize)]
pub struct ThresholdEstimate {
    pub family: String,
    pub proxy: Proxy,
    pub depth: usize,
    pub horizon: f64,
    pub p_star: f64,
    pub replicas: usize,
    pub lambda_hat: f64,
    pub bracket: (f64, f64),
    /// Every probe in the order it was run.
    pub trace: Vec<SurvivalEstimate>,
    /// Bracket after each bisection step.
    pub brackets: Vec<(f64, f64)>,
    pub seed: String,
}

#[derive(Debug, Clone)]
pub struct ThresholdConfig {
    /// λ is scaled by 1/d for the initial bracket [0.2/d, 4/d] and the stopping width 0.02/d.
    pub d: f64,
    pub depth: usize,
    pub horizon: f64,
    pub proxy: Proxy,
    pub replicas: usize,
    pub p_star: f64,
}

/// Bisection on λ for the proxy probability crossing `p_star`, with common random numbers across probes.
pub fn estimate_lambda1(law: &OffspringDistribution, cfg: &ThresholdConfig, seed: &StreamKey) -> Result<ThresholdEstimate> {
    let d = cfg.d;
    if !(d > 0.0) {
        return Err(Error::InvalidArgument("scale d must be positive".into()));
    }
    let mut lo = 0.2 / d;
    let mut hi = (4.0 / d).min(LAMBDA_MAX);
    let base = LAMBDA_MAX.max(hi);
    let mut trace = Vec::new();
    let probe = |lambda: f64, trace: &mut Vec<SurvivalEstimate>| -> Result<f64> {
        let e = survival_probability(law, lambda, cfg.depth, cfg.horizon, cfg.proxy, cfg.replicas, seed, base)?;
        trace.push(e);
        Ok(e.p_hat)
    };
    let mut p_lo = probe(lo, &mut trace)?;
    let mut p_hi = probe(hi, &mut trace)?;
    let mut attempts = 0;
    while !(p_lo < cfg.p_star && p_hi >= cfg.p_star) {
        let can_widen_hi = hi < LAMBDA_MAX;
        if attempts == WIDENINGS || (p_hi < cfg.p_star && !can_widen_hi) {
            let table: Vec<String> = trace.iter().map(|e| format!("lambda={:.6} p={:.4}", e.lambda, e.p_hat)).collect();
            return Err(Error::Bracket(format!("probes do not straddle p*={} after {attempts} widenings: {}", cfg.p_star, table.join("; "))));
        }
        attempts += 1;
        if p_lo >= cfg.p_star {
            lo /= 2.0;
            p_lo = probe(lo, &mut trace)?;
        }
        if p_hi < cfg.p_star {
            hi = (hi * 2.0).min(LAMBDA_MAX);
            p_hi = probe(hi, &mut trace)?;
        }
    }
    let mut brackets = vec![(lo, hi)];
    while hi - lo >= 0.02 / d {
        let mid = 0.5 * (lo + hi);
        if probe(mid, &mut trace)? >= cfg.p_star {
            hi = mid;
        } else {
            lo = mid;
        }
        brackets.push((lo, hi));
    }
    Ok(ThresholdEstimate {
        family: law.label().to_string(),
        proxy: cfg.proxy,
        depth: cfg.depth,
        horizon: cfg.horizon,
        p_star: cfg.p_star,
        replicas: cfg.replicas,
        lambda_hat: 0.5 * (lo + hi),
        bracket: (lo, hi),
        trace,
        brackets,
        seed: seed.path().to_string(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ScalingRow {
    pub n: usize,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
    pub cap_hits: usize,
    pub replicas: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScalingTable {
    pub lambda: f64,
    pub cap: f64,
    pub rows: Vec<ScalingRow>,
    /// Least-squares slope of log median against log n.
    pub slope: f64,
    pub seed: String,
}

/// One run on a fresh configuration graph, from all vertices or from one uniform vertex.
fn config_run(dist: &OffspringDistribution, n: usize, lambda: f64, cap: f64, seed: &StreamKey, i: usize, single: bool) -> Result<Outcome> {
    let key = seed.child(n as u64).child(i as u64);
    let g = sample_config_model(n, dist, &key.child("graph"))?;
    let mut sg = SimGraph::from_half_edge(&g);
    let tl = EventTimeline::new(&key.child("timeline"), lambda.max(f64::MIN_POSITIVE))?;
    let init: Vec<usize> = if single { vec![key.child("start").rng().random_range(0..n)] } else { (0..n).collect() };
    let out = run(&mut sg, &tl, &SimParams::new(lambda).with_horizon(cap), &init, Mode::Plain, 0, 0.0, |_| false)?;
    if out.status == Status::EventCapCensored {
        return Err(Error::InvalidArgument(format!("event cap reached before time {cap} on n = {n}")));
    }
    Ok(out)
}

/// Survival times from all-infected on fresh configuration graphs; times reaching `cap` are censored at `cap`.
pub fn survival_time_scaling(dist: &OffspringDistribution, ns: &[usize], lambda: f64, replicas: usize, cap: f64, seed: &StreamKey) -> Result<ScalingTable> {
    let mut rows = Vec::new();
    for &n in ns {
        let outs: Vec<Result<Outcome>> = (0..replicas).into_par_iter().map(|i| config_run(dist, n, lambda, cap, seed, i, false)).collect();
        let mut xs = Vec::with_capacity(replicas);
        let mut hits = 0;
        for o in outs {
            let o = o?;
            xs.push(o.end_time);
            hits += (o.status == Status::HorizonCensored) as usize;
        }
        let (q25, q75) = stats::iqr(&xs);
        rows.push(ScalingRow { n, median: stats::median(&xs), q25, q75, cap_hits: hits, replicas });
    }
    let lx: Vec<f64> = rows.iter().map(|r| (r.n as f64).ln()).collect();
    let ly: Vec<f64> = rows.iter().map(|r| r.median.ln()).collect();
    let slope = if rows.len() >= 2 { stats::linear_fit(&lx, &ly).0 } else { f64::NAN };
    Ok(ScalingTable { lambda, cap, rows, slope, seed: seed.path().to_string() })
}

#[derive(Debug, Clone, Serialize)]
pub struct SingleSeedResult {
    pub n: usize,
    pub lambda: f64,
    pub cap: f64,
    pub survived: usize,
    pub replicas: usize,
    pub fraction: f64,
    pub seed: String,
}

/// Fraction of runs from one uniformly chosen infected vertex that are still alive at `cap`.
pub fn single_seed_survival(dist: &OffspringDistribution, n: usize, lambda: f64, replicas: usize, cap: f64, seed: &StreamKey) -> Result<SingleSeedResult> {
    let results: Vec<Result<Outcome>> = (0..replicas).into_par_iter().map(|i| config_run(dist, n, lambda, cap, seed, i, true)).collect();
    let mut survived = 0;
    for r in results {
        survived += (r?.status == Status::HorizonCensored) as usize;
    }
    Ok(SingleSeedResult { n, lambda, cap, survived, replicas, fraction: survived as f64 / replicas as f64, seed: seed.path().to_string() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::derive_seed;

    #[test]
    fn depth_rule() {
        assert_eq!(default_depth(5.0).unwrap(), 6);
        assert_eq!(default_depth(10.0).unwrap(), 4);
        assert_eq!(default_depth(20.0).unwrap(), 4);
        assert!(default_depth(1.0).is_err());
    }

    #[test]
    fn trivial_probabilities() {
        let law = OffspringDistribution::poisson(3.0).unwrap();
        let seed = derive_seed(1, &["surv".into()]);
        let e = survival_probability(&law, 0.0, 3, 100.0, Proxy::ReachDepth, 100, &seed, 1.0).unwrap();
        assert_eq!(e.p_hat, 0.0);
        let e = survival_probability(&law, 0.5, 0, 100.0, Proxy::ReachDepth, 100, &seed, 1.0).unwrap();
        assert_eq!(e.p_hat, 1.0);
        assert!(survival_probability(&law, 0.5, 2, 100.0, Proxy::ReachDepth, 99, &seed, 1.0).is_err());
    }

    #[test]
    fn coupled_probes_are_monotone() {
        let law = OffspringDistribution::poisson(3.0).unwrap();
        let seed = derive_seed(2, &["mono".into()]);
        let mut last = 0;
        for lambda in [0.1, 0.2, 0.3, 0.5, 0.8] {
            let e = survival_probability(&law, lambda, 4, 1e4, Proxy::ReachDepth, 200, &seed, 1.0).unwrap();
            assert!(e.successes >= last);
            last = e.successes;
        }
        // replica by replica as well
        for i in 0..200 {
            let a = proxy_replica(&law, 0.2, 4, 1e4, Proxy::ReachDepth, 1.0, &seed, i).unwrap().0;
            let b = proxy_replica(&law, 0.3, 4, 1e4, Proxy::ReachDepth, 1.0, &seed, i).unwrap().0;
            assert!(!a || b);
        }
    }

    #[test]
    fn zero_lambda_scaling_and_single_seed() {
        let dist = OffspringDistribution::poisson(3.0).unwrap();
        let seed = derive_seed(3, &["scale".into()]);
        let t = survival_time_scaling(&dist, &[100], 0.0, 200, 1e4, &seed).unwrap();
        // max of n Exp(1): median = -ln(1 - 2^{-1/n})
        let exact = -(1.0 - 0.5f64.powf(1.0 / 100.0)).ln();
        assert!((t.rows[0].median / exact - 1.0).abs() < 0.3, "{} {}", t.rows[0].median, exact);
        let s = single_seed_survival(&dist, 50, 0.0, 20, 11.0, &seed).unwrap();
        assert_eq!(s.survived, 0);
        let iso = OffspringDistribution::point_mass(0);
        let s = single_seed_survival(&iso, 50, 0.5, 20, 11.0, &seed).unwrap();
        assert_eq!(s.survived, 0);
    }
}
