use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::distributions::OffspringDistribution;
use crate::error::{Error, Result};
use crate::seed::StreamKey;
use crate::stats;

/// The recursive upper bound on S for a GW(`law`) tree cut at depth `l`, sampled and folded depth first
/// without storing the tree. Same combination rule as `recursion::recursive_bound_calculator`.
pub fn streaming_bound<R: Rng + ?Sized>(law: &OffspringDistribution, l: usize, lambda: f64, rng: &mut R) -> f64 {
    if l == 0 {
        return 1.0;
    }
    let k = law.sample(rng);
    if k == 0 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut prod = 1.0;
    for _ in 0..k {
        let b = streaming_bound(law, l - 1, lambda, rng);
        sum += b;
        prod *= 1.0 + lambda * b;
    }
    let denom = 1.0 - lambda - 2.0 * lambda * lambda * sum;
    if denom > 0.0 {
        prod.min((1.0 + lambda * sum) / denom)
    } else {
        prod
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TailRow {
    pub t: f64,
    pub exceedances: usize,
    pub samples: usize,
    pub p_hat: f64,
    pub wilson_lo: f64,
    pub wilson_hi: f64,
    /// t^{−√d} (ln t)^{−2}
    pub reference: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct TailTable {
    pub family: String,
    pub d: f64,
    pub eps: f64,
    pub lambda: f64,
    pub depth: usize,
    pub rows: Vec<TailRow>,
    /// Grid points below 2/ε, not probed.
    pub skipped: Vec<f64>,
    pub max_bound: f64,
    pub seed: String,
}

impl TailTable {
    pub fn flagged(&self) -> usize {
        self.rows.iter().filter(|r| r.flagged).count()
    }
}

/// Empirical P(bound ≥ t) over `samples` trees at λ = (1 − ε)/d, with 95% Wilson intervals.
pub fn tail_probe_s(dist: &OffspringDistribution, l: usize, eps: f64, d: f64, samples: usize, t_grid: &[f64], seed: &StreamKey) -> Result<TailTable> {
    if !(eps > 0.0 && eps < 1.0) || !(d > 0.0) || samples == 0 {
        return Err(Error::InvalidArgument(format!("tail probe needs eps in (0,1), d > 0, samples >= 1; got {eps}, {d}, {samples}")));
    }
    let lambda = (1.0 - eps) / d;
    let bounds: Vec<f64> = (0..samples).into_par_iter().map(|i| streaming_bound(dist, l, lambda, &mut seed.child(i as u64).rng())).collect();
    let floor = 2.0 / eps;
    let (grid, skipped): (Vec<f64>, Vec<f64>) = t_grid.iter().partition(|&&t| t >= floor);
    let rows = grid
        .into_iter()
        .map(|t| {
            let exceedances = bounds.iter().filter(|&&b| b >= t).count();
            let (wilson_lo, wilson_hi) = stats::wilson(exceedances, samples, 0.05);
            let reference = t.powf(-d.sqrt()) / t.ln().powi(2);
            TailRow { t, exceedances, samples, p_hat: exceedances as f64 / samples as f64, wilson_lo, wilson_hi, reference, flagged: wilson_lo > reference }
        })
        .collect();
    Ok(TailTable {
        family: dist.label().to_string(),
        d,
        eps,
        lambda,
        depth: l,
        rows,
        skipped,
        max_bound: bounds.iter().copied().fold(0.0, f64::max),
        seed: seed.path().to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{sample_gw, SizeCap};
    use crate::recursion::recursive_bound_calculator;
    use crate::seed::derive_seed;

    #[test]
    fn matches_stored_tree_bound_on_point_mass() {
        // deterministic shape, so streaming and stored evaluation see the same tree
        let law = OffspringDistribution::point_mass(3);
        let tree = sample_gw(&law, 3, &derive_seed(1, &["pm".into()]), SizeCap(1000)).unwrap();
        for lambda in [0.05, 0.2, 0.6] {
            let a = recursive_bound_calculator(&tree, lambda);
            let b = streaming_bound(&law, 3, lambda, &mut derive_seed(2, &["pm".into()]).rng());
            assert!((a - b).abs() < 1e-12 * a, "{a} {b}");
        }
    }

    #[test]
    fn trivial_tables() {
        let law = OffspringDistribution::poisson(4.0).unwrap();
        let seed = derive_seed(3, &["tail".into()]);
        let t = tail_probe_s(&law, 0, 0.5, 4.0, 100, &[4.0, 8.0], &seed).unwrap();
        assert!(t.rows.iter().all(|r| r.exceedances == 0));
        assert_eq!(t.max_bound, 1.0);
        let t = tail_probe_s(&law, 2, 0.5, 4.0, 100, &[1.0, 4.0], &seed).unwrap();
        assert_eq!(t.skipped, vec![1.0]);
        assert_eq!(t.rows.len(), 1);
    }
}
