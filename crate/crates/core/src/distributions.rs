//! Offspring and degree laws on the nonnegative integers.

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Analytic families are cut where the remaining tail drops below this.
pub const TRUNCATION_TAIL: f64 = 1e-12;

/// Hard limit on any support we are willing to materialize.
const MAX_SUPPORT: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Family {
    Poisson(f64),
    PointMass(usize),
    /// P(k) = p (1-p)^k on k >= 0.
    Geometric(f64),
    Finite,
}

#[derive(Debug, Clone)]
pub struct OffspringDistribution {
    family: Family,
    pmf: Vec<f64>,
    cdf: Vec<f64>,
    mean: f64,
    label: String,
}

impl OffspringDistribution {
    pub fn poisson(d: f64) -> Result<Self> {
        if !(d.is_finite() && d > 0.0) {
            return Err(Error::Distribution(format!("poisson mean must be positive, got {d}")));
        }
        let mut pmf = Vec::new();
        let mut acc = 0.0;
        let mut k = 0usize;
        loop {
            let p = poisson_ln_pmf(d, k).exp();
            pmf.push(p);
            acc += p;
            if k as f64 > d && poisson_tail_gt(d, k) < TRUNCATION_TAIL {
                break;
            }
            k += 1;
            if k > MAX_SUPPORT {
                return Err(Error::Distribution("poisson support too large".into()));
            }
        }
        let pmf = pmf.into_iter().map(|p| p / acc).collect();
        Ok(Self::build(Family::Poisson(d), pmf, format!("poisson({d})")))
    }

    pub fn point_mass(k: usize) -> Self {
        let mut pmf = vec![0.0; k + 1];
        pmf[k] = 1.0;
        Self::build(Family::PointMass(k), pmf, format!("point-mass({k})"))
    }

    pub fn geometric(p: f64) -> Result<Self> {
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::Distribution(format!("geometric parameter must lie in (0,1], got {p}")));
        }
        let q = 1.0 - p;
        let mut pmf = Vec::new();
        let mut k = 0usize;
        loop {
            pmf.push(p * q.powi(k as i32));
            if q.powi(k as i32 + 1) < TRUNCATION_TAIL {
                break;
            }
            k += 1;
            if k > MAX_SUPPORT {
                return Err(Error::Distribution("geometric support too large".into()));
            }
        }
        let total: f64 = pmf.iter().sum();
        let pmf = pmf.into_iter().map(|x| x / total).collect();
        Ok(Self::build(Family::Geometric(p), pmf, format!("geometric({p})")))
    }

    /// A finite pmf given as (k, p_k) pairs. Total mass must be 1 within 1e-9; it is then renormalized.
    pub fn from_pairs(pairs: &[(usize, f64)], label: impl Into<String>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::Distribution("empty pmf".into()));
        }
        let kmax = pairs.iter().map(|&(k, _)| k).max().unwrap_or(0);
        if kmax > MAX_SUPPORT {
            return Err(Error::Distribution(format!("support point {kmax} too large")));
        }
        let mut pmf = vec![0.0; kmax + 1];
        for &(k, p) in pairs {
            if !(p.is_finite() && p >= 0.0) {
                return Err(Error::Distribution(format!("bad probability {p} at {k}")));
            }
            pmf[k] += p;
        }
        Self::from_vec(pmf, label)
    }

    /// A finite pmf indexed by k.
    pub fn from_vec(mut pmf: Vec<f64>, label: impl Into<String>) -> Result<Self> {
        if pmf.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::Distribution("probabilities must be finite and nonnegative".into()));
        }
        let total: f64 = pmf.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Distribution(format!("probabilities sum to {total}, not 1")));
        }
        while pmf.len() > 1 && *pmf.last().unwrap() == 0.0 {
            pmf.pop();
        }
        for p in pmf.iter_mut() {
            *p /= total;
        }
        Ok(Self::build(Family::Finite, pmf, label.into()))
    }

    fn build(family: Family, pmf: Vec<f64>, label: String) -> Self {
        let mut acc = 0.0;
        let cdf = pmf
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        let mean = pmf.iter().enumerate().map(|(k, p)| k as f64 * p).sum();
        Self { family, pmf, cdf, mean, label }
    }

    pub fn family(&self) -> Family {
        self.family
    }
    pub fn label(&self) -> &str {
        &self.label
    }
    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }
    pub fn pmf(&self) -> &[f64] {
        &self.pmf
    }
    pub fn mean(&self) -> f64 {
        self.mean
    }
    /// Largest materialized support point.
    pub fn truncation_cutoff(&self) -> usize {
        self.pmf.len() - 1
    }
    pub fn prob(&self, k: usize) -> f64 {
        self.pmf.get(k).copied().unwrap_or(0.0)
    }
    /// Point mass from the analytic formula where one exists, so it stays positive past the truncation.
    pub fn exact_prob(&self, k: usize) -> f64 {
        match self.family {
            Family::Poisson(d) => poisson_ln_pmf(d, k).exp(),
            Family::Geometric(p) => p * (1.0 - p).powf(k as f64),
            _ => self.prob(k),
        }
    }
    pub fn has_infinite_support(&self) -> bool {
        matches!(self.family, Family::Poisson(_) | Family::Geometric(_))
    }
    /// Largest k with positive mass (only meaningful for finite support).
    pub fn max_support(&self) -> usize {
        self.pmf.iter().rposition(|&p| p > 0.0).unwrap_or(0)
    }

    pub fn second_moment(&self) -> f64 {
        self.pmf.iter().enumerate().map(|(k, p)| (k * k) as f64 * p).sum()
    }

    pub fn variance(&self) -> f64 {
        self.second_moment() - self.mean * self.mean
    }

    /// P(D > k), evaluated analytically for the infinite families so that tiny tails stay exact.
    pub fn tail_gt(&self, k: usize) -> f64 {
        match self.family {
            Family::Poisson(d) => poisson_tail_gt(d, k),
            Family::Geometric(p) => (1.0 - p).powf(k as f64 + 1.0),
            _ => self.pmf.iter().skip(k + 1).sum(),
        }
    }

    /// E[D 1{D > k}].
    pub fn tail_mean_gt(&self, k: usize) -> f64 {
        match self.family {
            // E[D 1{D >= m}] = d P(D >= m-1)
            Family::Poisson(d) => {
                if k == 0 {
                    d
                } else {
                    d * poisson_tail_gt(d, k - 1)
                }
            }
            Family::Geometric(p) => {
                let q = 1.0 - p;
                let m = k as f64 + 1.0;
                q.powf(m) * (m + q / p)
            }
            _ => self.pmf.iter().enumerate().skip(k + 1).map(|(j, p)| j as f64 * p).sum(),
        }
    }

    /// P(D >= x) for real x.
    pub fn upper_tail(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 1.0;
        }
        let m = (x - 1e-9).ceil() as usize;
        if m == 0 {
            1.0
        } else {
            self.tail_gt(m - 1)
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let total = *self.cdf.last().unwrap();
        let target = u * total;
        self.cdf.partition_point(|&c| c <= target).min(self.pmf.len() - 1)
    }

    /// The pmf over an extended support on which `j * sqrt(p_j)` has a negligible remainder.
    fn sqrt_weight_support(&self) -> Result<Vec<f64>> {
        match self.family {
            Family::Poisson(d) => {
                let mut v = Vec::new();
                let mut k = 0usize;
                loop {
                    let lp = poisson_ln_pmf(d, k);
                    v.push(lp.exp());
                    let w = (k as f64) * (0.5 * lp).exp();
                    if k as f64 > 2.0 * d + 10.0 && w < 1e-18 {
                        break;
                    }
                    k += 1;
                    if k > MAX_SUPPORT {
                        return Err(Error::HeavyTail(format!("{}: sqrt-weighted tail did not converge", self.label)));
                    }
                }
                Ok(v)
            }
            Family::Geometric(p) => {
                let q = 1.0 - p;
                let mut v = Vec::new();
                let mut k = 0usize;
                loop {
                    let pk = p * q.powf(k as f64);
                    v.push(pk);
                    if k > 10 && (k as f64) * pk.sqrt() < 1e-18 {
                        break;
                    }
                    k += 1;
                    if k > MAX_SUPPORT {
                        return Err(Error::HeavyTail(format!("{}: sqrt-weighted tail did not converge", self.label)));
                    }
                }
                Ok(v)
            }
            _ => Ok(self.pmf.clone()),
        }
    }
}

fn poisson_ln_pmf(d: f64, k: usize) -> f64 {
    -d + k as f64 * d.ln() - ln_gamma(k as f64 + 1.0)
}

/// P(D > k) for D ~ Poisson(d).
fn poisson_tail_gt(d: f64, k: usize) -> f64 {
    if (k as f64) < d {
        let cdf: f64 = (0..=k).map(|j| poisson_ln_pmf(d, j).exp()).sum();
        return (1.0 - cdf).max(0.0);
    }
    let mut j = k + 1;
    let mut term = poisson_ln_pmf(d, j).exp();
    let mut sum = 0.0;
    while term > 0.0 {
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
        j += 1;
        term *= d / j as f64;
    }
    sum
}

/// mu~(k-1) = k mu(k) / E[D].
pub fn size_biased(dist: &OffspringDistribution) -> Result<OffspringDistribution> {
    if dist.mean() <= 0.0 {
        return Err(Error::ZeroMean);
    }
    let pmf: Vec<f64> = if dist.has_infinite_support() {
        // from the analytic pmf, truncated by the same tail rule, so the top of the table is not lost to the shift
        let m = dist.tail_mean_gt(0);
        let mut pmf = Vec::new();
        for k in 0..MAX_SUPPORT {
            pmf.push((k + 1) as f64 * dist.exact_prob(k + 1) / m);
            if dist.tail_mean_gt(k + 1) / m < TRUNCATION_TAIL {
                break;
            }
        }
        let total: f64 = pmf.iter().sum();
        pmf.into_iter().map(|p| p / total).collect()
    } else {
        let m = dist.mean();
        dist.pmf().iter().enumerate().skip(1).map(|(k, p)| k as f64 * p / m).collect()
    };
    let family = match dist.family() {
        Family::Poisson(d) => Family::Poisson(d),
        Family::PointMass(k) => Family::PointMass(k - 1),
        _ => Family::Finite,
    };
    let label = match family {
        Family::Poisson(d) => format!("poisson({d})"),
        Family::PointMass(k) => format!("point-mass({k})"),
        _ => format!("size-biased({})", dist.label()),
    };
    Ok(OffspringDistribution::build(family, pmf, label))
}

#[derive(Debug, Clone)]
pub struct ConcentrationProfile {
    /// Sorted (delta, c_delta) pairs.
    c: Vec<(f64, f64)>,
}

impl ConcentrationProfile {
    pub fn new(mut c: Vec<(f64, f64)>) -> Result<Self> {
        c.sort_by(|a, b| a.0.total_cmp(&b.0));
        if c.iter().any(|&(d, v)| !(d > 0.0 && d <= 1.0) || !(v > 0.0)) {
            return Err(Error::InvalidArgument("profile needs delta in (0,1] and c_delta > 0".into()));
        }
        if !c.iter().any(|&(d, _)| (d - 1.0).abs() < 1e-12) {
            return Err(Error::InvalidArgument("profile grid must contain delta = 1".into()));
        }
        Ok(Self { c })
    }

    pub fn from_fn(grid: &[f64], f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(grid.iter().map(|&d| (d, f(d))).collect())
    }

    /// c_delta = delta^2 / 4 on the default grid.
    pub fn default_quadratic() -> Self {
        Self::from_fn(&DEFAULT_DELTA_GRID, |d| d * d / 4.0).expect("default grid is valid")
    }

    pub fn c1(&self) -> f64 {
        self.c_delta(1.0).expect("grid covers 1")
    }

    /// Constant for `delta`; off-grid points use the nearest grid point below, which the tail bound implies.
    pub fn c_delta(&self, delta: f64) -> Option<f64> {
        self.c.iter().rev().find(|&&(d, _)| d <= delta + 1e-12).map(|&(_, c)| c)
    }
}

pub const DEFAULT_DELTA_GRID: [f64; 5] = [0.1, 0.25, 0.5, 0.75, 1.0];
pub const DEFAULT_A_GRID: [f64; 4] = [1.0, 2.0, 4.0, 8.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TailKind {
    Delta,
    Large,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConcentrationPoint {
    pub kind: TailKind,
    pub param: f64,
    pub tail: f64,
    pub bound: f64,
    pub covered: bool,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConcentrationReport {
    pub points: Vec<ConcentrationPoint>,
    pub all_pass: bool,
    /// Minimum of bound - tail over covered points.
    pub worst_margin: f64,
}

pub fn check_concentration(
    dist: &OffspringDistribution,
    profile: &ConcentrationProfile,
    delta_grid: &[f64],
    a_grid: &[f64],
) -> ConcentrationReport {
    let d = dist.mean();
    let mut points = Vec::new();
    for &delta in delta_grid {
        let tail = dist.upper_tail((1.0 + delta) * d);
        match profile.c_delta(delta) {
            Some(c) => {
                let bound = (-c * d).exp();
                points.push(ConcentrationPoint { kind: TailKind::Delta, param: delta, tail, bound, covered: true, pass: tail <= bound });
            }
            None => points.push(ConcentrationPoint {
                kind: TailKind::Delta,
                param: delta,
                tail,
                bound: f64::NAN,
                covered: false,
                pass: false,
            }),
        }
    }
    let c1 = profile.c1();
    for &a in a_grid {
        let tail = dist.upper_tail((1.0 + a) * d);
        let bound = (-c1 * a * d).exp();
        points.push(ConcentrationPoint { kind: TailKind::Large, param: a, tail, bound, covered: true, pass: tail <= bound });
    }
    let all_pass = points.iter().all(|p| p.pass);
    let worst_margin = points.iter().filter(|p| p.covered).map(|p| p.bound - p.tail).fold(f64::INFINITY, f64::min);
    ConcentrationReport { points, all_pass, worst_margin }
}

/// The augmented law: mass (1 - eps/10) p_k below k0, sqrt(p_k) above, normalized.
pub fn augmented(dist: &OffspringDistribution, epsilon: f64) -> Result<OffspringDistribution> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidArgument(format!("epsilon must lie in (0,1), got {epsilon}")));
    }
    let p = dist.sqrt_weight_support()?;
    let n = p.len();
    let mut suffix = vec![0.0; n + 1];
    for k in (0..n).rev() {
        suffix[k] = suffix[k + 1] + k as f64 * p[k].sqrt();
    }
    let thresh = epsilon / 10.0;
    let k0 = (0..n)
        .rev()
        .find(|&k| suffix[k] >= thresh)
        .ok_or_else(|| Error::Distribution(format!("{}: no k with sqrt-weighted tail above eps/10", dist.label())))?;
    let kmax = if dist.has_infinite_support() { usize::MAX } else { dist.max_support() };
    let damp = 1.0 - epsilon / 10.0;
    let mut w: Vec<f64> = if k0 < kmax {
        p.iter().enumerate().map(|(k, &pk)| if k <= k0 { damp * pk } else { pk.sqrt() }).collect()
    } else {
        p.iter()
            .enumerate()
            .map(|(k, &pk)| match k.cmp(&k0) {
                std::cmp::Ordering::Less => damp * pk,
                std::cmp::Ordering::Equal => pk.sqrt(),
                std::cmp::Ordering::Greater => 0.0,
            })
            .collect()
    };
    let z: f64 = w.iter().sum();
    for x in w.iter_mut() {
        *x /= z;
    }
    while w.len() > 1 && *w.last().unwrap() == 0.0 {
        w.pop();
    }
    let family = match dist.family() {
        Family::PointMass(k) => Family::PointMass(k),
        _ => Family::Finite,
    };
    Ok(OffspringDistribution::build(family, w, format!("augmented({},{epsilon})", dist.label())))
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct GiantCondition {
    /// E[D(D-2)].
    pub value: f64,
    pub holds: bool,
}

/// E[D(D-2)] > 0, with a 1e-9 floor so truncation noise cannot flip a critical law.
pub fn giant_condition(dist: &OffspringDistribution) -> GiantCondition {
    let value = dist.second_moment() - 2.0 * dist.mean();
    GiantCondition { value, holds: value > 1e-9 }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PreprocessParams {
    pub eta0: f64,
    pub j0: usize,
    pub j1: usize,
}

impl PreprocessParams {
    pub fn validate(&self, dist: &OffspringDistribution) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParams(m));
        if !(self.eta0 > 0.0 && self.eta0 < 0.25) {
            return bad(format!("eta0 = {} outside (0, 1/4)", self.eta0));
        }
        if self.j0 == 0 || dist.exact_prob(self.j0) <= 0.0 {
            return bad(format!("j0 = {} must be a positive support point", self.j0));
        }
        if dist.has_infinite_support() {
            if self.j1 < self.j0 || (self.j1 as f64) >= (self.j0 as f64 / 10.0).exp() {
                return bad(format!("need j0 <= j1 < exp(j0/10), got j0={} j1={}", self.j0, self.j1));
            }
            let lhs = dist.tail_gt(self.j0);
            let eta = dist.tail_mean_gt(self.j1).max(self.eta0);
            if lhs < 10.0 * eta * (1.0 - 1e-9) {
                return bad(format!("mu(j0,inf) = {lhs:e} < 10 * {eta:e}"));
            }
        } else {
            if self.j0 != dist.max_support() || self.j1 != self.j0 {
                return bad(format!("finite support needs j0 = j1 = {}", dist.max_support()));
            }
            if dist.prob(self.j0) < 10.0 * self.eta0 * (1.0 - 1e-12) {
                return bad(format!("mu(j0) = {} < 10 eta0", dist.prob(self.j0)));
            }
        }
        Ok(())
    }
}

pub fn choose_preprocess_params(dist: &OffspringDistribution) -> Result<PreprocessParams> {
    if !dist.has_infinite_support() {
        let j0 = dist.max_support();
        if j0 == 0 {
            return Err(Error::NoAdmissibleParams(format!("{}: no positive-degree support", dist.label())));
        }
        let params = PreprocessParams { eta0: dist.prob(j0) / 20.0, j0, j1: j0 };
        params.validate(dist)?;
        return Ok(params);
    }
    for j0 in 1..=5000usize {
        if dist.exact_prob(j0) <= 0.0 {
            continue;
        }
        let limit = (j0 as f64 / 10.0).exp();
        let lhs = dist.tail_gt(j0);
        let mut j1 = j0;
        while (j1 as f64) < limit {
            let eta0 = dist.tail_mean_gt(j1);
            if eta0 > 0.0 && lhs >= 10.0 * eta0 {
                return Ok(PreprocessParams { eta0, j0, j1 });
            }
            j1 += 1;
        }
    }
    Err(Error::NoAdmissibleParams(format!("{}: scan up to j0 = 5000 found nothing", dist.label())))
}

/// mu_{eta0, j0}: the law truncated at j0 with an extra 4 eta0 atom at 0.
pub fn surgery_distribution(dist: &OffspringDistribution, params: &PreprocessParams) -> Result<OffspringDistribution> {
    params.validate(dist)?;
    let j0 = params.j0;
    let eta4 = 4.0 * params.eta0;
    let mut pmf = vec![0.0; j0 + 1];
    if dist.has_infinite_support() {
        let mass = 1.0 - dist.tail_gt(j0);
        for (k, slot) in pmf.iter_mut().enumerate() {
            *slot = (1.0 - eta4) * dist.exact_prob(k) / mass;
        }
    } else {
        for (k, slot) in pmf.iter_mut().enumerate().take(j0) {
            *slot = dist.prob(k);
        }
        pmf[j0] = dist.prob(j0) - eta4;
    }
    pmf[0] += eta4;
    let total: f64 = pmf.iter().sum();
    for p in pmf.iter_mut() {
        *p /= total;
    }
    Ok(OffspringDistribution::build(Family::Finite, pmf, format!("surgery({},{},{})", dist.label(), params.eta0, j0)))
}

#[derive(Serialize, Deserialize)]
struct DistributionJson {
    label: String,
    pmf: Vec<(usize, String)>,
}

impl OffspringDistribution {
    /// JSON object `{label, pmf: [[k, "p_k"], ...]}`; probabilities are shortest round-trip decimal strings.
    pub fn to_json(&self) -> String {
        let body = DistributionJson {
            label: self.label.clone(),
            pmf: self.pmf.iter().enumerate().filter(|(_, p)| **p > 0.0).map(|(k, p)| (k, format!("{p:e}"))).collect(),
        };
        serde_json::to_string(&body).expect("plain data serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let body: DistributionJson = serde_json::from_str(s)?;
        let pairs = body
            .pmf
            .iter()
            .map(|(k, p)| p.parse::<f64>().map(|p| (*k, p)).map_err(|e| Error::Parse(format!("probability {p:?}: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        Self::from_pairs(&pairs, body.label)
    }

    /// Parses `poisson(3)`, `point-mass(4)`, `geometric(0.2)`, `two-point(0,3,0.4)` or `pmf(0:0.5,2:0.5)`.
    pub fn parse_spec(spec: &str) -> Result<Self> {
        let spec = spec.trim();
        let (name, args) = spec
            .strip_suffix(')')
            .and_then(|s| s.split_once('('))
            .ok_or_else(|| Error::Parse(format!("distribution spec {spec:?} is not name(args)")))?;
        let num = |s: &str| s.trim().parse::<f64>().map_err(|e| Error::Parse(format!("{s:?}: {e}")));
        let int = |s: &str| s.trim().parse::<usize>().map_err(|e| Error::Parse(format!("{s:?}: {e}")));
        match name.trim() {
            "poisson" => Self::poisson(num(args)?),
            "point-mass" | "pm" => Ok(Self::point_mass(int(args)?)),
            "geometric" => Self::geometric(num(args)?),
            "two-point" => {
                let parts: Vec<&str> = args.split(',').collect();
                if parts.len() != 3 {
                    return Err(Error::Parse("two-point(a,b,p_a) needs three arguments".into()));
                }
                let (a, b, pa) = (int(parts[0])?, int(parts[1])?, num(parts[2])?);
                Self::from_pairs(&[(a, pa), (b, 1.0 - pa)], spec.to_string())
            }
            "pmf" => {
                let pairs = args
                    .split(',')
                    .map(|item| {
                        let (k, p) = item.split_once(':').ok_or_else(|| Error::Parse(format!("pmf entry {item:?} is not k:p")))?;
                        Ok((int(k)?, num(p)?))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Self::from_pairs(&pairs, spec.to_string())
            }
            other => Err(Error::Parse(format!("unknown distribution family {other:?}"))),
        }
    }
}
