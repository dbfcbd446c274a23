//! Monte Carlo harness: coupled decay rates across a grid of sample sizes,
//! distribution comparisons against simulated limits, and the i.i.d. Vervaat
//! baseline.
//!
//! Every replication draws one path of length `max(n_grid)` and reuses its
//! prefixes for the smaller `n`, so the rate regressions see no between-`n`
//! sampling noise. Replications run in parallel; results are collected in
//! replication order and summarised by order statistics, so reports do not
//! depend on the number of workers.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::bk_vervaat::{r_star, trimming_width, vervaat, vervaat_error, ReductionField};
use crate::distributions::DistributionSpec;
use crate::error::{Error, Result};
use crate::hermite::{HermiteAnalysis, SubordinationSpec};
use crate::limit_processes::{FbmSampler, HermiteSumSampler, LimitConstants, LimitPath, LimitSurface, SurfaceKind};
use crate::lrd_gauss::{CovarianceSpec, EmbeddingPolicy, PathGenerator};
use crate::seq_processes::{d_norm, level_sup, LevelSlice, Probe, SampleBatch, Side, TwoParamField};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Metric {
    Cor21,
    Prop22,
    Thm22,
    Prop42,
    GcRate,
    Thm23Dist,
    Thm31Dist,
    Thm32Dist,
    IidBaseline,
}

impl Metric {
    pub const ALL: [Metric; 9] = [
        Metric::Cor21,
        Metric::Prop22,
        Metric::Thm22,
        Metric::Prop42,
        Metric::GcRate,
        Metric::Thm23Dist,
        Metric::Thm31Dist,
        Metric::Thm32Dist,
        Metric::IidBaseline,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Cor21 => "cor21",
            Metric::Prop22 => "prop22",
            Metric::Thm22 => "thm22",
            Metric::Prop42 => "prop42",
            Metric::GcRate => "gc_rate",
            Metric::Thm23Dist => "thm23_dist",
            Metric::Thm31Dist => "thm31_dist",
            Metric::Thm32Dist => "thm32_dist",
            Metric::IidBaseline => "iid_baseline",
        }
    }

    pub fn is_coupling(self) -> bool {
        matches!(self, Metric::Cor21 | Metric::Prop22 | Metric::Thm22 | Metric::Prop42 | Metric::GcRate)
    }

    pub fn is_distribution(self) -> bool {
        matches!(self, Metric::Thm23Dist | Metric::Thm31Dist | Metric::Thm32Dist)
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == s.trim())
            .ok_or_else(|| Error::InvalidPlan(format!("unknown metric `{}`", s.trim())))
    }
}

/// Gaussian driver plus subordination; the marginal `F` follows from `G`.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub covariance: CovarianceSpec<f64>,
    pub subordination: SubordinationSpec<f64>,
}

impl Model {
    pub fn marginal(&self) -> DistributionSpec<f64> {
        self.subordination.marginal()
    }
}

impl Default for Model {
    fn default() -> Self {
        Self {
            covariance: CovarianceSpec::fgn_matched(0.4),
            subordination: SubordinationSpec::QuantileCompose(DistributionSpec::Exponential { rate: 1.0 }),
        }
    }
}

/// Where the limit samples for the distribution metrics come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LimitSource {
    /// Exact fBm when `τ = 1`, the Hermite sum otherwise.
    Auto,
    SpectralFbm,
    HermiteSum,
}

impl FromStr for LimitSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "auto" => Ok(Self::Auto),
            "spectral-fbm" => Ok(Self::SpectralFbm),
            "hermite-sum" => Ok(Self::HermiteSum),
            other => Err(Error::InvalidPlan(format!("unknown limit source `{other}`"))),
        }
    }
}

impl fmt::Display for LimitSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Auto => "auto",
            Self::SpectralFbm => "spectral-fbm",
            Self::HermiteSum => "hermite-sum",
        })
    }
}

pub const DEFAULT_T_LEVELS: usize = 256;
pub const MIN_DIST_REPLICATIONS: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPlan {
    pub model: Model,
    /// Expected rank; checked against the computed one when given.
    pub tau: Option<usize>,
    pub n_grid: Vec<usize>,
    pub replications: usize,
    pub master_seed: u64,
    pub metrics: Vec<Metric>,
    pub trimming: bool,
    pub p_override: Option<usize>,
    /// At most this many `t = j/L` levels per `n` enter the sup over `t`.
    pub t_levels: usize,
    pub probe_y: f64,
    pub probe_t: f64,
    pub limit_source: LimitSource,
    pub limit_m: usize,
    pub limit_m_t: usize,
    pub ks_threshold_bk: f64,
    pub ks_threshold_functional: f64,
    pub policy: EmbeddingPolicy,
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        Self {
            model: Model::default(),
            tau: None,
            n_grid: vec![1 << 8, 1 << 10, 1 << 12, 1 << 14],
            replications: 100,
            master_seed: 20_240_601,
            metrics: vec![Metric::Cor21, Metric::Prop22, Metric::Thm22, Metric::Prop42, Metric::GcRate],
            trimming: true,
            p_override: None,
            t_levels: DEFAULT_T_LEVELS,
            probe_y: 0.8,
            probe_t: 1.0,
            limit_source: LimitSource::Auto,
            limit_m: 1 << 14,
            limit_m_t: 256,
            ks_threshold_bk: 0.15,
            ks_threshold_functional: 0.2,
            policy: EmbeddingPolicy::default(),
        }
    }
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<()> {
        self.model.covariance.validate()?;
        self.model.subordination.validate()?;
        if self.n_grid.is_empty() {
            return Err(Error::InvalidPlan("n_grid must not be empty".into()));
        }
        if self.n_grid[0] == 0 {
            return Err(Error::InvalidPlan("n_grid entries must be at least 1".into()));
        }
        if self.n_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidPlan("n_grid must be strictly increasing".into()));
        }
        if self.replications == 0 {
            return Err(Error::InvalidPlan("replications must be at least 1".into()));
        }
        if self.metrics.is_empty() {
            return Err(Error::InvalidPlan("no metrics enabled".into()));
        }
        let mut seen = self.metrics.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.metrics.len() {
            return Err(Error::InvalidPlan("metrics listed twice".into()));
        }
        if self.metrics.iter().any(|m| m.is_distribution()) && self.replications < MIN_DIST_REPLICATIONS {
            return Err(Error::InvalidPlan(format!(
                "distribution metrics need at least {MIN_DIST_REPLICATIONS} replications"
            )));
        }
        if self.t_levels == 0 || self.limit_m_t == 0 {
            return Err(Error::InvalidPlan("t_levels and limit_m_t must be positive".into()));
        }
        if !(self.probe_y > 0.0 && self.probe_y < 1.0) || !(self.probe_t > 0.0 && self.probe_t <= 1.0) {
            return Err(Error::InvalidPlan("probe must satisfy 0 < y < 1, 0 < t <= 1".into()));
        }
        if self.p_override == Some(0) {
            return Err(Error::InvalidPlan("p_override must be positive".into()));
        }
        Ok(())
    }

    pub fn n_max(&self) -> usize {
        *self.n_grid.last().expect("validated")
    }

    fn has(&self, m: Metric) -> bool {
        self.metrics.contains(&m)
    }

    /// Analysis with the rank checked against `tau` and `τD < 1`.
    pub fn analysis(&self) -> Result<Arc<HermiteAnalysis<f64>>> {
        let analysis = HermiteAnalysis::new(&self.model.subordination)?;
        if let Some(t) = self.tau {
            if t != analysis.tau() {
                return Err(Error::InvalidPlan(format!("tau = {t} but G has Hermite rank {}", analysis.tau())));
            }
        }
        if analysis.tau() as f64 * self.model.covariance.d >= 1.0 {
            return Err(Error::InvalidPlan(format!(
                "tau * D = {} must be below 1",
                analysis.tau() as f64 * self.model.covariance.d
            )));
        }
        Ok(Arc::new(analysis))
    }
}

/// Which proposition's bounds [`choose_p`] uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PBound {
    Prop21,
    Prop22,
}

/// Smallest integer `p` with `lower < p ≤ upper`.
pub fn choose_p(tau: usize, d: f64, which: PBound) -> Result<usize> {
    let td = tau as f64 * d;
    if !(d > 0.0 && td < 1.0) {
        return Err(Error::InvalidSpec(format!("need 0 < D < 1/tau, got tau = {tau}, D = {d}")));
    }
    let tf = tau as f64;
    let lower = match which {
        PBound::Prop21 => 2f64.max(tf).max(td / (1.0 - td)),
        PBound::Prop22 => (3.0 * tf).max(3.0 * td / (1.0 - td)),
    };
    let upper = ((4.0 - td) / d).max((4.0 - td) / (1.0 - td));
    let p = lower.floor() + 1.0;
    if p <= upper {
        Ok(p as usize)
    } else {
        Err(Error::EmptyInterval { lower, upper })
    }
}

/// `ν`, the `p`s, and the exponents the theory predicts for each metric.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateSpec {
    pub tau: usize,
    pub d: f64,
    pub nu: f64,
    pub p21: Option<usize>,
    pub p22: Option<usize>,
}

impl RateSpec {
    pub fn new(tau: usize, d: f64, p_override: Option<usize>) -> Self {
        let td = tau as f64 * d;
        let pick = |w| p_override.or_else(|| choose_p(tau, d, w).ok());
        Self { tau, d, nu: d.min(1.0 - td) / 2.0, p21: pick(PBound::Prop21), p22: pick(PBound::Prop22) }
    }

    /// Log-log slope predicted for the median of `metric`, ignoring `ε`,
    /// slowly varying and log log factors.
    pub fn expected(&self, metric: Metric) -> Option<f64> {
        let td = self.tau as f64 * self.d;
        match metric {
            Metric::Cor21 => self.p21.map(|p| -self.nu * p as f64 / 2.0 + td / 4.0),
            Metric::Thm22 => self.p22.map(|p| -self.nu * p as f64 / 2.0 + 3.0 * td / 4.0),
            Metric::Prop22 | Metric::Prop42 | Metric::GcRate => Some(-td / 2.0),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    pub intercept_se: f64,
}

/// Ordinary least squares of `ln value` on `ln n`.
pub fn regress_rate(points: &[(usize, f64)]) -> Result<RateFit> {
    if points.len() < 3 {
        return Err(Error::InvalidPlan(format!("rate regression needs 3 points, got {}", points.len())));
    }
    if let Some(&(n, value)) = points.iter().find(|(n, v)| !(*v > 0.0) || *n == 0 || !v.is_finite()) {
        return Err(Error::NonPositiveValue { n, value });
    }
    let m = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|(n, _)| (*n as f64).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|(_, v)| v.ln()).collect();
    let xbar = xs.iter().sum::<f64>() / m;
    let ybar = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - xbar).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidPlan("rate regression needs distinct n".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xbar) * (y - ybar)).sum();
    let slope = sxy / sxx;
    let intercept = ybar - slope * xbar;
    let rss: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let s2 = rss / (m - 2.0);
    Ok(RateFit {
        slope,
        intercept,
        slope_se: (s2 / sxx).sqrt(),
        intercept_se: (s2 * (1.0 / m + xbar * xbar / sxx)).sqrt(),
    })
}

/// Two-sample Kolmogorov–Smirnov statistic `sup |F_a - F_b|`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    // |i/na - j/nb| is compared as the integer |i·nb - j·na| so that ties
    // with a threshold such as 9/60 are not decided by rounding
    let (na, nb) = (a.len() as u64, b.len() as u64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0u64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as u64 * nb).abs_diff(j as u64 * na));
    }
    if na == 0 || nb == 0 {
        return 0.0;
    }
    d as f64 / (na * nb) as f64
}

/// Asymptotic 1% critical value of the two-sample KS statistic.
pub fn ks_critical_1pct(n: usize, m: usize) -> f64 {
    let (n, m) = (n as f64, m as f64);
    1.628 * ((n + m) / (n * m)).sqrt()
}

/// Median and quartiles (linear interpolation between order statistics).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
}

pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn summarize(values: &[f64]) -> Summary {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Summary { median: quantile_sorted(&v, 0.5), q1: quantile_sorted(&v, 0.25), q3: quantile_sorted(&v, 0.75) }
}

/// Independent random streams derived from the master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Coupling = 1,
    Distribution = 2,
    Limit = 3,
    Baseline = 4,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(master: u64, stream: Stream, index: u64) -> u64 {
    splitmix(splitmix(master ^ splitmix(stream as u64)) ^ index)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateRow {
    pub metric: String,
    pub n: usize,
    pub summary: Summary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlopeRow {
    pub metric: String,
    pub fit: Option<RateFit>,
    pub expected: Option<f64>,
    /// Medians strictly decrease along the grid.
    pub monotone: bool,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistRow {
    pub metric: String,
    pub y: f64,
    pub t: f64,
    /// `None` when the limit is degenerate at the probe.
    pub ks: Option<f64>,
    pub threshold: f64,
    pub degenerate: bool,
    pub pass: bool,
}

/// A scalar check with its reference value.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckRow {
    pub name: String,
    pub value: f64,
    pub reference: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Provenance {
    pub master_seed: u64,
    pub replications: usize,
    pub n_grid: Vec<usize>,
    pub tau: usize,
    pub d: f64,
    pub nu: f64,
    pub p21: Option<usize>,
    pub p22: Option<usize>,
    pub sampling: String,
    pub limit_method: String,
    pub limit_m: Option<usize>,
    pub limit_m_t: usize,
    pub t_levels: usize,
    pub constants: Option<LimitConstants<f64>>,
    pub seeds: Vec<(String, u64, u64)>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExperimentReport {
    pub rates: Vec<RateRow>,
    pub slopes: Vec<SlopeRow>,
    pub dists: Vec<DistRow>,
    pub checks: Vec<CheckRow>,
    pub provenance: Provenance,
}

impl ExperimentReport {
    pub fn slope(&self, metric: &str) -> Option<&SlopeRow> {
        self.slopes.iter().find(|s| s.metric == metric)
    }

    pub fn dist(&self, metric: &str) -> Option<&DistRow> {
        self.dists.iter().find(|s| s.metric == metric)
    }

    pub fn check(&self, name: &str) -> Option<&CheckRow> {
        self.checks.iter().find(|s| s.name == name)
    }

    pub fn medians(&self, metric: &str) -> Vec<(usize, f64)> {
        self.rates.iter().filter(|r| r.metric == metric).map(|r| (r.n, r.summary.median)).collect()
    }

    fn merge(&mut self, other: ExperimentReport) {
        self.rates.extend(other.rates);
        self.slopes.extend(other.slopes);
        self.dists.extend(other.dists);
        self.checks.extend(other.checks);
        self.provenance.seeds.extend(other.provenance.seeds);
        self.provenance.notes.extend(other.provenance.notes);
        if other.provenance.limit_m.is_some() || !other.provenance.limit_method.is_empty() {
            self.provenance.limit_method = other.provenance.limit_method;
            self.provenance.limit_m = other.provenance.limit_m;
        }
        if other.provenance.constants.is_some() {
            self.provenance.constants = other.provenance.constants;
        }
    }
}

fn base_provenance(plan: &ExperimentPlan, tau: usize, rates: &RateSpec, sampling: String) -> Provenance {
    Provenance {
        master_seed: plan.master_seed,
        replications: plan.replications,
        n_grid: plan.n_grid.clone(),
        tau,
        d: plan.model.covariance.d,
        nu: rates.nu,
        p21: rates.p21,
        p22: rates.p22,
        sampling,
        limit_m_t: plan.limit_m_t,
        t_levels: plan.t_levels,
        ..Provenance::default()
    }
}

fn sampling_name(gen: &PathGenerator<f64>) -> String {
    use crate::lrd_gauss::SamplingMethod::*;
    match gen.method() {
        Direct => "direct".into(),
        Circulant => "circulant".into(),
        Cholesky => "cholesky".into(),
        ClippedCirculant { negative_mass } => format!("clipped-circulant(negative_mass={negative_mass:.6e})"),
    }
}

/// `{[n j/L] : j = 1..L}` with `L = min(n, t_levels)`, merged over the grid.
pub fn level_set(n_grid: &[usize], t_levels: usize) -> Vec<usize> {
    let mut ks: Vec<usize> = n_grid
        .iter()
        .flat_map(|&n| {
            let l = n.min(t_levels);
            (1..=l).map(move |j| n * j / l)
        })
        .collect();
    ks.sort_unstable();
    ks.dedup();
    ks
}

fn sample_batch(model: &Model, eta: &[f64]) -> Result<SampleBatch<f64>> {
    let u = eta.iter().map(|&e| model.subordination.pit(e)).collect();
    let x = eta.iter().map(|&e| model.subordination.transform(e)).collect();
    SampleBatch::new(u, Some(x))
}

fn d_grid(plan: &ExperimentPlan, tau: usize) -> Result<Vec<f64>> {
    let cov = &plan.model.covariance;
    plan.n_grid.iter().map(|&n| d_norm(n, tau, cov.d, cov.normalizing_l(n as f64))).collect()
}

struct CouplingCtx<'a> {
    analysis: &'a HermiteAnalysis<f64>,
    dist: DistributionSpec<f64>,
    n_grid: &'a [usize],
    /// Trimming widths per grid entry (zero when trimming is off).
    deltas: Vec<f64>,
}

#[derive(Clone, Copy)]
struct PointCache {
    j: f64,
    jj: f64,
    q: f64,
    fq: f64,
}

impl CouplingCtx<'_> {
    fn point(&self, y: f64) -> PointCache {
        let j = self.analysis.j(y);
        let jj = if j == 0.0 { 0.0 } else { j * self.analysis.j_prime(y) };
        let q = self.dist.quantile(y);
        PointCache { j, jj, q, fq: self.dist.pdf(q) }
    }
}

/// Per-level raw suprema: `[cor21, prop22, thm22]` and `prop42` per grid
/// entry. Coupling differences are not polynomial in `y` within a cell, so
/// they are inspected at every breakpoint and both one-sided limits; this is
/// a lower bound for the supremum.
struct LevelSups {
    first: [f64; 3],
    trimmed: Vec<f64>,
}

fn level_sups(ctx: &CouplingCtx<'_>, level: &LevelSlice<f64>, s_k: f64) -> LevelSups {
    let k = level.k();
    let kf = k as f64;
    let mut out = LevelSups { first: [0.0; 3], trimmed: vec![0.0; ctx.n_grid.len()] };
    let rho = |p: &Probe<f64>, c: &PointCache| {
        let diff = c.q - level.x_order_stat(p.index);
        if diff == 0.0 {
            return 0.0;
        }
        let g = kf * diff;
        let r = c.fq * g;
        if r.is_nan() {
            g
        } else {
            r
        }
    };
    let mut visit = |p: &Probe<f64>, c: &PointCache, only_trimmed: Option<usize>| {
        let v = c.j * s_k;
        if only_trimmed.is_none() {
            let alpha = p.count as f64 - kf * p.y;
            let uhat = level.order_stat(p.index);
            let u = kf * (p.y - uhat);
            let rstar = p.count as f64 + kf * uhat - 2.0 * kf * p.y;
            out.first[0] = out.first[0].max((alpha - v).abs());
            out.first[1] = out.first[1].max((u - v).abs());
            out.first[2] = out.first[2].max((kf * rstar - c.jj * s_k * s_k).abs());
        }
        let r = (rho(p, c) - v).abs();
        for (g, &delta) in ctx.deltas.iter().enumerate() {
            let inside = p.y >= delta && p.y <= 1.0 - delta;
            if inside && only_trimmed.is_none_or(|o| o == g) {
                out.trimmed[g] = out.trimmed[g].max(r);
            }
        }
    };
    let (probes, cells) = level.sweep(0.0, 1.0);
    let cache: Vec<PointCache> = probes.iter().map(|p| ctx.point(p.y)).collect();
    for (p, c) in probes.iter().zip(&cache) {
        visit(p, c, None);
    }
    for (i, cell) in cells.iter().enumerate() {
        visit(&cell.at(cell.lo), &cache[i], None);
        visit(&cell.at(cell.hi), &cache[i + 1], None);
    }
    for (g, &delta) in ctx.deltas.iter().enumerate() {
        if k > ctx.n_grid[g] || delta <= 0.0 || delta >= 0.5 {
            continue;
        }
        for (y, side) in [(delta, Side::Right), (delta, Side::Value), (1.0 - delta, Side::Left), (1.0 - delta, Side::Value)] {
            let c = ctx.point(y);
            visit(&level.probe(y, side), &c, Some(g));
        }
    }
    out
}

/// `sup_y |Û_k(y) - y|` on one level.
fn gc_sup(level: &LevelSlice<f64>) -> f64 {
    let kf = level.k() as f64;
    level
        .sorted_u()
        .iter()
        .enumerate()
        .map(|(i, &u)| (u - i as f64 / kf).abs().max((u - (i + 1) as f64 / kf).abs()))
        .fold(0.0, f64::max)
}

/// `[cor21, prop22, thm22, prop42, gc]` per grid entry for one path.
fn coupling_replication(
    plan: &ExperimentPlan,
    ctx: &CouplingCtx<'_>,
    generator: &PathGenerator<f64>,
    levels: &[usize],
    d_n: &[f64],
    seed: u64,
) -> Result<Vec<[f64; 5]>> {
    let eta = generator.sample_values(seed);
    let batch = sample_batch(&plan.model, &eta)?;
    let reduction = ReductionField::new(&eta, Arc::new(ctx.analysis.clone()));
    let g_len = plan.n_grid.len();
    let mut raw = vec![[0.0f64; 5]; g_len];
    for &k in levels {
        let level = batch.level(k);
        let sups = level_sups(ctx, &level, reduction.partial_sum(k));
        for (g, &n) in plan.n_grid.iter().enumerate() {
            if k > n {
                continue;
            }
            for m in 0..3 {
                raw[g][m] = raw[g][m].max(sups.first[m]);
            }
            raw[g][3] = raw[g][3].max(sups.trimmed[g]);
            if k == n {
                raw[g][4] = gc_sup(&level);
            }
        }
    }
    for (g, row) in raw.iter_mut().enumerate() {
        let d = d_n[g];
        row[0] /= d;
        row[1] /= d;
        row[2] /= d * d;
        row[3] /= d;
    }
    Ok(raw)
}

fn slope_row(metric: Metric, medians: &[(usize, f64)], rates: &RateSpec, notes: &mut Vec<String>) -> SlopeRow {
    let fit = match regress_rate(medians) {
        Ok(f) => Some(f),
        Err(e) => {
            notes.push(format!("{metric}: no slope ({e})"));
            None
        }
    };
    let monotone = medians.windows(2).all(|w| w[1].1 < w[0].1);
    let slope = fit.map(|f| f.slope);
    let pass = match metric {
        Metric::Cor21 | Metric::Prop42 => slope.is_some_and(|s| s < -0.05),
        Metric::Prop22 | Metric::GcRate => slope.is_some_and(|s| (-0.35..=-0.05).contains(&s)),
        Metric::Thm22 | Metric::IidBaseline => monotone && medians.len() >= 2,
        _ => false,
    };
    SlopeRow { metric: metric.name().into(), fit, expected: rates.expected(metric), monotone, pass }
}

/// The coupled decay experiments (`cor21`, `prop22`, `thm22`, `prop42`,
/// `gc_rate`).
pub fn run_coupling(plan: &ExperimentPlan) -> Result<ExperimentReport> {
    plan.validate()?;
    let analysis = plan.analysis()?;
    let tau = analysis.tau();
    let cov = plan.model.covariance;
    let rates = RateSpec::new(tau, cov.d, plan.p_override);
    let generator = PathGenerator::new(&cov, plan.n_max(), plan.policy)?;
    let mut provenance = base_provenance(plan, tau, &rates, sampling_name(&generator));
    let d_n = d_grid(plan, tau)?;
    let deltas = plan
        .n_grid
        .iter()
        .map(|&n| if plan.trimming { trimming_width(n, tau, cov.d, cov.normalizing_l(n as f64)) } else { 0.0 })
        .collect();
    let ctx = CouplingCtx { analysis: &analysis, dist: plan.model.marginal(), n_grid: &plan.n_grid, deltas };
    let levels = level_set(&plan.n_grid, plan.t_levels);
    let seeds: Vec<u64> = (0..plan.replications as u64).map(|r| derive_seed(plan.master_seed, Stream::Coupling, r)).collect();
    let records: Vec<Vec<[f64; 5]>> = seeds
        .par_iter()
        .map(|&s| coupling_replication(plan, &ctx, &generator, &levels, &d_n, s))
        .collect::<Result<_>>()?;
    provenance.seeds.push(("coupling".into(), seeds[0], *seeds.last().expect("replications >= 1")));

    let mut report = ExperimentReport::default();
    let metrics = [Metric::Cor21, Metric::Prop22, Metric::Thm22, Metric::Prop42, Metric::GcRate];
    for (m, metric) in metrics.into_iter().enumerate() {
        if !plan.has(metric) {
            continue;
        }
        let mut medians = Vec::new();
        for (g, &n) in plan.n_grid.iter().enumerate() {
            let values: Vec<f64> = records.iter().map(|r| r[g][m]).collect();
            let summary = summarize(&values);
            medians.push((n, summary.median));
            report.rates.push(RateRow { metric: metric.name().into(), n, summary });
        }
        report.slopes.push(slope_row(metric, &medians, &rates, &mut provenance.notes));
    }
    if plan.has(Metric::Prop42) {
        let dist = plan.model.marginal();
        let cond = crate::distributions::check_conditions(&dist, tau, cov.d, 2000);
        match cond {
            Ok(c) if !c.satisfies_i_through_iii() => {
                provenance.notes.push(format!("prop42: marginal {dist} violates conditions (i)-(iii)"))
            }
            Err(e) => provenance.notes.push(format!("prop42: conditions not checked ({e})")),
            _ => {}
        }
    }
    report.provenance = provenance;
    Ok(report)
}

enum LimitSampler {
    Fbm(FbmSampler<f64>),
    HermiteSum(HermiteSumSampler<f64>),
}

impl LimitSampler {
    fn new(plan: &ExperimentPlan, tau: usize) -> Result<(Self, String, Option<usize>)> {
        let cov = plan.model.covariance;
        let fbm = match plan.limit_source {
            LimitSource::Auto => tau == 1,
            LimitSource::SpectralFbm => {
                if tau != 1 {
                    return Err(Error::InvalidPlan("spectral-fbm limit needs tau = 1".into()));
                }
                true
            }
            LimitSource::HermiteSum => false,
        };
        if fbm {
            let h = 1.0 - cov.d / 2.0;
            Ok((Self::Fbm(FbmSampler::new(h, plan.limit_m_t)?), "spectral-fbm".into(), None))
        } else {
            let s = HermiteSumSampler::new(tau, &cov, plan.limit_m, plan.limit_m_t, plan.policy)?;
            Ok((Self::HermiteSum(s), format!("hermite-sum(m={})", plan.limit_m), Some(plan.limit_m)))
        }
    }

    fn sample(&self, seed: u64) -> LimitPath<f64> {
        match self {
            Self::Fbm(s) => s.sample(seed),
            Self::HermiteSum(s) => s.sample(seed),
        }
    }
}

/// Statistic values of one pre-limit path at `n = max(n_grid)`.
struct DistRecord {
    bk: f64,
    bk_mid: f64,
    bk_sup: f64,
    vervaat: f64,
    q: f64,
}

const DEGENERATE_PROBE: f64 = 0.5;

/// Distribution comparisons (`thm23_dist`, `thm31_dist`, `thm32_dist`) at
/// `n = max(n_grid)`, including the sup functional of the normalised
/// Bahadur–Kiefer process with `thm23_dist`.
pub fn run_distribution(plan: &ExperimentPlan) -> Result<ExperimentReport> {
    plan.validate()?;
    let analysis = plan.analysis()?;
    let tau = analysis.tau();
    let cov = plan.model.covariance;
    let rates = RateSpec::new(tau, cov.d, plan.p_override);
    let n = plan.n_max();
    let generator = PathGenerator::new(&cov, n, plan.policy)?;
    let mut provenance = base_provenance(plan, tau, &rates, sampling_name(&generator));
    let d_n = d_norm(n, tau, cov.d, cov.normalizing_l(n as f64))?;
    let (y, t) = (plan.probe_y, plan.probe_t);
    let k_probe = crate::seq_processes::level_index(n, t);
    let sup_levels = level_set(&[n], plan.t_levels);
    let want_sup = plan.has(Metric::Thm23Dist);

    let seeds: Vec<u64> = (0..plan.replications as u64).map(|r| derive_seed(plan.master_seed, Stream::Distribution, r)).collect();
    let rstar = r_star::<f64>();
    let vv = vervaat(d_n);
    let qq = vervaat_error(d_n);
    let records: Vec<DistRecord> = seeds
        .par_iter()
        .map(|&s| -> Result<DistRecord> {
            let eta = generator.sample_values(s);
            let batch = sample_batch(&plan.model, &eta)?;
            let level = batch.level(k_probe);
            let kf = k_probe as f64;
            let bk_sup = if want_sup {
                sup_levels
                    .iter()
                    .map(|&k| k as f64 * level_sup(&rstar, &batch.level(k), (0.0, 1.0)))
                    .fold(0.0, f64::max)
                    / (d_n * d_n)
            } else {
                0.0
            };
            Ok(DistRecord {
                bk: kf * rstar.eval(&level, y, Side::Value) / (d_n * d_n),
                bk_mid: kf * rstar.eval(&level, DEGENERATE_PROBE, Side::Value) / (d_n * d_n),
                bk_sup,
                vervaat: vv.eval(&level, y, Side::Value),
                q: kf * qq.eval(&level, y, Side::Value) / d_n,
            })
        })
        .collect::<Result<_>>()?;
    provenance.seeds.push(("distribution".into(), seeds[0], *seeds.last().expect("replications >= 1")));

    let (sampler, method, m) = LimitSampler::new(plan, tau)?;
    provenance.limit_method = method;
    provenance.limit_m = m;
    let limit_seeds: Vec<u64> = (0..plan.replications as u64).map(|r| derive_seed(plan.master_seed, Stream::Limit, r)).collect();
    let paths: Vec<LimitPath<f64>> = limit_seeds.par_iter().map(|&s| sampler.sample(s)).collect();
    provenance.seeds.push(("limit".into(), limit_seeds[0], *limit_seeds.last().expect("replications >= 1")));
    if plan.replications < 200 {
        provenance.notes.push(format!("KS comparisons use only {} replications", plan.replications));
    }

    let surface = |kind| LimitSurface::new(kind, analysis.clone(), cov.d);
    let bk_surface = surface(SurfaceKind::BahadurKiefer)?;
    provenance.constants = Some(bk_surface.constants);
    let mut report = ExperimentReport::default();
    let compare = |metric: &str, pre: Vec<f64>, lim: Vec<f64>, y: f64, threshold: f64, degenerate: bool| {
        let ks = (!degenerate).then(|| ks_two_sample(&pre, &lim));
        DistRow {
            metric: metric.into(),
            y,
            t,
            ks,
            threshold,
            degenerate,
            pass: ks.map_or(degenerate, |k| k <= threshold),
        }
    };
    if plan.has(Metric::Thm23Dist) {
        let pre = records.iter().map(|r| r.bk).collect();
        let lim = paths.iter().map(|p| bk_surface.eval(p, y, t)).collect::<Result<_>>()?;
        report.dists.push(compare("thm23_dist", pre, lim, y, plan.ks_threshold_bk, bk_surface.is_degenerate(y)));
        let mid_degenerate = bk_surface.is_degenerate(DEGENERATE_PROBE);
        report.dists.push(DistRow {
            metric: "thm23_degenerate".into(),
            y: DEGENERATE_PROBE,
            t,
            ks: None,
            threshold: plan.ks_threshold_bk,
            degenerate: mid_degenerate,
            pass: mid_degenerate,
        });
        let mid: Vec<f64> = records.iter().map(|r| r.bk_mid.abs()).collect();
        report.checks.push(CheckRow {
            name: "thm23_degenerate_median_abs".into(),
            value: summarize(&mid).median,
            reference: 0.0,
            pass: mid_degenerate,
        });
        let k2 = analysis.kappas().k2;
        let pre = records.iter().map(|r| r.bk_sup).collect();
        let lim = paths.iter().map(|p| bk_surface.constants.c_weak * k2 * p.sup_abs_pow(2)).collect();
        report.dists.push(compare("thm24_sup", pre, lim, f64::NAN, plan.ks_threshold_functional, false));
    }
    if plan.has(Metric::Thm31Dist) {
        let s = surface(SurfaceKind::Vervaat)?;
        let pre = records.iter().map(|r| r.vervaat).collect();
        let lim = paths.iter().map(|p| s.eval(p, y, t)).collect::<Result<_>>()?;
        report.dists.push(compare("thm31_dist", pre, lim, y, plan.ks_threshold_functional, s.is_degenerate(y)));
    }
    if plan.has(Metric::Thm32Dist) {
        let s = surface(SurfaceKind::VervaatError)?;
        let pre: Vec<f64> = records.iter().map(|r| r.q).collect();
        let lim: Vec<f64> = paths.iter().map(|p| s.eval(p, y, t)).collect::<Result<_>>()?;
        let pre_median = summarize(&pre).median;
        let y3: Vec<f64> = paths.iter().map(|p| p.eval(t).powi(3)).collect();
        let predicted = s.profile(y) * summarize(&y3).median;
        report.checks.push(CheckRow {
            name: "thm32_sign".into(),
            value: pre_median,
            reference: predicted,
            pass: pre_median.signum() == predicted.signum() && pre_median != 0.0 && predicted != 0.0,
        });
        report.dists.push(compare("thm32_dist", pre, lim, y, plan.ks_threshold_functional, s.is_degenerate(y)));
    }
    report.provenance = provenance;
    Ok(report)
}

/// The i.i.d. uniform Vervaat baseline with `d_n = √n`.
pub fn iid_baseline(plan: &ExperimentPlan) -> Result<ExperimentReport> {
    plan.validate()?;
    let n_max = plan.n_max();
    let seeds: Vec<u64> = (0..plan.replications as u64).map(|r| derive_seed(plan.master_seed, Stream::Baseline, r)).collect();
    let records: Vec<Vec<(f64, f64)>> = seeds
        .par_iter()
        .map(|&s| -> Result<Vec<(f64, f64)>> {
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let u: Vec<f64> = (0..n_max).map(|_| rng.random::<f64>()).collect();
            let batch = SampleBatch::new(u, None)?;
            Ok(plan
                .n_grid
                .iter()
                .map(|&n| {
                    let d = (n as f64).sqrt();
                    let level = batch.level(n);
                    let q_sup = level_sup(&vervaat_error(d), &level, (0.0, 1.0));
                    (q_sup, vervaat(d).eval(&level, 0.5, Side::Value))
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    let mut report = ExperimentReport::default();
    let mut notes = Vec::new();
    let mut medians = Vec::new();
    for (g, &n) in plan.n_grid.iter().enumerate() {
        let values: Vec<f64> = records.iter().map(|r| r[g].0).collect();
        let summary = summarize(&values);
        medians.push((n, summary.median));
        report.rates.push(RateRow { metric: "iid_baseline".into(), n, summary });
    }
    let rates = RateSpec { tau: 1, d: f64::NAN, nu: f64::NAN, p21: None, p22: None };
    report.slopes.push(slope_row(Metric::IidBaseline, &medians, &rates, &mut notes));

    let v: Vec<f64> = records.iter().map(|r| r[plan.n_grid.len() - 1].1).collect();
    let m = v.len() as f64;
    let mean = v.iter().sum::<f64>() / m;
    let se = if v.len() > 1 { (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0) / m).sqrt() } else { f64::INFINITY };
    report.checks.push(CheckRow {
        name: "iid_vervaat_mean".into(),
        value: mean,
        reference: 0.25,
        pass: (mean - 0.25).abs() <= 3.0 * se,
    });
    report.checks.push(CheckRow { name: "iid_vervaat_mean_se".into(), value: se, reference: 0.0, pass: true });
    report.provenance.seeds.push(("baseline".into(), seeds[0], *seeds.last().expect("replications >= 1")));
    report.provenance.notes = notes;
    Ok(report)
}

/// Runs every enabled metric group and merges the reports.
pub fn run_plan(plan: &ExperimentPlan) -> Result<ExperimentReport> {
    plan.validate()?;
    let analysis = plan.analysis()?;
    let tau = analysis.tau();
    let rates = RateSpec::new(tau, plan.model.covariance.d, plan.p_override);
    let generator_name = {
        let cov = plan.model.covariance;
        sampling_name(&PathGenerator::new(&cov, plan.n_max(), plan.policy)?)
    };
    let mut report = ExperimentReport { provenance: base_provenance(plan, tau, &rates, generator_name), ..Default::default() };
    if plan.metrics.iter().any(|m| m.is_coupling()) {
        report.merge(run_coupling(plan)?);
    }
    if plan.metrics.iter().any(|m| m.is_distribution()) {
        report.merge(run_distribution(plan)?);
    }
    if plan.has(Metric::IidBaseline) {
        report.merge(iid_baseline(plan)?);
    }
    Ok(report)
}
