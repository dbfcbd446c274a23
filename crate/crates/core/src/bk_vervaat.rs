//! Bahadur–Kiefer and Vervaat processes, the auxiliary `A_n` and `Z_n`, the
//! reduction field `V(y, nt) = J_τ(y) S_{[nt]}` and the coupling differences
//! between the two.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::distributions::DistributionSpec;
use crate::error::Result;
use crate::hermite::{hermite_poly, HermiteAnalysis};
use crate::lrd_gauss::GaussianPath;
use crate::quadrature::{integrate_adaptive, GaussLegendre};
use crate::scalar::{factorial, Scalar};
use crate::seq_processes::{raw_rho, LevelSlice, Probe, SampleBatch, Side, TwoParamField};

/// `V(y, k) = J_τ(y) S_k` with `S_k = Σ_{i≤k} H_τ(η_i)/τ!`.
#[derive(Debug, Clone)]
pub struct ReductionField<T> {
    analysis: Arc<HermiteAnalysis<T>>,
    sums: Vec<T>,
}

impl<T: Scalar> ReductionField<T> {
    pub fn new(eta: &[T], analysis: Arc<HermiteAnalysis<T>>) -> Self {
        let tau = analysis.tau();
        let scale = factorial::<T>(tau);
        let mut sums = Vec::with_capacity(eta.len() + 1);
        let mut acc = T::zero();
        sums.push(acc);
        for &e in eta {
            acc += hermite_poly(tau, e) / scale;
            sums.push(acc);
        }
        Self { analysis, sums }
    }

    pub fn analysis(&self) -> &HermiteAnalysis<T> {
        &self.analysis
    }

    pub fn len(&self) -> usize {
        self.sums.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `S_k`.
    pub fn partial_sum(&self, k: usize) -> T {
        self.sums[k]
    }

    pub fn partial_sums(&self) -> &[T] {
        &self.sums
    }

    /// `V(y, k)`.
    pub fn eval(&self, y: T, k: usize) -> T {
        self.analysis.j(y) * self.sums[k]
    }
}

pub fn reduction_field<T: Scalar>(path: &GaussianPath<T>, analysis: &HermiteAnalysis<T>) -> ReductionField<T> {
    ReductionField::new(&path.values, Arc::new(analysis.clone()))
}

/// `N + kÛ - 2ky`, i.e. `R*` from its direct form.
fn raw_rstar<T: Scalar>(level: &LevelSlice<T>, p: &Probe<T>) -> T {
    let kf = T::of(level.k());
    T::of(p.count) + kf * level.order_stat(p.index) - T::lit(2.0) * kf * p.y
}

/// `∫_0^s R*(y) dy` in closed form.
fn rstar_integral<T: Scalar>(level: &LevelSlice<T>, s: T, count: usize) -> T {
    let k = level.k();
    let kf = T::of(k);
    let q = scaled_floor_index(s, k);
    let tail = if q < k {
        (s * kf - T::of(q)) * level.order_stat(q + 1)
    } else {
        T::zero()
    };
    T::of(count) * s - level.prefix_sum(count) + level.prefix_sum(q) + tail - kf * s * s
}

fn scaled_floor_index<T: Scalar>(s: T, k: usize) -> usize {
    let p = s * T::of(k);
    let r = p.round();
    let tol = T::lit(8.0) * T::epsilon() * p.abs().max(T::one());
    let f = if (p - r).abs() <= tol { r } else { p.floor() };
    f.max(T::zero()).to_usize().unwrap_or(0).min(k)
}

/// `(2k/d²)[(N - j)a - (P_N - P_j) + k(s-a)²/2]` with `a = U_(j) = Û(s)`.
fn raw_a<T: Scalar>(level: &LevelSlice<T>, p: &Probe<T>) -> T {
    let a = level.order_stat(p.index);
    let kf = T::of(level.k());
    let diff = p.y - a;
    (T::of(p.count) - T::of(p.index)) * a - (level.prefix_sum(p.count) - level.prefix_sum(p.index))
        + kf * diff * diff / T::lit(2.0)
}

/// The derived processes of one sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DerivedKind {
    /// `R*_n = d_n(α_n - u_n)`
    RStar,
    /// `R_n = d_n(α_n - ρ_n)`
    RGeneral,
    /// `V_n = 2d_n⁻²[nt]∫_0^s R*_n`
    Vervaat,
    /// `Q_n = V_n - α_n²`
    VervaatError,
    /// `A_n = 2d_n⁻¹[nt]∫_{Û(s)}^s (α_n(y) - α_n(s)) dy`
    A,
}

#[derive(Debug, Clone)]
pub struct DerivedField<T> {
    pub kind: DerivedKind,
    pub d_n: T,
    dist: Option<DistributionSpec<T>>,
}

impl<T: Scalar> DerivedField<T> {
    pub fn new(kind: DerivedKind, d_n: T) -> Self {
        Self { kind, d_n, dist: None }
    }

    /// `R_n` for marginal `F`.
    pub fn general(d_n: T, dist: DistributionSpec<T>) -> Self {
        Self { kind: DerivedKind::RGeneral, d_n, dist: Some(dist) }
    }
}

impl<T: Scalar> TwoParamField<T> for DerivedField<T> {
    fn eval_state(&self, level: &LevelSlice<T>, p: &Probe<T>) -> T {
        let k = level.k();
        if k == 0 {
            return T::zero();
        }
        let kf = T::of(k);
        let d2 = self.d_n * self.d_n;
        let two = T::lit(2.0);
        match self.kind {
            DerivedKind::RStar => raw_rstar(level, p),
            DerivedKind::RGeneral => {
                let dist = self.dist.as_ref().expect("general R needs F");
                T::of(p.count) - kf * p.y - raw_rho(dist, level, p)
            }
            DerivedKind::Vervaat => two * kf / d2 * rstar_integral(level, p.y, p.count),
            DerivedKind::VervaatError => {
                let alpha = (T::of(p.count) - kf * p.y) / self.d_n;
                two * kf / d2 * rstar_integral(level, p.y, p.count) - alpha * alpha
            }
            DerivedKind::A => two * kf / d2 * raw_a(level, p),
        }
    }

    fn cell_degree(&self) -> Option<usize> {
        match self.kind {
            DerivedKind::RStar => Some(1),
            DerivedKind::RGeneral => None,
            _ => Some(2),
        }
    }
}

/// `r_star` and friends as named constructors.
pub fn r_star<T: Scalar>() -> DerivedField<T> {
    DerivedField::new(DerivedKind::RStar, T::one())
}

pub fn r_general<T: Scalar>(d_n: T, dist: DistributionSpec<T>) -> DerivedField<T> {
    DerivedField::general(d_n, dist)
}

pub fn vervaat<T: Scalar>(d_n: T) -> DerivedField<T> {
    DerivedField::new(DerivedKind::Vervaat, d_n)
}

pub fn vervaat_error<T: Scalar>(d_n: T) -> DerivedField<T> {
    DerivedField::new(DerivedKind::VervaatError, d_n)
}

pub fn a_process<T: Scalar>(d_n: T) -> DerivedField<T> {
    DerivedField::new(DerivedKind::A, d_n)
}

/// `Z_n(s,t) = 2d_n⁻² V(s,k) ∫_0^1 (V(s - w k⁻¹V(s,k), k) - V(s,k)) dw`, with
/// the argument clamped to `[0,1]`.
#[derive(Debug, Clone)]
pub struct ZField<T> {
    reduction: Arc<ReductionField<T>>,
    pub d_n: T,
}

pub const Z_TOL: f64 = 1e-10;

impl<T: Scalar> ZField<T> {
    pub fn new(reduction: Arc<ReductionField<T>>, d_n: T) -> Self {
        Self { reduction, d_n }
    }

    /// `∫_0^1 J(clamp(s - wc)) dw`.
    pub fn inner_integral(&self, s: T, c: T) -> T {
        let analysis = self.reduction.analysis();
        let f = |w: T| analysis.j((s - w * c).max(T::zero()).min(T::one()));
        let r = integrate_adaptive(f, T::zero(), T::one(), T::lit(Z_TOL), 400);
        if r.converged {
            r.value
        } else {
            GaussLegendre::<T>::new(64).integrate(f, T::zero(), T::one())
        }
    }

    pub fn eval_at(&self, s: T, k: usize) -> T {
        if k == 0 {
            return T::zero();
        }
        let sk = self.reduction.partial_sum(k);
        let js = self.reduction.analysis().j(s);
        let v = js * sk;
        if v == T::zero() {
            return T::zero();
        }
        let c = v / T::of(k);
        let inner = self.inner_integral(s, c) - js;
        T::lit(2.0) * v * sk * inner / (self.d_n * self.d_n)
    }
}

impl<T: Scalar> TwoParamField<T> for ZField<T> {
    fn eval_state(&self, level: &LevelSlice<T>, p: &Probe<T>) -> T {
        self.eval_at(p.y, level.k())
    }

    fn cell_degree(&self) -> Option<usize> {
        None
    }
}

/// Differences between a process and its reduction-field approximation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CouplingKind {
    /// `α_n - d_n⁻¹V`
    Empirical,
    /// `u_n - d_n⁻¹V`
    Quantile,
    /// `([nt]R*_n - J J' S²) / d_n²`
    BahadurKiefer,
    /// `ρ_n - d_n⁻¹V`
    General,
}

/// A coupling difference. `scale` divides the raw difference (`d_n` for the
/// first-order couplings, `d_n²` for the Bahadur–Kiefer one), so prefix
/// levels can be swept once with `scale = 1` and normalised per `n` later.
#[derive(Debug, Clone)]
pub struct CouplingField<T> {
    pub kind: CouplingKind,
    pub scale: T,
    reduction: Arc<ReductionField<T>>,
    dist: Option<DistributionSpec<T>>,
}

impl<T: Scalar> CouplingField<T> {
    pub fn new(kind: CouplingKind, reduction: Arc<ReductionField<T>>, scale: T, dist: Option<DistributionSpec<T>>) -> Self {
        assert!(kind != CouplingKind::General || dist.is_some(), "general coupling needs F");
        Self { kind, scale, reduction, dist }
    }
}

impl<T: Scalar> TwoParamField<T> for CouplingField<T> {
    fn eval_state(&self, level: &LevelSlice<T>, p: &Probe<T>) -> T {
        let k = level.k();
        if k == 0 {
            return T::zero();
        }
        let kf = T::of(k);
        let sk = self.reduction.partial_sum(k);
        let analysis = self.reduction.analysis();
        let raw = match self.kind {
            CouplingKind::Empirical => T::of(p.count) - kf * p.y - analysis.j(p.y) * sk,
            CouplingKind::Quantile => kf * (p.y - level.order_stat(p.index)) - analysis.j(p.y) * sk,
            CouplingKind::General => {
                raw_rho(self.dist.as_ref().expect("checked"), level, p) - analysis.j(p.y) * sk
            }
            CouplingKind::BahadurKiefer => {
                let j = analysis.j(p.y);
                let jj = if j == T::zero() { T::zero() } else { j * analysis.j_prime(p.y) };
                kf * raw_rstar(level, p) - jj * sk * sk
            }
        };
        raw / self.scale
    }

    fn cell_degree(&self) -> Option<usize> {
        None
    }
}

/// `δ_n = (n^{-D} L(n) log log max(n, 27))^τ`.
pub fn trimming_width<T: Scalar>(n: usize, tau: usize, d: T, l_n: T) -> T {
    let nf = T::of(n.max(27));
    (T::of(n).powf(-d) * l_n * nf.ln().ln()).powi(tau as i32)
}

/// Largest deviations found by [`check_identities`], each relative to the
/// size of the terms involved, operands included, so cancellation between
/// prefix sums does not masquerade as a failure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentityReport {
    /// `Q_n = A_n - d_n⁻²R*²`
    pub vervaat: f64,
    /// `d_n(α_n - u_n) = [nt](Ê + Û - 2y)`
    pub rstar_two_form: f64,
    /// `R_n - R*_n = -d_n(ρ_n - u_n)`
    pub general: f64,
    pub probes: usize,
}

/// The probe rule: every breakpoint with both one-sided values on every level
/// when `n ≤ 512`, otherwise `random_probes` seeded uniform points `(s, t)`.
pub fn check_identities<T: Scalar>(
    batch: &SampleBatch<T>,
    d_n: T,
    dist: &DistributionSpec<T>,
    random_probes: usize,
    seed: u64,
) -> IdentityReport {
    let n = batch.len();
    let mut report = IdentityReport { vervaat: 0.0, rstar_two_form: 0.0, general: 0.0, probes: 0 };
    let mut visit = |level: &LevelSlice<T>, p: &Probe<T>| {
        let k = level.k();
        if k == 0 {
            return;
        }
        report.probes += 1;
        let kf = T::of(k);
        let two = T::lit(2.0);
        let d2 = d_n * d_n;
        let alpha = (T::of(p.count) - kf * p.y) / d_n;
        let u = kf * (p.y - level.order_stat(p.index)) / d_n;
        let rstar = raw_rstar(level, p);
        let integral = rstar_integral(level, p.y, p.count);
        let v = two * kf / d2 * integral;
        let q = v - alpha * alpha;
        let a = two * kf / d2 * raw_a(level, p);
        let rs2 = rstar * rstar / d2;
        // size of the operands: prefix sums of order k cancel inside V and A
        let operands = two * kf / d2 * (T::of(p.count) * p.y + level.prefix_sum(p.count) + kf * p.y * p.y);
        let scale = v.abs().max(alpha * alpha).max(a.abs()).max(rs2).max(operands).max(T::lit(1e-300));
        report.vervaat = report.vervaat.max(((q - (a - rs2)).abs() / scale).as_f64());

        let def = d_n * (alpha - u);
        let size = T::of(p.count).max(kf).max(T::one());
        report.rstar_two_form = report.rstar_two_form.max(((def - rstar).abs() / size).as_f64());

        let rho = raw_rho(dist, level, p) / d_n;
        if rho.is_finite() {
            let r = d_n * (alpha - rho);
            let lhs = r - rstar + d_n * (rho - u);
            let size = (d_n * rho).abs().max(size);
            report.general = report.general.max((lhs.abs() / size).as_f64());
        }
    };
    if n <= 512 {
        for k in 1..=n {
            let level = batch.level(k);
            let (probes, cells) = level.sweep(T::zero(), T::one());
            for p in &probes {
                visit(&level, p);
            }
            for c in &cells {
                visit(&level, &c.at(c.lo));
                visit(&level, &c.at(c.hi));
            }
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..random_probes {
            let s = T::lit(rng.random::<f64>());
            let t = T::lit(rng.random::<f64>());
            let k = crate::seq_processes::level_index(n, t).max(1);
            let level = batch.level(k);
            for side in [Side::Left, Side::Value, Side::Right] {
                visit(&level, &level.probe(s, side));
            }
        }
    }
    report
}

/// All derived fields of one sample with their normalisation.
#[derive(Debug, Clone)]
pub struct VervaatBundle<T> {
    pub tau: usize,
    pub d: T,
    pub l_n: T,
    pub d_n: T,
    pub delta_n: T,
    pub r_star: DerivedField<T>,
    pub r_general: DerivedField<T>,
    pub vervaat: DerivedField<T>,
    pub vervaat_error: DerivedField<T>,
    pub a: DerivedField<T>,
    pub z: ZField<T>,
}

impl<T: Scalar> VervaatBundle<T> {
    pub fn new(
        n: usize,
        tau: usize,
        d: T,
        l_n: T,
        dist: DistributionSpec<T>,
        reduction: Arc<ReductionField<T>>,
    ) -> Result<Self> {
        let d_n = crate::seq_processes::d_norm(n, tau, d, l_n)?;
        Ok(Self {
            tau,
            d,
            l_n,
            d_n,
            delta_n: trimming_width(n, tau, d, l_n),
            r_star: r_star(),
            r_general: r_general(d_n, dist),
            vervaat: vervaat(d_n),
            vervaat_error: vervaat_error(d_n),
            a: a_process(d_n),
            z: ZField::new(reduction, d_n),
        })
    }
}
