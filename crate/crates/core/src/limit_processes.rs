//! Limit objects: paths of `Y_τ` on a uniform grid, the limit surfaces of the
//! Bahadur–Kiefer, Vervaat and Vervaat-error processes, and the constants in
//! front of them.
//!
//! `Y_τ` is normalised so that `Var Y_τ(1) = 1/τ!`. For `τ = 1` this is
//! standard fBm with `H = 1 - D/2`. The Hermite-sum route approximates `Y_τ`
//! by a normalised partial-sum path of length `m`; the multiple Wiener–Itô
//! kernel representation is not discretised.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::hermite::{hermite_poly, HermiteAnalysis, Kappas};
use crate::lrd_gauss::{fgn_autocovariance, partial_sum_variance, CovarianceSpec, EmbeddingPolicy, PathGenerator};
use crate::scalar::{factorial, Scalar};
use crate::seq_processes::d_norm;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LimitMethod {
    SpectralFbm,
    HermiteSum { m: usize },
}

/// `Y_τ(i/m_t)` for `i = 0..=m_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct LimitPath<T> {
    pub values: Vec<T>,
    pub tau: usize,
    pub d: T,
    pub method: LimitMethod,
    pub seed: u64,
}

impl<T: Scalar> LimitPath<T> {
    pub fn m_t(&self) -> usize {
        self.values.len() - 1
    }

    pub fn hurst(&self) -> T {
        T::one() - T::of(self.tau) * self.d / T::lit(2.0)
    }

    pub fn t_grid(&self) -> Vec<T> {
        let m = T::of(self.m_t());
        (0..self.values.len()).map(|i| T::of(i) / m).collect()
    }

    /// Linear interpolation on the grid; `t` is clamped to `[0, 1]`.
    pub fn eval(&self, t: T) -> T {
        let m = self.m_t();
        let pos = t.max(T::zero()).min(T::one()) * T::of(m);
        let i = pos.floor().to_usize().unwrap_or(0).min(m.saturating_sub(1));
        if m == 0 {
            return self.values[0];
        }
        let w = pos - T::of(i);
        self.values[i] + w * (self.values[i + 1] - self.values[i])
    }

    pub fn terminal(&self) -> T {
        *self.values.last().expect("non-empty grid")
    }

    pub fn sup_abs_pow(&self, power: i32) -> T {
        self.values.iter().fold(T::zero(), |m, v| m.max(v.powi(power).abs()))
    }
}

/// Exact fBm sampler on `m_t` grid steps, reusable across seeds.
#[derive(Debug, Clone)]
pub struct FbmSampler<T: Scalar> {
    hurst: T,
    generator: PathGenerator<T>,
}

impl<T: Scalar> FbmSampler<T> {
    pub fn new(hurst: T, m_t: usize) -> Result<Self> {
        if !(hurst > T::zero() && hurst < T::one()) {
            return Err(Error::InvalidSpec(format!("Hurst index {hurst} outside (0, 1)")));
        }
        if m_t == 0 {
            return Err(Error::InvalidSpec("m_t must be at least 1".into()));
        }
        let gamma: Vec<T> = (0..m_t).map(|k| fgn_autocovariance(hurst, k)).collect();
        let policy = EmbeddingPolicy { repair: false, ..EmbeddingPolicy::default() };
        Ok(Self { hurst, generator: PathGenerator::from_autocovariance(&gamma, policy)? })
    }

    pub fn sample(&self, seed: u64) -> LimitPath<T> {
        let steps = self.generator.sample_values(seed);
        let scale = T::of(steps.len()).powf(-self.hurst);
        let mut values = Vec::with_capacity(steps.len() + 1);
        let mut acc = T::zero();
        values.push(acc);
        for s in steps {
            acc += s;
            values.push(acc * scale);
        }
        LimitPath {
            values,
            tau: 1,
            d: T::lit(2.0) * (T::one() - self.hurst),
            method: LimitMethod::SpectralFbm,
            seed,
        }
    }
}

pub fn simulate_fbm<T: Scalar>(hurst: T, m_t: usize, seed: u64) -> Result<LimitPath<T>> {
    Ok(FbmSampler::new(hurst, m_t)?.sample(seed))
}

/// Smallest driver length accepted by the Hermite-sum sampler.
pub const MIN_DRIVER: usize = 1 << 12;

/// `√((2-τD)(1-τD)/2) d_m⁻¹ S_{[mt]}` on a grid of `m_t` steps.
#[derive(Debug, Clone)]
pub struct HermiteSumSampler<T: Scalar> {
    tau: usize,
    spec: CovarianceSpec<T>,
    m: usize,
    m_t: usize,
    scale: T,
    generator: PathGenerator<T>,
}

fn check_tau_d<T: Scalar>(tau: usize, d: T) -> Result<()> {
    if tau == 0 || !(d > T::zero() && T::of(tau) * d < T::one()) {
        return Err(Error::InvalidSpec(format!("need tau >= 1 and 0 < D < 1/tau, got tau = {tau}, D = {d}")));
    }
    Ok(())
}

impl<T: Scalar> HermiteSumSampler<T> {
    pub fn new(tau: usize, spec: &CovarianceSpec<T>, m: usize, m_t: usize, policy: EmbeddingPolicy) -> Result<Self> {
        check_tau_d(tau, spec.d)?;
        if m < MIN_DRIVER {
            return Err(Error::InvalidSpec(format!("driver length {m} below {MIN_DRIVER}")));
        }
        if m_t == 0 || m_t > m {
            return Err(Error::InvalidSpec(format!("grid size {m_t} must lie in 1..={m}")));
        }
        let td = T::of(tau) * spec.d;
        let d_m = d_norm(m, tau, spec.d, spec.normalizing_l(T::of(m)))?;
        let scale = ((T::lit(2.0) - td) * (T::one() - td) / T::lit(2.0)).sqrt() / d_m;
        Ok(Self { tau, spec: *spec, m, m_t, scale, generator: PathGenerator::new(spec, m, policy)? })
    }

    pub fn driver_len(&self) -> usize {
        self.m
    }

    pub fn generator(&self) -> &PathGenerator<T> {
        &self.generator
    }

    /// The exact `Var Y(1)` of the finite-`m` approximation.
    pub fn exact_terminal_variance(&self) -> T {
        self.scale * self.scale * partial_sum_variance(&self.spec, self.m, self.tau)
    }

    pub fn sample(&self, seed: u64) -> LimitPath<T> {
        let eta = self.generator.sample_values(seed);
        let fact = factorial::<T>(self.tau);
        let mut values = Vec::with_capacity(self.m_t + 1);
        values.push(T::zero());
        let mut acc = T::zero();
        let mut next = 1;
        for (i, &e) in eta.iter().enumerate() {
            acc += hermite_poly(self.tau, e) / fact;
            // grid point j sits at [m j / m_t]
            while next <= self.m_t && (self.m * next) / self.m_t == i + 1 {
                values.push(acc * self.scale);
                next += 1;
            }
        }
        LimitPath {
            values,
            tau: self.tau,
            d: self.spec.d,
            method: LimitMethod::HermiteSum { m: self.m },
            seed,
        }
    }
}

pub fn simulate_hermite_sum<T: Scalar>(
    tau: usize,
    spec: &CovarianceSpec<T>,
    m: usize,
    m_t: usize,
    seed: u64,
) -> Result<LimitPath<T>> {
    Ok(HermiteSumSampler::new(tau, spec, m, m_t, EmbeddingPolicy::default())?.sample(seed))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimitConstants<T> {
    /// `2/((2-τD)(1-τD))`
    pub c_weak: T,
    /// `2^{5/2}((2-τD)(1-τD))^{-3/2}`
    pub c_q: T,
    /// `2^{(τ+1)/2}/√(τ!(2-τD)(1-τD))`
    pub lil_partial: T,
    /// `2^{τ+1}κ₂/(τ!(2-τD)(1-τD))`
    pub lil_bk: T,
    /// `2^{(3τ+5)/2}κ₃(τ!(2-τD)(1-τD))^{-3/2}`
    pub lil_q: T,
}

pub fn limit_constants<T: Scalar>(tau: usize, d: T, kappas: &Kappas<T>) -> Result<LimitConstants<T>> {
    check_tau_d(tau, d)?;
    let td = T::of(tau) * d;
    let base = (T::lit(2.0) - td) * (T::one() - td);
    let fact = factorial::<T>(tau);
    let two = T::lit(2.0);
    let tf = T::of(tau);
    Ok(LimitConstants {
        c_weak: two / base,
        c_q: two.powf(T::lit(2.5)) * base.powf(T::lit(-1.5)),
        lil_partial: two.powf((tf + T::one()) / two) / (fact * base).sqrt(),
        lil_bk: two.powf(tf + T::one()) * kappas.k2 / (fact * base),
        lil_q: two.powf((T::lit(3.0) * tf + T::lit(5.0)) / two) * kappas.k3 * (fact * base).powf(T::lit(-1.5)),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SurfaceKind {
    /// `c_weak J J' Y²`, the limit of `n^{τD-2}L^{-τ}[nt]R*_n`.
    BahadurKiefer,
    /// `c_weak J² Y²`, the limit of `V_n`.
    Vervaat,
    /// `c_Q J² J' Y³`, the limit of `n^{τD/2-1}L^{-τ/2}[nt]Q_n`.
    VervaatError,
}

/// A limit surface: a deterministic profile in `y` times a power of `Y_τ(t)`.
#[derive(Debug, Clone)]
pub struct LimitSurface<T> {
    pub kind: SurfaceKind,
    pub constants: LimitConstants<T>,
    analysis: Arc<HermiteAnalysis<T>>,
}

impl<T: Scalar> LimitSurface<T> {
    pub fn new(kind: SurfaceKind, analysis: Arc<HermiteAnalysis<T>>, d: T) -> Result<Self> {
        let constants = limit_constants(analysis.tau(), d, &analysis.kappas())?;
        Ok(Self { kind, constants, analysis })
    }

    /// The `y`-profile including the constant.
    pub fn profile(&self, y: T) -> T {
        let j = self.analysis.j(y);
        if j == T::zero() {
            return T::zero();
        }
        match self.kind {
            SurfaceKind::BahadurKiefer => self.constants.c_weak * j * self.analysis.j_prime(y),
            SurfaceKind::Vervaat => self.constants.c_weak * j * j,
            SurfaceKind::VervaatError => self.constants.c_q * j * j * self.analysis.j_prime(y),
        }
    }

    pub fn power(&self) -> i32 {
        match self.kind {
            SurfaceKind::VervaatError => 3,
            _ => 2,
        }
    }

    /// Probes where the profile vanishes carry no distributional content.
    pub fn is_degenerate(&self, y: T) -> bool {
        self.profile(y).abs() < T::lit(1e-12)
    }

    pub fn eval(&self, path: &LimitPath<T>, y: T, t: T) -> Result<T> {
        if path.tau != self.analysis.tau() {
            return Err(Error::InvalidSpec(format!(
                "limit path has tau = {}, analysis has tau = {}",
                path.tau,
                self.analysis.tau()
            )));
        }
        Ok(self.profile(y) * path.eval(t).powi(self.power()))
    }
}
