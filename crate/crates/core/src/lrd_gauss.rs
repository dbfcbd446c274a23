//! Stationary standard Gaussian sequences with power-law covariance, sampled
//! exactly by circulant embedding.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Slowly varying factor `L(k)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SlowlyVarying<T> {
    Constant(T),
    /// `scale · (1 + ln(1 + k))^power`
    Logarithmic { scale: T, power: T },
}

impl<T: Scalar> SlowlyVarying<T> {
    pub fn eval(&self, k: T) -> T {
        match *self {
            SlowlyVarying::Constant(c) => c,
            SlowlyVarying::Logarithmic { scale, power } => scale * (T::one() + k.ln_1p()).powf(power),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovarianceFamily {
    /// `γ(k) = k^{-D} L(k)` for every `k ≥ 1`.
    PurePower,
    /// Fractional Gaussian noise with `H = 1 - D/2`.
    FgnMatched,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovarianceSpec<T> {
    pub d: T,
    pub l: SlowlyVarying<T>,
    pub family: CovarianceFamily,
}

impl<T: Scalar> CovarianceSpec<T> {
    pub fn pure_power(d: T, l: SlowlyVarying<T>) -> Self {
        Self { d, l, family: CovarianceFamily::PurePower }
    }

    pub fn fgn_matched(d: T) -> Self {
        Self {
            d,
            l: SlowlyVarying::Constant(T::one()),
            family: CovarianceFamily::FgnMatched,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.d > T::zero() && self.d < T::one()) {
            return Err(Error::InvalidSpec(format!("D must lie in (0,1), got {}", self.d)));
        }
        match (self.family, self.l) {
            (CovarianceFamily::FgnMatched, SlowlyVarying::Constant(c)) if c == T::one() => Ok(()),
            (CovarianceFamily::FgnMatched, _) => Err(Error::InvalidSpec(
                "the fgn-matched family fixes L; leave it at constant(1)".into(),
            )),
            (_, SlowlyVarying::Constant(c)) if !(c > T::zero()) => {
                Err(Error::InvalidSpec("constant L must be positive".into()))
            }
            (_, SlowlyVarying::Logarithmic { scale, .. }) if !(scale > T::zero()) => {
                Err(Error::InvalidSpec("logarithmic L needs a positive scale".into()))
            }
            _ => Ok(()),
        }
    }

    /// Self-similarity index `1 - D/2` of the partial sums.
    pub fn hurst(&self) -> T {
        T::one() - self.d / T::lit(2.0)
    }

    /// The `L` with `γ(k) ~ k^{-D} L(k)`, as used in the normalisations.
    pub fn normalizing_l(&self, n: T) -> T {
        match self.family {
            CovarianceFamily::PurePower => self.l.eval(n),
            CovarianceFamily::FgnMatched => {
                let h = self.hurst();
                h * (T::lit(2.0) * h - T::one())
            }
        }
    }

    pub fn autocovariance(&self, k: usize) -> T {
        if k == 0 {
            return T::one();
        }
        match self.family {
            CovarianceFamily::PurePower => {
                let kf = T::of(k);
                kf.powf(-self.d) * self.l.eval(kf)
            }
            CovarianceFamily::FgnMatched => fgn_autocovariance(self.hurst(), k),
        }
    }
}

/// Covariance of unit-variance fractional Gaussian noise at lag `k`.
pub fn fgn_autocovariance<T: Scalar>(h: T, k: usize) -> T {
    let two_h = T::lit(2.0) * h;
    let half = T::lit(0.5);
    match k {
        0 => T::one(),
        1 => half * (T::lit(2.0).powf(two_h) - T::lit(2.0)),
        _ => {
            // ½k^{2H}[(1+1/k)^{2H} - 2 + (1-1/k)^{2H}] without cancellation
            let kf = T::of(k);
            let inv = kf.recip();
            half * kf.powf(two_h) * ((two_h * inv.ln_1p()).exp_m1() + (two_h * (-inv).ln_1p()).exp_m1())
        }
    }
}

/// `Var(Σ_{i≤n} H_τ(η_i)/τ!) = Σ_{i,j} γ(|i-j|)^τ / τ!`.
pub fn partial_sum_variance<T: Scalar>(spec: &CovarianceSpec<T>, n: usize, tau: usize) -> T {
    let mut total = T::of(n);
    for k in 1..n {
        total += T::lit(2.0) * T::of(n - k) * spec.autocovariance(k).powi(tau as i32);
    }
    total / crate::scalar::factorial::<T>(tau)
}

/// What to do when the circulant spectrum has negative values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmbeddingPolicy {
    /// Clip negative eigenvalues to zero instead of failing.
    pub repair: bool,
    /// Negative eigenvalues down to `-clip_tolerance · max λ` count as rounding.
    pub clip_tolerance: f64,
    /// Largest `n` for which an exact Cholesky factor is tried first.
    pub cholesky_limit: usize,
}

impl Default for EmbeddingPolicy {
    fn default() -> Self {
        Self {
            repair: true,
            clip_tolerance: 1e-10,
            cholesky_limit: 2048,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SamplingMethod {
    Direct,
    Circulant,
    Cholesky,
    /// Circulant with negative eigenvalues zeroed; `negative_mass` is
    /// `Σ|λ⁻| / Σ|λ|`.
    ClippedCirculant { negative_mass: f64 },
}

impl SamplingMethod {
    pub fn is_exact(&self) -> bool {
        !matches!(self, SamplingMethod::ClippedCirculant { .. })
    }
}

/// One realisation `η_1..η_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPath<T> {
    pub values: Vec<T>,
    pub seed: u64,
    pub spec: CovarianceSpec<T>,
    pub method: SamplingMethod,
}

#[derive(Clone)]
enum Engine<T: Scalar> {
    Direct,
    Circulant { sqrt_eig: Vec<T>, fft: Arc<dyn Fft<T>> },
    Cholesky { lower: Vec<T> },
}

/// Precomputed sampler for one `(covariance, n)`; paths for many seeds reuse
/// the spectrum or factor.
#[derive(Clone)]
pub struct PathGenerator<T: Scalar> {
    spec: Option<CovarianceSpec<T>>,
    n: usize,
    engine: Engine<T>,
    method: SamplingMethod,
}

impl<T: Scalar> std::fmt::Debug for PathGenerator<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PathGenerator")
            .field("spec", &self.spec)
            .field("n", &self.n)
            .field("method", &self.method)
            .finish()
    }
}

impl<T: Scalar> PathGenerator<T> {
    pub fn new(spec: &CovarianceSpec<T>, n: usize, policy: EmbeddingPolicy) -> Result<Self> {
        spec.validate()?;
        let gamma: Vec<T> = (0..n).map(|k| spec.autocovariance(k)).collect();
        let mut gen = Self::from_autocovariance(&gamma, policy)?;
        gen.spec = Some(*spec);
        Ok(gen)
    }

    /// Sampler for an arbitrary stationary covariance `gamma[0..n]`.
    pub fn from_autocovariance(gamma: &[T], policy: EmbeddingPolicy) -> Result<Self> {
        let n = gamma.len();
        if n == 0 {
            return Err(Error::InvalidSpec("path length must be at least 1".into()));
        }
        if n == 1 {
            return Ok(Self {
                spec: None,
                n,
                engine: Engine::Direct,
                method: SamplingMethod::Direct,
            });
        }
        let half = (n - 1).next_power_of_two();
        let m = 2 * half;
        let mut row: Vec<Complex<T>> = (0..m)
            .map(|j| {
                let lag = if j <= half { j } else { m - j };
                let g = if lag < n { gamma[lag] } else { T::zero() };
                Complex::new(g, T::zero())
            })
            .collect();
        let fft = FftPlanner::new().plan_fft_forward(m);
        fft.process(&mut row);
        let eig: Vec<f64> = row.iter().map(|c| c.re.as_f64()).collect();
        let max_eig = eig.iter().cloned().fold(0.0, f64::max);
        let min_eig = eig.iter().cloned().fold(f64::INFINITY, f64::min);
        let neg: f64 = eig.iter().filter(|&&l| l < 0.0).map(|l| -l).sum();
        let abs: f64 = eig.iter().map(|l| l.abs()).sum();
        let negative_mass = if abs > 0.0 { neg / abs } else { 0.0 };
        let embeddable = min_eig >= -policy.clip_tolerance * max_eig;

        let circulant = |method| {
            let scale = T::of(m);
            let sqrt_eig = eig.iter().map(|&l| (T::lit(l.max(0.0)) / scale).sqrt()).collect();
            Self {
                spec: None,
                n,
                engine: Engine::Circulant { sqrt_eig, fft: fft.clone() },
                method,
            }
        };
        if embeddable {
            return Ok(circulant(SamplingMethod::Circulant));
        }
        if n <= policy.cholesky_limit {
            if let Some(lower) = cholesky_toeplitz(gamma) {
                return Ok(Self {
                    spec: None,
                    n,
                    engine: Engine::Cholesky { lower },
                    method: SamplingMethod::Cholesky,
                });
            }
        }
        if policy.repair {
            Ok(circulant(SamplingMethod::ClippedCirculant { negative_mass }))
        } else {
            Err(Error::NonEmbeddable {
                min_eigenvalue: min_eig,
                negative_mass,
            })
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn method(&self) -> SamplingMethod {
        self.method
    }

    /// Draws the `n` values for `seed`, deterministically.
    pub fn sample_values(&self, seed: u64) -> Vec<T> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut normal = || T::lit(rng.sample::<f64, _>(StandardNormal));
        match &self.engine {
            Engine::Direct => vec![normal()],
            Engine::Circulant { sqrt_eig, fft } => {
                let mut w: Vec<Complex<T>> = sqrt_eig
                    .iter()
                    .map(|&s| {
                        let (a, b) = (normal(), normal());
                        Complex::new(s * a, s * b)
                    })
                    .collect();
                fft.process(&mut w);
                w[..self.n].iter().map(|c| c.re).collect()
            }
            Engine::Cholesky { lower } => {
                let z: Vec<T> = (0..self.n).map(|_| normal()).collect();
                (0..self.n)
                    .map(|i| {
                        let row = &lower[i * self.n..i * self.n + i + 1];
                        row.iter().zip(&z).map(|(&l, &zi)| l * zi).sum()
                    })
                    .collect()
            }
        }
    }

    pub fn sample(&self, seed: u64) -> GaussianPath<T> {
        GaussianPath {
            values: self.sample_values(seed),
            seed,
            spec: self.spec.unwrap_or_else(|| CovarianceSpec::fgn_matched(T::lit(0.5))),
            method: self.method,
        }
    }
}

/// Dense Cholesky factor of the Toeplitz matrix of `gamma`, row-major; `None`
/// when the matrix is not positive definite.
fn cholesky_toeplitz<T: Scalar>(gamma: &[T]) -> Option<Vec<T>> {
    let n = gamma.len();
    let mut l = vec![T::zero(); n * n];
    for i in 0..n {
        for j in 0..=i {
            let dot: T = (0..j).map(|k| l[i * n + k] * l[j * n + k]).sum();
            let v = gamma[i - j] - dot;
            if i == j {
                if !(v > T::zero()) {
                    return None;
                }
                l[i * n + i] = v.sqrt();
            } else {
                l[i * n + j] = v / l[j * n + j];
            }
        }
    }
    Some(l)
}

/// Samples one path with the default policy.
pub fn generate_path<T: Scalar>(spec: &CovarianceSpec<T>, n: usize, seed: u64) -> Result<GaussianPath<T>> {
    Ok(PathGenerator::new(spec, n, EmbeddingPolicy::default())?.sample(seed))
}
