//! Hermite polynomials, the expansion coefficients `c_l(x)` and `J_l(y)` of the
//! centred indicator class, the Hermite rank and the `κ` constants.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::distributions::{golden_max, half_normal_quantile, parse_pairs, DistributionSpec};
use crate::error::{Error, Result};
use crate::quadrature::integrate_adaptive;
use crate::scalar::Scalar;
use crate::special::{norm_cdf, norm_pdf, norm_quantile};
use crate::table::{Extension, Monotonicity, PiecewiseLinear};

/// Probabilists' Hermite polynomial `H_l(x)` by the three-term recurrence.
pub fn hermite_poly<T: Scalar>(l: usize, x: T) -> T {
    let (mut prev, mut cur) = (T::one(), x);
    if l == 0 {
        return prev;
    }
    for k in 1..l {
        let next = x * cur - T::of(k) * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// The transformation `G` in `X = G(η)`.
#[derive(Debug, Clone, PartialEq)]
pub enum SubordinationSpec<T> {
    Identity,
    Square,
    Absolute,
    /// `G = Q ∘ Φ`, so that `X` has distribution `F` exactly.
    QuantileCompose(DistributionSpec<T>),
    /// Strictly monotone table with linear extension.
    Tabulated(PiecewiseLinear<T>),
}

/// The level set `{u : G(u) ≤ x}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Region<T> {
    Empty,
    Everything,
    /// `(-∞, a]`
    Below(T),
    /// `[a, ∞)`
    Above(T),
    /// `[-a, a]`
    Inside(T),
}

impl<T: Scalar> Region<T> {
    pub fn contains(&self, u: T) -> bool {
        match *self {
            Region::Empty => false,
            Region::Everything => true,
            Region::Below(a) => u <= a,
            Region::Above(a) => u >= a,
            Region::Inside(a) => u.abs() <= a,
        }
    }

    /// `E[I(η ∈ region) H_l(η)]` for `l ≥ 1`, via `(H_{l-1}φ)' = -H_l φ`.
    pub fn hermite_moment(&self, l: usize) -> T {
        assert!(l >= 1, "moment of order zero is not centred");
        let boundary = |a: T| {
            if a.is_finite() {
                hermite_poly(l - 1, a) * norm_pdf(a)
            } else {
                T::zero()
            }
        };
        match *self {
            Region::Empty | Region::Everything => T::zero(),
            Region::Below(a) => -boundary(a),
            Region::Above(a) => boundary(a),
            Region::Inside(a) => -boundary(a) + boundary(-a),
        }
    }
}

impl<T: Scalar> SubordinationSpec<T> {
    pub fn validate(&self) -> Result<()> {
        match self {
            Self::QuantileCompose(f) => f.validate(),
            Self::Tabulated(g) => {
                if g.extension() != Extension::Linear {
                    return Err(Error::InvalidSpec("tabulated G must extend linearly".into()));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Marginal law `F` of `G(η)`.
    pub fn marginal(&self) -> DistributionSpec<T> {
        match self {
            Self::Identity => DistributionSpec::standard_normal(),
            Self::Square => DistributionSpec::ChiSquare1,
            Self::Absolute => DistributionSpec::HalfNormal,
            Self::QuantileCompose(f) => f.clone(),
            Self::Tabulated(g) => DistributionSpec::NormalTransform(g.clone()),
        }
    }

    pub fn is_monotone(&self) -> bool {
        !matches!(self, Self::Square | Self::Absolute)
    }

    /// `G(u)`.
    pub fn transform(&self, u: T) -> T {
        match self {
            Self::Identity => u,
            Self::Square => u * u,
            Self::Absolute => u.abs(),
            Self::QuantileCompose(f) => f.quantile(norm_cdf(u)),
            Self::Tabulated(g) => g.eval(u),
        }
    }

    /// `F(G(u))` without the roundtrip through `G`.
    pub fn pit(&self, u: T) -> T {
        match self {
            Self::Identity | Self::QuantileCompose(_) => norm_cdf(u),
            Self::Square | Self::Absolute => (u.abs() / T::SQRT_2()).erf_like(),
            Self::Tabulated(g) => match g.monotonicity() {
                Monotonicity::Decreasing => norm_cdf(-u),
                _ => norm_cdf(u),
            },
        }
    }

    /// Solves `{u : G(u) ≤ x}`.
    pub fn region(&self, x: T) -> Result<Region<T>> {
        Ok(match self {
            Self::Identity => Region::Below(x),
            Self::Square if x < T::zero() => Region::Empty,
            Self::Square => Region::Inside(x.sqrt()),
            Self::Absolute if x < T::zero() => Region::Empty,
            Self::Absolute => Region::Inside(x),
            Self::QuantileCompose(f) => Region::Below(norm_quantile(f.cdf(x))),
            Self::Tabulated(g) => {
                let u = g.inverse(x).ok_or_else(|| Error::RegionUnsolved {
                    x: x.as_f64(),
                    reason: "tabulated G is not strictly monotone".into(),
                })?;
                match g.monotonicity() {
                    Monotonicity::Decreasing => Region::Above(u),
                    _ => Region::Below(u),
                }
            }
        })
    }

    /// `{u : F(G(u)) ≤ y}` for `y ∈ (0, 1)`, equal to `region(Q(y))` but
    /// solved without evaluating `Q`.
    pub fn level_region(&self, y: T) -> Region<T> {
        match self {
            Self::Square | Self::Absolute => Region::Inside(half_normal_quantile(y)),
            Self::Tabulated(g) if g.monotonicity() == Monotonicity::Decreasing => {
                Region::Above(-norm_quantile(y))
            }
            _ => Region::Below(norm_quantile(y)),
        }
    }
}

/// `1 - erfc(x)`, accurate when the result is small.
trait ErfLike {
    fn erf_like(self) -> Self;
}

impl<T: Scalar> ErfLike for T {
    fn erf_like(self) -> T {
        // erfc(x) ≈ 1 near 0; use the series there to keep relative accuracy.
        if self.abs() < T::lit(0.25) {
            let x2 = self * self;
            let mut term = self;
            let mut sum = self;
            for k in 1..20 {
                term = term * -x2 / T::of(k);
                sum += term / T::of(2 * k + 1);
            }
            sum * T::lit(2.0) / T::PI().sqrt()
        } else {
            T::one() - self.erfc()
        }
    }
}

impl<T: Scalar> fmt::Display for SubordinationSpec<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Identity => write!(f, "identity"),
            Self::Square => write!(f, "square"),
            Self::Absolute => write!(f, "absolute"),
            Self::QuantileCompose(d) => write!(f, "quantile-compose({d})"),
            Self::Tabulated(g) => {
                let (xs, ys) = g.knots();
                let pairs: Vec<String> = xs.iter().zip(ys).map(|(x, y)| format!("{x}:{y}")).collect();
                write!(f, "tabulated({})", pairs.join(";"))
            }
        }
    }
}

impl<T: Scalar> FromStr for SubordinationSpec<T> {
    type Err = Error;

    /// `identity`, `square`, `absolute`, `quantile-compose(<distribution>)`
    /// or `tabulated(u:g;u:g;...)`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let inner = |prefix: &str| {
            s.strip_prefix(prefix)
                .map(|rest| rest.strip_suffix(')').ok_or_else(|| Error::InvalidSpec(format!("unbalanced parentheses in `{s}`"))))
        };
        let spec = if let Some(body) = inner("quantile-compose(") {
            Self::QuantileCompose(body?.parse()?)
        } else if let Some(body) = inner("tabulated(") {
            let (xs, ys) = parse_pairs(body?)?;
            Self::Tabulated(PiecewiseLinear::new(xs, ys, Extension::Linear)?)
        } else {
            match s.to_ascii_lowercase().as_str() {
                "identity" => Self::Identity,
                "square" => Self::Square,
                "absolute" => Self::Absolute,
                _ => return Err(Error::InvalidSpec(format!("unknown transformation `{s}`"))),
            }
        };
        if let Self::Tabulated(g) = &spec {
            if g.monotonicity() == Monotonicity::None {
                return Err(Error::InvalidSpec("tabulated G must be strictly monotone".into()));
            }
        }
        spec.validate()?;
        Ok(spec)
    }
}

/// `c_l(x) = E{[I(G(η) ≤ x) - F(x)] H_l(η)}` in closed form.
pub fn coefficient_c<T: Scalar>(spec: &SubordinationSpec<T>, l: usize, x: T) -> Result<T> {
    if l == 0 {
        return Err(Error::InvalidSpec("coefficient order must be positive".into()));
    }
    Ok(spec.region(x)?.hermite_moment(l))
}

/// `c_l(x)` by adaptive quadrature of the defining expectation; an oracle for
/// [`coefficient_c`] that never looks at the region.
pub fn coefficient_c_quadrature<T: Scalar>(spec: &SubordinationSpec<T>, l: usize, x: T, abs_tol: T) -> T {
    let fx = spec.marginal().cdf(x);
    let integrand = |u: T| {
        let ind = if spec.transform(u) <= x { T::one() } else { T::zero() };
        (ind - fx) * hermite_poly(l, u) * norm_pdf(u)
    };
    // the indicator jumps where G(u) crosses x; splitting there leaves smooth
    // pieces, and the jumps are found by scanning and bisection only
    let r = T::lit(12.0);
    let steps = 4800;
    let at = |i: usize| -r + T::lit(2.0) * r * T::of(i) / T::of(steps);
    let below = |u: T| spec.transform(u) <= x;
    let mut cuts = vec![-r];
    for i in 0..steps {
        let (mut lo, mut hi) = (at(i), at(i + 1));
        let side = below(lo);
        if side == below(hi) {
            continue;
        }
        for _ in 0..80 {
            let mid = (lo + hi) / T::lit(2.0);
            if below(mid) == side {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        cuts.push((lo + hi) / T::lit(2.0));
    }
    cuts.push(r);
    cuts.windows(2).map(|w| integrate_adaptive(&integrand, w[0], w[1], abs_tol, 4000).value).fold(T::zero(), |a, b| a + b)
}

/// `J_l(y) = c_l(Q(y))`, with `J_l(0) = J_l(1) = 0`.
pub fn coefficient_j<T: Scalar>(spec: &SubordinationSpec<T>, l: usize, y: T) -> T {
    if y <= T::zero() || y >= T::one() {
        return T::zero();
    }
    spec.level_region(y).hermite_moment(l)
}

pub const RANK_CAP: usize = 8;
pub const RANK_TOL: f64 = 1e-8;

/// `x_i = Q(i/26)`, `i = 1..25`.
pub fn default_rank_grid<T: Scalar>(spec: &SubordinationSpec<T>) -> Vec<T> {
    let f = spec.marginal();
    (1..=25).map(|i| f.quantile(T::of(i) / T::of(26))).collect()
}

/// Smallest `l ≤ 8` with `max_x |c_l(x)| > tol` over `x_grid`.
pub fn hermite_rank<T: Scalar>(spec: &SubordinationSpec<T>, tol: T, x_grid: &[T]) -> Result<usize> {
    if x_grid.is_empty() || !(tol > T::zero()) {
        return Err(Error::InvalidSpec("rank search needs tol > 0 and a nonempty grid".into()));
    }
    for l in 1..=RANK_CAP {
        let mut peak = T::zero();
        for &x in x_grid {
            peak = peak.max(coefficient_c(spec, l, x)?.abs());
        }
        if peak > tol {
            return Ok(l);
        }
    }
    Err(Error::RankNotFound {
        tol: tol.as_f64(),
        max_order: RANK_CAP,
    })
}

/// How `J'` and `J''` are obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DerivativeMethod {
    ClosedForm,
    FiniteDifference { step: f64 },
}

pub const FD_STEP: f64 = 1e-5;
pub const KAPPA_GRID: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kappas<T> {
    /// `sup |J|`
    pub k1: T,
    /// `sup |J J'|`
    pub k2: T,
    /// `sup |J² J'|`
    pub k3: T,
}

#[derive(Clone)]
enum JSource<T> {
    Subordinated(SubordinationSpec<T>),
    Custom(Arc<dyn Fn(T) -> T + Send + Sync>),
}

impl<T: fmt::Debug> fmt::Debug for JSource<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            JSource::Subordinated(s) => f.debug_tuple("Subordinated").field(s).finish(),
            JSource::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

/// Rank, `J_τ` with its first two derivatives, and the `κ` constants.
#[derive(Debug, Clone)]
pub struct HermiteAnalysis<T> {
    tau: usize,
    source: JSource<T>,
    method: DerivativeMethod,
    kappas: Kappas<T>,
}

impl<T: Scalar> HermiteAnalysis<T> {
    /// Finds the rank on the default grid and computes the `κ`s.
    pub fn new(spec: &SubordinationSpec<T>) -> Result<Self> {
        spec.validate()?;
        let tau = hermite_rank(spec, T::lit(RANK_TOL), &default_rank_grid(spec))?;
        Ok(Self::with_rank(spec, tau))
    }

    /// Uses a known rank.
    pub fn with_rank(spec: &SubordinationSpec<T>, tau: usize) -> Self {
        let method = match spec {
            SubordinationSpec::Square | SubordinationSpec::Absolute => {
                DerivativeMethod::FiniteDifference { step: FD_STEP }
            }
            _ => DerivativeMethod::ClosedForm,
        };
        let mut analysis = Self {
            tau,
            source: JSource::Subordinated(spec.clone()),
            method,
            kappas: Kappas { k1: T::zero(), k2: T::zero(), k3: T::zero() },
        };
        analysis.kappas = analysis.kappa_constants(KAPPA_GRID);
        analysis
    }

    /// An analysis around an arbitrary `J`, differentiated numerically.
    pub fn from_fn(tau: usize, j: impl Fn(T) -> T + Send + Sync + 'static) -> Self {
        let mut analysis = Self {
            tau,
            source: JSource::Custom(Arc::new(j)),
            method: DerivativeMethod::FiniteDifference { step: FD_STEP },
            kappas: Kappas { k1: T::zero(), k2: T::zero(), k3: T::zero() },
        };
        analysis.kappas = analysis.kappa_constants(KAPPA_GRID);
        analysis
    }

    pub fn tau(&self) -> usize {
        self.tau
    }

    pub fn kappas(&self) -> Kappas<T> {
        self.kappas
    }

    pub fn derivative_method(&self) -> DerivativeMethod {
        self.method
    }

    pub fn subordination(&self) -> Option<&SubordinationSpec<T>> {
        match &self.source {
            JSource::Subordinated(s) => Some(s),
            JSource::Custom(_) => None,
        }
    }

    /// `J_τ(y)`, zero outside `(0, 1)`.
    pub fn j(&self, y: T) -> T {
        match &self.source {
            JSource::Subordinated(s) => coefficient_j(s, self.tau, y),
            JSource::Custom(f) => {
                if y <= T::zero() || y >= T::one() {
                    T::zero()
                } else {
                    f(y)
                }
            }
        }
    }

    /// `(J'_τ(y), J''_τ(y))`.
    pub fn j_derivatives(&self, y: T) -> (T, T) {
        if let (DerivativeMethod::ClosedForm, JSource::Subordinated(s)) = (self.method, &self.source) {
            return closed_form_derivatives(s, self.tau, y);
        }
        self.fd_derivatives(y)
    }

    pub fn j_prime(&self, y: T) -> T {
        self.j_derivatives(y).0
    }

    pub fn j_second(&self, y: T) -> T {
        self.j_derivatives(y).1
    }

    /// Central differences, one-sided within a step of `{0, 1}`.
    pub fn fd_derivatives_with_step(&self, y: T, h: T) -> (T, T) {
        let two = T::lit(2.0);
        if y - h < T::zero() {
            let (f0, f1, f2) = (self.j(y), self.j(y + h), self.j(y + two * h));
            ((-T::lit(3.0) * f0 + T::lit(4.0) * f1 - f2) / (two * h), (f0 - two * f1 + f2) / (h * h))
        } else if y + h > T::one() {
            let (f0, f1, f2) = (self.j(y), self.j(y - h), self.j(y - two * h));
            ((T::lit(3.0) * f0 - T::lit(4.0) * f1 + f2) / (two * h), (f0 - two * f1 + f2) / (h * h))
        } else {
            let (fm, f0, fp) = (self.j(y - h), self.j(y), self.j(y + h));
            ((fp - fm) / (two * h), (fp - two * f0 + fm) / (h * h))
        }
    }

    fn fd_derivatives(&self, y: T) -> (T, T) {
        self.fd_derivatives_with_step(y, T::lit(FD_STEP))
    }

    /// Suprema of `|J|`, `|J J'|` and `|J² J'|` over a uniform grid, each refined
    /// by golden section around its grid maximiser.
    pub fn kappa_constants(&self, grid_size: usize) -> Kappas<T> {
        let grid_size = grid_size.max(2);
        let step = T::one() / T::of(grid_size + 1);
        let fns: [&dyn Fn(T) -> T; 3] = [
            &|y| self.j(y).abs(),
            &|y| (self.j(y) * self.j_prime(y)).abs(),
            &|y| {
                let j = self.j(y);
                (j * j * self.j_prime(y)).abs()
            },
        ];
        let mut out = [T::zero(); 3];
        for (k, f) in fns.iter().enumerate() {
            let mut best = (T::zero(), T::zero());
            for i in 1..=grid_size {
                let y = T::of(i) * step;
                let v = f(y);
                if v > best.1 {
                    best = (y, v);
                }
            }
            if best.1 > T::zero() {
                let lo = (best.0 - step).max(step / T::lit(2.0));
                let hi = (best.0 + step).min(T::one() - step / T::lit(2.0));
                let (_, v) = golden_max(f, lo, hi, 60);
                best.1 = best.1.max(v);
            }
            out[k] = best.1;
        }
        Kappas { k1: out[0], k2: out[1], k3: out[2] }
    }

    /// `sup_{0<y≤δ} |J_τ(y)| / δ` together with the same ratio at the upper
    /// edge `1-δ ≤ y < 1`.
    pub fn edge_decay(&self, delta: T) -> (T, T) {
        let points = 400;
        let sup_on = |upper: bool| {
            let mut best = T::zero();
            // geometric grid from δ down to δ·1e-8
            for i in 0..=points {
                let h = delta * T::lit(10f64.powf(-8.0 * i as f64 / points as f64));
                let y = if upper { T::one() - h } else { h };
                best = best.max(self.j(y).abs());
            }
            best / delta
        };
        (sup_on(false), sup_on(true))
    }
}

/// For monotone `G` the level region is a half-line with edge `w`, and
/// `J_l = ∓H_{l-1}(w)φ(w)` differentiates in closed form.
fn closed_form_derivatives<T: Scalar>(spec: &SubordinationSpec<T>, l: usize, y: T) -> (T, T) {
    let z = norm_quantile(y);
    let phi = norm_pdf(z);
    let second = |w: T, sign: T| {
        if l == 0 {
            T::zero()
        } else {
            sign * T::of(l) * hermite_poly(l - 1, w) / phi
        }
    };
    match spec.level_region(y) {
        Region::Above(_) => {
            let w = -z;
            (hermite_poly(l, w), second(w, -T::one()))
        }
        _ => (hermite_poly(l, z), second(z, T::one())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::factorial;

    const SQRT_2PI: f64 = 2.506_628_274_631_000_7;

    fn qc_exp() -> SubordinationSpec<f64> {
        SubordinationSpec::QuantileCompose(DistributionSpec::Exponential { rate: 1.0 })
    }

    #[test]
    fn polynomials() {
        assert_eq!(hermite_poly(0, 7.5_f64), 1.0);
        assert_eq!(hermite_poly(2, 2.0_f64), 3.0);
        assert_eq!(hermite_poly(3, 1.0_f64), -2.0);
        // explicit H_4 = x^4 - 6x^2 + 3 and H_5 = x^5 - 10x^3 + 15x
        for x in [-1.3, 0.2, 2.7_f64] {
            assert!((hermite_poly(4, x) - (x.powi(4) - 6.0 * x * x + 3.0)).abs() < 1e-12);
            assert!((hermite_poly(5, x) - (x.powi(5) - 10.0 * x.powi(3) + 15.0 * x)).abs() < 1e-12);
        }
    }

    #[test]
    fn hermite_orthogonality_by_quadrature() {
        for (a, b) in [(2usize, 2usize), (3, 3), (2, 4), (1, 3)] {
            let r = integrate_adaptive(
                |u: f64| hermite_poly(a, u) * hermite_poly(b, u) * norm_pdf(u),
                -12.0,
                12.0,
                1e-12,
                2000,
            );
            let expected = if a == b { factorial::<f64>(a) } else { 0.0 };
            assert!((r.value - expected).abs() < 1e-9, "{a},{b}");
        }
    }

    #[test]
    fn coefficient_examples() {
        for x in [0.3, 1.0, 4.0] {
            assert_eq!(coefficient_c(&SubordinationSpec::<f64>::Square, 1, x).unwrap(), 0.0);
        }
        let phi1 = (-0.5f64).exp() / SQRT_2PI;
        let c = coefficient_c(&SubordinationSpec::Square, 2, 1.0).unwrap();
        assert!((c + 2.0 * phi1).abs() < 1e-15);
        assert!((c + 0.48394).abs() < 1e-5);
        let q = coefficient_c_quadrature(&SubordinationSpec::Square, 2, 1.0, 1e-11);
        assert!((c - q).abs() < 1e-8);
        let c = coefficient_c(&SubordinationSpec::Identity, 1, 0.0).unwrap();
        assert!((c + 1.0 / SQRT_2PI).abs() < 1e-15);
        assert!((c - coefficient_c_quadrature(&SubordinationSpec::Identity, 1, 0.0, 1e-11)).abs() < 1e-8);
        assert!(coefficient_c(&SubordinationSpec::Identity, 0, 0.0).is_err());
    }

    #[test]
    fn j_examples() {
        let qc = qc_exp();
        assert!((coefficient_j(&qc, 1, 0.5) + 1.0 / SQRT_2PI).abs() < 1e-15);
        let z: f64 = norm_quantile(0.8);
        let expected = -(-z * z / 2.0).exp() / SQRT_2PI;
        let j = coefficient_j(&qc, 1, 0.8);
        assert!((j - expected).abs() < 1e-14);
        let x = qc.marginal().quantile(0.8);
        assert!((j - coefficient_c_quadrature(&qc, 1, x, 1e-11)).abs() < 1e-8);
        assert!((j - coefficient_c(&qc, 1, x).unwrap()).abs() < 1e-12);
        for y in [0.1, 0.5, 0.9] {
            assert_eq!(coefficient_j(&SubordinationSpec::<f64>::Square, 1, y), 0.0);
        }
        assert_eq!(coefficient_j(&qc, 1, 0.0), 0.0);
        assert_eq!(coefficient_j(&qc, 1, 1.0), 0.0);
    }

    #[test]
    fn ranks() {
        let rank = |s: SubordinationSpec<f64>| {
            let grid = default_rank_grid(&s);
            hermite_rank(&s, 1e-8, &grid).unwrap()
        };
        assert_eq!(rank(SubordinationSpec::Identity), 1);
        assert_eq!(rank(SubordinationSpec::Square), 2);
        assert_eq!(rank(SubordinationSpec::Absolute), 2);
        assert_eq!(rank(qc_exp()), 1);
        assert!(matches!(
            hermite_rank(&SubordinationSpec::<f64>::Identity, 100.0, &[0.0]),
            Err(Error::RankNotFound { max_order: 8, .. })
        ));
    }

    #[test]
    fn quantile_compose_kappas() {
        let a = HermiteAnalysis::new(&qc_exp()).unwrap();
        assert_eq!(a.tau(), 1);
        let k = a.kappas();
        let e = std::f64::consts::E;
        let pi = std::f64::consts::PI;
        assert!((k.k1 - 1.0 / (2.0 * pi).sqrt()).abs() < 1e-6);
        assert!((k.k2 - 1.0 / (2.0 * pi * e).sqrt()).abs() < 1e-6);
        assert!((k.k3 - 1.0 / (2.0 * pi * (2.0 * e).sqrt())).abs() < 1e-6);
        assert!((k.k1 - 0.39894).abs() < 1e-5);
        assert!((k.k2 - 0.24197).abs() < 1e-5);
        assert!((k.k3 - 0.068259).abs() < 1e-5);
    }

    #[test]
    fn zero_j_has_zero_kappas() {
        let a = HermiteAnalysis::<f64>::from_fn(1, |_| 0.0);
        assert_eq!(a.kappas(), Kappas { k1: 0.0, k2: 0.0, k3: 0.0 });
    }

    #[test]
    fn derivatives() {
        let a = HermiteAnalysis::new(&qc_exp()).unwrap();
        assert_eq!(a.derivative_method(), DerivativeMethod::ClosedForm);
        assert_eq!(a.j_prime(0.5), 0.0);
        let (d1, _) = a.j_derivatives(0.8);
        assert!((d1 - norm_quantile(0.8)).abs() < 1e-15);
        let (fd1, fd2) = a.fd_derivatives_with_step(0.8, 1e-5);
        assert!((fd1 - d1).abs() < 1e-6);
        assert!((fd2 - a.j_second(0.8)).abs() < 1e-4);

        let sq = HermiteAnalysis::<f64>::new(&SubordinationSpec::Square).unwrap();
        assert_eq!(sq.tau(), 2);
        assert!(matches!(sq.derivative_method(), DerivativeMethod::FiniteDifference { .. }));
        let coarse = sq.j_prime(0.3);
        let fine = sq.fd_derivatives_with_step(0.3, 1e-6).0;
        assert!((coarse - fine).abs() < 1e-4);
        // J_2(y) = -2aφ(a) with a = Φ⁻¹((1+y)/2) gives J' = a² - 1
        let a_: f64 = half_normal_quantile(0.3);
        assert!((coarse - (a_ * a_ - 1.0)).abs() < 1e-6);
    }

    #[test]
    fn decreasing_table_derivatives() {
        let g = PiecewiseLinear::<f64>::new(vec![-1.0, 0.0, 2.0], vec![3.0, 1.0, -1.0], Extension::Linear).unwrap();
        let spec = SubordinationSpec::Tabulated(g);
        let a = HermiteAnalysis::new(&spec).unwrap();
        assert_eq!(a.tau(), 1);
        for y in [0.2, 0.55, 0.9_f64] {
            let (d1, d2) = a.j_derivatives(y);
            let (f1, f2) = a.fd_derivatives_with_step(y, 1e-5);
            assert!((d1 - f1).abs() < 1e-6, "{y}");
            assert!((d2 - f2).abs() < 1e-3, "{y}");
            let x = spec.marginal().quantile(y);
            let c = coefficient_c(&spec, 1, x).unwrap();
            assert!((c - a.j(y)).abs() < 1e-10);
        }
    }

    #[test]
    fn edge_decay_shapes() {
        // quantile-compose: |J₁(δ)| ≈ δ√(2 ln(1/δ)), so C(δ)/√(2 ln(1/δ)) settles
        let a = HermiteAnalysis::new(&qc_exp()).unwrap();
        let scaled: Vec<f64> = [0.1, 0.01, 0.001]
            .iter()
            .map(|&d: &f64| a.edge_decay(d).0 / (2.0 * (1.0 / d).ln()).sqrt())
            .collect();
        for s in &scaled {
            assert!(*s > 0.7 && *s < 1.2, "{scaled:?}");
        }
        // square: J₂(y) ≈ -y near 1 and O(y) near 0
        let sq = HermiteAnalysis::<f64>::new(&SubordinationSpec::Square).unwrap();
        for d in [0.1, 0.01, 0.001] {
            let (lo, hi) = sq.edge_decay(d);
            assert!(lo < 1.0 + 1e-6 && lo > 0.9, "{d}: {lo}");
            assert!(hi.is_finite());
        }
    }

    #[test]
    fn parse_and_regions() {
        let s: SubordinationSpec<f64> = "quantile-compose(exponential(2))".parse().unwrap();
        assert_eq!(s, SubordinationSpec::QuantileCompose(DistributionSpec::Exponential { rate: 2.0 }));
        assert_eq!("square".parse::<SubordinationSpec<f64>>().unwrap(), SubordinationSpec::Square);
        assert!("tabulated(0:0;1:1;2:0)".parse::<SubordinationSpec<f64>>().is_err());
        assert!("cube".parse::<SubordinationSpec<f64>>().is_err());
        assert_eq!(SubordinationSpec::<f64>::Square.region(-1.0).unwrap(), Region::Empty);
        let pit = SubordinationSpec::<f64>::Square.pit(0.1);
        assert!((pit - SubordinationSpec::<f64>::Square.marginal().cdf(0.01)).abs() < 1e-16);
    }

    #[test]
    fn cauchy_schwarz_bound() {
        for spec in [SubordinationSpec::Identity, SubordinationSpec::Square, qc_exp()] {
            for l in 1..=8 {
                for x in [-3.0, -0.5, 0.0, 0.4, 1.0, 2.5, 7.0] {
                    let c = coefficient_c(&spec, l, x).unwrap();
                    assert!(c.abs() <= factorial::<f64>(l), "{spec} {l} {x}");
                }
            }
        }
    }
}
