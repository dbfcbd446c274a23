//! Marginal distributions `F`, their densities and quantile functions, and the
//! regularity conditions imposed on `F` for the general quantile process.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::special::{norm_cdf, norm_pdf, norm_quantile};
use crate::table::{Extension, Monotonicity, PiecewiseLinear};

/// A continuous marginal distribution with density `f`, derivative `f'` and
/// quantile function `Q`.
#[derive(Debug, Clone, PartialEq)]
pub enum DistributionSpec<T> {
    Uniform { lo: T, hi: T },
    Exponential { rate: T },
    Normal { mu: T, sigma: T },
    Cauchy { loc: T, scale: T },
    /// Law of `η²` for standard normal `η`.
    ChiSquare1,
    /// Law of `|η|`.
    HalfNormal,
    /// Distribution function given by a monotone table, linearly interpolated.
    Tabulated(PiecewiseLinear<T>),
    /// Law of `G(η)` for a strictly monotone piecewise-linear `G`.
    NormalTransform(PiecewiseLinear<T>),
}

impl<T: Scalar> DistributionSpec<T> {
    pub fn standard_uniform() -> Self {
        Self::Uniform {
            lo: T::zero(),
            hi: T::one(),
        }
    }

    pub fn standard_normal() -> Self {
        Self::Normal {
            mu: T::zero(),
            sigma: T::one(),
        }
    }

    /// A distribution function table `(x_i, F(x_i))`, nondecreasing from 0 to 1.
    pub fn tabulated(xs: Vec<T>, ps: Vec<T>) -> Result<Self> {
        let spec = Self::Tabulated(PiecewiseLinear::new(xs, ps, Extension::Clamp)?);
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidSpec(msg.to_string()));
        match self {
            Self::Uniform { lo, hi } if !(lo < hi) => bad("uniform needs lo < hi"),
            Self::Exponential { rate } if !(*rate > T::zero()) => bad("exponential rate must be positive"),
            Self::Normal { sigma, .. } if !(*sigma > T::zero()) => bad("normal sigma must be positive"),
            Self::Cauchy { scale, .. } if !(*scale > T::zero()) => bad("cauchy scale must be positive"),
            Self::Tabulated(table) => {
                let (_, ps) = table.knots();
                if ps[0] != T::zero() || ps[ps.len() - 1] != T::one() {
                    return bad("tabulated distribution must run from 0 to 1");
                }
                if ps.windows(2).any(|w| w[1] < w[0]) {
                    return bad("tabulated distribution must be nondecreasing");
                }
                Ok(())
            }
            Self::NormalTransform(g) => match (g.monotonicity(), g.extension()) {
                (Monotonicity::None, _) => bad("transform must be strictly monotone"),
                (_, Extension::Clamp) => bad("transform must extend linearly"),
                _ => Ok(()),
            },
            _ => Ok(()),
        }
    }

    /// Support endpoints `(a, b)`, possibly infinite.
    pub fn support(&self) -> (T, T) {
        let inf = T::infinity();
        match self {
            Self::Uniform { lo, hi } => (*lo, *hi),
            Self::Exponential { .. } | Self::ChiSquare1 | Self::HalfNormal => (T::zero(), inf),
            Self::Normal { .. } | Self::Cauchy { .. } | Self::NormalTransform(_) => (-inf, inf),
            Self::Tabulated(table) => {
                let (xs, ps) = table.knots();
                let first = ps.iter().rposition(|&p| p == T::zero()).unwrap_or(0);
                let last = ps.iter().position(|&p| p == T::one()).unwrap_or(xs.len() - 1);
                (xs[first], xs[last])
            }
        }
    }

    pub fn cdf(&self, x: T) -> T {
        let one = T::one();
        match self {
            Self::Uniform { lo, hi } => ((x - *lo) / (*hi - *lo)).max(T::zero()).min(one),
            Self::Exponential { rate } => {
                if x <= T::zero() {
                    T::zero()
                } else {
                    -(-*rate * x).exp_m1()
                }
            }
            Self::Normal { mu, sigma } => norm_cdf((x - *mu) / *sigma),
            Self::Cauchy { loc, scale } => {
                T::lit(0.5) + ((x - *loc) / *scale).atan() / T::PI()
            }
            Self::ChiSquare1 => {
                if x <= T::zero() {
                    T::zero()
                } else {
                    one - (x / T::lit(2.0)).sqrt().erfc()
                }
            }
            Self::HalfNormal => {
                if x <= T::zero() {
                    T::zero()
                } else {
                    one - (x / T::SQRT_2()).erfc()
                }
            }
            Self::Tabulated(table) => table.eval(x),
            Self::NormalTransform(g) => {
                let u = g.inverse(x).expect("validated monotone transform");
                match g.monotonicity() {
                    Monotonicity::Decreasing => norm_cdf(-u),
                    _ => norm_cdf(u),
                }
            }
        }
    }

    pub fn pdf(&self, x: T) -> T {
        let (a, b) = self.support();
        if x < a || x > b {
            return T::zero();
        }
        match self {
            Self::Uniform { lo, hi } => T::one() / (*hi - *lo),
            Self::Exponential { rate } => *rate * (-*rate * x).exp(),
            Self::Normal { mu, sigma } => norm_pdf((x - *mu) / *sigma) / *sigma,
            Self::Cauchy { loc, scale } => {
                let z = (x - *loc) / *scale;
                T::one() / (T::PI() * *scale * (T::one() + z * z))
            }
            Self::ChiSquare1 => {
                let r = x.sqrt();
                norm_pdf(r) / r
            }
            Self::HalfNormal => T::lit(2.0) * norm_pdf(x),
            Self::Tabulated(table) => table.slope(x),
            Self::NormalTransform(g) => {
                let u = g.inverse(x).expect("validated monotone transform");
                norm_pdf(u) / g.slope(u).abs()
            }
        }
    }

    pub fn pdf_prime(&self, x: T) -> T {
        let (a, b) = self.support();
        if x < a || x > b {
            return T::zero();
        }
        let two = T::lit(2.0);
        match self {
            Self::Uniform { .. } | Self::Tabulated(_) => T::zero(),
            Self::Exponential { rate } => -*rate * *rate * (-*rate * x).exp(),
            Self::Normal { mu, sigma } => {
                let z = (x - *mu) / *sigma;
                -z * norm_pdf(z) / (*sigma * *sigma)
            }
            Self::Cauchy { loc, scale } => {
                let z = (x - *loc) / *scale;
                let w = T::one() + z * z;
                -two * z / (T::PI() * *scale * *scale * w * w)
            }
            Self::ChiSquare1 => {
                let r = x.sqrt();
                -norm_pdf(r) * (r * r + T::one()) / (two * r * r * r)
            }
            Self::HalfNormal => -two * x * norm_pdf(x),
            Self::NormalTransform(g) => {
                let u = g.inverse(x).expect("validated monotone transform");
                let inv_slope = T::one() / g.slope(u);
                let sign = match g.monotonicity() {
                    Monotonicity::Decreasing => -T::one(),
                    _ => T::one(),
                };
                -sign * u * norm_pdf(u) * inv_slope * inv_slope
            }
        }
    }

    pub fn quantile(&self, y: T) -> T {
        let (a, b) = self.support();
        if y <= T::zero() {
            return a;
        }
        if y >= T::one() {
            return b;
        }
        let half = T::lit(0.5);
        match self {
            Self::Uniform { lo, hi } => *lo + y * (*hi - *lo),
            Self::Exponential { rate } => -(-y).ln_1p() / *rate,
            Self::Normal { mu, sigma } => *mu + *sigma * norm_quantile(y),
            Self::Cauchy { loc, scale } => *loc + *scale * (T::PI() * (y - half)).tan(),
            Self::ChiSquare1 => {
                let r = half_normal_quantile(y);
                r * r
            }
            Self::HalfNormal => half_normal_quantile(y),
            Self::Tabulated(table) => {
                // leftmost x with F(x) = y
                let (xs, ps) = table.knots();
                let i = ps.partition_point(|&p| p < y);
                if i == 0 {
                    xs[0]
                } else {
                    let (p0, p1) = (ps[i - 1], ps[i]);
                    xs[i - 1] + (y - p0) / (p1 - p0) * (xs[i] - xs[i - 1])
                }
            }
            Self::NormalTransform(g) => {
                let z = norm_quantile(y);
                match g.monotonicity() {
                    Monotonicity::Decreasing => g.eval(-z),
                    _ => g.eval(z),
                }
            }
        }
    }

    /// Whether `F` is known to be twice differentiable on `(a, b)`.
    pub fn is_smooth(&self) -> bool {
        !matches!(self, Self::Tabulated(_) | Self::NormalTransform(_))
    }
}

/// `Φ⁻¹((1 + y)/2)` evaluated without losing the upper tail.
pub(crate) fn half_normal_quantile<T: Scalar>(y: T) -> T {
    -norm_quantile((T::one() - y) / T::lit(2.0))
}

impl<T: Scalar> fmt::Display for DistributionSpec<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Uniform { lo, hi } => write!(f, "uniform({lo},{hi})"),
            Self::Exponential { rate } => write!(f, "exponential({rate})"),
            Self::Normal { mu, sigma } => write!(f, "normal({mu},{sigma})"),
            Self::Cauchy { loc, scale } => write!(f, "cauchy({loc},{scale})"),
            Self::ChiSquare1 => write!(f, "chisquare1"),
            Self::HalfNormal => write!(f, "halfnormal"),
            Self::Tabulated(t) => {
                let (xs, ps) = t.knots();
                let pairs: Vec<String> = xs.iter().zip(ps).map(|(x, p)| format!("{x}:{p}")).collect();
                write!(f, "tabulated({})", pairs.join(";"))
            }
            Self::NormalTransform(t) => {
                let (xs, ys) = t.knots();
                let pairs: Vec<String> = xs.iter().zip(ys).map(|(x, y)| format!("{x}:{y}")).collect();
                write!(f, "transform({})", pairs.join(";"))
            }
        }
    }
}

/// Splits `name(a,b,...)` into the name and its arguments.
pub(crate) fn split_call(s: &str) -> Result<(String, Vec<String>)> {
    let s = s.trim();
    match s.find('(') {
        None => Ok((s.to_ascii_lowercase(), Vec::new())),
        Some(open) => {
            let inner = s[open + 1..].strip_suffix(')').ok_or_else(|| {
                Error::InvalidSpec(format!("unbalanced parentheses in `{s}`"))
            })?;
            let args = if inner.trim().is_empty() {
                Vec::new()
            } else {
                inner.split(',').map(|a| a.trim().to_string()).collect()
            };
            Ok((s[..open].trim().to_ascii_lowercase(), args))
        }
    }
}

pub(crate) fn parse_num<T: Scalar>(s: &str) -> Result<T> {
    s.trim()
        .parse::<f64>()
        .map(T::lit)
        .map_err(|_| Error::InvalidSpec(format!("`{s}` is not a number")))
}

/// Parses `x:y;x:y;...` pairs.
pub(crate) fn parse_pairs<T: Scalar>(s: &str) -> Result<(Vec<T>, Vec<T>)> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for pair in s.split(';').filter(|p| !p.trim().is_empty()) {
        let (x, y) = pair
            .split_once(':')
            .ok_or_else(|| Error::InvalidSpec(format!("table entry `{pair}` is not x:y")))?;
        xs.push(parse_num(x)?);
        ys.push(parse_num(y)?);
    }
    Ok((xs, ys))
}

impl<T: Scalar> FromStr for DistributionSpec<T> {
    type Err = Error;

    /// Accepts `uniform`, `uniform(lo,hi)`, `exponential(rate)`,
    /// `normal(mu,sigma)`, `cauchy(loc,scale)`, `chisquare1`, `halfnormal`
    /// and `tabulated(x:p;x:p;...)`.
    fn from_str(s: &str) -> Result<Self> {
        if let Some(rest) = s.trim().strip_prefix("tabulated(") {
            let body = rest
                .strip_suffix(')')
                .ok_or_else(|| Error::InvalidSpec(format!("unbalanced parentheses in `{s}`")))?;
            let (xs, ps) = parse_pairs(body)?;
            return Self::tabulated(xs, ps);
        }
        let (name, args) = split_call(s)?;
        let nums: Vec<T> = args.iter().map(|a| parse_num(a)).collect::<Result<_>>()?;
        let spec = match (name.as_str(), nums.as_slice()) {
            ("uniform", []) => Self::standard_uniform(),
            ("uniform", [lo, hi]) => Self::Uniform { lo: *lo, hi: *hi },
            ("exponential", []) => Self::Exponential { rate: T::one() },
            ("exponential", [rate]) => Self::Exponential { rate: *rate },
            ("normal", []) => Self::standard_normal(),
            ("normal", [mu, sigma]) => Self::Normal { mu: *mu, sigma: *sigma },
            ("cauchy", []) => Self::Cauchy { loc: T::zero(), scale: T::one() },
            ("cauchy", [loc, scale]) => Self::Cauchy { loc: *loc, scale: *scale },
            ("chisquare1", []) => Self::ChiSquare1,
            ("halfnormal", []) => Self::HalfNormal,
            _ => return Err(Error::InvalidSpec(format!("unknown distribution `{s}`"))),
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Which of the endpoint conditions holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EndpointVariant {
    /// Both endpoint density limits positive.
    V,
    /// A vanishing endpoint limit is approached monotonically.
    VPrime,
    Neither,
}

/// Outcome of the regularity checks on `F`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionReport<T> {
    /// Grid supremum of `y(1-y)|f'(Q(y))|/f²(Q(y))`; a lower bound for the
    /// true supremum.
    pub gamma_hat: T,
    pub argmax_y: T,
    /// Largest admissible `γ`: `1 + τD/(2 - 2τD)`.
    pub gamma_bound: T,
    pub twice_differentiable: bool,
    pub positive_density: bool,
    pub gamma_condition: bool,
    /// Limit of `f` at the lower endpoint; `+∞` when it diverges.
    pub a_limit: T,
    pub b_limit: T,
    pub finite_limits: bool,
    pub v_variant: EndpointVariant,
}

impl<T> ConditionReport<T> {
    /// Conditions (i)–(iii).
    pub fn satisfies_i_through_iii(&self) -> bool {
        self.twice_differentiable && self.positive_density && self.gamma_condition
    }
}

/// Trimming of the open interval for the supremum.
const EDGE_EPS: f64 = 1e-6;
const APPROACH_POINTS: i32 = 32;

fn gamma_ratio<T: Scalar>(spec: &DistributionSpec<T>, y: T) -> Result<T> {
    let x = spec.quantile(y);
    let f = spec.pdf(x);
    let fp = spec.pdf_prime(x);
    let r = y * (T::one() - y) * fp.abs() / (f * f);
    if r.is_nan() || f.is_nan() || fp.is_nan() {
        return Err(Error::EvaluationDomain {
            at: x.as_f64(),
            what: "density or its derivative is not finite".into(),
        });
    }
    Ok(r)
}

/// Nested grid on `[ε, 1-ε]` plus limit probes toward both endpoints, then a
/// golden-section pass around the best point.
pub fn gamma_supremum<T: Scalar>(spec: &DistributionSpec<T>, grid_size: usize) -> Result<(T, T)> {
    let grid_size = grid_size.max(2);
    let eps = T::lit(EDGE_EPS);
    let width = T::one() - eps - eps;
    let mut ys: Vec<T> = (0..=grid_size)
        .map(|i| eps + width * T::of(i) / T::of(grid_size))
        .collect();
    for e in 7..=12 {
        let probe = T::lit(10f64.powi(-e));
        if probe > T::zero() && T::one() - probe < T::one() {
            ys.push(probe);
            ys.push(T::one() - probe);
        }
    }
    let mut best = (T::neg_infinity(), T::lit(0.5));
    let mut best_idx = 0;
    for (i, &y) in ys.iter().enumerate() {
        let r = gamma_ratio(spec, y)?;
        if r > best.0 {
            best = (r, y);
            best_idx = i;
        }
    }
    if best_idx <= grid_size {
        let step = width / T::of(grid_size);
        let lo = (best.1 - step).max(eps);
        let hi = (best.1 + step).min(T::one() - eps);
        let (y, r) = golden_max(|y| gamma_ratio(spec, y).unwrap_or(T::zero()), lo, hi, 80);
        if r > best.0 {
            best = (r, y);
        }
    }
    Ok(best)
}

/// Golden-section search for a maximum of a unimodal function on `[lo, hi]`.
pub(crate) fn golden_max<T: Scalar, F: FnMut(T) -> T>(mut f: F, lo: T, hi: T, iters: usize) -> (T, T) {
    let ratio = T::lit(0.618_033_988_749_894_8);
    let (mut a, mut b) = (lo, hi);
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..iters {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            fd = f(d);
        }
    }
    if fc > fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Density values along `y = 2^{-j}` (lower) and `1 - 2^{-j}` (upper),
/// ordered toward the endpoint.
fn approach<T: Scalar>(spec: &DistributionSpec<T>, upper: bool) -> Vec<T> {
    (1..=APPROACH_POINTS)
        .map(|j| {
            let h = T::lit(2f64.powi(-j));
            let y = if upper { T::one() - h } else { h };
            spec.pdf(spec.quantile(y))
        })
        .collect()
}

/// Extrapolated endpoint limit of a sequence of density values.
fn endpoint_limit<T: Scalar>(values: &[T]) -> T {
    let n = values.len();
    let (prev, last) = (values[n - 2], values[n - 1]);
    if last == T::zero() {
        return T::zero();
    }
    if !last.is_finite() {
        return T::infinity();
    }
    let ratio = last / prev;
    if ratio < T::lit(0.9) {
        T::zero()
    } else if ratio > T::lit(1.1) {
        T::infinity()
    } else {
        last
    }
}

/// Checks the regularity conditions on `F` for rank `tau` and decay `d`.
pub fn check_conditions<T: Scalar>(
    spec: &DistributionSpec<T>,
    tau: usize,
    d: T,
    grid_size: usize,
) -> Result<ConditionReport<T>> {
    spec.validate()?;
    let td = T::of(tau) * d;
    if !(td > T::zero() && td < T::one()) {
        return Err(Error::InvalidSpec(format!("need 0 < tau*D < 1, got {td}")));
    }
    let gamma_bound = T::one() + td / (T::lit(2.0) - T::lit(2.0) * td);
    let (gamma_hat, argmax_y) = gamma_supremum(spec, grid_size)?;
    let positive_density = (1..grid_size.max(2))
        .map(|i| T::of(i) / T::of(grid_size.max(2)))
        .all(|y| spec.pdf(spec.quantile(y)) > T::zero());
    let lower = approach(spec, false);
    let upper = approach(spec, true);
    let a_limit = endpoint_limit(&lower);
    let b_limit = endpoint_limit(&upper);
    let finite_limits = a_limit.is_finite() && b_limit.is_finite();
    // Along increasing y: lower approach is read backwards.
    let nondecreasing_near_a = lower.windows(2).all(|w| w[1] <= w[0]);
    let nonincreasing_near_b = upper.windows(2).all(|w| w[1] <= w[0]);
    let v_variant = if a_limit > T::zero() && b_limit > T::zero() {
        EndpointVariant::V
    } else if (a_limit > T::zero() || nondecreasing_near_a)
        && (b_limit > T::zero() || nonincreasing_near_b)
    {
        EndpointVariant::VPrime
    } else {
        EndpointVariant::Neither
    };
    Ok(ConditionReport {
        gamma_hat,
        argmax_y,
        gamma_bound,
        twice_differentiable: spec.is_smooth(),
        positive_density,
        gamma_condition: gamma_hat < gamma_bound + T::lit(1e-9),
        a_limit,
        b_limit,
        finite_limits,
        v_variant,
    })
}

/// Worst roundtrip errors `max|F(Q(y)) - y|` and `max|Q(F(x)) - x|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundtripReport<T> {
    pub cdf_of_quantile: T,
    pub quantile_of_cdf: T,
}

pub fn quantile_roundtrip<T: Scalar>(
    spec: &DistributionSpec<T>,
    ys: &[T],
    xs: &[T],
) -> RoundtripReport<T> {
    let cdf_of_quantile = ys
        .iter()
        .map(|&y| (spec.cdf(spec.quantile(y)) - y).abs())
        .fold(T::zero(), T::max);
    let quantile_of_cdf = xs
        .iter()
        .map(|&x| (spec.quantile(spec.cdf(x)) - x).abs())
        .fold(T::zero(), T::max);
    RoundtripReport {
        cdf_of_quantile,
        quantile_of_cdf,
    }
}
