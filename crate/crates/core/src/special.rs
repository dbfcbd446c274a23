//! Standard normal density, distribution and quantile functions.

use crate::scalar::Scalar;

/// Standard normal density.
#[inline]
pub fn norm_pdf<T: Scalar>(x: T) -> T {
    if x.is_infinite() {
        return T::zero();
    }
    let two = T::lit(2.0);
    (-(x * x) / two).exp() / (two * T::PI()).sqrt()
}

/// Standard normal distribution function, accurate in both tails.
#[inline]
pub fn norm_cdf<T: Scalar>(x: T) -> T {
    T::lit(0.5) * (-x / T::SQRT_2()).erfc()
}

// Rational approximation for the lower region, relative error about 1.15e-9
// before refinement.
const A: [f64; 6] = [
    -3.969_683_028_665_376e1,
    2.209_460_984_245_205e2,
    -2.759_285_104_469_687e2,
    1.383_577_518_672_690e2,
    -3.066_479_806_614_716e1,
    2.506_628_277_459_239,
];
const B: [f64; 5] = [
    -5.447_609_879_822_406e1,
    1.615_858_368_580_409e2,
    -1.556_989_798_598_866e2,
    6.680_131_188_771_972e1,
    -1.328_068_155_288_572e1,
];
const C: [f64; 6] = [
    -7.784_894_002_430_293e-3,
    -3.223_964_580_411_365e-1,
    -2.400_758_277_161_838,
    -2.549_732_539_343_734,
    4.374_664_141_464_968,
    2.938_163_982_698_783,
];
const D: [f64; 4] = [
    7.784_695_709_041_462e-3,
    3.224_671_290_700_398e-1,
    2.445_134_137_142_996,
    3.754_408_661_907_416,
];
const P_LOW: f64 = 0.02425;

fn horner<T: Scalar>(coeffs: &[f64], x: T) -> T {
    coeffs.iter().fold(T::zero(), |acc, &c| acc * x + T::lit(c))
}

/// Initial guess for `p <= 0.5`.
fn quantile_guess<T: Scalar>(p: T) -> T {
    if p < T::lit(P_LOW) {
        let q = (-T::lit(2.0) * p.ln()).sqrt();
        horner(&C, q) / (horner(&D, q) * q + T::one())
    } else {
        let q = p - T::lit(0.5);
        let r = q * q;
        horner(&A, r) * q / (horner(&B, r) * r + T::one())
    }
}

/// Standard normal quantile function.
///
/// Rational initial guess followed by one Newton step on the distribution
/// function. Upper half uses symmetry, `1 - p` being exact for `p >= 1/2`.
pub fn norm_quantile<T: Scalar>(p: T) -> T {
    if p.is_nan() {
        return p;
    }
    if p <= T::zero() {
        return T::neg_infinity();
    }
    if p >= T::one() {
        return T::infinity();
    }
    if p > T::lit(0.5) {
        return -norm_quantile(T::one() - p);
    }
    let x = quantile_guess(p);
    let density = norm_pdf(x);
    if density > T::zero() {
        x - (norm_cdf(x) - p) / density
    } else {
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bisect_quantile(p: f64) -> f64 {
        let (mut lo, mut hi) = (-40.0f64, 40.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if norm_cdf(mid) < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn known_values() {
        assert!((norm_pdf(0.0f64) - 0.398_942_280_401_432_7).abs() < 1e-16);
        assert!((norm_cdf(0.0f64) - 0.5).abs() < 1e-16);
        assert!((norm_cdf(1.959_963_984_540_054f64) - 0.975).abs() < 1e-15);
        assert_eq!(norm_quantile(0.5f64), 0.0);
        assert!((norm_quantile(0.975f64) - 1.959_963_984_540_054).abs() < 1e-13);
        assert_eq!(norm_quantile(0.0f64), f64::NEG_INFINITY);
        assert_eq!(norm_quantile(1.0f64), f64::INFINITY);
    }

    #[test]
    fn quantile_matches_bisection() {
        for i in 1..200 {
            let p = i as f64 / 200.0;
            let q = norm_quantile(p);
            assert!((q - bisect_quantile(p)).abs() < 1e-12, "p={p}");
            assert!((norm_cdf(q) - p).abs() < 1e-15, "p={p}");
        }
        for e in 3..300 {
            let p = 10f64.powi(-(e as i32) / 10).max(1e-300);
            let q = norm_quantile(p);
            assert!(((norm_cdf(q) - p) / p).abs() < 1e-12, "p={p}");
        }
    }

    #[test]
    fn single_precision() {
        let q = norm_quantile(0.8f32);
        assert!((q - 0.841_621_2).abs() < 1e-5);
    }
}
