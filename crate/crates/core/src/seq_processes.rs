//! Sequential empirical and quantile processes on `(y, t) ∈ [0,1]²`, with exact
//! suprema and `L_p` norms over their piecewise structure.
//!
//! A field is evaluated level by level: for `k = [nt]` the sorted prefix
//! `U_(1) ≤ … ≤ U_(k)` fixes the jump points in `y`. Between consecutive
//! breakpoints (order statistics and the grid `j/k`) both `Ê_k` and `Û_k` are
//! constant, so every process is a fixed function of `y` on each cell.

use crate::distributions::DistributionSpec;
use crate::error::{Error, Result};
use crate::quadrature::GaussLegendre;
use crate::scalar::Scalar;

/// `d_n = √(n^{2-τD} L^τ(n))`.
pub fn d_norm<T: Scalar>(n: usize, tau: usize, d: T, l_n: T) -> Result<T> {
    let td = T::of(tau) * d;
    if !(td > T::zero() && td < T::one()) {
        return Err(Error::InvalidSpec(format!("need 0 < tau*D < 1, got {td}")));
    }
    if n == 0 || !(l_n > T::zero()) {
        return Err(Error::InvalidSpec("d_n needs n >= 1 and L(n) > 0".into()));
    }
    let nf = T::of(n);
    Ok((nf.powf(T::lit(2.0) - td) * l_n.powi(tau as i32)).sqrt())
}

/// `(y·k)` split into its floor and whether it is an integer, robust to the
/// rounding in `y = j/k`.
fn scaled_floor<T: Scalar>(y: T, k: usize) -> (usize, bool) {
    let p = y * T::of(k);
    let r = p.round();
    let tol = T::lit(8.0) * T::epsilon() * p.abs().max(T::one());
    if (p - r).abs() <= tol {
        (r.to_usize().unwrap_or(0), true)
    } else {
        (p.floor().max(T::zero()).to_usize().unwrap_or(0), false)
    }
}

/// `[nt]`, exact when `t = k/n` was computed in floating point.
pub fn level_index<T: Scalar>(n: usize, t: T) -> usize {
    if t <= T::zero() {
        return 0;
    }
    scaled_floor(t, n).0.min(n)
}

/// Which one-sided value of a jump to take.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Value,
    Right,
}

/// Wavelet matrix over the global ranks of a sequence: counts and order
/// statistics of any prefix in `O(log n)`.
#[derive(Debug, Clone)]
pub struct PrefixIndex {
    bits: usize,
    /// `ones[b][i]` = number of set bits among the first `i` entries of level `b`.
    ones: Vec<Vec<u32>>,
    zeros: Vec<usize>,
    len: usize,
}

impl PrefixIndex {
    /// `values` must be a permutation of `0..values.len()`.
    pub fn new(values: &[usize]) -> Self {
        let len = values.len();
        let bits = (usize::BITS - len.max(1).leading_zeros()) as usize;
        let mut current = values.to_vec();
        let mut ones = Vec::with_capacity(bits);
        let mut zeros = Vec::with_capacity(bits);
        for level in 0..bits {
            let shift = bits - 1 - level;
            let mut counts = Vec::with_capacity(len + 1);
            counts.push(0u32);
            let mut acc = 0u32;
            for &v in &current {
                acc += ((v >> shift) & 1) as u32;
                counts.push(acc);
            }
            let (mut lo, hi): (Vec<usize>, Vec<usize>) = current.iter().partition(|&&v| (v >> shift) & 1 == 0);
            zeros.push(lo.len());
            lo.extend(hi);
            current = lo;
            ones.push(counts);
        }
        Self { bits, ones, zeros, len }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Number of the first `k` values that are `< r`.
    pub fn count_less(&self, k: usize, r: usize) -> usize {
        if r >= 1 << self.bits {
            return k;
        }
        let (mut lo, mut hi) = (0usize, k);
        let mut count = 0;
        for level in 0..self.bits {
            let shift = self.bits - 1 - level;
            let o = &self.ones[level];
            let (olo, ohi) = (o[lo] as usize, o[hi] as usize);
            if (r >> shift) & 1 == 1 {
                count += (hi - lo) - (ohi - olo);
                lo = self.zeros[level] + olo;
                hi = self.zeros[level] + ohi;
            } else {
                lo -= olo;
                hi -= ohi;
            }
        }
        count
    }

    /// The `j`-th smallest (0-based) of the first `k` values.
    pub fn kth_smallest(&self, k: usize, mut j: usize) -> usize {
        assert!(j < k && k <= self.len, "order statistic out of range");
        let (mut lo, mut hi) = (0usize, k);
        let mut value = 0;
        for level in 0..self.bits {
            let shift = self.bits - 1 - level;
            let o = &self.ones[level];
            let (olo, ohi) = (o[lo] as usize, o[hi] as usize);
            let zeros_in = (hi - lo) - (ohi - olo);
            if j < zeros_in {
                lo -= olo;
                hi -= ohi;
            } else {
                j -= zeros_in;
                value |= 1 << shift;
                lo = self.zeros[level] + olo;
                hi = self.zeros[level] + ohi;
            }
        }
        value
    }
}

/// A chronologically ordered sample `X_1..X_n` with `U_i = F(X_i)`.
#[derive(Debug, Clone)]
pub struct SampleBatch<T> {
    u: Vec<T>,
    x: Vec<T>,
    /// Indices sorted by `U`, ties by time.
    order: Vec<usize>,
    sorted_u: Vec<T>,
    index: PrefixIndex,
}

impl<T: Scalar> SampleBatch<T> {
    /// `x` defaults to `u` when the observations themselves are uniform.
    pub fn new(u: Vec<T>, x: Option<Vec<T>>) -> Result<Self> {
        if u.iter().any(|v| !(*v >= T::zero() && *v <= T::one())) {
            return Err(Error::InvalidSpec("PIT values must lie in [0,1]".into()));
        }
        let x = x.unwrap_or_else(|| u.clone());
        if x.len() != u.len() {
            return Err(Error::InvalidSpec("X and U must have equal length".into()));
        }
        let mut order: Vec<usize> = (0..u.len()).collect();
        order.sort_by(|&a, &b| u[a].partial_cmp(&u[b]).expect("finite").then(a.cmp(&b)));
        let mut rank = vec![0usize; u.len()];
        for (r, &i) in order.iter().enumerate() {
            rank[i] = r;
        }
        let sorted_u = order.iter().map(|&i| u[i]).collect();
        let index = PrefixIndex::new(&rank);
        Ok(Self { u, x, order, sorted_u, index })
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    pub fn u(&self) -> &[T] {
        &self.u
    }

    pub fn x(&self) -> &[T] {
        &self.x
    }

    /// `Ê_{[nt]}(y)`; zero on an empty prefix.
    pub fn empirical_cdf(&self, y: T, t: T) -> T {
        let k = level_index(self.len(), t);
        if k == 0 {
            return T::zero();
        }
        let r = self.sorted_u.partition_point(|&v| v <= y);
        T::of(self.index.count_less(k, r)) / T::of(k)
    }

    /// `Û_{[nt]}(y)`, the `⌈y[nt]⌉`-th order statistic, with `Û(0) = Û(0+)`.
    pub fn empirical_quantile(&self, y: T, t: T) -> Result<T> {
        let k = level_index(self.len(), t);
        if k == 0 {
            return Err(Error::EmptyPrefix);
        }
        let j = ceil_index(y, k);
        Ok(self.sorted_u[self.index.kth_smallest(k, j - 1)])
    }

    /// `Q̂_{[nt]}(y)`, the matching order statistic of the `X`s.
    pub fn empirical_x_quantile(&self, y: T, t: T) -> Result<T> {
        let k = level_index(self.len(), t);
        if k == 0 {
            return Err(Error::EmptyPrefix);
        }
        let j = ceil_index(y, k);
        Ok(self.x[self.order[self.index.kth_smallest(k, j - 1)]])
    }

    /// Sorted first `k` observations, in `O(n)`.
    pub fn level(&self, k: usize) -> LevelSlice<T> {
        let k = k.min(self.len());
        let mut u = Vec::with_capacity(k);
        let mut x = Vec::with_capacity(k);
        for &i in &self.order {
            if i < k {
                u.push(self.u[i]);
                x.push(self.x[i]);
            }
        }
        LevelSlice::from_sorted(u, x)
    }

    /// Evaluates `field` at `(y, t)`.
    pub fn eval<F: TwoParamField<T> + ?Sized>(&self, field: &F, y: T, t: T, side: Side) -> T {
        let level = self.level(level_index(self.len(), t));
        field.eval(&level, y, side)
    }
}

/// `⌈y k⌉` clamped to `[1, k]`.
fn ceil_index<T: Scalar>(y: T, k: usize) -> usize {
    let (f, exact) = scaled_floor(y, k);
    let c = if exact { f } else { f + 1 };
    c.clamp(1, k)
}

/// The state of every sequential process at one `y` on one level:
/// `count = k Ê_k(y)` and `index` with `Û_k(y) = U_(index)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Probe<T> {
    pub y: T,
    pub count: usize,
    pub index: usize,
}

/// A maximal open `y`-interval on which `count` and `index` are constant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell<T> {
    pub lo: T,
    pub hi: T,
    pub count: usize,
    pub index: usize,
}

impl<T: Copy> Cell<T> {
    pub fn at(&self, y: T) -> Probe<T> {
        Probe { y, count: self.count, index: self.index }
    }
}

/// The first `k` observations, sorted, with prefix sums of the `U`s.
#[derive(Debug, Clone)]
pub struct LevelSlice<T> {
    u: Vec<T>,
    x: Vec<T>,
    prefix: Vec<T>,
}

impl<T: Scalar> LevelSlice<T> {
    pub fn from_sorted(u: Vec<T>, x: Vec<T>) -> Self {
        let mut prefix = Vec::with_capacity(u.len() + 1);
        let mut acc = T::zero();
        prefix.push(acc);
        for &v in &u {
            acc += v;
            prefix.push(acc);
        }
        Self { u, x, prefix }
    }

    pub fn k(&self) -> usize {
        self.u.len()
    }

    /// `U_(j)`, 1-based.
    pub fn order_stat(&self, j: usize) -> T {
        self.u[j - 1]
    }

    /// `X_(j)`, 1-based.
    pub fn x_order_stat(&self, j: usize) -> T {
        self.x[j - 1]
    }

    /// `Σ_{i ≤ m} U_(i)`.
    pub fn prefix_sum(&self, m: usize) -> T {
        self.prefix[m]
    }

    pub fn sorted_u(&self) -> &[T] {
        &self.u
    }

    pub fn probe(&self, y: T, side: Side) -> Probe<T> {
        let k = self.k();
        if k == 0 {
            return Probe { y, count: 0, index: 0 };
        }
        let count = match side {
            Side::Left => self.u.partition_point(|&v| v < y),
            _ => self.u.partition_point(|&v| v <= y),
        };
        let index = match side {
            Side::Right => right_index(y, k),
            _ => ceil_index(y, k),
        };
        Probe { y, count, index }
    }

    /// Breakpoints in `[lo, hi]` (order statistics, `j/k`, and the window
    /// ends) with their values, and the cells between them.
    pub fn sweep(&self, lo: T, hi: T) -> (Vec<Probe<T>>, Vec<Cell<T>>) {
        let k = self.k();
        if k == 0 {
            return (Vec::new(), Vec::new());
        }
        let kf = T::of(k);
        let mut points: Vec<T> = Vec::with_capacity(2 * k + 3);
        points.push(lo);
        let (mut i, mut j) = (self.u.partition_point(|&v| v <= lo), 0usize);
        while j <= k && T::of(j) / kf <= lo {
            j += 1;
        }
        loop {
            let next_u = self.u.get(i).copied().filter(|&v| v < hi);
            let next_g = if j <= k { Some(T::of(j) / kf).filter(|&v| v < hi) } else { None };
            match (next_u, next_g) {
                (None, None) => break,
                (Some(a), Some(b)) if a <= b => {
                    points.push(a);
                    i += 1;
                }
                (Some(a), None) => {
                    points.push(a);
                    i += 1;
                }
                (_, Some(b)) => {
                    points.push(b);
                    j += 1;
                }
            }
        }
        if hi > lo {
            points.push(hi);
        }
        points.dedup();

        let mut probes = Vec::with_capacity(points.len());
        let mut cells = Vec::with_capacity(points.len());
        let mut le = self.u.partition_point(|&v| v < lo);
        for (p, &y) in points.iter().enumerate() {
            while le < k && self.u[le] <= y {
                le += 1;
            }
            probes.push(Probe { y, count: le, index: ceil_index(y, k) });
            if let Some(&next) = points.get(p + 1) {
                cells.push(Cell { lo: y, hi: next, count: le, index: right_index(y, k) });
            }
        }
        (probes, cells)
    }
}

/// `⌊y k⌋ + 1` clamped to `[1, k]`: the index just to the right of `y`.
fn right_index<T: Scalar>(y: T, k: usize) -> usize {
    (scaled_floor(y, k).0 + 1).clamp(1, k)
}

/// A process on `[0,1]²` that is a fixed function of `y` on each cell of each
/// level.
pub trait TwoParamField<T: Scalar>: Sync {
    /// Value at `probe.y` with the level state in `probe`; zero on level 0.
    fn eval_state(&self, level: &LevelSlice<T>, probe: &Probe<T>) -> T;

    /// Degree in `y` of the field within a cell, `None` when it is not a
    /// polynomial.
    fn cell_degree(&self) -> Option<usize>;

    fn eval(&self, level: &LevelSlice<T>, y: T, side: Side) -> T {
        if level.k() == 0 {
            return T::zero();
        }
        self.eval_state(level, &level.probe(y, side))
    }
}

/// Supremum of `|field|` over `y ∈ window` on one level.
///
/// Exact for cells of degree ≤ 2 (values at breakpoints, both one-sided
/// limits, and the vertex of each quadratic piece). Non-polynomial cells are
/// inspected at their ends and midpoint, giving a lower bound.
pub fn level_sup<T: Scalar, F: TwoParamField<T> + ?Sized>(field: &F, level: &LevelSlice<T>, window: (T, T)) -> T {
    if level.k() == 0 {
        return T::zero();
    }
    let (probes, cells) = level.sweep(window.0, window.1);
    let mut best = T::zero();
    for p in &probes {
        best = best.max(field.eval_state(level, p).abs());
    }
    let half = T::lit(0.5);
    for c in &cells {
        let f0 = field.eval_state(level, &c.at(c.lo));
        let f1 = field.eval_state(level, &c.at(c.hi));
        best = best.max(f0.abs()).max(f1.abs());
        match field.cell_degree() {
            Some(d) if d <= 1 => {}
            _ => {
                let mid = half * (c.lo + c.hi);
                let fm = field.eval_state(level, &c.at(mid));
                best = best.max(fm.abs());
                if field.cell_degree() == Some(2) {
                    // vertex of the parabola through the three samples
                    let curv = f0 - T::lit(2.0) * fm + f1;
                    if curv != T::zero() {
                        let s = half * (f0 - f1) / curv; // in units of half-width from mid
                        if s.abs() < T::one() {
                            let y = mid + s * half * (c.hi - c.lo);
                            best = best.max(field.eval_state(level, &c.at(y)).abs());
                        }
                    }
                }
            }
        }
    }
    best
}

/// `sup_{t ∈ levels} sup_{y ∈ window} |field|`.
pub fn sup_norm<T: Scalar, F: TwoParamField<T> + ?Sized>(
    field: &F,
    batch: &SampleBatch<T>,
    levels: &[usize],
    window: (T, T),
) -> T {
    levels
        .iter()
        .map(|&k| level_sup(field, &batch.level(k), window))
        .fold(T::zero(), T::max)
}

/// `∫_0^1 |field(y)|^p dy` on one level, exact for polynomial cells.
pub fn level_lp_integral<T: Scalar, F: TwoParamField<T> + ?Sized>(field: &F, level: &LevelSlice<T>, p: u32) -> T {
    if level.k() == 0 {
        return T::zero();
    }
    let degree = field.cell_degree();
    let nodes = match degree {
        Some(d) => ((d * p as usize) / 2 + 1).max(1),
        None => 8,
    };
    let rule = GaussLegendre::<T>::new(nodes);
    let (_, cells) = level.sweep(T::zero(), T::one());
    let mut total = T::zero();
    for c in &cells {
        let f = |y: T| field.eval_state(level, &c.at(y));
        let mut cuts = vec![c.lo];
        if let Some(d) = degree.filter(|&d| d >= 1 && d <= 2) {
            cuts.extend(cell_roots(&f, c.lo, c.hi, d));
        }
        cuts.push(c.hi);
        for w in cuts.windows(2) {
            total += rule.integrate(|y| f(y).abs().powi(p as i32), w[0], w[1]);
        }
    }
    total
}

/// Sign changes of a linear or quadratic cell function, from three samples.
fn cell_roots<T: Scalar, F: Fn(T) -> T>(f: &F, lo: T, hi: T, degree: usize) -> Vec<T> {
    let half = T::lit(0.5);
    let w = hi - lo;
    let (f0, f1) = (f(lo), f(hi));
    let mut roots = Vec::new();
    if degree == 1 {
        if f0 * f1 < T::zero() {
            roots.push(lo + w * f0 / (f0 - f1));
        }
        return roots;
    }
    // f(lo + s w) = a s² + b s + c
    let fm = f(lo + half * w);
    let c = f0;
    let a = T::lit(2.0) * (f1 - T::lit(2.0) * fm + f0);
    let b = f1 - f0 - a;
    let inside = |s: T| s > T::zero() && s < T::one();
    if a.abs() <= T::epsilon() * (b.abs() + c.abs()) {
        if b != T::zero() && inside(-c / b) {
            roots.push(lo + w * (-c / b));
        }
        return roots;
    }
    let disc = b * b - T::lit(4.0) * a * c;
    if disc > T::zero() {
        let sq = disc.sqrt();
        // stable pair of roots
        let q = -half * (b + b.signum() * sq);
        let mut rs = [q / a, if q != T::zero() { c / q } else { -b / a }];
        rs.sort_by(|x, y| x.partial_cmp(y).expect("finite"));
        for s in rs {
            if inside(s) {
                roots.push(lo + w * s);
            }
        }
    }
    roots
}

/// `(∫_0^1 ∫_0^1 |field(y,t)|^p dy dt)^{1/p}`; level `k` occupies
/// `t ∈ [k/n, (k+1)/n)`.
pub fn lp_norm<T: Scalar, F: TwoParamField<T> + ?Sized>(field: &F, batch: &SampleBatch<T>, p: u32) -> Result<T> {
    if p == 0 {
        return Err(Error::InvalidSpec("L_p norm needs p >= 1".into()));
    }
    let n = batch.len();
    let mut total = T::zero();
    for k in 1..n {
        total += level_lp_integral(field, &batch.level(k), p);
    }
    Ok((total / T::of(n.max(1))).powf(T::one() / T::of(p as usize)))
}

/// The basic processes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProcessKind {
    /// `α_n = d_n⁻¹[nt](Ê - y)`
    Alpha,
    /// `u_n = d_n⁻¹[nt](y - Û)`
    U,
    /// `β_n(Q(y), t)`, which equals `α_n(y, t)` for continuous `F`.
    Beta,
    /// `γ_n = d_n⁻¹[nt](Q(y) - Q̂)`
    Gamma,
    /// `ρ_n = f(Q(y)) γ_n`
    Rho,
}

/// One of the basic processes with its normalisation.
#[derive(Debug, Clone)]
pub struct ProcessField<T> {
    pub kind: ProcessKind,
    pub d_n: T,
    dist: Option<DistributionSpec<T>>,
}

impl<T: Scalar> ProcessField<T> {
    pub fn new(kind: ProcessKind, d_n: T, dist: Option<DistributionSpec<T>>) -> Result<Self> {
        if matches!(kind, ProcessKind::Gamma | ProcessKind::Rho) && dist.is_none() {
            return Err(Error::InvalidSpec("gamma and rho need the marginal distribution".into()));
        }
        Ok(Self { kind, d_n, dist })
    }
}

/// `k(Q(y) - Q̂_k(y))`.
pub(crate) fn raw_gamma<T: Scalar>(dist: &DistributionSpec<T>, level: &LevelSlice<T>, p: &Probe<T>) -> T {
    let diff = dist.quantile(p.y) - level.x_order_stat(p.index);
    if diff == T::zero() {
        T::zero()
    } else {
        T::of(level.k()) * diff
    }
}

/// `k f(Q(y))(Q(y) - Q̂_k(y))`; an infinite `γ` at an endpoint where `f`
/// vanishes is kept infinite rather than turned into NaN.
pub(crate) fn raw_rho<T: Scalar>(dist: &DistributionSpec<T>, level: &LevelSlice<T>, p: &Probe<T>) -> T {
    let g = raw_gamma(dist, level, p);
    if g == T::zero() {
        return T::zero();
    }
    let r = dist.pdf(dist.quantile(p.y)) * g;
    if r.is_nan() {
        g
    } else {
        r
    }
}

impl<T: Scalar> TwoParamField<T> for ProcessField<T> {
    fn eval_state(&self, level: &LevelSlice<T>, p: &Probe<T>) -> T {
        let k = level.k();
        if k == 0 {
            return T::zero();
        }
        let kf = T::of(k);
        let raw = match self.kind {
            ProcessKind::Alpha | ProcessKind::Beta => T::of(p.count) - kf * p.y,
            ProcessKind::U => kf * (p.y - level.order_stat(p.index)),
            ProcessKind::Gamma => raw_gamma(self.dist.as_ref().expect("validated"), level, p),
            ProcessKind::Rho => raw_rho(self.dist.as_ref().expect("validated"), level, p),
        };
        raw / self.d_n
    }

    fn cell_degree(&self) -> Option<usize> {
        match self.kind {
            ProcessKind::Alpha | ProcessKind::Beta | ProcessKind::U => Some(1),
            ProcessKind::Gamma | ProcessKind::Rho => None,
        }
    }
}

/// Builds one of the basic processes for `batch`.
pub fn process_field<T: Scalar>(kind: ProcessKind, d_n: T, dist: Option<DistributionSpec<T>>) -> Result<ProcessField<T>> {
    ProcessField::new(kind, d_n, dist)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn batch(u: &[f64]) -> SampleBatch<f64> {
        SampleBatch::new(u.to_vec(), None).unwrap()
    }

    #[test]
    fn d_norm_examples() {
        assert_eq!(d_norm(1, 1, 0.5, 1.0).unwrap(), 1.0);
        assert!((d_norm(100, 1, 0.5f64, 1.0).unwrap() - 1000f64.sqrt()).abs() < 1e-12);
        assert!((d_norm(16, 2, 0.25f64, 1.0).unwrap() - 8.0).abs() < 1e-12);
        assert!(d_norm(16, 2, 0.6, 1.0).is_err());
    }

    #[test]
    fn level_index_is_exact_on_grid() {
        for n in [3usize, 7, 10, 49, 1000] {
            for k in 0..=n {
                assert_eq!(level_index(n, k as f64 / n as f64), k);
            }
        }
        assert_eq!(level_index(2, 0.4), 0);
        assert_eq!(level_index(10, 0.3f32), 3);
    }

    #[test]
    fn empirical_examples() {
        let b = batch(&[0.3, 0.7]);
        assert_eq!(b.empirical_cdf(0.5, 1.0), 0.5);
        assert_eq!(b.empirical_cdf(0.9, 0.4), 0.0);
        let b3 = batch(&[0.3, 0.7, 0.1]);
        assert_eq!(b3.empirical_cdf(0.25, 2.0 / 3.0), 0.0);
        assert_eq!(b3.empirical_cdf(0.35, 2.0 / 3.0), 0.5);
        assert_eq!(b.empirical_quantile(0.5, 1.0).unwrap(), 0.3);
        assert_eq!(b.empirical_quantile(1.0, 1.0).unwrap(), 0.7);
        assert_eq!(b.empirical_quantile(0.0, 1.0).unwrap(), 0.3);
        assert!(matches!(b.empirical_quantile(0.5, 0.4), Err(Error::EmptyPrefix)));
    }

    #[test]
    fn prefix_index_matches_sorting() {
        let u = [0.42, 0.11, 0.93, 0.57, 0.05, 0.76, 0.31, 0.68, 0.2];
        let b = batch(&u);
        for k in 1..=u.len() {
            let mut prefix: Vec<f64> = u[..k].to_vec();
            prefix.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let level = b.level(k);
            assert_eq!(level.sorted_u(), &prefix[..]);
            for j in 1..=k {
                let t = k as f64 / u.len() as f64;
                let y = j as f64 / k as f64;
                assert_eq!(b.empirical_quantile(y, t).unwrap(), prefix[j - 1]);
            }
        }
    }

    #[test]
    fn process_examples() {
        let b = batch(&[0.3, 0.7]);
        let d2 = d_norm(2, 1, 0.5, 1.0).unwrap();
        let alpha = process_field(ProcessKind::Alpha, d2, None).unwrap();
        let u = process_field(ProcessKind::U, d2, None).unwrap();
        assert_eq!(b.eval(&alpha, 1.0, 0.7, Side::Value), 0.0);
        assert!((b.eval(&u, 0.5, 1.0, Side::Value) - 0.4 / 2f64.powf(0.75)).abs() < 1e-15);
        assert!((d2 - 2f64.powf(0.75)).abs() < 1e-15);
        // sup |α₂(·,1)| by brute force over the four candidates
        let level = b.level(2);
        let sup = level_sup(&alpha, &level, (0.0, 1.0));
        // counts just below and at each order statistic
        let brute = [(0.0, 0.3), (1.0, 0.3), (1.0, 0.7), (2.0, 0.7)]
            .iter()
            .map(|&(c, y): &(f64, f64)| (c - 2.0 * y).abs())
            .fold(0.0, f64::max)
            / d2;
        assert!((sup - brute).abs() < 1e-15, "{sup} vs {brute}");
        assert!((sup - 2.0 * 0.3 / d2).abs() < 1e-15);
    }

    #[test]
    fn rho_is_u_for_uniform_marginal() {
        let b = batch(&[0.12, 0.83, 0.47, 0.29, 0.64]);
        let dist = DistributionSpec::standard_uniform();
        let rho = process_field(ProcessKind::Rho, 1.7, Some(dist.clone())).unwrap();
        let gamma = process_field(ProcessKind::Gamma, 1.7, Some(dist)).unwrap();
        let u = process_field(ProcessKind::U, 1.7, None).unwrap();
        for k in 1..=5 {
            let level = b.level(k);
            let (probes, _) = level.sweep(0.0, 1.0);
            for p in probes {
                let r = rho.eval_state(&level, &p);
                assert!((r - u.eval_state(&level, &p)).abs() < 1e-15);
                assert!((r - gamma.eval_state(&level, &p)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn rho_keeps_endpoint_infinity() {
        let b = SampleBatch::new(vec![0.5, 0.25], Some(vec![2f64.ln(), (4.0f64 / 3.0).ln()])).unwrap();
        let rho = process_field(ProcessKind::Rho, 1.0, Some(DistributionSpec::Exponential { rate: 1.0 })).unwrap();
        let level = b.level(2);
        assert_eq!(rho.eval(&level, 1.0, Side::Value), f64::INFINITY);
        assert!(rho.eval(&level, 0.9, Side::Value).is_finite());
    }

    #[test]
    fn lp_of_single_step() {
        // field = h on y ∈ [0, U_(1)) at level 1 only
        struct Step;
        impl TwoParamField<f64> for Step {
            fn eval_state(&self, level: &LevelSlice<f64>, p: &Probe<f64>) -> f64 {
                if level.k() == 1 && p.count == 0 {
                    3.0
                } else {
                    0.0
                }
            }
            fn cell_degree(&self) -> Option<usize> {
                Some(0)
            }
        }
        let b = batch(&[0.4, 0.9, 0.1, 0.6]);
        for p in 1..=3u32 {
            let lp = lp_norm(&Step, &b, p).unwrap();
            let expected = (3f64.powi(p as i32) * 0.4 * 0.25).powf(1.0 / p as f64);
            assert!((lp - expected).abs() < 1e-13);
        }
        struct Zero;
        impl TwoParamField<f64> for Zero {
            fn eval_state(&self, _: &LevelSlice<f64>, _: &Probe<f64>) -> f64 {
                0.0
            }
            fn cell_degree(&self) -> Option<usize> {
                Some(0)
            }
        }
        assert_eq!(lp_norm(&Zero, &b, 2).unwrap(), 0.0);
        assert_eq!(sup_norm(&Zero, &b, &[1, 2, 3, 4], (0.0, 1.0)), 0.0);
    }

    #[test]
    fn lp_of_alpha_matches_fine_quadrature() {
        let b = batch(&[0.42, 0.11, 0.93, 0.57, 0.05]);
        let alpha = process_field(ProcessKind::Alpha, 1.0, None).unwrap();
        for p in [1u32, 2, 3] {
            let exact = lp_norm(&alpha, &b, p).unwrap().powi(p as i32) * 5.0;
            let mut brute = 0.0;
            for k in 1..5 {
                let level = b.level(k);
                let m = 200_000;
                for i in 0..m {
                    let y = (i as f64 + 0.5) / m as f64;
                    brute += alpha.eval(&level, y, Side::Value).abs().powi(p as i32) / m as f64;
                }
            }
            assert!((exact - brute).abs() < 1e-6 * (1.0 + brute), "p={p}: {exact} vs {brute}");
        }
    }

    #[test]
    fn sweep_covers_window() {
        let b = batch(&[0.42, 0.11, 0.93, 0.57, 0.05]);
        let level = b.level(5);
        let (probes, cells) = level.sweep(0.1, 0.6);
        assert_eq!(probes.first().unwrap().y, 0.1);
        assert_eq!(probes.last().unwrap().y, 0.6);
        for w in cells.windows(2) {
            assert_eq!(w[0].hi, w[1].lo);
        }
        let ys: Vec<f64> = probes.iter().map(|p| p.y).collect();
        for y in [0.11, 0.2, 0.4, 0.42, 0.57] {
            assert!(ys.contains(&y), "{y}");
        }
    }
}
