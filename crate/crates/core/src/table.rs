//! Piecewise-linear tables used for user-tabulated maps.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// How a table is continued outside its knots.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Extension {
    /// Constant continuation with the end values.
    Clamp,
    /// Linear continuation with the end slopes.
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Monotonicity {
    Increasing,
    Decreasing,
    None,
}

/// Piecewise-linear interpolant through `(xs[i], ys[i])`.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseLinear<T> {
    xs: Vec<T>,
    ys: Vec<T>,
    extension: Extension,
}

impl<T: Scalar> PiecewiseLinear<T> {
    pub fn new(xs: Vec<T>, ys: Vec<T>, extension: Extension) -> Result<Self> {
        if xs.len() != ys.len() || xs.len() < 2 {
            return Err(Error::InvalidSpec(
                "table needs at least two (x, y) pairs of equal length".into(),
            ));
        }
        if xs.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidSpec(
                "table abscissae must be strictly increasing".into(),
            ));
        }
        if xs.iter().chain(&ys).any(|v| !v.is_finite()) {
            return Err(Error::InvalidSpec("table entries must be finite".into()));
        }
        Ok(Self { xs, ys, extension })
    }

    pub fn knots(&self) -> (&[T], &[T]) {
        (&self.xs, &self.ys)
    }

    pub fn extension(&self) -> Extension {
        self.extension
    }

    pub fn monotonicity(&self) -> Monotonicity {
        if self.ys.windows(2).all(|w| w[0] < w[1]) {
            Monotonicity::Increasing
        } else if self.ys.windows(2).all(|w| w[0] > w[1]) {
            Monotonicity::Decreasing
        } else {
            Monotonicity::None
        }
    }

    /// Index `i` of the segment `[xs[i], xs[i+1]]` used at `x`.
    fn segment(&self, x: T) -> usize {
        let last = self.xs.len() - 2;
        self.xs.partition_point(|&k| k <= x).saturating_sub(1).min(last)
    }

    fn segment_slope(&self, i: usize) -> T {
        (self.ys[i + 1] - self.ys[i]) / (self.xs[i + 1] - self.xs[i])
    }

    pub fn eval(&self, x: T) -> T {
        let (first, last) = (self.xs[0], self.xs[self.xs.len() - 1]);
        if self.extension == Extension::Clamp {
            if x <= first {
                return self.ys[0];
            }
            if x >= last {
                return self.ys[self.ys.len() - 1];
            }
        }
        if x == T::infinity() || x == T::neg_infinity() {
            let i = if x > T::zero() { self.xs.len() - 2 } else { 0 };
            let s = self.segment_slope(i);
            return if s == T::zero() {
                self.ys[if x > T::zero() { i + 1 } else { 0 }]
            } else {
                x * s.signum()
            };
        }
        let i = self.segment(x);
        self.ys[i] + self.segment_slope(i) * (x - self.xs[i])
    }

    /// Right derivative at `x`.
    pub fn slope(&self, x: T) -> T {
        if self.extension == Extension::Clamp
            && (x < self.xs[0] || x >= self.xs[self.xs.len() - 1])
        {
            return T::zero();
        }
        self.segment_slope(self.segment(x))
    }

    /// Inverse of a strictly monotone table with linear extension; `None`
    /// for non-monotone tables.
    pub fn inverse(&self, y: T) -> Option<T> {
        let swapped = match self.monotonicity() {
            Monotonicity::Increasing => {
                PiecewiseLinear::new(self.ys.clone(), self.xs.clone(), self.extension).ok()?
            }
            Monotonicity::Decreasing => {
                let xs: Vec<T> = self.ys.iter().rev().copied().collect();
                let ys: Vec<T> = self.xs.iter().rev().copied().collect();
                PiecewiseLinear::new(xs, ys, self.extension).ok()?
            }
            Monotonicity::None => return None,
        };
        Some(swapped.eval(y))
    }
}
