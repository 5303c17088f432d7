//! Forward-mode automatic differentiation.
//!
//! Model code is written once against [`Real`]; evaluating it with
//! [`Dual`] numbers carries exact directional derivatives alongside the
//! values.

use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

/// Scalar arithmetic shared by `f64` and dual numbers.
pub trait Real:
    Copy
    + std::fmt::Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
    + AddAssign
    + SubAssign
{
    fn cst(v: f64) -> Self;
    fn value(self) -> f64;
    fn exp(self) -> Self;
    fn sqrt(self) -> Self;
    fn powf(self, n: f64) -> Self;
    fn abs(self) -> Self;

    fn zero() -> Self {
        Self::cst(0.0)
    }

    /// Larger of the two; on ties the first argument.
    fn max(self, other: Self) -> Self {
        if other.value() > self.value() {
            other
        } else {
            self
        }
    }

    fn min(self, other: Self) -> Self {
        if other.value() < self.value() {
            other
        } else {
            self
        }
    }

    fn max0(self) -> Self {
        self.max(Self::zero())
    }

    /// `b ^ self` for a constant base.
    fn exp_base(self, b: f64) -> Self {
        (self * b.ln()).exp()
    }
}

impl Real for f64 {
    #[inline]
    fn cst(v: f64) -> Self {
        v
    }
    #[inline]
    fn value(self) -> f64 {
        self
    }
    #[inline]
    fn exp(self) -> Self {
        f64::exp(self)
    }
    #[inline]
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    #[inline]
    fn powf(self, n: f64) -> Self {
        f64::powf(self, n)
    }
    #[inline]
    fn abs(self) -> Self {
        f64::abs(self)
    }
    #[inline]
    fn exp_base(self, b: f64) -> Self {
        b.powf(self)
    }
}

/// A value with its derivatives along `M` seed directions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual<const M: usize> {
    pub v: f64,
    pub d: [f64; M],
}

impl<const M: usize> Dual<M> {
    /// The `i`-th independent variable.
    pub fn var(v: f64, i: usize) -> Self {
        let mut d = [0.0; M];
        d[i] = 1.0;
        Self { v, d }
    }

    #[inline]
    fn chain(self, v: f64, slope: f64) -> Self {
        let mut d = self.d;
        for x in &mut d {
            *x *= slope;
        }
        Self { v, d }
    }
}

impl<const M: usize> Real for Dual<M> {
    #[inline]
    fn cst(v: f64) -> Self {
        Self { v, d: [0.0; M] }
    }
    #[inline]
    fn value(self) -> f64 {
        self.v
    }
    #[inline]
    fn exp(self) -> Self {
        let e = self.v.exp();
        self.chain(e, e)
    }
    #[inline]
    fn sqrt(self) -> Self {
        let s = self.v.sqrt();
        // the one-sided derivative at 0 is infinite; callers only reach it
        // with a zero tangent
        self.chain(s, if s > 0.0 { 0.5 / s } else { 0.0 })
    }
    #[inline]
    fn powf(self, n: f64) -> Self {
        let p = self.v.powf(n);
        let slope = if self.v != 0.0 {
            n * p / self.v
        } else if n == 1.0 {
            1.0
        } else {
            0.0
        };
        self.chain(p, slope)
    }
    #[inline]
    fn abs(self) -> Self {
        if self.v < 0.0 {
            -self
        } else {
            self
        }
    }
    #[inline]
    fn exp_base(self, b: f64) -> Self {
        let p = b.powf(self.v);
        self.chain(p, p * b.ln())
    }
}

impl<const M: usize> Add for Dual<M> {
    type Output = Self;
    #[inline]
    fn add(mut self, o: Self) -> Self {
        self.v += o.v;
        for i in 0..M {
            self.d[i] += o.d[i];
        }
        self
    }
}

impl<const M: usize> Sub for Dual<M> {
    type Output = Self;
    #[inline]
    fn sub(mut self, o: Self) -> Self {
        self.v -= o.v;
        for i in 0..M {
            self.d[i] -= o.d[i];
        }
        self
    }
}

impl<const M: usize> Mul for Dual<M> {
    type Output = Self;
    #[inline]
    fn mul(self, o: Self) -> Self {
        let mut d = [0.0; M];
        for i in 0..M {
            d[i] = self.d[i] * o.v + self.v * o.d[i];
        }
        Self { v: self.v * o.v, d }
    }
}

impl<const M: usize> Div for Dual<M> {
    type Output = Self;
    #[inline]
    fn div(self, o: Self) -> Self {
        let v = self.v / o.v;
        let mut d = [0.0; M];
        for i in 0..M {
            d[i] = (self.d[i] - v * o.d[i]) / o.v;
        }
        Self { v, d }
    }
}

impl<const M: usize> Neg for Dual<M> {
    type Output = Self;
    #[inline]
    fn neg(mut self) -> Self {
        self.v = -self.v;
        for x in &mut self.d {
            *x = -*x;
        }
        self
    }
}

impl<const M: usize> Add<f64> for Dual<M> {
    type Output = Self;
    #[inline]
    fn add(mut self, o: f64) -> Self {
        self.v += o;
        self
    }
}

impl<const M: usize> Sub<f64> for Dual<M> {
    type Output = Self;
    #[inline]
    fn sub(mut self, o: f64) -> Self {
        self.v -= o;
        self
    }
}

impl<const M: usize> Mul<f64> for Dual<M> {
    type Output = Self;
    #[inline]
    fn mul(self, o: f64) -> Self {
        self.chain(self.v * o, o)
    }
}

impl<const M: usize> Div<f64> for Dual<M> {
    type Output = Self;
    #[inline]
    fn div(self, o: f64) -> Self {
        self.chain(self.v / o, 1.0 / o)
    }
}

impl<const M: usize> AddAssign for Dual<M> {
    #[inline]
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl<const M: usize> SubAssign for Dual<M> {
    #[inline]
    fn sub_assign(&mut self, o: Self) {
        *self = *self - o;
    }
}

impl<const M: usize> MulAssign<f64> for Dual<M> {
    #[inline]
    fn mul_assign(&mut self, o: f64) {
        *self = *self * o;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    type D = Dual<2>;

    fn f<T: Real>(x: T, y: T) -> T {
        (x * y).exp() / (x.powf(1.5) + y.sqrt()) - (x - y).abs() * 0.3 + y.exp_base(1.7)
    }

    #[test]
    fn matches_central_differences() {
        let (x, y) = (0.7, 1.3);
        let g = f(D::var(x, 0), D::var(y, 1));
        assert_eq!(g.v, f(x, y));
        let h = 1e-6;
        let dx = (f(x + h, y) - f(x - h, y)) / (2.0 * h);
        let dy = (f(x, y + h) - f(x, y - h)) / (2.0 * h);
        assert!((g.d[0] - dx).abs() < 1e-8, "{} {dx}", g.d[0]);
        assert!((g.d[1] - dy).abs() < 1e-8, "{} {dy}", g.d[1]);
    }

    #[test]
    fn max_follows_the_larger_branch() {
        let a = D::var(2.0, 0);
        let b = D::var(1.0, 1) * 3.0;
        assert_eq!(a.max(b).d, [0.0, 3.0]);
        assert_eq!(a.min(b).d, [1.0, 0.0]);
        assert_eq!(D::var(-1.0, 0).max0().d, [0.0, 0.0]);
    }

    #[test]
    fn roots_at_zero_have_zero_slope() {
        assert_eq!(D::cst(0.0).sqrt().d, [0.0, 0.0]);
        assert_eq!(D::var(0.0, 0).powf(0.25).d, [0.0, 0.0]);
    }
}
