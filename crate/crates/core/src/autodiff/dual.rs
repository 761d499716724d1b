use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

use super::Real;

/// Forward-mode dual number `v + d·ε` over any [`Real`].
///
/// Nesting `Dual<Dual<T>>` gives a second forward level; `Dual<Var>` records
/// the tangent computation on a tape so a reverse sweep can run last.
#[derive(Clone, Copy, PartialEq)]
pub struct Dual<T> {
    pub v: T,
    pub d: T,
}

impl<T: Real> Dual<T> {
    pub fn new(v: T, d: T) -> Self {
        Self { v, d }
    }

    /// Lifts `x` into the dual space with tangent `dx` (the "seed").
    pub fn seeded(x: T, dx: f64) -> Self {
        Self { v: x, d: T::cst(dx) }
    }
}

/// Seeds every entry of `x` with the matching tangent entry.
pub fn seed<T: Real>(x: &[T], tangent: &[f64]) -> Vec<Dual<T>> {
    assert_eq!(x.len(), tangent.len(), "seed length mismatch");
    x.iter().zip(tangent).map(|(&xi, &ti)| Dual::seeded(xi, ti)).collect()
}

impl<T: fmt::Debug> fmt::Debug for Dual<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Dual({:?}, {:?})", self.v, self.d)
    }
}

impl<T: Real> Add for Dual<T> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self::new(self.v + rhs.v, self.d + rhs.d)
    }
}

impl<T: Real> Sub for Dual<T> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Self::new(self.v - rhs.v, self.d - rhs.d)
    }
}

impl<T: Real> Mul for Dual<T> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        Self::new(self.v * rhs.v, self.d * rhs.v + self.v * rhs.d)
    }
}

impl<T: Real> Div for Dual<T> {
    type Output = Self;
    fn div(self, rhs: Self) -> Self {
        let q = self.v / rhs.v;
        Self::new(q, (self.d - q * rhs.d) / rhs.v)
    }
}

impl<T: Real> Neg for Dual<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.v, -self.d)
    }
}

impl<T: Real> Add<f64> for Dual<T> {
    type Output = Self;
    fn add(self, rhs: f64) -> Self {
        Self::new(self.v + rhs, self.d)
    }
}

impl<T: Real> Sub<f64> for Dual<T> {
    type Output = Self;
    fn sub(self, rhs: f64) -> Self {
        Self::new(self.v - rhs, self.d)
    }
}

impl<T: Real> Mul<f64> for Dual<T> {
    type Output = Self;
    fn mul(self, rhs: f64) -> Self {
        Self::new(self.v * rhs, self.d * rhs)
    }
}

impl<T: Real> Div<f64> for Dual<T> {
    type Output = Self;
    fn div(self, rhs: f64) -> Self {
        Self::new(self.v / rhs, self.d / rhs)
    }
}

impl<T: Real> AddAssign for Dual<T> {
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

impl<T: Real> SubAssign for Dual<T> {
    fn sub_assign(&mut self, rhs: Self) {
        *self = *self - rhs;
    }
}

impl<T: Real> MulAssign for Dual<T> {
    fn mul_assign(&mut self, rhs: Self) {
        *self = *self * rhs;
    }
}

impl<T: Real> Sum for Dual<T> {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::cst(0.0), |a, b| a + b)
    }
}

impl<T: Real> Real for Dual<T> {
    const DEPTH: usize = T::DEPTH + 1;

    fn cst(x: f64) -> Self {
        Self::new(T::cst(x), T::cst(0.0))
    }

    fn value(&self) -> f64 {
        self.v.value()
    }

    fn exp(self) -> Self {
        let e = self.v.exp();
        Self::new(e, self.d * e)
    }

    fn ln(self) -> Self {
        Self::new(self.v.ln(), self.d / self.v)
    }

    fn sqrt(self) -> Self {
        let s = self.v.sqrt();
        Self::new(s, self.d / (s * 2.0))
    }

    fn sin(self) -> Self {
        Self::new(self.v.sin(), self.d * self.v.cos())
    }

    fn cos(self) -> Self {
        Self::new(self.v.cos(), -(self.d * self.v.sin()))
    }

    fn tanh(self) -> Self {
        let t = self.v.tanh();
        Self::new(t, self.d * (-(t * t) + 1.0))
    }

    fn exp_m1(self) -> Self {
        Self::new(self.v.exp_m1(), self.d * self.v.exp())
    }

    fn ln_1p(self) -> Self {
        Self::new(self.v.ln_1p(), self.d / (self.v + 1.0))
    }

    fn powi(self, n: i32) -> Self {
        match n {
            0 => Self::cst(1.0),
            1 => self,
            _ => Self::new(self.v.powi(n), self.d * self.v.powi(n - 1) * f64::from(n)),
        }
    }

    fn powf(self, p: f64) -> Self {
        Self::new(self.v.powf(p), self.d * self.v.powf(p - 1.0) * p)
    }
}
