use std::ops::{Add, Div, Mul, Neg, Sub};

use crate::Scalar;

/// First-order dual number `re + du·ε` with `ε² = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual<T> {
    pub re: T,
    pub du: T,
}

impl<T: Scalar> Dual<T> {
    pub fn new(re: T, du: T) -> Self {
        Dual { re, du }
    }

    pub fn constant(re: T) -> Self {
        Dual { re, du: T::zero() }
    }

    pub fn variable(re: T) -> Self {
        Dual { re, du: T::one() }
    }

    pub fn sin(self) -> Self {
        Dual::new(self.re.sin(), self.du * self.re.cos())
    }

    pub fn cos(self) -> Self {
        Dual::new(self.re.cos(), -self.du * self.re.sin())
    }

    pub fn exp(self) -> Self {
        let e = self.re.exp();
        Dual::new(e, self.du * e)
    }

    pub fn ln(self) -> Self {
        Dual::new(self.re.ln(), self.du / self.re)
    }

    pub fn sqrt(self) -> Self {
        let s = self.re.sqrt();
        Dual::new(s, self.du / (s + s))
    }

    pub fn powi(self, n: i32) -> Self {
        if n == 0 {
            return Dual::constant(T::one());
        }
        let nf = T::from_i32(n).expect("i32 exponent representable");
        Dual::new(self.re.powi(n), nf * self.re.powi(n - 1) * self.du)
    }
}

impl<T: Scalar> Add for Dual<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Dual::new(self.re + o.re, self.du + o.du)
    }
}

impl<T: Scalar> Sub for Dual<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Dual::new(self.re - o.re, self.du - o.du)
    }
}

impl<T: Scalar> Mul for Dual<T> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        Dual::new(self.re * o.re, self.re * o.du + self.du * o.re)
    }
}

impl<T: Scalar> Div for Dual<T> {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        Dual::new(
            self.re / o.re,
            (self.du * o.re - self.re * o.du) / (o.re * o.re),
        )
    }
}

impl<T: Scalar> Neg for Dual<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Dual::new(-self.re, -self.du)
    }
}
