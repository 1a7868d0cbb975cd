//! Forward-mode differentiation used by every geometric evaluator.
//!
//! [`Dual`] carries a value and its gradient, [`Jet`] additionally carries the
//! Hessian. Both are generic over the number of independent variables, so the
//! same arithmetic serves chart fields (`N = 2`, variables `x, y`) and fields on
//! the level surface (`N = 3`, variables `x, y, theta`).

use std::ops::{Add, Div, Mul, Neg, Sub};

/// Arithmetic shared by `f64`, [`Dual`] and [`Jet`]; the expression evaluator
/// is generic over it.
pub trait Scalar:
    Copy + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Div<Output = Self> + Neg<Output = Self>
{
    fn constant(c: f64) -> Self;
    fn value(&self) -> f64;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sqrt(self) -> Self;
    fn powi(self, n: i32) -> Self;
    fn powf(self, p: f64) -> Self;
    /// General power; falls back to `powi`/`powf` when the exponent is constant.
    fn pow(self, e: Self) -> Self;
}

impl Scalar for f64 {
    fn constant(c: f64) -> Self {
        c
    }
    fn value(&self) -> f64 {
        *self
    }
    fn sin(self) -> Self {
        f64::sin(self)
    }
    fn cos(self) -> Self {
        f64::cos(self)
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn ln(self) -> Self {
        f64::ln(self)
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn powi(self, n: i32) -> Self {
        f64::powi(self, n)
    }
    fn powf(self, p: f64) -> Self {
        f64::powf(self, p)
    }
    fn pow(self, e: Self) -> Self {
        if e.fract() == 0.0 && e.abs() < i32::MAX as f64 {
            f64::powi(self, e as i32)
        } else {
            f64::powf(self, e)
        }
    }
}

/// Value and gradient with respect to `N` variables.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual<const N: usize> {
    pub v: f64,
    pub g: [f64; N],
}

/// Value, gradient and (symmetric) Hessian with respect to `N` variables.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet<const N: usize> {
    pub v: f64,
    pub g: [f64; N],
    pub h: [[f64; N]; N],
}

pub type Dual2 = Dual<2>;
pub type Dual3 = Dual<3>;
pub type Jet2 = Jet<2>;
pub type Jet3 = Jet<3>;

impl<const N: usize> Dual<N> {
    pub fn cst(v: f64) -> Self {
        Dual { v, g: [0.0; N] }
    }

    /// The independent variable with index `i`.
    pub fn var(v: f64, i: usize) -> Self {
        let mut g = [0.0; N];
        g[i] = 1.0;
        Dual { v, g }
    }

    /// Embeds into a space with more variables; the new variables are
    /// appended and have zero derivative.
    pub fn embed<const M: usize>(self) -> Dual<M> {
        debug_assert!(M >= N);
        let mut g = [0.0; M];
        g[..N].copy_from_slice(&self.g);
        Dual { v: self.v, g }
    }

    fn chain(self, f: f64, df: f64) -> Self {
        let mut g = self.g;
        for gi in &mut g {
            *gi *= df;
        }
        Dual { v: f, g }
    }

    pub fn recip(self) -> Self {
        let r = 1.0 / self.v;
        self.chain(r, -r * r)
    }
}

impl<const N: usize> Jet<N> {
    pub fn cst(v: f64) -> Self {
        Jet { v, g: [0.0; N], h: [[0.0; N]; N] }
    }

    pub fn var(v: f64, i: usize) -> Self {
        let mut j = Self::cst(v);
        j.g[i] = 1.0;
        j
    }

    pub fn embed<const M: usize>(self) -> Jet<M> {
        debug_assert!(M >= N);
        let mut out = Jet::<M>::cst(self.v);
        for i in 0..N {
            out.g[i] = self.g[i];
            for j in 0..N {
                out.h[i][j] = self.h[i][j];
            }
        }
        out
    }

    /// Drops the second-order part.
    pub fn dual(&self) -> Dual<N> {
        Dual { v: self.v, g: self.g }
    }

    /// Partial derivative along variable `i`, known to first order.
    pub fn partial(&self, i: usize) -> Dual<N> {
        Dual { v: self.g[i], g: self.h[i] }
    }

    fn chain(self, f: f64, df: f64, d2f: f64) -> Self {
        let mut out = Jet::cst(f);
        for i in 0..N {
            out.g[i] = df * self.g[i];
            for j in 0..N {
                out.h[i][j] = df * self.h[i][j] + d2f * self.g[i] * self.g[j];
            }
        }
        out
    }

    pub fn recip(self) -> Self {
        let r = 1.0 / self.v;
        self.chain(r, -r * r, 2.0 * r * r * r)
    }

    fn is_constant(&self) -> bool {
        self.g.iter().all(|&x| x == 0.0) && self.h.iter().flatten().all(|&x| x == 0.0)
    }
}

macro_rules! impl_dual_ops {
    ($t:ident) => {
        impl<const N: usize> Neg for $t<N> {
            type Output = Self;
            fn neg(self) -> Self {
                self * -1.0
            }
        }
        impl<const N: usize> Add<f64> for $t<N> {
            type Output = Self;
            fn add(mut self, rhs: f64) -> Self {
                self.v += rhs;
                self
            }
        }
        impl<const N: usize> Sub<f64> for $t<N> {
            type Output = Self;
            fn sub(mut self, rhs: f64) -> Self {
                self.v -= rhs;
                self
            }
        }
        impl<const N: usize> Div<f64> for $t<N> {
            type Output = Self;
            fn div(self, rhs: f64) -> Self {
                self * (1.0 / rhs)
            }
        }
        impl<const N: usize> Add<$t<N>> for f64 {
            type Output = $t<N>;
            fn add(self, rhs: $t<N>) -> $t<N> {
                rhs + self
            }
        }
        impl<const N: usize> Sub<$t<N>> for f64 {
            type Output = $t<N>;
            fn sub(self, rhs: $t<N>) -> $t<N> {
                -rhs + self
            }
        }
        impl<const N: usize> Mul<$t<N>> for f64 {
            type Output = $t<N>;
            fn mul(self, rhs: $t<N>) -> $t<N> {
                rhs * self
            }
        }
        impl<const N: usize> Div<$t<N>> for f64 {
            type Output = $t<N>;
            fn div(self, rhs: $t<N>) -> $t<N> {
                rhs.recip() * self
            }
        }
        impl<const N: usize> Div for $t<N> {
            type Output = Self;
            fn div(self, rhs: Self) -> Self {
                self * rhs.recip()
            }
        }
    };
}

impl_dual_ops!(Dual);
impl_dual_ops!(Jet);

impl<const N: usize> Add for Dual<N> {
    type Output = Self;
    fn add(mut self, rhs: Self) -> Self {
        self.v += rhs.v;
        for i in 0..N {
            self.g[i] += rhs.g[i];
        }
        self
    }
}

impl<const N: usize> Sub for Dual<N> {
    type Output = Self;
    fn sub(mut self, rhs: Self) -> Self {
        self.v -= rhs.v;
        for i in 0..N {
            self.g[i] -= rhs.g[i];
        }
        self
    }
}

impl<const N: usize> Mul for Dual<N> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        let mut g = [0.0; N];
        for (i, gi) in g.iter_mut().enumerate() {
            *gi = self.v * rhs.g[i] + rhs.v * self.g[i];
        }
        Dual { v: self.v * rhs.v, g }
    }
}

impl<const N: usize> Mul<f64> for Dual<N> {
    type Output = Self;
    fn mul(mut self, rhs: f64) -> Self {
        self.v *= rhs;
        for gi in &mut self.g {
            *gi *= rhs;
        }
        self
    }
}

impl<const N: usize> Add for Jet<N> {
    type Output = Self;
    fn add(mut self, rhs: Self) -> Self {
        self.v += rhs.v;
        for i in 0..N {
            self.g[i] += rhs.g[i];
            for j in 0..N {
                self.h[i][j] += rhs.h[i][j];
            }
        }
        self
    }
}

impl<const N: usize> Sub for Jet<N> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        self + (-rhs)
    }
}

impl<const N: usize> Mul for Jet<N> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        let mut out = Jet::cst(self.v * rhs.v);
        for i in 0..N {
            out.g[i] = self.v * rhs.g[i] + rhs.v * self.g[i];
            for j in 0..N {
                out.h[i][j] = self.v * rhs.h[i][j] + rhs.v * self.h[i][j] + self.g[i] * rhs.g[j] + rhs.g[i] * self.g[j];
            }
        }
        out
    }
}

impl<const N: usize> Mul<f64> for Jet<N> {
    type Output = Self;
    fn mul(mut self, rhs: f64) -> Self {
        self.v *= rhs;
        for i in 0..N {
            self.g[i] *= rhs;
            for j in 0..N {
                self.h[i][j] *= rhs;
            }
        }
        self
    }
}

impl<const N: usize> Scalar for Dual<N> {
    fn constant(c: f64) -> Self {
        Dual::cst(c)
    }
    fn value(&self) -> f64 {
        self.v
    }
    fn sin(self) -> Self {
        self.chain(self.v.sin(), self.v.cos())
    }
    fn cos(self) -> Self {
        self.chain(self.v.cos(), -self.v.sin())
    }
    fn exp(self) -> Self {
        let e = self.v.exp();
        self.chain(e, e)
    }
    fn ln(self) -> Self {
        self.chain(self.v.ln(), 1.0 / self.v)
    }
    fn sqrt(self) -> Self {
        let s = self.v.sqrt();
        self.chain(s, 0.5 / s)
    }
    fn powi(self, n: i32) -> Self {
        if n == 0 {
            return Dual::cst(1.0);
        }
        self.chain(self.v.powi(n), n as f64 * self.v.powi(n - 1))
    }
    fn powf(self, p: f64) -> Self {
        self.chain(self.v.powf(p), p * self.v.powf(p - 1.0))
    }
    fn pow(self, e: Self) -> Self {
        if e.g.iter().all(|&x| x == 0.0) {
            if e.v.fract() == 0.0 && e.v.abs() < i32::MAX as f64 {
                self.powi(e.v as i32)
            } else {
                self.powf(e.v)
            }
        } else {
            (e * self.ln()).exp()
        }
    }
}

impl<const N: usize> Scalar for Jet<N> {
    fn constant(c: f64) -> Self {
        Jet::cst(c)
    }
    fn value(&self) -> f64 {
        self.v
    }
    fn sin(self) -> Self {
        let (s, c) = self.v.sin_cos();
        self.chain(s, c, -s)
    }
    fn cos(self) -> Self {
        let (s, c) = self.v.sin_cos();
        self.chain(c, -s, -c)
    }
    fn exp(self) -> Self {
        let e = self.v.exp();
        self.chain(e, e, e)
    }
    fn ln(self) -> Self {
        let r = 1.0 / self.v;
        self.chain(self.v.ln(), r, -r * r)
    }
    fn sqrt(self) -> Self {
        let s = self.v.sqrt();
        self.chain(s, 0.5 / s, -0.25 / (s * self.v))
    }
    fn powi(self, n: i32) -> Self {
        match n {
            0 => Jet::cst(1.0),
            1 => self,
            _ => {
                let nf = n as f64;
                self.chain(self.v.powi(n), nf * self.v.powi(n - 1), nf * (nf - 1.0) * self.v.powi(n - 2))
            }
        }
    }
    fn powf(self, p: f64) -> Self {
        self.chain(self.v.powf(p), p * self.v.powf(p - 1.0), p * (p - 1.0) * self.v.powf(p - 2.0))
    }
    fn pow(self, e: Self) -> Self {
        if e.is_constant() {
            if e.v.fract() == 0.0 && e.v.abs() < i32::MAX as f64 {
                self.powi(e.v as i32)
            } else {
                self.powf(e.v)
            }
        } else {
            (e * self.ln()).exp()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn f<S: Scalar>(x: S, y: S) -> S {
        (x * y).sin() + x.exp() / (S::constant(2.0) + y * y) + (x * x + y * y + S::constant(1.0)).ln()
    }

    #[test]
    fn jet_matches_central_differences() {
        let (x0, y0) = (0.3, -0.7);
        let j = f(Jet2::var(x0, 0), Jet2::var(y0, 1));
        let h = 1e-4;
        let fx = |x: f64, y: f64| f(x, y);
        let dx = (fx(x0 + h, y0) - fx(x0 - h, y0)) / (2.0 * h);
        let dy = (fx(x0, y0 + h) - fx(x0, y0 - h)) / (2.0 * h);
        let dxx = (fx(x0 + h, y0) - 2.0 * fx(x0, y0) + fx(x0 - h, y0)) / (h * h);
        let dxy = (fx(x0 + h, y0 + h) - fx(x0 + h, y0 - h) - fx(x0 - h, y0 + h) + fx(x0 - h, y0 - h)) / (4.0 * h * h);
        assert_relative_eq!(j.v, fx(x0, y0), epsilon = 1e-14);
        assert_relative_eq!(j.g[0], dx, epsilon = 1e-7);
        assert_relative_eq!(j.g[1], dy, epsilon = 1e-7);
        assert_relative_eq!(j.h[0][0], dxx, epsilon = 1e-5);
        assert_relative_eq!(j.h[0][1], dxy, epsilon = 1e-5);
        assert_relative_eq!(j.h[1][0], j.h[0][1], epsilon = 1e-14);
    }

    #[test]
    fn integer_powers_of_negative_bases() {
        let x = Jet2::var(-2.0, 0);
        let p = x.pow(Jet2::cst(3.0));
        assert_eq!(p.v, -8.0);
        assert_eq!(p.g[0], 12.0);
        assert_eq!(p.h[0][0], -12.0);
    }

    #[test]
    fn partial_of_jet_is_consistent_dual() {
        let x = Jet2::var(0.5, 0);
        let y = Jet2::var(1.5, 1);
        let j = x * x * y;
        let d = j.partial(0);
        assert_relative_eq!(d.v, 2.0 * 0.5 * 1.5);
        assert_relative_eq!(d.g[0], 2.0 * 1.5);
        assert_relative_eq!(d.g[1], 2.0 * 0.5);
    }
}
