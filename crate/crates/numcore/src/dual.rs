//! Forward-mode dual numbers.
//!
//! `Dual<f64>` carries a value and a first derivative; `Dual<Dual<f64>>`
//! carries enough information for exact second derivatives of a function of
//! one variable.

use std::ops::{Add, Div, Mul, Neg, Sub};

use crate::error::{NumError, Result};

/// Arithmetic needed to evaluate networks and closed-form fields generically.
pub trait Scalar:
    Copy
    + std::fmt::Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn from_f64(v: f64) -> Self;
    /// Innermost real value.
    fn re(&self) -> f64;
    fn tanh(self) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    /// Piecewise-linear activation; the kink is treated as a zero-measure set.
    fn leaky_relu(self, slope: f64) -> Self;

    fn powi(self, n: i32) -> Self {
        let mut acc = Self::from_f64(1.0);
        let base = if n < 0 { Self::from_f64(1.0) / self } else { self };
        for _ in 0..n.unsigned_abs() {
            acc = acc * base;
        }
        acc
    }
}

impl Scalar for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn re(&self) -> f64 {
        *self
    }
    fn tanh(self) -> Self {
        crate::special::tanh(self)
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn ln(self) -> Self {
        f64::ln(self)
    }
    fn sin(self) -> Self {
        f64::sin(self)
    }
    fn cos(self) -> Self {
        f64::cos(self)
    }
    fn leaky_relu(self, slope: f64) -> Self {
        if self > 0.0 {
            self
        } else {
            slope * self
        }
    }
}

/// `v + d·ε` with `ε² = 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dual<T> {
    pub v: T,
    pub d: T,
}

impl<T: Scalar> Dual<T> {
    pub fn new(v: T, d: T) -> Self {
        Self { v, d }
    }

    pub fn constant(v: T) -> Self {
        Self {
            v,
            d: T::from_f64(0.0),
        }
    }

    /// Independent variable: derivative seed 1.
    pub fn variable(v: T) -> Self {
        Self {
            v,
            d: T::from_f64(1.0),
        }
    }
}

impl<T: Scalar> Add for Dual<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.v + o.v, self.d + o.d)
    }
}

impl<T: Scalar> Sub for Dual<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.v - o.v, self.d - o.d)
    }
}

impl<T: Scalar> Mul for Dual<T> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        Self::new(self.v * o.v, self.d * o.v + self.v * o.d)
    }
}

impl<T: Scalar> Div for Dual<T> {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        let v = self.v / o.v;
        Self::new(v, (self.d - v * o.d) / o.v)
    }
}

impl<T: Scalar> Neg for Dual<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.v, -self.d)
    }
}

impl<T: Scalar> Scalar for Dual<T> {
    fn from_f64(v: f64) -> Self {
        Self::constant(T::from_f64(v))
    }
    fn re(&self) -> f64 {
        self.v.re()
    }
    fn tanh(self) -> Self {
        let t = self.v.tanh();
        Self::new(t, self.d * (T::from_f64(1.0) - t * t))
    }
    fn exp(self) -> Self {
        let e = self.v.exp();
        Self::new(e, self.d * e)
    }
    fn ln(self) -> Self {
        Self::new(self.v.ln(), self.d / self.v)
    }
    fn sin(self) -> Self {
        Self::new(self.v.sin(), self.d * self.v.cos())
    }
    fn cos(self) -> Self {
        Self::new(self.v.cos(), -(self.d * self.v.sin()))
    }
    fn leaky_relu(self, slope: f64) -> Self {
        if self.re() > 0.0 {
            self
        } else {
            Self::new(self.v * T::from_f64(slope), self.d * T::from_f64(slope))
        }
    }
}

/// Second-order dual number used for `d²/dx²`.
pub type Dual2 = Dual<Dual<f64>>;

/// Seeds `x` for a simultaneous first and second derivative.
pub fn seed2(x: f64) -> Dual2 {
    Dual::new(Dual::new(x, 1.0), Dual::new(1.0, 0.0))
}

/// Exact derivative of order 1 or 2 of a scalar function at `x`.
///
/// ```
/// use fpuq_numcore::{input_derivative, Scalar};
/// let d2 = input_derivative(|x| x.powi(3), 2.0, 2).unwrap();
/// assert_eq!(d2, 12.0);
/// ```
pub fn input_derivative(f: impl Fn(Dual2) -> Dual2, x: f64, order: usize) -> Result<f64> {
    let y = match order {
        1 | 2 => f(seed2(x)),
        other => return Err(NumError::DerivativeOrder(other)),
    };
    Ok(if order == 1 { y.v.d } else { y.d.d })
}
