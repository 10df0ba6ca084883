//! Scalar abstraction: plain `f64` values or univariate second-order jets.
//!
//! Every geometric formula in this crate is written once, generically over
//! [`Scalar`]. Evaluating with `f64` plus finite differences gives the
//! discrete backend; evaluating with [`Jet`] gives exact first and second
//! derivatives of analytically constructed structures (forward-mode
//! propagation along the single axis the example families vary on).

use core::fmt::Debug;
use core::ops::{Add, Div, Mul, Neg, Sub};

use crate::field::TensorField;

pub trait Scalar:
    Copy
    + PartialEq
    + Debug
    + Send
    + Sync
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + 'static
{
    fn zero() -> Self;
    fn one() -> Self;
    fn from_f64(x: f64) -> Self;
    /// Principal (value) part.
    fn val(self) -> f64;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    /// Coordinate sample at `x`; jets seed their derivative slot here.
    fn coord(x: f64) -> Self;
    /// Formal `d/dx`: shifts jet components down one order. The lost top
    /// order is poisoned with NaN so that any consumer of an unavailable
    /// derivative surfaces loudly instead of silently reading garbage.
    fn shift(self) -> Self;
}

impl Scalar for f64 {
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn from_f64(x: f64) -> Self {
        x
    }
    fn val(self) -> f64 {
        self
    }
    fn sin(self) -> Self {
        libm::sin(self)
    }
    fn cos(self) -> Self {
        libm::cos(self)
    }
    fn coord(x: f64) -> Self {
        x
    }
    fn shift(self) -> Self {
        unreachable!("finite-difference fields are differentiated by stencil, not by shift")
    }
}

/// Second-order univariate jet `(f, f', f'')` with respect to one grid axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet {
    pub v: f64,
    pub d1: f64,
    pub d2: f64,
}

impl Jet {
    pub const fn new(v: f64, d1: f64, d2: f64) -> Self {
        Self { v, d1, d2 }
    }

    pub const fn constant(v: f64) -> Self {
        Self { v, d1: 0.0, d2: 0.0 }
    }
}

impl Add for Jet {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.v + o.v, self.d1 + o.d1, self.d2 + o.d2)
    }
}

impl Sub for Jet {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.v - o.v, self.d1 - o.d1, self.d2 - o.d2)
    }
}

impl Mul for Jet {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        Self::new(
            self.v * o.v,
            self.v * o.d1 + self.d1 * o.v,
            self.v * o.d2 + 2.0 * self.d1 * o.d1 + self.d2 * o.v,
        )
    }
}

impl Div for Jet {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        let r = 1.0 / o.v;
        let inv = Jet::new(r, -o.d1 * r * r, (2.0 * o.d1 * o.d1 - o.v * o.d2) * r * r * r);
        self * inv
    }
}

impl Neg for Jet {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.v, -self.d1, -self.d2)
    }
}

impl Scalar for Jet {
    fn zero() -> Self {
        Self::constant(0.0)
    }
    fn one() -> Self {
        Self::constant(1.0)
    }
    fn from_f64(x: f64) -> Self {
        Self::constant(x)
    }
    fn val(self) -> f64 {
        self.v
    }
    fn sin(self) -> Self {
        let (s, c) = (libm::sin(self.v), libm::cos(self.v));
        Self::new(s, c * self.d1, c * self.d2 - s * self.d1 * self.d1)
    }
    fn cos(self) -> Self {
        let (s, c) = (libm::sin(self.v), libm::cos(self.v));
        Self::new(c, -s * self.d1, -s * self.d2 - c * self.d1 * self.d1)
    }
    fn coord(x: f64) -> Self {
        Self::new(x, 1.0, 0.0)
    }
    fn shift(self) -> Self {
        Self::new(self.d1, self.d2, f64::NAN)
    }
}

/// Partial-derivative backend threaded through the geometry pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Deriv {
    /// Periodic central differences at the grid's stencil order.
    Fd,
    /// Exact jet shift; fields must be analytic in `axis` and constant along
    /// every other axis.
    JetShift { axis: usize },
}

/// Central-difference coefficients for the positive offsets `1..=order/2`;
/// the negative side is antisymmetric and the center weight is zero.
pub(crate) fn central_coeffs(order: usize) -> &'static [f64] {
    match order {
        2 => &[0.5],
        4 => &[2.0 / 3.0, -1.0 / 12.0],
        6 => &[3.0 / 4.0, -3.0 / 20.0, 1.0 / 60.0],
        8 => &[4.0 / 5.0, -1.0 / 5.0, 4.0 / 105.0, -1.0 / 280.0],
        _ => unreachable!("grid constructor restricts the stencil order"),
    }
}

impl Deriv {
    /// Full gradient: rank+1 field with a new leading lower slot over the
    /// derivative direction. For the jet backend only the active axis is
    /// populated; supported exact structures are constant along the rest.
    pub fn grad<S: Scalar>(&self, f: &TensorField<S>) -> TensorField<S> {
        match self {
            Deriv::Fd => f.fd_grad(),
            Deriv::JetShift { axis } => f.jet_grad(*axis),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) {
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }

    #[test]
    fn jet_product_rule() {
        // f = x^2 sin x at x = 0.7
        let x = Jet::coord(0.7);
        let f = x * x * x.sin();
        let (s, c) = (0.7f64.sin(), 0.7f64.cos());
        close(f.v, 0.49 * s);
        close(f.d1, 1.4 * s + 0.49 * c);
        close(f.d2, 2.0 * s + 2.8 * c - 0.49 * s);
    }

    #[test]
    fn jet_reciprocal() {
        // 1 / (2 + sin x): f' = -cos/(2+sin)^2
        let x = Jet::coord(0.3);
        let f = Jet::one() / (Jet::from_f64(2.0) + x.sin());
        let (s, c) = (0.3f64.sin(), 0.3f64.cos());
        close(f.v, 1.0 / (2.0 + s));
        close(f.d1, -c / (2.0 + s).powi(2));
        let d2 = (2.0 * c * c / (2.0 + s) + s) / (2.0 + s).powi(2);
        close(f.d2, d2);
    }

    #[test]
    fn shift_poisons_top_order() {
        let j = Jet::new(1.0, 2.0, 3.0).shift();
        assert_eq!(j.v, 2.0);
        assert_eq!(j.d1, 3.0);
        assert!(j.d2.is_nan());
    }
}
