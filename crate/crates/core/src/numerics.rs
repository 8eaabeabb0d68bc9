//! Scalar backends and the shared tolerance policy.
//!
//! Every algorithm downstream is written once against [`Scalar`]. Two
//! backends implement it: [`rug::Rational`] (exact field arithmetic) and
//! [`rug::Float`] (MPFR, correctly rounded at a fixed binary precision). The
//! float context is the precision in bits; the rational context is `()`.

use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use rug::ops::Pow;
use rug::{Float, Integer, Rational};

use crate::detkit::elimination;
use crate::error::{Error, Result};

pub trait Scalar:
    Clone
    + fmt::Debug
    + PartialEq
    + PartialOrd
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + for<'a> Add<&'a Self, Output = Self>
    + for<'a> Sub<&'a Self, Output = Self>
    + for<'a> Mul<&'a Self, Output = Self>
    + for<'a> Div<&'a Self, Output = Self>
{
    type Ctx: Clone + fmt::Debug + PartialEq + Send + Sync;

    /// True for the exact rational backend.
    const EXACT: bool;

    fn ctx(&self) -> Self::Ctx;
    fn from_i64(v: i64, ctx: &Self::Ctx) -> Self;
    fn from_rational(q: &Rational, ctx: &Self::Ctx) -> Self;

    fn zero(ctx: &Self::Ctx) -> Self {
        Self::from_i64(0, ctx)
    }

    fn one(ctx: &Self::Ctx) -> Self {
        Self::from_i64(1, ctx)
    }

    fn is_zero(&self) -> bool;
    fn abs(&self) -> Self;
    fn to_f64(&self) -> f64;

    /// `|self| < 10^exponent`, decided without leaving the backend.
    fn abs_lt_pow10(&self, exponent: i64) -> bool;

    /// Decimal string (float) or `p/q` string (rational).
    fn to_repr(&self) -> String;
    fn parse_repr(s: &str, ctx: &Self::Ctx) -> Result<Self>;

    /// Compact form for reports; exact values stay exact.
    fn to_short(&self) -> String {
        self.to_repr()
    }

    /// Square root; the exact backend only accepts perfect squares.
    fn sqrt_checked(&self) -> Result<Self>;

    /// Determinant of a square matrix given by rows. Fraction-free Bareiss
    /// in the exact backend, full-pivot LU in the float backend.
    fn determinant(rows: Vec<Vec<Self>>, ctx: &Self::Ctx) -> Result<Self>;

    fn powi(&self, e: u32) -> Self {
        let mut acc = Self::one(&self.ctx());
        for _ in 0..e {
            acc = acc * self;
        }
        acc
    }
}

impl Scalar for Rational {
    type Ctx = ();
    const EXACT: bool = true;

    fn ctx(&self) -> Self::Ctx {}

    fn from_i64(v: i64, _: &()) -> Self {
        Rational::from(v)
    }

    fn from_rational(q: &Rational, _: &()) -> Self {
        q.clone()
    }

    fn is_zero(&self) -> bool {
        self.cmp0() == std::cmp::Ordering::Equal
    }

    fn abs(&self) -> Self {
        self.clone().abs()
    }

    fn to_f64(&self) -> f64 {
        Rational::to_f64(self)
    }

    fn abs_lt_pow10(&self, exponent: i64) -> bool {
        let bound = if exponent >= 0 {
            Rational::from(Integer::from(10).pow(exponent as u32))
        } else {
            Rational::from((1, Integer::from(10).pow((-exponent) as u32)))
        };
        self.clone().abs() < bound
    }

    fn to_repr(&self) -> String {
        format!("{}/{}", self.numer(), self.denom())
    }

    fn to_short(&self) -> String {
        self.to_string()
    }

    fn parse_repr(s: &str, _: &()) -> Result<Self> {
        Rational::parse(s.trim())
            .map(Rational::from)
            .map_err(|e| Error::Parse(format!("rational {s:?}: {e}")))
    }

    fn sqrt_checked(&self) -> Result<Self> {
        if self.cmp0() == std::cmp::Ordering::Less {
            return Err(Error::NonRepresentableRoot(format!("sqrt of negative {self}")));
        }
        let (n, d) = (self.numer(), self.denom());
        if n.is_perfect_square() && d.is_perfect_square() {
            Ok(Rational::from((n.clone().sqrt(), d.clone().sqrt())))
        } else {
            Err(Error::NonRepresentableRoot(format!("{self} is not a rational square")))
        }
    }

    fn determinant(rows: Vec<Vec<Self>>, _: &()) -> Result<Self> {
        elimination::bareiss_det(&rows)
    }
}

impl Scalar for Float {
    type Ctx = u32;
    const EXACT: bool = false;

    fn ctx(&self) -> u32 {
        self.prec()
    }

    fn from_i64(v: i64, bits: &u32) -> Self {
        Float::with_val(*bits, v)
    }

    fn from_rational(q: &Rational, bits: &u32) -> Self {
        Float::with_val(*bits, q)
    }

    fn is_zero(&self) -> bool {
        Float::is_zero(self)
    }

    fn abs(&self) -> Self {
        self.clone().abs()
    }

    fn to_f64(&self) -> f64 {
        Float::to_f64(self)
    }

    fn abs_lt_pow10(&self, exponent: i64) -> bool {
        let bound = Float::with_val(self.prec(), 10).pow(Float::with_val(self.prec(), exponent));
        self.clone().abs() < bound
    }

    fn to_repr(&self) -> String {
        let digits = bits_to_digits(self.prec()) as usize;
        self.to_string_radix(10, Some(digits))
    }

    fn to_short(&self) -> String {
        format!("{self:.6e}")
    }

    fn parse_repr(s: &str, bits: &u32) -> Result<Self> {
        Float::parse(s.trim())
            .map(|p| Float::with_val(*bits, p))
            .map_err(|e| Error::Parse(format!("float {s:?}: {e}")))
    }

    fn sqrt_checked(&self) -> Result<Self> {
        if *self < 0 {
            return Err(Error::NonRepresentableRoot(format!(
                "sqrt of negative {}",
                self.to_string_radix(10, Some(12))
            )));
        }
        Ok(self.clone().sqrt())
    }

    fn determinant(rows: Vec<Vec<Self>>, bits: &u32) -> Result<Self> {
        if rows.is_empty() {
            return Ok(Float::with_val(*bits, 1));
        }
        elimination::lu_det_full_pivot(rows)
    }
}

/// Binary precision that holds `digits` decimal digits.
pub fn digits_to_bits(digits: u32) -> u32 {
    (digits as f64 * std::f64::consts::LOG2_10).ceil() as u32
}

pub fn bits_to_digits(bits: u32) -> u32 {
    (bits as f64 / std::f64::consts::LOG2_10).floor() as u32
}

/// Working precision and guard digits; `rel_tol = 10^-(precision - guard)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct TolerancePolicy {
    precision_digits: u32,
    guard_digits: u32,
}

impl Default for TolerancePolicy {
    fn default() -> Self {
        Self::DEFAULT
    }
}

impl TolerancePolicy {
    pub const DEFAULT: TolerancePolicy = TolerancePolicy {
        precision_digits: 120,
        guard_digits: 40,
    };

    pub fn new(precision_digits: u32, guard_digits: u32) -> Result<Self> {
        if guard_digits == 0 || guard_digits >= precision_digits {
            return Err(Error::Config(format!(
                "need 0 < guard ({guard_digits}) < precision ({precision_digits})"
            )));
        }
        Ok(TolerancePolicy {
            precision_digits,
            guard_digits,
        })
    }

    /// Guard of 40 digits, scaled down for low working precisions.
    pub fn with_default_guard(precision_digits: u32) -> Result<Self> {
        Self::new(precision_digits, (precision_digits / 3).clamp(1, 40))
    }

    pub fn precision_digits(&self) -> u32 {
        self.precision_digits
    }

    pub fn guard_digits(&self) -> u32 {
        self.guard_digits
    }

    pub fn bits(&self) -> u32 {
        digits_to_bits(self.precision_digits)
    }

    /// Decimal exponent of the relative tolerance (negative).
    pub fn rel_tol_exponent(&self) -> i64 {
        -((self.precision_digits - self.guard_digits) as i64)
    }

    pub fn rel_tol(&self) -> Float {
        let bits = self.bits();
        Float::with_val(bits, 10).pow(Float::with_val(bits, self.rel_tol_exponent()))
    }

    /// Verdict rule: exact zero in rational mode, `rel < rel_tol` in float mode.
    pub fn passes<S: Scalar>(&self, residual_abs: &S, residual_rel: &S) -> bool {
        if S::EXACT {
            residual_abs.is_zero()
        } else {
            residual_rel.abs_lt_pow10(self.rel_tol_exponent())
        }
    }
}

/// `|lhs - rhs| / max(1, max |scale_terms|)`.
pub fn relative_residual<S: Scalar>(lhs: &S, rhs: &S, scale_terms: &[S]) -> Result<S> {
    if scale_terms.is_empty() {
        return Err(Error::Precondition("relative_residual needs a nonempty scale".into()));
    }
    let diff = (lhs.clone() - rhs).abs();
    Ok(diff / &residual_scale(scale_terms, &lhs.ctx()))
}

/// `max(1, max |terms|)`.
pub fn residual_scale<S: Scalar>(terms: &[S], ctx: &S::Ctx) -> S {
    let mut scale = S::one(ctx);
    for term in terms {
        let a = term.abs();
        if a > scale {
            scale = a;
        }
    }
    scale
}

/// Decimal digits of agreement `-log10(|a - b| / |b|)`, capped at `cap`.
pub fn digits_of_agreement(a: &Float, b: &Float, cap: f64) -> f64 {
    let diff = Float::with_val(a.prec(), a - b).abs();
    if diff.is_zero() {
        return cap;
    }
    let denom = if b.is_zero() { Float::with_val(a.prec(), 1) } else { b.clone().abs() };
    let rel = diff / denom;
    let d = -rel.log10().to_f64();
    d.min(cap)
}
