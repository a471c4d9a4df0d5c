//! Numeric back ends: exact rationals and tolerance-compared floats.

use std::fmt::{Debug, Display};
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Rational = BigRational;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum NumericMode {
    #[default]
    Exact,
    Float,
}

impl FromStr for NumericMode {
    type Err = ScalarError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "exact" | "rational" => Ok(NumericMode::Exact),
            "float" | "f64" => Ok(NumericMode::Float),
            other => Err(ScalarError::UnknownMode(other.to_string())),
        }
    }
}

impl Display for NumericMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            NumericMode::Exact => write!(f, "exact"),
            NumericMode::Float => write!(f, "float"),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ScalarError {
    #[error("cannot parse numeric literal {0:?}")]
    BadLiteral(String),
    #[error("zero denominator in {0:?}")]
    ZeroDenominator(String),
    #[error("non-finite value {0:?}")]
    NonFinite(String),
    #[error("unknown numeric mode {0:?} (expected exact or float)")]
    UnknownMode(String),
}

static FLOAT_TOL_BITS: AtomicU64 = AtomicU64::new(0x3E11_2E0B_E826_D695); // 1e-9

/// Absolute tolerance used by every f64 comparison helper.
pub fn float_tolerance() -> f64 {
    f64::from_bits(FLOAT_TOL_BITS.load(Ordering::Relaxed))
}

pub fn set_float_tolerance(tol: f64) {
    assert!(tol.is_finite() && tol >= 0.0, "tolerance must be finite and non-negative");
    FLOAT_TOL_BITS.store(tol.to_bits(), Ordering::Relaxed);
}

/// Ordered field used throughout the crate.
///
/// Arithmetic goes through the `num_traits` operator bounds; the helpers
/// below absorb the float tolerance so call sites read the same in both
/// modes. In exact mode the tolerance is zero.
pub trait Scalar:
    Clone
    + Debug
    + Display
    + PartialEq
    + PartialOrd
    + Send
    + Sync
    + 'static
    + num_traits::Num
    + Signed
{
    const MODE: NumericMode;

    fn from_ratio(num: i64, den: i64) -> Self;
    fn from_rational(r: &Rational) -> Self;
    fn from_f64_lossy(x: f64) -> Self;
    fn to_f64(&self) -> f64;
    fn parse_literal(text: &str) -> Result<Self, ScalarError>;
    fn to_json(&self) -> serde_json::Value;
    /// Square root when it is representable (perfect squares in exact mode).
    fn sqrt_checked(&self) -> Option<Self>;
    fn tolerance() -> Self;

    fn from_int(n: i64) -> Self {
        Self::from_ratio(n, 1)
    }

    /// Tolerance for comparing `a` and `b`, scaled by their magnitude.
    fn tol_for(a: &Self, b: &Self) -> Self {
        let t = Self::tolerance();
        if t.is_zero() {
            return t;
        }
        t * Self::max_of(Self::one(), Self::max_of(a.abs(), b.abs()))
    }

    fn approx_eq(&self, other: &Self) -> bool {
        (self.clone() - other.clone()).abs() <= Self::tol_for(self, other)
    }

    fn approx_le(&self, other: &Self) -> bool {
        self.clone() <= other.clone() + Self::tol_for(self, other)
    }

    fn approx_ge(&self, other: &Self) -> bool {
        other.approx_le(self)
    }

    /// Strictly less beyond tolerance.
    fn definitely_lt(&self, other: &Self) -> bool {
        self.clone() + Self::tol_for(self, other) < other.clone()
    }

    fn definitely_gt(&self, other: &Self) -> bool {
        other.definitely_lt(self)
    }

    /// Less than `other` by more than a tolerance relative to the larger of
    /// the two, with no absolute floor. For ratios such as bang-per-buck whose
    /// magnitude shrinks as prices grow.
    fn rel_lt(&self, other: &Self) -> bool {
        let t = Self::tolerance() * Self::max_of(self.abs(), other.abs());
        self.clone() + t < other.clone()
    }

    fn rel_eq(&self, other: &Self) -> bool {
        !self.rel_lt(other) && !other.rel_lt(self)
    }

    fn is_negligible(&self) -> bool {
        self.abs() <= Self::tolerance()
    }

    fn is_positive_beyond_tol(&self) -> bool {
        *self > Self::tolerance()
    }

    fn powi(&self, n: u32) -> Self {
        let mut acc = Self::one();
        let mut base = self.clone();
        let mut e = n;
        while e > 0 {
            if e & 1 == 1 {
                acc = acc * base.clone();
            }
            base = base.clone() * base;
            e >>= 1;
        }
        acc
    }

    fn min_of(a: Self, b: Self) -> Self {
        if b < a {
            b
        } else {
            a
        }
    }

    fn max_of(a: Self, b: Self) -> Self {
        if b > a {
            b
        } else {
            a
        }
    }

    fn clamp_nonneg(self) -> Self {
        if self < Self::zero() {
            Self::zero()
        } else {
            self
        }
    }
}

fn parse_rational_literal(text: &str) -> Result<Rational, ScalarError> {
    let t = text.trim();
    if t.is_empty() {
        return Err(ScalarError::BadLiteral(text.to_string()));
    }
    if let Some((n, d)) = t.split_once('/') {
        let num = parse_decimal(n.trim()).ok_or_else(|| ScalarError::BadLiteral(text.to_string()))?;
        let den = parse_decimal(d.trim()).ok_or_else(|| ScalarError::BadLiteral(text.to_string()))?;
        if den.is_zero() {
            return Err(ScalarError::ZeroDenominator(text.to_string()));
        }
        return Ok(num / den);
    }
    parse_decimal(t).ok_or_else(|| ScalarError::BadLiteral(text.to_string()))
}

/// Exact value of a decimal literal such as `-12.5e-3`.
fn parse_decimal(t: &str) -> Option<Rational> {
    let (mantissa, exp) = match t.find(['e', 'E']) {
        Some(pos) => (&t[..pos], t[pos + 1..].parse::<i32>().ok()?),
        None => (t, 0),
    };
    let (neg, body) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = body.split_once('.').unwrap_or((body, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.bytes().chain(frac_part.bytes()).all(|b| b.is_ascii_digit()) {
        return None;
    }
    let digits = format!("{int_part}{frac_part}");
    let mut num: BigInt = if digits.is_empty() { BigInt::zero() } else { digits.parse().ok()? };
    if neg {
        num = -num;
    }
    let scale = exp - frac_part.len() as i32;
    let ten = BigInt::from(10u32);
    let r = if scale >= 0 {
        Rational::from_integer(num * num_traits::pow(ten, scale as usize))
    } else {
        Rational::new(num, num_traits::pow(ten, (-scale) as usize))
    };
    Some(r)
}

impl Scalar for Rational {
    const MODE: NumericMode = NumericMode::Exact;

    fn from_ratio(num: i64, den: i64) -> Self {
        Rational::new(BigInt::from(num), BigInt::from(den))
    }

    fn from_rational(r: &Rational) -> Self {
        r.clone()
    }

    fn from_f64_lossy(x: f64) -> Self {
        Rational::from_float(x).unwrap_or_else(Rational::zero)
    }

    fn to_f64(&self) -> f64 {
        // Scale down huge operands before converting so 1e300-sized
        // numerators and denominators still give a finite quotient.
        match (self.numer().to_f64(), self.denom().to_f64()) {
            (Some(n), Some(d)) if n.is_finite() && d.is_finite() => n / d,
            _ => {
                let nb = self.numer().bits() as i64;
                let db = self.denom().bits() as i64;
                let shift = (nb.max(db) - 900).max(0) as usize;
                let n = (self.numer() >> shift).to_f64().unwrap_or(0.0);
                let d = (self.denom() >> shift).to_f64().unwrap_or(f64::INFINITY);
                if d == 0.0 {
                    if n >= 0.0 {
                        f64::INFINITY
                    } else {
                        f64::NEG_INFINITY
                    }
                } else {
                    n / d
                }
            }
        }
    }

    fn parse_literal(text: &str) -> Result<Self, ScalarError> {
        parse_rational_literal(text)
    }

    fn to_json(&self) -> serde_json::Value {
        if self.is_integer() {
            if let Some(n) = self.numer().to_i64() {
                return serde_json::Value::from(n);
            }
        }
        serde_json::Value::String(format!("{}/{}", self.numer(), self.denom()))
    }

    fn sqrt_checked(&self) -> Option<Self> {
        if self.is_negative() {
            return None;
        }
        let n = self.numer().sqrt();
        let d = self.denom().sqrt();
        if &n * &n == *self.numer() && &d * &d == *self.denom() {
            Some(Rational::new(n, d))
        } else {
            None
        }
    }

    fn tolerance() -> Self {
        Rational::zero()
    }

    fn powi(&self, n: u32) -> Self {
        num_traits::pow(self.clone(), n as usize)
    }
}

impl Scalar for f64 {
    const MODE: NumericMode = NumericMode::Float;

    fn from_ratio(num: i64, den: i64) -> Self {
        num as f64 / den as f64
    }

    fn from_rational(r: &Rational) -> Self {
        Scalar::to_f64(r)
    }

    fn from_f64_lossy(x: f64) -> Self {
        x
    }

    fn to_f64(&self) -> f64 {
        *self
    }

    fn parse_literal(text: &str) -> Result<Self, ScalarError> {
        let t = text.trim();
        let v = if let Some((n, d)) = t.split_once('/') {
            let n: f64 = n.trim().parse().map_err(|_| ScalarError::BadLiteral(text.to_string()))?;
            let d: f64 = d.trim().parse().map_err(|_| ScalarError::BadLiteral(text.to_string()))?;
            if d == 0.0 {
                return Err(ScalarError::ZeroDenominator(text.to_string()));
            }
            n / d
        } else {
            t.parse().map_err(|_| ScalarError::BadLiteral(text.to_string()))?
        };
        if !v.is_finite() {
            return Err(ScalarError::NonFinite(text.to_string()));
        }
        Ok(v)
    }

    fn to_json(&self) -> serde_json::Value {
        serde_json::Number::from_f64(*self)
            .map(serde_json::Value::Number)
            .unwrap_or(serde_json::Value::Null)
    }

    fn sqrt_checked(&self) -> Option<Self> {
        if *self < 0.0 {
            None
        } else {
            Some(self.sqrt())
        }
    }

    fn tolerance() -> Self {
        float_tolerance()
    }

    fn powi(&self, n: u32) -> Self {
        f64::powi(*self, n as i32)
    }
}

/// Reads a JSON number or `"num/den"` string.
pub fn scalar_from_json<S: Scalar>(value: &serde_json::Value) -> Result<S, ScalarError> {
    match value {
        serde_json::Value::String(s) => S::parse_literal(s),
        serde_json::Value::Number(n) => S::parse_literal(&n.to_string()),
        other => Err(ScalarError::BadLiteral(other.to_string())),
    }
}

/// Smallest `n` with `base^n >= target`, for `base > 1`.
pub fn ceil_log<S: Scalar>(base: &S, target: &S) -> u64 {
    let one = S::one();
    if *target <= one {
        return 0;
    }
    // f64 estimate first, then nudge to the exact answer.
    let est = (target.to_f64().ln() / base.to_f64().ln()).ceil();
    let mut n = if est.is_finite() && est > 0.0 { est as u64 } else { 0 };
    let pow = |n: u64| base.powi(n as u32);
    while n > 0 && pow(n - 1) >= *target {
        n -= 1;
    }
    while pow(n) < *target {
        n += 1;
    }
    n
}
