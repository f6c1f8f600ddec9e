//! Exact rational numbers and lossless text parsing.
//!
//! Every probability in the crate starts life as a [`Rational`]. Decimal
//! input such as `"0.1"` is converted digit-by-digit to `1/10`; nothing ever
//! passes through a binary float on the way in.

use num_bigint::BigInt;
use num_traits::{ToPrimitive, Zero};
use thiserror::Error;

/// Arbitrary-precision rational, always normalized (lowest terms, positive
/// denominator).
pub type Rational = num_rational::BigRational;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseRationalError {
    #[error("empty rational literal")]
    Empty,
    #[error("invalid rational literal {0:?}")]
    Invalid(String),
    #[error("zero denominator in {0:?}")]
    ZeroDenominator(String),
}

/// Shorthand for `n/d` with machine integers. Panics on `d == 0`.
pub fn ratio(n: i64, d: i64) -> Rational {
    Rational::new(BigInt::from(n), BigInt::from(d))
}

pub fn int(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

/// Parses `"a/b"`, `"-a/b"`, integers, and decimals with an optional
/// exponent (`"0.25"`, `"-1.5e-3"`). Surrounding whitespace is ignored.
pub fn parse_rational(text: &str) -> Result<Rational, ParseRationalError> {
    let t = text.trim();
    if t.is_empty() {
        return Err(ParseRationalError::Empty);
    }
    if let Some((num, den)) = t.split_once('/') {
        let n = parse_decimal(num.trim()).ok_or_else(|| ParseRationalError::Invalid(t.into()))?;
        let d = parse_decimal(den.trim()).ok_or_else(|| ParseRationalError::Invalid(t.into()))?;
        if d.is_zero() {
            return Err(ParseRationalError::ZeroDenominator(t.into()));
        }
        return Ok(n / d);
    }
    parse_decimal(t).ok_or_else(|| ParseRationalError::Invalid(t.into()))
}

fn parse_decimal(t: &str) -> Option<Rational> {
    let (sign, body) = match t.as_bytes().first()? {
        b'-' => (-1, &t[1..]),
        b'+' => (1, &t[1..]),
        _ => (1, t),
    };
    let (mantissa, exponent) = match body.find(['e', 'E']) {
        Some(pos) => (&body[..pos], body[pos + 1..].parse::<i32>().ok()?),
        None => (body, 0),
    };
    let (int_part, frac_part) = match mantissa.split_once('.') {
        Some((a, b)) => (a, b),
        None => (mantissa, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.bytes().chain(frac_part.bytes()).all(|b| b.is_ascii_digit()) {
        return None;
    }
    let digits = format!("{int_part}{frac_part}");
    let mut value = Rational::from_integer(digits.parse::<BigInt>().ok()?);
    let scale = exponent - frac_part.len() as i32;
    let ten = BigInt::from(10u32);
    let pow = num_traits::pow(ten, scale.unsigned_abs() as usize);
    if scale >= 0 {
        value *= Rational::from_integer(pow);
    } else {
        value /= Rational::from_integer(pow);
    }
    Some(if sign < 0 { -value } else { value })
}

/// Nearest `f64` to an exact rational (correctly rounded, handles terms far
/// outside the `f64` range).
pub fn to_f64(q: &Rational) -> f64 {
    q.to_f64().unwrap_or(f64::NAN)
}
