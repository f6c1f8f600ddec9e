//! Truncated power series ("jets") over pluggable coefficient domains.
//!
//! Probability series live over a [`Scalar`] domain: exact [`Rational`],
//! `f64`, or [`BigFloat`]. Taking a logarithm moves to the scalar's
//! [`Scalar::Log`] domain, which for rationals is [`LogLinearValue`]: the
//! transcendental part of `log p` sits entirely in the constant term, so
//! entropy coefficients stay exact.

mod bigfloat;
mod factor;
mod loglinear;
mod multi;

use std::fmt;

use num_traits::{Signed, Zero};
use thiserror::Error;

use crate::rational::{self, Rational};

pub use bigfloat::BigFloat;
pub use factor::factorize;
pub use loglinear::LogLinearValue;
pub use multi::MultiSeries;

/// Truncation order used when the caller does not choose one.
pub const DEFAULT_ORDER: usize = 13;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SeriesError {
    #[error("truncation orders differ: {0} vs {1}")]
    OrderMismatch(usize, usize),
    #[error("product of two log-linear values is not log-linear")]
    DomainNotClosed,
    #[error("logarithm needs a positive constant term, got {0}")]
    NonpositiveConstantTerm(String),
    #[error("non-finite floating point value")]
    NonFinite,
}

/// A coefficient domain: a module over the rationals, with a partial
/// multiplication.
pub trait Coefficient: Clone + PartialEq + fmt::Debug + fmt::Display + Send + Sync {
    fn zero_value() -> Self;
    fn is_zero_value(&self) -> bool;
    fn add(&self, rhs: &Self) -> Self;
    fn sub(&self, rhs: &Self) -> Self;
    fn neg(&self) -> Self;
    /// Fails with [`SeriesError::DomainNotClosed`] where the domain has no
    /// product (two genuinely log-linear values).
    fn try_mul(&self, rhs: &Self) -> Result<Self, SeriesError>;
    fn scale(&self, q: &Rational) -> Self;
    fn to_f64(&self) -> f64;
}

/// A field of probability values together with the domain its logarithms
/// land in.
pub trait Scalar: Coefficient {
    /// Construction context: nothing for `Rational`/`f64`, bits for `BigFloat`.
    type Ctx: Copy + fmt::Debug + Send + Sync;
    type Log: Coefficient;

    fn from_rational(q: &Rational, ctx: Self::Ctx) -> Self;
    fn mul(&self, rhs: &Self) -> Self;
    fn div(&self, rhs: &Self) -> Self;
    fn is_positive(&self) -> bool;
    /// Natural log of a positive value.
    fn ln(&self) -> Result<Self::Log, SeriesError>;
    fn embed(&self) -> Self::Log;
    /// `self · log_value`
    fn times_log(&self, l: &Self::Log) -> Self::Log;
}

impl Coefficient for Rational {
    fn zero_value() -> Self {
        Zero::zero()
    }
    fn is_zero_value(&self) -> bool {
        Zero::is_zero(self)
    }
    fn add(&self, rhs: &Self) -> Self {
        self + rhs
    }
    fn sub(&self, rhs: &Self) -> Self {
        self - rhs
    }
    fn neg(&self) -> Self {
        -self
    }
    fn try_mul(&self, rhs: &Self) -> Result<Self, SeriesError> {
        Ok(self * rhs)
    }
    fn scale(&self, q: &Rational) -> Self {
        self * q
    }
    fn to_f64(&self) -> f64 {
        rational::to_f64(self)
    }
}

impl Scalar for Rational {
    type Ctx = ();
    type Log = LogLinearValue;

    fn from_rational(q: &Rational, _: ()) -> Self {
        q.clone()
    }
    fn mul(&self, rhs: &Self) -> Self {
        self * rhs
    }
    fn div(&self, rhs: &Self) -> Self {
        self / rhs
    }
    fn is_positive(&self) -> bool {
        Signed::is_positive(self)
    }
    fn ln(&self) -> Result<LogLinearValue, SeriesError> {
        LogLinearValue::ln_of(self)
    }
    fn embed(&self) -> LogLinearValue {
        LogLinearValue::from_rational(self.clone())
    }
    fn times_log(&self, l: &LogLinearValue) -> LogLinearValue {
        l.scaled(self)
    }
}

impl Coefficient for f64 {
    fn zero_value() -> Self {
        0.0
    }
    fn is_zero_value(&self) -> bool {
        *self == 0.0
    }
    fn add(&self, rhs: &Self) -> Self {
        self + rhs
    }
    fn sub(&self, rhs: &Self) -> Self {
        self - rhs
    }
    fn neg(&self) -> Self {
        -self
    }
    fn try_mul(&self, rhs: &Self) -> Result<Self, SeriesError> {
        Ok(self * rhs)
    }
    fn scale(&self, q: &Rational) -> Self {
        self * rational::to_f64(q)
    }
    fn to_f64(&self) -> f64 {
        *self
    }
}

impl Scalar for f64 {
    type Ctx = ();
    type Log = f64;

    fn from_rational(q: &Rational, _: ()) -> Self {
        rational::to_f64(q)
    }
    fn mul(&self, rhs: &Self) -> Self {
        self * rhs
    }
    fn div(&self, rhs: &Self) -> Self {
        self / rhs
    }
    fn is_positive(&self) -> bool {
        *self > 0.0
    }
    fn ln(&self) -> Result<f64, SeriesError> {
        if !self.is_finite() {
            return Err(SeriesError::NonFinite);
        }
        if *self <= 0.0 {
            return Err(SeriesError::NonpositiveConstantTerm(self.to_string()));
        }
        Ok(f64::ln(*self))
    }
    fn embed(&self) -> f64 {
        *self
    }
    fn times_log(&self, l: &f64) -> f64 {
        self * l
    }
}

impl Coefficient for BigFloat {
    fn zero_value() -> Self {
        BigFloat::zero()
    }
    fn is_zero_value(&self) -> bool {
        BigFloat::is_zero(self)
    }
    fn add(&self, rhs: &Self) -> Self {
        BigFloat::add(self, rhs)
    }
    fn sub(&self, rhs: &Self) -> Self {
        BigFloat::sub(self, rhs)
    }
    fn neg(&self) -> Self {
        BigFloat::neg(self)
    }
    fn try_mul(&self, rhs: &Self) -> Result<Self, SeriesError> {
        Ok(BigFloat::mul(self, rhs))
    }
    fn scale(&self, q: &Rational) -> Self {
        BigFloat::mul(self, &BigFloat::from_rational(q, self.precision().max(53)))
    }
    fn to_f64(&self) -> f64 {
        BigFloat::to_f64(self)
    }
}

impl Scalar for BigFloat {
    type Ctx = usize;
    type Log = BigFloat;

    fn from_rational(q: &Rational, bits: usize) -> Self {
        BigFloat::from_rational(q, bits)
    }
    fn mul(&self, rhs: &Self) -> Self {
        BigFloat::mul(self, rhs)
    }
    fn div(&self, rhs: &Self) -> Self {
        BigFloat::div(self, rhs)
    }
    fn is_positive(&self) -> bool {
        BigFloat::is_positive(self)
    }
    fn ln(&self) -> Result<BigFloat, SeriesError> {
        if !BigFloat::is_positive(self) {
            return Err(SeriesError::NonpositiveConstantTerm(self.to_string()));
        }
        Ok(BigFloat::ln(self))
    }
    fn embed(&self) -> BigFloat {
        self.clone()
    }
    fn times_log(&self, l: &BigFloat) -> BigFloat {
        BigFloat::mul(self, l)
    }
}

/// `c_0 + c_1 x + ... + c_K x^K` with everything above `x^K` discarded.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedSeries<T> {
    coeffs: Vec<T>,
}

impl<T: Coefficient> TruncatedSeries<T> {
    /// Series from `c_0..c_K`; the order is `coeffs.len() - 1`.
    pub fn new(coeffs: Vec<T>) -> Self {
        assert!(!coeffs.is_empty(), "a series holds at least c_0");
        Self { coeffs }
    }

    pub fn zeros(order: usize) -> Self {
        Self::new(vec![T::zero_value(); order + 1])
    }

    pub fn constant(c: T, order: usize) -> Self {
        let mut s = Self::zeros(order);
        s.coeffs[0] = c;
        s
    }

    /// `c0 + c1·x`, truncated at `order` (which may be 0).
    pub fn linear(c0: T, c1: T, order: usize) -> Self {
        let mut s = Self::constant(c0, order);
        if order >= 1 {
            s.coeffs[1] = c1;
        }
        s
    }

    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeffs(&self) -> &[T] {
        &self.coeffs
    }

    pub fn coeff(&self, k: usize) -> &T {
        &self.coeffs[k]
    }

    pub fn into_coeffs(self) -> Vec<T> {
        self.coeffs
    }

    pub fn is_identically_zero(&self) -> bool {
        self.coeffs.iter().all(Coefficient::is_zero_value)
    }

    fn check_order(&self, rhs: &Self) -> Result<(), SeriesError> {
        if self.order() != rhs.order() {
            return Err(SeriesError::OrderMismatch(self.order(), rhs.order()));
        }
        Ok(())
    }

    pub fn add(&self, rhs: &Self) -> Result<Self, SeriesError> {
        self.check_order(rhs)?;
        Ok(Self::new(
            self.coeffs.iter().zip(&rhs.coeffs).map(|(a, b)| a.add(b)).collect(),
        ))
    }

    pub fn sub(&self, rhs: &Self) -> Result<Self, SeriesError> {
        self.check_order(rhs)?;
        Ok(Self::new(
            self.coeffs.iter().zip(&rhs.coeffs).map(|(a, b)| a.sub(b)).collect(),
        ))
    }

    pub fn neg(&self) -> Self {
        Self::new(self.coeffs.iter().map(Coefficient::neg).collect())
    }

    pub fn scale(&self, q: &Rational) -> Self {
        Self::new(self.coeffs.iter().map(|c| c.scale(q)).collect())
    }

    /// Truncated Cauchy product `c_k = Σ_{j≤k} a_j b_{k-j}`.
    pub fn mul(&self, rhs: &Self) -> Result<Self, SeriesError> {
        self.check_order(rhs)?;
        let k_max = self.order();
        let mut out = vec![T::zero_value(); k_max + 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            if a.is_zero_value() {
                continue;
            }
            for (j, b) in rhs.coeffs[..=k_max - i].iter().enumerate() {
                if b.is_zero_value() {
                    continue;
                }
                out[i + j] = out[i + j].add(&a.try_mul(b)?);
            }
        }
        Ok(Self::new(out))
    }

    /// Horner evaluation at `x`, coefficients converted to `f64`.
    pub fn evaluate(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c.to_f64())
    }

    /// Partial sum `Σ_{k ≤ upto} c_k x^k`.
    pub fn partial_sum(&self, x: f64, upto: usize) -> f64 {
        self.coeffs[..=upto.min(self.order())]
            .iter()
            .rev()
            .fold(0.0, |acc, c| acc * x + c.to_f64())
    }

    pub fn evaluate_rational(&self, x: &Rational) -> f64 {
        self.evaluate(rational::to_f64(x))
    }
}

impl<T: Scalar> TruncatedSeries<T> {
    /// Multiplies every coefficient by a domain scalar.
    pub fn mul_scalar(&self, c: &T) -> Self {
        Self::new(self.coeffs.iter().map(|a| Scalar::mul(a, c)).collect())
    }

    /// `log p` for `c_0 > 0`.
    ///
    /// The constant term is `log c_0` in the log domain. The rest are the
    /// coefficients of `log(p / c_0)`, from `q·L' = q'` with `q = p / c_0`:
    /// `L_k = q_k - (1/k) Σ_{j=1}^{k-1} j·L_j·q_{k-j}`.
    pub fn log_series(&self) -> Result<TruncatedSeries<T::Log>, SeriesError> {
        let c0 = &self.coeffs[0];
        if !c0.is_positive() {
            return Err(SeriesError::NonpositiveConstantTerm(c0.to_string()));
        }
        let q: Vec<T> = self.coeffs.iter().map(|c| c.div(c0)).collect();
        let mut l: Vec<T> = vec![T::zero_value(); q.len()];
        for k in 1..q.len() {
            let mut acc = T::zero_value();
            for j in 1..k {
                acc = acc.add(&Scalar::mul(&l[j], &q[k - j]).scale(&rational::int(j as i64)));
            }
            l[k] = q[k].sub(&acc.scale(&rational::ratio(1, k as i64)));
        }
        let mut out: Vec<T::Log> = l.iter().map(Scalar::embed).collect();
        out[0] = c0.ln()?;
        Ok(TruncatedSeries::new(out))
    }

    /// Mixed product of a probability series and a log-domain series.
    pub fn times_log_series(
        &self,
        l: &TruncatedSeries<T::Log>,
    ) -> Result<TruncatedSeries<T::Log>, SeriesError> {
        if self.order() != l.order() {
            return Err(SeriesError::OrderMismatch(self.order(), l.order()));
        }
        let k_max = self.order();
        let mut out = vec![T::Log::zero_value(); k_max + 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            if a.is_zero_value() {
                continue;
            }
            for (j, b) in l.coeffs[..=k_max - i].iter().enumerate() {
                if !b.is_zero_value() {
                    out[i + j] = out[i + j].add(&a.times_log(b));
                }
            }
        }
        Ok(TruncatedSeries::new(out))
    }

    /// `-p·log p`, with an identically-zero `p` contributing zero.
    pub fn neg_p_log_p(&self) -> Result<TruncatedSeries<T::Log>, SeriesError> {
        if self.is_identically_zero() {
            return Ok(TruncatedSeries::zeros(self.order()));
        }
        Ok(self.times_log_series(&self.log_series()?)?.neg())
    }

    /// `acc - p·log p`.
    pub fn entropy_accumulate(
        &self,
        acc: &TruncatedSeries<T::Log>,
    ) -> Result<TruncatedSeries<T::Log>, SeriesError> {
        if acc.order() != self.order() {
            return Err(SeriesError::OrderMismatch(self.order(), acc.order()));
        }
        acc.add(&self.neg_p_log_p()?)
    }
}

/// Probability-valued jets the forward traversal can run over: sums,
/// products, and the entropy term `-p·log p`.
pub trait ProbabilityJet: Clone + Send + Sync {
    type Entropy: Clone + Send + Sync;

    fn add(&self, rhs: &Self) -> Result<Self, SeriesError>;
    fn mul(&self, rhs: &Self) -> Result<Self, SeriesError>;
    fn is_identically_zero(&self) -> bool;
    /// The zero jet with the same truncation shape.
    fn zero_like(&self) -> Self;
    fn neg_p_log_p(&self) -> Result<Self::Entropy, SeriesError>;
    fn entropy_zero(&self) -> Self::Entropy;
    fn entropy_add(a: &Self::Entropy, b: &Self::Entropy) -> Result<Self::Entropy, SeriesError>;
    fn entropy_sub(a: &Self::Entropy, b: &Self::Entropy) -> Result<Self::Entropy, SeriesError>;
}

impl<T: Scalar> ProbabilityJet for TruncatedSeries<T> {
    type Entropy = TruncatedSeries<T::Log>;

    fn add(&self, rhs: &Self) -> Result<Self, SeriesError> {
        TruncatedSeries::add(self, rhs)
    }
    fn mul(&self, rhs: &Self) -> Result<Self, SeriesError> {
        TruncatedSeries::mul(self, rhs)
    }
    fn is_identically_zero(&self) -> bool {
        TruncatedSeries::is_identically_zero(self)
    }
    fn zero_like(&self) -> Self {
        TruncatedSeries::zeros(self.order())
    }
    fn neg_p_log_p(&self) -> Result<Self::Entropy, SeriesError> {
        TruncatedSeries::neg_p_log_p(self)
    }
    fn entropy_zero(&self) -> Self::Entropy {
        TruncatedSeries::zeros(self.order())
    }
    fn entropy_add(a: &Self::Entropy, b: &Self::Entropy) -> Result<Self::Entropy, SeriesError> {
        a.add(b)
    }
    fn entropy_sub(a: &Self::Entropy, b: &Self::Entropy) -> Result<Self::Entropy, SeriesError> {
        a.sub(b)
    }
}
