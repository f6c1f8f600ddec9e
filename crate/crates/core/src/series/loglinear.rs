use std::collections::btree_map::Entry;
use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigUint;
use num_traits::{One, Signed, Zero};

use super::bigfloat::BigFloat;
use super::factor::factorize;
use super::{Coefficient, SeriesError};
use crate::rational::Rational;

/// Exact real number `rat + Σ coef_p · log(p)` over distinct primes `p`.
///
/// The prime logarithms are linearly independent over the rationals, so two
/// values are equal exactly when their components are. Zero coefficients are
/// never stored, which makes the derived `PartialEq` that comparison.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LogLinearValue {
    rat: Rational,
    logs: BTreeMap<BigUint, Rational>,
}

impl LogLinearValue {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn from_rational(rat: Rational) -> Self {
        Self {
            rat,
            logs: BTreeMap::new(),
        }
    }

    /// `coef · log(prime)`. The caller guarantees `prime` is prime.
    pub fn log_prime(prime: u64, coef: Rational) -> Self {
        let mut v = Self::zero();
        v.add_log_term(BigUint::from(prime), coef);
        v
    }

    /// Natural log of a positive rational, decomposed into prime logs.
    pub fn ln_of(q: &Rational) -> Result<Self, SeriesError> {
        if !q.is_positive() {
            return Err(SeriesError::NonpositiveConstantTerm(q.to_string()));
        }
        let mut v = Self::zero();
        for (p, e) in factorize(q.numer().magnitude()) {
            v.add_log_term(p, Rational::from_integer(e.into()));
        }
        for (p, e) in factorize(q.denom().magnitude()) {
            v.add_log_term(p, -Rational::from_integer(e.into()));
        }
        Ok(v)
    }

    pub fn rational_part(&self) -> &Rational {
        &self.rat
    }

    pub fn log_terms(&self) -> &BTreeMap<BigUint, Rational> {
        &self.logs
    }

    pub fn log_coefficient(&self, prime: u64) -> Rational {
        self.logs
            .get(&BigUint::from(prime))
            .cloned()
            .unwrap_or_else(Rational::zero)
    }

    /// True when no logarithm survives, i.e. the value is rational.
    pub fn is_rational(&self) -> bool {
        self.logs.is_empty()
    }

    fn add_log_term(&mut self, prime: BigUint, coef: Rational) {
        if coef.is_zero() {
            return;
        }
        match self.logs.entry(prime) {
            Entry::Vacant(slot) => {
                slot.insert(coef);
            }
            Entry::Occupied(mut slot) => {
                *slot.get_mut() += coef;
                if slot.get().is_zero() {
                    slot.remove();
                }
            }
        }
    }

    pub fn plus(&self, rhs: &Self) -> Self {
        let mut out = self.clone();
        out.rat += &rhs.rat;
        for (p, c) in &rhs.logs {
            out.add_log_term(p.clone(), c.clone());
        }
        out
    }

    pub fn minus(&self, rhs: &Self) -> Self {
        self.plus(&rhs.negated())
    }

    pub fn negated(&self) -> Self {
        Self {
            rat: -&self.rat,
            logs: self.logs.iter().map(|(p, c)| (p.clone(), -c)).collect(),
        }
    }

    pub fn scaled(&self, q: &Rational) -> Self {
        if q.is_zero() {
            return Self::zero();
        }
        Self {
            rat: &self.rat * q,
            logs: self.logs.iter().map(|(p, c)| (p.clone(), c * q)).collect(),
        }
    }

    /// Numeric value, summed in 192-bit arithmetic before rounding so that
    /// cancellation between large log terms does not cost double precision.
    pub fn to_f64(&self) -> f64 {
        if self.logs.is_empty() {
            return crate::rational::to_f64(&self.rat);
        }
        const BITS: usize = 192;
        let mut acc = BigFloat::from_rational(&self.rat, BITS);
        for (p, c) in &self.logs {
            let lp = BigFloat::from_rational(&Rational::from_integer(p.clone().into()), BITS).ln();
            acc = acc.add(&lp.mul(&BigFloat::from_rational(c, BITS)));
        }
        acc.to_f64()
    }
}

impl Coefficient for LogLinearValue {
    fn zero_value() -> Self {
        LogLinearValue::zero()
    }
    fn is_zero_value(&self) -> bool {
        self.rat.is_zero() && self.logs.is_empty()
    }
    fn add(&self, rhs: &Self) -> Self {
        self.plus(rhs)
    }
    fn sub(&self, rhs: &Self) -> Self {
        self.minus(rhs)
    }
    fn neg(&self) -> Self {
        self.negated()
    }
    fn try_mul(&self, rhs: &Self) -> Result<Self, SeriesError> {
        match (self.is_rational(), rhs.is_rational()) {
            (true, _) => Ok(rhs.scaled(&self.rat)),
            (_, true) => Ok(self.scaled(&rhs.rat)),
            _ => Err(SeriesError::DomainNotClosed),
        }
    }
    fn scale(&self, q: &Rational) -> Self {
        self.scaled(q)
    }
    fn to_f64(&self) -> f64 {
        LogLinearValue::to_f64(self)
    }
}

/// Structural rendering: log terms by increasing prime, then the rational
/// part, e.g. `1/2·log(2) + 3/8`, `-log(3)`, `-4/3`.
impl fmt::Display for LogLinearValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut terms: Vec<(bool, String)> = Vec::new();
        for (p, c) in &self.logs {
            let mag = c.abs();
            let body = if mag.is_one() {
                format!("log({p})")
            } else {
                format!("{mag}·log({p})")
            };
            terms.push((c.is_negative(), body));
        }
        if !self.rat.is_zero() || terms.is_empty() {
            terms.push((self.rat.is_negative(), self.rat.abs().to_string()));
        }
        for (i, (neg, body)) in terms.iter().enumerate() {
            match (i, neg) {
                (0, true) => write!(f, "-{body}")?,
                (0, false) => write!(f, "{body}")?,
                (_, true) => write!(f, " - {body}")?,
                (_, false) => write!(f, " + {body}")?,
            }
        }
        Ok(())
    }
}
