use std::fmt;

use dashu_float::round::mode::HalfEven;
use dashu_float::FBig;
use dashu_int::IBig;

use crate::rational::Rational;

type Inner = FBig<HalfEven, 2>;

/// Binary floating point with a run-time precision in bits.
///
/// Values built by [`BigFloat::from_rational`] carry their precision; results
/// of arithmetic take the larger operand precision, so a computation seeded
/// at `bits` stays at `bits`. `BigFloat::zero()` carries no precision and
/// adopts that of whatever it is combined with.
#[derive(Clone, PartialEq, PartialOrd)]
pub struct BigFloat(Inner);

impl BigFloat {
    pub fn zero() -> Self {
        BigFloat(Inner::ZERO)
    }

    pub fn from_rational(q: &Rational, bits: usize) -> Self {
        let num = Inner::from(to_ibig(q.numer())).with_precision(bits).value();
        let den = Inner::from(to_ibig(q.denom())).with_precision(bits).value();
        BigFloat(num / den)
    }

    pub fn precision(&self) -> usize {
        self.0.precision()
    }

    pub fn add(&self, rhs: &Self) -> Self {
        BigFloat(&self.0 + &rhs.0)
    }

    pub fn sub(&self, rhs: &Self) -> Self {
        BigFloat(&self.0 - &rhs.0)
    }

    pub fn mul(&self, rhs: &Self) -> Self {
        BigFloat(&self.0 * &rhs.0)
    }

    pub fn div(&self, rhs: &Self) -> Self {
        BigFloat(&self.0 / &rhs.0)
    }

    pub fn neg(&self) -> Self {
        BigFloat(-self.0.clone())
    }

    pub fn ln(&self) -> Self {
        BigFloat(self.0.ln())
    }

    pub fn is_zero(&self) -> bool {
        self.0 == Inner::ZERO
    }

    pub fn is_positive(&self) -> bool {
        self.0 > Inner::ZERO
    }

    pub fn to_f64(&self) -> f64 {
        self.0.to_f64().value()
    }
}

fn to_ibig(n: &num_bigint::BigInt) -> IBig {
    IBig::from_le_bytes(&n.to_signed_bytes_le())
}

impl fmt::Debug for BigFloat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BigFloat({self})")
    }
}

/// Decimal rendering at the value's own precision.
impl fmt::Display for BigFloat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0.to_decimal().value())
    }
}
