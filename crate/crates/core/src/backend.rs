//! Numeric backend selection and backend-tagged values.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::series::{BigFloat, Coefficient, LogLinearValue};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Backend {
    #[default]
    Exact,
    Float64,
    BigFloat(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown backend {0:?}; expected exact, float64 or bigfloat:BITS")]
pub struct ParseBackendError(String);

impl FromStr for Backend {
    type Err = ParseBackendError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "exact" => Ok(Backend::Exact),
            "float64" | "float" => Ok(Backend::Float64),
            _ => {
                let bits = s
                    .strip_prefix("bigfloat:")
                    .and_then(|b| b.parse::<usize>().ok())
                    .filter(|&b| b >= 16)
                    .ok_or_else(|| ParseBackendError(s.to_string()))?;
                Ok(Backend::BigFloat(bits))
            }
        }
    }
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Backend::Exact => f.write_str("exact"),
            Backend::Float64 => f.write_str("float64"),
            Backend::BigFloat(bits) => write!(f, "bigfloat:{bits}"),
        }
    }
}

/// An entropy-domain number from one of the backends.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Exact(LogLinearValue),
    Float(f64),
    Big(BigFloat),
}

impl Value {
    pub fn to_f64(&self) -> f64 {
        match self {
            Value::Exact(v) => v.to_f64(),
            Value::Float(v) => *v,
            Value::Big(v) => v.to_f64(),
        }
    }

    pub fn as_exact(&self) -> Option<&LogLinearValue> {
        match self {
            Value::Exact(v) => Some(v),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Value::Exact(v) => v.is_zero_value(),
            Value::Float(v) => *v == 0.0,
            Value::Big(v) => v.is_zero(),
        }
    }
}

/// Exact values render structurally, floats as shortest round-trip decimals.
impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Exact(v) => write!(f, "{v}"),
            Value::Float(v) => write!(f, "{v:?}"),
            Value::Big(v) => write!(f, "{v}"),
        }
    }
}

impl From<LogLinearValue> for Value {
    fn from(v: LogLinearValue) -> Self {
        Value::Exact(v)
    }
}

impl From<f64> for Value {
    fn from(v: f64) -> Self {
        Value::Float(v)
    }
}

impl From<BigFloat> for Value {
    fn from(v: BigFloat) -> Self {
        Value::Big(v)
    }
}

/// Runs `$body` with `$t` bound to the scalar type of `$backend` and `$ctx`
/// to its construction context.
#[macro_export]
macro_rules! with_backend {
    ($backend:expr, $t:ident, $ctx:ident => $body:expr) => {
        match $backend {
            $crate::backend::Backend::Exact => {
                type $t = $crate::rational::Rational;
                let $ctx = ();
                $body
            }
            $crate::backend::Backend::Float64 => {
                type $t = f64;
                let $ctx = ();
                $body
            }
            $crate::backend::Backend::BigFloat(bits) => {
                type $t = $crate::series::BigFloat;
                let $ctx = bits;
                $body
            }
        }
    };
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::int;

    #[test]
    fn parse_and_render_backends() {
        for s in ["exact", "float64", "bigfloat:256"] {
            assert_eq!(s.parse::<Backend>().unwrap().to_string(), s);
        }
        assert!("bigfloat:".parse::<Backend>().is_err());
        assert!("bigfloat:4".parse::<Backend>().is_err());
        assert!("double".parse::<Backend>().is_err());
    }

    #[test]
    fn value_rendering() {
        assert_eq!(Value::from(LogLinearValue::log_prime(2, int(1))).to_string(), "log(2)");
        assert_eq!(Value::from(0.1f64).to_string(), "0.1");
        assert_eq!(Value::from(2.0f64).to_string(), "2.0");
    }
}
