//! Radius-of-convergence estimates and partial-sum-versus-bounds scans.

use std::fmt;

use num_integer::Integer;
use rayon::prelude::*;
use thiserror::Error;

use crate::backend::{Backend, Value};
use crate::entropy::{self, EntropyError};
use crate::expansion::{self, CoefficientTable, ExpansionError};
use crate::model::{ModelError, RegimeKind, RegimeSpec};
use crate::rational::{self, Rational};

pub const DEFAULT_SCAN_TOLERANCE: f64 = 1e-9;

/// Float coefficients below this fraction of the largest one count as zero.
pub const FLOAT_ZERO_THRESHOLD: f64 = 1e-12;

/// Relative Domb-Sykes fit residual above which an estimate is flagged.
pub const LOW_CONFIDENCE_RESIDUAL: f64 = 1e-3;

const MIN_NONZERO: usize = 4;
const MIN_FIT_POINTS: usize = 5;
const RATIO_AVERAGE: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RadiusError {
    #[error("need at least {needed} usable coefficients, found {found}")]
    TooFewCoefficients { needed: usize, found: usize },
    #[error("Domb-Sykes fit has a zero intercept")]
    DegenerateFit,
    #[error(transparent)]
    Expansion(#[from] ExpansionError),
    #[error("grid must be strictly increasing")]
    UnorderedGrid,
}

impl From<ModelError> for RadiusError {
    fn from(e: ModelError) -> Self {
        RadiusError::Expansion(e.into())
    }
}

impl From<EntropyError> for RadiusError {
    fn from(e: EntropyError) -> Self {
        RadiusError::Expansion(e.into())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RadiusMethod {
    Ratio,
    CauchyHadamard,
    DombSykes,
}

impl fmt::Display for RadiusMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RadiusMethod::Ratio => "ratio",
            RadiusMethod::CauchyHadamard => "cauchy-hadamard",
            RadiusMethod::DombSykes => "domb-sykes",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadiusEstimate {
    pub method: RadiusMethod,
    /// `None` when every coefficient past the constant term vanishes.
    pub value: Option<f64>,
    pub stride: usize,
    pub orders_used: Vec<usize>,
    /// `(k, estimate from order k)` for the ratio and root tests.
    pub per_order: Vec<(usize, f64)>,
    pub alternating: bool,
    pub residual: Option<f64>,
    pub low_confidence: bool,
}

impl RadiusEstimate {
    fn indeterminate(method: RadiusMethod) -> Self {
        Self {
            method,
            value: None,
            stride: 0,
            orders_used: Vec::new(),
            per_order: Vec::new(),
            alternating: false,
            residual: None,
            low_confidence: false,
        }
    }

    pub fn is_indeterminate(&self) -> bool {
        self.value.is_none()
    }
}

/// Table coefficients as floats with vanishing entries mapped to exactly 0.
///
/// Exact tables use exact zeros. Float tables zero `c_k` when it is below
/// [`FLOAT_ZERO_THRESHOLD`] times the largest magnitude among `c_0..=c_k`.
pub fn radius_coefficients(table: &CoefficientTable) -> Vec<f64> {
    let raw = table.as_f64();
    let mut scale = 0.0f64;
    table
        .values
        .iter()
        .zip(&raw)
        .map(|(v, &c)| {
            scale = scale.max(c.abs());
            match v {
                Value::Exact(_) if v.is_zero() => 0.0,
                Value::Exact(_) => c,
                _ if c.abs() <= FLOAT_ZERO_THRESHOLD * scale => 0.0,
                _ => c,
            }
        })
        .collect()
}

struct Nonzero {
    orders: Vec<usize>,
    stride: usize,
    alternating: bool,
}

/// Nonzero orders past the constant term, or `None` for an all-zero tail.
fn nonzero(coeffs: &[f64]) -> Result<Option<Nonzero>, RadiusError> {
    let orders: Vec<usize> = (1..coeffs.len()).filter(|&k| coeffs[k] != 0.0).collect();
    if orders.is_empty() {
        return Ok(None);
    }
    if orders.len() < MIN_NONZERO {
        return Err(RadiusError::TooFewCoefficients {
            needed: MIN_NONZERO,
            found: orders.len(),
        });
    }
    let stride = orders.iter().fold(0, |g, &k| g.gcd(&k));
    let alternating = orders
        .windows(2)
        .all(|w| coeffs[w[0]].signum() != coeffs[w[1]].signum());
    Ok(Some(Nonzero {
        orders,
        stride,
        alternating,
    }))
}

/// Orders `k` with both `c_k` and `c_{k+m}` nonzero.
fn ratio_pairs(coeffs: &[f64], nz: &Nonzero) -> Vec<usize> {
    nz.orders
        .iter()
        .copied()
        .filter(|&k| k + nz.stride < coeffs.len() && coeffs[k + nz.stride] != 0.0)
        .collect()
}

/// Mean of `|c_k / c_{k+m}|^{1/m}` over the highest available orders, `m`
/// the gcd of the nonzero orders.
pub fn ratio_estimate(coeffs: &[f64]) -> Result<RadiusEstimate, RadiusError> {
    let Some(nz) = nonzero(coeffs)? else {
        return Ok(RadiusEstimate::indeterminate(RadiusMethod::Ratio));
    };
    let m = nz.stride;
    let pairs = ratio_pairs(coeffs, &nz);
    if pairs.is_empty() {
        return Err(RadiusError::TooFewCoefficients { needed: 2, found: 0 });
    }
    let per_order: Vec<(usize, f64)> = pairs
        .iter()
        .map(|&k| (k, (coeffs[k] / coeffs[k + m]).abs().powf(1.0 / m as f64)))
        .collect();
    let top = &per_order[per_order.len().saturating_sub(RATIO_AVERAGE)..];
    let value = top.iter().map(|(_, r)| r).sum::<f64>() / top.len() as f64;
    Ok(RadiusEstimate {
        method: RadiusMethod::Ratio,
        value: Some(value),
        stride: m,
        orders_used: top.iter().flat_map(|&(k, _)| [k, k + m]).collect::<std::collections::BTreeSet<_>>().into_iter().collect(),
        per_order,
        alternating: nz.alternating,
        residual: None,
        low_confidence: false,
    })
}

/// Root test `|c_K|^{-1/K}` at the largest nonzero order `K`.
pub fn cauchy_hadamard_estimate(coeffs: &[f64]) -> Result<RadiusEstimate, RadiusError> {
    let Some(nz) = nonzero(coeffs)? else {
        return Ok(RadiusEstimate::indeterminate(RadiusMethod::CauchyHadamard));
    };
    let per_order: Vec<(usize, f64)> = nz
        .orders
        .iter()
        .map(|&k| (k, coeffs[k].abs().powf(-1.0 / k as f64)))
        .collect();
    let &(top, value) = per_order.last().expect("nonzero orders exist");
    Ok(RadiusEstimate {
        method: RadiusMethod::CauchyHadamard,
        value: Some(value),
        stride: nz.stride,
        orders_used: vec![top],
        per_order,
        alternating: nz.alternating,
        residual: None,
        low_confidence: false,
    })
}

/// Least-squares line through `(1/k, c_{k+m}/c_k)`; the intercept is
/// `±ρ^{-m}`.
pub fn domb_sykes_estimate(coeffs: &[f64]) -> Result<RadiusEstimate, RadiusError> {
    let Some(nz) = nonzero(coeffs)? else {
        return Ok(RadiusEstimate::indeterminate(RadiusMethod::DombSykes));
    };
    let m = nz.stride;
    let pairs = ratio_pairs(coeffs, &nz);
    if pairs.len() < MIN_FIT_POINTS {
        return Err(RadiusError::TooFewCoefficients {
            needed: MIN_FIT_POINTS,
            found: pairs.len(),
        });
    }
    let pts: Vec<(f64, f64)> = pairs
        .iter()
        .map(|&k| (1.0 / k as f64, coeffs[k + m] / coeffs[k]))
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    if intercept == 0.0 || !intercept.is_finite() {
        return Err(RadiusError::DegenerateFit);
    }
    let rms = (pts
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    let scale = pts.iter().map(|p| p.1.abs()).sum::<f64>() / n;
    let relative = rms / scale;
    Ok(RadiusEstimate {
        method: RadiusMethod::DombSykes,
        value: Some(intercept.abs().powf(-1.0 / m as f64)),
        stride: m,
        orders_used: pairs.iter().flat_map(|&k| [k, k + m]).collect::<std::collections::BTreeSet<_>>().into_iter().collect(),
        per_order: Vec::new(),
        alternating: nz.alternating,
        residual: Some(rms),
        low_confidence: relative > LOW_CONFIDENCE_RESIDUAL,
    })
}

/// All three estimates for a table.
pub fn estimate_all(table: &CoefficientTable) -> Vec<Result<RadiusEstimate, RadiusError>> {
    let c = radius_coefficients(table);
    vec![ratio_estimate(&c), cauchy_hadamard_estimate(&c), domb_sykes_estimate(&c)]
}

/// How grid values relate to the regime parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridAxis {
    /// Grid values are the regime parameter itself.
    Parameter,
    /// Grid values are `p = 1/2 - δ`, the flip probability of the
    /// symmetric binary chain near the uniform one.
    FlipProbability,
}

impl GridAxis {
    pub fn to_parameter(self, g: &Rational) -> Rational {
        match self {
            GridAxis::Parameter => g.clone(),
            GridAxis::FlipProbability => rational::ratio(1, 2) - g,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Position {
    Inside,
    Above,
    Below,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanRow {
    pub grid_value: f64,
    pub order: usize,
    pub partial_sum: f64,
    pub lower_bound: f64,
    pub upper_bound: f64,
    pub position: Position,
}

impl ScanRow {
    pub fn inside(&self) -> bool {
        self.position == Position::Inside
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundsScan {
    pub regime: RegimeKind,
    pub axis: GridAxis,
    pub bound_n: usize,
    pub orders: Vec<usize>,
    /// Grid-major, then by order as requested.
    pub rows: Vec<ScanRow>,
}

impl BoundsScan {
    pub fn rows_for_order(&self, order: usize) -> impl Iterator<Item = &ScanRow> {
        self.rows.iter().filter(move |r| r.order == order)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanOptions {
    pub axis: GridAxis,
    pub backend: Backend,
    /// Block length of the `c_N`, `C_N` bounds.
    pub bound_n: usize,
    pub tolerance: f64,
}

impl Default for ScanOptions {
    fn default() -> Self {
        Self {
            axis: GridAxis::Parameter,
            backend: Backend::Float64,
            bound_n: 2,
            tolerance: DEFAULT_SCAN_TOLERANCE,
        }
    }
}

/// Partial sums of the rate series at each grid point against `[c_N, C_N]`.
pub fn bounds_scan(
    spec: &RegimeSpec,
    grid: &[Rational],
    orders: &[usize],
    opts: &ScanOptions,
) -> Result<BoundsScan, RadiusError> {
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(RadiusError::UnorderedGrid);
    }
    let k_max = orders.iter().copied().max().unwrap_or(0);
    let table = expansion::rate_series(spec, k_max, opts.backend)?;
    let coeffs = table.as_f64();
    let per_point: Vec<Vec<ScanRow>> = grid
        .par_iter()
        .map(|g| -> Result<Vec<ScanRow>, RadiusError> {
            let x = opts.axis.to_parameter(g);
            let model = spec.instantiate(&x)?;
            let bracket = entropy::entropy_rate_bracket(&model, opts.bound_n, Backend::Float64)?;
            let (lo, hi) = (bracket.lower.to_f64(), bracket.upper.to_f64());
            let xf = rational::to_f64(&x);
            Ok(orders
                .iter()
                .map(|&order| {
                    let s = coeffs[..=order].iter().rev().fold(0.0, |acc, c| acc * xf + c);
                    let position = if s > hi + opts.tolerance {
                        Position::Above
                    } else if s < lo - opts.tolerance {
                        Position::Below
                    } else {
                        Position::Inside
                    };
                    ScanRow {
                        grid_value: rational::to_f64(g),
                        order,
                        partial_sum: s,
                        lower_bound: lo,
                        upper_bound: hi,
                        position,
                    }
                })
                .collect())
        })
        .collect::<Result<_, _>>()?;
    Ok(BoundsScan {
        regime: spec.kind(),
        axis: opts.axis,
        bound_n: opts.bound_n,
        orders: orders.to_vec(),
        rows: per_point.into_iter().flatten().collect(),
    })
}

/// `steps` evenly spaced rationals from `start` to `stop` inclusive.
pub fn linear_grid(start: &Rational, stop: &Rational, steps: usize) -> Vec<Rational> {
    match steps {
        0 => Vec::new(),
        1 => vec![start.clone()],
        _ => {
            let h = (stop - start) / rational::int(steps as i64 - 1);
            (0..steps).map(|i| start + &h * rational::int(i as i64)).collect()
        }
    }
}
