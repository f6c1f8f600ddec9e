//! Taylor coefficients of the entropy rate in the perturbation parameter.
//!
//! The forward traversal runs over jets: in the high-SNR regime each
//! emission factor is `δ_xy + ε·t_xy`, in the almost-memoryless regime each
//! transition factor is `1/s + δ·t_xy` and the initial vector is the series of
//! the stationary distribution of `U + δT`. The `k`-th coefficient of
//! `C_N = H_N - H_{N-1}` stops changing once `N ≥ ⌈(k+3)/2⌉`, so one traversal
//! at that depth yields the entropy-rate coefficients through order `k`.

use std::fmt;

use thiserror::Error;

use crate::backend::{Backend, Value};
use crate::entropy::{EntropyError, ForwardChain, Matrix, DEFAULT_DEPTH_CAP};
use crate::model::{self, ModelError, PerturbationMatrix, RegimeKind, RegimeSpec, StochasticMatrix};
use crate::rational::{self, Rational};
use crate::series::{
    Coefficient, LogLinearValue, MultiSeries, Scalar, SeriesError, TruncatedSeries,
};
use crate::with_backend;

/// Highest order the reference polynomials cover.
pub const REFERENCE_MAX_ORDER: usize = 13;
pub const DEFAULT_WEIGHT_CAP: usize = 4;
pub const MULTISITE_MAX_LENGTH: usize = 6;

/// Relative tolerance for float comparisons in settling verdicts.
pub const FLOAT_SETTLING_TOLERANCE: f64 = 1e-10;

pub const FORMAL_SERIES_NOTE: &str = "formal series (analyticity assumed)";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExpansionError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Entropy(#[from] EntropyError),
    #[error("order {k} exceeds the maximum {max}")]
    OrderTooHigh { k: usize, max: usize },
    #[error("derivative weight {weight} exceeds the cap {cap}")]
    WeightCapExceeded { weight: usize, cap: usize },
    #[error("chain length {n} is outside 1..={max}")]
    LengthOutOfRange { n: usize, max: usize },
}

impl From<SeriesError> for ExpansionError {
    fn from(e: SeriesError) -> Self {
        ExpansionError::Entropy(EntropyError::Series(e))
    }
}

/// Smallest `N` at which the order-`k` coefficient of `C_N` has settled.
pub fn settling_threshold(k: usize) -> usize {
    (k + 4) / 2
}

/// Traversal depth that settles every order up to `order`.
pub fn traversal_length(order: usize) -> usize {
    settling_threshold(order).max(2)
}

fn linear_matrix<T: Scalar>(
    base: &StochasticMatrix,
    t: &PerturbationMatrix,
    order: usize,
    ctx: T::Ctx,
) -> Matrix<TruncatedSeries<T>> {
    (0..base.size())
        .map(|i| {
            (0..base.size())
                .map(|j| {
                    TruncatedSeries::linear(
                        T::from_rational(base.get(i, j), ctx),
                        T::from_rational(t.get(i, j), ctx),
                        order,
                    )
                })
                .collect()
        })
        .collect()
}

fn constant_matrix<T: Scalar>(m: &StochasticMatrix, order: usize, ctx: T::Ctx) -> Matrix<TruncatedSeries<T>> {
    m.rows()
        .iter()
        .map(|r| {
            r.iter()
                .map(|q| TruncatedSeries::constant(T::from_rational(q, ctx), order))
                .collect()
        })
        .collect()
}

/// The jet-valued forward chain of a regime, truncated at `order`.
pub fn regime_chain<T: Scalar>(
    spec: &RegimeSpec,
    order: usize,
    ctx: T::Ctx,
) -> Result<ForwardChain<TruncatedSeries<T>>, ExpansionError> {
    let s = spec.alphabet_size();
    Ok(match spec {
        RegimeSpec::HighSnr { m, t } => {
            let pi = model::stationary_distribution(m)?;
            ForwardChain::new(
                pi.iter()
                    .map(|q| TruncatedSeries::constant(T::from_rational(q, ctx), order))
                    .collect(),
                vec![constant_matrix(m, order, ctx)],
                vec![linear_matrix(&StochasticMatrix::identity(s), t, order, ctx)],
            )
        }
        RegimeSpec::AlmostMemoryless { r, t } => {
            let u = StochasticMatrix::uniform(s);
            let pi = model::stationary_series(&u, t, order)?;
            let initial = (0..s)
                .map(|x| TruncatedSeries::new(pi.iter().map(|pk| T::from_rational(&pk[x], ctx)).collect()))
                .collect();
            ForwardChain::new(
                initial,
                vec![linear_matrix(&u, t, order, ctx)],
                vec![constant_matrix(r, order, ctx)],
            )
        }
    })
}

/// Jets of `C_1..C_{n_max}` from one traversal.
fn increments<T: Scalar>(
    spec: &RegimeSpec,
    n_max: usize,
    order: usize,
    ctx: T::Ctx,
) -> Result<Vec<TruncatedSeries<T::Log>>, ExpansionError> {
    let h = regime_chain::<T>(spec, order, ctx)?.entropy_profile(n_max, DEFAULT_DEPTH_CAP)?;
    let mut out = vec![h[0].clone()];
    for w in h.windows(2) {
        out.push(w[1].sub(&w[0])?);
    }
    Ok(out)
}

fn to_values<L: Coefficient + Into<Value>>(s: TruncatedSeries<L>) -> Vec<Value> {
    s.into_coeffs().into_iter().map(Into::into).collect()
}

/// Coefficients `C_n^{(0)}..C_n^{(order)}`.
pub fn increment_jet(spec: &RegimeSpec, n: usize, order: usize, backend: Backend) -> Result<Vec<Value>, ExpansionError> {
    if n < 2 {
        return Err(EntropyError::LengthTooShort { n, min: 2 }.into());
    }
    Ok(increment_table(spec, n, order, backend)?.swap_remove(n - 1))
}

/// Coefficients of `C_1..C_{n_max}` (row `n - 1` holds `C_n`).
pub fn increment_table(
    spec: &RegimeSpec,
    n_max: usize,
    order: usize,
    backend: Backend,
) -> Result<Vec<Vec<Value>>, ExpansionError> {
    with_backend!(backend, T, ctx => {
        Ok(increments::<T>(spec, n_max, order, ctx)?.into_iter().map(to_values).collect())
    })
}

/// `Σ P(y_1..y_n)` over all sequences as an exact series in the parameter.
pub fn probability_mass_jet(spec: &RegimeSpec, n: usize, order: usize) -> Result<TruncatedSeries<Rational>, ExpansionError> {
    Ok(regime_chain::<Rational>(spec, order, ())?.total_mass(n)?)
}

/// Entropy-rate coefficients through some order.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientTable {
    pub regime: RegimeKind,
    pub values: Vec<Value>,
    /// Per-order settling length `⌈(k+3)/2⌉`.
    pub thresholds: Vec<usize>,
    /// Depth of the traversal the values were read from; `None` for
    /// reference values.
    pub traversal_n: Option<usize>,
    pub backend: Backend,
}

impl CoefficientTable {
    pub fn order(&self) -> usize {
        self.values.len() - 1
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.values.iter().map(Value::to_f64).collect()
    }

    pub fn partial_sum(&self, x: f64, upto: usize) -> f64 {
        TruncatedSeries::new(self.as_f64()).partial_sum(x, upto)
    }

    pub fn note(&self) -> Option<&'static str> {
        (self.regime == RegimeKind::HighSnr).then_some(FORMAL_SERIES_NOTE)
    }
}

pub fn rate_series(spec: &RegimeSpec, order: usize, backend: Backend) -> Result<CoefficientTable, ExpansionError> {
    let n = traversal_length(order);
    let values = increment_jet(spec, n, order, backend)?;
    Ok(CoefficientTable {
        regime: spec.kind(),
        values,
        thresholds: (0..=order).map(settling_threshold).collect(),
        traversal_n: Some(n),
        backend,
    })
}

/// Whether two values agree: exact values componentwise, floats to a
/// relative tolerance with a unit floor on the scale.
pub fn values_agree(a: &Value, b: &Value, rel: f64) -> bool {
    match (a, b) {
        (Value::Exact(x), Value::Exact(y)) => x == y,
        _ => {
            let (x, y) = (a.to_f64(), b.to_f64());
            (x - y).abs() <= rel * x.abs().max(y.abs()).max(1.0)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SettlingRow {
    pub n: usize,
    pub value: Value,
    pub settled: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SettlingReport {
    pub k: usize,
    pub threshold: usize,
    pub rows: Vec<SettlingRow>,
    /// Smallest listed `N` from which every listed length agrees with the
    /// largest one.
    pub onset: usize,
}

impl SettlingReport {
    /// True when every listed `N` at or beyond the threshold has settled.
    pub fn consistent(&self) -> bool {
        self.rows.iter().all(|r| r.n < self.threshold || r.settled)
    }

    pub fn verdict(&self) -> String {
        if self.consistent() {
            format!("settled at N={} (theorem threshold {})", self.onset, self.threshold)
        } else {
            let bad: Vec<String> = self
                .rows
                .iter()
                .filter(|r| r.n >= self.threshold && !r.settled)
                .map(|r| r.n.to_string())
                .collect();
            format!(
                "not settled at N={} (theorem threshold {})",
                bad.join(","),
                self.threshold
            )
        }
    }
}

impl fmt::Display for SettlingReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.verdict())
    }
}

pub fn settling_check(spec: &RegimeSpec, k: usize, ns: &[usize], backend: Backend) -> Result<SettlingReport, ExpansionError> {
    let mut ns = ns.to_vec();
    ns.sort_unstable();
    ns.dedup();
    let Some(&n_max) = ns.last() else {
        return Err(EntropyError::LengthTooShort { n: 0, min: 2 }.into());
    };
    if let Some(&n) = ns.iter().find(|&&n| n < 2) {
        return Err(EntropyError::LengthTooShort { n, min: 2 }.into());
    }
    let table = increment_table(spec, n_max, k, backend)?;
    let reference = table[n_max - 1][k].clone();
    let rows: Vec<SettlingRow> = ns
        .iter()
        .map(|&n| {
            let value = table[n - 1][k].clone();
            SettlingRow {
                n,
                settled: values_agree(&value, &reference, FLOAT_SETTLING_TOLERANCE),
                value,
            }
        })
        .collect();
    let onset = rows
        .iter()
        .rposition(|r| !r.settled)
        .map_or(rows[0].n, |i| rows[i + 1].n);
    Ok(SettlingReport {
        k,
        threshold: settling_threshold(k),
        rows,
        onset,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FirstOrder {
    pub h0: Value,
    pub h1: Value,
}

fn ln_of<T: Scalar>(q: &Rational, ctx: T::Ctx) -> Result<T::Log, SeriesError> {
    Scalar::ln(&T::from_rational(q, ctx))
}

/// Closed-form orders 0 and 1 of the high-SNR expansion. With `D = diag(π)`:
///
/// `h0 = -Σ_ij π_i m_ij log m_ij`,
/// `h1 = Σ_i (πT)_i log π_i - Σ_ij (DMT + TᵗDM)_ij log(π_i m_ij)`.
pub fn first_order_high_snr(
    m: &StochasticMatrix,
    t: &PerturbationMatrix,
    backend: Backend,
) -> Result<FirstOrder, ExpansionError> {
    let s = m.size();
    let pi = model::stationary_distribution(m)?;
    let zero = rational::int(0);
    let pi_t: Vec<Rational> = (0..s).map(|i| (0..s).map(|k| &pi[k] * t.get(k, i)).sum()).collect();
    let a = |i: usize, j: usize| -> Rational {
        let mut acc = zero.clone();
        for k in 0..s {
            acc += &pi[i] * m.get(i, k) * t.get(k, j);
            acc += t.get(k, i) * &pi[k] * m.get(k, j);
        }
        acc
    };
    with_backend!(backend, T, ctx => {
        let mut h0 = <T as Scalar>::Log::zero_value();
        let mut h1 = <T as Scalar>::Log::zero_value();
        for i in 0..s {
            let log_pi = ln_of::<T>(&pi[i], ctx)?;
            h1 = h1.add(&T::from_rational(&pi_t[i], ctx).times_log(&log_pi));
            for j in 0..s {
                let log_m = ln_of::<T>(m.get(i, j), ctx)?;
                let w = &pi[i] * m.get(i, j);
                h0 = h0.sub(&T::from_rational(&w, ctx).times_log(&log_m));
                let aij = a(i, j);
                if aij != zero {
                    h1 = h1.sub(&T::from_rational(&aij, ctx).times_log(&log_pi.add(&log_m)));
                }
            }
        }
        Ok(FirstOrder { h0: h0.into(), h1: h1.into() })
    })
}

/// Closed-form orders 0 and 1 of the almost-memoryless expansion. With
/// `c = Rᵗξ` the column sums of `R` and `ψ = s⁻¹ ξᵗT` the first-order
/// stationary term:
///
/// `h0 = log s - s⁻¹ Σ_j c_j log c_j`, `h1 = -Σ_j (ψR)_j log c_j`.
pub fn first_order_am(
    r: &StochasticMatrix,
    t: &PerturbationMatrix,
    backend: Backend,
) -> Result<FirstOrder, ExpansionError> {
    let s = r.size();
    let c = r.column_sums();
    if let Some(col) = c.iter().position(|x| *x == rational::int(0)) {
        return Err(ModelError::ZeroColumnSum { col }.into());
    }
    let psi = model::stationary_first_order(t);
    let psi_r: Vec<Rational> = (0..s).map(|j| (0..s).map(|k| &psi[k] * r.get(k, j)).sum()).collect();
    let inv_s = rational::ratio(1, s as i64);
    with_backend!(backend, T, ctx => {
        let mut h0 = ln_of::<T>(&rational::int(s as i64), ctx)?;
        let mut h1 = <T as Scalar>::Log::zero_value();
        for j in 0..s {
            let log_c = ln_of::<T>(&c[j], ctx)?;
            h0 = h0.sub(&T::from_rational(&(&c[j] * &inv_s), ctx).times_log(&log_c));
            h1 = h1.sub(&T::from_rational(&psi_r[j], ctx).times_log(&log_c));
        }
        Ok(FirstOrder { h0: h0.into(), h1: h1.into() })
    })
}

/// Even-order coefficients of the known symmetric binary
/// almost-memoryless series, as `(prefactor, polynomial in μ² from the
/// constant term up)`. The `δ^{2k}` coefficient is `-μ⁴ · prefactor · poly(μ²)`.
const REFERENCE_POLYNOMIALS: [((i64, i64), &[i64]); 6] = [
    ((2, 1), &[1]),
    ((4, 3), &[6, -12, 7]),
    ((32, 15), &[15, -60, 120, -120, 46]),
    ((32, 21), &[84, -504, 1946, -4536, 5964, -4088, 1137]),
    ((512, 45), &[45, -360, 1980, -7560, 18990, -30120, 28800, -15120, 3346]),
    (
        (1024, 165),
        &[330, -3300, 24145, -135960, 532312, -1400960, 2465100, -2857360, 2091100, -874632, 159230],
    ),
];

/// Reference coefficients of the symmetric binary
/// almost-memoryless series at channel parameter `μ = 1 - 2ε`.
pub fn reference_series(mu: &Rational, order: usize) -> Result<CoefficientTable, ExpansionError> {
    if order > REFERENCE_MAX_ORDER {
        return Err(ExpansionError::OrderTooHigh {
            k: order,
            max: REFERENCE_MAX_ORDER,
        });
    }
    let mu2 = mu * mu;
    let mu4 = &mu2 * &mu2;
    let mut values = vec![Value::Exact(LogLinearValue::zero()); order + 1];
    values[0] = Value::Exact(LogLinearValue::log_prime(2, rational::int(1)));
    for (idx, ((num, den), poly)) in REFERENCE_POLYNOMIALS.iter().enumerate() {
        let k = 2 * (idx + 1);
        if k > order {
            break;
        }
        let p = poly.iter().rev().fold(rational::int(0), |acc, &c| acc * &mu2 + rational::int(c));
        let coef = -(&mu4 * rational::ratio(*num, *den) * p);
        values[k] = Value::Exact(LogLinearValue::from_rational(coef));
    }
    Ok(CoefficientTable {
        regime: RegimeKind::AlmostMemoryless,
        values,
        thresholds: (0..=order).map(settling_threshold).collect(),
        traversal_n: None,
        backend: Backend::Exact,
    })
}

/// Derivative orders `k_1..k_N`, one per site.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MultiSiteSpec {
    kvec: Vec<usize>,
}

impl MultiSiteSpec {
    pub fn new(kvec: Vec<usize>) -> Result<Self, ExpansionError> {
        Self::with_cap(kvec, DEFAULT_WEIGHT_CAP)
    }

    pub fn with_cap(kvec: Vec<usize>, weight_cap: usize) -> Result<Self, ExpansionError> {
        if kvec.is_empty() || kvec.len() > MULTISITE_MAX_LENGTH {
            return Err(ExpansionError::LengthOutOfRange {
                n: kvec.len(),
                max: MULTISITE_MAX_LENGTH,
            });
        }
        let weight = kvec.iter().sum();
        if weight > weight_cap {
            return Err(ExpansionError::WeightCapExceeded { weight, cap: weight_cap });
        }
        Ok(Self { kvec })
    }

    pub fn n(&self) -> usize {
        self.kvec.len()
    }

    pub fn weight(&self) -> usize {
        self.kvec.iter().sum()
    }

    pub fn kvec(&self) -> &[usize] {
        &self.kvec
    }

    /// `(0,..,0, k_1..k_N)` with `r` leading zeros.
    pub fn padded(&self, r: usize) -> Result<Self, ExpansionError> {
        let mut kvec = vec![0; r];
        kvec.extend(&self.kvec);
        Self::new(kvec)
    }
}

fn multi_linear<T: Scalar>(
    base: &StochasticMatrix,
    t: &PerturbationMatrix,
    var: usize,
    caps: &[usize],
    ctx: T::Ctx,
) -> Matrix<MultiSeries<T>> {
    (0..base.size())
        .map(|i| {
            (0..base.size())
                .map(|j| {
                    MultiSeries::linear(
                        T::from_rational(base.get(i, j), ctx),
                        T::from_rational(t.get(i, j), ctx),
                        var,
                        caps,
                    )
                })
                .collect()
        })
        .collect()
}

fn multi_constant<T: Scalar>(m: &StochasticMatrix, caps: &[usize], ctx: T::Ctx) -> Matrix<MultiSeries<T>> {
    m.rows()
        .iter()
        .map(|r| r.iter().map(|q| MultiSeries::constant(T::from_rational(q, ctx), caps)).collect())
        .collect()
}

/// Forward chain with one perturbation variable per site.
///
/// High-SNR: site `i` emits through `I + ε_i T`. Almost-memoryless: `δ_1`
/// sets the initial law (stationary for `U + δ_1 T`) and `δ_i`, `i ≥ 2`,
/// the transition into site `i`.
fn multisite_chain<T: Scalar>(
    spec: &RegimeSpec,
    caps: &[usize],
    ctx: T::Ctx,
) -> Result<ForwardChain<MultiSeries<T>>, ExpansionError> {
    let s = spec.alphabet_size();
    let n = caps.len();
    Ok(match spec {
        RegimeSpec::HighSnr { m, t } => {
            let pi = model::stationary_distribution(m)?;
            let id = StochasticMatrix::identity(s);
            ForwardChain::new(
                pi.iter().map(|q| MultiSeries::constant(T::from_rational(q, ctx), caps)).collect(),
                vec![multi_constant(m, caps, ctx)],
                (0..n).map(|i| multi_linear(&id, t, i, caps, ctx)).collect(),
            )
        }
        RegimeSpec::AlmostMemoryless { r, t } => {
            let u = StochasticMatrix::uniform(s);
            let pi = model::stationary_series(&u, t, caps[0])?;
            let initial = (0..s)
                .map(|x| {
                    let coeffs: Vec<T> = pi.iter().map(|pk| T::from_rational(&pk[x], ctx)).collect();
                    MultiSeries::univariate(&coeffs, 0, caps)
                })
                .collect();
            let transitions = if n >= 2 {
                (1..n).map(|i| multi_linear(&u, t, i, caps, ctx)).collect()
            } else {
                vec![multi_constant(&u, caps, ctx)]
            };
            ForwardChain::new(initial, transitions, vec![multi_constant(r, caps, ctx)])
        }
    })
}

/// `∂^ω F_N / ∂ε_1^{k_1}..∂ε_N^{k_N}` at the origin, where
/// `F_N = H(Z_1..Z_N) - H(Z_1..Z_{N-1})` with site-dependent parameters.
pub fn multisite_derivative(spec: &RegimeSpec, ms: &MultiSiteSpec, backend: Backend) -> Result<Value, ExpansionError> {
    let caps = ms.kvec();
    let n = ms.n();
    let factorial: Rational = caps
        .iter()
        .flat_map(|&k| 1..=k)
        .fold(rational::int(1), |acc, j| acc * rational::int(j as i64));
    with_backend!(backend, T, ctx => {
        let chain = multisite_chain::<T>(spec, caps, ctx)?;
        let f = chain.increment(n, DEFAULT_DEPTH_CAP)?;
        Ok(f.coeff(caps).scale(&factorial).into())
    })
}

/// `F_N` at concrete site parameters, one per site.
pub fn site_increment(spec: &RegimeSpec, params: &[Rational], backend: Backend) -> Result<Value, ExpansionError> {
    let n = params.len();
    if n == 0 || n > DEFAULT_DEPTH_CAP {
        return Err(ExpansionError::LengthOutOfRange { n, max: DEFAULT_DEPTH_CAP });
    }
    let s = spec.alphabet_size();
    let (initial, transitions, emissions) = match spec {
        RegimeSpec::HighSnr { m, t } => {
            let id = StochasticMatrix::identity(s);
            let emissions = params
                .iter()
                .map(|e| t.offset(&id, e, "R"))
                .collect::<Result<Vec<_>, _>>()?;
            (model::stationary_distribution(m)?, vec![m.clone()], emissions)
        }
        RegimeSpec::AlmostMemoryless { r, t } => {
            let u = StochasticMatrix::uniform(s);
            let ms = params
                .iter()
                .map(|d| t.offset(&u, d, "M"))
                .collect::<Result<Vec<_>, _>>()?;
            let pi = model::stationary_distribution(&ms[0])?;
            let transitions = if n >= 2 { ms[1..].to_vec() } else { vec![u] };
            (pi, transitions, vec![r.clone()])
        }
    };
    with_backend!(backend, T, ctx => {
        let jet = |q: &Rational| TruncatedSeries::constant(T::from_rational(q, ctx), 0);
        let mat = |m: &StochasticMatrix| -> Matrix<TruncatedSeries<T>> {
            m.rows().iter().map(|r| r.iter().map(jet).collect()).collect()
        };
        let chain = ForwardChain::new(
            initial.iter().map(jet).collect(),
            transitions.iter().map(mat).collect(),
            emissions.iter().map(mat).collect(),
        );
        let f = chain.increment(n, DEFAULT_DEPTH_CAP)?;
        Ok(f.coeffs()[0].clone().into())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::entropy;
    use crate::rational::{int, ratio};
    use proptest::prelude::*;

    fn ll(v: &Value) -> &LogLinearValue {
        v.as_exact().unwrap()
    }

    fn rat(q: Rational) -> Value {
        Value::Exact(LogLinearValue::from_rational(q))
    }

    fn log2() -> Value {
        Value::Exact(LogLinearValue::log_prime(2, int(1)))
    }

    fn am(eps: Rational) -> RegimeSpec {
        RegimeSpec::symmetric_binary_almost_memoryless(&eps).unwrap()
    }

    fn hs(p: Rational) -> RegimeSpec {
        RegimeSpec::symmetric_binary_high_snr(&p).unwrap()
    }

    fn mat(v: &[&[(i64, i64)]]) -> Vec<Vec<Rational>> {
        v.iter().map(|r| r.iter().map(|&(n, d)| ratio(n, d)).collect()).collect()
    }

    #[test]
    fn thresholds() {
        let got: Vec<usize> = (0..=13).map(settling_threshold).collect();
        assert_eq!(got, vec![2, 2, 3, 3, 4, 4, 5, 5, 6, 6, 7, 7, 8, 8]);
        assert_eq!(traversal_length(13), 8);
        assert_eq!(traversal_length(0), 2);
    }

    #[test]
    fn order_zero_reduces_to_unperturbed_process() {
        let p = ratio(1, 5);
        let model = hs(p.clone()).instantiate(&int(0)).unwrap();
        let hb = entropy::conditional_increment(&model, 2, Backend::Exact).unwrap();
        for n in [2, 3, 4] {
            assert_eq!(increment_jet(&hs(p.clone()), n, 3, Backend::Exact).unwrap()[0], hb);
            assert_eq!(increment_jet(&am(ratio(1, 5)), n, 3, Backend::Exact).unwrap()[0], log2());
        }
    }

    #[test]
    fn am_coefficients_vanish_for_uniform_channel() {
        let jet = increment_jet(&am(ratio(1, 2)), 4, 5, Backend::Exact).unwrap();
        assert_eq!(jet[0], log2());
        assert!(jet[1..].iter().all(Value::is_zero));
    }

    #[test]
    fn am_series_values() {
        let table = rate_series(&am(ratio(1, 5)), 13, Backend::Exact).unwrap();
        assert_eq!(table.traversal_n, Some(8));
        assert_eq!(table.thresholds.len(), 14);
        assert_eq!(table.values[2], rat(ratio(-162, 625)));
        assert!(table.note().is_none());
        for k in (1..=13).step_by(2) {
            assert!(table.values[k].is_zero(), "odd order {k}");
        }
        for k in 1..=13 {
            assert!(ll(&table.values[k]).is_rational(), "order {k}");
        }
        let table = rate_series(&am(int(0)), 4, Backend::Exact).unwrap();
        assert_eq!(table.values[4], rat(ratio(-4, 3)));
    }

    #[test]
    fn high_snr_tables_are_labeled_formal() {
        let table = rate_series(&hs(ratio(1, 5)), 2, Backend::Exact).unwrap();
        assert_eq!(table.note(), Some(FORMAL_SERIES_NOTE));
    }

    /// `H_b(1/2 - δ) = log 2 - Σ_k (2δ)^{2k} / (2k(2k-1))`.
    fn binary_entropy_coefficient(k: usize) -> Rational {
        let two_k = 2 * k as i64;
        -ratio(4i64.pow(k as u32), two_k * (two_k - 1))
    }

    #[test]
    fn reference_series_values() {
        let one = reference_series(&int(1), 13).unwrap();
        assert_eq!(one.values[0], log2());
        assert_eq!(one.values[6], rat(ratio(-32, 15)));
        for k in 1..=6 {
            assert_eq!(one.values[2 * k], rat(binary_entropy_coefficient(k)), "δ^{}", 2 * k);
            assert!(one.values[2 * k - 1].is_zero());
        }
        let zero = reference_series(&int(0), 13).unwrap();
        assert!(zero.values[1..].iter().all(Value::is_zero));
        let three_fifths = reference_series(&ratio(3, 5), 2).unwrap();
        assert_eq!(three_fifths.values[2], rat(ratio(-162, 625)));
        assert_eq!(
            reference_series(&int(1), 14),
            Err(ExpansionError::OrderTooHigh { k: 14, max: 13 })
        );
    }

    #[test]
    fn engine_matches_binary_entropy_expansion() {
        let table = rate_series(&am(int(0)), 6, Backend::Exact).unwrap();
        for k in 1..=3 {
            assert_eq!(table.values[2 * k], rat(binary_entropy_coefficient(k)));
        }
    }

    #[test]
    fn settling_verdicts() {
        let spec = hs(ratio(1, 5));
        let r = settling_check(&spec, 2, &[3, 4, 5], Backend::Exact).unwrap();
        assert_eq!(r.verdict(), "settled at N=3 (theorem threshold 3)");
        let r = settling_check(&spec, 3, &[3, 4, 5], Backend::Exact).unwrap();
        assert_eq!(r.verdict(), "settled at N=3 (theorem threshold 3)");
        let r = settling_check(&spec, 0, &[2, 3], Backend::Exact).unwrap();
        assert_eq!(r.verdict(), "settled at N=2 (theorem threshold 2)");
        let r = settling_check(&spec, 4, &[2, 3, 4, 5, 6], Backend::Float64).unwrap();
        assert!(r.consistent());
        assert!(r.onset <= 4);
        assert!(!r.rows[0].settled);
    }

    #[test]
    fn first_order_high_snr_examples() {
        let m = StochasticMatrix::new("M", mat(&[&[(4, 5), (1, 5)], &[(1, 5), (4, 5)]])).unwrap();
        let t = PerturbationMatrix::new("T", mat(&[&[(-1, 1), (1, 1)], &[(1, 1), (-1, 1)]])).unwrap();
        let fo = first_order_high_snr(&m, &t, Backend::Exact).unwrap();
        let jet = rate_series(&hs(ratio(1, 5)), 1, Backend::Exact).unwrap();
        assert_eq!(fo.h0, jet.values[0]);
        assert_eq!(fo.h1, jet.values[1]);
        assert!((fo.h0.to_f64() - 0.5004024235).abs() < 1e-10);
        let zero = first_order_high_snr(&m, &PerturbationMatrix::zero(2), Backend::Exact).unwrap();
        assert!(zero.h1.is_zero());
    }

    #[test]
    fn first_order_am_examples() {
        let spec = am(ratio(1, 5));
        let RegimeSpec::AlmostMemoryless { r, t } = &spec else { unreachable!() };
        let fo = first_order_am(r, t, Backend::Exact).unwrap();
        assert_eq!(fo.h0, log2());
        assert!(fo.h1.is_zero());

        let t = PerturbationMatrix::new("T", mat(&[&[(1, 1), (-1, 1)], &[(0, 1), (0, 1)]])).unwrap();
        let id = RegimeSpec::almost_memoryless(StochasticMatrix::identity(2), t.clone()).unwrap();
        let fo = first_order_am(&StochasticMatrix::identity(2), &t, Backend::Exact).unwrap();
        let jet = rate_series(&id, 1, Backend::Exact).unwrap();
        assert_eq!((fo.h0, fo.h1), (jet.values[0].clone(), jet.values[1].clone()));

        let r = StochasticMatrix::new("R", mat(&[&[(2, 3), (1, 3)], &[(1, 4), (3, 4)]])).unwrap();
        let spec = RegimeSpec::almost_memoryless(r.clone(), t.clone()).unwrap();
        let fo = first_order_am(&r, &t, Backend::Exact).unwrap();
        let jet = rate_series(&spec, 1, Backend::Exact).unwrap();
        assert!(!fo.h1.is_zero());
        assert_eq!(fo.h1, jet.values[1]);
    }

    #[test]
    fn probability_mass_is_unit_series() {
        let one = TruncatedSeries::constant(int(1), 6);
        for spec in [hs(ratio(1, 5)), am(ratio(1, 5))] {
            for n in 1..=6 {
                assert_eq!(probability_mass_jet(&spec, n, 6).unwrap(), one);
            }
        }
    }

    #[test]
    fn single_site_padding_changes_the_derivative() {
        // F_1^{(1)} = -Σ_j (πT)_j log π_j, while F_2^{(0,1)} with X_1 observed
        // is -Σ_i π_i Σ_j (m_i T)_j log m_ij.
        let m = StochasticMatrix::new("M", mat(&[&[(1, 2), (1, 2)], &[(1, 3), (2, 3)]])).unwrap();
        let t = PerturbationMatrix::new("T", mat(&[&[(-1, 1), (1, 1)], &[(2, 1), (-2, 1)]])).unwrap();
        let pi = model::stationary_distribution(&m).unwrap();
        let ln = |q: &Rational| LogLinearValue::ln_of(q).unwrap();
        let mut one_site = LogLinearValue::zero();
        let mut padded = LogLinearValue::zero();
        for j in 0..2 {
            let pit: Rational = (0..2).map(|i| &pi[i] * t.get(i, j)).sum();
            one_site = one_site.minus(&ln(&pi[j]).scaled(&pit));
            for i in 0..2 {
                let mt: Rational = (0..2).map(|k| m.get(i, k) * t.get(k, j)).sum();
                padded = padded.minus(&ln(m.get(i, j)).scaled(&(&pi[i] * mt)));
            }
        }
        let spec = RegimeSpec::high_snr(m, t).unwrap();
        let base = MultiSiteSpec::new(vec![1]).unwrap();
        let a = multisite_derivative(&spec, &base, Backend::Exact).unwrap();
        let b = multisite_derivative(&spec, &base.padded(1).unwrap(), Backend::Exact).unwrap();
        assert_eq!(ll(&a), &one_site);
        assert_eq!(ll(&b), &padded);
        assert_ne!(a, b);
        // One more site restores the invariance.
        let two = MultiSiteSpec::new(vec![1, 1]).unwrap();
        let c = multisite_derivative(&spec, &two, Backend::Exact).unwrap();
        assert_eq!(c, multisite_derivative(&spec, &two.padded(2).unwrap(), Backend::Exact).unwrap());
    }

    #[test]
    fn multisite_identities() {
        let spec = hs(ratio(1, 5));
        let hole = MultiSiteSpec::new(vec![1, 0, 1, 0]).unwrap();
        assert!(multisite_derivative(&spec, &hole, Backend::Exact).unwrap().is_zero());

        let short = MultiSiteSpec::new(vec![0, 2]).unwrap();
        let a = multisite_derivative(&spec, &short, Backend::Exact).unwrap();
        let b = multisite_derivative(&spec, &short.padded(2).unwrap(), Backend::Exact).unwrap();
        assert_eq!(a, b);
        assert!(!a.is_zero());

        let model = spec.instantiate(&int(0)).unwrap();
        let bare = entropy::conditional_increment(&model, 2, Backend::Exact).unwrap();
        for n in 2..=4 {
            let zero = MultiSiteSpec::new(vec![0; n]).unwrap();
            assert_eq!(multisite_derivative(&spec, &zero, Backend::Exact).unwrap(), bare);
            assert_eq!(multisite_derivative(&am(ratio(1, 5)), &zero, Backend::Exact).unwrap(), log2());
        }
        assert_eq!(
            MultiSiteSpec::new(vec![2, 2, 1]),
            Err(ExpansionError::WeightCapExceeded { weight: 5, cap: 4 })
        );
        assert!(matches!(MultiSiteSpec::new(vec![0; 7]), Err(ExpansionError::LengthOutOfRange { .. })));
    }

    #[test]
    fn multisite_diagonal_sum_recovers_increment() {
        // C_N^{(k)} = Σ_{ω(k⃗)=k} F_N^{k⃗} / ∏ k_i! · k! for the Taylor coefficient.
        let spec = hs(ratio(1, 5));
        let n = 3;
        let jet = increment_jet(&spec, n, 2, Backend::Exact).unwrap();
        let mut total = LogLinearValue::zero();
        for a in 0..=2usize {
            for b in 0..=2 - a {
                let c = 2 - a - b;
                let f = multisite_derivative(&spec, &MultiSiteSpec::new(vec![a, b, c]).unwrap(), Backend::Exact).unwrap();
                let fact = |k: usize| int((1..=k as i64).product::<i64>().max(1));
                total = total.plus(&ll(&f).scaled(&(int(1) / (fact(a) * fact(b) * fact(c)))));
            }
        }
        assert_eq!(&total, ll(&jet[2]));
    }

    #[test]
    fn blocking() {
        let spec = hs(ratio(1, 5));
        let eps = [ratio(1, 7), ratio(1, 9), int(0), ratio(1, 5), ratio(1, 11)];
        let full = site_increment(&spec, &eps, Backend::Exact).unwrap();
        let tail = site_increment(&spec, &eps[2..], Backend::Exact).unwrap();
        assert_eq!(full, tail);
        let ff = site_increment(&spec, &eps, Backend::Float64).unwrap().to_f64();
        assert!((ff - tail.to_f64()).abs() <= 1e-10 * ff.abs());
    }

    #[test]
    fn site_increment_with_equal_sites_is_the_increment() {
        let spec = hs(ratio(1, 5));
        let model = spec.instantiate(&ratio(1, 5)).unwrap();
        let f = site_increment(&spec, &vec![ratio(1, 5); 4], Backend::Exact).unwrap();
        assert_eq!(f, entropy::conditional_increment(&model, 4, Backend::Exact).unwrap());
        let spec = am(ratio(1, 5));
        let model = spec.instantiate(&ratio(1, 10)).unwrap();
        let f = site_increment(&spec, &vec![ratio(1, 10); 3], Backend::Exact).unwrap();
        assert_eq!(f, entropy::conditional_increment(&model, 3, Backend::Exact).unwrap());
    }

    #[test]
    fn backends_agree_on_coefficients() {
        for spec in [hs(ratio(1, 5)), am(ratio(1, 5))] {
            let e = rate_series(&spec, 13, Backend::Exact).unwrap();
            let f = rate_series(&spec, 13, Backend::Float64).unwrap();
            let b = rate_series(&spec, 13, Backend::BigFloat(160)).unwrap();
            for k in 0..=13 {
                assert!(values_agree(&e.values[k], &f.values[k], 1e-10), "k={k}");
                assert!(values_agree(&e.values[k], &b.values[k], 1e-30), "k={k}");
            }
        }
    }

    fn weights(s: usize, lo: i64) -> impl Strategy<Value = Vec<Vec<i64>>> {
        prop::collection::vec(prop::collection::vec(lo..9i64, s), s)
    }

    fn stochastic(w: &[Vec<i64>], name: &str) -> StochasticMatrix {
        let rows = w
            .iter()
            .map(|row| {
                let tot: i64 = row.iter().sum();
                row.iter().map(|&x| ratio(x, tot)).collect()
            })
            .collect();
        StochasticMatrix::new(name, rows).unwrap()
    }

    fn high_snr_t(w: &[Vec<i64>]) -> PerturbationMatrix {
        let s = w.len();
        let rows = (0..s)
            .map(|i| {
                let mut row: Vec<Rational> = (0..s).map(|j| if i == j { int(0) } else { ratio(w[i][j] + 1, 4) }).collect();
                let sum: Rational = row.iter().sum();
                row[i] = -sum;
                row
            })
            .collect();
        PerturbationMatrix::new("T", rows).unwrap()
    }

    fn am_t(w: &[Vec<i64>]) -> PerturbationMatrix {
        let s = w.len();
        let rows = (0..s)
            .map(|i| {
                let mut row: Vec<Rational> = (0..s).map(|j| ratio(w[i][j] - 4, 3)).collect();
                let sum: Rational = row.iter().sum();
                row[s - 1] -= sum;
                row
            })
            .collect();
        PerturbationMatrix::new("T", rows).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]

        #[test]
        fn closed_forms_match_jets(
            (wm, wr, wt) in (2usize..=3).prop_flat_map(|s| (weights(s, 1), weights(s, 0), weights(s, 0)))
        ) {
            let wr: Vec<Vec<i64>> = wr.into_iter().map(|mut r| { r[0] += 1; r }).collect();
            let m = stochastic(&wm, "M");
            let t = high_snr_t(&wt);
            let fo = first_order_high_snr(&m, &t, Backend::Exact).unwrap();
            let jet = rate_series(&RegimeSpec::high_snr(m, t).unwrap(), 1, Backend::Exact).unwrap();
            prop_assert_eq!(&fo.h0, &jet.values[0]);
            prop_assert_eq!(&fo.h1, &jet.values[1]);

            let r = stochastic(&wr, "R");
            let t = am_t(&wt);
            let fo = first_order_am(&r, &t, Backend::Exact).unwrap();
            let jet = rate_series(&RegimeSpec::almost_memoryless(r, t).unwrap(), 1, Backend::Exact).unwrap();
            prop_assert_eq!(&fo.h0, &jet.values[0]);
            prop_assert_eq!(&fo.h1, &jet.values[1]);
        }

        #[test]
        fn coefficients_settle(wm in weights(2, 1), wt in weights(2, 0)) {
            let spec = RegimeSpec::high_snr(stochastic(&wm, "M"), high_snr_t(&wt)).unwrap();
            let table = increment_table(&spec, 6, 4, Backend::Exact).unwrap();
            for k in 0..=4 {
                for n in settling_threshold(k)..6 {
                    prop_assert_eq!(&table[n - 1][k], &table[5][k], "k={} n={}", k, n);
                }
            }
        }
    }
}
