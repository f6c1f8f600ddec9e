//! Finite-block entropies of the observation process.
//!
//! Every quantity comes from one depth-first walk of the observation tree.
//! A node at depth `n` carries the forward vector
//! `α_i = P(y_1..y_n, X_n = i)`; its children share the product `α·M`, so a
//! length-`N` traversal costs `O(s^N · s²)` jet operations.

use num_traits::Zero;
use rayon::prelude::*;
use thiserror::Error;

use crate::backend::{Backend, Value};
use crate::model::HmpModel;
use crate::rational::{self, Rational};
use crate::series::{Coefficient, ProbabilityJet, Scalar, SeriesError, TruncatedSeries};
use crate::with_backend;

pub const DEFAULT_DEPTH_CAP: usize = 14;

/// Roughly how many subtrees the traversal hands to the thread pool.
const PARALLEL_FRONTIER: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EntropyError {
    #[error("block length {n} exceeds the depth cap {cap}")]
    DepthCapExceeded { n: usize, cap: usize },
    #[error("block length {n} is too short; need at least {min}")]
    LengthTooShort { n: usize, min: usize },
    #[error("observable symbol {0} has zero marginal probability")]
    ZeroMarginal(usize),
    #[error(transparent)]
    Series(#[from] SeriesError),
}

pub type Matrix<J> = Vec<Vec<J>>;

/// Forward vector at a node of the observation tree.
#[derive(Debug, Clone)]
pub struct ForwardState<J> {
    pub alpha: Vec<J>,
    pub depth: usize,
}

/// Parameters of a (possibly site-dependent) forward recursion.
///
/// Site `n` (1-based) emits through `emissions[n - 1]` and is entered from
/// site `n - 1` through `transitions[n - 2]`; both lists are clamped at
/// their last element, so one-element lists describe a homogeneous chain.
#[derive(Debug, Clone)]
pub struct ForwardChain<J> {
    initial: Vec<J>,
    transitions: Vec<Matrix<J>>,
    emissions: Vec<Matrix<J>>,
}

impl<J: ProbabilityJet> ForwardChain<J> {
    pub fn new(initial: Vec<J>, transitions: Vec<Matrix<J>>, emissions: Vec<Matrix<J>>) -> Self {
        assert!(!transitions.is_empty() && !emissions.is_empty());
        Self {
            initial,
            transitions,
            emissions,
        }
    }

    pub fn alphabet_size(&self) -> usize {
        self.initial.len()
    }

    pub fn with_initial(&self, initial: Vec<J>) -> Self {
        Self {
            initial,
            ..self.clone()
        }
    }

    fn transition(&self, site: usize) -> &Matrix<J> {
        &self.transitions[(site - 2).min(self.transitions.len() - 1)]
    }

    fn emission(&self, site: usize) -> &Matrix<J> {
        &self.emissions[(site - 1).min(self.emissions.len() - 1)]
    }

    fn symbols(&self) -> usize {
        self.emissions[0][0].len()
    }

    /// Children of `state` as `(state, P(prefix))`, skipping identically
    /// zero branches.
    fn children(&self, state: &ForwardState<J>) -> Result<Vec<(ForwardState<J>, J)>, SeriesError> {
        let s = self.alphabet_size();
        let site = state.depth + 1;
        let carried: Vec<Option<J>> = if state.depth == 0 {
            state.alpha.iter().map(|a| nonzero(a.clone())).collect()
        } else {
            let m = self.transition(site);
            (0..s)
                .map(|j| {
                    let mut acc: Option<J> = None;
                    for (i, a) in state.alpha.iter().enumerate() {
                        if a.is_identically_zero() || m[i][j].is_identically_zero() {
                            continue;
                        }
                        let term = a.mul(&m[i][j])?;
                        acc = Some(match acc {
                            None => term,
                            Some(x) => x.add(&term)?,
                        });
                    }
                    Ok(acc.and_then(nonzero))
                })
                .collect::<Result<_, SeriesError>>()?
        };
        let r = self.emission(site);
        let mut out = Vec::with_capacity(self.symbols());
        for y in 0..self.symbols() {
            let mut alpha = Vec::with_capacity(s);
            let mut total: Option<J> = None;
            let mut zero: Option<J> = None;
            for (j, b) in carried.iter().enumerate() {
                let v = match b {
                    Some(b) if !r[j][y].is_identically_zero() => b.mul(&r[j][y])?,
                    _ => {
                        alpha.push(None);
                        continue;
                    }
                };
                total = Some(match total {
                    None => v.clone(),
                    Some(t) => t.add(&v)?,
                });
                alpha.push(Some(v));
            }
            let Some(total) = total.and_then(nonzero) else {
                continue;
            };
            let alpha = alpha
                .into_iter()
                .map(|a| {
                    a.unwrap_or_else(|| {
                        zero.get_or_insert_with(|| total.zero_like()).clone()
                    })
                })
                .collect();
            out.push((
                ForwardState {
                    alpha,
                    depth: site,
                },
                total,
            ));
        }
        Ok(out)
    }

    fn descend(
        &self,
        state: &ForwardState<J>,
        n: usize,
        acc: &mut [J::Entropy],
    ) -> Result<(), SeriesError> {
        if state.depth == n {
            return Ok(());
        }
        for (child, p) in self.children(state)? {
            let d = child.depth;
            acc[d - 1] = J::entropy_add(&acc[d - 1], &p.neg_p_log_p()?)?;
            self.descend(&child, n, acc)?;
        }
        Ok(())
    }

    /// `H_1..H_n` where `H_k = -Σ P(y_1..y_k) log P(y_1..y_k)`.
    ///
    /// With an initial vector that is not a distribution (e.g. `π_i e_i`) the
    /// sums run over the corresponding sub-probability measure.
    pub fn entropy_profile(&self, n: usize, cap: usize) -> Result<Vec<J::Entropy>, EntropyError> {
        if n > cap {
            return Err(EntropyError::DepthCapExceeded { n, cap });
        }
        if n == 0 {
            return Err(EntropyError::LengthTooShort { n, min: 1 });
        }
        let zero = self.initial[0].entropy_zero();
        let mut acc = vec![zero.clone(); n];
        let mut frontier = vec![ForwardState {
            alpha: self.initial.clone(),
            depth: 0,
        }];
        while frontier.len() < PARALLEL_FRONTIER && frontier[0].depth < n {
            let mut next = Vec::new();
            for state in &frontier {
                for (child, p) in self.children(state)? {
                    let d = child.depth;
                    acc[d - 1] = J::entropy_add(&acc[d - 1], &p.neg_p_log_p()?)?;
                    next.push(child);
                }
            }
            if next.is_empty() {
                return Ok(acc);
            }
            frontier = next;
        }
        let parts: Vec<Vec<J::Entropy>> = frontier
            .par_iter()
            .map(|state| {
                let mut part = vec![zero.clone(); n];
                self.descend(state, n, &mut part).map(|_| part)
            })
            .collect::<Result<_, _>>()?;
        // Reduce in frontier order so float results do not depend on scheduling.
        for part in parts {
            for (a, p) in acc.iter_mut().zip(&part) {
                *a = J::entropy_add(a, p)?;
            }
        }
        Ok(acc)
    }

    /// `Σ P(y_1..y_n)` over all length-`n` sequences.
    pub fn total_mass(&self, n: usize) -> Result<J, SeriesError> {
        let root = ForwardState {
            alpha: self.initial.clone(),
            depth: 0,
        };
        let mut level = vec![root];
        let mut total = self.initial[0].zero_like();
        for depth in 1..=n {
            let mut next = Vec::new();
            for state in &level {
                for (child, p) in self.children(state)? {
                    if depth == n {
                        total = total.add(&p)?;
                    }
                    next.push(child);
                }
            }
            level = next;
        }
        Ok(total)
    }

    /// `C_n = H_n - H_{n-1}` from a single traversal; `C_1 = H_1`.
    pub fn increment(&self, n: usize, cap: usize) -> Result<J::Entropy, EntropyError> {
        let h = self.entropy_profile(n, cap)?;
        if n == 1 {
            return Ok(h[0].clone());
        }
        Ok(J::entropy_sub(&h[n - 1], &h[n - 2])?)
    }

    /// `H(X_1, Y_1..Y_k)` for `k = 0..=n`, by running the traversal once per
    /// starting state with initial vector `π_i e_i`.
    pub fn joint_with_first_state_profile(&self, n: usize, cap: usize) -> Result<Vec<J::Entropy>, EntropyError> {
        let s = self.alphabet_size();
        let zero_jet = self.initial[0].zero_like();
        let mut total: Option<Vec<J::Entropy>> = None;
        for i in 0..s {
            if self.initial[i].is_identically_zero() {
                continue;
            }
            let mut init = vec![zero_jet.clone(); s];
            init[i] = self.initial[i].clone();
            let mut prof = vec![self.initial[i].neg_p_log_p()?];
            prof.extend(self.with_initial(init).entropy_profile(n, cap)?);
            total = Some(match total {
                None => prof,
                Some(t) => t
                    .iter()
                    .zip(&prof)
                    .map(|(a, b)| J::entropy_add(a, b))
                    .collect::<Result<_, _>>()?,
            });
        }
        Ok(total.expect("the initial distribution has positive mass"))
    }

    /// `c_n = H(X_1, Y_1..Y_n) - H(X_1, Y_1..Y_{n-1})`.
    pub fn lower_increment(&self, n: usize, cap: usize) -> Result<J::Entropy, EntropyError> {
        if n < 2 {
            return Err(EntropyError::LengthTooShort { n, min: 2 });
        }
        let h = self.joint_with_first_state_profile(n, cap)?;
        Ok(J::entropy_sub(&h[n], &h[n - 1])?)
    }
}

fn nonzero<J: ProbabilityJet>(j: J) -> Option<J> {
    (!j.is_identically_zero()).then_some(j)
}

/// Chain for a concrete model with order-0 jets over scalar `T`.
pub fn model_chain<T: Scalar>(model: &HmpModel, ctx: T::Ctx) -> ForwardChain<TruncatedSeries<T>> {
    let jet = |q: &Rational| TruncatedSeries::constant(T::from_rational(q, ctx), 0);
    let mat = |rows: &[Vec<Rational>]| -> Matrix<TruncatedSeries<T>> {
        rows.iter().map(|r| r.iter().map(jet).collect()).collect()
    };
    ForwardChain::new(
        model.stationary().iter().map(jet).collect(),
        vec![mat(model.transition().rows())],
        vec![mat(model.emission().rows())],
    )
}

fn scalar_of<T: Scalar>(series: TruncatedSeries<T::Log>) -> T::Log {
    series.into_coeffs().swap_remove(0)
}

fn profile<T: Scalar>(model: &HmpModel, n: usize, ctx: T::Ctx) -> Result<Vec<T::Log>, EntropyError> {
    Ok(model_chain::<T>(model, ctx)
        .entropy_profile(n, DEFAULT_DEPTH_CAP)?
        .into_iter()
        .map(scalar_of::<T>)
        .collect())
}

fn lower_profile<T: Scalar>(model: &HmpModel, n: usize, ctx: T::Ctx) -> Result<Vec<T::Log>, EntropyError> {
    Ok(model_chain::<T>(model, ctx)
        .joint_with_first_state_profile(n, DEFAULT_DEPTH_CAP)?
        .into_iter()
        .map(scalar_of::<T>)
        .collect())
}

/// `H([Y]_1^n)`.
pub fn finite_entropy(model: &HmpModel, n: usize, backend: Backend) -> Result<Value, EntropyError> {
    with_backend!(backend, T, ctx => {
        Ok(profile::<T>(model, n, ctx)?.swap_remove(n - 1).into())
    })
}

/// `C_n = H_n - H_{n-1}`, with `C_1 = H_1`.
pub fn conditional_increment(model: &HmpModel, n: usize, backend: Backend) -> Result<Value, EntropyError> {
    with_backend!(backend, T, ctx => {
        let h = profile::<T>(model, n, ctx)?;
        Ok(upper_from_profile(&h, n).into())
    })
}

/// `c_n = H(Y_n | X_1, [Y]_1^{n-1})`.
pub fn lower_bound(model: &HmpModel, n: usize, backend: Backend) -> Result<Value, EntropyError> {
    if n < 2 {
        return Err(EntropyError::LengthTooShort { n, min: 2 });
    }
    with_backend!(backend, T, ctx => {
        let h = lower_profile::<T>(model, n, ctx)?;
        Ok(h[n].sub(&h[n - 1]).into())
    })
}

fn upper_from_profile<L: Coefficient>(h: &[L], n: usize) -> L {
    if n == 1 {
        h[0].clone()
    } else {
        h[n - 1].sub(&h[n - 2])
    }
}

/// `C_2` from `F = Rᵗ diag(π) M R` and the marginal `πR`:
/// `C_2 = -Σ_ij F_ij log(F_ij / (πR)_i)`, row `i` indexing `Y_1`.
pub fn c2_closed_form(model: &HmpModel, backend: Backend) -> Result<Value, EntropyError> {
    let s = model.alphabet_size();
    let (m, r, pi) = (model.transition(), model.emission(), model.stationary());
    let marginal: Vec<Rational> = (0..s)
        .map(|i| (0..s).map(|a| &pi[a] * r.get(a, i)).sum())
        .collect();
    if let Some(i) = marginal.iter().position(Zero::is_zero) {
        return Err(EntropyError::ZeroMarginal(i));
    }
    let f = |i: usize, j: usize| -> Rational {
        let mut acc = rational::int(0);
        for a in 0..s {
            for b in 0..s {
                acc += r.get(a, i) * &pi[a] * m.get(a, b) * r.get(b, j);
            }
        }
        acc
    };
    with_backend!(backend, T, ctx => {
        let mut total = <T as Scalar>::Log::zero_value();
        for i in 0..s {
            let log_marg = Scalar::ln(&T::from_rational(&marginal[i], ctx))?;
            for j in 0..s {
                let fij = f(i, j);
                if fij.is_zero() {
                    continue;
                }
                let ft = T::from_rational(&fij, ctx);
                let term = ft.times_log(&Scalar::ln(&ft)?.sub(&log_marg));
                total = total.sub(&term);
            }
        }
        Ok(total.into())
    })
}

/// The sandwich `c_n ≤ H̄ ≤ C_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Bracket {
    pub lower: Value,
    pub upper: Value,
    pub midpoint: Value,
    pub half_gap: Value,
}

pub fn entropy_rate_bracket(model: &HmpModel, n: usize, backend: Backend) -> Result<Bracket, EntropyError> {
    if n < 2 {
        return Err(EntropyError::LengthTooShort { n, min: 2 });
    }
    with_backend!(backend, T, ctx => {
        let h = profile::<T>(model, n, ctx)?;
        let hx = lower_profile::<T>(model, n, ctx)?;
        let upper = upper_from_profile(&h, n);
        let lower = hx[n].sub(&hx[n - 1]);
        let half = rational::ratio(1, 2);
        Ok(Bracket {
            midpoint: upper.add(&lower).scale(&half).into(),
            half_gap: upper.sub(&lower).scale(&half).into(),
            lower: lower.into(),
            upper: upper.into(),
        })
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EntropyReport {
    pub n: usize,
    pub h: Value,
    pub upper: Value,
    /// `c_n`; absent for `n = 1`.
    pub lower: Option<Value>,
    pub backend: Backend,
}

/// Reports for `n = 1..=n_max` from two traversals.
pub fn entropy_reports(model: &HmpModel, n_max: usize, backend: Backend) -> Result<Vec<EntropyReport>, EntropyError> {
    with_backend!(backend, T, ctx => {
        let h = profile::<T>(model, n_max, ctx)?;
        let hx = if n_max >= 2 { lower_profile::<T>(model, n_max, ctx)? } else { Vec::new() };
        Ok((1..=n_max)
            .map(|n| EntropyReport {
                n,
                h: h[n - 1].clone().into(),
                upper: upper_from_profile(&h, n).into(),
                lower: (n >= 2).then(|| hx[n].sub(&hx[n - 1]).into()),
                backend,
            })
            .collect())
    })
}

/// `log P(y_1..y_n)` by the scaled forward recursion in double precision.
pub fn log_likelihood(model: &HmpModel, ys: &[usize]) -> f64 {
    let s = model.alphabet_size();
    let m: Vec<Vec<f64>> = model.transition().rows().iter().map(|r| r.iter().map(rational::to_f64).collect()).collect();
    let r: Vec<Vec<f64>> = model.emission().rows().iter().map(|r| r.iter().map(rational::to_f64).collect()).collect();
    let mut alpha: Vec<f64> = model.stationary().iter().map(rational::to_f64).collect();
    let mut ll = 0.0;
    for (t, &y) in ys.iter().enumerate() {
        if t > 0 {
            alpha = (0..s).map(|j| (0..s).map(|i| alpha[i] * m[i][j]).sum()).collect();
        }
        for (j, a) in alpha.iter_mut().enumerate() {
            *a *= r[j][y];
        }
        let norm: f64 = alpha.iter().sum();
        if norm == 0.0 {
            return f64::NEG_INFINITY;
        }
        ll += norm.ln();
        alpha.iter_mut().for_each(|a| *a /= norm);
    }
    ll
}
