use super::{Coefficient, ProbabilityJet, Scalar, SeriesError};
use crate::rational;

/// Multivariate polynomial truncated to the box `deg_i ≤ caps[i]`.
///
/// Coefficients are stored densely in mixed-radix order, variable 0 varying
/// fastest. The box is closed under taking smaller exponents, so products
/// and logarithms computed inside it are exact there.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiSeries<T> {
    caps: Vec<usize>,
    coeffs: Vec<T>,
}

impl<T: Coefficient> MultiSeries<T> {
    pub fn zeros(caps: &[usize]) -> Self {
        let len = caps.iter().map(|c| c + 1).product();
        Self {
            caps: caps.to_vec(),
            coeffs: vec![T::zero_value(); len],
        }
    }

    pub fn constant(c: T, caps: &[usize]) -> Self {
        let mut s = Self::zeros(caps);
        s.coeffs[0] = c;
        s
    }

    /// `c0 + c1·x_var`. A zero cap for `var` drops the linear term.
    pub fn linear(c0: T, c1: T, var: usize, caps: &[usize]) -> Self {
        let mut s = Self::constant(c0, caps);
        if caps[var] >= 1 {
            let mut idx = vec![0; caps.len()];
            idx[var] = 1;
            let at = s.linear_index(&idx);
            s.coeffs[at] = c1;
        }
        s
    }

    /// Builds from a univariate coefficient list in variable `var`.
    pub fn univariate(coeffs: &[T], var: usize, caps: &[usize]) -> Self {
        let mut s = Self::zeros(caps);
        for (k, c) in coeffs.iter().enumerate().take(caps[var] + 1) {
            let mut idx = vec![0; caps.len()];
            idx[var] = k;
            let at = s.linear_index(&idx);
            s.coeffs[at] = c.clone();
        }
        s
    }

    pub fn caps(&self) -> &[usize] {
        &self.caps
    }

    pub fn coeffs(&self) -> &[T] {
        &self.coeffs
    }

    pub fn coeff(&self, exponents: &[usize]) -> &T {
        &self.coeffs[self.linear_index(exponents)]
    }

    fn linear_index(&self, exponents: &[usize]) -> usize {
        assert_eq!(exponents.len(), self.caps.len());
        let mut idx = 0;
        let mut stride = 1;
        for (e, c) in exponents.iter().zip(&self.caps) {
            assert!(e <= c, "exponent {e} outside cap {c}");
            idx += e * stride;
            stride *= c + 1;
        }
        idx
    }

    fn exponents(&self, mut idx: usize) -> Vec<usize> {
        self.caps
            .iter()
            .map(|c| {
                let e = idx % (c + 1);
                idx /= c + 1;
                e
            })
            .collect()
    }

    fn check_caps(&self, rhs: &Self) -> Result<(), SeriesError> {
        if self.caps != rhs.caps {
            return Err(SeriesError::OrderMismatch(self.coeffs.len(), rhs.coeffs.len()));
        }
        Ok(())
    }

    pub fn is_identically_zero(&self) -> bool {
        self.coeffs.iter().all(Coefficient::is_zero_value)
    }

    pub fn add(&self, rhs: &Self) -> Result<Self, SeriesError> {
        self.check_caps(rhs)?;
        Ok(Self {
            caps: self.caps.clone(),
            coeffs: self.coeffs.iter().zip(&rhs.coeffs).map(|(a, b)| a.add(b)).collect(),
        })
    }

    pub fn sub(&self, rhs: &Self) -> Result<Self, SeriesError> {
        self.check_caps(rhs)?;
        Ok(Self {
            caps: self.caps.clone(),
            coeffs: self.coeffs.iter().zip(&rhs.coeffs).map(|(a, b)| a.sub(b)).collect(),
        })
    }

    pub fn neg(&self) -> Self {
        Self {
            caps: self.caps.clone(),
            coeffs: self.coeffs.iter().map(Coefficient::neg).collect(),
        }
    }

    pub fn mul(&self, rhs: &Self) -> Result<Self, SeriesError> {
        self.check_caps(rhs)?;
        let mut out = Self::zeros(&self.caps);
        self.convolve_into(&rhs.coeffs, &mut out.coeffs, |a, b| a.try_mul(b))?;
        Ok(out)
    }

    /// Accumulates the box-truncated product of `self` with `rhs` into `out`.
    fn convolve_into<U, V: Coefficient>(
        &self,
        rhs: &[U],
        out: &mut [V],
        mut prod: impl FnMut(&T, &U) -> Result<V, SeriesError>,
    ) -> Result<(), SeriesError>
    where
        U: Coefficient,
    {
        for (i, a) in self.coeffs.iter().enumerate() {
            if a.is_zero_value() {
                continue;
            }
            let ea = self.exponents(i);
            for (j, b) in rhs.iter().enumerate() {
                if b.is_zero_value() {
                    continue;
                }
                let eb = self.exponents(j);
                let sum: Vec<usize> = ea.iter().zip(&eb).map(|(x, y)| x + y).collect();
                if sum.iter().zip(&self.caps).any(|(s, c)| s > c) {
                    continue;
                }
                let at = self.linear_index(&sum);
                out[at] = out[at].add(&prod(a, b)?);
            }
        }
        Ok(())
    }
}

impl<T: Scalar> MultiSeries<T> {
    /// `log p` for a positive constant term.
    ///
    /// Uses the total-degree Euler operator `E = Σ x_i ∂/∂x_i`: from
    /// `q·E(L) = E(q)` with `q = p / c_0`, for every exponent `a` of total
    /// degree `|a| > 0`, `|a|·L_a = |a|·q_a - Σ_{0<b<a} |b|·L_b·q_{a-b}`.
    pub fn log_series(&self) -> Result<MultiSeries<T::Log>, SeriesError> {
        let c0 = &self.coeffs[0];
        if !c0.is_positive() {
            return Err(SeriesError::NonpositiveConstantTerm(c0.to_string()));
        }
        let q: Vec<T> = self.coeffs.iter().map(|c| c.div(c0)).collect();
        let mut l: Vec<T> = vec![T::zero_value(); q.len()];
        // Mixed-radix order visits every b ≤ a before a.
        for a in 1..q.len() {
            let ea = self.exponents(a);
            let deg_a: usize = ea.iter().sum();
            let mut acc = T::zero_value();
            for b in 1..a {
                let eb = self.exponents(b);
                if eb.iter().zip(&ea).any(|(x, y)| x > y) {
                    continue;
                }
                let deg_b: usize = eb.iter().sum();
                let diff: Vec<usize> = ea.iter().zip(&eb).map(|(x, y)| x - y).collect();
                let term = Scalar::mul(&l[b], &q[self.linear_index(&diff)]);
                acc = acc.add(&term.scale(&rational::int(deg_b as i64)));
            }
            l[a] = q[a].sub(&acc.scale(&rational::ratio(1, deg_a as i64)));
        }
        let mut coeffs: Vec<T::Log> = l.iter().map(Scalar::embed).collect();
        coeffs[0] = c0.ln()?;
        Ok(MultiSeries {
            caps: self.caps.clone(),
            coeffs,
        })
    }

    pub fn neg_p_log_p(&self) -> Result<MultiSeries<T::Log>, SeriesError> {
        let mut out = MultiSeries::<T::Log>::zeros(&self.caps);
        if self.is_identically_zero() {
            return Ok(out);
        }
        let l = self.log_series()?;
        self.convolve_into(&l.coeffs, &mut out.coeffs, |a, b| Ok(a.times_log(b)))?;
        Ok(out.neg())
    }
}

impl<T: Scalar> ProbabilityJet for MultiSeries<T> {
    type Entropy = MultiSeries<T::Log>;

    fn add(&self, rhs: &Self) -> Result<Self, SeriesError> {
        MultiSeries::add(self, rhs)
    }
    fn mul(&self, rhs: &Self) -> Result<Self, SeriesError> {
        MultiSeries::mul(self, rhs)
    }
    fn is_identically_zero(&self) -> bool {
        MultiSeries::is_identically_zero(self)
    }
    fn zero_like(&self) -> Self {
        MultiSeries::zeros(&self.caps)
    }
    fn neg_p_log_p(&self) -> Result<Self::Entropy, SeriesError> {
        MultiSeries::neg_p_log_p(self)
    }
    fn entropy_zero(&self) -> Self::Entropy {
        MultiSeries::zeros(&self.caps)
    }
    fn entropy_add(a: &Self::Entropy, b: &Self::Entropy) -> Result<Self::Entropy, SeriesError> {
        a.add(b)
    }
    fn entropy_sub(a: &Self::Entropy, b: &Self::Entropy) -> Result<Self::Entropy, SeriesError> {
        a.sub(b)
    }
}
