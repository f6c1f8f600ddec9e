//! Hidden Markov process parameterizations.
//!
//! Distribution vectors are row vectors throughout: `π` satisfies `π M = π`,
//! and `M[i][j] = P(X_{n+1} = j | X_n = i)`, `R[i][y] = P(Y_n = y | X_n = i)`.

use std::fmt;

use num_traits::{One, Signed, Zero};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::rational::{self, Rational};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("alphabet size must be at least 2, got {0}")]
    AlphabetTooSmall(usize),
    #[error("{matrix}: expected {expected} entries in {what}, got {got}")]
    DimensionMismatch {
        matrix: String,
        what: String,
        expected: usize,
        got: usize,
    },
    #[error("{matrix}: row {row} sums to {sum}, expected {expected}")]
    RowSumViolation {
        matrix: String,
        row: usize,
        sum: Rational,
        expected: Rational,
    },
    #[error("{matrix}: negative entry at ({row}, {col})")]
    NegativeEntry { matrix: String, row: usize, col: usize },
    #[error("{matrix}: zero entry at ({row}, {col}) but the transition matrix must be strictly positive")]
    NotStrictlyPositive { matrix: String, row: usize, col: usize },
    #[error("{matrix}: entry ({row}, {col}) has the wrong sign for a high-SNR perturbation")]
    PerturbationSign { matrix: String, row: usize, col: usize },
    #[error("emission column {col} sums to zero; symbol {col} is never observed")]
    ZeroColumnSum { col: usize },
    #[error("parameter {value} is out of range: {reason}")]
    OutOfRange { value: Rational, reason: String },
    #[error("singular linear system")]
    SingularSystem,
}

/// A square matrix of rationals with every row summing to exactly 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StochasticMatrix {
    rows: Vec<Vec<Rational>>,
    strictly_positive: bool,
}

impl StochasticMatrix {
    /// `name` labels the matrix in error messages.
    pub fn new(name: &str, rows: Vec<Vec<Rational>>) -> Result<Self, ModelError> {
        check_square(name, &rows)?;
        let one = Rational::one();
        for (i, row) in rows.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                if v.is_negative() {
                    return Err(ModelError::NegativeEntry {
                        matrix: name.into(),
                        row: i,
                        col: j,
                    });
                }
            }
            let sum: Rational = row.iter().sum();
            if sum != one {
                return Err(ModelError::RowSumViolation {
                    matrix: name.into(),
                    row: i,
                    sum,
                    expected: one,
                });
            }
        }
        let strictly_positive = rows.iter().flatten().all(Signed::is_positive);
        Ok(Self {
            rows,
            strictly_positive,
        })
    }

    pub fn identity(s: usize) -> Self {
        let rows = (0..s)
            .map(|i| {
                (0..s)
                    .map(|j| if i == j { Rational::one() } else { Rational::zero() })
                    .collect()
            })
            .collect();
        Self::new("I", rows).expect("identity is stochastic")
    }

    pub fn uniform(s: usize) -> Self {
        let u = rational::ratio(1, s as i64);
        Self::new("U", vec![vec![u; s]; s]).expect("uniform is stochastic")
    }

    pub fn size(&self) -> usize {
        self.rows.len()
    }

    pub fn get(&self, i: usize, j: usize) -> &Rational {
        &self.rows[i][j]
    }

    pub fn rows(&self) -> &[Vec<Rational>] {
        &self.rows
    }

    pub fn is_strictly_positive(&self) -> bool {
        self.strictly_positive
    }

    pub fn column_sums(&self) -> Vec<Rational> {
        (0..self.size())
            .map(|j| self.rows.iter().map(|r| &r[j]).sum())
            .collect()
    }
}

/// A square matrix of rationals with every row summing to exactly 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PerturbationMatrix {
    rows: Vec<Vec<Rational>>,
}

impl PerturbationMatrix {
    pub fn new(name: &str, rows: Vec<Vec<Rational>>) -> Result<Self, ModelError> {
        check_square(name, &rows)?;
        for (i, row) in rows.iter().enumerate() {
            let sum: Rational = row.iter().sum();
            if !sum.is_zero() {
                return Err(ModelError::RowSumViolation {
                    matrix: name.into(),
                    row: i,
                    sum,
                    expected: Rational::zero(),
                });
            }
        }
        Ok(Self { rows })
    }

    pub fn zero(s: usize) -> Self {
        Self {
            rows: vec![vec![Rational::zero(); s]; s],
        }
    }

    pub fn size(&self) -> usize {
        self.rows.len()
    }

    pub fn get(&self, i: usize, j: usize) -> &Rational {
        &self.rows[i][j]
    }

    pub fn rows(&self) -> &[Vec<Rational>] {
        &self.rows
    }

    /// High-SNR sign pattern: `t_ii < 0` and `t_ij ≥ 0` off the diagonal.
    pub fn check_high_snr_signs(&self, name: &str) -> Result<(), ModelError> {
        for (i, row) in self.rows.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                let ok = if i == j { v.is_negative() } else { !v.is_negative() };
                if !ok {
                    return Err(ModelError::PerturbationSign {
                        matrix: name.into(),
                        row: i,
                        col: j,
                    });
                }
            }
        }
        Ok(())
    }

    /// `base + value·T`, validated as a stochastic matrix.
    pub fn offset(&self, base: &StochasticMatrix, value: &Rational, name: &str) -> Result<StochasticMatrix, ModelError> {
        let rows = base
            .rows()
            .iter()
            .zip(&self.rows)
            .map(|(b, t)| b.iter().zip(t).map(|(x, y)| x + value * y).collect())
            .collect();
        StochasticMatrix::new(name, rows).map_err(|e| ModelError::OutOfRange {
            value: value.clone(),
            reason: e.to_string(),
        })
    }
}

fn check_square(name: &str, rows: &[Vec<Rational>]) -> Result<(), ModelError> {
    let s = rows.len();
    if s < 2 {
        return Err(ModelError::AlphabetTooSmall(s));
    }
    for (i, row) in rows.iter().enumerate() {
        if row.len() != s {
            return Err(ModelError::DimensionMismatch {
                matrix: name.into(),
                what: format!("row {i}"),
                expected: s,
                got: row.len(),
            });
        }
    }
    Ok(())
}

/// A validated hidden Markov process: strictly positive transitions `M`,
/// emissions `R`, and the exact stationary distribution of `M`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HmpModel {
    m: StochasticMatrix,
    r: StochasticMatrix,
    pi: Vec<Rational>,
}

impl HmpModel {
    pub fn transition(&self) -> &StochasticMatrix {
        &self.m
    }

    pub fn emission(&self) -> &StochasticMatrix {
        &self.r
    }

    pub fn stationary(&self) -> &[Rational] {
        &self.pi
    }

    pub fn alphabet_size(&self) -> usize {
        self.m.size()
    }
}

pub fn validate_model(m: StochasticMatrix, r: StochasticMatrix) -> Result<HmpModel, ModelError> {
    if m.size() != r.size() {
        return Err(ModelError::DimensionMismatch {
            matrix: "R".into(),
            what: "rows".into(),
            expected: m.size(),
            got: r.size(),
        });
    }
    if !m.is_strictly_positive() {
        let (row, col) = first_zero(&m);
        return Err(ModelError::NotStrictlyPositive {
            matrix: "M".into(),
            row,
            col,
        });
    }
    let pi = stationary_distribution(&m)?;
    Ok(HmpModel { m, r, pi })
}

fn first_zero(m: &StochasticMatrix) -> (usize, usize) {
    for (i, row) in m.rows().iter().enumerate() {
        if let Some(j) = row.iter().position(Zero::is_zero) {
            return (i, j);
        }
    }
    (0, 0)
}

/// Exact stationary distribution: solves `(Mᵗ - I) π = 0` with the last
/// equation replaced by `Σ π_i = 1`.
pub fn stationary_distribution(m: &StochasticMatrix) -> Result<Vec<Rational>, ModelError> {
    let s = m.size();
    let mut a: Vec<Vec<Rational>> = (0..s)
        .map(|i| {
            (0..s)
                .map(|j| {
                    let v = m.get(j, i).clone();
                    if i == j {
                        v - Rational::one()
                    } else {
                        v
                    }
                })
                .collect()
        })
        .collect();
    let mut b = vec![Rational::zero(); s];
    a[s - 1] = vec![Rational::one(); s];
    b[s - 1] = Rational::one();
    solve_linear(a, b).ok_or(ModelError::SingularSystem)
}

/// Taylor coefficients of the stationary distribution of `base + x·T`
/// around `x = 0`, orders `0..=order`.
///
/// Matching powers of `x` in `π(x)(base + xT) = π(x)` gives
/// `π_k (I - base) = π_{k-1} T` with `Σ π_k = 0` for `k ≥ 1`.
pub fn stationary_series(
    base: &StochasticMatrix,
    t: &PerturbationMatrix,
    order: usize,
) -> Result<Vec<Vec<Rational>>, ModelError> {
    let s = base.size();
    let mut out = vec![stationary_distribution(base)?];
    for k in 1..=order {
        let prev = &out[k - 1];
        // Rows of the transposed system: Σ_i π_i (δ_ij - base_ij) = (π_{k-1} T)_j
        let mut a: Vec<Vec<Rational>> = (0..s)
            .map(|j| {
                (0..s)
                    .map(|i| {
                        let d = if i == j { Rational::one() } else { Rational::zero() };
                        d - base.get(i, j)
                    })
                    .collect()
            })
            .collect();
        let mut b: Vec<Rational> = (0..s)
            .map(|j| (0..s).map(|i| &prev[i] * t.get(i, j)).sum())
            .collect();
        a[s - 1] = vec![Rational::one(); s];
        b[s - 1] = Rational::zero();
        out.push(solve_linear(a, b).ok_or(ModelError::SingularSystem)?);
    }
    Ok(out)
}

/// First-order term `ψ` of the stationary distribution of `U + δT`.
///
/// Solves `ψ (I - U) = s⁻¹ ξᵗ T` (ξ the all-ones vector) under `Σ ψ_i = 0`.
pub fn stationary_first_order(t: &PerturbationMatrix) -> Vec<Rational> {
    let s = t.size();
    let inv_s = rational::ratio(1, s as i64);
    let rhs: Vec<Rational> = (0..s)
        .map(|j| (0..s).map(|i| t.get(i, j)).sum::<Rational>() * &inv_s)
        .collect();
    let mut a: Vec<Vec<Rational>> = (0..s)
        .map(|j| {
            (0..s)
                .map(|i| {
                    let d = if i == j { Rational::one() } else { Rational::zero() };
                    d - &inv_s
                })
                .collect()
        })
        .collect();
    let mut b = rhs;
    a[s - 1] = vec![Rational::one(); s];
    b[s - 1] = Rational::zero();
    solve_linear(a, b).expect("I - U has rank s - 1 and the sum row completes it")
}

/// Gaussian elimination over the rationals. `None` when singular.
pub(crate) fn solve_linear(mut a: Vec<Vec<Rational>>, mut b: Vec<Rational>) -> Option<Vec<Rational>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).find(|&r| !a[r][col].is_zero())?;
        a.swap(col, pivot);
        b.swap(col, pivot);
        for r in 0..n {
            if r == col || a[r][col].is_zero() {
                continue;
            }
            let f = &a[r][col] / &a[col][col];
            for c in col..n {
                let delta = &f * &a[col][c];
                a[r][c] -= delta;
            }
            let delta = &f * &b[col];
            b[r] -= delta;
        }
    }
    Some((0..n).map(|i| &b[i] / &a[i][i]).collect())
}

/// Which matrix a regime perturbs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegimeKind {
    HighSnr,
    AlmostMemoryless,
}

impl fmt::Display for RegimeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RegimeKind::HighSnr => "high-snr",
            RegimeKind::AlmostMemoryless => "almost-memoryless",
        })
    }
}

/// A one-parameter family of models.
///
/// * `HighSnr`: fixed `M`, emissions `R(ε) = I + εT`.
/// * `AlmostMemoryless`: fixed `R`, transitions `M(δ) = U + δT`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RegimeSpec {
    HighSnr {
        m: StochasticMatrix,
        t: PerturbationMatrix,
    },
    AlmostMemoryless {
        r: StochasticMatrix,
        t: PerturbationMatrix,
    },
}

impl RegimeSpec {
    pub fn high_snr(m: StochasticMatrix, t: PerturbationMatrix) -> Result<Self, ModelError> {
        if m.size() != t.size() {
            return Err(ModelError::DimensionMismatch {
                matrix: "T".into(),
                what: "rows".into(),
                expected: m.size(),
                got: t.size(),
            });
        }
        if !m.is_strictly_positive() {
            let (row, col) = first_zero(&m);
            return Err(ModelError::NotStrictlyPositive {
                matrix: "M".into(),
                row,
                col,
            });
        }
        t.check_high_snr_signs("T")?;
        Ok(RegimeSpec::HighSnr { m, t })
    }

    pub fn almost_memoryless(r: StochasticMatrix, t: PerturbationMatrix) -> Result<Self, ModelError> {
        if r.size() != t.size() {
            return Err(ModelError::DimensionMismatch {
                matrix: "T".into(),
                what: "rows".into(),
                expected: r.size(),
                got: t.size(),
            });
        }
        if let Some(col) = r.column_sums().iter().position(Zero::is_zero) {
            return Err(ModelError::ZeroColumnSum { col });
        }
        Ok(RegimeSpec::AlmostMemoryless { r, t })
    }

    /// Symmetric binary channel family: `M = [[1-p, p], [p, 1-p]]`,
    /// `T = [[-1, 1], [1, -1]]`, so `R(ε)` flips symbols with probability ε.
    pub fn symmetric_binary_high_snr(p: &Rational) -> Result<Self, ModelError> {
        let one = Rational::one();
        let m = StochasticMatrix::new(
            "M",
            vec![vec![&one - p, p.clone()], vec![p.clone(), &one - p]],
        )?;
        let t = PerturbationMatrix::new(
            "T",
            vec![
                vec![rational::int(-1), rational::int(1)],
                vec![rational::int(1), rational::int(-1)],
            ],
        )?;
        Self::high_snr(m, t)
    }

    /// Symmetric binary family near the uniform chain: flip probability
    /// `eps` in `R`, `T = [[1, -1], [-1, 1]]`, so `p = 1/2 - δ`.
    pub fn symmetric_binary_almost_memoryless(eps: &Rational) -> Result<Self, ModelError> {
        let one = Rational::one();
        let r = StochasticMatrix::new(
            "R",
            vec![vec![&one - eps, eps.clone()], vec![eps.clone(), &one - eps]],
        )?;
        let t = PerturbationMatrix::new(
            "T",
            vec![
                vec![rational::int(1), rational::int(-1)],
                vec![rational::int(-1), rational::int(1)],
            ],
        )?;
        Self::almost_memoryless(r, t)
    }

    pub fn kind(&self) -> RegimeKind {
        match self {
            RegimeSpec::HighSnr { .. } => RegimeKind::HighSnr,
            RegimeSpec::AlmostMemoryless { .. } => RegimeKind::AlmostMemoryless,
        }
    }

    pub fn alphabet_size(&self) -> usize {
        self.perturbation().size()
    }

    pub fn perturbation(&self) -> &PerturbationMatrix {
        match self {
            RegimeSpec::HighSnr { t, .. } | RegimeSpec::AlmostMemoryless { t, .. } => t,
        }
    }

    /// The model at a concrete parameter value.
    pub fn instantiate(&self, value: &Rational) -> Result<HmpModel, ModelError> {
        match self {
            RegimeSpec::HighSnr { m, t } => {
                let s = m.size();
                let r = t.offset(&StochasticMatrix::identity(s), value, "R")?;
                validate_model(m.clone(), r)
            }
            RegimeSpec::AlmostMemoryless { r, t } => {
                let s = r.size();
                let m = t.offset(&StochasticMatrix::uniform(s), value, "M")?;
                if !m.is_strictly_positive() {
                    return Err(ModelError::OutOfRange {
                        value: value.clone(),
                        reason: "transition matrix U + δT is not strictly positive".into(),
                    });
                }
                validate_model(m, r.clone())
            }
        }
    }
}

/// The pair process `W = (X, Y)` as a Markov chain on the observable pairs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JointChain {
    states: Vec<(usize, usize)>,
    transition: StochasticMatrix,
}

impl JointChain {
    pub fn states(&self) -> &[(usize, usize)] {
        &self.states
    }

    pub fn transition(&self) -> &StochasticMatrix {
        &self.transition
    }
}

/// States `(x, y)` with `r_xy > 0`; `Δ[(x,y) -> (x',y')] = m_xx' · r_x'y'`.
pub fn joint_chain(model: &HmpModel) -> JointChain {
    let s = model.alphabet_size();
    let (m, r) = (model.transition(), model.emission());
    let states: Vec<(usize, usize)> = (0..s)
        .flat_map(|x| (0..s).map(move |y| (x, y)))
        .filter(|&(x, y)| !r.get(x, y).is_zero())
        .collect();
    let rows = states
        .iter()
        .map(|&(wx, _)| {
            states
                .iter()
                .map(|&(vx, vy)| m.get(wx, vx) * r.get(vx, vy))
                .collect()
        })
        .collect();
    let transition = StochasticMatrix::new("Δ", rows).expect("rows of Δ sum to Σ_x' m_xx' Σ_y' r_x'y' = 1");
    JointChain { states, transition }
}

/// Draws `(x_1..x_n, y_1..y_n)` with `X_1 ~ π`. Deterministic in `seed`.
pub fn sample_path(model: &HmpModel, n: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights = |row: &[Rational]| {
        WeightedIndex::new(row.iter().map(rational::to_f64)).expect("a probability row has positive mass")
    };
    let initial = weights(model.stationary());
    let trans: Vec<_> = model.transition().rows().iter().map(|r| weights(r)).collect();
    let emit: Vec<_> = model.emission().rows().iter().map(|r| weights(r)).collect();
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    let mut x = initial.sample(&mut rng);
    for step in 0..n {
        if step > 0 {
            x = trans[x].sample(&mut rng);
        }
        xs.push(x);
        ys.push(emit[x].sample(&mut rng));
    }
    (xs, ys)
}
