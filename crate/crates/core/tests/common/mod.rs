#![allow(dead_code)]

use hmp_series::model::{PerturbationMatrix, RegimeSpec, StochasticMatrix};
use hmp_series::rational::{int, ratio, Rational};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Seeded source of small random rational models.
pub struct Gen(ChaCha8Rng);

impl Gen {
    pub fn new(seed: u64) -> Self {
        Gen(ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn range(&mut self, lo: i64, hi: i64) -> i64 {
        self.0.random_range(lo..=hi)
    }

    pub fn index(&mut self, n: usize) -> usize {
        self.0.random_range(0..n)
    }

    /// `a/d` with `a` drawn from `1..=num`.
    pub fn positive(&mut self, num: i64, d: i64) -> Rational {
        ratio(self.range(1, num), d)
    }

    fn row(&mut self, s: usize, lo: i64) -> Vec<Rational> {
        loop {
            let w: Vec<i64> = (0..s).map(|_| self.range(lo, 9)).collect();
            let total: i64 = w.iter().sum();
            if total > 0 {
                return w.iter().map(|&x| ratio(x, total)).collect();
            }
        }
    }

    pub fn positive_stochastic(&mut self, name: &str, s: usize) -> StochasticMatrix {
        let rows = (0..s).map(|_| self.row(s, 1)).collect();
        StochasticMatrix::new(name, rows).unwrap()
    }

    /// Stochastic with some zero entries but every column reachable.
    pub fn emission(&mut self, s: usize) -> StochasticMatrix {
        loop {
            let rows: Vec<Vec<Rational>> = (0..s).map(|_| self.row(s, 0)).collect();
            let m = StochasticMatrix::new("R", rows).unwrap();
            if m.column_sums().iter().all(|c| *c > int(0)) {
                return m;
            }
        }
    }

    /// Generator-like matrix: negative diagonal, non-negative elsewhere.
    pub fn high_snr_t(&mut self, s: usize) -> PerturbationMatrix {
        let mut rows = vec![vec![int(0); s]; s];
        for (i, row) in rows.iter_mut().enumerate() {
            loop {
                for j in (0..s).filter(|&j| j != i) {
                    row[j] = ratio(self.range(0, 3), 2);
                }
                let off: Rational = row.iter().sum();
                if off > int(0) {
                    row[i] = -off;
                    break;
                }
            }
        }
        PerturbationMatrix::new("T", rows).unwrap()
    }

    /// Nonzero matrix with zero row sums and arbitrary signs.
    pub fn am_t(&mut self, s: usize) -> PerturbationMatrix {
        loop {
            let rows: Vec<Vec<Rational>> = (0..s)
                .map(|_| {
                    let mut r: Vec<Rational> = (0..s - 1).map(|_| ratio(self.range(-3, 3), 4)).collect();
                    let sum: Rational = r.iter().sum();
                    r.push(-sum);
                    r
                })
                .collect();
            if rows.iter().flatten().any(|x| *x != int(0)) {
                return PerturbationMatrix::new("T", rows).unwrap();
            }
        }
    }

    pub fn high_snr(&mut self, s: usize) -> RegimeSpec {
        let m = self.positive_stochastic("M", s);
        let t = self.high_snr_t(s);
        RegimeSpec::high_snr(m, t).unwrap()
    }

    pub fn almost_memoryless(&mut self, s: usize) -> RegimeSpec {
        let r = self.emission(s);
        let t = self.am_t(s);
        RegimeSpec::almost_memoryless(r, t).unwrap()
    }
}
