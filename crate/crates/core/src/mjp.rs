//! Monte-Carlo simulation of the Markov jump process behind a generator,
//! used as an independent check of the linear solves.

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;

use crate::error::{Error, Result};
use crate::generator::Generator;
use crate::grid::CellSet;

/// Per-state jump tables. Index `n` in a table stands for leaving the state space.
pub struct JumpChain {
    exit_rates: Vec<f64>,
    targets: Vec<Vec<usize>>,
    tables: Vec<Option<WeightedIndex<f64>>>,
}

impl JumpChain {
    pub fn new(g: &Generator) -> Result<Self> {
        let n = g.n();
        let mut exit_rates = Vec::with_capacity(n);
        let mut targets = Vec::with_capacity(n);
        let mut tables = Vec::with_capacity(n);
        for j in 0..n {
            let (rows, vals) = g.rates().col(j);
            let mut to = Vec::new();
            let mut w = Vec::new();
            for (&i, &v) in rows.iter().zip(vals) {
                if i != j && v > 0.0 {
                    to.push(i);
                    w.push(v);
                }
            }
            if g.leak()[j] > 0.0 {
                to.push(n);
                w.push(g.leak()[j]);
            }
            let total: f64 = w.iter().sum();
            exit_rates.push(total);
            tables.push(if w.is_empty() {
                None
            } else {
                Some(WeightedIndex::new(&w).map_err(|_| Error::NonFinite {
                    point: vec![j as f64],
                })?)
            });
            targets.push(to);
        }
        Ok(Self {
            exit_rates,
            targets,
            tables,
        })
    }

    /// One path from `start` until it hits `target`, leaks, or exceeds
    /// `t_max`. Returns `(absorbed, elapsed)`; a path that never stops
    /// returns `(false, inf)`.
    pub fn run<R: Rng>(
        &self,
        start: usize,
        target: &CellSet,
        t_max: f64,
        rng: &mut R,
    ) -> (bool, f64) {
        let n = self.exit_rates.len();
        let (mut s, mut t) = (start, 0.0);
        loop {
            if target.contains(s) {
                return (true, t);
            }
            let Some(table) = &self.tables[s] else {
                return (false, f64::INFINITY);
            };
            let u: f64 = rng.gen();
            t += -(1.0 - u).ln() / self.exit_rates[s];
            if t > t_max {
                return (false, f64::INFINITY);
            }
            let next = self.targets[s][table.sample(rng)];
            if next == n {
                return (false, t);
            }
            s = next;
        }
    }
}

/// Sample means and standard errors from repeated paths.
#[derive(Debug, Clone, Copy)]
pub struct MjpEstimate {
    pub p: f64,
    pub p_se: f64,
    pub t: f64,
    pub t_se: f64,
    pub paths: usize,
}

/// Estimate the absorption probability and expected termination time of
/// `start`.
pub fn estimate<R: Rng>(
    chain: &JumpChain,
    start: usize,
    target: &CellSet,
    paths: usize,
    t_max: f64,
    rng: &mut R,
) -> MjpEstimate {
    let (mut hits, mut s1, mut s2) = (0usize, 0.0, 0.0);
    for _ in 0..paths {
        let (absorbed, t) = chain.run(start, target, t_max, rng);
        hits += absorbed as usize;
        s1 += t;
        s2 += t * t;
    }
    let m = paths as f64;
    let p = hits as f64 / m;
    let t = s1 / m;
    let var_t = (s2 / m - t * t).max(0.0) * m / (m - 1.0).max(1.0);
    MjpEstimate {
        p,
        p_se: (p * (1.0 - p) / m).sqrt(),
        t,
        t_se: (var_t / m).sqrt(),
        paths,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::CellLabel;
    use crate::sparse::CscMatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn two_state_chain() {
        // State 0 jumps to the target 1 at rate 2.
        let rates = CscMatrix::from_dense(&[vec![-2.0, 0.0], vec![2.0, -2.0]]);
        let g = Generator::from_parts(1, rates, vec![0.0, 2.0]).unwrap();
        let target = CellSet::from_indices(2, CellLabel::Target, vec![1]).unwrap();
        let chain = JumpChain::new(&g).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let e = estimate(&chain, 0, &target, 20_000, 1e9, &mut rng);
        assert_eq!(e.p, 1.0);
        assert!((e.t - 0.5).abs() < 3.0 * e.t_se, "{e:?}");
    }

    #[test]
    fn stuck_state_never_terminates() {
        let rates = CscMatrix::from_dense(&[vec![0.0, 0.0], vec![0.0, 0.0]]);
        let g = Generator::from_parts(1, rates, vec![0.0, 0.0]).unwrap();
        let target = CellSet::from_indices(2, CellLabel::Target, vec![1]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(
            JumpChain::new(&g).unwrap().run(0, &target, 1.0, &mut rng),
            (false, f64::INFINITY)
        );
    }
}
