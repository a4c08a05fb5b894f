//! Banded LU factorization for the restricted generator.
//!
//! Row-major grid numbering keeps every face neighbour within a fixed index
//! distance, so the generator is banded and elimination fill stays inside
//! the band. Restricted generators are column diagonally dominant
//! (`|G_jj| = sum_{i != j} G_ij + leak_j`), and elimination preserves that
//! property, so partial pivoting always selects the diagonal entry and the
//! factorization is computed without row exchanges.

use crate::error::{Error, Result};
use crate::sparse::CscMatrix;

/// `A = L U` in LAPACK-style column-major band storage.
#[derive(Debug, Clone)]
pub struct BandLu {
    n: usize,
    kl: usize,
    ku: usize,
    ld: usize,
    data: Vec<f64>,
}

impl BandLu {
    pub fn factor(a: &CscMatrix) -> Result<Self> {
        assert_eq!(a.n_rows(), a.n_cols(), "band LU needs a square matrix");
        let n = a.n_cols();
        let (mut kl, mut ku) = (0usize, 0usize);
        for (i, j, _) in a.triplets() {
            if i > j {
                kl = kl.max(i - j);
            } else {
                ku = ku.max(j - i);
            }
        }
        let ld = kl + ku + 1;
        let mut data = vec![0.0; ld * n];
        let mut scale = vec![0.0f64; n];
        for (i, j, v) in a.triplets() {
            data[j * ld + ku + i - j] = v;
            scale[j] = scale[j].max(v.abs());
        }
        let mut lu = Self {
            n,
            kl,
            ku,
            ld,
            data,
        };
        lu.eliminate(&scale)?;
        Ok(lu)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn bandwidths(&self) -> (usize, usize) {
        (self.kl, self.ku)
    }

    #[inline]
    fn pos(&self, i: usize, j: usize) -> usize {
        j * self.ld + self.ku + i - j
    }

    fn eliminate(&mut self, scale: &[f64]) -> Result<()> {
        let (n, kl, ku, ld) = (self.n, self.kl, self.ku, self.ld);
        let tiny = f64::EPSILON * n.max(1) as f64;
        for k in 0..n {
            let piv = self.data[self.pos(k, k)];
            if piv == 0.0 || !piv.is_finite() || piv.abs() <= tiny * scale[k] {
                return Err(Error::SingularSystem { index: k });
            }
            let rows = (n - 1).min(k + kl) - k;
            if rows == 0 {
                continue;
            }
            let mstart = self.pos(k + 1, k);
            for v in &mut self.data[mstart..mstart + rows] {
                *v /= piv;
            }
            let last_col = (n - 1).min(k + ku);
            let (head, tail) = self.data.split_at_mut((k + 1) * ld);
            let mult = &head[mstart..mstart + rows];
            for j in k + 1..=last_col {
                let off = (j - k - 1) * ld;
                let akj = tail[off + ku + k - j];
                if akj == 0.0 {
                    continue;
                }
                let start = off + ku + k + 1 - j;
                for (t, m) in tail[start..start + rows].iter_mut().zip(mult) {
                    *t -= m * akj;
                }
            }
        }
        Ok(())
    }

    /// Solve `A x = b` in place.
    pub fn solve(&self, b: &mut [f64]) {
        let n = self.n;
        assert_eq!(b.len(), n);
        for k in 0..n {
            let bk = b[k];
            if bk != 0.0 {
                let rows = (n - 1).min(k + self.kl) - k;
                let s = self.pos(k + 1, k);
                for (bi, l) in b[k + 1..k + 1 + rows]
                    .iter_mut()
                    .zip(&self.data[s..s + rows])
                {
                    *bi -= l * bk;
                }
            }
        }
        for k in (0..n).rev() {
            b[k] /= self.data[self.pos(k, k)];
            let bk = b[k];
            let first = k.saturating_sub(self.ku);
            let s = self.pos(first, k);
            for (bi, u) in b[first..k].iter_mut().zip(&self.data[s..s + (k - first)]) {
                *bi -= u * bk;
            }
        }
    }

    /// Solve `A^T x = b` in place.
    pub fn solve_transpose(&self, b: &mut [f64]) {
        let n = self.n;
        assert_eq!(b.len(), n);
        for k in 0..n {
            let first = k.saturating_sub(self.ku);
            let s = self.pos(first, k);
            let dot: f64 = b[first..k]
                .iter()
                .zip(&self.data[s..s + (k - first)])
                .map(|(x, u)| x * u)
                .sum();
            b[k] = (b[k] - dot) / self.data[self.pos(k, k)];
        }
        for k in (0..n).rev() {
            let rows = (n - 1).min(k + self.kl) - k;
            if rows == 0 {
                continue;
            }
            let s = self.pos(k + 1, k);
            let dot: f64 = b[k + 1..k + 1 + rows]
                .iter()
                .zip(&self.data[s..s + rows])
                .map(|(x, l)| x * l)
                .sum();
            b[k] -= dot;
        }
    }
}
