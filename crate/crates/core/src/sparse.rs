//! Compressed sparse column storage.

/// Sparse matrix in compressed-column form with sorted row indices and no
/// duplicate entries.
#[derive(Debug, Clone, PartialEq)]
pub struct CscMatrix {
    n_rows: usize,
    n_cols: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CscMatrix {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            col_ptr: vec![0; n_cols + 1],
            row_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Build from per-column `(row, value)` lists. Duplicates are summed and
    /// exact zeros dropped.
    pub fn from_columns(n_rows: usize, columns: Vec<Vec<(usize, f64)>>) -> Self {
        let n_cols = columns.len();
        let mut col_ptr = Vec::with_capacity(n_cols + 1);
        let mut row_idx = Vec::new();
        let mut values = Vec::new();
        col_ptr.push(0);
        for mut col in columns {
            col.sort_by_key(|&(i, _)| i);
            let mut k = 0;
            while k < col.len() {
                let i = col[k].0;
                assert!(i < n_rows, "row index {i} out of bounds");
                let mut v = 0.0;
                while k < col.len() && col[k].0 == i {
                    v += col[k].1;
                    k += 1;
                }
                if v != 0.0 {
                    row_idx.push(i);
                    values.push(v);
                }
            }
            col_ptr.push(row_idx.len());
        }
        Self {
            n_rows,
            n_cols,
            col_ptr,
            row_idx,
            values,
        }
    }

    pub fn from_triplets(n_rows: usize, n_cols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut columns = vec![Vec::new(); n_cols];
        for &(i, j, v) in triplets {
            columns[j].push((i, v));
        }
        Self::from_columns(n_rows, columns)
    }

    pub fn from_dense(rows: &[Vec<f64>]) -> Self {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, Vec::len);
        let columns = (0..n_cols)
            .map(|j| (0..n_rows).map(|i| (i, rows[i][j])).collect())
            .collect();
        Self::from_columns(n_rows, columns)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn col(&self, j: usize) -> (&[usize], &[f64]) {
        let r = self.col_ptr[j]..self.col_ptr[j + 1];
        (&self.row_idx[r.clone()], &self.values[r])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (rows, vals) = self.col(j);
        rows.binary_search(&i).map_or(0.0, |k| vals[k])
    }

    /// All stored entries as `(row, col, value)` in column-major order.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n_cols).flat_map(move |j| {
            let (rows, vals) = self.col(j);
            rows.iter().zip(vals).map(move |(&i, &v)| (i, j, v))
        })
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n_cols]; self.n_rows];
        for (i, j, v) in self.triplets() {
            d[i][j] = v;
        }
        d
    }

    pub fn scaled(&self, c: f64) -> Self {
        let mut m = self.clone();
        m.values.iter_mut().for_each(|v| *v *= c);
        m
    }

    /// `self + c * other`.
    pub fn add_scaled(&self, other: &CscMatrix, c: f64) -> Self {
        assert_eq!((self.n_rows, self.n_cols), (other.n_rows, other.n_cols));
        let columns = (0..self.n_cols)
            .map(|j| {
                let (ra, va) = self.col(j);
                let (rb, vb) = other.col(j);
                ra.iter()
                    .copied()
                    .zip(va.iter().copied())
                    .chain(rb.iter().copied().zip(vb.iter().map(|v| c * v)))
                    .collect()
            })
            .collect();
        Self::from_columns(self.n_rows, columns)
    }

    /// `y = A x`.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n_rows];
        for (j, xj) in x.iter().enumerate().take(self.n_cols) {
            let (rows, vals) = self.col(j);
            for (&i, &v) in rows.iter().zip(vals) {
                y[i] += v * xj;
            }
        }
        y
    }

    /// `y = A^T x`, i.e. `y_j = sum_i A_ij x_i`.
    pub fn tr_mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n_cols).map(|j| self.col_dot(j, x)).collect()
    }

    /// Dot product of column `j` with `x`.
    pub fn col_dot(&self, j: usize, x: &[f64]) -> f64 {
        let (rows, vals) = self.col(j);
        rows.iter().zip(vals).map(|(&i, &v)| v * x[i]).sum()
    }

    pub fn col_sum(&self, j: usize) -> f64 {
        self.col(j).1.iter().sum()
    }

    /// Largest entrywise absolute difference.
    pub fn max_abs_diff(&self, other: &CscMatrix) -> f64 {
        self.add_scaled(other, -1.0)
            .values
            .iter()
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Principal submatrix on the given sorted index list; `keep[k]` maps
    /// to row/column `k` of the result.
    pub fn principal_submatrix(&self, keep: &[usize]) -> CscMatrix {
        let mut position = vec![usize::MAX; self.n_rows.max(self.n_cols)];
        for (k, &i) in keep.iter().enumerate() {
            position[i] = k;
        }
        let columns = keep
            .iter()
            .map(|&j| {
                let (rows, vals) = self.col(j);
                rows.iter()
                    .zip(vals)
                    .filter(|(&i, _)| position[i] != usize::MAX)
                    .map(|(&i, &v)| (position[i], v))
                    .collect()
            })
            .collect();
        CscMatrix::from_columns(keep.len(), columns)
    }
}
