use super::LinalgError;

/// Compressed-row sparse matrix.
///
/// Column indices are strictly increasing within each row. Stored entries may
/// be zero.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n_rows: usize,
    n_cols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn zeros(n_rows: usize, n_cols: usize) -> CsrMatrix {
        CsrMatrix { n_rows, n_cols, row_offsets: vec![0; n_rows + 1], col_indices: Vec::new(), values: Vec::new() }
    }

    pub fn identity(n: usize) -> CsrMatrix {
        CsrMatrix {
            n_rows: n,
            n_cols: n,
            row_offsets: (0..=n).collect(),
            col_indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    /// Builds a matrix from raw CSR arrays, checking the storage invariants.
    pub fn try_from_csr(
        n_rows: usize,
        n_cols: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<CsrMatrix, LinalgError> {
        let bad = |msg: &str| Err(LinalgError::InvalidStructure(msg.to_string()));
        if row_offsets.len() != n_rows + 1 || row_offsets[0] != 0 {
            return bad("row_offsets must have n_rows + 1 entries starting at 0");
        }
        if *row_offsets.last().unwrap() != col_indices.len() || col_indices.len() != values.len() {
            return bad("last row offset must equal the number of stored entries");
        }
        for r in 0..n_rows {
            if row_offsets[r] > row_offsets[r + 1] {
                return bad("row_offsets must be non-decreasing");
            }
            let cols = &col_indices[row_offsets[r]..row_offsets[r + 1]];
            if cols.windows(2).any(|w| w[0] >= w[1]) {
                return bad("column indices must be strictly increasing within a row");
            }
            if cols.iter().any(|&c| c >= n_cols) {
                return bad("column index out of range");
            }
        }
        Ok(CsrMatrix { n_rows, n_cols, row_offsets, col_indices, values })
    }

    /// Sums duplicate `(row, col, value)` entries in insertion order, so the
    /// result is bitwise reproducible for a fixed triplet sequence.
    pub fn from_triplets(n_rows: usize, n_cols: usize, triplets: &[(usize, usize, f64)]) -> CsrMatrix {
        let mut order: Vec<usize> = (0..triplets.len()).collect();
        order.sort_by_key(|&k| (triplets[k].0, triplets[k].1));
        let mut row_offsets = vec![0usize; n_rows + 1];
        let mut col_indices = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for k in order {
            let (r, c, v) = triplets[k];
            assert!(r < n_rows && c < n_cols, "triplet ({r}, {c}) outside {n_rows}x{n_cols}");
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_indices.push(c);
                values.push(v);
                row_offsets[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..n_rows {
            row_offsets[r + 1] += row_offsets[r];
        }
        CsrMatrix { n_rows, n_cols, row_offsets, col_indices, values }
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

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Iterates over the stored `(col, value)` pairs of row `r`.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_offsets[r]..self.row_offsets[r + 1];
        self.col_indices[range.clone()].iter().copied().zip(self.values[range].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let range = self.row_offsets[r]..self.row_offsets[r + 1];
        match self.col_indices[range.clone()].binary_search(&c) {
            Ok(k) => self.values[range.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n_rows).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n_rows.min(self.n_cols)).map(|i| self.get(i, i)).collect()
    }

    pub fn spmv(&self, x: &[f64]) -> Result<Vec<f64>, LinalgError> {
        if x.len() != self.n_cols {
            return Err(LinalgError::DimensionMismatch { expected: self.n_cols, found: x.len() });
        }
        let mut y = vec![0.0; self.n_rows];
        self.spmv_into(x, &mut y);
        Ok(y)
    }

    /// `y = A x` without dimension checks beyond debug assertions.
    pub fn spmv_into(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n_cols);
        debug_assert_eq!(y.len(), self.n_rows);
        for (r, yr) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in self.row_offsets[r]..self.row_offsets[r + 1] {
                acc += self.values[k] * x[self.col_indices[k]];
            }
            *yr = acc;
        }
    }

    pub fn scaled(&self, factor: f64) -> CsrMatrix {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= factor);
        out
    }

    pub fn transpose(&self) -> CsrMatrix {
        let triplets: Vec<_> = self.triplets().map(|(r, c, v)| (c, r, v)).collect();
        CsrMatrix::from_triplets(self.n_cols, self.n_rows, &triplets)
    }

    /// Largest absolute difference between `A` and `Aᵀ` over stored entries.
    pub fn symmetry_defect(&self) -> f64 {
        if self.n_rows != self.n_cols {
            return f64::INFINITY;
        }
        self.triplets().map(|(r, c, v)| (v - self.get(c, r)).abs()).fold(0.0, f64::max)
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.symmetry_defect() <= tol
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut dense = vec![vec![0.0; self.n_cols]; self.n_rows];
        for (r, c, v) in self.triplets() {
            dense[r][c] = v;
        }
        dense
    }

    /// `Σ_k factors[k]·mats[k]`; all matrices must share the same shape.
    pub fn linear_combination(terms: &[(f64, &CsrMatrix)]) -> CsrMatrix {
        let (n_rows, n_cols) = (terms[0].1.n_rows, terms[0].1.n_cols);
        let mut triplets = Vec::new();
        for (factor, m) in terms {
            assert_eq!((m.n_rows, m.n_cols), (n_rows, n_cols), "shape mismatch in linear combination");
            triplets.extend(m.triplets().map(|(r, c, v)| (r, c, factor * v)));
        }
        CsrMatrix::from_triplets(n_rows, n_cols, &triplets)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spmv_identity_and_zero() {
        let x = [1.0, 2.0, 3.0];
        assert_eq!(CsrMatrix::identity(3).spmv(&x).unwrap(), x.to_vec());
        assert_eq!(CsrMatrix::zeros(3, 3).spmv(&x).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn spmv_small_example() {
        let a = CsrMatrix::from_triplets(2, 2, &[(0, 0, 4.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 3.0)]);
        assert_eq!(a.spmv(&[1.0, 2.0]).unwrap(), vec![6.0, 7.0]);
    }

    #[test]
    fn spmv_dimension_mismatch() {
        let err = CsrMatrix::identity(3).spmv(&[1.0, 2.0]).unwrap_err();
        assert_eq!(err, LinalgError::DimensionMismatch { expected: 3, found: 2 });
    }

    #[test]
    fn triplets_sum_duplicates() {
        let a = CsrMatrix::from_triplets(2, 3, &[(1, 2, 1.0), (0, 0, 2.0), (1, 2, 0.5), (1, 0, -1.0)]);
        assert_eq!(a.nnz(), 3);
        assert_eq!(a.get(1, 2), 1.5);
        assert_eq!(a.row_offsets(), &[0, 1, 3]);
        assert_eq!(a.col_indices(), &[0, 0, 2]);
    }

    #[test]
    fn rejects_unsorted_columns() {
        let r = CsrMatrix::try_from_csr(1, 3, vec![0, 2], vec![2, 1], vec![1.0, 1.0]);
        assert!(matches!(r, Err(LinalgError::InvalidStructure(_))));
        let r = CsrMatrix::try_from_csr(1, 3, vec![0, 2], vec![1, 1], vec![1.0, 1.0]);
        assert!(r.is_err());
    }

    #[test]
    fn symmetry_defect_detects_asymmetry() {
        let a = CsrMatrix::from_triplets(2, 2, &[(0, 1, 2.0), (1, 0, 1.5)]);
        assert_eq!(a.symmetry_defect(), 0.5);
        assert!(a.transpose().get(0, 1) == 1.5);
    }
}
