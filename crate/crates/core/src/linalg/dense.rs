//! Dense LU with partial pivoting. Serves as the independent oracle for the
//! iterative solvers and as a last-resort direct path for small systems.

use super::sparse::CsrMatrix;
use super::LinalgError;

/// Largest system the stepper will hand to the dense fallback.
pub const DENSE_FALLBACK_LIMIT: usize = 2000;

#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> DenseMatrix {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for row in rows {
            assert_eq!(row.len(), n, "dense matrix must be square");
            data.extend_from_slice(row);
        }
        DenseMatrix { n, data }
    }

    pub fn from_csr(a: &CsrMatrix) -> DenseMatrix {
        assert_eq!(a.n_rows(), a.n_cols(), "dense matrix must be square");
        let n = a.n_rows();
        let mut data = vec![0.0; n * n];
        for (r, c, v) in a.triplets() {
            data[r * n + c] = v;
        }
        DenseMatrix { n, data }
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.n + c]
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n).map(|r| (0..self.n).map(|c| self.data[r * self.n + c] * x[c]).sum()).collect()
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>, LinalgError> {
        self.lu()?.solve(b)
    }

    pub fn lu(&self) -> Result<LuFactors, LinalgError> {
        let n = self.n;
        let mut lu = self.data.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let scale = lu.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for k in 0..n {
            let (pivot_row, pivot) = (k..n)
                .map(|r| (r, lu[r * n + k].abs()))
                .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if pivot <= f64::EPSILON * scale * n as f64 || pivot == 0.0 {
                return Err(LinalgError::Singular { column: k });
            }
            if pivot_row != k {
                for c in 0..n {
                    lu.swap(k * n + c, pivot_row * n + c);
                }
                perm.swap(k, pivot_row);
            }
            let d = lu[k * n + k];
            for r in k + 1..n {
                let factor = lu[r * n + k] / d;
                lu[r * n + k] = factor;
                if factor != 0.0 {
                    for c in k + 1..n {
                        lu[r * n + c] -= factor * lu[k * n + c];
                    }
                }
            }
        }
        Ok(LuFactors { n, lu, perm })
    }
}

#[derive(Debug, Clone)]
pub struct LuFactors {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
}

impl LuFactors {
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>, LinalgError> {
        let n = self.n;
        if b.len() != n {
            return Err(LinalgError::DimensionMismatch { expected: n, found: b.len() });
        }
        let mut y: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for r in 0..n {
            let mut acc = y[r];
            for c in 0..r {
                acc -= self.lu[r * n + c] * y[c];
            }
            y[r] = acc;
        }
        for r in (0..n).rev() {
            let mut acc = y[r];
            for c in r + 1..n {
                acc -= self.lu[r * n + c] * y[c];
            }
            y[r] = acc / self.lu[r * n + r];
        }
        Ok(y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_two_by_two() {
        let a = DenseMatrix::from_rows(&[vec![4.0, 1.0], vec![1.0, 3.0]]);
        let x = a.solve(&[1.0, 2.0]).unwrap();
        assert!((x[0] - 1.0 / 11.0).abs() < 1e-15 && (x[1] - 7.0 / 11.0).abs() < 1e-15);
    }

    #[test]
    fn needs_pivoting() {
        let a = DenseMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]);
        assert_eq!(a.solve(&[2.0, 3.0]).unwrap(), vec![3.0, 2.0]);
    }

    #[test]
    fn detects_singularity() {
        let a = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]);
        assert!(matches!(a.solve(&[1.0, 1.0]), Err(LinalgError::Singular { .. })));
    }
}
