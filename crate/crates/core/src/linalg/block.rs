use super::sparse::CsrMatrix;
use super::LinalgError;

/// A 3×3 grid of optional sparse blocks over the fields `(u_i, u_e, w)` with
/// the matching right-hand-side segments.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockSystem {
    sizes: [usize; 3],
    blocks: [[Option<CsrMatrix>; 3]; 3],
    rhs: [Vec<f64>; 3],
}

impl BlockSystem {
    pub fn new(sizes: [usize; 3]) -> BlockSystem {
        BlockSystem {
            sizes,
            blocks: Default::default(),
            rhs: [vec![0.0; sizes[0]], vec![0.0; sizes[1]], vec![0.0; sizes[2]]],
        }
    }

    pub fn sizes(&self) -> [usize; 3] {
        self.sizes
    }

    pub fn dim(&self) -> usize {
        self.sizes.iter().sum()
    }

    pub fn offset(&self, field: usize) -> usize {
        self.sizes[..field].iter().sum()
    }

    pub fn set_block(&mut self, row: usize, col: usize, m: CsrMatrix) -> Result<(), LinalgError> {
        if m.n_rows() != self.sizes[row] {
            return Err(LinalgError::DimensionMismatch { expected: self.sizes[row], found: m.n_rows() });
        }
        if m.n_cols() != self.sizes[col] {
            return Err(LinalgError::DimensionMismatch { expected: self.sizes[col], found: m.n_cols() });
        }
        self.blocks[row][col] = Some(m);
        Ok(())
    }

    pub fn block(&self, row: usize, col: usize) -> Option<&CsrMatrix> {
        self.blocks[row][col].as_ref()
    }

    pub fn set_rhs(&mut self, row: usize, v: Vec<f64>) -> Result<(), LinalgError> {
        if v.len() != self.sizes[row] {
            return Err(LinalgError::DimensionMismatch { expected: self.sizes[row], found: v.len() });
        }
        self.rhs[row] = v;
        Ok(())
    }

    pub fn rhs(&self, row: usize) -> &[f64] {
        &self.rhs[row]
    }

    pub fn monolithic_rhs(&self) -> Vec<f64> {
        self.rhs.concat()
    }

    pub fn monolithic_matrix(&self) -> CsrMatrix {
        let n = self.dim();
        let mut triplets = Vec::new();
        for r in 0..3 {
            for c in 0..3 {
                if let Some(m) = &self.blocks[r][c] {
                    let (ro, co) = (self.offset(r), self.offset(c));
                    triplets.extend(m.triplets().map(|(i, j, v)| (ro + i, co + j, v)));
                }
            }
        }
        CsrMatrix::from_triplets(n, n, &triplets)
    }

    /// Splits a monolithic vector into the three field segments.
    pub fn split(&self, x: &[f64]) -> [Vec<f64>; 3] {
        let (a, b) = (self.sizes[0], self.sizes[0] + self.sizes[1]);
        [x[..a].to_vec(), x[a..b].to_vec(), x[b..].to_vec()]
    }
}
