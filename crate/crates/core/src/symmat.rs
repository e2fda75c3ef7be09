//! Dense symmetric matrices stored as a packed upper triangle.
//!
//! Storing only the triangle makes symmetry a property of the representation
//! rather than something repaired after the fact: an operation cannot produce
//! an asymmetric result because there is nowhere to put one.

use nalgebra::{DMatrix, DVector};

/// Symmetric `dim x dim` matrix, packed row-major upper triangle.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMat {
    dim: usize,
    data: Vec<f64>,
}

#[inline]
fn packed_len(dim: usize) -> usize {
    dim * (dim + 1) / 2
}

impl SymMat {
    pub fn zeros(dim: usize) -> Self {
        SymMat {
            dim,
            data: vec![0.0; packed_len(dim)],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Packed offset of entry (i, j) with i <= j.
    #[inline]
    fn offset(&self, i: usize, j: usize) -> usize {
        debug_assert!(i <= j && j < self.dim);
        i * self.dim - i * (i + 1) / 2 + j
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        self.data[self.offset(i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        let off = self.offset(i, j);
        self.data[off] = v;
    }

    /// self += c * other (dimensions must agree).
    pub fn axpy(&mut self, c: f64, other: &SymMat) {
        assert_eq!(self.dim, other.dim, "SymMat dimension mismatch");
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += c * b;
        }
    }

    pub fn scale_mut(&mut self, c: f64) {
        for a in self.data.iter_mut() {
            *a *= c;
        }
    }

    /// self += c * v v^T.
    pub fn rank1_update(&mut self, c: f64, v: &DVector<f64>) {
        assert_eq!(self.dim, v.len(), "SymMat rank-1 dimension mismatch");
        let mut off = 0;
        for i in 0..self.dim {
            let cvi = c * v[i];
            for j in i..self.dim {
                self.data[off] += cvi * v[j];
                off += 1;
            }
        }
    }

    /// self += c * (u v^T + v u^T).
    pub fn sym_outer_update(&mut self, c: f64, u: &DVector<f64>, v: &DVector<f64>) {
        assert_eq!(self.dim, u.len(), "SymMat outer dimension mismatch");
        assert_eq!(self.dim, v.len(), "SymMat outer dimension mismatch");
        let mut off = 0;
        for i in 0..self.dim {
            for j in i..self.dim {
                self.data[off] += c * (u[i] * v[j] + v[i] * u[j]);
                off += 1;
            }
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for i in 0..self.dim {
            for j in i..self.dim {
                let v = self.get(i, j);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        m
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    #[test]
    fn packed_indexing_round_trips() {
        let mut m = SymMat::zeros(4);
        let mut v = 1.0;
        for i in 0..4 {
            for j in i..4 {
                m.set(i, j, v);
                v += 1.0;
            }
        }
        let mut expect = 1.0;
        for i in 0..4 {
            for j in i..4 {
                assert_eq!(m.get(i, j), expect);
                assert_eq!(m.get(j, i), expect);
                expect += 1.0;
            }
        }
    }

    #[test]
    fn dense_image_is_exactly_symmetric() {
        let mut m = SymMat::zeros(3);
        m.rank1_update(2.0, &dvector![1.0, -2.0, 0.5]);
        m.sym_outer_update(-0.3, &dvector![0.1, 0.2, 0.3], &dvector![3.0, -1.0, 2.0]);
        let d = m.to_dmatrix();
        assert_eq!(d, d.transpose());
    }

    #[test]
    fn zero_dimensional_matrix_is_legal() {
        let m = SymMat::zeros(0);
        assert_eq!(m.dim(), 0);
        assert_eq!(m.max_abs(), 0.0);
    }
}
