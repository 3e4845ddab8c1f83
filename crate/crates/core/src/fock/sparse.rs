use nalgebra::{DMatrix, DVector};

/// Real CSR matrix with a hermiticity flag.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseOperator {
    pub dim: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
    pub hermitian: bool,
}

impl SparseOperator {
    pub fn zeros(dim: usize) -> Self {
        Self { dim, row_ptr: vec![0; dim + 1], cols: Vec::new(), vals: Vec::new(), hermitian: true }
    }

    pub fn identity(dim: usize) -> Self {
        Self::diagonal(&vec![1.0; dim])
    }

    pub fn diagonal(d: &[f64]) -> Self {
        let dim = d.len();
        let mut t = Vec::with_capacity(dim);
        for (i, &v) in d.iter().enumerate() {
            if v != 0.0 {
                t.push((i, i, v));
            }
        }
        let mut op = Self::from_triplets(dim, t);
        op.hermitian = true;
        op
    }

    /// Duplicate entries are summed; explicit zeros are dropped.
    pub fn from_triplets(dim: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_unstable_by_key(|t| (t.0, t.1));
        let mut row_ptr = vec![0usize; dim + 1];
        let mut cols = Vec::with_capacity(triplets.len());
        let mut vals: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        let mut rows = Vec::with_capacity(triplets.len());
        for (i, j, v) in triplets {
            assert!(i < dim && j < dim, "triplet out of range");
            if last == Some((i, j)) {
                *vals.last_mut().unwrap() += v;
            } else {
                rows.push(i);
                cols.push(j);
                vals.push(v);
                last = Some((i, j));
            }
        }
        let mut keep_cols = Vec::with_capacity(cols.len());
        let mut keep_vals = Vec::with_capacity(vals.len());
        for ((i, j), v) in rows.iter().zip(&cols).zip(&vals) {
            if *v != 0.0 {
                row_ptr[i + 1] += 1;
                keep_cols.push(*j);
                keep_vals.push(*v);
            }
        }
        for i in 0..dim {
            row_ptr[i + 1] += row_ptr[i];
        }
        let mut op = Self { dim, row_ptr, cols: keep_cols, vals: keep_vals, hermitian: false };
        op.hermitian = op.hermiticity_defect() <= 1e-13;
        op
    }

    pub fn from_dense(m: &DMatrix<f64>, drop_below: f64) -> Self {
        assert_eq!(m.nrows(), m.ncols());
        let mut t = Vec::new();
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                let v = m[(i, j)];
                if v.abs() > drop_below {
                    t.push((i, j, v));
                }
            }
        }
        Self::from_triplets(m.nrows(), t)
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        self.cols[a..b].iter().copied().zip(self.vals[a..b].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|(c, _)| *c == j).map(|(_, v)| v).unwrap_or(0.0)
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim];
        self.apply_into(x, &mut y);
        y
    }

    pub fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.dim);
        for (i, yi) in y.iter_mut().enumerate() {
            let mut s = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.vals[k] * x[self.cols[k]];
            }
            *yi = s;
        }
    }

    pub fn apply_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_vec(self.apply(x.as_slice()))
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for i in 0..self.dim {
            for (j, v) in self.row(i) {
                m[(i, j)] += v;
            }
        }
        m
    }

    pub fn transpose(&self) -> Self {
        let mut t = Vec::with_capacity(self.nnz());
        for i in 0..self.dim {
            for (j, v) in self.row(i) {
                t.push((j, i, v));
            }
        }
        let mut op = Self::from_triplets(self.dim, t);
        op.hermitian = self.hermitian;
        op
    }

    fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut t = Vec::with_capacity(self.nnz());
        for i in 0..self.dim {
            for (j, v) in self.row(i) {
                t.push((i, j, v));
            }
        }
        t
    }

    /// a·self + b·other.
    pub fn linear_combination(&self, a: f64, other: &Self, b: f64) -> Self {
        assert_eq!(self.dim, other.dim);
        let mut t: Vec<_> = self.triplets().into_iter().map(|(i, j, v)| (i, j, a * v)).collect();
        t.extend(other.triplets().into_iter().map(|(i, j, v)| (i, j, b * v)));
        Self::from_triplets(self.dim, t)
    }

    pub fn scaled(&self, a: f64) -> Self {
        let mut op = self.clone();
        op.vals.iter_mut().for_each(|v| *v *= a);
        op
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        let mut t = Vec::new();
        let mut acc = vec![0.0; self.dim];
        let mut touched = Vec::new();
        for i in 0..self.dim {
            for (k, a) in self.row(i) {
                for (j, b) in other.row(k) {
                    if acc[j] == 0.0 {
                        touched.push(j);
                    }
                    acc[j] += a * b;
                }
            }
            for &j in &touched {
                t.push((i, j, acc[j]));
                acc[j] = 0.0;
            }
            touched.clear();
        }
        Self::from_triplets(self.dim, t)
    }

    /// max |A_ij − A_ji|.
    pub fn hermiticity_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.dim {
            for (j, v) in self.row(i) {
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        worst
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        let d = self.linear_combination(1.0, other, -1.0);
        d.vals.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Spectral norm via the dense singular values (small operators only).
    pub fn op_norm(&self) -> f64 {
        op_norm_dense(&self.to_dense())
    }
}

pub fn op_norm_dense(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.clone().singular_values().iter().fold(0.0f64, |a, b| a.max(*b))
}

/// Tensor product `s ⊗ b` with `s` a 2×2 spin matrix; spin index is the slow index.
pub fn spin_tensor(s: [[f64; 2]; 2], b: &SparseOperator) -> SparseOperator {
    let n = b.dim;
    let mut t = Vec::new();
    for (a, row) in s.iter().enumerate() {
        for (c, &sv) in row.iter().enumerate() {
            if sv == 0.0 {
                continue;
            }
            for i in 0..n {
                for (j, v) in b.row(i) {
                    t.push((a * n + i, c * n + j, sv * v));
                }
            }
        }
    }
    SparseOperator::from_triplets(2 * n, t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triplets_sum_and_drop_zeros() {
        let op = SparseOperator::from_triplets(2, vec![(0, 1, 1.0), (0, 1, 2.0), (1, 0, 3.0), (1, 1, 0.0)]);
        assert_eq!(op.nnz(), 2);
        assert_eq!(op.get(0, 1), 3.0);
        assert!(op.hermitian);
        assert_eq!(op.apply(&[1.0, 2.0]), vec![6.0, 3.0]);
    }

    #[test]
    fn matmul_matches_dense() {
        let a = SparseOperator::from_triplets(3, vec![(0, 1, 1.0), (1, 2, 2.0), (2, 0, -1.0), (2, 2, 0.5)]);
        let b = a.transpose();
        let c = a.matmul(&b).to_dense();
        let d = a.to_dense() * b.to_dense();
        assert!((c - d).abs().max() < 1e-15);
    }

    #[test]
    fn spin_tensor_layout() {
        let b = SparseOperator::diagonal(&[1.0, 2.0]);
        let t = spin_tensor([[0.0, 1.0], [1.0, 0.0]], &b);
        assert_eq!(t.get(0, 2), 1.0);
        assert_eq!(t.get(3, 1), 2.0);
        assert!(t.hermitian);
    }
}
