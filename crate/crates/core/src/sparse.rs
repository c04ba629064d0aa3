//! Row-compressed sparse matrices.
//!
//! Only the handful of operations the Laplacian and the dynamics need:
//! construction from triplets, sparse × dense products, transposition and
//! a power-iteration norm estimate.

use ndarray::{Array2, ArrayView2};

use crate::error::ShapeError;

/// Compressed sparse row matrix with `f64` entries.
///
/// Column indices are strictly increasing within each row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a matrix from `(row, col, value)` triplets. Duplicate
    /// coordinates are summed.
    ///
    /// # Panics
    ///
    /// Panics if a coordinate is out of bounds.
    pub fn from_triplets(rows: usize, cols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut per_row: Vec<Vec<(usize, f64)>> = vec![Vec::new(); rows];
        for &(r, c, v) in triplets {
            assert!(r < rows && c < cols, "triplet ({r}, {c}) outside {rows}x{cols}");
            per_row[r].push((c, v));
        }
        let mut indptr = Vec::with_capacity(rows + 1);
        let mut indices = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        indptr.push(0);
        for row in &mut per_row {
            row.sort_by_key(|&(c, _)| c);
            let mut i = 0;
            while i < row.len() {
                let c = row[i].0;
                let mut v = 0.0;
                while i < row.len() && row[i].0 == c {
                    v += row[i].1;
                    i += 1;
                }
                indices.push(c);
                values.push(v);
            }
            indptr.push(indices.len());
        }
        Self {
            rows,
            cols,
            indptr,
            indices,
            values,
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            rows: n,
            cols: n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn indptr(&self) -> &[usize] {
        &self.indptr
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Iterates the stored entries of row `r` as `(col, value)`.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.indptr[r]..self.indptr[r + 1];
        self.indices[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    /// Entry lookup by binary search within the row.
    pub fn get(&self, r: usize, c: usize) -> f64 {
        let span = self.indptr[r]..self.indptr[r + 1];
        match self.indices[span.clone()].binary_search(&c) {
            Ok(k) => self.values[span.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.rows, self.cols));
        for r in 0..self.rows {
            for (c, v) in self.row(r) {
                out[[r, c]] = v;
            }
        }
        out
    }

    pub fn transpose(&self) -> Self {
        let mut triplets = Vec::with_capacity(self.nnz());
        for r in 0..self.rows {
            for (c, v) in self.row(r) {
                triplets.push((c, r, v));
            }
        }
        Self::from_triplets(self.cols, self.rows, &triplets)
    }

    /// Largest absolute entrywise difference between `self` and its transpose.
    pub fn max_asymmetry(&self) -> f64 {
        if self.rows != self.cols {
            return f64::INFINITY;
        }
        let mut worst: f64 = 0.0;
        for r in 0..self.rows {
            for (c, v) in self.row(r) {
                worst = worst.max((v - self.get(c, r)).abs());
            }
        }
        worst
    }

    /// Sparse × dense product `self · x`.
    pub fn matmul(&self, x: &ArrayView2<'_, f64>) -> Result<Array2<f64>, ShapeError> {
        if x.nrows() != self.cols {
            return Err(ShapeError::new(
                "sparse_matmul",
                (self.rows, self.cols),
                x.dim(),
            ));
        }
        let d = x.ncols();
        let mut out = Array2::zeros((self.rows, d));
        for r in 0..self.rows {
            let mut out_row = out.row_mut(r);
            for (c, v) in self.row(r) {
                out_row.scaled_add(v, &x.row(c));
            }
        }
        Ok(out)
    }

    /// Transposed product `selfᵀ · x` without materialising the transpose.
    pub fn matmul_transposed(&self, x: &ArrayView2<'_, f64>) -> Result<Array2<f64>, ShapeError> {
        if x.nrows() != self.rows {
            return Err(ShapeError::new(
                "sparse_matmul_transposed",
                (self.cols, self.rows),
                x.dim(),
            ));
        }
        let d = x.ncols();
        let mut out = Array2::zeros((self.cols, d));
        for r in 0..self.rows {
            let xr = x.row(r);
            for (c, v) in self.row(r) {
                out.row_mut(c).scaled_add(v, &xr);
            }
        }
        Ok(out)
    }

    /// Estimates the spectral norm of a square symmetric matrix by power
    /// iteration on `self²` with a deterministic start vector.
    ///
    /// Returns the estimate and whether the relative change fell below `tol`
    /// within `max_iter` iterations.
    pub fn spectral_norm_symmetric(&self, tol: f64, max_iter: usize) -> (f64, bool) {
        let n = self.rows;
        if n == 0 {
            return (0.0, true);
        }
        // Irrational-ish start avoids orthogonality to common eigenvectors.
        let mut v: Vec<f64> = (0..n)
            .map(|i| 1.0 + ((i as f64 + 1.0) * 0.618_033_988_749_895).fract())
            .collect();
        normalize(&mut v);
        let mut estimate = 0.0;
        for _ in 0..max_iter {
            let w = self.apply_vec(&self.apply_vec(&v));
            let norm_sq: f64 = w.iter().zip(&v).map(|(a, b)| a * b).sum();
            let next = norm_sq.max(0.0).sqrt();
            let wn = w.iter().map(|a| a * a).sum::<f64>().sqrt();
            if wn == 0.0 {
                return (0.0, true);
            }
            v = w.into_iter().map(|a| a / wn).collect();
            if (next - estimate).abs() <= tol * next.max(f64::MIN_POSITIVE) {
                return (next, true);
            }
            estimate = next;
        }
        (estimate, false)
    }

    fn apply_vec(&self, v: &[f64]) -> Vec<f64> {
        (0..self.rows)
            .map(|r| self.row(r).map(|(c, a)| a * v[c]).sum())
            .collect()
    }
}

fn normalize(v: &mut [f64]) {
    let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|a| *a /= n);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn triplets_are_sorted_and_summed() {
        let m = CsrMatrix::from_triplets(2, 3, &[(0, 2, 1.0), (0, 0, 2.0), (0, 2, 0.5), (1, 1, 3.0)]);
        assert_eq!(m.indices(), &[0, 2, 1]);
        assert_eq!(m.values(), &[2.0, 1.5, 3.0]);
        assert_eq!(m.get(0, 2), 1.5);
        assert_eq!(m.get(1, 0), 0.0);
    }

    #[test]
    fn matmul_matches_dense() {
        let m = CsrMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (0, 1, 2.0), (1, 1, -1.0)]);
        let x = array![[1.0, 0.5], [2.0, -1.0]];
        let got = m.matmul(&x.view()).unwrap();
        assert_eq!(got, m.to_dense().dot(&x));
        let got_t = m.matmul_transposed(&x.view()).unwrap();
        assert_eq!(got_t, m.to_dense().t().dot(&x));
    }

    #[test]
    fn matmul_rejects_bad_shape() {
        let m = CsrMatrix::identity(3);
        assert!(m.matmul(&Array2::<f64>::zeros((2, 1)).view()).is_err());
    }

    #[test]
    fn power_iteration_on_diagonal() {
        let m = CsrMatrix::from_triplets(3, 3, &[(0, 0, 0.5), (1, 1, -2.0), (2, 2, 1.0)]);
        let (norm, converged) = m.spectral_norm_symmetric(1e-14, 10_000);
        assert!(converged);
        assert!((norm - 2.0).abs() < 1e-10);
    }
}
