//! Compressed-row sparse matrices and a banded Cholesky factorization.
//!
//! The step matrices are symmetric positive definite with a narrow band under
//! the natural node ordering (tridiagonal in 1D, half-bandwidth n+1 on an
//! n×n grid), so a dense-band LLᵀ is both exact and cheap.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds an `n × n` matrix from `(row, col, value)` triplets.
    ///
    /// Duplicates are summed in insertion order, so the result is a pure
    /// function of the triplet sequence.
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; n + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            debug_assert!(r < n && c < n);
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        CsrMatrix {
            n,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|&(c, _)| c == j).map_or(0.0, |(_, v)| v)
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    /// y = A x
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n);
        for (i, yi) in y.iter_mut().enumerate().take(self.n) {
            *yi = self.row(i).map(|(j, v)| v * x[j]).sum();
        }
    }

    /// y += a · A x
    pub fn mul_vec_add(&self, a: f64, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate().take(self.n) {
            let s: f64 = self.row(i).map(|(j, v)| v * x[j]).sum();
            *yi += a * s;
        }
    }

    /// xᵀ A x
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        (0..self.n)
            .map(|i| x[i] * self.row(i).map(|(j, v)| v * x[j]).sum::<f64>())
            .sum()
    }

    /// Σ cᵢ Aᵢ over matrices of the same dimension.
    pub fn linear_combination(terms: &[(f64, &CsrMatrix)]) -> CsrMatrix {
        let n = terms.first().map_or(0, |(_, m)| m.n);
        let mut trip = Vec::with_capacity(terms.iter().map(|(_, m)| m.nnz()).sum());
        for &(c, m) in terms {
            assert_eq!(m.n, n, "dimension mismatch in linear combination");
            if c != 0.0 {
                trip.extend(m.triplets().map(|(i, j, v)| (i, j, c * v)));
            }
        }
        CsrMatrix::from_triplets(n, trip)
    }

    /// Keeps rows and columns whose `map` entry is `Some(new_index)`.
    pub fn submatrix(&self, map: &[Option<usize>], n_new: usize) -> CsrMatrix {
        let trip = self
            .triplets()
            .filter_map(|(i, j, v)| Some((map[i]?, map[j]?, v)))
            .collect();
        CsrMatrix::from_triplets(n_new, trip)
    }

    pub fn half_bandwidth(&self) -> usize {
        self.triplets()
            .map(|(i, j, _)| i.abs_diff(j))
            .max()
            .unwrap_or(0)
    }

    /// Largest |A_ij − A_ji| relative to the largest |A_ij|.
    pub fn asymmetry(&self) -> f64 {
        let scale = self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if scale == 0.0 {
            return 0.0;
        }
        self.triplets()
            .map(|(i, j, v)| (v - self.get(j, i)).abs())
            .fold(0.0, f64::max)
            / scale
    }
}

/// LLᵀ factorization of a symmetric positive definite band matrix.
#[derive(Clone, Debug)]
pub struct BandCholesky {
    n: usize,
    w: usize,
    /// Row i holds L[i][i-w..=i]; entries left of column 0 are unused.
    band: Vec<f64>,
}

impl BandCholesky {
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        let n = a.dim();
        let w = a.half_bandwidth();
        let stride = w + 1;
        let mut band = vec![0.0; n * stride];
        for i in 0..n {
            for (j, v) in a.row(i) {
                if j <= i {
                    band[i * stride + (j + w - i)] = v;
                }
            }
        }
        for i in 0..n {
            let i0 = i.saturating_sub(w);
            for j in i0..=i {
                let k0 = i0.max(j.saturating_sub(w));
                let mut s = band[i * stride + (j + w - i)];
                for k in k0..j {
                    s -= band[i * stride + (k + w - i)] * band[j * stride + (k + w - j)];
                }
                if j == i {
                    if !(s > 0.0) || !s.is_finite() {
                        return Err(Error::SolverFailure(format!(
                            "matrix is not positive definite (pivot {s:e} at row {i})"
                        )));
                    }
                    band[i * stride + w] = s.sqrt();
                } else {
                    band[i * stride + (j + w - i)] = s / band[j * stride + w];
                }
            }
        }
        Ok(BandCholesky { n, w, band })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves A x = b in place.
    pub fn solve_in_place(&self, x: &mut [f64]) {
        let (n, w, stride) = (self.n, self.w, self.w + 1);
        debug_assert_eq!(x.len(), n);
        for i in 0..n {
            let mut s = x[i];
            for k in i.saturating_sub(w)..i {
                s -= self.band[i * stride + (k + w - i)] * x[k];
            }
            x[i] = s / self.band[i * stride + w];
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in i + 1..n.min(i + w + 1) {
                s -= self.band[k * stride + (i + w - k)] * x[k];
            }
            x[i] = s / self.band[i * stride + w];
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}
