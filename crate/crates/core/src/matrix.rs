//! Dense row-major `f64` matrix, the universal numeric carrier.
//!
//! The three matmul variants (`matmul`, `matmul_bt`, `matmul_at`) cover every
//! product the network layers need without materializing transposes. Each has
//! a sequential kernel and, with the `parallel` feature, a rayon kernel that
//! splits work over output rows; both kernels run the identical per-element
//! accumulation order, so results are bit-identical regardless of thread count.

use crate::error::{CoreError, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Matrix2D {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

/// Below this many multiply-adds the rayon dispatch overhead outweighs the win.
pub const PAR_WORK_THRESHOLD: usize = 1 << 15;

impl Matrix2D {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(CoreError::ShapeMismatch {
                context: "Matrix2D::from_vec".into(),
                expected: format!("{} values", rows * cols),
                actual: format!("{} values", data.len()),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() {
            return Err(CoreError::Empty("Matrix2D::from_rows".into()));
        }
        let cols = rows[0].len();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(CoreError::ShapeMismatch {
                    context: format!("Matrix2D::from_rows row {i}"),
                    expected: format!("{cols} columns"),
                    actual: format!("{} columns", r.len()),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    /// Column vector from a slice.
    pub fn column(values: &[f64]) -> Self {
        Self {
            rows: values.len(),
            cols: 1,
            data: values.to_vec(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }

    fn require_same_shape(&self, other: &Self, context: &str) -> Result<()> {
        if !self.same_shape(other) {
            return Err(CoreError::ShapeMismatch {
                context: context.into(),
                expected: format!("{}x{}", self.rows, self.cols),
                actual: format!("{}x{}", other.rows, other.cols),
            });
        }
        Ok(())
    }

    /// `self [m×k] · rhs [k×n]`.
    pub fn matmul(&self, rhs: &Self) -> Result<Self> {
        if self.cols != rhs.rows {
            return Err(CoreError::ShapeMismatch {
                context: "matmul".into(),
                expected: format!("{} inner rows", self.cols),
                actual: format!("{} inner rows", rhs.rows),
            });
        }
        let mut out = Self::zeros(self.rows, rhs.cols);
        dispatch_rows(
            &mut out.data,
            rhs.cols,
            self.rows * rhs.cols * self.cols,
            |i, out_row| kernels::matmul_row(self, rhs, i, out_row),
        );
        Ok(out)
    }

    /// `self [m×k] · rhsᵀ` where `rhs` is `[n×k]`. Output is `[m×n]`.
    pub fn matmul_bt(&self, rhs: &Self) -> Result<Self> {
        if self.cols != rhs.cols {
            return Err(CoreError::ShapeMismatch {
                context: "matmul_bt".into(),
                expected: format!("{} columns", self.cols),
                actual: format!("{} columns", rhs.cols),
            });
        }
        let mut out = Self::zeros(self.rows, rhs.rows);
        dispatch_rows(
            &mut out.data,
            rhs.rows,
            self.rows * rhs.rows * self.cols,
            |i, out_row| kernels::matmul_bt_row(self, rhs, i, out_row),
        );
        Ok(out)
    }

    /// `selfᵀ · rhs` where `self` is `[k×m]` and `rhs` is `[k×n]`. Output is `[m×n]`.
    pub fn matmul_at(&self, rhs: &Self) -> Result<Self> {
        if self.rows != rhs.rows {
            return Err(CoreError::ShapeMismatch {
                context: "matmul_at".into(),
                expected: format!("{} rows", self.rows),
                actual: format!("{} rows", rhs.rows),
            });
        }
        let mut out = Self::zeros(self.cols, rhs.cols);
        dispatch_rows(
            &mut out.data,
            rhs.cols,
            self.cols * rhs.cols * self.rows,
            |j, out_row| kernels::matmul_at_row(self, rhs, j, out_row),
        );
        Ok(out)
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.require_same_shape(other, "add")?;
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(out)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.require_same_shape(other, "sub")?;
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(&other.data) {
            *a -= b;
        }
        Ok(out)
    }

    pub fn hadamard(&self, other: &Self) -> Result<Self> {
        self.require_same_shape(other, "hadamard")?;
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(&other.data) {
            *a *= b;
        }
        Ok(out)
    }

    pub fn scale(&self, k: f64) -> Self {
        let mut out = self.clone();
        for v in &mut out.data {
            *v *= k;
        }
        out
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        let mut out = self.clone();
        for v in &mut out.data {
            *v = f(*v);
        }
        out
    }

    /// Adds `v` to every row in place (bias broadcast).
    pub fn add_row_vector(&mut self, v: &[f64]) -> Result<()> {
        if v.len() != self.cols {
            return Err(CoreError::ShapeMismatch {
                context: "add_row_vector".into(),
                expected: format!("{} columns", self.cols),
                actual: format!("{} values", v.len()),
            });
        }
        for r in 0..self.rows {
            let row = &mut self.data[r * self.cols..(r + 1) * self.cols];
            for (a, b) in row.iter_mut().zip(v) {
                *a += b;
            }
        }
        Ok(())
    }

    /// Sum of each column; length equals `cols`.
    pub fn col_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for r in 0..self.rows {
            for (acc, v) in out.iter_mut().zip(self.row(r)) {
                *acc += v;
            }
        }
        out
    }

    /// Copies columns `range` into a new matrix.
    pub fn col_range(&self, start: usize, end: usize) -> Result<Self> {
        if start > end || end > self.cols {
            return Err(CoreError::ShapeMismatch {
                context: "col_range".into(),
                expected: format!("range within 0..{}", self.cols),
                actual: format!("{start}..{end}"),
            });
        }
        let width = end - start;
        let mut data = Vec::with_capacity(self.rows * width);
        for r in 0..self.rows {
            data.extend_from_slice(&self.row(r)[start..end]);
        }
        Ok(Self {
            rows: self.rows,
            cols: width,
            data,
        })
    }

    /// Horizontal concatenation; all parts must have the same row count.
    pub fn hstack(parts: &[&Self]) -> Result<Self> {
        if parts.is_empty() {
            return Err(CoreError::Empty("hstack".into()));
        }
        let rows = parts[0].rows;
        for p in parts {
            if p.rows != rows {
                return Err(CoreError::ShapeMismatch {
                    context: "hstack".into(),
                    expected: format!("{rows} rows"),
                    actual: format!("{} rows", p.rows),
                });
            }
        }
        let cols: usize = parts.iter().map(|p| p.cols).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for p in parts {
                data.extend_from_slice(p.row(r));
            }
        }
        Ok(Self { rows, cols, data })
    }

    /// Copies the listed rows, in order, into a new matrix.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Self> {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            if i >= self.rows {
                return Err(CoreError::ShapeMismatch {
                    context: "select_rows".into(),
                    expected: format!("row < {}", self.rows),
                    actual: format!("row {i}"),
                });
            }
            data.extend_from_slice(self.row(i));
        }
        Ok(Self {
            rows: indices.len(),
            cols: self.cols,
            data,
        })
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn require_finite(&self, context: &str) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(CoreError::NonFinite(context.into()))
        }
    }

    /// Largest absolute difference between two equally shaped matrices.
    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        self.require_same_shape(other, "max_abs_diff")?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }
}

/// Runs `per_row` for every output row, in parallel when the feature is on and
/// the work is large enough.
fn dispatch_rows(
    out: &mut [f64],
    row_width: usize,
    work: usize,
    per_row: impl Fn(usize, &mut [f64]) + Sync,
) {
    #[cfg(feature = "parallel")]
    {
        if work >= PAR_WORK_THRESHOLD {
            use rayon::prelude::*;
            out.par_chunks_mut(row_width)
                .enumerate()
                .for_each(|(i, row)| per_row(i, row));
            return;
        }
    }
    let _ = work;
    for (i, row) in out.chunks_mut(row_width).enumerate() {
        per_row(i, row);
    }
}

/// Row kernels shared by the sequential and parallel paths. Public so the
/// bench suite can time both paths explicitly.
pub mod kernels {
    use super::Matrix2D;

    #[inline]
    pub fn matmul_row(a: &Matrix2D, b: &Matrix2D, i: usize, out_row: &mut [f64]) {
        out_row.fill(0.0);
        let a_row = a.row(i);
        for (k, &aik) in a_row.iter().enumerate() {
            let b_row = b.row(k);
            for (o, &bkj) in out_row.iter_mut().zip(b_row) {
                *o += aik * bkj;
            }
        }
    }

    #[inline]
    pub fn matmul_bt_row(a: &Matrix2D, b: &Matrix2D, i: usize, out_row: &mut [f64]) {
        let a_row = a.row(i);
        for (j, o) in out_row.iter_mut().enumerate() {
            let b_row = b.row(j);
            let mut acc = 0.0;
            for (x, y) in a_row.iter().zip(b_row) {
                acc += x * y;
            }
            *o = acc;
        }
    }

    #[inline]
    pub fn matmul_at_row(a: &Matrix2D, b: &Matrix2D, j: usize, out_row: &mut [f64]) {
        out_row.fill(0.0);
        for i in 0..a.rows() {
            let aij = a.get(i, j);
            if aij == 0.0 {
                continue;
            }
            let b_row = b.row(i);
            for (o, &bik) in out_row.iter_mut().zip(b_row) {
                *o += aij * bik;
            }
        }
    }

    /// Sequential matmul, bypassing the dispatch heuristics.
    pub fn matmul_seq(a: &Matrix2D, b: &Matrix2D) -> Matrix2D {
        let mut out = Matrix2D::zeros(a.rows(), b.cols());
        let width = b.cols();
        for (i, row) in out.data_mut().chunks_mut(width).enumerate() {
            matmul_row(a, b, i, row);
        }
        out
    }

    /// Parallel matmul over output rows, bypassing the dispatch heuristics.
    #[cfg(feature = "parallel")]
    pub fn matmul_par(a: &Matrix2D, b: &Matrix2D) -> Matrix2D {
        use rayon::prelude::*;
        let mut out = Matrix2D::zeros(a.rows(), b.cols());
        let width = b.cols();
        out.data_mut()
            .par_chunks_mut(width)
            .enumerate()
            .for_each(|(i, row)| matmul_row(a, b, i, row));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent naive triple-loop multiply used as the matmul oracle.
    fn naive_matmul(a: &Matrix2D, b: &Matrix2D) -> Matrix2D {
        let mut out = Matrix2D::zeros(a.rows(), b.cols());
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut acc = 0.0;
                for k in 0..a.cols() {
                    acc += a.get(i, k) * b.get(k, j);
                }
                out.set(i, j, acc);
            }
        }
        out
    }

    fn arb_matrix(rows: usize, cols: usize, seed: u64) -> Matrix2D {
        // simple deterministic fill, values in [-1, 1)
        let mut state = seed.wrapping_mul(0x9E3779B97F4A7C15).wrapping_add(1);
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
        };
        let data = (0..rows * cols).map(|_| next()).collect();
        Matrix2D::from_vec(rows, cols, data).unwrap()
    }

    #[test]
    fn matmul_matches_naive_oracle() {
        for (m, k, n, seed) in [(3, 2, 4, 1), (7, 5, 3, 2), (1, 9, 1, 3), (16, 16, 16, 4)] {
            let a = arb_matrix(m, k, seed);
            let b = arb_matrix(k, n, seed + 100);
            let got = a.matmul(&b).unwrap();
            let want = naive_matmul(&a, &b);
            assert!(got.max_abs_diff(&want).unwrap() < 1e-12);
        }
    }

    #[test]
    fn matmul_bt_and_at_match_explicit_transpose() {
        let a = arb_matrix(5, 7, 10);
        let b = arb_matrix(4, 7, 11);
        let got = a.matmul_bt(&b).unwrap();
        let want = a.matmul(&b.transpose()).unwrap();
        assert!(got.max_abs_diff(&want).unwrap() < 1e-12);

        let c = arb_matrix(6, 3, 12);
        let d = arb_matrix(6, 5, 13);
        let got = c.matmul_at(&d).unwrap();
        let want = c.transpose().matmul(&d).unwrap();
        assert!(got.max_abs_diff(&want).unwrap() < 1e-12);
    }

    #[cfg(feature = "parallel")]
    #[test]
    fn parallel_kernel_is_bit_identical_to_sequential() {
        let a = arb_matrix(64, 48, 21);
        let b = arb_matrix(48, 52, 22);
        let seq = kernels::matmul_seq(&a, &b);
        let par = kernels::matmul_par(&a, &b);
        assert_eq!(seq, par);
    }

    #[test]
    fn shape_errors_are_reported() {
        let a = Matrix2D::zeros(2, 3);
        let b = Matrix2D::zeros(2, 3);
        assert!(a.matmul(&b).is_err());
        assert!(Matrix2D::from_vec(2, 2, vec![0.0; 3]).is_err());
    }

    #[test]
    fn hstack_and_col_range_round_trip() {
        let a = arb_matrix(4, 3, 31);
        let b = arb_matrix(4, 2, 32);
        let joined = Matrix2D::hstack(&[&a, &b]).unwrap();
        assert_eq!(joined.cols(), 5);
        assert_eq!(joined.col_range(0, 3).unwrap(), a);
        assert_eq!(joined.col_range(3, 5).unwrap(), b);
    }

    #[test]
    fn select_rows_picks_in_order() {
        let m = Matrix2D::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap();
        let picked = m.select_rows(&[2, 0]).unwrap();
        assert_eq!(picked.row(0), &[5.0, 6.0]);
        assert_eq!(picked.row(1), &[1.0, 2.0]);
    }
}
