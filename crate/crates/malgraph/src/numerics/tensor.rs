//! Dense row-major f64 matrices and the handful of kernels the models need.
//!
//! This is deliberately not a general tensor library: everything in the
//! training stack is rank-2, so a flat `Vec<f64>` with explicit shape checks
//! keeps the numeric code auditable.

use rayon::prelude::*;

/// Row-major 2-D tensor of `f64`.
///
/// Shape mismatches in the arithmetic methods are programming errors and
/// panic with both shapes in the message; data-dependent failures are
/// reported as errors by the ops built on top.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor2 {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

/// Element count above which matmul fans out over rows with rayon.
/// Each output element is still reduced in a fixed order, so parallel and
/// serial results are bit-identical.
const PAR_MATMUL_THRESHOLD: usize = 1 << 16;

impl Tensor2 {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor2 { rows, cols, values: vec![0.0; rows * cols] }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Tensor2 { rows, cols, values: vec![value; rows * cols] }
    }

    /// Builds a tensor from a flat row-major buffer.
    ///
    /// Panics if `values.len() != rows * cols`.
    pub fn from_vec(rows: usize, cols: usize, values: Vec<f64>) -> Self {
        assert_eq!(
            values.len(),
            rows * cols,
            "tensor buffer length {} does not match shape {rows}x{cols}",
            values.len()
        );
        Tensor2 { rows, cols, values }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        if rows.is_empty() {
            return Tensor2::zeros(0, 0);
        }
        let cols = rows[0].len();
        let mut values = Vec::with_capacity(rows.len() * cols);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), cols, "row {i} has length {} but row 0 has {cols}", row.len());
            values.extend_from_slice(row);
        }
        Tensor2 { rows: rows.len(), cols, values }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn shape_string(&self) -> String {
        format!("{}x{}", self.rows, self.cols)
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.values[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.values[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.values[r * self.cols..(r + 1) * self.cols]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// `self * other`, panicking if the inner dimensions disagree.
    pub fn matmul(&self, other: &Tensor2) -> Tensor2 {
        assert_eq!(
            self.cols,
            other.rows,
            "matmul shape mismatch: {} * {}",
            self.shape_string(),
            other.shape_string()
        );
        let mut out = Tensor2::zeros(self.rows, other.cols);
        let n_cols = other.cols;
        let inner = self.cols;
        let fill_row = |i: usize, out_row: &mut [f64]| {
            let a_row = &self.values[i * inner..(i + 1) * inner];
            for (k, &a) in a_row.iter().enumerate() {
                let b_row = &other.values[k * n_cols..(k + 1) * n_cols];
                for (o, &b) in out_row.iter_mut().zip(b_row.iter()) {
                    *o += a * b;
                }
            }
        };
        if self.rows * other.cols * inner >= PAR_MATMUL_THRESHOLD && n_cols > 0 {
            out.values
                .par_chunks_mut(n_cols)
                .enumerate()
                .for_each(|(i, out_row)| fill_row(i, out_row));
        } else if n_cols > 0 {
            for (i, out_row) in out.values.chunks_mut(n_cols).enumerate() {
                fill_row(i, out_row);
            }
        }
        out
    }

    pub fn transpose(&self) -> Tensor2 {
        let mut out = Tensor2::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.values[c * self.rows + r] = self.values[r * self.cols + c];
            }
        }
        out
    }

    /// `self.transpose() * other` without materializing the transpose.
    ///
    /// Each output entry accumulates over shared rows in ascending order,
    /// exactly as `self.transpose().matmul(other)` would, so the results are
    /// bit-identical while skipping the transpose allocation (which dominates
    /// gradient steps on wide feature matrices).
    pub fn matmul_tn(&self, other: &Tensor2) -> Tensor2 {
        assert_eq!(
            self.rows,
            other.rows,
            "matmul_tn shape mismatch: {} vs {}",
            self.shape_string(),
            other.shape_string()
        );
        let out_rows = self.cols;
        let out_cols = other.cols;
        let mut out = Tensor2::zeros(out_rows, out_cols);
        if out_rows == 0 || out_cols == 0 {
            return out;
        }
        // Work in blocks of output rows: the block stays cache-resident while
        // streaming the shared rows, and blocks parallelize independently.
        const BLOCK_ROWS: usize = 8;
        let width = self.cols;
        let fill_block = |block_index: usize, block: &mut [f64]| {
            let k_lo = block_index * BLOCK_ROWS;
            for i in 0..self.rows {
                let a_row = &self.values[i * width..(i + 1) * width];
                let b_row = &other.values[i * out_cols..(i + 1) * out_cols];
                for (kk, out_row) in block.chunks_mut(out_cols).enumerate() {
                    let a = a_row[k_lo + kk];
                    for (o, &b) in out_row.iter_mut().zip(b_row.iter()) {
                        *o += a * b;
                    }
                }
            }
        };
        if self.rows * out_rows * out_cols >= PAR_MATMUL_THRESHOLD {
            out.values
                .par_chunks_mut(BLOCK_ROWS * out_cols)
                .enumerate()
                .for_each(|(b, block)| fill_block(b, block));
        } else {
            for (b, block) in out.values.chunks_mut(BLOCK_ROWS * out_cols).enumerate() {
                fill_block(b, block);
            }
        }
        out
    }

    /// `self * other.transpose()` without materializing the transpose; the
    /// accumulation order matches `self.matmul(&other.transpose())`, so the
    /// results are bit-identical.
    pub fn matmul_nt(&self, other: &Tensor2) -> Tensor2 {
        assert_eq!(
            self.cols,
            other.cols,
            "matmul_nt shape mismatch: {} vs {}",
            self.shape_string(),
            other.shape_string()
        );
        let inner = self.cols;
        let out_cols = other.rows;
        let mut out = Tensor2::zeros(self.rows, out_cols);
        if inner == 0 || out_cols == 0 {
            return out;
        }
        let fill_row = |i: usize, out_row: &mut [f64]| {
            let a_row = &self.values[i * inner..(i + 1) * inner];
            for (k, slot) in out_row.iter_mut().enumerate() {
                let b_row = &other.values[k * inner..(k + 1) * inner];
                let mut acc = 0.0;
                for (&a, &b) in a_row.iter().zip(b_row.iter()) {
                    acc += a * b;
                }
                *slot = acc;
            }
        };
        if self.rows * out_cols * inner >= PAR_MATMUL_THRESHOLD {
            out.values
                .par_chunks_mut(out_cols)
                .enumerate()
                .for_each(|(i, out_row)| fill_row(i, out_row));
        } else {
            for (i, out_row) in out.values.chunks_mut(out_cols).enumerate() {
                fill_row(i, out_row);
            }
        }
        out
    }

    fn zip_with(&self, other: &Tensor2, op: &str, f: impl Fn(f64, f64) -> f64) -> Tensor2 {
        assert_eq!(
            self.shape(),
            other.shape(),
            "{op} shape mismatch: {} vs {}",
            self.shape_string(),
            other.shape_string()
        );
        Tensor2 {
            rows: self.rows,
            cols: self.cols,
            values: self
                .values
                .iter()
                .zip(other.values.iter())
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn add(&self, other: &Tensor2) -> Tensor2 {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor2) -> Tensor2 {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    pub fn hadamard(&self, other: &Tensor2) -> Tensor2 {
        self.zip_with(other, "hadamard", |a, b| a * b)
    }

    pub fn add_assign(&mut self, other: &Tensor2) {
        assert_eq!(
            self.shape(),
            other.shape(),
            "add_assign shape mismatch: {} vs {}",
            self.shape_string(),
            other.shape_string()
        );
        for (a, b) in self.values.iter_mut().zip(other.values.iter()) {
            *a += b;
        }
    }

    pub fn scale(&self, s: f64) -> Tensor2 {
        self.map(|v| v * s)
    }

    pub fn scale_in_place(&mut self, s: f64) {
        for v in &mut self.values {
            *v *= s;
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor2 {
        Tensor2 {
            rows: self.rows,
            cols: self.cols,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Adds a 1 x cols row vector to every row.
    pub fn add_row_broadcast(&self, bias: &Tensor2) -> Tensor2 {
        assert_eq!(
            (1, self.cols),
            bias.shape(),
            "bias broadcast mismatch: {} with bias {}",
            self.shape_string(),
            bias.shape_string()
        );
        let mut out = self.clone();
        for r in 0..out.rows {
            for (o, b) in out.row_mut(r).iter_mut().zip(bias.values.iter()) {
                *o += b;
            }
        }
        out
    }

    /// Column sums as a 1 x cols tensor.
    pub fn col_sums(&self) -> Tensor2 {
        let mut out = Tensor2::zeros(1, self.cols);
        for r in 0..self.rows {
            for (o, v) in out.values.iter_mut().zip(self.row(r).iter()) {
                *o += v;
            }
        }
        out
    }

    /// Stacks tensors vertically; they must share a column count.
    pub fn vstack(parts: &[&Tensor2]) -> Tensor2 {
        if parts.is_empty() {
            return Tensor2::zeros(0, 0);
        }
        let cols = parts[0].cols;
        let rows = parts.iter().map(|p| p.rows).sum();
        let mut values = Vec::with_capacity(rows * cols);
        for p in parts {
            assert_eq!(p.cols, cols, "vstack column mismatch: {} vs {cols}", p.cols);
            values.extend_from_slice(&p.values);
        }
        Tensor2 { rows, cols, values }
    }

    /// Concatenates tensors horizontally; they must share a row count.
    pub fn hconcat(parts: &[&Tensor2]) -> Tensor2 {
        if parts.is_empty() {
            return Tensor2::zeros(0, 0);
        }
        let rows = parts[0].rows;
        let cols: usize = parts.iter().map(|p| p.cols).sum();
        let mut out = Tensor2::zeros(rows, cols);
        let mut offset = 0;
        for p in parts {
            assert_eq!(p.rows, rows, "hconcat row mismatch: {} vs {rows}", p.rows);
            for r in 0..rows {
                out.values[r * cols + offset..r * cols + offset + p.cols]
                    .copy_from_slice(p.row(r));
            }
            offset += p.cols;
        }
        out
    }
}

/// Sums `values` as a pure function of their multiset, ignoring order.
///
/// Floating-point addition is not associative, so reducing the same multiset
/// of summands in two different orders can differ in the last ulp. Summing in
/// total order instead makes the reduction order-independent, which is what
/// lets graph-level quantities come out bit-identical under node relabeling.
/// The buffer is scratch space; its final element order is unspecified.
pub fn sum_order_independent(values: &mut [f64]) -> f64 {
    match values {
        [] => 0.0,
        [a] => *a,
        // A two-term sum is already commutative bit-for-bit.
        [a, b] => *a + *b,
        _ => {
            if values.len() <= 24 {
                // Insertion sort; equal total-order keys are bit-identical,
                // so any correct sort yields the same summation order.
                for i in 1..values.len() {
                    let mut j = i;
                    while j > 0 && values[j - 1].total_cmp(&values[j]).is_gt() {
                        values.swap(j - 1, j);
                        j -= 1;
                    }
                }
            } else {
                values.sort_unstable_by(f64::total_cmp);
            }
            values.iter().sum()
        }
    }
}
