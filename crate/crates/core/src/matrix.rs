//! Dense column-stochastic matrices and a pivoted rank routine.

use std::fmt;

use crate::error::{Error, Result};

/// Absolute tolerance on column sums accepted by [`StochasticMatrix`].
pub const COLUMN_SUM_TOLERANCE: f64 = 1e-12;

/// Default relative pivot threshold used by [`rank`].
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Non-negative matrix whose columns each sum to one. Stored row-major.
#[derive(Clone, PartialEq)]
pub struct StochasticMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl StochasticMatrix {
    /// Builds a matrix from row-major entries, validating every column.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::DimensionMismatch(format!(
                "stochastic matrix must be non-empty, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        let m = Self { rows, cols, data };
        m.validate()?;
        Ok(m)
    }

    /// Builds a matrix from its columns.
    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        let cols = columns.len();
        let rows = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != rows) {
            return Err(Error::DimensionMismatch("columns of unequal length".into()));
        }
        let mut data = vec![0.0; rows * cols];
        for (k, column) in columns.iter().enumerate() {
            for (i, &v) in column.iter().enumerate() {
                data[i * cols + k] = v;
            }
        }
        Self::from_row_major(rows, cols, data)
    }

    /// Every column equal to 1/rows.
    pub fn uniform(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![1.0 / rows as f64; rows * cols],
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (idx, &v) in self.data.iter().enumerate() {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::NotStochastic(format!(
                    "entry ({}, {}) = {v}",
                    idx / self.cols,
                    idx % self.cols
                )));
            }
        }
        for k in 0..self.cols {
            let sum: f64 = self.column(k).sum();
            if (sum - 1.0).abs() > COLUMN_SUM_TOLERANCE {
                return Err(Error::NotStochastic(format!(
                    "column {k} sums to {sum:.17}"
                )));
            }
        }
        Ok(())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, k: usize) -> f64 {
        self.data[i * self.cols + k]
    }

    pub fn column(&self, k: usize) -> impl Iterator<Item = f64> + '_ {
        (0..self.rows).map(move |i| self.get(i, k))
    }

    pub fn as_row_major(&self) -> &[f64] {
        &self.data
    }

    /// Product `self · rhs`, row-major `rows × rhs.cols`. The product of two
    /// column-stochastic matrices is column-stochastic.
    pub fn product(&self, rhs: &StochasticMatrix) -> Result<Vec<f64>> {
        if self.cols != rhs.rows {
            return Err(Error::DimensionMismatch(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = vec![0.0; self.rows * rhs.cols];
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                let row = &mut out[i * rhs.cols..(i + 1) * rhs.cols];
                for (j, o) in row.iter_mut().enumerate() {
                    *o += a * rhs.get(k, j);
                }
            }
        }
        Ok(out)
    }

    /// Full rank means rank = min(rows, cols).
    pub fn is_full_rank(&self, tolerance: f64) -> bool {
        rank(&self.data, self.rows, self.cols, tolerance) == self.rows.min(self.cols)
    }
}

impl fmt::Debug for StochasticMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "StochasticMatrix {}x{} [", self.rows, self.cols)?;
        for row in self.data.chunks(self.cols) {
            writeln!(f, "  {row:?}")?;
        }
        write!(f, "]")
    }
}

/// Rank of a row-major `rows × cols` matrix by Gaussian elimination with
/// partial pivoting. A pivot counts when its magnitude exceeds
/// `tolerance · max|entry|`.
pub fn rank(data: &[f64], rows: usize, cols: usize, tolerance: f64) -> usize {
    assert_eq!(data.len(), rows * cols, "rank: data length does not match shape");
    let scale = data.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    if scale == 0.0 {
        return 0;
    }
    let threshold = tolerance * scale;
    let mut a = data.to_vec();
    let mut rank = 0;
    for col in 0..cols {
        if rank == rows {
            break;
        }
        let (pivot_row, pivot_abs) = (rank..rows)
            .map(|r| (r, a[r * cols + col].abs()))
            .fold((rank, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if pivot_abs <= threshold {
            continue;
        }
        if pivot_row != rank {
            for c in 0..cols {
                a.swap(pivot_row * cols + c, rank * cols + c);
            }
        }
        let pivot = a[rank * cols + col];
        for r in rank + 1..rows {
            let factor = a[r * cols + col] / pivot;
            if factor == 0.0 {
                continue;
            }
            for c in col..cols {
                a[r * cols + c] -= factor * a[rank * cols + c];
            }
        }
        rank += 1;
    }
    rank
}
