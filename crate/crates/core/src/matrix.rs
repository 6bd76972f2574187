use crate::error::{ensure, Result};

/// Dense column-major matrix; each column is one snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseColumns {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseColumns {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_col_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        ensure!(
            data.len() == rows * cols,
            Dimension,
            "expected {} values for {rows}x{cols}, got {}",
            rows * cols,
            data.len()
        );
        Ok(Self { rows, cols, data })
    }

    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        let cols = columns.len();
        let rows = columns.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows * cols);
        for (i, c) in columns.iter().enumerate() {
            ensure!(c.len() == rows, Dimension, "column {i} has length {} (expected {rows})", c.len());
            data.extend_from_slice(c);
        }
        Ok(Self { rows, cols, data })
    }

    /// Build from a row-major buffer (`rows` rows of `cols` values).
    pub fn from_row_major(rows: usize, cols: usize, values: &[f64]) -> Result<Self> {
        ensure!(values.len() == rows * cols, Dimension, "row-major buffer has {} values, expected {}", values.len(), rows * cols);
        let mut m = Self::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                m.data[c * rows + r] = values[r * cols + c];
            }
        }
        Ok(m)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn column_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[c * self.rows + r]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Keep only the first `k` rows of every column.
    pub fn truncate_rows(&self, k: usize) -> Self {
        let k = k.min(self.rows);
        let mut out = Self::zeros(k, self.cols);
        for j in 0..self.cols {
            out.column_mut(j).copy_from_slice(&self.column(j)[..k]);
        }
        out
    }
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    squared_distance(a, b).sqrt()
}
