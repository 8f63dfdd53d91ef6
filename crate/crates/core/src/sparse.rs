//! Compressed sparse row storage for the reconstruction-weight matrices.

use rayon::prelude::*;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct SparseRows {
    ncols: usize,
    offsets: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
}

impl SparseRows {
    /// Builds a matrix from per-row `(column, value)` lists. Columns within a
    /// row must be strictly ascending.
    pub fn from_rows(ncols: usize, rows: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        let mut offsets = Vec::with_capacity(rows.len() + 1);
        offsets.push(0);
        let nnz = rows.iter().map(Vec::len).sum();
        let mut cols = Vec::with_capacity(nnz);
        let mut vals = Vec::with_capacity(nnz);
        for (r, row) in rows.into_iter().enumerate() {
            let mut prev = None;
            for (c, v) in row {
                if c >= ncols || prev.is_some_and(|p| p >= c) {
                    return Err(Error::InvalidArgument(format!(
                        "row {r}: column {c} out of range or not ascending"
                    )));
                }
                prev = Some(c);
                cols.push(c as u32);
                vals.push(v);
            }
            offsets.push(cols.len());
        }
        Ok(SparseRows {
            ncols,
            offsets,
            cols,
            vals,
        })
    }

    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        SparseRows {
            ncols,
            offsets: vec![0; nrows + 1],
            cols: Vec::new(),
            vals: Vec::new(),
        }
    }

    pub fn nrows(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    pub fn row(&self, r: usize) -> (&[u32], &[f64]) {
        let span = self.offsets[r]..self.offsets[r + 1];
        (&self.cols[span.clone()], &self.vals[span])
    }

    pub fn row_mut(&mut self, r: usize) -> (&[u32], &mut [f64]) {
        let span = self.offsets[r]..self.offsets[r + 1];
        (&self.cols[span.clone()], &mut self.vals[span])
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (cols, vals) = self.row(r);
        cols.binary_search(&(c as u32)).map_or(0.0, |i| vals[i])
    }

    pub fn row_sum(&self, r: usize) -> f64 {
        self.row(r).1.iter().sum()
    }

    pub fn rows(&self) -> impl Iterator<Item = (&[u32], &[f64])> {
        (0..self.nrows()).map(move |r| self.row(r))
    }

    pub fn transpose(&self) -> Self {
        let mut counts = vec![0usize; self.ncols + 1];
        for &c in &self.cols {
            counts[c as usize + 1] += 1;
        }
        for i in 0..self.ncols {
            counts[i + 1] += counts[i];
        }
        let offsets = counts.clone();
        let mut next = counts;
        let mut cols = vec![0u32; self.nnz()];
        let mut vals = vec![0.0; self.nnz()];
        for r in 0..self.nrows() {
            let (rc, rv) = self.row(r);
            for (&c, &v) in rc.iter().zip(rv) {
                let slot = next[c as usize];
                cols[slot] = r as u32;
                vals[slot] = v;
                next[c as usize] += 1;
            }
        }
        SparseRows {
            ncols: self.nrows(),
            offsets,
            cols,
            vals,
        }
    }

    /// `y = A x`, parallel over rows. Each row is summed in column order so
    /// the result does not depend on the thread count.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.nrows())
            .into_par_iter()
            .map(|r| {
                let (cols, vals) = self.row(r);
                cols.iter().zip(vals).map(|(&c, v)| v * x[c as usize]).sum()
            })
            .collect()
    }

    /// Dense row-major copy, for tests and small problems.
    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.nrows() * self.ncols];
        for r in 0..self.nrows() {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                out[r * self.ncols + c as usize] = v;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transpose_and_multiply() {
        let m = SparseRows::from_rows(3, vec![vec![(0, 1.0), (2, 2.0)], vec![], vec![(1, 3.0)]]).unwrap();
        let t = m.transpose();
        assert_eq!(t.to_dense(), vec![1.0, 0.0, 0.0, 0.0, 0.0, 3.0, 2.0, 0.0, 0.0]);
        assert_eq!(m.mul_vec(&[1.0, 1.0, 1.0]), vec![3.0, 0.0, 3.0]);
        assert_eq!(m.get(0, 2), 2.0);
        assert_eq!(m.get(1, 2), 0.0);
    }

    #[test]
    fn rejects_unsorted_columns() {
        assert!(SparseRows::from_rows(3, vec![vec![(2, 1.0), (1, 1.0)]]).is_err());
        assert!(SparseRows::from_rows(2, vec![vec![(2, 1.0)]]).is_err());
    }
}
