//! Compressed sparse row storage and the `row col value` triplet text format.
//!
//! The triplet format starts with a header line `# M=<rows> nnz=<k>` for
//! square matrices, or `# M=<rows> N=<cols> nnz=<k>` for rectangular ones,
//! followed by one `row col value` line per stored entry. Further `#` lines
//! are comments.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        SparseMatrix {
            rows,
            cols,
            row_ptr: vec![0; rows + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Builds a matrix from `(row, col, value)` triplets. Duplicate
    /// coordinates are summed; exact zeros are not stored.
    pub fn from_triplets<I>(rows: usize, cols: usize, triplets: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        let mut acc: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for (r, c, v) in triplets {
            if r >= rows || c >= cols {
                return Err(Error::DimensionMismatch(format!(
                    "entry ({r}, {c}) outside {rows}x{cols}"
                )));
            }
            *acc.entry((r, c)).or_insert(0.0) += v;
        }
        Ok(Self::from_sorted_map(rows, cols, acc))
    }

    pub(crate) fn from_sorted_map(
        rows: usize,
        cols: usize,
        acc: BTreeMap<(usize, usize), f64>,
    ) -> Self {
        let mut row_ptr = vec![0usize; rows + 1];
        let mut col_idx = Vec::with_capacity(acc.len());
        let mut values = Vec::with_capacity(acc.len());
        for ((r, c), v) in acc {
            if v == 0.0 {
                continue;
            }
            row_ptr[r + 1] += 1;
            col_idx.push(c);
            values.push(v);
        }
        for r in 0..rows {
            row_ptr[r + 1] += row_ptr[r];
        }
        SparseMatrix {
            rows,
            cols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn from_dense(dense: &DMatrix<f64>) -> Self {
        let mut acc = BTreeMap::new();
        for r in 0..dense.nrows() {
            for c in 0..dense.ncols() {
                let v = dense[(r, c)];
                if v != 0.0 {
                    acc.insert((r, c), v);
                }
            }
        }
        Self::from_sorted_map(dense.nrows(), dense.ncols(), acc)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        if row >= self.rows {
            return 0.0;
        }
        let span = self.row_ptr[row]..self.row_ptr[row + 1];
        match self.col_idx[span.clone()].binary_search(&col) {
            Ok(pos) => self.values[span.start + pos],
            Err(_) => 0.0,
        }
    }

    /// Stored `(col, value)` pairs of one row, ascending by column.
    pub fn row(&self, row: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[row]..self.row_ptr[row + 1];
        self.col_idx[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    /// All stored entries in row-major order.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.rows).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.rows).map(|r| self.row(r).map(|(_, v)| v).sum()).collect()
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Same sparsity pattern, transformed values. Entries mapped to zero are
    /// dropped.
    pub fn map_entries<F>(&self, mut f: F) -> SparseMatrix
    where
        F: FnMut(usize, usize, f64) -> f64,
    {
        let mut acc = BTreeMap::new();
        for (r, c, v) in self.triplets() {
            let nv = f(r, c, v);
            if nv != 0.0 {
                acc.insert((r, c), nv);
            }
        }
        Self::from_sorted_map(self.rows, self.cols, acc)
    }

    pub fn transpose(&self) -> SparseMatrix {
        let mut acc = BTreeMap::new();
        for (r, c, v) in self.triplets() {
            acc.insert((c, r), v);
        }
        Self::from_sorted_map(self.cols, self.rows, acc)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.rows, self.cols);
        for (r, c, v) in self.triplets() {
            out[(r, c)] = v;
        }
        out
    }

    /// `self * rhs` for a dense right-hand side.
    pub fn mul_dense(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(self.cols, rhs.nrows(), "sparse * dense shape mismatch");
        let k = rhs.ncols();
        let mut out = DMatrix::zeros(self.rows, k);
        for r in 0..self.rows {
            for (c, v) in self.row(r) {
                for j in 0..k {
                    out[(r, j)] += v * rhs[(c, j)];
                }
            }
        }
        out
    }

    /// `selfᵀ * rhs` without materializing the transpose.
    pub fn tr_mul_dense(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(self.rows, rhs.nrows(), "sparse^T * dense shape mismatch");
        let k = rhs.ncols();
        let mut out = DMatrix::zeros(self.cols, k);
        for r in 0..self.rows {
            for (c, v) in self.row(r) {
                for j in 0..k {
                    out[(c, j)] += v * rhs[(r, j)];
                }
            }
        }
        out
    }

    pub fn to_triplet_text(&self) -> String {
        let mut out = String::new();
        if self.rows == self.cols {
            let _ = writeln!(out, "# M={} nnz={}", self.rows, self.nnz());
        } else {
            let _ = writeln!(
                out,
                "# M={} N={} nnz={}",
                self.rows,
                self.cols,
                self.nnz()
            );
        }
        for (r, c, v) in self.triplets() {
            let _ = writeln!(out, "{r} {c} {v}");
        }
        out
    }

    pub fn parse_triplet_text(text: &str, source_name: &str) -> Result<Self> {
        let bad = |line: usize, message: String| Error::BadLine {
            source_name: source_name.to_string(),
            line,
            message,
        };
        let mut lines = text.lines().enumerate();
        let (rows, cols, nnz) = loop {
            let Some((i, line)) = lines.next() else {
                return Err(bad(1, "missing `# M=` header".into()));
            };
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if !line.starts_with('#') {
                return Err(bad(i + 1, "missing `# M=` header".into()));
            }
            if let Some(header) = parse_header(line) {
                break header;
            }
        };
        let mut trip = Vec::with_capacity(nnz);
        for (i, line) in lines {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split_whitespace();
            let (Some(r), Some(c), Some(v), None) =
                (parts.next(), parts.next(), parts.next(), parts.next())
            else {
                return Err(bad(i + 1, "expected `row col value`".into()));
            };
            let r: usize = r.parse().map_err(|e| bad(i + 1, format!("row: {e}")))?;
            let c: usize = c.parse().map_err(|e| bad(i + 1, format!("col: {e}")))?;
            let v: f64 = v.parse().map_err(|e| bad(i + 1, format!("value: {e}")))?;
            if r >= rows || c >= cols {
                return Err(bad(i + 1, format!("entry ({r}, {c}) outside {rows}x{cols}")));
            }
            trip.push((r, c, v));
        }
        if trip.len() != nnz {
            return Err(bad(
                1,
                format!("header declares nnz={nnz}, found {} entries", trip.len()),
            ));
        }
        Self::from_triplets(rows, cols, trip)
    }
}

fn parse_header(line: &str) -> Option<(usize, usize, usize)> {
    let mut m = None;
    let mut n = None;
    let mut nnz = None;
    for tok in line.trim_start_matches('#').split_whitespace() {
        let (key, value) = tok.split_once('=')?;
        let value: usize = value.parse().ok()?;
        match key {
            "M" => m = Some(value),
            "N" => n = Some(value),
            "nnz" => nnz = Some(value),
            _ => {}
        }
    }
    let m = m?;
    Some((m, n.unwrap_or(m), nnz?))
}

/// Writes a dense matrix in triplet format, keeping only nonzero entries.
pub fn dense_to_triplet_text(dense: &DMatrix<f64>) -> String {
    let mut out = String::new();
    let nnz = dense.iter().filter(|v| **v != 0.0).count();
    let _ = writeln!(
        out,
        "# M={} N={} nnz={}",
        dense.nrows(),
        dense.ncols(),
        nnz
    );
    for r in 0..dense.nrows() {
        for c in 0..dense.ncols() {
            let v = dense[(r, c)];
            if v != 0.0 {
                let _ = writeln!(out, "{r} {c} {v}");
            }
        }
    }
    out
}

pub fn dense_from_triplet_text(text: &str, source_name: &str) -> Result<DMatrix<f64>> {
    Ok(SparseMatrix::parse_triplet_text(text, source_name)?.to_dense())
}
