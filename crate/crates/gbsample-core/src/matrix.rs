//! Minimal dense square matrix used for the class-wise gradient statistics.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write as _;

use crate::error::{Error, Result};
use crate::fmath;

/// Row-major dense square matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl SquareMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![0.0; dim * dim],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.len();
        let mut data = Vec::with_capacity(dim * dim);
        for row in rows {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Self { dim, data })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.dim + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.dim + col] = value;
    }

    #[inline]
    pub fn add_to(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.dim + col] += value;
    }

    #[inline]
    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.dim..(row + 1) * self.dim]
    }

    pub fn fill(&mut self, value: f64) {
        self.data.iter_mut().for_each(|v| *v = value);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Max absolute entry of a row.
    pub fn row_inf_norm(&self, row: usize) -> f64 {
        self.row(row).iter().fold(0.0, |m, v| m.max(fmath::abs(*v)))
    }

    /// Text dump: one row per line, space-separated decimals. The shortest
    /// round-trip representation is used, so `from_text` recovers the exact
    /// bit pattern.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for r in 0..self.dim {
            for (c, v) in self.row(r).iter().enumerate() {
                if c > 0 {
                    out.push(' ');
                }
                let _ = write!(out, "{v}");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let row: core::result::Result<Vec<f64>, _> =
                line.split_whitespace().map(|t| t.parse::<f64>()).collect();
            match row {
                Ok(row) => rows.push(row),
                Err(e) => {
                    return Err(Error::Parse(alloc::format!("line {}: {e}", lineno + 1)));
                }
            }
        }
        if rows.is_empty() {
            return Err(Error::Parse("empty matrix dump".to_string()));
        }
        Self::from_rows(&rows)
    }

    /// Solves `self * x = b` by Gaussian elimination with partial pivoting.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let n = self.dim;
        if b.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: b.len(),
            });
        }
        let mut a = self.data.clone();
        let mut rhs = b.to_vec();
        for col in 0..n {
            let mut pivot = col;
            let mut best = fmath::abs(a[col * n + col]);
            for r in col + 1..n {
                let v = fmath::abs(a[r * n + col]);
                if v > best {
                    best = v;
                    pivot = r;
                }
            }
            if best < 1e-300 {
                return Err(Error::SingularSystem);
            }
            if pivot != col {
                for c in 0..n {
                    a.swap(col * n + c, pivot * n + c);
                }
                rhs.swap(col, pivot);
            }
            let diag = a[col * n + col];
            for r in col + 1..n {
                let factor = a[r * n + col] / diag;
                if factor == 0.0 {
                    continue;
                }
                for c in col..n {
                    a[r * n + c] -= factor * a[col * n + c];
                }
                rhs[r] -= factor * rhs[col];
            }
        }
        let mut x = vec![0.0; n];
        for row in (0..n).rev() {
            let mut acc = rhs[row];
            for c in row + 1..n {
                acc -= a[row * n + c] * x[c];
            }
            x[row] = acc / a[row * n + row];
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularSystem);
        }
        Ok(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip_is_exact() {
        let mut m = SquareMatrix::zeros(3);
        m.set(0, 0, -1.0 / 3.0);
        m.set(1, 2, 1e-17);
        m.set(2, 1, 12345.6789);
        let back = SquareMatrix::from_text(&m.to_text()).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn solve_identity() {
        let mut m = SquareMatrix::zeros(3);
        for i in 0..3 {
            m.set(i, i, 2.0);
        }
        let x = m.solve(&[2.0, 4.0, 6.0]).unwrap();
        assert_eq!(x, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn solve_rejects_singular() {
        let m = SquareMatrix::zeros(2);
        assert_eq!(m.solve(&[1.0, 1.0]), Err(Error::SingularSystem));
    }

    #[test]
    fn solve_requires_pivoting() {
        // Zero on the leading diagonal; only solvable with row swaps.
        let m = SquareMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let x = m.solve(&[3.0, 5.0]).unwrap();
        assert!((x[0] - 5.0).abs() < 1e-12 && (x[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn parse_error_reports_line() {
        let err = SquareMatrix::from_text("1 2\n3 oops\n").unwrap_err();
        match err {
            Error::Parse(msg) => assert!(msg.contains("line 2")),
            other => panic!("unexpected error {other:?}"),
        }
    }
}
