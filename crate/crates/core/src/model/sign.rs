//! Region sign patterns.
//!
//! The `p` switching functions split state space into `2^p` regions. Column
//! `i` of the sign matrix holds the sign of every switching function inside
//! region `i`; flows are registered in the same column order.

use crate::error::{Error, Result};

/// Largest number of switching functions accepted by default.
pub const DEFAULT_MAX_MANIFOLDS: usize = 8;

/// A `p x 2^p` matrix of `±1` entries enumerating every region sign pattern.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignMatrix {
    rows: usize,
    entries: Vec<i8>,
}

impl SignMatrix {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        1 << self.rows
    }

    /// Sign of switching function `j` in region `i` (both zero-based).
    #[inline]
    pub fn get(&self, j: usize, i: usize) -> i8 {
        self.entries[j * self.cols() + i]
    }

    pub fn row(&self, j: usize) -> &[i8] {
        let c = self.cols();
        &self.entries[j * c..(j + 1) * c]
    }

    pub fn column(&self, i: usize) -> Vec<i8> {
        (0..self.rows).map(|j| self.get(j, i)).collect()
    }

    /// Column whose signs equal `signs` (entries must be `±1`).
    pub fn column_of(&self, signs: &[i8]) -> Option<usize> {
        if signs.len() != self.rows {
            return None;
        }
        (0..self.cols()).find(|&i| (0..self.rows).all(|j| self.get(j, i) == signs[j]))
    }
}

/// Builds the sign matrix for `p` switching functions, `1 <= p <= 8`.
pub fn build_sign_matrix(p: usize) -> Result<SignMatrix> {
    build_sign_matrix_capped(p, DEFAULT_MAX_MANIFOLDS)
}

/// Row `j` (zero-based) is `2^(p-1-j)` repetitions of a block made of `2^j`
/// copies of `-1` followed by `2^j` copies of `+1`.
pub fn build_sign_matrix_capped(p: usize, p_max: usize) -> Result<SignMatrix> {
    if p < 1 || p > p_max {
        return Err(Error::InvalidArgument(format!(
            "number of switching functions must lie in 1..={p_max}, got {p}"
        )));
    }
    let cols = 1usize << p;
    let mut entries = Vec::with_capacity(p * cols);
    for j in 0..p {
        let half = 1usize << j;
        let blocks = cols / (2 * half);
        for _ in 0..blocks {
            entries.extend(std::iter::repeat_n(-1i8, half));
            entries.extend(std::iter::repeat_n(1i8, half));
        }
    }
    Ok(SignMatrix { rows: p, entries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn single_manifold() {
        let s = build_sign_matrix(1).unwrap();
        assert_eq!(s.row(0), &[-1, 1]);
    }

    #[test]
    fn two_manifolds() {
        let s = build_sign_matrix(2).unwrap();
        assert_eq!(s.row(0), &[-1, 1, -1, 1]);
        assert_eq!(s.row(1), &[-1, -1, 1, 1]);
        let cols: HashSet<Vec<i8>> = (0..4).map(|i| s.column(i)).collect();
        assert_eq!(cols.len(), 4);
    }

    #[test]
    fn three_manifolds() {
        let s = build_sign_matrix(3).unwrap();
        assert_eq!(s.row(2), &[-1, -1, -1, -1, 1, 1, 1, 1]);
        let cols: HashSet<Vec<i8>> = (0..8).map(|i| s.column(i)).collect();
        assert_eq!(cols.len(), 8);
    }

    #[test]
    fn rejects_out_of_range() {
        assert!(matches!(build_sign_matrix(0), Err(Error::InvalidArgument(_))));
        assert!(matches!(build_sign_matrix(9), Err(Error::InvalidArgument(_))));
        assert!(build_sign_matrix_capped(9, 10).is_ok());
    }

    #[test]
    fn column_lookup() {
        let s = build_sign_matrix(2).unwrap();
        assert_eq!(s.column_of(&[1, -1]), Some(1));
        assert_eq!(s.column_of(&[-1, 1]), Some(2));
        assert_eq!(s.column_of(&[1]), None);
    }
}
