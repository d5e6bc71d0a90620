//! Exact dense linear algebra over the rationals.
//!
//! Small systems only: Gauss-Jordan with leftmost-pivot selection, no
//! pivoting heuristics needed since arithmetic is exact.

use num_rational::BigRational;
use num_traits::{One, Zero};

pub type Mat = Vec<Vec<BigRational>>;

/// Outcome of solving `A x = b` with a designated canonical solution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SolveOutcome {
    /// No solution: some row reduces to `0 = c`, `c != 0`.
    Inconsistent,
    /// Canonical solution with free (non-pivot) coordinates set to zero,
    /// plus the number of free coordinates.
    Solved { x: Vec<BigRational>, kernel_dim: usize },
}

/// Reduce `[A | b]` and read off the canonical solution.
pub fn solve(a: &Mat, b: &[BigRational]) -> SolveOutcome {
    let rows = a.len();
    let cols = if rows == 0 { 0 } else { a[0].len() };
    debug_assert!(a.iter().all(|r| r.len() == cols));
    debug_assert_eq!(b.len(), rows);

    let mut m: Vec<Vec<BigRational>> = a
        .iter()
        .zip(b)
        .map(|(r, rhs)| {
            let mut row = r.clone();
            row.push(rhs.clone());
            row
        })
        .collect();

    let mut pivot_cols: Vec<usize> = Vec::new();
    let mut rank = 0usize;
    for col in 0..cols {
        let Some(p) = (rank..rows).find(|&r| !m[r][col].is_zero()) else {
            continue;
        };
        m.swap(rank, p);
        let inv = m[rank][col].recip();
        for x in m[rank].iter_mut() {
            *x *= &inv;
        }
        for r in 0..rows {
            if r != rank && !m[r][col].is_zero() {
                let f = m[r][col].clone();
                for c in col..=cols {
                    let delta = &f * &m[rank][c];
                    m[r][c] -= delta;
                }
            }
        }
        pivot_cols.push(col);
        rank += 1;
        if rank == rows {
            break;
        }
    }

    for r in rank..rows {
        if !m[r][cols].is_zero() {
            return SolveOutcome::Inconsistent;
        }
    }

    let mut x = vec![BigRational::zero(); cols];
    for (r, &col) in pivot_cols.iter().enumerate() {
        x[col] = m[r][cols].clone();
    }
    SolveOutcome::Solved { x, kernel_dim: cols - rank }
}

/// Exact inverse of a square matrix; `None` when singular.
pub fn invert(a: &Mat) -> Option<Mat> {
    let n = a.len();
    debug_assert!(a.iter().all(|r| r.len() == n));
    let mut m: Vec<Vec<BigRational>> = a
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mut row = r.clone();
            row.extend((0..n).map(|j| {
                if i == j {
                    BigRational::one()
                } else {
                    BigRational::zero()
                }
            }));
            row
        })
        .collect();

    for col in 0..n {
        let p = (col..n).find(|&r| !m[r][col].is_zero())?;
        m.swap(col, p);
        let inv = m[col][col].recip();
        for x in m[col].iter_mut() {
            *x *= &inv;
        }
        for r in 0..n {
            if r != col && !m[r][col].is_zero() {
                let f = m[r][col].clone();
                for c in 0..2 * n {
                    let delta = &f * &m[col][c];
                    m[r][c] -= delta;
                }
            }
        }
    }
    Some(m.into_iter().map(|row| row[n..].to_vec()).collect())
}
