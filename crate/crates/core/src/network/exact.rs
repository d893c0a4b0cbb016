//! Exact linear algebra over the integers and rationals.

use num_bigint::BigInt;
use num_traits::{One, Zero};

use super::Rational;

/// Rank of an integer matrix by fraction-free (Bareiss) elimination.
pub fn integer_rank(m: &[Vec<i64>]) -> usize {
    let rows = m.len();
    if rows == 0 {
        return 0;
    }
    let cols = m[0].len();
    let mut a: Vec<Vec<BigInt>> = m
        .iter()
        .map(|r| r.iter().map(|&v| BigInt::from(v)).collect())
        .collect();
    let mut prev = BigInt::one();
    let mut rank = 0;
    for col in 0..cols {
        if rank == rows {
            break;
        }
        let Some(pivot) = (rank..rows).find(|&r| !a[r][col].is_zero()) else {
            continue;
        };
        a.swap(rank, pivot);
        for r in rank + 1..rows {
            for c in col + 1..cols {
                // Exact by Sylvester's identity.
                let v = (&a[rank][col] * &a[r][c] - &a[r][col] * &a[rank][c]) / &prev;
                a[r][c] = v;
            }
            a[r][col] = BigInt::zero();
        }
        prev = a[rank][col].clone();
        rank += 1;
    }
    rank
}

/// Reduced row echelon form; returns the pivot columns.
pub fn rref(a: &mut [Vec<Rational>]) -> Vec<usize> {
    let rows = a.len();
    let cols = a.first().map_or(0, Vec::len);
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..cols {
        if r == rows {
            break;
        }
        let Some(p) = (r..rows).find(|&i| !a[i][c].is_zero()) else {
            continue;
        };
        a.swap(r, p);
        let inv = a[r][c].recip();
        for v in a[r].iter_mut() {
            *v = &*v * &inv;
        }
        for i in 0..rows {
            if i != r && !a[i][c].is_zero() {
                let f = a[i][c].clone();
                for j in 0..cols {
                    let delta = &f * &a[r][j];
                    a[i][j] -= delta;
                }
            }
        }
        pivots.push(c);
        r += 1;
    }
    pivots
}

/// Basis of `{x : A x = 0}`.
pub fn nullspace(a: &[Vec<Rational>]) -> Vec<Vec<Rational>> {
    let cols = a.first().map_or(0, Vec::len);
    let mut work = a.to_vec();
    let pivots = rref(&mut work);
    let free: Vec<usize> = (0..cols).filter(|c| !pivots.contains(c)).collect();
    free.iter()
        .map(|&f| {
            let mut x = vec![Rational::zero(); cols];
            x[f] = Rational::one();
            for (row, &p) in pivots.iter().enumerate() {
                x[p] = -work[row][f].clone();
            }
            x
        })
        .collect()
}

pub fn to_rational(m: &[Vec<i64>]) -> Vec<Vec<Rational>> {
    m.iter()
        .map(|r| r.iter().map(|&v| Rational::from_integer(v.into())).collect())
        .collect()
}

pub fn matmul(a: &[Vec<Rational>], b: &[Vec<Rational>]) -> Vec<Vec<Rational>> {
    let inner = b.len();
    let cols = b.first().map_or(0, Vec::len);
    a.iter()
        .map(|row| {
            (0..cols)
                .map(|j| {
                    (0..inner).fold(Rational::zero(), |acc, k| {
                        if row[k].is_zero() {
                            acc
                        } else {
                            acc + &row[k] * &b[k][j]
                        }
                    })
                })
                .collect()
        })
        .collect()
}
