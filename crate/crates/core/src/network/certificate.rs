//! Constructive certificate of the triangular structure of a mass-action network.
//!
//! The certificate consists of a row/column reordering of the stoichiometric
//! matrix `M = [omega_1 | ... | omega_R]` into staircase form, a unit lower
//! triangular matrix `Q` with `Q M <= 0`, a conservation vector `e`, the bound
//! vector `b` with `Q F(c) <= (1 + sum c) b`, and the scalar weights `q`,
//! `b0` with `sum_i q_i F_i(c) <= (1 + sum c) b0`.
//!
//! `Q`, `b` and `q` are expressed in the *permuted* species order: position
//! `i` refers to species `row_perm[i]`. `e` is in the original order.

use num_traits::{One, Signed, Zero};
use serde::Serialize;

use super::exact::{matmul, to_rational};
use super::{
    check_independent, check_single_product, check_single_positive, find_conservation_vector, format_rational,
    rational_to_f64, Rational, ReactionNetwork,
};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Triangularization {
    pub row_perm: Vec<usize>,
    pub col_perm: Vec<usize>,
    /// Column count of each staircase block `N_1, ..., N_k`.
    pub block_sizes: Vec<usize>,
}

/// Reorders rows and columns of `M` (`P × R`) into staircase form.
///
/// At each stage the lowest-indexed remaining row that is nonpositive and
/// nonzero on the remaining columns becomes the next block row; its strictly
/// negative columns (in their original relative order) become the block.
pub fn triangularize(m: &[Vec<i64>]) -> Result<Triangularization> {
    let p = m.len();
    let r = m.first().map_or(0, Vec::len);
    let mut rows: Vec<usize> = (0..p).collect();
    let mut cols: Vec<usize> = (0..r).collect();
    let mut row_perm = Vec::with_capacity(p);
    let mut col_perm = Vec::with_capacity(r);
    let mut block_sizes = Vec::new();
    while !cols.is_empty() {
        let pick = rows.iter().position(|&i| {
            cols.iter().all(|&j| m[i][j] <= 0) && cols.iter().any(|&j| m[i][j] < 0)
        });
        let Some(pos) = pick else {
            return Err(Error::StructureViolation(format!(
                "no nonzero nonpositive row among {} remaining rows and {} remaining columns",
                rows.len(),
                cols.len()
            )));
        };
        let row = rows.remove(pos);
        let (block, rest): (Vec<usize>, Vec<usize>) = cols.iter().partition(|&&j| m[row][j] < 0);
        row_perm.push(row);
        block_sizes.push(block.len());
        col_perm.extend(block);
        cols = rest;
    }
    row_perm.extend(rows);
    Ok(Triangularization {
        row_perm,
        col_perm,
        block_sizes,
    })
}

/// `M_perm[i][j] = M[row_perm[i]][col_perm[j]]`.
pub fn permute(m: &[Vec<i64>], tri: &Triangularization) -> Vec<Vec<Rational>> {
    let mr = to_rational(m);
    tri.row_perm
        .iter()
        .map(|&i| tri.col_perm.iter().map(|&j| mr[i][j].clone()).collect())
        .collect()
}

/// Builds the unit lower-triangular `Q` with `Q M_perm <= 0`.
///
/// Blocks are processed last to first; block `m` adds the minimal multiple
/// of row `m` to every lower row that cancels its positive entries in the
/// block's columns.
pub fn build_q(m_perm: &[Vec<Rational>], block_sizes: &[usize]) -> Result<Vec<Vec<Rational>>> {
    let p = m_perm.len();
    let mut work = m_perm.to_vec();
    let mut q: Vec<Vec<Rational>> = (0..p)
        .map(|i| {
            (0..p)
                .map(|j| if i == j { Rational::one() } else { Rational::zero() })
                .collect()
        })
        .collect();
    let mut starts = Vec::with_capacity(block_sizes.len());
    let mut offset = 0;
    for &s in block_sizes {
        starts.push(offset);
        offset += s;
    }
    for (blk, (&start, &size)) in starts.iter().zip(block_sizes).enumerate().rev() {
        let block_cols = start..start + size;
        for i in blk + 1..p {
            let mut lambda = Rational::zero();
            for j in block_cols.clone() {
                if !work[i][j].is_positive() {
                    continue;
                }
                let pivot = &work[blk][j];
                if !pivot.is_negative() {
                    return Err(Error::StructureViolation(format!(
                        "pivot ({blk},{j}) is {} but row {i} needs cancelling",
                        format_rational(pivot)
                    )));
                }
                let factor = &work[i][j] / -pivot;
                if factor > lambda {
                    lambda = factor;
                }
            }
            if lambda.is_zero() {
                continue;
            }
            let pivot_row = work[blk].clone();
            for (w, pr) in work[i].iter_mut().zip(&pivot_row) {
                *w += &lambda * pr;
            }
            // Row `blk` of Q is still the unit vector at this point.
            q[i][blk] += &lambda;
        }
    }
    Ok(q)
}

/// Weights `q_j = sum_{i >= j} eps^i Q_ij` and `b0 = sum_i eps^i b_i`
/// (zero-based powers), halving `eps` from one until every `q_j > 0`.
pub fn compute_q(q_mat: &[Vec<Rational>], b: &[Rational]) -> (Vec<Rational>, Rational, Rational) {
    let p = q_mat.len();
    let two = Rational::from_integer(2.into());
    let mut eps = Rational::one();
    loop {
        let powers: Vec<Rational> = std::iter::successors(Some(Rational::one()), |x| Some(x * &eps))
            .take(p)
            .collect();
        let q: Vec<Rational> = (0..p)
            .map(|j| (j..p).map(|i| &powers[i] * &q_mat[i][j]).sum())
            .collect();
        if q.iter().all(Signed::is_positive) {
            let b0 = powers.iter().zip(b).map(|(w, bi)| w * bi).sum();
            return (q, b0, eps);
        }
        eps = eps / &two;
    }
}

/// `b_i = sum_j |(Q M_perm)_ij| k_j kappa_j` in permuted order.
pub fn derive_b(net: &ReactionNetwork, q_mat: &[Vec<Rational>], tri: &Triangularization) -> Vec<Rational> {
    let qm = matmul(q_mat, &permute(&net.stoichiometric_matrix(), tri));
    qm.iter()
        .map(|row| {
            row.iter()
                .zip(&tri.col_perm)
                .map(|(v, &j)| v.abs() * &net.k()[j] * &net.kappa()[j])
                .sum()
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct TriangularCertificate {
    pub row_perm: Vec<usize>,
    pub col_perm: Vec<usize>,
    pub block_sizes: Vec<usize>,
    pub q_matrix: Vec<Vec<Rational>>,
    pub e: Vec<Rational>,
    pub q: Vec<Rational>,
    pub b: Vec<Rational>,
    pub b0: Rational,
    pub eps: Rational,
}

/// Checks independence, single products and conservation, then builds the full certificate.
pub fn certify(net: &ReactionNetwork) -> Result<TriangularCertificate> {
    if !check_independent(net) {
        return Err(Error::StructureViolation(
            "stoichiometric vectors are linearly dependent".into(),
        ));
    }
    if !check_single_product(net) {
        return Err(Error::StructureViolation(
            "some reaction does not have a single product".into(),
        ));
    }
    let m = net.stoichiometric_matrix();
    if !check_single_positive(&m) {
        return Err(Error::StructureViolation(
            "some stoichiometric vector does not have exactly one positive entry".into(),
        ));
    }
    let e = find_conservation_vector(net)?;
    let tri = triangularize(&m)?;
    let q_matrix = build_q(&permute(&m, &tri), &tri.block_sizes)?;
    let b = derive_b(net, &q_matrix, &tri);
    let (q, b0, eps) = compute_q(&q_matrix, &b);
    Ok(TriangularCertificate {
        row_perm: tri.row_perm,
        col_perm: tri.col_perm,
        block_sizes: tri.block_sizes,
        q_matrix,
        e,
        q,
        b,
        b0,
        eps,
    })
}

impl TriangularCertificate {
    pub fn triangularization(&self) -> Triangularization {
        Triangularization {
            row_perm: self.row_perm.clone(),
            col_perm: self.col_perm.clone(),
            block_sizes: self.block_sizes.clone(),
        }
    }

    /// Exact re-check of every structural invariant against `net`.
    pub fn verify(&self, net: &ReactionNetwork) -> Result<()> {
        let fail = |msg: String| Err(Error::StructureViolation(msg));
        let p = net.species();
        for (i, row) in self.q_matrix.iter().enumerate() {
            if !row[i].is_positive() {
                return fail(format!("Q[{i}][{i}] is not positive"));
            }
            if row.iter().skip(i + 1).any(|v| !v.is_zero()) {
                return fail(format!("Q row {i} has entries above the diagonal"));
            }
        }
        let qm = matmul(&self.q_matrix, &permute(&net.stoichiometric_matrix(), &self.triangularization()));
        if qm.iter().flatten().any(Signed::is_positive) {
            return fail("Q M has a positive entry".into());
        }
        if self.e.iter().any(|v| !v.is_positive()) {
            return fail("e is not strictly positive".into());
        }
        for (j, w) in net.omega().iter().enumerate() {
            let dot: Rational = w
                .iter()
                .zip(&self.e)
                .map(|(&wi, ei)| Rational::from_integer(wi.into()) * ei)
                .sum();
            if !dot.is_zero() {
                return fail(format!("<e, omega_{j}> != 0"));
            }
        }
        if self.q.iter().any(|v| !v.is_positive()) {
            return fail("q is not strictly positive".into());
        }
        let (q, b0, _) = compute_q(&self.q_matrix, &self.b);
        if q != self.q || b0 != self.b0 {
            return fail("q/b0 do not match the eps-weighted combination of Q".into());
        }
        if self.b.len() != p || self.b.iter().any(Signed::is_negative) {
            return fail("b must be a nonnegative P-vector".into());
        }
        Ok(())
    }

    /// `Q f` in permuted order for a production vector `f` in original order.
    pub fn apply_q(&self, f: &[f64]) -> Vec<f64> {
        let fp: Vec<f64> = self.row_perm.iter().map(|&i| f[i]).collect();
        self.q_matrix
            .iter()
            .map(|row| row.iter().zip(&fp).map(|(qij, fj)| rational_to_f64(qij) * fj).sum())
            .collect()
    }

    /// `sum_i q_i f_i` for a production vector in original order.
    pub fn weighted_sum(&self, f: &[f64]) -> f64 {
        self.row_perm
            .iter()
            .zip(&self.q)
            .map(|(&i, qi)| rational_to_f64(qi) * f[i])
            .sum()
    }

    pub fn b_f64(&self) -> Vec<f64> {
        self.b.iter().map(rational_to_f64).collect()
    }

    pub fn b0_f64(&self) -> f64 {
        rational_to_f64(&self.b0)
    }

    pub fn e_f64(&self) -> Vec<f64> {
        self.e.iter().map(rational_to_f64).collect()
    }

    /// Structured-text report with exact fractions; indices are one-based.
    pub fn to_report(&self) -> String {
        #[derive(Serialize)]
        struct Report {
            row_perm: Vec<usize>,
            col_perm: Vec<usize>,
            block_sizes: Vec<usize>,
            q_matrix: Vec<Vec<String>>,
            e: Vec<String>,
            q: Vec<String>,
            b: Vec<String>,
            b0: String,
            eps: String,
        }
        let fmt_vec = |v: &[Rational]| v.iter().map(format_rational).collect::<Vec<_>>();
        let report = Report {
            row_perm: self.row_perm.iter().map(|i| i + 1).collect(),
            col_perm: self.col_perm.iter().map(|j| j + 1).collect(),
            block_sizes: self.block_sizes.clone(),
            q_matrix: self.q_matrix.iter().map(|r| fmt_vec(r)).collect(),
            e: fmt_vec(&self.e),
            q: fmt_vec(&self.q),
            b: fmt_vec(&self.b),
            b0: format_rational(&self.b0),
            eps: format_rational(&self.eps),
        };
        toml::to_string(&report).expect("certificate report serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::parse_rational;

    fn q(s: &str) -> Rational {
        parse_rational(s).unwrap()
    }

    fn qmat(rows: &[&[&str]]) -> Vec<Vec<Rational>> {
        rows.iter().map(|r| r.iter().map(|s| q(s)).collect()).collect()
    }

    #[test]
    fn triangularize_single_reaction() {
        let tri = triangularize(&[vec![-1], vec![-1], vec![1]]).unwrap();
        assert_eq!(tri.row_perm, vec![0, 1, 2]);
        assert_eq!(tri.col_perm, vec![0]);
        assert_eq!(tri.block_sizes, vec![1]);
    }

    #[test]
    fn triangularize_fixed_point() {
        // Already staircase: row 0 negative on block {0,1}, row 1 on block {2}.
        let m = vec![
            vec![-1, -2, 0],
            vec![1, 0, -1],
            vec![0, 1, 0],
            vec![0, 0, 1],
        ];
        let tri = triangularize(&m).unwrap();
        assert_eq!(tri.row_perm, vec![0, 1, 2, 3]);
        assert_eq!(tri.col_perm, vec![0, 1, 2]);
        assert_eq!(tri.block_sizes, vec![2, 1]);
    }

    #[test]
    fn triangularize_reports_violation() {
        // Every row has a positive entry.
        let m = vec![vec![1, -1], vec![-1, 1]];
        assert!(matches!(triangularize(&m), Err(Error::StructureViolation(_))));
    }

    #[test]
    fn build_q_single_reaction() {
        let m = qmat(&[&["-1"], &["-1"], &["1"]]);
        let qm = build_q(&m, &[1]).unwrap();
        assert_eq!(qm, qmat(&[&["1", "0", "0"], &["0", "1", "0"], &["1", "0", "1"]]));
        let prod = matmul(&qm, &m);
        assert_eq!(prod, qmat(&[&["-1"], &["-1"], &["0"]]));
    }

    #[test]
    fn build_q_identity_without_positive_entries() {
        let m = qmat(&[&["-1", "0"], &["0", "-2"], &["-1", "-1"]]);
        let qm = build_q(&m, &[1, 1]).unwrap();
        assert_eq!(qm, qmat(&[&["1", "0", "0"], &["0", "1", "0"], &["0", "0", "1"]]));
    }

    #[test]
    fn build_q_zero_pivot_is_violation() {
        let m = qmat(&[&["0"], &["1"]]);
        assert!(build_q(&m, &[1]).is_err());
    }

    #[test]
    fn compute_q_hand_example() {
        let qm = qmat(&[&["1", "0"], &["-3", "2"]]);
        let (qv, b0, eps) = compute_q(&qm, &[q("1"), q("1")]);
        assert_eq!(eps, q("1/4"));
        assert_eq!(qv, vec![q("1/4"), q("1/2")]);
        assert_eq!(b0, q("5/4"));
    }

    #[test]
    fn compute_q_identity() {
        let qm = qmat(&[&["1", "0", "0"], &["0", "1", "0"], &["0", "0", "1"]]);
        let (qv, b0, eps) = compute_q(&qm, &[q("0"), q("0"), q("0")]);
        assert_eq!(eps, q("1"));
        assert_eq!(qv, vec![q("1"), q("1"), q("1")]);
        assert_eq!(b0, q("0"));
    }

    #[test]
    fn abc_certificate() {
        let net = ReactionNetwork::abc(q("1"), q("1/2"));
        let cert = certify(&net).unwrap();
        cert.verify(&net).unwrap();
        assert_eq!(cert.b, vec![q("1/2"), q("1/2"), q("0")]);
        assert_eq!(cert.e, vec![q("1"), q("1"), q("2")]);
        assert!(cert.q.iter().all(Signed::is_positive));
        let report = cert.to_report();
        assert!(report.contains("b = [\"1/2\", \"1/2\", \"0\"]"));
    }

    #[test]
    fn irreversible_network_has_zero_b() {
        let net = ReactionNetwork::new(
            4,
            vec![vec![1, 1, 0, 0], vec![1, 0, 1, 0]],
            vec![vec![0, 0, 1, 0], vec![0, 0, 0, 1]],
            vec![q("2"), q("3")],
            vec![q("0"), q("0")],
        )
        .unwrap();
        let cert = certify(&net).unwrap();
        cert.verify(&net).unwrap();
        assert!(cert.b.iter().all(Zero::is_zero));
        assert!(cert.b0.is_zero());
    }

    /// Exhaustive oracle: some row/column permutation of the 4×2 matrix puts
    /// it in staircase form, and the produced permutation is one of them.
    #[test]
    fn two_reaction_triangularization_matches_exhaustive_search() {
        let m = vec![vec![-1, -1], vec![-1, 0], vec![1, -1], vec![0, 1]];
        let tri = triangularize(&m).unwrap();
        let staircase = |rows: &[usize], cols: &[usize]| -> bool {
            // Row 0 negative exactly on a leading block, zeros after; row 1
            // negative on the remaining columns.
            let r0: Vec<i64> = cols.iter().map(|&j| m[rows[0]][j]).collect();
            let lead = r0.iter().take_while(|&&v| v < 0).count();
            if lead == 0 || r0[lead..].iter().any(|&v| v != 0) {
                return false;
            }
            if lead == cols.len() {
                return true;
            }
            cols[lead..].iter().all(|&j| m[rows[1]][j] < 0)
        };
        let perms4 = permutations(4);
        let perms2 = permutations(2);
        let mut valid = Vec::new();
        for rp in &perms4 {
            for cp in &perms2 {
                if staircase(rp, cp) {
                    valid.push((rp.clone(), cp.clone()));
                }
            }
        }
        assert!(!valid.is_empty());
        assert!(valid.contains(&(tri.row_perm.clone(), tri.col_perm.clone())));
    }

    fn permutations(n: usize) -> Vec<Vec<usize>> {
        if n == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in permutations(n - 1) {
            for pos in 0..=p.len() {
                let mut q = p.clone();
                q.insert(pos, n - 1);
                out.push(q);
            }
        }
        out
    }
}
