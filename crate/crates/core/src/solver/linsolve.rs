//! Sparse matrices and the linear solvers used by the implicit diffusion step.

use crate::error::{Error, Result};

/// Compressed sparse row matrix.
#[derive(Clone, Debug, Default)]
pub struct Csr {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

/// Row-by-row CSR builder; duplicate columns within a row are summed.
#[derive(Debug)]
pub struct CsrBuilder {
    n: usize,
    rows: Vec<Vec<(usize, f64)>>,
}

impl CsrBuilder {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            rows: vec![Vec::new(); n],
        }
    }

    pub fn add(&mut self, row: usize, col: usize, v: f64) {
        if v != 0.0 {
            self.rows[row].push((col, v));
        }
    }

    pub fn build(self) -> Csr {
        let mut row_ptr = Vec::with_capacity(self.n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for mut row in self.rows {
            row.sort_by_key(|e| e.0);
            let mut last: Option<usize> = None;
            for (c, v) in row {
                if last == Some(c) {
                    *vals.last_mut().expect("entry exists") += v;
                } else {
                    cols.push(c);
                    vals.push(v);
                    last = Some(c);
                }
            }
            row_ptr.push(cols.len());
        }
        Csr {
            n: self.n,
            row_ptr,
            cols,
            vals,
        }
    }
}

impl Csr {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|e| e.0 == j).map_or(0.0, |e| e.1)
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = self.row(i).map(|(j, v)| v * x[j]).sum();
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.mul_vec(x, &mut y);
        y
    }

    /// `alpha * I + beta * self`.
    pub fn shifted(&self, alpha: f64, beta: f64) -> Csr {
        let mut b = CsrBuilder::new(self.n);
        for i in 0..self.n {
            b.rows[i].push((i, alpha));
            for (j, v) in self.row(i) {
                b.rows[i].push((j, beta * v));
            }
        }
        b.build()
    }

    /// Adds a diagonal.
    pub fn plus_diag(&self, d: &[f64]) -> Csr {
        let mut b = CsrBuilder::new(self.n);
        for i in 0..self.n {
            b.rows[i].push((i, d[i]));
            b.rows[i].extend(self.row(i));
        }
        b.build()
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| self.row(i).all(|(j, v)| self.get(j, i) == v))
    }

    /// Tridiagonal bands `(lower, diag, upper)` if the matrix has no other entries.
    pub fn tridiagonal(&self) -> Option<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        let n = self.n;
        let (mut lo, mut d, mut up) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        for i in 0..n {
            for (j, v) in self.row(i) {
                if j == i {
                    d[i] = v;
                } else if j + 1 == i {
                    lo[i] = v;
                } else if j == i + 1 {
                    up[i] = v;
                } else {
                    return None;
                }
            }
        }
        Some((lo, d, up))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Tridiagonal,
    Cg,
    BiCgStab,
    Jacobi,
}

#[derive(Clone, Copy, Debug)]
pub struct SolveStats {
    pub method: Method,
    pub iterations: usize,
    pub residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn relative_residual(a: &Csr, x: &[f64], b: &[f64]) -> f64 {
    let ax = a.apply(x);
    let r: f64 = ax.iter().zip(b).map(|(p, q)| (q - p) * (q - p)).sum::<f64>().sqrt();
    let nb = norm(b);
    if nb == 0.0 {
        r
    } else {
        r / nb
    }
}

/// Thomas algorithm; requires a nonsingular matrix that needs no pivoting
/// (e.g. diagonally dominant).
pub fn solve_tridiagonal(lo: &[f64], d: &[f64], up: &[f64], b: &[f64]) -> Vec<f64> {
    let n = d.len();
    let mut c = vec![0.0; n];
    let mut x = vec![0.0; n];
    let mut denom = d[0];
    c[0] = up[0] / denom;
    x[0] = b[0] / denom;
    for i in 1..n {
        denom = d[i] - lo[i] * c[i - 1];
        c[i] = up[i] / denom;
        x[i] = (b[i] - lo[i] * x[i - 1]) / denom;
    }
    for i in (0..n - 1).rev() {
        x[i] -= c[i] * x[i + 1];
    }
    x
}

/// Unpreconditioned conjugate gradients. Returns the iteration count on success.
pub fn cg(a: &Csr, b: &[f64], x: &mut [f64], tol: f64, max_iter: usize) -> Option<usize> {
    let nb = norm(b);
    if nb == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Some(0);
    }
    let mut r: Vec<f64> = a.apply(x).iter().zip(b).map(|(ax, bi)| bi - ax).collect();
    let mut p = r.clone();
    let mut ap = vec![0.0; b.len()];
    let mut rr = dot(&r, &r);
    for it in 0..max_iter {
        if rr.sqrt() <= tol * nb {
            return Some(it);
        }
        a.mul_vec(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 || !pap.is_finite() {
            return None;
        }
        let alpha = rr / pap;
        for i in 0..x.len() {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..p.len() {
            p[i] = r[i] + beta * p[i];
        }
    }
    (rr.sqrt() <= tol * nb).then_some(max_iter)
}

/// Unpreconditioned BiCGSTAB for nonsymmetric systems.
pub fn bicgstab(a: &Csr, b: &[f64], x: &mut [f64], tol: f64, max_iter: usize) -> Option<usize> {
    let n = b.len();
    let nb = norm(b);
    if nb == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Some(0);
    }
    let mut r: Vec<f64> = a.apply(x).iter().zip(b).map(|(ax, bi)| bi - ax).collect();
    let r_hat = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut t = vec![0.0; n];
    for it in 0..max_iter {
        if norm(&r) <= tol * nb {
            return Some(it);
        }
        let rho_new = dot(&r_hat, &r);
        if rho_new == 0.0 || !rho_new.is_finite() {
            return None;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        a.mul_vec(&p, &mut v);
        let rv = dot(&r_hat, &v);
        if rv == 0.0 {
            return None;
        }
        alpha = rho / rv;
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        if norm(&s) <= tol * nb {
            for i in 0..n {
                x[i] += alpha * p[i];
            }
            return Some(it + 1);
        }
        a.mul_vec(&s, &mut t);
        let tt = dot(&t, &t);
        if tt == 0.0 {
            return None;
        }
        omega = dot(&t, &s) / tt;
        for i in 0..n {
            x[i] += alpha * p[i] + omega * s[i];
            r[i] = s[i] - omega * t[i];
        }
        if omega == 0.0 {
            return None;
        }
    }
    (norm(&r) <= tol * nb).then_some(max_iter)
}

/// Jacobi iteration.
pub fn jacobi(a: &Csr, b: &[f64], x: &mut [f64], tol: f64, max_iter: usize) -> Option<usize> {
    let d = a.diag();
    if d.iter().any(|&v| v == 0.0) {
        return None;
    }
    let nb = norm(b).max(f64::MIN_POSITIVE);
    let mut ax = vec![0.0; b.len()];
    for it in 0..max_iter {
        a.mul_vec(x, &mut ax);
        let mut rr = 0.0;
        for i in 0..x.len() {
            let r = b[i] - ax[i];
            rr += r * r;
            x[i] += r / d[i];
        }
        if rr.sqrt() <= tol * nb {
            return Some(it + 1);
        }
        if !rr.is_finite() {
            return None;
        }
    }
    None
}

/// Solves `a x = b` to relative residual `tol`, starting from `x`.
///
/// Tridiagonal systems are solved directly. Otherwise conjugate gradients is
/// used for symmetric matrices and BiCGSTAB for nonsymmetric ones, with Jacobi
/// iteration as the fallback.
pub fn solve(a: &Csr, b: &[f64], x: &mut [f64], tol: f64) -> Result<SolveStats> {
    let n = a.n();
    if let Some((lo, d, up)) = a.tridiagonal() {
        let dominant = (0..n).all(|i| d[i].abs() >= lo[i].abs() + up[i].abs() && d[i] != 0.0);
        if dominant {
            let sol = solve_tridiagonal(&lo, &d, &up, b);
            let residual = relative_residual(a, &sol, b);
            if residual <= tol {
                x.copy_from_slice(&sol);
                return Ok(SolveStats {
                    method: Method::Tridiagonal,
                    iterations: 1,
                    residual,
                });
            }
        }
    }
    let max_iter = 20 * n + 100;
    let start = x.to_vec();
    let (method, result) = if a.is_symmetric() {
        (Method::Cg, cg(a, b, x, tol, max_iter))
    } else {
        (Method::BiCgStab, bicgstab(a, b, x, tol, max_iter))
    };
    if let Some(iterations) = result {
        return Ok(SolveStats {
            method,
            iterations,
            residual: relative_residual(a, x, b),
        });
    }
    x.copy_from_slice(&start);
    match jacobi(a, b, x, tol, 200 * n + 1000) {
        Some(iterations) => Ok(SolveStats {
            method: Method::Jacobi,
            iterations,
            residual: relative_residual(a, x, b),
        }),
        None => Err(Error::LinearSolveFailure {
            iterations: max_iter,
            residual: relative_residual(a, x, b),
        }),
    }
}
