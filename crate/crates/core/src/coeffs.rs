//! Time–space dependent diffusion tensors and advection fields.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::expr::{Expr, Var};
use crate::grid::Grid;

pub type Mat2 = [[f64; 2]; 2];
pub type ScalarFn = Arc<dyn Fn(f64, [f64; 2]) -> f64 + Send + Sync>;
type TensorFn = Arc<dyn Fn(f64, [f64; 2]) -> Mat2 + Send + Sync>;
type VectorFn = Arc<dyn Fn(f64, [f64; 2]) -> [f64; 2] + Send + Sync>;

pub fn scalar_fn(e: Expr) -> ScalarFn {
    Arc::new(move |t, x| e.eval(t, x))
}

/// Eigenvalues `(min, max)` of a symmetric matrix; only `m[0][0]` is used in 1D.
pub fn eigenvalues(m: &Mat2, dim: usize) -> (f64, f64) {
    if dim == 1 {
        return (m[0][0], m[0][0]);
    }
    let mean = 0.5 * (m[0][0] + m[1][1]);
    let half_diff = 0.5 * (m[0][0] - m[1][1]);
    let off = 0.5 * (m[0][1] + m[1][0]);
    let r = half_diff.hypot(off);
    (mean - r, mean + r)
}

/// A diffusion tensor `D(t, x)` with its declared ellipticity interval.
///
/// [`TensorField::eval`] always returns the symmetric part of the underlying
/// evaluator; [`TensorField::raw`] exposes the unsymmetrized value.
#[derive(Clone)]
pub struct TensorField {
    dim: usize,
    eval: TensorFn,
    declared: (f64, f64),
    steady: bool,
}

impl fmt::Debug for TensorField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TensorField")
            .field("dim", &self.dim)
            .field("declared", &self.declared)
            .field("steady", &self.steady)
            .finish_non_exhaustive()
    }
}

impl TensorField {
    pub fn from_fn(
        dim: usize,
        declared: (f64, f64),
        f: impl Fn(f64, [f64; 2]) -> Mat2 + Send + Sync + 'static,
    ) -> Self {
        Self {
            dim,
            eval: Arc::new(f),
            declared,
            steady: false,
        }
    }

    /// Marks the field as independent of time.
    pub fn steady(mut self) -> Self {
        self.steady = true;
        self
    }

    pub fn is_steady(&self) -> bool {
        self.steady
    }

    pub fn constant(dim: usize, m: Mat2) -> Self {
        let (lo, hi) = eigenvalues(&m, dim);
        Self::from_fn(dim, (lo, hi), move |_, _| m).steady()
    }

    pub fn identity(dim: usize) -> Self {
        Self::constant(dim, [[1.0, 0.0], [0.0, 1.0]])
    }

    /// `d(t, x) I`.
    pub fn isotropic(dim: usize, declared: (f64, f64), d: ScalarFn) -> Self {
        Self::from_fn(dim, declared, move |t, x| {
            let v = d(t, x);
            [[v, 0.0], [0.0, v]]
        })
    }

    /// One expression gives an isotropic tensor; `dim * dim` expressions give
    /// the full matrix in row-major order.
    pub fn from_exprs(dim: usize, entries: &[Expr], declared: (f64, f64)) -> Result<Self> {
        let steady = entries.iter().all(|e| !e.depends_on(Var::T));
        let field = match entries.len() {
            1 => Ok(Self::isotropic(dim, declared, scalar_fn(entries[0].clone()))),
            n if n == dim * dim => {
                let e = entries.to_vec();
                Ok(Self::from_fn(dim, declared, move |t, x| {
                    if dim == 1 {
                        [[e[0].eval(t, x), 0.0], [0.0, 0.0]]
                    } else {
                        [
                            [e[0].eval(t, x), e[1].eval(t, x)],
                            [e[2].eval(t, x), e[3].eval(t, x)],
                        ]
                    }
                }))
            }
            n => Err(Error::Config(format!(
                "diffusion tensor in {dim}D needs 1 or {} entries, got {n}",
                dim * dim
            ))),
        }?;
        Ok(if steady { field.steady() } else { field })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn declared(&self) -> (f64, f64) {
        self.declared
    }

    pub fn with_declared(mut self, declared: (f64, f64)) -> Self {
        self.declared = declared;
        self
    }

    pub fn raw(&self, t: f64, x: [f64; 2]) -> Mat2 {
        (self.eval)(t, x)
    }

    pub fn eval(&self, t: f64, x: [f64; 2]) -> Mat2 {
        let m = (self.eval)(t, x);
        if self.dim == 1 {
            return [[m[0][0], 0.0], [0.0, 0.0]];
        }
        let off = 0.5 * (m[0][1] + m[1][0]);
        [[m[0][0], off], [off, m[1][1]]]
    }

    pub fn is_symmetric_at(&self, t: f64, x: [f64; 2]) -> bool {
        let m = self.raw(t, x);
        self.dim == 1 || m[0][1] == m[1][0]
    }
}

/// A velocity field `u(t, x)`; the second component is ignored in 1D.
#[derive(Clone)]
pub struct AdvectionField {
    dim: usize,
    eval: VectorFn,
    zero: bool,
}

impl fmt::Debug for AdvectionField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AdvectionField")
            .field("dim", &self.dim)
            .field("zero", &self.zero)
            .finish_non_exhaustive()
    }
}

impl AdvectionField {
    pub fn zero(dim: usize) -> Self {
        Self {
            dim,
            eval: Arc::new(|_, _| [0.0, 0.0]),
            zero: true,
        }
    }

    pub fn from_fn(dim: usize, f: impl Fn(f64, [f64; 2]) -> [f64; 2] + Send + Sync + 'static) -> Self {
        Self {
            dim,
            eval: Arc::new(f),
            zero: false,
        }
    }

    pub fn from_exprs(dim: usize, comps: &[Expr]) -> Result<Self> {
        if comps.is_empty() {
            return Ok(Self::zero(dim));
        }
        if comps.len() != dim {
            return Err(Error::Config(format!(
                "advection in {dim}D needs {dim} components, got {}",
                comps.len()
            )));
        }
        if comps.iter().all(|c| *c == Expr::num(0.0)) {
            return Ok(Self::zero(dim));
        }
        let c = comps.to_vec();
        Ok(Self::from_fn(dim, move |t, x| {
            if dim == 1 {
                [c[0].eval(t, x), 0.0]
            } else {
                [c[0].eval(t, x), c[1].eval(t, x)]
            }
        }))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_zero(&self) -> bool {
        self.zero
    }

    pub fn eval(&self, t: f64, x: [f64; 2]) -> [f64; 2] {
        let v = (self.eval)(t, x);
        if self.dim == 1 {
            [v[0], 0.0]
        } else {
            v
        }
    }

    pub fn plus(&self, other: &AdvectionField) -> AdvectionField {
        if other.zero {
            return self.clone();
        }
        if self.zero {
            return other.clone();
        }
        let (a, b) = (self.eval.clone(), other.eval.clone());
        AdvectionField::from_fn(self.dim, move |t, x| {
            let (u, v) = (a(t, x), b(t, x));
            [u[0] + v[0], u[1] + v[1]]
        })
    }

    /// Largest `|u_k| / h_k` summed over axes at the given time, over cell centers and faces.
    pub fn max_rate(&self, grid: &Grid, t: f64) -> f64 {
        if self.zero {
            return 0.0;
        }
        let mut best = 0.0f64;
        for idx in 0..grid.len() {
            let x = grid.center(idx);
            let mut rate = 0.0;
            for a in 0..grid.dim() {
                let mut xm = x;
                xm[a] += 0.5 * grid.h(a);
                let u = self.eval(t, x)[a].abs().max(self.eval(t, xm)[a].abs());
                rate += u / grid.h(a);
            }
            best = best.max(rate);
        }
        best
    }
}

/// Empirical eigenvalue range of `d` over all `(t, cell center)` samples.
///
/// Fails with the first offending sample if an eigenvalue leaves the declared interval.
pub fn ellipticity_scan(d: &TensorField, grid: &Grid, times: &[f64]) -> Result<(f64, f64)> {
    if times.is_empty() {
        return Err(Error::Config("ellipticity scan needs at least one time".into()));
    }
    let (lo_decl, hi_decl) = d.declared();
    let tol = 1e-12 * hi_decl.abs().max(1.0);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &t in times {
        for x in grid.centers() {
            let (a, b) = eigenvalues(&d.eval(t, x), d.dim());
            for ev in [a, b] {
                if ev < lo_decl - tol || ev > hi_decl + tol || !ev.is_finite() {
                    return Err(Error::EllipticityViolation {
                        t,
                        x,
                        eigenvalue: ev,
                        lo: lo_decl,
                        hi: hi_decl,
                    });
                }
            }
            lo = lo.min(a);
            hi = hi.max(b);
        }
    }
    Ok((lo, hi))
}

/// Tabulates `sup |h(t,x) - h(s,y)|` over sampled pairs with `|t-s| + |x-y| <= delta`.
///
/// Samples are all `(t, cell center)` pairs. The result is nondecreasing in
/// `delta` regardless of the order of `deltas`.
pub fn modulus_of_continuity(
    h: &dyn Fn(f64, [f64; 2]) -> f64,
    grid: &Grid,
    times: &[f64],
    deltas: &[f64],
) -> Vec<f64> {
    let pts: Vec<(f64, [f64; 2], f64)> = times
        .iter()
        .flat_map(|&t| grid.centers().map(move |x| (t, x)))
        .map(|(t, x)| (t, x, h(t, x)))
        .collect();
    let mut order: Vec<usize> = (0..deltas.len()).collect();
    order.sort_by(|&a, &b| deltas[a].total_cmp(&deltas[b]));
    let sorted: Vec<f64> = order.iter().map(|&i| deltas[i]).collect();
    let mut best = vec![0.0f64; deltas.len()];
    for (i, p) in pts.iter().enumerate() {
        for q in &pts[i + 1..] {
            let dist = (p.0 - q.0).abs() + (p.1[0] - q.1[0]).hypot(p.1[1] - q.1[1]);
            let diff = (p.2 - q.2).abs();
            // First sorted delta that admits this pair.
            let k = sorted.partition_point(|&d| d < dist);
            if k < sorted.len() && diff > best[k] {
                best[k] = diff;
            }
        }
    }
    for k in 1..best.len() {
        best[k] = best[k].max(best[k - 1]);
    }
    let mut out = vec![0.0; deltas.len()];
    for (k, &i) in order.iter().enumerate() {
        out[i] = best[k];
    }
    out
}

/// Splits a general tensor into `D_sym = (D + D^T)/2` and the drift
/// `u_D = div(D_sym - D)` (column divergence, centered differences with the
/// grid spacing), so that `div(-D grad c) = div(-D_sym grad c + u_D c)`.
pub fn symmetrize(d: &TensorField, grid: &Grid) -> (TensorField, AdvectionField) {
    let dim = d.dim();
    let raw = d.eval.clone();
    let sym = {
        let raw = raw.clone();
        let mut s = TensorField::from_fn(dim, d.declared(), move |t, x| {
            let m = raw(t, x);
            let off = 0.5 * (m[0][1] + m[1][0]);
            [[m[0][0], off], [off, m[1][1]]]
        });
        s.steady = d.steady;
        s
    };
    if dim == 1 {
        return (sym, AdvectionField::zero(1));
    }
    let h = [grid.h(0), grid.h(1)];
    // (D_sym - D)_{kl} = (D_lk - D_kl) / 2, so (u_D)_l = sum_k d_k (D_lk - D_kl) / 2.
    let drift = AdvectionField::from_fn(2, move |t, x| {
        let mut u = [0.0; 2];
        for (k, hk) in h.iter().enumerate() {
            let mut xp = x;
            let mut xm = x;
            xp[k] += hk;
            xm[k] -= hk;
            let (mp, mm) = (raw(t, xp), raw(t, xm));
            for (l, ul) in u.iter_mut().enumerate() {
                let ap = 0.5 * (mp[l][k] - mp[k][l]);
                let am = 0.5 * (mm[l][k] - mm[k][l]);
                *ul += (ap - am) / (2.0 * hk);
            }
        }
        u
    });
    (sym, drift)
}
