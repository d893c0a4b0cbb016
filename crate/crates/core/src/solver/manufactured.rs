//! Manufactured solutions: symbolic forcing and space-time error measurement.

use std::sync::Arc;

use super::{StepContext, StepObserver};
use crate::coeffs::ScalarFn;
use crate::error::{Error, Result};
use crate::expr::{self, Expr, Var};
use crate::network::Kinetics;

/// Coefficients of one species in closed form.
#[derive(Clone, Debug)]
pub struct SymbolicCoefficients {
    /// One isotropic entry or `dim * dim` entries in row-major order.
    pub diffusion: Vec<Expr>,
    /// Empty for no advection, otherwise `dim` components.
    pub advection: Vec<Expr>,
}

fn axis_var(k: usize) -> Var {
    if k == 0 {
        Var::X
    } else {
        Var::Y
    }
}

/// `d_t c + div(-D grad c + c u)` for a closed-form `c`.
pub fn transport_residual(c: &Expr, coeffs: &SymbolicCoefficients, dim: usize) -> Result<Expr> {
    let entry = |k: usize, l: usize| -> Result<Expr> {
        match coeffs.diffusion.len() {
            1 => Ok(if k == l { coeffs.diffusion[0].clone() } else { Expr::num(0.0) }),
            n if n == dim * dim => Ok(coeffs.diffusion[k * dim + l].clone()),
            n => Err(Error::Config(format!("diffusion needs 1 or {} entries, got {n}", dim * dim))),
        }
    };
    if !coeffs.advection.is_empty() && coeffs.advection.len() != dim {
        return Err(Error::Config(format!("advection needs {dim} components")));
    }
    let mut out = c.derivative(Var::T);
    for k in 0..dim {
        let mut flux = Expr::num(0.0);
        for l in 0..dim {
            flux = expr::sub(flux, expr::mul(entry(k, l)?, c.derivative(axis_var(l))));
        }
        if let Some(u) = coeffs.advection.get(k) {
            flux = expr::add(flux, expr::mul(c.clone(), u.clone()));
        }
        out = expr::add(out, flux.derivative(axis_var(k)));
    }
    Ok(out)
}

/// Forcing `g_i` such that the closed-form `exact` solves the forced system
/// `d_t c_i + div(-D_i grad c_i + c_i u_i) = f_i(c) + g_i`.
pub fn manufactured_forcing(
    exact: &[Expr],
    coeffs: &[SymbolicCoefficients],
    kinetics: Arc<dyn Kinetics>,
    dim: usize,
) -> Result<Vec<Option<ScalarFn>>> {
    if exact.len() != coeffs.len() || exact.len() != kinetics.species() {
        return Err(Error::Config("manufactured solution needs one entry per species".into()));
    }
    let transport: Vec<Expr> = exact
        .iter()
        .zip(coeffs)
        .map(|(c, k)| transport_residual(c, k, dim))
        .collect::<Result<_>>()?;
    let exact: Arc<Vec<Expr>> = Arc::new(exact.to_vec());
    Ok(transport
        .into_iter()
        .enumerate()
        .map(|(i, tr)| {
            let exact = exact.clone();
            let kin = kinetics.clone();
            let g: ScalarFn = Arc::new(move |t, x| {
                let c: Vec<f64> = exact.iter().map(|e| e.eval(t, x)).collect();
                let mut f = vec![0.0; c.len()];
                kin.production(&c, &mut f);
                tr.eval(t, x) - f[i]
            });
            Some(g)
        })
        .collect())
}

/// `||c_i - exact_i||_{L^2(Q_T)}` by left-endpoint time, midpoint space quadrature.
#[derive(Clone, Debug)]
pub struct ManufacturedError {
    exact: Vec<Expr>,
    sums: Vec<f64>,
}

impl ManufacturedError {
    pub fn new(exact: Vec<Expr>) -> Self {
        let sums = vec![0.0; exact.len()];
        Self { exact, sums }
    }

    pub fn per_species(&self) -> Vec<f64> {
        self.sums.iter().map(|s| s.sqrt()).collect()
    }

    /// Error of the whole system, `(sum_i ||c_i - exact_i||^2)^(1/2)`.
    pub fn total(&self) -> f64 {
        self.sums.iter().sum::<f64>().sqrt()
    }
}

impl StepObserver for ManufacturedError {
    fn observe(&mut self, ctx: &StepContext<'_>) {
        let grid = &ctx.problem.grid;
        let w = ctx.dt * grid.cell_volume();
        for (i, e) in self.exact.iter().enumerate() {
            let s: f64 = grid
                .centers()
                .zip(&ctx.state[i])
                .map(|(x, v)| (v - e.eval(ctx.t, x)).powi(2))
                .sum();
            self.sums[i] += w * s;
        }
    }
}
