//! Weak-form residual of a computed trajectory against smooth test functions.
//!
//! For a test function `psi` with `psi(T) = 0` the residual of species `i` is
//!
//! `-int c_i^0 psi(0) + int_0^T int (-c_i d_t psi - F_i . grad psi - f_i psi)`
//!
//! where `F_i` is the discrete total face flux of the scheme. Time integrals use
//! left endpoints, space integrals midpoints; face terms use one dual cell per
//! interior face.

use std::f64::consts::PI;

use super::operator::{self, Face};
use super::{Problem, StepContext, StepObserver};

/// `psi(t, x) = a (1 - t/T)^m cos(kx pi x / Lx) cos(ky pi y / Ly)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TestFunction {
    pub amplitude: f64,
    pub m: u32,
    pub kx: u32,
    pub ky: u32,
}

impl TestFunction {
    pub fn new(m: u32, kx: u32, ky: u32) -> Self {
        Self {
            amplitude: 1.0,
            m,
            kx,
            ky,
        }
    }

    pub fn zero() -> Self {
        Self {
            amplitude: 0.0,
            ..Self::new(1, 0, 0)
        }
    }

    fn time_factor(&self, t: f64, t_final: f64) -> (f64, f64) {
        let s = 1.0 - t / t_final;
        let m = self.m as i32;
        (s.powi(m), -(m as f64) * s.powi(m - 1) / t_final)
    }

    fn space_factor(&self, x: [f64; 2], lengths: [f64; 2]) -> (f64, [f64; 2]) {
        let (ax, ay) = (self.kx as f64 * PI / lengths[0], self.ky as f64 * PI / lengths[1]);
        let (cx, sx) = ((ax * x[0]).cos(), (ax * x[0]).sin());
        let (cy, sy) = ((ay * x[1]).cos(), (ay * x[1]).sin());
        (cx * cy, [-ax * sx * cy, -ay * cx * sy])
    }

    pub fn value(&self, t: f64, t_final: f64, x: [f64; 2], lengths: [f64; 2]) -> f64 {
        self.amplitude * self.time_factor(t, t_final).0 * self.space_factor(x, lengths).0
    }

    pub fn time_derivative(&self, t: f64, t_final: f64, x: [f64; 2], lengths: [f64; 2]) -> f64 {
        self.amplitude * self.time_factor(t, t_final).1 * self.space_factor(x, lengths).0
    }

    pub fn gradient(&self, t: f64, t_final: f64, x: [f64; 2], lengths: [f64; 2]) -> [f64; 2] {
        let a = self.amplitude * self.time_factor(t, t_final).0;
        let g = self.space_factor(x, lengths).1;
        [a * g[0], a * g[1]]
    }
}

/// A fixed set of test functions, polynomial in time and trigonometric in space.
pub fn default_catalog(dim: usize) -> Vec<TestFunction> {
    let mut out = vec![
        TestFunction::new(1, 0, 0),
        TestFunction::new(2, 1, 0),
        TestFunction::new(1, 2, 0),
        TestFunction::new(3, 3, 0),
    ];
    if dim == 2 {
        out.extend([
            TestFunction::new(2, 0, 1),
            TestFunction::new(1, 1, 1),
            TestFunction::new(2, 2, 1),
        ]);
    }
    out
}

/// Accumulates the weak residual along a run.
#[derive(Clone, Debug)]
pub struct WeakResidual {
    catalog: Vec<TestFunction>,
    t_final: f64,
    lengths: [f64; 2],
    faces: Vec<Face>,
    /// `[test function][species]`.
    sums: Vec<Vec<f64>>,
}

impl WeakResidual {
    pub fn new(problem: &Problem, catalog: Vec<TestFunction>, t_final: f64) -> Self {
        let grid = &problem.grid;
        let mut lengths = [1.0, 1.0];
        lengths[..grid.dim()].copy_from_slice(grid.lengths());
        let sums = catalog
            .iter()
            .map(|psi| {
                problem
                    .initial
                    .iter()
                    .map(|c0| {
                        -grid.integrate(
                            &grid
                                .centers()
                                .zip(c0)
                                .map(|(x, v)| v * psi.value(0.0, t_final, x, lengths))
                                .collect::<Vec<_>>(),
                        )
                    })
                    .collect()
            })
            .collect();
        Self {
            catalog,
            t_final,
            lengths,
            faces: operator::interior_faces(grid),
            sums,
        }
    }

    pub fn catalog(&self) -> &[TestFunction] {
        &self.catalog
    }

    /// Absolute residuals, `[test function][species]`.
    pub fn residuals(&self) -> Vec<Vec<f64>> {
        self.sums.iter().map(|r| r.iter().map(|v| v.abs()).collect()).collect()
    }

    pub fn max_residual(&self) -> f64 {
        self.sums.iter().flatten().fold(0.0, |a, v| a.max(v.abs()))
    }
}

impl StepObserver for WeakResidual {
    fn observe(&mut self, ctx: &StepContext<'_>) {
        let pr = ctx.problem;
        let grid = &pr.grid;
        let (t, dt, tf, lengths) = (ctx.t, ctx.dt, self.t_final, self.lengths);
        let p = pr.species();
        let n = grid.len();
        let vol = grid.cell_volume();

        // Reaction plus forcing at every cell.
        let mut source = vec![vec![0.0; n]; p];
        let mut local = vec![0.0; p];
        let mut f = vec![0.0; p];
        for cell in 0..n {
            for i in 0..p {
                local[i] = ctx.state[i][cell].max(0.0);
            }
            pr.kinetics.production(&local, &mut f);
            let x = grid.center(cell);
            for i in 0..p {
                source[i][cell] = f[i] + pr.forcing[i].as_ref().map_or(0.0, |g| g(t, x));
            }
        }
        let fluxes: Vec<Vec<f64>> = (0..p)
            .map(|i| {
                let dcells = operator::tensor_at_cells(grid, &pr.diffusion[i], t);
                let vel = operator::face_velocities(&pr.advection[i], t, &self.faces);
                operator::total_face_fluxes(grid, &self.faces, &dcells, &vel, ctx.config.face_average, &ctx.state[i])
            })
            .collect();

        for (k, psi) in self.catalog.iter().enumerate() {
            if psi.amplitude == 0.0 {
                continue;
            }
            let cell_terms: Vec<(f64, f64)> = grid
                .centers()
                .map(|x| (psi.value(t, tf, x, lengths), psi.time_derivative(t, tf, x, lengths)))
                .collect();
            let face_grad: Vec<f64> = self
                .faces
                .iter()
                .map(|fc| psi.gradient(t, tf, fc.center, lengths)[fc.axis])
                .collect();
            for i in 0..p {
                let mut s = 0.0;
                for (cell, &(v, dv)) in cell_terms.iter().enumerate() {
                    s -= ctx.state[i][cell] * dv + source[i][cell] * v;
                }
                for (flux, g) in fluxes[i].iter().zip(&face_grad) {
                    s -= flux * g;
                }
                self.sums[k][i] += dt * vol * s;
            }
        }
    }
}
