//! Refinement studies against analytic and manufactured solutions, the
//! weak-residual study and the continuous-dependence experiment.

use std::time::Instant;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::scenario::{ContinuitySpec, ConvergenceSpec, ExactErrorSpec, Scenario, WeakResidualSpec};
use crate::solver::manufactured::ManufacturedError;
use crate::solver::weak::{default_catalog, WeakResidual};
use crate::solver::{run_observed, StepContext, StepObserver};

/// Largest `|c_i - exact_i|` over cells, species and accepted-step states.
#[derive(Clone, Debug)]
pub struct MaxError {
    exact: Vec<Expr>,
    pub max: f64,
}

impl MaxError {
    pub fn new(exact: Vec<Expr>) -> Self {
        Self { exact, max: 0.0 }
    }

    pub fn update(&mut self, grid: &crate::grid::Grid, t: f64, state: &[Vec<f64>]) {
        for (e, c) in self.exact.iter().zip(state) {
            for (x, v) in grid.centers().zip(c) {
                self.max = self.max.max((v - e.eval(t, x)).abs());
            }
        }
    }
}

impl StepObserver for MaxError {
    fn observe(&mut self, ctx: &StepContext<'_>) {
        self.update(&ctx.problem.grid, ctx.t, ctx.state);
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExactErrorReport {
    pub max_error: f64,
    /// Max-norm error of the final state alone.
    pub final_error: f64,
    pub seconds: f64,
    pub steps: usize,
    pub passed: bool,
}

pub fn exact_error_check(scenario: &Scenario, spec: &ExactErrorSpec) -> Result<ExactErrorReport> {
    let start = Instant::now();
    let built = scenario.build()?;
    let exact = built
        .exact
        .clone()
        .ok_or_else(|| Error::Config("exact-error check needs exact solutions".into()))?;
    let mut err = MaxError::new(exact.clone());
    let traj = run_observed(&built.problem, &built.config, &mut [&mut err])?;
    let mut last = MaxError::new(exact);
    last.update(&traj.grid, traj.t_final(), traj.final_state());
    let seconds = start.elapsed().as_secs_f64();
    let max_error = err.max.max(last.max);
    Ok(ExactErrorReport {
        max_error,
        final_error: last.max,
        seconds,
        steps: traj.steps(),
        passed: max_error <= spec.tolerance && spec.max_seconds.map_or(true, |m| seconds < m),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct RefinementLevel {
    pub cells: Vec<usize>,
    pub dt: f64,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceReport {
    pub levels: Vec<RefinementLevel>,
    /// `log2(e_l / e_{l+1})` for successive levels.
    pub orders: Vec<f64>,
    pub min_order: f64,
    pub passed: bool,
}

fn level_scenario(scenario: &Scenario, coarse_cells: &[usize], coarse_dt: f64, level: usize, dt_exponent: u32) -> Result<Scenario> {
    let scale = 1usize << level;
    let cells: Vec<usize> = coarse_cells.iter().map(|c| c * scale).collect();
    let dt = coarse_dt / f64::from(1u32 << (dt_exponent * level as u32));
    let mut s = scenario.with_resolution(&cells, dt)?;
    s.time.fixed_dt = true;
    s.time.snapshot_times.clear();
    Ok(s)
}

/// `L^2(Q_T)` error against the exact solution with `h` halved and `dt`
/// divided by `2^dt_exponent` per level. The verdict uses the finest pair.
pub fn convergence_study(scenario: &Scenario, spec: &ConvergenceSpec) -> Result<ConvergenceReport> {
    if spec.levels < 2 {
        return Err(Error::Config("a convergence study needs at least two levels".into()));
    }
    let levels: Vec<RefinementLevel> = (0..spec.levels)
        .into_par_iter()
        .map(|l| {
            let s = level_scenario(scenario, &spec.coarse_cells, spec.coarse_dt, l, spec.dt_exponent)?;
            let built = s.build()?;
            let exact = built
                .exact
                .clone()
                .ok_or_else(|| Error::Config("a convergence study needs exact solutions".into()))?;
            let mut err = ManufacturedError::new(exact);
            run_observed(&built.problem, &built.config, &mut [&mut err])?;
            Ok(RefinementLevel {
                cells: s.grid.cells().to_vec(),
                dt: s.time.dt_init,
                value: err.total(),
            })
        })
        .collect::<Result<_>>()?;
    let orders: Vec<f64> = levels.windows(2).map(|w| (w[0].value / w[1].value).log2()).collect();
    let last = *orders.last().expect("two levels");
    Ok(ConvergenceReport {
        passed: last >= spec.min_order,
        levels,
        orders,
        min_order: spec.min_order,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeakResidualReport {
    /// `value` is the largest residual over the catalog and species.
    pub levels: Vec<RefinementLevel>,
    /// `r_{l+1} / r_l` for successive levels.
    pub ratios: Vec<f64>,
    pub max_ratio: f64,
    pub passed: bool,
}

/// Weak residual with `h` and `dt` halved together.
pub fn weak_residual_study(scenario: &Scenario, spec: &WeakResidualSpec) -> Result<WeakResidualReport> {
    if spec.levels < 2 {
        return Err(Error::Config("a weak-residual study needs at least two levels".into()));
    }
    let levels: Vec<RefinementLevel> = (0..spec.levels)
        .into_par_iter()
        .map(|l| {
            let s = level_scenario(scenario, &spec.coarse_cells, spec.coarse_dt, l, 1)?;
            let built = s.build()?;
            let mut w = WeakResidual::new(&built.problem, default_catalog(s.grid.dim()), built.config.t_final);
            run_observed(&built.problem, &built.config, &mut [&mut w])?;
            Ok(RefinementLevel {
                cells: s.grid.cells().to_vec(),
                dt: s.time.dt_init,
                value: w.max_residual(),
            })
        })
        .collect::<Result<_>>()?;
    let ratios: Vec<f64> = levels.windows(2).map(|w| w[1].value / w[0].value).collect();
    Ok(WeakResidualReport {
        passed: ratios.iter().all(|&r| r <= spec.max_ratio),
        levels,
        ratios,
        max_ratio: spec.max_ratio,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContinuityRow {
    pub magnitude: f64,
    pub perturbation_l2: f64,
    pub distance: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContinuityReport {
    pub rows: Vec<ContinuityRow>,
    /// `(max - min) / min` of the ratios.
    pub spread: f64,
    pub max_spread: f64,
    pub passed: bool,
}

/// Perturbation shape: `cos(2 pi x / Lx)`, plus `cos(2 pi y / Ly)` in 2D.
fn perturbation_shape(grid: &crate::grid::Grid) -> Vec<f64> {
    let l = grid.lengths();
    grid.sample(|x| {
        let mut v = (2.0 * std::f64::consts::PI * x[0] / l[0]).cos();
        if l.len() == 2 {
            v += (2.0 * std::f64::consts::PI * x[1] / l[1]).cos();
        }
        v
    })
}

/// Perturbs every species' initial data by a multiple of a smooth mean-zero
/// shape with total `L^2` norm `epsilon`, and measures the `L^2(Q_T)`
/// distance between perturbed and unperturbed runs.
pub fn continuity_experiment(scenario: &Scenario, spec: &ContinuitySpec) -> Result<ContinuityReport> {
    if spec.magnitudes.len() < 2 {
        return Err(Error::Config("continuity needs at least two magnitudes".into()));
    }
    let mut built = scenario.build()?;
    built.config.fixed_dt = true;
    built.config.store_states = true;
    let grid = built.problem.grid.clone();
    let p = built.problem.species();
    let phi = perturbation_shape(&grid);
    let phi_norm = crate::solver::spatial_norm(&grid, &phi, 2.0);
    let base = crate::solver::run(&built.problem, &built.config)?;
    let base_states = base.stored.as_ref().expect("states stored");

    let rows: Vec<ContinuityRow> = spec
        .magnitudes
        .par_iter()
        .map(|&eps| {
            let mut problem = built.problem.clone();
            let scale = eps / (phi_norm * (p as f64).sqrt());
            for c in problem.initial.iter_mut() {
                for (v, f) in c.iter_mut().zip(&phi) {
                    *v += scale * f;
                }
            }
            let perturbation_l2 = (0..p)
                .map(|i| {
                    let d: Vec<f64> = problem.initial[i].iter().zip(&built.problem.initial[i]).map(|(a, b)| a - b).collect();
                    crate::solver::spatial_norm(&grid, &d, 2.0).powi(2)
                })
                .sum::<f64>()
                .sqrt();
            let traj = crate::solver::run(&problem, &built.config)?;
            let st = traj.stored.as_ref().expect("states stored");
            if st.times != base_states.times {
                return Err(Error::Config("perturbed run took different time steps".into()));
            }
            let mut sum = 0.0;
            for n in 0..st.times.len() - 1 {
                let dt = st.times[n + 1] - st.times[n];
                for i in 0..p {
                    let d: Vec<f64> = st.states[n][i]
                        .iter()
                        .zip(&base_states.states[n][i])
                        .map(|(a, b)| (a - b).powi(2))
                        .collect();
                    sum += dt * grid.integrate(&d);
                }
            }
            let distance = sum.sqrt();
            Ok(ContinuityRow {
                magnitude: eps,
                perturbation_l2,
                distance,
                ratio: distance / perturbation_l2,
            })
        })
        .collect::<Result<_>>()?;
    let min = rows.iter().map(|r| r.ratio).fold(f64::INFINITY, f64::min);
    let max = rows.iter().map(|r| r.ratio).fold(0.0, f64::max);
    let spread = (max - min) / min;
    Ok(ContinuityReport {
        passed: spread <= spec.max_spread,
        rows,
        spread,
        max_spread: spec.max_spread,
    })
}
