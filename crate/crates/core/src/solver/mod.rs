//! IMEX finite-volume integrator for reaction–advection–diffusion systems with
//! zero total flux on the boundary.
//!
//! Each step solves `(I + dt L_i(t+dt)) c_i* = c_i + dt (-div(c_i u_i) + f_i(c) + g_i - E_i c_i)`
//! per species, where `L_i` is the implicit diffusion operator, `E_i` its
//! explicitly treated cross part, `f` the reaction term and `g` an optional
//! forcing. Steps producing values below `-nonneg_tol` are rejected and retried
//! with half the step.

pub mod linsolve;
pub mod manufactured;
pub mod operator;
pub mod weak;

use std::borrow::Cow;
use std::fmt::Write as _;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::coeffs::{AdvectionField, ScalarFn, TensorField};
use crate::error::{Error, Result};
use crate::grid::{Grid, Snapshot};
use crate::network::Kinetics;
use linsolve::Csr;
use operator::{DiffusionOperator, Face, FaceAverage};

pub const MAX_HALVINGS: usize = 40;

/// The continuous problem: grid, coefficients, reaction term and initial data.
#[derive(Clone)]
pub struct Problem {
    pub grid: Grid,
    pub diffusion: Vec<TensorField>,
    pub advection: Vec<AdvectionField>,
    pub kinetics: Arc<dyn Kinetics>,
    pub forcing: Vec<Option<ScalarFn>>,
    pub initial: Vec<Vec<f64>>,
    /// Positive conservation vector, used to report atom-balance drift.
    pub conservation: Option<Vec<f64>>,
}

impl std::fmt::Debug for Problem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Problem")
            .field("grid", &self.grid)
            .field("species", &self.species())
            .field("conservation", &self.conservation)
            .finish_non_exhaustive()
    }
}

impl Problem {
    pub fn new(
        grid: Grid,
        diffusion: Vec<TensorField>,
        advection: Vec<AdvectionField>,
        kinetics: Arc<dyn Kinetics>,
        initial: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let p = kinetics.species();
        let bad = |m: String| Err(Error::Config(m));
        if diffusion.len() != p || advection.len() != p || initial.len() != p {
            return bad(format!(
                "expected {p} diffusion, advection and initial entries, got {}, {}, {}",
                diffusion.len(),
                advection.len(),
                initial.len()
            ));
        }
        if diffusion.iter().any(|d| d.dim() != grid.dim()) || advection.iter().any(|u| u.dim() != grid.dim()) {
            return bad("coefficient dimension does not match the grid".into());
        }
        if let Some((i, _)) = initial.iter().enumerate().find(|(_, v)| v.len() != grid.len()) {
            return bad(format!("initial data for species {i} has the wrong length"));
        }
        for (i, v) in initial.iter().enumerate() {
            if let Some(&value) = v.iter().find(|&&x| !(x >= 0.0 && x.is_finite())) {
                return Err(Error::DomainError { species: i, value });
            }
        }
        Ok(Self {
            grid,
            diffusion,
            advection,
            kinetics,
            forcing: vec![None; p],
            initial,
            conservation: None,
        })
    }

    pub fn with_forcing(mut self, forcing: Vec<Option<ScalarFn>>) -> Self {
        self.forcing = forcing;
        self
    }

    pub fn with_conservation(mut self, e: Vec<f64>) -> Self {
        self.conservation = Some(e);
        self
    }

    pub fn species(&self) -> usize {
        self.kinetics.species()
    }
}

/// Numerical parameters of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub t_final: f64,
    pub dt_init: f64,
    pub cfl: f64,
    pub nonneg_tol: f64,
    pub linsolve_tol: f64,
    pub snapshot_times: Vec<f64>,
    pub seed: u64,
    /// Use `dt_init` for every step instead of the adaptive limiters.
    pub fixed_dt: bool,
    pub face_average: FaceAverage,
    /// Keep every accepted state in the trajectory.
    pub store_states: bool,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            t_final: 1.0,
            dt_init: 1e-2,
            cfl: 0.5,
            nonneg_tol: 1e-12,
            linsolve_tol: 1e-10,
            snapshot_times: Vec::new(),
            seed: 0,
            fixed_dt: false,
            face_average: FaceAverage::Arithmetic,
            store_states: false,
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if !(self.t_final >= 0.0 && self.t_final.is_finite()) {
            return bad("t_final must be finite and nonnegative");
        }
        if !(self.dt_init > 0.0) {
            return bad("dt_init must be positive");
        }
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return bad("cfl must lie in (0, 1]");
        }
        if !(self.nonneg_tol >= 0.0 && self.linsolve_tol > 0.0) {
            return bad("tolerances must be positive");
        }
        Ok(())
    }
}

/// One accepted step.
#[derive(Clone, Debug, PartialEq)]
pub struct LedgerEntry {
    /// Time at the end of the step.
    pub t: f64,
    pub dt: f64,
    pub mass: Vec<f64>,
    pub min_value: f64,
    /// Relative change of `sum_i e_i mass_i`; zero without a conservation vector.
    pub drift: f64,
    pub iterations: usize,
    pub halvings: usize,
}

/// `||v||_{L^p(Omega)}` by midpoint quadrature; `p = inf` gives the max norm.
pub fn spatial_norm(grid: &Grid, v: &[f64], p: f64) -> f64 {
    if p.is_infinite() {
        return v.iter().fold(0.0, |m, x| m.max(x.abs()));
    }
    (grid.integrate(&v.iter().map(|x| x.abs().powf(p)).collect::<Vec<_>>())).powf(1.0 / p)
}

/// Running `L^p(Q_T)` sums by left-endpoint time and midpoint space quadrature.
#[derive(Clone, Debug, PartialEq)]
pub struct SpaceTimeNorms {
    exponents: Vec<f64>,
    /// `[exponent][species]` running sums of `dt * h^N * |c|^p`.
    sums: Vec<Vec<f64>>,
    max: Vec<f64>,
}

impl SpaceTimeNorms {
    pub fn new(species: usize, dim: usize) -> Self {
        let mut exponents = vec![1.0, 1.5, 2.0, (dim as f64 + 1.0) / dim as f64];
        exponents.sort_by(f64::total_cmp);
        exponents.dedup();
        Self {
            sums: vec![vec![0.0; species]; exponents.len()],
            exponents,
            max: vec![0.0; species],
        }
    }

    pub fn exponents(&self) -> &[f64] {
        &self.exponents
    }

    fn accumulate(&mut self, grid: &Grid, dt: f64, state: &[Vec<f64>]) {
        let w = dt * grid.cell_volume();
        for (k, &p) in self.exponents.iter().enumerate() {
            for (i, c) in state.iter().enumerate() {
                let s: f64 = if p == 1.0 {
                    c.iter().map(|x| x.abs()).sum()
                } else if p == 2.0 {
                    c.iter().map(|x| x * x).sum()
                } else {
                    c.iter().map(|x| x.abs().powf(p)).sum()
                };
                self.sums[k][i] += w * s;
            }
        }
        self.observe_max(state);
    }

    fn observe_max(&mut self, state: &[Vec<f64>]) {
        for (m, c) in self.max.iter_mut().zip(state) {
            *m = c.iter().fold(*m, |a, x| a.max(x.abs()));
        }
    }

    pub fn norm(&self, species: usize, p: f64) -> Result<f64> {
        if p.is_infinite() {
            return Ok(self.max[species]);
        }
        let k = self
            .exponents
            .iter()
            .position(|&q| q == p)
            .ok_or(Error::NormUnavailable(p))?;
        Ok(self.sums[k][species].powf(1.0 / p))
    }
}

/// Every accepted state with its time stamp.
#[derive(Clone, Debug, PartialEq)]
pub struct StoredStates {
    pub times: Vec<f64>,
    pub states: Vec<Vec<Vec<f64>>>,
}

/// Result of [`run`].
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub grid: Grid,
    /// Snapshot stamps, strictly increasing from `0` to `T`.
    pub times: Vec<f64>,
    /// `[snapshot][species][cell]`.
    pub snapshots: Vec<Vec<Vec<f64>>>,
    pub ledger: Vec<LedgerEntry>,
    pub norms: SpaceTimeNorms,
    pub stored: Option<StoredStates>,
}

impl Trajectory {
    /// Builds a trajectory from explicit states at `times`, integrating norms
    /// with left endpoints.
    pub fn from_states(grid: Grid, times: Vec<f64>, states: Vec<Vec<Vec<f64>>>) -> Self {
        assert_eq!(times.len(), states.len());
        let p = states.first().map_or(0, Vec::len);
        let mut norms = SpaceTimeNorms::new(p, grid.dim());
        let mut ledger = Vec::new();
        for n in 0..states.len() {
            if n + 1 < states.len() {
                let dt = times[n + 1] - times[n];
                norms.accumulate(&grid, dt, &states[n]);
                let next = &states[n + 1];
                ledger.push(LedgerEntry {
                    t: times[n + 1],
                    dt,
                    mass: next.iter().map(|c| grid.integrate(c)).collect(),
                    min_value: next.iter().flatten().fold(f64::INFINITY, |a, &b| a.min(b)),
                    drift: 0.0,
                    iterations: 0,
                    halvings: 0,
                });
            } else {
                norms.observe_max(&states[n]);
            }
        }
        Self {
            grid,
            snapshots: states.clone(),
            stored: Some(StoredStates {
                times: times.clone(),
                states,
            }),
            times,
            ledger,
            norms,
        }
    }

    pub fn species(&self) -> usize {
        self.snapshots[0].len()
    }

    pub fn t_final(&self) -> f64 {
        *self.times.last().expect("at least the initial snapshot")
    }

    pub fn initial(&self) -> &[Vec<f64>] {
        &self.snapshots[0]
    }

    pub fn final_state(&self) -> &[Vec<f64>] {
        self.snapshots.last().expect("at least the initial snapshot")
    }

    pub fn steps(&self) -> usize {
        self.ledger.len()
    }

    /// `||c_i||_{L^p(Q_T)}`; any `p` is available when states are stored.
    pub fn spacetime_norm(&self, species: usize, p: f64) -> Result<f64> {
        match (&self.stored, self.norms.norm(species, p)) {
            (_, Ok(v)) => Ok(v),
            (Some(s), Err(_)) => {
                let mut sum = 0.0;
                for n in 0..s.times.len().saturating_sub(1) {
                    let dt = s.times[n + 1] - s.times[n];
                    let v = &s.states[n][species];
                    sum += dt * self.grid.integrate(&v.iter().map(|x| x.abs().powf(p)).collect::<Vec<_>>());
                }
                Ok(sum.powf(1.0 / p))
            }
            (None, Err(e)) => Err(e),
        }
    }

    /// `sum_i ||c_i||_{L^p(Q_T)}`.
    pub fn aggregate_norm(&self, p: f64) -> Result<f64> {
        (0..self.species()).map(|i| self.spacetime_norm(i, p)).sum()
    }

    /// `sum_i ||c_i^0||_{L^p(Omega)}`.
    pub fn initial_norm(&self, p: f64) -> f64 {
        self.initial().iter().map(|c| spatial_norm(&self.grid, c, p)).sum()
    }

    pub fn min_value(&self) -> f64 {
        let init = self.initial().iter().flatten().fold(f64::INFINITY, |a, &b| a.min(b));
        self.ledger.iter().fold(init, |a, e| a.min(e.min_value))
    }

    pub fn max_drift(&self) -> f64 {
        self.ledger.iter().fold(0.0, |a, e| a.max(e.drift))
    }

    pub fn snapshot_files(&self, index: usize) -> Vec<Snapshot> {
        self.snapshots[index]
            .iter()
            .enumerate()
            .map(|(i, v)| Snapshot {
                grid: self.grid.clone(),
                time: self.times[index],
                species: i,
                values: v.clone(),
            })
            .collect()
    }

    /// One row per step: `t, dt, mass_1..mass_P, min, drift`.
    pub fn norms_csv(&self) -> String {
        let mut out = String::from("t,dt");
        for i in 0..self.species() {
            let _ = write!(out, ",mass_{}", i + 1);
        }
        out.push_str(",min,drift\n");
        for e in &self.ledger {
            let _ = write!(out, "{:e},{:e}", e.t, e.dt);
            for m in &e.mass {
                let _ = write!(out, ",{m:e}");
            }
            let _ = writeln!(out, ",{:e},{:e}", e.min_value, e.drift);
        }
        out
    }
}

/// What an observer sees for each accepted step: the left-endpoint state.
pub struct StepContext<'a> {
    pub problem: &'a Problem,
    pub config: &'a SimulationConfig,
    pub t: f64,
    pub dt: f64,
    pub state: &'a [Vec<f64>],
}

/// Accumulates diagnostics along a run.
pub trait StepObserver {
    fn observe(&mut self, ctx: &StepContext<'_>);
}

/// Discrete `div(c u)` with face velocities at time `t`.
struct Advection {
    faces: Vec<Face>,
}

impl Advection {
    fn apply(&self, grid: &Grid, u: &AdvectionField, t: f64, c: &[f64], out: &mut [f64]) {
        if u.is_zero() {
            out.iter_mut().for_each(|v| *v = 0.0);
            return;
        }
        let vel = operator::face_velocities(u, t, &self.faces);
        operator::advection_divergence(grid, &self.faces, &vel, c, out);
    }
}

struct Stepper<'a> {
    problem: &'a Problem,
    config: &'a SimulationConfig,
    advection: Advection,
    steady_ops: Vec<Option<DiffusionOperator>>,
}

impl<'a> Stepper<'a> {
    fn new(problem: &'a Problem, config: &'a SimulationConfig) -> Self {
        let steady_ops = problem
            .diffusion
            .iter()
            .map(|d| {
                d.is_steady()
                    .then(|| operator::diffusion_operator(&problem.grid, d, 0.0, config.face_average))
            })
            .collect();
        Self {
            problem,
            config,
            advection: Advection {
                faces: operator::interior_faces(&problem.grid),
            },
            steady_ops,
        }
    }

    fn diffusion(&self, species: usize, t: f64) -> Cow<'_, DiffusionOperator> {
        match &self.steady_ops[species] {
            Some(op) => Cow::Borrowed(op),
            None => Cow::Owned(operator::diffusion_operator(
                &self.problem.grid,
                &self.problem.diffusion[species],
                t,
                self.config.face_average,
            )),
        }
    }

    /// `-div(c u) + f(c) + g(t)` per species at time `t`.
    fn explicit_rhs(&self, t: f64, c: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let pr = self.problem;
        let grid = &pr.grid;
        let p = pr.species();
        let n = grid.len();
        let mut rhs = vec![vec![0.0; n]; p];
        let mut buf = vec![0.0; n];
        for i in 0..p {
            self.advection.apply(grid, &pr.advection[i], t, &c[i], &mut buf);
            for (r, b) in rhs[i].iter_mut().zip(&buf) {
                *r = -b;
            }
            if let Some(g) = &pr.forcing[i] {
                for (cell, r) in rhs[i].iter_mut().enumerate() {
                    *r += g(t, grid.center(cell));
                }
            }
        }
        let mut local = vec![0.0; p];
        let mut f = vec![0.0; p];
        for cell in 0..n {
            for i in 0..p {
                local[i] = c[i][cell].max(0.0);
            }
            pr.kinetics.production(&local, &mut f);
            for i in 0..p {
                rhs[i][cell] += f[i];
            }
        }
        rhs
    }

    fn attempt(&self, t: f64, dt: f64, c: &[Vec<f64>], rhs: &[Vec<f64>]) -> Result<(Vec<Vec<f64>>, usize)> {
        let mut out = Vec::with_capacity(c.len());
        let mut iterations = 0;
        for (i, ci) in c.iter().enumerate() {
            let op = self.diffusion(i, t + dt);
            let mut b: Vec<f64> = ci.iter().zip(&rhs[i]).map(|(x, r)| x + dt * r).collect();
            if let Some(e) = &op.explicit {
                for (bj, v) in b.iter_mut().zip(e.apply(ci)) {
                    *bj -= dt * v;
                }
            }
            let m: Csr = op.implicit.shifted(1.0, dt);
            let mut x = ci.clone();
            let stats = linsolve::solve(&m, &b, &mut x, self.config.linsolve_tol)?;
            iterations += stats.iterations;
            out.push(x);
        }
        Ok((out, iterations))
    }

    /// Largest step allowed by the advective CFL and reaction stiffness limits.
    fn stable_dt(&self, t: f64, c: &[Vec<f64>]) -> f64 {
        let pr = self.problem;
        let rate = pr
            .advection
            .iter()
            .map(|u| u.max_rate(&pr.grid, t))
            .fold(0.0, f64::max);
        let mut limit = if rate > 0.0 { self.config.cfl / rate } else { f64::INFINITY };
        let p = pr.species();
        let mut local = vec![0.0; p];
        let mut stiff: f64 = 0.0;
        for cell in 0..pr.grid.len() {
            for i in 0..p {
                local[i] = c[i][cell].max(0.0);
            }
            stiff = stiff.max(pr.kinetics.stiffness(&local));
        }
        if stiff > 0.0 {
            limit = limit.min(0.5 / stiff);
        }
        limit
    }
}

fn total_conserved(e: &[f64], mass: &[f64]) -> f64 {
    e.iter().zip(mass).map(|(a, b)| a * b).sum()
}

pub fn run(problem: &Problem, config: &SimulationConfig) -> Result<Trajectory> {
    run_observed(problem, config, &mut [])
}

/// Integrates to `config.t_final`, feeding every accepted step to `observers`.
pub fn run_observed(
    problem: &Problem,
    config: &SimulationConfig,
    observers: &mut [&mut dyn StepObserver],
) -> Result<Trajectory> {
    config.validate()?;
    let grid = &problem.grid;
    let p = problem.species();
    if let Some(e) = &problem.conservation {
        if e.len() != p {
            return Err(Error::Config("conservation vector has the wrong length".into()));
        }
    }
    let t_final = config.t_final;
    let mut stops: Vec<f64> = config
        .snapshot_times
        .iter()
        .copied()
        .filter(|&s| s > 0.0 && s < t_final)
        .collect();
    stops.sort_by(f64::total_cmp);
    stops.dedup();
    if t_final > 0.0 {
        stops.push(t_final);
    }

    let stepper = Stepper::new(problem, config);
    let mut c = problem.initial.clone();
    let mut t = 0.0;
    let mass = |c: &[Vec<f64>]| c.iter().map(|v| grid.integrate(v)).collect::<Vec<f64>>();
    let conserved0 = problem.conservation.as_ref().map(|e| total_conserved(e, &mass(&c)));

    let mut traj = Trajectory {
        grid: grid.clone(),
        times: vec![0.0],
        snapshots: vec![c.clone()],
        ledger: Vec::new(),
        norms: SpaceTimeNorms::new(p, grid.dim()),
        stored: config.store_states.then(|| StoredStates {
            times: vec![0.0],
            states: vec![c.clone()],
        }),
    };
    let mut cap = config.dt_init;
    for &stop in &stops {
        while t < stop {
            let mut dt = cap.min(config.dt_init);
            if !config.fixed_dt {
                dt = dt.min(stepper.stable_dt(t, &c));
            }
            let remaining = stop - t;
            if dt >= remaining || remaining - dt <= 1e-9 * dt {
                dt = remaining;
            }
            let rhs = stepper.explicit_rhs(t, &c);
            let mut halvings = 0;
            let (next, iterations) = loop {
                let (next, its) = stepper.attempt(t, dt, &c, &rhs)?;
                let min = next.iter().flatten().fold(f64::INFINITY, |a, &b| a.min(b));
                if min >= -config.nonneg_tol && min.is_finite() {
                    break (next, its);
                }
                halvings += 1;
                if halvings > MAX_HALVINGS {
                    return Err(Error::StepFailure { t, dt, halvings: MAX_HALVINGS });
                }
                dt *= 0.5;
            };
            cap = if halvings > 0 { dt } else { (2.0 * cap).min(config.dt_init) };

            let ctx = StepContext {
                problem,
                config,
                t,
                dt,
                state: &c,
            };
            for obs in observers.iter_mut() {
                obs.observe(&ctx);
            }
            traj.norms.accumulate(grid, dt, &c);

            t = if stop - (t + dt) <= 1e-12 * stop.max(1.0) { stop } else { t + dt };
            c = next;
            let m = mass(&c);
            let drift = match (&problem.conservation, conserved0) {
                (Some(e), Some(e0)) => {
                    let now = total_conserved(e, &m);
                    if e0 != 0.0 {
                        (now - e0).abs() / e0.abs()
                    } else {
                        (now - e0).abs()
                    }
                }
                _ => 0.0,
            };
            traj.ledger.push(LedgerEntry {
                t,
                dt,
                mass: m,
                min_value: c.iter().flatten().fold(f64::INFINITY, |a, &b| a.min(b)),
                drift,
                iterations,
                halvings,
            });
            if let Some(s) = traj.stored.as_mut() {
                s.times.push(t);
                s.states.push(c.clone());
            }
        }
        traj.times.push(stop);
        traj.snapshots.push(c.clone());
    }
    traj.norms.observe_max(&c);
    Ok(traj)
}
