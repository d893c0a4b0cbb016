//! Space-time norms and the estimate experiments: the k-uniform `L^2` bound
//! for scalar diffusions, the `L^{(N+1)/N}` bound for concentrating data, and
//! the collapse of a system to a single scalar inequality.

use num_traits::FromPrimitive;
use rayon::prelude::*;

use crate::coeffs::{eigenvalues, AdvectionField, Mat2, TensorField};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::network::{kinetics, Rational, ReactionNetwork};
use crate::scenario::{plateau, Scenario};
use crate::solver::{self, run_observed, spatial_norm, StepContext, StepObserver, Trajectory};

/// `||c_i||_{L^p(Q_T)}` with midpoint space and left-endpoint time quadrature.
pub fn spacetime_norm(traj: &Trajectory, species: usize, p: f64) -> Result<f64> {
    traj.spacetime_norm(species, p)
}

/// Norms of a trajectory for `p in {1, (N+1)/N, 2, inf}`.
#[derive(Clone, Debug, PartialEq)]
pub struct NormReport {
    pub exponents: Vec<f64>,
    /// `[species][exponent]`.
    pub per_species: Vec<Vec<f64>>,
    /// `sum_i ||c_i||_p` per exponent.
    pub aggregate: Vec<f64>,
    pub initial_l1: Vec<f64>,
    pub initial_l2: Vec<f64>,
    pub initial_linf: Vec<f64>,
    pub drift: f64,
    /// `T |Omega|`.
    pub measure: f64,
}

impl NormReport {
    pub fn from_trajectory(traj: &Trajectory) -> Result<Self> {
        let dim = traj.grid.dim() as f64;
        let exponents = vec![1.0, (dim + 1.0) / dim, 2.0, f64::INFINITY];
        let p = traj.species();
        let per_species: Vec<Vec<f64>> = (0..p)
            .map(|i| exponents.iter().map(|&e| traj.spacetime_norm(i, e)).collect())
            .collect::<Result<_>>()?;
        let aggregate = (0..exponents.len())
            .map(|k| per_species.iter().map(|r| r[k]).sum())
            .collect();
        let init = |q: f64| traj.initial().iter().map(|c| spatial_norm(&traj.grid, c, q)).collect();
        Ok(Self {
            aggregate,
            initial_l1: init(1.0),
            initial_l2: init(2.0),
            initial_linf: init(f64::INFINITY),
            drift: traj.max_drift(),
            measure: traj.t_final() * traj.grid.measure(),
            per_species,
            exponents,
        })
    }

    /// `||c||_1 <= |Q_T|^(1 - 1/p) ||c||_p` for every species and exponent.
    pub fn holder_consistent(&self) -> bool {
        self.per_species.iter().all(|r| {
            self.exponents.iter().zip(r).all(|(&p, &v)| {
                let w = if p.is_infinite() { self.measure } else { self.measure.powf(1.0 - 1.0 / p) };
                r[0] <= w * v * (1.0 + 1e-12) + 1e-300
            })
        })
    }

    /// Norms on the normalized measure are nondecreasing in `p`.
    pub fn monotone_in_p(&self) -> bool {
        if self.measure == 0.0 {
            return true;
        }
        self.per_species.iter().all(|r| {
            let normalized: Vec<f64> = self
                .exponents
                .iter()
                .zip(r)
                .map(|(&p, &v)| if p.is_infinite() { v } else { v / self.measure.powf(1.0 / p) })
                .collect();
            normalized.windows(2).all(|w| w[0] <= w[1] * (1.0 + 1e-12) + 1e-300)
        })
    }

    pub fn nonnegative(&self) -> bool {
        self.per_species.iter().flatten().all(|&v| v >= 0.0)
    }
}

/// `sum_j ||c^alpha_j - kappa_j c^beta_j||_{L^1(Q_T)}`, the distance from the
/// reaction equilibrium manifold.
#[derive(Clone, Debug)]
pub struct RateDefect {
    network: ReactionNetwork,
    pub total: f64,
}

impl RateDefect {
    pub fn new(network: ReactionNetwork) -> Self {
        Self { network, total: 0.0 }
    }
}

impl StepObserver for RateDefect {
    fn observe(&mut self, ctx: &StepContext<'_>) {
        let grid = &ctx.problem.grid;
        let p = ctx.state.len();
        let mut c = vec![0.0; p];
        let mut s = 0.0;
        for cell in 0..grid.len() {
            for i in 0..p {
                c[i] = ctx.state[i][cell].max(0.0);
            }
            let r = kinetics::rates(&self.network, &c).expect("clamped state is nonnegative");
            s += r.iter().map(|v| v.abs()).sum::<f64>();
        }
        self.total += ctx.dt * grid.cell_volume() * s;
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub k: f64,
    /// `sum_i ||c_i||_{L^2(Q_T)} / (1 + sum_i ||c_i^0||_{L^2})`.
    pub ratio: f64,
    pub l2_norms: Vec<f64>,
    pub initial_l2: f64,
    pub rate_defect: f64,
    pub min_value: f64,
    pub drift: f64,
    pub steps: usize,
    pub norms: NormReport,
}

#[derive(Clone, Debug, PartialEq)]
pub struct L2UniformityReport {
    pub rows: Vec<SweepRow>,
    /// `(max - min) / min` of the ratios.
    pub spread: f64,
    /// Largest ratio over the ratio of the first sweep member.
    pub max_over_first: f64,
    pub defect_decreasing: bool,
    pub passed: bool,
}

pub const L2_SPREAD_LIMIT: f64 = 0.10;
pub const L2_GROWTH_LIMIT: f64 = 2.0;

/// Runs `scenario` with every forward rate multiplied by each `k`.
///
/// Requires scalar diffusions and a mass-action network. Members run in parallel.
pub fn l2_uniformity_experiment(scenario: &Scenario, k_list: &[f64]) -> Result<L2UniformityReport> {
    if !scenario.has_scalar_diffusion() {
        return Err(Error::Config("the L2 uniformity experiment needs scalar diffusions".into()));
    }
    let base = scenario
        .network()?
        .ok_or_else(|| Error::Config("the L2 uniformity experiment needs a mass-action network".into()))?;
    if k_list.is_empty() || k_list.iter().any(|&k| !(k > 0.0)) {
        return Err(Error::Config("k values must be positive".into()));
    }
    let rows: Vec<SweepRow> = k_list
        .par_iter()
        .map(|&k| {
            let factor = Rational::from_f64(k).ok_or_else(|| Error::Config(format!("bad k value {k}")))?;
            let net = base.scaled_rates(&factor);
            let built = scenario.with_network(&net).build()?;
            let mut defect = RateDefect::new(base.clone());
            let traj = run_observed(&built.problem, &built.config, &mut [&mut defect])?;
            let l2_norms: Vec<f64> = (0..traj.species())
                .map(|i| traj.spacetime_norm(i, 2.0))
                .collect::<Result<_>>()?;
            let initial_l2 = traj.initial_norm(2.0);
            Ok(SweepRow {
                k,
                ratio: l2_norms.iter().sum::<f64>() / (1.0 + initial_l2),
                l2_norms,
                initial_l2,
                rate_defect: defect.total,
                min_value: traj.min_value(),
                drift: traj.max_drift(),
                steps: traj.steps(),
                norms: NormReport::from_trajectory(&traj)?,
            })
        })
        .collect::<Result<_>>()?;
    let min = rows.iter().map(|r| r.ratio).fold(f64::INFINITY, f64::min);
    let max = rows.iter().map(|r| r.ratio).fold(0.0, f64::max);
    let spread = (max - min) / min;
    let max_over_first = max / rows[0].ratio;
    let mut order: Vec<&SweepRow> = rows.iter().collect();
    order.sort_by(|a, b| a.k.total_cmp(&b.k));
    let defect_decreasing = order.windows(2).all(|w| w[1].rate_defect < w[0].rate_defect);
    Ok(L2UniformityReport {
        passed: spread <= L2_SPREAD_LIMIT && max_over_first <= L2_GROWTH_LIMIT && defect_decreasing,
        rows,
        spread,
        max_over_first,
        defect_decreasing,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct FamilyRow {
    pub factor: f64,
    /// `sum_i ||c_i||_{L^{(N+1)/N}(Q_T)} / (1 + sum_i ||c_i^0||_{L^1})`.
    pub ratio: f64,
    pub initial_l1: f64,
    pub initial_linf: f64,
    /// The `L^2` ratio of the k-sweep, recorded without a verdict.
    pub l2_ratio: f64,
    pub min_value: f64,
    pub norms: NormReport,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FamilyReport {
    pub exponent: f64,
    pub rows: Vec<FamilyRow>,
    pub baseline: f64,
    pub passed: bool,
}

pub const FAMILY_GROWTH_LIMIT: f64 = 2.0;

/// Concentrating initial data with fixed `L^1` norm: each species keeps the
/// mass of the scenario's initial data, spread over a centered plateau of
/// area `|Omega| / factor`.
pub fn concentrating_family(grid: &Grid, masses: &[f64], factor: f64) -> Vec<Vec<f64>> {
    let center: Vec<f64> = grid.lengths().iter().map(|l| 0.5 * l).collect();
    masses
        .iter()
        .map(|&m| plateau(grid, m, grid.measure() / factor, &center))
        .collect()
}

pub fn l_n1_over_n_experiment(scenario: &Scenario, factors: &[f64]) -> Result<FamilyReport> {
    if factors.is_empty() || factors.iter().any(|&f| !(f >= 1.0)) {
        return Err(Error::Config("family factors must be at least 1".into()));
    }
    let built = scenario.build()?;
    let grid = built.problem.grid.clone();
    let dim = grid.dim() as f64;
    let exponent = (dim + 1.0) / dim;
    let masses: Vec<f64> = built.problem.initial.iter().map(|c| grid.integrate(c)).collect();
    let rows: Vec<FamilyRow> = factors
        .par_iter()
        .map(|&factor| {
            let mut problem = built.problem.clone();
            problem.initial = concentrating_family(&grid, &masses, factor);
            let traj = solver::run(&problem, &built.config)?;
            let initial_l1 = traj.initial_norm(1.0);
            Ok(FamilyRow {
                factor,
                ratio: traj.aggregate_norm(exponent)? / (1.0 + initial_l1),
                initial_l1,
                initial_linf: traj.initial_norm(f64::INFINITY),
                l2_ratio: traj.aggregate_norm(2.0)? / (1.0 + traj.initial_norm(2.0)),
                min_value: traj.min_value(),
                norms: NormReport::from_trajectory(&traj)?,
            })
        })
        .collect::<Result<_>>()?;
    let flat = rows
        .iter()
        .min_by(|a, b| a.factor.total_cmp(&b.factor))
        .expect("nonempty family");
    let baseline = flat.ratio;
    Ok(FamilyReport {
        exponent,
        passed: rows.iter().all(|r| r.ratio <= FAMILY_GROWTH_LIMIT * baseline),
        baseline,
        rows,
    })
}

/// Cellwise scalar collapse `W = 1 + sum c_i`, `A = (1 + sum d_i c_i) / W`,
/// `u = sum (c_i / W)(grad d_i + u_i)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarCollapse {
    pub w: Vec<f64>,
    pub a: Vec<f64>,
    pub u: Vec<[f64; 2]>,
}

/// Cellwise anisotropic collapse `A_kl = (delta_kl + sum_i d^i_kl c_i) / W`,
/// `B_k = sum_i (c_i / W) sum_l d_l d^i_kl`, `U = sum_i (c_i / W) u_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct AnisotropicCollapse {
    pub w: Vec<f64>,
    pub a: Vec<Mat2>,
    pub b: Vec<[f64; 2]>,
    pub u: Vec<[f64; 2]>,
}

/// Centered difference of a tensor entry along `axis`.
fn tensor_derivative(d: &TensorField, t: f64, x: [f64; 2], axis: usize, k: usize, l: usize, step: f64) -> f64 {
    let (mut xp, mut xm) = (x, x);
    xp[axis] += step;
    xm[axis] -= step;
    (d.eval(t, xp)[k][l] - d.eval(t, xm)[k][l]) / (2.0 * step)
}

fn derivative_step(grid: &Grid) -> f64 {
    1e-5 * grid.lengths().iter().cloned().fold(0.0, f64::max)
}

fn check_isotropic(d: &TensorField, t: f64, x: [f64; 2]) -> Result<f64> {
    let m = d.eval(t, x);
    if d.dim() == 2 && (m[0][1] != 0.0 || (m[0][0] - m[1][1]).abs() > 1e-14 * m[0][0].abs()) {
        return Err(Error::Config("scalar collapse needs isotropic diffusion tensors".into()));
    }
    Ok(m[0][0])
}

pub fn collapse_scalar_fields(
    grid: &Grid,
    t: f64,
    state: &[Vec<f64>],
    diffusion: &[TensorField],
    advection: &[AdvectionField],
) -> Result<ScalarCollapse> {
    let n = grid.len();
    let step = derivative_step(grid);
    let mut out = ScalarCollapse {
        w: vec![1.0; n],
        a: vec![0.0; n],
        u: vec![[0.0; 2]; n],
    };
    for cell in 0..n {
        let x = grid.center(cell);
        let w = 1.0 + state.iter().map(|c| c[cell]).sum::<f64>();
        let mut num = 1.0;
        let mut u = [0.0; 2];
        for (i, c) in state.iter().enumerate() {
            let d = check_isotropic(&diffusion[i], t, x)?;
            num += d * c[cell];
            let ui = advection[i].eval(t, x);
            for k in 0..grid.dim() {
                let grad = tensor_derivative(&diffusion[i], t, x, k, 0, 0, step);
                u[k] += c[cell] / w * (grad + ui[k]);
            }
        }
        out.w[cell] = w;
        out.a[cell] = num / w;
        out.u[cell] = u;
    }
    Ok(out)
}

pub fn collapse_anisotropic_fields(
    grid: &Grid,
    t: f64,
    state: &[Vec<f64>],
    diffusion: &[TensorField],
    advection: &[AdvectionField],
) -> AnisotropicCollapse {
    let n = grid.len();
    let dim = grid.dim();
    let step = derivative_step(grid);
    let mut out = AnisotropicCollapse {
        w: vec![1.0; n],
        a: vec![[[0.0; 2]; 2]; n],
        b: vec![[0.0; 2]; n],
        u: vec![[0.0; 2]; n],
    };
    for cell in 0..n {
        let x = grid.center(cell);
        let w = 1.0 + state.iter().map(|c| c[cell]).sum::<f64>();
        let mut a = [[1.0, 0.0], [0.0, if dim == 2 { 1.0 } else { 0.0 }]];
        let mut b = [0.0; 2];
        let mut u = [0.0; 2];
        for (i, c) in state.iter().enumerate() {
            let d = diffusion[i].eval(t, x);
            let ui = advection[i].eval(t, x);
            for k in 0..dim {
                for l in 0..dim {
                    a[k][l] += d[k][l] * c[cell];
                    b[k] += c[cell] / w * tensor_derivative(&diffusion[i], t, x, l, k, l, step);
                }
                u[k] += c[cell] / w * ui[k];
            }
        }
        for row in a.iter_mut() {
            for v in row.iter_mut() {
                *v /= w;
            }
        }
        out.w[cell] = w;
        out.a[cell] = a;
        out.b[cell] = b;
        out.u[cell] = u;
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct CollapseSnapshot {
    pub time: f64,
    pub w_min: f64,
    pub w_max: f64,
    /// Smallest and largest `A` (scalar) or eigenvalue of `A` (anisotropic).
    pub a_min: f64,
    pub a_max: f64,
    /// Largest `|u|` (scalar) or `|B| + |U|` (anisotropic).
    pub drift_max: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CollapseReport {
    pub anisotropic: bool,
    /// Asserted interval for `A` (its upper end is infinite for the anisotropic check).
    pub lower: f64,
    pub upper: f64,
    pub snapshots: Vec<CollapseSnapshot>,
}

const COLLAPSE_TOL: f64 = 1e-10;

/// Scalar collapse of every snapshot with the bounds
/// `min(1, d_lo) <= A <= max(1, d_hi)` and `W >= 1`.
pub fn collapse_scalar(
    traj: &Trajectory,
    diffusion: &[TensorField],
    advection: &[AdvectionField],
) -> Result<CollapseReport> {
    let lower = diffusion.iter().map(|d| d.declared().0).fold(1.0, f64::min);
    let upper = diffusion.iter().map(|d| d.declared().1).fold(1.0, f64::max);
    let mut snapshots = Vec::new();
    for (s, (time, state)) in traj.times.iter().zip(&traj.snapshots).enumerate() {
        let f = collapse_scalar_fields(&traj.grid, *time, state, diffusion, advection)?;
        for cell in 0..traj.grid.len() {
            let (w, a) = (f.w[cell], f.a[cell]);
            if w < 1.0 - COLLAPSE_TOL || a < lower - COLLAPSE_TOL || a > upper + COLLAPSE_TOL {
                return Err(Error::CollapseBoundViolation {
                    snapshot: s,
                    cell,
                    detail: format!("W = {w}, A = {a} outside [{lower}, {upper}]"),
                });
            }
        }
        snapshots.push(CollapseSnapshot {
            time: *time,
            w_min: f.w.iter().cloned().fold(f64::INFINITY, f64::min),
            w_max: f.w.iter().cloned().fold(0.0, f64::max),
            a_min: f.a.iter().cloned().fold(f64::INFINITY, f64::min),
            a_max: f.a.iter().cloned().fold(0.0, f64::max),
            drift_max: f.u.iter().map(|v| v[0].hypot(v[1])).fold(0.0, f64::max),
        });
    }
    Ok(CollapseReport {
        anisotropic: false,
        lower,
        upper,
        snapshots,
    })
}

/// Anisotropic collapse of every snapshot with the ellipticity bound
/// `xi . A xi >= min(1, min_i alpha_i) |xi|^2` on sampled directions.
pub fn collapse_anisotropic(
    traj: &Trajectory,
    diffusion: &[TensorField],
    advection: &[AdvectionField],
) -> Result<CollapseReport> {
    let dim = traj.grid.dim();
    let lower = diffusion.iter().map(|d| d.declared().0).fold(1.0, f64::min);
    let directions: Vec<[f64; 2]> = if dim == 1 {
        vec![[1.0, 0.0]]
    } else {
        (0..16)
            .map(|k| {
                let th = std::f64::consts::PI * k as f64 / 16.0;
                [th.cos(), th.sin()]
            })
            .collect()
    };
    let mut snapshots = Vec::new();
    for (s, (time, state)) in traj.times.iter().zip(&traj.snapshots).enumerate() {
        let f = collapse_anisotropic_fields(&traj.grid, *time, state, diffusion, advection);
        let mut a_min = f64::INFINITY;
        let mut a_max: f64 = 0.0;
        for cell in 0..traj.grid.len() {
            let a = &f.a[cell];
            for xi in &directions {
                let q = a[0][0] * xi[0] * xi[0] + (a[0][1] + a[1][0]) * xi[0] * xi[1] + a[1][1] * xi[1] * xi[1];
                if q < lower - COLLAPSE_TOL || f.w[cell] < 1.0 - COLLAPSE_TOL {
                    return Err(Error::CollapseBoundViolation {
                        snapshot: s,
                        cell,
                        detail: format!("xi . A xi = {q} below {lower} for xi = {xi:?}"),
                    });
                }
            }
            let (lo, hi) = eigenvalues(a, dim);
            a_min = a_min.min(lo);
            a_max = a_max.max(hi);
        }
        snapshots.push(CollapseSnapshot {
            time: *time,
            w_min: f.w.iter().cloned().fold(f64::INFINITY, f64::min),
            w_max: f.w.iter().cloned().fold(0.0, f64::max),
            a_min,
            a_max,
            drift_max: f
                .b
                .iter()
                .zip(&f.u)
                .map(|(b, u)| b[0].hypot(b[1]) + u[0].hypot(u[1]))
                .fold(0.0, f64::max),
        });
    }
    Ok(CollapseReport {
        anisotropic: true,
        lower,
        upper: f64::INFINITY,
        snapshots,
    })
}
