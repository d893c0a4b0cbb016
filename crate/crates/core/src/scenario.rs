//! Scenario descriptions: the TOML configuration format and its translation
//! into a solvable [`Problem`].

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::coeffs::{self, AdvectionField, TensorField};
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::grid::Grid;
use crate::network::{
    certify, ExchangeKinetics, Kinetics, MassActionKinetics, NetworkFile, NoReaction, ReactionNetwork,
    TriangularCertificate,
};
use crate::solver::manufactured::{manufactured_forcing, SymbolicCoefficients};
use crate::solver::{Problem, SimulationConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ReactionSpec {
    /// Mass-action kinetics of an inline network.
    MassAction { network: NetworkFile },
    /// Mass-action kinetics of a network file, relative to the scenario file.
    NetworkFile { path: PathBuf },
    /// The two-species exchange system with `h(c1, c2) = c1 c2`.
    Exchange,
    /// No reactions.
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitialSpec {
    Expr(Expr),
    /// Constant on a disc (an interval in 1D) of the given area, with exact
    /// discrete mass. An area covering the domain gives uniform data.
    Plateau { mass: f64, area: f64, center: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpeciesSpec {
    #[serde(default)]
    pub name: String,
    /// One entry for `d I`, or `dim * dim` entries row-major.
    pub diffusion: Vec<Expr>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diffusion_bounds: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub advection: Vec<Expr>,
    pub initial: InitialSpec,
    /// Closed-form solution; when given for every species the forcing that
    /// makes it exact is added.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exact: Option<Expr>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExactErrorSpec {
    /// Bound on the max-norm error at the final time.
    pub tolerance: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_seconds: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceSpec {
    pub coarse_cells: Vec<usize>,
    pub coarse_dt: f64,
    pub levels: usize,
    /// `dt` shrinks by `2^dt_exponent` per halving of `h`.
    pub dt_exponent: u32,
    pub min_order: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeakResidualSpec {
    pub coarse_cells: Vec<usize>,
    pub coarse_dt: f64,
    pub levels: usize,
    pub max_ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct L2UniformitySpec {
    pub k_list: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilySpec {
    /// Growth factors of the sup norm; `1` is the flat member.
    pub factors: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CollapseSpec {
    pub anisotropic: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DualitySpec {
    pub train: usize,
    pub held_out: usize,
    /// Cell counts of the 1D grids, coarse to fine.
    pub levels: Vec<usize>,
    pub seed: u64,
    pub t_final: f64,
    pub a_bounds: [f64; 2],
    /// Cell counts of the pairing-defect refinement study.
    pub defect_levels: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContinuitySpec {
    pub magnitudes: Vec<f64>,
    pub max_spread: f64,
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Experiments {
    #[serde(default = "yes")]
    pub norms: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exact_error: Option<ExactErrorSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub convergence: Option<ConvergenceSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weak_residual: Option<WeakResidualSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l2_uniformity: Option<L2UniformitySpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l_n1_over_n: Option<FamilySpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub collapse: Option<CollapseSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duality: Option<DualitySpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub continuity: Option<ContinuitySpec>,
}

impl Default for Experiments {
    fn default() -> Self {
        Self {
            norms: true,
            exact_error: None,
            convergence: None,
            weak_residual: None,
            l2_uniformity: None,
            l_n1_over_n: None,
            collapse: None,
            duality: None,
            continuity: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub grid: Grid,
    pub time: SimulationConfig,
    pub reaction: ReactionSpec,
    pub species: Vec<SpeciesSpec>,
    #[serde(default)]
    pub experiments: Experiments,
}

/// A scenario turned into solver input.
#[derive(Clone, Debug)]
pub struct BuiltScenario {
    pub problem: Problem,
    pub config: SimulationConfig,
    pub network: Option<ReactionNetwork>,
    pub certificate: Option<TriangularCertificate>,
    pub exact: Option<Vec<Expr>>,
    /// Empirical eigenvalue range of each diffusion tensor.
    pub ellipticity: Vec<(f64, f64)>,
    pub warnings: Vec<String>,
}

/// Cells of `grid` within a disc (interval in 1D) of the given area around
/// `center`, carrying total mass `mass` exactly.
pub fn plateau(grid: &Grid, mass: f64, area: f64, center: &[f64]) -> Vec<f64> {
    if area >= grid.measure() {
        return vec![mass / grid.measure(); grid.len()];
    }
    let radius = if grid.dim() == 1 {
        0.5 * area
    } else {
        (area / std::f64::consts::PI).sqrt()
    };
    let dist = |x: [f64; 2]| {
        (0..grid.dim())
            .map(|a| (x[a] - center.get(a).copied().unwrap_or(0.0)).powi(2))
            .sum::<f64>()
            .sqrt()
    };
    let mut inside: Vec<bool> = grid.centers().map(|x| dist(x) <= radius).collect();
    if !inside.iter().any(|&b| b) {
        let nearest = grid
            .centers()
            .enumerate()
            .min_by(|a, b| dist(a.1).total_cmp(&dist(b.1)))
            .map(|(i, _)| i)
            .expect("grid is not empty");
        inside[nearest] = true;
    }
    let count = inside.iter().filter(|&&b| b).count();
    let value = mass / (count as f64 * grid.cell_volume());
    inside.iter().map(|&b| if b { value } else { 0.0 }).collect()
}

impl Scenario {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a scenario file; network paths are resolved against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let mut s = Self::from_toml_str(&std::fs::read_to_string(path)?)?;
        if let ReactionSpec::NetworkFile { path: p } = &mut s.reaction {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(s)
    }

    pub fn network(&self) -> Result<Option<ReactionNetwork>> {
        match &self.reaction {
            ReactionSpec::MassAction { network } => Ok(Some(ReactionNetwork::try_from(network.clone())?)),
            ReactionSpec::NetworkFile { path } => Ok(Some(ReactionNetwork::load(path)?)),
            ReactionSpec::Exchange | ReactionSpec::None => Ok(None),
        }
    }

    pub fn with_network(&self, net: &ReactionNetwork) -> Self {
        let mut s = self.clone();
        s.reaction = ReactionSpec::MassAction {
            network: NetworkFile::from(net.clone()),
        };
        s
    }

    /// Same scenario on another grid with another initial step.
    pub fn with_resolution(&self, cells: &[usize], dt: f64) -> Result<Self> {
        let mut s = self.clone();
        s.grid = Grid::new(cells, self.grid.lengths())?;
        s.time.dt_init = dt;
        Ok(s)
    }

    pub fn species_count(&self) -> usize {
        self.species.len()
    }

    /// Every diffusion tensor is a scalar multiple of the identity.
    pub fn has_scalar_diffusion(&self) -> bool {
        self.species.iter().all(|s| {
            s.diffusion.len() == 1
                || (s.diffusion.len() == 4
                    && s.diffusion[1] == Expr::num(0.0)
                    && s.diffusion[2] == Expr::num(0.0)
                    && s.diffusion[0] == s.diffusion[3])
        })
    }

    fn kinetics(&self, network: Option<&ReactionNetwork>) -> Result<Arc<dyn Kinetics>> {
        let p = self.species_count();
        let kin: Arc<dyn Kinetics> = match (&self.reaction, network) {
            (ReactionSpec::Exchange, _) => Arc::new(ExchangeKinetics),
            (ReactionSpec::None, _) => Arc::new(NoReaction(p)),
            (_, Some(net)) => Arc::new(MassActionKinetics::new(net)),
            (_, None) => unreachable!("mass-action scenarios carry a network"),
        };
        if kin.species() != p {
            return Err(Error::Config(format!(
                "reaction term has {} species but {p} species are configured",
                kin.species()
            )));
        }
        Ok(kin)
    }

    /// Times at which coefficient fields are sampled for diagnostics.
    pub fn sample_times(&self) -> Vec<f64> {
        let tf = self.time.t_final;
        let mut ts: Vec<f64> = (0..=4).map(|k| tf * k as f64 / 4.0).collect();
        ts.extend(self.time.snapshot_times.iter().copied().filter(|&t| t >= 0.0 && t <= tf));
        ts.sort_by(f64::total_cmp);
        ts.dedup();
        ts
    }

    pub fn build(&self) -> Result<BuiltScenario> {
        let grid = &self.grid;
        let dim = grid.dim();
        if self.species.is_empty() {
            return Err(Error::Config("at least one species is required".into()));
        }
        let network = self.network()?;
        let kinetics = self.kinetics(network.as_ref())?;
        let mut warnings = Vec::new();
        let times = self.sample_times();

        let mut diffusion = Vec::new();
        let mut advection = Vec::new();
        let mut ellipticity = Vec::new();
        let mut initial = Vec::new();
        for (i, s) in self.species.iter().enumerate() {
            let declared = s
                .diffusion_bounds
                .map_or((f64::MIN_POSITIVE, f64::INFINITY), |b| (b[0], b[1]));
            let raw = TensorField::from_exprs(dim, &s.diffusion, declared)?;
            let mut u = AdvectionField::from_exprs(dim, &s.advection)?;
            let symmetric = dim == 1 || s.diffusion.len() == 1 || s.diffusion[1] == s.diffusion[2];
            let d = if symmetric {
                raw
            } else {
                let (d_sym, u_d) = coeffs::symmetrize(&raw, grid);
                u = u.plus(&u_d);
                warnings.push(format!(
                    "species {}: nonsymmetric diffusion replaced by its symmetric part plus a drift",
                    i + 1
                ));
                d_sym
            };
            let range = coeffs::ellipticity_scan(&d, grid, &times)?;
            let d = if s.diffusion_bounds.is_none() { d.with_declared(range) } else { d };
            ellipticity.push(range);
            diffusion.push(d);
            advection.push(u);
            initial.push(match &s.initial {
                InitialSpec::Expr(e) => grid.sample(|x| e.eval(0.0, x)),
                InitialSpec::Plateau { mass, area, center } => plateau(grid, *mass, *area, center),
            });
        }

        let mut problem = Problem::new(grid.clone(), diffusion, advection, kinetics.clone(), initial)?;

        let exact: Option<Vec<Expr>> = if self.species.iter().all(|s| s.exact.is_some()) {
            Some(self.species.iter().map(|s| s.exact.clone().expect("checked")).collect())
        } else if self.species.iter().any(|s| s.exact.is_some()) {
            return Err(Error::Config("an exact solution must be given for every species or none".into()));
        } else {
            None
        };
        if let Some(ex) = &exact {
            let symbolic: Vec<SymbolicCoefficients> = self
                .species
                .iter()
                .map(|s| SymbolicCoefficients {
                    diffusion: s.diffusion.clone(),
                    advection: s.advection.clone(),
                })
                .collect();
            let forcing = manufactured_forcing(ex, &symbolic, kinetics.clone(), dim)?;
            let trivial = times.iter().all(|&t| {
                grid.centers()
                    .all(|x| forcing.iter().flatten().all(|g| g(t, x).abs() <= 1e-12))
            });
            if !trivial {
                problem = problem.with_forcing(forcing);
            }
        }

        let certificate = match (&self.reaction, &network) {
            (_, Some(net)) => match certify(net) {
                Ok(c) => Some(c),
                Err(e) => {
                    warnings.push(format!(
                        "triangular certification failed ({e}); certificate-based experiments are disabled"
                    ));
                    None
                }
            },
            _ => None,
        };
        let forced = problem.forcing.iter().any(Option::is_some);
        match (&self.reaction, &certificate) {
            _ if forced => {}
            (_, Some(c)) => problem = problem.with_conservation(c.e_f64()),
            (ReactionSpec::None, _) => problem = problem.with_conservation(vec![1.0; self.species_count()]),
            _ => {}
        }

        let mut config = self.time.clone();
        config.validate()?;
        config.snapshot_times.retain(|&t| t > 0.0 && t < config.t_final);
        Ok(BuiltScenario {
            problem,
            config,
            network,
            certificate,
            exact,
            ellipticity,
            warnings,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
name = "sample"

[grid]
cells = [16]
lengths = [1.0]

[time]
t_final = 0.5
dt_init = 0.01

[reaction]
kind = "mass_action"

[reaction.network]
species = 3
alpha = [[1, 1, 0]]
beta = [[0, 0, 1]]
k = ["2"]
kappa = ["1/2"]

[[species]]
name = "C1"
diffusion = ["1 + 0.5 * x"]
initial = "1 + cos(pi * x)"

[[species]]
name = "C2"
diffusion = ["0.5"]
advection = ["sin(pi * x)"]
initial = "1"

[[species]]
name = "C3"
diffusion = ["2"]
diffusion_bounds = [1.0, 3.0]
initial = { mass = 0.5, area = 0.25, center = [0.5] }

[experiments]
collapse = { anisotropic = false }
"#;

    #[test]
    fn parses_and_builds() {
        let s = Scenario::from_toml_str(SAMPLE).unwrap();
        assert_eq!(s.species_count(), 3);
        assert!(s.has_scalar_diffusion());
        let b = s.build().unwrap();
        assert_eq!(b.problem.species(), 3);
        let e = b.certificate.as_ref().unwrap().e_f64();
        assert_eq!(e, vec![1.0, 1.0, 2.0]);
        assert_eq!(b.problem.conservation.as_deref(), Some(&e[..]));
        let m = b.problem.grid.integrate(&b.problem.initial[2]);
        assert!((m - 0.5).abs() < 1e-12);
        assert!(b.warnings.is_empty());
        let (lo, hi) = b.ellipticity[0];
        assert!(lo > 1.0 && hi < 1.5);
    }

    #[test]
    fn round_trip() {
        let s = Scenario::from_toml_str(SAMPLE).unwrap();
        let text = s.to_toml_string().unwrap();
        assert_eq!(Scenario::from_toml_str(&text).unwrap(), s);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(Scenario::from_toml_str("name = 1").is_err());
        let s = Scenario::from_toml_str(&SAMPLE.replace("dt_init = 0.01", "dt_init = 0.01\nbogus = 1")).unwrap_err();
        assert!(matches!(s, Error::Config(_)));
        let mut s = Scenario::from_toml_str(SAMPLE).unwrap();
        s.species.pop();
        assert!(s.build().is_err());
        let mut s = Scenario::from_toml_str(SAMPLE).unwrap();
        s.species[2].diffusion_bounds = Some([2.5, 3.0]);
        assert!(matches!(s.build(), Err(Error::EllipticityViolation { .. })));
    }

    #[test]
    fn plateau_has_exact_mass() {
        let g = Grid::rect(32, 32, 1.0, 1.0);
        for area in [1.0, 0.25, 1.0 / 16.0, 1.0 / 64.0] {
            let v = plateau(&g, 2.0, area, &[0.5, 0.5]);
            assert!((g.integrate(&v) - 2.0).abs() < 1e-12);
            let max = v.iter().cloned().fold(0.0, f64::max);
            assert!(max >= 2.0 * 0.5 / area, "area {area}: max {max}");
        }
    }

    #[test]
    fn nonsymmetric_tensor_is_symmetrized() {
        let mut s = Scenario::from_toml_str(SAMPLE).unwrap();
        s.grid = Grid::rect(8, 8, 1.0, 1.0);
        for sp in &mut s.species {
            sp.diffusion = vec![
                Expr::parse("1").unwrap(),
                Expr::parse("y").unwrap(),
                Expr::parse("0").unwrap(),
                Expr::parse("1").unwrap(),
            ];
            sp.diffusion_bounds = None;
            sp.advection.clear();
            if let InitialSpec::Plateau { center, .. } = &mut sp.initial {
                center.push(0.5);
            }
        }
        let b = s.build().unwrap();
        assert_eq!(b.warnings.len(), 3);
        let u = b.problem.advection[0].eval(0.0, [0.3, 0.4]);
        assert!((u[0] - 0.5).abs() < 1e-12 && u[1].abs() < 1e-12);
    }
}
