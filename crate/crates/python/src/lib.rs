//! Python bindings: scenarios, the solver, network certification and the
//! experiment runner.

use std::path::PathBuf;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use rdalab::cli::{self, RunOutcome};
use rdalab::estimates::NormReport;
use rdalab::network::{certify, format_rational, parse_rational, rational_to_f64, ReactionNetwork};
use rdalab::network::TriangularCertificate;
use rdalab::presets;
use rdalab::solver::{self, Trajectory};

fn err(e: rdalab::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

#[pyclass(name = "Network", module = "pyrdalab", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyNetwork {
    inner: ReactionNetwork,
}

#[pymethods]
impl PyNetwork {
    /// Parses a network from its TOML description.
    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        ReactionNetwork::from_toml_str(text).map(|inner| Self { inner }).map_err(err)
    }

    /// The exchange network `A + B <-> C` with rational rates given as strings.
    #[staticmethod]
    #[pyo3(signature = (k = "1", kappa = "1"))]
    fn abc(k: &str, kappa: &str) -> PyResult<Self> {
        let k = parse_rational(k).map_err(err)?;
        let kappa = parse_rational(kappa).map_err(err)?;
        Ok(Self { inner: ReactionNetwork::abc(k, kappa) })
    }

    #[getter]
    fn species(&self) -> usize {
        self.inner.species()
    }

    #[getter]
    fn reactions(&self) -> usize {
        self.inner.reactions()
    }

    #[getter]
    fn alpha(&self) -> Vec<Vec<u32>> {
        self.inner.alpha().to_vec()
    }

    #[getter]
    fn beta(&self) -> Vec<Vec<u32>> {
        self.inner.beta().to_vec()
    }

    fn to_toml(&self) -> String {
        self.inner.to_toml_string()
    }

    fn certify(&self) -> PyResult<PyCertificate> {
        let cert = certify(&self.inner).map_err(err)?;
        cert.verify(&self.inner).map_err(err)?;
        Ok(PyCertificate { inner: cert })
    }

    fn __repr__(&self) -> String {
        format!("Network({})", self.inner)
    }
}

#[pyclass(name = "Certificate", module = "pyrdalab", frozen, skip_from_py_object)]
pub struct PyCertificate {
    inner: TriangularCertificate,
}

#[pymethods]
impl PyCertificate {
    /// Positive conservation vector.
    #[getter]
    fn e(&self) -> Vec<f64> {
        self.inner.e_f64()
    }

    #[getter]
    fn b(&self) -> Vec<f64> {
        self.inner.b_f64()
    }

    #[getter]
    fn b0(&self) -> f64 {
        self.inner.b0_f64()
    }

    #[getter]
    fn q_matrix(&self) -> Vec<Vec<f64>> {
        self.inner.q_matrix.iter().map(|r| r.iter().map(rational_to_f64).collect()).collect()
    }

    /// Exact entries of `Q` as reduced fractions.
    fn q_matrix_exact(&self) -> Vec<Vec<String>> {
        self.inner.q_matrix.iter().map(|r| r.iter().map(format_rational).collect()).collect()
    }

    /// Maps a rate vector `f` through `Q`.
    fn apply_q(&self, f: Vec<f64>) -> Vec<f64> {
        self.inner.apply_q(&f)
    }

    fn report(&self) -> String {
        self.inner.to_report()
    }
}

#[pyclass(name = "Trajectory", module = "pyrdalab", frozen, skip_from_py_object)]
pub struct PyTrajectory {
    inner: Trajectory,
}

#[pymethods]
impl PyTrajectory {
    #[getter]
    fn times(&self) -> Vec<f64> {
        self.inner.times.clone()
    }

    /// Sampled states indexed `[snapshot][species][cell]`.
    #[getter]
    fn snapshots(&self) -> Vec<Vec<Vec<f64>>> {
        self.inner.snapshots.clone()
    }

    #[getter]
    fn cells(&self) -> Vec<usize> {
        self.inner.grid.cells().to_vec()
    }

    #[getter]
    fn steps(&self) -> usize {
        self.inner.steps()
    }

    fn min_value(&self) -> f64 {
        self.inner.min_value()
    }

    fn max_drift(&self) -> f64 {
        self.inner.max_drift()
    }

    /// Space-time `L^p` norm of one species.
    fn spacetime_norm(&self, species: usize, p: f64) -> PyResult<f64> {
        self.inner.spacetime_norm(species, p).map_err(err)
    }

    fn norms_csv(&self) -> String {
        self.inner.norms_csv()
    }

    /// Tracked norms per species as `(exponents, per_species, aggregate)`.
    fn norms(&self) -> PyResult<(Vec<f64>, Vec<Vec<f64>>, Vec<f64>)> {
        let r = NormReport::from_trajectory(&self.inner).map_err(err)?;
        Ok((r.exponents, r.per_species, r.aggregate))
    }
}

#[pyclass(name = "RunResult", module = "pyrdalab", frozen, skip_from_py_object)]
pub struct PyRunResult {
    inner: RunOutcome,
}

#[pymethods]
impl PyRunResult {
    #[getter]
    fn passed(&self) -> bool {
        self.inner.passed()
    }

    /// `(name, passed, detail)` for every check that ran.
    #[getter]
    fn verdicts(&self) -> Vec<(String, bool, String)> {
        self.inner
            .verdicts
            .iter()
            .map(|v| (v.name.clone(), v.passed, v.detail.clone()))
            .collect()
    }

    #[getter]
    fn trajectory(&self) -> PyTrajectory {
        PyTrajectory { inner: self.inner.trajectory.clone() }
    }

    fn report(&self) -> String {
        self.inner.report()
    }

    fn estimates_csv(&self) -> String {
        self.inner.estimates_csv()
    }

    fn duality_csv(&self) -> String {
        self.inner.duality_csv()
    }

    /// Writes the report, CSV files and snapshots into `directory`.
    fn write(&self, directory: PathBuf) -> PyResult<()> {
        self.inner.write(&directory).map_err(err)
    }
}

#[pyclass(name = "Scenario", module = "pyrdalab", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyScenario {
    inner: rdalab::scenario::Scenario,
}

#[pymethods]
impl PyScenario {
    #[staticmethod]
    fn preset(name: &str) -> PyResult<Self> {
        presets::preset(name).map(|inner| Self { inner }).map_err(err)
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        rdalab::scenario::Scenario::from_toml_str(text)
            .map(|inner| Self { inner })
            .map_err(err)
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name.clone()
    }

    #[getter]
    fn species(&self) -> usize {
        self.inner.species_count()
    }

    #[getter]
    fn cells(&self) -> Vec<usize> {
        self.inner.grid.cells().to_vec()
    }

    fn to_toml(&self) -> PyResult<String> {
        self.inner.to_toml_string().map_err(err)
    }

    fn network(&self) -> PyResult<Option<PyNetwork>> {
        Ok(self.inner.network().map_err(err)?.map(|inner| PyNetwork { inner }))
    }

    fn with_network(&self, network: &PyNetwork) -> Self {
        Self { inner: self.inner.with_network(&network.inner) }
    }

    fn with_resolution(&self, cells: Vec<usize>, dt: f64) -> PyResult<Self> {
        self.inner.with_resolution(&cells, dt).map(|inner| Self { inner }).map_err(err)
    }

    /// Solves the scenario without running its experiments.
    fn solve(&self, py: Python<'_>) -> PyResult<PyTrajectory> {
        let scenario = self.inner.clone();
        py.detach(move || {
            let built = scenario.build()?;
            solver::run(&built.problem, &built.config)
        })
        .map(|inner| PyTrajectory { inner })
        .map_err(err)
    }

    /// Solves the scenario and runs every configured experiment.
    fn run(&self, py: Python<'_>) -> PyResult<PyRunResult> {
        let scenario = self.inner.clone();
        py.detach(move || cli::run_scenario(&scenario))
            .map(|inner| PyRunResult { inner })
            .map_err(err)
    }

    fn __repr__(&self) -> String {
        format!("Scenario({:?}, cells={:?})", self.inner.name, self.inner.grid.cells())
    }
}

#[pyfunction]
fn preset_names() -> Vec<&'static str> {
    presets::names()
}

/// Runs the command-line interface with `args` (excluding the program name)
/// and returns its exit code.
#[pyfunction]
fn main(args: Vec<String>) -> u8 {
    cli::main_with_args(std::iter::once("rdalab".to_string()).chain(args))
}

#[pymodule]
fn pyrdalab(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyScenario>()?;
    m.add_class::<PyTrajectory>()?;
    m.add_class::<PyRunResult>()?;
    m.add_class::<PyNetwork>()?;
    m.add_class::<PyCertificate>()?;
    m.add_function(wrap_pyfunction!(preset_names, m)?)?;
    m.add_function(wrap_pyfunction!(main, m)?)?;
    Ok(())
}
