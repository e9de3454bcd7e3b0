//! Python bindings: configurations, the coupled simulation and the verification
//! experiments. Structured results are returned as plain dicts and lists.

use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;

use nsch_core::coupled::{initial_state, nsch_step, CouplingConfig, SimulationState};
use nsch_core::discretization::Discretization;
use nsch_core::io::output::write_diagnostics;
use nsch_core::io::{ConfigFormat, LoadedConfig, RunConfig};
use nsch_core::materials::ModelParameters;
use nsch_core::NschError;

create_exception!(nsch, SolverError, PyException);

fn to_py(e: NschError) -> PyErr {
    match e.exit_code() {
        1 => PyValueError::new_err(e.to_string()),
        _ => SolverError::new_err(e.to_string()),
    }
}

/// Serializable value → Python object through the json module.
fn to_object<T: serde::Serialize>(py: Python<'_>, v: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(v).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

#[pyclass(name = "Config", module = "nsch", skip_from_py_object)]
#[derive(Clone)]
struct PyConfig {
    inner: RunConfig,
}

#[pymethods]
impl PyConfig {
    /// Defaults: logarithmic potentials with theta = 1, theta_c = 2.
    #[new]
    fn new() -> Self {
        Self { inner: RunConfig::default() }
    }

    #[staticmethod]
    fn from_file(path: PathBuf) -> PyResult<Self> {
        let (inner, _, _) = nsch_core::io::read_config(&path).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        Ok(Self { inner: RunConfig::from_str_as(text, ConfigFormat::Toml).map_err(to_py)? })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self { inner: RunConfig::from_str_as(text, ConfigFormat::Json).map_err(to_py)? })
    }

    fn to_toml(&self) -> PyResult<String> {
        self.inner.to_string_as(ConfigFormat::Toml).map_err(to_py)
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_string_as(ConfigFormat::Json).map_err(to_py)
    }

    /// Checks of the model assumptions; raises ValueError on a failed rule.
    fn validate(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        let report = self.inner.validate().map_err(to_py)?;
        to_object(py, &report)
    }

    #[getter]
    fn n_rings(&self) -> usize {
        self.inner.mesh.n_rings
    }
    #[setter]
    fn set_n_rings(&mut self, n: usize) {
        self.inner.mesh.n_rings = n;
    }
    #[getter]
    fn dt(&self) -> f64 {
        self.inner.time.dt
    }
    #[setter]
    fn set_dt(&mut self, dt: f64) {
        self.inner.time.dt = dt;
    }
    #[getter]
    fn n_steps(&self) -> usize {
        self.inner.time.n_steps
    }
    #[setter]
    fn set_n_steps(&mut self, n: usize) {
        self.inner.time.n_steps = n;
    }
    #[getter]
    fn stride(&self) -> usize {
        self.inner.time.stride
    }
    #[setter]
    fn set_stride(&mut self, n: usize) {
        self.inner.time.stride = n;
    }
    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }
    #[setter]
    fn set_seed(&mut self, s: u64) {
        self.inner.seed = s;
    }
    /// Exchange parameter L; float("inf") selects the decoupled regime.
    #[getter(L)]
    fn l(&self) -> f64 {
        self.inner.params.l
    }
    #[setter(L)]
    fn set_l(&mut self, l: f64) {
        self.inner.params.l = l;
    }
    #[getter(K)]
    fn k(&self) -> f64 {
        self.inner.params.k
    }
    #[setter(K)]
    fn set_k(&mut self, k: f64) {
        self.inner.params.k = k;
    }
    #[getter]
    fn beta(&self) -> f64 {
        self.inner.params.beta
    }
    #[setter]
    fn set_beta(&mut self, b: f64) {
        self.inner.params.beta = b;
    }

    /// Model parameters as a dict.
    fn params(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_object(py, &self.inner.params)
    }

    /// Replaces the model parameters from a JSON string.
    fn set_params_json(&mut self, text: &str) -> PyResult<()> {
        let p: ModelParameters = serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
        self.inner.params = p;
        Ok(())
    }

    fn __repr__(&self) -> String {
        format!(
            "Config(n_rings={}, dt={}, n_steps={}, L={}, K={}, seed={})",
            self.inner.mesh.n_rings, self.inner.time.dt, self.inner.time.n_steps, self.inner.params.l, self.inner.params.k, self.inner.seed
        )
    }
}

#[pyclass(name = "Mesh", module = "nsch")]
struct PyMesh {
    disc: Discretization,
}

#[pymethods]
impl PyMesh {
    #[new]
    #[pyo3(signature = (n_rings, radius = 1.0))]
    fn new(n_rings: usize, radius: f64) -> PyResult<Self> {
        Ok(Self { disc: Discretization::disk(n_rings, radius).map_err(to_py)? })
    }

    #[getter]
    fn n_vertices(&self) -> usize {
        self.disc.nv()
    }
    #[getter]
    fn n_triangles(&self) -> usize {
        self.disc.mesh.triangles.len()
    }
    #[getter]
    fn n_boundary(&self) -> usize {
        self.disc.nb()
    }
    fn vertices(&self) -> Vec<(f64, f64)> {
        self.disc.mesh.vertices.iter().map(|v| (v[0], v[1])).collect()
    }
    fn triangles(&self) -> Vec<(usize, usize, usize)> {
        self.disc.mesh.triangles.iter().map(|t| (t[0], t[1], t[2])).collect()
    }
    fn boundary_loop(&self) -> Vec<usize> {
        self.disc.mesh.boundary_loop.clone()
    }
    /// Discrete measures (|Omega|, |Gamma|).
    fn measures(&self) -> (f64, f64) {
        (self.disc.ops.bulk_measure, self.disc.ops.surf_measure)
    }

    /// Eigenvalues of the Stokes operator with unit coefficients.
    fn stokes_eigenvalues(&self, k: usize) -> PyResult<Vec<f64>> {
        Ok(nsch_core::stokes::stokes_eigenpairs(&self.disc, k).map_err(to_py)?.values)
    }

    fn korn_constant(&self) -> PyResult<f64> {
        nsch_core::stokes::korn_check(&self.disc).map_err(to_py)
    }

    fn rigid_rotation_check(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        let r = nsch_core::stokes::rigid_rotation_check(&self.disc, Default::default()).map_err(to_py)?;
        to_object(py, &r)
    }
}

/// Coupled simulation advanced step by step from Python.
#[pyclass(name = "Simulation", module = "nsch")]
struct PySimulation {
    config: RunConfig,
    disc: Discretization,
    coupling: CouplingConfig,
    state: SimulationState,
}

#[pymethods]
impl PySimulation {
    #[new]
    fn new(config: &PyConfig) -> PyResult<Self> {
        let config = config.inner.clone();
        config.validate().map_err(to_py)?;
        let disc = Discretization::new(config.mesh().map_err(to_py)?).map_err(to_py)?;
        let (state, _) = initial_state(&disc, &config.params, &config.initial, config.seed).map_err(to_py)?;
        let coupling = config.coupling();
        Ok(Self { config, disc, coupling, state })
    }

    /// Advances `n` coupled steps; returns the number of steps taken so far.
    #[pyo3(signature = (n = 1))]
    fn step(&mut self, py: Python<'_>, n: usize) -> PyResult<usize> {
        for _ in 0..n {
            let (next, _) = py
                .detach(|| nsch_step(&self.disc, &self.state, &self.config.params, &self.coupling))
                .map_err(to_py)?;
            self.state = next;
        }
        Ok(self.state.step)
    }

    #[getter]
    fn t(&self) -> f64 {
        self.state.ch.t
    }
    #[getter]
    fn steps(&self) -> usize {
        self.state.step
    }
    #[getter]
    fn omega(&self) -> f64 {
        self.state.flow.omega
    }

    /// (phi, psi) at the bulk and boundary vertices.
    fn phase(&self) -> (Vec<f64>, Vec<f64>) {
        (self.state.ch.phase.phi.clone(), self.state.ch.phase.psi.clone())
    }
    /// (mu, theta).
    fn chemical_potential(&self) -> (Vec<f64>, Vec<f64>) {
        (self.state.ch.chem.phi.clone(), self.state.ch.chem.psi.clone())
    }
    /// Bulk velocity at the mesh vertices.
    fn velocity(&self) -> Vec<(f64, f64)> {
        self.state.flow.v.vertex_values(&self.disc.mesh).iter().map(|v| (v[0], v[1])).collect()
    }
    fn pressure(&self) -> Vec<f64> {
        self.state.flow.p.clone()
    }

    /// One dict per recorded step, keys as in diagnostics.csv.
    fn diagnostics(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_object(py, &self.state.diagnostics)
    }

    fn write_diagnostics(&self, path: PathBuf) -> PyResult<()> {
        write_diagnostics(&path, &self.state.diagnostics).map_err(to_py)
    }
}

/// Full run into `out_dir`; returns the summary.
#[pyfunction]
fn run(py: Python<'_>, config: &PyConfig, out_dir: PathBuf) -> PyResult<Py<PyAny>> {
    let loaded = LoadedConfig::from_config(config.inner.clone()).map_err(to_py)?;
    let summary = py.detach(|| nsch_core::io::execute_run(&loaded, &out_dir)).map_err(to_py)?;
    to_object(py, &summary)
}

/// Property suite; the report lists every check with its measured value.
#[pyfunction]
fn verify(py: Python<'_>, config: &PyConfig) -> PyResult<Py<PyAny>> {
    let cfg = config.inner.clone();
    let report = py.detach(|| nsch_core::verify::verify(&cfg)).map_err(to_py)?;
    to_object(py, &report)
}

/// Manufactured-solution refinement study over the given ring counts.
#[pyfunction]
#[pyo3(signature = (rings = vec![8, 16, 32]))]
fn convergence(py: Python<'_>, rings: Vec<usize>) -> PyResult<Py<PyAny>> {
    let rows = py.detach(|| nsch_core::elliptic::manufactured_convergence(&rings)).map_err(to_py)?;
    to_object(py, &rows)
}

/// chi(r): 1/r on (0, inf), zero at 0 and inf.
#[pyfunction]
fn chi(r: f64) -> f64 {
    nsch_core::chi(r)
}

#[pymodule]
fn nsch(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyConfig>()?;
    m.add_class::<PyMesh>()?;
    m.add_class::<PySimulation>()?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add_function(wrap_pyfunction!(convergence, m)?)?;
    m.add_function(wrap_pyfunction!(chi, m)?)?;
    m.add("SolverError", m.py().get_type::<SolverError>())?;
    Ok(())
}
