//! Python bindings for the metastability toolkit.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use kramers_core::config::ExperimentConfig;
use kramers_core::exactsmall::phi_n_small as core_phi_n_small;
use kramers_core::experiment::run_experiment as core_run_experiment;
use kramers_core::kramers::{ek_prediction, LevelPolicy};
use kramers_core::landscape::{find_critical_points, LandscapeSummary};
use kramers_core::simulate::{estimate_transition_time, Init, SimulationConfig};
use kramers_core::{check_assumption, CramerTransform, KramersError, PotentialSpec};

fn to_py(e: KramersError) -> PyErr {
    match e {
        KramersError::InvalidInput(_)
        | KramersError::ConfigInvalid(_)
        | KramersError::Expression(_)
        | KramersError::UnsupportedOrder(_)
        | KramersError::InvalidBudget(_)
        | KramersError::InvalidPoincare(_) => PyValueError::new_err(e.to_string()),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

/// A single-site potential.
#[pyclass(name = "Potential", frozen)]
struct PyPotential {
    inner: PotentialSpec,
}

#[pymethods]
impl PyPotential {
    /// `z^4/4 - z^2/2`.
    #[staticmethod]
    fn quartic_double_well() -> Self {
        PyPotential { inner: PotentialSpec::quartic_double_well() }
    }

    /// An even expression in `z` with quadratic growth constant `alpha` beyond `radius`.
    #[staticmethod]
    #[pyo3(signature = (source, alpha, radius = 1.0))]
    fn general(source: &str, alpha: f64, radius: f64) -> PyResult<Self> {
        Ok(PyPotential { inner: PotentialSpec::general(source, alpha, radius).map_err(to_py)? })
    }

    #[staticmethod]
    fn quadratic(alpha: f64) -> PyResult<Self> {
        Ok(PyPotential { inner: PotentialSpec::quadratic(alpha).map_err(to_py)? })
    }

    fn value(&self, z: f64) -> f64 {
        self.inner.value(z)
    }

    /// Value and derivatives of orders one to four.
    fn derivatives(&self, z: f64) -> PyResult<Vec<f64>> {
        Ok(self.inner.derivatives(z).map_err(to_py)?.to_vec())
    }

    /// Clause statuses of the structural assumption at coupling `j`.
    fn check_assumption<'py>(&self, py: Python<'py>, j: f64) -> PyResult<Bound<'py, PyDict>> {
        let report = check_assumption(&self.inner, j).map_err(to_py)?;
        let d = PyDict::new(py);
        for c in &report.clauses {
            d.set_item(c.clause, format!("{:?}", c.status).to_lowercase())?;
        }
        Ok(d)
    }

    fn __repr__(&self) -> String {
        format!("Potential({:?})", self.inner.descriptor().kind)
    }
}

/// Cramér transform of the tilted single-site measure.
#[pyclass(name = "CramerTransform", frozen)]
struct PyCramer {
    inner: CramerTransform,
}

#[pymethods]
impl PyCramer {
    /// Low-temperature transform at `eps`, or the `eps = 1` high-temperature one when `eps` is None.
    #[new]
    #[pyo3(signature = (potential, j, eps = None))]
    fn new(potential: &PyPotential, j: f64, eps: Option<f64>) -> PyResult<Self> {
        let inner = match eps {
            Some(e) => CramerTransform::new(&potential.inner, j, e),
            None => CramerTransform::high_temperature(&potential.inner, j),
        }
        .map_err(to_py)?;
        Ok(PyCramer { inner })
    }

    /// `(phi(m), phi''(m), phi'''(m))`.
    fn phi(&self, m: f64) -> PyResult<(f64, f64, f64)> {
        let p = self.inner.cramer_transform(m).map_err(to_py)?;
        Ok((p.phi, p.d2, p.d3))
    }

    /// Cumulant generating function derivative of the given order at tilt `sigma`.
    fn cgf(&self, sigma: f64, order: usize) -> PyResult<f64> {
        self.inner.cgf(sigma, order).map_err(to_py)
    }

    fn landscape(&self) -> PyResult<PyLandscape> {
        Ok(PyLandscape { inner: find_critical_points(&self.inner).map_err(to_py)? })
    }
}

/// Critical points and curvatures of the macroscopic Hamiltonian.
#[pyclass(name = "Landscape", frozen)]
struct PyLandscape {
    inner: LandscapeSummary,
}

#[pymethods]
impl PyLandscape {
    #[getter]
    fn m_star(&self) -> f64 {
        self.inner.m_star
    }

    #[getter]
    fn barrier(&self) -> f64 {
        self.inner.barrier
    }

    /// `(H''(-m*), H''(0), H''(m*))`.
    #[getter]
    fn curvatures(&self) -> (f64, f64, f64) {
        (self.inner.curvature_minus, self.inner.curvature_zero, self.inner.curvature_plus)
    }

    /// Eyring–Kramers prediction at particle number `n`; logarithms plus the linear time when representable.
    fn predict<'py>(&self, py: Python<'py>, n: usize) -> PyResult<Bound<'py, PyDict>> {
        let p = ek_prediction(&self.inner, n).map_err(to_py)?;
        let d = PyDict::new(py);
        d.set_item("n", n)?;
        d.set_item("log_time", p.time.log)?;
        d.set_item("time", p.time.value)?;
        d.set_item("log_capacity_upper", p.capacity_upper.value.log)?;
        d.set_item("log_capacity_lower", p.capacity_lower.value.log)?;
        d.set_item("log_equilibrium_mass", p.equilibrium_mass.log)?;
        d.set_item("geometry_degenerate", p.geometry.is_none())?;
        Ok(d)
    }

    fn __repr__(&self) -> String {
        format!("Landscape(m_star={:.6}, barrier={:.6})", self.inner.m_star, self.inner.barrier)
    }
}

/// Monte Carlo mean transition time from the well bottom `-m*` to `m*`.
#[pyfunction]
#[pyo3(signature = (potential, n, j, eps, dt, transitions, seed = 0, burn_in = 2000))]
fn simulate<'py>(
    py: Python<'py>,
    potential: &PyPotential,
    n: usize,
    j: f64,
    eps: f64,
    dt: f64,
    transitions: usize,
    seed: u64,
    burn_in: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let t = CramerTransform::new(&potential.inner, j, eps).map_err(to_py)?;
    let s = find_critical_points(&t).map_err(to_py)?;
    let levels = kramers_core::kramers::transition_levels(&s, n, LevelPolicy::WellBottoms).map_err(to_py)?;
    let cfg = SimulationConfig::new(&potential.inner, n, j, eps, dt, levels.target)
        .map_err(to_py)?
        .with_seed(seed)
        .with_init(Init::HyperplaneConditioned { m0: levels.start, burn_in });
    let est = py.detach(|| estimate_transition_time(&cfg, transitions)).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("mean", est.mean)?;
    d.set_item("std_dev", est.std_dev)?;
    d.set_item("ci95", est.ci95)?;
    d.set_item("crossed", est.crossed)?;
    d.set_item("timeouts", est.timeouts)?;
    Ok(d)
}

/// `(phi_N(m), estimated error)` by quadrature over the fiber, for `N <= 4`.
#[pyfunction]
fn phi_n_small(potential: &PyPotential, j: f64, eps: f64, n: usize, m: f64) -> PyResult<(f64, f64)> {
    let r = core_phi_n_small(&potential.inner, j, eps, n, m).map_err(to_py)?;
    Ok((r.value, r.error))
}

/// Runs an experiment from TOML text and returns the JSON report.
#[pyfunction]
fn run_experiment(py: Python<'_>, config_toml: &str) -> PyResult<String> {
    let cfg = ExperimentConfig::from_toml(config_toml).map_err(to_py)?;
    let (report, _) = py.detach(|| core_run_experiment(&cfg)).map_err(to_py)?;
    report.to_json().map_err(to_py)
}

#[pymodule]
fn kramers(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPotential>()?;
    m.add_class::<PyCramer>()?;
    m.add_class::<PyLandscape>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(phi_n_small, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
