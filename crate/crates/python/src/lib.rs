//! Python bindings for `edrlab`.
//!
//! ```python
//! import edrlab
//! g = edrlab.Grid(32, 1.0)
//! proc = edrlab.Process.von_neumann(g, coupling=1.0, probe_sigma=1.0)
//! psi = g.gaussian(0.0, 0.0, 3.0)
//! proc.report(psi)["prod_delta_eta"]
//! ```

use num_complex::Complex64;
use pyo3::create_exception;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use edrlab::hilbert::CVector;
use edrlab::meter::{min_delta_f, solve_unbiased_f};
use edrlab::models::{self, ModelSpec, ProbeSpec};
use edrlab::povm::{born_check, extract_povm};
use edrlab::{GridSpec, MeasurementProcess, MeterFunction, QState};

create_exception!(edrlab, EdrError, PyValueError, "Configuration or numerical error.");
create_exception!(edrlab, InvariantViolation, EdrError, "A type invariant was violated; the message starts with its code.");

fn err(e: edrlab::Error) -> PyErr {
    if e.is_invariant_violation() {
        InvariantViolation::new_err(e.to_string())
    } else {
        EdrError::new_err(format!("{}: {e}", e.code()))
    }
}

/// Uniform position grid `x_j = (j - n/2) dx`.
#[pyclass(name = "Grid", module = "edrlab", frozen)]
struct PyGrid(GridSpec);

#[pymethods]
impl PyGrid {
    #[new]
    #[pyo3(signature = (n, dx = 1.0, hbar = 1.0))]
    fn new(n: usize, dx: f64, hbar: f64) -> PyResult<Self> {
        GridSpec::new(n, dx, hbar).map(Self).map_err(err)
    }

    #[getter]
    fn n(&self) -> usize {
        self.0.n
    }
    #[getter]
    fn dx(&self) -> f64 {
        self.0.dx
    }
    #[getter]
    fn hbar(&self) -> f64 {
        self.0.hbar
    }

    fn positions(&self) -> Vec<f64> {
        self.0.positions()
    }

    fn momenta(&self) -> Vec<f64> {
        self.0.momenta()
    }

    fn gaussian(&self, x0: f64, p0: f64, sigma: f64) -> PyResult<PyState> {
        self.0.gaussian_state(x0, p0, sigma).map(PyState).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!("Grid(n={}, dx={}, hbar={})", self.0.n, self.0.dx, self.0.hbar)
    }
}

/// Normalized pure state.
#[pyclass(name = "State", module = "edrlab", frozen)]
struct PyState(QState);

#[pymethods]
impl PyState {
    /// Build from complex amplitudes; they must already be normalized.
    #[new]
    fn new(amplitudes: Vec<Complex64>) -> PyResult<Self> {
        QState::new(CVector::from_vec(amplitudes)).map(Self).map_err(err)
    }

    #[getter]
    fn amplitudes(&self) -> Vec<Complex64> {
        self.0.amplitudes().iter().copied().collect()
    }

    fn __len__(&self) -> usize {
        self.0.dim()
    }
}

fn meter_function(proc: &MeasurementProcess, f: &str) -> PyResult<MeterFunction> {
    if f == "solve" {
        return solve_unbiased_f(proc).map(|s| s.f_star).map_err(err);
    }
    MeterFunction::parse(f).map_err(err)
}

fn probe(sigma: f64, offset: f64) -> ProbeSpec {
    if sigma == 0.0 {
        ProbeSpec::Sharp { x0: offset }
    } else {
        ProbeSpec::Gaussian { x0: offset, p0: 0.0, sigma }
    }
}

fn matrix_rows(m: &edrlab::hilbert::CMatrix) -> Vec<Vec<Complex64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

/// An object coupled to a probe by a unitary, read out by a meter.
#[pyclass(name = "Process", module = "edrlab", frozen)]
struct PyProcess(MeasurementProcess);

#[pymethods]
impl PyProcess {
    /// Position measurement `exp(-i coupling x P / hbar)`; the probe grid
    /// defaults to four times the object grid at the same spacing.
    #[staticmethod]
    #[pyo3(signature = (grid, coupling = 1.0, probe_sigma = 1.0, probe_offset = 0.0, probe_n = None))]
    fn von_neumann(
        grid: &PyGrid,
        coupling: f64,
        probe_sigma: f64,
        probe_offset: f64,
        probe_n: Option<usize>,
    ) -> PyResult<Self> {
        let g = grid.0;
        let gp = GridSpec::new(probe_n.unwrap_or(4 * g.n), g.dx, g.hbar).map_err(err)?;
        let spec = ModelSpec::von_neumann(g, gp, coupling, probe(probe_sigma, probe_offset));
        models::build(&spec).map(Self).map_err(err)
    }

    #[staticmethod]
    #[pyo3(signature = (grid, probe_sigma = 1.0, probe_offset = 0.0))]
    fn swap(grid: &PyGrid, probe_sigma: f64, probe_offset: f64) -> PyResult<Self> {
        models::build(&ModelSpec::swap(grid.0, probe(probe_sigma, probe_offset))).map(Self).map_err(err)
    }

    #[staticmethod]
    #[pyo3(signature = (grid, probe_sigma = 1.0, probe_offset = 0.0))]
    fn identity(grid: &PyGrid, probe_sigma: f64, probe_offset: f64) -> PyResult<Self> {
        let spec = ModelSpec::identity(grid.0, grid.0, probe(probe_sigma, probe_offset));
        models::build(&spec).map(Self).map_err(err)
    }

    /// Haar-random interaction and probe state, seeded.
    #[staticmethod]
    #[pyo3(signature = (grid, probe_grid = None, seed = 0))]
    fn random(grid: &PyGrid, probe_grid: Option<&PyGrid>, seed: u64) -> PyResult<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gp = probe_grid.map_or(grid.0, |g| g.0);
        models::random_process(grid.0, gp, &mut rng).map(Self).map_err(err)
    }

    /// Load and validate a model file.
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        models::load_custom(path).map(Self).map_err(err)
    }

    fn save(&self, path: &str) -> PyResult<()> {
        models::save(&self.0, path).map_err(err)
    }

    #[getter]
    fn dims(&self) -> (usize, usize) {
        let d = self.0.dims();
        (d.object, d.probe)
    }

    #[getter]
    fn hbar(&self) -> f64 {
        self.0.hbar()
    }

    fn epsilon(&self, psi: &PyState) -> PyResult<f64> {
        self.0.epsilon(&psi.0).map(|r| r.value).map_err(err)
    }

    #[pyo3(signature = (psi, f = "identity"))]
    fn delta(&self, psi: &PyState, f: &str) -> PyResult<f64> {
        let f = meter_function(&self.0, f)?;
        self.0.delta(&psi.0, &f).map(|r| r.value).map_err(err)
    }

    fn eta(&self, psi: &PyState) -> PyResult<f64> {
        self.0.eta(&psi.0).map(|r| r.value).map_err(err)
    }

    /// Full report as a dict; `f` is `identity`, `affine:A,B`, `poly:...` or `solve`.
    #[pyo3(signature = (psi, f = "identity"))]
    fn report<'py>(&self, py: Python<'py>, psi: &PyState, f: &str) -> PyResult<Bound<'py, PyDict>> {
        let f = meter_function(&self.0, f)?;
        let r = self.0.edr_report(&psi.0, &f).map_err(err)?;
        let d = PyDict::new(py);
        for (k, v) in [
            ("epsilon", r.epsilon),
            ("delta", r.delta),
            ("eta", r.eta),
            ("epsilon_sq", r.epsilon_sq),
            ("delta_sq", r.delta_sq),
            ("eta_sq", r.eta_sq),
            ("sigma_x", r.sigma_x),
            ("sigma_p", r.sigma_p),
            ("prod_eps_eta", r.prod_eps_eta),
            ("prod_delta_eta", r.prod_delta_eta),
            ("unbiasedness_deficit", r.unbiasedness_deficit),
            ("hbar_half", r.hbar_half),
            ("h", r.h),
        ] {
            d.set_item(k, v)?;
        }
        Ok(d)
    }

    /// POVM as a list of `(value, element)` with elements as nested lists.
    fn povm(&self) -> Vec<(f64, Vec<Vec<Complex64>>)> {
        extract_povm(&self.0)
            .outcomes
            .iter()
            .map(|o| (o.value, matrix_rows(o.element.matrix())))
            .collect()
    }

    /// `(max_deviation, is_born)`.
    fn born_check(&self) -> (f64, bool) {
        let b = born_check(&self.0);
        (b.max_deviation, b.is_born)
    }

    /// Least-squares unbiasing meter function.
    fn solve_unbiased_f<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let s = solve_unbiased_f(&self.0).map_err(err)?;
        let d = PyDict::new(py);
        d.set_item("residual", s.residual)?;
        d.set_item("feasible", s.feasible)?;
        d.set_item("values", self.0.meter_spectrum().cluster_values())?;
        d.set_item("f", s.coefficients)?;
        Ok(d)
    }

    /// Meter function minimizing `delta` in the state `psi`.
    fn min_delta_f<'py>(&self, py: Python<'py>, psi: &PyState) -> PyResult<Bound<'py, PyDict>> {
        let m = min_delta_f(&self.0, &psi.0).map_err(err)?;
        let d = PyDict::new(py);
        d.set_item("delta_min", m.delta_min.value)?;
        d.set_item("values", self.0.meter_spectrum().cluster_values())?;
        d.set_item("f", m.coefficients)?;
        Ok(d)
    }

    fn __repr__(&self) -> String {
        let d = self.0.dims();
        format!("Process(object={}, probe={}, hbar={})", d.object, d.probe, self.0.hbar())
    }
}

#[pymodule]
#[pyo3(name = "edrlab")]
fn edrlab_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGrid>()?;
    m.add_class::<PyState>()?;
    m.add_class::<PyProcess>()?;
    m.add("EdrError", m.py().get_type::<EdrError>())?;
    m.add("InvariantViolation", m.py().get_type::<InvariantViolation>())?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
