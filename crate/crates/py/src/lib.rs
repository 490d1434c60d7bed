//! Python bindings: schedules, pointers, systems, the two engines, the
//! fluctuation relations and the work/heat ledger.

use num_complex::Complex64;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use qwork::analytic::{self, CrooksPair, ThermalSpec};
use qwork::linalg::{from_dmatrix, Mat2};
use qwork::numeric::{run_state, work_distribution_numeric, MomentumGrid, SolverOptions};
use qwork::oracle::two_point_distribution_qubit;
use qwork::thermo::{build_ledger, IntervalConvention, LedgerInputs, QubitFreeTrajectory, SampledTrajectory};
use qwork::{ApparatusSpec, DrivenQubit, ProtocolSchedule, SpectralSystem, SystemState, WorkDistribution, WorkGrid};

fn py_err(e: qwork::Error) -> PyErr {
    match e {
        qwork::Error::InvalidParameter { .. } => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

#[pyclass(name = "ProtocolSchedule", frozen)]
struct PySchedule(ProtocolSchedule);

#[pymethods]
impl PySchedule {
    #[new]
    fn new(t_p: f64, t_i: f64, t_f: f64, t_m: f64, delta: f64) -> PyResult<Self> {
        ProtocolSchedule::new(t_p, t_i, t_f, t_m, delta).map(Self).map_err(py_err)
    }

    #[staticmethod]
    fn figure_default() -> Self {
        Self(ProtocolSchedule::figure_default())
    }

    #[getter]
    fn t_p(&self) -> f64 {
        self.0.t_p()
    }
    #[getter]
    fn t_i(&self) -> f64 {
        self.0.t_i()
    }
    #[getter]
    fn t_f(&self) -> f64 {
        self.0.t_f()
    }
    #[getter]
    fn t_m(&self) -> f64 {
        self.0.t_m()
    }
    #[getter]
    fn delta(&self) -> f64 {
        self.0.delta()
    }

    /// Normalized coupling window `f(t)`.
    fn sampling_function(&self, t: f64) -> f64 {
        self.0.sampling_function(t)
    }

    fn __repr__(&self) -> String {
        let s = &self.0;
        format!("ProtocolSchedule(t_p={}, t_i={}, t_f={}, t_m={}, delta={})", s.t_p(), s.t_i(), s.t_f(), s.t_m(), s.delta())
    }
}

#[pyclass(name = "ApparatusSpec", frozen)]
struct PyApparatus(ApparatusSpec);

#[pymethods]
impl PyApparatus {
    #[new]
    fn new(mass: f64, sigma_p: f64, coupling: f64) -> PyResult<Self> {
        ApparatusSpec::new(mass, sigma_p, coupling).map(Self).map_err(py_err)
    }

    /// `mass_ratio = kappa m / sigma_p^2`.
    #[staticmethod]
    fn from_mass_ratio(mass_ratio: f64, sigma_p: f64, coupling: f64, kappa: f64) -> PyResult<Self> {
        ApparatusSpec::from_mass_ratio(mass_ratio, sigma_p, coupling, kappa).map(Self).map_err(py_err)
    }

    #[staticmethod]
    fn figure_default() -> Self {
        Self(ApparatusSpec::figure_default())
    }

    #[getter]
    fn mass(&self) -> f64 {
        self.0.mass()
    }
    #[getter]
    fn sigma_p(&self) -> f64 {
        self.0.sigma_p()
    }
    #[getter]
    fn coupling(&self) -> f64 {
        self.0.lambda()
    }

    /// Peak width `Sigma(t)` in work units.
    fn sigma_width(&self, t: f64, t_p: f64) -> f64 {
        self.0.sigma_width(t, t_p)
    }
}

#[pyclass(name = "DrivenQubit", frozen)]
struct PyQubit(DrivenQubit);

#[pymethods]
impl PyQubit {
    #[new]
    #[pyo3(signature = (theta, kappa = 1.0, omega = 1.0))]
    fn new(theta: f64, kappa: f64, omega: f64) -> PyResult<Self> {
        DrivenQubit::new(kappa, omega, theta).map(Self).map_err(py_err)
    }

    #[getter]
    fn theta(&self) -> f64 {
        self.0.theta()
    }

    fn energies(&self, t: f64) -> [f64; 2] {
        self.0.energies(t)
    }

    fn hamiltonian(&self, t: f64) -> [[Complex64; 2]; 2] {
        let h = self.0.hamiltonian(t);
        [[h[(0, 0)], h[(0, 1)]], [h[(1, 0)], h[(1, 1)]]]
    }

    fn is_self_commuting(&self) -> bool {
        self.0.is_self_commuting()
    }
}

/// Self-commuting system with polynomial levels, coefficients lowest order first.
#[pyclass(name = "SpectralSystem", frozen)]
struct PySpectral(SpectralSystem);

#[pymethods]
impl PySpectral {
    #[new]
    fn new(levels: Vec<Vec<f64>>) -> PyResult<Self> {
        SpectralSystem::polynomial(levels).map(Self).map_err(py_err)
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn energies(&self, t: f64) -> Vec<f64> {
        self.0.energies(t)
    }

    /// Peak centers `c_n = int f E_n`.
    fn work_centers(&self, schedule: &PySchedule) -> PyResult<Vec<f64>> {
        analytic::work_centers(&self.0, &schedule.0).map_err(py_err)
    }
}

#[pyclass(name = "WorkGrid", frozen)]
struct PyWorkGrid(WorkGrid);

#[pymethods]
impl PyWorkGrid {
    #[new]
    fn new(start: f64, end: f64, points: usize) -> PyResult<Self> {
        WorkGrid::new(start, end, points).map(Self).map_err(py_err)
    }

    /// `[min center - pad width, max center + pad width]`.
    #[staticmethod]
    #[pyo3(signature = (centers, width, pad = 8.0, points = 4096))]
    fn covering(centers: Vec<f64>, width: f64, pad: f64, points: usize) -> PyResult<Self> {
        WorkGrid::covering(&centers, width, pad, points).map(Self).map_err(py_err)
    }

    fn values(&self) -> Vec<f64> {
        self.0.values()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }
}

#[pyclass(name = "WorkDistribution", frozen)]
struct PyDistribution(WorkDistribution);

#[pymethods]
impl PyDistribution {
    #[getter]
    fn work(&self) -> Vec<f64> {
        self.0.work.clone()
    }
    #[getter]
    fn density(&self) -> Vec<f64> {
        self.0.density.clone()
    }
    #[getter]
    fn time(&self) -> f64 {
        self.0.time
    }
    #[getter]
    fn engine(&self) -> String {
        format!("{:?}", self.0.engine).to_lowercase()
    }

    fn mass(&self) -> f64 {
        self.0.mass()
    }

    fn mean(&self) -> f64 {
        self.0.mean()
    }

    fn peaks(&self, rel_height: f64) -> Vec<(f64, f64)> {
        self.0.peaks(rel_height)
    }
}

fn thermal(beta: f64) -> PyResult<ThermalSpec> {
    ThermalSpec::new(beta).map_err(py_err)
}

/// Closed-form density read out at `t` for level populations `populations`.
#[pyfunction]
fn analytic_distribution(
    system: &PySpectral,
    populations: Vec<f64>,
    schedule: &PySchedule,
    apparatus: &PyApparatus,
    t: f64,
    grid: &PyWorkGrid,
) -> PyResult<PyDistribution> {
    analytic::work_distribution(&system.0, &populations, &schedule.0, &apparatus.0, t, &grid.0)
        .map(PyDistribution)
        .map_err(py_err)
}

#[pyfunction]
fn thermal_distribution(
    system: &PySpectral,
    beta: f64,
    schedule: &PySchedule,
    apparatus: &PyApparatus,
    t: f64,
    grid: &PyWorkGrid,
) -> PyResult<PyDistribution> {
    analytic::thermal_work_distribution(&system.0, &thermal(beta)?, &schedule.0, &apparatus.0, t, &grid.0)
        .map(PyDistribution)
        .map_err(py_err)
}

fn qubit_state(alpha: Complex64, beta: Complex64, populations: Option<Vec<f64>>) -> PyResult<SystemState> {
    match populations {
        Some(p) => SystemState::diagonal(&p).map_err(py_err),
        None => SystemState::qubit(alpha, beta).map_err(py_err),
    }
}

struct NumericOutcome {
    dist: WorkDistribution,
    measured: SampledTrajectory,
    drift: f64,
}

fn solve(
    qubit: &DrivenQubit,
    state: &SystemState,
    s: &ProtocolSchedule,
    a: &ApparatusSpec,
    grid: &WorkGrid,
    momentum_points: usize,
    t: f64,
) -> qwork::Result<NumericOutcome> {
    let momentum = MomentumGrid::new(momentum_points, MomentumGrid::DEFAULT_EXTENT * a.sigma_p())?;
    let runs = run_state(qubit, state, s, a, &momentum, t, &SolverOptions::default())?;
    let mut dists = Vec::new();
    let mut trajs = Vec::new();
    for (_, traj) in &runs {
        dists.push(work_distribution_numeric(traj.final_field(), a, grid)?);
        trajs.push(SampledTrajectory::from_numeric(traj)?);
    }
    let drift = runs.iter().map(|(_, r)| r.norm_drift()).fold(0.0, f64::max);
    let weights: Vec<f64> = runs.iter().map(|(w, _)| *w).collect();
    let parts: Vec<(f64, &WorkDistribution)> = weights.iter().copied().zip(&dists).collect();
    let dist = if dists.len() == 1 { dists.remove(0) } else { WorkDistribution::convex_combination(&parts)? };
    let parts: Vec<(f64, &SampledTrajectory)> = weights.iter().copied().zip(&trajs).collect();
    let measured = SampledTrajectory::mixture(&parts)?;
    Ok(NumericOutcome { dist, measured, drift })
}

/// Momentum-grid solve for `alpha |0> + beta |1>` (or a diagonal mixture)
/// given at `t_i`, read out at `t` (default `t_m`).
#[pyfunction]
#[pyo3(signature = (qubit, schedule, apparatus, grid, alpha = Complex64::new(1.0, 0.0), beta = Complex64::new(0.0, 0.0), populations = None, momentum_points = 4096, t = None))]
#[allow(clippy::too_many_arguments)]
fn numeric_distribution(
    py: Python<'_>,
    qubit: &PyQubit,
    schedule: &PySchedule,
    apparatus: &PyApparatus,
    grid: &PyWorkGrid,
    alpha: Complex64,
    beta: Complex64,
    populations: Option<Vec<f64>>,
    momentum_points: usize,
    t: Option<f64>,
) -> PyResult<PyDistribution> {
    let state = qubit_state(alpha, beta, populations)?;
    let (q, s, a, g) = (qubit.0.clone(), schedule.0, apparatus.0, grid.0);
    let t = t.unwrap_or(s.t_m());
    py.detach(move || solve(&q, &state, &s, &a, &g, momentum_points, t))
        .map(|o| PyDistribution(o.dist))
        .map_err(py_err)
}

fn convention(name: &str) -> PyResult<IntervalConvention> {
    match name {
        "mixed" => Ok(IntervalConvention::Mixed),
        "work_interval" => Ok(IntervalConvention::WorkInterval),
        "full_protocol" => Ok(IntervalConvention::FullProtocol),
        other => Err(PyValueError::new_err(format!("unknown convention `{other}`; use mixed, work_interval or full_protocol"))),
    }
}

/// Average work and heat with and without the pointer, as a dict.
#[pyfunction]
#[pyo3(signature = (qubit, schedule, apparatus, alpha = Complex64::new(1.0, 0.0), beta = Complex64::new(0.0, 0.0), populations = None, momentum_points = 4096, convention_name = "mixed"))]
#[allow(clippy::too_many_arguments)]
fn qubit_ledger<'py>(
    py: Python<'py>,
    qubit: &PyQubit,
    schedule: &PySchedule,
    apparatus: &PyApparatus,
    alpha: Complex64,
    beta: Complex64,
    populations: Option<Vec<f64>>,
    momentum_points: usize,
    convention_name: &str,
) -> PyResult<Bound<'py, PyDict>> {
    let conv = convention(convention_name)?;
    let state = qubit_state(alpha, beta, populations)?;
    let (q, s, a) = (qubit.0.clone(), schedule.0, apparatus.0);
    let rho: Mat2 = from_dmatrix(&state.density_matrix());
    let (ledger, drift) = py
        .detach(move || -> qwork::Result<_> {
            let width = a.sigma_width(s.t_m(), s.t_p());
            let e_i = q.energies(s.t_i());
            let e_f = q.energies(s.t_f());
            let centers: Vec<f64> = e_f.iter().flat_map(|f| e_i.iter().map(move |i| f - i)).collect();
            let grid = WorkGrid::covering(&centers, width, analytic::GRID_PAD, WorkGrid::DEFAULT_POINTS)?;
            let out = solve(&q, &state, &s, &a, &grid, momentum_points, s.t_m())?;
            let free = QubitFreeTrajectory::new(q.clone(), rho, s.t_i())?;
            let ledger = build_ledger(&LedgerInputs {
                hamiltonian: &q,
                free: &free,
                measured: &out.measured,
                w_dist: out.dist.mean(),
                schedule: s,
                convention: conv,
            })?;
            Ok((ledger, out.drift))
        })
        .map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("convention", convention_name)?;
    d.set_item("work_interval", ledger.work_interval)?;
    d.set_item("energy_interval", ledger.energy_interval)?;
    for (k, v) in [
        ("w_free", ledger.w_free),
        ("w_tilde", ledger.w_tilde),
        ("w_dist", ledger.w_dist),
        ("du", ledger.du),
        ("du_tilde", ledger.du_tilde),
        ("q", ledger.q),
        ("q_tilde", ledger.q_tilde),
        ("dW_int", ledger.dw_int),
        ("dW_povm", ledger.dw_povm),
        ("dQ_int", ledger.dq_int),
        ("norm_drift", drift),
    ] {
        d.set_item(k, v)?;
    }
    Ok(d)
}

/// Projective two-point atoms `(W, p)` for a qubit state `rho` given at `t_i`.
#[pyfunction]
fn two_point_distribution(qubit: &PyQubit, rho: [[Complex64; 2]; 2], schedule: &PySchedule) -> PyResult<Vec<(f64, f64)>> {
    let m = Mat2::new(rho[0][0], rho[0][1], rho[1][0], rho[1][1]);
    two_point_distribution_qubit(&qubit.0, &m, &schedule.0).map(|d| d.atoms().to_vec()).map_err(py_err)
}

#[pyfunction]
fn free_energy_change(system: &PySpectral, beta: f64, schedule: &PySchedule) -> PyResult<f64> {
    Ok(analytic::free_energy_change(&system.0, &thermal(beta)?, &schedule.0))
}

/// `<exp(-beta W)>` of the finite-resolution distribution.
#[pyfunction]
fn modified_jarzynski(system: &PySpectral, beta: f64, schedule: &PySchedule, apparatus: &PyApparatus) -> PyResult<f64> {
    analytic::modified_jarzynski(&system.0, &thermal(beta)?, &schedule.0, &apparatus.0).map_err(py_err)
}

/// Forward over backward density at work `w`, forward readout at `time`.
#[pyfunction]
fn crooks_ratio(system: &PySpectral, beta: f64, time: f64, schedule: &PySchedule, apparatus: &PyApparatus, w: f64) -> PyResult<f64> {
    let pair = CrooksPair::new(time, schedule.0).map_err(py_err)?;
    analytic::crooks_ratio(&system.0, &thermal(beta)?, &pair, &apparatus.0, w).map_err(py_err)
}

/// `(<W>, bound)` with `<W> >= bound`.
#[pyfunction]
fn second_law_bound(system: &PySpectral, beta: f64, schedule: &PySchedule, apparatus: &PyApparatus) -> PyResult<(f64, f64)> {
    analytic::second_law_bound(&system.0, &thermal(beta)?, &schedule.0, &apparatus.0).map_err(py_err)
}

#[pyfunction]
fn delta_w_povm(system: &PySpectral, populations: Vec<f64>, schedule: &PySchedule) -> PyResult<f64> {
    analytic::delta_w_povm(&system.0, &populations, &schedule.0).map_err(py_err)
}

#[pymodule]
fn qwork_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySchedule>()?;
    m.add_class::<PyApparatus>()?;
    m.add_class::<PyQubit>()?;
    m.add_class::<PySpectral>()?;
    m.add_class::<PyWorkGrid>()?;
    m.add_class::<PyDistribution>()?;
    m.add_function(wrap_pyfunction!(analytic_distribution, m)?)?;
    m.add_function(wrap_pyfunction!(thermal_distribution, m)?)?;
    m.add_function(wrap_pyfunction!(numeric_distribution, m)?)?;
    m.add_function(wrap_pyfunction!(qubit_ledger, m)?)?;
    m.add_function(wrap_pyfunction!(two_point_distribution, m)?)?;
    m.add_function(wrap_pyfunction!(free_energy_change, m)?)?;
    m.add_function(wrap_pyfunction!(modified_jarzynski, m)?)?;
    m.add_function(wrap_pyfunction!(crooks_ratio, m)?)?;
    m.add_function(wrap_pyfunction!(second_law_bound, m)?)?;
    m.add_function(wrap_pyfunction!(delta_w_povm, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
