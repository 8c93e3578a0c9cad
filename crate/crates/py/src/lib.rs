//! Python bindings: grids, operators, norms, power nonlinearities, forward
//! solves, DN pairings and the scenario runner.

use std::path::PathBuf;
use std::sync::Arc;

use fracwave::dnmap::dn_pairing as core_dn_pairing;
use fracwave::harness::{run_scenario as core_run_scenario, ScenarioConfig};
use fracwave::solver::ForwardProblem;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn to_py(e: fracwave::Error) -> PyErr {
    use fracwave::Error as E;
    match e {
        E::InvalidGrid(_)
        | E::UnsupportedOrder(_)
        | E::Domain(_)
        | E::Mismatch(_)
        | E::Config(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn window(name: &str) -> PyResult<fracwave::Window> {
    match name {
        "w1" | "W1" => Ok(fracwave::Window::W1),
        "w2" | "W2" => Ok(fracwave::Window::W2),
        _ => Err(PyValueError::new_err(format!("unknown window {name:?}"))),
    }
}

fn field(rows: Vec<Vec<f64>>) -> PyResult<fracwave::SpaceTimeField> {
    fracwave::SpaceTimeField::from_rows(rows).map_err(to_py)
}

fn rows(f: &fracwave::SpaceTimeField) -> Vec<Vec<f64>> {
    f.rows().map(<[f64]>::to_vec).collect()
}

#[pyclass(frozen)]
struct Grid {
    inner: Arc<fracwave::Grid>,
}

#[pymethods]
impl Grid {
    #[new]
    fn new(
        box_lo: f64,
        box_hi: f64,
        n_nodes: usize,
        omega: (f64, f64),
        w1: (f64, f64),
        w2: (f64, f64),
    ) -> PyResult<Self> {
        let g = fracwave::build_grid(
            box_lo,
            box_hi,
            n_nodes,
            omega.0,
            omega.1,
            fracwave::Interval::new(w1.0, w1.1),
            fracwave::Interval::new(w2.0, w2.1),
        )
        .map_err(to_py)?;
        Ok(Self { inner: Arc::new(g) })
    }

    #[getter]
    fn h(&self) -> f64 {
        self.inner.h
    }

    #[getter]
    fn n_nodes(&self) -> usize {
        self.inner.n_nodes
    }

    #[getter]
    fn omega(&self) -> Vec<usize> {
        self.inner.omega.clone()
    }

    fn window(&self, name: &str) -> PyResult<Vec<usize>> {
        Ok(self.inner.window(window(name)?).to_vec())
    }

    fn coords(&self) -> Vec<f64> {
        self.inner.coords()
    }
}

#[pyclass(frozen)]
struct Operator {
    inner: fracwave::FracLapOperator,
}

#[pymethods]
impl Operator {
    #[new]
    fn new(grid: &Grid, s: f64) -> PyResult<Self> {
        Ok(Self {
            inner: fracwave::assemble_fraclap(grid.inner.clone(), s).map_err(to_py)?,
        })
    }

    #[getter]
    fn s(&self) -> f64 {
        self.inner.s
    }

    fn matrix(&self) -> Vec<Vec<f64>> {
        let m = &self.inner.matrix;
        (0..m.nrows())
            .map(|i| m.row(i).iter().copied().collect())
            .collect()
    }

    fn apply(&self, v: Vec<f64>) -> PyResult<Vec<f64>> {
        if v.len() != self.inner.n_nodes() {
            return Err(PyValueError::new_err(
                "vector length does not match the grid",
            ));
        }
        Ok(self.inner.apply(&v))
    }

    fn omega_spectrum(&self) -> Vec<f64> {
        self.inner.omega_spectrum()
    }

    fn poincare_constant(&self) -> f64 {
        self.inner.poincare_constant()
    }
}

#[pyfunction]
fn norm_l2(grid: &Grid, v: Vec<f64>) -> f64 {
    fracwave::norm_l2(&grid.inner, &v)
}

#[pyfunction]
fn seminorm_hs(op: &Operator, v: Vec<f64>) -> f64 {
    fracwave::seminorm_hs(&op.inner, &v)
}

#[pyfunction]
fn dualnorm_hminus(op: &Operator, g: Vec<f64>) -> PyResult<f64> {
    fracwave::dualnorm_hminus(&op.inner, &g).map_err(to_py)
}

#[pyfunction]
fn stencil_symbol(s: f64, h: f64, xi: f64) -> f64 {
    fracwave::fraclap::stencil_symbol(s, h, xi)
}

#[pyclass(frozen)]
struct Nonlinearity {
    inner: fracwave::Nonlinearity,
}

#[pymethods]
impl Nonlinearity {
    /// `coeff[i] |tau|^r tau`.
    #[staticmethod]
    fn power(coeff: Vec<f64>, r: f64) -> PyResult<Self> {
        Ok(Self {
            inner: fracwave::power_nonlinearity(coeff, r).map_err(to_py)?,
        })
    }

    fn value(&self, i: usize, tau: f64) -> f64 {
        self.inner.value(i, tau)
    }

    fn dvalue(&self, i: usize, tau: f64) -> f64 {
        self.inner.dvalue(i, tau)
    }
}

#[pyclass(frozen)]
struct Trajectory {
    inner: fracwave::Trajectory,
}

#[pymethods]
impl Trajectory {
    #[getter]
    fn u(&self) -> Vec<Vec<f64>> {
        rows(&self.inner.u)
    }

    #[getter]
    fn v(&self) -> Vec<Vec<f64>> {
        rows(&self.inner.v)
    }

    #[getter]
    fn newton_iters(&self) -> Vec<usize> {
        self.inner.newton_iters.clone()
    }

    fn times(&self) -> Vec<f64> {
        self.inner.time.times()
    }
}

fn control(op: &Operator, values: Vec<Vec<f64>>, win: &str) -> PyResult<fracwave::ExteriorControl> {
    fracwave::ExteriorControl::new(&op.inner.grid, field(values)?, window(win)?).map_err(to_py)
}

/// Solves with exterior data `control` (rows per time node) on `window`.
/// Pass `q` for a linear potential or `f` for a nonlinearity.
#[pyfunction]
#[pyo3(signature = (op, dt, t_final, control_values, window = "w1", q = None, f = None))]
fn solve(
    op: &Operator,
    dt: f64,
    t_final: f64,
    control_values: Vec<Vec<f64>>,
    window: &str,
    q: Option<Vec<Vec<f64>>>,
    f: Option<&Nonlinearity>,
) -> PyResult<Trajectory> {
    let time = fracwave::TimeGrid::new(dt, t_final).map_err(to_py)?;
    let c = control(op, control_values, window)?;
    let q = q.map(field).transpose()?;
    let mut p = ForwardProblem::new(&op.inner, time).control(&c);
    if let Some(q) = &q {
        p = p.potential(q);
    }
    if let Some(f) = f {
        p = p
            .nonlinearity(&f.inner)
            .newton(fracwave::NewtonOptions::default());
    }
    Ok(Trajectory {
        inner: p.solve().map_err(to_py)?,
    })
}

/// `<Lambda phi, psi>` for a solved trajectory and a probe on the other window.
#[pyfunction]
#[pyo3(signature = (op, traj, probe_values, window = "w2"))]
fn dn_pairing(
    op: &Operator,
    traj: &Trajectory,
    probe_values: Vec<Vec<f64>>,
    window: &str,
) -> PyResult<f64> {
    let probe = control(op, probe_values, window)?;
    core_dn_pairing(&op.inner, &traj.inner, &probe).map_err(to_py)
}

/// Runs a scenario given as TOML text and returns `report.json` as a string.
#[pyfunction]
fn run_scenario(config_toml: &str, out_dir: PathBuf) -> PyResult<String> {
    let cfg = ScenarioConfig::from_toml(config_toml).map_err(to_py)?;
    let bundle = core_run_scenario(&cfg, &out_dir).map_err(to_py)?;
    serde_json::to_string(&bundle.report).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

#[pymodule]
fn fracwave_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Grid>()?;
    m.add_class::<Operator>()?;
    m.add_class::<Nonlinearity>()?;
    m.add_class::<Trajectory>()?;
    m.add_function(wrap_pyfunction!(norm_l2, m)?)?;
    m.add_function(wrap_pyfunction!(seminorm_hs, m)?)?;
    m.add_function(wrap_pyfunction!(dualnorm_hminus, m)?)?;
    m.add_function(wrap_pyfunction!(stencil_symbol, m)?)?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(dn_pairing, m)?)?;
    m.add_function(wrap_pyfunction!(run_scenario, m)?)?;
    Ok(())
}
