//! Python bindings: `import youngflow`.
//!
//! Paths are `youngflow.Path` objects; fields, maps and Hamiltonians are
//! selected by built-in name. Reports come back as plain dicts, with NaN
//! residuals mapped to `None`.

use pyo3::exceptions::{PyArithmeticError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use serde::Serialize;
use youngflow::builtin::{field_by_name, map_by_name};
use youngflow::characteristics::{eval_grid, hamiltonian_by_name};
use youngflow::io::{load_path, save_path};
use youngflow::{
    DeterministicKind, DeterministicSpec, Error, FbmSpec, OperatorPath, SampleDomain, SampledPath, SeedGrid,
    SolveConfig, TagRule, TimeDependentMap,
};

fn py_err(e: Error) -> PyErr {
    if e.is_numeric_failure() {
        PyArithmeticError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

trait OrPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> OrPy<T> for youngflow::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

fn to_py<'py>(py: Python<'py>, v: &impl Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(v).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn tag(name: &str) -> PyResult<TagRule> {
    name.parse().map_err(|e: String| PyValueError::new_err(e))
}

fn solve_config(substeps: usize) -> PyResult<SolveConfig> {
    let cfg = SolveConfig::with_substeps(substeps);
    cfg.validate().py()?;
    Ok(cfg)
}

/// A path sampled on a strictly increasing time grid.
#[pyclass(frozen, skip_from_py_object, name = "Path", module = "youngflow")]
#[derive(Clone)]
pub struct PyPath {
    inner: SampledPath,
}

impl From<SampledPath> for PyPath {
    fn from(inner: SampledPath) -> Self {
        Self { inner }
    }
}

#[pymethods]
impl PyPath {
    /// `values` is one row per time, or a flat list for a scalar path.
    #[new]
    fn new(times: Vec<f64>, values: &Bound<'_, PyAny>) -> PyResult<Self> {
        let inner = match values.extract::<Vec<Vec<f64>>>() {
            Ok(rows) => SampledPath::from_rows(times, &rows),
            Err(_) => SampledPath::scalar(times, values.extract()?),
        };
        Ok(inner.py()?.into())
    }

    #[staticmethod]
    #[pyo3(signature = (hurst, n, horizon = 1.0, seed = 0))]
    fn fbm(hurst: f64, n: usize, horizon: f64, seed: u64) -> PyResult<Self> {
        Ok(youngflow::gen_fbm(&FbmSpec::new(hurst, n, horizon, seed)).py()?.into())
    }

    /// `X_t = t`.
    #[staticmethod]
    #[pyo3(signature = (n, horizon = 1.0))]
    fn linear(n: usize, horizon: f64) -> PyResult<Self> {
        deterministic(DeterministicKind::Linear, n, horizon)
    }

    /// `X_t = amplitude · sin(frequency · t)`.
    #[staticmethod]
    #[pyo3(signature = (n, horizon = 1.0, frequency = 1.0, amplitude = 1.0))]
    fn sine(n: usize, horizon: f64, frequency: f64, amplitude: f64) -> PyResult<Self> {
        deterministic(DeterministicKind::Sine { frequency, amplitude }, n, horizon)
    }

    #[staticmethod]
    #[pyo3(signature = (n, exponent, horizon = 1.0))]
    fn power(n: usize, exponent: f64, horizon: f64) -> PyResult<Self> {
        deterministic(DeterministicKind::Power { exponent }, n, horizon)
    }

    #[staticmethod]
    fn load(file: &str) -> PyResult<Self> {
        Ok(load_path(file).py()?.into())
    }

    fn save(&self, file: &str) -> PyResult<()> {
        save_path(file, &self.inner).py()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "Path(len={}, dim={}, t=[{}, {}])",
            self.inner.len(),
            self.inner.dim(),
            self.inner.start_time(),
            self.inner.end_time()
        )
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn times(&self) -> Vec<f64> {
        self.inner.times().to_vec()
    }

    #[getter]
    fn values(&self) -> Vec<Vec<f64>> {
        self.inner.rows().map(<[f64]>::to_vec).collect()
    }

    #[getter]
    fn mesh(&self) -> f64 {
        self.inner.mesh()
    }

    fn restrict(&self, s: f64, t: f64) -> PyResult<Self> {
        Ok(self.inner.restrict(s, t).py()?.into())
    }

    fn coarsen(&self, stride: usize) -> PyResult<Self> {
        Ok(self.inner.coarsen(stride).py()?.into())
    }

    /// Grid p-variation over `[s, t]`, the whole path by default.
    #[pyo3(signature = (p, s = None, t = None))]
    fn p_variation(&self, p: f64, s: Option<f64>, t: Option<f64>) -> PyResult<f64> {
        let x = &self.inner;
        let r = youngflow::p_variation_over(x, p, s.unwrap_or(x.start_time()), t.unwrap_or(x.end_time())).py()?;
        Ok(r.value)
    }

    /// Indices of a partition attaining the p-variation.
    fn optimal_partition(&self, p: f64) -> PyResult<Vec<usize>> {
        Ok(youngflow::p_variation(&self.inner, p).py()?.optimal_partition.indices)
    }

    fn holder_norm(&self, alpha: f64) -> PyResult<f64> {
        youngflow::holder_norm(&self.inner, alpha).py()
    }
}

fn deterministic(kind: DeterministicKind, n: usize, horizon: f64) -> PyResult<PyPath> {
    Ok(youngflow::gen_deterministic(&DeterministicSpec::new(kind, n, horizon))
        .py()?
        .into())
}

fn operator(z: &PyPath, shape: Option<(usize, usize)>) -> PyResult<OperatorPath> {
    match shape {
        None if z.inner.dim() == 1 => OperatorPath::scalar(z.inner.clone()).py(),
        None => Err(PyValueError::new_err(format!(
            "an operator path of dimension {} needs shape=(rows, cols)",
            z.inner.dim()
        ))),
        Some((r, c)) => OperatorPath::matrix(z.inner.clone(), r, c).py(),
    }
}

/// Young integral of `z` against `x`; pass `p` and `q` for the certified bound.
#[pyfunction]
#[pyo3(signature = (z, x, s = None, t = None, tag = "left", p = None, q = None, shape = None))]
#[allow(clippy::too_many_arguments)]
fn young_integral<'py>(
    py: Python<'py>,
    z: &PyPath,
    x: &PyPath,
    s: Option<f64>,
    t: Option<f64>,
    tag: &str,
    p: Option<f64>,
    q: Option<f64>,
    shape: Option<(usize, usize)>,
) -> PyResult<Bound<'py, PyAny>> {
    let zz = operator(z, shape)?;
    let (xs, tag) = (&x.inner, self::tag(tag)?);
    let (s, t) = (s.unwrap_or(xs.start_time()), t.unwrap_or(xs.end_time()));
    let r = match (p, q) {
        (Some(p), Some(q)) => youngflow::certified_young_integral(&zz, xs, s, t, tag, p, q),
        (None, None) => youngflow::young_integral(&zz, xs, s, t, tag),
        _ => return Err(PyValueError::new_err("the certificate needs both p and q")),
    }
    .py()?;
    to_py(py, &r)
}

#[pyfunction]
#[pyo3(signature = (z, x, tag = "left", shape = None))]
fn indefinite_integral(z: &PyPath, x: &PyPath, tag: &str, shape: Option<(usize, usize)>) -> PyResult<PyPath> {
    Ok(
        youngflow::indefinite_integral(&operator(z, shape)?, &x.inner, self::tag(tag)?)
            .py()?
            .into(),
    )
}

/// Euler solution of `dY = f(Y) dX` for a built-in field.
#[pyfunction]
#[pyo3(signature = (field, x, y0, param = 1.0, substeps = 1))]
fn solve(field: &str, x: &PyPath, y0: Vec<f64>, param: f64, substeps: usize) -> PyResult<PyPath> {
    let f = field_by_name(field, y0.len(), param).py()?;
    Ok(youngflow::solve_yde(&f, &x.inner, &y0, &solve_config(substeps)?)
        .py()?
        .into())
}

/// Trajectories from each initial point, plus the final Jacobians.
#[pyfunction]
#[pyo3(signature = (field, x, points, param = 1.0, substeps = 1))]
fn flow<'py>(
    py: Python<'py>,
    field: &str,
    x: &PyPath,
    points: Vec<Vec<f64>>,
    param: f64,
    substeps: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let d = points.first().map_or(1, Vec::len);
    let f = field_by_name(field, d, param).py()?;
    let map = youngflow::solve_flow(&f, &x.inner, &points, &solve_config(substeps)?).py()?;
    let out = PyDict::new(py);
    let paths: Vec<PyPath> = map.trajectories.iter().cloned().map(PyPath::from).collect();
    out.set_item("trajectories", paths)?;
    let jac: Vec<Vec<Vec<f64>>> = map
        .jacobians
        .iter()
        .map(|js| {
            let j = js.last().expect("jacobian per grid point");
            j.row_iter().map(|r| r.iter().copied().collect()).collect()
        })
        .collect();
    out.set_item("final_jacobians", jac)?;
    out.set_item("alive_until", map.alive_until.clone())?;
    Ok(out)
}

#[pyfunction]
#[pyo3(signature = (g, path, levels = 4, tag = "left", param = 1.0))]
fn check_chain<'py>(
    py: Python<'py>,
    g: &str,
    path: &PyPath,
    levels: usize,
    tag: &str,
    param: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let g = map_by_name(g, path.inner.dim(), param).py()?;
    to_py(
        py,
        &youngflow::chain_rule_residual(&g, &path.inner, levels, self::tag(tag)?).py()?,
    )
}

/// Change of variable for `g_t = g_0 + ∫ h dZ`; `rate=None` keeps `g` fixed.
#[pyfunction]
#[pyo3(signature = (g, z, x, rate = None, levels = 4, tag = "left", param = 1.0, rate_param = 1.0))]
#[allow(clippy::too_many_arguments)]
fn check_ito<'py>(
    py: Python<'py>,
    g: &str,
    z: &PyPath,
    x: &PyPath,
    rate: Option<&str>,
    levels: usize,
    tag: &str,
    param: f64,
    rate_param: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let d = x.inner.dim();
    let g0 = map_by_name(g, d, param).py()?;
    let g = match rate {
        Some(h) => TimeDependentMap::new(g0, field_by_name(h, d, rate_param).py()?).py()?,
        None => TimeDependentMap::time_independent(g0),
    };
    to_py(
        py,
        &youngflow::ito_kunita_residual(&g, &z.inner, &x.inner, levels, self::tag(tag)?).py()?,
    )
}

fn domain(lower: f64, upper: f64, d: usize, count: usize, seed: u64) -> PyResult<SampleDomain> {
    SampleDomain::new(vec![lower; d], vec![upper; d], count, seed).py()
}

/// `DF · f = 0` on random samples of the cube `[lower, upper]^dim`.
#[pyfunction]
#[pyo3(signature = (obs, field, dim = 1, lower = -1.0, upper = 1.0, count = 256, seed = 0, tol = None, param = 1.0))]
#[allow(clippy::too_many_arguments)]
fn check_conserved<'py>(
    py: Python<'py>,
    obs: &str,
    field: &str,
    dim: usize,
    lower: f64,
    upper: f64,
    count: usize,
    seed: u64,
    tol: Option<f64>,
    param: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let f = field_by_name(field, dim, 1.0).py()?;
    let obs = map_by_name(obs, dim, param).py()?;
    let dom = domain(lower, upper, dim, count, seed)?;
    to_py(py, &youngflow::check_conserved_algebraic(&obs, &f, &dom, tol).py()?)
}

/// `f∘Φ = DΦ · f` on random samples of the cube `[lower, upper]^dim`.
#[pyfunction]
#[pyo3(signature = (map, field, dim = 1, lower = -1.0, upper = 1.0, count = 256, seed = 0, tol = None, param = 1.0))]
#[allow(clippy::too_many_arguments)]
fn check_symmetry<'py>(
    py: Python<'py>,
    map: &str,
    field: &str,
    dim: usize,
    lower: f64,
    upper: f64,
    count: usize,
    seed: u64,
    tol: Option<f64>,
    param: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let f = field_by_name(field, dim, 1.0).py()?;
    let phi = map_by_name(map, dim, param).py()?;
    let dom = domain(lower, upper, dim, count, seed)?;
    to_py(py, &youngflow::check_symmetry_map(&phi, &f, &dom, tol).py()?)
}

/// `Y_t(V_t)` against the combined equation; returns both paths and the ladder.
#[pyfunction]
#[pyo3(signature = (f, u, g, x, y0, levels = 4, substeps = 1))]
#[allow(clippy::too_many_arguments)]
fn compose<'py>(
    py: Python<'py>,
    f: &str,
    u: &PyPath,
    g: &str,
    x: &PyPath,
    y0: Vec<f64>,
    levels: usize,
    substeps: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let d = y0.len();
    let (f, g) = (field_by_name(f, d, 1.0).py()?, field_by_name(g, d, 1.0).py()?);
    let c = youngflow::compose_flows(&f, &u.inner, &g, &x.inner, &y0, &solve_config(substeps)?, levels).py()?;
    let out = PyDict::new(py);
    out.set_item("z_comp", PyPath::from(c.z_comp))?;
    out.set_item("z_dir", PyPath::from(c.z_dir))?;
    out.set_item("report", to_py(py, &c.report)?)?;
    Ok(out)
}

struct Pde {
    h: youngflow::HamiltonianSpec,
    phi: youngflow::ScalarObservable,
    field: youngflow::CharField,
}

#[allow(clippy::too_many_arguments)]
fn pde(
    hamiltonian: &str,
    x: &PyPath,
    phi: &str,
    k: f64,
    seeds: (f64, f64, usize),
    dim: usize,
    substeps: usize,
) -> PyResult<Pde> {
    let h = hamiltonian_by_name(hamiltonian, dim, k).py()?;
    let phi = map_by_name(phi, dim, 1.0).py()?;
    let grid = SeedGrid::cube(dim, seeds.0, seeds.1, seeds.2).py()?;
    let field = youngflow::build_char_field(&h, &x.inner, &phi, &grid, &solve_config(substeps)?).py()?;
    Ok(Pde { h, phi, field })
}

/// Solve `du = H(x, u, Du) dX`, `u_0 = φ`, on `[eval_lower, eval_upper]^dim`.
///
/// Returns times, points, `u[time][point]`, `du[time][point]` and the per-seed caustic times.
#[pyfunction]
#[pyo3(signature = (hamiltonian, x, phi = "sine", k = 1.0, dim = 1, seeds = (-4.0, 4.0, 101), eval = (-1.0, 1.0, 21), every = 1, substeps = 1))]
#[allow(clippy::too_many_arguments)]
fn pde_solve<'py>(
    py: Python<'py>,
    hamiltonian: &str,
    x: &PyPath,
    phi: &str,
    k: f64,
    dim: usize,
    seeds: (f64, f64, usize),
    eval: (f64, f64, usize),
    every: usize,
    substeps: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let p = pde(hamiltonian, x, phi, k, seeds, dim, substeps)?;
    let pts = eval_grid(&vec![eval.0; dim], &vec![eval.1; dim], &vec![eval.2; dim]).py()?;
    let sol = youngflow::assemble_solution(&p.field, &pts, every).py()?;
    let out = PyDict::new(py);
    out.set_item("times", sol.times)?;
    out.set_item("points", sol.points)?;
    out.set_item("u", sol.u)?;
    out.set_item("du", sol.du)?;
    out.set_item("valid_until", sol.valid_until)?;
    out.set_item("tau", p.field.tau.clone())?;
    Ok(out)
}

/// Refinement ladder of the local-solution identity.
#[pyfunction]
#[pyo3(signature = (hamiltonian, x, phi = "sine", k = 1.0, dim = 1, seeds = (-4.0, 4.0, 101), eval = (-1.0, 1.0, 21), levels = 3))]
#[allow(clippy::too_many_arguments)]
fn pde_residual<'py>(
    py: Python<'py>,
    hamiltonian: &str,
    x: &PyPath,
    phi: &str,
    k: f64,
    dim: usize,
    seeds: (f64, f64, usize),
    eval: (f64, f64, usize),
    levels: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let p = pde(hamiltonian, x, phi, k, seeds, dim, 1)?;
    let pts = eval_grid(&vec![eval.0; dim], &vec![eval.1; dim], &vec![eval.2; dim]).py()?;
    let sol = youngflow::assemble_solution(&p.field, &pts, 1).py()?;
    to_py(py, &youngflow::pde_residual(&sol, &p.h, &x.inner, &p.phi, levels).py()?)
}

/// Per-seed caustic times and whether each characteristic terminated before the horizon.
#[pyfunction]
#[pyo3(signature = (hamiltonian, x, phi = "sine", k = 1.0, dim = 1, seeds = (-4.0, 4.0, 101)))]
fn caustic_times<'py>(
    py: Python<'py>,
    hamiltonian: &str,
    x: &PyPath,
    phi: &str,
    k: f64,
    dim: usize,
    seeds: (f64, f64, usize),
) -> PyResult<Bound<'py, PyDict>> {
    let p = pde(hamiltonian, x, phi, k, seeds, dim, 1)?;
    let out = PyDict::new(py);
    out.set_item("seeds", p.field.seeds.points())?;
    out.set_item("tau", p.field.tau.clone())?;
    out.set_item("terminated", p.field.terminated.clone())?;
    Ok(out)
}

#[pymodule(name = "youngflow")]
pub fn youngflow_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add("GENERATOR_VERSION", youngflow::driver::GENERATOR_VERSION)?;
    m.add_class::<PyPath>()?;
    m.add_function(wrap_pyfunction!(young_integral, m)?)?;
    m.add_function(wrap_pyfunction!(indefinite_integral, m)?)?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(flow, m)?)?;
    m.add_function(wrap_pyfunction!(check_chain, m)?)?;
    m.add_function(wrap_pyfunction!(check_ito, m)?)?;
    m.add_function(wrap_pyfunction!(check_conserved, m)?)?;
    m.add_function(wrap_pyfunction!(check_symmetry, m)?)?;
    m.add_function(wrap_pyfunction!(compose, m)?)?;
    m.add_function(wrap_pyfunction!(pde_solve, m)?)?;
    m.add_function(wrap_pyfunction!(pde_residual, m)?)?;
    m.add_function(wrap_pyfunction!(caustic_times, m)?)?;
    Ok(())
}
