//! Python bindings for the `parabolica` solvers.

use pyo3::exceptions::{PyArithmeticError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use parabolica::backward::BackwardSolution;
use parabolica::expr::{Dims, EvalContext, Expr as CoreExpr};
use parabolica::model::{self, GenArgs, ProblemDocument, ProblemSpec};
use parabolica::paths::{self, TimeGrid};
use parabolica::regress::BasisSpec;
use parabolica::run::{RunConfig, Scheme};
use parabolica::{bsde_full, bsde_semilinear, hjb, linear_fk, verify, Error};

fn to_py(err: Error) -> PyErr {
    if err.is_numeric() {
        PyArithmeticError::new_err(err.to_string())
    } else {
        PyValueError::new_err(err.to_string())
    }
}

/// A terminal-value problem from the catalog or a JSON document.
#[pyclass(frozen)]
struct Problem {
    spec: ProblemSpec,
}

#[pymethods]
impl Problem {
    #[staticmethod]
    #[pyo3(signature = (name, horizon=1.0))]
    fn catalog(name: &str, horizon: f64) -> PyResult<Self> {
        let spec = model::catalog_get_with_horizon(name, horizon).map_err(to_py)?;
        Ok(Problem { spec })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let spec = ProblemDocument::from_json(text)
            .and_then(|d| d.to_spec())
            .map_err(to_py)?;
        Ok(Problem { spec })
    }

    #[getter]
    fn name(&self) -> String {
        self.spec.name().to_string()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.spec.dim()
    }

    #[getter]
    fn horizon(&self) -> f64 {
        self.spec.horizon()
    }

    /// Generator `f(t, x, y, z, gamma)`; `gamma` is row-major.
    fn f(&self, t: f64, x: Vec<f64>, y: f64, z: Vec<f64>, gamma: Vec<f64>) -> PyResult<f64> {
        let d = self.spec.dim();
        if x.len() != d || z.len() != d || gamma.len() != d * d {
            return Err(PyValueError::new_err(
                "argument lengths must match the dimension",
            ));
        }
        Ok(self.spec.f(&GenArgs {
            t,
            x: &x,
            y,
            z: &z,
            gamma: &gamma,
        }))
    }

    fn g(&self, x: Vec<f64>) -> PyResult<f64> {
        if x.len() != self.spec.dim() {
            return Err(PyValueError::new_err("x must have length dim"));
        }
        Ok(self.spec.g(&x))
    }

    /// Closed-form `v(t, x)`, or `None` when the problem has none.
    fn analytic(&self, t: f64, x: Vec<f64>) -> Option<f64> {
        self.spec.analytic().map(|v| (v.value)(t, &x))
    }

    /// Spot checks of the coefficient assumptions as `{name: passed}`.
    #[pyo3(signature = (samples=1000, seed=0))]
    fn validate<'py>(
        &self,
        py: Python<'py>,
        samples: usize,
        seed: u64,
    ) -> PyResult<Bound<'py, PyDict>> {
        let report = model::validate_assumptions(&self.spec, self.spec.growth(), samples, seed)
            .map_err(to_py)?;
        let out = PyDict::new(py);
        for c in &report.checks {
            out.set_item(&c.name, c.pass)?;
        }
        Ok(out)
    }
}

/// Simulated forward paths.
#[pyclass(frozen)]
struct PathBatch {
    batch: paths::PathBatch,
}

#[pymethods]
impl PathBatch {
    #[getter]
    fn paths(&self) -> usize {
        self.batch.paths
    }

    #[getter]
    fn steps(&self) -> usize {
        self.batch.steps()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.batch.dim
    }

    #[getter]
    fn checksum(&self) -> u64 {
        self.batch.checksum()
    }

    fn state(&self, path: usize, step: usize) -> PyResult<Vec<f64>> {
        if path >= self.batch.paths || step > self.batch.steps() {
            return Err(PyValueError::new_err("index out of range"));
        }
        Ok(self.batch.state(path, step).to_vec())
    }

    fn stop_index(&self, path: usize) -> PyResult<usize> {
        if path >= self.batch.paths {
            return Err(PyValueError::new_err("index out of range"));
        }
        Ok(self.batch.stop_index(path))
    }
}

/// Output of a backward solver.
#[pyclass(frozen)]
struct Solution {
    sol: BackwardSolution,
}

#[pymethods]
impl Solution {
    #[getter]
    fn value(&self) -> f64 {
        self.sol.root_value.value
    }

    #[getter]
    fn stderr(&self) -> f64 {
        self.sol.root_value.stderr
    }

    #[getter]
    fn has_gamma(&self) -> bool {
        self.sol.has_gamma()
    }

    fn y(&self, step: usize, path: usize) -> PyResult<f64> {
        self.check(step, path)?;
        Ok(self.sol.y(step, path))
    }

    fn z(&self, step: usize, path: usize) -> PyResult<Vec<f64>> {
        self.check(step, path)?;
        Ok(self.sol.z(step, path).to_vec())
    }

    fn gamma(&self, step: usize, path: usize) -> PyResult<Option<Vec<f64>>> {
        self.check(step, path)?;
        Ok(self.sol.gamma(step, path).map(|g| g.to_vec()))
    }
}

impl Solution {
    fn check(&self, step: usize, path: usize) -> PyResult<()> {
        if path >= self.sol.paths || step > self.sol.grid.steps {
            return Err(PyValueError::new_err("index out of range"));
        }
        Ok(())
    }
}

/// A compiled coefficient expression.
#[pyclass(frozen)]
struct Expr {
    expr: CoreExpr,
}

#[pymethods]
impl Expr {
    #[new]
    #[pyo3(signature = (source, dim, controls=0))]
    fn new(source: &str, dim: usize, controls: usize) -> PyResult<Self> {
        let expr = CoreExpr::compile(source, Dims::new(dim, controls)).map_err(to_py)?;
        Ok(Expr { expr })
    }

    #[pyo3(signature = (t, x, y=None, z=None, gamma=None, u=None))]
    fn eval(
        &self,
        t: f64,
        x: Vec<f64>,
        y: Option<f64>,
        z: Option<Vec<f64>>,
        gamma: Option<Vec<f64>>,
        u: Option<Vec<f64>>,
    ) -> PyResult<f64> {
        let mut ctx = EvalContext::new(t, &x);
        ctx.y = y;
        ctx.z = z.as_deref();
        ctx.gamma = gamma.as_deref();
        ctx.u = u.as_deref();
        self.expr.eval(&ctx).map_err(to_py)
    }

    fn __str__(&self) -> String {
        self.expr.ast().to_string()
    }
}

#[pyfunction]
fn catalog() -> Vec<&'static str> {
    model::CATALOG.to_vec()
}

#[pyfunction]
#[pyo3(signature = (problem, x0, steps, paths, seed=0, t0=0.0))]
fn simulate(
    problem: &Problem,
    x0: Vec<f64>,
    steps: usize,
    paths: usize,
    seed: u64,
    t0: f64,
) -> PyResult<PathBatch> {
    let grid = TimeGrid::new(t0, problem.spec.horizon(), steps).map_err(to_py)?;
    let batch = paths::euler_simulate(&problem.spec, &grid, &x0, paths, seed).map_err(to_py)?;
    Ok(PathBatch { batch })
}

/// Feynman–Kac estimate as `(value, stderr)`.
#[pyfunction]
fn feynman_kac(problem: &Problem, batch: &PathBatch) -> PyResult<(f64, f64)> {
    let coeffs = problem
        .spec
        .linear()
        .ok_or_else(|| PyValueError::new_err("problem has no linear coefficients"))?;
    let e = linear_fk::feynman_kac_estimate(&problem.spec, coeffs, &batch.batch).map_err(to_py)?;
    Ok((e.value, e.stderr))
}

#[pyfunction]
#[pyo3(signature = (problem, batch, degree=2, picard_iters=2))]
fn solve_semilinear(
    problem: &Problem,
    batch: &PathBatch,
    degree: usize,
    picard_iters: usize,
) -> PyResult<Solution> {
    let sol = bsde_semilinear::backward_solve_semilinear(
        &problem.spec,
        &batch.batch,
        &BasisSpec::polynomial(degree),
        picard_iters,
    )
    .map_err(to_py)?;
    Ok(Solution { sol })
}

#[pyfunction]
#[pyo3(signature = (problem, batch, degree=2, picard_iters=2))]
fn solve_2bsde(
    problem: &Problem,
    batch: &PathBatch,
    degree: usize,
    picard_iters: usize,
) -> PyResult<Solution> {
    let sol = bsde_full::backward_solve_2bsde(
        &problem.spec,
        &batch.batch,
        &BasisSpec::polynomial(degree),
        picard_iters,
    )
    .map_err(to_py)?;
    Ok(Solution { sol })
}

/// Feedback control at node `step` for every path.
#[pyfunction]
fn extract_control(
    problem: &Problem,
    solution: &Solution,
    batch: &PathBatch,
    step: usize,
) -> PyResult<Vec<Vec<f64>>> {
    let cp = problem
        .spec
        .control()
        .ok_or_else(|| PyValueError::new_err("problem has no control problem"))?;
    let field = hjb::extract_control(cp, &solution.sol, &batch.batch).map_err(to_py)?;
    if step > field.steps {
        return Err(PyValueError::new_err("step out of range"));
    }
    Ok((0..field.paths)
        .map(|j| field.control(step, j).to_vec())
        .collect())
}

/// Finite-difference values at the start time as `(xs, values)`.
#[pyfunction]
#[pyo3(signature = (problem, x_lo, x_hi, nodes, t0=0.0))]
fn fd_solve(
    problem: &Problem,
    x_lo: f64,
    x_hi: f64,
    nodes: usize,
    t0: f64,
) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let grid = verify::FdGrid::new(&problem.spec, t0, x_lo, x_hi, nodes, None).map_err(to_py)?;
    let sol = verify::fd_solve_1d(&problem.spec, &grid).map_err(to_py)?;
    Ok((sol.xs.clone(), sol.row(0).to_vec()))
}

/// Log-log slope and its 95% half-width for `(h, e)` pairs.
#[pyfunction]
fn estimate_rate(pairs: Vec<(f64, f64)>) -> PyResult<(f64, f64)> {
    let r = verify::estimate_rate(&pairs).map_err(to_py)?;
    Ok((r.slope, r.half_width))
}

/// Runs a JSON configuration and returns the summary as JSON text.
#[pyfunction]
fn run(config: &str, scheme: &str) -> PyResult<String> {
    let cfg = RunConfig::from_json(config).map_err(to_py)?;
    let scheme: Scheme = serde_json::from_value(serde_json::Value::String(scheme.into()))
        .map_err(|e| PyValueError::new_err(e.to_string()))?;
    let out = parabolica::run::run(&cfg, scheme).map_err(to_py)?;
    Ok(out.summary.to_string())
}

#[pymodule]
fn pyparabolica(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Problem>()?;
    m.add_class::<PathBatch>()?;
    m.add_class::<Solution>()?;
    m.add_class::<Expr>()?;
    m.add_function(wrap_pyfunction!(catalog, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(feynman_kac, m)?)?;
    m.add_function(wrap_pyfunction!(solve_semilinear, m)?)?;
    m.add_function(wrap_pyfunction!(solve_2bsde, m)?)?;
    m.add_function(wrap_pyfunction!(extract_control, m)?)?;
    m.add_function(wrap_pyfunction!(fd_solve, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_rate, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    Ok(())
}
