//! Python bindings: thin wrappers over the core grid/problem types plus
//! config-driven entry points mirroring the CLI subcommands.

use nehari::config::RunConfig;
use nehari::fiber::{self, Branch, FiberProfile};
use nehari::grid;
use nehari::kirchhoff::{self, KirchhoffModel, ProblemParams};
use nehari::solver::{self, SolveOptions};
use nehari::thresholds::{self, Regime};
use nehari::{Error, Field};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

fn err(e: Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_branch(name: &str) -> PyResult<Branch> {
    match name.to_ascii_uppercase().as_str() {
        "PLUS" | "+" => Ok(Branch::Plus),
        "MINUS" | "-" => Ok(Branch::Minus),
        other => Err(PyValueError::new_err(format!("branch must be PLUS or MINUS, got {other:?}"))),
    }
}

#[pyclass(name = "Grid", frozen, from_py_object)]
#[derive(Clone)]
struct PyGrid {
    inner: grid::Grid,
}

#[pymethods]
impl PyGrid {
    #[new]
    fn new(length: f64, n: usize) -> PyResult<Self> {
        Ok(PyGrid { inner: grid::Grid::new(length, n).map_err(err)? })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn h(&self) -> f64 {
        self.inner.h()
    }

    #[getter]
    fn length(&self) -> f64 {
        self.inner.length()
    }

    /// Coordinates of the interior nodes.
    fn nodes(&self) -> Vec<f64> {
        (0..self.inner.n()).map(|i| self.inner.node_x(i)).collect()
    }

    fn __repr__(&self) -> String {
        format!("Grid(length={}, n={})", self.inner.length(), self.inner.n())
    }
}

/// Weight argument: a scalar (constant weight) or one value per node.
#[derive(FromPyObject)]
enum WeightArg {
    Constant(f64),
    Nodes(Vec<f64>),
}

impl WeightArg {
    fn realize(self, n: usize) -> PyResult<Field> {
        match self {
            WeightArg::Constant(v) => Ok(Field::constant(n, v)),
            WeightArg::Nodes(vals) => {
                if vals.len() != n {
                    return Err(PyValueError::new_err(format!(
                        "weight has {} nodes, grid has {n}",
                        vals.len()
                    )));
                }
                Field::new(vals).map_err(err)
            }
        }
    }
}

#[pyclass(name = "Problem", frozen)]
struct PyProblem {
    grid: grid::Grid,
    params: ProblemParams,
    model: KirchhoffModel,
}

impl PyProblem {
    fn field(&self, u: Vec<f64>) -> PyResult<Field> {
        if u.len() != self.grid.n() {
            return Err(PyValueError::new_err(format!(
                "field has {} nodes, grid has {}",
                u.len(),
                self.grid.n()
            )));
        }
        Field::new(u).map_err(err)
    }
}

#[pymethods]
impl PyProblem {
    #[new]
    #[pyo3(signature = (grid, p, q, r, a, b, lam, f=WeightArg::Constant(1.0), g=WeightArg::Constant(1.0), model="PLAIN"))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        grid: PyGrid,
        p: f64,
        q: f64,
        r: f64,
        a: f64,
        b: f64,
        lam: f64,
        f: WeightArg,
        g: WeightArg,
        model: &str,
    ) -> PyResult<Self> {
        let n = grid.inner.n();
        let params =
            ProblemParams::new(p, q, r, a, b, lam, f.realize(n)?, g.realize(n)?).map_err(err)?;
        let model = match model.to_ascii_uppercase().as_str() {
            "PLAIN" => params.plain_model(),
            "TRUNCATED" => {
                let (lo, hi) = thresholds::k_cut_interval(p, r, a, b).map_err(err)?;
                KirchhoffModel::truncated(a, b, 0.5 * (lo + hi))
            }
            "MODIFIED" => {
                let k_hat = thresholds::k_hat(p, r, a, b).map_err(err)?;
                KirchhoffModel::modified(a, b, k_hat, q)
            }
            other => {
                return Err(PyValueError::new_err(format!(
                    "model must be PLAIN, TRUNCATED, or MODIFIED, got {other:?}"
                )))
            }
        };
        Ok(PyProblem { grid: grid.inner, params, model })
    }

    fn energy(&self, u: Vec<f64>) -> PyResult<f64> {
        kirchhoff::energy(&self.grid, &self.params, &self.model, &self.field(u)?).map_err(err)
    }

    fn energy_gradient(&self, u: Vec<f64>) -> PyResult<Vec<f64>> {
        kirchhoff::energy_gradient(&self.grid, &self.params, &self.model, &self.field(u)?)
            .map(|g| g.values().to_vec())
            .map_err(err)
    }

    fn weak_residual(&self, u: Vec<f64>) -> PyResult<Vec<f64>> {
        kirchhoff::weak_residual(&self.grid, &self.params, &self.model, &self.field(u)?)
            .map(|g| g.values().to_vec())
            .map_err(err)
    }

    fn seminorm(&self, u: Vec<f64>) -> PyResult<f64> {
        grid::seminorm_w1p(&self.grid, &self.field(u)?, self.params.p).map_err(err)
    }

    /// (branch name, I''_u(1), membership residual I'_u(1))
    fn classify(&self, u: Vec<f64>) -> PyResult<(String, f64, f64)> {
        let class =
            fiber::classify(&self.grid, &self.params, &self.model, &self.field(u)?).map_err(err)?;
        Ok((class.branch.to_string(), class.second_derivative, class.membership_residual))
    }

    /// Scale u onto the requested Nehari branch.
    fn project(&self, u: Vec<f64>, branch: &str) -> PyResult<Vec<f64>> {
        let branch = parse_branch(branch)?;
        fiber::project_to_nehari(&self.grid, &self.params, &self.model, &self.field(u)?, branch)
            .map(|v| v.values().to_vec())
            .map_err(err)
    }

    /// Roots of the fibering map of u: list of (t, branch name).
    fn nehari_roots(&self, u: Vec<f64>) -> PyResult<Vec<(f64, String)>> {
        let profile = FiberProfile::of_field(&self.grid, &self.params, &self.field(u)?).map_err(err)?;
        let roots = fiber::nehari_roots(&profile, self.params.a, self.params.b).map_err(err)?;
        Ok(roots.into_iter().map(|(t, c)| (t, c.branch.to_string())).collect())
    }

    /// (I(t), I'(t), I''(t)) for the fibering map of u (plain coefficients).
    fn fiber(&self, u: Vec<f64>, t: f64) -> PyResult<(f64, f64, f64)> {
        let profile = FiberProfile::of_field(&self.grid, &self.params, &self.field(u)?).map_err(err)?;
        let (a, b) = (self.params.a, self.params.b);
        Ok((
            fiber::fiber_value(&profile, a, b, t).map_err(err)?,
            fiber::fiber_deriv1(&profile, a, b, t).map_err(err)?,
            fiber::fiber_deriv2(&profile, a, b, t).map_err(err)?,
        ))
    }

    /// Minimize J on a branch; returns the solve report as a JSON string.
    #[pyo3(signature = (branch, seed=0, n_starts=3, residual_tol=1e-8, max_iters=50_000))]
    fn minimize(
        &self,
        branch: &str,
        seed: u64,
        n_starts: usize,
        residual_tol: f64,
        max_iters: usize,
    ) -> PyResult<String> {
        let branch = parse_branch(branch)?;
        let opts = SolveOptions { seed, n_starts, residual_tol, max_iters, ..SolveOptions::default() };
        let report = solver::minimize_on_branch(&self.grid, &self.params, &self.model, branch, &opts)
            .map_err(err)?;
        serde_json::to_string(&report).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    fn __repr__(&self) -> String {
        format!(
            "Problem(p={}, q={}, r={}, a={}, b={}, lambda={}, n={})",
            self.params.p,
            self.params.q,
            self.params.r,
            self.params.a,
            self.params.b,
            self.params.lambda,
            self.grid.n()
        )
    }
}

/// Estimate constants and thresholds for a JSON run configuration; returns
/// {"bundle": ..., "gates": ...} as a JSON string.
#[pyfunction]
fn constants(config_json: &str) -> PyResult<String> {
    let cfg = RunConfig::from_json(config_json).map_err(err)?;
    let (grid, params, _, opts) = cfg.build().map_err(err)?;
    let with_s_big = params.r < params.p * params.p - 1e-12
        && params.a > 0.0
        && 2.0 * params.p - params.r > 0.0
        && params.g.max() > 0.0;
    let estimates = solver::estimate_constants(&grid, &params, &opts, with_s_big).map_err(err)?;
    let bundle = thresholds::compute_thresholds(&grid, &params, &estimates, opts.c_star, opts.theta)
        .map_err(err)?;
    let gates = thresholds::check_gates(&params, &bundle);
    serde_json::to_string(&serde_json::json!({"bundle": bundle, "gates": gates}))
        .map_err(|e| PyValueError::new_err(e.to_string()))
}

/// Run the theorem pipeline for a JSON run configuration; returns the list of
/// solve reports as a JSON string.
#[pyfunction]
fn solve(config_json: &str) -> PyResult<String> {
    let cfg = RunConfig::from_json(config_json).map_err(err)?;
    let (grid, params, _, opts) = cfg.build().map_err(err)?;
    let regime = if params.r > params.p * params.p + 1e-12 {
        Regime::Super
    } else if params.r < params.p * params.p - 1e-12 {
        Regime::Sub
    } else {
        Regime::Critical
    };
    let reports = match regime {
        Regime::Super => {
            let (plus, minus, _) = solver::solve_theorem_2_1(&grid, &params, &opts).map_err(err)?;
            vec![plus, minus]
        }
        Regime::Critical => solver::solve_theorem_2_2(&grid, &params, &opts).map_err(err)?.0,
        Regime::Sub => match solver::solve_theorem_2_4(&grid, &params, &opts) {
            Ok((plus, minus, hat, _)) => vec![plus, minus, hat],
            Err(_) => solver::solve_theorem_2_3(&grid, &params, &opts).map_err(err)?.0,
        },
    };
    serde_json::to_string(&reports).map_err(|e| PyValueError::new_err(e.to_string()))
}

#[pymodule]
fn nehari_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGrid>()?;
    m.add_class::<PyProblem>()?;
    m.add_function(wrap_pyfunction!(constants, m)?)?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    Ok(())
}
