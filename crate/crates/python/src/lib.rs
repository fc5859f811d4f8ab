//! Python bindings: schedules, masks, problems, and whole runs driven by
//! config text.

use memsgd::compress::{memory_norm_bound as bound, top_k_mask as top_k};
use memsgd::config::parse_config;
use memsgd::diagnose::moreau_grad_estimate;
use memsgd::engine::ScheduleFamily;
use memsgd::stagewise::stagewise_run;
use memsgd::{make_problem, Error, Oracle, ParamVector, ProblemSpec};
use pyo3::exceptions::{PyArithmeticError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py(err: Error) -> PyErr {
    match err {
        Error::NonFinite { .. } => PyArithmeticError::new_err(err.to_string()),
        Error::Invariant(_) | Error::NotConverged { .. } | Error::Io(_) | Error::Csv(_) => {
            PyRuntimeError::new_err(err.to_string())
        }
        _ => PyValueError::new_err(err.to_string()),
    }
}

fn vector(values: Vec<f64>) -> PyResult<ParamVector> {
    ParamVector::from_vec(values).map_err(to_py)
}

/// Step-size schedule producing `(eta_t, rho_t, gamma_t)`.
#[pyclass(name = "Schedule", frozen)]
struct PySchedule {
    inner: memsgd::Schedule,
}

#[pymethods]
impl PySchedule {
    #[new]
    #[pyo3(signature = (family, beta, eta0 = 1.0, alpha = 0.75, mu = 1.0, horizon = 1000))]
    fn new(
        family: &str,
        beta: f64,
        eta0: f64,
        alpha: f64,
        mu: f64,
        horizon: u64,
    ) -> PyResult<Self> {
        let family = match family {
            "constant" => ScheduleFamily::Constant { eta0, horizon },
            "power" => ScheduleFamily::Power { eta0, alpha },
            "strong_convex" => ScheduleFamily::StrongConvex { mu },
            "convex_sqrt" => ScheduleFamily::ConvexSqrt,
            "stage_constant" => ScheduleFamily::StageConstant { eta0 },
            other => {
                return Err(PyValueError::new_err(format!(
                    "unknown schedule family `{other}`"
                )))
            }
        };
        let inner = memsgd::Schedule::new(family, beta).map_err(to_py)?;
        Ok(PySchedule { inner })
    }

    fn eval(&self, t: u64) -> (f64, f64, f64) {
        let v = self.inner.eval(t);
        (v.eta, v.rho, v.gamma)
    }

    #[getter]
    fn beta(&self) -> f64 {
        self.inner.beta()
    }
}

/// A generated synthetic objective.
#[pyclass(name = "Problem", frozen)]
struct PyProblem {
    inner: memsgd::Problem,
}

#[pymethods]
impl PyProblem {
    #[new]
    #[pyo3(signature = (name, d, n = 100, data_seed = 0, noise = 0.1, mu = 1.0, smoothness = 1.0, l2 = 0.1, init_radius = None))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        name: &str,
        d: usize,
        n: usize,
        data_seed: u64,
        noise: f64,
        mu: f64,
        smoothness: f64,
        l2: f64,
        init_radius: Option<f64>,
    ) -> PyResult<Self> {
        let spec = ProblemSpec {
            name: name.into(),
            d,
            n,
            data_seed,
            noise,
            mu,
            smoothness,
            l2,
            init_radius,
        };
        Ok(PyProblem {
            inner: make_problem(&spec).map_err(to_py)?,
        })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn num_samples(&self) -> usize {
        self.inner.num_samples()
    }

    #[getter]
    fn initial_point(&self) -> Vec<f64> {
        self.inner.initial_point().as_slice().to_vec()
    }

    #[getter]
    fn w_star(&self) -> Option<Vec<f64>> {
        self.inner
            .metadata()
            .w_star
            .as_ref()
            .map(|w| w.as_slice().to_vec())
    }

    #[getter]
    fn f_star(&self) -> Option<f64> {
        self.inner.metadata().f_star
    }

    #[getter]
    fn smoothness(&self) -> Option<f64> {
        self.inner.metadata().smoothness
    }

    #[getter]
    fn weak_convexity(&self) -> f64 {
        self.inner.metadata().weak_convexity
    }

    #[getter]
    fn gradient_bound(&self) -> Option<f64> {
        self.inner.metadata().gradient_bound
    }

    fn objective(&self, w: Vec<f64>) -> PyResult<f64> {
        let w = vector(w)?;
        w.check_dim(self.inner.dim()).map_err(to_py)?;
        Ok(self.inner.full_objective(&w))
    }

    fn gradient(&self, w: Vec<f64>) -> PyResult<Vec<f64>> {
        let w = vector(w)?;
        w.check_dim(self.inner.dim()).map_err(to_py)?;
        Ok(self.inner.full_gradient(&w).into_vec())
    }

    fn stochastic_gradient(&self, w: Vec<f64>, batch: Vec<usize>) -> PyResult<Vec<f64>> {
        let w = vector(w)?;
        Ok(self
            .inner
            .stochastic_gradient(&w, &batch)
            .map_err(to_py)?
            .into_vec())
    }

    /// Returns `(grad, norm)` of the Moreau envelope `F_gamma` at `w`.
    #[pyo3(signature = (w, gamma, tol = 1e-8))]
    fn moreau_grad(&self, w: Vec<f64>, gamma: f64, tol: f64) -> PyResult<(Vec<f64>, f64)> {
        let est = moreau_grad_estimate(&self.inner, &vector(w)?, gamma, tol).map_err(to_py)?;
        Ok((est.grad.into_vec(), est.norm))
    }
}

/// Indices of the `q` largest-magnitude entries (ties to the lower index).
#[pyfunction]
fn top_k_mask(values: Vec<f64>, q: usize) -> PyResult<Vec<usize>> {
    Ok(top_k(&vector(values)?, q)
        .map_err(to_py)?
        .selected()
        .to_vec())
}

/// `2(d−q)(2d+q)G² / ((1−β)² q²)`.
#[pyfunction]
fn memory_norm_bound(d: usize, q: usize, g: f64, beta: f64) -> PyResult<f64> {
    bound(d, q, g, beta).map_err(to_py)
}

/// One metrics row in `METRICS_HEADER` order.
type Row = (u64, f64, f64, f64, f64, f64, f64, f64, f64, u64);

/// Runs the experiment described by config text; returns a dict with the
/// metrics rows, the final iterate and the run summary.
#[pyfunction]
#[pyo3(signature = (config, seed = None, threads = None))]
fn run<'py>(
    py: Python<'py>,
    config: &str,
    seed: Option<u64>,
    threads: Option<usize>,
) -> PyResult<Bound<'py, PyDict>> {
    let mut cfg = parse_config(config).map_err(to_py)?;
    if let Some(s) = seed {
        cfg.override_seed(s);
    }
    if let Some(t) = threads {
        cfg.override_threads(t);
    }
    let out = py.detach(|| memsgd::run(&cfg.run)).map_err(to_py)?;
    let rows: Vec<Row> = out
        .rows
        .iter()
        .map(|r| {
            (
                r.t,
                r.objective,
                r.grad_norm,
                r.mem_norm,
                r.zw_dist,
                r.transform_residual,
                r.eta,
                r.rho,
                r.gamma,
                r.sent_nnz,
            )
        })
        .collect();
    let s = &out.summary;
    let dict = PyDict::new(py);
    dict.set_item("columns", memsgd::metrics::METRICS_HEADER.to_vec())?;
    dict.set_item("rows", rows)?;
    dict.set_item("final_w", out.final_state.w.as_slice().to_vec())?;
    dict.set_item(
        "max_relative_transform_residual",
        s.max_relative_transform_residual,
    )?;
    dict.set_item(
        "max_relative_memory_residual",
        s.max_relative_memory_residual,
    )?;
    dict.set_item("transform_violations", s.transform_violations)?;
    dict.set_item("memory_violations", s.memory_violations)?;
    dict.set_item("max_memory_norm_sq", s.max_memory_norm_sq)?;
    dict.set_item("total_sent_coords", s.total_sent_coords)?;
    dict.set_item("gradient_bound", out.problem.gradient_bound)?;
    Ok(dict)
}

/// Runs the stagewise driver described by config text; returns a list of
/// per-stage dicts.
#[pyfunction]
#[pyo3(signature = (config, seed = None))]
fn stagewise<'py>(
    py: Python<'py>,
    config: &str,
    seed: Option<u64>,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let mut cfg = parse_config(config).map_err(to_py)?;
    if let Some(s) = seed {
        cfg.override_seed(s);
    }
    let out = py.detach(|| stagewise_run(&cfg.stagewise)).map_err(to_py)?;
    out.reports
        .iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("s", r.s)?;
            d.set_item("T_s", r.t_s)?;
            d.set_item("eta_s", r.eta_s)?;
            d.set_item("F_avg", r.f_avg)?;
            d.set_item("moreau_grad_sq", r.moreau_grad_sq)?;
            d.set_item("weighted_avg", r.weighted_avg)?;
            Ok(d)
        })
        .collect()
}

#[pymodule]
fn memsgd_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySchedule>()?;
    m.add_class::<PyProblem>()?;
    m.add_function(wrap_pyfunction!(top_k_mask, m)?)?;
    m.add_function(wrap_pyfunction!(memory_norm_bound, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(stagewise, m)?)?;
    Ok(())
}
