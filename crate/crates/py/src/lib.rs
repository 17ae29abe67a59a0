//! Python bindings: problems, the ADMM solvers, the subgradient baseline,
//! weight generators, the z-subproblem and fairness metrics.
//!
//! Weight schemes and regularisers are given by name plus a dict of numeric
//! parameters, e.g. `("superquantile", {"q": 0.8})` or `("mcp", {"mu": 0.01,
//! "theta": 3.0})`.

use std::collections::HashMap;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde_json::{Map, Number, Value};

use rankadmm::baselines::{sgd_solve, SgdConfig};
use rankadmm::data::{generate_synthetic, load_dataset, SyntheticSpec};
use rankadmm::metrics;
use rankadmm::trace::trace_to_csv;
use rankadmm::{
    admm_solve, sadmm_solve, DesignMatrix, Error, IterationTrace, LossKind, ScheduleSpec,
    SolverConfig, WeightScheme,
};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Solver { .. } | Error::Io(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn tagged<T: serde::de::DeserializeOwned>(tag: &str, name: &str, params: Option<HashMap<String, f64>>) -> PyResult<T> {
    let mut map = Map::new();
    map.insert(tag.to_string(), Value::String(name.to_ascii_lowercase().replace('-', "_")));
    for (key, v) in params.unwrap_or_default() {
        let num = if v.fract() == 0.0 && (0.0..9.0e15).contains(&v) {
            Number::from(v as u64)
        } else {
            Number::from_f64(v).ok_or_else(|| PyValueError::new_err(format!("parameter {key} is not finite")))?
        };
        map.insert(key, Value::Number(num));
    }
    serde_json::from_value(Value::Object(map)).map_err(|e| PyValueError::new_err(format!("bad {tag} '{name}': {e}")))
}

fn scheme_of(name: &str, params: Option<HashMap<String, f64>>) -> PyResult<WeightScheme> {
    let name = match name {
        "cpt" => "cpt_value_dependent",
        other => other,
    };
    tagged("scheme", name, params)
}

fn loss_of(name: &str) -> PyResult<LossKind> {
    name.parse().map_err(to_py)
}

fn schedule_of(name: &str, rho: Option<f64>) -> PyResult<ScheduleSpec> {
    match name {
        "srm" => Ok(ScheduleSpec::srm()),
        "aorr" => Ok(ScheduleSpec::aorr()),
        "ehrm" => Ok(ScheduleSpec::ehrm()),
        "constant" => Ok(ScheduleSpec::Constant {
            rho: rho.ok_or_else(|| PyValueError::new_err("constant schedule needs rho"))?,
        }),
        other => Err(PyValueError::new_err(format!("unknown schedule '{other}'"))),
    }
}

/// A rank-based classification problem on a dense design matrix.
#[pyclass(name = "Problem", module = "rankadmm", frozen)]
struct PyProblem {
    inner: rankadmm::Problem,
}

#[pymethods]
impl PyProblem {
    #[new]
    #[pyo3(signature = (x, y, loss = "logistic", scheme = "erm", scheme_params = None, reg = "l2", reg_params = None))]
    fn new(
        x: Vec<Vec<f64>>,
        y: Vec<f64>,
        loss: &str,
        scheme: &str,
        scheme_params: Option<HashMap<String, f64>>,
        reg: &str,
        reg_params: Option<HashMap<String, f64>>,
    ) -> PyResult<Self> {
        let reg_params = match (reg, reg_params) {
            ("zero", p) => p,
            (_, Some(p)) => Some(p),
            (_, None) => Some(HashMap::from([("mu".to_string(), 1e-2)])),
        };
        let design = DesignMatrix::from_rows(&x).map_err(to_py)?;
        let inner = rankadmm::Problem::new(
            design,
            y,
            loss_of(loss)?,
            scheme_of(scheme, scheme_params)?,
            tagged("kind", reg, reg_params)?,
        )
        .map_err(to_py)?;
        Ok(Self { inner })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn d(&self) -> usize {
        self.inner.d()
    }

    /// Rank-weighted loss plus regulariser at `w`.
    fn objective(&self, w: Vec<f64>) -> PyResult<f64> {
        self.inner.objective(&w).map_err(to_py)
    }

    /// Margins `z = −diag(y) X w`.
    fn margins(&self, w: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.apply_d(&w).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!(
            "Problem(n={}, d={}, loss={:?}, scheme={:?}, reg={:?})",
            self.inner.n(),
            self.inner.d(),
            self.inner.loss(),
            self.inner.scheme(),
            self.inner.regularizer()
        )
    }
}

#[pyclass(name = "SolveResult", module = "rankadmm", frozen)]
struct PySolveResult {
    #[pyo3(get)]
    w: Vec<f64>,
    #[pyo3(get)]
    objective: f64,
    #[pyo3(get)]
    iterations: usize,
    /// `"max_iter"`, `"kkt_tolerance"` or `"time_budget"`.
    #[pyo3(get)]
    stop: String,
    trace: Vec<IterationTrace>,
}

#[pymethods]
impl PySolveResult {
    /// Objective value per iteration (per epoch for the baseline).
    fn objectives(&self) -> Vec<f64> {
        self.trace.iter().map(|t| t.objective).collect()
    }

    /// `(kkt_z, kkt_w, kkt_feas)` per iteration.
    fn kkt(&self) -> Vec<(f64, f64, f64)> {
        self.trace.iter().map(|t| (t.kkt_z, t.kkt_w, t.kkt_feas)).collect()
    }

    fn trace_csv(&self) -> String {
        trace_to_csv(&self.trace)
    }

    fn __repr__(&self) -> String {
        format!(
            "SolveResult(objective={}, iterations={}, stop={})",
            self.objective, self.iterations, self.stop
        )
    }
}

fn stop_name<T: serde::Serialize>(stop: &T) -> String {
    serde_json::to_value(stop)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

/// Proximal ADMM; `smooth=True` selects the Moreau-smoothed variant.
#[pyfunction]
#[pyo3(signature = (problem, smooth = false, max_iter = 300, schedule = "srm", rho = None, r = 1.0, eps = 1e-6, seed = 0))]
#[allow(clippy::too_many_arguments)]
fn solve(
    py: Python<'_>,
    problem: &PyProblem,
    smooth: bool,
    max_iter: usize,
    schedule: &str,
    rho: Option<f64>,
    r: f64,
    eps: f64,
    seed: u64,
) -> PyResult<PySolveResult> {
    let cfg = SolverConfig {
        max_iter,
        schedule: schedule_of(schedule, rho)?,
        r,
        stop_eps: eps,
        seed,
        ..SolverConfig::default()
    };
    let p = &problem.inner;
    let res = py
        .detach(|| if smooth { sadmm_solve(p, &cfg) } else { admm_solve(p, &cfg) })
        .map_err(to_py)?;
    Ok(PySolveResult {
        objective: p.objective(&res.w).map_err(to_py)?,
        iterations: res.trace.len(),
        stop: stop_name(&res.stop),
        w: res.w,
        trace: res.trace,
    })
}

/// Minibatch subgradient baseline. `batch=None` uses the full sample.
#[pyfunction]
#[pyo3(signature = (problem, learning_rate = 1e-2, batch = Some(64), epochs = 100, seed = 0))]
fn sgd(
    py: Python<'_>,
    problem: &PyProblem,
    learning_rate: f64,
    batch: Option<usize>,
    epochs: usize,
    seed: u64,
) -> PyResult<PySolveResult> {
    let cfg = SgdConfig {
        learning_rate,
        batch,
        epochs,
        seed,
        time_budget: None,
    };
    let p = &problem.inner;
    let res = py.detach(|| sgd_solve(p, &cfg)).map_err(to_py)?;
    Ok(PySolveResult {
        objective: p.objective(&res.w).map_err(to_py)?,
        iterations: res.trace.len(),
        stop: stop_name(&res.stop),
        w: res.w,
        trace: res.trace,
    })
}

/// Rank weights for `n` ascending-sorted losses. Value-dependent (CPT)
/// schemes return the below-threshold branch.
#[pyfunction]
#[pyo3(signature = (scheme, n, params = None))]
fn weights(scheme: &str, n: usize, params: Option<HashMap<String, f64>>) -> PyResult<Vec<f64>> {
    let resolved = scheme_of(scheme, params)?.resolve(n).map_err(to_py)?;
    Ok((0..n).map(|i| resolved.sigma_at(i, f64::NEG_INFINITY)).collect())
}

/// `argmin_z Σ σ_i l(z_[i]) + (ρ/2)‖z − m‖²`, returned in the order of `m`.
#[pyfunction]
#[pyo3(signature = (m, rho, loss = "hinge", scheme = "erm", params = None))]
fn solve_z(m: Vec<f64>, rho: f64, loss: &str, scheme: &str, params: Option<HashMap<String, f64>>) -> PyResult<Vec<f64>> {
    let resolved = scheme_of(scheme, params)?.resolve(m.len()).map_err(to_py)?;
    rankadmm::solve_z_subproblem(&m, &resolved, rho, loss_of(loss)?).map_err(to_py)
}

/// `(x, y)` from the built-in Gaussian generator.
#[pyfunction]
#[pyo3(signature = (n, d, seed = 0, class_sep = 1.0, flip_fraction = 0.05))]
fn synthetic(n: usize, d: usize, seed: u64, class_sep: f64, flip_fraction: f64) -> PyResult<(Vec<Vec<f64>>, Vec<f64>)> {
    let spec = SyntheticSpec {
        class_sep,
        flip_fraction,
        ..SyntheticSpec::new(n, d, seed)
    };
    let data = generate_synthetic(&spec).map_err(to_py)?;
    Ok((data.x.to_dense_rows(), data.y))
}

/// `(x, y)` from a LIBSVM or CSV file.
#[pyfunction]
fn load(path: std::path::PathBuf) -> PyResult<(Vec<Vec<f64>>, Vec<f64>)> {
    let data = load_dataset(&path).map_err(to_py)?;
    Ok((data.x.to_dense_rows(), data.y))
}

/// Group fairness metrics of ±1 predictions; `group2` marks the
/// unprivileged group.
#[pyfunction]
fn fairness(predictions: Vec<f64>, labels: Vec<f64>, group2: Vec<bool>) -> PyResult<HashMap<String, f64>> {
    let r = metrics::fairness(&predictions, &labels, &group2).map_err(to_py)?;
    Ok(HashMap::from([
        ("spd".to_string(), r.spd),
        ("di".to_string(), r.di),
        ("eod".to_string(), r.eod),
        ("aod".to_string(), r.aod),
        ("theil".to_string(), r.theil),
        ("fnrd".to_string(), r.fnrd),
    ]))
}

#[pymodule]
#[pyo3(name = "rankadmm")]
fn rankadmm_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyProblem>()?;
    m.add_class::<PySolveResult>()?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(sgd, m)?)?;
    m.add_function(wrap_pyfunction!(weights, m)?)?;
    m.add_function(wrap_pyfunction!(solve_z, m)?)?;
    m.add_function(wrap_pyfunction!(synthetic, m)?)?;
    m.add_function(wrap_pyfunction!(load, m)?)?;
    m.add_function(wrap_pyfunction!(fairness, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
