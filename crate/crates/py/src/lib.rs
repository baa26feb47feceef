//! Python bindings: datasets, slowdown matrices, selection and evaluation.
//!
//! Build the cdylib (`cargo build -p portune-py`) and import the resulting
//! shared library as `portune_py`; `python/smoke_test.py` at the repository
//! root shows the expected usage.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::BufReader;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use portune::dataset::{
    build_slowdown_matrix, generate_synthetic, ingest_clblast_db, ingest_csv, CsvSchema,
    DeviceId, Environment, KernelInput, PenaltyPolicy, PerformanceDataset, SlowdownMatrix,
    SyntheticSpec,
};
use portune::evaluation::{self, EvaluationReport, JobTemplate};
use portune::objectives::{FleetSpec, Objective};
use portune::selectors::{run_selection, Method, SelectionJob, SelectionResult};

fn py_err(e: portune::Error) -> PyErr {
    match e {
        portune::Error::Io(inner) => PyIOError::new_err(inner.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn parse_inputs(inputs: Vec<(u32, u32, u32)>) -> PyResult<Vec<KernelInput>> {
    inputs
        .into_iter()
        .map(|(m, n, k)| KernelInput::new(m, n, k).map_err(py_err))
        .collect()
}

/// A validated benchmark dataset.
#[pyclass(name = "Dataset", frozen)]
struct PyDataset {
    inner: PerformanceDataset,
}

#[pymethods]
impl PyDataset {
    /// Reads the CSV layout (device,m,n,k,params,runtime_ms[,compile_ms]).
    #[staticmethod]
    fn from_csv(path: &str) -> PyResult<Self> {
        let file = File::open(path).map_err(|e| PyIOError::new_err(format!("{path}: {e}")))?;
        let inner = ingest_csv(BufReader::new(file), &CsvSchema::default()).map_err(py_err)?;
        Ok(PyDataset { inner })
    }

    /// Reads a CLBlast crowdsourced database (xgemm, single precision).
    #[staticmethod]
    fn from_clblast(path: &str) -> PyResult<Self> {
        let file = File::open(path).map_err(|e| PyIOError::new_err(format!("{path}: {e}")))?;
        let (inner, _) = ingest_clblast_db(BufReader::new(file)).map_err(py_err)?;
        Ok(PyDataset { inner })
    }

    /// Reads the canonical JSON form written by `save`.
    #[staticmethod]
    fn from_canonical(path: &str) -> PyResult<Self> {
        let file = File::open(path).map_err(|e| PyIOError::new_err(format!("{path}: {e}")))?;
        let inner = PerformanceDataset::read_canonical(BufReader::new(file)).map_err(py_err)?;
        Ok(PyDataset { inner })
    }

    /// Synthetic dataset with `specialists` planted optimal variants.
    #[staticmethod]
    #[pyo3(signature = (devices, variants, specialists, gap, seed, inputs=None, gap_spread=0.0, param_arity=16))]
    #[allow(clippy::too_many_arguments)]
    fn synthetic(
        devices: usize,
        variants: usize,
        specialists: usize,
        gap: f64,
        seed: u64,
        inputs: Option<Vec<(u32, u32, u32)>>,
        gap_spread: f64,
        param_arity: usize,
    ) -> PyResult<Self> {
        let spec = SyntheticSpec {
            devices,
            inputs: match inputs {
                Some(list) => parse_inputs(list)?,
                None => SyntheticSpec::default_grid(),
            },
            variants,
            specialists,
            gap,
            gap_spread,
            param_arity,
        };
        let inner = generate_synthetic(&spec, seed).map_err(py_err)?;
        Ok(PyDataset { inner })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        let file = File::create(path).map_err(|e| PyIOError::new_err(format!("{path}: {e}")))?;
        self.inner.write_canonical(file).map_err(py_err)
    }

    #[getter]
    fn num_records(&self) -> usize {
        self.inner.records().len()
    }

    #[getter]
    fn num_environments(&self) -> usize {
        self.inner.environments().len()
    }

    #[getter]
    fn num_variants(&self) -> usize {
        self.inner.variants().len()
    }

    #[getter]
    fn param_arity(&self) -> usize {
        self.inner.param_arity()
    }

    /// (device, (m, n, k)) pairs in canonical order.
    fn environments(&self) -> Vec<(String, (u32, u32, u32))> {
        self.inner
            .environments()
            .into_iter()
            .map(|e| (e.device.name, (e.input.m, e.input.n, e.input.k)))
            .collect()
    }

    /// Slowdown-over-oracle matrix; `penalty=None` uses the dataset
    /// maximum for unmeasured cells.
    #[pyo3(signature = (penalty=None))]
    fn matrix(&self, penalty: Option<f64>) -> PyResult<PyMatrix> {
        let policy = match penalty {
            Some(p) => PenaltyPolicy::Explicit(p),
            None => PenaltyPolicy::DatasetMax,
        };
        let inner = build_slowdown_matrix(&self.inner, policy).map_err(py_err)?;
        Ok(PyMatrix { inner })
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset(records={}, environments={}, variants={}, arity={})",
            self.inner.records().len(),
            self.inner.environments().len(),
            self.inner.variants().len(),
            self.inner.param_arity()
        )
    }
}

/// Environments x variants slowdown matrix.
#[pyclass(name = "Matrix", frozen)]
struct PyMatrix {
    inner: SlowdownMatrix,
}

#[pymethods]
impl PyMatrix {
    #[getter]
    fn num_environments(&self) -> usize {
        self.inner.n_environments()
    }

    #[getter]
    fn num_variants(&self) -> usize {
        self.inner.n_variants()
    }

    #[getter]
    fn penalty(&self) -> f64 {
        self.inner.penalty()
    }

    fn slowdown(&self, environment: usize, variant: usize) -> PyResult<f64> {
        self.check(environment, variant)?;
        Ok(self.inner.value(environment, variant))
    }

    fn is_valid(&self, environment: usize, variant: usize) -> PyResult<bool> {
        self.check(environment, variant)?;
        Ok(self.inner.is_valid(environment, variant))
    }

    /// Row indices matching the device/input allowlists.
    #[pyo3(signature = (devices=None, inputs=None))]
    fn scope(
        &self,
        devices: Option<Vec<String>>,
        inputs: Option<Vec<(u32, u32, u32)>>,
    ) -> PyResult<Vec<usize>> {
        let devices: Option<BTreeSet<String>> = devices.map(|d| d.into_iter().collect());
        let inputs: Option<BTreeSet<KernelInput>> = match inputs {
            Some(list) => Some(parse_inputs(list)?.into_iter().collect()),
            None => None,
        };
        Ok(self.inner.scope_filter(devices.as_ref(), inputs.as_ref()))
    }

    fn __repr__(&self) -> String {
        format!(
            "Matrix(environments={}, variants={}, penalty={})",
            self.inner.n_environments(),
            self.inner.n_variants(),
            self.inner.penalty()
        )
    }
}

impl PyMatrix {
    fn check(&self, environment: usize, variant: usize) -> PyResult<()> {
        if environment >= self.inner.n_environments() || variant >= self.inner.n_variants() {
            return Err(PyValueError::new_err(format!(
                "cell ({environment}, {variant}) out of range for {}x{} matrix",
                self.inner.n_environments(),
                self.inner.n_variants()
            )));
        }
        Ok(())
    }
}

/// Outcome of a selection run.
#[pyclass(name = "Result", frozen)]
struct PyResult_ {
    inner: SelectionResult,
}

#[pymethods]
impl PyResult_ {
    #[getter]
    fn cost(&self) -> f64 {
        self.inner.cost
    }

    #[getter]
    fn method(&self) -> String {
        self.inner.method.to_string()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[getter]
    fn evaluations(&self) -> u64 {
        self.inner.evaluations
    }

    /// Chosen variant columns (sorted matrix indices).
    #[getter]
    fn chosen(&self) -> Vec<usize> {
        self.inner.chosen.indices().to_vec()
    }

    /// Chosen parameter configurations, aligned with `chosen`.
    #[getter]
    fn chosen_params(&self) -> Vec<Vec<u32>> {
        self.inner
            .chosen_configs
            .iter()
            .map(|c| c.0.clone())
            .collect()
    }

    /// "device/MxNxK" -> chosen variant column for every scope environment.
    fn winners(&self) -> std::collections::BTreeMap<String, usize> {
        self.inner
            .winners
            .iter()
            .map(|w| (format!("{}/{}x{}x{}", w.device, w.m, w.n, w.k), w.variant))
            .collect()
    }

    /// Exact-match lookup; raises for environments outside the tuned scope.
    fn dispatch(&self, device: &str, m: u32, n: u32, k: u32) -> PyResult<usize> {
        let env = Environment {
            device: DeviceId::named(device),
            input: KernelInput::new(m, n, k).map_err(py_err)?,
        };
        portune::selectors::dispatch(&self.inner, &env).map_err(py_err)
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string_pretty(&self.inner)
            .map_err(|e| PyValueError::new_err(e.to_string()))
    }

    fn __repr__(&self) -> String {
        format!(
            "Result(method={}, chosen={:?}, cost={})",
            self.inner.method,
            self.inner.chosen.indices(),
            self.inner.cost
        )
    }
}

/// Evaluation of a selection over a scope.
#[pyclass(name = "Report", frozen)]
struct PyReport {
    inner: EvaluationReport,
}

#[pymethods]
impl PyReport {
    #[getter]
    fn geomean(&self) -> f64 {
        self.inner.geomean
    }

    #[getter]
    fn median(&self) -> f64 {
        self.inner.median
    }

    #[getter]
    fn fleet_rate(&self) -> Option<f64> {
        self.inner.fleet_rate
    }

    /// (threshold, fraction of environments at or below it) pairs.
    fn cdf(&self) -> Vec<(f64, f64)> {
        self.inner
            .cdf
            .iter()
            .map(|p| (p.threshold, p.fraction))
            .collect()
    }

    /// (device, m, n, k, achieved slowdown) per environment.
    fn per_env(&self) -> Vec<(String, u32, u32, u32, f64)> {
        self.inner
            .per_env
            .iter()
            .map(|e| (e.device.clone(), e.m, e.n, e.k, e.slowdown))
            .collect()
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string_pretty(&self.inner)
            .map_err(|e| PyValueError::new_err(e.to_string()))
    }

    fn __repr__(&self) -> String {
        format!(
            "Report(geomean={}, median={}, environments={})",
            self.inner.geomean,
            self.inner.median,
            self.inner.per_env.len()
        )
    }
}

fn objective_from(fleet_json: Option<&str>) -> PyResult<Objective> {
    match fleet_json {
        None => Ok(Objective::LibraryGeomean),
        Some(text) => {
            let fleet: FleetSpec = serde_json::from_str(text)
                .map_err(|e| PyValueError::new_err(format!("bad fleet spec: {e}")))?;
            Ok(Objective::FleetRate { fleet })
        }
    }
}

/// Selects a variant set of size at most `kappa` minimizing the objective.
///
/// `method` is one of "exhaustive", "stochastic", "kmeans", "tree";
/// `fleet_json` switches to the fleet-rate objective.
#[pyfunction]
#[pyo3(signature = (matrix, method, kappa, seed, scope=None, budget_ms=30_000, fleet_json=None))]
fn tune(
    matrix: &PyMatrix,
    method: &str,
    kappa: usize,
    seed: u64,
    scope: Option<Vec<usize>>,
    budget_ms: u64,
    fleet_json: Option<&str>,
) -> PyResult<PyResult_> {
    let job = SelectionJob {
        scope: scope.unwrap_or_else(|| matrix.inner.scope_all()),
        objective: objective_from(fleet_json)?,
        kappa,
        budget_ms,
        seed,
        method: method.parse::<Method>().map_err(py_err)?,
        enum_cap: portune::selectors::DEFAULT_ENUM_CAP,
    };
    let outcome = run_selection(&job, &matrix.inner).map_err(py_err)?;
    Ok(PyResult_ {
        inner: outcome.result,
    })
}

/// Evaluates an existing selection over a scope (defaults to all rows).
#[pyfunction]
#[pyo3(signature = (matrix, result, scope=None, fleet_json=None))]
fn evaluate(
    matrix: &PyMatrix,
    result: &PyResult_,
    scope: Option<Vec<usize>>,
    fleet_json: Option<&str>,
) -> PyResult<PyReport> {
    let scope = scope.unwrap_or_else(|| matrix.inner.scope_all());
    let fleet = match fleet_json {
        None => None,
        Some(text) => Some(
            serde_json::from_str::<FleetSpec>(text)
                .map_err(|e| PyValueError::new_err(format!("bad fleet spec: {e}")))?,
        ),
    };
    let report =
        evaluation::evaluate(&result.inner, &matrix.inner, &scope, fleet.as_ref())
            .map_err(py_err)?;
    Ok(PyReport { inner: report })
}

/// Geomean-versus-kappa sweep; returns one report per kappa.
#[pyfunction]
#[pyo3(signature = (matrix, method, kappas, runs, seed, scope=None, budget_ms=30_000, workers=1))]
#[allow(clippy::too_many_arguments)]
fn divergence_sweep(
    matrix: &PyMatrix,
    method: &str,
    kappas: Vec<usize>,
    runs: usize,
    seed: u64,
    scope: Option<Vec<usize>>,
    budget_ms: u64,
    workers: usize,
) -> PyResult<Vec<PyReport>> {
    let template = JobTemplate {
        method: method.parse::<Method>().map_err(py_err)?,
        objective: Objective::LibraryGeomean,
        kappa: kappas.first().copied().unwrap_or(1),
        budget_ms,
        seed,
        enum_cap: portune::selectors::DEFAULT_ENUM_CAP,
    };
    let scope = scope.unwrap_or_else(|| matrix.inner.scope_all());
    let reports =
        evaluation::divergence_sweep(&matrix.inner, &template, &scope, &kappas, runs, workers)
            .map_err(py_err)?;
    Ok(reports
        .into_iter()
        .map(|inner| PyReport { inner })
        .collect())
}

#[pymodule]
fn portune_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDataset>()?;
    m.add_class::<PyMatrix>()?;
    m.add_class::<PyResult_>()?;
    m.add_class::<PyReport>()?;
    m.add_function(wrap_pyfunction!(tune, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(divergence_sweep, m)?)?;
    Ok(())
}
