//! Python module `gcssim_py`: scenarios, runs, traces and the analytic
//! helpers. Structured results come back as plain dicts and lists.

use std::path::PathBuf;

use gcs_core::baselines::fairbanks::{fairbanks_swap_experiment, FairbanksSetup};
use gcs_core::baselines::tree::crossover;
use gcs_core::logic::{fast_condition, fast_trigger, slow_condition, OffsetView};
use gcs_core::params::{local_and_global, SystemParams};
use gcs_core::scenario::{builtin_spec, ScenarioSpec, BUILTIN_SCENARIOS};
use gcs_core::time::{format_time as fmt_time, parse_time as parse, Fs, Phase};
use gcs_core::trace::TraceSet;
use gcssim::config::{apply_override, ConfigFile, SweepAxis};
use gcssim::report::{build_report, Report};
use gcssim::{cmd_check_params, cmd_explain, cmd_sweep, execute};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

fn value_err(e: impl ToString) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl ToString) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn to_py<T: Serialize>(py: Python<'_>, v: &T) -> PyResult<Py<PyAny>> {
    let s = serde_json::to_string(v).map_err(runtime_err)?;
    Ok(py.import("json")?.call_method1("loads", (s,))?.unbind())
}

/// Parses a time with unit (`"10ps"`) into femtoseconds.
#[pyfunction]
fn parse_time(s: &str) -> PyResult<Fs> {
    parse(s).map_err(value_err)
}

#[pyfunction]
fn format_time(fs: Fs) -> String {
    fmt_time(fs)
}

#[pyfunction]
fn builtin_scenarios() -> Vec<&'static str> {
    BUILTIN_SCENARIOS.to_vec()
}

/// Skew bounds for rates in ppb, `kappa` in fs.
#[pyfunction]
fn skew_bounds(py: Python<'_>, rho_ppb: i64, mu_ppb: i64, kappa_fs: Fs, diameter: u32) -> PyResult<Py<PyAny>> {
    if mu_ppb <= 2 * rho_ppb || diameter == 0 {
        return Err(value_err("need mu > 2 rho and diameter >= 1"));
    }
    to_py(py, &local_and_global(rho_ppb, mu_ppb, kappa_fs, diameter))
}

fn view(max_fs: Fs, min_fs: Fs) -> OffsetView {
    OffsetView { max: Phase::from_fs(max_fs), min: Phase::from_fs(min_fs) }
}

/// Smallest level at which the fast condition holds, or None.
#[pyfunction(name = "fast_condition")]
fn py_fast_condition(max_fs: Fs, min_fs: Fs, kappa_fs: Fs, ell: u32) -> Option<u32> {
    fast_condition(&view(max_fs, min_fs), kappa_fs, ell).s
}

#[pyfunction(name = "slow_condition")]
fn py_slow_condition(max_fs: Fs, min_fs: Fs, kappa_fs: Fs, ell: u32) -> Option<u32> {
    slow_condition(&view(max_fs, min_fs), kappa_fs, ell).s
}

#[pyfunction(name = "fast_trigger")]
fn py_fast_trigger(max_fs: Fs, min_fs: Fs, kappa_fs: Fs, delta_fs: Fs, ell: u32) -> Option<u32> {
    fast_trigger(&view(max_fs, min_fs), kappa_fs, delta_fs, ell).s
}

/// Tree estimate against the GCS local bound on `W x W` grids.
#[pyfunction]
#[pyo3(signature = (widths, mu = None))]
fn tree_crossover(py: Python<'_>, widths: Vec<usize>, mu: Option<f64>) -> PyResult<Py<PyAny>> {
    let mut p = SystemParams::default();
    if let Some(m) = mu {
        p.mu = m;
    }
    to_py(py, &crossover(&p, &widths).map_err(value_err)?)
}

/// Delay swap on the seven-node self-timed line.
#[pyfunction]
#[pyo3(signature = (swap_time_fs, pull_up_parity = 1))]
fn fairbanks_swap(py: Python<'_>, swap_time_fs: Fs, pull_up_parity: usize) -> PyResult<Py<PyAny>> {
    let setup = FairbanksSetup { pull_up_parity, ..FairbanksSetup::large_local() };
    let r = fairbanks_swap_experiment(&setup, swap_time_fs).map_err(runtime_err)?;
    #[derive(Serialize)]
    struct Summary {
        pre_global_fs: f64,
        pre_local_fs: f64,
        post_local_fs: f64,
        conversion: f64,
        tick_counts: Vec<usize>,
    }
    to_py(
        py,
        &Summary {
            pre_global_fs: r.pre_global_fs,
            pre_local_fs: r.pre_local_fs,
            post_local_fs: r.post_local_fs,
            conversion: r.conversion,
            tick_counts: r.trace.tick_counts(),
        },
    )
}

#[pyclass(name = "Scenario", module = "gcssim_py", skip_from_py_object)]
#[derive(Clone)]
struct PyScenario {
    spec: ScenarioSpec,
}

#[pymethods]
impl PyScenario {
    #[staticmethod]
    fn builtin(name: &str) -> PyResult<PyScenario> {
        Ok(PyScenario { spec: builtin_spec(name).map_err(value_err)? })
    }

    /// Builds a scenario from config text in the CLI's TOML format.
    #[staticmethod]
    #[pyo3(signature = (text, seed = None))]
    fn from_toml(text: &str, seed: Option<u64>) -> PyResult<PyScenario> {
        let cfg = ConfigFile::parse(text, std::path::Path::new("<python>")).map_err(value_err)?;
        let seed = seed.map(|s| s.to_string());
        Ok(PyScenario { spec: cfg.to_spec(seed.as_deref()).map_err(value_err)? })
    }

    /// Applies `key=value` overrides, e.g. `s.set("mu=2e-4", "duration=50ns")`.
    #[pyo3(signature = (*overrides))]
    fn set(&mut self, overrides: Vec<String>) -> PyResult<()> {
        for o in &overrides {
            apply_override(&mut self.spec, o).map_err(value_err)?;
        }
        Ok(())
    }

    #[getter]
    fn name(&self) -> String {
        self.spec.name.clone()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.spec.seed
    }

    #[getter]
    fn duration_fs(&self) -> Fs {
        self.spec.duration
    }

    #[getter]
    fn params(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.spec.params)
    }

    fn check_params(&self) -> PyResult<String> {
        cmd_check_params(&self.spec).map_err(value_err)
    }

    /// Runs the scenario with the GIL released. A monitor abort comes back as a failed
    /// report rather than an exception.
    fn run(&self, py: Python<'_>) -> PyResult<PyTrace> {
        let spec = self.spec.clone();
        let out = py.detach(move || execute(&spec)).map_err(value_err)?;
        Ok(PyTrace { trace: out.trace, report: out.report })
    }

    #[pyo3(signature = (axis, values, seeds = Vec::new(), threads = 1))]
    fn sweep(&self, py: Python<'_>, axis: &str, values: Vec<String>, seeds: Vec<u64>, threads: usize) -> PyResult<Py<PyAny>> {
        let axis: SweepAxis = axis.parse().map_err(value_err)?;
        let spec = self.spec.clone();
        let rows = py.detach(move || cmd_sweep(&spec, axis, &values, &seeds, threads)).map_err(value_err)?;
        to_py(py, &rows)
    }

    fn __repr__(&self) -> String {
        format!("Scenario({:?}, seed={}, duration={})", self.spec.name, self.spec.seed, fmt_time(self.spec.duration))
    }
}

#[pyclass(name = "Trace", module = "gcssim_py")]
struct PyTrace {
    trace: TraceSet,
    report: Report,
}

#[pymethods]
impl PyTrace {
    #[staticmethod]
    fn read(dir: PathBuf) -> PyResult<PyTrace> {
        let trace = TraceSet::read_dir(&dir).map_err(runtime_err)?;
        let sc = trace.meta.scenario.clone();
        let fb = gcssim::report::fairbanks_summary(&sc).map_err(runtime_err)?;
        let report = build_report(&sc, &trace, fb);
        Ok(PyTrace { trace, report })
    }

    fn write(&self, dir: PathBuf) -> PyResult<()> {
        self.trace.write_dir(&dir).map_err(runtime_err)?;
        let json = serde_json::to_string_pretty(&self.report).map_err(runtime_err)?;
        std::fs::write(dir.join("report.json"), json).map_err(runtime_err)
    }

    fn hash(&self) -> String {
        self.trace.hash()
    }

    #[getter]
    fn passed(&self) -> bool {
        self.report.outcome == gcssim::report::Outcome::Pass
    }

    fn report(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.report)
    }

    /// Logical clock of `node` at every record, as `(time_fs, L in fs)`.
    fn clock(&self, node: usize) -> Vec<(Fs, f64)> {
        self.trace
            .nodes
            .iter()
            .filter(|r| r.node == node)
            .map(|r| (r.time_fs, r.l_phase.as_ps_f64() * 1e3))
            .collect()
    }

    /// `(time_fs, local ps, global ps)` per record interval.
    fn skews(&self) -> Vec<(Fs, f64, f64)> {
        self.trace.peaks.iter().map(|p| (p.time_fs, p.local.as_ps_f64(), p.global.as_ps_f64())).collect()
    }

    fn explain(&self, time_fs: Fs, node: usize) -> PyResult<String> {
        cmd_explain(&self.trace, time_fs, node).map_err(value_err)
    }

    fn __repr__(&self) -> String {
        format!(
            "Trace({:?}, {} records, {:?})",
            self.report.scenario,
            self.trace.nodes.len(),
            self.report.outcome
        )
    }
}

#[pymodule]
fn gcssim_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(parse_time, m)?)?;
    m.add_function(wrap_pyfunction!(format_time, m)?)?;
    m.add_function(wrap_pyfunction!(builtin_scenarios, m)?)?;
    m.add_function(wrap_pyfunction!(skew_bounds, m)?)?;
    m.add_function(wrap_pyfunction!(py_fast_condition, m)?)?;
    m.add_function(wrap_pyfunction!(py_slow_condition, m)?)?;
    m.add_function(wrap_pyfunction!(py_fast_trigger, m)?)?;
    m.add_function(wrap_pyfunction!(tree_crossover, m)?)?;
    m.add_function(wrap_pyfunction!(fairbanks_swap, m)?)?;
    m.add_class::<PyScenario>()?;
    m.add_class::<PyTrace>()?;
    Ok(())
}
