//! Command implementations behind the `gcssim` binary.

pub mod config;
pub mod report;

use std::fmt::Write as _;
use std::path::Path;

use gcs_core::baselines::fairbanks::FairbanksError;
use gcs_core::baselines::tree::{crossover, TreeError};
use gcs_core::engine::{run, EngineError};
use gcs_core::logic::{classify, fast_condition, slow_condition, OffsetView, Region};
use gcs_core::params::{derived_delta, skew_bounds, validate_params};
use gcs_core::scenario::{builtin_spec, Scenario, ScenarioSpec, BUILTIN_SCENARIOS};
use gcs_core::time::{format_time, Fs, Phase};
use gcs_core::trace::{TraceError, TraceSet};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use config::{apply_override, ConfigError, ConfigFile, SweepAxis};
use report::{build_report, fairbanks_summary, Outcome, Report};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_FAIL: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("fairbanks: {0}")]
    Fairbanks(#[from] FairbanksError),
    #[error("tree: {0}")]
    Tree(#[from] TreeError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("thread pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        EXIT_CONFIG
    }
}

/// Spec from a config with command-line overrides applied last.
pub fn load_spec(config: &ConfigFile, overrides: &[String], env_seed: Option<&str>) -> Result<ScenarioSpec, CliError> {
    let mut spec = config.to_spec(env_seed)?;
    for o in overrides {
        apply_override(&mut spec, o)?;
    }
    Ok(spec)
}

pub struct RunOutput {
    pub scenario: Scenario,
    pub trace: TraceSet,
    pub report: Report,
}

impl RunOutput {
    pub fn exit_code(&self) -> i32 {
        match self.report.outcome {
            Outcome::Pass => EXIT_PASS,
            Outcome::Fail => EXIT_FAIL,
        }
    }
}

/// Runs a scenario. A monitor abort is a failed run, not an error: the
/// counterexample trace is returned with its report.
pub fn execute(spec: &ScenarioSpec) -> Result<RunOutput, CliError> {
    let scenario = spec.resolve().map_err(ConfigError::from)?;
    let trace = match run(&scenario) {
        Ok(t) => t,
        Err(EngineError::Violation(c)) => c.trace,
        Err(e) => return Err(e.into()),
    };
    let fb = fairbanks_summary(&scenario)?;
    let report = build_report(&scenario, &trace, fb);
    Ok(RunOutput { scenario, trace, report })
}

/// Runs and writes the trace directory plus `report.json` into `out`.
pub fn cmd_run(spec: &ScenarioSpec, out: Option<&Path>) -> Result<RunOutput, CliError> {
    let r = execute(spec)?;
    if let Some(dir) = out {
        r.trace.write_dir(dir)?;
        std::fs::write(dir.join("report.json"), serde_json::to_string_pretty(&r.report)?)?;
    }
    Ok(r)
}

pub fn run_summary(r: &RunOutput) -> String {
    let rep = &r.report;
    let mut s = String::new();
    let _ = writeln!(s, "scenario {} (seed {})", rep.scenario, rep.seed);
    let _ = writeln!(
        s,
        "  max local {:.3} ps (bound {}), max global {:.3} ps (bound {})",
        rep.skews.max_local_ps,
        format_time(rep.bounds.local_bound),
        rep.skews.max_global_ps,
        format_time(rep.bounds.global_bound)
    );
    let _ = writeln!(s, "  final-quarter max local {:.3} ps", rep.skews.final_quarter_max_local_ps);
    match rep.skews.stabilization_time_fs {
        Some(t) => {
            let _ = writeln!(s, "  stabilized after {}", format_time(t));
        }
        None => {
            let _ = writeln!(s, "  local bound held throughout");
        }
    }
    if !rep.staircase.levels.is_empty() {
        let levels: Vec<String> = rep.staircase.levels.iter().map(|l| format!("{l:.2}")).collect();
        let _ = writeln!(s, "  plateaus (ps): {}", levels.join(" -> "));
    }
    for c in rep.conditions.conditions.iter().filter(|c| !c.pass) {
        let _ = writeln!(s, "  condition {} broken: {}", c.name, c.first_counterexample.as_deref().unwrap_or(""));
    }
    for v in rep.monitor_violations.iter().take(5) {
        let _ = writeln!(s, "  monitor {:?} node {} at {}: {}", v.kind, v.node, format_time(v.time_fs), v.detail);
    }
    if let Some(fb) = &rep.fairbanks {
        let _ = writeln!(s, "  self-timed grid: max local {:.1} fs, max global {:.1} fs", fb.max_local_fs, fb.max_global_fs);
        if let (Some(t), Some(l), Some(c)) = (fb.spike_time_fs, fb.spike_local_fs, fb.conversion) {
            let _ = writeln!(s, "  post-swap local spike {l:.1} fs at {:.1} ps ({:.0}% of pre-swap global)", t / 1e3, c * 100.0);
        }
    }
    for w in &rep.warnings {
        let _ = writeln!(s, "  warning: {w}");
    }
    let _ = writeln!(s, "{}", if rep.outcome == Outcome::Pass { "PASS" } else { "FAIL" });
    s
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis: String,
    pub value: String,
    pub seed: u64,
    /// `PASS`, `FAIL` or `INVALID`.
    pub status: String,
    pub max_local_ps: Option<f64>,
    pub max_global_ps: Option<f64>,
    pub local_bound_ps: Option<f64>,
    pub global_bound_ps: Option<f64>,
    pub log_term: Option<u32>,
    pub tree_distance: Option<f64>,
    pub tree_skew_ps: Option<f64>,
    pub trace_hash: Option<String>,
    pub detail: Option<String>,
}

impl SweepRow {
    fn new(axis: SweepAxis, value: &str, seed: u64, status: &str) -> SweepRow {
        SweepRow {
            axis: axis_name(axis).to_string(),
            value: value.to_string(),
            seed,
            status: status.to_string(),
            max_local_ps: None,
            max_global_ps: None,
            local_bound_ps: None,
            global_bound_ps: None,
            log_term: None,
            tree_distance: None,
            tree_skew_ps: None,
            trace_hash: None,
            detail: None,
        }
    }
}

pub fn axis_name(a: SweepAxis) -> &'static str {
    match a {
        SweepAxis::W => "W",
        SweepAxis::Mu => "mu",
        SweepAxis::Rho => "rho",
        SweepAxis::Delta0 => "delta0",
        SweepAxis::U => "u",
    }
}

/// Sweep values as written in a config: numbers or unit strings.
pub fn sweep_values(values: &[toml::Value]) -> Result<Vec<String>, ConfigError> {
    values
        .iter()
        .map(|v| match v {
            toml::Value::String(s) => Ok(s.clone()),
            toml::Value::Integer(i) => Ok(i.to_string()),
            toml::Value::Float(f) => Ok(f.to_string()),
            other => Err(ConfigError::Sweep(format!("unsupported value {other}"))),
        })
        .collect()
}

fn sweep_point(base: &ScenarioSpec, axis: SweepAxis, value: &str, seed: u64) -> SweepRow {
    let mut spec = base.clone();
    spec.seed = seed;
    let mut row = SweepRow::new(axis, value, seed, "INVALID");
    if let Err(e) = apply_override(&mut spec, &format!("{}={value}", axis_name(axis))) {
        row.detail = Some(e.to_string());
        return row;
    }
    match execute(&spec) {
        Ok(r) => {
            let rep = &r.report;
            row.status = if rep.outcome == Outcome::Pass { "PASS" } else { "FAIL" }.to_string();
            row.max_local_ps = Some(rep.skews.max_local_ps);
            row.max_global_ps = Some(rep.skews.max_global_ps);
            row.local_bound_ps = Some(rep.bounds.local_bound as f64 / 1e3);
            row.global_bound_ps = Some(rep.bounds.global_bound as f64 / 1e3);
            row.log_term = Some(rep.bounds.log_term);
            row.trace_hash = Some(rep.trace_hash.clone());
        }
        Err(e) => row.detail = Some(e.to_string()),
    }
    row
}

/// One row per value and seed, computed on `threads` workers. Rows come
/// back in input order whatever the thread count.
pub fn cmd_sweep(
    base: &ScenarioSpec,
    axis: SweepAxis,
    values: &[String],
    seeds: &[u64],
    threads: usize,
) -> Result<Vec<SweepRow>, CliError> {
    if axis == SweepAxis::W {
        return Ok(values
            .iter()
            .map(|v| {
                let mut row = SweepRow::new(axis, v, base.seed, "INVALID");
                let w = match v.parse::<usize>() {
                    Ok(w) => w,
                    Err(e) => {
                        row.detail = Some(e.to_string());
                        return row;
                    }
                };
                match crossover(&base.params, &[w]) {
                    Ok(rows) => {
                        let c = rows[0];
                        row.status = "PASS".to_string();
                        row.local_bound_ps = Some(c.gcs_local_bound_fs as f64 / 1e3);
                        row.log_term = Some(c.log_term);
                        row.tree_distance = Some(c.tree_distance);
                        row.tree_skew_ps = Some(c.tree_skew_fs / 1e3);
                    }
                    Err(e) => row.detail = Some(e.to_string()),
                }
                row
            })
            .collect());
    }
    let seeds = if seeds.is_empty() { vec![base.seed] } else { seeds.to_vec() };
    let points: Vec<(&String, u64)> = values.iter().flat_map(|v| seeds.iter().map(move |&s| (v, s))).collect();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads.max(1)).build()?;
    Ok(pool.install(|| points.par_iter().map(|&(v, s)| sweep_point(base, axis, v, s)).collect()))
}

pub fn write_sweep_csv<W: std::io::Write>(rows: &[SweepRow], out: W) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn fmt_phase_ps(p: Phase) -> String {
    format!("{:.3} ps", p.as_ps_f64())
}

fn region_text(r: Region) -> String {
    match r {
        Region::Fast(s) => format!("FC (s={s})"),
        Region::Slow(s) => format!("SC (s={s})"),
        Region::Trigger(s) => format!("FT (s={s})"),
        Region::Neither => "neither".to_string(),
    }
}

/// Describes what node `node` sees at the last record at or before `time`.
pub fn cmd_explain(trace: &TraceSet, time: Fs, node: usize) -> Result<String, CliError> {
    let sc = &trace.meta.scenario;
    let p = &sc.params;
    let not_found = || CliError::Trace(TraceError::NotFound { time, node });
    if node >= sc.topology.node_count() || time > trace.meta.end_fs {
        return Err(not_found());
    }
    let snap = trace.snapshot_at(time).ok_or_else(not_found)?;
    let me = &snap[node];
    let exact = OffsetView::new(sc.topology.neighbors(node).iter().map(|&w| snap[w].l_phase - me.l_phase));
    // Latched words: the latest sample that has reached the controller.
    let latched_at = trace
        .samples
        .iter()
        .filter(|s| s.node == node && s.time_fs + p.t_meas <= time)
        .map(|s| s.time_fs)
        .max();
    let words: Vec<_> = trace.samples.iter().filter(|s| s.node == node && Some(s.time_fs) == latched_at).collect();
    let est = OffsetView::new(words.iter().map(|s| s.estimate));
    let delta = trace.meta.delta;
    let mut out = String::new();
    let _ = writeln!(out, "node {node} at {} (record at {})", format_time(time), format_time(me.time_fs));
    let _ = writeln!(out, "  L = {} fs, H = {} fs", me.l_phase, me.h_phase);
    let _ = writeln!(out, "  o_max = {}, o_min = {}", fmt_phase_ps(exact.max), fmt_phase_ps(exact.min));
    let fc = fast_condition(&exact, p.kappa, p.ell);
    let scw = slow_condition(&exact, p.kappa, p.ell);
    let _ = writeln!(out, "  exact: FC {:?}, SC {:?}", fc.s, scw.s);
    match latched_at {
        Some(t) => {
            let _ = writeln!(out, "  latched words (sampled at {}):", format_time(t));
            for s in &words {
                let _ = writeln!(out, "    neighbor {}: {}  estimate {}", s.neighbor, s.word, fmt_phase_ps(s.estimate));
            }
            let _ = writeln!(out, "  est_max = {}, est_min = {}", fmt_phase_ps(est.max), fmt_phase_ps(est.min));
        }
        None => {
            let _ = writeln!(out, "  no word latched yet; controller defaults to slow");
        }
    }
    if words.iter().any(|s| s.word.contains('M')) {
        let _ = writeln!(out, "  word contains M; md per policy {:?}", sc.m_policy);
    }
    let region = if latched_at.is_some() {
        classify(Some(&exact), &est, p.kappa, delta, p.ell)
    } else {
        classify(Some(&exact), &OffsetView::new([]), p.kappa, delta, p.ell)
    };
    let _ = writeln!(out, "  region: {}, md={}", region_text(region), me.md);
    Ok(out)
}

pub fn cmd_scenarios() -> String {
    let mut s = String::new();
    for name in BUILTIN_SCENARIOS {
        let spec = builtin_spec(name).expect("builtin");
        let phases: Vec<String> = spec.initial_phase.iter().map(|&p| format_time(p)).collect();
        let _ = writeln!(
            s,
            "{name:<22} {:?}, initial phases [{}], {}",
            spec.topology,
            phases.join(", "),
            format_time(spec.duration)
        );
    }
    s
}

/// Validation summary; invalid parameters are a config error.
pub fn cmd_check_params(spec: &ScenarioSpec) -> Result<String, CliError> {
    let topo = spec.topology.build().map_err(|e| ConfigError::from(gcs_core::scenario::ScenarioError::from(e)))?;
    let d = topo.diameter();
    let v = validate_params(&spec.params, d).map_err(|e| CliError::Engine(EngineError::Params(e)))?;
    let b = skew_bounds(&v, d);
    let mut s = String::new();
    let _ = writeln!(s, "parameters valid for diameter {d}");
    let _ = writeln!(s, "  delta = {}", format_time(derived_delta(&spec.params)));
    let _ = writeln!(s, "  T_max = {}", format_time(spec.params.t_max()));
    let _ = writeln!(s, "  perturbation budget = {}", format_time(spec.params.perturbation_budget()));
    let _ = writeln!(s, "  local bound = {} (log term {})", format_time(b.local_bound), b.log_term);
    let _ = writeln!(s, "  global bound = {}", format_time(b.global_bound));
    for w in v.warnings() {
        let _ = writeln!(s, "  warning: {w}");
    }
    Ok(s)
}
