//! Run report written as `report.json`; its schema is
//! `docs/report.schema.json`.

use gcs_core::analytics::{
    check_bounds, skews, staircase, verify_implementation, BoundViolation, ConditionReport, SkewReport, Staircase,
    Verdict,
};
use gcs_core::baselines::fairbanks::{fairbanks_swap_experiment, FairbanksError, FairbanksNet, SWAP_WINDOW};
use gcs_core::params::{SkewBounds, SystemParams};
use gcs_core::scenario::Scenario;
use gcs_core::time::{Fs, Phase};
use gcs_core::trace::{TraceSet, Violation};
use serde::{Deserialize, Serialize};

pub const REPORT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    #[serde(rename = "PASS")]
    Pass,
    #[serde(rename = "FAIL")]
    Fail,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkewSummary {
    pub max_local: Phase,
    pub max_global: Phase,
    pub max_local_ps: f64,
    pub max_global_ps: f64,
    /// Maximum local skew over the last quarter of the run.
    pub final_quarter_max_local_ps: f64,
    pub stabilization_time_fs: Option<Fs>,
    pub theoretical_stabilization_fs: f64,
    pub first_bound_violation: Option<BoundViolation>,
}

/// Post-swap spike of the self-timed grid comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FairbanksSummary {
    pub tick_counts: Vec<usize>,
    pub max_local_fs: f64,
    pub max_global_fs: f64,
    pub swap_time_fs: Option<Fs>,
    pub pre_swap_global_fs: Option<f64>,
    pub post_swap_local_fs: Option<f64>,
    pub conversion: Option<f64>,
    /// Time and size of the largest local skew after the swap.
    pub spike_time_fs: Option<f64>,
    pub spike_local_fs: Option<f64>,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub version: u32,
    pub scenario: String,
    pub outcome: Outcome,
    pub seed: u64,
    pub trace_hash: String,
    pub params: SystemParams,
    pub node_count: usize,
    pub diameter: u32,
    pub duration_fs: Fs,
    pub end_fs: Fs,
    pub delta_fs: Fs,
    pub c1_held: bool,
    pub bounds: SkewBounds,
    pub skews: SkewSummary,
    pub bound_check: Verdict,
    pub staircase: Staircase,
    pub conditions: ConditionReport,
    pub monitor_violations: Vec<Violation>,
    pub aborted: bool,
    pub warnings: Vec<String>,
    pub fairbanks: Option<FairbanksSummary>,
}

pub fn fairbanks_summary(sc: &Scenario) -> Result<Option<FairbanksSummary>, FairbanksError> {
    let Some(setup) = &sc.fairbanks else { return Ok(None) };
    if let Some(swap) = setup.swaps.first() {
        let r = fairbanks_swap_experiment(setup, swap.at)?;
        let (t, w) = (swap.at as f64, SWAP_WINDOW as f64);
        let spike = r
            .trace
            .samples
            .iter()
            .filter(|s| s.time_fs >= t && s.time_fs < t + w)
            .max_by(|a, b| a.local_fs.total_cmp(&b.local_fs));
        Ok(Some(FairbanksSummary {
            tick_counts: r.trace.tick_counts(),
            max_local_fs: r.trace.max_local(0.0, f64::MAX),
            max_global_fs: r.trace.max_global(0.0, f64::MAX),
            swap_time_fs: Some(swap.at),
            pre_swap_global_fs: Some(r.pre_global_fs),
            post_swap_local_fs: Some(r.post_local_fs),
            conversion: Some(r.conversion),
            spike_time_fs: spike.map(|s| s.time_fs),
            spike_local_fs: spike.map(|s| s.local_fs),
            warnings: r.trace.warnings.clone(),
        }))
    } else {
        let tr = FairbanksNet::new(setup.clone())?.run()?;
        Ok(Some(FairbanksSummary {
            tick_counts: tr.tick_counts(),
            max_local_fs: tr.max_local(0.0, f64::MAX),
            max_global_fs: tr.max_global(0.0, f64::MAX),
            swap_time_fs: None,
            pre_swap_global_fs: None,
            post_swap_local_fs: None,
            conversion: None,
            spike_time_fs: None,
            spike_local_fs: None,
            warnings: tr.warnings.clone(),
        }))
    }
}

pub fn summarize(r: &SkewReport, end: Fs) -> SkewSummary {
    SkewSummary {
        max_local: r.max_local,
        max_global: r.max_global,
        max_local_ps: r.max_local.as_ps_f64(),
        max_global_ps: r.max_global.as_ps_f64(),
        final_quarter_max_local_ps: r.max_local_from(end - end / 4).as_ps_f64(),
        stabilization_time_fs: r.stabilization_time,
        theoretical_stabilization_fs: r.theoretical_stabilization_fs,
        first_bound_violation: r.violations.first().copied(),
    }
}

pub fn build_report(sc: &Scenario, trace: &TraceSet, fairbanks: Option<FairbanksSummary>) -> Report {
    let sk = skews(trace, &sc.topology);
    let verdict = check_bounds(&sk, &sk.bounds, sc.c1_held());
    let conditions = verify_implementation(trace, &sc.params);
    let ok = verdict.pass && conditions.passed() && trace.violations.is_empty() && !trace.meta.aborted;
    Report {
        version: REPORT_VERSION,
        scenario: sc.name.clone(),
        outcome: if ok { Outcome::Pass } else { Outcome::Fail },
        seed: sc.seed,
        trace_hash: trace.hash(),
        params: sc.params.clone(),
        node_count: sc.topology.node_count(),
        diameter: sc.topology.diameter(),
        duration_fs: sc.duration,
        end_fs: trace.meta.end_fs,
        delta_fs: trace.meta.delta,
        c1_held: sc.c1_held(),
        bounds: sk.bounds,
        skews: summarize(&sk, trace.meta.end_fs),
        bound_check: verdict,
        staircase: staircase(&sk, sc.params.kappa),
        conditions,
        monitor_violations: trace.violations.clone(),
        aborted: trace.meta.aborted,
        warnings: trace.meta.warnings.clone(),
        fairbanks,
    }
}
