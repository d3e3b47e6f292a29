use std::path::Path;
use std::process::Command;

use gcs_core::analytics::skews;
use gcs_core::scenario::builtin_spec;
use gcs_core::time::{ns, ps};
use gcs_core::trace::TraceSet;
use gcssim::config::{ConfigFile, SweepAxis};
use gcssim::report::Outcome;
use gcssim::{cmd_explain, cmd_run, cmd_sweep, execute, load_spec, EXIT_CONFIG, EXIT_FAIL, EXIT_PASS};

fn gcssim(args: &[&str], env_seed: Option<&str>) -> (i32, String, String) {
    let mut c = Command::new(env!("CARGO_BIN_EXE_gcssim"));
    c.args(args).env_remove("GCSSIM_SEED");
    if let Some(s) = env_seed {
        c.env("GCSSIM_SEED", s);
    }
    let o = c.output().unwrap();
    (o.status.code().unwrap(), String::from_utf8_lossy(&o.stdout).into(), String::from_utf8_lossy(&o.stderr).into())
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn run_builtin_passes_and_writes_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ahead");
    let (code, stdout, _) = gcssim(&["run", "--scenario", "ahead", "--out", out.to_str().unwrap()], None);
    assert_eq!(code, EXIT_PASS, "{stdout}");
    assert!(stdout.trim_end().ends_with("PASS"));
    for f in ["meta.json", "nodes.csv", "edges.csv", "samples.csv", "report.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let header = std::fs::read_to_string(out.join("nodes.csv")).unwrap();
    assert!(header.starts_with("time_fs,node,l_phase,h_phase,md\n"));
}

#[test]
fn constraint_violation_is_a_config_error() {
    let (code, _, stderr) = gcssim(&["run", "--scenario", "ahead", "--set", "mu=2e-5"], None);
    assert_eq!(code, EXIT_CONFIG);
    assert!(stderr.contains("mu>2rho"), "{stderr}");
    let (code, _, _) = gcssim(&["check-params", "--scenario", "ahead", "--set", "delta0=6ps"], None);
    assert_eq!(code, EXIT_CONFIG);
}

#[test]
fn config_errors_name_the_key_and_line() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "bad.toml", "[scenario]\nbuiltin = \"ahead\"\n[params]\nkapa = \"10ps\"\n");
    let (code, _, stderr) = gcssim(&["run", &p], None);
    assert_eq!(code, EXIT_CONFIG);
    assert!(stderr.contains("kapa") && stderr.contains("line 4"), "{stderr}");
}

#[test]
fn broken_contract_fails_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(
        dir.path(),
        "stuck.toml",
        "[scenario]\nbuiltin = \"ahead\"\nduration = \"20ns\"\nforced_modes = [{ node = 0, from = \"0ps\", md = \"0\" }]\n",
    );
    let out = dir.path().join("out");
    let (code, stdout, _) = gcssim(&["run", &p, "--out", out.to_str().unwrap()], None);
    assert_eq!(code, EXIT_FAIL, "{stdout}");
    let tr = TraceSet::read_dir(&out).unwrap();
    assert!(tr.meta.aborted);
    assert!(!tr.violations.is_empty());
}

#[test]
fn seed_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let base = dir.path().join("a");
    let other = dir.path().join("b");
    let args = |o: &Path| vec!["run".to_string(), "--scenario".into(), "ahead".into(), "--set".into(), "duration=20ns".into(), "--out".into(), o.to_str().unwrap().into()];
    let a: Vec<String> = args(&base);
    let b: Vec<String> = args(&other);
    gcssim(&a.iter().map(String::as_str).collect::<Vec<_>>(), None);
    gcssim(&b.iter().map(String::as_str).collect::<Vec<_>>(), Some("99"));
    let ta = TraceSet::read_dir(&base).unwrap();
    let tb = TraceSet::read_dir(&other).unwrap();
    assert_eq!(ta.meta.scenario.seed, 1);
    assert_eq!(tb.meta.scenario.seed, 99);
    assert_ne!(ta.hash(), tb.hash());
}

#[test]
fn scenarios_lists_builtins() {
    let (code, stdout, _) = gcssim(&["scenarios"], None);
    assert_eq!(code, EXIT_PASS);
    for n in gcs_core::scenario::BUILTIN_SCENARIOS {
        assert!(stdout.contains(n));
    }
}

#[test]
fn skew_report_survives_the_round_trip() {
    let mut spec = builtin_spec("gradient").unwrap();
    spec.duration = ns(100);
    let dir = tempfile::tempdir().unwrap();
    let r = cmd_run(&spec, Some(dir.path())).unwrap();
    let back = TraceSet::read_dir(dir.path()).unwrap();
    assert_eq!(skews(&back, &r.scenario.topology), skews(&r.trace, &r.scenario.topology));
    assert_eq!(back.hash(), r.report.trace_hash);
}

#[test]
fn report_matches_published_schema() {
    let schema: serde_json::Value =
        serde_json::from_str(include_str!("../../../docs/report.schema.json")).unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    let mut short = builtin_spec("ahead").unwrap();
    short.duration = ns(10);
    for spec in [builtin_spec("gradient").unwrap(), builtin_spec("fairbanks-swap").unwrap(), short] {
        let r = execute(&spec).unwrap();
        let v = serde_json::to_value(&r.report).unwrap();
        let errors: Vec<String> = validator.iter_errors(&v).map(|e| e.to_string()).collect();
        assert!(errors.is_empty(), "{}: {errors:?}", spec.name);
    }
}

#[test]
fn gradient_report_passes_and_fairbanks_swap_marks_spike() {
    let r = execute(&builtin_spec("gradient").unwrap()).unwrap();
    assert_eq!(r.report.outcome, Outcome::Pass);
    assert!(r.report.bound_check.suffix_max_local.as_ps_f64() <= 20.0);
    let r = execute(&builtin_spec("fairbanks-swap").unwrap()).unwrap();
    let fb = r.report.fairbanks.unwrap();
    let (t, l) = (fb.spike_time_fs.unwrap(), fb.spike_local_fs.unwrap());
    assert!(t >= ns(50) as f64 && t < ns(60) as f64);
    assert!(l > fb.pre_swap_global_fs.unwrap() * 0.7);
}

#[test]
fn single_value_sweep_equals_run() {
    let mut spec = builtin_spec("behind").unwrap();
    spec.duration = ns(30);
    let run = execute(&spec).unwrap();
    let rows = cmd_sweep(&spec, SweepAxis::Mu, &["1e-4".into()], &[], 1).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].trace_hash.as_deref(), Some(run.report.trace_hash.as_str()));
}

#[test]
fn sweep_marks_rows_past_constraints_invalid() {
    let mut spec = builtin_spec("ahead").unwrap();
    spec.duration = ns(5);
    let vals: Vec<String> = ["3ps", "4ps", "4.858ps", "4.859ps", "6ps"].map(String::from).to_vec();
    let rows = cmd_sweep(&spec, SweepAxis::Delta0, &vals, &[], 2).unwrap();
    let status: Vec<&str> = rows.iter().map(|r| r.status.as_str()).collect();
    assert!(status[..3].iter().all(|s| *s != "INVALID"), "{status:?}");
    assert_eq!(&status[3..], ["INVALID", "INVALID"]);
}

#[test]
fn tree_sweep_shows_linear_against_logarithmic() {
    let spec = builtin_spec("ahead").unwrap();
    let vals: Vec<String> = ["2", "4", "8", "16", "32"].map(String::from).to_vec();
    let rows = cmd_sweep(&spec, SweepAxis::W, &vals, &[], 1).unwrap();
    let tree: Vec<f64> = rows.iter().map(|r| r.tree_skew_ps.unwrap()).collect();
    assert!(tree.windows(2).all(|w| w[1] > w[0]));
    let gcs: Vec<f64> = rows.iter().map(|r| r.local_bound_ps.unwrap()).collect();
    assert_eq!(gcs, [20.0, 20.0, 30.0, 30.0, 30.0]);
}

#[test]
fn explain_synchronized_node() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(
        dir.path(),
        "sync.toml",
        "[topology]\nkind = \"line\"\nsize = 3\n[scenario]\ninitial_phase = [\"0ps\", \"0ps\", \"0ps\"]\nduration = \"10ns\"\ndrift = { kind = \"nominal\" }\ndelays = { kind = \"max\" }\nperturbation = { kind = \"zero\" }\nunlocked = \"pin-low\"\n",
    );
    let spec = load_spec(&ConfigFile::load(Path::new(&p)).unwrap(), &[], None).unwrap();
    let r = execute(&spec).unwrap();
    let text = cmd_explain(&r.trace, ns(5), 1).unwrap();
    assert!(text.contains("region: SC (s=0), md=0"), "{text}");
    assert!(cmd_explain(&r.trace, ns(11), 1).is_err());
    assert!(cmd_explain(&r.trace, ns(5), 3).is_err());
}

#[test]
fn explain_finds_trigger_and_metastable_words() {
    let r = execute(&builtin_spec("gradient").unwrap()).unwrap();
    let tr = &r.trace;
    let t_meas = r.scenario.params.t_meas;
    let mut trigger = false;
    let mut t = ps(100);
    while t < ns(400) && !trigger {
        for v in 0..4 {
            let text = cmd_explain(tr, t, v).unwrap();
            trigger |= text.contains("region: FT (s=") && text.contains("md=1");
        }
        t += ps(100);
    }
    assert!(trigger);
    let meta = tr.samples.iter().find(|s| s.word.contains('M')).expect("some word is unresolved");
    let text = cmd_explain(tr, meta.time_fs + t_meas, meta.node).unwrap();
    assert!(text.contains("word contains M"), "{text}");
}
