//! TOML configuration. Every time quantity carries a unit (`"10ps"`,
//! `"1000ns"`); unknown keys are rejected.

use std::path::{Path, PathBuf};

use gcs_core::clocks::UnlockedPolicy;
use gcs_core::params::SystemParams;
use gcs_core::scenario::{
    builtin_spec, DelaySpec, DriftSpec, ForcedMode, MPolicy, MonitorMode, PerturbationSpec, ScenarioSpec, TopologySpec,
};
use gcs_core::time::{parse_time, Fs};
use gcs_core::tri::Tri;
use serde::{Deserialize, Deserializer};
use thiserror::Error;

/// Environment variable overriding the configured seed.
pub const SEED_ENV: &str = "GCSSIM_SEED";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Parse { path: PathBuf, source: Box<toml::de::Error> },
    #[error("override {0:?} is not of the form key=value")]
    OverrideSyntax(String),
    #[error("unknown override key {0:?}")]
    OverrideKey(String),
    #[error("override {key}: {msg}")]
    OverrideValue { key: String, msg: String },
    #[error("{0}")]
    Scenario(#[from] gcs_core::scenario::ScenarioError),
    #[error("a seed is required because {0} is randomized (set scenario.seed or {SEED_ENV})")]
    SeedRequired(&'static str),
    #[error("{SEED_ENV}={0:?} is not an unsigned integer")]
    SeedEnv(String),
    #[error("scenario needs a topology and initial phases, or a builtin base")]
    Incomplete,
    #[error("sweep: {0}")]
    Sweep(String),
}

/// A time quantity with a mandatory unit.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Time(pub Fs);

impl<'de> Deserialize<'de> for Time {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Time, D::Error> {
        let s = String::deserialize(d)?;
        parse_time(&s).map(Time).map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsSection {
    pub rho: Option<f64>,
    pub mu: Option<f64>,
    pub kappa: Option<Time>,
    pub delta0: Option<Time>,
    pub epsilon: Option<Time>,
    pub ell: Option<u32>,
    pub d: Option<Time>,
    pub u: Option<Time>,
    pub t_clk: Option<Time>,
    pub t_osc: Option<Time>,
    pub t_meas: Option<Time>,
    pub t_ctr: Option<Time>,
    pub buffered: Option<bool>,
}

impl ParamsSection {
    fn apply(&self, p: &mut SystemParams) {
        macro_rules! set {
            ($($f:ident),*) => { $( if let Some(v) = self.$f { p.$f = v.into_value(); } )* };
        }
        set!(rho, mu, kappa, delta0, epsilon, ell, d, u, t_clk, t_osc, t_meas, t_ctr, buffered);
    }
}

trait IntoValue<T> {
    fn into_value(self) -> T;
}

impl IntoValue<Fs> for Time {
    fn into_value(self) -> Fs {
        self.0
    }
}

macro_rules! identity_value {
    ($($t:ty),*) => { $( impl IntoValue<$t> for $t { fn into_value(self) -> $t { self } } )* };
}
identity_value!(f64, u32, bool);

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TopologySection {
    Line { size: usize },
    Ring { size: usize },
    Grid { width: usize, height: usize },
    Custom { size: usize, edges: Vec<(usize, usize)> },
}

impl From<&TopologySection> for TopologySpec {
    fn from(t: &TopologySection) -> TopologySpec {
        match t {
            TopologySection::Line { size } => TopologySpec::Line { size: *size },
            TopologySection::Ring { size } => TopologySpec::Ring { size: *size },
            TopologySection::Grid { width, height } => TopologySpec::Grid { width: *width, height: *height },
            TopologySection::Custom { size, edges } => TopologySpec::Custom { size: *size, edges: edges.clone() },
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DriftSection {
    Nominal {},
    SeededConstant {},
    SeededPiecewise { interval: Time },
    Explicit { ppb: Vec<i64> },
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DelaySection {
    Max {},
    Min {},
    SeededConstant {},
    SeededPiecewise {
        interval: Time,
    },
    FastSlow {
        fast: Vec<usize>,
        #[serde(default)]
        switch: Vec<usize>,
        at: Option<Time>,
    },
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PerturbationSection {
    Zero {},
    Fixed { value: Time },
    SeededRandom {},
    AdversarialExtremes {},
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForcedModeSection {
    pub node: usize,
    pub from: Time,
    pub md: Tri,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    /// Start from a builtin scenario and override the keys given here.
    pub builtin: Option<String>,
    pub name: Option<String>,
    pub initial_phase: Option<Vec<Time>>,
    pub drift: Option<DriftSection>,
    pub delays: Option<DelaySection>,
    pub perturbation: Option<PerturbationSection>,
    pub m_policy: Option<MPolicy>,
    pub unlocked: Option<UnlockedPolicy>,
    pub duration: Option<Time>,
    pub seed: Option<u64>,
    pub monitors: Option<MonitorMode>,
    #[serde(default)]
    pub forced_modes: Vec<ForcedModeSection>,
    pub allow_inadmissible_delays: Option<bool>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
    pub stride: Option<Time>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepAxis {
    #[serde(rename = "W")]
    W,
    Mu,
    Rho,
    Delta0,
    U,
}

impl std::str::FromStr for SweepAxis {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<SweepAxis, ConfigError> {
        Ok(match s {
            "W" | "w" => SweepAxis::W,
            "mu" => SweepAxis::Mu,
            "rho" => SweepAxis::Rho,
            "delta0" => SweepAxis::Delta0,
            "u" | "U" => SweepAxis::U,
            _ => return Err(ConfigError::Sweep(format!("unknown axis {s:?} (W, mu, rho, delta0, u)"))),
        })
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub axis: SweepAxis,
    /// Numbers for `W`, `mu` and `rho`; unit strings for `delta0` and `u`.
    pub values: Vec<toml::Value>,
    #[serde(default)]
    pub seeds: Vec<u64>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default)]
    pub params: ParamsSection,
    pub topology: Option<TopologySection>,
    #[serde(default)]
    pub scenario: ScenarioSection,
    #[serde(default)]
    pub output: OutputSection,
    pub sweep: Option<SweepSection>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<ConfigFile, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.into(), source })?;
        ConfigFile::parse(&text, path)
    }

    pub fn parse(text: &str, path: &Path) -> Result<ConfigFile, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse { path: path.into(), source: Box::new(e) })
    }

    /// Config equivalent to `--scenario NAME`.
    pub fn builtin(name: &str) -> ConfigFile {
        ConfigFile {
            scenario: ScenarioSection { builtin: Some(name.to_string()), ..ScenarioSection::default() },
            ..ConfigFile::default()
        }
    }

    /// Builds the scenario. `env_seed` is the raw value of [`SEED_ENV`].
    pub fn to_spec(&self, env_seed: Option<&str>) -> Result<ScenarioSpec, ConfigError> {
        let sc = &self.scenario;
        let base = sc.builtin.as_deref().map(builtin_spec).transpose()?;
        let from_builtin = base.is_some();
        let mut spec = match base {
            Some(b) => b,
            None => {
                let (Some(topo), Some(phases)) = (&self.topology, &sc.initial_phase) else {
                    return Err(ConfigError::Incomplete);
                };
                ScenarioSpec::new("custom", topo.into(), phases.iter().map(|t| t.0).collect())
            }
        };
        if let Some(t) = &self.topology {
            spec.topology = t.into();
        }
        if let Some(p) = &sc.initial_phase {
            spec.initial_phase = p.iter().map(|t| t.0).collect();
        }
        self.params.apply(&mut spec.params);
        if let Some(n) = &sc.name {
            spec.name = n.clone();
        }
        if let Some(d) = &sc.drift {
            spec.drift = match d {
                DriftSection::Nominal {} => DriftSpec::Nominal,
                DriftSection::SeededConstant {} => DriftSpec::SeededConstant,
                DriftSection::SeededPiecewise { interval } => DriftSpec::SeededPiecewise { interval: interval.0 },
                DriftSection::Explicit { ppb } => DriftSpec::Explicit { ppb: ppb.clone() },
            };
        }
        if let Some(d) = &sc.delays {
            spec.delays = match d {
                DelaySection::Max {} => DelaySpec::Max,
                DelaySection::Min {} => DelaySpec::Min,
                DelaySection::SeededConstant {} => DelaySpec::SeededConstant,
                DelaySection::SeededPiecewise { interval } => DelaySpec::SeededPiecewise { interval: interval.0 },
                DelaySection::FastSlow { fast, switch, at } => {
                    DelaySpec::FastSlow { fast: fast.clone(), switch: switch.clone(), at: at.map(|t| t.0) }
                }
            };
        }
        if let Some(p) = &sc.perturbation {
            spec.perturbation = match p {
                PerturbationSection::Zero {} => PerturbationSpec::Zero,
                PerturbationSection::Fixed { value } => PerturbationSpec::Fixed { value: value.0 },
                PerturbationSection::SeededRandom {} => PerturbationSpec::SeededRandom,
                PerturbationSection::AdversarialExtremes {} => PerturbationSpec::AdversarialExtremes,
            };
        }
        if let Some(m) = sc.m_policy {
            spec.m_policy = m;
        }
        if let Some(u) = sc.unlocked {
            spec.unlocked = u;
        }
        if let Some(d) = sc.duration {
            spec.duration = d.0;
        }
        if let Some(m) = sc.monitors {
            spec.monitors = m;
        }
        if let Some(s) = self.output.stride {
            spec.stride = s.0;
        }
        if !sc.forced_modes.is_empty() {
            spec.faults.forced_modes =
                sc.forced_modes.iter().map(|f| ForcedMode { node: f.node, from: f.from.0, md: f.md }).collect();
        }
        if let Some(a) = sc.allow_inadmissible_delays {
            spec.faults.allow_inadmissible_delays = a;
        }
        let env = env_seed.map(|s| s.trim().parse::<u64>().map_err(|_| ConfigError::SeedEnv(s.to_string()))).transpose()?;
        match (env, sc.seed) {
            (Some(s), _) | (None, Some(s)) => spec.seed = s,
            (None, None) if !from_builtin => {
                if let Some(what) = randomized_part(&spec) {
                    return Err(ConfigError::SeedRequired(what));
                }
            }
            _ => {}
        }
        Ok(spec)
    }
}

fn randomized_part(s: &ScenarioSpec) -> Option<&'static str> {
    if matches!(s.drift, DriftSpec::SeededConstant | DriftSpec::SeededPiecewise { .. }) {
        Some("drift")
    } else if matches!(s.delays, DelaySpec::SeededConstant | DelaySpec::SeededPiecewise { .. }) {
        Some("delays")
    } else if s.perturbation == PerturbationSpec::SeededRandom {
        Some("perturbation")
    } else if s.m_policy == MPolicy::SeededRandom {
        Some("m_policy")
    } else if s.unlocked == UnlockedPolicy::SeededRandom {
        Some("unlocked")
    } else {
        None
    }
}

fn override_err(key: &str, msg: impl ToString) -> ConfigError {
    ConfigError::OverrideValue { key: key.to_string(), msg: msg.to_string() }
}

/// Applies a `key=value` override from the command line.
pub fn apply_override(spec: &mut ScenarioSpec, kv: &str) -> Result<(), ConfigError> {
    let (key, value) = kv.split_once('=').ok_or_else(|| ConfigError::OverrideSyntax(kv.to_string()))?;
    let (key, value) = (key.trim(), value.trim());
    let time = || parse_time(value).map_err(|e| override_err(key, e));
    let float = || value.parse::<f64>().map_err(|e| override_err(key, e));
    let p = &mut spec.params;
    match key {
        "rho" => p.rho = float()?,
        "mu" => p.mu = float()?,
        "kappa" => p.kappa = time()?,
        "delta0" => p.delta0 = time()?,
        "epsilon" => p.epsilon = time()?,
        "ell" => p.ell = value.parse().map_err(|e| override_err(key, e))?,
        "d" => p.d = time()?,
        "u" => p.u = time()?,
        "t_clk" => p.t_clk = time()?,
        "t_osc" => p.t_osc = time()?,
        "t_meas" => p.t_meas = time()?,
        "t_ctr" => p.t_ctr = time()?,
        "buffered" => p.buffered = value.parse().map_err(|e| override_err(key, e))?,
        "seed" => spec.seed = value.parse().map_err(|e| override_err(key, e))?,
        "duration" => spec.duration = time()?,
        "stride" => spec.stride = time()?,
        "m_policy" | "unlocked" | "monitors" => {
            let v = toml::Value::String(value.to_string());
            let bad = |e: toml::de::Error| override_err(key, e);
            match key {
                "m_policy" => spec.m_policy = v.try_into().map_err(bad)?,
                "unlocked" => spec.unlocked = v.try_into().map_err(bad)?,
                _ => spec.monitors = v.try_into().map_err(bad)?,
            }
        }
        _ => return Err(ConfigError::OverrideKey(key.to_string())),
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use gcs_core::time::{ns, ps};

    fn parse(s: &str) -> Result<ConfigFile, ConfigError> {
        ConfigFile::parse(s, Path::new("test.toml"))
    }

    #[test]
    fn full_config() {
        let c = parse(
            r#"
            [params]
            kappa = "12ps"
            mu = 2e-4
            [topology]
            kind = "ring"
            size = 5
            [scenario]
            initial_phase = ["0ps", "1ps", "2ps", "3ps", "4.5ps"]
            drift = { kind = "seeded-piecewise", interval = "10ns" }
            delays = { kind = "max" }
            perturbation = { kind = "fixed", value = "500fs" }
            duration = "50ns"
            seed = 7
            monitors = "record"
            forced_modes = [{ node = 1, from = "2ns", md = "1" }]
            [output]
            stride = "200ps"
            "#,
        )
        .unwrap();
        let s = c.to_spec(None).unwrap();
        assert_eq!(s.params.kappa, ps(12));
        assert_eq!(s.initial_phase[4], 4_500);
        assert_eq!(s.duration, ns(50));
        assert_eq!(s.stride, ps(200));
        assert_eq!(s.seed, 7);
        assert_eq!(s.faults.forced_modes[0].md, Tri::One);
        assert!(s.resolve().is_ok());
    }

    #[test]
    fn unknown_keys_rejected() {
        let e = parse("[params]\nkapa = \"10ps\"\n").unwrap_err().to_string();
        assert!(e.contains("kapa"), "{e}");
        assert!(e.contains("line 2"), "{e}");
        assert!(parse("[scenario]\ndrift = { kind = \"nominal\", extra = 1 }\n").is_err());
    }

    #[test]
    fn units_mandatory() {
        let e = parse("[params]\nkappa = \"10\"\n").unwrap_err().to_string();
        assert!(e.contains("no unit"), "{e}");
        assert!(parse("[params]\nkappa = 10\n").is_err());
    }

    #[test]
    fn seed_required_for_random_policies() {
        let text = "[topology]\nkind = \"line\"\nsize = 2\n[scenario]\ninitial_phase = [\"0ps\", \"0ps\"]\n";
        let c = parse(text).unwrap();
        assert!(matches!(c.to_spec(None), Err(ConfigError::SeedRequired("drift"))));
        assert_eq!(c.to_spec(Some("9")).unwrap().seed, 9);
        assert!(matches!(c.to_spec(Some("x")), Err(ConfigError::SeedEnv(_))));
        let fixed = format!(
            "{text}drift = {{ kind = \"nominal\" }}\ndelays = {{ kind = \"min\" }}\nperturbation = {{ kind = \"zero\" }}\nunlocked = \"pin-low\"\n"
        );
        assert!(parse(&fixed).unwrap().to_spec(None).is_ok());
    }

    #[test]
    fn builtin_base_with_env_seed() {
        let c = ConfigFile::builtin("ahead");
        assert_eq!(c.to_spec(None).unwrap(), builtin_spec("ahead").unwrap());
        assert_eq!(c.to_spec(Some("42")).unwrap().seed, 42);
    }

    #[test]
    fn overrides() {
        let mut s = builtin_spec("ahead").unwrap();
        apply_override(&mut s, "mu=2e-5").unwrap();
        apply_override(&mut s, "kappa = 12ps").unwrap();
        apply_override(&mut s, "monitors=off").unwrap();
        assert_eq!((s.params.mu, s.params.kappa, s.monitors), (2e-5, ps(12), MonitorMode::Off));
        assert!(matches!(apply_override(&mut s, "bogus=1"), Err(ConfigError::OverrideKey(_))));
        assert!(matches!(apply_override(&mut s, "kappa=12"), Err(ConfigError::OverrideValue { .. })));
        assert!(matches!(apply_override(&mut s, "kappa"), Err(ConfigError::OverrideSyntax(_))));
    }
}
