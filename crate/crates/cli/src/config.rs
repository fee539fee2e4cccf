use std::fmt;
use std::path::{Path, PathBuf};

use parares::classical::AveragedModel;
use parares::ode::Method;
use parares::params::{DimensionlessParams, OscillatorParams, TeffConvention};
use parares::quantum::IntegratorConfig;
use parares::theory::ScalingCoefficients;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    PlcRun,
    ParRun,
    ClassicalEnsemble,
    AveragedEnsemble,
    WignerSnapshot,
    Scurve,
    #[serde(rename = "threshold-vs-T")]
    ThresholdVsT,
    #[serde(rename = "threshold-vs-P2")]
    ThresholdVsP2,
    TheoryTable,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::PlcRun => "plc-run",
            Self::ParRun => "par-run",
            Self::ClassicalEnsemble => "classical-ensemble",
            Self::AveragedEnsemble => "averaged-ensemble",
            Self::WignerSnapshot => "wigner-snapshot",
            Self::Scurve => "scurve",
            Self::ThresholdVsT => "threshold-vs-T",
            Self::ThresholdVsP2 => "threshold-vs-P2",
            Self::TheoryTable => "theory-table",
        }
    }

    pub fn is_stochastic(self) -> bool {
        matches!(self, Self::ClassicalEnsemble | Self::AveragedEnsemble)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
    Bin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    Classical,
    Quantum,
    Averaged,
}

impl Model {
    pub fn name(self) -> &'static str {
        match self {
            Self::Classical => "classical",
            Self::Quantum => "quantum",
            Self::Averaged => "averaged",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AveragedVariant {
    #[default]
    Derived,
    Printed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WignerSource {
    Fock,
    Plc,
    Par,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsSection {
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub epsilon: Option<f64>,
    pub p1: Option<f64>,
    pub p2: Option<f64>,
    /// Sweep start in slow time; `-10` when unset.
    pub tau0: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThermalSection {
    pub temperature: Option<f64>,
    #[serde(default)]
    pub convention: TeffConvention,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSection {
    pub n_traj: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSection {
    pub method: Option<Method>,
    pub n_levels: Option<usize>,
    pub rel_tol: Option<f64>,
    pub abs_tol: Option<f64>,
    /// Initial (adaptive) or fixed (RK4) step of the quantum integrator.
    pub step: Option<f64>,
    /// Stored-sample spacing in slow time.
    pub sample_stride: Option<f64>,
    pub truncation_guard: Option<f64>,
    /// Fixed RK4 step of the classical integrator, lab time.
    pub classical_step: Option<f64>,
    /// Fixed step of the averaged system, slow time.
    pub averaged_step: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub tau_final: Option<f64>,
    pub model: Option<Model>,
    pub models: Option<Vec<Model>>,
    #[serde(default)]
    pub averaged_model: AveragedVariant,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanSection {
    pub drives: Option<Vec<f64>>,
    pub lo: Option<f64>,
    pub hi: Option<f64>,
    pub points: Option<usize>,
    /// Drive axis for quantum/averaged scans: `p1` (default) or `epsilon`.
    pub axis: Option<String>,
    pub temperatures: Option<Vec<f64>>,
    pub p2_values: Option<Vec<f64>>,
    pub max_widen: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WignerSection {
    pub state: Option<WignerSource>,
    pub n: Option<usize>,
    pub tau: Option<f64>,
    pub n_x: Option<usize>,
    pub half_width: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TheorySection {
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub kappa0: Option<f64>,
    pub kappa1: Option<f64>,
    pub p2_values: Option<Vec<f64>>,
    pub temperatures: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
    pub format: Option<Format>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default)]
    pub parameters: ParamsSection,
    #[serde(default)]
    pub thermal: ThermalSection,
    #[serde(default)]
    pub ensemble: EnsembleSection,
    #[serde(default)]
    pub integrator: IntegratorSection,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub scan: ScanSection,
    #[serde(default)]
    pub wigner: WignerSection,
    #[serde(default)]
    pub theory: TheorySection,
    #[serde(default)]
    pub output: OutputSection,
}

/// A configuration problem, optionally tied to a line of the source file.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub origin: String,
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "{}:{}: {}", self.origin, l, self.message),
            None => write!(f, "{}: {}", self.origin, self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

/// Raw TOML document with the text it came from, for error locations.
#[derive(Debug, Clone)]
pub struct ConfigSource {
    pub origin: String,
    pub text: String,
    pub table: toml::Table,
    /// Keys set from the command line, in order.
    pub overrides: Vec<String>,
}

fn line_of_offset(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

impl ConfigSource {
    pub fn from_str(origin: &str, text: &str) -> Result<Self, ConfigError> {
        let table: toml::Table = toml::from_str(text).map_err(|e| ConfigError {
            origin: origin.to_string(),
            line: e.span().map(|s| line_of_offset(text, s.start)),
            message: e.message().to_string(),
        })?;
        Ok(Self {
            origin: origin.to_string(),
            text: text.to_string(),
            table,
            overrides: Vec::new(),
        })
    }

    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let origin = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
            origin: origin.clone(),
            line: None,
            message: format!("cannot read config: {e}"),
        })?;
        Self::from_str(&origin, &text)
    }

    /// An in-memory document holding only `experiment = <kind>`.
    pub fn bare(kind: ExperimentKind) -> Self {
        let mut table = toml::Table::new();
        table.insert("experiment".into(), toml::Value::String(kind.name().into()));
        Self {
            origin: "<defaults>".into(),
            text: String::new(),
            table,
            overrides: Vec::new(),
        }
    }

    /// Applies `section.key=value`; the value is read as TOML, falling back
    /// to a plain string.
    pub fn set(&mut self, assignment: &str) -> Result<(), ConfigError> {
        let err = |message: String| ConfigError {
            origin: format!("--set {assignment}"),
            line: None,
            message,
        };
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| err("expected key=value".into()))?;
        let key = resolve_alias(key.trim());
        let value = parse_value(raw.trim());
        self.set_value(&key, value).map_err(err)?;
        self.overrides.push(key);
        Ok(())
    }

    pub fn set_value(&mut self, key: &str, value: toml::Value) -> Result<(), String> {
        let parts: Vec<&str> = key.split('.').collect();
        if parts.iter().any(|p| p.is_empty()) {
            return Err(format!("malformed key `{key}`"));
        }
        let mut table = &mut self.table;
        for part in &parts[..parts.len() - 1] {
            let entry = table
                .entry(part.to_string())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()));
            table = entry
                .as_table_mut()
                .ok_or_else(|| format!("`{part}` is not a section"))?;
        }
        table.insert(parts[parts.len() - 1].to_string(), value);
        Ok(())
    }

    /// Line of `key` inside `[section]` (or at top level), if present in the file.
    pub fn line_of(&self, dotted: &str) -> Option<usize> {
        let (section, key) = match dotted.rsplit_once('.') {
            Some((s, k)) => (s, k),
            None => ("", dotted),
        };
        let mut current = String::new();
        for (i, line) in self.text.lines().enumerate() {
            let t = line.trim();
            if let Some(rest) = t.strip_prefix('[') {
                current = rest.trim_end_matches(']').trim().to_string();
                continue;
            }
            if current == section {
                if let Some((k, _)) = t.split_once('=') {
                    if k.trim() == key {
                        return Some(i + 1);
                    }
                }
            }
        }
        None
    }

    fn error_at(&self, key: &str, message: impl Into<String>) -> ConfigError {
        if self.overrides.iter().any(|k| k == key) {
            return ConfigError {
                origin: format!("--set {key}"),
                line: None,
                message: message.into(),
            };
        }
        ConfigError {
            origin: self.origin.clone(),
            line: self.line_of(key),
            message: message.into(),
        }
    }

    pub fn resolve(&self) -> Result<ExperimentConfig, ConfigError> {
        let cfg: ExperimentConfig = toml::Value::Table(self.table.clone()).try_into().map_err(|e: toml::de::Error| {
            // spans refer to the re-serialized table, so locate by key instead
            let message = e.message().to_string();
            let line = key_in_message(&message).and_then(|k| self.find_key_anywhere(&k));
            ConfigError {
                origin: self.origin.clone(),
                line: line.or_else(|| e.span().map(|s| line_of_offset(&self.text, s.start))),
                message,
            }
        })?;
        self.validate(&cfg)?;
        Ok(cfg)
    }

    fn find_key_anywhere(&self, key: &str) -> Option<usize> {
        self.text.lines().position(|l| {
            let t = l.trim();
            t.split_once('=').is_some_and(|(k, _)| k.trim() == key) || t.trim_matches(['[', ']']) == key
        })
        .map(|i| i + 1)
    }

    fn validate(&self, cfg: &ExperimentConfig) -> Result<(), ConfigError> {
        use ExperimentKind::*;
        let p = &cfg.parameters;
        let has_physical = p.beta.is_some() || p.epsilon.is_some();
        let has_dimless = p.p1.is_some() || p.p2.is_some();
        if p.beta.is_some() && p.p2.is_some() {
            return Err(self.error_at("parameters.p2", "give either beta or p2, not both"));
        }
        if p.epsilon.is_some() && p.p1.is_some() {
            return Err(self.error_at("parameters.p1", "give either epsilon or p1, not both"));
        }
        if has_physical && p.alpha.is_none() {
            return Err(self.error_at("parameters.beta", "physical parameters need alpha"));
        }
        for key in ["alpha", "beta", "epsilon", "p1", "p2"] {
            let v = match key {
                "alpha" => p.alpha,
                "beta" => p.beta,
                "epsilon" => p.epsilon,
                "p1" => p.p1,
                _ => p.p2,
            };
            if let Some(v) = v {
                let ok = v.is_finite() && if key == "alpha" { v > 0.0 } else { v >= 0.0 };
                if !ok {
                    return Err(self.error_at(&format!("parameters.{key}"), format!("{key} = {v} is out of range")));
                }
            }
        }
        if let Some(t) = cfg.thermal.temperature {
            if !(t >= 0.0) || !t.is_finite() {
                return Err(self.error_at("thermal.temperature", format!("temperature must be >= 0, got {t}")));
            }
        }
        if let Some(n) = cfg.integrator.n_levels {
            if n < 4 {
                return Err(self.error_at("integrator.n_levels", "n_levels must be >= 4"));
            }
        }
        if let Some(n) = cfg.ensemble.n_traj {
            if n == 0 {
                return Err(self.error_at("ensemble.n_traj", "n_traj must be >= 1"));
            }
        }

        let needs_seed = cfg.experiment.is_stochastic()
            || (matches!(cfg.experiment, Scurve | ThresholdVsT | ThresholdVsP2)
                && cfg.models().iter().any(|m| *m != Model::Quantum));
        if needs_seed && cfg.ensemble.seed.is_none() {
            return Err(self.error_at("ensemble.seed", format!("{} is stochastic; ensemble.seed is required", cfg.experiment.name())));
        }

        let need = |ok: bool, key: &str, msg: &str| if ok { Ok(()) } else { Err(self.error_at(key, msg.to_string())) };
        match cfg.experiment {
            PlcRun | ParRun => need(
                has_physical || has_dimless,
                "parameters",
                "set alpha/beta/epsilon or p1/p2 in [parameters]",
            )?,
            ClassicalEnsemble => {
                need(p.alpha.is_some(), "parameters.alpha", "classical-ensemble needs alpha")?;
                need(cfg.thermal.temperature.is_some_and(|t| t > 0.0), "thermal.temperature", "classical-ensemble needs temperature > 0")?;
            }
            AveragedEnsemble => {
                need(has_physical || has_dimless, "parameters", "set alpha/beta/epsilon or p1/p2")?;
                need(cfg.thermal.temperature.is_some_and(|t| t > 0.0), "thermal.temperature", "averaged-ensemble needs temperature > 0")?;
            }
            WignerSnapshot => {
                let src = cfg.wigner.state.ok_or_else(|| self.error_at("wigner.state", "wigner.state is required (fock, plc or par)"))?;
                if src != WignerSource::Fock {
                    need(has_physical || has_dimless, "parameters", "evolved snapshots need parameters")?;
                }
            }
            Scurve => {
                need(cfg.run.model.is_some(), "run.model", "scurve needs run.model (classical, quantum or averaged)")?;
                need(
                    cfg.scan.drives.is_some() || (cfg.scan.lo.is_some() && cfg.scan.hi.is_some()),
                    "scan.drives",
                    "scurve needs scan.drives or scan.lo/scan.hi",
                )?;
            }
            ThresholdVsT => {
                need(!cfg.threshold_temperatures().is_empty(), "scan.temperatures", "threshold-vs-T needs scan.temperatures or thermal.temperature")?;
                need(p.alpha.is_some(), "parameters.alpha", "threshold-vs-T needs alpha")?;
            }
            ThresholdVsP2 => {
                need(!cfg.threshold_p2_values().is_empty(), "scan.p2_values", "threshold-vs-P2 needs scan.p2_values or parameters.p2")?;
            }
            TheoryTable => {}
        }
        if let Some(axis) = &cfg.scan.axis {
            need(matches!(axis.as_str(), "p1" | "epsilon"), "scan.axis", "scan.axis must be p1 or epsilon")?;
        }
        Ok(())
    }

}

impl ExperimentConfig {
    /// Models to scan; experiment-specific default when unset.
    pub fn models(&self) -> Vec<Model> {
        let cfg = self;
        match (&cfg.run.models, cfg.run.model) {
            (Some(ms), _) => ms.clone(),
            (None, Some(m)) => vec![m],
            (None, None) => match cfg.experiment {
                ExperimentKind::ThresholdVsP2 => vec![Model::Quantum],
                ExperimentKind::ThresholdVsT => vec![Model::Classical],
                _ => Vec::new(),
            },
        }
    }
}

fn key_in_message(message: &str) -> Option<String> {
    // serde messages quote the offending field as `name`
    let start = message.find('`')? + 1;
    let len = message[start..].find('`')?;
    Some(message[start..start + len].to_string())
}

fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Short names accepted for sweep axes and overrides.
pub fn resolve_alias(key: &str) -> String {
    match key {
        "T" | "temperature" => "thermal.temperature".into(),
        "P1" | "p1" => "parameters.p1".into(),
        "P2" | "p2" => "parameters.p2".into(),
        "alpha" | "beta" | "epsilon" => format!("parameters.{key}"),
        "seed" => "ensemble.seed".into(),
        "n_traj" => "ensemble.n_traj".into(),
        "tau_final" => "run.tau_final".into(),
        other => other.to_string(),
    }
}

impl ExperimentConfig {
    pub fn tau0(&self) -> f64 {
        self.parameters.tau0.unwrap_or(-10.0)
    }

    /// Physical parameters, when `alpha` and either the physical or the
    /// dimensionless set are given.
    pub fn oscillator(&self) -> Option<parares::Result<OscillatorParams>> {
        let p = &self.parameters;
        let alpha = p.alpha?;
        let sa = alpha.sqrt();
        let beta = p.beta.or(p.p2.map(|p2| 4.0 * p2 * sa / 3.0)).unwrap_or(0.0);
        let epsilon = p.epsilon.or(p.p1.map(|p1| 8.0 * p1 * sa)).unwrap_or(0.0);
        Some(OscillatorParams::with_t0(alpha, beta, epsilon, self.tau0() / sa))
    }

    pub fn dimensionless(&self) -> parares::Result<DimensionlessParams> {
        if let Some(osc) = self.oscillator() {
            let osc = osc?;
            return Ok(osc.to_dimensionless());
        }
        DimensionlessParams::new(
            self.parameters.p1.unwrap_or(0.0),
            self.parameters.p2.unwrap_or(0.0),
            self.tau0(),
        )
    }

    /// `scan.temperatures`, or the single `thermal.temperature` (sweep members).
    pub fn threshold_temperatures(&self) -> Vec<f64> {
        match (&self.scan.temperatures, self.thermal.temperature) {
            (Some(ts), _) => ts.clone(),
            (None, Some(t)) => vec![t],
            (None, None) => Vec::new(),
        }
    }

    /// `scan.p2_values`, or the single `parameters.p2`.
    pub fn threshold_p2_values(&self) -> Vec<f64> {
        match (&self.scan.p2_values, self.parameters.p2) {
            (Some(ps), _) => ps.clone(),
            (None, Some(p)) => vec![p],
            (None, None) => Vec::new(),
        }
    }

    pub fn temperature(&self) -> f64 {
        self.thermal.temperature.unwrap_or(0.0)
    }

    pub fn format(&self) -> Format {
        self.output.format.unwrap_or_default()
    }

    /// Quantum integrator settings on top of `base`.
    pub fn integrator(&self, base: IntegratorConfig) -> IntegratorConfig {
        let s = &self.integrator;
        IntegratorConfig {
            method: s.method.unwrap_or(base.method),
            step: s.step.unwrap_or(base.step),
            rel_tol: s.rel_tol.unwrap_or(base.rel_tol),
            abs_tol: s.abs_tol.unwrap_or(base.abs_tol),
            n_levels: s.n_levels.unwrap_or(base.n_levels),
            sample_stride: s.sample_stride.or(base.sample_stride),
            truncation_guard: s.truncation_guard.unwrap_or(base.truncation_guard),
        }
    }

    pub fn classical_step(&self) -> f64 {
        self.integrator.classical_step.unwrap_or(parares::classical::DEFAULT_DUFFING_STEP)
    }

    pub fn averaged_step(&self) -> f64 {
        self.integrator.averaged_step.unwrap_or(1e-2)
    }

    pub fn averaged_model(&self) -> AveragedModel {
        match self.run.averaged_model {
            AveragedVariant::Derived => AveragedModel::derived(),
            AveragedVariant::Printed => AveragedModel::as_printed(),
        }
    }

    pub fn coefficients(&self) -> ScalingCoefficients {
        let r = ScalingCoefficients::reference();
        let t = &self.theory;
        ScalingCoefficients {
            a: t.a.unwrap_or(r.a),
            b: t.b.unwrap_or(r.b),
            kappa0: t.kappa0.unwrap_or(r.kappa0),
            kappa1: t.kappa1.unwrap_or(r.kappa1),
        }
    }

    /// SHA-256 of the canonical JSON form, ignoring the output directory.
    /// The format is included so that runs in different formats do not
    /// share a directory.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output.dir = None;
        canonical.output.format = Some(self.format());
        let json = serde_json::to_vec(&canonical).expect("config serializes");
        hex::encode(Sha256::digest(json))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const PLC: &str = r#"
experiment = "plc-run"

[parameters]
alpha = 1e-6
beta = 0.01
epsilon = 0.04

[integrator]
n_levels = 40
"#;

    #[test]
    fn parses_and_derives_dimensionless() {
        let cfg = ConfigSource::from_str("plc.toml", PLC).unwrap().resolve().unwrap();
        assert_eq!(cfg.experiment, ExperimentKind::PlcRun);
        let dp = cfg.dimensionless().unwrap();
        assert!((dp.p1 - 5.0).abs() < 1e-12);
        assert!((dp.p2 - 7.5).abs() < 1e-12);
    }

    #[test]
    fn syntax_error_reports_line() {
        let text = "experiment = \"plc-run\"\n[parameters]\nalpha = = 1\n";
        let e = ConfigSource::from_str("bad.toml", text).unwrap_err();
        assert_eq!(e.line, Some(3));
    }

    #[test]
    fn unknown_key_reports_line() {
        let text = format!("{PLC}\n[ensemble]\nseeed = 3\n");
        let e = ConfigSource::from_str("bad.toml", &text).unwrap().resolve().unwrap_err();
        assert!(e.message.contains("seeed"), "{}", e.message);
        assert_eq!(e.line, Some(text.lines().position(|l| l.starts_with("seeed")).unwrap() + 1));
    }

    #[test]
    fn semantic_error_reports_line() {
        let text = "experiment = \"classical-ensemble\"\n[parameters]\nalpha = 1e-4\nbeta = 1e-3\nepsilon = 0.03\n[thermal]\ntemperature = -1.0\n[ensemble]\nseed = 1\n";
        let e = ConfigSource::from_str("t.toml", text).unwrap().resolve().unwrap_err();
        assert_eq!(e.line, Some(7));
    }

    #[test]
    fn stochastic_experiment_needs_seed() {
        let text = "experiment = \"averaged-ensemble\"\n[parameters]\np1 = 0.3\np2 = 0.075\n[thermal]\ntemperature = 1.0\n";
        let e = ConfigSource::from_str("t.toml", text).unwrap().resolve().unwrap_err();
        assert!(e.message.contains("seed"));
    }

    #[test]
    fn overrides_take_precedence_and_change_hash() {
        let src = ConfigSource::from_str("plc.toml", PLC).unwrap();
        let base = src.resolve().unwrap();
        let mut over = src.clone();
        over.set("parameters.epsilon=0.05").unwrap();
        let cfg = over.resolve().unwrap();
        assert_eq!(cfg.parameters.epsilon, Some(0.05));
        assert_ne!(base.hash(), cfg.hash());
        let mut out_only = src.clone();
        out_only.set("output.dir=\"elsewhere\"").unwrap();
        assert_eq!(base.hash(), out_only.resolve().unwrap().hash());
        let mut csv = src.clone();
        csv.set("output.format=csv").unwrap();
        assert_eq!(base.hash(), csv.resolve().unwrap().hash());
        let mut json = src.clone();
        json.set("output.format=json").unwrap();
        assert_ne!(base.hash(), json.resolve().unwrap().hash());
    }

    #[test]
    fn alias_and_bare_string_values() {
        let mut src = ConfigSource::bare(ExperimentKind::TheoryTable);
        src.set("T=0.3").unwrap();
        src.set("output.format=csv").unwrap();
        let cfg = src.resolve().unwrap();
        assert_eq!(cfg.thermal.temperature, Some(0.3));
        assert_eq!(cfg.format(), Format::Csv);
    }

    #[test]
    fn conflicting_parameter_sets_rejected() {
        let mut src = ConfigSource::from_str("plc.toml", PLC).unwrap();
        src.set("parameters.p2=10").unwrap();
        let e = src.resolve().unwrap_err();
        assert!(e.origin.contains("--set"));
    }
}
