//! Flat `key = value` experiment configuration.
//!
//! Blank lines and text after `#` are ignored. Every key may appear once.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use qsd_core::kernels::Kernel;
use qsd_core::linalg::ComplexVector;
use qsd_core::qsd::default_dt;
use qsd_core::C64;

/// A configuration problem, located by line and key where possible.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, found `{text}`")]
    Syntax { line: usize, text: String },
    #[error("line {line}: `{key}` is set twice")]
    Duplicate { line: usize, key: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: `{key}`: {message}")]
    BadValue { line: usize, key: String, message: String },
    #[error("missing required key `{key}`{context}")]
    Missing { key: &'static str, context: String },
    #[error("`{key}`: {message}")]
    Invalid { key: &'static str, message: String },
}

/// Which study a configuration runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExperimentKind {
    /// Trajectory ensemble compared against master-equation references.
    Ensemble,
    /// Bloch-vector length of the long-time and time-dependent master equations.
    Positivity,
    /// Colored-noise master equation and Markov trajectories against Lindblad.
    MarkovLimit,
    /// Exact master equation against a discretized bath.
    Oracle,
    /// Oscillator coefficients and zeroth-order propagator properties.
    Qbm,
    /// Novikov-type relation on linear trajectories.
    Novikov,
}

impl FromStr for ExperimentKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "ensemble" => Self::Ensemble,
            "positivity" => Self::Positivity,
            "markov-limit" => Self::MarkovLimit,
            "oracle" => Self::Oracle,
            "qbm" => Self::Qbm,
            "novikov" => Self::Novikov,
            _ => return Err("expected ensemble, positivity, markov-limit, oracle, qbm or novikov".into()),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelChoice {
    Dissipative,
    Driven,
    Oscillator,
}

impl FromStr for ModelChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "dissipative" => Self::Dissipative,
            "driven" => Self::Driven,
            "oscillator" => Self::Oscillator,
            _ => return Err("expected dissipative, driven or oscillator".into()),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KernelChoice {
    Ou,
    Ohmic,
    Delta,
}

impl FromStr for KernelChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "ou" => Self::Ou,
            "ohmic" => Self::Ohmic,
            "delta" => Self::Delta,
            _ => return Err("expected ou, ohmic or delta".into()),
        })
    }
}

/// Trajectory equation used by ensemble studies.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SchemeChoice {
    FirstOrder,
    FirstOrderExplicit,
    SecondOrder,
    FunctionalZeroth,
    Exact,
    Linear,
    Markov,
}

impl FromStr for SchemeChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "first-order" => Self::FirstOrder,
            "first-order-explicit" => Self::FirstOrderExplicit,
            "second-order" => Self::SecondOrder,
            "functional-zeroth" => Self::FunctionalZeroth,
            "exact" => Self::Exact,
            "linear" => Self::Linear,
            "markov" => Self::Markov,
            _ => return Err("expected first-order, first-order-explicit, second-order, functional-zeroth, exact, linear or markov".into()),
        })
    }
}

/// Master equations an ensemble can be compared against.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum ReferenceChoice {
    Lindblad,
    FirstOrder,
    LongTime,
    FunctionalZeroth,
    Exact,
}

impl ReferenceChoice {
    pub fn label(self) -> &'static str {
        match self {
            Self::Lindblad => "lindblad",
            Self::FirstOrder => "first-order",
            Self::LongTime => "long-time",
            Self::FunctionalZeroth => "functional-zeroth",
            Self::Exact => "exact",
        }
    }
}

impl FromStr for ReferenceChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "lindblad" => Self::Lindblad,
            "first-order" => Self::FirstOrder,
            "long-time" => Self::LongTime,
            "functional-zeroth" => Self::FunctionalZeroth,
            "exact" => Self::Exact,
            _ => return Err("expected lindblad, first-order, long-time, functional-zeroth or exact".into()),
        })
    }
}

impl fmt::Display for ReferenceChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Pass/fail thresholds applied in `--check` mode.
#[derive(Clone, Debug, PartialEq)]
pub struct GateSpec {
    /// Reference that must agree with the ensemble.
    pub agree_with: Option<ReferenceChoice>,
    pub max_z: f64,
    pub max_deviation: Option<f64>,
    /// Reference that must be resolved from the ensemble somewhere in the window.
    pub differ_from: Option<ReferenceChoice>,
    pub min_separation: f64,
    pub window: (f64, f64),
    /// Restrict gates to one observable (`0 = σx`, `1 = σy`, `2 = σz`).
    pub observable: Option<usize>,
}

impl Default for GateSpec {
    fn default() -> Self {
        Self { agree_with: None, max_z: 4.0, max_deviation: None, differ_from: None, min_separation: 10.0, window: (0.0, f64::INFINITY), observable: None }
    }
}

/// A fully resolved experiment description.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub name: String,
    pub kind: ExperimentKind,
    pub model: ModelChoice,
    pub omega: f64,
    pub lambda: f64,
    pub kernel: KernelChoice,
    pub gamma: Option<f64>,
    pub eta: f64,
    pub cutoff: f64,
    pub kt: f64,
    pub omega0: f64,
    pub n_levels: usize,
    /// Absorb the frequency shift `ηΛ/π` into the oscillator potential.
    pub counterterm: bool,
    pub scheme: SchemeChoice,
    pub references: Vec<ReferenceChoice>,
    /// Amplitudes on `(|+⟩, |−⟩)`, normalized on use.
    pub psi0: Vec<C64>,
    pub dt: f64,
    pub t_max: f64,
    pub n_traj: u64,
    pub seed: u64,
    pub stride: usize,
    pub n_modes: usize,
    pub gates: GateSpec,
}

impl ExperimentConfig {
    pub fn kernel(&self) -> Result<Kernel, ConfigError> {
        let result = match self.kernel {
            KernelChoice::Ou => Kernel::ornstein_uhlenbeck(self.gamma.ok_or(ConfigError::Missing { key: "gamma", context: " for the ou kernel".into() })?),
            KernelChoice::Ohmic => Kernel::ohmic(self.eta, self.cutoff, self.kt),
            KernelChoice::Delta => Ok(Kernel::Delta),
        };
        result.map_err(|e| ConfigError::Invalid { key: "kernel", message: e.to_string() })
    }

    pub fn psi0(&self) -> Result<ComplexVector, ConfigError> {
        ComplexVector::normalized_from(self.psi0.clone()).map_err(|e| ConfigError::Invalid { key: "psi0", message: e.to_string() })
    }

    pub fn n_steps(&self) -> usize {
        (self.t_max / self.dt).round() as usize
    }

    /// Hard errors that make the configuration unusable.
    pub fn check(&self) -> Result<(), ConfigError> {
        let positive = |key: &'static str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(ConfigError::Invalid { key, message: format!("must be positive, got {v}") })
            }
        };
        positive("dt", self.dt)?;
        positive("t_max", self.t_max)?;
        if self.stride == 0 {
            return Err(ConfigError::Invalid { key: "stride", message: "must be at least 1".into() });
        }
        if self.n_traj == 0 {
            return Err(ConfigError::Invalid { key: "n_traj", message: "must be at least 1".into() });
        }
        if matches!(self.kind, ExperimentKind::Qbm) || self.model == ModelChoice::Oscillator {
            positive("eta", self.eta)?;
            positive("cutoff", self.cutoff)?;
            if self.n_levels < 3 {
                return Err(ConfigError::Invalid { key: "n_levels", message: "must be at least 3".into() });
            }
        }
        self.kernel()?;
        if self.model != ModelChoice::Oscillator {
            if self.psi0.len() != 2 {
                return Err(ConfigError::Invalid { key: "psi0", message: format!("needs 2 amplitudes, got {}", self.psi0.len()) });
            }
            self.psi0()?;
        }
        Ok(())
    }

    /// Soft problems worth reporting.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if let Some(g) = self.gamma.filter(|_| self.kernel == KernelChoice::Ou) {
            if g * self.dt > 0.2 {
                out.push(format!("gamma*dt = {:.3} exceeds 0.2; the bath memory is under-resolved", g * self.dt));
            }
        }
        let suggested = default_dt(self.gamma, Some(self.omega), Some(self.lambda));
        if self.model != ModelChoice::Oscillator && self.dt > 2.0 * suggested {
            out.push(format!("dt = {} is more than twice the suggested {}", self.dt, suggested));
        }
        if self.kind == ExperimentKind::Ensemble && self.n_traj < 100 {
            out.push(format!("n_traj = {} is below 100; error bars will be unreliable", self.n_traj));
        }
        out
    }

    /// Serializes to the format [`parse`] reads.
    pub fn to_text(&self) -> String {
        let kind = match self.kind {
            ExperimentKind::Ensemble => "ensemble",
            ExperimentKind::Positivity => "positivity",
            ExperimentKind::MarkovLimit => "markov-limit",
            ExperimentKind::Oracle => "oracle",
            ExperimentKind::Qbm => "qbm",
            ExperimentKind::Novikov => "novikov",
        };
        let model = match self.model {
            ModelChoice::Dissipative => "dissipative",
            ModelChoice::Driven => "driven",
            ModelChoice::Oscillator => "oscillator",
        };
        let kernel = match self.kernel {
            KernelChoice::Ou => "ou",
            KernelChoice::Ohmic => "ohmic",
            KernelChoice::Delta => "delta",
        };
        let scheme = match self.scheme {
            SchemeChoice::FirstOrder => "first-order",
            SchemeChoice::FirstOrderExplicit => "first-order-explicit",
            SchemeChoice::SecondOrder => "second-order",
            SchemeChoice::FunctionalZeroth => "functional-zeroth",
            SchemeChoice::Exact => "exact",
            SchemeChoice::Linear => "linear",
            SchemeChoice::Markov => "markov",
        };
        let mut s = String::new();
        let mut line = |k: &str, v: String| s.push_str(&format!("{k} = {v}\n"));
        line("name", self.name.clone());
        line("experiment", kind.into());
        line("model", model.into());
        line("omega", self.omega.to_string());
        line("lambda", self.lambda.to_string());
        line("kernel", kernel.into());
        if let Some(g) = self.gamma {
            line("gamma", g.to_string());
        }
        line("eta", self.eta.to_string());
        line("cutoff", self.cutoff.to_string());
        line("kt", self.kt.to_string());
        line("omega0", self.omega0.to_string());
        line("n_levels", self.n_levels.to_string());
        line("counterterm", self.counterterm.to_string());
        line("scheme", scheme.into());
        line("references", if self.references.is_empty() { "none".into() } else { self.references.iter().map(|r| r.label()).collect::<Vec<_>>().join(" ") });
        line("psi0", self.psi0.iter().map(|z| format_complex(*z)).collect::<Vec<_>>().join(", "));
        line("dt", self.dt.to_string());
        line("t_max", self.t_max.to_string());
        line("n_traj", self.n_traj.to_string());
        line("seed", self.seed.to_string());
        line("stride", self.stride.to_string());
        line("n_modes", self.n_modes.to_string());
        let g = &self.gates;
        if let Some(r) = g.agree_with {
            line("agree_with", r.label().into());
        }
        line("max_z", g.max_z.to_string());
        if let Some(d) = g.max_deviation {
            line("max_deviation", d.to_string());
        }
        if let Some(r) = g.differ_from {
            line("differ_from", r.label().into());
        }
        line("min_separation", g.min_separation.to_string());
        if g.window.1.is_finite() {
            line("window", format!("{} {}", g.window.0, g.window.1));
        }
        if let Some(o) = g.observable {
            line("gate_observable", ["sx", "sy", "sz"][o].into());
        }
        s
    }
}

fn format_complex(z: C64) -> String {
    if z.im == 0.0 {
        z.re.to_string()
    } else if z.im < 0.0 {
        format!("{}-{}i", z.re, -z.im)
    } else {
        format!("{}+{}i", z.re, z.im)
    }
}

/// Parses `a`, `bi`, `a+bi` or `a-bi`.
pub fn parse_complex(text: &str) -> Result<C64, String> {
    let t: String = text.chars().filter(|c| !c.is_whitespace()).collect();
    let bad = || format!("`{text}` is not a complex number");
    let Some(body) = t.strip_suffix('i') else {
        return t.parse::<f64>().map(|x| C64::new(x, 0.0)).map_err(|_| bad());
    };
    let bytes = body.as_bytes();
    let split = (1..bytes.len()).rev().find(|&k| (bytes[k] == b'+' || bytes[k] == b'-') && !matches!(bytes[k - 1], b'e' | b'E'));
    let imag = |s: &str| match s {
        "" | "+" => Ok(1.0),
        "-" => Ok(-1.0),
        _ => s.parse::<f64>().map_err(|_| bad()),
    };
    match split {
        Some(k) => Ok(C64::new(body[..k].parse::<f64>().map_err(|_| bad())?, imag(&body[k..])?)),
        None => Ok(C64::new(0.0, imag(body)?)),
    }
}

const KEYS: &[&str] = &[
    "name", "experiment", "preset", "model", "omega", "lambda", "kernel", "gamma", "eta", "cutoff", "kt", "omega0", "n_levels", "counterterm", "scheme",
    "references", "psi0", "dt", "t_max", "n_traj", "seed", "stride", "n_modes", "agree_with", "max_z", "max_deviation", "differ_from", "min_separation",
    "window", "gate_observable",
];

struct Entries {
    map: BTreeMap<String, (usize, String)>,
}

impl Entries {
    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError>
    where
        T::Err: fmt::Display,
    {
        match self.map.get(key) {
            None => Ok(None),
            Some((line, v)) => v.parse::<T>().map(Some).map_err(|e| ConfigError::BadValue { line: *line, key: key.into(), message: e.to_string() }),
        }
    }

    fn with<T>(&self, key: &str, f: impl FnOnce(&str) -> Result<T, String>) -> Result<Option<T>, ConfigError> {
        match self.map.get(key) {
            None => Ok(None),
            Some((line, v)) => f(v).map(Some).map_err(|message| ConfigError::BadValue { line: *line, key: key.into(), message }),
        }
    }
}

fn tokenize(text: &str) -> Result<Entries, ConfigError> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((k, v)) = content.split_once('=') else {
            return Err(ConfigError::Syntax { line, text: content.into() });
        };
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() || v.is_empty() {
            return Err(ConfigError::Syntax { line, text: content.into() });
        }
        if !KEYS.contains(&k) {
            return Err(ConfigError::UnknownKey { line, key: k.into() });
        }
        if map.insert(k.to_string(), (line, v.to_string())).is_some() {
            return Err(ConfigError::Duplicate { line, key: k.into() });
        }
    }
    Ok(Entries { map })
}

/// Parses a configuration. A `preset = <name>` line starts from that preset
/// and the remaining keys override it.
pub fn parse(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let e = tokenize(text)?;
    let mut cfg = match e.map.get("preset") {
        Some((line, name)) => crate::presets::preset(name).ok_or_else(|| ConfigError::BadValue {
            line: *line,
            key: "preset".into(),
            message: format!("unknown preset; expected one of {}", crate::presets::NAMES.join(", ")),
        })?,
        None => {
            let kind: ExperimentKind = e.get("experiment")?.ok_or(ConfigError::Missing { key: "experiment", context: String::new() })?;
            let model: ModelChoice = e.get("model")?.unwrap_or(if kind == ExperimentKind::Qbm { ModelChoice::Oscillator } else { ModelChoice::Dissipative });
            let kernel: KernelChoice = e.get("kernel")?.unwrap_or(if model == ModelChoice::Oscillator { KernelChoice::Ohmic } else { KernelChoice::Ou });
            if kernel == KernelChoice::Ou && !e.map.contains_key("gamma") {
                return Err(ConfigError::Missing { key: "gamma", context: " for the ou kernel".into() });
            }
            crate::presets::base(kind, model, kernel)
        }
    };
    if let Some(v) = e.get::<String>("name")? {
        cfg.name = v;
    }
    if let Some(v) = e.get("experiment")? {
        cfg.kind = v;
    }
    if let Some(v) = e.get("model")? {
        cfg.model = v;
    }
    if let Some(v) = e.get("kernel")? {
        cfg.kernel = v;
    }
    if let Some(v) = e.get("scheme")? {
        cfg.scheme = v;
    }
    macro_rules! set {
        ($($key:literal => $field:expr),* $(,)?) => {
            $(if let Some(v) = e.get($key)? { $field = v; })*
        };
    }
    set! {
        "omega" => cfg.omega, "lambda" => cfg.lambda, "eta" => cfg.eta, "cutoff" => cfg.cutoff, "kt" => cfg.kt,
        "omega0" => cfg.omega0, "n_levels" => cfg.n_levels, "counterterm" => cfg.counterterm, "t_max" => cfg.t_max,
        "n_traj" => cfg.n_traj, "seed" => cfg.seed, "stride" => cfg.stride, "n_modes" => cfg.n_modes,
        "max_z" => cfg.gates.max_z, "min_separation" => cfg.gates.min_separation,
    }
    if let Some(v) = e.get("gamma")? {
        cfg.gamma = Some(v);
    }
    let dt_given = e.get::<f64>("dt")?;
    if let Some(v) = e.get("max_deviation")? {
        cfg.gates.max_deviation = Some(v);
    }
    if let Some(v) = e.get("agree_with")? {
        cfg.gates.agree_with = Some(v);
    }
    if let Some(v) = e.get("differ_from")? {
        cfg.gates.differ_from = Some(v);
    }
    if let Some(v) = e.with("gate_observable", |s| match s {
        "sx" => Ok(0),
        "sy" => Ok(1),
        "sz" => Ok(2),
        _ => Err("expected sx, sy or sz".into()),
    })? {
        cfg.gates.observable = Some(v);
    }
    if let Some(v) = e.with("window", |s| {
        let parts: Vec<f64> = s.split_whitespace().map(|x| x.parse::<f64>().map_err(|_| format!("`{x}` is not a number"))).collect::<Result<_, _>>()?;
        match parts[..] {
            [a, b] if a <= b => Ok((a, b)),
            _ => Err("expected two increasing numbers".into()),
        }
    })? {
        cfg.gates.window = v;
    }
    if let Some(v) = e.with("references", |s| s.split_whitespace().filter(|r| *r != "none").map(|r| r.parse::<ReferenceChoice>()).collect::<Result<Vec<_>, _>>())? {
        cfg.references = v;
    }
    if let Some(v) = e.with("psi0", |s| s.split(',').map(parse_complex).collect::<Result<Vec<_>, _>>())? {
        cfg.psi0 = v;
    }
    cfg.dt = match dt_given {
        Some(dt) => dt,
        None if e.map.contains_key("preset") && !["gamma", "omega", "lambda"].iter().any(|k| e.map.contains_key(*k)) => cfg.dt,
        None => default_dt(cfg.gamma, Some(cfg.omega), Some(cfg.lambda)),
    };
    cfg.check()?;
    Ok(cfg)
}
