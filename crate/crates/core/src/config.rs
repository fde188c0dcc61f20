//! Flat `key = value` run configuration.
//!
//! One assignment per line, `#` starts a comment, numbers may carry a unit
//! suffix (`b_field = 10 kG`, `t_max = 3 ms`). Suffixes are resolved at parse
//! time and every violation is reported together with its key and line.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::exact::{CouplingTerms, Engine, DEFAULT_DIMENSION_CAP};
use crate::geometry::CouplingNormalization;
use crate::shift::ShiftMethod;
use crate::units::{codata, UnitMode};

pub const ENV_OUTPUT_DIR: &str = "VACFLIP_OUTPUT_DIR";
pub const ENV_DIMENSION_CAP: &str = "VACFLIP_DIMENSION_CAP";

/// One violation found while validating a configuration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConfigIssue {
    pub key: String,
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}: {}", self.key, self.message),
            None => write!(f, "{}: {}", self.key, self.message),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EngineChoice {
    Analytic,
    Exact,
    Both,
}

impl EngineChoice {
    pub fn analytic(self) -> bool {
        matches!(self, EngineChoice::Analytic | EngineChoice::Both)
    }

    pub fn exact(self) -> bool {
        matches!(self, EngineChoice::Exact | EngineChoice::Both)
    }
}

/// Either the physical triple or the direct coupling pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpinParams {
    Physical { charge: f64, mass: f64, b_field: f64 },
    Coupling { alpha: f64, omega: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cutoff {
    Absolute(f64),
    /// Λ/ω.
    Ratio(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BathSpec {
    /// Uniform comb of `n_modes` modes centred on ω with spacing `spacing_over_beta · β`.
    Resonant { n_modes: usize, spacing_over_beta: f64 },
    /// Frequency × direction × polarization grid over `[window_min, window_max] · ω`.
    Product {
        n_freq: usize,
        n_angular: usize,
        window_min: f64,
        window_max: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeSpan {
    Absolute(f64),
    /// Multiples of 1/β.
    DecayTimes(f64),
    /// Fraction of the comb recurrence time `2π/spacing`.
    Recurrence(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialState {
    /// `sz0` and `splus0` in units of ħ.
    Expectations { sz0: f64, splus0_re: f64, splus0_im: f64 },
    /// Bloch angles of a pure state.
    Angles { theta: f64, phi: f64 },
}

impl InitialState {
    /// `(⟨S_z⟩, ⟨S_+⟩)` in the unit system with spin magnitude `hbar_half`.
    pub fn expectations(self, hbar_half: f64) -> (f64, Complex64) {
        match self {
            InitialState::Expectations { sz0, splus0_re, splus0_im } => {
                let hbar = 2.0 * hbar_half;
                (sz0 * hbar, Complex64::new(splus0_re, splus0_im) * hbar)
            }
            InitialState::Angles { theta, phi } => (
                hbar_half * theta.cos(),
                Complex64::from_polar(hbar_half * theta.sin(), phi),
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub engine: EngineChoice,
    pub units: UnitMode,
    pub spin: SpinParams,
    pub cutoff: Cutoff,
    pub shift_method: ShiftMethod,
    pub bath: BathSpec,
    pub n_max: usize,
    pub coupling_normalization: CouplingNormalization,
    pub coupling_scale: f64,
    pub coupling_terms: CouplingTerms,
    pub integrator: Engine,
    pub t_max: TimeSpan,
    pub n_samples: usize,
    pub initial: InitialState,
    pub tolerance: f64,
    pub dimension_cap: usize,
    pub output_dir: PathBuf,
    pub seed: u64,
}

impl SimulationConfig {
    /// SHA-256 of the canonical JSON of every field except the output directory.
    ///
    /// Object keys are sorted, so the hash depends only on the resolved values.
    pub fn hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config is always serializable");
        if let Some(m) = v.as_object_mut() {
            m.remove("output_dir");
        }
        hex::encode(Sha256::digest(v.to_string().as_bytes()))
    }

    /// Apply the output-directory and dimension-cap environment overrides.
    pub fn apply_env_overrides(&mut self) -> Result<()> {
        if let Ok(dir) = std::env::var(ENV_OUTPUT_DIR) {
            if !dir.is_empty() {
                self.output_dir = PathBuf::from(dir);
            }
        }
        if let Ok(cap) = std::env::var(ENV_DIMENSION_CAP) {
            self.dimension_cap = cap.trim().parse().map_err(|_| {
                Error::Config(vec![ConfigIssue {
                    key: ENV_DIMENSION_CAP.into(),
                    line: None,
                    message: format!("expected a positive integer, got {cap:?}"),
                }])
            })?;
            if self.dimension_cap == 0 {
                return Err(Error::Config(vec![ConfigIssue {
                    key: ENV_DIMENSION_CAP.into(),
                    line: None,
                    message: "must be positive".into(),
                }]));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Text,
    Integer,
    Real,
    Charge,
    Mass,
    Field,
    Time,
}

const KEYS: &[(&str, Kind)] = &[
    ("engine", Kind::Text),
    ("units", Kind::Text),
    ("charge", Kind::Charge),
    ("mass", Kind::Mass),
    ("b_field", Kind::Field),
    ("alpha", Kind::Real),
    ("omega", Kind::Real),
    ("cutoff", Kind::Real),
    ("cutoff_ratio", Kind::Real),
    ("shift_method", Kind::Text),
    ("bath", Kind::Text),
    ("n_modes", Kind::Integer),
    ("spacing_over_beta", Kind::Real),
    ("n_freq", Kind::Integer),
    ("n_angular", Kind::Integer),
    ("window_min", Kind::Real),
    ("window_max", Kind::Real),
    ("n_max", Kind::Integer),
    ("coupling_normalization", Kind::Text),
    ("coupling_scale", Kind::Real),
    ("coupling_terms", Kind::Text),
    ("integrator", Kind::Text),
    ("t_max", Kind::Time),
    ("t_max_decay", Kind::Real),
    ("window_fraction", Kind::Real),
    ("n_samples", Kind::Integer),
    ("sz0", Kind::Real),
    ("splus0_re", Kind::Real),
    ("splus0_im", Kind::Real),
    ("theta", Kind::Real),
    ("phi", Kind::Real),
    ("tolerance", Kind::Real),
    ("dimension_cap", Kind::Integer),
    ("output_dir", Kind::Text),
    ("seed", Kind::Integer),
];

fn kind_of(key: &str) -> Option<Kind> {
    KEYS.iter().find(|(k, _)| *k == key).map(|(_, kind)| *kind)
}

/// Keys that take a single number and can therefore be swept.
pub fn is_sweepable(key: &str) -> bool {
    matches!(kind_of(key), Some(k) if k != Kind::Text)
}

fn suffix_scale(kind: Kind, suffix: &str) -> Option<f64> {
    Some(match (kind, suffix) {
        (Kind::Charge, "C") => 1.0,
        (Kind::Charge, "e") => codata::ELEMENTARY_CHARGE,
        (Kind::Mass, "kg") => 1.0,
        (Kind::Mass, "me") => codata::ELECTRON_MASS,
        (Kind::Field, "T") => 1.0,
        (Kind::Field, "mT") => 1e-3,
        (Kind::Field, "G" | "gauss") => codata::TESLA_PER_GAUSS,
        (Kind::Field, "kG") => 1e3 * codata::TESLA_PER_GAUSS,
        (Kind::Time, "s") => 1.0,
        (Kind::Time, "ms") => 1e-3,
        (Kind::Time, "us") => 1e-6,
        (Kind::Time, "ns") => 1e-9,
        _ => return None,
    })
}

#[derive(Debug, Clone, PartialEq)]
struct Entry {
    value: String,
    line: Option<usize>,
}

/// Syntactically parsed but not yet validated assignments.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawConfig {
    entries: BTreeMap<String, Entry>,
    issues: Vec<ConfigIssue>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Self {
        let mut raw = RawConfig::default();
        for (i, line) in text.lines().enumerate() {
            let n = i + 1;
            let content = line.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                raw.issue(content, Some(n), "expected `key = value`");
                continue;
            };
            let (key, value) = (key.trim(), value.trim());
            if kind_of(key).is_none() {
                raw.issue(key, Some(n), "unknown key");
                continue;
            }
            if value.is_empty() {
                raw.issue(key, Some(n), "missing value");
                continue;
            }
            if let Some(prev) = raw.entries.get(key) {
                let first = prev.line.map_or(String::new(), |l| format!(" (first set on line {l})"));
                raw.issue(key, Some(n), format!("duplicate key{first}"));
                continue;
            }
            raw.entries.insert(
                key.to_string(),
                Entry {
                    value: value.to_string(),
                    line: Some(n),
                },
            );
        }
        raw
    }

    /// Override or add a key, as done for each point of a sweep.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if kind_of(key).is_none() {
            return Err(Error::Config(vec![ConfigIssue {
                key: key.into(),
                line: None,
                message: "unknown key".into(),
            }]));
        }
        let line = self.entries.get(key).and_then(|e| e.line);
        self.entries.insert(
            key.to_string(),
            Entry {
                value: value.to_string(),
                line,
            },
        );
        Ok(())
    }

    pub fn resolve(&self) -> Result<SimulationConfig> {
        let mut r = Resolver {
            raw: self,
            issues: self.issues.clone(),
        };
        let cfg = r.build();
        if r.issues.is_empty() {
            Ok(cfg.expect("no issues implies a complete config"))
        } else {
            Err(Error::Config(r.issues))
        }
    }

    fn issue(&mut self, key: &str, line: Option<usize>, message: impl Into<String>) {
        self.issues.push(ConfigIssue {
            key: key.to_string(),
            line,
            message: message.into(),
        });
    }
}

/// Parse and validate, reporting every violation at once.
pub fn parse_config(text: &str) -> Result<SimulationConfig> {
    RawConfig::parse(text).resolve()
}

struct Resolver<'a> {
    raw: &'a RawConfig,
    issues: Vec<ConfigIssue>,
}

impl Resolver<'_> {
    fn has(&self, key: &str) -> bool {
        self.raw.entries.contains_key(key)
    }

    fn line(&self, key: &str) -> Option<usize> {
        self.raw.entries.get(key).and_then(|e| e.line)
    }

    fn issue(&mut self, key: &str, message: impl Into<String>) {
        let line = self.line(key);
        self.issues.push(ConfigIssue {
            key: key.to_string(),
            line,
            message: message.into(),
        });
    }

    fn text(&self, key: &str) -> Option<&str> {
        self.raw.entries.get(key).map(|e| e.value.as_str())
    }

    fn choice<T: Copy>(&mut self, key: &str, default: T, options: &[(&str, T)]) -> T {
        let Some(v) = self.text(key) else { return default };
        if let Some((_, t)) = options.iter().find(|(name, _)| *name == v) {
            return *t;
        }
        let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
        let msg = format!("unknown value {v:?}, expected one of {}", names.join(", "));
        self.issue(key, msg);
        default
    }

    /// Number with an optional unit suffix, converted to SI where a suffix is given.
    fn number(&mut self, key: &str, si: bool) -> Option<f64> {
        let entry = self.raw.entries.get(key)?;
        let kind = kind_of(key).expect("only known keys are stored");
        let v = entry.value.as_str();
        let (num, suffix) = if v.parse::<f64>().is_ok() {
            (v, "")
        } else {
            let split = v.trim_end_matches(|c: char| c.is_ascii_alphabetic()).len();
            (v[..split].trim(), &v[split..])
        };
        let Ok(x) = num.parse::<f64>() else {
            self.issue(key, format!("cannot parse {v:?} as a number"));
            return None;
        };
        if !x.is_finite() {
            self.issue(key, "value must be finite");
            return None;
        }
        if suffix.is_empty() {
            return Some(x);
        }
        match suffix_scale(kind, suffix) {
            Some(scale) if si => Some(x * scale),
            Some(_) => {
                self.issue(key, format!("unit suffix {suffix:?} requires units = si"));
                None
            }
            None => {
                self.issue(key, format!("unit suffix {suffix:?} is not accepted here"));
                None
            }
        }
    }

    fn integer(&mut self, key: &str) -> Option<u64> {
        let v = self.text(key)?.to_string();
        match v.parse::<u64>() {
            Ok(n) => Some(n),
            Err(_) => {
                self.issue(key, format!("expected a non-negative integer, got {v:?}"));
                None
            }
        }
    }

    fn positive(&mut self, key: &str, si: bool, default: f64) -> f64 {
        match self.number(key, si) {
            Some(x) if x > 0.0 => x,
            Some(x) => {
                self.issue(key, format!("must be positive, got {x}"));
                default
            }
            None => default,
        }
    }

    fn count(&mut self, key: &str, default: usize, min: usize) -> usize {
        match self.integer(key) {
            Some(n) if n as usize >= min => n as usize,
            Some(n) => {
                self.issue(key, format!("must be at least {min}, got {n}"));
                default
            }
            None => default,
        }
    }

    fn exclusive(&mut self, a: &[&str], b: &[&str]) -> (bool, bool) {
        let has_a = a.iter().any(|k| self.has(k));
        let has_b = b.iter().any(|k| self.has(k));
        if has_a && has_b {
            let key = b.iter().find(|k| self.has(k)).expect("has_b");
            let msg = format!("({}) and ({}) are mutually exclusive", a.join(", "), b.join(", "));
            self.issue(key, msg);
        }
        (has_a, has_b)
    }

    fn build(&mut self) -> Option<SimulationConfig> {
        let engine = self.choice(
            "engine",
            EngineChoice::Analytic,
            &[
                ("analytic", EngineChoice::Analytic),
                ("exact", EngineChoice::Exact),
                ("both", EngineChoice::Both),
            ],
        );

        let physical = ["charge", "mass", "b_field"];
        let direct = ["alpha", "omega"];
        let (has_phys, has_direct) = self.exclusive(&physical, &direct);
        let default_units = if has_phys { UnitMode::SI } else { UnitMode::Natural };
        let units = self.choice("units", default_units, &[("natural", UnitMode::Natural), ("si", UnitMode::SI)]);
        let si = units == UnitMode::SI;

        let spin = if has_phys && !has_direct {
            for k in physical {
                if !self.has(k) {
                    self.issues.push(ConfigIssue {
                        key: k.into(),
                        line: None,
                        message: "required together with the other physical parameters".into(),
                    });
                }
            }
            let charge = self.positive("charge", si, 1.0);
            let mass = self.positive("mass", si, 1.0);
            let b_field = match self.number("b_field", si) {
                Some(b) if b >= 0.0 => b,
                Some(b) => {
                    self.issue("b_field", format!("must be non-negative, got {b}"));
                    0.0
                }
                None => 0.0,
            };
            SpinParams::Physical { charge, mass, b_field }
        } else {
            if !has_phys && !has_direct {
                self.issues.push(ConfigIssue {
                    key: "alpha".into(),
                    line: None,
                    message: "give either (charge, mass, b_field) or (alpha, omega)".into(),
                });
            }
            let nonneg = |r: &mut Self, k: &str| match r.number(k, si) {
                Some(x) if x >= 0.0 => x,
                Some(x) => {
                    r.issue(k, format!("must be non-negative, got {x}"));
                    0.0
                }
                None => {
                    if has_direct && !r.has(k) {
                        r.issues.push(ConfigIssue {
                            key: k.into(),
                            line: None,
                            message: "required together with the other coupling parameter".into(),
                        });
                    }
                    0.0
                }
            };
            let alpha = nonneg(self, "alpha");
            let omega = nonneg(self, "omega");
            SpinParams::Coupling { alpha, omega }
        };

        let (has_abs, _) = self.exclusive(&["cutoff"], &["cutoff_ratio"]);
        let cutoff = if has_abs {
            Cutoff::Absolute(self.positive("cutoff", si, 1.0))
        } else {
            let r = self.positive("cutoff_ratio", si, 10.0);
            if r <= 2.0 {
                self.issue("cutoff_ratio", format!("must exceed 2, got {r}"));
            }
            Cutoff::Ratio(r)
        };
        let shift_method = self.choice(
            "shift_method",
            ShiftMethod::ClosedForm,
            &[("closed_form", ShiftMethod::ClosedForm), ("quadrature", ShiftMethod::Quadrature)],
        );

        let bath_kind = self.choice("bath", "resonant", &[("resonant", "resonant"), ("product", "product")]);
        let resonant_keys = ["n_modes", "spacing_over_beta"];
        let product_keys = ["n_freq", "n_angular", "window_min", "window_max"];
        let (wrong, right): (&[&str], &[&str]) = if bath_kind == "resonant" {
            (&product_keys, &resonant_keys)
        } else {
            (&resonant_keys, &product_keys)
        };
        for k in wrong {
            if self.has(k) {
                self.issue(k, format!("does not apply to bath = {bath_kind} (use {})", right.join(", ")));
            }
        }
        let bath = if bath_kind == "resonant" {
            BathSpec::Resonant {
                n_modes: self.count("n_modes", 12, 1),
                spacing_over_beta: self.positive("spacing_over_beta", false, 0.8),
            }
        } else {
            let window_min = self.positive("window_min", false, 0.2);
            let window_max = self.positive("window_max", false, 5.0);
            if window_max <= window_min {
                self.issue("window_max", format!("must exceed window_min = {window_min}"));
            }
            BathSpec::Product {
                n_freq: self.count("n_freq", 8, 1),
                n_angular: self.count("n_angular", 2, 1),
                window_min,
                window_max,
            }
        };
        let n_max = self.count("n_max", 1, 1);
        let coupling_normalization = self.choice(
            "coupling_normalization",
            CouplingNormalization::RateMatched,
            &[
                ("rate_matched", CouplingNormalization::RateMatched),
                ("field", CouplingNormalization::Field),
            ],
        );
        let coupling_scale = match self.number("coupling_scale", false) {
            Some(s) if s >= 0.0 => s,
            Some(s) => {
                self.issue("coupling_scale", format!("must be non-negative, got {s}"));
                1.0
            }
            None => 1.0,
        };
        let coupling_terms = self.choice(
            "coupling_terms",
            CouplingTerms::Full,
            &[("full", CouplingTerms::Full), ("rotating_wave", CouplingTerms::RotatingWave)],
        );
        let integrator = self.choice(
            "integrator",
            Engine::Chebyshev,
            &[
                ("chebyshev", Engine::Chebyshev),
                ("rk45", Engine::RungeKutta),
                ("dense", Engine::Dense),
            ],
        );

        let (has_tmax, has_decay) = self.exclusive(&["t_max"], &["t_max_decay"]);
        let t_max = if has_tmax {
            TimeSpan::Absolute(self.positive("t_max", si, 1.0))
        } else if has_decay {
            TimeSpan::DecayTimes(self.positive("t_max_decay", false, 10.0))
        } else if engine.exact() && matches!(bath, BathSpec::Resonant { .. }) {
            let f = self.positive("window_fraction", false, 0.75);
            if f >= 1.0 {
                self.issue("window_fraction", format!("must be below 1, got {f}"));
            }
            TimeSpan::Recurrence(f)
        } else {
            TimeSpan::DecayTimes(10.0)
        };
        if self.has("window_fraction") && !matches!(t_max, TimeSpan::Recurrence(_)) {
            self.issue("window_fraction", "only applies to exact runs on the resonant bath without t_max");
        }
        let n_samples = self.count("n_samples", 201, 2);

        let (has_exp, has_ang) = self.exclusive(&["sz0", "splus0_re", "splus0_im"], &["theta", "phi"]);
        let initial = if has_exp && !has_ang {
            let sz0 = self.number("sz0", false).unwrap_or(0.5);
            let re = self.number("splus0_re", false).unwrap_or(0.0);
            let im = self.number("splus0_im", false).unwrap_or(0.0);
            let r2 = sz0 * sz0 + re * re + im * im;
            if r2 > 0.25 * (1.0 + 1e-12) {
                self.issue("sz0", format!("|S| = {} exceeds 1/2 (values are in units of hbar)", r2.sqrt()));
            } else if engine.exact() && (r2 - 0.25).abs() > 1e-9 {
                self.issue("sz0", "the exact engine needs a pure initial state, |S| = 1/2");
            }
            InitialState::Expectations {
                sz0,
                splus0_re: re,
                splus0_im: im,
            }
        } else {
            InitialState::Angles {
                theta: self.number("theta", false).unwrap_or(0.0),
                phi: self.number("phi", false).unwrap_or(0.0),
            }
        };

        let tolerance = self.positive("tolerance", false, 1e-10);
        let dimension_cap = self.count("dimension_cap", DEFAULT_DIMENSION_CAP, 1);
        let output_dir = PathBuf::from(self.text("output_dir").unwrap_or("vacflip-out"));
        let seed = self.integer("seed").unwrap_or(0);

        if engine.exact() && si {
            self.issue(
                if self.has("engine") { "engine" } else { "units" },
                "the exact engine runs in natural units only",
            );
        }

        self.issues.is_empty().then_some(SimulationConfig {
            engine,
            units,
            spin,
            cutoff,
            shift_method,
            bath,
            n_max,
            coupling_normalization,
            coupling_scale,
            coupling_terms,
            integrator,
            t_max,
            n_samples,
            initial,
            tolerance,
            dimension_cap,
            output_dir,
            seed,
        })
    }
}
