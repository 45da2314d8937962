//! Sectioned `key = value` run configuration.
//!
//! ```text
//! [run]
//! engine = sde-jc
//! runs = 3000
//! [basis]
//! family = additive-noise
//! delta = 4, 0
//! ```
//!
//! Complex values are written `re, im` (or just `re`); complex lists separate entries
//! with `;`, real lists with `,`. Unknown sections and keys are rejected. Any key can be
//! overridden from the environment as `PSTOCH_<SECTION>__<KEY>`.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::PathBuf;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::basis::BasisFamily;
use crate::error::{Error, Result};
use crate::init::{init_points, AtomicDensity};
use crate::model::ModelParams;
use crate::observables::ObservableKind;
use crate::reference::{TruncatedSpace, DEFAULT_DIMENSION_CAP};
use crate::sde::{TimeGrid, DEFAULT_DIVERGENCE_THRESHOLD};

pub const ENV_PREFIX: &str = "PSTOCH_";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Engine {
    /// Positive-P SDE in `(alpha, beta, z, w)`.
    SdeJc,
    /// Stochastic Maxwell-Bloch SDE in physical variables (coherent-spin states only).
    SdeMbExperimental,
    /// Truncated-Fock master equation.
    Reference,
    /// Deterministic Maxwell-Bloch equations.
    Mb,
}

impl Engine {
    pub fn name(&self) -> &'static str {
        match self {
            Engine::SdeJc => "sde-jc",
            Engine::SdeMbExperimental => "sde-mb-experimental",
            Engine::Reference => "reference",
            Engine::Mb => "mb",
        }
    }

    pub fn is_stochastic(&self) -> bool {
        matches!(self, Engine::SdeJc | Engine::SdeMbExperimental)
    }

    fn parse(s: &str) -> Option<Self> {
        [Engine::SdeJc, Engine::SdeMbExperimental, Engine::Reference, Engine::Mb]
            .into_iter()
            .find(|e| e.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub engine: Engine,
    pub model: ModelParams,
    pub family: BasisFamily,
    pub grid: TimeGrid,
    pub runs: usize,
    pub seed: u64,
    /// Worker threads for stochastic engines; 0 uses the available parallelism.
    pub workers: usize,
    pub divergence_threshold: f64,
    pub observables: Vec<ObservableKind>,
    /// Positions at which `E(x)` and `H(x)` are recorded.
    pub probes: Vec<f64>,
    pub output: Option<PathBuf>,
    /// Initial coherent amplitude per mode.
    pub alpha: Vec<Complex64>,
    pub atom: AtomicDensity,
    pub n_max: usize,
    pub dimension_cap: usize,
    /// RK4 steps per grid interval for the deterministic engines.
    pub substeps: usize,
    /// Must be set to run the experimental engine.
    pub experimental: bool,
}

impl RunConfig {
    /// The benchmark setup: one mode at the antinode, `Omega = 1000`, `omega = 1100`,
    /// `g = 200`, coherent field `alpha = 5`, thermal atom at `beta hbar Omega = 1`, additive
    /// noise states with `delta = 4`, 8192 steps over half a cavity period, 3000 paths.
    pub fn benchmark(engine: Engine) -> Self {
        let model = ModelParams::single_mode(1000.0, 1100.0, 200.0);
        RunConfig {
            engine,
            grid: TimeGrid {
                t_start: 0.0,
                t_end: PI / 1100.0,
                steps: 8192,
            },
            model,
            family: BasisFamily::AdditiveNoise {
                delta: Complex64::new(4.0, 0.0),
                kappa: Complex64::new(0.0, 0.0),
            },
            runs: 3000,
            seed: 0,
            workers: 0,
            divergence_threshold: DEFAULT_DIVERGENCE_THRESHOLD,
            observables: ObservableKind::defaults(),
            probes: Vec::new(),
            output: None,
            alpha: vec![Complex64::new(5.0, 0.0)],
            atom: AtomicDensity::thermal(1.0),
            n_max: 60,
            dimension_cap: DEFAULT_DIMENSION_CAP,
            substeps: 1,
            experimental: false,
        }
    }

    /// Observable columns including the field probes.
    pub fn columns(&self) -> Vec<ObservableKind> {
        let mut out = self.observables.clone();
        for &x in &self.probes {
            out.push(ObservableKind::FieldE(x));
            out.push(ObservableKind::FieldH(x));
        }
        out
    }

    /// Cross-field validation of everything a run needs.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Validation(msg));
        self.model.validate()?;
        self.grid.validate()?;
        if let BasisFamily::AdditiveNoise { delta, kappa } = self.family {
            BasisFamily::additive_noise(delta, kappa)?;
        }
        if self.runs == 0 {
            return bad("runs must be at least 1".into());
        }
        if !(self.divergence_threshold > 0.0) {
            return bad("divergence_threshold must be positive".into());
        }
        if self.substeps == 0 {
            return bad("substeps must be at least 1".into());
        }
        if self.alpha.len() != self.model.mode_count() {
            return bad(format!(
                "{} initial amplitudes for {} modes",
                self.alpha.len(),
                self.model.mode_count()
            ));
        }
        if self.observables.is_empty() && self.probes.is_empty() {
            return bad("no observables selected".into());
        }
        for k in &self.observables {
            k.check(&self.model)?;
        }
        for &x in &self.probes {
            if !(x >= 0.0 && x <= self.model.cavity_length) {
                return bad(format!("probe position {x} lies outside the cavity"));
            }
        }
        let p = self.atom.rho11.re;
        let r2 = self.atom.rho12.norm_sqr();
        if !(0.0..=1.0).contains(&p) || r2 > p * (1.0 - p) + 1e-12 {
            return bad("initial atomic density is not a valid density matrix".into());
        }
        match self.engine {
            Engine::SdeJc => {
                init_points(&self.atom, &self.family)?;
            }
            Engine::SdeMbExperimental => {
                if !self.experimental {
                    return bad("engine sde-mb-experimental requires experimental = true in [run]".into());
                }
                if self.family != BasisFamily::CoherentSpin {
                    return bad("engine sde-mb-experimental requires family = coherent-spin".into());
                }
                init_points(&self.atom, &self.family)?;
            }
            Engine::Reference => {
                TruncatedSpace::new(self.n_max, self.model.mode_count(), self.dimension_cap)?;
            }
            Engine::Mb => {}
        }
        Ok(())
    }
}

/// Raw `(section, key) -> (value, line)` table; line 0 marks environment overrides.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawConfig {
    entries: BTreeMap<(String, String), (String, usize)>,
}

const KEYS: &[(&str, &[&str])] = &[
    (
        "run",
        &[
            "engine",
            "runs",
            "seed",
            "workers",
            "divergence_threshold",
            "observables",
            "probes",
            "output",
            "experimental",
        ],
    ),
    (
        "model",
        &[
            "hbar",
            "atom_frequency",
            "mode_frequencies",
            "mode_count",
            "couplings",
            "cavity_length",
            "area",
            "epsilon0",
            "mu0",
            "atom_position",
            "rate_12",
            "rate_21",
            "rate_dephasing",
        ],
    ),
    ("basis", &["family", "delta", "kappa"]),
    ("init", &["alpha", "rho11", "rho12", "beta"]),
    ("grid", &["t_start", "t_end", "steps"]),
    ("reference", &["n_max", "dimension_cap", "substeps"]),
];

fn known(section: &str, key: &str) -> std::result::Result<(), String> {
    match KEYS.iter().find(|(s, _)| *s == section) {
        None => Err(format!("unknown section [{section}]")),
        Some((_, keys)) if !keys.contains(&key) => Err(format!("unknown key '{key}' in [{section}]")),
        Some(_) => Ok(()),
    }
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut raw = RawConfig::default();
        let mut section: Option<String> = None;
        for (idx, line) in text.lines().enumerate() {
            let lineno = idx + 1;
            let err = |msg: String| Error::Parse { line: lineno, msg };
            let content = line.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            if let Some(rest) = content.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| err("unterminated section header".into()))?
                    .trim()
                    .to_ascii_lowercase();
                if !KEYS.iter().any(|(s, _)| *s == name) {
                    return Err(err(format!("unknown section [{name}]")));
                }
                section = Some(name);
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| err(format!("expected 'key = value', got '{content}'")))?;
            let key = key.trim().to_ascii_lowercase();
            let sec = section
                .clone()
                .ok_or_else(|| err(format!("key '{key}' appears before any section")))?;
            known(&sec, &key).map_err(err)?;
            if raw.entries.contains_key(&(sec.clone(), key.clone())) {
                return Err(err(format!("duplicate key '{key}' in [{sec}]")));
            }
            raw.entries.insert((sec, key), (value.trim().to_string(), lineno));
        }
        Ok(raw)
    }

    /// Applies `PSTOCH_<SECTION>__<KEY>` variables; other variables are ignored.
    pub fn apply_env<I, K, V>(&mut self, vars: I) -> Result<()>
    where
        I: IntoIterator<Item = (K, V)>,
        K: AsRef<str>,
        V: AsRef<str>,
    {
        for (name, value) in vars {
            let Some(rest) = name.as_ref().strip_prefix(ENV_PREFIX) else {
                continue;
            };
            let Some((section, key)) = rest.split_once("__") else {
                return Err(Error::Validation(format!(
                    "environment override {} must look like {ENV_PREFIX}<SECTION>__<KEY>",
                    name.as_ref()
                )));
            };
            let (section, key) = (section.to_ascii_lowercase(), key.to_ascii_lowercase());
            known(&section, &key)
                .map_err(|msg| Error::Validation(format!("{}: {msg}", name.as_ref())))?;
            self.entries
                .insert((section, key), (value.as_ref().trim().to_string(), 0));
        }
        Ok(())
    }

    pub fn set(&mut self, section: &str, key: &str, value: impl Into<String>) -> Result<()> {
        known(section, key).map_err(Error::Validation)?;
        self.entries
            .insert((section.into(), key.into()), (value.into(), 0));
        Ok(())
    }

    fn get(&self, section: &str, key: &str) -> Option<(&str, usize)> {
        self.entries
            .get(&(section.to_string(), key.to_string()))
            .map(|(v, l)| (v.as_str(), *l))
    }

    fn value<T>(&self, section: &str, key: &str, parse: impl Fn(&str) -> std::result::Result<T, String>) -> Result<Option<T>> {
        match self.get(section, key) {
            None => Ok(None),
            Some((text, line)) => parse(text).map(Some).map_err(|msg| {
                let msg = format!("[{section}] {key}: {msg}");
                if line == 0 {
                    Error::Validation(format!("environment override {msg}"))
                } else {
                    Error::Parse { line, msg }
                }
            }),
        }
    }

    pub fn build(&self) -> Result<RunConfig> {
        let engine = self
            .value("run", "engine", |s| {
                Engine::parse(s).ok_or_else(|| {
                    "expected one of sde-jc, sde-mb-experimental, reference, mb".to_string()
                })
            })?
            .ok_or_else(|| Error::Validation("[run] engine is required".into()))?;
        let mut cfg = RunConfig::benchmark(engine);

        macro_rules! set {
            ($field:expr, $section:literal, $key:literal, $parser:expr) => {
                if let Some(v) = self.value($section, $key, $parser)? {
                    $field = v;
                }
            };
        }
        set!(cfg.runs, "run", "runs", parse_num::<usize>);
        set!(cfg.seed, "run", "seed", parse_num::<u64>);
        set!(cfg.workers, "run", "workers", parse_num::<usize>);
        set!(cfg.divergence_threshold, "run", "divergence_threshold", parse_f64);
        set!(cfg.observables, "run", "observables", parse_observables);
        set!(cfg.probes, "run", "probes", parse_f64_list);
        set!(cfg.experimental, "run", "experimental", parse_bool);
        if let Some(path) = self.value("run", "output", |s| Ok(s.to_string()))? {
            cfg.output = if path.is_empty() { None } else { Some(PathBuf::from(path)) };
        }

        let m = &mut cfg.model;
        set!(m.hbar, "model", "hbar", parse_f64);
        set!(m.atom_frequency, "model", "atom_frequency", parse_f64);
        set!(m.cavity_length, "model", "cavity_length", parse_f64);
        set!(m.area, "model", "area", parse_f64);
        set!(m.epsilon0, "model", "epsilon0", parse_f64);
        set!(m.mu0, "model", "mu0", parse_f64);
        set!(m.atom_position, "model", "atom_position", parse_f64);
        set!(m.rate_12, "model", "rate_12", parse_f64);
        set!(m.rate_21, "model", "rate_21", parse_f64);
        set!(m.rate_dephasing, "model", "rate_dephasing", parse_f64);
        let explicit = self.value("model", "mode_frequencies", parse_f64_list)?;
        let count = self.value("model", "mode_count", parse_num::<usize>)?;
        match (explicit, count) {
            (Some(freqs), Some(n)) if freqs.len() != n => {
                return Err(Error::Validation(format!(
                    "mode_count = {n} but {} mode frequencies are given",
                    freqs.len()
                )))
            }
            (Some(freqs), _) => m.mode_frequencies = freqs,
            (None, Some(n)) => {
                m.mode_frequencies =
                    ModelParams::geometric_frequencies(m.cavity_length, m.epsilon0, m.mu0, n)
            }
            (None, None) => {}
        }
        set!(m.couplings, "model", "couplings", parse_f64_list);

        let family = self.value("basis", "family", |s| match s {
            "coherent-spin" | "additive-noise" => Ok(s.to_string()),
            _ => Err("expected coherent-spin or additive-noise".to_string()),
        })?;
        let delta = self.value("basis", "delta", parse_complex)?;
        let kappa = self.value("basis", "kappa", parse_complex)?;
        match family.as_deref() {
            Some("coherent-spin") => {
                if delta.is_some() || kappa.is_some() {
                    return Err(Error::Validation(
                        "delta and kappa only apply to the additive-noise family".into(),
                    ));
                }
                cfg.family = BasisFamily::CoherentSpin;
            }
            _ => {
                cfg.family = BasisFamily::additive_noise(
                    delta.unwrap_or(Complex64::new(4.0, 0.0)),
                    kappa.unwrap_or(Complex64::new(0.0, 0.0)),
                )?;
            }
        }

        set!(cfg.alpha, "init", "alpha", parse_complex_list);
        let rho11 = self.value("init", "rho11", parse_f64)?;
        let rho12 = self.value("init", "rho12", parse_complex)?;
        let beta = self.value("init", "beta", parse_f64)?;
        cfg.atom = match (beta, rho11) {
            (Some(_), Some(_)) => {
                return Err(Error::Validation(
                    "[init] beta and rho11 are mutually exclusive".into(),
                ))
            }
            (Some(b), None) => {
                if rho12.is_some_and(|r| r.norm() != 0.0) {
                    return Err(Error::Validation(
                        "a thermal initial state has no coherence; drop [init] rho12".into(),
                    ));
                }
                AtomicDensity::thermal(b * cfg.model.hbar * cfg.model.atom_frequency)
            }
            (None, Some(p)) => AtomicDensity::new(p, rho12.unwrap_or_default())?,
            // beta = 1 / (hbar Omega)
            (None, None) => AtomicDensity::thermal(1.0),
        };

        set!(cfg.grid.t_start, "grid", "t_start", parse_f64);
        let t_end = self.value("grid", "t_end", parse_f64)?;
        cfg.grid.t_end = t_end.unwrap_or(cfg.grid.t_start + PI / cfg.model.mode_frequencies[0].abs().max(f64::MIN_POSITIVE));
        set!(cfg.grid.steps, "grid", "steps", parse_num::<usize>);

        set!(cfg.n_max, "reference", "n_max", parse_num::<usize>);
        set!(cfg.dimension_cap, "reference", "dimension_cap", parse_num::<usize>);
        set!(cfg.substeps, "reference", "substeps", parse_num::<usize>);

        cfg.validate()?;
        Ok(cfg)
    }
}

/// Parses and validates a configuration text.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    RawConfig::parse(text)?.build()
}

/// Writes a configuration that parses back to an equal [`RunConfig`].
pub fn serialize(cfg: &RunConfig) -> String {
    let mut s = String::new();
    let complex = |c: Complex64| format!("{}, {}", c.re, c.im);
    let reals = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ");
    let _ = writeln!(s, "[run]");
    let _ = writeln!(s, "engine = {}", cfg.engine.name());
    let _ = writeln!(s, "runs = {}", cfg.runs);
    let _ = writeln!(s, "seed = {}", cfg.seed);
    let _ = writeln!(s, "workers = {}", cfg.workers);
    let _ = writeln!(s, "divergence_threshold = {}", cfg.divergence_threshold);
    let names: Vec<String> = cfg.observables.iter().map(|k| k.to_string()).collect();
    let _ = writeln!(s, "observables = {}", names.join(", "));
    let _ = writeln!(s, "probes = {}", reals(&cfg.probes));
    if let Some(path) = &cfg.output {
        let _ = writeln!(s, "output = {}", path.display());
    }
    let _ = writeln!(s, "experimental = {}", cfg.experimental);
    let m = &cfg.model;
    let _ = writeln!(s, "\n[model]");
    let _ = writeln!(s, "hbar = {}", m.hbar);
    let _ = writeln!(s, "atom_frequency = {}", m.atom_frequency);
    let _ = writeln!(s, "mode_frequencies = {}", reals(&m.mode_frequencies));
    let _ = writeln!(s, "couplings = {}", reals(&m.couplings));
    let _ = writeln!(s, "cavity_length = {}", m.cavity_length);
    let _ = writeln!(s, "area = {}", m.area);
    let _ = writeln!(s, "epsilon0 = {}", m.epsilon0);
    let _ = writeln!(s, "mu0 = {}", m.mu0);
    let _ = writeln!(s, "atom_position = {}", m.atom_position);
    let _ = writeln!(s, "rate_12 = {}", m.rate_12);
    let _ = writeln!(s, "rate_21 = {}", m.rate_21);
    let _ = writeln!(s, "rate_dephasing = {}", m.rate_dephasing);
    let _ = writeln!(s, "\n[basis]");
    let _ = writeln!(s, "family = {}", cfg.family.name());
    if let BasisFamily::AdditiveNoise { delta, kappa } = cfg.family {
        let _ = writeln!(s, "delta = {}", complex(delta));
        let _ = writeln!(s, "kappa = {}", complex(kappa));
    }
    let _ = writeln!(s, "\n[init]");
    let alphas: Vec<String> = cfg.alpha.iter().map(|&a| complex(a)).collect();
    let _ = writeln!(s, "alpha = {}", alphas.join("; "));
    let _ = writeln!(s, "rho11 = {}", cfg.atom.rho11.re);
    let _ = writeln!(s, "rho12 = {}", complex(cfg.atom.rho12));
    let _ = writeln!(s, "\n[grid]");
    let _ = writeln!(s, "t_start = {}", cfg.grid.t_start);
    let _ = writeln!(s, "t_end = {}", cfg.grid.t_end);
    let _ = writeln!(s, "steps = {}", cfg.grid.steps);
    let _ = writeln!(s, "\n[reference]");
    let _ = writeln!(s, "n_max = {}", cfg.n_max);
    let _ = writeln!(s, "dimension_cap = {}", cfg.dimension_cap);
    let _ = writeln!(s, "substeps = {}", cfg.substeps);
    s
}

fn parse_num<T: std::str::FromStr>(s: &str) -> std::result::Result<T, String> {
    s.parse::<T>().map_err(|_| format!("'{s}' is not a non-negative integer"))
}

fn parse_f64(s: &str) -> std::result::Result<f64, String> {
    s.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| format!("'{s}' is not a finite number"))
}

fn parse_bool(s: &str) -> std::result::Result<bool, String> {
    match s {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(format!("'{s}' is not a boolean")),
    }
}

fn parse_f64_list(s: &str) -> std::result::Result<Vec<f64>, String> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',').map(|p| parse_f64(p.trim())).collect()
}

fn parse_complex(s: &str) -> std::result::Result<Complex64, String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    match parts.as_slice() {
        [re] => Ok(Complex64::new(parse_f64(re)?, 0.0)),
        [re, im] => Ok(Complex64::new(parse_f64(re)?, parse_f64(im)?)),
        _ => Err(format!("'{s}' is not a complex number 're, im'")),
    }
}

fn parse_complex_list(s: &str) -> std::result::Result<Vec<Complex64>, String> {
    s.split(';').map(|p| parse_complex(p.trim())).collect()
}

fn parse_observables(s: &str) -> std::result::Result<Vec<ObservableKind>, String> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|p| p.trim().parse::<ObservableKind>().map_err(|e| e.to_string()))
        .collect()
}
