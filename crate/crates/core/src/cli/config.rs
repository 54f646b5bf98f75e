use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use serde::Serialize;
use toml::{Table, Value};

/// Experiments the runner knows about.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Brownian,
    Circle,
    So3,
    Cart,
    Compressible,
    Couette,
    Oscillator,
    Conundrum,
    BoundsReport,
    Debruijn,
}

impl Experiment {
    pub const ALL: [Experiment; 10] = [
        Experiment::Brownian,
        Experiment::Circle,
        Experiment::So3,
        Experiment::Cart,
        Experiment::Compressible,
        Experiment::Couette,
        Experiment::Oscillator,
        Experiment::Conundrum,
        Experiment::BoundsReport,
        Experiment::Debruijn,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Experiment::Brownian => "brownian",
            Experiment::Circle => "circle",
            Experiment::So3 => "so3",
            Experiment::Cart => "cart",
            Experiment::Compressible => "compressible",
            Experiment::Couette => "couette",
            Experiment::Oscillator => "oscillator",
            Experiment::Conundrum => "conundrum",
            Experiment::BoundsReport => "bounds-report",
            Experiment::Debruijn => "debruijn",
        }
    }

    pub fn from_id(id: &str) -> Result<Self, ConfigError> {
        Self::ALL.into_iter().find(|e| e.id() == id).ok_or_else(|| ConfigError::UnknownExperiment {
            id: id.to_string(),
            suggestion: suggest(id, Self::ALL.iter().map(|e| e.id())),
        })
    }

    pub fn describe(self) -> &'static str {
        match self {
            Experiment::Brownian => "free Brownian motion on a Euclidean grid",
            Experiment::Circle => "heat kernel on the circle and its entropy bounds",
            Experiment::So3 => "isotropic heat kernel on SO(3)",
            Experiment::Cart => "noisy kinematic cart on SE(2), grid vs ensemble",
            Experiment::Compressible => "1-d compressible-flow transport and its moment ODE",
            Experiment::Couette => "2-d transport in Couette flow between walls",
            Experiment::Oscillator => "damped noisy oscillator, Boltzmann equilibrium and FDT",
            Experiment::Conundrum => "zero-mass limit: Ito vs Stratonovich stationary defects",
            Experiment::BoundsReport => "entropy-power and Fisher-convolution inequalities, CRB cascade",
            Experiment::Debruijn => "de Bruijn identity on the circle and SO(3)",
        }
    }

    /// Complete default parameter table with a one-line description per key.
    pub fn defaults(self) -> Vec<(&'static str, Value, &'static str)> {
        let f = Value::Float;
        let i = Value::Integer;
        let s = |v: &str| Value::String(v.to_string());
        match self {
            Experiment::Brownian => vec![
                ("dim", i(2), "state dimension"),
                ("cells", i(256), "cells per axis"),
                ("half_width", f(5.0), "box half width"),
                ("d", f(1.0), "diffusion constant, D = d I"),
                ("sigma0", f(0.05), "initial variance per axis"),
                ("t_end", f(0.95), "final time"),
                ("samples", i(40), "report intervals"),
                ("dt", f(0.0), "time step, 0 picks one from the stability bound"),
                ("safety", f(0.9), "fraction of the stability bound when dt = 0"),
                ("rate_tol", f(0.02), "relative tolerance on the closed-form rate"),
                ("rate_window", f(0.2), "rate is certified for t + sigma0/d at or above this"),
            ],
            Experiment::Circle => vec![
                ("d", f(1.0), "diffusion constant"),
                ("cells", i(256), "cells on the circle"),
                ("t_start", f(0.05), "first sample time"),
                ("t_end", f(5.0), "last sample time"),
                ("samples", i(40), "log-spaced samples"),
                ("representation", s("auto"), "kernel form used for the grid: auto, fourier, folded"),
                ("kernel_tol", f(1e-8), "sup tolerance between the two kernel forms"),
                ("variance_tol", f(1e-6), "tolerance of the variance series against quadrature"),
            ],
            Experiment::So3 => vec![
                ("k", f(1.0), "diffusion constant K"),
                ("cells", i(256), "angle cells"),
                ("kt_start", f(0.02), "first sample of Kt"),
                ("kt_end", f(2.0), "last sample of Kt"),
                ("samples", i(30), "log-spaced samples"),
                ("kt_flat", f(5.0), "Kt at which the kernel must be nearly uniform"),
                ("kernel_tol", f(1e-6), "sup tolerance between the two kernel forms"),
                ("flat_tol", f(1e-3), "tolerance on sup |f - 1| at kt_flat"),
            ],
            Experiment::Cart => vec![
                ("wheel_radius", f(1.0), "wheel radius r"),
                ("wheelbase", f(2.0), "axle length L"),
                ("wheel_rate", f(1.0), "commanded wheel rate"),
                ("noise", f(1.0), "wheel-rate noise intensity D"),
                ("t_end", f(1.0), "final time"),
                ("samples", i(10), "report intervals"),
                ("spacing", f(0.15), "target x/y cell width"),
                ("theta_cells", i(48), "heading cells"),
                ("coarse_x", i(8), "comparison bins in x"),
                ("coarse_y", i(8), "comparison bins in y"),
                ("coarse_theta", i(8), "comparison bins in heading"),
                ("particles", i(100_000), "ensemble size"),
                ("spread", f(0.4), "initial standard deviation in x, y and heading"),
                ("safety", f(0.8), "fraction of the stability bound"),
                ("l1_tol", f(0.05), "L1 tolerance between histogram and grid"),
                ("entropy_tol", f(0.02), "relative entropy gap tolerance"),
                ("rate_tol", f(0.05), "relative tolerance between 1/2 tr[DF] and dS/dt"),
            ],
            Experiment::Compressible => vec![
                ("d0", f(1.0), "base diffusivity D0"),
                ("kappa0", f(0.1), "compressibility kappa0"),
                ("u0", f(1.0), "base velocity u0"),
                ("mu0", f(0.0), "initial mean"),
                ("sigma0", f(0.1), "initial variance"),
                ("lower", f(-8.0), "left edge of the grid"),
                ("upper", f(16.0), "right edge of the grid"),
                ("cells", i(480), "grid cells"),
                ("t_end", f(1.0), "final time"),
                ("samples", i(20), "report intervals"),
                ("dt", f(0.0), "time step, 0 picks one from the stability bound"),
                ("safety", f(0.9), "fraction of the stability bound when dt = 0"),
                ("particles", i(100_000), "ensemble size"),
                ("sde_dt", f(0.001), "ensemble time step"),
                ("grid_mean_tol", f(1e-6), "absolute tolerance of the grid mean against the moment ODE"),
                ("ensemble_tol", f(0.01), "relative tolerance of the ensemble mean"),
            ],
            Experiment::Couette => vec![
                ("d0", f(0.1), "diffusivity D0"),
                ("u0", f(1.0), "wall velocity U0"),
                ("height", f(1.0), "gap H"),
                ("x_lower", f(-2.0), "left edge"),
                ("x_upper", f(3.0), "right edge"),
                ("x_cells", i(200), "cells in x"),
                ("y_cells", i(40), "cells across the gap"),
                ("sigma0", f(0.02), "initial variance in x and y"),
                ("t_end", f(1.0), "final time"),
                ("samples", i(20), "report intervals"),
                ("dt", f(0.0), "time step, 0 picks one from the stability bound"),
                ("safety", f(0.9), "fraction of the stability bound when dt = 0"),
                ("rate_tol", f(0.02), "relative tolerance between Theorem 1 and dS/dt"),
            ],
            Experiment::Oscillator => vec![
                ("m", f(1.0), "mass"),
                ("k", f(1.0), "spring constant"),
                ("beta", f(1.0), "inverse temperature"),
                ("b0", f(std::f64::consts::SQRT_2), "noise amplitude"),
                ("c_scale", f(1.0), "damping as a multiple of (beta/2) b0^2"),
                ("half_width", f(8.0), "phase box half width for the stationarity check"),
                ("cells", i(512), "cells per axis for the stationarity check"),
                ("inflate", f(1.2), "damping factor for the off-equilibrium comparison"),
                ("stationarity_tol", f(1e-3), "L1 tolerance of the Boltzmann residual"),
                ("evo_half_width", f(8.0), "phase box half width for the relaxation run"),
                ("evo_cells", i(128), "cells per axis for the relaxation run"),
                ("q0", f(2.0), "initial mean position"),
                ("p0", f(0.0), "initial mean momentum"),
                ("sigma0", f(0.25), "initial variance per axis"),
                ("t_end", f(2.0), "final time"),
                ("samples", i(20), "report intervals"),
                ("dt", f(0.0), "time step, 0 picks one from the stability bound"),
                ("safety", f(0.9), "fraction of the stability bound when dt = 0"),
            ],
            Experiment::Conundrum => vec![
                ("b0", f(1.0), "b(x) = b0 + b1 x"),
                ("b1", f(0.1), "slope of b"),
                ("k", f(1.0), "spring constant"),
                ("beta", f(1.0), "inverse temperature"),
                ("x_min", f(-3.0), "left end of the sample range"),
                ("x_max", f(3.0), "right end of the sample range"),
                ("points", i(601), "sample points"),
                ("gap_tol", f(1e-10), "tolerance on max |D1 - 2 D2|"),
            ],
            Experiment::BoundsReport => vec![
                ("cells", i(1120), "cells for the 1-d convolution pairs"),
                ("half_width", f(14.0), "half width of the 1-d box"),
                ("var1", f(1.0), "variance of the first Gaussian"),
                ("var2", f(2.0), "variance of the second Gaussian"),
                ("mix_sep", f(1.5), "mixture component offset"),
                ("mix_var", f(0.4), "mixture component variance"),
                ("equality_tol", f(1e-6), "tolerance for the Gaussian equality cases"),
                ("ou_cells", i(128), "cells per axis of the 2-d OU run"),
                ("ou_half_width", f(6.0), "half width of the OU box"),
                ("t_end", f(1.0), "OU final time"),
                ("samples", i(10), "OU report intervals"),
            ],
            Experiment::Debruijn => vec![
                ("space", s("both"), "circle, so3 or both"),
                ("d", f(1.0), "circle diffusion constant"),
                ("drift", f(0.3), "circle rotation rate"),
                ("circle_cells", i(256), "circle cells"),
                ("circle_alpha_t", f(0.2), "the start density is the circle kernel at this time"),
                ("k", f(1.0), "SO(3) diffusion constant K"),
                ("so3_cells", i(256), "SO(3) angle cells"),
                ("so3_alpha_t", f(0.1), "the start density is the SO(3) kernel at this time"),
                ("t_start", f(0.1), "first circle sample"),
                ("so3_t_start", f(0.05), "first SO(3) sample"),
                ("t_end", f(1.0), "last sample"),
                ("samples", i(10), "samples per group"),
            ],
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("unknown experiment `{id}`{}", hint(suggestion))]
    UnknownExperiment { id: String, suggestion: Option<String> },
    #[error("unknown key `{key}` in [{section}]{}", hint(suggestion))]
    UnknownKey { section: String, key: String, suggestion: Option<String> },
    #[error("key `{key}` in [{section}] expects {expected}, got {got}")]
    TypeMismatch { section: String, key: String, expected: &'static str, got: String },
    #[error("value out of range: {0}")]
    OutOfRange(String),
    #[error("config file names experiment `{file}` but `{cli}` was requested")]
    ExperimentConflict { file: String, cli: String },
    #[error("malformed --set `{0}`, expected key=value")]
    BadSet(String),
    #[error("cannot parse config: {0}")]
    Parse(String),
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
}

fn hint(s: &Option<String>) -> String {
    s.as_ref().map(|s| format!(" (did you mean `{s}`?)")).unwrap_or_default()
}

/// Closest candidate by normalized Levenshtein similarity.
pub fn suggest<'a>(word: &str, candidates: impl IntoIterator<Item = &'a str>) -> Option<String> {
    candidates
        .into_iter()
        .map(|c| (strsim::normalized_levenshtein(word, c), c))
        .filter(|(s, _)| *s >= 0.6)
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, c)| c.to_string())
}

fn type_name(v: &Value) -> &'static str {
    match v {
        Value::String(_) => "a string",
        Value::Integer(_) => "an integer",
        Value::Float(_) => "a number",
        Value::Boolean(_) => "a boolean",
        Value::Datetime(_) => "a datetime",
        Value::Array(_) => "an array",
        Value::Table(_) => "a table",
    }
}

/// Coerces `v` to the type of `default`; integers are accepted for floats.
fn coerce(default: &Value, v: Value) -> Option<Value> {
    match (default, v) {
        (Value::Float(_), Value::Integer(i)) => Some(Value::Float(i as f64)),
        (Value::Float(_), v @ Value::Float(_)) => Some(v),
        (Value::Integer(_), v @ Value::Integer(_)) => Some(v),
        (Value::String(_), v @ Value::String(_)) => Some(v),
        (Value::Boolean(_), v @ Value::Boolean(_)) => Some(v),
        _ => None,
    }
}

/// A fully resolved experiment configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub params: BTreeMap<String, Value>,
}

impl ExperimentConfig {
    pub fn defaults(experiment: Experiment) -> Self {
        let params = experiment.defaults().into_iter().map(|(k, v, _)| (k.to_string(), v)).collect();
        Self { experiment, seed: 0, out: None, params }
    }

    pub fn f64(&self, key: &str) -> f64 {
        match self.params.get(key) {
            Some(Value::Float(v)) => *v,
            Some(Value::Integer(v)) => *v as f64,
            other => panic!("parameter `{key}` is not numeric: {other:?}"),
        }
    }

    pub fn usize(&self, key: &str) -> usize {
        match self.params.get(key) {
            Some(Value::Integer(v)) if *v >= 0 => *v as usize,
            other => panic!("parameter `{key}` is not a count: {other:?}"),
        }
    }

    pub fn str(&self, key: &str) -> &str {
        match self.params.get(key) {
            Some(Value::String(s)) => s,
            other => panic!("parameter `{key}` is not a string: {other:?}"),
        }
    }

    /// Sets one parameter, checking the key and type.
    pub fn set(&mut self, key: &str, value: Value) -> Result<(), ConfigError> {
        let section = self.experiment.id().to_string();
        let Some(default) = self.params.get(key) else {
            return Err(ConfigError::UnknownKey {
                section,
                key: key.to_string(),
                suggestion: suggest(key, self.params.keys().map(String::as_str)),
            });
        };
        let got = type_name(&value).to_string();
        let expected = type_name(default);
        self.params.insert(
            key.to_string(),
            coerce(default, value).ok_or(ConfigError::TypeMismatch { section, key: key.into(), expected, got })?,
        );
        Ok(())
    }

    /// TOML echo of the effective configuration.
    pub fn echo(&self) -> String {
        let mut top = Table::new();
        let mut exp = Table::new();
        exp.insert("id".into(), Value::String(self.experiment.id().into()));
        exp.insert("seed".into(), Value::Integer(self.seed as i64));
        if let Some(out) = &self.out {
            exp.insert("out".into(), Value::String(out.display().to_string()));
        }
        top.insert("experiment".into(), Value::Table(exp));
        let params: Table = self.params.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
        top.insert(self.experiment.id().into(), Value::Table(params));
        toml::to_string(&top).expect("config tables always serialize")
    }
}

/// Parses the right-hand side of `--set` as a TOML value, falling back to a bare string.
fn parse_value(raw: &str) -> Value {
    format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

/// Builds a config from defaults, an optional TOML document and `--set`
/// overrides, collecting every problem instead of stopping at the first.
pub fn resolve(
    experiment: Experiment,
    file: Option<&str>,
    sets: &[String],
    seed: Option<u64>,
) -> (ExperimentConfig, Vec<ConfigError>) {
    let mut cfg = ExperimentConfig::defaults(experiment);
    let mut errors = Vec::new();
    if let Some(text) = file {
        match text.parse::<Table>() {
            Ok(doc) => apply_document(&mut cfg, doc, &mut errors),
            Err(e) => errors.push(ConfigError::Parse(e.message().to_string())),
        }
    }
    for s in sets {
        let Some((key, raw)) = s.split_once('=') else {
            errors.push(ConfigError::BadSet(s.clone()));
            continue;
        };
        let key = key.trim();
        let key = key.strip_prefix(&format!("{}.", experiment.id())).unwrap_or(key);
        let value = parse_value(raw.trim());
        if key == "seed" || key == "experiment.seed" {
            match value {
                Value::Integer(v) if v >= 0 => cfg.seed = v as u64,
                v => errors.push(ConfigError::TypeMismatch {
                    section: "experiment".into(),
                    key: "seed".into(),
                    expected: "a nonnegative integer",
                    got: type_name(&v).into(),
                }),
            }
            continue;
        }
        if let Err(e) = cfg.set(key, value) {
            errors.push(e);
        }
    }
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    errors.extend(range_checks(&cfg));
    (cfg, errors)
}

fn apply_document(cfg: &mut ExperimentConfig, doc: Table, errors: &mut Vec<ConfigError>) {
    let sections: Vec<&str> = std::iter::once("experiment").chain(Experiment::ALL.iter().map(|e| e.id())).collect();
    for (name, value) in doc {
        let Value::Table(table) = value else {
            errors.push(ConfigError::UnknownKey {
                section: "top level".into(),
                suggestion: suggest(&name, sections.iter().copied()),
                key: name,
            });
            continue;
        };
        if name == "experiment" {
            for (key, v) in table {
                match (key.as_str(), v) {
                    ("id", Value::String(id)) => match Experiment::from_id(&id) {
                        Ok(e) if e == cfg.experiment => {}
                        Ok(_) => errors.push(ConfigError::ExperimentConflict { file: id, cli: cfg.experiment.id().into() }),
                        Err(e) => errors.push(e),
                    },
                    ("seed", Value::Integer(s)) if s >= 0 => cfg.seed = s as u64,
                    ("out", Value::String(s)) => cfg.out = Some(PathBuf::from(s)),
                    (k @ ("id" | "seed" | "out"), v) => errors.push(ConfigError::TypeMismatch {
                        section: "experiment".into(),
                        key: k.into(),
                        expected: if k == "seed" { "a nonnegative integer" } else { "a string" },
                        got: type_name(&v).into(),
                    }),
                    (k, _) => errors.push(ConfigError::UnknownKey {
                        section: "experiment".into(),
                        key: k.into(),
                        suggestion: suggest(k, ["id", "seed", "out"]),
                    }),
                }
            }
            continue;
        }
        let Ok(exp) = Experiment::from_id(&name) else {
            errors.push(ConfigError::UnknownKey {
                section: "top level".into(),
                suggestion: suggest(&name, sections.iter().copied()),
                key: name,
            });
            continue;
        };
        if exp == cfg.experiment {
            for (key, v) in table {
                if let Err(e) = cfg.set(&key, v) {
                    errors.push(e);
                }
            }
        } else {
            // Sections for other experiments are checked but not applied.
            let mut other = ExperimentConfig::defaults(exp);
            for (key, v) in table {
                if let Err(e) = other.set(&key, v) {
                    errors.push(e);
                }
            }
        }
    }
}

fn range_checks(cfg: &ExperimentConfig) -> Vec<ConfigError> {
    let mut out = Vec::new();
    let mut need = |ok: bool, msg: String| {
        if !ok {
            out.push(ConfigError::OutOfRange(msg));
        }
    };
    for (key, v) in &cfg.params {
        match v {
            Value::Float(x) if !x.is_finite() => need(false, format!("{key} = {x} is not finite")),
            Value::Integer(x) if *x < 0 => need(false, format!("{key} = {x} is negative")),
            _ => {}
        }
    }
    for key in ["cells", "x_cells", "y_cells", "evo_cells", "ou_cells", "circle_cells", "so3_cells", "theta_cells"] {
        if cfg.params.contains_key(key) {
            need(cfg.usize(key) >= 8, format!("{key} must be at least 8"));
        }
    }
    for key in ["samples", "particles", "points"] {
        if cfg.params.contains_key(key) {
            let floor = if key == "points" { 2 } else { 1 };
            need(cfg.usize(key) >= floor, format!("{key} must be at least {floor}"));
        }
    }
    for key in ["d", "d0", "k", "m", "beta", "t_end", "half_width", "sigma0", "height", "var1", "var2", "mix_var"] {
        if cfg.params.contains_key(key) {
            need(cfg.f64(key) > 0.0, format!("{key} must be positive"));
        }
    }
    if cfg.params.contains_key("safety") {
        let s = cfg.f64("safety");
        need(s > 0.0, format!("safety = {s} must be positive"));
    }
    if cfg.params.contains_key("dt") {
        need(cfg.f64("dt") >= 0.0, "dt must be nonnegative".into());
    }
    match cfg.experiment {
        Experiment::Brownian => need((1..=3).contains(&cfg.usize("dim")), "dim must be 1, 2 or 3".into()),
        Experiment::Circle => {
            need(cfg.f64("t_start") > 0.0 && cfg.f64("t_end") > cfg.f64("t_start"), "need 0 < t_start < t_end".into());
            need(
                matches!(cfg.str("representation"), "auto" | "fourier" | "folded"),
                format!("representation `{}` is not auto, fourier or folded", cfg.str("representation")),
            );
        }
        Experiment::So3 => {
            need(cfg.f64("kt_start") > 0.0 && cfg.f64("kt_end") > cfg.f64("kt_start"), "need 0 < kt_start < kt_end".into());
        }
        Experiment::Cart => {
            need(cfg.f64("wheel_radius") > 0.0 && cfg.f64("wheelbase") > 0.0, "wheel radius and wheelbase must be positive".into());
            need(cfg.f64("noise") >= 0.0 && cfg.f64("spread") > 0.0, "need noise >= 0 and spread > 0".into());
            need(cfg.usize("coarse_theta") > 0 && cfg.usize("theta_cells") % cfg.usize("coarse_theta").max(1) == 0,
                "theta_cells must be a multiple of coarse_theta".into());
            for key in ["coarse_x", "coarse_y", "coarse_theta"] {
                need(cfg.usize(key) >= 8, format!("{key} must be at least 8"));
            }
        }
        Experiment::Compressible => {
            need(cfg.f64("upper") > cfg.f64("lower"), "need lower < upper".into());
            need(cfg.f64("sde_dt") > 0.0, "sde_dt must be positive".into());
        }
        Experiment::Couette => need(cfg.f64("x_upper") > cfg.f64("x_lower"), "need x_lower < x_upper".into()),
        Experiment::Oscillator => {
            need(cfg.f64("evo_half_width") > 0.0 && cfg.f64("c_scale") >= 0.0, "need evo_half_width > 0, c_scale >= 0".into());
        }
        Experiment::Conundrum => {
            need(cfg.f64("x_max") > cfg.f64("x_min"), "need x_min < x_max".into());
            let (b0, b1) = (cfg.f64("b0"), cfg.f64("b1"));
            let lo = (b0 + b1 * cfg.f64("x_min")).min(b0 + b1 * cfg.f64("x_max"));
            need(lo > 0.0, format!("b(x) = {b0} + {b1} x must stay positive on the sample range"));
        }
        Experiment::BoundsReport => {}
        Experiment::Debruijn => {
            need(matches!(cfg.str("space"), "circle" | "so3" | "both"), format!("space `{}` is not circle, so3 or both", cfg.str("space")));
            need(cfg.f64("t_start") > 0.0 && cfg.f64("so3_t_start") > 0.0, "first samples must be positive".into());
            need(cfg.f64("t_end") > cfg.f64("t_start").max(cfg.f64("so3_t_start")), "t_end must follow both start times".into());
            need(cfg.usize("samples") >= 2, "samples must be at least 2".into());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_clean() {
        for e in Experiment::ALL {
            let (cfg, errs) = resolve(e, None, &[], None);
            assert!(errs.is_empty(), "{e}: {errs:?}");
            assert_eq!(cfg.seed, 0);
            assert_eq!(Experiment::from_id(e.id()).unwrap(), e);
        }
    }

    #[test]
    fn unknown_key_gets_a_suggestion() {
        let (_, errs) = resolve(Experiment::Cart, Some("[cart]\nwheelradius = 2.0\n"), &[], None);
        assert_eq!(
            errs,
            vec![ConfigError::UnknownKey {
                section: "cart".into(),
                key: "wheelradius".into(),
                suggestion: Some("wheel_radius".into())
            }]
        );
        assert!(errs[0].to_string().contains("did you mean `wheel_radius`"));
        let (_, errs) = resolve(Experiment::Cart, None, &["wheelradius=2".into()], None);
        assert_eq!(errs.len(), 1);
        assert!(matches!(Experiment::from_id("brownain"), Err(ConfigError::UnknownExperiment { suggestion: Some(s), .. }) if s == "brownian"));
    }

    #[test]
    fn file_and_overrides() {
        let doc = "[experiment]\nid = \"cart\"\nseed = 4\n\n[cart]\nwheel_radius = 2\n\n[circle]\nd = 3.0\n";
        let (cfg, errs) = resolve(Experiment::Cart, Some(doc), &["noise=0.5".into(), "cart.samples=4".into()], None);
        assert!(errs.is_empty(), "{errs:?}");
        assert_eq!(cfg.f64("wheel_radius"), 2.0);
        assert_eq!(cfg.f64("noise"), 0.5);
        assert_eq!(cfg.usize("samples"), 4);
        assert_eq!(cfg.seed, 4);
        let (cfg, _) = resolve(Experiment::Cart, Some(doc), &[], Some(9));
        assert_eq!(cfg.seed, 9);
        let (_, errs) = resolve(Experiment::Circle, Some(doc), &[], None);
        assert!(matches!(errs[0], ConfigError::ExperimentConflict { .. }));
    }

    #[test]
    fn type_and_range_errors() {
        let (_, errs) = resolve(Experiment::Brownian, None, &["cells=\"many\"".into(), "dim=7".into(), "oops".into()], None);
        assert_eq!(errs.len(), 3, "{errs:?}");
        assert!(matches!(errs[0], ConfigError::TypeMismatch { .. }));
        assert!(matches!(errs[1], ConfigError::BadSet(_)));
        assert!(matches!(errs[2], ConfigError::OutOfRange(_)));
        let (_, errs) = resolve(Experiment::Brownian, Some("[brownian\n"), &[], None);
        assert!(matches!(errs[0], ConfigError::Parse(_)));
    }

    #[test]
    fn echo_round_trips() {
        let (cfg, _) = resolve(Experiment::So3, None, &["k=2.5".into()], Some(3));
        let (again, errs) = resolve(Experiment::So3, Some(&cfg.echo()), &[], None);
        assert!(errs.is_empty());
        assert_eq!(again, cfg);
    }
}
