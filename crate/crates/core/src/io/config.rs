//! Run configuration: experiment presets, TOML files and flag overrides.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mesh::BoxDomain;
use crate::operators::{Model, Params};
use crate::scheme::{InitialData, Setup, DEFAULT_MAX_ITERATIONS};
use crate::sparsela::SaddleStrategy;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("missing required keys for a custom run: {}", .0.join(", "))]
    MissingKeys(Vec<&'static str>),
    #[error("invalid value for `{key}`: {message}")]
    Invalid { key: &'static str, message: String },
}

/// Which parameter set a run starts from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    /// Smooth director on the square.
    #[serde(rename = "1")]
    Smooth,
    /// Two point defects in the cube.
    #[serde(rename = "2")]
    Defects,
    /// Two point defects in a rotating flow.
    #[serde(rename = "3")]
    RotatingDefects,
    Custom,
}

impl FromStr for Experiment {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "1" => Ok(Self::Smooth),
            "2" => Ok(Self::Defects),
            "3" => Ok(Self::RotatingDefects),
            "custom" => Ok(Self::Custom),
            other => Err(format!("unknown experiment `{other}` (expected 1, 2, 3 or custom)")),
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Smooth => "1",
            Self::Defects => "2",
            Self::RotatingDefects => "3",
            Self::Custom => "custom",
        })
    }
}

/// Experiment numbers are written as TOML integers or strings.
fn deserialize_experiment<'de, D: serde::Deserializer<'de>>(de: D) -> Result<Option<Experiment>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Number(i64),
        Name(String),
    }
    Option::<Raw>::deserialize(de)?
        .map(|raw| match raw {
            Raw::Number(n) => n.to_string().parse(),
            Raw::Name(s) => s.parse(),
        })
        .transpose()
        .map_err(serde::de::Error::custom)
}

/// Every settable key. Used for both the config file and the command-line
/// flags; unset entries fall back to the preset.
#[derive(Debug, Clone, Default, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigOverrides {
    #[serde(default, deserialize_with = "deserialize_experiment", skip_serializing_if = "Option::is_none")]
    pub experiment: Option<Experiment>,
    pub model: Option<Model>,
    /// `[[lo, hi], ...]`, one pair per axis.
    pub domain: Option<Vec<[f64; 2]>>,
    /// Lattice cells per axis.
    pub n: Option<usize>,
    /// Lattice spacing, an alternative to `n`.
    pub h: Option<f64>,
    pub k: Option<f64>,
    pub t_end: Option<f64>,
    pub mu1: Option<f64>,
    pub mu4: Option<f64>,
    pub mu5: Option<f64>,
    pub mu6: Option<f64>,
    pub lambda: Option<f64>,
    pub nu: Option<f64>,
    pub a: Option<f64>,
    pub v_el: Option<f64>,
    pub theta: Option<f64>,
    pub initial: Option<InitialData>,
    pub output_dir: Option<PathBuf>,
    pub save_every: Option<usize>,
    pub max_iterations: Option<usize>,
    pub linear_solver: Option<SaddleStrategy>,
    /// Export the full quadratic velocity instead of vertex values.
    pub quadratic_cells: Option<bool>,
}

macro_rules! overlay {
    ($base:ident, $top:ident; $($f:ident),*) => {
        $( if $top.$f.is_some() { $base.$f = $top.$f.clone(); } )*
    };
}

impl ConfigOverrides {
    pub fn from_toml_str(text: &str, path: &Path) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse { path: path.to_path_buf(), message: e.to_string() })
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.to_path_buf(), source })?;
        Self::from_toml_str(&text, path)
    }

    /// `self` with every key set in `top` replaced.
    pub fn overlaid(mut self, top: &ConfigOverrides) -> Self {
        let base = &mut self;
        overlay!(base, top; experiment, model, domain, n, h, k, t_end, mu1, mu4, mu5, mu6, lambda, nu, a, v_el, theta,
            initial, output_dir, save_every, max_iterations, linear_solver, quadratic_cells);
        if top.n.is_some() {
            base.h = None;
        } else if top.h.is_some() {
            base.n = None;
        }
        self
    }
}

/// Fully resolved run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub model: Model,
    pub domain: BoxDomain,
    pub n: usize,
    pub k: f64,
    pub t_end: f64,
    pub mu1: f64,
    pub mu4: f64,
    pub mu5: f64,
    pub mu6: f64,
    pub lambda: f64,
    pub nu: f64,
    pub a: f64,
    pub v_el: f64,
    pub theta: f64,
    pub initial: InitialData,
    pub output_dir: PathBuf,
    /// Write fields every this many steps; zero writes only the first and last.
    pub save_every: usize,
    pub max_iterations: usize,
    pub linear_solver: SaddleStrategy,
    pub quadratic_cells: bool,
}

pub const DEFAULT_THETA: f64 = 1e-6;

/// Keys a custom run must set.
pub const REQUIRED_CUSTOM_KEYS: [&str; 13] =
    ["domain", "n or h", "k", "t_end", "mu1", "mu4", "mu5", "mu6", "lambda", "nu", "a", "v_el", "initial"];

impl RunConfig {
    /// Parameter choices of the three reference experiments.
    pub fn preset(experiment: Experiment) -> Option<Self> {
        let base = |dim: usize, lo: f64, hi: f64, n: usize, t_end: f64, initial: InitialData| RunConfig {
            experiment,
            model: Model::Full,
            domain: BoxDomain::cube(dim, lo, hi).expect("valid preset domain"),
            n,
            k: 2.5e-4,
            t_end,
            mu1: 1.0,
            mu4: 1.0,
            mu5: 1.0,
            mu6: 1.0,
            lambda: 1.0,
            nu: 1.0,
            a: 1.0,
            v_el: 1.0,
            theta: DEFAULT_THETA,
            initial,
            output_dir: PathBuf::from(format!("out/experiment{experiment}")),
            save_every: 0,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            linear_solver: SaddleStrategy::Reuse,
            quadratic_cells: false,
        };
        match experiment {
            // h = 2^-5 on (-1, 1)^2
            Experiment::Smooth => Some(RunConfig { mu4: 0.1, nu: 0.1, ..base(2, -1.0, 1.0, 64, 2.0, InitialData::Smooth) }),
            // h = 2^-4 on (-1/2, 1/2)^3
            Experiment::Defects => Some(RunConfig { v_el: 0.25, ..base(3, -0.5, 0.5, 16, 0.1, InitialData::Defects) }),
            Experiment::RotatingDefects => {
                Some(RunConfig { a: 0.1, ..base(3, -0.5, 0.5, 16, 0.5, InitialData::RotatingDefects) })
            }
            Experiment::Custom => None,
        }
    }

    /// Resolves file and flag values: the preset named by the merged
    /// `experiment` key, then every explicitly set key.
    pub fn resolve(ov: &ConfigOverrides) -> Result<Self, ConfigError> {
        let experiment = ov.experiment.unwrap_or(Experiment::Custom);
        let mut cfg = match Self::preset(experiment) {
            Some(p) => p,
            None => {
                let missing = missing_custom_keys(ov);
                if !missing.is_empty() {
                    return Err(ConfigError::MissingKeys(missing));
                }
                let mut p = Self::preset(Experiment::Smooth).expect("preset exists");
                p.experiment = Experiment::Custom;
                p.output_dir = PathBuf::from("out/custom");
                p
            }
        };
        if let Some(d) = &ov.domain {
            let bounds: Vec<(f64, f64)> = d.iter().map(|b| (b[0], b[1])).collect();
            cfg.domain =
                BoxDomain::new(&bounds).map_err(|e| ConfigError::Invalid { key: "domain", message: e.to_string() })?;
        }
        match (ov.n, ov.h) {
            (Some(_), Some(_)) => {
                return Err(ConfigError::Invalid { key: "h", message: "set either n or h, not both".into() });
            }
            (Some(n), None) => cfg.n = n,
            (None, Some(h)) => cfg.n = resolution_from_spacing(&cfg.domain, h)?,
            (None, None) => {}
        }
        if cfg.n == 0 {
            return Err(ConfigError::Invalid { key: "n", message: "resolution must be positive".into() });
        }
        macro_rules! take {
            ($($f:ident),*) => { $( if let Some(v) = ov.$f.clone() { cfg.$f = v; } )* };
        }
        take!(model, k, t_end, mu1, mu4, mu5, mu6, lambda, nu, a, v_el, theta, initial, output_dir, save_every,
            max_iterations, linear_solver, quadratic_cells);
        if cfg.max_iterations == 0 {
            return Err(ConfigError::Invalid { key: "max_iterations", message: "must be at least 1".into() });
        }
        cfg.params().validate().map_err(|e| ConfigError::Invalid { key: "params", message: e.0 })?;
        Ok(cfg)
    }

    /// Lattice spacing along the first axis.
    pub fn h(&self) -> f64 {
        let (lo, hi) = self.domain.bounds()[0];
        (hi - lo) / self.n as f64
    }

    pub fn params(&self) -> Params {
        Params {
            mu1: self.mu1,
            mu4: self.mu4,
            mu5_plus_mu6: self.mu5 + self.mu6,
            lambda: self.lambda,
            nu: self.nu,
            a: self.a,
            v_el: self.v_el,
            k: self.k,
            theta: self.theta,
            t_end: self.t_end,
            model: self.model,
        }
    }

    pub fn setup(&self) -> Setup {
        Setup {
            domain: self.domain.clone(),
            n: self.n,
            params: self.params(),
            initial: self.initial,
            max_iterations: self.max_iterations,
            linear_solver: self.linear_solver,
        }
    }

    /// The resolved configuration as a complete TOML file that reproduces
    /// this run when read back.
    pub fn to_toml(&self) -> String {
        let ov = ConfigOverrides {
            experiment: Some(Experiment::Custom),
            model: Some(self.model),
            domain: Some(self.domain.bounds().iter().map(|&(l, h)| [l, h]).collect()),
            n: Some(self.n),
            h: None,
            k: Some(self.k),
            t_end: Some(self.t_end),
            mu1: Some(self.mu1),
            mu4: Some(self.mu4),
            mu5: Some(self.mu5),
            mu6: Some(self.mu6),
            lambda: Some(self.lambda),
            nu: Some(self.nu),
            a: Some(self.a),
            v_el: Some(self.v_el),
            theta: Some(self.theta),
            initial: Some(self.initial),
            output_dir: Some(self.output_dir.clone()),
            save_every: Some(self.save_every),
            max_iterations: Some(self.max_iterations),
            linear_solver: Some(self.linear_solver),
            quadratic_cells: Some(self.quadratic_cells),
        };
        toml::to_string(&ov).expect("config serializes")
    }
}

fn missing_custom_keys(ov: &ConfigOverrides) -> Vec<&'static str> {
    let set = [
        ov.domain.is_some(),
        ov.n.is_some() || ov.h.is_some(),
        ov.k.is_some(),
        ov.t_end.is_some(),
        ov.mu1.is_some(),
        ov.mu4.is_some(),
        ov.mu5.is_some(),
        ov.mu6.is_some(),
        ov.lambda.is_some(),
        ov.nu.is_some(),
        ov.a.is_some(),
        ov.v_el.is_some(),
        ov.initial.is_some(),
    ];
    REQUIRED_CUSTOM_KEYS.iter().zip(set).filter(|(_, s)| !s).map(|(k, _)| *k).collect()
}

fn resolution_from_spacing(domain: &BoxDomain, h: f64) -> Result<usize, ConfigError> {
    if !(h > 0.0) {
        return Err(ConfigError::Invalid { key: "h", message: format!("spacing {h} must be positive") });
    }
    let (lo, hi) = domain.bounds()[0];
    let n = ((hi - lo) / h).round();
    if n < 1.0 || ((hi - lo) / n - h).abs() > 1e-12 * h.max(1.0) {
        return Err(ConfigError::Invalid { key: "h", message: format!("spacing {h} does not divide the domain edge") });
    }
    Ok(n as usize)
}
