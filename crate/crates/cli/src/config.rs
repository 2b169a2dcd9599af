use std::fs;
use std::path::{Path, PathBuf};

use pconcave::geometry::make_polygon;
use pconcave::reaction::{self, ReactionTerm};
use pconcave::ConvexDomain;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("malformed config {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("unknown domain '{0}' (expected square, square:<side>, disc, interval:<a>,<b>, or a polygon CSV path)")]
    UnknownDomain(String),
    #[error("polygon file {path}: {message}")]
    Polygon { path: PathBuf, message: String },
    #[error("unknown transform '{0}' (expected phi, log, pow:<alpha>, or none)")]
    UnknownTransform(String),
    #[error("invalid value: {0}")]
    Invalid(String),
    #[error(transparent)]
    Reaction(#[from] reaction::ReactionError),
}

/// Concave map applied to the solution before the convexity scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TransformChoice {
    Phi,
    Log,
    Pow(f64),
    Identity,
}

impl TransformChoice {
    pub fn parse(s: &str) -> Result<Self, ConfigError> {
        let s = s.trim();
        match s {
            "phi" => Ok(Self::Phi),
            "log" => Ok(Self::Log),
            "none" => Ok(Self::Identity),
            _ => {
                let alpha = s
                    .strip_prefix("pow:")
                    .and_then(|a| a.parse::<f64>().ok())
                    .ok_or_else(|| ConfigError::UnknownTransform(s.to_string()))?;
                if !(alpha > 0.0 && alpha.is_finite()) {
                    return Err(ConfigError::Invalid(format!("power transform needs alpha > 0, got {alpha}")));
                }
                Ok(Self::Pow(alpha))
            }
        }
    }

    pub fn label(&self) -> String {
        match self {
            Self::Phi => "phi".into(),
            Self::Log => "log".into(),
            Self::Pow(a) => format!("pow:{a}"),
            Self::Identity => "none".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingConfig {
    #[serde(default = "default_pairs")]
    pub pairs: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

fn default_pairs() -> usize {
    200_000
}

fn default_seed() -> u64 {
    42
}

fn default_epsilons() -> Vec<f64> {
    vec![0.0]
}

fn default_transforms() -> Vec<String> {
    vec!["phi".into()]
}

fn default_levels() -> usize {
    5
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self { pairs: default_pairs(), seed: default_seed() }
    }
}

/// One experiment, read from a TOML file.
///
/// ```toml
/// domain = "square"
/// reaction = "entropy-b"
/// p = 2.0
/// h = 0.015625
/// epsilons = [0.0, 0.01]
/// transforms = ["phi", "pow:0.5"]
/// output = "out/entropy-b"
///
/// [sampling]
/// pairs = 200000
/// seed = 42
/// ```
///
/// Relative `domain` file paths and `output` resolve against the directory
/// holding the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub domain: String,
    pub reaction: String,
    pub p: f64,
    pub h: f64,
    #[serde(default = "default_epsilons")]
    pub epsilons: Vec<f64>,
    #[serde(default = "default_transforms")]
    pub transforms: Vec<String>,
    #[serde(default)]
    pub sampling: SamplingConfig,
    /// Number of equally spaced superlevel values used for the quasi-concavity
    /// scan and the contour plot.
    #[serde(default = "default_levels")]
    pub levels: usize,
    pub output: PathBuf,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self, ConfigError> {
        let mut cfg: Self =
            toml::from_str(text).map_err(|e| ConfigError::Parse { path: base_dir.to_path_buf(), message: e.message().to_string() })?;
        cfg.base_dir = base_dir.to_path_buf();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.to_path_buf(), source })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml(&text, &base).map_err(|e| match e {
            ConfigError::Parse { message, .. } => ConfigError::Parse { path: path.to_path_buf(), message },
            other => other,
        })
    }

    /// Checks that every name resolves and the numeric knobs are in range.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.p > 1.0 && self.p.is_finite()) {
            return Err(ConfigError::Invalid(format!("p must exceed 1, got {}", self.p)));
        }
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(ConfigError::Invalid(format!("h must be positive, got {}", self.h)));
        }
        if self.epsilons.is_empty() || self.epsilons.iter().any(|e| !(*e >= 0.0 && e.is_finite())) {
            return Err(ConfigError::Invalid(format!("epsilons must be a non-empty list of values >= 0, got {:?}", self.epsilons)));
        }
        if self.sampling.pairs == 0 {
            return Err(ConfigError::Invalid("sampling.pairs must be positive".into()));
        }
        self.reaction_term()?;
        self.domain_spec()?;
        self.transform_choices()?;
        Ok(())
    }

    pub fn reaction_term(&self) -> Result<ReactionTerm, ConfigError> {
        Ok(reaction::by_name(&self.reaction, self.p)?)
    }

    pub fn domain_spec(&self) -> Result<ConvexDomain, ConfigError> {
        parse_domain(&self.domain, &self.base_dir)
    }

    pub fn transform_choices(&self) -> Result<Vec<TransformChoice>, ConfigError> {
        self.transforms.iter().map(|t| TransformChoice::parse(t)).collect()
    }

    pub fn output_dir(&self) -> PathBuf {
        self.base_dir.join(&self.output)
    }
}

/// Parses `square`, `square:<side>`, `disc`, `interval:<a>,<b>`, or a path
/// to a polygon CSV with `x,y` columns.
pub fn parse_domain(spec: &str, base_dir: &Path) -> Result<ConvexDomain, ConfigError> {
    let spec = spec.trim();
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| ConfigError::UnknownDomain(spec.to_string()));
    let (head, rest) = match spec.split_once(':') {
        Some((h, r)) => (h, Some(r)),
        None => (spec, None),
    };
    let bad = |e: pconcave::geometry::GeometryError| ConfigError::Invalid(format!("domain '{spec}': {e}"));
    match (head, rest) {
        ("square", None) => Ok(ConvexDomain::unit_square()),
        ("square", Some(side)) => {
            let side = num(side)?;
            if !(side > 0.0 && side.is_finite()) {
                return Err(ConfigError::Invalid(format!("square side must be positive, got {side}")));
            }
            Ok(ConvexDomain::square(side))
        }
        ("disc", None) => ConvexDomain::regular_polygon(64, 1.0).map_err(bad),
        ("interval", Some(ab)) => {
            let (a, b) = ab.split_once(',').ok_or_else(|| ConfigError::UnknownDomain(spec.to_string()))?;
            ConvexDomain::interval(num(a)?, num(b)?).map_err(bad)
        }
        _ if spec.ends_with(".csv") => read_polygon(&base_dir.join(spec)),
        _ => Err(ConfigError::UnknownDomain(spec.to_string())),
    }
}

pub fn read_polygon(path: &Path) -> Result<ConvexDomain, ConfigError> {
    let err = |message: String| ConfigError::Polygon { path: path.to_path_buf(), message };
    let mut rdr = csv::Reader::from_path(path).map_err(|e| err(e.to_string()))?;
    let headers = rdr.headers().map_err(|e| err(e.to_string()))?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name).ok_or_else(|| err(format!("missing column '{name}'")));
    let (ix, iy) = (col("x")?, col("y")?);
    let mut vertices = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| err(e.to_string()))?;
        let get = |i: usize| row.get(i).and_then(|s| s.trim().parse::<f64>().ok()).ok_or_else(|| err(format!("bad row {row:?}")));
        vertices.push([get(ix)?, get(iy)?]);
    }
    make_polygon(vertices).map_err(|e| err(e.to_string()))
}
