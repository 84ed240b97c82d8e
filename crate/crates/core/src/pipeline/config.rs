//! Run configuration and its TOML file form.
//!
//! Precedence, lowest first: built-in defaults, the config file, explicit
//! command-line flags. The config file is named by `--config` or, failing
//! that, by the `DERMACAL_CONFIG` environment variable.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::IccForm;

pub const CONFIG_ENV: &str = "DERMACAL_CONFIG";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Analysis {
    #[serde(rename = "deltae")]
    DeltaE,
    Ccm,
    Indices,
    Icc,
    BlandAltman,
    Anova,
    Sensitivity,
}

impl Analysis {
    pub const ALL: [Analysis; 7] = [
        Analysis::DeltaE,
        Analysis::Ccm,
        Analysis::Indices,
        Analysis::Icc,
        Analysis::BlandAltman,
        Analysis::Anova,
        Analysis::Sensitivity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Analysis::DeltaE => "deltae",
            Analysis::Ccm => "ccm",
            Analysis::Indices => "indices",
            Analysis::Icc => "icc",
            Analysis::BlandAltman => "bland_altman",
            Analysis::Anova => "anova",
            Analysis::Sensitivity => "sensitivity",
        }
    }

    /// Whether the analysis compares devices and so needs the reference.
    pub fn is_pairwise(self) -> bool {
        !matches!(self, Analysis::Indices | Analysis::Sensitivity)
    }
}

impl fmt::Display for Analysis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Analysis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().replace('-', "_");
        Analysis::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown analysis `{s}` (expected one of {})",
                    Analysis::ALL.map(Analysis::name).join(", ")
                ))
            })
    }
}

/// Parses a comma-separated analysis list; `all` and `none` are accepted.
pub fn parse_analyses(list: &str) -> Result<BTreeSet<Analysis>> {
    match list.trim() {
        "all" => return Ok(Analysis::ALL.into_iter().collect()),
        "none" | "" => return Ok(BTreeSet::new()),
        _ => {}
    }
    list.split(',').map(str::parse).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub inputs: Vec<PathBuf>,
    pub reference_device: String,
    pub folds: usize,
    pub seed: u64,
    pub threshold: f64,
    pub analyses: BTreeSet<Analysis>,
    pub icc_form: IccForm,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            inputs: Vec::new(),
            reference_device: "dslr".into(),
            folds: 5,
            seed: 42,
            threshold: 2.0,
            analyses: Analysis::ALL.into_iter().collect(),
            icc_form: IccForm::Consistency,
            out_dir: PathBuf::from("."),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.folds < 2 {
            return Err(Error::Config(format!("folds must be at least 2, got {}", self.folds)));
        }
        if !(self.threshold.is_finite() && self.threshold > 0.0) {
            return Err(Error::Config(format!(
                "threshold must be a positive number, got {}",
                self.threshold
            )));
        }
        if self.reference_device.is_empty() {
            return Err(Error::Config("reference device must not be empty".into()));
        }
        Ok(())
    }

    pub fn enabled(&self, a: Analysis) -> bool {
        self.analyses.contains(&a)
    }
}

/// Config file contents; every key is optional and overrides the default.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfigFile {
    pub config_version: Option<u32>,
    pub input: Option<Vec<PathBuf>>,
    pub reference_device: Option<String>,
    pub folds: Option<usize>,
    pub seed: Option<u64>,
    pub threshold: Option<f64>,
    pub analyses: Option<Vec<String>>,
    pub icc_form: Option<IccForm>,
    pub out_dir: Option<PathBuf>,
}

impl RunConfigFile {
    pub fn from_toml(text: &str) -> Result<Self> {
        let file: RunConfigFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if let Some(v) = file.config_version {
            if v != 1 {
                return Err(Error::Config(format!("unsupported config_version {v} (expected 1)")));
            }
        }
        Ok(file)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Relative input and output paths are resolved against `base`, the
    /// directory holding the config file.
    pub fn apply(&self, cfg: &mut RunConfig, base: Option<&Path>) -> Result<()> {
        let resolve = |p: &PathBuf| match base {
            Some(dir) if p.is_relative() => dir.join(p),
            _ => p.clone(),
        };
        if let Some(v) = &self.input {
            cfg.inputs = v.iter().map(resolve).collect();
        }
        if let Some(v) = &self.reference_device {
            cfg.reference_device = v.clone();
        }
        if let Some(v) = self.folds {
            cfg.folds = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.threshold {
            cfg.threshold = v;
        }
        if let Some(v) = &self.analyses {
            cfg.analyses = v.iter().map(|s| s.parse()).collect::<Result<_>>()?;
        }
        if let Some(v) = self.icc_form {
            cfg.icc_form = v;
        }
        if let Some(v) = &self.out_dir {
            cfg.out_dir = resolve(v);
        }
        Ok(())
    }
}
