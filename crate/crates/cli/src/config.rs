//! Run configuration: a JSON file, overridden field by field from flags.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use slowfast::asymptotics::log_ladder;
use slowfast::blowup::DEFAULT_E1;
use slowfast::entryexit::{check_ladder, DEFAULT_Z0};
use slowfast::example5::DEFAULT_ALPHA;
use slowfast::integrate::Tolerances;
use slowfast::system::{SlowFastSystem, SystemSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlowupMode {
    #[default]
    Singular,
    Pipeline,
}

impl std::str::FromStr for BlowupMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "singular" => Ok(Self::Singular),
            "pipeline" => Ok(Self::Pipeline),
            other => Err(format!(
                "unknown mode '{other}' (expected singular or pipeline)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub system: SystemSpec,
    #[serde(default = "default_x0")]
    pub x0: f64,
    /// Falls back to 1 for `example5` and 0.1 otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z0: Option<f64>,
    #[serde(default = "default_eps")]
    pub eps: f64,
    /// Decreasing eps values for `sweep`, `fit` and `example5`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_ladder: Option<Vec<f64>>,
    #[serde(rename = "E1", default = "default_e1")]
    pub e1: f64,
    /// Sections for `blowup` in singular mode; `E1` alone when absent.
    #[serde(rename = "E1_grid", default, skip_serializing_if = "Option::is_none")]
    pub e1_grid: Option<Vec<f64>>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub mode: BlowupMode,
    /// Integrator settings; `fit` tightens the default to 1e-12 / 1e-14.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerances: Option<Tolerances>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

fn default_x0() -> f64 {
    -1.0
}

fn default_eps() -> f64 {
    1e-3
}

fn default_e1() -> f64 {
    DEFAULT_E1
}

fn default_alpha() -> f64 {
    DEFAULT_ALPHA
}

impl RunConfig {
    pub fn for_system(name: &str) -> Self {
        Self {
            system: SystemSpec::named(name),
            x0: default_x0(),
            z0: None,
            eps: default_eps(),
            eps_ladder: None,
            e1: default_e1(),
            e1_grid: None,
            alpha: default_alpha(),
            mode: BlowupMode::default(),
            tolerances: None,
            out: None,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn z0(&self) -> f64 {
        self.z0.unwrap_or(if self.system.name == "example5" {
            1.0
        } else {
            DEFAULT_Z0
        })
    }

    pub fn tolerances_or(&self, fallback: Tolerances) -> Tolerances {
        self.tolerances.unwrap_or(fallback)
    }

    pub fn ladder(&self) -> Vec<f64> {
        self.eps_ladder.clone().unwrap_or_else(|| vec![self.eps])
    }

    pub fn e1_values(&self) -> Vec<f64> {
        self.e1_grid.clone().unwrap_or_else(|| vec![self.e1])
    }

    /// Builds the system and checks every scalar against its precondition.
    pub fn validate(&self) -> Result<SlowFastSystem> {
        let sys = self.system.build()?;
        let d = sys.domain;
        if !(self.x0 >= d.x_min && self.x0 <= d.x_max) {
            bail!("x0 = {} outside [{}, {}]", self.x0, d.x_min, d.x_max);
        }
        let z0 = self.z0();
        if !(z0 > 0.0 && z0 <= d.z_max) {
            bail!("z0 = {z0} outside (0, {}]", d.z_max);
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            bail!("eps = {} must be positive", self.eps);
        }
        if let Some(l) = &self.eps_ladder {
            if l.is_empty() {
                bail!("eps_ladder is empty");
            }
            check_ladder(l).context("eps_ladder")?;
        }
        for e1 in self.e1_values() {
            if !(e1 > 0.0 && e1.is_finite()) {
                bail!("E1 = {e1} must be positive");
            }
        }
        if !(self.alpha != 0.0 && self.alpha.is_finite()) {
            bail!("alpha = {} must be nonzero", self.alpha);
        }
        if let Some(t) = &self.tolerances {
            t.validate()?;
        }
        Ok(sys)
    }
}

/// Parses `lo:hi:n` into `n` log-spaced values from `hi` down to `lo`.
pub fn parse_ladder(s: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    let [lo, hi, n] = parts[..] else {
        bail!("ladder '{s}' is not lo:hi:n");
    };
    let lo: f64 = lo
        .trim()
        .parse()
        .with_context(|| format!("ladder lo '{lo}'"))?;
    let hi: f64 = hi
        .trim()
        .parse()
        .with_context(|| format!("ladder hi '{hi}'"))?;
    let n: usize = n
        .trim()
        .parse()
        .with_context(|| format!("ladder n '{n}'"))?;
    if !(lo > 0.0 && lo < hi && hi.is_finite()) || n < 2 {
        bail!("ladder '{s}' needs 0 < lo < hi and n >= 2");
    }
    Ok(log_ladder(lo, hi, n))
}

/// Parses `key=value`.
pub fn parse_param(s: &str) -> Result<(String, f64)> {
    let Some((k, v)) = s.split_once('=') else {
        bail!("parameter '{s}' is not key=value");
    };
    let v: f64 = v
        .trim()
        .parse()
        .with_context(|| format!("parameter value '{v}'"))?;
    Ok((k.trim().to_string(), v))
}

pub fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .with_context(|| format!("list value '{v}'"))
        })
        .collect()
}

/// Flag values that override the loaded config.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub system: Option<String>,
    pub params: Vec<(String, f64)>,
    pub x0: Option<f64>,
    pub z0: Option<f64>,
    pub eps: Option<f64>,
    pub ladder: Option<Vec<f64>>,
    pub e1: Option<f64>,
    pub e1_grid: Option<Vec<f64>>,
    pub alpha: Option<f64>,
    pub mode: Option<BlowupMode>,
    pub rel: Option<f64>,
    pub abs: Option<f64>,
    pub out: Option<PathBuf>,
}

impl Overrides {
    pub fn apply(self, mut cfg: RunConfig) -> RunConfig {
        if let Some(name) = self.system {
            if name != cfg.system.name {
                cfg.system = SystemSpec::named(&name);
            }
        }
        cfg.system.params.extend(self.params);
        if let Some(v) = self.x0 {
            cfg.x0 = v;
        }
        if self.z0.is_some() {
            cfg.z0 = self.z0;
        }
        if let Some(v) = self.eps {
            cfg.eps = v;
        }
        if self.ladder.is_some() {
            cfg.eps_ladder = self.ladder;
        }
        if let Some(v) = self.e1 {
            cfg.e1 = v;
        }
        if self.e1_grid.is_some() {
            cfg.e1_grid = self.e1_grid;
        }
        if let Some(v) = self.alpha {
            cfg.alpha = v;
        }
        if let Some(v) = self.mode {
            cfg.mode = v;
        }
        if self.rel.is_some() || self.abs.is_some() {
            let mut t = cfg.tolerances.unwrap_or_default();
            if let Some(r) = self.rel {
                t.rel = r;
            }
            if let Some(a) = self.abs {
                t.abs = a;
            }
            cfg.tolerances = Some(t);
        }
        if self.out.is_some() {
            cfg.out = self.out;
        }
        cfg
    }
}
