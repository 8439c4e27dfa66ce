//! Run configuration: a flat TOML table covering the problem, the random
//! start matrix, the tracer and the output location.

use std::path::{Path, PathBuf};

use gpe_homotopy::homotopy::HomotopyOptions;
use gpe_homotopy::{Domain, Potential, ProblemSpec, RandomMatrixKind, TraceConfig};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

macro_rules! trace_default {
    ($name:ident, $ty:ty) => {
        fn $name() -> $ty {
            TraceConfig::default().$name
        }
    };
}

trace_default!(ds0, f64);
trace_default!(ds_min, f64);
trace_default!(ds_max, f64);
trace_default!(angle_halve_deg, f64);
trace_default!(angle_double_deg, f64);
trace_default!(newton_tol, f64);
trace_default!(newton_max_iter, usize);
trace_default!(max_steps, usize);
trace_default!(damped_max_iter, usize);
trace_default!(monitor_sigma_min, bool);

fn default_potential() -> String {
    "harmonic".into()
}

fn default_paths() -> Vec<usize> {
    vec![1]
}

fn default_workers() -> usize {
    1
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dim: usize,
    /// x-range `[a, b]`.
    pub a: f64,
    pub b: f64,
    /// y-range `[c, d]` (2D only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<f64>,
    /// Interior points along x (2D only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    /// Interior points along the last axis.
    pub n: usize,
    pub beta: f64,
    /// `harmonic` or `tabulated`.
    #[serde(default = "default_potential")]
    pub potential: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub potential_values: Option<Vec<f64>>,

    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<RandomMatrixKind>,
    #[serde(default = "default_paths")]
    pub paths: Vec<usize>,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default = "default_out")]
    pub out: PathBuf,

    #[serde(default = "ds0")]
    pub ds0: f64,
    #[serde(default = "ds_min")]
    pub ds_min: f64,
    #[serde(default = "ds_max")]
    pub ds_max: f64,
    #[serde(default = "angle_halve_deg")]
    pub angle_halve_deg: f64,
    #[serde(default = "angle_double_deg")]
    pub angle_double_deg: f64,
    #[serde(default = "newton_tol")]
    pub newton_tol: f64,
    #[serde(default = "newton_max_iter")]
    pub newton_max_iter: usize,
    #[serde(default = "max_steps")]
    pub max_steps: usize,
    #[serde(default = "damped_max_iter")]
    pub damped_max_iter: usize,
    #[serde(default = "monitor_sigma_min")]
    pub monitor_sigma_min: bool,
}

impl RunConfig {
    /// 1D harmonic trap on `[a, b]` with default tracer settings.
    pub fn line(a: f64, b: f64, n: usize, beta: f64) -> Self {
        let t = TraceConfig::default();
        Self {
            dim: 1,
            a,
            b,
            c: None,
            d: None,
            m: None,
            n,
            beta,
            potential: default_potential(),
            potential_values: None,
            seed: 0,
            sigma: None,
            kind: None,
            paths: default_paths(),
            workers: default_workers(),
            out: default_out(),
            ds0: t.ds0,
            ds_min: t.ds_min,
            ds_max: t.ds_max,
            angle_halve_deg: t.angle_halve_deg,
            angle_double_deg: t.angle_double_deg,
            newton_tol: t.newton_tol,
            newton_max_iter: t.newton_max_iter,
            max_steps: t.max_steps,
            damped_max_iter: t.damped_max_iter,
            monitor_sigma_min: t.monitor_sigma_min,
        }
    }

    #[allow(clippy::too_many_arguments)]
    pub fn rectangle(a: f64, b: f64, c: f64, d: f64, m: usize, n: usize, beta: f64) -> Self {
        Self {
            dim: 2,
            c: Some(c),
            d: Some(d),
            m: Some(m),
            ..Self::line(a, b, n, beta)
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let spec = self.problem_spec()?;
        spec.validate()?;
        self.trace_config().validate()?;
        if let Some(kind) = self.kind {
            if !kind.supports_dim(self.dim) {
                return Err(CliError::Config(format!(
                    "kind {kind} does not apply to dim = {}",
                    self.dim
                )));
            }
        }
        if let Some(s) = self.sigma {
            if !(s.is_finite() && s >= 0.0) {
                return Err(CliError::Config(format!(
                    "sigma must be finite and non-negative, got {s}"
                )));
            }
        }
        if self.paths.is_empty() {
            return Err(CliError::Config("paths must not be empty".into()));
        }
        let size = spec.len();
        if let Some(&k) = self.paths.iter().find(|&&k| k == 0 || k > size) {
            return Err(CliError::Config(format!(
                "path index {k} outside 1..={size}"
            )));
        }
        if self.workers == 0 {
            return Err(CliError::Config("workers must be at least 1".into()));
        }
        Ok(())
    }

    pub fn problem_spec(&self) -> Result<ProblemSpec, CliError> {
        let domain = match self.dim {
            1 => {
                if self.c.is_some() || self.d.is_some() || self.m.is_some() {
                    return Err(CliError::Config(
                        "keys c, d and m only apply to dim = 2".into(),
                    ));
                }
                Domain::Line {
                    a: self.a,
                    b: self.b,
                    n: self.n,
                }
            }
            2 => {
                let (Some(c), Some(d), Some(m)) = (self.c, self.d, self.m) else {
                    return Err(CliError::Config("dim = 2 needs keys c, d and m".into()));
                };
                Domain::Rectangle {
                    a: self.a,
                    b: self.b,
                    c,
                    d,
                    m,
                    n: self.n,
                }
            }
            other => return Err(CliError::Config(format!("dim must be 1 or 2, got {other}"))),
        };
        let potential = match (self.potential.as_str(), &self.potential_values) {
            ("harmonic", None) => Potential::Harmonic,
            ("harmonic", Some(_)) => {
                return Err(CliError::Config(
                    "potential_values requires potential = \"tabulated\"".into(),
                ))
            }
            ("tabulated", Some(v)) => Potential::Tabulated(v.clone()),
            ("tabulated", None) => {
                return Err(CliError::Config(
                    "potential = \"tabulated\" needs potential_values".into(),
                ))
            }
            (other, _) => return Err(CliError::Config(format!("unknown potential '{other}'"))),
        };
        Ok(ProblemSpec {
            domain,
            beta: self.beta,
            potential,
        })
    }

    pub fn trace_config(&self) -> TraceConfig {
        TraceConfig {
            ds0: self.ds0,
            ds_min: self.ds_min,
            ds_max: self.ds_max,
            angle_halve_deg: self.angle_halve_deg,
            angle_double_deg: self.angle_double_deg,
            newton_tol: self.newton_tol,
            newton_max_iter: self.newton_max_iter,
            max_steps: self.max_steps,
            damped_max_iter: self.damped_max_iter,
            monitor_sigma_min: self.monitor_sigma_min,
        }
    }

    pub fn homotopy_options(&self) -> HomotopyOptions {
        HomotopyOptions {
            kind: self.kind,
            seed: self.seed,
            sigma: self.sigma,
            ..Default::default()
        }
    }
}

/// Parses `"1-9,12,15"` into `[1, ..., 9, 12, 15]`.
pub fn parse_path_set(text: &str) -> Result<Vec<usize>, CliError> {
    let bad = || CliError::Config(format!("cannot parse path set '{text}'"));
    let mut out = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once('-') {
            Some((lo, hi)) => {
                let lo: usize = lo.trim().parse().map_err(|_| bad())?;
                let hi: usize = hi.trim().parse().map_err(|_| bad())?;
                if lo > hi {
                    return Err(bad());
                }
                out.extend(lo..=hi);
            }
            None => out.push(part.parse().map_err(|_| bad())?),
        }
    }
    if out.is_empty() {
        return Err(bad());
    }
    Ok(out)
}
