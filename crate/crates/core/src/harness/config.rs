use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dynamics::{default_protocol, NoiseMode, SystemParams};
use crate::error::{Error, Result};
use crate::inference::SigmaEstimator;
use crate::regression::CvOptions;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Lasso,
    DebiasedLasso,
    BcRidge,
    Semms,
    Esindy,
    Stls,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Lasso,
        Method::DebiasedLasso,
        Method::BcRidge,
        Method::Semms,
        Method::Esindy,
        Method::Stls,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Lasso => "lasso",
            Method::DebiasedLasso => "debiased_lasso",
            Method::BcRidge => "bc_ridge",
            Method::Semms => "semms",
            Method::Esindy => "esindy",
            Method::Stls => "stls",
        }
    }

    /// Methods that decide on terms through a test or a posterior.
    pub fn is_inference(self) -> bool {
        matches!(self, Method::DebiasedLasso | Method::BcRidge | Method::Semms)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = Method::ALL.iter().map(|m| m.as_str()).collect();
                Error::config(format!("unknown method '{s}' (expected one of {})", names.join(", ")))
            })
    }
}

/// Where the regression response comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DerivativeSource {
    /// GCV cubic smoothing splines per state: the library is built from the
    /// smoothed states and the response is the spline derivative.
    Spline,
    /// Three-point differences of the noisy states.
    FiniteDifference,
    /// The vector field evaluated on the noise-free trajectory; the library
    /// uses the noisy states.
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridVar {
    /// Number of integration steps over the time span.
    N,
    /// Noise scale.
    Sigma,
}

impl GridVar {
    pub fn as_str(self) -> &'static str {
        match self {
            GridVar::N => "n",
            GridVar::Sigma => "sigma",
        }
    }
}

impl FromStr for GridVar {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "n" => Ok(GridVar::N),
            "sigma" => Ok(GridVar::Sigma),
            other => Err(Error::config(format!("unknown grid variable '{other}' (expected n or sigma)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub variable: GridVar,
    pub values: Vec<f64>,
}

/// Per-method tuning.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MethodSettings {
    /// Noise scale behind debiased-Lasso and ridge standard errors. The
    /// long-run choice accounts for the serial correlation that smoothing
    /// leaves in derivative estimates.
    pub sigma_estimator: SigmaEstimator,
    pub debiased_holm: bool,
    pub ridge_xi: f64,
    pub semms_threshold: f64,
    pub semms_restarts: usize,
    pub esindy_q: usize,
    /// Inclusion probability needed for an ensemble term to count as
    /// selected. Unset: ensemble terms are reported without a decision.
    pub esindy_threshold: Option<f64>,
    pub stls_threshold: f64,
    pub cv: CvOptions,
}

impl Default for MethodSettings {
    fn default() -> Self {
        Self {
            sigma_estimator: SigmaEstimator::LongRun,
            debiased_holm: false,
            ridge_xi: 0.05,
            semms_threshold: 0.5,
            semms_restarts: 5,
            esindy_q: 500,
            esindy_threshold: None,
            stls_threshold: 0.1,
            cv: CvOptions::default(),
        }
    }
}

/// One experiment: a system, a sampling and noise protocol, and the methods
/// to compare. Unset protocol fields take the system's defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: String,
    pub params: SystemParams,
    pub x0: Option<Vec<f64>>,
    pub t_start: Option<f64>,
    pub t_end: Option<f64>,
    pub step: Option<f64>,
    /// Number of steps over the time span; overrides `step`.
    pub n: Option<usize>,
    pub noise: f64,
    pub noise_mode: NoiseMode,
    pub degree: u32,
    pub methods: Vec<Method>,
    pub replicates: usize,
    pub alpha: f64,
    pub seed: u64,
    pub derivatives: DerivativeSource,
    pub grid: Option<Grid>,
    pub settings: MethodSettings,
    pub out: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            system: "van_der_pol".into(),
            params: SystemParams::default(),
            x0: None,
            t_start: None,
            t_end: None,
            step: None,
            n: None,
            noise: 0.0,
            noise_mode: NoiseMode::Absolute,
            degree: 4,
            methods: vec![Method::Lasso, Method::DebiasedLasso, Method::BcRidge, Method::Semms],
            replicates: 1,
            alpha: 0.05,
            seed: 0,
            derivatives: DerivativeSource::Spline,
            grid: None,
            settings: MethodSettings::default(),
            out: None,
        }
    }
}

/// Integration settings after applying defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedProtocol {
    pub x0: Vec<f64>,
    pub t_span: (f64, f64),
    pub step: f64,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::config(format!("bad configuration: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("configuration serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::config("replicates must be at least 1"));
        }
        if self.methods.is_empty() {
            return Err(Error::config("no methods selected"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::config(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::config(format!("noise must be non-negative, got {}", self.noise)));
        }
        if self.degree == 0 {
            return Err(Error::config("library degree must be at least 1"));
        }
        if let Some(grid) = &self.grid {
            if grid.values.is_empty() {
                return Err(Error::config("grid has no values"));
            }
            let bad = match grid.variable {
                GridVar::N => grid.values.iter().any(|v| !(*v >= 2.0) || v.fract() != 0.0),
                GridVar::Sigma => grid.values.iter().any(|v| !(*v >= 0.0 && v.is_finite())),
            };
            if bad {
                return Err(Error::config(format!("invalid {} grid {:?}", grid.variable.as_str(), grid.values)));
            }
        }
        if let Some(t) = self.settings.esindy_threshold {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::config("ensemble threshold must lie in [0, 1]"));
            }
        }
        if self.settings.esindy_q == 0 {
            return Err(Error::config("ensemble needs at least one bootstrap sample"));
        }
        self.protocol()?;
        Ok(())
    }

    pub fn protocol(&self) -> Result<ResolvedProtocol> {
        let base = default_protocol(&self.system)?;
        let t0 = self.t_start.unwrap_or(base.t_span.0);
        let t1 = self.t_end.unwrap_or(base.t_span.1);
        if !(t1 > t0) || !t0.is_finite() || !t1.is_finite() {
            return Err(Error::config(format!("time span [{t0}, {t1}] is empty")));
        }
        let step = match self.n {
            Some(0) => return Err(Error::config("n must be positive")),
            Some(n) => (t1 - t0) / n as f64,
            None => self.step.unwrap_or(base.step),
        };
        if !(step > 0.0) || !step.is_finite() {
            return Err(Error::config(format!("step must be positive, got {step}")));
        }
        let x0 = self.x0.clone().unwrap_or(base.x0);
        if x0.len() != 2 {
            return Err(Error::config(format!("built-in systems need a 2-dimensional x0, got {}", x0.len())));
        }
        Ok(ResolvedProtocol {
            x0,
            t_span: (t0, t1),
            step,
        })
    }

    /// This configuration at one grid value.
    pub fn at_grid_point(&self, variable: GridVar, value: f64) -> Self {
        let mut cfg = self.clone();
        match variable {
            GridVar::N => cfg.n = Some(value as usize),
            GridVar::Sigma => cfg.noise = value,
        }
        cfg.grid = None;
        cfg
    }
}
