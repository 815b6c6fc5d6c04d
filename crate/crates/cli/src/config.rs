//! Run configuration: model parameters, truncation orders, tolerances, tasks.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use wpm_core::ModelParams;

pub const MAX_GENUS: u32 = 3;
pub const MAX_POINTS: usize = 4;
pub const MAX_SERIES_ORDER: usize = 8;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("unknown task `{0}`")]
    UnknownTask(String),
    #[error("{0}")]
    Invalid(String),
}

/// Fixed task vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Task {
    CriticalPoints,
    ModelReport,
    Ring,
    IFunction,
    RMatrix,
    Prop31,
    Qde,
    Eo,
    GraphSum,
    Thm31,
    Thm41,
    Thimble,
    Prop41,
    Intersections,
    VerifyAll,
}

impl Task {
    pub const ALL: [Task; 15] = [
        Task::CriticalPoints,
        Task::ModelReport,
        Task::Ring,
        Task::IFunction,
        Task::RMatrix,
        Task::Prop31,
        Task::Qde,
        Task::Eo,
        Task::GraphSum,
        Task::Thm31,
        Task::Thm41,
        Task::Thimble,
        Task::Prop41,
        Task::Intersections,
        Task::VerifyAll,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Task::CriticalPoints => "critical-points",
            Task::ModelReport => "model-report",
            Task::Ring => "ring",
            Task::IFunction => "ifunction",
            Task::RMatrix => "rmatrix",
            Task::Prop31 => "prop31",
            Task::Qde => "qde",
            Task::Eo => "eo",
            Task::GraphSum => "graphsum",
            Task::Thm31 => "thm31",
            Task::Thm41 => "thm41",
            Task::Thimble => "thimble",
            Task::Prop41 => "prop41",
            Task::Intersections => "intersections",
            Task::VerifyAll => "verify-all",
        }
    }

    /// Tasks in dependency order, with `verify-all` expanded.
    pub fn expand(tasks: &[Task]) -> Vec<Task> {
        let mut out: Vec<Task> = if tasks.contains(&Task::VerifyAll) {
            Task::ALL.iter().copied().filter(|t| !matches!(t, Task::VerifyAll | Task::CriticalPoints)).collect()
        } else {
            tasks.to_vec()
        };
        out.sort();
        out.dedup();
        out
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Task::ALL.iter().copied().find(|t| t.name() == s).ok_or_else(|| ConfigError::UnknownTask(s.to_string()))
    }
}

impl TryFrom<String> for Task {
    type Error = ConfigError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Task> for String {
    fn from(t: Task) -> String {
        t.name().to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Orders {
    /// Truncation order `K` of z-series.
    #[serde(default = "default_series")]
    pub series: usize,
    /// Order in `q` of the I-function.
    #[serde(default = "default_q")]
    pub q: u32,
    /// `(g, N)` pairs for the recursion and graph sums.
    #[serde(default = "default_eo")]
    pub eo: Vec<(u32, usize)>,
}

fn default_series() -> usize {
    4
}

fn default_q() -> u32 {
    4
}

fn default_eo() -> Vec<(u32, usize)> {
    vec![(0, 3), (0, 4), (1, 1), (1, 2), (2, 1)]
}

impl Default for Orders {
    fn default() -> Self {
        Orders { series: default_series(), q: default_q(), eo: default_eo() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelParams,
    #[serde(default)]
    pub orders: Orders,
    /// Tolerance overrides, keyed by task name; they apply to every check of that task.
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
    #[serde(default)]
    pub tasks: Vec<Task>,
    #[serde(default)]
    pub output: Option<String>,
}

impl RunConfig {
    pub fn load(path: &str) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_string(), source })?;
        let cfg: RunConfig = serde_json::from_str(&text)?;
        cfg.validated()
    }

    /// Checks caps and model invariants before any computation.
    pub fn validated(mut self) -> Result<Self, ConfigError> {
        self.model = self.model.validated().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.orders.series == 0 || self.orders.series > MAX_SERIES_ORDER {
            return Err(ConfigError::Invalid(format!("series order must be in 1..={MAX_SERIES_ORDER}")));
        }
        if self.orders.q == 0 {
            return Err(ConfigError::Invalid("q order must be positive".into()));
        }
        for &(g, n) in &self.orders.eo {
            if g > MAX_GENUS || n == 0 || n > MAX_POINTS || 2 * g as i64 - 2 + n as i64 <= 0 {
                return Err(ConfigError::Invalid(format!("(g, N) = ({g}, {n}) is unstable or exceeds g <= {MAX_GENUS}, N <= {MAX_POINTS}")));
            }
        }
        if let Some((name, tol)) = self.tolerances.iter().find(|(_, t)| !(t.is_finite() && **t > 0.0)) {
            return Err(ConfigError::Invalid(format!("tolerance for {name} must be positive, got {tol}")));
        }
        Ok(self)
    }

    pub fn tolerance(&self, check: &str, default: f64) -> f64 {
        self.tolerances.get(check).copied().unwrap_or(default)
    }
}
