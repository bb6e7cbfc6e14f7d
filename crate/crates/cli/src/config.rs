//! Run configuration: a JSON document, optionally embedded as the first line
//! of a previous output file, with command line overrides applied on top.

use std::fmt;
use std::path::Path;

use mfcce_core::analytic::{DeviceProbs, Interval, RegionLayout};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    /// Margin sweep over the (p11, p22) plane.
    Region,
    /// Finite-N gap of the example device.
    Gap,
    /// Mean field gap of the example device.
    Mfgap,
    /// Propagation of chaos curve.
    Poc,
    /// Consistency of the announced flows.
    Consistency,
    /// McKean-Vlasov fixed point for a constant control.
    Mkv,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Region => "region",
            Command::Gap => "gap",
            Command::Mfgap => "mfgap",
            Command::Poc => "poc",
            Command::Consistency => "consistency",
            Command::Mkv => "mkv",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Layout {
    #[default]
    Folded,
    Direct,
}

impl From<Layout> for RegionLayout {
    fn from(l: Layout) -> Self {
        match l {
            Layout::Folded => RegionLayout::Folded,
            Layout::Direct => RegionLayout::Direct,
        }
    }
}

/// Everything that determines the contents of an output file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub command: Option<Command>,
    /// Action interval `[a, b]`.
    pub a: f64,
    pub b: f64,
    /// Payoff scale.
    pub c: f64,
    pub horizon: f64,
    /// Device `(p11, p12, p21, p22)`.
    pub p: [f64; 4],
    pub steps: usize,
    pub seed: u64,
    /// Population sizes; defaults depend on the command.
    pub n: Option<Vec<usize>>,
    pub reps: Option<usize>,
    /// Deviation grid size.
    pub grid_size: usize,
    pub resolution: usize,
    pub alpha: Vec<f64>,
    pub layout: Layout,
    pub particles: usize,
    pub max_iters: usize,
    pub tol: f64,
    /// Constant control of the McKean-Vlasov run; defaults to `b`.
    pub action: Option<f64>,
    /// A class passes if its `sup_t W2` is at most this multiple of its null band.
    pub band_factor: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            command: None,
            a: -1.0,
            b: 1.0,
            c: 1.0,
            horizon: 2.0,
            p: [0.5, 0.3, 0.2, 0.0],
            steps: 200,
            seed: 1,
            n: None,
            reps: None,
            grid_size: 21,
            resolution: 101,
            alpha: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            layout: Layout::Folded,
            particles: 10_000,
            max_iters: 10,
            tol: 1e-6,
            action: None,
            band_factor: 2.0,
        }
    }
}

/// A configuration problem, tied to a field or a source position.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub source: Option<String>,
    pub line: Option<usize>,
    pub column: Option<usize>,
    pub field: Option<String>,
    pub message: String,
}

impl ConfigError {
    fn field(field: &str, message: impl Into<String>) -> Self {
        ConfigError { source: None, line: None, column: None, field: Some(field.into()), message: message.into() }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(s) = &self.source {
            write!(f, "{s}:")?;
        }
        if let (Some(l), Some(c)) = (self.line, self.column) {
            write!(f, "{l}:{c}:")?;
        }
        if self.source.is_some() || self.line.is_some() {
            write!(f, " ")?;
        }
        if let Some(field) = &self.field {
            write!(f, "field `{field}`: ")?;
        }
        write!(f, "{}", self.message)
    }
}

impl std::error::Error for ConfigError {}

impl RunConfig {
    /// Parses a JSON document, or the `#` header line of an output file.
    pub fn parse(text: &str, source: Option<&str>) -> Result<Self, ConfigError> {
        let (json, line_offset) = match text.trim_start().strip_prefix('#') {
            Some(rest) => (rest.lines().next().unwrap_or(""), 0),
            None => (text, 0),
        };
        serde_json::from_str(json).map_err(|e| {
            let message = e.to_string();
            // serde_json appends " at line L column C"; keep the bare message.
            let message = message.split(" at line ").next().unwrap_or(&message).to_string();
            let field = message
                .strip_prefix("unknown field `")
                .and_then(|r| r.split('`').next())
                .map(str::to_string);
            ConfigError {
                source: source.map(str::to_string),
                line: Some(e.line() + line_offset),
                column: Some(e.column()),
                field,
                message,
            }
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let shown = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
            source: Some(shown.clone()),
            line: None,
            column: None,
            field: None,
            message: format!("cannot read: {e}"),
        })?;
        Self::parse(&text, Some(&shown))
    }

    /// Single-line JSON, as written into output headers.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serialises")
    }

    pub fn command(&self) -> Result<Command, ConfigError> {
        self.command.ok_or_else(|| ConfigError::field("command", "no command given"))
    }

    /// Fills command-dependent defaults so that headers record every value.
    pub fn resolved(mut self) -> Result<Self, ConfigError> {
        let command = self.command()?;
        if self.n.is_none() {
            self.n = match command {
                Command::Gap => Some(vec![50, 200, 500]),
                Command::Poc => Some(vec![50, 100, 200, 400]),
                _ => None,
            };
        }
        if self.reps.is_none() {
            self.reps = match command {
                Command::Region => None,
                Command::Poc => Some(200),
                Command::Consistency => Some(10_000),
                Command::Mkv => None,
                Command::Gap | Command::Mfgap => Some(2000),
            };
        }
        if command == Command::Mkv && self.action.is_none() {
            self.action = Some(self.b);
        }
        self.validate()?;
        Ok(self)
    }

    pub fn interval(&self) -> Result<Interval, ConfigError> {
        Interval::new(self.a, self.b).map_err(|e| ConfigError::field("a", e.to_string()))
    }

    pub fn device(&self) -> Result<DeviceProbs, ConfigError> {
        DeviceProbs::from_array(self.p).map_err(|e| ConfigError::field("p", e.to_string()))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let command = self.command()?;
        if !(self.a < 0.0 && self.a.is_finite()) {
            return Err(ConfigError::field("a", format!("must be negative and finite, got {}", self.a)));
        }
        if !(self.b > 0.0 && self.b.is_finite()) {
            return Err(ConfigError::field("b", format!("must be positive and finite, got {}", self.b)));
        }
        if !self.c.is_finite() {
            return Err(ConfigError::field("c", "must be finite"));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(ConfigError::field("horizon", format!("must be positive, got {}", self.horizon)));
        }
        self.device()?;
        if self.steps == 0 {
            return Err(ConfigError::field("steps", "must be at least 1"));
        }
        match command {
            Command::Region => {
                if self.resolution < 2 {
                    return Err(ConfigError::field("resolution", "must be at least 2"));
                }
                if self.alpha.is_empty() {
                    return Err(ConfigError::field("alpha", "needs at least one value"));
                }
                if let Some(x) = self.alpha.iter().find(|x| !(0.0..=1.0).contains(*x)) {
                    return Err(ConfigError::field("alpha", format!("values must lie in [0, 1], got {x}")));
                }
            }
            Command::Gap | Command::Poc => {
                let n = self.n.as_deref().unwrap_or_default();
                let min = if command == Command::Gap { 2 } else { 1 };
                if n.is_empty() {
                    return Err(ConfigError::field("n", "needs at least one population size"));
                }
                if let Some(x) = n.iter().find(|&&x| x < min) {
                    return Err(ConfigError::field("n", format!("population sizes must be at least {min}, got {x}")));
                }
                if command == Command::Poc && n.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(ConfigError::field("n", "population sizes must increase"));
                }
            }
            _ => {}
        }
        if matches!(command, Command::Gap | Command::Mfgap) && self.grid_size < 3 {
            return Err(ConfigError::field("grid_size", "must be at least 3"));
        }
        if let Some(r) = self.reps {
            if r == 0 {
                return Err(ConfigError::field("reps", "must be at least 1"));
            }
        }
        if command == Command::Mkv {
            if self.particles < 100 {
                return Err(ConfigError::field("particles", "must be at least 100"));
            }
            if self.max_iters == 0 {
                return Err(ConfigError::field("max_iters", "must be at least 1"));
            }
            if self.tol.is_nan() || self.tol <= 0.0 {
                return Err(ConfigError::field("tol", "must be positive"));
            }
            if let Some(u) = self.action {
                if !(self.a..=self.b).contains(&u) {
                    return Err(ConfigError::field("action", format!("must lie in [{}, {}], got {u}", self.a, self.b)));
                }
            }
        }
        if self.band_factor.is_nan() || self.band_factor <= 0.0 {
            return Err(ConfigError::field("band_factor", "must be positive"));
        }
        Ok(())
    }
}
