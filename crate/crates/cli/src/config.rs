//! Run configuration: a JSON document with complex entries written as [re, im].

use std::fmt;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use num_complex::Complex64;
use qcl_core::linalg::CMat;
use qcl_core::objectives::{GateSpec, Objective, ObservableSpec};
use qcl_core::quantum::{ControlField, ControlSystem};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Row-major matrix of [re, im] pairs.
pub type MatrixSpec = Vec<Vec<[f64; 2]>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system: Option<SystemConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<FieldConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub objective: Option<ObjectiveConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flow: Option<FlowConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dmorph: Option<DmorphConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub track: Option<TrackConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub open: Option<OpenConfig>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub h0: MatrixSpec,
    pub dipoles: Vec<MatrixSpec>,
    pub horizon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldConfig {
    /// One value per channel, held over `steps` intervals.
    Constant { steps: usize, value: Vec<f64> },
    /// Sum of harmonics up to angular frequency `bandwidth` with Gaussian
    /// coefficients; `seed` defaults to a substream of the run seed.
    Random {
        steps: usize,
        bandwidth: f64,
        #[serde(default = "one")]
        amplitude: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    /// CSV with one row per interval and one column per channel; `#` lines
    /// and a non-numeric header are skipped. Relative to the config file.
    File { path: String },
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ObjectiveConfig {
    Observable { rho0: MatrixSpec, theta: MatrixSpec },
    Gate { w: MatrixSpec },
}

/// Kinematic flows (`flow`) and field-space ascent (`optimize`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowConfig {
    #[serde(default = "default_s_max")]
    pub s_max: f64,
    #[serde(default = "default_flow_steps")]
    pub steps: usize,
    #[serde(default)]
    pub start: FlowStart,
    #[serde(default)]
    pub penalty: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_grad_tol")]
    pub tol: f64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            s_max: default_s_max(),
            steps: default_flow_steps(),
            start: FlowStart::default(),
            penalty: 0.0,
            max_iter: default_max_iter(),
            tol: default_grad_tol(),
        }
    }
}

fn default_s_max() -> f64 {
    5.0
}
fn default_flow_steps() -> usize {
    100
}
fn default_max_iter() -> usize {
    200
}
fn default_grad_tol() -> f64 {
    1e-6
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowStart {
    #[default]
    Identity,
    Haar,
    /// U(T) of the configured system and field.
    Propagated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DmorphMode {
    LevelSet,
    Morph,
    Track,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FreeFunctionKind {
    Zero,
    FluenceMin,
    FluenceMax,
    RandomNull,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchmarkKind {
    Ladder8,
    DipoleSwap3,
    DipoleSwap3Curved,
    Track5,
}

/// P(s) = offset + amplitude sin(2 pi frequency s); offset defaults to the
/// initial value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Profile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offset: Option<f64>,
    pub amplitude: f64,
    #[serde(default = "one")]
    pub frequency: f64,
}

impl Profile {
    pub fn at(&self, offset: f64, s: f64) -> f64 {
        self.offset.unwrap_or(offset) + self.amplitude * (2.0 * std::f64::consts::PI * self.frequency * s).sin()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DmorphConfig {
    pub mode: DmorphMode,
    #[serde(default = "default_free")]
    pub free: FreeFunctionKind,
    #[serde(default = "default_s_steps")]
    pub s_steps: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    /// Built-in system path, objective and initial field; replaces the
    /// top-level system, field and objective.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub benchmark: Option<BenchmarkKind>,
    /// Benchmark level (ladder8, dipole_swap3); defaults to 0.5.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<f64>,
    /// End point of a linear system path for `morph`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system_end: Option<SystemConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<Profile>,
}

fn default_free() -> FreeFunctionKind {
    FreeFunctionKind::Zero
}
fn default_s_steps() -> usize {
    50
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackConfig {
    #[serde(default = "default_s_steps")]
    pub s_steps: usize,
    #[serde(default = "default_track_tol")]
    pub tolerance: f64,
    #[serde(default)]
    pub correctors: usize,
    /// Ridge added to G; omitted means automatic, 0 disables it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ridge: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub condition_cap: Option<f64>,
    /// Observable objectives follow this profile; gate objectives follow
    /// the geodesic to W.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<Profile>,
}

fn default_track_tol() -> f64 {
    1e-3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum OracleConfig {
    ThreeLevel { horizon: f64 },
    Trilinear { theta: f64, coupling: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpenConfig {
    pub rho_s: MatrixSpec,
    pub rho_e: MatrixSpec,
    pub theta: MatrixSpec,
    /// Lifted gradient flows from Haar-random starts.
    #[serde(default)]
    pub starts: usize,
    #[serde(default = "default_open_s_max")]
    pub s_max: f64,
    #[serde(default = "default_open_steps")]
    pub steps: usize,
}

fn default_open_s_max() -> f64 {
    40.0
}
fn default_open_steps() -> usize {
    400
}

/// A configuration problem, located by field path and, for syntax errors,
/// by line and column.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub location: String,
    pub message: String,
}

impl ConfigError {
    pub fn at(location: impl Into<String>, message: impl fmt::Display) -> Self {
        Self {
            location: location.into(),
            message: message.to_string(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.location, self.message)
    }
}

impl std::error::Error for ConfigError {}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(|e| {
            let msg = e.to_string();
            // serde_json appends " at line L column C"; keep only the message.
            let msg = msg.split(" at line ").next().unwrap_or(&msg).to_string();
            ConfigError::at(format!("line {} column {}", e.line(), e.column()), msg)
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn system(&self) -> Result<ControlSystem, ConfigError> {
        let s = self.system.as_ref().ok_or_else(|| ConfigError::at("system", "missing"))?;
        s.build("system")
    }

    pub fn control_field(&self, system: &ControlSystem, base: &Path) -> Result<ControlField, ConfigError> {
        let f = self.field.as_ref().ok_or_else(|| ConfigError::at("field", "missing"))?;
        f.build(system, self.seed, base)
    }

    pub fn observable(&self) -> Result<ObservableSpec, ConfigError> {
        match self.objective.as_ref() {
            Some(ObjectiveConfig::Observable { rho0, theta }) => {
                let rho0 = matrix(rho0, "objective.observable.rho0")?;
                let theta = matrix(theta, "objective.observable.theta")?;
                ObservableSpec::new(rho0, theta).map_err(|e| ConfigError::at("objective.observable", e))
            }
            Some(ObjectiveConfig::Gate { .. }) => Err(ConfigError::at("objective", "an observable objective is required")),
            None => Err(ConfigError::at("objective", "missing")),
        }
    }

    pub fn objective(&self) -> Result<Objective, ConfigError> {
        match self.objective.as_ref() {
            Some(ObjectiveConfig::Observable { .. }) => Ok(Objective::Observable(self.observable()?)),
            Some(ObjectiveConfig::Gate { w }) => {
                let w = matrix(w, "objective.gate.w")?;
                GateSpec::new(w)
                    .map(Objective::Gate)
                    .map_err(|e| ConfigError::at("objective.gate.w", e))
            }
            None => Err(ConfigError::at("objective", "missing")),
        }
    }
}

impl SystemConfig {
    pub fn build(&self, at: &str) -> Result<ControlSystem, ConfigError> {
        let h0 = matrix(&self.h0, &format!("{at}.h0"))?;
        let dipoles = self
            .dipoles
            .iter()
            .enumerate()
            .map(|(i, d)| matrix(d, &format!("{at}.dipoles[{i}]")))
            .collect::<Result<Vec<_>, _>>()?;
        ControlSystem::new(h0, dipoles, self.horizon).map_err(|e| ConfigError::at(at, e))
    }
}

impl FieldConfig {
    pub fn build(&self, system: &ControlSystem, run_seed: u64, base: &Path) -> Result<ControlField, ConfigError> {
        let (t, m) = (system.horizon(), system.n_controls());
        let built = match self {
            FieldConfig::Constant { steps, value } => {
                if value.len() != m {
                    return Err(ConfigError::at(
                        "field.constant.value",
                        format!("{} values for {m} control channels", value.len()),
                    ));
                }
                ControlField::from_fn(t, *steps, m, |_, ch| value[ch])
            }
            FieldConfig::Random {
                steps,
                bandwidth,
                amplitude,
                seed,
            } => {
                if !(*bandwidth > 0.0) || !bandwidth.is_finite() {
                    return Err(ConfigError::at("field.random.bandwidth", "must be positive"));
                }
                let mut rng = match seed {
                    Some(s) => qcl_core::rng::substream(*s, "field"),
                    None => qcl_core::rng::substream(run_seed, "field"),
                };
                let w0 = 2.0 * std::f64::consts::PI / t;
                let modes = ((bandwidth / w0).floor() as usize).max(1);
                let coef: Vec<Vec<(f64, f64)>> = (0..m)
                    .map(|_| {
                        (0..modes)
                            .map(|_| (rng.sample(StandardNormal), rng.sample(StandardNormal)))
                            .collect()
                    })
                    .collect();
                let norm = amplitude / (modes as f64).sqrt();
                ControlField::from_fn(t, *steps, m, |tk, ch| {
                    coef[ch]
                        .iter()
                        .enumerate()
                        .map(|(j, (a, b))| {
                            let w = w0 * (j + 1) as f64;
                            norm * (a * (w * tk).cos() + b * (w * tk).sin())
                        })
                        .sum()
                })
            }
            FieldConfig::File { path } => {
                let full: PathBuf = base.join(path);
                let text = std::fs::read_to_string(&full)
                    .map_err(|e| ConfigError::at("field.file.path", format!("{}: {e}", full.display())))?;
                let rows = parse_field_table(&text, m)?;
                let values = DMatrix::from_fn(rows.len(), m, |k, ch| rows[k][ch]);
                ControlField::new(t, values)
            }
        };
        built.map_err(|e| ConfigError::at("field", e))
    }
}

fn parse_field_table(text: &str, m: usize) -> Result<Vec<Vec<f64>>, ConfigError> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        let parsed: Result<Vec<f64>, _> = cells.iter().map(|c| c.parse::<f64>()).collect();
        match parsed {
            Ok(v) if v.len() == m => rows.push(v),
            Ok(v) => {
                return Err(ConfigError::at(
                    format!("field.file line {}", i + 1),
                    format!("{} columns for {m} control channels", v.len()),
                ))
            }
            Err(_) if rows.is_empty() => continue,
            Err(e) => return Err(ConfigError::at(format!("field.file line {}", i + 1), e)),
        }
    }
    Ok(rows)
}

/// Dense complex matrix from [re, im] rows; must be square.
pub fn matrix(spec: &MatrixSpec, at: &str) -> Result<CMat, ConfigError> {
    let n = spec.len();
    if n == 0 {
        return Err(ConfigError::at(at, "empty matrix"));
    }
    for (i, row) in spec.iter().enumerate() {
        if row.len() != n {
            return Err(ConfigError::at(format!("{at}[{i}]"), format!("row has {} entries, expected {n}", row.len())));
        }
    }
    Ok(DMatrix::from_fn(n, n, |i, j| Complex64::new(spec[i][j][0], spec[i][j][1])))
}

pub fn matrix_spec(m: &CMat) -> MatrixSpec {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
        .collect()
}
