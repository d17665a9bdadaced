//! TOML configuration schema. All rates are relative to one frequency unit
//! (conventionally kappa = 1) and all times to its inverse.

use serde::{Deserialize, Serialize};

use photon_extraction::model::{CavityChannel, SystemParams};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub system: SystemConfig,
    pub scenario: ScenarioSection,
    #[serde(default)]
    pub optimizer: OptimizerSection,
    #[serde(default)]
    pub output: OutputSection,
}

/// Top-level config of the `sweep` verb: a list of independent jobs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(rename = "job")]
    pub jobs: Vec<ScenarioConfig>,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    #[serde(default = "one")]
    pub kappa: f64,
    pub gamma: f64,
    #[serde(rename = "channel")]
    pub channels: Vec<ChannelConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelConfig {
    pub g: f64,
    #[serde(default)]
    pub delta_g: f64,
    #[serde(default)]
    pub label: String,
}

fn one() -> f64 {
    1.0
}

impl SystemConfig {
    pub fn to_params(&self) -> Result<SystemParams<f64>> {
        let channels = self
            .channels
            .iter()
            .map(|ch| CavityChannel::with_label(ch.g, ch.delta_g, &ch.label))
            .collect();
        Ok(SystemParams::new(self.kappa, self.gamma, channels)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    BoundsVsT,
    RegimeSweep,
    MetricOptimization,
    ZeemanMap,
    DriveRoundtrip,
}

impl ScenarioKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::BoundsVsT => "bounds_vs_t",
            Self::RegimeSweep => "regime_sweep",
            Self::MetricOptimization => "metric_optimization",
            Self::ZeemanMap => "zeeman_map",
            Self::DriveRoundtrip => "drive_roundtrip",
        }
    }
}

/// Log-spaced grid of extraction times in units of the critical time.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogGrid {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl LogGrid {
    pub fn values(&self) -> Result<Vec<f64>> {
        if self.count == 0 || !(self.min > 0.0) || !(self.max >= self.min) {
            return Err(CliError::Config("log grid needs count >= 1 and 0 < min <= max".into()));
        }
        if self.count == 1 {
            return Ok(vec![self.min]);
        }
        let (a, b) = (self.min.ln(), self.max.ln());
        Ok((0..self.count)
            .map(|i| (a + (b - a) * i as f64 / (self.count - 1) as f64).exp())
            .collect())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    pub kind: ScenarioKind,
    /// Lambda-system families: one system per ratio, at fixed cooperativity.
    #[serde(default)]
    pub kappa_over_g: Vec<f64>,
    #[serde(default)]
    pub cooperativity: Option<f64>,
    /// Extraction times in units of the critical time (explicit list).
    #[serde(default)]
    pub t_over_t_crit: Vec<f64>,
    /// Extraction times in units of the critical time (log-spaced grid).
    #[serde(default)]
    pub t_grid: Option<LogGrid>,
    /// Absolute extraction times.
    #[serde(default)]
    pub t_values: Vec<f64>,
    /// Single absolute extraction time.
    #[serde(default)]
    pub t_extraction: Option<f64>,
    /// Ground-state splittings for the two-channel map.
    #[serde(default)]
    pub delta_z_values: Vec<f64>,
    /// Amplitude margins for drive reconstruction.
    #[serde(default)]
    pub chi_values: Vec<f64>,
    /// Optimization targets, e.g. "p_kappa_1" or "p_kappa_1*p_kappa_2".
    #[serde(default)]
    pub targets: Vec<String>,
    /// Integration steps per drive reconstruction.
    #[serde(default = "default_drive_steps")]
    pub drive_steps: usize,
}

fn default_drive_steps() -> usize {
    2000
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerSection {
    /// Positive-frequency count; 0 selects the detuning-based default.
    pub n_pos: usize,
    /// Basis period as a multiple of the extraction time.
    pub t_b_factor: f64,
    pub normalization_times: usize,
    pub restarts: usize,
    pub max_iterations: usize,
    pub stall_iterations: usize,
    /// Low-pass cutoff applied to the reported vector; 0 disables.
    pub low_pass: usize,
}

impl Default for OptimizerSection {
    fn default() -> Self {
        Self {
            n_pos: 0,
            t_b_factor: 1.25,
            normalization_times: 257,
            restarts: 2,
            max_iterations: 20_000,
            stall_iterations: 200,
            low_pass: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub directory: String,
    pub seed: u64,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { directory: "out".into(), seed: 1 }
    }
}

/// Parse a target string into the 1-based emission channels of its product.
pub fn parse_target(spec: &str, channel_count: usize) -> Result<Vec<usize>> {
    let mut channels = Vec::new();
    for factor in spec.split('*') {
        let factor = factor.trim();
        let j: usize = factor
            .strip_prefix("p_kappa_")
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| {
                CliError::Config(format!(
                    "target factor '{factor}' is not of the form p_kappa_<j>"
                ))
            })?;
        if j == 0 || j > channel_count {
            return Err(CliError::Config(format!(
                "target channel {j} outside 1..={channel_count}"
            )));
        }
        channels.push(j);
    }
    if channels.is_empty() {
        return Err(CliError::Config("empty target".into()));
    }
    Ok(channels)
}

/// File-system-friendly tag for a float (e.g. 2.5 -> "2p5", 0.1 -> "0p1").
pub fn float_tag(x: f64) -> String {
    let mut s = format!("{x}");
    if s.contains('e') {
        s = format!("{x:.6}");
    }
    s.replace('.', "p").replace('-', "m")
}

pub fn load_scenario(text: &str) -> Result<ScenarioConfig> {
    Ok(toml::from_str(text)?)
}

pub fn load_sweep(text: &str) -> Result<SweepConfig> {
    if let Ok(sweep) = toml::from_str::<SweepConfig>(text) {
        if !sweep.jobs.is_empty() {
            return Ok(sweep);
        }
    }
    // A single scenario config is accepted as a one-job sweep.
    let single = load_scenario(text)?;
    let output = single.output.clone();
    Ok(SweepConfig { jobs: vec![single], output })
}
