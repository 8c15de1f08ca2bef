//! Experiment configuration, read from a TOML file with sectioned keys.
//!
//! Every field has a default, so an empty file is a valid configuration.
//! The resolved configuration is echoed into each JSON summary.

use std::path::{Path, PathBuf};

use isac_core::channel::InterferenceMode;
use serde::{Deserialize, Serialize};

use crate::BenchError;

/// Array sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryConfig {
    pub n_tx: usize,
    pub n_rx: usize,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self { n_tx: 8, n_rx: 8 }
    }
}

/// Which transmit scheme a run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    Ic,
    Nic,
    /// No users (`K = 0`).
    SensingOnly,
}

impl RunMode {
    pub fn interference(self) -> InterferenceMode {
        match self {
            Self::Ic | Self::SensingOnly => InterferenceMode::Ic,
            Self::Nic => InterferenceMode::Nic,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::Ic => "ic",
            Self::Nic => "nic",
            Self::SensingOnly => "sensing_only",
        }
    }
}

/// Sensing metric of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricChoice {
    /// Path losses and angles of line-of-sight targets.
    Multitarget,
    /// Angles only, zero-mean path losses.
    AoaOnly,
    /// Every entry of the channel matrix.
    FullChannel,
    /// Radar SNR towards the first target.
    Snr,
}

/// Scalarization of the BCRB (ignored by the SNR metric).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveChoice {
    MaxDiag,
    Trace,
}

/// Prior variances of the full-channel entries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VarianceProfile {
    /// Every entry has variance `level`.
    Equal { level: f64 },
    /// The second half of the entries has variance `level / ratio`.
    HalfReduced { level: f64, ratio: f64 },
}

impl VarianceProfile {
    pub fn variances(&self, count: usize) -> Vec<f64> {
        match *self {
            Self::Equal { level } => vec![level; count],
            Self::HalfReduced { level, ratio } => (0..count)
                .map(|i| if i < count / 2 { level } else { level / ratio })
                .collect(),
        }
    }
}

/// Scenario parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub mode: RunMode,
    pub k_users: usize,
    pub n_targets: usize,
    pub metric: MetricChoice,
    pub objective: ObjectiveChoice,
    pub power_budget: f64,
    pub sinr_target_db: f64,
    pub theta_max_deg: f64,
    pub snapshots: usize,
    pub noise_var: f64,
    pub quadrature_nodes: usize,
    pub variance_profile: VarianceProfile,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            mode: RunMode::Ic,
            k_users: 2,
            n_targets: 1,
            metric: MetricChoice::Multitarget,
            objective: ObjectiveChoice::MaxDiag,
            power_budget: 10.0,
            sinr_target_db: 5.0,
            theta_max_deg: 5.0,
            snapshots: 10,
            noise_var: 1.0,
            quadrature_nodes: 15,
            variance_profile: VarianceProfile::Equal { level: 1.0 },
        }
    }
}

/// Seeds and numerical settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub n_seeds: usize,
    pub master_seed: u64,
    /// Relative eigenvalue threshold when counting beamformers.
    pub rank_threshold: f64,
    /// Re-solve for minimum power at the achieved sensing values before
    /// reducing, so the reduction also preserves the total power.
    pub power_min_stage: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            n_seeds: 200,
            master_seed: 2024,
            rank_threshold: 1e-6,
            power_min_stage: true,
        }
    }
}

/// Where results go.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Wall times make the CSV differ between runs; off by default.
    pub record_wall_time: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("results"),
            record_wall_time: false,
        }
    }
}

/// A complete experiment description.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub geometry: GeometryConfig,
    pub scenario: ScenarioConfig,
    pub run: RunConfig,
    pub output: OutputConfig,
}

impl ExperimentConfig {
    /// Parses and validates TOML text.
    pub fn from_toml(text: &str) -> Result<Self, BenchError> {
        let cfg: Self = toml::from_str(text).map_err(|e| BenchError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and validates a TOML file.
    pub fn load(path: &Path) -> Result<Self, BenchError> {
        let text = std::fs::read_to_string(path).map_err(|e| BenchError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        Self::from_toml(&text)
    }

    /// Number of users actually served.
    pub fn k(&self) -> usize {
        match self.scenario.mode {
            RunMode::SensingOnly => 0,
            _ => self.scenario.k_users,
        }
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        let bad = |m: &str| Err(BenchError::Config(m.to_string()));
        let s = &self.scenario;
        let g = &self.geometry;
        if g.n_tx < 2 || g.n_tx > 32 || g.n_rx < 1 || g.n_rx > 32 {
            return bad("array sizes must satisfy 2 <= n_tx <= 32 and 1 <= n_rx <= 32");
        }
        if self.run.n_seeds == 0 {
            return bad("n_seeds must be at least 1");
        }
        if !s.sinr_target_db.is_finite() {
            return bad("sinr_target_db must be finite");
        }
        if !(s.theta_max_deg >= 0.5 && s.theta_max_deg <= 45.0) {
            return bad("theta_max_deg must lie in [0.5, 45]");
        }
        if !(s.power_budget > 0.0) || !(s.noise_var > 0.0) {
            return bad("power_budget and noise_var must be positive");
        }
        if s.snapshots == 0 || s.quadrature_nodes == 0 {
            return bad("snapshots and quadrature_nodes must be positive");
        }
        if s.metric != MetricChoice::FullChannel && s.n_targets == 0 {
            return bad("at least one target is required");
        }
        if self.k() >= g.n_tx {
            return bad("k_users must be smaller than n_tx");
        }
        if !(self.run.rank_threshold > 0.0 && self.run.rank_threshold < 1.0) {
            return bad("rank_threshold must lie in (0, 1)");
        }
        match s.variance_profile {
            VarianceProfile::Equal { level } if !(level > 0.0) => {
                bad("variance level must be positive")
            }
            VarianceProfile::HalfReduced { level, ratio } if !(level > 0.0 && ratio > 0.0) => {
                bad("variance level and ratio must be positive")
            }
            _ => Ok(()),
        }
    }
}
