//! Run configuration loaded from JSON.
//!
//! Every section and field is optional and falls back to the reference
//! defaults. Unknown fields are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelParams, Thresholds};
use crate::noise::NoiseSettings;
use crate::optimizer::OptConfig;
use crate::scenario::{CostWeights, Scenario};
use crate::sim::SimConfig;
use crate::validation::{FdSettings, MIN_PATHS};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidationConfig {
    pub fd: FdSettings,
    /// Paths for the unbiasedness comparison; 0 skips it.
    pub n_paths: usize,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        Self {
            fd: FdSettings::default(),
            n_paths: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Used when no `--out` is given on the command line.
    pub dir: Option<PathBuf>,
    /// Write every n-th trajectory sample (knots are always written).
    pub trajectory_stride: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: None,
            trajectory_stride: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestConfig {
    /// Patient CSV read by the `ingest` verb when no input is given.
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelParams,
    pub thresholds: Thresholds,
    pub sim: SimConfig,
    pub noise: NoiseSettings,
    pub cost: CostWeights,
    pub optimizer: OptConfig,
    pub validation: ValidationConfig,
    pub output: OutputConfig,
    pub ingest: IngestConfig,
}

impl RunConfig {
    pub fn scenario(&self) -> Scenario {
        Scenario {
            model: self.model,
            sim: self.sim,
            noise: self.noise,
            cost: self.cost,
        }
    }

    /// Field-level and cross-field checks.
    pub fn validate(&self) -> Result<()> {
        self.scenario().validate(&self.thresholds)?;
        self.optimizer.validate()?;
        self.validation.fd.validate()?;
        let n = self.validation.n_paths;
        if n != 0 && n < MIN_PATHS {
            return Err(Error::Validation {
                field: "validation.n_paths".into(),
                message: format!("must be 0 (skip) or >= {MIN_PATHS}, got {n}"),
            });
        }
        if self.output.trajectory_stride == 0 {
            return Err(Error::Validation {
                field: "output.trajectory_stride".into(),
                message: "must be >= 1, got 0".into(),
            });
        }
        Ok(())
    }

    pub fn from_json_str(text: &str, origin: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Parse {
            path: origin.into(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Reads, parses and validates a JSON run configuration.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        message: format!("cannot read: {e}"),
    })?;
    RunConfig::from_json_str(&text, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn field_of(e: Error) -> String {
        match e {
            Error::Validation { field, .. } => field,
            other => panic!("expected a validation error, got {other:?}"),
        }
    }

    #[test]
    fn empty_object_is_reference() {
        let cfg = RunConfig::from_json_str("{}", "inline").unwrap();
        assert_eq!(cfg, RunConfig::default());
    }

    #[test]
    fn default_round_trips() {
        let text = serde_json::to_string_pretty(&RunConfig::default()).unwrap();
        assert_eq!(
            RunConfig::from_json_str(&text, "inline").unwrap(),
            RunConfig::default()
        );
    }

    #[test]
    fn partial_section_keeps_other_defaults() {
        let cfg = RunConfig::from_json_str(r#"{"thresholds": {"theta1": 5.0}}"#, "inline").unwrap();
        assert_eq!(cfg.thresholds.theta1, 5.0);
        assert_eq!(cfg.thresholds.theta2, Thresholds::default().theta2);
    }

    #[test]
    fn unknown_field_is_a_parse_error() {
        let err = RunConfig::from_json_str(r#"{"sim": {"dtt": 0.1}}"#, "inline").unwrap_err();
        assert!(matches!(err, Error::Parse { .. }), "{err}");
    }

    #[test]
    fn malformed_json_is_a_parse_error() {
        let err = RunConfig::from_json_str("{", "inline").unwrap_err();
        assert!(matches!(err, Error::Parse { .. }));
    }

    #[test]
    fn dt_above_grid_names_both_fields() {
        let err = RunConfig::from_json_str(
            r#"{"sim": {"dt": 2.0}, "noise": {"grid_dt": 1.0}}"#,
            "inline",
        )
        .unwrap_err();
        let msg = err.to_string();
        assert!(
            msg.contains("sim.dt = 2") && msg.contains("noise.grid_dt = 1"),
            "{msg}"
        );
        assert_eq!(field_of(err), "sim.dt");
    }

    #[test]
    fn initial_psa_below_theta1_rejected() {
        let err = RunConfig::from_json_str(r#"{"sim": {"x1_0": 3.0, "x2_0": 0.5}}"#, "inline")
            .unwrap_err();
        assert!(err.to_string().contains("thresholds.theta1"));
    }

    #[test]
    fn overlapping_boxes_rejected() {
        let err = RunConfig::from_json_str(r#"{"thresholds": {"theta1_max": 8.0}}"#, "inline")
            .unwrap_err();
        assert!(matches!(err, Error::Validation { .. }), "{err}");
    }

    #[test]
    fn small_path_count_rejected() {
        let err =
            RunConfig::from_json_str(r#"{"validation": {"n_paths": 5}}"#, "inline").unwrap_err();
        assert_eq!(field_of(err), "validation.n_paths");
    }

    #[test]
    fn missing_file_is_a_parse_error() {
        let err = load_config(Path::new("/nonexistent/cfg.json")).unwrap_err();
        assert!(matches!(err, Error::Parse { .. }));
    }
}
