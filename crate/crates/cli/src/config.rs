//! TOML configuration: `[edge]`, `[tukey]`, `[calibration]`, `[channels.N]`, `[io]`.
//!
//! Every key is optional and falls back to the built-in default; unknown keys
//! are errors so typos fail fast. A `[channels.N]` table, when present,
//! replaces the whole default channel list.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use barkline_core::edge::EdgeDetectParams;
use barkline_core::keydata::{CalibrationProfile, CuttingChannel};
use barkline_core::pipeline::PipelineParams;
use barkline_core::robustfit::{ScaleMode, TukeyParams, WeightVariant, TUKEY_95_EFFICIENCY};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Environment variable consulted when `--config` is not given.
pub const CONFIG_ENV: &str = "BARKLINE_CONFIG";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CMode {
    Fixed,
    MadScaled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TukeySection {
    pub c_mode: CMode,
    /// Multiplier on the MAD-based sigma, used with `c_mode = "mad_scaled"`.
    pub c_multiplier: f64,
    /// Threshold in pixels, used with `c_mode = "fixed"`.
    pub c_fixed_px: f64,
    pub min_c_px: f64,
    pub weight_variant: WeightVariant,
    pub max_iterations: usize,
    pub convergence_tol_slope: f64,
    pub convergence_tol_intercept: f64,
}

impl Default for TukeySection {
    fn default() -> Self {
        Self::from(&TukeyParams::default())
    }
}

impl From<&TukeyParams> for TukeySection {
    fn from(p: &TukeyParams) -> Self {
        let (c_mode, c_multiplier, c_fixed_px) = match p.scale {
            ScaleMode::MadScaled { multiplier } => (CMode::MadScaled, multiplier, 2.0),
            ScaleMode::Fixed { c } => (CMode::Fixed, TUKEY_95_EFFICIENCY, c),
        };
        Self {
            c_mode,
            c_multiplier,
            c_fixed_px,
            min_c_px: p.min_c,
            weight_variant: p.variant,
            max_iterations: p.max_iterations,
            convergence_tol_slope: p.tol_slope,
            convergence_tol_intercept: p.tol_intercept,
        }
    }
}

impl TukeySection {
    pub fn params(&self) -> TukeyParams {
        TukeyParams {
            scale: match self.c_mode {
                CMode::MadScaled => ScaleMode::MadScaled {
                    multiplier: self.c_multiplier,
                },
                CMode::Fixed => ScaleMode::Fixed { c: self.c_fixed_px },
            },
            variant: self.weight_variant,
            max_iterations: self.max_iterations,
            tol_slope: self.convergence_tol_slope,
            tol_intercept: self.convergence_tol_intercept,
            min_c: self.min_c_px,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrationSection {
    pub mm_per_px: f64,
    pub kerf_margin_mm: f64,
    pub reference_x_px: f64,
}

impl Default for CalibrationSection {
    fn default() -> Self {
        let d = CalibrationProfile::default();
        Self {
            mm_per_px: d.mm_per_px,
            kerf_margin_mm: d.kerf_margin_mm,
            reference_x_px: d.reference_x_px,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSection {
    pub nominal_width_mm: f64,
    pub lateral_center_mm: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IoSection {
    /// Glob used by `batch` and `bench` when no pattern is given.
    pub input: Option<String>,
    pub output_dir: Option<PathBuf>,
    /// Write a diagnostic overlay per mask during `batch` (needs an output directory).
    pub overlay: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub edge: EdgeDetectParams,
    pub tukey: TukeySection,
    pub calibration: CalibrationSection,
    pub channels: BTreeMap<String, ChannelSection>,
    pub io: IoSection,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let channels = CalibrationProfile::default()
            .channels
            .into_iter()
            .map(|c| {
                (
                    c.id.to_string(),
                    ChannelSection {
                        nominal_width_mm: c.nominal_width_mm,
                        lateral_center_mm: c.lateral_center_mm,
                    },
                )
            })
            .collect();
        Self {
            edge: EdgeDetectParams::default(),
            tukey: TukeySection::default(),
            calibration: CalibrationSection::default(),
            channels,
            io: IoSection::default(),
        }
    }
}

impl PipelineConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.pipeline_params()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Loads `--config`, else `$BARKLINE_CONFIG`, else the defaults.
    pub fn resolve(explicit: Option<&Path>) -> Result<Self, CliError> {
        match explicit {
            Some(p) => Self::load(p),
            None => match std::env::var_os(CONFIG_ENV) {
                Some(p) if !p.is_empty() => Self::load(Path::new(&p)),
                _ => Ok(Self::default()),
            },
        }
    }

    pub fn calibration(&self) -> Result<CalibrationProfile, CliError> {
        let mut channels = Vec::with_capacity(self.channels.len());
        for (key, ch) in &self.channels {
            let id = key.parse::<u32>().map_err(|_| {
                CliError::Config(format!("channel key `{key}` is not a non-negative integer"))
            })?;
            channels.push(CuttingChannel {
                id,
                nominal_width_mm: ch.nominal_width_mm,
                lateral_center_mm: ch.lateral_center_mm,
            });
        }
        channels.sort_by_key(|c| c.id);
        let cal = CalibrationProfile {
            mm_per_px: self.calibration.mm_per_px,
            channels,
            kerf_margin_mm: self.calibration.kerf_margin_mm,
            reference_x_px: self.calibration.reference_x_px,
        };
        cal.validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        Ok(cal)
    }

    /// Validated parameters for the core pipeline.
    pub fn pipeline_params(&self) -> Result<PipelineParams, CliError> {
        self.edge
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        let tukey = self.tukey.params();
        tukey
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        Ok(PipelineParams {
            edge: self.edge,
            tukey,
            calibration: self.calibration()?,
        })
    }
}
