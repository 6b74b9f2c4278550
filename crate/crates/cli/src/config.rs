//! `key = value` configuration file, overridable by flags.

use std::path::{Path, PathBuf};

use ismtrace::ism::IsmConfig;
use ismtrace::trajectory::TrajectoryConfig;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq)]
pub struct CliConfig {
    pub model: Option<PathBuf>,
    pub imax: Option<f64>,
    pub ism: IsmConfig,
    pub endpoint: Option<String>,
    pub queue_capacity: usize,
    pub trajectory: TrajectoryConfig,
    pub calibration: Option<PathBuf>,
}

impl Default for CliConfig {
    fn default() -> Self {
        Self {
            model: None,
            imax: None,
            ism: IsmConfig::default(),
            endpoint: None,
            queue_capacity: 256,
            trajectory: TrajectoryConfig::default(),
            calibration: None,
        }
    }
}

pub const KEYS: &[&str] = &[
    "model",
    "imax",
    "carrier_hz",
    "buffer_ms",
    "segment_ms",
    "lowfreq_cutoff_hz",
    "crossfade",
    "endpoint",
    "queue_capacity",
    "min_spacing_m",
    "max_point_rate_hz",
    "align_tolerance_ms",
    "calibration",
];

fn number(line: usize, key: &str, value: &str) -> CliResult<f64> {
    value
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| CliError::usage(format!("config line {line}: `{key}` needs a number, got `{value}`")))
}

impl CliConfig {
    /// Parses `key = value` lines. Blank lines and `#` comments are skipped.
    /// Relative paths are resolved against `base`.
    pub fn parse(text: &str, base: &Path) -> CliResult<Self> {
        let mut cfg = CliConfig::default();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::usage(format!("config line {line_no}: expected `key = value`")))?;
            let (key, value) = (key.trim(), value.trim());
            let num = || number(line_no, key, value);
            match key {
                "model" => cfg.model = Some(base.join(value)),
                "imax" => cfg.imax = Some(num()?),
                "carrier_hz" => cfg.ism.carrier_hz = num()?,
                "buffer_ms" => cfg.ism.buffer_ms = num()?,
                "segment_ms" => cfg.ism.segment_ms = num()?,
                "lowfreq_cutoff_hz" => cfg.ism.lowfreq_cutoff_hz = num()?,
                "crossfade" => {
                    cfg.ism.crossfade = match value {
                        "true" | "on" | "1" => true,
                        "false" | "off" | "0" => false,
                        _ => {
                            return Err(CliError::usage(format!(
                                "config line {line_no}: `crossfade` must be true or false"
                            )))
                        }
                    }
                }
                "endpoint" => cfg.endpoint = Some(value.to_string()),
                "queue_capacity" => {
                    cfg.queue_capacity = value.parse().ok().filter(|&c: &usize| c > 0).ok_or_else(|| {
                        CliError::usage(format!("config line {line_no}: `queue_capacity` must be a positive integer"))
                    })?
                }
                "min_spacing_m" => cfg.trajectory.min_spacing_m = num()?,
                "max_point_rate_hz" => cfg.trajectory.max_point_rate_hz = num()?,
                "align_tolerance_ms" => cfg.trajectory.align_tolerance_ms = num()?,
                "calibration" => cfg.calibration = Some(base.join(value)),
                other => {
                    return Err(CliError::usage(format!(
                        "config line {line_no}: unknown key `{other}` (known: {})",
                        KEYS.join(", ")
                    )))
                }
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path.display(), e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base).map_err(|e| e.context(path.display()))
    }
}
