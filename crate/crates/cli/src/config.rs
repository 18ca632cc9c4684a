use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use qsl_core::krotov::KrotovConfig;
use qsl_core::model::SystemSpec;
use qsl_core::protocols::{sudden_switch_time, GuessConfig, ProcessSpec};
use qsl_core::qsl::{RunConfigs, ScanConfig, VerdictConfig};

use crate::CliError;

/// One experiment. Durations in `scan`/`sweep` are fractions of the
/// sudden-switch time of the process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SystemSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub process: Option<ProcessSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridConfig>,
    #[serde(default)]
    pub guess: GuessConfig,
    #[serde(default)]
    pub krotov: KrotovConfig,
    #[serde(default)]
    pub verdict: VerdictConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scan: Option<BracketConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spectrum: Option<SpectrumRange>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub analysis: Option<AnalysisConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

/// Either `duration` or `duration_ratio` (× T_S). `n_steps` defaults to the
/// standard density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration_ratio: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_steps: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BracketConfig {
    pub t_low: f64,
    pub t_high: f64,
    pub resolution: f64,
    #[serde(default)]
    pub pre_grid: usize,
}

impl BracketConfig {
    pub fn absolute(&self, ts: f64) -> ScanConfig {
        ScanConfig {
            t_low: self.t_low * ts,
            t_high: self.t_high * ts,
            resolution: self.resolution * ts,
            pre_grid: self.pre_grid,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SweepAxis {
    /// Crossing separation ε0.
    Eps0(Vec<f64>),
    /// Second gap of a three-level system.
    DeltaB(Vec<f64>),
    /// Ladder size; every gap equals `system.gaps[0]`.
    N(Vec<usize>),
}

impl SweepAxis {
    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::Eps0(_) => "eps0",
            SweepAxis::DeltaB(_) => "delta_b",
            SweepAxis::N(_) => "n",
        }
    }

    pub fn values(&self) -> Vec<f64> {
        match self {
            SweepAxis::Eps0(v) | SweepAxis::DeltaB(v) => v.clone(),
            SweepAxis::N(v) => v.iter().map(|&n| n as f64).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub axis: SweepAxis,
    pub bracket: BracketConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumRange {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    /// Field record to load (`t,lambda`); relative paths resolve against the
    /// config file's directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field_csv: Option<PathBuf>,
    /// Baseline window in samples; defaults to one ε0 period.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<usize>,
    /// Plateau boundaries; default is the process staircase stretched to the
    /// field duration.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub switch_times: Option<Vec<f64>>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<(Self, PathBuf), CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::io(path, e))?;
        let value: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        // a manifest embeds its config verbatim
        let value = match value.get("config") {
            Some(inner) if value.get("command").is_some() => inner.clone(),
            _ => value,
        };
        let cfg: ExperimentConfig = serde_json::from_value(value)
            .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((cfg, base))
    }

    pub fn process(&self) -> Result<ProcessSpec, CliError> {
        let p = self
            .process
            .unwrap_or_else(|| ProcessSpec::full_ladder(self.system.n_levels));
        p.validate(&self.system)?;
        Ok(p)
    }

    pub fn run_configs(&self) -> RunConfigs {
        RunConfigs {
            krotov: self.krotov,
            verdict: self.verdict,
            guess: self.guess,
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.system.validate()?;
        self.krotov.validate()?;
        self.verdict.validate()?;
        if let Some(p) = &self.process {
            p.validate(&self.system)?;
        }
        if self.scan.is_some() && self.sweep.is_some() {
            return Err(CliError::config("give either `scan` or `sweep`, not both"));
        }
        if let Some(s) = &self.sweep {
            if s.axis.values().is_empty() {
                return Err(CliError::config("sweep list is empty"));
            }
        }
        Ok(())
    }

    /// Duration from the grid block, resolving ratios against T_S.
    pub fn duration(&self) -> Result<Option<(f64, Option<usize>)>, CliError> {
        let Some(g) = self.grid else { return Ok(None) };
        let t = match (g.duration, g.duration_ratio) {
            (Some(t), None) => t,
            (None, Some(r)) => r * sudden_switch_time(&self.system, &self.process()?)?,
            _ => {
                return Err(CliError::config(
                    "grid needs exactly one of `duration` and `duration_ratio`",
                ))
            }
        };
        Ok(Some((t, g.n_steps)))
    }
}
