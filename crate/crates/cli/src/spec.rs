use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use ccr_core::margin::{PoolSide, TrancheSpec};
use ccr_core::{LiquiditySpec, ModelConfig, SimSettings, StructuringStyle, TimeGrid};

use crate::error::CliError;

/// Report encoding.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

/// Where the report goes; standard output when `path` is absent.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub format: Format,
}

/// Margin-lending pool for tranche jobs. Without `counterparties` the pool
/// holds the single trade described by `model`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoolSpec {
    #[serde(default)]
    pub counterparties: Option<Vec<ModelConfig>>,
    #[serde(default = "default_side")]
    pub side: PoolSide,
}

fn default_side() -> PoolSide {
    PoolSide::Quadripartite
}

/// One batch job.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub model: ModelConfig,
    pub grid: TimeGrid,
    pub sim: SimSettings,
    #[serde(default)]
    pub styles: Vec<StructuringStyle>,
    #[serde(default)]
    pub tranches: Option<Vec<TrancheSpec>>,
    #[serde(default)]
    pub pool: Option<PoolSpec>,
    #[serde(default)]
    pub liquidity: LiquiditySpec,
    /// Martingale checkpoints; defaults to the interior reset dates.
    #[serde(default)]
    pub checkpoints: Option<Vec<f64>>,
    /// Styles whose axiom checks must not fail in `check` mode.
    #[serde(default)]
    pub expect_pass: Vec<StructuringStyle>,
    #[serde(default)]
    pub output: OutputSpec,
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
    pub seed: Option<u64>,
    pub paths: Option<u64>,
    pub workers: Option<usize>,
}

impl RunSpec {
    pub fn from_json(text: &str) -> Result<RunSpec, CliError> {
        serde_json::from_str(text).map_err(CliError::Parse)
    }

    pub fn load(path: &Path) -> Result<RunSpec, CliError> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        RunSpec::from_json(&text)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(out) = &o.out {
            self.output.path = Some(out.clone());
        }
        if let Some(format) = o.format {
            self.output.format = format;
        }
        if let Some(seed) = o.seed {
            self.sim.seed = seed;
        }
        if let Some(paths) = o.paths {
            self.sim.n_paths = paths;
        }
        if let Some(workers) = o.workers {
            self.sim.workers = Some(workers);
        }
    }

    /// Checks that do not need a model: requested work and tranche shapes.
    pub fn validate(&self) -> Result<(), CliError> {
        let tranches = self.tranches.as_deref().unwrap_or(&[]);
        if self.styles.is_empty() && tranches.is_empty() {
            return Err(CliError::invalid("styles", "request at least one style or tranche"));
        }
        for t in tranches {
            t.validate()?;
        }
        self.liquidity.validate()?;
        if let Some(points) = &self.checkpoints {
            let t = self.grid.maturity();
            if let Some(bad) = points.iter().find(|&&s| !(s > 0.0 && s < t)) {
                return Err(CliError::invalid("checkpoints", format!("{bad} is outside (0, {t})")));
            }
        }
        Ok(())
    }

    pub fn martingale_checkpoints(&self) -> Vec<f64> {
        if let Some(points) = &self.checkpoints {
            return points.clone();
        }
        let resets = self.grid.resets();
        let interior: Vec<f64> = resets[1..resets.len() - 1].to_vec();
        if interior.is_empty() {
            vec![0.5 * self.grid.maturity()]
        } else {
            interior
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "model": {"r": 0.03, "lambda_b": 0.05, "lambda_c": 0.02, "recovery_b": 0.5,
                  "recovery_c": 0.4, "sigma": 0.1, "m0": 0.0, "maturity": 5.0},
        "grid": {"maturity": 5.0, "step": 0.5},
        "sim": {"n_paths": 1000, "seed": 7},
        "styles": ["ucva_only", "ftd_cva"]
    }"#;

    #[test]
    fn parses_with_defaults() {
        let spec = RunSpec::from_json(MINIMAL).unwrap();
        assert_eq!(spec.styles, vec![StructuringStyle::UcvaOnly, StructuringStyle::FtdCva]);
        assert_eq!(spec.output.format, Format::Csv);
        assert!(spec.liquidity.is_none());
        assert_eq!(spec.martingale_checkpoints(), vec![2.5]);
        spec.validate().unwrap();
    }

    #[test]
    fn overrides_take_precedence() {
        let mut spec = RunSpec::from_json(MINIMAL).unwrap();
        spec.apply(&Overrides {
            seed: Some(9),
            paths: Some(50),
            workers: Some(3),
            format: Some(Format::Json),
            out: Some("x.json".into()),
        });
        assert_eq!((spec.sim.seed, spec.sim.n_paths, spec.sim.workers), (9, 50, Some(3)));
        assert_eq!(spec.output.format, Format::Json);
    }

    #[test]
    fn rejects_unknown_fields_and_empty_jobs() {
        let bad = MINIMAL.replace("\"styles\"", "\"stiles\"");
        let err = RunSpec::from_json(&bad).unwrap_err();
        assert!(err.to_string().contains("stiles"));
        let empty = MINIMAL.replace("\"ucva_only\", \"ftd_cva\"", "");
        let err = RunSpec::from_json(&empty).unwrap().validate().unwrap_err();
        assert!(err.to_string().contains("styles"));
    }
}
