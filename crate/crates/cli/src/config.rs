use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use exec_lab_core::coefficients::{CoefficientModel, Piece, TimeGrid};
use serde::{Deserialize, Serialize};

pub const EXPERIMENTS: &[&str] = &[
    "ow_value",
    "lambert_value",
    "counterexample_bm",
    "counterexample_gbm",
    "discrete_value",
    "representation",
    "value_solution",
    "figure_lambertw",
    "figure_jump",
    "figure_negres",
];

fn default_paths() -> usize {
    1000
}

/// One experiment as read from a JSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: String,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub gamma0: f64,
    pub pieces: Vec<Piece>,
    pub grid_steps: usize,
    #[serde(default = "default_paths")]
    pub n_paths: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub x: f64,
    #[serde(default)]
    pub d: f64,
    #[serde(default)]
    pub t: f64,
    #[serde(default)]
    pub nu: Option<f64>,
    #[serde(default)]
    pub t0: Option<f64>,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let config: Self = serde_json::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if !EXPERIMENTS.contains(&self.experiment.as_str()) {
            bail!(
                "unknown experiment tag '{}'; expected one of {}",
                self.experiment,
                EXPERIMENTS.join(", ")
            );
        }
        if self.grid_steps == 0 {
            bail!("grid_steps must be positive");
        }
        if self.n_paths < 2 {
            bail!("n_paths must be at least 2, got {}", self.n_paths);
        }
        for (name, v) in [("x", self.x), ("d", self.d), ("t", self.t)] {
            if !v.is_finite() {
                bail!("{name} must be finite");
            }
        }
        self.model()?;
        self.grid()?;
        Ok(())
    }

    pub fn model(&self) -> Result<CoefficientModel> {
        CoefficientModel::new(self.horizon, self.gamma0, self.pieces.clone())
            .context("invalid coefficient model")
    }

    pub fn grid(&self) -> Result<TimeGrid> {
        let grid = TimeGrid::over(self.horizon, self.grid_steps)?;
        self.model()?.check_grid(&grid).context("grid does not carry the model breakpoints")?;
        Ok(grid)
    }

    pub fn nu(&self) -> Result<f64> {
        self.nu
            .with_context(|| format!("experiment '{}' needs field nu", self.experiment))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const OW: &str = r#"{
        "experiment": "ow_value", "T": 10, "gamma0": 1,
        "pieces": [{"t_from": 0, "rho": 0.5, "mu": 0, "sigma": 0}],
        "grid_steps": 1000, "n_paths": 10, "seed": 7, "x": 1, "d": 0
    }"#;

    #[test]
    fn parses_documented_fields() {
        let c: ExperimentConfig = serde_json::from_str(OW).unwrap();
        c.validate().unwrap();
        assert_eq!(c.horizon, 10.0);
        assert_eq!(c.pieces[0].rho, 0.5);
        assert_eq!(c.seed, 7);
    }

    #[test]
    fn rejects_unknown_tag_and_bad_model() {
        let mut c: ExperimentConfig = serde_json::from_str(OW).unwrap();
        c.experiment = "nope".into();
        assert!(c.validate().unwrap_err().to_string().contains("unknown experiment"));
        let mut c: ExperimentConfig = serde_json::from_str(OW).unwrap();
        c.pieces[0].sigma = 2.0;
        assert!(c.validate().is_err());
    }
}
