//! Experiment configuration: a flat TOML file plus command-line
//! overrides. Unknown keys are rejected so manifests stay trustworthy.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use statloss::data::GaussianSpec;
use statloss::linalg::Matrix;
use statloss::loss::{GradMode, LossConfig};
use statloss::model::TrainConfig;

/// On-disk configuration; every key is optional and falls back to the
/// built-in defaults after the command line is applied.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub train_data: Option<PathBuf>,
    pub test_data: Option<PathBuf>,
    pub lambda: Option<f64>,
    pub beta: Option<f64>,
    pub delta: Option<f64>,
    pub lr: Option<f64>,
    pub iterations: Option<usize>,
    pub batch_size: Option<usize>,
    /// Ridge added to pooled scatter matrices; "auto" selects the
    /// scale-aware default.
    pub ridge_eps: Option<RidgeEps>,
    pub grad_mode: Option<String>,
    pub hinge: Option<bool>,
    pub hidden_dims: Option<Vec<usize>>,
    #[serde(default)]
    pub synth_class: Vec<SynthClass>,
}

/// Either a fixed ridge value or the string "auto".
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(untagged)]
pub enum RidgeEps {
    Fixed(f64),
    Named(AutoRidge),
}

#[derive(Debug, Clone, Copy, Deserialize)]
pub enum AutoRidge {
    #[serde(rename = "auto")]
    Auto,
}

impl RidgeEps {
    pub fn as_option(self) -> Option<f64> {
        match self {
            RidgeEps::Fixed(v) => Some(v),
            RidgeEps::Named(_) => None,
        }
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        if text == "auto" {
            return Ok(RidgeEps::Named(AutoRidge::Auto));
        }
        text.parse::<f64>()
            .map(RidgeEps::Fixed)
            .map_err(|e| format!("ridge-eps must be a number or \"auto\": {e}"))
    }
}

/// One synthetic Gaussian class in the config file.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthClass {
    pub mean: Vec<f64>,
    /// Full covariance, row by row. Exactly one of `cov` and `cov_diag`.
    pub cov: Option<Vec<Vec<f64>>>,
    pub cov_diag: Option<Vec<f64>>,
    pub train_count: usize,
    pub test_count: usize,
}

impl SynthClass {
    pub fn to_spec(&self, count: usize) -> Result<GaussianSpec, String> {
        let dim = self.mean.len();
        let cov = match (&self.cov, &self.cov_diag) {
            (Some(rows), None) => {
                if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
                    return Err(format!("cov must be {dim}x{dim} to match the mean"));
                }
                let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
                Matrix::from_rows(&refs)
            }
            (None, Some(diag)) => {
                if diag.len() != dim {
                    return Err(format!("cov_diag must have {dim} entries to match the mean"));
                }
                Matrix::diag(diag)
            }
            _ => return Err("each synth_class needs exactly one of cov or cov_diag".to_string()),
        };
        Ok(GaussianSpec {
            mean: self.mean.clone(),
            cov,
            count,
        })
    }
}

/// Fully resolved settings after merging file, flags and defaults.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub train_data: Option<PathBuf>,
    pub test_data: Option<PathBuf>,
    pub lambda: f64,
    pub beta: f64,
    pub delta: f64,
    pub lr: f64,
    pub iterations: usize,
    pub batch_size: usize,
    pub ridge_eps: Option<f64>,
    pub grad_mode: GradMode,
    pub hinge: bool,
    pub hidden_dims: Vec<usize>,
    pub synth_classes: Vec<SynthClass>,
}

impl Resolved {
    pub fn loss_cfg(&self) -> LossConfig {
        LossConfig {
            lambda: self.lambda,
            delta: self.delta,
            ridge_eps: self.ridge_eps,
            grad_mode: self.grad_mode,
            hinge: self.hinge,
        }
    }

    pub fn train_cfg(&self) -> TrainConfig {
        TrainConfig {
            beta: self.beta,
            lr: self.lr,
            iterations: self.iterations,
            batch_size: self.batch_size,
            seed: self.seed,
            loss_cfg: self.loss_cfg(),
            hidden_dims: self.hidden_dims.clone(),
        }
    }
}

pub fn parse_grad_mode(text: &str) -> Result<GradMode, String> {
    match text {
        "paper" => Ok(GradMode::Paper),
        "exact" => Ok(GradMode::Exact),
        other => Err(format!("grad_mode must be \"paper\" or \"exact\", found {other:?}")),
    }
}

pub fn load_file(path: &Path) -> Result<FileConfig, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
    toml::from_str(&text).map_err(|e| format!("bad config {}: {e}", path.display()))
}

/// Validates the invariants that hold for every command.
pub fn validate(resolved: &Resolved) -> Result<(), String> {
    if resolved.lambda < 0.0 {
        return Err("lambda must be nonnegative".to_string());
    }
    if resolved.delta <= 0.0 {
        return Err("delta must be positive".to_string());
    }
    if resolved.beta < 0.0 {
        return Err("beta must be nonnegative".to_string());
    }
    if resolved.lr < 0.0 {
        return Err("lr must be nonnegative".to_string());
    }
    if let Some(eps) = resolved.ridge_eps {
        if eps < 0.0 {
            return Err("ridge_eps must be nonnegative".to_string());
        }
    }
    if resolved.hidden_dims.contains(&0) {
        return Err("hidden_dims entries must be at least 1".to_string());
    }
    Ok(())
}
