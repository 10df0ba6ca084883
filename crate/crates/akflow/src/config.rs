//! Run configuration: one schema shared by every subcommand, readable from
//! a JSON file with flags overriding individual fields. Unknown keys are
//! rejected so a typo cannot silently change a run.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExampleKind {
    Flat,
    Family,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendChoice {
    Fd,
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RetractionChoice {
    Off,
    Renormalize,
}

/// Effective configuration of a run; serialized verbatim into reports and
/// hashed for reproducibility.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub example: ExampleKind,
    pub dim: usize,
    /// Per-axis resolutions; `None` lets `grid` fill in `[grid, 1, 1, ...]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolutions: Option<Vec<usize>>,
    /// Leading resolution shorthand.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<usize>,
    pub fd_order: usize,
    pub backend: BackendChoice,
    pub eps: f64,
    pub axis: usize,
    pub freq: f64,
    /// Optional explicit sp(2n) generator, row-major dim x dim.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<Vec<f64>>,
    /// Identity selection for verify/converge; empty means all.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ids: Vec<String>,
    /// Refinement resolutions for `converge`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub refine: Vec<usize>,
    pub dt: f64,
    pub steps: usize,
    pub save_every: usize,
    pub drift_tol: f64,
    pub retraction: RetractionChoice,
    /// Evolution check for `flow`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub check: Option<String>,
    /// Re-run the flow check on a coarsened grid and report the h-factor.
    #[serde(default)]
    pub h_refine: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            example: ExampleKind::Family,
            dim: 4,
            resolutions: None,
            grid: None,
            fd_order: 4,
            backend: BackendChoice::Fd,
            eps: 0.1,
            axis: 0,
            freq: 1.0,
            generator: None,
            ids: Vec::new(),
            refine: Vec::new(),
            dt: 1e-3,
            steps: 100,
            save_every: 1,
            drift_tol: 1e-8,
            retraction: RetractionChoice::Off,
            check: None,
            h_refine: false,
        }
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("cannot read config file {}", path.display()))?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .with_context(|| format!("invalid config file {}", path.display()))?;
        Ok(cfg)
    }

    /// Resolutions with the `grid` shorthand applied: `[n, 1, 1, ...]`.
    pub fn effective_resolutions(&self) -> Result<Vec<usize>> {
        if let Some(res) = &self.resolutions {
            if res.len() != self.dim {
                bail!(
                    "resolutions has {} entries for dimension {}",
                    res.len(),
                    self.dim
                );
            }
            return Ok(res.clone());
        }
        let n = self.grid.unwrap_or(32);
        let mut res = vec![1usize; self.dim];
        res[0] = n;
        Ok(res)
    }

    /// Stable hash of the effective configuration.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        let mut out = String::with_capacity(64);
        for b in digest {
            out.push_str(&format!("{b:02x}"));
        }
        out
    }
}
