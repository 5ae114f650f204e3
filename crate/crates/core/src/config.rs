use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cad::TargetDim;
use crate::dimest::{DimEstOptions, DimensionRange};
use crate::embed::{Init, OptimizerOptions};
use crate::error::{CpmError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Euclidean,
    Geodesic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Capacity preserving mapping.
    Cpm,
    /// Classical MDS on the chosen metric.
    Mds,
}

/// Every knob of an embedding run. Missing JSON fields take the defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub method: Method,
    pub metric: Metric,
    /// Neighbours per point for the geodesic graph.
    pub knn: usize,
    pub target_dim: TargetDim,
    pub num_scales: usize,
    pub smoothing_width: usize,
    pub small_scale_fraction: f64,
    pub epsilon_factor: f64,
    pub max_iters: usize,
    pub tol: f64,
    pub init: Init,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            method: Method::Cpm,
            metric: Metric::Euclidean,
            knn: 10,
            target_dim: TargetDim::Two,
            num_scales: 50,
            smoothing_width: 3,
            small_scale_fraction: 0.05,
            epsilon_factor: 1e-6,
            max_iters: 1000,
            tol: 1e-7,
            init: Init::Mds,
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)
            .map_err(|e| CpmError::InvalidParameter(format!("bad config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| CpmError::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config is plain data")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(CpmError::InvalidParameter(msg));
        if self.knn < 1 {
            return bad("knn must be at least 1".into());
        }
        if self.num_scales < 4 {
            return bad(format!("num_scales must be at least 4, got {}", self.num_scales));
        }
        if !(self.small_scale_fraction > 0.0 && self.small_scale_fraction <= 1.0) {
            return bad(format!(
                "small_scale_fraction must lie in (0, 1], got {}",
                self.small_scale_fraction
            ));
        }
        if !(self.epsilon_factor > 0.0 && self.epsilon_factor.is_finite()) {
            return bad(format!("epsilon_factor must be positive, got {}", self.epsilon_factor));
        }
        if self.max_iters < 1 {
            return bad("max_iters must be at least 1".into());
        }
        if self.tol.is_nan() || self.tol < 0.0 {
            return bad(format!("tol must be nonnegative, got {}", self.tol));
        }
        Ok(())
    }

    pub fn dimest_options(&self, ambient_dim: usize) -> DimEstOptions {
        DimEstOptions {
            num_scales: self.num_scales,
            smoothing_width: self.smoothing_width,
            small_scale_fraction: self.small_scale_fraction,
            range: DimensionRange::for_ambient_dim(ambient_dim),
        }
    }

    pub fn optimizer_options(&self) -> OptimizerOptions {
        OptimizerOptions {
            max_iters: self.max_iters,
            tol: self.tol,
            init: self.init,
            ..OptimizerOptions::default()
        }
    }
}
