//! End-to-end runs: metric, dimension curve, adjusted distances, affinities,
//! optimization.

use serde::Serialize;

use crate::baseline::classical_mds;
use crate::cad::adjusted_distance_matrix;
use crate::config::{Method, Metric, RunConfig};
use crate::dataset::Dataset;
use crate::dimest::{dimension_curve, DimensionCurve};
use crate::embed::{high_affinities, optimize_embedding, Embedding, StopReason};
use crate::error::{CpmError, Result};
use crate::metricspace::{
    euclidean_distance_matrix, geodesic_distance_matrix, knn_graph_from_distances, DistanceMatrix,
};
use crate::rng::Rng;

/// Pipeline stage, reported with failures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Metric,
    DimensionEstimate,
    AdjustedDistance,
    Affinities,
    Optimization,
    Baseline,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Stage::Metric => "metric",
            Stage::DimensionEstimate => "dimension estimate",
            Stage::AdjustedDistance => "adjusted distance",
            Stage::Affinities => "affinities",
            Stage::Optimization => "optimization",
            Stage::Baseline => "baseline",
        };
        f.write_str(s)
    }
}

/// A pipeline failure tagged with the stage that raised it.
#[derive(Debug, thiserror::Error)]
#[error("{stage} stage failed: {source}")]
pub struct StageError {
    pub stage: Stage,
    #[source]
    pub source: CpmError,
}

trait AtStage<T> {
    fn at(self, stage: Stage) -> std::result::Result<T, StageError>;
}

impl<T> AtStage<T> for Result<T> {
    fn at(self, stage: Stage) -> std::result::Result<T, StageError> {
        self.map_err(|source| StageError { stage, source })
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub embedding: Embedding,
    pub distances: DistanceMatrix,
    pub dimension_curve: Option<DimensionCurve>,
    pub kl_history: Vec<f64>,
    pub iterations: usize,
    pub stop: Option<StopReason>,
    pub bridged: bool,
    pub warnings: Vec<String>,
}

/// JSON diagnostics written next to an embedding.
#[derive(Debug, Clone, Serialize)]
pub struct Diagnostics<'a> {
    pub config: &'a RunConfig,
    pub n_points: usize,
    pub ambient_dim: usize,
    pub bridged: bool,
    pub warnings: &'a [String],
    pub dimension_curve: Option<&'a DimensionCurve>,
    pub kl_history: &'a [f64],
    pub iterations: usize,
    pub stop_reason: Option<StopReason>,
}

impl RunOutput {
    pub fn diagnostics<'a>(&'a self, config: &'a RunConfig, data: &Dataset) -> Diagnostics<'a> {
        Diagnostics {
            config,
            n_points: data.len(),
            ambient_dim: data.dim(),
            bridged: self.bridged,
            warnings: &self.warnings,
            dimension_curve: self.dimension_curve.as_ref(),
            kl_history: &self.kl_history,
            iterations: self.iterations,
            stop_reason: self.stop,
        }
    }
}

/// Distance matrix for the configured metric; the flag reports bridging.
pub fn metric_distances(
    data: &Dataset,
    config: &RunConfig,
    warnings: &mut Vec<String>,
) -> Result<(DistanceMatrix, bool)> {
    let euclid = euclidean_distance_matrix(data);
    match config.metric {
        Metric::Euclidean => Ok((euclid, false)),
        Metric::Geodesic => {
            let graph = knn_graph_from_distances(&euclid, config.knn)?;
            if graph.bridged() {
                warnings.push(format!(
                    "k-NN graph (k={}) was disconnected; {} bridging edge(s) added, global geodesic distances may be distorted",
                    config.knn,
                    graph.bridges().len()
                ));
            }
            Ok((geodesic_distance_matrix(&graph)?, graph.bridged()))
        }
    }
}

pub fn run(data: &Dataset, config: &RunConfig) -> std::result::Result<RunOutput, StageError> {
    config.validate().at(Stage::Metric)?;
    let mut warnings = Vec::new();
    let (dist, bridged) = metric_distances(data, config, &mut warnings).at(Stage::Metric)?;
    match config.method {
        Method::Mds => {
            let embedding = classical_mds(&dist, config.target_dim).at(Stage::Baseline)?;
            Ok(RunOutput {
                embedding,
                distances: dist,
                dimension_curve: None,
                kl_history: Vec::new(),
                iterations: 0,
                stop: None,
                bridged,
                warnings,
            })
        }
        Method::Cpm => {
            let estimate = dimension_curve(&dist, &config.dimest_options(data.dim()))
                .at(Stage::DimensionEstimate)?;
            warnings.extend(estimate.warnings.iter().cloned());
            let adjusted = adjusted_distance_matrix(&dist, &estimate.curve, config.target_dim)
                .at(Stage::AdjustedDistance)?;
            let p = high_affinities(&adjusted, config.epsilon_factor).at(Stage::Affinities)?;
            let mut rng = Rng::new(config.seed);
            let result = optimize_embedding(
                &p,
                config.target_dim,
                &adjusted,
                &mut rng,
                &config.optimizer_options(),
            )
            .at(Stage::Optimization)?;
            Ok(RunOutput {
                embedding: result.embedding,
                distances: dist,
                dimension_curve: Some(estimate.curve),
                kl_history: result.kl_history,
                iterations: result.iterations,
                stop: Some(result.stop),
                bridged,
                warnings,
            })
        }
    }
}
