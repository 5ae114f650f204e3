//! Capacity preserving mapping (CPM).
//!
//! High-dimensional point clouds crowd toward the center when projected to
//! two or three dimensions, because the number of neighbours within radius
//! `r` grows like `r^n` in `n` dimensions but only like `r^d` in the target.
//! CPM estimates the intrinsic dimension `n(r)` at every scale, rescales each
//! pairwise distance `s` to `s^(n(s)/d)` (made monotone by a running
//! maximum), and then fits a low-dimensional embedding by minimizing the KL
//! divergence between heavy-tailed affinities of the rescaled distances and
//! of the embedded points.
//!
//! The pipeline:
//!
//! ```no_run
//! use cpm_core::{pipeline, RunConfig, Rng, dataset};
//!
//! let data = dataset::generate_gaussian_cloud(500, 5, &mut Rng::new(7)).unwrap();
//! let out = pipeline::run(&data, &RunConfig::default()).unwrap();
//! println!("{} points, final KL {:?}", out.embedding.len(), out.kl_history.last());
//! ```

pub mod baseline;
pub mod cad;
pub mod config;
pub mod dataset;
pub mod dimest;
pub mod embed;
pub mod error;
pub mod eval;
pub mod metricspace;
pub mod pipeline;
pub mod rng;

pub use cad::TargetDim;
pub use config::{Method, Metric, RunConfig};
pub use dataset::Dataset;
pub use dimest::DimensionCurve;
pub use embed::Embedding;
pub use error::{CpmError, Result};
pub use metricspace::{DistanceMatrix, MetricKind};
pub use rng::Rng;
