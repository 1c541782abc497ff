//! Uniform Manifold Approximation and Projection.
//!
//! The reduction runs in five steps: exact k-nearest-neighbor search,
//! per-point smooth-kNN calibration (`rho`, `sigma`), the fuzzy simplicial
//! set (a symmetric membership graph), fitting of the low-dimensional kernel
//! `1 / (1 + a * d^(2b))`, and a seeded stochastic-gradient layout.
//! Everything is single-threaded and driven by one ChaCha stream, so a fixed
//! `(input, params, seed)` reproduces the projection bit for bit.

mod curve;
mod fuzzy;
mod knn;
mod layout;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distance::Metric;

pub use curve::{fit_ab, CurveFit};
pub use fuzzy::{fuzzy_simplicial_set, FuzzyGraph};
pub use knn::{knn_graph, smooth_knn, KnnGraph};
pub use layout::optimize_layout;

#[derive(Debug, Error, PartialEq)]
pub enum UmapError {
    #[error("invalid parameter: {0}")]
    Param(String),
    #[error("kernel curve fit failed: {0}")]
    Fit(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UmapParams {
    pub n_neighbors: usize,
    pub n_components: usize,
    pub min_dist: f64,
    pub metric: Metric,
    pub spread: f64,
    pub n_epochs: usize,
    pub negative_sample_rate: usize,
    pub initial_lr: f64,
    pub seed: u64,
}

impl Default for UmapParams {
    fn default() -> Self {
        UmapParams {
            n_neighbors: 15,
            n_components: 2,
            min_dist: 0.1,
            metric: Metric::Cosine,
            spread: 1.0,
            n_epochs: 500,
            negative_sample_rate: 5,
            initial_lr: 1.0,
            seed: 42,
        }
    }
}

impl UmapParams {
    pub fn validate(&self, n_points: usize) -> Result<(), UmapError> {
        if self.n_neighbors < 2 {
            return Err(UmapError::Param(format!(
                "n_neighbors must be at least 2, got {}",
                self.n_neighbors
            )));
        }
        if self.n_neighbors >= n_points {
            return Err(UmapError::Param(format!(
                "n_neighbors={} needs more than {} points",
                self.n_neighbors, n_points
            )));
        }
        if self.n_components == 0 {
            return Err(UmapError::Param("n_components must be positive".into()));
        }
        if !(self.min_dist >= 0.0 && self.min_dist < self.spread) {
            return Err(UmapError::Param(format!(
                "need 0 <= min_dist < spread, got min_dist={} spread={}",
                self.min_dist, self.spread
            )));
        }
        if self.negative_sample_rate == 0 {
            return Err(UmapError::Param("negative_sample_rate must be positive".into()));
        }
        Ok(())
    }
}

/// Low-dimensional coordinates plus the parameters that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub coords: Array2<f64>,
    pub params: UmapParams,
}

impl Projection {
    pub fn n_points(&self) -> usize {
        self.coords.nrows()
    }

    pub fn seed(&self) -> u64 {
        self.params.seed
    }
}

/// Full reduction of the rows of `data` to `params.n_components` dimensions.
pub fn umap_reduce(data: ArrayView2<'_, f64>, params: &UmapParams) -> Result<Projection, UmapError> {
    params.validate(data.nrows())?;
    let knn = knn_graph(data, params.n_neighbors, params.metric)?;
    let graph = fuzzy_simplicial_set(&knn);
    optimize_layout(&graph, params)
}
