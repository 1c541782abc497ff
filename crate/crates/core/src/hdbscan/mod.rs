//! Hierarchical density-based clustering.
//!
//! Core distances turn raw distances into mutual reachability, a dense Prim
//! pass builds the minimum spanning tree, the tree is condensed against
//! `min_cluster_size`, and clusters are extracted by excess of mass or as the
//! condensed tree's leaves. Points outside every selected cluster get `-1`.

mod condense;
mod core_dist;
mod mst;
mod select;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distance::{pairwise, Metric};

pub use condense::{condense_tree, ClusterNode, CondensedChild, CondensedRow, CondensedTree};
pub use core_dist::{core_distances, mutual_reachability, mutual_reachability_matrix};
pub use mst::{build_mst, MstEdge};
pub use select::select_clusters;

pub const NOISE: i32 = -1;

/// Lambda assigned to zero-distance merges.
pub const LAMBDA_CAP: f64 = 1e12;

#[derive(Debug, Error, PartialEq)]
pub enum HdbscanError {
    #[error("invalid parameter: {0}")]
    Param(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionMethod {
    #[default]
    Eom,
    Leaf,
}

impl fmt::Display for SelectionMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SelectionMethod::Eom => "eom",
            SelectionMethod::Leaf => "leaf",
        })
    }
}

impl FromStr for SelectionMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_lowercase().as_str() {
            "eom" => Ok(SelectionMethod::Eom),
            "leaf" => Ok(SelectionMethod::Leaf),
            other => Err(format!("unknown cluster selection method {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct HdbscanParams {
    pub min_cluster_size: usize,
    pub min_samples: usize,
    pub cluster_selection_method: SelectionMethod,
}

impl Default for HdbscanParams {
    fn default() -> Self {
        HdbscanParams {
            min_cluster_size: 10,
            min_samples: 5,
            cluster_selection_method: SelectionMethod::Eom,
        }
    }
}

impl HdbscanParams {
    pub fn validate(&self) -> Result<(), HdbscanError> {
        if self.min_cluster_size < 2 {
            return Err(HdbscanError::Param(format!(
                "min_cluster_size must be at least 2, got {}",
                self.min_cluster_size
            )));
        }
        if self.min_samples < 1 {
            return Err(HdbscanError::Param("min_samples must be at least 1".into()));
        }
        Ok(())
    }
}

/// Per-point cluster assignment. Labels run contiguously from 0; `-1` is
/// noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Labeling {
    pub labels: Vec<i32>,
    pub probabilities: Vec<f64>,
}

impl Labeling {
    pub fn all_noise(n: usize) -> Self {
        Labeling {
            labels: vec![NOISE; n],
            probabilities: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Number of non-noise clusters.
    pub fn n_clusters(&self) -> usize {
        self.labels
            .iter()
            .filter(|&&l| l >= 0)
            .max()
            .map_or(0, |&m| m as usize + 1)
    }

    pub fn n_noise(&self) -> usize {
        self.labels.iter().filter(|&&l| l == NOISE).count()
    }

    /// Member count per label, noise included under `-1`.
    pub fn cluster_sizes(&self) -> BTreeMap<i32, usize> {
        let mut sizes = BTreeMap::new();
        for &l in &self.labels {
            *sizes.entry(l).or_insert(0) += 1;
        }
        sizes
    }
}

/// Clusters the rows of `data`.
pub fn hdbscan_cluster(
    data: ArrayView2<'_, f64>,
    params: &HdbscanParams,
    metric: Metric,
) -> Result<Labeling, HdbscanError> {
    Ok(hdbscan_tree(data, params, metric)?
        .map(|tree| select_clusters(&tree, params.cluster_selection_method))
        .unwrap_or_else(|| Labeling::all_noise(data.nrows())))
}

/// Builds the condensed tree, or `None` when there are fewer points than
/// `min_cluster_size` and nothing can ever be a cluster.
pub fn hdbscan_tree(
    data: ArrayView2<'_, f64>,
    params: &HdbscanParams,
    metric: Metric,
) -> Result<Option<CondensedTree>, HdbscanError> {
    params.validate()?;
    let n = data.nrows();
    if n < params.min_cluster_size {
        return Ok(None);
    }
    let dist = pairwise(data, metric);
    let core = core_distances(&dist, params.min_samples)?;
    let mreach = mutual_reachability_matrix(&dist, &core);
    let mst = build_mst(&mreach);
    Ok(Some(condense_tree(n, &mst, params.min_cluster_size)))
}
