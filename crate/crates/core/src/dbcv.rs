//! Density-based clustering validation.
//!
//! Scores a labeling without ground truth by comparing, per cluster, the
//! sparsest link inside it (the heaviest internal edge of its mutual
//! reachability MST) against the densest link to any other cluster.

use std::collections::BTreeMap;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distance::{pairwise, Metric};
use crate::hdbscan::{build_mst, NOISE};

/// Cap on `1 / d` so coincident points keep the core distance finite.
const MAX_INV_DIST: f64 = 1e12;

#[derive(Debug, Error, PartialEq)]
pub enum DbcvError {
    #[error("cluster {0} has a single point; its core distance is undefined")]
    Singleton(i32),
    #[error("not scorable: {0}")]
    NotScorable(String),
    #[error("{labels} labels for {points} points")]
    Shape { labels: usize, points: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DbcvReport {
    pub per_cluster_validity: BTreeMap<i32, f64>,
    pub score: f64,
    pub n_points: usize,
    pub n_noise: usize,
}

/// All-points core distance of a point given its distances to every other
/// member of its cluster:
/// `(sum (1/d)^dim / (m - 1))^(-1/dim)`, evaluated in log space so large
/// `dim` does not overflow.
pub fn apts_core_distance(dists_to_mates: &[f64], dim: usize) -> Result<f64, DbcvError> {
    if dists_to_mates.is_empty() {
        return Err(DbcvError::Singleton(NOISE));
    }
    if dim == 0 {
        return Err(DbcvError::NotScorable("dimension must be positive".into()));
    }
    let dim_f = dim as f64;
    let terms: Vec<f64> = dists_to_mates
        .iter()
        .map(|&d| {
            let log_inv = if d > 0.0 {
                (-d.ln()).min(MAX_INV_DIST.ln())
            } else {
                MAX_INV_DIST.ln()
            };
            dim_f * log_inv
        })
        .collect();
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln();
    let log_mean = lse - (dists_to_mates.len() as f64).ln();
    Ok((-log_mean / dim_f).exp())
}

/// Per-cluster geometry shared by sparseness and separation.
struct ClusterShape {
    members: Vec<usize>,
    core: Vec<f64>,
    internal: Vec<usize>,
    sparseness: f64,
}

impl ClusterShape {
    fn build(label: i32, members: Vec<usize>, dist: &Array2<f64>, dim: usize) -> Result<Self, DbcvError> {
        let m = members.len();
        if m < 2 {
            return Err(DbcvError::Singleton(label));
        }
        let core = members
            .iter()
            .map(|&p| {
                let mates: Vec<f64> = members
                    .iter()
                    .filter(|&&o| o != p)
                    .map(|&o| dist[[p, o]])
                    .collect();
                apts_core_distance(&mates, dim)
            })
            .collect::<Result<Vec<_>, _>>()?;
        let mreach = Array2::from_shape_fn((m, m), |(i, j)| {
            if i == j {
                0.0
            } else {
                dist[[members[i], members[j]]].max(core[i]).max(core[j])
            }
        });
        let mst = build_mst(&mreach);
        let mut degree = vec![0usize; m];
        for e in &mst {
            degree[e.a] += 1;
            degree[e.b] += 1;
        }
        let internal_edges: Vec<f64> = mst
            .iter()
            .filter(|e| degree[e.a] > 1 && degree[e.b] > 1)
            .map(|e| e.weight)
            .collect();
        let sparseness = if internal_edges.is_empty() {
            mst.iter().map(|e| e.weight).fold(0.0, f64::max)
        } else {
            internal_edges.into_iter().fold(0.0, f64::max)
        };
        let mut internal: Vec<usize> = (0..m).filter(|&i| degree[i] > 1).collect();
        if internal.is_empty() {
            internal = (0..m).collect();
        }
        Ok(ClusterShape {
            members,
            core,
            internal,
            sparseness,
        })
    }

    fn separation(&self, other: &ClusterShape, dist: &Array2<f64>) -> f64 {
        let mut best = f64::INFINITY;
        for &i in &self.internal {
            for &j in &other.internal {
                let d = dist[[self.members[i], other.members[j]]]
                    .max(self.core[i])
                    .max(other.core[j]);
                best = best.min(d);
            }
        }
        best
    }
}

/// Density sparseness of one cluster given as rows of points.
pub fn density_sparseness(cluster: ArrayView2<'_, f64>, metric: Metric) -> Result<f64, DbcvError> {
    let dist = pairwise(cluster, metric);
    let shape = ClusterShape::build(0, (0..cluster.nrows()).collect(), &dist, cluster.ncols())?;
    Ok(shape.sparseness)
}

/// Density separation between two clusters given as rows of points.
pub fn density_separation(
    a: ArrayView2<'_, f64>,
    b: ArrayView2<'_, f64>,
    metric: Metric,
) -> Result<f64, DbcvError> {
    let joined = ndarray::concatenate(ndarray::Axis(0), &[a, b])
        .map_err(|_| DbcvError::NotScorable("clusters differ in dimension".into()))?;
    let dist = pairwise(joined.view(), metric);
    let dim = a.ncols();
    let sa = ClusterShape::build(0, (0..a.nrows()).collect(), &dist, dim)?;
    let sb = ClusterShape::build(1, (a.nrows()..joined.nrows()).collect(), &dist, dim)?;
    Ok(sa.separation(&sb, &dist))
}

/// Scores `labels` over the rows of `data`, using the column count as the
/// dimension. Noise points count toward the weighting denominator only.
pub fn dbcv_score(data: ArrayView2<'_, f64>, labels: &[i32], metric: Metric) -> Result<DbcvReport, DbcvError> {
    let n = data.nrows();
    if labels.len() != n {
        return Err(DbcvError::Shape {
            labels: labels.len(),
            points: n,
        });
    }
    let mut groups: BTreeMap<i32, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        if l != NOISE {
            groups.entry(l).or_default().push(i);
        }
    }
    if groups.len() < 2 {
        return Err(DbcvError::NotScorable(format!(
            "need at least 2 clusters, found {}",
            groups.len()
        )));
    }
    let dist = pairwise(data, metric);
    let dim = data.ncols();
    let shapes = groups
        .into_iter()
        .map(|(label, members)| Ok((label, ClusterShape::build(label, members, &dist, dim)?)))
        .collect::<Result<Vec<_>, DbcvError>>()?;

    let mut per_cluster_validity = BTreeMap::new();
    let mut score = 0.0;
    for (i, (label, shape)) in shapes.iter().enumerate() {
        let sep = shapes
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, (_, other))| shape.separation(other, &dist))
            .fold(f64::INFINITY, f64::min);
        let denom = sep.max(shape.sparseness);
        let v = if denom > 0.0 {
            (sep - shape.sparseness) / denom
        } else {
            0.0
        };
        per_cluster_validity.insert(*label, v);
        score += shape.members.len() as f64 / n as f64 * v;
    }
    let n_noise = labels.iter().filter(|&&l| l == NOISE).count();
    Ok(DbcvReport {
        per_cluster_validity,
        score,
        n_points: n,
        n_noise,
    })
}
