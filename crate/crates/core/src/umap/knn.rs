use ndarray::ArrayView2;

use super::UmapError;
use crate::distance::{pairwise, Metric};

/// `k` nearest other points of every point, closest first.
#[derive(Debug, Clone, PartialEq)]
pub struct KnnGraph {
    pub k: usize,
    pub indices: Vec<Vec<usize>>,
    pub distances: Vec<Vec<f64>>,
}

impl KnnGraph {
    pub fn n_points(&self) -> usize {
        self.indices.len()
    }
}

/// Exact neighbor search over the full distance matrix. Ties go to the lower
/// index; the point itself is never its own neighbor.
pub fn knn_graph(data: ArrayView2<'_, f64>, k: usize, metric: Metric) -> Result<KnnGraph, UmapError> {
    let n = data.nrows();
    if k == 0 || k >= n {
        return Err(UmapError::Param(format!(
            "k={k} must be in 1..{n} for {n} points"
        )));
    }
    let dist = pairwise(data, metric);
    let mut indices = Vec::with_capacity(n);
    let mut distances = Vec::with_capacity(n);
    for i in 0..n {
        let row = dist.row(i);
        let mut order: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        order.sort_by(|&a, &b| row[a].total_cmp(&row[b]).then(a.cmp(&b)));
        order.truncate(k);
        distances.push(order.iter().map(|&j| row[j]).collect());
        indices.push(order);
    }
    Ok(KnnGraph {
        k,
        indices,
        distances,
    })
}

const SMOOTH_K_TOLERANCE: f64 = 1e-5;
const MIN_K_DIST_SCALE: f64 = 1e-3;
const BISECTION_STEPS: usize = 64;

/// Local connectivity calibration for one point: `rho` is the smallest
/// positive neighbor distance and `sigma` solves
/// `sum_j exp(-max(0, d_j - rho) / sigma) = log2(k)` by bisection, floored at
/// `1e-3` times the mean neighbor distance.
pub fn smooth_knn(distances: &[f64], k: usize) -> (f64, f64) {
    let rho = distances
        .iter()
        .copied()
        .find(|d| *d > 0.0)
        .unwrap_or(0.0);
    if rho == 0.0 {
        return (0.0, 1.0);
    }
    let target = (k as f64).log2();
    let (mut lo, mut hi, mut mid) = (0.0f64, f64::INFINITY, 1.0f64);
    for _ in 0..BISECTION_STEPS {
        let psum: f64 = distances
            .iter()
            .map(|d| (-(d - rho).max(0.0) / mid).exp())
            .sum();
        if (psum - target).abs() < SMOOTH_K_TOLERANCE {
            break;
        }
        if psum > target {
            hi = mid;
            mid = (lo + hi) / 2.0;
        } else {
            lo = mid;
            mid = if hi.is_infinite() {
                mid * 2.0
            } else {
                (lo + hi) / 2.0
            };
        }
    }
    let mean = distances.iter().sum::<f64>() / distances.len() as f64;
    (rho, mid.max(MIN_K_DIST_SCALE * mean))
}
