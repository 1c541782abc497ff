//! Point-to-point distances shared by the reduction, clustering and
//! validation stages.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    #[default]
    Cosine,
    Euclidean,
}

impl Metric {
    /// Distance between two equal-length vectors. Cosine distance against a
    /// zero vector is 1 (0 when both are zero) so that degenerate rows never
    /// produce NaN inside a neighbor search.
    pub fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        debug_assert_eq!(a.len(), b.len());
        match self {
            Metric::Euclidean => a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt(),
            Metric::Cosine => {
                let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
                for (x, y) in a.iter().zip(b) {
                    dot += x * y;
                    na += x * x;
                    nb += y * y;
                }
                if na == 0.0 && nb == 0.0 {
                    0.0
                } else if na == 0.0 || nb == 0.0 {
                    1.0
                } else {
                    (1.0 - dot / (na.sqrt() * nb.sqrt())).max(0.0)
                }
            }
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Cosine => "cosine",
            Metric::Euclidean => "euclidean",
        })
    }
}

impl FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_lowercase().as_str() {
            "cosine" => Ok(Metric::Cosine),
            "euclidean" => Ok(Metric::Euclidean),
            other => Err(format!("unknown metric {other:?}")),
        }
    }
}

/// Dense symmetric matrix of pairwise distances between the rows of `points`.
pub fn pairwise(points: ArrayView2<'_, f64>, metric: Metric) -> Array2<f64> {
    let n = points.nrows();
    let rows: Vec<&[f64]> = (0..n)
        .map(|i| {
            points
                .row(i)
                .to_slice()
                .expect("pairwise distances need standard-layout rows")
        })
        .collect();
    let mut out = Array2::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            let d = metric.distance(rows[i], rows[j]);
            out[[i, j]] = d;
            out[[j, i]] = d;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn euclidean_and_cosine_basics() {
        assert_eq!(Metric::Euclidean.distance(&[0.0, 0.0], &[3.0, 4.0]), 5.0);
        assert!(Metric::Cosine.distance(&[1.0, 0.0], &[2.0, 0.0]).abs() < 1e-15);
        assert!((Metric::Cosine.distance(&[1.0, 0.0], &[0.0, 1.0]) - 1.0).abs() < 1e-15);
        assert_eq!(Metric::Cosine.distance(&[0.0, 0.0], &[0.0, 1.0]), 1.0);
    }

    #[test]
    fn pairwise_is_symmetric_with_zero_diagonal() {
        let pts = array![[0.0, 0.0], [1.0, 0.0], [0.0, 2.0]];
        let d = pairwise(pts.view(), Metric::Euclidean);
        assert_eq!(d[[0, 1]], 1.0);
        assert_eq!(d[[2, 0]], 2.0);
        assert_eq!(d[[1, 1]], 0.0);
        assert_eq!(d, d.t());
    }
}
