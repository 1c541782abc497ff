use ndarray::Array2;

use super::HdbscanError;

/// Distance from each point to its `k`-th nearest other point.
pub fn core_distances(dist: &Array2<f64>, k: usize) -> Result<Vec<f64>, HdbscanError> {
    let n = dist.nrows();
    if k == 0 || k >= n {
        return Err(HdbscanError::Param(format!(
            "min_samples={k} must be in 1..{n} for {n} points"
        )));
    }
    Ok((0..n)
        .map(|i| {
            let mut others: Vec<f64> = (0..n).filter(|&j| j != i).map(|j| dist[[i, j]]).collect();
            let (_, kth, _) = others.select_nth_unstable_by(k - 1, f64::total_cmp);
            *kth
        })
        .collect())
}

pub fn mutual_reachability(d: f64, core_a: f64, core_b: f64) -> f64 {
    d.max(core_a).max(core_b)
}

pub fn mutual_reachability_matrix(dist: &Array2<f64>, core: &[f64]) -> Array2<f64> {
    let n = dist.nrows();
    Array2::from_shape_fn((n, n), |(i, j)| {
        if i == j {
            0.0
        } else {
            mutual_reachability(dist[[i, j]], core[i], core[j])
        }
    })
}
