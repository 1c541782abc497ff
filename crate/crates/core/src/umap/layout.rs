use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{fit_ab, FuzzyGraph, Projection, UmapError, UmapParams};

const INIT_RANGE: f64 = 10.0;
const GRAD_CLIP: f64 = 4.0;

fn clip(v: f64) -> f64 {
    v.clamp(-GRAD_CLIP, GRAD_CLIP)
}

/// Stochastic-gradient layout of `graph`.
///
/// Coordinates start uniform in `[-10, 10]` from the seed. Every directed
/// edge is sampled once per `max_w / w` epochs (edges lighter than
/// `max_w / n_epochs` are never sampled), pulling both endpoints together,
/// and each sample is followed by `negative_sample_rate` repulsive pushes
/// against uniformly drawn points. The learning rate decays linearly to zero
/// and every gradient coordinate is clipped to `[-4, 4]`.
pub fn optimize_layout(graph: &FuzzyGraph, params: &UmapParams) -> Result<Projection, UmapError> {
    let n = graph.n_points();
    let dim = params.n_components;
    if n == 0 {
        return Err(UmapError::Param("graph has no points".into()));
    }
    if dim == 0 {
        return Err(UmapError::Param("n_components must be positive".into()));
    }
    let curve = fit_ab(params.min_dist, params.spread)?;
    let (a, b) = (curve.a, curve.b);

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut coords: Vec<f64> = (0..n * dim)
        .map(|_| rng.random_range(-INIT_RANGE..INIT_RANGE))
        .collect();

    let n_epochs = params.n_epochs;
    if n_epochs > 0 && !graph.is_empty() {
        let max_w = graph
            .edges()
            .iter()
            .map(|e| e.2)
            .fold(0.0f64, f64::max);
        let cutoff = max_w / n_epochs as f64;
        let mut heads = Vec::new();
        let mut tails = Vec::new();
        let mut epochs_per_sample = Vec::new();
        for &(i, j, w) in graph.edges() {
            if w < cutoff {
                continue;
            }
            for (h, t) in [(i, j), (j, i)] {
                heads.push(h);
                tails.push(t);
                epochs_per_sample.push(max_w / w);
            }
        }
        let neg_rate = params.negative_sample_rate as f64;
        let epochs_per_negative: Vec<f64> = epochs_per_sample.iter().map(|e| e / neg_rate).collect();
        let mut next_sample = epochs_per_sample.clone();
        let mut next_negative = epochs_per_negative.clone();

        let mut current = vec![0.0; dim];
        let mut other = vec![0.0; dim];
        for epoch in 0..n_epochs {
            let epoch_f = epoch as f64;
            let alpha = params.initial_lr * (1.0 - epoch_f / n_epochs as f64);
            for e in 0..heads.len() {
                if next_sample[e] > epoch_f {
                    continue;
                }
                let (j, k) = (heads[e], tails[e]);
                current.copy_from_slice(&coords[j * dim..(j + 1) * dim]);
                other.copy_from_slice(&coords[k * dim..(k + 1) * dim]);

                let dist_sq: f64 = current
                    .iter()
                    .zip(&other)
                    .map(|(c, o)| (c - o) * (c - o))
                    .sum();
                let coeff = if dist_sq > 0.0 {
                    -2.0 * a * b * dist_sq.powf(b - 1.0) / (a * dist_sq.powf(b) + 1.0)
                } else {
                    0.0
                };
                for d in 0..dim {
                    let grad = clip(coeff * (current[d] - other[d])) * alpha;
                    current[d] += grad;
                    other[d] -= grad;
                }
                coords[k * dim..(k + 1) * dim].copy_from_slice(&other);
                next_sample[e] += epochs_per_sample[e];

                let n_neg = ((epoch_f - next_negative[e]) / epochs_per_negative[e]).floor();
                let n_neg = if n_neg > 0.0 { n_neg as usize } else { 0 };
                for _ in 0..n_neg {
                    let s = rng.random_range(0..n);
                    if s == j {
                        continue;
                    }
                    let target = &coords[s * dim..(s + 1) * dim];
                    let dist_sq: f64 = current
                        .iter()
                        .zip(target)
                        .map(|(c, o)| (c - o) * (c - o))
                        .sum();
                    if dist_sq > 0.0 {
                        let coeff =
                            2.0 * b / ((0.001 + dist_sq) * (a * dist_sq.powf(b) + 1.0));
                        for d in 0..dim {
                            current[d] += clip(coeff * (current[d] - target[d])) * alpha;
                        }
                    } else {
                        for c in current.iter_mut() {
                            *c += GRAD_CLIP * alpha;
                        }
                    }
                }
                coords[j * dim..(j + 1) * dim].copy_from_slice(&current);
                next_negative[e] += n_neg as f64 * epochs_per_negative[e];
            }
        }
    }

    let coords = Array2::from_shape_vec((n, dim), coords).expect("shape matches buffer");
    Ok(Projection {
        coords,
        params: params.clone(),
    })
}
