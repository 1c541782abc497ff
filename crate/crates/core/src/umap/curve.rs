use super::UmapError;

const SAMPLES: usize = 300;
const MAX_ITER: usize = 500;
/// A fit worse than this is treated as diverged.
const MAX_RMS: f64 = 0.05;
/// Fits worse than this are usable but reported.
const WARN_RMS: f64 = 0.02;

/// Parameters of the low-dimensional similarity `1 / (1 + a * x^(2b))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveFit {
    pub a: f64,
    pub b: f64,
    /// Root-mean-square residual against the target curve.
    pub rms: f64,
}

fn target(x: f64, min_dist: f64, spread: f64) -> f64 {
    if x <= min_dist {
        1.0
    } else {
        (-(x - min_dist) / spread).exp()
    }
}

fn residuals(xs: &[f64], ys: &[f64], a: f64, b: f64) -> f64 {
    xs.iter()
        .zip(ys)
        .map(|(&x, &y)| {
            let r = 1.0 / (1.0 + a * x.powf(2.0 * b)) - y;
            r * r
        })
        .sum()
}

/// Least-squares fit of `(a, b)` so the kernel tracks `1` up to `min_dist`
/// and `exp(-(x - min_dist) / spread)` beyond it, sampled at 300 points on
/// `[0, 3 * spread]`. Solved with Levenberg-Marquardt from `(1, 1)`.
pub fn fit_ab(min_dist: f64, spread: f64) -> Result<CurveFit, UmapError> {
    if !(spread > 0.0 && min_dist >= 0.0 && min_dist < spread) {
        return Err(UmapError::Param(format!(
            "need 0 <= min_dist < spread, got min_dist={min_dist} spread={spread}"
        )));
    }
    let xs: Vec<f64> = (0..SAMPLES)
        .map(|i| 3.0 * spread * i as f64 / (SAMPLES - 1) as f64)
        .collect();
    let ys: Vec<f64> = xs.iter().map(|&x| target(x, min_dist, spread)).collect();

    let (mut a, mut b) = (1.0f64, 1.0f64);
    let mut cost = residuals(&xs, &ys, a, b);
    let mut lambda = 1e-3;
    for _ in 0..MAX_ITER {
        // Normal equations J^T J and J^T r for the two parameters.
        let (mut jaa, mut jab, mut jbb, mut ga, mut gb) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (&x, &y) in xs.iter().zip(&ys) {
            if x == 0.0 {
                // Kernel is 1 at the origin for every (a, b): zero gradient.
                continue;
            }
            let p = x.powf(2.0 * b);
            let denom = 1.0 + a * p;
            let r = 1.0 / denom - y;
            let da = -p / (denom * denom);
            let db = -a * p * 2.0 * x.ln() / (denom * denom);
            jaa += da * da;
            jab += da * db;
            jbb += db * db;
            ga += da * r;
            gb += db * r;
        }
        let mut improved = false;
        while lambda < 1e12 {
            let (maa, mbb) = (jaa * (1.0 + lambda), jbb * (1.0 + lambda));
            let det = maa * mbb - jab * jab;
            if det.abs() < f64::MIN_POSITIVE {
                lambda *= 10.0;
                continue;
            }
            let step_a = -(mbb * ga - jab * gb) / det;
            let step_b = -(maa * gb - jab * ga) / det;
            let (na, nb) = (a + step_a, b + step_b);
            if na > 0.0 && nb > 0.0 {
                let new_cost = residuals(&xs, &ys, na, nb);
                if new_cost < cost {
                    let rel = (cost - new_cost) / cost.max(f64::MIN_POSITIVE);
                    a = na;
                    b = nb;
                    cost = new_cost;
                    lambda = (lambda / 10.0).max(1e-12);
                    improved = rel > 1e-15;
                    break;
                }
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }

    let rms = (cost / SAMPLES as f64).sqrt();
    if !rms.is_finite() || rms > MAX_RMS {
        return Err(UmapError::Fit(format!(
            "min_dist={min_dist} spread={spread}: residual RMS {rms:.4}"
        )));
    }
    if rms > WARN_RMS {
        tracing::debug!(min_dist, spread, rms, "kernel curve fit is loose");
    }
    Ok(CurveFit { a, b, rms })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Coarse-to-fine grid search on the same objective; shares nothing with
    /// the Levenberg-Marquardt path except the target definition.
    fn grid_oracle(min_dist: f64, spread: f64) -> (f64, f64) {
        let xs: Vec<f64> = (0..SAMPLES)
            .map(|i| 3.0 * spread * i as f64 / (SAMPLES - 1) as f64)
            .collect();
        let ys: Vec<f64> = xs.iter().map(|&x| target(x, min_dist, spread)).collect();
        let sse = |a: f64, b: f64| -> f64 {
            xs.iter()
                .zip(&ys)
                .map(|(x, y)| (1.0 / (1.0 + a * x.powf(2.0 * b)) - y).powi(2))
                .sum()
        };
        let (mut ca, mut cb, mut half) = (2.0, 1.0, 1.9);
        for _ in 0..40 {
            let mut best = (f64::INFINITY, ca, cb);
            for i in 0..=20 {
                for j in 0..=20 {
                    let a = ca - half + 2.0 * half * i as f64 / 20.0;
                    let b = cb - half + 2.0 * half * j as f64 / 20.0;
                    if a <= 0.0 || b <= 0.0 {
                        continue;
                    }
                    let s = sse(a, b);
                    if s < best.0 {
                        best = (s, a, b);
                    }
                }
            }
            ca = best.1;
            cb = best.2;
            half *= 0.6;
        }
        (ca, cb)
    }

    #[test]
    fn zero_min_dist_matches_reference_values() {
        let fit = fit_ab(0.0, 1.0).unwrap();
        // Frozen from an independent least-squares solver on the same samples.
        assert!((fit.a - 1.932_808_397).abs() < 1e-5, "a = {}", fit.a);
        assert!((fit.b - 0.790_494_973).abs() < 1e-5, "b = {}", fit.b);
        let (oa, ob) = grid_oracle(0.0, 1.0);
        assert!((fit.a - oa).abs() < 1e-3 && (fit.b - ob).abs() < 1e-3);
        assert!(fit.rms < 0.025);
    }

    #[test]
    fn table_two_min_dist_fits_within_tolerance() {
        let fit = fit_ab(0.09, 1.0).unwrap();
        assert!((fit.a - 1.610_800_661).abs() < 1e-5, "a = {}", fit.a);
        assert!((fit.b - 0.884_384_957).abs() < 1e-5, "b = {}", fit.b);
        let (oa, ob) = grid_oracle(0.09, 1.0);
        assert!((fit.a - oa).abs() < 1e-3 && (fit.b - ob).abs() < 1e-3);
        assert!(fit.rms < 0.02);
    }

    #[test]
    fn min_dist_at_or_beyond_spread_is_rejected() {
        assert!(matches!(fit_ab(1.0, 1.0), Err(UmapError::Param(_))));
        assert!(matches!(fit_ab(-0.1, 1.0), Err(UmapError::Param(_))));
    }

    #[test]
    fn min_dist_near_spread_gives_a_flagged_fit() {
        let fit = fit_ab(0.99, 1.0).unwrap();
        assert!(fit.rms > WARN_RMS);
        assert!(fit.b > 1.5);
    }
}
