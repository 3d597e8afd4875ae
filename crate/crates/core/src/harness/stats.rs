use rand::Rng as _;

use crate::rng::rng_from_seed;

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (divides by `n - 1`).
pub fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return f64::NAN;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// Median of the finite entries; NaN when there are none.
pub fn median(xs: &[f64]) -> f64 {
    let mut v: Vec<f64> = xs.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Empirical quantile with linear interpolation between order statistics.
pub fn quantile(xs: &[f64], p: f64) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    if v.is_empty() {
        return f64::NAN;
    }
    let pos = p.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
}

/// Percentile bootstrap of `sd(a) / sd(b)` with `a` and `b` resampled
/// independently. Returns the `level` quantile of the replicate ratios.
pub fn bootstrap_sd_ratio_upper(a: &[f64], b: &[f64], reps: usize, level: f64, seed: u64) -> f64 {
    let mut rng = rng_from_seed(seed);
    let mut buf_a = vec![0.0; a.len()];
    let mut buf_b = vec![0.0; b.len()];
    let ratios: Vec<f64> = (0..reps)
        .map(|_| {
            for x in buf_a.iter_mut() {
                *x = a[rng.random_range(0..a.len())];
            }
            for x in buf_b.iter_mut() {
                *x = b[rng.random_range(0..b.len())];
            }
            std_dev(&buf_a) / std_dev(&buf_b)
        })
        .collect();
    quantile(&ratios, level)
}
