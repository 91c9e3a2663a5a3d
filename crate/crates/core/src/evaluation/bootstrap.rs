//! Percentile bootstrap over cases. Replicate `k` draws from its own
//! ChaCha stream of the configured seed, so results do not depend on how
//! replicates are scheduled across threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{BootstrapConfig, EvalError};

/// Linear-interpolation quantile of sorted data (Hyndman-Fan type 7).
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty data");
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Percentile intervals for a vector-valued statistic. `statistic`
/// receives the resampled case indices and returns one value per
/// component; the result holds one `(lo, hi)` per component.
pub fn bootstrap_ci<F>(n: usize, cfg: &BootstrapConfig, statistic: F) -> Result<Vec<(f64, f64)>, EvalError>
where
    F: Fn(&[usize]) -> Vec<f64> + Sync,
{
    if n == 0 {
        return Err(EvalError::EmptySample);
    }
    if cfg.b == 0 {
        return Err(EvalError::InvalidConfig("bootstrap.b must be at least 1".into()));
    }
    let replicates: Vec<Vec<f64>> = (0..cfg.b)
        .into_par_iter()
        .map_init(
            || Vec::with_capacity(n),
            |indices, k| {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                rng.set_stream(k as u64);
                indices.clear();
                indices.extend((0..n).map(|_| rng.random_range(0..n)));
                statistic(indices)
            },
        )
        .collect();
    let width = replicates[0].len();
    let (p_lo, p_hi) = (cfg.alpha / 2.0, 1.0 - cfg.alpha / 2.0);
    Ok((0..width)
        .map(|j| {
            let mut column: Vec<f64> = replicates.iter().map(|r| r[j]).collect();
            column.sort_by(f64::total_cmp);
            (quantile(&column, p_lo), quantile(&column, p_hi))
        })
        .collect())
}

/// Arithmetic mean, accumulated as deviations from the first value so a
/// constant sample returns that value exactly.
pub fn mean(values: &[f64]) -> f64 {
    let Some(&first) = values.first() else {
        return f64::NAN;
    };
    first + values.iter().map(|v| v - first).sum::<f64>() / values.len() as f64
}

/// Interval for the mean of `sample`.
pub fn bootstrap_mean_ci(sample: &[f64], cfg: &BootstrapConfig) -> Result<(f64, f64), EvalError> {
    let ci = bootstrap_ci(sample.len(), cfg, |idx| {
        let drawn: Vec<f64> = idx.iter().map(|&i| sample[i]).collect();
        vec![mean(&drawn)]
    })?;
    Ok(ci[0])
}
