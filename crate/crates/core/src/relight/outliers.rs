use crate::error::{Error, Result};
use crate::imagecore::LinearImage;

/// Upper-tail fraction used to bound path-traced fireflies.
pub const E_MAX_QUANTILE: f64 = 5e-4;

/// 1-based ascending rank `n - floor(quantile * n)`, clamped to `[1, n]`:
/// the value at this rank has a `quantile` fraction of the sample above it.
pub fn nearest_rank_upper(n: usize, quantile: f64) -> usize {
    let above = (quantile * n as f64).floor() as usize;
    n.saturating_sub(above).clamp(1, n)
}

/// Pools every channel sample of `sample` and returns the nearest-rank value
/// with a `quantile` fraction of samples above it. Callers clamp renders to
/// `[0, E_max]` with [`LinearImage::clamp_max`].
pub fn bound_outliers(sample: &[LinearImage], quantile: f64) -> Result<f32> {
    let mut pooled: Vec<f32> = sample.iter().flat_map(|img| img.data().iter().copied()).collect();
    if pooled.is_empty() {
        return Err(Error::invalid("outlier bound needs at least one image"));
    }
    upper_quantile(&mut pooled, quantile)
}

/// Nearest-rank value of `values` with a `quantile` fraction above it.
/// Reorders `values`.
pub fn upper_quantile(values: &mut [f32], quantile: f64) -> Result<f32> {
    if !(quantile > 0.0 && quantile < 1.0) {
        return Err(Error::invalid(format!("quantile must be in (0, 1), got {quantile}")));
    }
    if values.is_empty() {
        return Err(Error::invalid("quantile of an empty sample"));
    }
    let rank = nearest_rank_upper(values.len(), quantile);
    let (_, v, _) = values.select_nth_unstable_by(rank - 1, f32::total_cmp);
    Ok(*v)
}
