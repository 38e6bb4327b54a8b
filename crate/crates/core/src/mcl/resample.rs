/// Effective sample size `1 / sum(w^2)` of normalized weights.
pub fn effective_sample_size(weights: &[f64]) -> f64 {
    1.0 / weights.iter().map(|w| w * w).sum::<f64>()
}

/// Systematic (low-variance) resampling.
///
/// `u0` must lie in `[0, 1)`; the `N` pointers are `(u0 + j) / N`. Returns, for each
/// output slot, the index of the selected input particle.
pub fn systematic_resample(weights: &[f64], u0: f64) -> Vec<usize> {
    let n = weights.len();
    debug_assert!((0.0..1.0).contains(&u0));
    let step = 1.0 / n as f64;
    let mut out = Vec::with_capacity(n);
    let mut cumulative = weights[0];
    let mut i = 0;
    for j in 0..n {
        let target = (u0 + j as f64) * step;
        while target > cumulative && i + 1 < n {
            i += 1;
            cumulative += weights[i];
        }
        out.push(i);
    }
    out
}
