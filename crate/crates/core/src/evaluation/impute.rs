//! Gap filling used by the imputing baselines.

/// Replaces every missing value with `mean`.
pub fn mean_fill(values: &[Option<f64>], mean: f64) -> Vec<f64> {
    values.iter().map(|v| v.unwrap_or(mean)).collect()
}

/// Ramps each interior gap from its left neighbour to `mean` at the gap
/// centre and from `mean` to its right neighbour. With gap width `w` and
/// 1-based offset `k`, the centre is `c = (w + 1) / 2`. Gaps touching
/// either end of the slice are mean-filled.
pub fn linear_to_mean_fill(values: &[Option<f64>], mean: f64) -> Vec<f64> {
    let mut out = mean_fill(values, mean);
    let n = values.len();
    let mut t = 0;
    while t < n {
        if values[t].is_some() {
            t += 1;
            continue;
        }
        let start = t;
        while t < n && values[t].is_none() {
            t += 1;
        }
        let (Some(left), Some(right)) = (
            start.checked_sub(1).and_then(|i| values[i]),
            values.get(t).copied().flatten(),
        ) else {
            continue;
        };
        let w = (t - start) as f64;
        let c = (w + 1.0) / 2.0;
        for (k, slot) in (1..).zip(&mut out[start..t]) {
            let k = f64::from(k);
            *slot = if k <= c {
                left + (mean - left) * k / c
            } else {
                mean + (right - mean) * (k - c) / (w + 1.0 - c)
            };
        }
    }
    out
}
