//! Small numeric helpers shared across modules.

/// Population mean and standard deviation. Empty input yields `(NaN, NaN)`.
///
/// Uses the corrected two-pass algorithm, so series sitting far from zero
/// relative to their spread keep full precision.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let rough = values.iter().sum::<f64>() / n;
    let (sum_d, sum_d2) = values.iter().fold((0.0, 0.0), |(s, s2), v| {
        let d = v - rough;
        (s + d, s2 + d * d)
    });
    let mean = rough + sum_d / n;
    let var = ((sum_d2 - sum_d * sum_d / n) / n).max(0.0);
    (mean, var.sqrt())
}

pub fn mean(values: &[f64]) -> f64 {
    mean_std(values).0
}

pub fn population_std(values: &[f64]) -> f64 {
    mean_std(values).1
}

/// Pearson correlation; `None` when either side has zero variance or lengths differ.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() || a.is_empty() {
        return None;
    }
    let (ma, _) = mean_std(a);
    let (mb, _) = mean_std(b);
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        cov += dx * dy;
        va += dx * dx;
        vb += dy * dy;
    }
    if va <= 0.0 || vb <= 0.0 || !va.is_finite() || !vb.is_finite() {
        return None;
    }
    Some((cov / (va.sqrt() * vb.sqrt())).clamp(-1.0, 1.0))
}

/// Slope and intercept of the least-squares line through `(i, values[i])`.
pub fn least_squares_line(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n < 2 {
        return (0.0, values.first().copied().unwrap_or(0.0));
    }
    let xm = (n as f64 - 1.0) / 2.0;
    let ym = mean(values);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (i, y) in values.iter().enumerate() {
        let dx = i as f64 - xm;
        sxy += dx * (y - ym);
        sxx += dx * dx;
    }
    let slope = sxy / sxx;
    (slope, ym - slope * xm)
}
