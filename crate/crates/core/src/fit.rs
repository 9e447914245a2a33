//! Least-squares helpers shared by the decay and envelope fits.

/// Ordinary least squares `y ≈ a x + b`; returns `(a, b, R²)`.
pub fn linear_fit(points: &[(f64, f64)]) -> Option<(f64, f64, f64)> {
    let n = points.len() as f64;
    if points.len() < 2 {
        return None;
    }
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy > 0.0 { (sxy * sxy) / (sxx * syy) } else { 1.0 };
    Some((slope, intercept, r2))
}

/// Running maximum from the right: `env[i] = max_{j >= i} y[j]`.
pub fn upper_envelope(values: &[f64]) -> Vec<f64> {
    let mut env = values.to_vec();
    for i in (0..env.len().saturating_sub(1)).rev() {
        env[i] = env[i].max(env[i + 1]);
    }
    env
}

/// Dominating envelope `C·shape(δ₁, δ₂)` of a measured series.
#[derive(Clone, Debug, PartialEq)]
pub struct EnvelopeFit {
    pub constant: f64,
    pub rates: (f64, f64),
    /// `measured / (C·shape)`, at most 1 wherever the shape is positive.
    pub ratio: Vec<f64>,
}

/// For every `(δ₁, δ₂)` in the grid the constant is the smallest `C` with
/// `measured ≤ C·shape`; the pair with the smallest mean log gap between the
/// envelope and the data wins.
pub fn fit_envelope<S>(measured: &[f64], rates: &[(f64, f64)], shape: S) -> Option<EnvelopeFit>
where
    S: Fn(f64, f64, usize) -> f64,
{
    let mut best: Option<(f64, EnvelopeFit)> = None;
    for &(d1, d2) in rates {
        let shaped: Vec<f64> = (0..measured.len()).map(|i| shape(d1, d2, i)).collect();
        let pairs: Vec<(f64, f64)> = measured
            .iter()
            .zip(&shaped)
            .filter(|(m, s)| **s > 0.0 && **m > 0.0 && m.is_finite() && s.is_finite())
            .map(|(&m, &s)| (m, s))
            .collect();
        if pairs.is_empty() {
            continue;
        }
        let constant = pairs.iter().map(|(m, s)| m / s).fold(0.0, f64::max);
        let gap = pairs.iter().map(|(m, s)| (constant * s / m).ln()).sum::<f64>() / pairs.len() as f64;
        if best.as_ref().is_none_or(|(g, _)| gap < *g) {
            let ratio = measured
                .iter()
                .zip(&shaped)
                .map(|(m, s)| if *s > 0.0 { m / (constant * s) } else { 0.0 })
                .collect();
            best = Some((
                gap,
                EnvelopeFit {
                    constant,
                    rates: (d1, d2),
                    ratio,
                },
            ));
        }
    }
    best.map(|(_, fit)| fit)
}

/// Geometric grid of `count` rates between `lo` and `hi`.
pub fn rate_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count < 2 {
        return vec![lo];
    }
    (0..count)
        .map(|i| lo * (hi / lo).powf(i as f64 / (count - 1) as f64))
        .collect()
}
