//! Compensated Riemann sums against an enhanced Brownian drive, Hölder
//! seminorms and Gubinelli remainders.

use crate::error::{Error, Result};
use crate::noise::{ControlledPath, RoughDrive};

/// Largest number of mesh points for which all pairs are visited.
pub const EXACT_PAIR_LIMIT: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HolderReport {
    pub exponent: f64,
    pub interval: (f64, f64),
    pub value: f64,
    /// Stride between the mesh points that entered the sup; 1 means every
    /// pair was visited.
    pub stride: usize,
}

/// `sup_{s≠t} |f(t) − f(s)| / |t − s|^α` over mesh pairs of a path sampled
/// with spacing `step` starting at 0. Paths longer than
/// [`EXACT_PAIR_LIMIT`] are subsampled with a uniform stride (endpoints
/// kept), which gives a lower bound of the full-mesh value.
pub fn holder_seminorm(values: &[f64], step: f64, alpha: f64) -> HolderReport {
    let n = values.len();
    let stride = n.div_ceil(EXACT_PAIR_LIMIT).max(1);
    let mut idx: Vec<usize> = (0..n).step_by(stride).collect();
    if n > 0 && idx.last() != Some(&(n - 1)) {
        idx.push(n - 1);
    }
    let mut sup: f64 = 0.0;
    for (a, &i) in idx.iter().enumerate() {
        for &j in &idx[a + 1..] {
            let dt = (j - i) as f64 * step;
            sup = sup.max((values[j] - values[i]).abs() / dt.powf(alpha));
        }
    }
    HolderReport {
        exponent: alpha,
        interval: (0.0, n.saturating_sub(1) as f64 * step),
        value: sup,
        stride,
    }
}

#[derive(Clone, Copy, Debug)]
pub struct RoughIntegrationConfig {
    pub tolerance: f64,
    pub max_points: usize,
}

impl Default for RoughIntegrationConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            max_points: 1 << 14,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RoughIntegral {
    pub value: f64,
    /// Number of partition intervals used for `value`.
    pub intervals: usize,
    /// Difference to the previous refinement.
    pub last_change: f64,
}

fn check_mesh(y: &ControlledPath, drive: &RoughDrive, end: usize) -> Result<()> {
    if (y.step - drive.fine_step()).abs() > 1e-12 * drive.fine_step() {
        return Err(Error::invalid("controlled path must live on the drive's fine mesh"));
    }
    if y.len() <= end {
        return Err(Error::invalid("controlled path does not cover the interval"));
    }
    if y.components() > drive.count() {
        return Err(Error::invalid("controlled path has more components than the drive"));
    }
    Ok(())
}

fn interval_indices(drive: &RoughDrive, interval: (f64, f64)) -> Result<(usize, usize)> {
    let (s, t) = (drive.index_of(interval.0)?, drive.index_of(interval.1)?);
    if s >= t {
        return Err(Error::invalid("empty integration interval"));
    }
    Ok((s, t))
}

/// `Σ_i [Y_k(t_i) δB_k + Σ_j Y'_kj(t_i) 𝔹_jk]` over the partition with
/// `parts` intervals spread evenly over the fine indices `[s, t]`.
fn compensated_sum(y: &ControlledPath, drive: &RoughDrive, k: usize, s: usize, t: usize, parts: usize) -> f64 {
    let span = t - s;
    let node = |i: usize| s + i * span / parts;
    (0..parts)
        .map(|i| {
            let (a, b) = (node(i), node(i + 1));
            let mut term = y.values[k][a] * drive.increment(k, a, b);
            for (j, dj) in y.derivative[k].iter().enumerate() {
                if dj[a] != 0.0 {
                    term += dj[a] * drive.iterated(j, k, a, b);
                }
            }
            term
        })
        .sum()
}

/// Rough integral `∫ Y_k dB_k` over `interval` by dyadic refinement of the
/// partition. Stops once two successive values differ by less than the
/// tolerance or the partition reaches the fine mesh, whose value is exact for
/// the sampled drive.
pub fn rough_integral(
    y: &ControlledPath,
    drive: &RoughDrive,
    k: usize,
    interval: (f64, f64),
    cfg: RoughIntegrationConfig,
) -> Result<RoughIntegral> {
    let (s, t) = interval_indices(drive, interval)?;
    check_mesh(y, drive, t)?;
    let span = t - s;
    let mut parts = 1;
    let mut prev = compensated_sum(y, drive, k, s, t, parts);
    loop {
        if parts >= span {
            return Ok(RoughIntegral {
                value: prev,
                intervals: parts,
                last_change: 0.0,
            });
        }
        let next_parts = (2 * parts).min(span);
        let next = compensated_sum(y, drive, k, s, t, next_parts);
        let change = (next - prev).abs();
        if change < cfg.tolerance || next_parts == span {
            return Ok(RoughIntegral {
                value: next,
                intervals: next_parts,
                last_change: change,
            });
        }
        if next_parts >= cfg.max_points {
            return Err(Error::NonConvergence {
                what: format!("rough integral (last two values {prev:.12e}, {next:.12e})"),
                residual: change,
            });
        }
        parts = next_parts;
        prev = next;
    }
}

/// Largest empirical `2α`-Hölder seminorm of `R_st = δY_st − Σ_j Y'_j(s) δB_j`
/// over the components of `y`.
pub fn controlled_remainder_check(y: &ControlledPath, drive: &RoughDrive, alpha: f64) -> Result<f64> {
    let end = y.len().saturating_sub(1);
    check_mesh(y, drive, end)?;
    let stride = y.len().div_ceil(EXACT_PAIR_LIMIT / 2).max(1);
    let idx: Vec<usize> = (0..y.len()).step_by(stride).collect();
    let mut sup: f64 = 0.0;
    for k in 0..y.components() {
        for (a, &s) in idx.iter().enumerate() {
            for &t in &idx[a + 1..] {
                let mut r = y.values[k][t] - y.values[k][s];
                for (j, dj) in y.derivative[k].iter().enumerate() {
                    r -= dj[s] * drive.increment(j, s, t);
                }
                let dt = (t - s) as f64 * y.step;
                sup = sup.max(r.abs() / dt.powf(2.0 * alpha));
            }
        }
    }
    Ok(sup)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ItoComparison {
    pub rough: f64,
    pub ito: f64,
    pub gap: f64,
}

/// Compare the rough integral with the left-point Itô sum on the drive mesh.
pub fn ito_equivalence(y: &ControlledPath, drive: &RoughDrive, k: usize, interval: (f64, f64)) -> Result<ItoComparison> {
    let (s, t) = interval_indices(drive, interval)?;
    check_mesh(y, drive, t)?;
    let rough = rough_integral(y, drive, k, interval, RoughIntegrationConfig::default())?.value;
    let ito: f64 = (s..t).map(|i| y.values[k][i] * drive.increment(k, i, i + 1)).sum();
    Ok(ItoComparison {
        rough,
        ito,
        gap: (rough - ito).abs(),
    })
}

/// `Y = B_k` with `Y' = e_k`, the canonical controlled path.
pub fn brownian_path(drive: &RoughDrive, k: usize) -> ControlledPath {
    let len = drive.steps() + 1;
    let mut path = ControlledPath::deterministic(drive.fine_step(), vec![vec![0.0; len]; drive.count()], drive.count());
    path.values[k] = drive.path(k).to_vec();
    path.derivative[k][k] = vec![1.0; len];
    path
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::sample_drive;
    use proptest::prelude::*;

    fn constant_path(drive: &RoughDrive, c: f64) -> ControlledPath {
        let len = drive.steps() + 1;
        ControlledPath::deterministic(drive.fine_step(), vec![vec![c; len]; drive.count()], drive.count())
    }

    #[test]
    fn holder_of_simple_paths() {
        let f: Vec<f64> = (0..=100).map(|i| i as f64 / 100.0).collect();
        let r = holder_seminorm(&f, 0.01, 1.0);
        assert!((r.value - 1.0).abs() < 1e-12);
        assert_eq!(r.stride, 1);
        assert_eq!(holder_seminorm(&[2.0; 50], 0.1, 0.5).value, 0.0);
    }

    #[test]
    fn holder_divergence_above_one_half() {
        let drive = sample_drive(1, 1.0, 1.0 / 4096.0, 1.0 / 256.0, 3).unwrap();
        let mut low = Vec::new();
        let mut high = Vec::new();
        for factor in [16, 4, 1] {
            let d = drive.coarsened(factor).unwrap();
            low.push(holder_seminorm(d.path(0), d.fine_step(), 0.4).value);
            high.push(holder_seminorm(d.path(0), d.fine_step(), 0.6).value);
        }
        assert!(low.iter().all(|v| v.is_finite()));
        assert!(high[2] > high[0]);
        assert!(high[2] / high[0] > low[2] / low[0]);
    }

    #[test]
    fn integral_of_one() {
        let drive = sample_drive(2, 2.0, 1.0 / 1024.0, 1.0 / 64.0, 5).unwrap();
        let y = constant_path(&drive, 1.0);
        let r = rough_integral(&y, &drive, 1, (0.5, 1.5), RoughIntegrationConfig::default()).unwrap();
        let exact = drive.increment(1, 512, 1536);
        assert!((r.value - exact).abs() < 1e-14);
        let cmp = ito_equivalence(&y, &drive, 1, (0.5, 1.5)).unwrap();
        assert!(cmp.gap < 1e-13);
    }

    #[test]
    fn integral_of_brownian_motion() {
        let drive = sample_drive(2, 1.0, 1.0 / 4096.0, 1.0 / 256.0, 11).unwrap();
        let y = brownian_path(&drive, 0);
        let r = rough_integral(&y, &drive, 0, (0.0, 1.0), RoughIntegrationConfig::default()).unwrap();
        let b = drive.value(0, drive.steps());
        assert!((r.value - 0.5 * (b * b - 1.0)).abs() < 1e-8);
        // independent oracle: Itô sum on the fine mesh plus its quadratic-variation defect
        let qv: f64 = (0..drive.steps()).map(|i| drive.increment(0, i, i + 1).powi(2)).sum();
        let ito: f64 = (0..drive.steps()).map(|i| drive.value(0, i) * drive.increment(0, i, i + 1)).sum();
        assert!((r.value - (ito + 0.5 * (qv - 1.0))).abs() < 1e-10);
    }

    #[test]
    fn smooth_integrand_matches_riemann_stieltjes() {
        let drive = sample_drive(1, 1.0, 1.0 / 2048.0, 1.0 / 128.0, 2).unwrap();
        let len = drive.steps() + 1;
        let g: Vec<f64> = (0..len).map(|i| (-(i as f64) * drive.fine_step()).exp()).collect();
        let y = ControlledPath::deterministic(drive.fine_step(), vec![g.clone()], 1);
        let cmp = ito_equivalence(&y, &drive, 0, (0.0, 1.0)).unwrap();
        let rs: f64 = (0..drive.steps()).map(|i| g[i] * drive.increment(0, i, i + 1)).sum();
        assert!((cmp.ito - rs).abs() < 1e-14);
        // refinement stops early only when the change is tiny
        assert!(cmp.gap < 0.05);
    }

    #[test]
    fn non_convergence_is_reported() {
        let drive = sample_drive(1, 4.0, 1.0 / 8192.0, 1.0 / 512.0, 9).unwrap();
        let len = drive.steps() + 1;
        let y = ControlledPath::deterministic(drive.fine_step(), vec![drive.path(0)[..len].to_vec()], 1);
        let cfg = RoughIntegrationConfig {
            tolerance: 1e-12,
            max_points: 64,
        };
        assert!(matches!(rough_integral(&y, &drive, 0, (0.0, 4.0), cfg), Err(Error::NonConvergence { .. })));
    }

    #[test]
    fn remainder_of_exact_control_vanishes() {
        let drive = sample_drive(2, 1.0, 1.0 / 1024.0, 1.0 / 64.0, 4).unwrap();
        assert_eq!(controlled_remainder_check(&brownian_path(&drive, 1), &drive, 0.4).unwrap(), 0.0);
        // B² with derivative 2B: remainder is δB² − ... bounded by the 2α scale
        let len = drive.steps() + 1;
        let b = drive.path(0);
        let mut y = ControlledPath::deterministic(drive.fine_step(), vec![b.iter().map(|x| x * x).collect()], 2);
        y.derivative[0][0] = b.iter().map(|x| 2.0 * x).collect();
        let r = controlled_remainder_check(&y, &drive, 0.4).unwrap();
        assert!(r.is_finite() && r > 0.0 && r < 50.0);
        assert_eq!(y.len(), len);
    }

    #[test]
    fn interval_additivity() {
        let drive = sample_drive(2, 2.0, 1.0 / 1024.0, 1.0 / 64.0, 13).unwrap();
        let y = brownian_path(&drive, 1);
        let cfg = RoughIntegrationConfig::default();
        let full = rough_integral(&y, &drive, 1, (0.0, 2.0), cfg).unwrap().value;
        let a = rough_integral(&y, &drive, 1, (0.0, 0.75), cfg).unwrap().value;
        let b = rough_integral(&y, &drive, 1, (0.75, 2.0), cfg).unwrap().value;
        assert!((full - a - b).abs() < 1e-8);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn linearity(a in -3.0f64..3.0, b in -3.0f64..3.0, seed in 0u64..1000) {
            let drive = sample_drive(2, 1.0, 1.0 / 512.0, 1.0 / 32.0, seed).unwrap();
            let y1 = brownian_path(&drive, 0);
            let len = drive.steps() + 1;
            let y2 = ControlledPath::deterministic(drive.fine_step(), vec![(0..len).map(|i| (i as f64 * 0.01).sin()).collect(), vec![0.0; len]], 2);
            let mut comb = y1.clone();
            for i in 0..len {
                comb.values[0][i] = a * y1.values[0][i] + b * y2.values[0][i];
                comb.derivative[0][0][i] = a * y1.derivative[0][0][i];
            }
            let cfg = RoughIntegrationConfig { tolerance: 0.0, max_points: usize::MAX };
            let i1 = rough_integral(&y1, &drive, 0, (0.0, 1.0), cfg).unwrap().value;
            let i2 = rough_integral(&y2, &drive, 0, (0.0, 1.0), cfg).unwrap().value;
            let ic = rough_integral(&comb, &drive, 0, (0.0, 1.0), cfg).unwrap().value;
            prop_assert!((ic - a * i1 - b * i2).abs() < 1e-10);
        }
    }
}
