//! Temporal noise profiles `g_l` and their controlled-path representation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Threshold above which the polynomial-case tail condition is enforced.
pub const TAIL_CHECK_START: f64 = 10.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TemporalProfile {
    /// `g ≡ 0`.
    Zero,
    /// `g(t) = e^{-λt}`.
    Exponential { rate: f64 },
    /// `g(t) = (1+t)^{-q}`.
    Power { exponent: f64 },
}

impl TemporalProfile {
    pub fn validate(&self) -> Result<()> {
        match *self {
            TemporalProfile::Zero => Ok(()),
            TemporalProfile::Exponential { rate } if rate > 0.0 => Ok(()),
            TemporalProfile::Power { exponent } if exponent > 0.5 => Ok(()),
            other => Err(Error::invalid(format!("temporal profile {other:?} is not square integrable"))),
        }
    }

    pub fn value(&self, t: f64) -> f64 {
        match *self {
            TemporalProfile::Zero => 0.0,
            TemporalProfile::Exponential { rate } => (-rate * t).exp(),
            TemporalProfile::Power { exponent } => (1.0 + t).powf(-exponent),
        }
    }

    /// `∫_t^∞ g(s)² ds`.
    pub fn tail_variance(&self, t: f64) -> f64 {
        match *self {
            TemporalProfile::Zero => 0.0,
            TemporalProfile::Exponential { rate } => (-2.0 * rate * t).exp() / (2.0 * rate),
            TemporalProfile::Power { exponent } => (1.0 + t).powf(1.0 - 2.0 * exponent) / (2.0 * exponent - 1.0),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, TemporalProfile::Zero)
    }
}

/// `∫_t^∞ g² · log(1/∫_t^∞ g²)`, the quantity bounded by `c★/t²` in the
/// polynomial case.
pub fn tail_statistic(profile: &TemporalProfile, t: f64) -> f64 {
    let v = profile.tail_variance(t);
    if v <= 0.0 {
        0.0
    } else {
        v * (1.0 / v).ln()
    }
}

/// Scan mesh times `t >= TAIL_CHECK_START` and return that threshold, or the
/// first violating time.
pub fn check_tail_condition(profile: &TemporalProfile, c_star: f64, times: &[f64]) -> Result<f64> {
    for &t in times.iter().filter(|&&t| t >= TAIL_CHECK_START) {
        if tail_statistic(profile, t) > c_star / (t * t) {
            return Err(Error::ConditionViolated { t });
        }
    }
    Ok(TAIL_CHECK_START)
}

/// A path `Y` on a uniform mesh with Gubinelli derivative `Y'`:
/// `values[l][i]`, `derivative[l][j][i]`.
#[derive(Clone, Debug)]
pub struct ControlledPath {
    pub step: f64,
    pub values: Vec<Vec<f64>>,
    pub derivative: Vec<Vec<Vec<f64>>>,
    /// Empirical 2α-Hölder seminorm of the remainder `δY − Y'δB`.
    pub remainder_bound: f64,
}

impl ControlledPath {
    /// Deterministic path: zero Gubinelli derivative.
    pub fn deterministic(step: f64, values: Vec<Vec<f64>>, drive_count: usize) -> Self {
        let len = values.first().map_or(0, Vec::len);
        let derivative = values.iter().map(|_| vec![vec![0.0; len]; drive_count]).collect();
        Self {
            step,
            values,
            derivative,
            remainder_bound: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn components(&self) -> usize {
        self.values.len()
    }
}

/// Sample `g_l` for each of `count` noise terms on `mesh_len` nodes of
/// spacing `step`. In the polynomial case the tail condition is checked on
/// the mesh and a violation rejects the profile.
pub fn make_temporal(
    profile: &TemporalProfile,
    count: usize,
    step: f64,
    mesh_len: usize,
    polynomial_case: bool,
    c_star: f64,
    holder_exponent: f64,
) -> Result<ControlledPath> {
    profile.validate()?;
    let times: Vec<f64> = (0..mesh_len).map(|i| i as f64 * step).collect();
    if polynomial_case {
        check_tail_condition(profile, c_star, &times)?;
    }
    let g: Vec<f64> = times.iter().map(|&t| profile.value(t)).collect();
    let mut path = ControlledPath::deterministic(step, vec![g; count], count);
    // with Y' = 0 the remainder is the increment itself
    path.remainder_bound = path
        .values
        .iter()
        .map(|v| crate::rough::holder_seminorm(v, step, 2.0 * holder_exponent).value)
        .fold(0.0, f64::max);
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_total_variance() {
        let g = TemporalProfile::Exponential { rate: 0.5 };
        assert!((g.tail_variance(0.0) - 1.0).abs() < 1e-15);
        // trapezoid check of the closed form
        let h = 1e-3;
        let num: f64 = (0..60_000).map(|i| g.value(i as f64 * h).powi(2) * h).sum::<f64>() - 0.5 * h;
        assert!((num - 1.0).abs() < 1e-6);
    }

    #[test]
    fn power_tail_closed_form() {
        let g = TemporalProfile::Power { exponent: 2.0 };
        for t in [0.0, 3.0, 10.0] {
            assert!((g.tail_variance(t) - (1.0 + t).powi(-3) / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn quadratic_decay_passes_the_tail_condition() {
        let g = TemporalProfile::Power { exponent: 2.0 };
        let times: Vec<f64> = (0..=20_000).map(|i| i as f64 * 0.01).collect();
        assert_eq!(check_tail_condition(&g, 1.0, &times).unwrap(), TAIL_CHECK_START);
        // direct evaluation of the statistic at t = 10
        let v = 11f64.powi(-3) / 3.0;
        assert!((tail_statistic(&g, 10.0) - v * (1.0 / v).ln()).abs() < 1e-15);
        assert!(tail_statistic(&g, 10.0) <= 0.01);
    }

    #[test]
    fn slow_decay_is_rejected_at_first_violation() {
        let g = TemporalProfile::Power { exponent: 1.5 };
        let times: Vec<f64> = (0..=2000).map(|i| i as f64 * 0.01).collect();
        match check_tail_condition(&g, 1.0, &times) {
            Err(Error::ConditionViolated { t }) => assert!((t - 10.0).abs() < 1e-9),
            other => panic!("expected rejection, got {other:?}"),
        }
        assert!((tail_statistic(&g, 10.0) - 242f64.ln() / 242.0).abs() < 1e-15);
    }

    #[test]
    fn deterministic_path_has_zero_derivative() {
        let g = TemporalProfile::Exponential { rate: 1.0 };
        let p = make_temporal(&g, 2, 0.01, 101, false, 1.0, 0.4).unwrap();
        assert_eq!(p.components(), 2);
        assert!(p.derivative.iter().flatten().flatten().all(|&d| d == 0.0));
        assert!(p.remainder_bound > 0.0 && p.remainder_bound.is_finite());
    }
}
