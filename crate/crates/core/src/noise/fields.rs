//! Assembly of `W`, `W★`, `μ` and the lower-order coefficients from a drive,
//! a geometry and a temporal profile.

use std::sync::{Arc, OnceLock};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::drive::RoughDrive;
use super::geometry::NoiseGeometry;
use super::temporal::TemporalProfile;
use crate::error::{Error, Result};
use crate::spectral::{Field, SpatialGrid};

/// Largest tail variance tolerated when `W★` is truncated at a horizon.
pub const TRUNCATION_BUDGET: f64 = 1e-20;

/// How `∫_H^∞ g dB` beyond the drive horizon `H` is handled.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TailClosure {
    /// Sample it exactly as a Gaussian with the analytic tail variance.
    Exact,
    /// Drop it; requires the tail variance to be below the budget.
    Truncate,
}

/// Lower-order coefficients `b` (one field per axis) and `c`.
#[derive(Clone, Debug)]
pub struct Coefficients {
    pub b: Vec<Field>,
    pub c: Field,
}

/// Noise weights `m_l` such that a transform exponent reads `i Σ φ_l m_l`.
pub type Weights = Vec<f64>;

#[derive(Debug)]
pub struct NoiseModel {
    drive: Arc<RoughDrive>,
    geometry: Arc<NoiseGeometry>,
    profile: TemporalProfile,
    closure: TailClosure,
    /// `M_l(t_i) = ∫_0^{t_i} g_l dB_l` as left-point sums on the fine mesh.
    martingale: Vec<Vec<f64>>,
    /// `∫_H^∞ g_l dB_l`.
    beyond: Vec<f64>,
    b_star: OnceLock<Vec<f64>>,
}

impl NoiseModel {
    pub fn new(drive: Arc<RoughDrive>, geometry: Arc<NoiseGeometry>, profile: TemporalProfile, closure: TailClosure) -> Result<Self> {
        profile.validate()?;
        if drive.count() != geometry.count() {
            return Err(Error::invalid(format!(
                "drive has {} paths but geometry has {} terms",
                drive.count(),
                geometry.count()
            )));
        }
        let h = drive.fine_step();
        let tail_var = profile.tail_variance(drive.horizon());
        if closure == TailClosure::Truncate && tail_var >= TRUNCATION_BUDGET {
            return Err(Error::HorizonTooShort { tail_variance: tail_var });
        }
        let g: Vec<f64> = (0..drive.steps()).map(|i| profile.value(i as f64 * h)).collect();
        let martingale = (0..drive.count())
            .map(|l| {
                let mut m = Vec::with_capacity(drive.steps() + 1);
                let mut acc = 0.0;
                m.push(0.0);
                for (i, gi) in g.iter().enumerate() {
                    acc += gi * drive.increment(l, i, i + 1);
                    m.push(acc);
                }
                m
            })
            .collect();
        let beyond = (0..drive.count())
            .map(|l| match closure {
                TailClosure::Exact => tail_var.sqrt() * drive.tail_normal(l),
                TailClosure::Truncate => 0.0,
            })
            .collect();
        Ok(Self {
            drive,
            geometry,
            profile,
            closure,
            martingale,
            beyond,
            b_star: OnceLock::new(),
        })
    }

    pub fn drive(&self) -> &Arc<RoughDrive> {
        &self.drive
    }

    pub fn geometry(&self) -> &Arc<NoiseGeometry> {
        &self.geometry
    }

    pub fn grid(&self) -> &Arc<SpatialGrid> {
        self.geometry.grid()
    }

    pub fn profile(&self) -> TemporalProfile {
        self.profile
    }

    pub fn closure(&self) -> TailClosure {
        self.closure
    }

    pub fn count(&self) -> usize {
        self.martingale.len()
    }

    pub fn is_silent(&self) -> bool {
        self.profile.is_zero() || self.geometry.params().amplitudes.iter().all(|&a| a == 0.0)
    }

    /// Variance of the part of `∫_t^∞ g dB` that is not represented.
    pub fn truncation_variance(&self) -> f64 {
        match self.closure {
            TailClosure::Exact => 0.0,
            TailClosure::Truncate => self.profile.tail_variance(self.drive.horizon()),
        }
    }

    /// `∫_0^t g_l dB_l`.
    pub fn integral(&self, l: usize, t: f64) -> Result<f64> {
        Ok(self.martingale[l][self.drive.index_of(t)?])
    }

    /// `∫_s^t g_l dB_l` for mesh times `s, t`.
    pub fn increment(&self, l: usize, s: f64, t: f64) -> Result<f64> {
        Ok(self.integral(l, t)? - self.integral(l, s)?)
    }

    /// `∫_t^∞ g_l dB_l`.
    pub fn tail_integral(&self, l: usize, t: f64) -> Result<f64> {
        let i = self.drive.index_of(t)?;
        Ok(self.tail_at_index(l, i))
    }

    fn tail_at_index(&self, l: usize, i: usize) -> f64 {
        let m = &self.martingale[l];
        m[m.len() - 1] - m[i] + self.beyond[l]
    }

    /// Weights of `W(t)`: `m_l = ∫_0^t g_l dB_l`.
    pub fn weights_w(&self, t: f64) -> Result<Weights> {
        (0..self.count()).map(|l| self.integral(l, t)).collect()
    }

    /// Weights of `W★(t)`: `m_l = −∫_t^∞ g_l dB_l`.
    pub fn weights_wstar(&self, t: f64) -> Result<Weights> {
        (0..self.count()).map(|l| self.tail_integral(l, t).map(|v| -v)).collect()
    }

    /// `i Σ_l φ_l m_l`.
    pub fn exponent(&self, weights: &[f64]) -> Field {
        let len = self.grid().len();
        let mut vals = vec![Complex64::new(0.0, 0.0); len];
        for (l, &m) in weights.iter().enumerate() {
            for (v, &p) in vals.iter_mut().zip(self.geometry.phi(l)) {
                v.im += p * m;
            }
        }
        Field::from_values(self.grid().clone(), vals)
    }

    pub fn assemble_w(&self, t: f64) -> Result<Field> {
        Ok(self.exponent(&self.weights_w(t)?))
    }

    pub fn assemble_wstar(&self, t: f64) -> Result<Field> {
        Ok(self.exponent(&self.weights_wstar(t)?))
    }

    /// `W★(t)` truncated at an explicit horizon inside the drive.
    pub fn assemble_wstar_to(&self, t: f64, horizon: f64) -> Result<Field> {
        let tail_variance = self.profile.tail_variance(horizon);
        if tail_variance >= TRUNCATION_BUDGET {
            return Err(Error::HorizonTooShort { tail_variance });
        }
        let weights: Result<Weights> = (0..self.count()).map(|l| self.increment(l, t, horizon).map(|v| -v)).collect();
        Ok(self.exponent(&weights?))
    }

    /// `b = 2∇W` and `c = Σ_j (∂_j W)² + ΔW` for `W = iΣφ_l m_l`, built from
    /// the analytic derivatives of `φ_l`.
    pub fn lower_order(&self, weights: &[f64]) -> Coefficients {
        let grid = self.grid();
        let dim = grid.dim();
        let len = grid.len();
        let mut grad = vec![vec![0.0; len]; dim];
        let mut lap = vec![0.0; len];
        for (l, &m) in weights.iter().enumerate() {
            if m == 0.0 {
                continue;
            }
            for (a, ga) in grad.iter_mut().enumerate() {
                for (g, &d) in ga.iter_mut().zip(self.geometry.grad(l, a)) {
                    *g += d * m;
                }
            }
            for (s, &d) in lap.iter_mut().zip(self.geometry.laplacian(l)) {
                *s += d * m;
            }
        }
        let b = grad
            .iter()
            .map(|ga| Field::from_values(grid.clone(), ga.iter().map(|&g| Complex64::new(0.0, 2.0 * g)).collect()))
            .collect();
        let c = (0..len)
            .map(|i| {
                let sq: f64 = grad.iter().map(|ga| ga[i] * ga[i]).sum();
                Complex64::new(-sq, lap[i])
            })
            .collect();
        Coefficients {
            b,
            c: Field::from_values(grid.clone(), c),
        }
    }

    pub fn coefficients(&self, t: f64) -> Result<Coefficients> {
        Ok(self.lower_order(&self.weights_w(t)?))
    }

    pub fn coefficients_star(&self, t: f64) -> Result<Coefficients> {
        Ok(self.lower_order(&self.weights_wstar(t)?))
    }

    /// `μ = ½ Σ φ_l² g_l(t)²`.
    pub fn mu_field(&self, t: f64) -> Field {
        let g = self.profile.value(t);
        let len = self.grid().len();
        let mut vals = vec![Complex64::new(0.0, 0.0); len];
        for l in 0..self.count() {
            for (v, &p) in vals.iter_mut().zip(self.geometry.phi(l)) {
                v.re += 0.5 * p * p * g * g;
            }
        }
        Field::from_values(self.grid().clone(), vals)
    }

    /// `B★` on every fine node: `sup_{s>=t} Σ_l |∫_s^∞ g_l dB_l|`.
    pub fn b_star_series(&self) -> &[f64] {
        self.b_star.get_or_init(|| {
            let n = self.drive.steps() + 1;
            let mut out = vec![0.0; n];
            let mut running: f64 = 0.0;
            for i in (0..n).rev() {
                let s: f64 = (0..self.count()).map(|l| self.tail_at_index(l, i).abs()).sum();
                running = running.max(s);
                out[i] = running;
            }
            out
        })
    }

    pub fn b_star(&self, t: f64) -> Result<f64> {
        Ok(self.b_star_series()[self.drive.index_of(t)?])
    }
}

#[cfg(test)]
mod tests {
    use super::super::drive::sample_drive;
    use super::super::geometry::{make_geometry, GeometryParams, NoiseCase};
    use super::*;
    use crate::spectral::partial;

    fn model(profile: TemporalProfile, closure: TailClosure, amplitude: f64, horizon: f64) -> NoiseModel {
        model_on(SpatialGrid::new(1, 32.0, 512).unwrap(), profile, closure, amplitude, horizon)
    }

    fn model_on(grid: Arc<SpatialGrid>, profile: TemporalProfile, closure: TailClosure, amplitude: f64, horizon: f64) -> NoiseModel {
        let drive = Arc::new(sample_drive(2, horizon, 1.0 / 256.0, 1.0 / 16.0, 17).unwrap());
        let geo = Arc::new(make_geometry(NoiseCase::Exponential, GeometryParams::uniform(2, amplitude), 2, &grid).unwrap());
        NoiseModel::new(drive, geo, profile, closure).unwrap()
    }

    #[test]
    fn zero_noise_gives_zero_fields() {
        let m = model(TemporalProfile::Zero, TailClosure::Exact, 0.5, 4.0);
        assert!(m.is_silent());
        assert_eq!(m.assemble_w(2.0).unwrap().max_abs(), 0.0);
        assert_eq!(m.assemble_wstar(2.0).unwrap().max_abs(), 0.0);
        let c = m.coefficients(1.0).unwrap();
        assert_eq!(c.b[0].max_abs(), 0.0);
        assert_eq!(c.c.max_abs(), 0.0);
        assert_eq!(m.mu_field(1.0).max_abs(), 0.0);
    }

    #[test]
    fn exponents_are_imaginary() {
        let m = model(TemporalProfile::Exponential { rate: 0.5 }, TailClosure::Exact, 0.5, 8.0);
        let w = m.assemble_w(3.0).unwrap();
        let ws = m.assemble_wstar(3.0).unwrap();
        assert!(w.values().iter().chain(ws.values()).all(|z| z.re == 0.0));
        assert!(w.values().iter().all(|z| (z.exp().norm() - 1.0).abs() < 1e-14));
    }

    #[test]
    fn scalar_ito_sum() {
        let m = model(TemporalProfile::Exponential { rate: 0.5 }, TailClosure::Exact, 1.0, 4.0);
        let drive = m.drive();
        let t = 2.5;
        let n = drive.index_of(t).unwrap();
        let direct: f64 = (0..n).map(|i| (-0.5 * drive.time(i)).exp() * drive.increment(1, i, i + 1)).sum();
        assert!((m.integral(1, t).unwrap() - direct).abs() < 1e-13);
        let w = m.assemble_w(t).unwrap();
        let phi_at = m.geometry().phi(1)[100] * direct + m.geometry().phi(0)[100] * m.integral(0, t).unwrap();
        assert!((w.values()[100].im - phi_at).abs() < 1e-14);
    }

    #[test]
    fn w_and_wstar_are_consistent() {
        // in truncation mode W(t) − W(H) = iΣφ_l(−∫_t^H g_l dB_l) = W★(t)
        let m = model(TemporalProfile::Exponential { rate: 4.0 }, TailClosure::Truncate, 0.5, 8.0);
        let h = m.drive().horizon();
        let lhs = m.assemble_w(2.0).unwrap().sub(&m.assemble_w(h).unwrap()).unwrap();
        let rhs = m.assemble_wstar(2.0).unwrap();
        assert!(lhs.sub(&rhs).unwrap().max_abs() < 1e-14);
        assert_eq!(m.assemble_wstar(h).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn truncation_requires_a_long_horizon() {
        let grid = SpatialGrid::new(1, 32.0, 256).unwrap();
        let drive = Arc::new(sample_drive(1, 4.0, 1.0 / 256.0, 1.0 / 16.0, 1).unwrap());
        let geo = Arc::new(make_geometry(NoiseCase::Exponential, GeometryParams::uniform(1, 0.1), 1, &grid).unwrap());
        let err = NoiseModel::new(drive, geo, TemporalProfile::Exponential { rate: 0.5 }, TailClosure::Truncate).unwrap_err();
        assert!(matches!(err, Error::HorizonTooShort { .. }));
    }

    #[test]
    fn coefficients_from_analytic_gradients() {
        let grid = SpatialGrid::new(1, 24.0, 8192).unwrap();
        let m = model_on(grid, TemporalProfile::Exponential { rate: 0.5 }, TailClosure::Exact, 0.7, 8.0);
        let t = 3.0;
        let w = m.assemble_w(t).unwrap();
        let coef = m.coefficients(t).unwrap();
        // centered differences of the sampled exponent vs b/2
        let grid = w.grid().clone();
        let h = grid.spacing();
        let n = grid.n();
        let mut worst: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for i in 2..n - 2 {
            let fd = (-w.values()[i + 2] + 8.0 * w.values()[i + 1] - 8.0 * w.values()[i - 1] + w.values()[i - 2]) / (12.0 * h);
            let half_b = coef.b[0].values()[i] / 2.0;
            worst = worst.max((fd - half_b).norm());
            scale = scale.max(half_b.norm());
        }
        assert!(worst < 1e-6 * scale, "{worst:e} vs {scale:e}");
        // spectral derivative agrees much more tightly
        let spec = partial(&w, 0);
        for i in 0..n {
            assert!((spec.values()[i] - coef.b[0].values()[i] / 2.0).norm() < 1e-10);
        }
        assert!(coef.c.values().iter().all(|z| z.re <= 0.0));
    }

    #[test]
    fn mu_is_half_the_squared_profile() {
        let m = model(TemporalProfile::Exponential { rate: 0.5 }, TailClosure::Exact, 0.3, 2.0);
        let mu = m.mu_field(1.0);
        let g = (-0.5f64).exp();
        for i in 0..mu.values().len() {
            let expect: f64 = (0..2).map(|l| 0.5 * (m.geometry().phi(l)[i] * g).powi(2)).sum();
            assert!((mu.values()[i].re - expect).abs() < 1e-16);
            assert!(mu.values()[i].re >= 0.0);
        }
    }

    #[test]
    fn b_star_is_non_increasing() {
        let m = model(TemporalProfile::Power { exponent: 2.0 }, TailClosure::Exact, 0.3, 8.0);
        let s = m.b_star_series();
        assert!(s.windows(2).all(|w| w[1] <= w[0]));
        let t = model(TemporalProfile::Exponential { rate: 4.0 }, TailClosure::Truncate, 0.3, 8.0);
        assert_eq!(t.b_star(8.0).unwrap(), 0.0);
    }

    #[test]
    fn levy_bound_on_polynomial_tails() {
        // t·B★(t) <= 2√c★ with c★ = 1 for t >= 10, on at least 95% of seeds
        let grid = SpatialGrid::new(1, 16.0, 16).unwrap();
        let geo = Arc::new(make_geometry(NoiseCase::Polynomial, GeometryParams::uniform(2, 1.0), 2, &grid).unwrap());
        let profile = TemporalProfile::Power { exponent: 2.0 };
        let seeds = 500;
        let good = (0..seeds)
            .filter(|&seed| {
                let drive = Arc::new(sample_drive(2, 40.0, 1.0 / 64.0, 0.25, seed).unwrap());
                let m = NoiseModel::new(drive.clone(), geo.clone(), profile, TailClosure::Exact).unwrap();
                let start = drive.index_of(10.0).unwrap();
                m.b_star_series()[start..].iter().enumerate().all(|(i, b)| drive.time(start + i) * b <= 2.0)
            })
            .count();
        assert!(good as f64 >= 0.95 * seeds as f64, "{good}");
    }
}

