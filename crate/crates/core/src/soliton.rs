//! Solitary waves, their modulated variants, the pseudo-conformal blow-up
//! profile and the pseudo-conformal transform.
//!
//! Points and velocities are `[f64; 2]`; in one dimension the second slot is
//! ignored and should be zero.

use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ground_state::GroundStateProfile;
use crate::spectral::{Field, SpatialGrid};

pub type Point = [f64; 2];

/// Boundary tail above which an evaluated wave carries a warning flag.
pub const BOUNDARY_TAIL: f64 = 1e-10;

#[inline]
pub fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

#[inline]
pub fn norm_sq(a: Point) -> f64 {
    dot(a, a)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolitonSpec {
    pub frequency: f64,
    pub velocity: Point,
    pub center: Point,
    pub phase: f64,
}

impl SolitonSpec {
    pub fn new(frequency: f64, velocity: Point, center: Point, phase: f64) -> Result<Self> {
        if !(frequency > 0.0 && frequency.is_finite()) {
            return Err(Error::invalid(format!("soliton frequency must be positive, got {frequency}")));
        }
        Ok(Self {
            frequency,
            velocity,
            center,
            phase,
        })
    }

    /// One-dimensional shorthand.
    pub fn line(frequency: f64, velocity: f64, center: f64, phase: f64) -> Result<Self> {
        Self::new(frequency, [velocity, 0.0], [center, 0.0], phase)
    }

    /// Parameters that make the modulated wave coincide with this soliton.
    pub fn target_params(&self) -> SolitonParams {
        SolitonParams {
            translation: self.center,
            phase: self.phase,
            frequency: self.frequency,
        }
    }
}

/// Velocities must be pairwise distinct and frequencies positive.
pub fn validate_family(specs: &[SolitonSpec]) -> Result<()> {
    if specs.is_empty() {
        return Err(Error::invalid("at least one soliton is required"));
    }
    for (j, a) in specs.iter().enumerate() {
        if !(a.frequency > 0.0) {
            return Err(Error::invalid(format!("soliton {j} has non-positive frequency")));
        }
        for (k, b) in specs.iter().enumerate().skip(j + 1) {
            if norm_sq([a.velocity[0] - b.velocity[0], a.velocity[1] - b.velocity[1]]) == 0.0 {
                return Err(Error::invalid(format!("solitons {j} and {k} share a velocity")));
            }
        }
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Critical,
    Subcritical,
}

impl Mode {
    pub fn for_profile(profile: &GroundStateProfile) -> Self {
        if profile.is_critical() {
            Mode::Critical
        } else {
            Mode::Subcritical
        }
    }
}

/// Fitted translation, phase shift and frequency of one soliton.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolitonParams {
    pub translation: Point,
    pub phase: f64,
    pub frequency: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModulationParams {
    pub mode: Mode,
    pub solitons: Vec<SolitonParams>,
}

impl ModulationParams {
    pub fn at_target(specs: &[SolitonSpec], mode: Mode) -> Self {
        Self {
            mode,
            solitons: specs.iter().map(SolitonSpec::target_params).collect(),
        }
    }

    pub fn validate(&self, specs: &[SolitonSpec]) -> Result<()> {
        if self.solitons.len() != specs.len() {
            return Err(Error::invalid("parameter count does not match soliton count"));
        }
        for (k, (p, s)) in self.solitons.iter().zip(specs).enumerate() {
            if !(p.frequency > 0.0) {
                return Err(Error::invalid(format!("soliton {k}: frequency must stay positive")));
            }
            if self.mode == Mode::Subcritical && p.frequency != s.frequency {
                return Err(Error::invalid(format!("soliton {k}: subcritical frequency is pinned")));
            }
        }
        Ok(())
    }
}

/// `Q_{w}(x − v t − α) e^{iΦ}` with `Φ = v·x/2 − |v|²t/4 + (w⁰)^{-2} t + θ`.
#[derive(Clone, Copy, Debug)]
pub struct Wave<'a> {
    pub profile: &'a GroundStateProfile,
    pub spec: SolitonSpec,
    pub params: SolitonParams,
}

impl<'a> Wave<'a> {
    pub fn solitary(profile: &'a GroundStateProfile, spec: SolitonSpec) -> Self {
        Self {
            profile,
            spec,
            params: spec.target_params(),
        }
    }

    pub fn modulated(profile: &'a GroundStateProfile, spec: SolitonSpec, params: SolitonParams) -> Self {
        Self { profile, spec, params }
    }

    /// Center `v t + α` at time `t`.
    pub fn center(&self, t: f64) -> Point {
        let v = self.spec.velocity;
        let a = self.params.translation;
        [v[0] * t + a[0], v[1] * t + a[1]]
    }

    pub fn phase(&self, t: f64, x: Point) -> f64 {
        let v = self.spec.velocity;
        dot(v, x) / 2.0 - norm_sq(v) * t / 4.0 + t / (self.spec.frequency * self.spec.frequency) + self.params.phase
    }

    pub fn eval(&self, t: f64, x: Point) -> Complex64 {
        let c = self.center(t);
        let r = ((x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2)).sqrt();
        Complex64::from_polar(self.profile.value_at(r, self.params.frequency), self.phase(t, x))
    }

    /// Profile value at the nearest box face, used for the tail warning.
    fn boundary_tail(&self, t: f64, grid: &SpatialGrid) -> f64 {
        let c = self.center(t);
        let l = grid.half_extent();
        let gap = (0..grid.dim()).map(|a| l - c[a].abs()).fold(f64::INFINITY, f64::min);
        if gap <= 0.0 {
            f64::INFINITY
        } else {
            self.profile.value_at(gap, self.params.frequency)
        }
    }

    pub fn sample(&self, t: f64, grid: &Arc<SpatialGrid>) -> Field {
        let mut f = grid.sample(|x| self.eval(t, x));
        f.tail_warning = self.boundary_tail(t, grid) > BOUNDARY_TAIL;
        f
    }

    /// The wave together with its parameter derivatives and the constraint
    /// directions used by the decomposition.
    pub fn sample_jet(&self, t: f64, grid: &Arc<SpatialGrid>) -> WaveJet {
        let dim = grid.dim();
        let len = grid.len();
        let w = self.params.frequency;
        let beta = self.profile.amplitude_exponent();
        let c = self.center(t);
        let v = self.spec.velocity;
        let zero = Complex64::new(0.0, 0.0);
        let mut value = vec![zero; len];
        let mut grad_profile = vec![vec![zero; len]; dim];
        let mut lambda = vec![zero; len];
        for i in 0..len {
            let x = grid.point(i);
            let y = [x[0] - c[0], x[1] - c[1]];
            let r = norm_sq(y).sqrt();
            let (q, dq, _) = self.profile.radial_jet_at(r, w);
            let e = Complex64::from_polar(1.0, self.phase(t, x));
            value[i] = e * q;
            // y·∇Q_w(y) = r Q_w'(r)
            lambda[i] = e * (beta * q + r * dq);
            if r > 0.0 {
                for (a, g) in grad_profile.iter_mut().enumerate() {
                    g[i] = e * (dq * y[a] / r);
                }
            }
        }
        let value = Field::from_values(grid.clone(), value);
        let d_translation: Vec<Field> = grad_profile
            .into_iter()
            .map(|g| Field::from_values(grid.clone(), g.into_iter().map(|z| -z).collect()))
            .collect();
        let spatial_gradient: Vec<Field> = (0..dim)
            .map(|a| {
                let vals = d_translation[a]
                    .values()
                    .iter()
                    .zip(value.values())
                    .map(|(&dt, &r)| -dt + Complex64::new(0.0, v[a] / 2.0) * r)
                    .collect();
                Field::from_values(grid.clone(), vals)
            })
            .collect();
        let lambda_dir = Field::from_values(grid.clone(), lambda);
        let d_frequency = lambda_dir.scale(Complex64::new(-1.0 / w, 0.0));
        let d_phase = value.scale(Complex64::new(0.0, 1.0));
        WaveJet {
            value,
            spatial_gradient,
            d_translation,
            d_phase,
            d_frequency,
            lambda_dir,
        }
    }
}

/// Fields attached to one modulated wave.
#[derive(Clone, Debug)]
pub struct WaveJet {
    pub value: Field,
    /// `∇R̃` in `x`.
    pub spatial_gradient: Vec<Field>,
    /// `∂R̃/∂α_a = −(∂_a Q_w)(y) e^{iΦ}`.
    pub d_translation: Vec<Field>,
    /// `∂R̃/∂θ = iR̃`.
    pub d_phase: Field,
    /// `∂R̃/∂w = −(ΛQ_w)(y) e^{iΦ} / w`.
    pub d_frequency: Field,
    /// `(ΛQ_w)(y) e^{iΦ}`, equal to `Λ R̃ − (i/2) v·y R̃`.
    pub lambda_dir: Field,
}

pub fn solitary_wave(profile: &GroundStateProfile, spec: &SolitonSpec, t: f64, grid: &Arc<SpatialGrid>) -> Field {
    Wave::solitary(profile, *spec).sample(t, grid)
}

pub fn modulated_wave(
    profile: &GroundStateProfile,
    spec: &SolitonSpec,
    params: &SolitonParams,
    t: f64,
    grid: &Arc<SpatialGrid>,
) -> Field {
    Wave::modulated(profile, *spec, *params).sample(t, grid)
}

/// `Σ_k R_k(t)`.
pub fn soliton_sum(profile: &GroundStateProfile, specs: &[SolitonSpec], t: f64, grid: &Arc<SpatialGrid>) -> Field {
    let waves: Vec<Wave> = specs.iter().map(|s| Wave::solitary(profile, *s)).collect();
    sum_of(&waves, t, grid)
}

/// `Σ_k R̃_k(t)` for fitted parameters.
pub fn modulated_sum(
    profile: &GroundStateProfile,
    specs: &[SolitonSpec],
    params: &ModulationParams,
    t: f64,
    grid: &Arc<SpatialGrid>,
) -> Field {
    let waves: Vec<Wave> = specs
        .iter()
        .zip(&params.solitons)
        .map(|(s, p)| Wave::modulated(profile, *s, *p))
        .collect();
    sum_of(&waves, t, grid)
}

fn sum_of(waves: &[Wave], t: f64, grid: &Arc<SpatialGrid>) -> Field {
    let mut f = grid.sample(|x| waves.iter().map(|w| w.eval(t, x)).sum());
    f.tail_warning = waves.iter().any(|w| w.boundary_tail(t, grid) > BOUNDARY_TAIL);
    f
}

/// Anything that can be evaluated at a space-time point.
pub trait SpaceTimeFn {
    fn eval(&self, t: f64, x: Point) -> Complex64;
}

impl SpaceTimeFn for Wave<'_> {
    fn eval(&self, t: f64, x: Point) -> Complex64 {
        Wave::eval(self, t, x)
    }
}

/// `S_T(t,x) = (w(T−t))^{-d/2} Q((x−x★)/(w(T−t))) e^{−i|x−x★|²/(4(T−t)) + i/(w²(T−t)) + iθ}`.
#[derive(Clone, Copy, Debug)]
pub struct BlowupProfile<'a> {
    pub profile: &'a GroundStateProfile,
    pub blowup_time: f64,
    pub frequency: f64,
    pub point: Point,
    pub phase: f64,
}

impl SpaceTimeFn for BlowupProfile<'_> {
    fn eval(&self, t: f64, x: Point) -> Complex64 {
        let tau = self.blowup_time - t;
        let y = [x[0] - self.point[0], x[1] - self.point[1]];
        let r = norm_sq(y).sqrt();
        // critical scaling: Q_λ(y) = λ^{-d/2} Q(y/λ) with λ = wτ
        let amp = self.profile.value_at(r, self.frequency * tau);
        let phase = -norm_sq(y) / (4.0 * tau) + 1.0 / (self.frequency * self.frequency * tau) + self.phase;
        Complex64::from_polar(amp, phase)
    }
}

pub fn pseudo_conformal_blowup(
    profile: &GroundStateProfile,
    blowup_time: f64,
    frequency: f64,
    point: Point,
    phase: f64,
    t: f64,
    grid: &Arc<SpatialGrid>,
) -> Result<Field> {
    if !profile.is_critical() {
        return Err(Error::invalid("the pseudo-conformal blow-up profile needs the critical exponent"));
    }
    if !(t < blowup_time) {
        return Err(Error::invalid(format!("blow-up profile is singular for t >= T (t = {t}, T = {blowup_time})")));
    }
    if !(frequency > 0.0) {
        return Err(Error::invalid("blow-up frequency must be positive"));
    }
    let s = BlowupProfile {
        profile,
        blowup_time,
        frequency,
        point,
        phase,
    };
    Ok(grid.sample(|x| s.eval(t, x)))
}

/// `C_T(R)(t,x) = |T−t|^{-d/2} R(1/(T−t), x/(T−t)) e^{−i|x|²/(4(T−t))}`.
/// The absolute value lets the transform act on both sides of `T`.
#[derive(Clone, Copy, Debug)]
pub struct PseudoConformal<F> {
    pub inner: F,
    pub blowup_time: f64,
    pub dim: usize,
}

impl<F: SpaceTimeFn> SpaceTimeFn for PseudoConformal<F> {
    fn eval(&self, t: f64, x: Point) -> Complex64 {
        let tau = self.blowup_time - t;
        let y = [x[0] / tau, x[1] / tau];
        let amp = tau.abs().powf(-(self.dim as f64) / 2.0);
        self.inner.eval(1.0 / tau, y) * amp * Complex64::from_polar(1.0, -norm_sq(x) / (4.0 * tau))
    }
}

pub fn pseudo_conformal_transform<F: SpaceTimeFn>(
    inner: F,
    blowup_time: f64,
    t: f64,
    grid: &Arc<SpatialGrid>,
) -> Result<Field> {
    if t == blowup_time {
        return Err(Error::invalid("the pseudo-conformal transform is singular at t = T"));
    }
    let c = PseudoConformal {
        inner,
        blowup_time,
        dim: grid.dim(),
    };
    Ok(grid.sample(|x| c.eval(t, x)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ground_state::{rescale, solve_ground_state};
    use crate::spectral::{grad_norm_sq, l2_inner, l2_norm, l2_norm_sq};
    use std::sync::OnceLock;

    fn cubic() -> &'static GroundStateProfile {
        static Q: OnceLock<GroundStateProfile> = OnceLock::new();
        Q.get_or_init(|| solve_ground_state(3.0, 1, 1e-11).unwrap())
    }

    fn quintic() -> &'static GroundStateProfile {
        static Q: OnceLock<GroundStateProfile> = OnceLock::new();
        Q.get_or_init(|| solve_ground_state(5.0, 1, 1e-11).unwrap())
    }

    fn max_diff(a: &Field, b: &Field) -> f64 {
        a.values().iter().zip(b.values()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
    }

    #[test]
    fn resting_wave_is_the_ground_state() {
        let grid = SpatialGrid::new(1, 30.0, 1024).unwrap();
        let spec = SolitonSpec::line(1.0, 0.0, 0.0, 0.0).unwrap();
        let r = solitary_wave(cubic(), &spec, 0.0, &grid);
        let q = cubic().sample(&grid, [0.0, 0.0]);
        assert_eq!(max_diff(&r, &q), 0.0);
        assert!(!r.tail_warning);
    }

    #[test]
    fn mass_is_time_independent() {
        let grid = SpatialGrid::new(1, 60.0, 4096).unwrap();
        let spec = SolitonSpec::line(1.3, 0.7, -2.0, 0.4).unwrap();
        let m0 = l2_norm_sq(&solitary_wave(cubic(), &spec, 0.0, &grid));
        for t in [0.5, 3.0, 10.0] {
            let m = l2_norm_sq(&solitary_wave(cubic(), &spec, t, &grid));
            assert!((m - m0).abs() < 1e-12 * m0);
        }
    }

    #[test]
    fn tail_warning_near_boundary() {
        let grid = SpatialGrid::new(1, 30.0, 512).unwrap();
        let spec = SolitonSpec::line(1.0, 1.0, 0.0, 0.0).unwrap();
        assert!(!solitary_wave(cubic(), &spec, 0.0, &grid).tail_warning);
        assert!(solitary_wave(cubic(), &spec, 15.0, &grid).tail_warning);
    }

    #[test]
    fn target_parameters_reproduce_solitary_wave() {
        let grid = SpatialGrid::new(1, 40.0, 2048).unwrap();
        let spec = SolitonSpec::line(0.8, -0.5, 3.0, 1.1).unwrap();
        let a = solitary_wave(cubic(), &spec, 2.5, &grid);
        let b = modulated_wave(cubic(), &spec, &spec.target_params(), 2.5, &grid);
        assert_eq!(max_diff(&a, &b), 0.0);
    }

    #[test]
    fn critical_modulated_mass_is_scale_free() {
        let grid = SpatialGrid::new(1, 40.0, 8192).unwrap();
        let spec = SolitonSpec::line(1.0, 0.3, 0.0, 0.0).unwrap();
        let mass = quintic().norms().mass;
        for w in [0.6, 1.0, 1.9] {
            let params = SolitonParams {
                translation: [0.5, 0.0],
                phase: 0.2,
                frequency: w,
            };
            let f = modulated_wave(quintic(), &spec, &params, 1.0, &grid);
            assert!((l2_norm_sq(&f) - mass).abs() < 1e-9 * mass);
        }
    }

    #[test]
    fn lambda_direction_is_orthogonal_to_gradient() {
        let grid = SpatialGrid::new(1, 40.0, 4096).unwrap();
        for q in [cubic(), quintic()] {
            let spec = SolitonSpec::line(1.0, 0.0, 0.0, 0.0).unwrap();
            let params = SolitonParams {
                translation: [0.0, 0.0],
                phase: 0.0,
                frequency: 1.4,
            };
            let jet = Wave::modulated(q, spec, params).sample_jet(0.0, &grid);
            let ip = l2_inner(&jet.lambda_dir, &jet.d_translation[0]).unwrap();
            assert!(ip.re.abs() < 1e-12, "{ip}");
        }
    }

    #[test]
    fn jet_matches_finite_differences() {
        let grid = SpatialGrid::new(1, 40.0, 2048).unwrap();
        let spec = SolitonSpec::line(1.0, 0.8, 0.0, 0.0).unwrap();
        let params = SolitonParams {
            translation: [0.3, 0.0],
            phase: 0.5,
            frequency: 1.2,
        };
        let t = 0.7;
        let jet = Wave::modulated(cubic(), spec, params).sample_jet(t, &grid);
        let h = 1e-5;
        let fd = |f: &dyn Fn(&mut SolitonParams, f64)| {
            let mut p = params;
            f(&mut p, h);
            let plus = modulated_wave(cubic(), &spec, &p, t, &grid);
            let mut m = params;
            f(&mut m, -h);
            let minus = modulated_wave(cubic(), &spec, &m, t, &grid);
            plus.sub(&minus).unwrap().scale(Complex64::new(0.5 / h, 0.0))
        };
        let da = fd(&|p, h| p.translation[0] += h);
        let dw = fd(&|p, h| p.frequency += h);
        let dth = fd(&|p, h| p.phase += h);
        assert!(max_diff(&da, &jet.d_translation[0]) < 1e-7);
        assert!(max_diff(&dw, &jet.d_frequency) < 1e-7);
        assert!(max_diff(&dth, &jet.d_phase) < 1e-7);
        let spectral_grad = crate::spectral::partial(&jet.value, 0);
        assert!(max_diff(&spectral_grad, &jet.spatial_gradient[0]) < 1e-8);
    }

    #[test]
    fn blowup_mass_and_speed() {
        let q = quintic();
        let grid = SpatialGrid::new(1, 8.0, 8192).unwrap();
        let mass = q.norms().mass;
        let mut products = Vec::new();
        for tau in [0.3, 0.15, 0.08, 0.03] {
            let s = pseudo_conformal_blowup(q, 1.0, 1.0, [0.0, 0.0], 0.0, 1.0 - tau, &grid).unwrap();
            assert!((l2_norm_sq(&s) - mass).abs() < 1e-8 * mass);
            products.push(tau * grad_norm_sq(&s).sqrt());
        }
        let lo = products.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = products.iter().cloned().fold(0.0, f64::max);
        assert!(hi / lo - 1.0 < 0.05, "{products:?}");
        assert!(pseudo_conformal_blowup(q, 1.0, 1.0, [0.0, 0.0], 0.0, 1.0, &grid).is_err());
        assert!(pseudo_conformal_blowup(cubic(), 1.0, 1.0, [0.0, 0.0], 0.0, 0.5, &grid).is_err());
    }

    #[test]
    fn blowup_width_scales_with_frequency() {
        let q = quintic();
        let grid = SpatialGrid::new(1, 8.0, 4096).unwrap();
        let a = pseudo_conformal_blowup(q, 1.0, 1.0, [0.0, 0.0], 0.0, 0.8, &grid).unwrap();
        let b = pseudo_conformal_blowup(q, 1.0, 2.0, [0.0, 0.0], 0.0, 0.8, &grid).unwrap();
        // |S| at x for frequency 2 equals 2^{-1/2} |S| at x/2 for frequency 1
        for i in (0..grid.len()).step_by(7) {
            let x = grid.point(i)[0];
            let expect = a.values()[i].norm() / 2f64.sqrt();
            let got = BlowupProfile {
                profile: q,
                blowup_time: 1.0,
                frequency: 2.0,
                point: [0.0, 0.0],
                phase: 0.0,
            }
            .eval(0.8, [2.0 * x, 0.0])
            .norm();
            assert!((got - expect).abs() < 1e-12);
        }
        assert!((l2_norm(&a) - l2_norm(&b)).abs() < 1e-9);
    }

    #[test]
    fn transform_of_soliton_is_blowup_profile() {
        let q = quintic();
        let grid = SpatialGrid::new(1, 8.0, 8192).unwrap();
        let spec = SolitonSpec::line(1.2, 0.5, 0.0, 0.3).unwrap();
        let wave = Wave::solitary(q, spec);
        for t in [0.7, 0.85] {
            let c = pseudo_conformal_transform(wave, 1.0, t, &grid).unwrap();
            let tau = 1.0 - t;
            let s = pseudo_conformal_blowup(q, 1.0, 1.2, [0.5, 0.0], 0.3, t, &grid).unwrap();
            let err = l2_norm(&c.sub(&s).unwrap());
            assert!(err < 1e-8, "t = {t}: {err:e}");
            assert!((l2_norm_sq(&c) - q.norms().mass).abs() < 1e-8);
            let _ = tau;
        }
    }

    #[test]
    fn transform_with_offset_center_matches_in_modulus() {
        let q = quintic();
        let grid = SpatialGrid::new(1, 8.0, 8192).unwrap();
        let spec = SolitonSpec::line(1.0, 0.5, 2.0, 0.0).unwrap();
        let t = 0.8;
        let tau = 1.0 - t;
        let c = pseudo_conformal_transform(Wave::solitary(q, spec), 1.0, t, &grid).unwrap();
        let s = pseudo_conformal_blowup(q, 1.0, 1.0, [0.5 + tau * 2.0, 0.0], 0.0, t, &grid).unwrap();
        let err = l2_norm(&c.abs().sub(&s.abs()).unwrap());
        assert!(err < 1e-8, "{err:e}");
    }

    #[test]
    fn double_transform_reflects_the_soliton() {
        let q = quintic();
        let grid = SpatialGrid::new(1, 30.0, 4096).unwrap();
        let spec = SolitonSpec::line(1.0, 0.4, 1.5, 0.0).unwrap();
        let wave = Wave::solitary(q, spec);
        let once = PseudoConformal {
            inner: wave,
            blowup_time: 0.0,
            dim: 1,
        };
        let t = -2.0;
        let twice = pseudo_conformal_transform(once, 0.0, t, &grid).unwrap();
        let reflected = Wave::solitary(q, SolitonSpec::line(1.0, -0.4, -1.5, 0.0).unwrap()).sample(t, &grid);
        let err = l2_norm(&twice.abs().sub(&reflected.abs()).unwrap());
        assert!(err < 1e-9, "{err:e}");
    }

    #[test]
    fn rescaled_profile_evaluates_consistently() {
        let q = cubic();
        let q2 = rescale(q, 2.0).unwrap();
        assert!((q2.value(1.0) - q.value_at(1.0, 2.0)).abs() < 1e-15);
    }

    #[test]
    fn family_validation() {
        let a = SolitonSpec::line(1.0, 1.0, 0.0, 0.0).unwrap();
        let b = SolitonSpec::line(1.0, 1.0, 5.0, 0.0).unwrap();
        assert!(validate_family(&[a, b]).is_err());
        assert!(SolitonSpec::line(0.0, 1.0, 0.0, 0.0).is_err());
        let mut params = ModulationParams::at_target(&[a], Mode::Subcritical);
        assert!(params.validate(&[a]).is_ok());
        params.solitons[0].frequency = 1.0 + 1e-15;
        assert!(params.validate(&[a]).is_err());
    }
}
