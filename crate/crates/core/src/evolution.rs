//! Split-step integrators for the deterministic, random and stochastic
//! equations, the exponential transforms between them and the pathwise
//! equivalence check.

use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::{integer_ratio, Coefficients, NoiseModel};
use crate::spectral::{grad_norm_sq, l2_inner, l2_norm, Field, SpatialGrid};

/// Largest admissible time step.
pub const MAX_DT: f64 = 1e-2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    /// `du = iΔu dt + i|u|^{p−1}u dt`.
    #[serde(rename = "nls")]
    Nls,
    /// Random equation for `v = e^{−W}X`.
    #[serde(rename = "rnls-b-c")]
    RnlsBC,
    /// Random equation for `u = e^{−W★}X`.
    #[serde(rename = "rnls-bstar-cstar")]
    RnlsBstarCstar,
    /// The stochastic equation for `X` itself.
    #[serde(rename = "snls-direct")]
    SnlsDirect,
}

impl Variant {
    pub fn needs_noise(self) -> bool {
        !matches!(self, Variant::Nls)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Backward,
}

/// How Strang substeps are composed into one step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Splitting {
    /// A single Strang step.
    Strang,
    /// Symmetric fourth-order triple jump of Strang steps.
    #[default]
    TripleJump,
}

impl Splitting {
    /// Fractions of the step taken by successive Strang substeps.
    fn fractions(self) -> Vec<f64> {
        match self {
            Splitting::Strang => vec![1.0],
            Splitting::TripleJump => {
                let c = 2f64.cbrt();
                let outer = 1.0 / (2.0 - c);
                vec![outer, -c * outer, outer]
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvolutionConfig {
    pub variant: Variant,
    pub p: f64,
    pub dt: f64,
    pub direction: Direction,
    #[serde(default)]
    pub dealias: bool,
    #[serde(default)]
    pub splitting: Splitting,
    /// Midpoint substeps of the lower-order flow per step.
    #[serde(default = "default_substeps")]
    pub substeps: usize,
    /// Amplitude above which a state counts as blown up.
    #[serde(default = "default_blowup_amplitude")]
    pub blowup_amplitude: f64,
}

fn default_substeps() -> usize {
    4
}

fn default_blowup_amplitude() -> f64 {
    1e6
}

impl EvolutionConfig {
    pub fn new(variant: Variant, p: f64, dt: f64, direction: Direction) -> Self {
        Self {
            variant,
            p,
            dt,
            direction,
            dealias: false,
            splitting: Splitting::default(),
            substeps: default_substeps(),
            blowup_amplitude: default_blowup_amplitude(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt <= MAX_DT) {
            return Err(Error::invalid(format!("time step must lie in (0, {MAX_DT}], got {}", self.dt)));
        }
        if !(self.p > 1.0) {
            return Err(Error::invalid(format!("nonlinearity exponent must exceed 1, got {}", self.p)));
        }
        if self.substeps == 0 {
            return Err(Error::invalid("at least one lower-order substep is required"));
        }
        Ok(())
    }

    /// `±dt` according to the direction.
    pub fn signed_dt(&self) -> f64 {
        match self.direction {
            Direction::Forward => self.dt,
            Direction::Backward => -self.dt,
        }
    }
}

/// One configured integrator on a fixed grid.
pub struct Stepper {
    cfg: EvolutionConfig,
    grid: Arc<SpatialGrid>,
    noise: Option<Arc<NoiseModel>>,
    /// Per Strang substep: its signed length with the full and half linear
    /// propagators.
    stages: Vec<(f64, Vec<Complex64>, Vec<Complex64>)>,
}

impl Stepper {
    pub fn new(cfg: EvolutionConfig, grid: Arc<SpatialGrid>, noise: Option<Arc<NoiseModel>>) -> Result<Self> {
        cfg.validate()?;
        if cfg.variant.needs_noise() {
            let model = noise
                .as_ref()
                .ok_or_else(|| Error::invalid(format!("variant {:?} needs a noise model", cfg.variant)))?;
            if !model.grid().same_as(&grid) {
                return Err(Error::GridMismatch);
            }
            // midpoints must be drive nodes
            if !model.is_silent() && integer_ratio(cfg.dt / 2.0, model.drive().fine_step()).is_none() {
                return Err(Error::invalid("half the time step must be a multiple of the drive's fine step"));
            }
        }
        let h = cfg.signed_dt();
        let propagator = |s: f64| -> Vec<Complex64> { grid.ksq().iter().map(|&k2| Complex64::from_polar(1.0, -s * k2)).collect() };
        let stages = cfg
            .splitting
            .fractions()
            .into_iter()
            .map(|f| (f * h, propagator(f * h), propagator(f * h / 2.0)))
            .collect();
        Ok(Self {
            stages,
            cfg,
            grid,
            noise,
        })
    }

    pub fn config(&self) -> &EvolutionConfig {
        &self.cfg
    }

    pub fn grid(&self) -> &Arc<SpatialGrid> {
        &self.grid
    }

    pub fn noise(&self) -> Option<&Arc<NoiseModel>> {
        self.noise.as_ref()
    }

    pub fn signed_dt(&self) -> f64 {
        self.cfg.signed_dt()
    }

    fn nonlinear(&self, u: &mut [Complex64], s: f64) {
        let q = (self.cfg.p - 1.0) / 2.0;
        for z in u.iter_mut() {
            let r2 = z.norm_sqr();
            let amp = if q == 1.0 { r2 } else { r2.powf(q) };
            *z *= Complex64::from_polar(1.0, s * amp);
        }
    }

    fn linear(&self, u: &mut [Complex64], propagator: &[Complex64]) {
        self.grid.forward(u);
        for (z, &e) in u.iter_mut().zip(propagator) {
            *z *= e;
        }
        self.grid.inverse(u);
    }

    /// `i(b·∇v + cv)`.
    fn lower_order_rhs(&self, v: &[Complex64], coef: &Coefficients, out: &mut [Complex64]) {
        let i = Complex64::new(0.0, 1.0);
        for ((o, &z), &c) in out.iter_mut().zip(v).zip(coef.c.values()) {
            *o = c * z;
        }
        let mut spec = v.to_vec();
        self.grid.forward(&mut spec);
        let mut d = vec![Complex64::new(0.0, 0.0); v.len()];
        for (axis, b) in coef.b.iter().enumerate() {
            for (idx, (dz, &z)) in d.iter_mut().zip(&spec).enumerate() {
                *dz = z * Complex64::new(0.0, self.grid.wavevector(idx)[axis]);
            }
            self.grid.inverse(&mut d);
            for ((o, &dz), &bz) in out.iter_mut().zip(&d).zip(b.values()) {
                *o += bz * dz;
            }
        }
        for o in out.iter_mut() {
            *o *= i;
        }
    }

    /// Explicit midpoint steps of `∂_t v = i(b·∇ + c)v` over `h`.
    fn lower_order(&self, v: &mut [Complex64], coef: &Coefficients, h: f64) {
        let m = self.cfg.substeps;
        let hs = h / m as f64;
        let mut k = vec![Complex64::new(0.0, 0.0); v.len()];
        let mut mid = vec![Complex64::new(0.0, 0.0); v.len()];
        for _ in 0..m {
            self.lower_order_rhs(v, coef, &mut k);
            for ((mz, &z), &kz) in mid.iter_mut().zip(v.iter()).zip(&k) {
                *mz = z + kz * (hs / 2.0);
            }
            self.lower_order_rhs(&mid, coef, &mut k);
            for (z, &kz) in v.iter_mut().zip(&k) {
                *z += kz * hs;
            }
        }
    }

    fn multiply_phase(&self, u: &mut [Complex64], model: &NoiseModel, weights: &[f64]) {
        let exponent = model.exponent(weights);
        for (z, w) in u.iter_mut().zip(exponent.values()) {
            *z *= Complex64::from_polar(1.0, w.im);
        }
    }

    fn model(&self) -> &NoiseModel {
        self.noise.as_deref().expect("noise model checked at construction")
    }

    /// Advance `u` from `t` to `t ± dt`.
    pub fn step(&self, u: &Field, t: f64) -> Result<Field> {
        if !u.grid().same_as(&self.grid) {
            return Err(Error::GridMismatch);
        }
        let h = self.signed_dt();
        let mid = t + h / 2.0;
        let mut buf = u.values().to_vec();
        match self.cfg.variant {
            Variant::Nls => self.composed(&mut buf, None),
            Variant::SnlsDirect => {
                let model = self.model();
                let increments = |a: f64, b: f64| -> Result<Vec<f64>> { (0..model.count()).map(|l| model.increment(l, a, b)).collect() };
                let before = increments(t, mid)?;
                let after = increments(mid, t + h)?;
                self.multiply_phase(&mut buf, model, &before);
                self.composed(&mut buf, None);
                self.multiply_phase(&mut buf, model, &after);
            }
            Variant::RnlsBC | Variant::RnlsBstarCstar => {
                let model = self.model();
                if model.is_silent() {
                    self.composed(&mut buf, None);
                } else {
                    let weights = if self.cfg.variant == Variant::RnlsBC {
                        model.weights_w(mid)?
                    } else {
                        model.weights_wstar(mid)?
                    };
                    self.composed(&mut buf, Some(&model.lower_order(&weights)));
                }
            }
        }
        if self.cfg.dealias {
            self.grid.forward(&mut buf);
            for (z, &keep) in buf.iter_mut().zip(self.grid.dealias_mask()) {
                if !keep {
                    *z = Complex64::new(0.0, 0.0);
                }
            }
            self.grid.inverse(&mut buf);
        }
        let out = Field::from_values(self.grid.clone(), buf);
        if !out.is_finite() || out.max_abs() > self.cfg.blowup_amplitude {
            return Err(Error::BlowUp {
                t: t + h,
                grad_norm: grad_norm_sq(u).sqrt(),
            });
        }
        Ok(out)
    }

    /// Strang substeps `N(s/2) L(s) N(s/2)`; with lower-order coefficients
    /// the linear part becomes `L(s/2) LO(s) L(s/2)`.
    fn composed(&self, buf: &mut [Complex64], coef: Option<&Coefficients>) {
        for (s, full, half) in &self.stages {
            self.nonlinear(buf, s / 2.0);
            match coef {
                None => self.linear(buf, full),
                Some(coef) => {
                    self.linear(buf, half);
                    self.lower_order(buf, coef, *s);
                    self.linear(buf, half);
                }
            }
            self.nonlinear(buf, s / 2.0);
        }
    }

    /// Take `steps` steps from `t0`, calling `observer(step_index, t, state)`
    /// after each one (and once with index 0 for the initial state).
    pub fn evolve<F>(&self, u0: &Field, t0: f64, steps: usize, mut observer: F) -> Result<Field>
    where
        F: FnMut(usize, f64, &Field) -> Result<()>,
    {
        let h = self.signed_dt();
        observer(0, t0, u0)?;
        let mut u = u0.clone();
        for n in 0..steps {
            let t = t0 + n as f64 * h;
            u = self.step(&u, t)?;
            observer(n + 1, t0 + (n + 1) as f64 * h, &u)?;
        }
        Ok(u)
    }
}

/// Number of steps of size `dt` between two times.
pub fn step_count(t0: f64, t1: f64, dt: f64) -> Result<usize> {
    let span = (t1 - t0).abs();
    if span == 0.0 {
        return Ok(0);
    }
    integer_ratio(span, dt).ok_or_else(|| Error::invalid(format!("interval length {span} is not a multiple of dt = {dt}")))
}

/// Single step without keeping a stepper around.
pub fn step(u: &Field, t: f64, cfg: &EvolutionConfig, noise: Option<&Arc<NoiseModel>>) -> Result<Field> {
    Stepper::new(*cfg, u.grid().clone(), noise.cloned())?.step(u, t)
}

fn check_imaginary(w: &Field) -> Result<()> {
    let worst = w.values().iter().map(|z| z.re.abs()).fold(0.0, f64::max);
    if worst > 1e-12 {
        return Err(Error::invalid(format!("transform exponent has real part {worst:.3e}")));
    }
    Ok(())
}

/// `e^{−W}X` for a purely imaginary exponent `W`.
pub fn doss_sussman(x: &Field, w: &Field) -> Result<Field> {
    check_imaginary(w)?;
    x.zip_with(w, |a, b| a * Complex64::from_polar(1.0, -b.im))
}

/// `e^{W}v`, the inverse of [`doss_sussman`].
pub fn doss_sussman_inverse(v: &Field, w: &Field) -> Result<Field> {
    check_imaginary(w)?;
    v.zip_with(w, |a, b| a * Complex64::from_polar(1.0, b.im))
}

#[derive(Clone, Debug, PartialEq)]
pub struct EquivalenceReport {
    /// `max_t ‖X(t) − e^{W(t)}v(t)‖_{L²}`.
    pub residual: f64,
    pub steps: usize,
    /// `max_t |‖X(t)‖² − ‖X(t₀)‖²| / ‖X(t₀)‖²` along the direct branch.
    pub mass_drift: f64,
}

/// Evolve `X` directly and `v = e^{−W}X` through the random equation on
/// `[t0, t1]` with the same drive, and compare.
pub fn equivalence_residual(model: &Arc<NoiseModel>, cfg: &EvolutionConfig, x0: &Field, t0: f64, t1: f64) -> Result<EquivalenceReport> {
    let grid = x0.grid().clone();
    let mut direct_cfg = *cfg;
    direct_cfg.variant = Variant::SnlsDirect;
    direct_cfg.direction = Direction::Forward;
    let mut random_cfg = direct_cfg;
    random_cfg.variant = Variant::RnlsBC;
    let direct = Stepper::new(direct_cfg, grid.clone(), Some(model.clone()))?;
    let random = Stepper::new(random_cfg, grid, Some(model.clone()))?;
    let steps = step_count(t0, t1, cfg.dt)?;
    let mut x = x0.clone();
    let mut v = doss_sussman(x0, &model.assemble_w(t0)?)?;
    let mass0 = l2_norm(x0).powi(2);
    let mut residual: f64 = 0.0;
    let mut mass_drift: f64 = 0.0;
    for n in 0..steps {
        let t = t0 + n as f64 * cfg.dt;
        x = direct.step(&x, t)?;
        v = random.step(&v, t)?;
        let t_next = t0 + (n + 1) as f64 * cfg.dt;
        let back = doss_sussman_inverse(&v, &model.assemble_w(t_next)?)?;
        residual = residual.max(l2_norm(&x.sub(&back)?));
        mass_drift = mass_drift.max((l2_norm(&x).powi(2) - mass0).abs() / mass0);
    }
    Ok(EquivalenceReport {
        residual,
        steps,
        mass_drift,
    })
}

/// States of a run on the diagnostics mesh.
#[derive(Clone, Debug, Default)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Field>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> Option<(f64, &Field)> {
        self.times.last().copied().zip(self.states.last())
    }
}

/// Integrate backward from `u(t_n)` down to `t0`, keeping every
/// `sample_every`-th state (the first and last are always kept).
pub fn backward_solve(stepper: &Stepper, u_tn: &Field, t_n: f64, t0: f64, sample_every: usize) -> Result<Trajectory> {
    if stepper.config().direction != Direction::Backward || t0 >= t_n {
        return Err(Error::invalid("backward solve needs a backward stepper and t0 < t_n"));
    }
    let steps = step_count(t0, t_n, stepper.config().dt)?;
    let every = sample_every.max(1);
    let mut traj = Trajectory::default();
    stepper.evolve(u_tn, t_n, steps, |n, t, u| {
        if n % every == 0 || n == steps {
            traj.times.push(t);
            traj.states.push(u.clone());
        }
        Ok(())
    })?;
    Ok(traj)
}

/// Real-valued band-limited test functions with a Gaussian window, used for
/// weak-form pairings.
pub fn band_limited_tests(grid: &Arc<SpatialGrid>, count: usize, max_mode: usize, seed: u64) -> Vec<Field> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let two_l = 2.0 * grid.half_extent();
    let width = grid.half_extent() / 3.0;
    (0..count)
        .map(|_| {
            let modes: Vec<(f64, f64, f64)> = (0..=max_mode)
                .map(|m| (2.0 * std::f64::consts::PI * m as f64 / two_l, rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                .collect();
            let centre: f64 = rng.random_range(-0.5..0.5) * grid.half_extent();
            grid.sample_real(|x| {
                let s: f64 = modes.iter().map(|&(k, a, b)| a * (k * x[0]).cos() + b * (k * x[0]).sin()).sum();
                s * (-((x[0] - centre) / width).powi(2) - (x[1] / width).powi(2)).exp()
            })
        })
        .collect()
}

/// Largest one-step defect of the weak formulation along a stored direct
/// trajectory: the pairing increment `⟨X(t+dt) − X(t), ϕ⟩` minus the drift,
/// the `δB` terms and the `𝔹` compensation, all frozen at `t`.
pub fn weak_form_defect(model: &NoiseModel, p: f64, traj: &Trajectory, tests: &[Field]) -> Result<f64> {
    let drive = model.drive();
    let geo = model.geometry();
    let count = model.count();
    let i = Complex64::new(0.0, 1.0);
    let mut worst: f64 = 0.0;
    for (pair, states) in traj.states.windows(2).enumerate() {
        let (s, t) = (traj.times[pair], traj.times[pair + 1]);
        let (is, it) = (drive.index_of(s)?, drive.index_of(t)?);
        let x = &states[0];
        let g = model.profile().value(s);
        let lap = crate::spectral::laplacian(x);
        let mu = model.mu_field(s);
        let drift = x.zip_with(&lap, |_, l| i * l)?;
        let nonlinear = x.map(|z| i * z * z.norm().powf(p - 1.0));
        let damped = x.mul(&mu)?;
        let phi_x: Vec<Field> = (0..count)
            .map(|l| {
                let phi = geo.phi(l);
                let vals = x.values().iter().zip(phi).map(|(&z, &f)| z * f).collect();
                Field::from_values(x.grid().clone(), vals)
            })
            .collect();
        for test in tests {
            let mut defect = l2_inner(&states[1], test)? - l2_inner(x, test)?;
            let rate = l2_inner(&drift, test)? + l2_inner(&nonlinear, test)? - l2_inner(&damped, test)?;
            defect -= rate * (t - s);
            for k in 0..count {
                defect -= i * g * l2_inner(&phi_x[k], test)? * drive.increment(k, is, it);
                for j in 0..count {
                    let pairing = l2_inner(&phi_x[k], &Field::from_values(x.grid().clone(), geo.phi(j).iter().zip(test.values()).map(|(&f, &v)| v * f).collect()))?;
                    defect += g * g * pairing * drive.iterated(j, k, is, it);
                }
            }
            worst = worst.max(defect.norm());
        }
    }
    Ok(worst)
}
