//! Positive radial ground state of `ΔQ − Q + Q^p = 0`, its rescalings
//! `Q_w(x) = w^{-2/(p-1)} Q(x/w)` and the identities they satisfy.
//!
//! The equation is solved by spectral renormalization on a periodic grid
//! (1D and 2D alike). The converged profile is stored as a fine radial table
//! of `(Q, Q', Q'')` and evaluated by cubic Hermite interpolation; below
//! `1e-12·Q(0)` the table switches to the asymptotic tail
//! `A r^{-(d-1)/2} e^{-r}`, which keeps the profile strictly positive.

use std::io::Write;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{self, Field, SpatialGrid};

const TAIL_THRESHOLD: f64 = 1e-12;
const MAX_ITERATIONS: usize = 5000;

/// Solver grid for each dimension: (half extent, points per axis).
fn solver_grid(dim: usize) -> (f64, usize) {
    if dim == 1 {
        (40.0, 16384)
    } else {
        (32.0, 512)
    }
}

/// Refinement factor applied to the 2D radial line by zero padding.
const LINE_REFINEMENT: usize = 16;

#[derive(Debug)]
struct RadialTable {
    dr: f64,
    q: Vec<f64>,
    dq: Vec<f64>,
    d2q: Vec<f64>,
    /// First index handled by the asymptotic tail.
    tail_start: usize,
    tail_amplitude: f64,
    dim: usize,
}

impl RadialTable {
    fn tail(&self, r: f64) -> (f64, f64, f64) {
        let nu = (self.dim as f64 - 1.0) / 2.0;
        let q = self.tail_amplitude * r.powf(-nu) * (-r).exp();
        let a = 1.0 + nu / r;
        (q, -q * a, q * (a * a + nu / (r * r)))
    }

    /// `(Q, Q', Q'')` at radius `r >= 0`.
    fn eval(&self, r: f64) -> (f64, f64, f64) {
        let r = r.abs();
        let x = r / self.dr;
        let j = x.floor() as usize;
        if j + 1 >= self.tail_start {
            return self.tail(r.max(self.dr));
        }
        let s = x - j as f64;
        let h = self.dr;
        let q = hermite(self.q[j], self.q[j + 1], self.dq[j] * h, self.dq[j + 1] * h, s);
        let dq = hermite(self.dq[j], self.dq[j + 1], self.d2q[j] * h, self.d2q[j + 1] * h, s);
        // Q'' is only needed at the accuracy of linear interpolation
        let d2q = self.d2q[j] * (1.0 - s) + self.d2q[j + 1] * s;
        (q, dq, d2q)
    }
}

#[inline]
fn hermite(y0: f64, y1: f64, m0: f64, m1: f64, s: f64) -> f64 {
    let s2 = s * s;
    let s3 = s2 * s;
    (2.0 * s3 - 3.0 * s2 + 1.0) * y0 + (s3 - 2.0 * s2 + s) * m0 + (-2.0 * s3 + 3.0 * s2) * y1 + (s3 - s2) * m1
}

/// Norms of a (possibly rescaled) profile.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileNorms {
    pub peak: f64,
    /// `‖Q‖²`
    pub mass: f64,
    /// `‖∇Q‖²`
    pub grad_sq: f64,
    /// `‖Q‖_{p+1}^{p+1}`
    pub power: f64,
    /// `‖ΛQ‖²` with `Λ = 2/(p-1) + x·∇`
    pub lambda_sq: f64,
    /// `‖x Q‖²`
    pub moment_sq: f64,
}

/// Fitted tail bound `Q(r) <= C e^{-δ r}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub prefactor: f64,
    pub rate: f64,
    /// LS intercept `exp(b)` of `log Q ≈ b − δ r` on the fit window.
    pub fitted_prefactor: f64,
    pub window: (f64, f64),
}

#[derive(Clone, Debug)]
pub struct GroundStateProfile {
    p: f64,
    dim: usize,
    scale: f64,
    table: Arc<RadialTable>,
    base: ProfileNorms,
    residual: f64,
    iterations: usize,
    decay: DecayFit,
}

/// Machine-readable summary written next to the profile CSV.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Certificate {
    pub p: f64,
    pub d: usize,
    pub w: f64,
    pub norms: ProfileNorms,
    pub ode_residual: f64,
    pub pohozaev_residual: f64,
    pub energy: f64,
    pub decay: DecayFit,
    pub iterations: usize,
}

/// `((p+1)/2)^{1/(p-1)} sech^{2/(p-1)}((p-1)x/2)`, the 1D ground state.
pub fn closed_form_1d(p: f64, x: f64) -> f64 {
    let a = ((p + 1.0) / 2.0).powf(1.0 / (p - 1.0));
    a * (1.0 / ((p - 1.0) * x / 2.0).cosh()).powf(2.0 / (p - 1.0))
}

pub fn critical_exponent(dim: usize) -> f64 {
    1.0 + 4.0 / dim as f64
}

pub fn is_critical(p: f64, dim: usize) -> bool {
    (p - critical_exponent(dim)).abs() < 1e-12
}

fn validate(p: f64, dim: usize) -> Result<()> {
    if !(1..=2).contains(&dim) {
        return Err(Error::invalid(format!("dimension must be 1 or 2, got {dim}")));
    }
    if !(p > 1.0 && p <= critical_exponent(dim) + 1e-12) {
        return Err(Error::invalid(format!(
            "exponent must satisfy 1 < p <= 1 + 4/d, got p = {p}, d = {dim}"
        )));
    }
    Ok(())
}

#[inline]
fn power_nonlinearity(q: f64, p: f64) -> f64 {
    q.abs().powf(p - 1.0) * q
}

/// Relative residual `‖ΔQ − Q + Q^p‖ / ‖Q‖` of a real field.
pub fn ode_residual(q: &Field, p: f64) -> f64 {
    let lap = spectral::laplacian(q);
    let res = Field::from_values(
        q.grid().clone(),
        lap.values()
            .iter()
            .zip(q.values())
            .map(|(l, z)| Complex64::new(l.re - z.re + power_nonlinearity(z.re, p), 0.0))
            .collect(),
    );
    spectral::l2_norm(&res) / spectral::l2_norm(q)
}

/// Spectral renormalization: `Q̂ ← M^γ (Q^p)^ / (1+|ξ|²)`, `γ = p/(p-1)`,
/// starting from a Gaussian.
fn renormalize(grid: &Arc<SpatialGrid>, p: f64, tol: f64) -> Result<(Field, usize, f64)> {
    let gamma = p / (p - 1.0);
    let ksq = grid.ksq().to_vec();
    let mut q: Vec<f64> = (0..grid.len())
        .map(|i| {
            let x = grid.point(i);
            (-(x[0] * x[0] + x[1] * x[1])).exp()
        })
        .collect();
    let mut buf = vec![Complex64::new(0.0, 0.0); grid.len()];
    let mut nl = vec![Complex64::new(0.0, 0.0); grid.len()];
    let mut last = f64::INFINITY;
    for iter in 1..=MAX_ITERATIONS {
        for (b, &v) in buf.iter_mut().zip(&q) {
            *b = Complex64::new(v, 0.0);
        }
        for (b, &v) in nl.iter_mut().zip(&q) {
            *b = Complex64::new(power_nonlinearity(v, p), 0.0);
        }
        grid.forward(&mut buf);
        grid.forward(&mut nl);
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..buf.len() {
            num += (1.0 + ksq[i]) * buf[i].norm_sqr();
            den += (nl[i] * buf[i].conj()).re;
        }
        if !(den > 0.0) {
            return Err(Error::NonConvergence {
                what: "ground-state renormalization".into(),
                residual: last,
            });
        }
        let factor = (num / den).powf(gamma);
        for i in 0..nl.len() {
            nl[i] *= factor / (1.0 + ksq[i]);
        }
        grid.inverse(&mut nl);
        let mut diff = 0.0;
        let mut norm = 0.0;
        for (old, new) in q.iter_mut().zip(&nl) {
            diff += (new.re - *old).powi(2);
            norm += new.re * new.re;
            *old = new.re;
        }
        let change = (diff / norm).sqrt();
        if !change.is_finite() {
            return Err(Error::NonConvergence {
                what: "ground-state renormalization".into(),
                residual: change,
            });
        }
        if change < tol {
            let field = Field::from_values(grid.clone(), q.iter().map(|&v| Complex64::new(v, 0.0)).collect());
            let res = ode_residual(&field, p);
            if res < tol || change < 1e-15 {
                return Ok((field, iter, res));
            }
        }
        last = change;
    }
    Err(Error::NonConvergence {
        what: "ground-state renormalization".into(),
        residual: last,
    })
}

/// Solve for the ground state. `tol` bounds both the fixed-point change and
/// the relative ODE residual.
pub fn solve_ground_state(p: f64, dim: usize, tol: f64) -> Result<GroundStateProfile> {
    validate(p, dim)?;
    if !(tol > 0.0) {
        return Err(Error::invalid("tolerance must be positive"));
    }
    let (half_extent, n) = solver_grid(dim);
    let grid = SpatialGrid::new(dim, half_extent, n)?;
    let (q, iterations, residual) = renormalize(&grid, p, tol)?;
    if residual > tol.max(1e-10) * 10.0 {
        return Err(Error::NonConvergence {
            what: "ground-state residual".into(),
            residual,
        });
    }
    let base = grid_norms(&q, p);
    let table = Arc::new(radial_table(&q)?);
    let mut profile = GroundStateProfile {
        p,
        dim,
        scale: 1.0,
        table,
        base,
        residual,
        iterations,
        decay: DecayFit {
            prefactor: 0.0,
            rate: 0.0,
            fitted_prefactor: 0.0,
            window: (0.0, 0.0),
        },
    };
    profile.decay = fit_decay(&profile)?;
    Ok(profile)
}

fn grid_norms(q: &Field, p: f64) -> ProfileNorms {
    let grid = q.grid();
    let mass = spectral::l2_norm_sq(q);
    let grad_sq = spectral::grad_norm_sq(q);
    let power = spectral::integrate(q, |z| z.re.abs().powf(p + 1.0));
    let grad = spectral::gradient(q);
    let beta = 2.0 / (p - 1.0);
    let mut lambda_sq = 0.0;
    let mut moment_sq = 0.0;
    for i in 0..grid.len() {
        let x = grid.point(i);
        let mut lq = beta * q.values()[i].re;
        for (a, g) in grad.iter().enumerate() {
            lq += x[a] * g.values()[i].re;
        }
        lambda_sq += lq * lq;
        moment_sq += (x[0] * x[0] + x[1] * x[1]) * q.values()[i].re.powi(2);
    }
    let vol = grid.cell_volume();
    let peak = q.values().iter().map(|z| z.re).fold(0.0, f64::max);
    ProfileNorms {
        peak,
        mass,
        grad_sq,
        power,
        lambda_sq: lambda_sq * vol,
        moment_sq: moment_sq * vol,
    }
}

/// Extract `(Q, Q', Q'')` along the positive first axis. In 2D the line
/// spectrum (sum over the second wavenumber) is zero padded for a finer
/// radial spacing.
fn radial_table(q: &Field) -> Result<RadialTable> {
    let grid = q.grid();
    let n = grid.n();
    let (line_spec, line_grid) = if grid.dim() == 1 {
        (q.spectrum().to_vec(), grid.clone())
    } else {
        let spec = q.spectrum();
        let nf = n * LINE_REFINEMENT;
        let mut line = vec![Complex64::new(0.0, 0.0); nf];
        for k0 in 0..n {
            if k0 == n / 2 {
                continue;
            }
            // evaluate at the middle node x₂ = 0 (index n/2), phase (−1)^{k₁}
            let s: Complex64 = (0..n)
                .map(|k1| if k1 % 2 == 0 { spec[k0 * n + k1] } else { -spec[k0 * n + k1] })
                .sum();
            // normalization: 2D inverse has 1/n², the fine 1D inverse 1/nf
            let target = if k0 < n / 2 { k0 } else { nf - (n - k0) };
            line[target] = s * (nf as f64 / (n * n) as f64);
        }
        (line, SpatialGrid::new(1, grid.half_extent(), nf)?)
    };
    let line = Field::from_spectrum(line_grid.clone(), line_spec);
    let d1 = spectral::partial(&line, 0);
    let d2 = spectral::laplacian(&line);
    let nl = line_grid.n();
    let origin = nl / 2;
    let q0 = line.values()[origin].re;
    let count = nl - origin;
    let mut table = RadialTable {
        dr: line_grid.spacing(),
        q: Vec::with_capacity(count),
        dq: Vec::with_capacity(count),
        d2q: Vec::with_capacity(count),
        tail_start: count,
        tail_amplitude: 0.0,
        dim: grid.dim(),
    };
    for j in 0..count {
        table.q.push(line.values()[origin + j].re);
        table.dq.push(d1.values()[origin + j].re);
        table.d2q.push(d2.values()[origin + j].re);
    }
    table.dq[0] = 0.0;
    let cut = table
        .q
        .iter()
        .position(|&v| v < TAIL_THRESHOLD * q0)
        .ok_or_else(|| Error::insufficient("ground-state tail never reaches the cut-off"))?;
    let rc = cut as f64 * table.dr;
    let nu = (grid.dim() as f64 - 1.0) / 2.0;
    table.tail_amplitude = table.q[cut] * rc.powf(nu) * rc.exp();
    table.tail_start = cut;
    Ok(table)
}

impl GroundStateProfile {
    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Frequency parameter `w` of this rescaling (1 for the base profile).
    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn is_critical(&self) -> bool {
        is_critical(self.p, self.dim)
    }

    /// `2/(p-1)`, the amplitude scaling exponent.
    pub fn amplitude_exponent(&self) -> f64 {
        2.0 / (self.p - 1.0)
    }

    /// Relative ODE residual of the base solve.
    pub fn residual(&self) -> f64 {
        self.residual
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn decay(&self) -> DecayFit {
        self.decay
    }

    /// Norms of this (rescaled) profile, from the base norms by exact scaling.
    pub fn norms(&self) -> ProfileNorms {
        let w = self.scale;
        let d = self.dim as f64;
        let b = self.amplitude_exponent();
        let b0 = &self.base;
        ProfileNorms {
            peak: b0.peak * w.powf(-b),
            mass: b0.mass * w.powf(d - 2.0 * b),
            grad_sq: b0.grad_sq * w.powf(d - 2.0 - 2.0 * b),
            power: b0.power * w.powf(d - (self.p + 1.0) * b),
            lambda_sq: b0.lambda_sq * w.powf(d - 2.0 * b),
            moment_sq: b0.moment_sq * w.powf(d + 2.0 - 2.0 * b),
        }
    }

    /// `Q_w(r)`.
    pub fn value(&self, r: f64) -> f64 {
        self.value_at(r, 1.0)
    }

    /// Value of the profile rescaled once more by `w`.
    pub fn value_at(&self, r: f64, w: f64) -> f64 {
        let w = self.scale * w;
        self.table.eval(r / w).0 * w.powf(-self.amplitude_exponent())
    }

    /// `(Q_w, Q_w', Q_w'')` as functions of the radius.
    pub fn radial_jet(&self, r: f64) -> (f64, f64, f64) {
        self.radial_jet_at(r, 1.0)
    }

    /// Radial jet of the profile rescaled once more by `w`.
    pub fn radial_jet_at(&self, r: f64, w: f64) -> (f64, f64, f64) {
        let w = self.scale * w;
        let a = w.powf(-self.amplitude_exponent());
        let (q, dq, d2q) = self.table.eval(r / w);
        (a * q, a * dq / w, a * d2q / (w * w))
    }

    /// Largest radius covered by the interpolation table (base scale times w).
    pub fn table_radius(&self) -> f64 {
        self.table.tail_start as f64 * self.table.dr * self.scale
    }

    /// Sample `Q_w(x - center)` on a grid.
    pub fn sample(&self, grid: &Arc<SpatialGrid>, center: [f64; 2]) -> Field {
        grid.sample_real(|x| {
            let r = ((x[0] - center[0]).powi(2) + (x[1] - center[1]).powi(2)).sqrt();
            self.value(r)
        })
    }

    /// `‖Q_w‖_{L²}`.
    pub fn l2_norm(&self) -> f64 {
        self.norms().mass.sqrt()
    }

    /// `E(Q_w) = ½‖∇Q_w‖² − ‖Q_w‖_{p+1}^{p+1}/(p+1)`.
    pub fn energy(&self) -> f64 {
        let n = self.norms();
        0.5 * n.grad_sq - n.power / (self.p + 1.0)
    }

    pub fn certificate(&self) -> Certificate {
        Certificate {
            p: self.p,
            d: self.dim,
            w: self.scale,
            norms: self.norms(),
            ode_residual: self.residual,
            pohozaev_residual: pohozaev_residual(self),
            energy: self.energy(),
            decay: self.decay,
            iterations: self.iterations,
        }
    }

    /// `(r, Q_w(r))` on the table nodes out to `r_max`.
    pub fn write_csv<W: Write>(&self, mut w: W, r_max: f64) -> Result<()> {
        writeln!(w, "r,q")?;
        let dr = self.table.dr * self.scale;
        let count = (r_max / dr).floor() as usize;
        let stride = (count / 4000).max(1);
        for j in (0..=count).step_by(stride) {
            let r = j as f64 * dr;
            writeln!(w, "{r},{}", self.value(r))?;
        }
        Ok(())
    }
}

/// `Q_w(x) = w^{-2/(p-1)} Q(x/w)`; composes multiplicatively in `w`.
pub fn rescale(q: &GroundStateProfile, w: f64) -> Result<GroundStateProfile> {
    if !(w > 0.0 && w.is_finite()) {
        return Err(Error::invalid(format!("rescaling parameter must be positive, got {w}")));
    }
    let mut out = q.clone();
    out.scale = q.scale * w;
    out.decay = fit_decay(&out)?;
    Ok(out)
}

/// Relative defect in the Pohozaev identity
/// `(d−2)‖∇Q‖² + d‖Q‖² = 2d/(p+1) ‖Q‖_{p+1}^{p+1}` (base profile).
pub fn pohozaev_residual(q: &GroundStateProfile) -> f64 {
    pohozaev_from_norms(&q.base, q.p, q.dim)
}

pub fn pohozaev_from_norms(n: &ProfileNorms, p: f64, dim: usize) -> f64 {
    let d = dim as f64;
    ((d - 2.0) * n.grad_sq + d * n.mass - 2.0 * d / (p + 1.0) * n.power).abs() / n.mass
}

/// Least-squares slope of `log Q` on the window where `Q` falls from
/// `1e-3·Q(0)` to `1e-10·Q(0)`. The reported prefactor is the smallest `C`
/// with `Q(r) <= C e^{-δr}` over the sampled radii.
pub fn fit_decay(q: &GroundStateProfile) -> Result<DecayFit> {
    let dr = q.table.dr * q.scale;
    let peak = q.value(0.0);
    let mut samples = Vec::new();
    let mut all = Vec::new();
    let mut r0 = None;
    let mut r1 = None;
    let mut j = 0usize;
    loop {
        let r = j as f64 * dr;
        let v = q.value(r);
        if v <= 0.0 || !v.is_finite() {
            break;
        }
        all.push((r, v));
        if v < 1e-3 * peak {
            r0.get_or_insert(r);
            if v < 1e-10 * peak {
                r1.get_or_insert(r);
                if v < 1e-14 * peak {
                    break;
                }
            } else {
                samples.push((r, v.ln()));
            }
        }
        if r > 1e3 * q.scale {
            break;
        }
        j += 1;
    }
    let (Some(r0), Some(r1)) = (r0, r1) else {
        return Err(Error::insufficient("profile tail lacks the dynamic range for a decay fit"));
    };
    if samples.len() < 10 {
        return Err(Error::insufficient("too few tail samples for a decay fit"));
    }
    let (slope, intercept, _) = crate::fit::linear_fit(&samples).ok_or_else(|| Error::insufficient("degenerate decay fit"))?;
    let rate = -slope;
    let prefactor = all.iter().map(|&(r, v)| v * (rate * r).exp()).fold(0.0, f64::max);
    Ok(DecayFit {
        prefactor,
        rate,
        fitted_prefactor: intercept.exp(),
        window: (r0, r1),
    })
}
