//! Geometrical decomposition `u = Σ R̃_k + ε` and modulation speeds.
//!
//! Per soliton the unknowns are laid out as `[α_1..α_d, θ, w]` and the
//! constraints as `[Re⟨∂_jR̃, ε⟩, Im⟨R̃, ε⟩, Re⟨ΛQ_w(y)e^{iΦ}, ε⟩]`; the
//! subcritical mode drops the last entry of both.

use std::f64::consts::PI;
use std::io::Write;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fit::{fit_envelope, rate_grid, EnvelopeFit};
use crate::ground_state::GroundStateProfile;
use crate::soliton::{validate_family, Mode, ModulationParams, SolitonParams, SolitonSpec, Wave, WaveJet};
use crate::spectral::{h1_norm, l2_norm, real_inner, Field, SpatialGrid};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecomposeOptions {
    /// Converged once `|F| < tolerance·‖Q‖²`.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Step halvings tried when `|F|` fails to decrease.
    pub max_halvings: usize,
    /// Largest admissible `‖u − ΣR̃(guess)‖_{L²}` in units of `‖Q‖_{L²}`.
    pub max_distance: f64,
    /// Relative step of the central differences in the Jacobian correction.
    pub fd_step: f64,
    /// Smallest accepted ratio of extreme singular values of the Jacobian.
    pub min_singular: f64,
}

impl Default for DecomposeOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            max_iterations: 50,
            max_halvings: 8,
            max_distance: 0.5,
            fd_step: 1e-5,
            min_singular: 1e-10,
        }
    }
}

#[derive(Clone, Debug)]
pub struct DecompositionState {
    pub t: f64,
    pub params: ModulationParams,
    pub eps: Field,
    /// `|F|` at the returned parameters.
    pub residual: f64,
    pub iterations: usize,
    pub jacobian: DMatrix<f64>,
    pub determinant: f64,
}

impl DecompositionState {
    pub fn eps_l2(&self) -> f64 {
        l2_norm(&self.eps)
    }

    pub fn eps_h1(&self) -> f64 {
        h1_norm(&self.eps)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JacobianSpectrum {
    pub determinant: f64,
    pub min_singular: f64,
    pub max_singular: f64,
}

pub fn unknowns_per_soliton(mode: Mode, dim: usize) -> usize {
    dim + 1 + usize::from(mode == Mode::Critical)
}

/// Representative of `θ` in `(−π, π]`.
pub fn wrap_phase(theta: f64) -> f64 {
    let r = theta.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

/// Directions `E_a` such that constraint `a` reads `Re⟨E_a, ε⟩`.
fn directions(jet: &WaveJet, mode: Mode) -> Vec<Field> {
    let mut out = jet.spatial_gradient.clone();
    // Im⟨R̃, ε⟩ = Re⟨−iR̃, ε⟩
    out.push(jet.value.scale(Complex64::new(0.0, -1.0)));
    if mode == Mode::Critical {
        out.push(jet.lambda_dir.clone());
    }
    out
}

/// `∂R̃/∂P_b` in the unknown layout.
fn derivatives(jet: &WaveJet, mode: Mode) -> Vec<&Field> {
    let mut out: Vec<&Field> = jet.d_translation.iter().collect();
    out.push(&jet.d_phase);
    if mode == Mode::Critical {
        out.push(&jet.d_frequency);
    }
    out
}

struct Problem<'a> {
    u: &'a Field,
    t: f64,
    profile: &'a GroundStateProfile,
    specs: &'a [SolitonSpec],
    mode: Mode,
    dim: usize,
}

impl Problem<'_> {
    fn grid(&self) -> &Arc<SpatialGrid> {
        self.u.grid()
    }

    fn per(&self) -> usize {
        unknowns_per_soliton(self.mode, self.dim)
    }

    fn jet(&self, k: usize, p: SolitonParams) -> WaveJet {
        Wave::modulated(self.profile, self.specs[k], p).sample_jet(self.t, self.grid())
    }

    fn jets(&self, params: &ModulationParams) -> Vec<WaveJet> {
        params.solitons.iter().enumerate().map(|(k, p)| self.jet(k, *p)).collect()
    }

    fn remainder(&self, jets: &[WaveJet]) -> Result<Field> {
        jets.iter().try_fold(self.u.clone(), |acc, j| acc.sub(&j.value))
    }

    fn constraints(&self, jets: &[WaveJet], eps: &Field) -> Result<DVector<f64>> {
        let mut f = Vec::with_capacity(jets.len() * self.per());
        for jet in jets {
            for e in directions(jet, self.mode) {
                f.push(real_inner(&e, eps)?);
            }
        }
        Ok(DVector::from_vec(f))
    }

    fn pack(&self, params: &ModulationParams) -> DVector<f64> {
        let mut x = Vec::with_capacity(params.solitons.len() * self.per());
        for p in &params.solitons {
            x.extend_from_slice(&p.translation[..self.dim]);
            x.push(p.phase);
            if self.mode == Mode::Critical {
                x.push(p.frequency);
            }
        }
        DVector::from_vec(x)
    }

    fn unpack(&self, x: &DVector<f64>) -> ModulationParams {
        let per = self.per();
        let solitons = self
            .specs
            .iter()
            .enumerate()
            .map(|(k, spec)| {
                let s = &x.as_slice()[k * per..(k + 1) * per];
                let mut translation = [0.0; 2];
                translation[..self.dim].copy_from_slice(&s[..self.dim]);
                SolitonParams {
                    translation,
                    phase: s[self.dim],
                    frequency: match self.mode {
                        Mode::Critical => s[self.dim + 1],
                        Mode::Subcritical => spec.frequency,
                    },
                }
            })
            .collect();
        ModulationParams {
            mode: self.mode,
            solitons,
        }
    }

    /// `∂F_a/∂P_b = Re⟨∂_bE_a, ε⟩ − Re⟨E_a, ∂_bR̃⟩`. The second term is
    /// analytic; the first is a central difference of the own-soliton
    /// directions.
    fn jacobian(&self, params: &ModulationParams, jets: &[WaveJet], eps: &Field, fd_step: f64) -> Result<DMatrix<f64>> {
        let per = self.per();
        let n = jets.len() * per;
        let mut jac = DMatrix::zeros(n, n);
        let dirs: Vec<Vec<Field>> = jets.iter().map(|j| directions(j, self.mode)).collect();
        for (k, row_dirs) in dirs.iter().enumerate() {
            for (j, jet) in jets.iter().enumerate() {
                for (b, d) in derivatives(jet, self.mode).into_iter().enumerate() {
                    for (a, e) in row_dirs.iter().enumerate() {
                        jac[(k * per + a, j * per + b)] = -real_inner(e, d)?;
                    }
                }
            }
        }
        if eps.values().iter().all(|z| *z == Complex64::new(0.0, 0.0)) {
            return Ok(jac);
        }
        for (k, p) in params.solitons.iter().enumerate() {
            for b in 0..per {
                let h = if b == self.dim + 1 { fd_step * p.frequency } else { fd_step };
                let shifted = |sign: f64| {
                    let mut q = *p;
                    match b {
                        _ if b < self.dim => q.translation[b] += sign * h,
                        _ if b == self.dim => q.phase += sign * h,
                        _ => q.frequency += sign * h,
                    }
                    directions(&self.jet(k, q), self.mode)
                };
                let (plus, minus) = (shifted(1.0), shifted(-1.0));
                for a in 0..per {
                    let df = real_inner(&plus[a], eps)? - real_inner(&minus[a], eps)?;
                    jac[(k * per + a, k * per + b)] += df / (2.0 * h);
                }
            }
        }
        Ok(jac)
    }
}

fn singular_values(jac: &DMatrix<f64>) -> (f64, f64) {
    let sv = jac.clone().svd(false, false).singular_values;
    let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    let max = sv.iter().copied().fold(0.0, f64::max);
    (min, max)
}

/// Newton solve of the orthogonality conditions starting from `guess`.
pub fn decompose(
    u: &Field,
    t: f64,
    profile: &GroundStateProfile,
    specs: &[SolitonSpec],
    guess: &ModulationParams,
    opts: &DecomposeOptions,
) -> Result<DecompositionState> {
    validate_family(specs)?;
    guess.validate(specs)?;
    if profile.dim() != u.grid().dim() {
        return Err(Error::invalid("profile and field dimensions differ"));
    }
    let problem = Problem {
        u,
        t,
        profile,
        specs,
        mode: guess.mode,
        dim: u.grid().dim(),
    };
    let mass = profile.norms().mass;
    let tol = opts.tolerance * mass;

    let mut params = guess.clone();
    let mut jets = problem.jets(&params);
    let mut eps = problem.remainder(&jets)?;
    let distance = l2_norm(&eps);
    if distance > opts.max_distance * mass.sqrt() {
        return Err(Error::DecompositionLoss {
            t,
            residual: f64::NAN,
            eps_norm: distance,
        });
    }
    let mut f = problem.constraints(&jets, &eps)?;
    let mut residual = f.norm();
    let mut iterations = 0;
    // one extra step after reaching the tolerance polishes the fit
    let mut polish = true;
    loop {
        let jac = problem.jacobian(&params, &jets, &eps, opts.fd_step)?;
        let (smin, smax) = singular_values(&jac);
        if !(smin > opts.min_singular * smax) {
            return Err(Error::SingularJacobian { min_singular: smin });
        }
        if residual < tol && !polish {
            let determinant = jac.determinant();
            params.solitons.iter_mut().for_each(|p| p.phase = wrap_phase(p.phase));
            return Ok(DecompositionState {
                t,
                params,
                eps,
                residual,
                iterations,
                jacobian: jac,
                determinant,
            });
        }
        if residual < tol {
            polish = false;
        } else if iterations >= opts.max_iterations {
            return Err(Error::DecompositionLoss {
                t,
                residual,
                eps_norm: l2_norm(&eps),
            });
        }
        let step = jac
            .lu()
            .solve(&(-&f))
            .ok_or(Error::SingularJacobian { min_singular: smin })?;
        let x0 = problem.pack(&params);
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..=opts.max_halvings {
            let trial = problem.unpack(&(&x0 + &step * lambda));
            if trial.solitons.iter().all(|p| p.frequency > 0.0) {
                let trial_jets = problem.jets(&trial);
                let trial_eps = problem.remainder(&trial_jets)?;
                let trial_f = problem.constraints(&trial_jets, &trial_eps)?;
                let r = trial_f.norm();
                if r < residual {
                    (params, jets, eps, f, residual) = (trial, trial_jets, trial_eps, trial_f, r);
                    accepted = true;
                    break;
                }
            }
            lambda /= 2.0;
        }
        iterations += 1;
        if !accepted {
            if residual < tol {
                // polishing could not improve on a converged fit
                polish = false;
                continue;
            }
            return Err(Error::DecompositionLoss {
                t,
                residual,
                eps_norm: l2_norm(&eps),
            });
        }
    }
}

/// Constraint directions `E_a` at the given parameters, in constraint order.
pub fn constraint_directions(
    profile: &GroundStateProfile,
    specs: &[SolitonSpec],
    params: &ModulationParams,
    t: f64,
    grid: &Arc<SpatialGrid>,
) -> Vec<Field> {
    specs
        .iter()
        .zip(&params.solitons)
        .flat_map(|(s, p)| directions(&Wave::modulated(profile, *s, *p).sample_jet(t, grid), params.mode))
        .collect()
}

/// Remove the span of `directions` from `field` in the real inner product
/// `Re⟨·,·⟩` (modified Gram–Schmidt).
pub fn orthogonal_complement(field: &Field, directions: &[Field]) -> Result<Field> {
    let mut basis: Vec<Field> = Vec::with_capacity(directions.len());
    for d in directions {
        let mut e = d.clone();
        for b in &basis {
            let c = real_inner(&e, b)?;
            e = e.sub(&b.scale(Complex64::new(c, 0.0)))?;
        }
        let norm = real_inner(&e, &e)?.sqrt();
        if norm > 0.0 {
            basis.push(e.scale(Complex64::new(1.0 / norm, 0.0)));
        }
    }
    let mut out = field.clone();
    for b in &basis {
        let c = real_inner(&out, b)?;
        out = out.sub(&b.scale(Complex64::new(c, 0.0)))?;
    }
    Ok(out)
}

/// Constraint vector `F` of `u` at fixed parameters.
pub fn constraint_values(
    u: &Field,
    t: f64,
    profile: &GroundStateProfile,
    specs: &[SolitonSpec],
    params: &ModulationParams,
) -> Result<DVector<f64>> {
    let problem = Problem {
        u,
        t,
        profile,
        specs,
        mode: params.mode,
        dim: u.grid().dim(),
    };
    let jets = problem.jets(params);
    let eps = problem.remainder(&jets)?;
    problem.constraints(&jets, &eps)
}

/// Jacobian of the constraint map at fixed parameters.
pub fn jacobian_at(
    u: &Field,
    t: f64,
    profile: &GroundStateProfile,
    specs: &[SolitonSpec],
    params: &ModulationParams,
    fd_step: f64,
) -> Result<DMatrix<f64>> {
    let problem = Problem {
        u,
        t,
        profile,
        specs,
        mode: params.mode,
        dim: u.grid().dim(),
    };
    let jets = problem.jets(params);
    let eps = problem.remainder(&jets)?;
    problem.jacobian(params, &jets, &eps, fd_step)
}

pub fn jacobian_spectrum(state: &DecompositionState) -> JacobianSpectrum {
    let (min_singular, max_singular) = singular_values(&state.jacobian);
    JacobianSpectrum {
        determinant: state.determinant,
        min_singular,
        max_singular,
    }
}

/// Leading-order determinant `Π_k Π_j‖∂_jQ_w‖² · ‖Q_w‖² · ‖ΛQ_w‖²/w`, the
/// last factor in the critical mode only.
pub fn predicted_determinant(profile: &GroundStateProfile, params: &ModulationParams) -> f64 {
    let d = profile.dim() as f64;
    let beta = profile.amplitude_exponent();
    let base = profile.norms();
    params
        .solitons
        .iter()
        .map(|p| {
            let w = p.frequency;
            let mass = base.mass * w.powf(d - 2.0 * beta);
            let partial = base.grad_sq / d * w.powf(d - 2.0 - 2.0 * beta);
            let mut det = partial.powf(d) * mass;
            if params.mode == Mode::Critical {
                det *= base.lambda_sq * w.powf(d - 2.0 * beta) / w;
            }
            det
        })
        .product()
}

/// Frobenius norm of the block coupling the constraints of soliton `j` to the
/// unknowns of soliton `k`.
pub fn coupling_norm(state: &DecompositionState, j: usize, k: usize) -> f64 {
    let per = state.jacobian.nrows() / state.params.solitons.len();
    state.jacobian.view((j * per, k * per), (per, per)).norm()
}

/// Parameter series with unwrapped phases and the modulation speeds.
#[derive(Clone, Debug, Default)]
pub struct ModSeries {
    pub times: Vec<f64>,
    pub translations: Vec<Vec<[f64; 2]>>,
    pub phases: Vec<Vec<f64>>,
    pub frequencies: Vec<Vec<f64>>,
    pub per_soliton: Vec<Vec<f64>>,
    pub total: Vec<f64>,
    pub eps_l2: Vec<f64>,
    pub eps_h1: Vec<f64>,
    pub residual: Vec<f64>,
}

fn derivative(values: &[f64], dt: f64) -> Vec<f64> {
    let n = values.len();
    (0..n)
        .map(|i| match i {
            0 => (values[1] - values[0]) / dt,
            _ if i == n - 1 => (values[n - 1] - values[n - 2]) / dt,
            _ => (values[i + 1] - values[i - 1]) / (2.0 * dt),
        })
        .collect()
}

/// `Mod_k = |ẇ| + |α̇| + |θ̇ − (w^{-2} − (w⁰)^{-2})|` by centered differences on
/// a uniform mesh of step `dt` (negative for backward trajectories). In the
/// subcritical mode `w ≡ w⁰` and this is `|α̇| + |θ̇|`.
pub fn mod_quantity(states: &[DecompositionState], specs: &[SolitonSpec], dt: f64) -> Result<ModSeries> {
    if states.len() < 3 {
        return Err(Error::insufficient("the modulation quantity needs at least three states"));
    }
    if !(dt != 0.0 && dt.is_finite()) {
        return Err(Error::invalid("diagnostics step must be non-zero"));
    }
    for pair in states.windows(2) {
        if (pair[1].t - pair[0].t - dt).abs() > 1e-9 * dt.abs().max(1.0) {
            return Err(Error::insufficient(format!("gap in the state series after t = {}", pair[0].t)));
        }
    }
    if states.iter().any(|s| s.params.solitons.len() != specs.len()) {
        return Err(Error::invalid("state parameter count does not match soliton count"));
    }
    let dim = states[0].eps.grid().dim();
    let mut series = ModSeries {
        times: states.iter().map(|s| s.t).collect(),
        eps_l2: states.iter().map(|s| s.eps_l2()).collect(),
        eps_h1: states.iter().map(|s| s.eps_h1()).collect(),
        residual: states.iter().map(|s| s.residual).collect(),
        total: vec![0.0; states.len()],
        ..Default::default()
    };
    for (k, spec) in specs.iter().enumerate() {
        let mut phases: Vec<f64> = Vec::with_capacity(states.len());
        for s in states {
            let raw = s.params.solitons[k].phase;
            let next = match phases.last() {
                Some(&prev) => raw + 2.0 * PI * ((prev - raw) / (2.0 * PI)).round(),
                None => raw,
            };
            phases.push(next);
        }
        let translations: Vec<[f64; 2]> = states.iter().map(|s| s.params.solitons[k].translation).collect();
        let frequencies: Vec<f64> = states.iter().map(|s| s.params.solitons[k].frequency).collect();
        let w_dot = derivative(&frequencies, dt);
        let theta_dot = derivative(&phases, dt);
        let alpha_dot: Vec<Vec<f64>> = (0..dim)
            .map(|a| derivative(&translations.iter().map(|x| x[a]).collect::<Vec<_>>(), dt))
            .collect();
        let w0 = spec.frequency;
        let speeds: Vec<f64> = (0..states.len())
            .map(|i| {
                let w = frequencies[i];
                let alpha = alpha_dot.iter().map(|d| d[i] * d[i]).sum::<f64>().sqrt();
                w_dot[i].abs() + alpha + (theta_dot[i] - (w.powi(-2) - w0.powi(-2))).abs()
            })
            .collect();
        for (t, s) in series.total.iter_mut().zip(&speeds) {
            *t += s;
        }
        series.translations.push(translations);
        series.phases.push(phases);
        series.frequencies.push(frequencies);
        series.per_soliton.push(speeds);
    }
    Ok(series)
}

/// Fit `Mod(t) ≤ C(‖ε‖_{H¹} + B★(t)φ(δ₁t) + e^{−δ₂t})` with the tightest
/// `(δ₁, δ₂)` on a geometric grid.
pub fn fit_mod_bound<P>(series: &ModSeries, b_star: &[f64], phi: P) -> Result<EnvelopeFit>
where
    P: Fn(f64) -> f64,
{
    if b_star.len() != series.times.len() {
        return Err(Error::invalid("B★ series length differs from the modulation series"));
    }
    let rates = rate_grid(0.02, 2.0, 15);
    let pairs: Vec<(f64, f64)> = rates.iter().flat_map(|&a| rates.iter().map(move |&b| (a, b))).collect();
    fit_envelope(&series.total, &pairs, |d1, d2, i| {
        let t = series.times[i].abs();
        series.eps_h1[i] + b_star[i] * phi(d1 * t) + (-d2 * t).exp()
    })
    .ok_or_else(|| Error::insufficient("no positive modulation samples to fit"))
}

/// CSV with columns `t, α_k…, θ_k…, w_k…, eps_l2, eps_h1, residual, mod`.
pub fn write_parameter_csv<W: Write>(series: &ModSeries, dim: usize, mut w: W) -> Result<()> {
    let count = series.phases.len();
    let mut header = vec!["t".to_string()];
    for k in 0..count {
        for a in 0..dim {
            header.push(format!("alpha{k}_{a}"));
        }
    }
    header.extend((0..count).map(|k| format!("theta{k}")));
    header.extend((0..count).map(|k| format!("w{k}")));
    header.extend(["eps_l2", "eps_h1", "residual", "mod"].map(String::from));
    writeln!(w, "{}", header.join(","))?;
    for i in 0..series.times.len() {
        let mut row = vec![series.times[i]];
        for k in 0..count {
            row.extend_from_slice(&series.translations[k][i][..dim]);
        }
        row.extend((0..count).map(|k| series.phases[k][i]));
        row.extend((0..count).map(|k| series.frequencies[k][i]));
        row.extend([series.eps_l2[i], series.eps_h1[i], series.residual[i], series.total[i]]);
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.12e}")).collect();
        writeln!(w, "{}", cells.join(","))?;
    }
    Ok(())
}
