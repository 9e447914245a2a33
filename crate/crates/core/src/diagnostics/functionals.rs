//! Mass, energy, local mass and momentum, the Lyapunov functional and its
//! quadratic part.

use std::sync::Arc;

use num_complex::Complex64;

use super::linearized::projected_min_rayleigh;
use super::localizers::LocalizerSet;
use crate::error::{Error, Result};
use crate::ground_state::GroundStateProfile;
use crate::modulation::DecompositionState;
use crate::soliton::{norm_sq, Mode, ModulationParams, Point, SolitonSpec, Wave};
use crate::spectral::{grad_norm_sq, gradient, l2_norm_sq, laplacian, real_inner, Field, SpatialGrid};

pub fn mass(u: &Field) -> f64 {
    l2_norm_sq(u)
}

/// `∫|u|^{p+1}` on the grid nodes.
pub fn power_integral(u: &Field, p: f64) -> f64 {
    u.values().iter().map(|z| z.norm().powf(p + 1.0)).sum::<f64>() * u.grid().cell_volume()
}

/// `E(u) = ½‖∇u‖² − ‖u‖_{p+1}^{p+1}/(p+1)`.
pub fn energy(u: &Field, p: f64) -> f64 {
    0.5 * grad_norm_sq(u) - power_integral(u, p) / (p + 1.0)
}

#[derive(Clone, Debug, PartialEq)]
pub struct LocalQuantities {
    /// `I_k = ∫|u|²φ_k`.
    pub mass: Vec<f64>,
    /// `M_k = Im∫∇u ū φ_k`.
    pub momentum: Vec<Point>,
}

fn localized_pairs(u: &Field, weights: &[Vec<f64>]) -> LocalQuantities {
    let vol = u.grid().cell_volume();
    let grad = gradient(u);
    let mass = weights
        .iter()
        .map(|w| u.values().iter().zip(w).map(|(z, &phi)| z.norm_sqr() * phi).sum::<f64>() * vol)
        .collect();
    let momentum = weights
        .iter()
        .map(|w| {
            let mut m = [0.0; 2];
            for (a, g) in grad.iter().enumerate() {
                m[a] = g
                    .values()
                    .iter()
                    .zip(u.values())
                    .zip(w)
                    .map(|((d, z), &phi)| (d * z.conj()).im * phi)
                    .sum::<f64>()
                    * vol;
            }
            m
        })
        .collect();
    LocalQuantities { mass, momentum }
}

pub fn local_quantities(u: &Field, localizers: &LocalizerSet, t: f64) -> Result<LocalQuantities> {
    let weights = localizers.sample(t, u.grid())?;
    Ok(localized_pairs(u, &weights))
}

/// `Re⟨R̃_k, ε⟩` for every soliton.
pub fn unstable_direction(state: &DecompositionState, profile: &GroundStateProfile, specs: &[SolitonSpec]) -> Result<Vec<f64>> {
    let grid = state.eps.grid();
    specs
        .iter()
        .zip(&state.params.solitons)
        .map(|(s, p)| real_inner(&Wave::modulated(profile, *s, *p).sample(state.t, grid), &state.eps))
        .collect()
}

/// `G = 2E + Σ_k [((w⁰_k)^{-2} + |v_k|²/4) I_k − v_k·M_k]`.
pub fn lyapunov_from(energy: f64, local: &LocalQuantities, specs: &[SolitonSpec]) -> f64 {
    let bracket: f64 = specs
        .iter()
        .zip(&local.mass)
        .zip(&local.momentum)
        .map(|((s, &i), m)| {
            let v = s.velocity;
            (s.frequency.powi(-2) + norm_sq(v) / 4.0) * i - (v[0] * m[0] + v[1] * m[1])
        })
        .sum();
    2.0 * energy + bracket
}

pub fn lyapunov(u: &Field, localizers: &LocalizerSet, specs: &[SolitonSpec], t: f64, p: f64) -> Result<f64> {
    if localizers.count() != specs.len() {
        return Err(Error::invalid("localizer count differs from soliton count"));
    }
    let local = local_quantities(u, localizers, t)?;
    Ok(lyapunov_from(energy(u, p), &local, specs))
}

/// Quadratic part of `G` around the modulated waves:
/// `‖∇ε‖² − Σ_k ∫ [|R̃_k|^{p−1}|ε|² + (p−1)|R̃_k|^{p−3}(Re R̃_k ε̄)²]
///  + Σ_k [(w_k^{-2} + |v_k|²/4)∫|ε|²φ_k − v_k·Im∫∇ε ε̄ φ_k]`.
/// The middle term is evaluated as `|R̃|^{p−1}(Re(R̃ε̄)/|R̃|)²`, which stays
/// bounded where `R̃` vanishes.
pub fn quadratic_form_h(
    eps: &Field,
    profile: &GroundStateProfile,
    specs: &[SolitonSpec],
    params: &ModulationParams,
    localizers: &LocalizerSet,
    t: f64,
) -> Result<f64> {
    let p = profile.p();
    let grid = eps.grid();
    let vol = grid.cell_volume();
    let weights = localizers.sample(t, grid)?;
    let local = localized_pairs(eps, &weights);
    let mut h = grad_norm_sq(eps);
    for (k, (s, par)) in specs.iter().zip(&params.solitons).enumerate() {
        let r = Wave::modulated(profile, *s, *par).sample(t, grid);
        let potential: f64 = r
            .values()
            .iter()
            .zip(eps.values())
            .map(|(&rk, &e)| {
                let a = rk.norm();
                if a == 0.0 {
                    return 0.0;
                }
                let along = (rk * e.conj()).re / a;
                a.powf(p - 1.0) * (e.norm_sqr() + (p - 1.0) * along * along)
            })
            .sum::<f64>()
            * vol;
        let v = s.velocity;
        let m = local.momentum[k];
        h += -potential + (par.frequency.powi(-2) + norm_sq(v) / 4.0) * local.mass[k] - (v[0] * m[0] + v[1] * m[1]);
    }
    Ok(h)
}

/// Linear operator `A` with `Re⟨Aε, ε⟩ = H(ε)`, with the waves and
/// localizers sampled once.
pub struct HOperator {
    p: f64,
    waves: Vec<Field>,
    weights: Vec<Vec<f64>>,
    velocities: Vec<Point>,
    mass_weights: Vec<f64>,
}

impl HOperator {
    pub fn new(
        grid: &Arc<SpatialGrid>,
        profile: &GroundStateProfile,
        specs: &[SolitonSpec],
        params: &ModulationParams,
        localizers: &LocalizerSet,
        t: f64,
    ) -> Result<Self> {
        Ok(Self {
            p: profile.p(),
            waves: specs
                .iter()
                .zip(&params.solitons)
                .map(|(s, par)| Wave::modulated(profile, *s, *par).sample(t, grid))
                .collect(),
            weights: localizers.sample(t, grid)?,
            velocities: specs.iter().map(|s| s.velocity).collect(),
            mass_weights: specs
                .iter()
                .zip(&params.solitons)
                .map(|(s, par)| par.frequency.powi(-2) + norm_sq(s.velocity) / 4.0)
                .collect(),
        })
    }

    pub fn apply(&self, eps: &Field) -> Field {
        let grid = eps.grid();
        let i = Complex64::new(0.0, 1.0);
        let mut out: Vec<Complex64> = laplacian(eps).values().iter().map(|z| -z).collect();
        let grad = gradient(eps);
        for (k, r) in self.waves.iter().enumerate() {
            let (v, phi) = (self.velocities[k], &self.weights[k]);
            // (i/2)[v·∇(φε) + φ v·∇ε] carries the momentum term
            let weighted = Field::from_values(grid.clone(), eps.values().iter().zip(phi).map(|(e, &w)| e * w).collect());
            let wgrad = gradient(&weighted);
            for (n, slot) in out.iter_mut().enumerate() {
                let rk = r.values()[n];
                let e = eps.values()[n];
                let a = rk.norm();
                if a > 0.0 {
                    let unit = rk / a;
                    let along = (unit * e.conj()).re;
                    *slot -= a.powf(self.p - 1.0) * (e + unit * ((self.p - 1.0) * along));
                }
                *slot += e * (self.mass_weights[k] * phi[n]);
                let mut drift = Complex64::new(0.0, 0.0);
                for axis in 0..grid.dim() {
                    drift += (wgrad[axis].values()[n] + grad[axis].values()[n] * phi[n]) * v[axis];
                }
                *slot += i * 0.5 * drift;
            }
        }
        Field::from_values(grid.clone(), out)
    }
}

/// Smallest `H(ε)/‖ε‖²_{H¹}` over `ε` orthogonal (for `Re⟨·,·⟩`) to
/// `∇R̃_k`, `iR̃_k`, `R̃_k` and, in the critical mode, `ΛQ_w(y)e^{iΦ}`.
pub fn h_coercivity(
    profile: &GroundStateProfile,
    specs: &[SolitonSpec],
    params: &ModulationParams,
    localizers: &LocalizerSet,
    t: f64,
    grid: &Arc<SpatialGrid>,
) -> Result<f64> {
    let mut dirs = Vec::new();
    for (s, par) in specs.iter().zip(&params.solitons) {
        let jet = Wave::modulated(profile, *s, *par).sample_jet(t, grid);
        dirs.extend(jet.spatial_gradient.iter().cloned());
        dirs.push(jet.d_phase.clone());
        dirs.push(jet.value.clone());
        if params.mode == Mode::Critical {
            dirs.push(jet.lambda_dir.clone());
        }
    }
    let op = HOperator::new(grid, profile, specs, params, localizers, t)?;
    projected_min_rayleigh(grid, true, |f| op.apply(f), &dirs)
}

/// `e^{iβ}u`.
pub fn rotate(u: &Field, beta: f64) -> Field {
    u.scale(Complex64::from_polar(1.0, beta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ground_state::solve_ground_state;
    use crate::soliton::{modulated_sum, soliton_sum};
    use proptest::prelude::*;
    use std::sync::OnceLock;

    fn quintic() -> &'static GroundStateProfile {
        static Q: OnceLock<GroundStateProfile> = OnceLock::new();
        Q.get_or_init(|| solve_ground_state(5.0, 1, 1e-11).unwrap())
    }

    fn cubic() -> &'static GroundStateProfile {
        static Q: OnceLock<GroundStateProfile> = OnceLock::new();
        Q.get_or_init(|| solve_ground_state(3.0, 1, 1e-11).unwrap())
    }

    fn grid() -> Arc<SpatialGrid> {
        SpatialGrid::new(1, 40.0, 4096).unwrap()
    }

    #[test]
    fn critical_ground_state_has_zero_energy() {
        let q = quintic();
        let u = q.sample(&grid(), [0.0, 0.0]);
        assert!(energy(&u, 5.0).abs() < 1e-6 * mass(&u));
    }

    #[test]
    fn plane_wave_energy_closed_form() {
        let g = SpatialGrid::new(1, 10.0, 256).unwrap();
        let xi = 2.0 * std::f64::consts::PI * 3.0 / 20.0;
        let a = 0.7;
        let u = g.sample(|x| Complex64::from_polar(a, xi * x[0]));
        let p = 3.0;
        let oracle = 0.5 * xi * xi * a * a * 20.0 - a.powf(p + 1.0) * 20.0 / (p + 1.0);
        assert!((energy(&u, p) - oracle).abs() < 1e-12);
    }

    #[test]
    fn single_soliton_local_quantities_are_global() {
        let g = grid();
        let q = cubic();
        let spec = SolitonSpec::line(1.0, 0.8, 0.0, 0.0).unwrap();
        let u = soliton_sum(q, &[spec], 2.0, &g);
        let set = LocalizerSet::new(&[spec], 1).unwrap();
        let local = local_quantities(&u, &set, 2.0).unwrap();
        assert_eq!(local.mass[0], mass(&u));
        // M = (v/2)‖Q‖²
        assert!((local.momentum[0][0] - 0.4 * q.norms().mass).abs() < 1e-10);
    }

    #[test]
    fn separated_pair_splits_mass_and_momentum() {
        let g = SpatialGrid::new(1, 60.0, 8192).unwrap();
        let q = cubic();
        let specs = vec![
            SolitonSpec::line(1.0, -1.0, 0.0, 0.0).unwrap(),
            SolitonSpec::line(1.2, 1.0, 0.0, 0.5).unwrap(),
        ];
        let set = LocalizerSet::new(&specs, 1).unwrap();
        let t = 20.0;
        let u = soliton_sum(q, &specs, t, &g);
        let local = local_quantities(&u, &set, t).unwrap();
        let total: f64 = local.mass.iter().sum();
        assert!((total - mass(&u)).abs() < 1e-13 * mass(&u));
        for (k, s) in specs.iter().enumerate() {
            let norm = mass(&q.sample(&g, [0.0, 0.0])) * s.frequency.powf(1.0 - 2.0);
            assert!((local.mass[k] - norm).abs() < 1e-6, "{k}: {} vs {norm}", local.mass[k]);
            assert!((local.momentum[k][0] - s.velocity[0] / 2.0 * norm).abs() < 1e-6);
        }
    }

    #[test]
    fn lyapunov_at_the_critical_ground_state_is_its_mass() {
        let g = grid();
        let q = quintic();
        let spec = SolitonSpec::line(1.0, 0.0, 0.0, 0.0).unwrap();
        let u = soliton_sum(q, &[spec], 1.0, &g);
        let set = LocalizerSet::new(&[spec], 1).unwrap();
        let value = lyapunov(&u, &set, &[spec], 1.0, 5.0).unwrap();
        assert!((value - q.norms().mass).abs() < 1e-6);
        // a boost leaves G unchanged
        let boosted = SolitonSpec::line(1.0, 1.5, 0.0, 0.0).unwrap();
        let u = soliton_sum(q, &[boosted], 1.0, &g);
        let moved = lyapunov(&u, &set, &[boosted], 1.0, 5.0).unwrap();
        assert!((moved - value).abs() < 1e-6);
    }

    #[test]
    fn lyapunov_of_a_separated_pair_matches_the_expansion_constant() {
        let g = SpatialGrid::new(1, 60.0, 8192).unwrap();
        let q = cubic();
        let specs = vec![
            SolitonSpec::line(1.0, -1.0, 0.0, 0.0).unwrap(),
            SolitonSpec::line(1.2, 1.0, 0.0, 0.5).unwrap(),
        ];
        let set = LocalizerSet::new(&specs, 1).unwrap();
        let t = 20.0;
        let u = soliton_sum(q, &specs, t, &g);
        let value = lyapunov(&u, &set, &specs, t, 3.0).unwrap();
        // Σ 2E(Q_w) + w^{-2}‖Q_w‖² from exact scaling of the base norms
        let n = q.norms();
        let oracle: f64 = specs
            .iter()
            .map(|s| {
                let w = s.frequency;
                let e = 0.5 * n.grad_sq * w.powf(-3.0) - n.power * w.powf(-3.0) / 4.0;
                2.0 * e + w.powi(-2) * n.mass * w.powf(-1.0)
            })
            .sum();
        assert!((value - oracle).abs() < 1e-6, "{value} vs {oracle}");
    }

    #[test]
    fn h_vanishes_without_remainder_and_is_positive_without_solitons() {
        let g = grid();
        let q = cubic();
        let specs = vec![SolitonSpec::line(1.0, 0.5, 0.0, 0.0).unwrap()];
        let params = ModulationParams::at_target(&specs, Mode::Subcritical);
        let set = LocalizerSet::new(&specs, 1).unwrap();
        let zero = Field::zeros(g.clone());
        assert_eq!(quadratic_form_h(&zero, q, &specs, &params, &set, 1.0).unwrap(), 0.0);
        // solitons parked far outside the box contribute no potential
        let mut far = params.clone();
        far.solitons[0].translation[0] = 1e4;
        let eps = g.sample(|x| Complex64::new((-x[0] * x[0]).exp(), 0.0));
        let h = quadratic_form_h(&eps, q, &specs, &far, &set, 1.0).unwrap();
        let oracle = grad_norm_sq(&eps) + (1.0 + 0.25 / 4.0) * mass(&eps);
        assert!(h > 0.0 && (h - oracle).abs() < 1e-12, "{h} vs {oracle}");
        let u = modulated_sum(q, &specs, &params, 1.0, &g);
        assert!(l2_norm_sq(&u) > 0.0);
    }

    #[test]
    fn h_operator_reproduces_the_quadratic_form() {
        let g = SpatialGrid::new(1, 20.0, 512).unwrap();
        let q = cubic();
        let specs = vec![
            SolitonSpec::line(1.0, -1.0, -4.0, 0.0).unwrap(),
            SolitonSpec::line(1.2, 1.0, 4.0, 0.3).unwrap(),
        ];
        let params = ModulationParams::at_target(&specs, Mode::Subcritical);
        let set = LocalizerSet::new(&specs, 1).unwrap();
        let eps = g.sample(|x| Complex64::new((x[0] * 0.4).sin(), (x[0] * 0.9).cos()) * (-(x[0] / 4.0).powi(2)).exp());
        let h = quadratic_form_h(&eps, q, &specs, &params, &set, 2.0).unwrap();
        let a = HOperator::new(&g, q, &specs, &params, &set, 2.0).unwrap().apply(&eps);
        let pairing = real_inner(&a, &eps).unwrap();
        assert!((pairing - h).abs() < 1e-10 * h.abs().max(1.0), "{pairing} vs {h}");
    }

    #[test]
    fn h_is_coercive_on_the_constraint_complement() {
        let g = SpatialGrid::new(1, 15.0, 256).unwrap();
        for (q, mode) in [(cubic(), Mode::Subcritical), (quintic(), Mode::Critical)] {
            let specs = vec![SolitonSpec::line(1.0, 0.5, 0.0, 0.0).unwrap()];
            let params = ModulationParams::at_target(&specs, mode);
            let set = LocalizerSet::new(&specs, 1).unwrap();
            let c = h_coercivity(q, &specs, &params, &set, 1.0, &g).unwrap();
            assert!(c > 0.0, "{mode:?}: {c}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn h_is_quadratic(a in -3.0f64..3.0, seed in 0u64..100) {
            let g = SpatialGrid::new(1, 20.0, 512).unwrap();
            let q = cubic();
            let specs = vec![
                SolitonSpec::line(1.0, -1.0, -4.0, 0.0).unwrap(),
                SolitonSpec::line(1.0, 1.0, 4.0, 0.0).unwrap(),
            ];
            let params = ModulationParams::at_target(&specs, Mode::Subcritical);
            let set = LocalizerSet::new(&specs, 1).unwrap();
            let s = seed as f64;
            let eps = g.sample(|x| Complex64::new((x[0] * 0.3 + s).sin(), (x[0] * 0.7 - s).cos()) * (-(x[0] / 5.0).powi(2)).exp());
            let h1 = quadratic_form_h(&eps, q, &specs, &params, &set, 3.0).unwrap();
            let ha = quadratic_form_h(&eps.scale(Complex64::new(a, 0.0)), q, &specs, &params, &set, 3.0).unwrap();
            prop_assert!((ha - a * a * h1).abs() < 1e-10 * h1.abs().max(1.0));
        }

        #[test]
        fn lyapunov_is_gauge_invariant(beta in -3.2f64..3.2) {
            let g = SpatialGrid::new(1, 20.0, 512).unwrap();
            let q = cubic();
            let specs = vec![
                SolitonSpec::line(1.0, -1.0, -4.0, 0.0).unwrap(),
                SolitonSpec::line(1.1, 1.0, 4.0, 0.0).unwrap(),
            ];
            let set = LocalizerSet::new(&specs, 1).unwrap();
            let u = soliton_sum(q, &specs, 2.0, &g);
            let a = lyapunov(&u, &set, &specs, 2.0, 3.0).unwrap();
            let b = lyapunov(&rotate(&u, beta), &set, &specs, 2.0, 3.0).unwrap();
            prop_assert!((a - b).abs() < 1e-12 * a.abs().max(1.0));
        }
    }
}
