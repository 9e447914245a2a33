//! Forward-time comparison of the stochastic equation with its random
//! counterparts under a time-step sweep.

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use crate::error::{Error, Result};
use crate::evolution::{
    doss_sussman, doss_sussman_inverse, equivalence_residual, step_count, Direction, EvolutionConfig, Stepper, Variant,
};
use crate::noise::NoiseModel;
use crate::soliton::soliton_sum;
use crate::spectral::{l2_norm, Field};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceLevel {
    pub dt: f64,
    /// `max_t ‖X − e^{W}v‖_{L²}`.
    pub residual: f64,
    /// `max_t ‖X − e^{W★}u‖_{L²}`.
    pub star_residual: f64,
    /// Relative mass drift of the direct branch.
    pub mass_drift: f64,
    /// `max_t max_x ||X| − |e^{−W}X|| + ||X| − |e^{−W★}X||`.
    pub modulus_gap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceStudy {
    pub config_hash: String,
    pub seed: u64,
    pub interval: (f64, f64),
    pub levels: Vec<EquivalenceLevel>,
    /// `residual(dt) / residual(dt/2)` for consecutive levels.
    pub ratios: Vec<f64>,
    pub star_ratios: Vec<f64>,
    /// `log₂` of the ratios.
    pub orders: Vec<f64>,
    /// Residual of the coarsest level with every amplitude set to zero.
    pub zero_noise_residual: f64,
}

/// Evolve `X` directly and `u = e^{−W★}X` forward, tracking the transform
/// gap and the modulus identities.
fn star_branch(model: &std::sync::Arc<NoiseModel>, cfg: &EvolutionConfig, x0: &Field, t0: f64, t1: f64) -> Result<(f64, f64)> {
    let grid = x0.grid().clone();
    let mut direct = *cfg;
    direct.variant = Variant::SnlsDirect;
    direct.direction = Direction::Forward;
    let mut star = direct;
    star.variant = Variant::RnlsBstarCstar;
    let direct = Stepper::new(direct, grid.clone(), Some(model.clone()))?;
    let star = Stepper::new(star, grid, Some(model.clone()))?;
    let steps = step_count(t0, t1, cfg.dt)?;
    let mut x = x0.clone();
    let mut u = doss_sussman(x0, &model.assemble_wstar(t0)?)?;
    let (mut residual, mut modulus): (f64, f64) = (0.0, 0.0);
    for n in 0..steps {
        let t = t0 + n as f64 * cfg.dt;
        x = direct.step(&x, t)?;
        u = star.step(&u, t)?;
        let t_next = t0 + (n + 1) as f64 * cfg.dt;
        let ws = model.assemble_wstar(t_next)?;
        residual = residual.max(l2_norm(&x.sub(&doss_sussman_inverse(&u, &ws)?)?));
        let v = doss_sussman(&x, &model.assemble_w(t_next)?)?;
        let us = doss_sussman(&x, &ws)?;
        for ((a, b), c) in x.values().iter().zip(v.values()).zip(us.values()) {
            modulus = modulus.max((a.norm() - b.norm()).abs() + (a.norm() - c.norm()).abs());
        }
    }
    Ok((residual, modulus))
}

/// Residuals over `[0, t_end]` for each `dt` in `dts` (coarse to fine) with
/// one drive refined below the finest step.
pub fn run_equivalence_study(cfg: &RunConfig, seed: u64, t_end: f64, dts: &[f64]) -> Result<EquivalenceStudy> {
    cfg.validate()?;
    if dts.len() < 2 || dts.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::invalid("the step sweep needs at least two decreasing steps"));
    }
    let grid = cfg.make_grid()?;
    let finest = dts[dts.len() - 1];
    let horizon = (t_end / finest).ceil() * finest;
    let model = cfg
        .noise_model_for_step(&grid, seed, finest, horizon)?
        .ok_or_else(|| Error::invalid("the equivalence study needs a noise case"))?;
    let profile = cfg.profile()?;
    let x0 = soliton_sum(&profile, &cfg.specs()?, 0.0, &grid);
    let mut levels = Vec::with_capacity(dts.len());
    for &dt in dts {
        let evo = EvolutionConfig::new(Variant::SnlsDirect, cfg.p, dt, Direction::Forward);
        let report = equivalence_residual(&model, &evo, &x0, 0.0, t_end)?;
        let (star_residual, modulus_gap) = star_branch(&model, &evo, &x0, 0.0, t_end)?;
        levels.push(EquivalenceLevel {
            dt,
            residual: report.residual,
            star_residual,
            mass_drift: report.mass_drift,
            modulus_gap,
        });
    }
    let ratios: Vec<f64> = levels.windows(2).map(|w| w[0].residual / w[1].residual).collect();
    let star_ratios = levels.windows(2).map(|w| w[0].star_residual / w[1].star_residual).collect();
    let orders = ratios.iter().map(|r| r.log2()).collect();

    let mut silent = cfg.clone();
    silent.noise.amplitudes.iter_mut().for_each(|a| *a = 0.0);
    let quiet = silent
        .noise_model_for_step(&grid, seed, finest, horizon)?
        .ok_or_else(|| Error::invalid("the equivalence study needs a noise case"))?;
    let evo = EvolutionConfig::new(Variant::SnlsDirect, cfg.p, dts[0], Direction::Forward);
    let zero_noise_residual = equivalence_residual(&quiet, &evo, &x0, 0.0, t_end)?.residual;

    Ok(EquivalenceStudy {
        config_hash: cfg.hash(),
        seed,
        interval: (0.0, t_end),
        levels,
        ratios,
        star_ratios,
        orders,
        zero_noise_residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::NoiseKind;

    #[test]
    fn sweep_converges_and_silent_noise_is_exact() {
        let mut cfg = RunConfig::headline(NoiseKind::Exponential);
        cfg.grid.n = 512;
        cfg.grid.half_extent = 24.0;
        cfg.solitons.truncate(1);
        cfg.noise.amplitudes = vec![0.5];
        let study = run_equivalence_study(&cfg, 5, 1.0, &[1e-2, 5e-3, 2.5e-3]).unwrap();
        assert!(study.ratios.iter().all(|&r| r >= 1.8), "{study:?}");
        assert!(study.zero_noise_residual < 1e-12);
        for level in &study.levels {
            assert!(level.modulus_gap < 1e-12 && level.mass_drift < 1e-12, "{level:?}");
        }
        assert!(run_equivalence_study(&cfg, 5, 1.0, &[1e-2]).is_err());
    }
}
