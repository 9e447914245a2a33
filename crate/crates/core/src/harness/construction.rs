//! Backward multi-soliton construction with per-snapshot decomposition.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::decay::{fit_decay, DecayModel};
use super::record::{write_record, Checkpoint, MonitorFit, RunRecord, RunStatus};
use crate::diagnostics::{
    almost_conservation_monitor, diagnose, energy_drift_bound, time_derivative, unstable_direction_monitor,
    DiagnosticsRecord, LocalizerSet, MonitorSeries, Rates,
};
use crate::error::{Error, Result};
use crate::evolution::{step_count, Direction, Stepper};
use crate::fit::{fit_envelope, rate_grid};
use crate::ground_state::GroundStateProfile;
use crate::modulation::{decompose, mod_quantity, DecomposeOptions, DecompositionState};
use crate::noise::{decay_function, NoiseCase, NoiseModel};
use crate::soliton::{soliton_sum, Mode, ModulationParams, SolitonSpec};
use crate::spectral::{l2_norm, write_binary, Field, SpatialGrid};

/// Worker count and where (if anywhere) outputs go.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// 0 uses every available core.
    pub jobs: usize,
    pub output: Option<PathBuf>,
    pub plots: bool,
}

/// `‖u_n(t) − u_m(t)‖_{L²}` for two horizons of one seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CauchyEntry {
    pub seed: u64,
    pub t: f64,
    pub horizons: (f64, f64),
    pub distance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstructionSet {
    pub config_hash: String,
    pub records: Vec<RunRecord>,
    pub cauchy: Vec<CauchyEntry>,
}

impl ConstructionSet {
    /// Per seed, the largest distance among pairs with the larger
    /// `min(T_n, T_m)` is below the smallest distance among pairs with the
    /// smallest one.
    pub fn cauchy_trend(&self) -> bool {
        let mut seeds: Vec<u64> = self.cauchy.iter().map(|c| c.seed).collect();
        seeds.dedup();
        seeds.iter().all(|&s| {
            let entries: Vec<&CauchyEntry> = self.cauchy.iter().filter(|c| c.seed == s).collect();
            let mins: Vec<f64> = entries.iter().map(|c| c.horizons.0.min(c.horizons.1)).collect();
            let lo = mins.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = mins.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if lo == hi {
                return true;
            }
            let early = entries.iter().zip(&mins).filter(|(_, &m)| m == lo).map(|(c, _)| c.distance);
            let late = entries.iter().zip(&mins).filter(|(_, &m)| m == hi).map(|(c, _)| c.distance);
            late.fold(0.0, f64::max) < early.fold(f64::INFINITY, f64::min)
        })
    }
}

/// Everything shared by the jobs of one configuration.
struct Setup {
    cfg: RunConfig,
    grid: Arc<SpatialGrid>,
    profile: GroundStateProfile,
    specs: Vec<SolitonSpec>,
    localizers: LocalizerSet,
}

struct JobOutcome {
    record: RunRecord,
    /// States on `[T₀, T_n]`, ascending.
    states: Vec<(f64, Field)>,
}

/// The decay function `φ` of the configured case (exponential without noise).
pub fn phi_of(cfg: &RunConfig) -> impl Fn(f64) -> f64 + Copy {
    let case = cfg.case().unwrap_or(NoiseCase::Exponential);
    let power = cfg.noise.power;
    move |x| decay_function(case, power, x)
}

/// `∫_t^∞ s φ^{1/2}(δs) ds` in closed form; infinite when it diverges.
pub fn tail_weight(case: NoiseCase, power: f64, delta: f64, t: f64) -> f64 {
    match case {
        NoiseCase::Exponential => {
            let a = delta / 2.0;
            (-a * t).exp() * (t / a + 1.0 / (a * a))
        }
        NoiseCase::Polynomial => {
            let half = power / 2.0;
            if half <= 2.0 {
                return f64::INFINITY;
            }
            // s ≥ max(t, 1/δ): δ^{−υ/2} s^{1−υ/2}; below 1/δ the clamp gives s
            let knee = 1.0 / delta;
            let start = t.max(knee);
            let outer = delta.powf(-half) * start.powf(2.0 - half) / (half - 2.0);
            let inner = if t < knee { (knee * knee - t * t) / 2.0 } else { 0.0 };
            outer + inner
        }
    }
}

fn fixed_or_fitted(rates: Rates, two: bool) -> Vec<(f64, f64)> {
    match rates {
        Rates::Fixed(a, b) => vec![(a, b)],
        Rates::Fitted => {
            let grid = rate_grid(0.02, 2.0, 15);
            if two {
                grid.iter().flat_map(|&a| grid.iter().map(move |&b| (a, b))).collect()
            } else {
                grid.iter().map(|&a| (a, 0.0)).collect()
            }
        }
    }
}

/// `‖ε‖²_{H¹} ≤ C φ(δ̃t)`; `δ̃` is fitted in Case I and pinned to one in
/// Case II.
pub fn ven_boot_monitor<P>(records: &[DiagnosticsRecord], phi: P, pinned: bool, rates: Rates) -> MonitorSeries
where
    P: Fn(f64) -> f64,
{
    let times: Vec<f64> = records.iter().map(|r| r.t).collect();
    let measured: Vec<f64> = records.iter().map(|r| r.eps_h1 * r.eps_h1).collect();
    let pairs = if pinned { vec![(1.0, 0.0)] } else { fixed_or_fitted(rates, false) };
    let fit = fit_envelope(&measured, &pairs, |d, _, i| phi(d * times[i]));
    MonitorSeries {
        name: "ven_boot".into(),
        times,
        measured,
        fit,
    }
}

/// `Σ_k(|w_k − w⁰_k| + |α_k − x⁰_k| + |θ_k − θ⁰_k|) ≤ C ∫_t^∞ s φ^{1/2}(δ̃s) ds`.
pub fn a_theta_boot_monitor(
    records: &[DiagnosticsRecord],
    drift: &[f64],
    case: NoiseCase,
    power: f64,
    delta: f64,
) -> MonitorSeries {
    let times: Vec<f64> = records.iter().map(|r| r.t).collect();
    let fit = fit_envelope(drift, &[(delta, 0.0)], |d, _, i| tail_weight(case, power, d, times[i]));
    MonitorSeries {
        name: "a_theta_boot".into(),
        times,
        measured: drift.to_vec(),
        fit,
    }
}

/// `Mod(t) ≤ C(‖ε‖_{H¹} + B★φ(δ₁t) + e^{−δ₂t})` from the recorded stream.
pub fn mod_monitor<P>(records: &[DiagnosticsRecord], phi: P, rates: Rates) -> MonitorSeries
where
    P: Fn(f64) -> f64,
{
    let times: Vec<f64> = records.iter().map(|r| r.t).collect();
    let measured: Vec<f64> = records.iter().map(|r| r.modulation).collect();
    let fit = fit_envelope(&measured, &fixed_or_fitted(rates, true), |d1, d2, i| {
        let r = &records[i];
        r.eps_h1 + r.b_star * phi(d1 * r.t) + (-d2 * r.t).exp()
    });
    MonitorSeries {
        name: "mod".into(),
        times,
        measured,
        fit,
    }
}

/// Every bound monitor computable from a diagnostics stream (ascending in
/// time): `ven_boot`, `mod`, `dI_k`, `dM_k`, `dE` and `unstable_k`.
pub fn monitor_suite<P>(records: &[DiagnosticsRecord], phi: P, pinned: bool, rates: Rates) -> Vec<MonitorSeries>
where
    P: Fn(f64) -> f64 + Copy,
{
    let ven_rates = match rates {
        Rates::Fixed(a, _) => Rates::Fixed(a, 0.0),
        Rates::Fitted => Rates::Fitted,
    };
    let mut out = vec![ven_boot_monitor(records, phi, pinned, ven_rates), mod_monitor(records, phi, rates)];
    out.extend(almost_conservation_monitor(records, phi, rates));
    out.push(energy_drift_bound(records, phi, rates));
    out.extend(unstable_direction_monitor(records, rates));
    out
}

/// `max_t |Σ_k I_k − ‖u‖²| / ‖u‖²`.
pub fn partition_error(records: &[DiagnosticsRecord]) -> f64 {
    records
        .iter()
        .map(|r| (r.local_mass.iter().sum::<f64>() - r.mass).abs() / r.mass)
        .fold(0.0, f64::max)
}

fn parameter_drift(state: &DecompositionState, specs: &[SolitonSpec], phases: &[f64]) -> f64 {
    state
        .params
        .solitons
        .iter()
        .zip(specs)
        .zip(phases)
        .map(|((p, s), &theta)| {
            let da = ((p.translation[0] - s.center[0]).powi(2) + (p.translation[1] - s.center[1]).powi(2)).sqrt();
            (p.frequency - s.frequency).abs() + da + (theta - s.phase).abs()
        })
        .sum()
}

fn checkpoint(dir: Option<&Path>, stem: &str, t: f64, u: &Field) -> Result<Option<Checkpoint>> {
    let Some(dir) = dir else {
        return Ok(None);
    };
    let rel = PathBuf::from("checkpoints").join(format!("{stem}_t{t:.4}.bin"));
    std::fs::create_dir_all(dir.join("checkpoints"))?;
    write_binary(u, t, BufWriter::new(File::create(dir.join(&rel))?))?;
    Ok(Some(Checkpoint {
        t,
        file: rel,
        l2_norm: l2_norm(u),
    }))
}

impl Setup {
    fn new(cfg: &RunConfig) -> Result<Self> {
        cfg.validate()?;
        let specs = cfg.specs()?;
        Ok(Self {
            grid: cfg.make_grid()?,
            profile: cfg.profile()?,
            localizers: LocalizerSet::new(&specs, cfg.dim)?,
            specs,
            cfg: cfg.clone(),
        })
    }

    fn run(&self, seed: u64, horizon: f64, noise: Option<Arc<NoiseModel>>, out: Option<&Path>) -> Result<JobOutcome> {
        let cfg = &self.cfg;
        let spacing = cfg.spacing();
        let stepper = Stepper::new(cfg.evolution(Direction::Backward), self.grid.clone(), noise.clone())?;
        let u_end = soliton_sum(&self.profile, &self.specs, horizon, &self.grid);
        let steps = step_count(cfg.scan.min, horizon, cfg.dt)?;
        let opts = DecomposeOptions::default();
        let mut guess = ModulationParams::at_target(&self.specs, Mode::for_profile(&self.profile));
        let mut snaps: Vec<(Field, DecompositionState, DiagnosticsRecord)> = Vec::new();
        let mut failure: Option<(f64, String)> = None;
        let outcome = stepper.evolve(&u_end, horizon, steps, |n, t, u| {
            if n % cfg.stride != 0 {
                return Ok(());
            }
            // snap to the diagnostics mesh so every horizon shares it
            let t = (t / spacing).round() * spacing;
            let state = decompose(u, t, &self.profile, &self.specs, &guess, &opts).and_then(|state| {
                let b_star = noise.as_ref().map_or(Ok(0.0), |m| m.b_star(t))?;
                let rec = diagnose(u, &state, &self.profile, &self.specs, &self.localizers, b_star)?;
                Ok((state, rec))
            });
            match state {
                Ok((state, rec)) => {
                    guess = state.params.clone();
                    snaps.push((u.clone(), state, rec));
                    Ok(())
                }
                Err(e) => {
                    let msg = e.to_string();
                    failure = Some((t, msg.clone()));
                    Err(e)
                }
            }
        });
        let stem = format!("seed{seed}_T{horizon}");
        let mut record = RunRecord {
            config_hash: cfg.hash(),
            seed,
            horizon,
            t0: None,
            scan_failure: failure.as_ref().map(|f| f.0),
            status: RunStatus::Success,
            checkpoints: Vec::new(),
            diagnostics: Vec::new(),
            monitors: Vec::new(),
            decay: None,
            partition_error: 0.0,
        };
        if let Err(e) = outcome {
            match (&failure, e) {
                (Some(_), _) => {}
                (None, Error::BlowUp { t, .. }) => {
                    record.status = RunStatus::BlowUp { t };
                    return Ok(JobOutcome {
                        record,
                        states: Vec::new(),
                    });
                }
                (None, e) => return Err(e),
            }
        }
        let t0 = match &failure {
            Some((t, _)) => ((t + cfg.scan.margin) / spacing).ceil() * spacing,
            None => cfg.scan.min,
        };
        snaps.retain(|(_, s, _)| s.t >= t0 - 1e-9 * spacing);
        if snaps.len() < 3 {
            let (t, message) = failure.unwrap_or((horizon, "too few snapshots".into()));
            record.status = RunStatus::Failed { t, message };
            return Ok(JobOutcome {
                record,
                states: Vec::new(),
            });
        }
        record.t0 = Some(t0);
        // snapshots run backward in time
        let states: Vec<DecompositionState> = snaps.iter().map(|(_, s, _)| s.clone()).collect();
        let series = mod_quantity(&states, &self.specs, -spacing)?;
        let mut ordered: Vec<(Field, DecompositionState, DiagnosticsRecord, f64)> = snaps
            .into_iter()
            .enumerate()
            .map(|(i, (u, s, mut rec))| {
                rec.modulation = series.total[i];
                let phases: Vec<f64> = series.phases.iter().map(|ph| ph[i]).collect();
                let drift = parameter_drift(&s, &self.specs, &phases);
                (u, s, rec, drift)
            })
            .collect();
        ordered.reverse();
        record.diagnostics = ordered.iter().map(|o| o.2.clone()).collect();
        let drift: Vec<f64> = ordered.iter().map(|o| o.3).collect();
        record.partition_error = partition_error(&record.diagnostics);

        let case = cfg.case().unwrap_or(NoiseCase::Exponential);
        let pinned = case == NoiseCase::Polynomial;
        let mut monitors = monitor_suite(&record.diagnostics, phi_of(cfg), pinned, Rates::Fitted);
        let delta = monitors[0].fit.as_ref().map_or(1.0, |f| f.rates.0);
        monitors.insert(1, a_theta_boot_monitor(&record.diagnostics, &drift, case, cfg.noise.power, delta));
        record.monitors = monitors.iter().map(MonitorFit::from).collect();

        let model = match case {
            NoiseCase::Exponential => DecayModel::Exponential,
            NoiseCase::Polynomial => DecayModel::Power,
        };
        let (times, values): (Vec<f64>, Vec<f64>) = record
            .diagnostics
            .iter()
            .filter(|r| r.t <= horizon - cfg.fit.end_offset + 1e-9 && r.eps_h1 * r.eps_h1 > cfg.fit.floor)
            .map(|r| (r.t, r.eps_h1 * r.eps_h1))
            .unzip();
        record.decay = fit_decay(&times, &values, model).ok();

        let every = cfg.checkpoint_every;
        let last = ordered.len() - 1;
        for (i, o) in ordered.iter().enumerate() {
            let keep = i == 0 || i == last || (every > 0 && i % every == 0);
            if keep {
                if let Some(c) = checkpoint(out, &stem, o.1.t, &o.0)? {
                    record.checkpoints.push(c);
                }
            }
        }
        let states = ordered.into_iter().map(|o| (o.1.t, o.0)).collect();
        Ok(JobOutcome { record, states })
    }
}

fn cauchy_entries(seed: u64, outcomes: &[&JobOutcome], spacing: f64) -> Result<Vec<CauchyEntry>> {
    let ok: Vec<&&JobOutcome> = outcomes.iter().filter(|o| o.record.status.is_success()).collect();
    let Some(t) = ok.iter().filter_map(|o| o.record.t0).reduce(f64::max) else {
        return Ok(Vec::new());
    };
    let at = |o: &JobOutcome| o.states.iter().find(|(s, _)| (s - t).abs() < 1e-6 * spacing).map(|(_, u)| u.clone());
    let mut out = Vec::new();
    for (i, a) in ok.iter().enumerate() {
        for b in &ok[i + 1..] {
            if let (Some(ua), Some(ub)) = (at(a), at(b)) {
                out.push(CauchyEntry {
                    seed,
                    t,
                    horizons: (a.record.horizon, b.record.horizon),
                    distance: l2_norm(&ua.sub(&ub)?),
                });
            }
        }
    }
    Ok(out)
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::invalid(format!("worker pool: {e}")))
}

/// Every `(seed, T_n)` backward run of a configuration, the per-seed Cauchy
/// comparison, and (with an output directory) the written record files.
pub fn run_backward_construction(cfg: &RunConfig, opts: &RunOptions) -> Result<ConstructionSet> {
    let setup = Setup::new(cfg)?;
    let out = opts.output.as_deref();
    let models: Vec<Option<Arc<NoiseModel>>> =
        cfg.seeds.iter().map(|&s| cfg.noise_model(&setup.grid, s)).collect::<Result<_>>()?;
    let jobs: Vec<(usize, f64)> = (0..cfg.seeds.len())
        .flat_map(|i| cfg.horizons.iter().map(move |&h| (i, h)))
        .collect();
    let outcomes: Vec<JobOutcome> = pool(opts.jobs)?.install(|| {
        jobs.par_iter()
            .map(|&(i, h)| setup.run(cfg.seeds[i], h, models[i].clone(), out))
            .collect::<Result<Vec<_>>>()
    })?;
    let mut cauchy = Vec::new();
    for &seed in &cfg.seeds {
        let mine: Vec<&JobOutcome> = outcomes.iter().filter(|o| o.record.seed == seed).collect();
        cauchy.extend(cauchy_entries(seed, &mine, cfg.spacing())?);
    }
    let set = ConstructionSet {
        config_hash: cfg.hash(),
        records: outcomes.into_iter().map(|o| o.record).collect(),
        cauchy,
    };
    if let Some(dir) = out {
        for r in &set.records {
            write_record(r, dir, cfg.dim, opts.plots)?;
        }
        let summary = serde_json::to_string_pretty(&set.cauchy).map_err(|e| Error::Format(e.to_string()))?;
        std::fs::write(dir.join("cauchy.json"), summary + "\n")?;
    }
    Ok(set)
}

/// `|d/dt Σ_k I_k|` alongside `|d‖u‖²/dt|`, used to report how far the local
/// masses drift from the total.
pub fn local_mass_rates(records: &[DiagnosticsRecord]) -> (Vec<f64>, Vec<f64>) {
    let times: Vec<f64> = records.iter().map(|r| r.t).collect();
    let local: Vec<f64> = records.iter().map(|r| r.local_mass.iter().sum()).collect();
    let total: Vec<f64> = records.iter().map(|r| r.mass).collect();
    (time_derivative(&times, &local), time_derivative(&times, &total))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::{NoiseKind, RunConfig};

    fn small(case: NoiseKind) -> RunConfig {
        let mut cfg = RunConfig::headline(case);
        cfg.grid.n = 512;
        cfg.grid.half_extent = 32.0;
        cfg.dt = 1e-2;
        cfg.stride = 10;
        cfg.horizons = vec![6.0, 8.0];
        cfg.scan.min = 1.0;
        cfg.fit.end_offset = 1.0;
        if case == NoiseKind::None {
            cfg.variant = crate::evolution::Variant::Nls;
        }
        cfg
    }

    #[test]
    fn tail_weights_match_quadrature() {
        for (case, power, delta, t) in [
            (NoiseCase::Exponential, 8.0, 0.6, 3.0f64),
            (NoiseCase::Polynomial, 8.0, 1.0, 2.0),
            (NoiseCase::Polynomial, 8.0, 0.25, 2.0),
        ] {
            let phi = |x: f64| decay_function(case, power, x);
            // midpoint rule in log s out to s = 1e7
            let (lo, hi) = (t.ln(), 1e7f64.ln());
            let steps = 2_000_000;
            let h = (hi - lo) / steps as f64;
            let quad: f64 = (0..steps)
                .map(|i| {
                    let s = (lo + (i as f64 + 0.5) * h).exp();
                    s * s * phi(delta * s).sqrt() * h
                })
                .sum();
            let closed = tail_weight(case, power, delta, t);
            assert!((quad - closed).abs() < 1e-6 * closed, "{case:?} {delta}: {quad} vs {closed}");
        }
        assert!(tail_weight(NoiseCase::Polynomial, 4.0, 1.0, 2.0).is_infinite());
    }

    #[test]
    fn single_soliton_backward_run_stays_exact() {
        let mut cfg = small(NoiseKind::None);
        cfg.solitons.truncate(1);
        let set = run_backward_construction(&cfg, &RunOptions::default()).unwrap();
        for r in &set.records {
            assert!(r.status.is_success(), "{:?}", r.status);
            assert_eq!(r.t0, Some(cfg.scan.min));
            let worst = r.diagnostics.iter().map(|d| d.eps_h1).fold(0.0, f64::max);
            assert!(worst < 1e-6, "{worst:e}");
            assert!(r.partition_error < 1e-13);
        }
        assert!(!set.cauchy.is_empty());
        assert!(set.cauchy.iter().all(|c| c.distance < 1e-6));
    }

    #[test]
    fn noisy_runs_are_reproducible_and_write_outputs() {
        let cfg = small(NoiseKind::Exponential);
        let dir = tempfile::tempdir().unwrap();
        let opts = RunOptions {
            jobs: 2,
            output: Some(dir.path().to_path_buf()),
            plots: true,
        };
        let a = run_backward_construction(&cfg, &opts).unwrap();
        let other = tempfile::tempdir().unwrap();
        let b = run_backward_construction(
            &cfg,
            &RunOptions {
                jobs: 1,
                output: Some(other.path().to_path_buf()),
                plots: false,
            },
        )
        .unwrap();
        assert_eq!(a.records.len(), 2);
        for (x, y) in a.records.iter().zip(&b.records) {
            assert_eq!(x.to_json().unwrap(), y.to_json().unwrap());
            assert!(x.status.is_success());
            assert!(x.monitors.iter().all(|m| m.dominated), "{:?}", x.monitors);
            assert!(x.monitor("a_theta_boot").is_some());
        }
        let stem = a.records[0].stem();
        for ext in ["json", "csv"] {
            assert!(dir.path().join(format!("{stem}.{ext}")).exists());
        }
        assert!(dir.path().join(format!("{stem}_eps.svg")).exists());
        assert!(dir.path().join("cauchy.json").exists());
        assert_eq!(a.records[0].checkpoints.len(), 2);
        let back = crate::harness::read_records(dir.path()).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0], a.records[0]);
    }
}
