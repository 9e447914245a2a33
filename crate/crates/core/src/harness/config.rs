//! Declarative run configuration.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::evolution::{Direction, EvolutionConfig, Variant, MAX_DT};
use crate::ground_state::{critical_exponent, solve_ground_state, GroundStateProfile};
use crate::noise::{
    check_tail_condition, integer_ratio, make_geometry, sample_drive, GeometryParams, NoiseCase, NoiseModel, TailClosure,
    TemporalProfile, MIN_REFINEMENT,
};
use crate::soliton::{validate_family, SolitonSpec};
use crate::spectral::SpatialGrid;

/// Environment variable naming the root that relative output paths resolve
/// against.
pub const OUTPUT_ROOT_VAR: &str = "MSOL_OUTPUT_ROOT";

/// Tolerance for the ground-state solve behind every run.
const PROFILE_TOL: f64 = 1e-11;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n: usize,
    pub half_extent: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolitonConfig {
    pub frequency: f64,
    /// One entry per spatial dimension.
    pub velocity: Vec<f64>,
    pub center: Vec<f64>,
    #[serde(default)]
    pub phase: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    None,
    Exponential,
    Polynomial,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub case: NoiseKind,
    /// `a_l`; the length is the number of noise terms.
    #[serde(default = "default_amplitudes")]
    pub amplitudes: Vec<f64>,
    /// Case I temporal rate `λ` in `g = e^{−λt}`.
    #[serde(default = "default_rate")]
    pub rate: f64,
    /// Case I spatial decay `c_l`.
    #[serde(default = "default_decay")]
    pub decay: f64,
    /// Case II spatial power `υ★`.
    #[serde(default = "default_power")]
    pub power: f64,
    /// Case II temporal exponent `q` in `g = (1+t)^{−q}`.
    #[serde(default = "default_exponent")]
    pub exponent: f64,
    #[serde(default = "default_c_star")]
    pub c_star: f64,
    /// Drive fine steps per solver step.
    #[serde(default = "default_refinement")]
    pub refinement: usize,
}

fn default_amplitudes() -> Vec<f64> {
    vec![0.1]
}
fn default_rate() -> f64 {
    0.5
}
fn default_decay() -> f64 {
    1.0
}
fn default_power() -> f64 {
    8.0
}
fn default_exponent() -> f64 {
    2.0
}
fn default_c_star() -> f64 {
    1.0
}
fn default_refinement() -> usize {
    MIN_REFINEMENT
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            case: NoiseKind::None,
            amplitudes: default_amplitudes(),
            rate: default_rate(),
            decay: default_decay(),
            power: default_power(),
            exponent: default_exponent(),
            c_star: default_c_star(),
            refinement: default_refinement(),
        }
    }
}

/// Downward `T₀` scan: integrate to `min` at most and place `T₀` a margin
/// above the first decomposition failure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanConfig {
    #[serde(default = "default_scan_min")]
    pub min: f64,
    #[serde(default = "default_margin")]
    pub margin: f64,
}

fn default_scan_min() -> f64 {
    1.0
}
fn default_margin() -> f64 {
    2.0
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            min: default_scan_min(),
            margin: default_margin(),
        }
    }
}

/// Which samples enter the decay-rate fit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    /// Samples closer than this to `T_n` are dropped: the remainder starts
    /// at zero there and has not built up yet.
    #[serde(default = "default_end_offset")]
    pub end_offset: f64,
    /// Samples with `‖ε‖²_{H¹}` below this are treated as scheme noise; the
    /// default sits well above the splitting floor at `dt = 10⁻³`.
    #[serde(default = "default_floor")]
    pub floor: f64,
}

fn default_end_offset() -> f64 {
    5.0
}
fn default_floor() -> f64 {
    1e-18
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            end_offset: default_end_offset(),
            floor: default_floor(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_variant")]
    pub variant: Variant,
    pub p: f64,
    pub dim: usize,
    pub dt: f64,
    pub grid: GridConfig,
    pub solitons: Vec<SolitonConfig>,
    #[serde(default)]
    pub noise: NoiseConfig,
    pub horizons: Vec<f64>,
    #[serde(default)]
    pub scan: ScanConfig,
    #[serde(default)]
    pub fit: FitConfig,
    pub seeds: Vec<u64>,
    /// Solver steps between diagnostics snapshots.
    pub stride: usize,
    /// Snapshots between binary checkpoints; 0 keeps only `T₀` and `T_n`.
    #[serde(default)]
    pub checkpoint_every: usize,
    #[serde(default = "default_output")]
    pub output: PathBuf,
}

fn default_variant() -> Variant {
    Variant::RnlsBstarCstar
}

fn default_output() -> PathBuf {
    PathBuf::from("runs")
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Format(e.to_string()))
    }

    /// The two-soliton cubic setup on the line with noise of amplitude 0.1
    /// (the deterministic equation for `NoiseKind::None`).
    pub fn headline(case: NoiseKind) -> Self {
        let soliton = |frequency: f64, velocity: f64, center: f64| SolitonConfig {
            frequency,
            velocity: vec![velocity],
            center: vec![center],
            phase: 0.0,
        };
        Self {
            variant: if case == NoiseKind::None { Variant::Nls } else { default_variant() },
            p: 3.0,
            dim: 1,
            dt: 1e-3,
            grid: GridConfig {
                n: 2048,
                half_extent: 64.0,
            },
            solitons: vec![soliton(1.0, -1.0, -3.0), soliton(1.2, 1.0, 3.0)],
            noise: NoiseConfig {
                case,
                ..NoiseConfig::default()
            },
            horizons: vec![15.0, 20.0, 25.0],
            scan: ScanConfig::default(),
            fit: FitConfig::default(),
            seeds: vec![7],
            stride: 100,
            checkpoint_every: 0,
            output: default_output(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |msg: String| Err(Error::invalid(msg));
        if !(1..=2).contains(&self.dim) {
            return invalid(format!("dimension must be 1 or 2, got {}", self.dim));
        }
        if !(self.p > 1.0 && self.p <= critical_exponent(self.dim) + 1e-12) {
            return invalid(format!("p must lie in (1, 1 + 4/d], got {}", self.p));
        }
        if !(self.dt > 0.0 && self.dt <= MAX_DT) {
            return invalid(format!("dt must lie in (0, {MAX_DT}], got {}", self.dt));
        }
        if self.stride == 0 {
            return invalid("stride must be positive".into());
        }
        if self.horizons.is_empty() || self.seeds.is_empty() || self.solitons.is_empty() {
            return invalid("horizons, seeds and solitons must be non-empty".into());
        }
        if self.horizons.windows(2).any(|w| !(w[1] > w[0])) {
            return invalid("horizons must increase strictly".into());
        }
        let spacing = self.dt * self.stride as f64;
        for &t in &self.horizons {
            if integer_ratio(t, spacing).is_none() {
                return invalid(format!("horizon {t} is not a multiple of the snapshot spacing {spacing}"));
            }
        }
        if !(self.scan.min > 0.0 && self.scan.min < self.horizons[0] && self.scan.margin >= 0.0) {
            return invalid("scan range must satisfy 0 < min < first horizon and margin >= 0".into());
        }
        if integer_ratio(self.scan.min, spacing).is_none() {
            return invalid(format!("scan minimum {} is not a multiple of the snapshot spacing", self.scan.min));
        }
        if !(self.fit.end_offset >= 0.0 && self.fit.floor >= 0.0) {
            return invalid("fit window settings must be non-negative".into());
        }
        for (k, s) in self.solitons.iter().enumerate() {
            if s.velocity.len() != self.dim || s.center.len() != self.dim {
                return invalid(format!("soliton {k}: velocity and center need {} components", self.dim));
            }
        }
        validate_family(&self.specs()?)?;
        if self.specs()?.iter().any(|s| s.velocity == [0.0, 0.0]) {
            return invalid("every soliton needs a non-zero velocity".into());
        }
        SpatialGrid::new(self.dim, self.grid.half_extent, self.grid.n)?;
        let noisy = self.noise.case != NoiseKind::None;
        if noisy != self.variant.needs_noise() {
            return invalid(format!("variant {:?} does not match noise case {:?}", self.variant, self.noise.case));
        }
        if noisy {
            let n = &self.noise;
            if n.amplitudes.is_empty() || n.amplitudes.iter().any(|a| !a.is_finite()) {
                return invalid("noise needs at least one finite amplitude".into());
            }
            if n.refinement < MIN_REFINEMENT || n.refinement % 2 != 0 {
                return invalid(format!("refinement must be even and at least {MIN_REFINEMENT}"));
            }
            self.temporal().validate()?;
            if n.case == NoiseKind::Polynomial {
                let times: Vec<f64> = (0..=self.drive_horizon() as usize).map(|t| t as f64).collect();
                check_tail_condition(&self.temporal(), n.c_star, &times)?;
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(json.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Resolve the output directory against [`OUTPUT_ROOT_VAR`] when relative.
    pub fn output_dir(&self) -> PathBuf {
        match std::env::var_os(OUTPUT_ROOT_VAR) {
            Some(root) if self.output.is_relative() => PathBuf::from(root).join(&self.output),
            _ => self.output.clone(),
        }
    }

    pub fn spacing(&self) -> f64 {
        self.dt * self.stride as f64
    }

    pub fn make_grid(&self) -> Result<Arc<SpatialGrid>> {
        SpatialGrid::new(self.dim, self.grid.half_extent, self.grid.n)
    }

    pub fn specs(&self) -> Result<Vec<SolitonSpec>> {
        let point = |v: &[f64]| [v.first().copied().unwrap_or(0.0), v.get(1).copied().unwrap_or(0.0)];
        self.solitons
            .iter()
            .map(|s| SolitonSpec::new(s.frequency, point(&s.velocity), point(&s.center), s.phase))
            .collect()
    }

    pub fn profile(&self) -> Result<GroundStateProfile> {
        solve_ground_state(self.p, self.dim, PROFILE_TOL)
    }

    pub fn evolution(&self, direction: Direction) -> EvolutionConfig {
        EvolutionConfig::new(self.variant, self.p, self.dt, direction)
    }

    pub fn case(&self) -> Option<NoiseCase> {
        match self.noise.case {
            NoiseKind::None => None,
            NoiseKind::Exponential => Some(NoiseCase::Exponential),
            NoiseKind::Polynomial => Some(NoiseCase::Polynomial),
        }
    }

    pub fn temporal(&self) -> TemporalProfile {
        match self.noise.case {
            NoiseKind::None => TemporalProfile::Zero,
            NoiseKind::Exponential => TemporalProfile::Exponential { rate: self.noise.rate },
            NoiseKind::Polynomial => TemporalProfile::Power {
                exponent: self.noise.exponent,
            },
        }
    }

    /// `max T_n + 10/λ` in Case I and `max T_n + 10` in Case II; the tail
    /// beyond is closed exactly either way.
    pub fn drive_horizon(&self) -> f64 {
        let last = self.horizons.last().copied().unwrap_or(0.0);
        let extra = match self.noise.case {
            NoiseKind::Exponential => 10.0 / self.noise.rate,
            _ => 10.0,
        };
        // whole multiple of the solver step
        ((last + extra) / self.dt).ceil() * self.dt
    }

    pub fn geometry_params(&self) -> GeometryParams {
        GeometryParams {
            amplitudes: self.noise.amplitudes.clone(),
            decay: vec![self.noise.decay],
            power: self.noise.power,
        }
    }

    /// The noise model of one seed on `grid`, or `None` without noise.
    pub fn noise_model(&self, grid: &Arc<SpatialGrid>, seed: u64) -> Result<Option<Arc<NoiseModel>>> {
        self.noise_model_for_step(grid, seed, self.dt, self.drive_horizon())
    }

    /// As [`RunConfig::noise_model`] with the drive refined below solver
    /// step `dt` and sampled up to `horizon`.
    pub fn noise_model_for_step(&self, grid: &Arc<SpatialGrid>, seed: u64, dt: f64, horizon: f64) -> Result<Option<Arc<NoiseModel>>> {
        let Some(case) = self.case() else {
            return Ok(None);
        };
        let count = self.noise.amplitudes.len();
        let fine = dt / self.noise.refinement as f64;
        let drive = Arc::new(sample_drive(count, horizon, fine, dt, seed)?);
        let geometry = Arc::new(make_geometry(case, self.geometry_params(), count, grid)?);
        Ok(Some(Arc::new(NoiseModel::new(drive, geometry, self.temporal(), TailClosure::Exact)?)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn headline_config_round_trips_through_toml() {
        for case in [NoiseKind::Exponential, NoiseKind::Polynomial] {
            let cfg = RunConfig::headline(case);
            cfg.validate().unwrap();
            let back = RunConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
            assert_eq!(back, cfg);
            assert_eq!(back.hash(), cfg.hash());
        }
        let a = RunConfig::headline(NoiseKind::Exponential);
        let mut b = a.clone();
        b.seeds = vec![8];
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn schema_violations_are_rejected() {
        let good = RunConfig::headline(NoiseKind::Exponential).to_toml().unwrap();
        assert!(RunConfig::from_toml(&format!("bogus = 1\n{good}")).is_err());
        let mut cfg = RunConfig::headline(NoiseKind::Exponential);
        cfg.p = 6.0;
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::headline(NoiseKind::Exponential);
        cfg.horizons = vec![20.0, 15.0];
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::headline(NoiseKind::Exponential);
        cfg.solitons[1].velocity = vec![-1.0];
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::headline(NoiseKind::Exponential);
        cfg.noise.case = NoiseKind::None;
        assert!(cfg.validate().is_err());
        cfg.variant = Variant::Nls;
        cfg.validate().unwrap();
        let mut cfg = RunConfig::headline(NoiseKind::Polynomial);
        cfg.noise.exponent = 1.5;
        assert!(matches!(cfg.validate(), Err(Error::ConditionViolated { .. })));
    }

    #[test]
    fn drive_horizon_covers_the_tail_window() {
        let cfg = RunConfig::headline(NoiseKind::Exponential);
        assert!((cfg.drive_horizon() - 45.0).abs() < 1e-9);
        let grid = SpatialGrid::new(1, 8.0, 64).unwrap();
        let mut small = cfg.clone();
        small.horizons = vec![2.0];
        small.scan.min = 1.0;
        let model = small.noise_model(&grid, 3).unwrap().unwrap();
        assert_eq!(model.count(), 1);
        assert!((model.drive().horizon() - small.drive_horizon()).abs() < 1e-9);
    }
}
