//! Brownian drives on a fine mesh, enhanced with their Itô iterated
//! integrals.

use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Smallest admissible number of fine steps per coarse step.
pub const MIN_REFINEMENT: usize = 16;

/// Default Hölder exponent used for norm reporting.
pub const DEFAULT_HOLDER_EXPONENT: f64 = 0.4;

const MAGIC: &[u8; 8] = b"MSOLDRV1";

/// `N` independent Brownian paths `B_l` sampled on a uniform fine mesh.
///
/// Off-diagonal iterated integrals come from prefix sums of left-point
/// products, `S_jk(n) = Σ_{r<n} B_j(t_r) δB_k(r)`, so that
/// `𝔹_jk(s,t) = S_jk(t) − S_jk(s) − B_j(s)(B_k(t) − B_k(s))`.
#[derive(Clone, Debug)]
pub struct RoughDrive {
    seed: u64,
    fine_step: f64,
    refinement: usize,
    holder_exponent: f64,
    paths: Vec<Vec<f64>>,
    /// One extra standard normal per path, reserved for closing stochastic
    /// integrals beyond the horizon exactly.
    tail_normals: Vec<f64>,
    cross: Vec<Vec<f64>>,
}

/// Sample `count` paths on `[0, horizon]` with fine step `fine_step`; the
/// solver mesh `coarse_step` must be a multiple (at least 16x) of it.
pub fn sample_drive(count: usize, horizon: f64, fine_step: f64, coarse_step: f64, seed: u64) -> Result<RoughDrive> {
    if count == 0 {
        return Err(Error::invalid("a drive needs at least one path"));
    }
    if !(fine_step > 0.0 && horizon > 0.0) {
        return Err(Error::invalid("horizon and fine step must be positive"));
    }
    let refinement = integer_ratio(coarse_step, fine_step)
        .ok_or_else(|| Error::invalid("the fine step must divide the coarse step"))?;
    if refinement < MIN_REFINEMENT {
        return Err(Error::invalid(format!(
            "refinement factor {refinement} is below the minimum {MIN_REFINEMENT}"
        )));
    }
    let steps = integer_ratio(horizon, fine_step).ok_or_else(|| Error::invalid("the fine step must divide the horizon"))?;
    let sd = fine_step.sqrt();
    let mut paths = Vec::with_capacity(count);
    let mut tail_normals = Vec::with_capacity(count);
    for l in 0..count {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(l as u64);
        let mut b = Vec::with_capacity(steps + 1);
        let mut acc = 0.0;
        b.push(0.0);
        for _ in 0..steps {
            let z: f64 = StandardNormal.sample(&mut rng);
            acc += sd * z;
            b.push(acc);
        }
        paths.push(b);
        tail_normals.push(StandardNormal.sample(&mut rng));
    }
    Ok(RoughDrive::from_parts(seed, fine_step, refinement, paths, tail_normals))
}

/// `a / b` when it is (numerically) a positive integer.
pub fn integer_ratio(a: f64, b: f64) -> Option<usize> {
    let r = a / b;
    let n = r.round();
    (n >= 1.0 && (r - n).abs() < 1e-6).then_some(n as usize)
}

impl RoughDrive {
    fn from_parts(seed: u64, fine_step: f64, refinement: usize, paths: Vec<Vec<f64>>, tail_normals: Vec<f64>) -> Self {
        let count = paths.len();
        let steps = paths[0].len() - 1;
        let mut cross = vec![Vec::new(); count * count];
        for j in 0..count {
            for k in 0..count {
                if j == k {
                    continue;
                }
                let (bj, bk) = (&paths[j], &paths[k]);
                let mut s = Vec::with_capacity(steps + 1);
                let mut acc = 0.0;
                s.push(0.0);
                for r in 0..steps {
                    acc += bj[r] * (bk[r + 1] - bk[r]);
                    s.push(acc);
                }
                cross[j * count + k] = s;
            }
        }
        Self {
            seed,
            fine_step,
            refinement,
            holder_exponent: DEFAULT_HOLDER_EXPONENT,
            paths,
            tail_normals,
            cross,
        }
    }

    pub fn count(&self) -> usize {
        self.paths.len()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn fine_step(&self) -> f64 {
        self.fine_step
    }

    /// Fine steps per coarse (solver) step.
    pub fn refinement(&self) -> usize {
        self.refinement
    }

    pub fn coarse_step(&self) -> f64 {
        self.fine_step * self.refinement as f64
    }

    pub fn steps(&self) -> usize {
        self.paths[0].len() - 1
    }

    pub fn horizon(&self) -> f64 {
        self.steps() as f64 * self.fine_step
    }

    pub fn holder_exponent(&self) -> f64 {
        self.holder_exponent
    }

    pub fn with_holder_exponent(mut self, alpha: f64) -> Result<Self> {
        if !(alpha > 1.0 / 3.0 && alpha < 0.5) {
            return Err(Error::invalid(format!("Hölder exponent must lie in (1/3, 1/2), got {alpha}")));
        }
        self.holder_exponent = alpha;
        Ok(self)
    }

    pub fn time(&self, index: usize) -> f64 {
        index as f64 * self.fine_step
    }

    /// Fine-mesh index of `t`, which must be a mesh node inside the horizon.
    pub fn index_of(&self, t: f64) -> Result<usize> {
        let x = t / self.fine_step;
        let n = x.round();
        if (x - n).abs() > 1e-6 || n < 0.0 || n as usize > self.steps() {
            return Err(Error::invalid(format!(
                "time {t} is not a fine-mesh node in [0, {}]",
                self.horizon()
            )));
        }
        Ok(n as usize)
    }

    pub fn path(&self, l: usize) -> &[f64] {
        &self.paths[l]
    }

    pub fn value(&self, l: usize, index: usize) -> f64 {
        self.paths[l][index]
    }

    pub fn tail_normal(&self, l: usize) -> f64 {
        self.tail_normals[l]
    }

    /// `δB_l` between two fine indices.
    pub fn increment(&self, l: usize, s: usize, t: usize) -> f64 {
        self.paths[l][t] - self.paths[l][s]
    }

    /// Itô iterated integral `𝔹_jk(s,t) = ∫_s^t δB_j(s,r) dB_k(r)` between
    /// fine indices. The diagonal uses the exact identity.
    pub fn iterated(&self, j: usize, k: usize, s: usize, t: usize) -> f64 {
        if j == k {
            let d = self.increment(j, s, t);
            return 0.5 * (d * d - (t - s) as f64 * self.fine_step);
        }
        let c = &self.cross[j * self.count() + k];
        c[t] - c[s] - self.paths[j][s] * self.increment(k, s, t)
    }

    /// `𝔹_jk + 𝔹_kj + δ_jk (t−s) − δB_j δB_k` on `[s, t]`.
    pub fn symmetrization_residual(&self, j: usize, k: usize, s: usize, t: usize) -> f64 {
        let delta = if j == k { (t - s) as f64 * self.fine_step } else { 0.0 };
        self.iterated(j, k, s, t) + self.iterated(k, j, s, t) + delta - self.increment(j, s, t) * self.increment(k, s, t)
    }

    /// The same Brownian paths observed on a mesh `factor` times coarser.
    /// Iterated integrals of the result are left-point sums on that mesh.
    pub fn coarsened(&self, factor: usize) -> Result<RoughDrive> {
        if factor == 0 || self.steps() % factor != 0 {
            return Err(Error::invalid("coarsening factor must divide the step count"));
        }
        if factor == 1 {
            return Ok(self.clone());
        }
        let paths = self.paths.iter().map(|p| p.iter().step_by(factor).copied().collect()).collect();
        let refinement = (self.refinement / factor).max(1);
        let mut d = RoughDrive::from_parts(self.seed, self.fine_step * factor as f64, refinement, paths, self.tail_normals.clone());
        d.holder_exponent = self.holder_exponent;
        Ok(d)
    }

    /// Binary layout: magic, seed (u64), count (u32), refinement (u32),
    /// fine step (f64), steps (u64), tail normals, then the path values, all
    /// little-endian.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        let mut buf = Vec::with_capacity(40 + 8 * self.count() * (self.steps() + 2));
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&self.seed.to_le_bytes());
        buf.extend_from_slice(&(self.count() as u32).to_le_bytes());
        buf.extend_from_slice(&(self.refinement as u32).to_le_bytes());
        buf.extend_from_slice(&self.fine_step.to_le_bytes());
        buf.extend_from_slice(&(self.steps() as u64).to_le_bytes());
        for z in &self.tail_normals {
            buf.extend_from_slice(&z.to_le_bytes());
        }
        for p in &self.paths {
            for v in p {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<RoughDrive> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        if bytes.len() < 40 || &bytes[..8] != MAGIC {
            return Err(Error::Format("not a drive file".into()));
        }
        let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let seed = u64_at(8);
        let count = u32_at(16) as usize;
        let refinement = u32_at(20) as usize;
        let fine_step = f64_at(24);
        let steps = u64_at(32) as usize;
        let expected = 40 + 8 * count * (steps + 2);
        if count == 0 || bytes.len() != expected {
            return Err(Error::Format(format!("drive file has {} bytes, expected {expected}", bytes.len())));
        }
        let tail_normals = (0..count).map(|l| f64_at(40 + 8 * l)).collect();
        let base = 40 + 8 * count;
        let paths = (0..count)
            .map(|l| (0..=steps).map(|i| f64_at(base + 8 * (l * (steps + 1) + i))).collect())
            .collect();
        Ok(RoughDrive::from_parts(seed, fine_step, refinement, paths, tail_normals))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn starts_at_zero_and_is_seeded() {
        let a = sample_drive(2, 1.0, 1.0 / 1024.0, 1.0 / 64.0, 3).unwrap();
        let b = sample_drive(2, 1.0, 1.0 / 1024.0, 1.0 / 64.0, 3).unwrap();
        let c = sample_drive(2, 1.0, 1.0 / 1024.0, 1.0 / 64.0, 4).unwrap();
        assert_eq!(a.value(0, 0), 0.0);
        assert_eq!(a.value(1, 0), 0.0);
        assert_eq!(a.path(1), b.path(1));
        assert_ne!(a.path(1), c.path(1));
        assert_ne!(a.path(0), a.path(1));
    }

    #[test]
    fn rejects_coarse_meshes() {
        assert!(sample_drive(1, 1.0, 0.01, 0.08, 0).is_err());
        assert!(sample_drive(1, 1.0, 0.01, 0.165, 0).is_err());
        assert!(sample_drive(1, 1.0, 0.01, 0.16, 0).is_ok());
    }

    #[test]
    fn symmetrization_on_coarse_intervals() {
        let d = sample_drive(3, 2.0, 1.0 / 2048.0, 1.0 / 64.0, 11).unwrap();
        let r = d.refinement();
        for c in 0..d.steps() / r {
            let (s, t) = (c * r, (c + 1) * r);
            for j in 0..3 {
                assert!(d.symmetrization_residual(j, j, s, t).abs() < 1e-12);
                for k in 0..3 {
                    // left-point sums satisfy the identity up to the fine quadratic covariation
                    let cov: f64 = (s..t).map(|i| d.increment(j, i, i + 1) * d.increment(k, i, i + 1)).sum();
                    let delta = if j == k { 0.0 } else { cov };
                    assert!((d.symmetrization_residual(j, k, s, t) + delta).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn off_diagonal_matches_direct_sum() {
        let d = sample_drive(2, 1.0, 1.0 / 512.0, 1.0 / 32.0, 5).unwrap();
        let (s, t) = (37, 301);
        let direct: f64 = (s..t).map(|r| d.increment(0, s, r) * d.increment(1, r, r + 1)).sum();
        assert!((d.iterated(0, 1, s, t) - direct).abs() < 1e-12);
    }

    #[test]
    fn increments_have_the_right_variance() {
        let d = sample_drive(1, 64.0, 1.0 / 256.0, 1.0 / 16.0, 1).unwrap();
        let n = d.steps();
        let var: f64 = (0..n).map(|i| d.increment(0, i, i + 1).powi(2)).sum::<f64>() / n as f64;
        assert!((var * 256.0 - 1.0).abs() < 0.02);
    }

    #[test]
    fn binary_round_trip() {
        let d = sample_drive(2, 0.5, 1.0 / 256.0, 1.0 / 16.0, 9).unwrap();
        let mut buf = Vec::new();
        d.write_binary(&mut buf).unwrap();
        let back = RoughDrive::read_binary(&buf[..]).unwrap();
        assert_eq!(back.path(0), d.path(0));
        assert_eq!(back.path(1), d.path(1));
        assert_eq!(back.seed(), 9);
        assert_eq!(back.iterated(0, 1, 3, 100), d.iterated(0, 1, 3, 100));
        assert!(RoughDrive::read_binary(&buf[..20]).is_err());
    }

    #[test]
    fn coarsening_keeps_the_path() {
        let d = sample_drive(2, 1.0, 1.0 / 1024.0, 1.0 / 32.0, 2).unwrap();
        let c = d.coarsened(4).unwrap();
        assert_eq!(c.steps() * 4, d.steps());
        assert_eq!(c.value(1, 10), d.value(1, 40));
    }

    #[test]
    fn diagonal_iterated_integral_is_centered() {
        // 𝔹_kk(0,1) = (B(1)² − 1)/2 has standard deviation 1/√2
        let seeds = 10_000;
        let mean = (0..seeds)
            .map(|seed| {
                let d = sample_drive(1, 1.0, 1.0 / 16.0, 1.0, seed).unwrap();
                d.iterated(0, 0, 0, d.steps())
            })
            .sum::<f64>()
            / seeds as f64;
        assert!(mean.abs() < 3.0 * std::f64::consts::FRAC_1_SQRT_2 / 100.0, "{mean}");
    }

    #[test]
    fn holder_norm_of_a_sample_is_finite() {
        let d = sample_drive(1, 1.0, 1.0 / 1024.0, 1.0 / 64.0, 8).unwrap();
        let r = crate::rough::holder_seminorm(d.path(0), d.fine_step(), d.holder_exponent());
        assert!(r.value.is_finite() && r.value > 0.0);
    }
}
