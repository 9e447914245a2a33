//! Localization functions `φ_k(t, x)` built from a seventh-order smooth step.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::soliton::{dot, Point, SolitonSpec};
use crate::spectral::SpatialGrid;

/// `S(s) = 35s⁴ − 84s⁵ + 70s⁶ − 20s⁷`, with `S(0) = 0`, `S(1) = 1` and three
/// vanishing derivatives at both ends.
const STEP: [f64; 8] = [0.0, 0.0, 0.0, 0.0, 35.0, -84.0, 70.0, -20.0];

fn step_derivative(order: usize, s: f64) -> f64 {
    if s <= 0.0 {
        return 0.0;
    }
    if s >= 1.0 {
        return if order == 0 { 1.0 } else { 0.0 };
    }
    STEP.iter()
        .enumerate()
        .skip(order)
        .map(|(j, &c)| {
            let falling: f64 = (0..order).map(|i| (j - i) as f64).product();
            c * falling * s.powi((j - order) as i32)
        })
        .sum()
}

/// Non-decreasing `ψ` with `ψ = 0` below `−A₀` and `ψ = 1` above `A₀`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SmoothStep {
    half_width: f64,
}

impl SmoothStep {
    pub fn new(half_width: f64) -> Result<Self> {
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(Error::invalid(format!("smooth step half width must be positive, got {half_width}")));
        }
        Ok(Self { half_width })
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    /// `ψ^{(order)}(x)`.
    pub fn derivative(&self, order: usize, x: f64) -> f64 {
        let w = 2.0 * self.half_width;
        step_derivative(order, (x + self.half_width) / w) / w.powi(order as i32)
    }

    pub fn value(&self, x: f64) -> f64 {
        self.derivative(0, x)
    }

    /// Sampled `(sup ψ′²/ψ, sup ψ″²/ψ′)` over the transition layer.
    pub fn constants(&self) -> (f64, f64) {
        let a = self.half_width;
        let samples = 20_000;
        let (mut c1, mut c2): (f64, f64) = (0.0, 0.0);
        for i in 1..samples {
            let x = -a + 2.0 * a * i as f64 / samples as f64;
            let (v, d1, d2) = (self.value(x), self.derivative(1, x), self.derivative(2, x));
            if v > 0.0 {
                c1 = c1.max(d1 * d1 / v);
            }
            if d1 > 0.0 {
                c2 = c2.max(d2 * d2 / d1);
            }
        }
        (c1, c2)
    }
}

/// The `K` localization functions of a soliton family.
#[derive(Clone, Debug)]
pub struct LocalizerSet {
    direction: Point,
    /// Position of each soliton in the ordering by `v_k·e₁`.
    rank: Vec<usize>,
    /// `σ_i` between the solitons at positions `i − 1` and `i`.
    midpoints: Vec<f64>,
    step: SmoothStep,
}

impl LocalizerSet {
    /// Picks `e₁` among eight directions of the half circle to maximise the
    /// smallest gap of the projected velocities (always the first axis in 1D).
    pub fn new(specs: &[SolitonSpec], dim: usize) -> Result<Self> {
        if specs.is_empty() {
            return Err(Error::invalid("localizers need at least one soliton"));
        }
        let candidates: Vec<Point> = if dim == 1 {
            vec![[1.0, 0.0]]
        } else {
            (0..8).map(|j| [(j as f64 * PI / 8.0).cos(), (j as f64 * PI / 8.0).sin()]).collect()
        };
        let gap_of = |e: Point| {
            let mut proj: Vec<f64> = specs.iter().map(|s| dot(s.velocity, e)).collect();
            proj.sort_by(f64::total_cmp);
            proj.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
        };
        let direction = candidates
            .into_iter()
            .max_by(|a, b| gap_of(*a).total_cmp(&gap_of(*b)))
            .expect("non-empty candidate list");
        let min_gap = gap_of(direction);
        if specs.len() > 1 && !(min_gap > 0.0) {
            return Err(Error::invalid("projected velocities must be pairwise distinct"));
        }
        let proj: Vec<f64> = specs.iter().map(|s| dot(s.velocity, direction)).collect();
        let mut order: Vec<usize> = (0..specs.len()).collect();
        order.sort_by(|&a, &b| proj[a].total_cmp(&proj[b]));
        let mut rank = vec![0; specs.len()];
        for (pos, &k) in order.iter().enumerate() {
            rank[k] = pos;
        }
        let midpoints = order.windows(2).map(|w| 0.5 * (proj[w[0]] + proj[w[1]])).collect();
        let half_width = if specs.len() > 1 { min_gap / 4.0 } else { 1.0 };
        Ok(Self {
            direction,
            rank,
            midpoints,
            step: SmoothStep::new(half_width)?,
        })
    }

    pub fn count(&self) -> usize {
        self.rank.len()
    }

    pub fn direction(&self) -> Point {
        self.direction
    }

    pub fn step(&self) -> &SmoothStep {
        &self.step
    }

    pub fn midpoints(&self) -> &[f64] {
        &self.midpoints
    }

    /// `ψ((x₁ − σ_i t)/t)` and its `x₁` derivatives of order 1 and 3 and its
    /// time derivative.
    fn edge(&self, i: usize, t: f64, x1: f64) -> [f64; 4] {
        let sigma = self.midpoints[i - 1];
        let z = (x1 - sigma * t) / t;
        let d1 = self.step.derivative(1, z);
        [
            self.step.value(z),
            d1 / t,
            self.step.derivative(3, z) / t.powi(3),
            -d1 * x1 / (t * t),
        ]
    }

    /// `[φ_k, ∂₁φ_k, ∂₁³φ_k, ∂_tφ_k]` at `(t, x)`.
    pub fn jet(&self, k: usize, t: f64, x: Point) -> [f64; 4] {
        let count = self.count();
        if count == 1 {
            return [1.0, 0.0, 0.0, 0.0];
        }
        let x1 = dot(x, self.direction);
        let r = self.rank[k];
        let lower = (r > 0).then(|| self.edge(r, t, x1));
        let upper = (r + 1 < count).then(|| self.edge(r + 1, t, x1));
        let mut out = [0.0; 4];
        match (lower, upper) {
            (None, Some(u)) => {
                out = u.map(|v| -v);
                out[0] += 1.0;
            }
            (Some(l), None) => out = l,
            (Some(l), Some(u)) => {
                for i in 0..4 {
                    out[i] = l[i] - u[i];
                }
            }
            (None, None) => unreachable!("count > 1"),
        }
        out
    }

    pub fn value(&self, k: usize, t: f64, x: Point) -> f64 {
        self.jet(k, t, x)[0]
    }

    /// All `K` localizers sampled on the grid; `t` must be positive.
    pub fn sample(&self, t: f64, grid: &Arc<SpatialGrid>) -> Result<Vec<Vec<f64>>> {
        if !(t > 0.0) {
            return Err(Error::invalid(format!("localizers are defined for t > 0, got {t}")));
        }
        Ok((0..self.count())
            .map(|k| (0..grid.len()).map(|i| self.value(k, t, grid.point(i))).collect())
            .collect())
    }

    /// `max t·(|∂₁φ_k| + |∂₁³φ_k| + |∂_tφ_k|)` over the grid and all `k`.
    pub fn slope_constant(&self, t: f64, grid: &SpatialGrid) -> f64 {
        let mut worst: f64 = 0.0;
        for k in 0..self.count() {
            for i in 0..grid.len() {
                let j = self.jet(k, t, grid.point(i));
                worst = worst.max(t * (j[1].abs() + j[2].abs() + j[3].abs()));
            }
        }
        worst
    }
}
