//! Spatial noise profiles `φ_l` with exact derivatives.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jet::Jet;
use crate::spectral::SpatialGrid;

/// Exponential (Case I) or polynomial (Case II) spatial decay.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseCase {
    Exponential,
    Polynomial,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeometryParams {
    /// Amplitudes `a_l`; the length fixes `N`.
    pub amplitudes: Vec<f64>,
    /// Case I decay rates `c_l` (one per term, or a single shared value).
    #[serde(default = "default_decay")]
    pub decay: Vec<f64>,
    /// Case II power `υ★`.
    #[serde(default = "default_power")]
    pub power: f64,
}

fn default_decay() -> Vec<f64> {
    vec![1.0]
}

fn default_power() -> f64 {
    8.0
}

impl GeometryParams {
    pub fn uniform(count: usize, amplitude: f64) -> Self {
        Self {
            amplitudes: vec![amplitude; count],
            decay: default_decay(),
            power: default_power(),
        }
    }

    fn decay_of(&self, l: usize) -> f64 {
        if self.decay.len() == 1 {
            self.decay[0]
        } else {
            self.decay[l]
        }
    }
}

/// `φ_l` sampled on a grid together with `∇φ_l` and `Δφ_l`.
#[derive(Clone, Debug)]
pub struct NoiseGeometry {
    case: NoiseCase,
    params: GeometryParams,
    grid: Arc<SpatialGrid>,
    phi: Vec<Vec<f64>>,
    grad: Vec<Vec<Vec<f64>>>,
    lap: Vec<Vec<f64>>,
    decay_constant: f64,
}

pub fn make_geometry(case: NoiseCase, params: GeometryParams, count: usize, grid: &Arc<SpatialGrid>) -> Result<NoiseGeometry> {
    if params.amplitudes.len() != count {
        return Err(Error::invalid(format!(
            "expected {count} amplitudes, got {}",
            params.amplitudes.len()
        )));
    }
    match case {
        NoiseCase::Exponential => {
            if !(params.decay.len() == 1 || params.decay.len() == count) {
                return Err(Error::invalid("decay rates must be one shared value or one per term"));
            }
            if params.decay.iter().any(|&c| !(c > 0.0)) {
                return Err(Error::invalid("Case I decay rates must be positive"));
            }
        }
        NoiseCase::Polynomial => {
            if !(params.power >= 3.0) {
                return Err(Error::invalid(format!("Case II power must be at least 3, got {}", params.power)));
            }
        }
    }
    let dim = grid.dim();
    let mut geo = NoiseGeometry {
        case,
        params,
        grid: grid.clone(),
        phi: Vec::with_capacity(count),
        grad: Vec::with_capacity(count),
        lap: Vec::with_capacity(count),
        decay_constant: 0.0,
    };
    for l in 0..count {
        let mut phi = Vec::with_capacity(grid.len());
        let mut grad = vec![Vec::with_capacity(grid.len()); dim];
        let mut lap = Vec::with_capacity(grid.len());
        for i in 0..grid.len() {
            let x = grid.point(i);
            let jet = geo.jet(l, x);
            phi.push(jet.value());
            for (a, g) in grad.iter_mut().enumerate() {
                g.push(jet.gradient()[a]);
            }
            lap.push(jet.laplacian(dim));
            // Σ_{|ν|<=4} |∂^ν φ| against the decay envelope
            let total: f64 = jet.value().abs() + jet.partials(dim).map(|(_, d)| d.abs()).sum::<f64>();
            let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
            let weight = match case {
                NoiseCase::Exponential => (geo.params.decay_of(l) * r).exp(),
                NoiseCase::Polynomial if r >= 1.0 => r.powf(geo.params.power),
                NoiseCase::Polynomial => 1.0,
            };
            geo.decay_constant = geo.decay_constant.max(total * weight);
        }
        geo.phi.push(phi);
        geo.grad.push(grad);
        geo.lap.push(lap);
    }
    geo.check_flatness()?;
    Ok(geo)
}

pub fn decay_function(case: NoiseCase, power: f64, x: f64) -> f64 {
    match case {
        NoiseCase::Exponential => (-x.abs()).exp(),
        NoiseCase::Polynomial => x.abs().max(1.0).powf(-power),
    }
}

impl NoiseGeometry {
    pub fn case(&self) -> NoiseCase {
        self.case
    }

    pub fn params(&self) -> &GeometryParams {
        &self.params
    }

    pub fn count(&self) -> usize {
        self.phi.len()
    }

    pub fn grid(&self) -> &Arc<SpatialGrid> {
        &self.grid
    }

    /// Taylor jet of `φ_l` at `x`.
    pub fn jet(&self, l: usize, x: [f64; 2]) -> Jet {
        let a = self.params.amplitudes[l];
        let xs = Jet::variable(0, x[0]);
        let ys = Jet::variable(1, x[1]);
        let one_plus_r2 = Jet::constant(1.0) + xs * xs + ys * ys;
        match self.case {
            NoiseCase::Exponential => (one_plus_r2.sqrt().scale(-self.params.decay_of(l))).exp().scale(a),
            NoiseCase::Polynomial => one_plus_r2.powf(-self.params.power / 2.0).scale(a),
        }
    }

    pub fn value_at(&self, l: usize, x: [f64; 2]) -> f64 {
        let a = self.params.amplitudes[l];
        let r2 = x[0] * x[0] + x[1] * x[1];
        match self.case {
            NoiseCase::Exponential => a * (-self.params.decay_of(l) * (1.0 + r2).sqrt()).exp(),
            NoiseCase::Polynomial => a * (1.0 + r2).powf(-self.params.power / 2.0),
        }
    }

    pub fn phi(&self, l: usize) -> &[f64] {
        &self.phi[l]
    }

    pub fn grad(&self, l: usize, axis: usize) -> &[f64] {
        &self.grad[l][axis]
    }

    pub fn laplacian(&self, l: usize) -> &[f64] {
        &self.lap[l]
    }

    /// Decay function `φ`: `e^{-|x|}` in Case I, `|x|^{-υ★}` in Case II
    /// (held at 1 inside the unit ball).
    pub fn decay_function(&self, x: f64) -> f64 {
        decay_function(self.case, self.params.power, x)
    }

    /// Smallest `C` with `Σ_{|ν|<=4} |∂^ν φ_l| <= C·envelope` on the grid.
    pub fn decay_constant(&self) -> f64 {
        self.decay_constant
    }

    /// The envelope of `|x|² |∂^ν φ_l|` must decrease toward the boundary:
    /// along the first axis, its maximum over the outer quarter of the box
    /// may not exceed its maximum over the quarter inside it, for every
    /// derivative of order 1 to 4.
    fn check_flatness(&self) -> Result<()> {
        let grid = &self.grid;
        let dim = grid.dim();
        let (half, outer) = (grid.half_extent() / 2.0, 0.75 * grid.half_extent());
        for l in 0..self.count() {
            let mut inner_max: Vec<f64> = Vec::new();
            let mut outer_max: Vec<f64> = Vec::new();
            for &x in grid.axis_coords().iter().filter(|&&x| x >= half) {
                let jet = self.jet(l, [x, 0.0]);
                let target = if x < outer { &mut inner_max } else { &mut outer_max };
                for (k, (_, d)) in jet.partials(dim).enumerate() {
                    let v = x * x * d.abs();
                    match target.get_mut(k) {
                        Some(m) => *m = m.max(v),
                        None => target.push(v),
                    }
                }
            }
            for (a, b) in inner_max.iter().zip(&outer_max) {
                if b > a && *b > 1e-300 {
                    return Err(Error::invalid(format!(
                        "noise profile {l} is not asymptotically flat: boundary envelope {b:.3e} exceeds {a:.3e}"
                    )));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid1() -> Arc<SpatialGrid> {
        SpatialGrid::new(1, 64.0, 1024).unwrap()
    }

    #[test]
    fn exponential_profile_is_flat_at_the_boundary() {
        let g = grid1();
        let geo = make_geometry(NoiseCase::Exponential, GeometryParams::uniform(1, 1.0), 1, &g).unwrap();
        let x = -g.half_extent();
        assert!(x * x * geo.grad(0, 0)[0].abs() < 1e-20);
        assert!(geo.decay_constant().is_finite());
    }

    #[test]
    fn polynomial_ratio() {
        let g = grid1();
        let geo = make_geometry(NoiseCase::Polynomial, GeometryParams::uniform(1, 1.0), 1, &g).unwrap();
        let ratio = geo.value_at(0, [10.0, 0.0]) / geo.value_at(0, [5.0, 0.0]);
        assert!((ratio - (26.0f64 / 101.0).powi(4)).abs() < 1e-15);
        assert!((ratio - 4.39e-3).abs() < 1e-5);
    }

    #[test]
    fn polynomial_flatness_decreases() {
        let g = grid1();
        let geo = make_geometry(NoiseCase::Polynomial, GeometryParams::uniform(2, 0.3), 2, &g).unwrap();
        let coords = g.axis_coords();
        let tail: Vec<f64> = (g.n() * 3 / 4..g.n()).map(|i| coords[i] * coords[i] * geo.grad(1, 0)[i].abs()).collect();
        assert!(tail.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn analytic_derivatives_match_closed_forms() {
        let g = SpatialGrid::new(2, 8.0, 32).unwrap();
        let c = 0.7;
        let a = 1.3;
        let p1 = GeometryParams {
            amplitudes: vec![a],
            decay: vec![c],
            power: 8.0,
        };
        let geo = make_geometry(NoiseCase::Exponential, p1, 1, &g).unwrap();
        let p2 = GeometryParams {
            amplitudes: vec![a],
            decay: vec![1.0],
            power: 5.0,
        };
        let poly = make_geometry(NoiseCase::Polynomial, p2, 1, &g).unwrap();
        let d = 2.0;
        for i in (0..g.len()).step_by(37) {
            let x = g.point(i);
            let r2 = x[0] * x[0] + x[1] * x[1];
            let s = (1.0 + r2).sqrt();
            let e = (-c * s).exp();
            let gx = -a * c * e * x[0] / s;
            let lap = -a * c * e * (1.0 / s.powi(3) - c * r2 / (s * s) + (d - 1.0) / s);
            assert!((geo.grad(0, 0)[i] - gx).abs() < 1e-13);
            assert!((geo.laplacian(0)[i] - lap).abs() < 1e-12);
            let u = 5.0;
            let gx = -a * u * s.powf(-u - 2.0) * x[0];
            let lap = a * (-d * u * s.powf(-u - 2.0) + u * (u + 2.0) * r2 * s.powf(-u - 4.0));
            assert!((poly.grad(0, 0)[i] - gx).abs() < 1e-13);
            assert!((poly.laplacian(0)[i] - lap).abs() < 1e-12);
        }
    }

    #[test]
    fn parameter_validation() {
        let g = grid1();
        let mut p = GeometryParams::uniform(1, 1.0);
        p.power = 2.0;
        assert!(make_geometry(NoiseCase::Polynomial, p, 1, &g).is_err());
        let mut p = GeometryParams::uniform(1, 1.0);
        p.decay = vec![0.0];
        assert!(make_geometry(NoiseCase::Exponential, p, 1, &g).is_err());
        assert!(make_geometry(NoiseCase::Exponential, GeometryParams::uniform(2, 1.0), 1, &g).is_err());
    }
}
