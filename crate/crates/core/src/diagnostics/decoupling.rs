//! Overlap integrals of two moving profiles.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fit::linear_fit;
use crate::soliton::{norm_sq, Point};
use crate::spectral::SpatialGrid;

/// Scaling, velocity, translation and power of one factor
/// `|w^{-2/(p−1)} g((x − vt − α)/w)|^{power}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OverlapFactor {
    pub frequency: f64,
    pub velocity: Point,
    pub translation: Point,
    pub power: f64,
}

impl OverlapFactor {
    fn eval<G: Fn(Point) -> f64>(&self, g: &G, p: f64, t: f64, x: Point) -> f64 {
        let w = self.frequency;
        let y = [
            (x[0] - self.velocity[0] * t - self.translation[0]) / w,
            (x[1] - self.velocity[1] * t - self.translation[1]) / w,
        ];
        (w.powf(-2.0 / (p - 1.0)) * g(y)).abs().powf(self.power)
    }
}

/// `∫ |G_{1,j}|^{p₁} |G_{2,k}|^{p₂}` on the grid at time `t`.
pub fn decoupling_integral<G1, G2>(
    g1: G1,
    g2: G2,
    first: &OverlapFactor,
    second: &OverlapFactor,
    p: f64,
    t: f64,
    grid: &Arc<SpatialGrid>,
) -> f64
where
    G1: Fn(Point) -> f64,
    G2: Fn(Point) -> f64,
{
    (0..grid.len())
        .map(|i| {
            let x = grid.point(i);
            first.eval(&g1, p, t, x) * second.eval(&g2, p, t, x)
        })
        .sum::<f64>()
        * grid.cell_volume()
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecouplingFit {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    /// Slope of `log ∫ ≈ a + slope·t`.
    pub slope: f64,
    pub r_squared: f64,
    /// `−slope / |v_j − v_k|`.
    pub rate: f64,
}

/// Log-linear fit of the overlap over a time sweep.
pub fn decoupling_sweep<G1, G2>(
    g1: G1,
    g2: G2,
    first: &OverlapFactor,
    second: &OverlapFactor,
    p: f64,
    times: &[f64],
    grid: &Arc<SpatialGrid>,
) -> Result<DecouplingFit>
where
    G1: Fn(Point) -> f64,
    G2: Fn(Point) -> f64,
{
    let dv = norm_sq([first.velocity[0] - second.velocity[0], first.velocity[1] - second.velocity[1]]).sqrt();
    if dv == 0.0 {
        return Err(Error::invalid("decoupling needs distinct velocities"));
    }
    let values: Vec<f64> = times
        .iter()
        .map(|&t| decoupling_integral(&g1, &g2, first, second, p, t, grid))
        .collect();
    if values.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::insufficient("overlap underflowed on the sweep"));
    }
    let points: Vec<(f64, f64)> = times.iter().zip(&values).map(|(&t, &v)| (t, v.ln())).collect();
    let (slope, _, r_squared) = linear_fit(&points).ok_or_else(|| Error::insufficient("need two sweep times"))?;
    Ok(DecouplingFit {
        times: times.to_vec(),
        values,
        slope,
        r_squared,
        rate: -slope / dv,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn factor(w: f64, v: f64, a: f64, power: f64) -> OverlapFactor {
        OverlapFactor {
            frequency: w,
            velocity: [v, 0.0],
            translation: [a, 0.0],
            power,
        }
    }

    #[test]
    fn gaussian_overlap_matches_closed_form() {
        let grid = SpatialGrid::new(1, 30.0, 4096).unwrap();
        let gauss = |y: Point| (-y[0] * y[0] / 2.0).exp();
        let p = 3.0;
        let (a, b) = (factor(1.3, -1.0, 0.4, 1.5), factor(0.8, 1.0, -0.2, 2.0));
        for &t in &[0.0, 0.5, 1.5] {
            let num = decoupling_integral(gauss, gauss, &a, &b, p, t, &grid);
            // ∫ e^{−A(x−c₁)²/2} e^{−B(x−c₂)²/2} = √(2π/(A+B)) e^{−AB(c₁−c₂)²/(2(A+B))}
            let ca = a.velocity[0] * t + a.translation[0];
            let cb = b.velocity[0] * t + b.translation[0];
            let aa = a.power / (a.frequency * a.frequency);
            let bb = b.power / (b.frequency * b.frequency);
            let amp = a.frequency.powf(-2.0 / (p - 1.0) * a.power) * b.frequency.powf(-2.0 / (p - 1.0) * b.power);
            let exact = amp * (2.0 * PI / (aa + bb)).sqrt() * (-aa * bb * (ca - cb).powi(2) / (2.0 * (aa + bb))).exp();
            assert!((num - exact).abs() < 1e-8, "t = {t}: {num} vs {exact}");
        }
    }

    #[test]
    fn coincident_profiles_give_the_squared_norm() {
        let grid = SpatialGrid::new(1, 30.0, 4096).unwrap();
        let sech = |y: Point| 2f64.sqrt() / y[0].cosh();
        let f = factor(1.0, 1.0, 0.0, 1.0);
        let g = factor(1.0, -1.0, 0.0, 1.0);
        assert!((decoupling_integral(sech, sech, &f, &g, 3.0, 0.0, &grid) - 4.0).abs() < 1e-10);
    }

    #[test]
    fn sech_overlap_decays_log_linearly() {
        let grid = SpatialGrid::new(1, 60.0, 8192).unwrap();
        let sech = |y: Point| 2f64.sqrt() / y[0].cosh();
        let (a, b) = (factor(1.0, -1.0, 0.0, 1.0), factor(1.2, 1.0, 0.0, 1.0));
        let times: Vec<f64> = (0..=16).map(|i| 2.0 + 0.5 * i as f64).collect();
        let fit = decoupling_sweep(sech, sech, &a, &b, 3.0, &times, &grid).unwrap();
        assert!(fit.slope < 0.0 && fit.r_squared > 0.99, "{fit:?}");
        // the slower tail sets the rate: 2·min(1/w) = 2/1.2 up to the
        // polynomial prefactor
        let bound = 2.0 / 1.2;
        assert!(-fit.slope < bound * 1.05 && -fit.slope > bound * 0.7, "{}", fit.slope);
    }
}
