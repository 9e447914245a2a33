//! Truncated bivariate Taylor polynomials (total order 4), used to get exact
//! partial derivatives of closed-form noise profiles.

use std::ops::{Add, Mul, Neg, Sub};

pub const ORDER: usize = 4;
const LEN: usize = 15;

/// Multi-indices `(i, j)` with `i + j <= 4`, ordered by total degree.
const INDICES: [(usize, usize); LEN] = [
    (0, 0),
    (1, 0),
    (0, 1),
    (2, 0),
    (1, 1),
    (0, 2),
    (3, 0),
    (2, 1),
    (1, 2),
    (0, 3),
    (4, 0),
    (3, 1),
    (2, 2),
    (1, 3),
    (0, 4),
];

const fn slot(i: usize, j: usize) -> usize {
    let n = i + j;
    n * (n + 1) / 2 + j
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet {
    coeffs: [f64; LEN],
}

impl Jet {
    pub fn constant(c: f64) -> Self {
        let mut coeffs = [0.0; LEN];
        coeffs[0] = c;
        Self { coeffs }
    }

    /// The coordinate function `x_axis` expanded at `at`.
    pub fn variable(axis: usize, at: f64) -> Self {
        let mut j = Self::constant(at);
        j.coeffs[if axis == 0 { slot(1, 0) } else { slot(0, 1) }] = 1.0;
        j
    }

    pub fn value(&self) -> f64 {
        self.coeffs[0]
    }

    /// `∂_x^i ∂_y^j` at the expansion point.
    pub fn derivative(&self, i: usize, j: usize) -> f64 {
        assert!(i + j <= ORDER);
        self.coeffs[slot(i, j)] * factorial(i) * factorial(j)
    }

    pub fn gradient(&self) -> [f64; 2] {
        [self.derivative(1, 0), self.derivative(0, 1)]
    }

    /// Laplacian restricted to the first `dim` axes.
    pub fn laplacian(&self, dim: usize) -> f64 {
        let mut s = self.derivative(2, 0);
        if dim == 2 {
            s += self.derivative(0, 2);
        }
        s
    }

    /// All partial derivatives of total order `1..=4` that involve only the
    /// first `dim` axes.
    pub fn partials(&self, dim: usize) -> impl Iterator<Item = ((usize, usize), f64)> + '_ {
        INDICES
            .iter()
            .skip(1)
            .filter(move |&&(_, j)| dim == 2 || j == 0)
            .map(move |&(i, j)| ((i, j), self.derivative(i, j)))
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut out = *self;
        out.coeffs.iter_mut().for_each(|c| *c *= s);
        out
    }

    /// `f(self)` given `f` and its first four derivatives at the constant term.
    fn compose(&self, derivs: [f64; ORDER + 1]) -> Self {
        let mut h = *self;
        h.coeffs[0] = 0.0;
        let mut out = Jet::constant(derivs[0]);
        let mut power = Jet::constant(1.0);
        let mut fact = 1.0;
        for (n, &d) in derivs.iter().enumerate().skip(1) {
            power = power * h;
            fact *= n as f64;
            out = out + power.scale(d / fact);
        }
        out
    }

    pub fn exp(&self) -> Self {
        let e = self.value().exp();
        self.compose([e; ORDER + 1])
    }

    /// `self^alpha`; the constant term must be positive.
    pub fn powf(&self, alpha: f64) -> Self {
        let a = self.value();
        let mut d = [0.0; ORDER + 1];
        let mut coef = 1.0;
        for (n, slot) in d.iter_mut().enumerate() {
            *slot = coef * a.powf(alpha - n as f64);
            coef *= alpha - n as f64;
        }
        self.compose(d)
    }

    pub fn sqrt(&self) -> Self {
        self.powf(0.5)
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).product::<usize>() as f64
}

impl Add for Jet {
    type Output = Jet;
    fn add(mut self, rhs: Jet) -> Jet {
        self.coeffs.iter_mut().zip(rhs.coeffs).for_each(|(a, b)| *a += b);
        self
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, rhs: Jet) -> Jet {
        self + (-rhs)
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, rhs: Jet) -> Jet {
        let mut out = [0.0; LEN];
        for (a, &(i1, j1)) in INDICES.iter().enumerate() {
            let x = self.coeffs[a];
            if x == 0.0 {
                continue;
            }
            for (b, &(i2, j2)) in INDICES.iter().enumerate() {
                if i1 + i2 + j1 + j2 <= ORDER {
                    out[slot(i1 + i2, j1 + j2)] += x * rhs.coeffs[b];
                }
            }
        }
        Jet { coeffs: out }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slots_are_consistent() {
        for (k, &(i, j)) in INDICES.iter().enumerate() {
            assert_eq!(slot(i, j), k);
        }
    }

    #[test]
    fn polynomial_derivatives() {
        // f = x³y at (2, 3)
        let x = Jet::variable(0, 2.0);
        let y = Jet::variable(1, 3.0);
        let f = x * x * x * y;
        assert_eq!(f.value(), 24.0);
        assert_eq!(f.derivative(1, 0), 36.0);
        assert_eq!(f.derivative(2, 1), 12.0);
        assert_eq!(f.derivative(3, 1), 6.0);
        assert_eq!(f.derivative(4, 0), 0.0);
    }

    #[test]
    fn exp_and_power_match_univariate_derivatives() {
        let x = Jet::variable(0, 0.7);
        let e = (x.scale(-2.0)).exp();
        for n in 0..=4 {
            let expect = (-2.0f64).powi(n as i32) * (-1.4f64).exp();
            assert!((e.derivative(n, 0) - expect).abs() < 1e-12);
        }
        let p = x.powf(-1.5);
        let mut c = 1.0;
        for n in 0..=4 {
            let expect = c * 0.7f64.powf(-1.5 - n as f64);
            assert!((p.derivative(n, 0) - expect).abs() < 1e-10 * expect.abs().max(1.0));
            c *= -1.5 - n as f64;
        }
    }

    #[test]
    fn radial_gradient_and_laplacian() {
        // φ = exp(-sqrt(1 + r²)) in 2D, checked against the closed form
        let (px, py) = (0.8, -1.3);
        let x = Jet::variable(0, px);
        let y = Jet::variable(1, py);
        let s = (Jet::constant(1.0) + x * x + y * y).sqrt();
        let phi = (-s).exp();
        let r2: f64 = px * px + py * py;
        let sv = (1.0 + r2).sqrt();
        let e = (-sv).exp();
        assert!((phi.gradient()[0] + e * px / sv).abs() < 1e-13);
        let lap = -e * (1.0 / sv.powi(3) - r2 / (sv * sv) + 1.0 / sv);
        assert!((phi.laplacian(2) - lap).abs() < 1e-12);
    }
}
