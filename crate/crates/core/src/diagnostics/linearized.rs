//! Linearized operators around the ground state and projected coercivity.

use std::sync::Arc;

use nalgebra::{DMatrix, QR};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::ground_state::GroundStateProfile;
use crate::spectral::{l2_norm, laplacian, partial, Field, SpatialGrid};

/// `L₊ = −Δ + 1 − pQ^{p−1}` and `L₋ = −Δ + 1 − Q^{p−1}` on a grid.
#[derive(Clone, Debug)]
pub struct Linearized {
    q: Field,
    p: f64,
    power: Vec<f64>,
    critical: bool,
}

impl Linearized {
    pub fn new(profile: &GroundStateProfile, grid: &Arc<SpatialGrid>) -> Self {
        let q = profile.sample(grid, [0.0, 0.0]);
        let p = profile.p();
        let power = q.values().iter().map(|z| z.re.powf(p - 1.0)).collect();
        Self {
            q,
            p,
            power,
            critical: profile.is_critical(),
        }
    }

    pub fn ground_state(&self) -> &Field {
        &self.q
    }

    fn apply(&self, f: &Field, coupling: f64) -> Field {
        let lap = laplacian(f);
        let vals = f
            .values()
            .iter()
            .zip(lap.values())
            .zip(&self.power)
            .map(|((&v, &l), &w)| -l + v * (1.0 - coupling * w))
            .collect();
        Field::from_values(f.grid().clone(), vals)
    }

    pub fn apply_plus(&self, f: &Field) -> Field {
        self.apply(f, self.p)
    }

    pub fn apply_minus(&self, f: &Field) -> Field {
        self.apply(f, 1.0)
    }

    /// `(L₊ Re f, L₋ Im f)`.
    pub fn apply_split(&self, f: &Field) -> (Field, Field) {
        let re = f.map(|z| Complex64::new(z.re, 0.0));
        let im = f.map(|z| Complex64::new(z.im, 0.0));
        (self.apply_plus(&re), self.apply_minus(&im))
    }

    /// Directions penalised in the coercivity bound for the real part:
    /// `Q`, `∂_jQ` and, at the critical power, `x·∇Q`.
    pub fn real_directions(&self) -> Vec<Field> {
        let grid = self.q.grid();
        let mut dirs = vec![self.q.clone()];
        dirs.extend((0..grid.dim()).map(|a| partial(&self.q, a)));
        if self.critical {
            let mut xgrad = Field::zeros(grid.clone());
            for a in 0..grid.dim() {
                let d = partial(&self.q, a);
                let vals = xgrad
                    .values()
                    .iter()
                    .zip(d.values())
                    .enumerate()
                    .map(|(i, (&acc, &g))| acc + g * grid.point(i)[a])
                    .collect();
                xgrad = Field::from_values(grid.clone(), vals);
            }
            dirs.push(xgrad);
        }
        dirs
    }

    /// Directions penalised for the imaginary part: `Q`.
    pub fn imag_directions(&self) -> Vec<Field> {
        vec![self.q.clone()]
    }

    /// `(‖L₋Q‖, ‖L₊∂₁Q‖)` relative to `‖Q‖`.
    pub fn zero_mode_residuals(&self) -> (f64, f64) {
        let norm = l2_norm(&self.q);
        let minus = l2_norm(&self.apply_minus(&self.q)) / norm;
        let plus = l2_norm(&self.apply_plus(&partial(&self.q, 0))) / norm;
        (minus, plus)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoercivityReport {
    /// Smallest `(L₊f₁, f₁)/‖f₁‖²_{H¹}` over the real-part complement.
    pub plus: f64,
    /// Smallest `(L₋f₂, f₂)/‖f₂‖²_{H¹}` over the imaginary-part complement.
    pub minus: f64,
}

impl CoercivityReport {
    /// The form splits over real and imaginary parts, so its smallest
    /// quotient is the smaller of the two.
    pub fn value(&self) -> f64 {
        self.plus.min(self.minus)
    }
}

pub fn coercivity_estimate(lin: &Linearized, real_dirs: &[Field], imag_dirs: &[Field]) -> Result<CoercivityReport> {
    let real = |f: &Field| f.map(|z| Complex64::new(z.re, 0.0));
    let plus = projected_min_rayleigh(lin.q.grid(), false, |f| real(&lin.apply_plus(f)), real_dirs)?;
    let minus = projected_min_rayleigh(lin.q.grid(), false, |f| real(&lin.apply_minus(f)), imag_dirs)?;
    Ok(CoercivityReport { plus, minus })
}

/// Coordinates of a field: real parts, or real parts followed by imaginary
/// parts for complex spaces.
fn coords(f: &Field, complex: bool) -> Vec<f64> {
    let mut out: Vec<f64> = f.values().iter().map(|z| z.re).collect();
    if complex {
        out.extend(f.values().iter().map(|z| z.im));
    }
    out
}

fn basis_field(grid: &Arc<SpatialGrid>, complex: bool, j: usize) -> Field {
    let n = grid.len();
    let mut vals = vec![Complex64::new(0.0, 0.0); n];
    if complex && j >= n {
        vals[j - n] = Complex64::new(0.0, 1.0);
    } else {
        vals[j] = Complex64::new(1.0, 0.0);
    }
    Field::from_values(grid.clone(), vals)
}

/// Smallest `Re⟨Af, f⟩ / ‖f‖²_{H¹}` over fields `f` with `Re⟨D, f⟩ = 0` for
/// every direction `D`, by a dense generalized eigen-solve on the complement.
/// `A` must be symmetric for `Re⟨·,·⟩`; the directions must be independent.
pub fn projected_min_rayleigh<A>(grid: &Arc<SpatialGrid>, complex: bool, apply: A, directions: &[Field]) -> Result<f64>
where
    A: Fn(&Field) -> Field,
{
    let n = grid.len() * if complex { 2 } else { 1 };
    let m = directions.len();
    if m >= n {
        return Err(Error::invalid("more directions than degrees of freedom"));
    }
    let vol = grid.cell_volume();
    let mut a = DMatrix::zeros(n, n);
    let mut b = DMatrix::zeros(n, n);
    for j in 0..n {
        let e = basis_field(grid, complex, j);
        let ae = coords(&apply(&e), complex);
        let be = coords(&e.sub(&laplacian(&e))?, complex);
        for i in 0..n {
            a[(i, j)] = ae[i] * vol;
            b[(i, j)] = be[i] * vol;
        }
    }
    let a = (&a + a.transpose()) * 0.5;
    let b = (&b + b.transpose()) * 0.5;
    let mut c = DMatrix::zeros(n, m);
    for (j, d) in directions.iter().enumerate() {
        for (i, v) in coords(d, complex).into_iter().enumerate() {
            c[(i, j)] = v;
        }
    }
    let qr = QR::new(c);
    let reduce = |mat: DMatrix<f64>| {
        let mut t = mat;
        qr.q_tr_mul(&mut t);
        let mut t = t.transpose();
        qr.q_tr_mul(&mut t);
        t.view((m, m), (n - m, n - m)).into_owned()
    };
    let (az, bz) = (reduce(a), reduce(b));
    let chol = bz.cholesky().ok_or_else(|| Error::NonConvergence {
        what: "H¹ Gram factorization".into(),
        residual: f64::NAN,
    })?;
    let l = chol.l();
    let linv_a = l
        .solve_lower_triangular(&az)
        .ok_or_else(|| Error::NonConvergence {
            what: "projected eigen-solve".into(),
            residual: f64::NAN,
        })?;
    let reduced = l
        .solve_lower_triangular(&linv_a.transpose())
        .ok_or_else(|| Error::NonConvergence {
            what: "projected eigen-solve".into(),
            residual: f64::NAN,
        })?;
    let sym = (&reduced + reduced.transpose()) * 0.5;
    let eig = sym.symmetric_eigenvalues();
    let min = eig.iter().copied().fold(f64::INFINITY, f64::min);
    if !min.is_finite() {
        return Err(Error::NonConvergence {
            what: "projected eigen-solve".into(),
            residual: min,
        });
    }
    Ok(min)
}
