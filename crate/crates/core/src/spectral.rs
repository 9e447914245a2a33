//! Periodic spatial grids, Fourier transforms, spectral differentiation and
//! the inner products every other module builds on.
//!
//! The box is `[-L, L)^d` with `n` nodes per axis (`n` a power of two). The
//! discrete spectrum uses the usual FFT ordering. The Nyquist mode has no
//! partner of opposite sign, so its wavenumber is pinned to zero: it is
//! carried along by every multiplier unchanged and never differentiated.
//! With that convention the wavenumber set is symmetric under `ξ -> -ξ`.
//!
//! Spectral coefficients are stored unnormalized (raw forward FFT output);
//! the inverse transform carries the `1/n^d`.

use std::f64::consts::PI;
use std::io::{Read, Write};
use std::sync::{Arc, OnceLock};

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Uniform periodic grid on `[-L, L)^d`, `d ∈ {1, 2}`.
pub struct SpatialGrid {
    dim: usize,
    half_extent: f64,
    n: usize,
    coords: Vec<f64>,
    wavenumbers: Vec<f64>,
    ksq: Vec<f64>,
    dealias: Vec<bool>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for SpatialGrid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpatialGrid")
            .field("dim", &self.dim)
            .field("half_extent", &self.half_extent)
            .field("n", &self.n)
            .finish()
    }
}

impl SpatialGrid {
    pub fn new(dim: usize, half_extent: f64, n: usize) -> Result<Arc<Self>> {
        if !(1..=2).contains(&dim) {
            return Err(Error::invalid(format!("grid dimension must be 1 or 2, got {dim}")));
        }
        if n < 4 || !n.is_power_of_two() {
            return Err(Error::invalid(format!("points per axis must be a power of two >= 4, got {n}")));
        }
        if !(half_extent > 0.0 && half_extent.is_finite()) {
            return Err(Error::invalid(format!("half extent must be positive, got {half_extent}")));
        }
        let h = 2.0 * half_extent / n as f64;
        let coords: Vec<f64> = (0..n).map(|j| -half_extent + j as f64 * h).collect();
        let dk = PI / half_extent;
        let wavenumbers: Vec<f64> = (0..n)
            .map(|j| {
                if j < n / 2 {
                    j as f64 * dk
                } else if j == n / 2 {
                    0.0
                } else {
                    (j as f64 - n as f64) * dk
                }
            })
            .collect();
        let kmax = (n / 2) as f64 * dk;
        let keep_1d: Vec<bool> = (0..n)
            .map(|j| j != n / 2 && wavenumbers[j].abs() <= 2.0 / 3.0 * kmax)
            .collect();
        let total = n.pow(dim as u32);
        let mut ksq = vec![0.0; total];
        let mut dealias = vec![true; total];
        for idx in 0..total {
            let (i0, i1) = (idx / n % n, idx % n);
            if dim == 1 {
                ksq[idx] = wavenumbers[idx] * wavenumbers[idx];
                dealias[idx] = keep_1d[idx];
            } else {
                ksq[idx] = wavenumbers[i0].powi(2) + wavenumbers[i1].powi(2);
                dealias[idx] = keep_1d[i0] && keep_1d[i1];
            }
        }
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        Ok(Arc::new(Self {
            dim,
            half_extent,
            n,
            coords,
            wavenumbers,
            ksq,
            dealias,
            fwd,
            inv,
        }))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn half_extent(&self) -> f64 {
        self.half_extent
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Total number of nodes, `n^d`.
    pub fn len(&self) -> usize {
        self.ksq.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ksq.is_empty()
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_extent / self.n as f64
    }

    /// Quadrature weight `h^d`.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    pub fn axis_coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn axis_wavenumbers(&self) -> &[f64] {
        &self.wavenumbers
    }

    pub fn max_wavenumber(&self) -> f64 {
        (self.n / 2) as f64 * PI / self.half_extent
    }

    /// Node coordinates of the flat index; the second slot is zero in 1D.
    #[inline]
    pub fn point(&self, idx: usize) -> [f64; 2] {
        if self.dim == 1 {
            [self.coords[idx], 0.0]
        } else {
            [self.coords[idx / self.n], self.coords[idx % self.n]]
        }
    }

    /// Wavenumber vector of the flat spectral index.
    #[inline]
    pub fn wavevector(&self, idx: usize) -> [f64; 2] {
        if self.dim == 1 {
            [self.wavenumbers[idx], 0.0]
        } else {
            [self.wavenumbers[idx / self.n], self.wavenumbers[idx % self.n]]
        }
    }

    pub fn ksq(&self) -> &[f64] {
        &self.ksq
    }

    /// 2/3-rule mask (true = retained mode).
    pub fn dealias_mask(&self) -> &[bool] {
        &self.dealias
    }

    pub fn same_as(&self, other: &SpatialGrid) -> bool {
        self.dim == other.dim && self.n == other.n && self.half_extent == other.half_extent
    }

    /// Unnormalized forward transform in place.
    pub fn forward(&self, data: &mut [Complex64]) {
        self.transform(data, &self.fwd);
    }

    /// Inverse transform in place, including the `1/n^d` factor.
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.transform(data, &self.inv);
        let scale = 1.0 / data.len() as f64;
        for z in data.iter_mut() {
            *z *= scale;
        }
    }

    fn transform(&self, data: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        assert_eq!(data.len(), self.len(), "buffer does not match grid");
        if self.dim == 1 {
            plan.process(data);
            return;
        }
        let n = self.n;
        // rows (contiguous axis 1), then columns through a transposed copy
        plan.process(data);
        let mut t = vec![Complex64::new(0.0, 0.0); data.len()];
        for i in 0..n {
            for j in 0..n {
                t[j * n + i] = data[i * n + j];
            }
        }
        plan.process(&mut t);
        for i in 0..n {
            for j in 0..n {
                data[i * n + j] = t[j * n + i];
            }
        }
    }

    /// Sample a function of position on the grid.
    pub fn sample<F>(self: &Arc<Self>, f: F) -> Field
    where
        F: Fn([f64; 2]) -> Complex64,
    {
        let values = (0..self.len()).map(|i| f(self.point(i))).collect();
        Field::from_values(self.clone(), values)
    }

    pub fn sample_real<F>(self: &Arc<Self>, f: F) -> Field
    where
        F: Fn([f64; 2]) -> f64,
    {
        self.sample(|x| Complex64::new(f(x), 0.0))
    }
}

/// Complex samples on a [`SpatialGrid`] with a lazily computed spectrum.
#[derive(Clone, Debug)]
pub struct Field {
    grid: Arc<SpatialGrid>,
    values: Vec<Complex64>,
    spectrum: OnceLock<Vec<Complex64>>,
    /// Raised by evaluators when a profile tail at the box boundary exceeds
    /// the truncation budget.
    pub tail_warning: bool,
}

impl Field {
    pub fn from_values(grid: Arc<SpatialGrid>, values: Vec<Complex64>) -> Self {
        assert_eq!(values.len(), grid.len(), "sample count does not match grid");
        Self {
            grid,
            values,
            spectrum: OnceLock::new(),
            tail_warning: false,
        }
    }

    pub fn zeros(grid: Arc<SpatialGrid>) -> Self {
        let len = grid.len();
        Self::from_values(grid, vec![Complex64::new(0.0, 0.0); len])
    }

    /// Build from unnormalized spectral coefficients.
    pub fn from_spectrum(grid: Arc<SpatialGrid>, spectrum: Vec<Complex64>) -> Self {
        let mut values = spectrum.clone();
        grid.inverse(&mut values);
        let f = Self::from_values(grid, values);
        let _ = f.spectrum.set(spectrum);
        f
    }

    pub fn grid(&self) -> &Arc<SpatialGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    /// Mutable access to the samples; drops the cached spectrum.
    pub fn values_mut(&mut self) -> &mut [Complex64] {
        self.spectrum.take();
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn has_cached_spectrum(&self) -> bool {
        self.spectrum.get().is_some()
    }

    pub fn spectrum(&self) -> &[Complex64] {
        self.spectrum.get_or_init(|| {
            let mut s = self.values.clone();
            self.grid.forward(&mut s);
            s
        })
    }

    pub fn check_same_grid(&self, other: &Field) -> Result<()> {
        if Arc::ptr_eq(&self.grid, &other.grid) || self.grid.same_as(&other.grid) {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Apply a Fourier multiplier given as a function of the wavevector.
    pub fn apply_multiplier<F>(&self, symbol: F) -> Field
    where
        F: Fn([f64; 2]) -> Complex64,
    {
        let spec: Vec<Complex64> = self
            .spectrum()
            .iter()
            .enumerate()
            .map(|(i, &c)| c * symbol(self.grid.wavevector(i)))
            .collect();
        Field::from_spectrum(self.grid.clone(), spec)
    }

    pub fn map<F>(&self, f: F) -> Field
    where
        F: Fn(Complex64) -> Complex64,
    {
        Field::from_values(self.grid.clone(), self.values.iter().map(|&z| f(z)).collect())
    }

    /// Pointwise combination of two fields on the same grid.
    pub fn zip_with<F>(&self, other: &Field, f: F) -> Result<Field>
    where
        F: Fn(Complex64, Complex64) -> Complex64,
    {
        self.check_same_grid(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(Field::from_values(self.grid.clone(), values))
    }

    pub fn add(&self, other: &Field) -> Result<Field> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Field) -> Result<Field> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Field) -> Result<Field> {
        self.zip_with(other, |a, b| a * b)
    }

    pub fn scale(&self, s: Complex64) -> Field {
        self.map(|z| z * s)
    }

    pub fn conj(&self) -> Field {
        self.map(|z| z.conj())
    }

    /// Pointwise modulus as a real field.
    pub fn abs(&self) -> Field {
        self.map(|z| Complex64::new(z.norm(), 0.0))
    }

    /// Spectral translation `f(· - shift)`, exact for band-limited data.
    pub fn translate(&self, shift: [f64; 2]) -> Field {
        self.apply_multiplier(|k| Complex64::from_polar(1.0, -(k[0] * shift[0] + k[1] * shift[1])))
    }

    /// Remove the upper third of the spectrum on every axis.
    pub fn dealiased(&self) -> Field {
        let mask = self.grid.dealias_mask();
        let spec: Vec<Complex64> = self
            .spectrum()
            .iter()
            .zip(mask)
            .map(|(&c, &keep)| if keep { c } else { Complex64::new(0.0, 0.0) })
            .collect();
        Field::from_spectrum(self.grid.clone(), spec)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

/// Spectral Laplacian, multiplier `-|ξ|^2`.
pub fn laplacian(f: &Field) -> Field {
    let ksq = f.grid().ksq();
    let spec: Vec<Complex64> = f.spectrum().iter().zip(ksq).map(|(&c, &k2)| -c * k2).collect();
    Field::from_spectrum(f.grid().clone(), spec)
}

/// Spectral partial derivative along `axis`.
pub fn partial(f: &Field, axis: usize) -> Field {
    f.apply_multiplier(|k| Complex64::new(0.0, k[axis]))
}

/// Spectral gradient, one field per axis.
pub fn gradient(f: &Field) -> Vec<Field> {
    (0..f.grid().dim()).map(|a| partial(f, a)).collect()
}

/// `<f, g> = h^d Σ f conj(g)`.
pub fn l2_inner(f: &Field, g: &Field) -> Result<Complex64> {
    f.check_same_grid(g)?;
    let s: Complex64 = f.values().iter().zip(g.values()).map(|(a, b)| a * b.conj()).sum();
    Ok(s * f.grid().cell_volume())
}

/// Spectral H¹ inner product `Σ (1+|ξ|²) f̂ conj(ĝ)`, normalized so that it
/// reduces to `l2_inner` plus the gradient pairing.
pub fn h1_inner(f: &Field, g: &Field) -> Result<Complex64> {
    f.check_same_grid(g)?;
    let grid = f.grid();
    let s: Complex64 = f
        .spectrum()
        .iter()
        .zip(g.spectrum())
        .zip(grid.ksq())
        .map(|((a, b), k2)| a * b.conj() * (1.0 + k2))
        .sum();
    Ok(s * grid.cell_volume() / grid.len() as f64)
}

pub fn l2_norm_sq(f: &Field) -> f64 {
    f.values().iter().map(|z| z.norm_sqr()).sum::<f64>() * f.grid().cell_volume()
}

pub fn l2_norm(f: &Field) -> f64 {
    l2_norm_sq(f).sqrt()
}

/// `‖∇f‖²` computed in Fourier space.
pub fn grad_norm_sq(f: &Field) -> f64 {
    let grid = f.grid();
    let s: f64 = f.spectrum().iter().zip(grid.ksq()).map(|(c, k2)| c.norm_sqr() * k2).sum();
    s * grid.cell_volume() / grid.len() as f64
}

/// Spectral-side `‖f‖²`, equal to [`l2_norm_sq`] by Parseval.
pub fn spectral_norm_sq(f: &Field) -> f64 {
    let grid = f.grid();
    let s: f64 = f.spectrum().iter().map(|c| c.norm_sqr()).sum();
    s * grid.cell_volume() / grid.len() as f64
}

pub fn h1_norm_sq(f: &Field) -> f64 {
    spectral_norm_sq(f) + grad_norm_sq(f)
}

pub fn h1_norm(f: &Field) -> f64 {
    h1_norm_sq(f).sqrt()
}

/// Real part of the L² pairing, the real inner product on complex fields.
pub fn real_inner(f: &Field, g: &Field) -> Result<f64> {
    Ok(l2_inner(f, g)?.re)
}

/// Integral of a real pointwise function of the samples.
pub fn integrate<F>(f: &Field, density: F) -> f64
where
    F: Fn(Complex64) -> f64,
{
    f.values().iter().map(|&z| density(z)).sum::<f64>() * f.grid().cell_volume()
}

const BINARY_HEADER_LEN: usize = 24;

/// Flat little-endian snapshot: `d: u32, n: u32, L: f64, t: f64`, then the
/// samples as interleaved `(re, im)` f64 pairs in row-major order.
pub fn write_binary<W: Write>(field: &Field, time: f64, mut w: W) -> Result<()> {
    let grid = field.grid();
    let mut buf = Vec::with_capacity(BINARY_HEADER_LEN + 16 * grid.len());
    buf.extend_from_slice(&(grid.dim() as u32).to_le_bytes());
    buf.extend_from_slice(&(grid.n() as u32).to_le_bytes());
    buf.extend_from_slice(&grid.half_extent().to_le_bytes());
    buf.extend_from_slice(&time.to_le_bytes());
    for z in field.values() {
        buf.extend_from_slice(&z.re.to_le_bytes());
        buf.extend_from_slice(&z.im.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_binary<R: Read>(mut r: R) -> Result<(Field, f64)> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() < BINARY_HEADER_LEN {
        return Err(Error::Format("field snapshot shorter than header".into()));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let dim = u32_at(0) as usize;
    let n = u32_at(4) as usize;
    let half_extent = f64_at(8);
    let time = f64_at(16);
    let grid = SpatialGrid::new(dim, half_extent, n)?;
    let expected = BINARY_HEADER_LEN + 16 * grid.len();
    if bytes.len() != expected {
        return Err(Error::Format(format!(
            "field snapshot has {} bytes, header implies {expected}",
            bytes.len()
        )));
    }
    let values = (0..grid.len())
        .map(|i| {
            let o = BINARY_HEADER_LEN + 16 * i;
            Complex64::new(f64_at(o), f64_at(o + 8))
        })
        .collect();
    Ok((Field::from_values(grid, values), time))
}

/// CSV dump (`x,re,im` or `x,y,re,im`) intended for small grids.
pub fn write_csv<W: Write>(field: &Field, mut w: W) -> Result<()> {
    let grid = field.grid();
    if grid.dim() == 1 {
        writeln!(w, "x,re,im")?;
    } else {
        writeln!(w, "x,y,re,im")?;
    }
    for (i, z) in field.values().iter().enumerate() {
        let p = grid.point(i);
        if grid.dim() == 1 {
            writeln!(w, "{},{},{}", p[0], z.re, z.im)?;
        } else {
            writeln!(w, "{},{},{},{}", p[0], p[1], z.re, z.im)?;
        }
    }
    Ok(())
}
