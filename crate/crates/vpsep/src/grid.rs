//! Uniform periodic 2D grid, FFT-based differential operators, Leray
//! projection and quadrature.
//!
//! All fields live on a torus [0,lx) x [0,ly) sampled at nx x ny points,
//! stored row-major (x fastest). Derivatives are exact for resolved Fourier
//! modes; the signed wavenumber tables zero the Nyquist mode so that
//! `divergence(gradient(f)) == laplacian(f)` holds for every field.

use crate::error::{Result, VpsError};
use crate::par;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

/// Fraction of modes kept by the 2/3-rule de-aliasing filter.
const DEALIAS_FRACTION: f64 = 2.0 / 3.0;

const SNAPSHOT_MAGIC: &[u8; 4] = b"VPSF";
const SNAPSHOT_VERSION: u32 = 1;

pub struct Grid {
    nx: usize,
    ny: usize,
    lx: f64,
    ly: f64,
    /// Signed derivative wavenumbers 2*pi*f/l, Nyquist zeroed.
    kx: Vec<f64>,
    ky: Vec<f64>,
    fwd_x: Arc<dyn Fft<f64>>,
    inv_x: Arc<dyn Fft<f64>>,
    fwd_y: Arc<dyn Fft<f64>>,
    inv_y: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Grid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Grid")
            .field("nx", &self.nx)
            .field("ny", &self.ny)
            .field("lx", &self.lx)
            .field("ly", &self.ly)
            .finish()
    }
}

fn wavenumbers(n: usize, l: f64) -> Vec<f64> {
    let mut k = vec![0.0; n];
    for (i, ki) in k.iter_mut().enumerate() {
        let f = if i <= n / 2 { i as i64 } else { i as i64 - n as i64 };
        *ki = 2.0 * PI * f as f64 / l;
    }
    // Zero the Nyquist mode: its first derivative is ambiguous for real data.
    k[n / 2] = 0.0;
    k
}

impl Grid {
    pub fn new(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Arc<Grid>> {
        if nx < 8 || ny < 8 || nx % 2 != 0 || ny % 2 != 0 {
            return Err(VpsError::Grid(format!(
                "nx, ny must be even and >= 8, got {nx} x {ny}"
            )));
        }
        if !(lx > 0.0 && ly > 0.0) {
            return Err(VpsError::Grid(format!(
                "domain lengths must be positive, got {lx} x {ly}"
            )));
        }
        let mut planner = FftPlanner::new();
        Ok(Arc::new(Grid {
            nx,
            ny,
            lx,
            ly,
            kx: wavenumbers(nx, lx),
            ky: wavenumbers(ny, ly),
            fwd_x: planner.plan_fft_forward(nx),
            inv_x: planner.plan_fft_inverse(nx),
            fwd_y: planner.plan_fft_forward(ny),
            inv_y: planner.plan_fft_inverse(ny),
        }))
    }

    /// Unit torus helper used throughout the tests.
    pub fn unit(n: usize) -> Result<Arc<Grid>> {
        Grid::new(n, n, 1.0, 1.0)
    }

    pub fn nx(&self) -> usize {
        self.nx
    }
    pub fn ny(&self) -> usize {
        self.ny
    }
    pub fn lx(&self) -> f64 {
        self.lx
    }
    pub fn ly(&self) -> f64 {
        self.ly
    }
    pub fn hx(&self) -> f64 {
        self.lx / self.nx as f64
    }
    pub fn hy(&self) -> f64 {
        self.ly / self.ny as f64
    }
    pub fn len(&self) -> usize {
        self.nx * self.ny
    }
    pub fn is_empty(&self) -> bool {
        false
    }
    pub fn area(&self) -> f64 {
        self.lx * self.ly
    }
    pub fn kx(&self) -> &[f64] {
        &self.kx
    }
    pub fn ky(&self) -> &[f64] {
        &self.ky
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.nx && j < self.ny);
        j * self.nx + i
    }

    #[inline]
    pub fn coords(&self, i: usize, j: usize) -> (f64, f64) {
        (i as f64 * self.hx(), j as f64 * self.hy())
    }

    pub fn same_as(&self, other: &Grid) -> bool {
        self.nx == other.nx && self.ny == other.ny && self.lx == other.lx && self.ly == other.ly
    }
}

/// Check that two fields share a grid; most binary operations require it.
pub fn check_same_grid(a: &Grid, b: &Grid) -> Result<()> {
    if a.same_as(b) {
        Ok(())
    } else {
        Err(VpsError::InvalidArgument(format!(
            "grid mismatch: {}x{} vs {}x{}",
            a.nx, a.ny, b.nx, b.ny
        )))
    }
}

// ---------------------------------------------------------------------------
// Fields

#[derive(Clone, Debug)]
pub struct ScalarField {
    grid: Arc<Grid>,
    data: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: &Arc<Grid>) -> Self {
        ScalarField {
            grid: grid.clone(),
            data: vec![0.0; grid.len()],
        }
    }

    pub fn constant(grid: &Arc<Grid>, v: f64) -> Self {
        ScalarField {
            grid: grid.clone(),
            data: vec![v; grid.len()],
        }
    }

    pub fn from_fn(grid: &Arc<Grid>, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut data = vec![0.0; grid.len()];
        for j in 0..grid.ny() {
            for i in 0..grid.nx() {
                let (x, y) = grid.coords(i, j);
                data[grid.idx(i, j)] = f(x, y);
            }
        }
        ScalarField { grid: grid.clone(), data }
    }

    pub fn from_vec(grid: &Arc<Grid>, data: Vec<f64>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(VpsError::InvalidArgument(format!(
                "field length {} does not match grid {}x{}",
                data.len(),
                grid.nx(),
                grid.ny()
            )));
        }
        Ok(ScalarField { grid: grid.clone(), data })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }
    pub fn data(&self) -> &[f64] {
        &self.data
    }
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64 + Sync + Send) -> ScalarField {
        let mut out = self.clone();
        let nx = self.grid.nx();
        par::for_each_chunk_mut(&mut out.data, nx, |_, row| {
            for v in row.iter_mut() {
                *v = f(*v);
            }
        });
        out
    }

    /// self + alpha * other
    pub fn axpy(&self, alpha: f64, other: &ScalarField) -> ScalarField {
        let mut out = self.clone();
        for (o, b) in out.data.iter_mut().zip(&other.data) {
            *o += alpha * b;
        }
        out
    }

    pub fn scaled(&self, alpha: f64) -> ScalarField {
        self.map(move |v| alpha * v)
    }

    pub fn add(&self, other: &ScalarField) -> ScalarField {
        self.axpy(1.0, other)
    }

    pub fn sub(&self, other: &ScalarField) -> ScalarField {
        self.axpy(-1.0, other)
    }

    /// Pointwise product without de-aliasing; see [`prod`] for the filtered one.
    pub fn mul_pointwise(&self, other: &ScalarField) -> ScalarField {
        let mut out = self.clone();
        for (o, b) in out.data.iter_mut().zip(&other.data) {
            *o *= b;
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.data.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn mean(&self) -> f64 {
        integrate(self) / self.grid.area()
    }
}

#[derive(Clone, Debug)]
pub struct VectorField {
    pub x: ScalarField,
    pub y: ScalarField,
}

impl VectorField {
    pub fn zeros(grid: &Arc<Grid>) -> Self {
        VectorField {
            x: ScalarField::zeros(grid),
            y: ScalarField::zeros(grid),
        }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.x.grid()
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn axpy(&self, alpha: f64, other: &VectorField) -> VectorField {
        VectorField {
            x: self.x.axpy(alpha, &other.x),
            y: self.y.axpy(alpha, &other.y),
        }
    }

    pub fn add(&self, other: &VectorField) -> VectorField {
        self.axpy(1.0, other)
    }

    pub fn sub(&self, other: &VectorField) -> VectorField {
        self.axpy(-1.0, other)
    }

    pub fn scaled(&self, alpha: f64) -> VectorField {
        VectorField {
            x: self.x.scaled(alpha),
            y: self.y.scaled(alpha),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.x
            .data()
            .iter()
            .zip(self.y.data())
            .fold(0.0f64, |m, (a, b)| m.max((a * a + b * b).sqrt()))
    }

    /// Pointwise Euclidean magnitude.
    pub fn magnitude(&self) -> ScalarField {
        let mut out = self.x.clone();
        for (o, b) in out.data.iter_mut().zip(self.y.data()) {
            *o = (*o * *o + b * b).sqrt();
        }
        out
    }
}

/// Symmetric 2x2 tensor field; the off-diagonal entry is stored once.
#[derive(Clone, Debug)]
pub struct SymTensorField {
    pub xx: ScalarField,
    pub xy: ScalarField,
    pub yy: ScalarField,
}

impl SymTensorField {
    pub fn zeros(grid: &Arc<Grid>) -> Self {
        SymTensorField {
            xx: ScalarField::zeros(grid),
            xy: ScalarField::zeros(grid),
            yy: ScalarField::zeros(grid),
        }
    }

    pub fn identity(grid: &Arc<Grid>) -> Self {
        SymTensorField {
            xx: ScalarField::constant(grid, 1.0),
            xy: ScalarField::zeros(grid),
            yy: ScalarField::constant(grid, 1.0),
        }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.xx.grid()
    }

    pub fn is_finite(&self) -> bool {
        self.xx.is_finite() && self.xy.is_finite() && self.yy.is_finite()
    }

    pub fn axpy(&self, alpha: f64, other: &SymTensorField) -> SymTensorField {
        SymTensorField {
            xx: self.xx.axpy(alpha, &other.xx),
            xy: self.xy.axpy(alpha, &other.xy),
            yy: self.yy.axpy(alpha, &other.yy),
        }
    }

    pub fn add(&self, other: &SymTensorField) -> SymTensorField {
        self.axpy(1.0, other)
    }

    pub fn sub(&self, other: &SymTensorField) -> SymTensorField {
        self.axpy(-1.0, other)
    }

    pub fn scaled(&self, alpha: f64) -> SymTensorField {
        SymTensorField {
            xx: self.xx.scaled(alpha),
            xy: self.xy.scaled(alpha),
            yy: self.yy.scaled(alpha),
        }
    }

    pub fn trace(&self) -> ScalarField {
        self.xx.add(&self.yy)
    }

    pub fn max_abs(&self) -> f64 {
        self.magnitude().max_abs()
    }

    /// Pointwise Frobenius magnitude (off-diagonal counted twice).
    pub fn magnitude(&self) -> ScalarField {
        let mut out = self.xx.clone();
        for ((o, s), d) in out.data.iter_mut().zip(self.xy.data()).zip(self.yy.data()) {
            *o = (*o * *o + 2.0 * s * s + d * d).sqrt();
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Spectral transforms

#[derive(Clone)]
pub struct Spectrum {
    grid: Arc<Grid>,
    data: Vec<Complex64>,
}

impl Spectrum {
    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }
    pub fn data(&self) -> &[Complex64] {
        &self.data
    }
    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }
}

fn transpose(src: &[Complex64], rows: usize, cols: usize) -> Vec<Complex64> {
    // src is rows x cols (cols fastest); output is cols x rows.
    let mut dst = vec![Complex64::default(); src.len()];
    for r in 0..rows {
        for c in 0..cols {
            dst[c * rows + r] = src[r * cols + c];
        }
    }
    dst
}

fn fft_rows(data: &mut [Complex64], row_len: usize, plan: &Arc<dyn Fft<f64>>) {
    let plan = plan.clone();
    par::for_each_chunk_mut(data, row_len, move |_, row| {
        plan.process(row);
    });
}

/// Forward 2D FFT of a real field.
pub fn fft2(f: &ScalarField) -> Spectrum {
    let g = f.grid().clone();
    let (nx, ny) = (g.nx(), g.ny());
    let mut buf: Vec<Complex64> = f.data().iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft_rows(&mut buf, nx, &g.fwd_x);
    let mut t = transpose(&buf, ny, nx);
    fft_rows(&mut t, ny, &g.fwd_y);
    let data = transpose(&t, nx, ny);
    Spectrum { grid: g, data }
}

/// Inverse 2D FFT; the imaginary part (roundoff for spectra of real fields)
/// is discarded.
pub fn ifft2(s: &Spectrum) -> ScalarField {
    let g = s.grid.clone();
    let (nx, ny) = (g.nx(), g.ny());
    let mut buf = s.data.clone();
    fft_rows(&mut buf, nx, &g.inv_x);
    let mut t = transpose(&buf, ny, nx);
    fft_rows(&mut t, ny, &g.inv_y);
    let back = transpose(&t, nx, ny);
    let scale = 1.0 / (nx * ny) as f64;
    ScalarField {
        grid: g,
        data: back.iter().map(|c| c.re * scale).collect(),
    }
}

fn map_spectrum(f: &ScalarField, op: impl Fn(f64, f64, Complex64) -> Complex64 + Sync + Send) -> ScalarField {
    let mut s = fft2(f);
    let g = s.grid.clone();
    let nx = g.nx();
    let kx = g.kx().to_vec();
    let ky = g.ky().to_vec();
    par::for_each_chunk_mut(s.data_mut(), nx, |j, row| {
        let kyj = ky[j];
        for (i, v) in row.iter_mut().enumerate() {
            *v = op(kx[i], kyj, *v);
        }
    });
    ifft2(&s)
}

/// Spectral gradient.
pub fn gradient(f: &ScalarField) -> VectorField {
    let i = Complex64::new(0.0, 1.0);
    VectorField {
        x: map_spectrum(f, |kx, _, v| i * kx * v),
        y: map_spectrum(f, |_, ky, v| i * ky * v),
    }
}

/// Spectral divergence of a vector field.
pub fn divergence(v: &VectorField) -> ScalarField {
    let i = Complex64::new(0.0, 1.0);
    let dx = map_spectrum(&v.x, |kx, _, c| i * kx * c);
    let dy = map_spectrum(&v.y, |_, ky, c| i * ky * c);
    dx.add(&dy)
}

/// Divergence of a symmetric tensor field: (div T)_i = d_j T_ij.
pub fn divergence_tensor(t: &SymTensorField) -> VectorField {
    let i = Complex64::new(0.0, 1.0);
    let dxx_x = map_spectrum(&t.xx, |kx, _, c| i * kx * c);
    let dxy_y = map_spectrum(&t.xy, |_, ky, c| i * ky * c);
    let dxy_x = map_spectrum(&t.xy, |kx, _, c| i * kx * c);
    let dyy_y = map_spectrum(&t.yy, |_, ky, c| i * ky * c);
    VectorField {
        x: dxx_x.add(&dxy_y),
        y: dxy_x.add(&dyy_y),
    }
}

/// Spectral Laplacian, built from the same (Nyquist-zeroed) wavenumber table
/// as the first derivatives so that `divergence(gradient(f)) == laplacian(f)`.
pub fn laplacian(f: &ScalarField) -> ScalarField {
    map_spectrum(f, |kx, ky, v| -(kx * kx + ky * ky) * v)
}

pub fn laplacian_vec(v: &VectorField) -> VectorField {
    VectorField {
        x: laplacian(&v.x),
        y: laplacian(&v.y),
    }
}

pub fn laplacian_tensor(t: &SymTensorField) -> SymTensorField {
    SymTensorField {
        xx: laplacian(&t.xx),
        xy: laplacian(&t.xy),
        yy: laplacian(&t.yy),
    }
}

/// Project a vector field onto its divergence-free part. The k = 0 (mean)
/// mode passes through unchanged.
pub fn leray_project(v: &VectorField) -> VectorField {
    let g = v.grid().clone();
    let nx = g.nx();
    let kx = g.kx().to_vec();
    let ky = g.ky().to_vec();
    let mut sx = fft2(&v.x);
    let mut sy = fft2(&v.y);
    {
        let dy = sy.data_mut();
        let dx = sx.data_mut();
        for j in 0..g.ny() {
            let kyj = ky[j];
            for i in 0..nx {
                let kxi = kx[i];
                let k2 = kxi * kxi + kyj * kyj;
                if k2 == 0.0 {
                    continue;
                }
                let idx = j * nx + i;
                let kdotv = kxi * dx[idx] + kyj * dy[idx];
                dx[idx] -= kxi * kdotv / k2;
                dy[idx] -= kyj * kdotv / k2;
            }
        }
    }
    VectorField {
        x: ifft2(&sx),
        y: ifft2(&sy),
    }
}

fn dealias_keep(i: usize, n: usize) -> bool {
    let f = if i <= n / 2 { i as i64 } else { i as i64 - n as i64 };
    (f.unsigned_abs() as f64) < DEALIAS_FRACTION * (n as f64 / 2.0)
}

/// 2/3-rule truncation: modes beyond two thirds of the Nyquist wavenumber are
/// zeroed.
pub fn dealias(f: &ScalarField) -> ScalarField {
    let mut s = fft2(f);
    let g = s.grid.clone();
    let nx = g.nx();
    let ny = g.ny();
    par::for_each_chunk_mut(s.data_mut(), nx, |j, row| {
        let keep_j = dealias_keep(j, ny);
        for (i, v) in row.iter_mut().enumerate() {
            if !(keep_j && dealias_keep(i, nx)) {
                *v = Complex64::default();
            }
        }
    });
    ifft2(&s)
}

/// Pointwise product of two fields, passed through the de-aliasing filter when
/// requested (nonlinear terms of the model use this path).
pub fn prod(a: &ScalarField, b: &ScalarField, dealias_on: bool) -> ScalarField {
    let p = a.mul_pointwise(b);
    if dealias_on {
        dealias(&p)
    } else {
        p
    }
}

/// Band-limit a field to the lowest `frac` portion of the resolvable modes
/// (|f| <= frac * n/2 in each direction).
pub fn band_limit(f: &ScalarField, frac: f64) -> ScalarField {
    let mut s = fft2(f);
    let g = s.grid.clone();
    let nx = g.nx();
    let ny = g.ny();
    let keep = |i: usize, n: usize| -> bool {
        let fi = if i <= n / 2 { i as i64 } else { i as i64 - n as i64 };
        (fi.unsigned_abs() as f64) <= frac * (n as f64 / 2.0)
    };
    par::for_each_chunk_mut(s.data_mut(), nx, |j, row| {
        let keep_j = keep(j, ny);
        for (i, v) in row.iter_mut().enumerate() {
            if !(keep_j && keep(i, nx)) {
                *v = Complex64::default();
            }
        }
    });
    ifft2(&s)
}

// ---------------------------------------------------------------------------
// Quadrature and norms

/// Integral over the torus by the uniform rectangle rule (exact for
/// band-limited periodic integrands).
pub fn integrate(f: &ScalarField) -> f64 {
    let g = f.grid();
    let nx = g.nx();
    let w = g.hx() * g.hy();
    let data = f.data();
    par::sum_indexed(g.ny(), |j| data[j * nx..(j + 1) * nx].iter().sum::<f64>()) * w
}

fn lp_of_magnitude(mag: &ScalarField, p: f64) -> Result<f64> {
    if p.is_nan() || p < 1.0 {
        return Err(VpsError::InvalidArgument(format!("lp_norm requires p >= 1, got {p}")));
    }
    if p.is_infinite() {
        return Ok(mag.max_abs());
    }
    let g = mag.grid();
    let nx = g.nx();
    let w = g.hx() * g.hy();
    let data = mag.data();
    let sum = par::sum_indexed(g.ny(), |j| {
        data[j * nx..(j + 1) * nx]
            .iter()
            .map(|v| v.abs().powf(p))
            .sum::<f64>()
    });
    Ok((sum * w).powf(1.0 / p))
}

pub fn lp_norm(f: &ScalarField, p: f64) -> Result<f64> {
    lp_of_magnitude(f, p)
}

pub fn lp_norm_vec(v: &VectorField, p: f64) -> Result<f64> {
    lp_of_magnitude(&v.magnitude(), p)
}

pub fn lp_norm_tensor(t: &SymTensorField, p: f64) -> Result<f64> {
    lp_of_magnitude(&t.magnitude(), p)
}

// ---------------------------------------------------------------------------
// Binary snapshot format
//
// 32-byte header: magic "VPSF", version u32, nx u32, ny u32, lx f64, ly f64,
// little-endian, followed by nx*ny row-major binary64 samples.

pub fn write_snapshot(f: &ScalarField, path: &Path) -> Result<()> {
    let g = f.grid();
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    out.write_all(SNAPSHOT_MAGIC)?;
    out.write_all(&SNAPSHOT_VERSION.to_le_bytes())?;
    out.write_all(&(g.nx() as u32).to_le_bytes())?;
    out.write_all(&(g.ny() as u32).to_le_bytes())?;
    out.write_all(&g.lx().to_le_bytes())?;
    out.write_all(&g.ly().to_le_bytes())?;
    for v in f.data() {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_snapshot(path: &Path, grid: Option<&Arc<Grid>>) -> Result<ScalarField> {
    let mut file = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 4];
    file.read_exact(&mut magic)?;
    if &magic != SNAPSHOT_MAGIC {
        return Err(VpsError::InvalidArgument(format!(
            "{}: bad snapshot magic",
            path.display()
        )));
    }
    let mut u32buf = [0u8; 4];
    file.read_exact(&mut u32buf)?;
    let version = u32::from_le_bytes(u32buf);
    if version != SNAPSHOT_VERSION {
        return Err(VpsError::InvalidArgument(format!(
            "{}: unsupported snapshot version {version}",
            path.display()
        )));
    }
    file.read_exact(&mut u32buf)?;
    let nx = u32::from_le_bytes(u32buf) as usize;
    file.read_exact(&mut u32buf)?;
    let ny = u32::from_le_bytes(u32buf) as usize;
    let mut f64buf = [0u8; 8];
    file.read_exact(&mut f64buf)?;
    let lx = f64::from_le_bytes(f64buf);
    file.read_exact(&mut f64buf)?;
    let ly = f64::from_le_bytes(f64buf);
    let g = match grid {
        Some(g) => {
            if g.nx() != nx || g.ny() != ny || g.lx() != lx || g.ly() != ly {
                return Err(VpsError::InvalidArgument(format!(
                    "{}: snapshot grid {nx}x{ny} does not match expected {}x{}",
                    path.display(),
                    g.nx(),
                    g.ny()
                )));
            }
            g.clone()
        }
        None => Grid::new(nx, ny, lx, ly)?,
    };
    let mut data = vec![0.0; nx * ny];
    for v in data.iter_mut() {
        file.read_exact(&mut f64buf)?;
        *v = f64::from_le_bytes(f64buf);
    }
    ScalarField::from_vec(&g, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_band_limited(grid: &Arc<Grid>, seed: u64) -> ScalarField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let raw = ScalarField::from_vec(
            grid,
            (0..grid.len()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        band_limit(&raw, 0.25)
    }

    #[test]
    fn grid_rejects_bad_sizes() {
        assert!(Grid::new(7, 8, 1.0, 1.0).is_err());
        assert!(Grid::new(8, 9, 1.0, 1.0).is_err());
        assert!(Grid::new(4, 4, 1.0, 1.0).is_err());
        assert!(Grid::new(8, 8, 0.0, 1.0).is_err());
        assert!(Grid::new(8, 8, 1.0, 1.0).is_ok());
    }

    #[test]
    fn wavenumber_table_shape() {
        let g = Grid::new(16, 16, 2.0, 1.0).unwrap();
        assert_eq!(g.kx()[0], 0.0);
        assert_eq!(g.kx()[8], 0.0); // Nyquist zeroed
        for m in 1..8 {
            assert!((g.kx()[m] + g.kx()[16 - m]).abs() < 1e-14);
        }
    }

    #[test]
    fn gradient_of_constant_is_zero() {
        let g = Grid::unit(16).unwrap();
        let f = ScalarField::constant(&g, 3.25);
        let v = gradient(&f);
        assert!(v.max_abs() < 1e-13);
    }

    #[test]
    fn gradient_of_fourier_mode() {
        let g = Grid::new(32, 32, 2.0, 1.0).unwrap();
        let k = 2.0 * PI / g.lx();
        let f = ScalarField::from_fn(&g, |x, _| (k * x).sin());
        let v = gradient(&f);
        let expect = ScalarField::from_fn(&g, |x, _| k * (k * x).cos());
        assert!(v.x.sub(&expect).max_abs() < 1e-12);
        assert!(v.y.max_abs() < 1e-13);
    }

    #[test]
    fn gradient_matches_finite_differences_on_refinement() {
        // Centered differences converge at O(h^2) to the spectral derivative
        // of a fixed band-limited profile.
        let profile = |x: f64, y: f64| {
            (2.0 * PI * x).sin() * (4.0 * PI * y).cos() + 0.3 * (6.0 * PI * (x + y)).sin()
        };
        let mut errs = Vec::new();
        for n in [32usize, 64, 128] {
            let g = Grid::unit(n).unwrap();
            let f = ScalarField::from_fn(&g, profile);
            let gx = gradient(&f).x;
            let h = g.hx();
            let mut err = 0.0f64;
            for j in 0..n {
                for i in 0..n {
                    let ip = (i + 1) % n;
                    let im = (i + n - 1) % n;
                    let fd = (f.data()[g.idx(ip, j)] - f.data()[g.idx(im, j)]) / (2.0 * h);
                    err = err.max((fd - gx.data()[g.idx(i, j)]).abs());
                }
            }
            errs.push(err);
        }
        let order1 = (errs[0] / errs[1]).log2();
        let order2 = (errs[1] / errs[2]).log2();
        assert!(order1 > 1.8 && order2 > 1.8, "orders {order1} {order2}");
    }

    #[test]
    fn laplacian_eigenfunction() {
        let g = Grid::new(32, 16, 2.0, 1.0).unwrap();
        let k = 2.0 * PI / g.lx();
        let f = ScalarField::from_fn(&g, |x, _| (k * x).sin());
        let lap = laplacian(&f);
        let expect = f.scaled(-k * k);
        assert!(lap.sub(&expect).max_abs() < 1e-11);
    }

    #[test]
    fn divergence_of_gradient_is_laplacian() {
        let g = Grid::unit(32).unwrap();
        let f = random_band_limited(&g, 7);
        let a = divergence(&gradient(&f));
        let b = laplacian(&f);
        let scale = b.max_abs().max(1.0);
        assert!(a.sub(&b).max_abs() / scale < 1e-12);
    }

    #[test]
    fn divergence_of_curl_form_is_zero() {
        let g = Grid::unit(32).unwrap();
        let psi = random_band_limited(&g, 11);
        let gp = gradient(&psi);
        let v = VectorField { x: gp.y.clone(), y: gp.x.scaled(-1.0) };
        let scale = v.max_abs().max(1.0);
        assert!(divergence(&v).max_abs() / scale < 1e-12);
    }

    #[test]
    fn leray_kills_pure_gradients() {
        let g = Grid::unit(32).unwrap();
        let mut f = random_band_limited(&g, 3);
        let m = f.mean();
        f = f.map(move |v| v - m);
        let v = gradient(&f);
        let w = leray_project(&v);
        assert!(w.max_abs() < 1e-12 * v.max_abs().max(1.0));
    }

    #[test]
    fn leray_idempotent_and_preserves_solenoidal() {
        let g = Grid::unit(32).unwrap();
        let psi = random_band_limited(&g, 5);
        let gp = gradient(&psi);
        let v = VectorField { x: gp.y.clone(), y: gp.x.scaled(-1.0) };
        let w = leray_project(&v);
        assert!(w.x.sub(&v.x).max_abs() < 1e-13 * v.max_abs().max(1.0));
        let w2 = leray_project(&w);
        assert!(w2.x.sub(&w.x).max_abs() < 1e-13);
        assert!(w2.y.sub(&w.y).max_abs() < 1e-13);
    }

    #[test]
    fn leray_recovers_solenoidal_part() {
        let g = Grid::unit(32).unwrap();
        let psi = random_band_limited(&g, 13);
        let gp = gradient(&psi);
        let sol = VectorField { x: gp.y.clone(), y: gp.x.scaled(-1.0) };
        let pot = gradient(&random_band_limited(&g, 17));
        let mixed = sol.add(&pot);
        let w = leray_project(&mixed);
        assert!(w.x.sub(&sol.x).max_abs() < 1e-11);
        assert!(w.y.sub(&sol.y).max_abs() < 1e-11);
    }

    #[test]
    fn leray_is_l2_contraction() {
        let g = Grid::unit(32).unwrap();
        for seed in 0..8 {
            let v = VectorField {
                x: random_band_limited(&g, 100 + seed),
                y: random_band_limited(&g, 200 + seed),
            };
            let w = leray_project(&v);
            assert!(lp_norm_vec(&w, 2.0).unwrap() <= lp_norm_vec(&v, 2.0).unwrap() + 1e-12);
        }
    }

    #[test]
    fn lp_norm_constants_and_zero() {
        let g = Grid::new(16, 16, 2.0, 3.0).unwrap();
        let f = ScalarField::constant(&g, -2.0);
        for p in [1.0, 2.0, 4.0] {
            let expect = 2.0 * g.area().powf(1.0 / p);
            assert!((lp_norm(&f, p).unwrap() - expect).abs() < 1e-12);
        }
        assert_eq!(lp_norm(&f, f64::INFINITY).unwrap(), 2.0);
        let z = ScalarField::zeros(&g);
        assert_eq!(lp_norm(&z, 3.0).unwrap(), 0.0);
        assert!(lp_norm(&f, 0.5).is_err());
    }

    #[test]
    fn l2_norm_of_sine_closed_form() {
        let g = Grid::unit(64).unwrap();
        let f = ScalarField::from_fn(&g, |x, _| (2.0 * PI * x).sin());
        let got = lp_norm(&f, 2.0).unwrap();
        assert!((got - 1.0 / 2.0f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn parseval_consistency() {
        let g = Grid::unit(32).unwrap();
        let f = random_band_limited(&g, 23);
        let n2 = lp_norm(&f, 2.0).unwrap();
        let s = fft2(&f);
        let spectral: f64 =
            s.data().iter().map(|c| c.norm_sqr()).sum::<f64>() / (g.len() as f64) * g.hx() * g.hy();
        assert!((n2 * n2 - spectral).abs() < 1e-12 * spectral.max(1.0));
    }

    #[test]
    fn integrate_examples() {
        let g = Grid::new(16, 32, 2.0, 0.5).unwrap();
        let f = ScalarField::constant(&g, 1.75);
        assert!((integrate(&f) - 1.75 * g.area()).abs() < 1e-13);
        let m = ScalarField::from_fn(&g, |x, _| (2.0 * PI * x / g.lx()).sin());
        assert!(integrate(&m).abs() < 1e-13);
    }

    #[test]
    fn integrate_richardson_refinement() {
        // Quadrature of a fixed smooth (band-limited) profile is grid
        // independent once the modes are resolved.
        let profile =
            |x: f64, y: f64| 0.7 + (2.0 * PI * x).sin() * (2.0 * PI * y).cos() + 0.2 * (4.0 * PI * y).sin();
        let coarse = integrate(&ScalarField::from_fn(&Grid::unit(16).unwrap(), profile));
        let fine = integrate(&ScalarField::from_fn(&Grid::unit(64).unwrap(), profile));
        assert!((coarse - fine).abs() < 1e-12);
    }

    #[test]
    fn operators_are_linear() {
        let g = Grid::unit(16).unwrap();
        let a = random_band_limited(&g, 31);
        let b = random_band_limited(&g, 37);
        let lin = laplacian(&a.axpy(2.5, &b));
        let sep = laplacian(&a).axpy(2.5, &laplacian(&b));
        assert!(lin.sub(&sep).max_abs() < 1e-10);
        let gl = gradient(&a.axpy(-1.5, &b));
        let gs = gradient(&a).axpy(-1.5, &gradient(&b));
        assert!(gl.x.sub(&gs.x).max_abs() < 1e-11);
        assert!(gl.y.sub(&gs.y).max_abs() < 1e-11);
    }

    #[test]
    fn dealias_removes_high_modes_only() {
        let g = Grid::unit(32).unwrap();
        let low = ScalarField::from_fn(&g, |x, _| (2.0 * PI * 3.0 * x).sin());
        let high = ScalarField::from_fn(&g, |x, _| (2.0 * PI * 14.0 * x).sin());
        let f = low.add(&high);
        let d = dealias(&f);
        assert!(d.sub(&low).max_abs() < 1e-12);
    }

    #[test]
    fn snapshot_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let g = Grid::new(16, 8, 2.0, 1.0).unwrap();
        let f = random_band_limited(&g, 41);
        let path = dir.path().join("f.vpsf");
        write_snapshot(&f, &path).unwrap();
        let back = read_snapshot(&path, Some(&g)).unwrap();
        assert_eq!(f.data(), back.data());
        // header is exactly 32 bytes
        let len = std::fs::metadata(&path).unwrap().len();
        assert_eq!(len, 32 + (g.len() * 8) as u64);
    }
}
