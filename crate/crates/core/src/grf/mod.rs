//! Stationary Matérn Gaussian random fields on a lattice: covariance and
//! spectral density, FFT sampling through a truncated Fourier series on the
//! extended periodic grid, and a dense Cholesky sampler used as an oracle.
//!
//! A field is stored as whitened Hermitian coefficients `ẑ = DFT(ξ)/sqrt(M)`
//! with `ξ` iid standard normal on the extended grid. Window values are
//! `X = IDFT(sqrt(w) ⊙ ẑ)`, so `Cov(X_i, X_j) = Σ_m w_m e^{2πi m·(i−j)/M}`.

mod fft;
mod matern;
mod spectral;

use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

pub use fft::Fft2;
pub use matern::{matern_corr, matern_cov, matern_spectral_density, MaternSpec};
pub use spectral::{inner, norm_sq, Order, SpectralBasis, SpectralGrid, DEFAULT_ALIAS};

use crate::error::{Error, Result};
use crate::lattice::{FieldRole, Lattice};

/// Largest lattice accepted by the dense Cholesky sampler.
pub const CHOLESKY_MAX_CELLS: usize = 4096;

/// A sampled field: its whitened coefficients, the weighted coefficients
/// actually synthesised, and the values at the window cell centres.
#[derive(Debug, Clone)]
pub struct SpectralField {
    pub spec: MaternSpec,
    pub order: Order,
    pub white: Vec<Complex64>,
    pub coeffs: Vec<Complex64>,
    pub values: Vec<f64>,
    grid: SpectralGrid,
}

impl SpectralField {
    pub fn from_white(grid: &SpectralGrid, spec: MaternSpec, order: Order, white: Vec<Complex64>) -> Self {
        let basis = SpectralBasis::new(grid, spec, order);
        let coeffs: Vec<Complex64> = white
            .iter()
            .zip(basis.sqrt_weights())
            .map(|(z, s)| z * s)
            .collect();
        let values = synthesize_coeffs(grid, &coeffs);
        Self {
            spec,
            order,
            white,
            coeffs,
            values,
            grid: grid.clone(),
        }
    }

    pub fn grid(&self) -> &SpectralGrid {
        &self.grid
    }

    /// Recompute window values from the coefficients and return the largest
    /// absolute discrepancy relative to the field's scale.
    pub fn round_trip_residual(&self) -> f64 {
        let v = synthesize_coeffs(&self.grid, &self.coeffs);
        let scale = self.values.iter().fold(0.0f64, |a, x| a.max(x.abs())).max(1e-300);
        v.iter()
            .zip(&self.values)
            .fold(0.0f64, |a, (x, y)| a.max((x - y).abs()))
            / scale
    }

    /// CSV raster with columns `row,col,value`.
    pub fn write_csv(&self, path: &Path, nx: usize) -> Result<()> {
        write_raster_csv(path, nx, &self.values)
    }
}

fn synthesize_coeffs(grid: &SpectralGrid, coeffs: &[Complex64]) -> Vec<f64> {
    let mut a = coeffs.to_vec();
    grid.fft().inverse(&mut a);
    grid.restrict(&a)
}

/// CSV raster with columns `row,col,value` for a row-major window array.
pub fn write_raster_csv(path: &Path, nx: usize, values: &[f64]) -> Result<()> {
    let io = |e| Error::io(path, e);
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
    writeln!(f, "row,col,value").map_err(io)?;
    for (j, v) in values.iter().enumerate() {
        writeln!(f, "{},{},{}", j / nx, j % nx, v).map_err(io)?;
    }
    Ok(())
}

fn warn_if_unresolved(spec: &MaternSpec, lattice: &Lattice) {
    if spec.range < 2.0 * lattice.spacing() {
        log::warn!(
            "range {} is below twice the cell size {}; the lattice cannot resolve it",
            spec.range,
            lattice.spacing()
        );
    }
}

/// Draw a field on the lattice's extended grid for `role` at full order.
pub fn sample_fft<R: Rng + ?Sized>(
    spec: MaternSpec,
    lattice: &Lattice,
    role: FieldRole,
    rng: &mut R,
) -> SpectralField {
    let grid = SpectralGrid::new(lattice, role);
    let order = grid.full_order();
    sample_fft_on(&grid, spec, order, lattice, rng)
}

/// Draw a field on a prepared grid at the given truncation order.
pub fn sample_fft_on<R: Rng + ?Sized>(
    grid: &SpectralGrid,
    spec: MaternSpec,
    order: Order,
    lattice: &Lattice,
    rng: &mut R,
) -> SpectralField {
    warn_if_unresolved(&spec, lattice);
    let white = grid.white_noise(rng);
    SpectralField::from_white(grid, spec, order, white)
}

/// Zero every coefficient above `order`. Does not renormalise, so the
/// result is the orthogonal projection of the field.
pub fn project(field: &SpectralField, order: Order) -> SpectralField {
    let order = order.min(field.order);
    let grid = &field.grid;
    let coeffs: Vec<Complex64> = field
        .coeffs
        .iter()
        .enumerate()
        .map(|(m, c)| if grid.in_order(m, order) { *c } else { Complex64::new(0.0, 0.0) })
        .collect();
    let values = synthesize_coeffs(grid, &coeffs);
    SpectralField {
        spec: field.spec,
        order,
        white: field.white.clone(),
        coeffs,
        values,
        grid: grid.clone(),
    }
}

/// Variance of `X − P^p X` at any cell for a full-order field.
pub fn truncation_residual_variance(grid: &SpectralGrid, spec: &MaternSpec, order: Order) -> f64 {
    let w = grid.weights(spec, grid.full_order());
    w.iter()
        .enumerate()
        .filter(|(m, _)| !grid.in_order(*m, order))
        .map(|(_, x)| x)
        .sum()
}

/// Dense covariance matrix of the field between lattice cell centres.
pub fn covariance_matrix(spec: &MaternSpec, lattice: &Lattice) -> DMatrix<f64> {
    let c = lattice.cell_centers();
    let n = c.len();
    DMatrix::from_fn(n, n, |i, j| {
        let h = ((c[i].0 - c[j].0).powi(2) + (c[i].1 - c[j].1).powi(2)).sqrt();
        matern_cov(h, spec)
    })
}

/// Lower Cholesky factor of the cell-centre covariance with `1e-10 σ²`
/// diagonal jitter.
pub fn cholesky_factor(spec: &MaternSpec, lattice: &Lattice) -> Result<DMatrix<f64>> {
    let n = lattice.len();
    if n > CHOLESKY_MAX_CELLS {
        return Err(Error::InvalidParameter(format!(
            "dense Cholesky sampler limited to {CHOLESKY_MAX_CELLS} cells, got {n}"
        )));
    }
    let mut cov = covariance_matrix(spec, lattice);
    let jitter = 1e-10 * spec.variance();
    for i in 0..n {
        cov[(i, i)] += jitter;
    }
    cov.cholesky()
        .map(|c| c.l())
        .ok_or_else(|| Error::Numerical("covariance matrix is not positive definite".into()))
}

/// Exact draw from `N(0, Σ)` at the cell centres using a precomputed factor.
pub fn sample_with_factor<R: Rng + ?Sized>(l: &DMatrix<f64>, rng: &mut R) -> Vec<f64> {
    let n = l.nrows();
    let z: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let mut out = vec![0.0; n];
    for i in 0..n {
        let mut s = 0.0;
        for k in 0..=i {
            s += l[(i, k)] * z[k];
        }
        out[i] = s;
    }
    out
}

/// Exact draw from `N(0, Σ)` with `Σ_ij = matern_cov(|s_i − s_j|)`.
pub fn sample_cholesky<R: Rng + ?Sized>(spec: &MaternSpec, lattice: &Lattice, rng: &mut R) -> Result<Vec<f64>> {
    let l = cholesky_factor(spec, lattice)?;
    Ok(sample_with_factor(&l, rng))
}
