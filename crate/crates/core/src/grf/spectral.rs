use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use super::fft::Fft2;
use super::matern::MaternSpec;
use crate::lattice::{ExtendedDims, FieldRole, Lattice};

/// Number of aliased spectral images summed on each side of a grid
/// frequency when building the discrete spectrum.
pub const DEFAULT_ALIAS: usize = 1;

/// Truncation order `(px, py)`: modes with `|kx| > px` or `|ky| > py` are
/// discarded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct Order {
    pub px: usize,
    pub py: usize,
}

impl Order {
    pub fn new(px: usize, py: usize) -> Self {
        Self { px, py }
    }

    pub fn min(self, other: Order) -> Order {
        Order::new(self.px.min(other.px), self.py.min(other.py))
    }
}

/// Periodic grid on which the spectral representation of a field lives.
#[derive(Debug, Clone)]
pub struct SpectralGrid {
    dims: ExtendedDims,
    nx: usize,
    ny: usize,
    cw: f64,
    ch: f64,
    alias: usize,
    fft: Fft2,
    /// `4π²|f + a/Δ|²` for every mode and alias image, mode-major.
    alias_q: Vec<f64>,
}

impl SpectralGrid {
    pub fn new(lattice: &Lattice, role: FieldRole) -> Self {
        Self::from_parts(
            lattice.extended(role),
            lattice.nx(),
            lattice.ny(),
            lattice.cell_width(),
            lattice.cell_height(),
        )
    }

    pub fn from_parts(dims: ExtendedDims, nx: usize, ny: usize, cw: f64, ch: f64) -> Self {
        assert!(nx <= dims.mx && ny <= dims.my, "window larger than extended grid");
        let mut g = Self {
            dims,
            nx,
            ny,
            cw,
            ch,
            alias: DEFAULT_ALIAS,
            fft: Fft2::new(dims.mx, dims.my),
            alias_q: vec![],
        };
        g.alias_q = g.alias_squares();
        g
    }

    pub fn with_alias(mut self, alias: usize) -> Self {
        self.alias = alias;
        self.alias_q = self.alias_squares();
        self
    }

    fn alias_squares(&self) -> Vec<f64> {
        let a = self.alias as i64;
        let (fx_a, fy_a) = (1.0 / self.cw, 1.0 / self.ch);
        let fourpi2 = 4.0 * std::f64::consts::PI.powi(2);
        let mut q = Vec::with_capacity(self.len() * ((2 * a + 1) * (2 * a + 1)) as usize);
        for m in 0..self.len() {
            let f = self.frequency(m);
            for ax in -a..=a {
                for ay in -a..=a {
                    let g = [f[0] + ax as f64 * fx_a, f[1] + ay as f64 * fy_a];
                    q.push(fourpi2 * (g[0] * g[0] + g[1] * g[1]));
                }
            }
        }
        q
    }

    pub fn dims(&self) -> ExtendedDims {
        self.dims
    }

    /// Number of window cells.
    pub fn window_len(&self) -> usize {
        self.nx * self.ny
    }

    /// Number of modes on the extended grid.
    pub fn len(&self) -> usize {
        self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_width(&self) -> f64 {
        self.cw
    }

    pub fn cell_height(&self) -> f64 {
        self.ch
    }

    pub fn full_order(&self) -> Order {
        Order::new(self.dims.mx / 2, self.dims.my / 2)
    }

    pub fn half_order(&self) -> Order {
        let f = self.full_order();
        Order::new(f.px / 2, f.py / 2)
    }

    pub fn fft(&self) -> &Fft2 {
        &self.fft
    }

    /// Signed integer wavenumbers of mode `m`.
    #[inline]
    pub fn wavenumber(&self, m: usize) -> (i64, i64) {
        let (mx, my) = (self.dims.mx, self.dims.my);
        let (kx, ky) = (m % mx, m / mx);
        let s = |k: usize, n: usize| if 2 * k > n { k as i64 - n as i64 } else { k as i64 };
        (s(kx, mx), s(ky, my))
    }

    /// Mode frequency in cycles per unit length.
    pub fn frequency(&self, m: usize) -> [f64; 2] {
        let (kx, ky) = self.wavenumber(m);
        [
            kx as f64 / (self.dims.mx as f64 * self.cw),
            ky as f64 / (self.dims.my as f64 * self.ch),
        ]
    }

    pub fn in_order(&self, m: usize, order: Order) -> bool {
        let (kx, ky) = self.wavenumber(m);
        kx.unsigned_abs() as usize <= order.px && ky.unsigned_abs() as usize <= order.py
    }

    /// Whitened Hermitian coefficients `DFT(ξ)/sqrt(M)` for iid standard
    /// normal `ξ` on the extended grid.
    pub fn white_noise<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<Complex64> {
        let mut z: Vec<Complex64> = (0..self.len())
            .map(|_| Complex64::new(rng.sample(StandardNormal), 0.0))
            .collect();
        self.fft.forward(&mut z);
        let s = 1.0 / (self.len() as f64).sqrt();
        z.iter_mut().for_each(|c| *c *= s);
        z
    }

    /// Place window values into an extended-grid array, zero elsewhere.
    pub fn embed(&self, window: &[f64]) -> Vec<Complex64> {
        assert_eq!(window.len(), self.window_len());
        let mut out = vec![Complex64::new(0.0, 0.0); self.len()];
        for iy in 0..self.ny {
            for ix in 0..self.nx {
                out[iy * self.dims.mx + ix] = Complex64::new(window[iy * self.nx + ix], 0.0);
            }
        }
        out
    }

    /// Real parts on the window cells.
    pub fn restrict(&self, grid: &[Complex64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.window_len());
        for iy in 0..self.ny {
            for ix in 0..self.nx {
                out.push(grid[iy * self.dims.mx + ix].re);
            }
        }
        out
    }

    /// Aliased spectral mass per retained mode, up to a constant factor,
    /// and the log-range derivative of each entry.
    fn raw_spectrum(&self, spec: &MaternSpec, order: Order) -> (Vec<f64>, Vec<f64>) {
        let unit = spec.with_sigma(1.0);
        let k2 = unit.kappa().powi(2);
        let nu = unit.nu;
        let e = nu + 1.0;
        let int_e = (e.fract() == 0.0 && e <= 16.0).then_some(e as i32);
        let n_img = (2 * self.alias + 1).pow(2);
        let mut w = vec![0.0; self.len()];
        let mut d = vec![0.0; self.len()];
        for m in 0..self.len() {
            if !self.in_order(m, order) {
                continue;
            }
            let (mut sum, mut sum_inv) = (0.0, 0.0);
            for &q in &self.alias_q[m * n_img..(m + 1) * n_img] {
                let x = k2 + q;
                let s = match int_e {
                    Some(i) => {
                        let r = 1.0 / x;
                        (1..i).fold(r, |acc, _| acc * r)
                    }
                    None => x.powf(-e),
                };
                sum += s;
                sum_inv += s / x;
            }
            w[m] = sum;
            d[m] = -2.0 * nu + 2.0 * (nu + 1.0) * k2 * sum_inv / sum;
        }
        (w, d)
    }

    /// Discrete spectrum `w_m` with `Σ_m w_m = σ²` over the modes retained
    /// by `order`; discarded modes carry zero weight.
    pub fn weights(&self, spec: &MaternSpec, order: Order) -> Vec<f64> {
        self.weights_with_range_derivative(spec, order).0
    }

    /// Weights together with `∂ log w_m / ∂ log ρ` on retained modes.
    pub fn weights_with_range_derivative(&self, spec: &MaternSpec, order: Order) -> (Vec<f64>, Vec<f64>) {
        let (mut w, mut d) = self.raw_spectrum(spec, order);
        let total: f64 = w.iter().sum();
        let mean_d: f64 = w.iter().zip(&d).map(|(wi, di)| wi * di).sum::<f64>() / total;
        let var = spec.variance();
        for m in 0..w.len() {
            if w[m] > 0.0 {
                w[m] *= var / total;
                d[m] -= mean_d;
            }
        }
        (w, d)
    }
}

/// A Matérn spectrum evaluated on a grid at a fixed truncation order; maps
/// whitened coefficients to window values and back.
#[derive(Debug, Clone)]
pub struct SpectralBasis {
    spec: MaternSpec,
    order: Order,
    sqrt_w: Vec<f64>,
    half_dlog: Vec<f64>,
}

impl SpectralBasis {
    pub fn new(grid: &SpectralGrid, spec: MaternSpec, order: Order) -> Self {
        let (w, d) = grid.weights_with_range_derivative(&spec, order);
        Self {
            spec,
            order,
            sqrt_w: w.iter().map(|x| x.sqrt()).collect(),
            half_dlog: d.iter().map(|x| 0.5 * x).collect(),
        }
    }

    pub fn spec(&self) -> &MaternSpec {
        &self.spec
    }

    /// The same basis at marginal standard deviation `sigma`.
    pub fn with_sigma(&self, sigma: f64) -> Self {
        let r = sigma / self.spec.sigma;
        Self {
            spec: self.spec.with_sigma(sigma),
            order: self.order,
            sqrt_w: self.sqrt_w.iter().map(|s| s * r).collect(),
            half_dlog: self.half_dlog.clone(),
        }
    }

    pub fn order(&self) -> Order {
        self.order
    }

    pub fn sqrt_weights(&self) -> &[f64] {
        &self.sqrt_w
    }

    /// Window values `X = IDFT(sqrt(w) ⊙ ẑ)`.
    pub fn synthesize(&self, grid: &SpectralGrid, white: &[Complex64]) -> Vec<f64> {
        let mut a: Vec<Complex64> = white.iter().zip(&self.sqrt_w).map(|(z, s)| z * s).collect();
        grid.fft().inverse(&mut a);
        grid.restrict(&a)
    }

    /// Gradient with respect to `ẑ` of a functional whose derivative with
    /// respect to the window values is `g`, under `⟨a, b⟩ = Re Σ a b̄`.
    pub fn adjoint(&self, grid: &SpectralGrid, g: &[f64]) -> Vec<Complex64> {
        let mut a = grid.embed(g);
        grid.fft().forward(&mut a);
        a.iter_mut().zip(&self.sqrt_w).for_each(|(c, s)| *c *= s);
        a
    }

    /// `∂X / ∂ log ρ` on the window at fixed `ẑ`.
    pub fn range_tangent(&self, grid: &SpectralGrid, white: &[Complex64]) -> Vec<f64> {
        let mut a: Vec<Complex64> = white
            .iter()
            .zip(self.sqrt_w.iter().zip(&self.half_dlog))
            .map(|(z, (s, h))| z * (s * h))
            .collect();
        grid.fft().inverse(&mut a);
        grid.restrict(&a)
    }
}

/// Real inner product `Re Σ a b̄` on coefficient arrays.
pub fn inner(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.re * y.re + x.im * y.im).sum()
}

pub fn norm_sq(a: &[Complex64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum()
}
