use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Unnormalised 2-D FFT on a row-major `my × mx` array.
#[derive(Clone)]
pub struct Fft2 {
    mx: usize,
    my: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Fft2 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Fft2({}x{})", self.mx, self.my)
    }
}

impl Fft2 {
    pub fn new(mx: usize, my: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            mx,
            my,
            row_fwd: planner.plan_fft_forward(mx),
            row_inv: planner.plan_fft_inverse(mx),
            col_fwd: planner.plan_fft_forward(my),
            col_inv: planner.plan_fft_inverse(my),
        }
    }

    pub fn len(&self) -> usize {
        self.mx * self.my
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn forward(&self, data: &mut [Complex64]) {
        self.run(data, &self.row_fwd, &self.col_fwd);
    }

    /// Inverse transform without the `1/M` factor.
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.run(data, &self.row_inv, &self.col_inv);
    }

    fn run(&self, data: &mut [Complex64], row: &Arc<dyn Fft<f64>>, col: &Arc<dyn Fft<f64>>) {
        assert_eq!(data.len(), self.len());
        let (mx, my) = (self.mx, self.my);
        if mx > 1 {
            row.process(data);
        }
        if my > 1 {
            let mut t = vec![Complex64::new(0.0, 0.0); data.len()];
            for iy in 0..my {
                for ix in 0..mx {
                    t[ix * my + iy] = data[iy * mx + ix];
                }
            }
            col.process(&mut t);
            for ix in 0..mx {
                for iy in 0..my {
                    data[iy * mx + ix] = t[ix * my + iy];
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_naive_dft() {
        let (mx, my) = (6, 5);
        let data: Vec<Complex64> = (0..mx * my)
            .map(|i| Complex64::new((i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()))
            .collect();
        let mut fast = data.clone();
        Fft2::new(mx, my).forward(&mut fast);
        for ky in 0..my {
            for kx in 0..mx {
                let mut acc = Complex64::new(0.0, 0.0);
                for iy in 0..my {
                    for ix in 0..mx {
                        let ph = -2.0
                            * std::f64::consts::PI
                            * (kx as f64 * ix as f64 / mx as f64 + ky as f64 * iy as f64 / my as f64);
                        acc += data[iy * mx + ix] * Complex64::from_polar(1.0, ph);
                    }
                }
                assert!((acc - fast[ky * mx + kx]).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn round_trip() {
        let (mx, my) = (8, 12);
        let data: Vec<Complex64> = (0..mx * my).map(|i| Complex64::new(i as f64, 0.0)).collect();
        let mut x = data.clone();
        let f = Fft2::new(mx, my);
        f.forward(&mut x);
        f.inverse(&mut x);
        for (a, b) in x.iter().zip(&data) {
            assert!((a / (mx * my) as f64 - b).norm() < 1e-9);
        }
    }
}
