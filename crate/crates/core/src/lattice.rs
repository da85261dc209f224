//! Regular lattice discretisation of a rectangular window, extension margins
//! for wrap-around-free spectral simulation, and binning of point patterns.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{PointPattern, Window};

/// Which latent field a spectral grid is built for. The level-set field and
/// the class fields carry separate extension margins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FieldRole {
    LevelSet,
    Class,
}

/// Extension margins (window units) per field role.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Margins {
    pub level_set: f64,
    pub class: f64,
}

impl Margins {
    pub fn uniform(m: f64) -> Self {
        Self {
            level_set: m,
            class: m,
        }
    }

    pub fn get(&self, role: FieldRole) -> f64 {
        match role {
            FieldRole::LevelSet => self.level_set,
            FieldRole::Class => self.class,
        }
    }
}

/// Periodic FFT grid on which a field of a given role is simulated. The
/// window occupies cells `[0, nx) × [0, ny)`; the remaining cells are the
/// extension that absorbs wrap-around correlation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ExtendedDims {
    pub mx: usize,
    pub my: usize,
}

impl ExtendedDims {
    pub fn len(&self) -> usize {
        self.mx * self.my
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lattice {
    window: Window,
    nx: usize,
    ny: usize,
    margins: Margins,
    ext_level_set: ExtendedDims,
    ext_class: ExtendedDims,
}

/// Smallest integer `≥ n` whose only prime factors are 2, 3 and 5.
pub fn next_smooth(n: usize) -> usize {
    let mut m = n.max(1);
    loop {
        let mut r = m;
        for p in [2, 3, 5] {
            while r % p == 0 {
                r /= p;
            }
        }
        if r == 1 {
            return m;
        }
        m += 1;
    }
}

impl Lattice {
    pub fn new(window: Window, nx: usize, ny: usize, margins: Margins) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::InvalidGeometry(format!(
                "lattice needs at least one cell per axis, got {nx} x {ny}"
            )));
        }
        let window = Window::new(window.x0, window.y0, window.width, window.height)?;
        if !(margins.level_set >= 0.0 && margins.class >= 0.0)
            || !margins.level_set.is_finite()
            || !margins.class.is_finite()
        {
            return Err(Error::InvalidGeometry(
                "extension margins must be finite and non-negative".into(),
            ));
        }
        let cw = window.width / nx as f64;
        let ch = window.height / ny as f64;
        let ext = |m: f64| {
            let px = (m / cw - 1e-9).ceil().max(0.0) as usize;
            let py = (m / ch - 1e-9).ceil().max(0.0) as usize;
            ExtendedDims {
                mx: next_smooth(nx + 2 * px),
                my: next_smooth(ny + 2 * py),
            }
        };
        Ok(Self {
            window,
            nx,
            ny,
            margins,
            ext_level_set: ext(margins.level_set),
            ext_class: ext(margins.class),
        })
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn margins(&self) -> Margins {
        self.margins
    }

    pub fn cell_width(&self) -> f64 {
        self.window.width / self.nx as f64
    }

    pub fn cell_height(&self) -> f64 {
        self.window.height / self.ny as f64
    }

    /// `|D_j|`, identical for all cells.
    pub fn cell_area(&self) -> f64 {
        self.cell_width() * self.cell_height()
    }

    /// Lattice spacing used as the lower truncation for range priors.
    pub fn spacing(&self) -> f64 {
        self.cell_width().max(self.cell_height())
    }

    pub fn extended(&self, role: FieldRole) -> ExtendedDims {
        match role {
            FieldRole::LevelSet => self.ext_level_set,
            FieldRole::Class => self.ext_class,
        }
    }

    /// Row-major cell index; rows run along y.
    #[inline]
    pub fn index(&self, ix: usize, iy: usize) -> usize {
        iy * self.nx + ix
    }

    #[inline]
    pub fn coords(&self, j: usize) -> (usize, usize) {
        (j % self.nx, j / self.nx)
    }

    /// Geometric midpoint of cell `j`.
    pub fn cell_center(&self, j: usize) -> (f64, f64) {
        let (ix, iy) = self.coords(j);
        (
            self.window.x0 + (ix as f64 + 0.5) * self.cell_width(),
            self.window.y0 + (iy as f64 + 0.5) * self.cell_height(),
        )
    }

    pub fn cell_centers(&self) -> Vec<(f64, f64)> {
        (0..self.len()).map(|j| self.cell_center(j)).collect()
    }

    /// Cell bounds `(x0, y0, x1, y1)`.
    pub fn cell_bounds(&self, j: usize) -> (f64, f64, f64, f64) {
        let (ix, iy) = self.coords(j);
        let (cw, ch) = (self.cell_width(), self.cell_height());
        let x0 = self.window.x0 + ix as f64 * cw;
        let y0 = self.window.y0 + iy as f64 * ch;
        (x0, y0, x0 + cw, y0 + ch)
    }

    /// Cell containing `(x, y)` under the half-open convention; points on
    /// the right or top window edge go to the last cell. `None` outside.
    pub fn locate(&self, x: f64, y: f64) -> Option<usize> {
        if !self.window.contains(x, y) {
            return None;
        }
        let fx = (x - self.window.x0) / self.window.width * self.nx as f64;
        let fy = (y - self.window.y0) / self.window.height * self.ny as f64;
        let ix = (fx.floor() as usize).min(self.nx - 1);
        let iy = (fy.floor() as usize).min(self.ny - 1);
        Some(self.index(ix, iy))
    }
}

/// Point counts per lattice cell (row-major).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountGrid {
    pub nx: usize,
    pub ny: usize,
    pub counts: Vec<u32>,
    /// Pattern points that fell outside the window and were not binned.
    pub outside: usize,
}

impl CountGrid {
    pub fn zeros(lattice: &Lattice) -> Self {
        Self {
            nx: lattice.nx(),
            ny: lattice.ny(),
            counts: vec![0; lattice.len()],
            outside: 0,
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| c as u64).sum()
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// CSV with columns `row,col,count`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(
            std::fs::File::create(path).map_err(|e| Error::io(path, e))?,
        );
        let io = |e| Error::io(path, e);
        writeln!(f, "row,col,count").map_err(io)?;
        for (j, c) in self.counts.iter().enumerate() {
            writeln!(f, "{},{},{}", j / self.nx, j % self.nx, c).map_err(io)?;
        }
        Ok(())
    }
}

/// Bin a point pattern to lattice counts. Points outside the window are
/// tallied in [`CountGrid::outside`].
pub fn bin_points(pattern: &PointPattern, lattice: &Lattice) -> CountGrid {
    let mut grid = CountGrid::zeros(lattice);
    for &(x, y) in &pattern.points {
        match lattice.locate(x, y) {
            Some(j) => grid.counts[j] += 1,
            None => grid.outside += 1,
        }
    }
    if grid.outside > 0 {
        log::warn!("{} pattern points outside the window were not binned", grid.outside);
    }
    grid
}
