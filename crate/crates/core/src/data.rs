//! Loading and preprocessing of point patterns and covariate rasters.
//!
//! Raster files are node-registered grids. The header form is four
//! `key value` lines (`ncols`, `nrows`, `cellsize`, `origin x y`) followed by
//! comma-separated rows, first row northernmost; `origin` is the
//! south-west node. Missing values are `NaN` or empty fields.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{PointPattern, Window};
use crate::lattice::Lattice;

fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Io { path: path.into(), source: e })
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { path: path.into(), line, msg: msg.into() }
}

/// Read a CSV with header `x,y`. Non-finite coordinates are rejected.
pub fn load_pattern(path: &Path, window: Window) -> Result<PointPattern> {
    let text = read_to_string(path)?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| parse_err(path, 1, "empty file"))?;
    let cols: Vec<&str> = header.split(',').map(|s| s.trim().trim_matches('"')).collect();
    let ix = cols.iter().position(|c| *c == "x");
    let iy = cols.iter().position(|c| *c == "y");
    let (Some(ix), Some(iy)) = (ix, iy) else {
        return Err(parse_err(path, 1, "header must name columns x and y"));
    };
    let mut pts = Vec::new();
    for (i, line) in lines {
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        let get = |k: usize| -> Result<f64> {
            let s = f.get(k).ok_or_else(|| parse_err(path, i + 1, "missing field"))?;
            let v: f64 = s.parse().map_err(|_| parse_err(path, i + 1, format!("not a number: '{s}'")))?;
            if !v.is_finite() {
                return Err(parse_err(path, i + 1, "non-finite coordinate"));
            }
            Ok(v)
        };
        pts.push((get(ix)?, get(iy)?));
    }
    let outside = pts.iter().filter(|(x, y)| !window.contains(*x, *y)).count();
    if outside > 0 {
        log::warn!("{}: {outside} points lie outside the window", path.display());
    }
    Ok(PointPattern::new(window, pts))
}

/// Node-registered covariate grid; `values[row * ncols + col]` with row 0
/// southernmost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Raster {
    pub ncols: usize,
    pub nrows: usize,
    pub cell: f64,
    pub x0: f64,
    pub y0: f64,
    pub values: Vec<f64>,
}

impl Raster {
    pub fn new(ncols: usize, nrows: usize, cell: f64, x0: f64, y0: f64, values: Vec<f64>) -> Result<Self> {
        if ncols == 0 || nrows == 0 || values.len() != ncols * nrows {
            return Err(Error::Shape(format!("raster {ncols}×{nrows} with {} values", values.len())));
        }
        if !(cell > 0.0 && cell.is_finite()) {
            return Err(Error::InvalidParameter(format!("raster cell size must be positive, got {cell}")));
        }
        Ok(Self { ncols, nrows, cell, x0, y0, values })
    }

    /// Raster from a function evaluated at the nodes.
    pub fn from_fn(ncols: usize, nrows: usize, cell: f64, x0: f64, y0: f64, mut f: impl FnMut(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(ncols * nrows);
        for r in 0..nrows {
            for c in 0..ncols {
                values.push(f(x0 + c as f64 * cell, y0 + r as f64 * cell));
            }
        }
        Self { ncols, nrows, cell, x0, y0, values }
    }

    pub fn get(&self, col: usize, row: usize) -> f64 {
        self.values[row * self.ncols + col]
    }

    pub fn x1(&self) -> f64 {
        self.x0 + (self.ncols - 1) as f64 * self.cell
    }

    pub fn y1(&self) -> f64 {
        self.y0 + (self.nrows - 1) as f64 * self.cell
    }
}

fn parse_rows(path: &Path, lines: &[(usize, &str)], ncols: Option<usize>) -> Result<(usize, Vec<f64>)> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for &(i, line) in lines {
        // commas if present (empty fields are missing), otherwise whitespace
        let fields: Vec<&str> =
            if line.contains(',') { line.split(',').collect() } else { line.split_whitespace().collect() };
        let row = fields
            .into_iter()
            .map(|s| {
                let s = s.trim();
                if s.is_empty() || s.eq_ignore_ascii_case("nan") || s.eq_ignore_ascii_case("na") {
                    Ok(f64::NAN)
                } else {
                    s.parse::<f64>().map_err(|_| parse_err(path, i + 1, format!("not a number: '{s}'")))
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        let want = ncols.or(rows.first().map(Vec::len)).unwrap_or(row.len());
        if row.len() != want {
            return Err(parse_err(path, i + 1, format!("expected {want} values, found {}", row.len())));
        }
        rows.push(row);
    }
    let nc = rows.first().map(Vec::len).unwrap_or(0);
    // file rows run north to south
    rows.reverse();
    Ok((nc, rows.concat()))
}

/// Read a raster with the four-line header.
pub fn load_raster(path: &Path) -> Result<Raster> {
    let text = read_to_string(path)?;
    let lines: Vec<(usize, &str)> = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()).collect();
    if lines.len() < 5 {
        return Err(parse_err(path, lines.len() + 1, "raster needs a 4-line header and data rows"));
    }
    let field = |k: usize, key: &str| -> Result<Vec<f64>> {
        let (i, l) = lines[k];
        let mut it = l.split(|c: char| c.is_whitespace() || c == ',').filter(|s| !s.is_empty());
        let name = it.next().unwrap_or("");
        if !name.eq_ignore_ascii_case(key) {
            return Err(parse_err(path, i + 1, format!("expected header key '{key}', found '{name}'")));
        }
        it.map(|s| s.parse::<f64>().map_err(|_| parse_err(path, i + 1, format!("bad header value '{s}'"))))
            .collect()
    };
    let ncols = field(0, "ncols")?;
    let nrows = field(1, "nrows")?;
    let cell = field(2, "cellsize")?;
    let origin = field(3, "origin")?;
    if ncols.len() != 1 || nrows.len() != 1 || cell.len() != 1 || origin.len() != 2 {
        return Err(parse_err(path, 1, "malformed raster header"));
    }
    let (nc, nr) = (ncols[0] as usize, nrows[0] as usize);
    let data = &lines[4..];
    if data.len() != nr {
        return Err(parse_err(path, lines[4].0 + 1, format!("expected {nr} data rows, found {}", data.len())));
    }
    let (_, values) = parse_rows(path, data, Some(nc))?;
    fill_missing(Raster::new(nc, nr, cell[0], origin[0], origin[1], values)?, path)
}

/// Read a plain matrix CSV (first row northernmost) with the node geometry
/// supplied separately.
pub fn load_raster_matrix(path: &Path, cell: f64, x0: f64, y0: f64) -> Result<Raster> {
    let text = read_to_string(path)?;
    let lines: Vec<(usize, &str)> = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()).collect();
    let (nc, values) = parse_rows(path, &lines, None)?;
    let nr = lines.len();
    fill_missing(Raster::new(nc, nr, cell, x0, y0, values)?, path)
}

/// Replace missing values by the mean of their available 4-neighbours,
/// sweeping until none remain.
fn fill_missing(mut r: Raster, path: &Path) -> Result<Raster> {
    let missing = r.values.iter().filter(|v| v.is_nan()).count();
    if missing == 0 {
        return Ok(r);
    }
    if missing == r.values.len() {
        return Err(Error::Data(format!("{}: raster has no values", path.display())));
    }
    log::warn!("{}: {missing} missing raster values filled by neighbour averaging", path.display());
    let (nc, nr) = (r.ncols, r.nrows);
    loop {
        let prev = r.values.clone();
        let mut left = 0;
        for row in 0..nr {
            for col in 0..nc {
                if !prev[row * nc + col].is_nan() {
                    continue;
                }
                let mut s = 0.0;
                let mut n = 0;
                let nb = [(col.wrapping_sub(1), row), (col + 1, row), (col, row.wrapping_sub(1)), (col, row + 1)];
                for (c, rr) in nb {
                    if c < nc && rr < nr && !prev[rr * nc + c].is_nan() {
                        s += prev[rr * nc + c];
                        n += 1;
                    }
                }
                if n > 0 {
                    r.values[row * nc + col] = s / n as f64;
                } else {
                    left += 1;
                }
            }
        }
        if left == 0 {
            return Ok(r);
        }
    }
}

/// Slopes of the not-a-knot cubic spline through equally spaced values.
fn not_a_knot_slopes(y: &[f64], h: f64) -> Vec<f64> {
    let n = y.len();
    let d: Vec<f64> = y.windows(2).map(|w| (w[1] - w[0]) / h).collect();
    match n {
        0 | 1 => return vec![0.0; n],
        2 => return vec![d[0]; 2],
        3 => {
            // a single parabola
            return vec![1.5 * d[0] - 0.5 * d[1], 0.5 * (d[0] + d[1]), 1.5 * d[1] - 0.5 * d[0]];
        }
        _ => {}
    }
    let (mut a, mut b, mut c, mut r) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    b[0] = 1.0;
    c[0] = 2.0;
    r[0] = 0.5 * (5.0 * d[0] + d[1]);
    for i in 1..n - 1 {
        a[i] = 1.0;
        b[i] = 4.0;
        c[i] = 1.0;
        r[i] = 3.0 * (d[i - 1] + d[i]);
    }
    a[n - 1] = 2.0;
    b[n - 1] = 1.0;
    r[n - 1] = 0.5 * (5.0 * d[n - 2] + d[n - 3]);
    // Thomas algorithm
    for i in 1..n {
        let m = a[i] / b[i - 1];
        b[i] -= m * c[i - 1];
        r[i] -= m * r[i - 1];
    }
    let mut s = vec![0.0; n];
    s[n - 1] = r[n - 1] / b[n - 1];
    for i in (0..n - 1).rev() {
        s[i] = (r[i] - c[i] * s[i + 1]) / b[i];
    }
    s
}

/// Evaluate the cubic Hermite interpolant with node values `y` and slopes
/// `s` at offset `t` (in node units) from the first node.
fn hermite(y: &[f64], s: &[f64], h: f64, t: f64) -> f64 {
    let n = y.len();
    if n == 1 {
        return y[0];
    }
    let i = (t.floor().max(0.0) as usize).min(n - 2);
    let u = t - i as f64;
    let (u2, u3) = (u * u, u * u * u);
    let h00 = 2.0 * u3 - 3.0 * u2 + 1.0;
    let h10 = u3 - 2.0 * u2 + u;
    let h01 = -2.0 * u3 + 3.0 * u2;
    let h11 = u3 - u2;
    h00 * y[i] + h10 * h * s[i] + h01 * y[i + 1] + h11 * h * s[i + 1]
}

fn spline_eval(y: &[f64], h: f64, ts: &[f64]) -> Vec<f64> {
    let s = not_a_knot_slopes(y, h);
    ts.iter().map(|&t| hermite(y, &s, h, t)).collect()
}

/// Tensor-product not-a-knot bicubic spline of the raster evaluated at the
/// lattice cell centres, in lattice cell order.
pub fn bicubic_to_lattice(raster: &Raster, lattice: &Lattice) -> Result<Vec<f64>> {
    let centers_x: Vec<f64> = (0..lattice.nx()).map(|i| lattice.cell_center(lattice.index(i, 0)).0).collect();
    let centers_y: Vec<f64> = (0..lattice.ny()).map(|j| lattice.cell_center(lattice.index(0, j)).1).collect();
    let tol = 1e-9 * raster.cell;
    let out_x = centers_x.iter().any(|&x| x < raster.x0 - tol || x > raster.x1() + tol);
    let out_y = centers_y.iter().any(|&y| y < raster.y0 - tol || y > raster.y1() + tol);
    if out_x || out_y {
        return Err(Error::Data(format!(
            "raster extent [{}, {}] × [{}, {}] does not cover the lattice cell centres",
            raster.x0,
            raster.x1(),
            raster.y0,
            raster.y1()
        )));
    }
    let tx: Vec<f64> = centers_x.iter().map(|x| (x - raster.x0) / raster.cell).collect();
    let ty: Vec<f64> = centers_y.iter().map(|y| (y - raster.y0) / raster.cell).collect();
    // along x for every raster row, then along y for every lattice column
    let rows: Vec<Vec<f64>> = (0..raster.nrows)
        .map(|r| spline_eval(&raster.values[r * raster.ncols..(r + 1) * raster.ncols], raster.cell, &tx))
        .collect();
    let mut out = vec![0.0; lattice.len()];
    let mut col = vec![0.0; raster.nrows];
    for (i, _) in tx.iter().enumerate() {
        for (c, row) in col.iter_mut().zip(&rows) {
            *c = row[i];
        }
        for (j, v) in spline_eval(&col, raster.cell, &ty).into_iter().enumerate() {
            out[lattice.index(i, j)] = v;
        }
    }
    Ok(out)
}

/// Gradient magnitude from 3×3 Sobel kernels scaled by `1/(8h)`, with
/// replicated edges.
pub fn sobel_slope(elev: &Raster) -> Result<Raster> {
    let (nc, nr) = (elev.ncols, elev.nrows);
    if nc < 3 || nr < 3 {
        return Err(Error::Data(format!("Sobel slope needs at least a 3×3 grid, got {nc}×{nr}")));
    }
    let at = |c: isize, r: isize| elev.get(c.clamp(0, nc as isize - 1) as usize, r.clamp(0, nr as isize - 1) as usize);
    let k = 1.0 / (8.0 * elev.cell);
    let mut values = Vec::with_capacity(nc * nr);
    for r in 0..nr as isize {
        for c in 0..nc as isize {
            let gx = (at(c + 1, r - 1) + 2.0 * at(c + 1, r) + at(c + 1, r + 1))
                - (at(c - 1, r - 1) + 2.0 * at(c - 1, r) + at(c - 1, r + 1));
            let gy = (at(c - 1, r + 1) + 2.0 * at(c, r + 1) + at(c + 1, r + 1))
                - (at(c - 1, r - 1) + 2.0 * at(c, r - 1) + at(c + 1, r - 1));
            values.push(k * gx.hypot(gy));
        }
    }
    Raster::new(nc, nr, elev.cell, elev.x0, elev.y0, values)
}

/// Named covariates on lattice cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateStack {
    pub names: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

impl CovariateStack {
    pub fn new(names: Vec<String>, columns: Vec<Vec<f64>>) -> Result<Self> {
        if names.len() != columns.len() {
            return Err(Error::Shape(format!("{} names for {} covariates", names.len(), columns.len())));
        }
        if let Some(n) = columns.first().map(Vec::len) {
            if columns.iter().any(|c| c.len() != n) {
                return Err(Error::Shape("covariates differ in length".into()));
            }
        }
        Ok(Self { names, columns })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn n_cells(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    fn select(&self, keep: &[usize]) -> Self {
        Self {
            names: keep.iter().map(|&i| self.names[i].clone()).collect(),
            columns: keep.iter().map(|&i| self.columns[i].clone()).collect(),
        }
    }
}

/// Per-covariate centring and scaling (sample sd, `n − 1`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub names: Vec<String>,
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
}

impl Standardization {
    /// Coefficients on the original covariate scale from coefficients
    /// `[intercept, β_1..]` on the standardized scale.
    pub fn unstandardize(&self, beta: &[f64]) -> Vec<f64> {
        let mut out = beta.to_vec();
        for i in 0..self.means.len() {
            out[i + 1] = beta[i + 1] / self.sds[i];
            out[0] -= beta[i + 1] * self.means[i] / self.sds[i];
        }
        out
    }

    /// Inverse of [`Standardization::unstandardize`].
    pub fn standardize(&self, beta: &[f64]) -> Vec<f64> {
        let mut out = beta.to_vec();
        for i in 0..self.means.len() {
            out[i + 1] = beta[i + 1] * self.sds[i];
            out[0] += beta[i + 1] * self.means[i];
        }
        out
    }
}

pub fn standardize(stack: &CovariateStack) -> Result<(CovariateStack, Standardization)> {
    let mut out = stack.clone();
    let mut means = Vec::new();
    let mut sds = Vec::new();
    for (name, col) in stack.names.iter().zip(out.columns.iter_mut()) {
        let m = crate::stats::mean(col);
        let sd = crate::stats::variance(col).sqrt();
        if !(sd > 0.0 && sd.is_finite()) || sd <= 1e-12 * m.abs().max(1.0) {
            return Err(Error::Data(format!("covariate '{name}' has zero variance")));
        }
        col.iter_mut().for_each(|v| *v = (*v - m) / sd);
        means.push(m);
        sds.push(sd);
    }
    Ok((out, Standardization { names: stack.names.clone(), means, sds }))
}

/// Variance inflation factor of every covariate: `1 / (1 − R²)` from the
/// least-squares regression of it on the others plus an intercept.
pub fn vif(stack: &CovariateStack) -> Vec<f64> {
    let n = stack.n_cells();
    let p = stack.len();
    (0..p)
        .map(|i| {
            let y = DVector::from_column_slice(&stack.columns[i]);
            let mut x = DMatrix::from_element(n, p, 1.0);
            let mut c = 1;
            for (k, col) in stack.columns.iter().enumerate() {
                if k != i {
                    x.set_column(c, &DVector::from_column_slice(col));
                    c += 1;
                }
            }
            let ym = y.mean();
            let tss: f64 = y.iter().map(|v| (v - ym) * (v - ym)).sum();
            if tss == 0.0 {
                return f64::INFINITY;
            }
            let svd = x.clone().svd(true, true);
            let coef = match svd.solve(&y, 1e-12) {
                Ok(b) => b,
                Err(_) => return f64::INFINITY,
            };
            let rss = (&y - &x * coef).norm_squared();
            if rss <= 1e-12 * tss {
                f64::INFINITY
            } else {
                tss / rss
            }
        })
        .collect()
}

/// One step of [`vif_prune`]: the removed covariate and the VIFs at removal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VifStep {
    pub removed: String,
    pub vif: f64,
    pub all: Vec<(String, f64)>,
}

/// Remove the covariate with the largest VIF while it exceeds `threshold`;
/// ties go to the later covariate.
pub fn vif_prune(stack: &CovariateStack, threshold: f64) -> Result<(CovariateStack, Vec<VifStep>)> {
    if stack.len() < 2 {
        return Err(Error::Usage("VIF pruning needs at least 2 covariates".into()));
    }
    if stack.n_cells() <= stack.len() {
        return Err(Error::Usage("VIF pruning needs more cells than covariates".into()));
    }
    let mut keep: Vec<usize> = (0..stack.len()).collect();
    let mut trace = Vec::new();
    while keep.len() >= 2 {
        let cur = stack.select(&keep);
        let v = vif(&cur);
        let mut worst = 0;
        for (i, x) in v.iter().enumerate() {
            if *x >= v[worst] {
                worst = i;
            }
        }
        if v[worst] <= threshold {
            break;
        }
        trace.push(VifStep {
            removed: cur.names[worst].clone(),
            vif: v[worst],
            all: cur.names.iter().cloned().zip(v.iter().copied()).collect(),
        });
        keep.remove(worst);
    }
    Ok((stack.select(&keep), trace))
}

/// Empirical two-sided posterior tail probability
/// `2 min(P̂(β > 0), P̂(β < 0))`, floored at `1/(n+1)` and capped at 1.
pub fn empirical_p_value(samples: &[f64]) -> f64 {
    let n = samples.len() as f64;
    let pos = samples.iter().filter(|&&b| b > 0.0).count() as f64 / n;
    let neg = samples.iter().filter(|&&b| b < 0.0).count() as f64 / n;
    (2.0 * pos.min(neg)).max(1.0 / (n + 1.0)).min(1.0)
}

/// Holm's step-down rule: with p-values sorted ascending, reject while
/// `p_(j) ≤ α / (m − j + 1)`.
pub fn holm_reject(p: &[f64], alpha: f64) -> Vec<bool> {
    let m = p.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p[a].total_cmp(&p[b]).then(a.cmp(&b)));
    let mut out = vec![false; m];
    for (j, &i) in order.iter().enumerate() {
        if p[i] <= alpha / (m - j) as f64 {
            out[i] = true;
        } else {
            break;
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Significance {
    pub name: String,
    pub p_value: f64,
    pub significant: bool,
}

/// Holm–Bonferroni significance of coefficients from posterior samples.
pub fn holm_bonferroni(names: &[String], samples: &[Vec<f64>], alpha: f64) -> Result<Vec<Significance>> {
    if samples.is_empty() || names.len() != samples.len() {
        return Err(Error::Usage("need one sample vector per named coefficient".into()));
    }
    if let Some(s) = samples.iter().find(|s| s.len() < 100) {
        return Err(Error::Usage(format!("need at least 100 samples per coefficient, got {}", s.len())));
    }
    let p: Vec<f64> = samples.iter().map(|s| empirical_p_value(s)).collect();
    let rej = holm_reject(&p, alpha);
    Ok(names
        .iter()
        .zip(p.iter().zip(rej))
        .map(|(n, (&p_value, significant))| Significance { name: n.clone(), p_value, significant })
        .collect())
}
