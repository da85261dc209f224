//! Point-pattern summary statistics and posterior-predictive envelopes.
//!
//! All estimators use the points inside the pattern's window and assume a
//! rectangular window.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ripley_isotropic_weight, PointPattern, Window};
use crate::inference::SampleStore;
use crate::lattice::Lattice;
use crate::model::{Design, LscpModel};
use crate::simulate::{draw_counts, scatter_points, simulate_latent, SimOrders};
use crate::stats::quantile_sorted;

/// A summary function evaluated on an r-grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub r: Vec<f64>,
    pub value: Vec<f64>,
}

/// The r-grid restricted to `[0, min(w, h) / 2]`, warning when entries are
/// dropped.
pub fn valid_radii(window: &Window, r: &[f64]) -> Result<Vec<f64>> {
    if r.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(Error::Usage("r-grid entries must be finite and non-negative".into()));
    }
    let rmax = 0.5 * window.width.min(window.height);
    let kept: Vec<f64> = r.iter().copied().filter(|&x| x <= rmax).collect();
    if kept.len() < r.len() {
        log::warn!(
            "r-grid truncated at {rmax}: {} of {} values exceed half the shorter window side",
            r.len() - kept.len(),
            r.len()
        );
    }
    Ok(kept)
}

/// Evenly spaced r-grid on `[0, rmax]` with `n` points.
pub fn linear_grid(rmax: f64, n: usize) -> Vec<f64> {
    let n = n.max(2);
    (0..n).map(|i| rmax * i as f64 / (n - 1) as f64).collect()
}

/// Bucket index for fixed-radius neighbour queries.
struct Buckets {
    x0: f64,
    y0: f64,
    size: f64,
    nx: usize,
    ny: usize,
    start: Vec<usize>,
    items: Vec<usize>,
}

impl Buckets {
    fn new(window: &Window, pts: &[(f64, f64)], size: f64) -> Self {
        let size = size.max(1e-12 * window.width.max(window.height));
        let nx = ((window.width / size).ceil() as usize).clamp(1, 4096);
        let ny = ((window.height / size).ceil() as usize).clamp(1, 4096);
        let size = (window.width / nx as f64).max(window.height / ny as f64);
        let cell = |p: &(f64, f64)| {
            let i = (((p.0 - window.x0) / size) as usize).min(nx - 1);
            let j = (((p.1 - window.y0) / size) as usize).min(ny - 1);
            j * nx + i
        };
        let mut count = vec![0usize; nx * ny + 1];
        for p in pts {
            count[cell(p) + 1] += 1;
        }
        for i in 1..count.len() {
            count[i] += count[i - 1];
        }
        let mut fill = count.clone();
        let mut items = vec![0; pts.len()];
        for (k, p) in pts.iter().enumerate() {
            let c = cell(p);
            items[fill[c]] = k;
            fill[c] += 1;
        }
        Self { x0: window.x0, y0: window.y0, size, nx, ny, start: count, items }
    }

    fn bucket_of(&self, x: f64, y: f64) -> (isize, isize) {
        (((x - self.x0) / self.size).floor() as isize, ((y - self.y0) / self.size).floor() as isize)
    }

    fn bucket(&self, i: isize, j: isize) -> &[usize] {
        if i < 0 || j < 0 || i >= self.nx as isize || j >= self.ny as isize {
            return &[];
        }
        let b = j as usize * self.nx + i as usize;
        &self.items[self.start[b]..self.start[b + 1]]
    }

    /// Indices of points within `r` of `(x, y)`, with distances.
    fn within(&self, pts: &[(f64, f64)], x: f64, y: f64, r: f64, out: &mut Vec<(usize, f64)>) {
        out.clear();
        let (bi, bj) = self.bucket_of(x, y);
        let reach = (r / self.size).ceil() as isize;
        for j in bj - reach..=bj + reach {
            for i in bi - reach..=bi + reach {
                for &k in self.bucket(i, j) {
                    let d = (pts[k].0 - x).hypot(pts[k].1 - y);
                    if d <= r {
                        out.push((k, d));
                    }
                }
            }
        }
    }

    /// Distance from `(x, y)` to the nearest point; infinite when empty.
    fn nearest(&self, pts: &[(f64, f64)], x: f64, y: f64) -> f64 {
        if pts.is_empty() {
            return f64::INFINITY;
        }
        let (bi, bj) = self.bucket_of(x, y);
        let mut best = f64::INFINITY;
        let max_ring = self.nx.max(self.ny) as isize + 1;
        for ring in 0..=max_ring {
            // every point in ring `ring` is at least (ring − 1)·size away
            if best < (ring as f64 - 1.0) * self.size {
                break;
            }
            for j in bj - ring..=bj + ring {
                for i in bi - ring..=bi + ring {
                    if (j - bj).abs() != ring && (i - bi).abs() != ring {
                        continue;
                    }
                    for &k in self.bucket(i, j) {
                        best = best.min((pts[k].0 - x).hypot(pts[k].1 - y));
                    }
                }
            }
        }
        best
    }
}

/// Ordered pairs `(d_ij, w_ij)` with `0 < d_ij ≤ rmax`, where `w_ij` is the
/// isotropic weight centred at point `i`.
fn weighted_pairs(window: &Window, pts: &[(f64, f64)], rmax: f64) -> Vec<(f64, f64)> {
    let buckets = Buckets::new(window, pts, rmax.max(window.width.min(window.height) / 64.0));
    let mut out = Vec::new();
    let mut near = Vec::new();
    for (i, &(x, y)) in pts.iter().enumerate() {
        buckets.within(pts, x, y, rmax, &mut near);
        for &(k, d) in &near {
            if k != i {
                out.push((d, ripley_isotropic_weight(window, x, y, d)));
            }
        }
    }
    out
}

fn inside_points(pattern: &PointPattern) -> Vec<(f64, f64)> {
    pattern.inside().copied().collect()
}

/// Ripley's K with isotropic edge correction,
/// `K̂(r) = |W| / (n(n−1)) Σ_{i≠j} w_ij 1(d_ij ≤ r)`.
pub fn ripley_k(pattern: &PointPattern, r: &[f64]) -> Result<Curve> {
    let window = pattern.window;
    let r = valid_radii(&window, r)?;
    let pts = inside_points(pattern);
    let n = pts.len();
    if n < 2 {
        return Err(Error::Usage(format!("K-function needs at least 2 points, got {n}")));
    }
    // weight of pairs at distances in (r_(i-1), r_(i)] of the sorted radii
    let mut sorted = r.clone();
    sorted.sort_by(f64::total_cmp);
    let rmax = sorted[sorted.len() - 1];
    let mut bins = vec![0.0; sorted.len()];
    let buckets = Buckets::new(&window, &pts, rmax.max(window.width.min(window.height) / 64.0));
    let mut near = Vec::new();
    for (i, &(x, y)) in pts.iter().enumerate() {
        buckets.within(&pts, x, y, rmax, &mut near);
        for &(k, d) in &near {
            if k != i {
                let b = sorted.partition_point(|&ri| ri < d);
                if b < bins.len() {
                    bins[b] += ripley_isotropic_weight(&window, x, y, d);
                }
            }
        }
    }
    let scale = window.area() / (n as f64 * (n - 1) as f64);
    let mut cum = Vec::with_capacity(bins.len());
    let mut acc = 0.0;
    for b in &bins {
        acc += b;
        cum.push(scale * acc);
    }
    let value = r.iter().map(|&ri| cum[sorted.partition_point(|&s| s < ri)]).collect();
    Ok(Curve { r, value })
}

/// Centred L-function `L̂(r) = sqrt(K̂(r)/π) − r`.
pub fn centered_l(pattern: &PointPattern, r: &[f64]) -> Result<Curve> {
    let mut c = ripley_k(pattern, r)?;
    for (v, r) in c.value.iter_mut().zip(&c.r) {
        *v = (*v / std::f64::consts::PI).sqrt() - r;
    }
    Ok(c)
}

/// Default pcf bandwidth `0.15 / sqrt(λ̂)`.
pub fn default_bandwidth(pattern: &PointPattern) -> f64 {
    0.15 / pattern.intensity().sqrt()
}

/// Kernel estimate of the pair correlation function with the Epanechnikov
/// kernel of half-width `h` and isotropic edge correction,
/// `ĝ(r) = |W| / (n(n−1)) Σ_{i≠j} w_ij k_h(r − d_ij) / (2π r)`.
/// Radii must be positive.
pub fn pcf_estimate(pattern: &PointPattern, r: &[f64], bandwidth: Option<f64>) -> Result<Curve> {
    let window = pattern.window;
    let r = valid_radii(&window, r)?;
    if r.iter().any(|&x| x <= 0.0) {
        return Err(Error::Usage("pair correlation radii must be positive".into()));
    }
    let pts = inside_points(pattern);
    let n = pts.len();
    if n < 2 {
        return Err(Error::Usage(format!("pair correlation needs at least 2 points, got {n}")));
    }
    let h = bandwidth.unwrap_or_else(|| default_bandwidth(pattern));
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::Usage(format!("bandwidth must be positive, got {h}")));
    }
    let rmax = r.iter().copied().fold(0.0, f64::max) + h;
    let mut pairs = weighted_pairs(&window, &pts, rmax);
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let scale = window.area() / (n as f64 * (n - 1) as f64);
    let value = r
        .iter()
        .map(|&ri| {
            let lo = pairs.partition_point(|p| p.0 < ri - h);
            let s: f64 = pairs[lo..]
                .iter()
                .take_while(|p| p.0 <= ri + h)
                .map(|&(d, w)| {
                    let u = (ri - d) / h;
                    w * 0.75 * (1.0 - u * u).max(0.0) / h
                })
                .sum();
            scale * s / (2.0 * std::f64::consts::PI * ri)
        })
        .collect();
    Ok(Curve { r, value })
}

/// Empty-space function from a regular `gx × gy` grid of reference points
/// with the border correction in Hanisch's weighting: a reference point at
/// nearest-point distance `d` and border distance `b` counts when `d ≤ b`,
/// with weight `1 / |W ⊖ d|`, so `F̂` is nondecreasing and reaches 1.
pub fn empty_space_estimate(pattern: &PointPattern, r: &[f64], grid: (usize, usize)) -> Result<Curve> {
    let window = pattern.window;
    let r = valid_radii(&window, r)?;
    let pts = inside_points(pattern);
    if pts.is_empty() {
        return Err(Error::Usage("empty-space function needs a nonempty pattern".into()));
    }
    let (gx, gy) = grid;
    if gx == 0 || gy == 0 {
        return Err(Error::Usage("empty-space reference grid must be nonempty".into()));
    }
    let cell = (window.area() / pts.len() as f64).sqrt();
    let buckets = Buckets::new(&window, &pts, cell);
    let eroded = |d: f64| ((window.width - 2.0 * d) * (window.height - 2.0 * d)).max(0.0);
    let mut counted: Vec<(f64, f64)> = Vec::with_capacity(gx * gy);
    for iy in 0..gy {
        let y = window.y0 + (iy as f64 + 0.5) * window.height / gy as f64;
        for ix in 0..gx {
            let x = window.x0 + (ix as f64 + 0.5) * window.width / gx as f64;
            let d = buckets.nearest(&pts, x, y);
            let b = window.border_distance(x, y);
            let a = eroded(d);
            if d <= b && a > 0.0 {
                counted.push((d, 1.0 / a));
            }
        }
    }
    let total: f64 = counted.iter().map(|c| c.1).sum();
    counted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let value = r
        .iter()
        .map(|&ri| {
            if total == 0.0 {
                return 0.0;
            }
            let k = counted.partition_point(|c| c.0 <= ri);
            counted[..k].iter().map(|c| c.1).sum::<f64>() / total
        })
        .collect();
    Ok(Curve { r, value })
}

/// Reference grid for `F̂`: four times the lattice resolution.
pub fn default_f_grid(lattice: &Lattice) -> (usize, usize) {
    (4 * lattice.nx(), 4 * lattice.ny())
}

/// Summary statistic used by [`envelope`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Statistic {
    L,
    G,
    F,
}

impl std::str::FromStr for Statistic {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "L" | "l" => Ok(Self::L),
            "g" | "G" => Ok(Self::G),
            "F" | "f" => Ok(Self::F),
            other => Err(Error::Usage(format!("unknown statistic '{other}'; expected L, g or F"))),
        }
    }
}

impl Statistic {
    pub fn evaluate(&self, pattern: &PointPattern, r: &[f64], f_grid: (usize, usize)) -> Result<Curve> {
        match self {
            Self::L => centered_l(pattern, r),
            Self::G => pcf_estimate(pattern, r, None),
            Self::F => empty_space_estimate(pattern, r, f_grid),
        }
    }
}

/// Where simulated patterns come from.
#[derive(Debug, Clone, Copy)]
pub enum EnvelopeSource<'a> {
    /// Stored posterior draws of the log-intensity surface.
    Posterior(&'a SampleStore),
    /// Fresh draws from a fully specified model.
    Model {
        model: &'a LscpModel,
        design: Option<&'a Design>,
    },
}

/// Pointwise envelope of a summary statistic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub statistic: Statistic,
    pub level: f64,
    pub n_sims: usize,
    pub r: Vec<f64>,
    pub observed: Vec<f64>,
    pub mean: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Envelope {
    /// Fraction of r-grid points where the observed curve lies in `[lo, hi]`.
    pub fn coverage(&self) -> f64 {
        let inside = self
            .observed
            .iter()
            .zip(self.lo.iter().zip(&self.hi))
            .filter(|(o, (l, h))| *l <= *o && *o <= *h)
            .count();
        inside as f64 / self.r.len().max(1) as f64
    }

    pub fn write_csv(&self, path: &std::path::Path) -> Result<()> {
        let io = |e: csv::Error| Error::Data(format!("{}: {e}", path.display()));
        let mut w = csv::Writer::from_path(path).map_err(io)?;
        w.write_record(["r", "obs", "mean", "lo", "hi"]).map_err(io)?;
        for i in 0..self.r.len() {
            w.serialize((self.r[i], self.observed[i], self.mean[i], self.lo[i], self.hi[i])).map_err(io)?;
        }
        w.flush().map_err(|e| Error::Io { path: path.into(), source: e })
    }
}

/// One simulated pattern from `source`; simulation `i` uses its own stream.
pub fn simulate_pattern(source: EnvelopeSource, lattice: &Lattice, seed: u64, i: usize, n_sims: usize) -> Result<PointPattern> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(i as u64);
    let log_int: Vec<f64> = match source {
        EnvelopeSource::Posterior(store) => {
            // spread simulations evenly over the stored draws
            let s = i * store.len() / n_sims.max(1);
            store.log_intensity[s.min(store.len() - 1)].iter().map(|&v| v as f64).collect()
        }
        EnvelopeSource::Model { model, design } => {
            simulate_latent(model, lattice, design, SimOrders::default(), &mut rng)?.log_intensity
        }
    };
    let counts = draw_counts(&log_int, lattice, &mut rng)?;
    Ok(scatter_points(&counts, lattice, &mut rng))
}

/// Simulate `n_sims` patterns from `source`, evaluate `statistic` on each,
/// and return pointwise `(1−level)/2` and `1−(1−level)/2` quantiles, the
/// mean curve and the observed curve.
pub fn envelope(
    source: EnvelopeSource,
    lattice: &Lattice,
    observed: &PointPattern,
    statistic: Statistic,
    r: &[f64],
    n_sims: usize,
    level: f64,
    seed: u64,
) -> Result<Envelope> {
    if n_sims < 20 {
        return Err(Error::Usage(format!("envelopes need at least 20 simulations, got {n_sims}")));
    }
    if !(level > 0.0 && level <= 1.0) {
        return Err(Error::Usage(format!("envelope level must lie in (0, 1], got {level}")));
    }
    if let EnvelopeSource::Posterior(store) = source {
        if store.is_empty() {
            return Err(Error::Usage("posterior store is empty".into()));
        }
        if store.nx != lattice.nx() || store.ny != lattice.ny() {
            return Err(Error::Shape("posterior store and lattice disagree".into()));
        }
    }
    let f_grid = default_f_grid(lattice);
    let obs = statistic.evaluate(observed, r, f_grid)?;
    let curves: Vec<Option<Vec<f64>>> = (0..n_sims)
        .into_par_iter()
        .map(|i| -> Result<Option<Vec<f64>>> {
            let p = simulate_pattern(source, lattice, seed, i, n_sims)?;
            match statistic.evaluate(&p, &obs.r, f_grid) {
                Ok(c) => Ok(Some(c.value)),
                Err(Error::Usage(_)) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;
    let curves: Vec<Vec<f64>> = curves.into_iter().flatten().collect();
    if curves.len() < n_sims {
        log::warn!("{} of {n_sims} simulated patterns too sparse for the statistic", n_sims - curves.len());
    }
    if curves.len() < 20 {
        return Err(Error::Numerical(format!(
            "only {} simulated patterns support the statistic",
            curves.len()
        )));
    }
    let m = obs.r.len();
    let (mut lo, mut hi, mut mean) = (vec![0.0; m], vec![0.0; m], vec![0.0; m]);
    let tail = 0.5 * (1.0 - level);
    let mut col = vec![0.0; curves.len()];
    for t in 0..m {
        for (c, v) in col.iter_mut().zip(&curves) {
            *c = v[t];
        }
        col.sort_by(|a, b| a.total_cmp(b));
        lo[t] = quantile_sorted(&col, tail);
        hi[t] = quantile_sorted(&col, 1.0 - tail);
        mean[t] = col.iter().sum::<f64>() / col.len() as f64;
    }
    Ok(Envelope {
        statistic,
        level,
        n_sims: curves.len(),
        r: obs.r,
        observed: obs.value,
        mean,
        lo,
        hi,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn poisson(n: usize, seed: u64) -> PointPattern {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts = (0..n).map(|_| (rng.random::<f64>(), rng.random::<f64>())).collect();
        PointPattern::new(Window::unit(), pts)
    }

    #[test]
    fn k_is_zero_below_the_pair_distance() {
        let p = PointPattern::new(Window::unit(), vec![(0.3, 0.5), (0.6, 0.5)]);
        let k = ripley_k(&p, &[0.0, 0.1, 0.29, 0.31]).unwrap();
        assert_eq!(&k.value[..3], &[0.0, 0.0, 0.0]);
        assert!(k.value[3] > 0.0);
    }

    #[test]
    fn k_matches_brute_force() {
        let p = poisson(60, 3);
        let r = linear_grid(0.25, 11);
        let k = ripley_k(&p, &r).unwrap();
        let n = p.len() as f64;
        for (ri, ki) in r.iter().zip(&k.value) {
            let mut s = 0.0;
            for (i, a) in p.points.iter().enumerate() {
                for (j, b) in p.points.iter().enumerate() {
                    let d = (a.0 - b.0).hypot(a.1 - b.1);
                    if i != j && d <= *ri {
                        s += ripley_isotropic_weight(&p.window, a.0, a.1, d);
                    }
                }
            }
            assert!((s / (n * (n - 1.0)) - ki).abs() < 1e-12);
        }
    }

    #[test]
    fn nearest_matches_brute_force() {
        let p = poisson(40, 8);
        let b = Buckets::new(&p.window, &p.points, 0.07);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let (x, y) = (rng.random::<f64>(), rng.random::<f64>());
            let want = p.points.iter().map(|q| (q.0 - x).hypot(q.1 - y)).fold(f64::INFINITY, f64::min);
            assert_eq!(b.nearest(&p.points, x, y), want);
        }
    }

    #[test]
    fn radii_past_half_side_are_dropped() {
        let w = Window::new(0.0, 0.0, 2.0, 1.0).unwrap();
        assert_eq!(valid_radii(&w, &[0.1, 0.5, 0.6]).unwrap(), vec![0.1, 0.5]);
    }

    #[test]
    fn pcf_rejects_bad_bandwidth() {
        let p = poisson(20, 1);
        assert!(matches!(pcf_estimate(&p, &[0.1], Some(0.0)), Err(Error::Usage(_))));
        assert!(matches!(pcf_estimate(&p, &[0.0], Some(0.1)), Err(Error::Usage(_))));
    }

    #[test]
    fn f_starts_at_zero_and_reaches_one() {
        let p = poisson(30, 2);
        let f = empty_space_estimate(&p, &linear_grid(0.5, 51), (40, 40)).unwrap();
        assert_eq!(f.value[0], 0.0);
        assert!(f.value.windows(2).all(|w| w[0] <= w[1]));
        assert!((f.value[50] - 1.0).abs() < 1e-12);
    }
}
