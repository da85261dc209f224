//! Rectangular observation windows, point patterns, and disc/rectangle
//! overlap geometry.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned rectangle `[x0, x0 + width] × [y0, y0 + height]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub x0: f64,
    pub y0: f64,
    pub width: f64,
    pub height: f64,
}

impl Window {
    pub fn new(x0: f64, y0: f64, width: f64, height: f64) -> Result<Self> {
        if !(width > 0.0 && height > 0.0) || !width.is_finite() || !height.is_finite() {
            return Err(Error::InvalidGeometry(format!(
                "window dimensions must be positive and finite, got {width} x {height}"
            )));
        }
        if !x0.is_finite() || !y0.is_finite() {
            return Err(Error::InvalidGeometry("window origin must be finite".into()));
        }
        Ok(Self {
            x0,
            y0,
            width,
            height,
        })
    }

    pub fn unit() -> Self {
        Self {
            x0: 0.0,
            y0: 0.0,
            width: 1.0,
            height: 1.0,
        }
    }

    pub fn area(&self) -> f64 {
        self.width * self.height
    }

    pub fn x1(&self) -> f64 {
        self.x0 + self.width
    }

    pub fn y1(&self) -> f64 {
        self.y0 + self.height
    }

    /// Closed containment test.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x0 && x <= self.x1() && y >= self.y0 && y <= self.y1()
    }

    /// Distance from an interior point to the nearest window edge.
    pub fn border_distance(&self, x: f64, y: f64) -> f64 {
        (x - self.x0)
            .min(self.x1() - x)
            .min(y - self.y0)
            .min(self.y1() - y)
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x0 + 0.5 * self.width, self.y0 + 0.5 * self.height)
    }
}

/// A planar point pattern observed in a window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointPattern {
    pub window: Window,
    pub points: Vec<(f64, f64)>,
}

impl PointPattern {
    pub fn new(window: Window, points: Vec<(f64, f64)>) -> Self {
        Self { window, points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Points lying in the (closed) window.
    pub fn inside(&self) -> impl Iterator<Item = &(f64, f64)> {
        self.points
            .iter()
            .filter(move |(x, y)| self.window.contains(*x, *y))
    }

    /// Estimated intensity `n / |W|` using the points inside the window.
    pub fn intensity(&self) -> f64 {
        self.inside().count() as f64 / self.window.area()
    }
}

/// Area of `{ (u, v) : u² + v² ≤ r², u ≤ x, v ≤ y }`.
fn disc_lower_left_area(r: f64, x: f64, y: f64) -> f64 {
    if x <= -r || y <= -r {
        return 0.0;
    }
    let xc = x.min(r);
    // primitive of sqrt(r² − u²)
    let prim = |u: f64| {
        let u = u.clamp(-r, r);
        0.5 * (u * (r * r - u * u).max(0.0).sqrt() + r * r * (u / r).asin())
    };
    if y >= r {
        return 2.0 * (prim(xc) - prim(-r));
    }
    // |y| < r: chord half-width where the horizontal line v = y meets the circle
    let w = (r * r - y * y).sqrt();
    let mut area = 0.0;
    // u in [−r, −w]: contributes 2h if y > 0, else 0
    if y > 0.0 {
        area += 2.0 * (prim(xc.min(-w)) - prim(-r));
    }
    // u in (−w, w): contributes y + h
    if xc > -w {
        let hi = xc.min(w);
        area += y * (hi + w) + prim(hi) - prim(-w);
    }
    // u in [w, r]
    if y > 0.0 && xc > w {
        area += 2.0 * (prim(xc) - prim(w));
    }
    area
}

/// Exact area of the intersection of the disc `B((cx, cy), r)` with the
/// rectangle `[x0, x1] × [y0, y1]`.
pub fn disc_rect_overlap(cx: f64, cy: f64, r: f64, x0: f64, y0: f64, x1: f64, y1: f64) -> f64 {
    if r <= 0.0 || x1 <= x0 || y1 <= y0 {
        return 0.0;
    }
    let a = |x: f64, y: f64| disc_lower_left_area(r, x - cx, y - cy);
    (a(x1, y1) - a(x0, y1) - a(x1, y0) + a(x0, y0)).max(0.0)
}

/// Ripley's isotropic edge-correction weight for a rectangular window: the
/// reciprocal of the fraction of the circle centred at `(x, y)` with radius
/// `d` that lies inside the window. Valid for `d` up to half the shorter
/// window side.
pub fn ripley_isotropic_weight(window: &Window, x: f64, y: f64, d: f64) -> f64 {
    if d <= 0.0 {
        return 1.0;
    }
    let e = [
        x - window.x0,
        window.y1() - y,
        window.x1() - x,
        y - window.y0,
    ];
    if e.iter().all(|&ei| ei >= d) {
        return 1.0;
    }
    // half-angle of the arc cut off by each edge
    let half = e.map(|ei| if ei < d { (ei.max(0.0) / d).acos() } else { 0.0 });
    let mut outside: f64 = half.iter().map(|a| 2.0 * a).sum();
    // adjacent edges overlap when the corner lies inside the circle
    for i in 0..4 {
        let j = (i + 1) % 4;
        if e[i] * e[i] + e[j] * e[j] < d * d {
            outside -= half[i] + half[j] - std::f64::consts::FRAC_PI_2;
        }
    }
    let inside = (2.0 * std::f64::consts::PI - outside).max(1e-12);
    2.0 * std::f64::consts::PI / inside
}
