use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{self, Vec2};

/// Convex polygonal domain Ω with counter-clockwise boundary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub boundary: Vec<Vec2>,
}

impl Domain {
    pub fn new(boundary: Vec<Vec2>) -> Result<Self> {
        let mut b = boundary;
        if geom::polygon_area(&b) < 0.0 {
            b.reverse();
        }
        if !geom::is_convex_ccw(&b, 1e-12) {
            return Err(Error::InvalidParameter("domain must be a convex polygon".into()));
        }
        Ok(Domain { boundary: b })
    }

    pub fn rect(lo: Vec2, hi: Vec2) -> Self {
        Domain { boundary: vec![lo, [hi[0], lo[1]], hi, [lo[0], hi[1]]] }
    }

    pub fn unit_square() -> Self {
        Self::rect([0.0, 0.0], [1.0, 1.0])
    }

    /// Regular `n`-gon inscribed in the circle of given centre and radius.
    pub fn disc(center: Vec2, radius: f64, n: usize) -> Self {
        let boundary = (0..n)
            .map(|k| {
                let t = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
                [center[0] + radius * t.cos(), center[1] + radius * t.sin()]
            })
            .collect();
        Domain { boundary }
    }

    pub fn area(&self) -> f64 {
        geom::polygon_area(&self.boundary)
    }

    pub fn bbox(&self) -> (Vec2, Vec2) {
        geom::bbox(&self.boundary)
    }

    /// Signed distance of `x` to the boundary line of every edge; the minimum is
    /// the inradius-type depth of `x` (negative outside).
    pub fn depth(&self, x: Vec2) -> f64 {
        let n = self.boundary.len();
        let mut d = f64::INFINITY;
        for k in 0..n {
            let a = self.boundary[k];
            let b = self.boundary[(k + 1) % n];
            let e = geom::sub(b, a);
            d = d.min(geom::cross(e, geom::sub(x, a)) / geom::norm(e));
        }
        d
    }

    pub fn contains(&self, x: Vec2) -> bool {
        self.depth(x) >= -1e-14
    }

    /// Whether `conv(points) + B(0, r)` lies in Ω.
    pub fn contains_hull_with_margin(&self, points: &[Vec2], r: f64) -> bool {
        let tol = 1e-12 * (1.0 + r);
        points.iter().all(|p| self.depth(*p) >= r - tol)
    }

    /// Whether `conv(points) + B(0, r)` meets Ω; for r = 0 touching the closure counts.
    pub fn meets_hull_with_margin(&self, points: &[Vec2], r: f64) -> bool {
        let d = convex_distance(&self.boundary, points);
        let scale = self.bbox().1.iter().zip(self.bbox().0).map(|(h, l)| h - l).fold(0.0f64, f64::max);
        d < r || r == 0.0 && d <= 1e-12 * scale
    }
}

pub(crate) fn convex_overlap(a: &[Vec2], b: &[Vec2]) -> bool {
    // separating axis test on edge normals, strict interiors
    for (p, q) in [(a, b), (b, a)] {
        let n = p.len();
        for k in 0..n {
            let e = geom::sub(p[(k + 1) % n], p[k]);
            let nrm = [e[1], -e[0]];
            let pmax = p.iter().map(|x| geom::dot(nrm, *x)).fold(f64::NEG_INFINITY, f64::max);
            let pmin = p.iter().map(|x| geom::dot(nrm, *x)).fold(f64::INFINITY, f64::min);
            let qmax = q.iter().map(|x| geom::dot(nrm, *x)).fold(f64::NEG_INFINITY, f64::max);
            let qmin = q.iter().map(|x| geom::dot(nrm, *x)).fold(f64::INFINITY, f64::min);
            let tol = 1e-13 * geom::norm(e) * geom::norm(e);
            if qmin >= pmax - tol || pmin >= qmax - tol {
                return false;
            }
        }
    }
    true
}

/// Distance between two convex polygons (0 when they overlap).
pub fn convex_distance(a: &[Vec2], b: &[Vec2]) -> f64 {
    if convex_overlap(a, b) {
        return 0.0;
    }
    let mut d = f64::INFINITY;
    for (p, q) in [(a, b), (b, a)] {
        let n = q.len();
        for x in p {
            for k in 0..n {
                d = d.min(geom::segment_distance(*x, q[k], q[(k + 1) % n]));
            }
        }
    }
    d
}
