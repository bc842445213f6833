//! Planar geometry and quadrature helpers.
//!
//! Everything here works on `[f64; 2]` points. The polygon–disc intersection
//! area is exact up to rounding and is what makes mollified cell functions
//! quadrature-free.

use std::f64::consts::PI;

pub type Vec2 = [f64; 2];

#[inline]
pub fn add(a: Vec2, b: Vec2) -> Vec2 {
    [a[0] + b[0], a[1] + b[1]]
}

#[inline]
pub fn sub(a: Vec2, b: Vec2) -> Vec2 {
    [a[0] - b[0], a[1] - b[1]]
}

#[inline]
pub fn scale(a: Vec2, s: f64) -> Vec2 {
    [a[0] * s, a[1] * s]
}

#[inline]
pub fn dot(a: Vec2, b: Vec2) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

#[inline]
pub fn cross(a: Vec2, b: Vec2) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

#[inline]
pub fn norm(a: Vec2) -> f64 {
    a[0].hypot(a[1])
}

#[inline]
pub fn dist(a: Vec2, b: Vec2) -> f64 {
    norm(sub(a, b))
}

/// Signed area (positive for counter-clockwise vertex order).
pub fn polygon_area(poly: &[Vec2]) -> f64 {
    let n = poly.len();
    let mut s = 0.0;
    for k in 0..n {
        s += cross(poly[k], poly[(k + 1) % n]);
    }
    0.5 * s
}

/// Area centroid of a simple polygon.
pub fn polygon_centroid(poly: &[Vec2]) -> Vec2 {
    let n = poly.len();
    // shift to the first vertex to limit cancellation
    let o = poly[0];
    let (mut cx, mut cy, mut a2) = (0.0, 0.0, 0.0);
    for k in 0..n {
        let p = sub(poly[k], o);
        let q = sub(poly[(k + 1) % n], o);
        let c = cross(p, q);
        a2 += c;
        cx += (p[0] + q[0]) * c;
        cy += (p[1] + q[1]) * c;
    }
    [o[0] + cx / (3.0 * a2), o[1] + cy / (3.0 * a2)]
}

pub fn polygon_diameter(poly: &[Vec2]) -> f64 {
    let mut d: f64 = 0.0;
    for (k, p) in poly.iter().enumerate() {
        for q in &poly[k + 1..] {
            d = d.max(dist(*p, *q));
        }
    }
    d
}

/// Axis-aligned bounding box `(min, max)`.
pub fn bbox(points: &[Vec2]) -> (Vec2, Vec2) {
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for p in points {
        for a in 0..2 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    (lo, hi)
}

/// Convex and counter-clockwise, collinear vertices allowed.
pub fn is_convex_ccw(poly: &[Vec2], tol: f64) -> bool {
    let n = poly.len();
    if n < 3 {
        return false;
    }
    for k in 0..n {
        let a = poly[k];
        let b = poly[(k + 1) % n];
        let c = poly[(k + 2) % n];
        let e1 = sub(b, a);
        let e2 = sub(c, b);
        if cross(e1, e2) < -tol * norm(e1) * norm(e2) {
            return false;
        }
    }
    polygon_area(poly) > 0.0
}

/// Point-in-convex-polygon test (boundary counts as inside).
pub fn in_convex(poly: &[Vec2], x: Vec2) -> bool {
    let n = poly.len();
    for k in 0..n {
        let a = poly[k];
        let b = poly[(k + 1) % n];
        if cross(sub(b, a), sub(x, a)) < -1e-14 * norm(sub(b, a)) {
            return false;
        }
    }
    true
}

/// Signed area of the intersection of the disc B(0, r) with the triangle (0, a, b).
fn triangle_disc_signed(a: Vec2, b: Vec2, r: f64) -> f64 {
    let d = sub(b, a);
    let qa = dot(d, d);
    if qa == 0.0 {
        return 0.0;
    }
    let qb = 2.0 * dot(a, d);
    let qc = dot(a, a) - r * r;
    let mut pts = [a; 4];
    let mut np = 1;
    let disc = qb * qb - 4.0 * qa * qc;
    if disc > 0.0 {
        let sq = disc.sqrt();
        let t1 = (-qb - sq) / (2.0 * qa);
        let t2 = (-qb + sq) / (2.0 * qa);
        for t in [t1, t2] {
            if t > 0.0 && t < 1.0 {
                pts[np] = add(a, scale(d, t));
                np += 1;
            }
        }
    }
    pts[np] = b;
    np += 1;
    let mut s = 0.0;
    for k in 0..np - 1 {
        let p = pts[k];
        let q = pts[k + 1];
        let m = scale(add(p, q), 0.5);
        if dot(m, m) < r * r {
            s += 0.5 * cross(p, q);
        } else {
            s += 0.5 * r * r * cross(p, q).atan2(dot(p, q));
        }
    }
    s
}

/// Exact area of `poly ∩ B(center, r)` for a counter-clockwise simple polygon.
pub fn disc_polygon_area(center: Vec2, r: f64, poly: &[Vec2]) -> f64 {
    let n = poly.len();
    let mut s = 0.0;
    for k in 0..n {
        s += triangle_disc_signed(sub(poly[k], center), sub(poly[(k + 1) % n], center), r);
    }
    s
}

/// Length of the part of segment `[a, b]` inside the open disc B(center, r).
pub fn disc_segment_length(center: Vec2, r: f64, a: Vec2, b: Vec2) -> f64 {
    let d = sub(b, a);
    let len2 = dot(d, d);
    if len2 == 0.0 {
        return 0.0;
    }
    let f = sub(a, center);
    let qb = 2.0 * dot(f, d);
    let qc = dot(f, f) - r * r;
    let disc = qb * qb - 4.0 * len2 * qc;
    if disc <= 0.0 {
        return 0.0;
    }
    let sq = disc.sqrt();
    let t1 = ((-qb - sq) / (2.0 * len2)).max(0.0);
    let t2 = ((-qb + sq) / (2.0 * len2)).min(1.0);
    if t2 <= t1 {
        0.0
    } else {
        (t2 - t1) * len2.sqrt()
    }
}

/// Distance from `x` to the segment `[a, b]`.
pub fn segment_distance(x: Vec2, a: Vec2, b: Vec2) -> f64 {
    let d = sub(b, a);
    let l2 = dot(d, d);
    let t = if l2 == 0.0 { 0.0 } else { (dot(sub(x, a), d) / l2).clamp(0.0, 1.0) };
    dist(x, add(a, scale(d, t)))
}

/// Keep the part of a convex polygon where `n·x + c >= 0`.
pub fn clip_halfplane(poly: &[Vec2], n: Vec2, c: f64) -> Vec<Vec2> {
    let mut out = Vec::with_capacity(poly.len() + 1);
    let m = poly.len();
    for k in 0..m {
        let p = poly[k];
        let q = poly[(k + 1) % m];
        let fp = dot(n, p) + c;
        let fq = dot(n, q) + c;
        if fp >= 0.0 {
            out.push(p);
        }
        if (fp >= 0.0) != (fq >= 0.0) {
            let t = fp / (fp - fq);
            out.push(add(p, scale(sub(q, p), t)));
        }
    }
    out
}

/// Gauss–Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n > 0);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let mut p0 = 1.0;
            let mut p1 = z;
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { z } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pm) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        if n == 1 {
            x[0] = 0.0;
            w[0] = 2.0;
            break;
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// Quadrature rule on the reference triangle (0,0),(1,0),(0,1), weights summing to 1/2.
#[derive(Clone, Debug)]
pub struct TriangleRule {
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
}

impl TriangleRule {
    /// Collapsed (Duffy) tensor Gauss rule with `n` points per direction.
    pub fn collapsed(n: usize) -> Self {
        let (x, w) = gauss_legendre(n);
        let mut points = Vec::with_capacity(n * n);
        let mut weights = Vec::with_capacity(n * n);
        for i in 0..n {
            let xi = 0.5 * (x[i] + 1.0);
            for j in 0..n {
                let eta = 0.5 * (x[j] + 1.0);
                points.push([xi * (1.0 - eta), eta]);
                weights.push(0.25 * w[i] * w[j] * (1.0 - eta));
            }
        }
        TriangleRule { points, weights }
    }

    /// Apply to the triangle `(a, b, c)`; yields physical points and weights.
    pub fn map(&self, a: Vec2, b: Vec2, c: Vec2) -> impl Iterator<Item = (Vec2, f64)> + '_ {
        let e1 = sub(b, a);
        let e2 = sub(c, a);
        let jac = cross(e1, e2).abs();
        self.points.iter().zip(&self.weights).map(move |(p, w)| {
            (add(a, add(scale(e1, p[0]), scale(e2, p[1]))), w * jac)
        })
    }
}

/// Averaging rule on the unit disc: equal-area rings, midpoint in area and angle.
/// Weights sum to one, so applying it gives a ball average.
#[derive(Clone, Debug)]
pub struct BallRule {
    pub points: Vec<Vec2>,
    pub weights: Vec<f64>,
}

impl BallRule {
    pub fn midpoint(rings: usize, angles: usize) -> Self {
        let mut points = Vec::with_capacity(rings * angles);
        let w = 1.0 / (rings * angles) as f64;
        for k in 0..rings {
            let rho = ((k as f64 + 0.5) / rings as f64).sqrt();
            // stagger alternate rings so the rule is not aligned with the axes
            let off = if k % 2 == 0 { 0.5 } else { 0.0 };
            for l in 0..angles {
                let th = 2.0 * PI * (l as f64 + off) / angles as f64;
                points.push([rho * th.cos(), rho * th.sin()]);
            }
        }
        let weights = vec![w; points.len()];
        BallRule { points, weights }
    }

    /// The same rule rotated by `angle`.
    pub fn rotated(&self, angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        let points = self.points.iter().map(|p| [c * p[0] - s * p[1], s * p[0] + c * p[1]]).collect();
        BallRule { points, weights: self.weights.clone() }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}
