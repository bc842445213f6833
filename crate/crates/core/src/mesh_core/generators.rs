//! Built-in periodic mesh generators. Every generated cell is tagged with its
//! lattice translate so halos and periodic structures can be derived exactly.

use std::collections::HashSet;

use super::domain::{convex_overlap, Domain};
use super::polygon::{build_polygon_mesh, LatticeTags, PolygonMesh, VertexPool};
use crate::error::{Error, Result};
use crate::geom::{self, Vec2};

/// Which translates of the pattern are kept.
#[derive(Clone, Copy, Debug)]
pub enum Keep {
    /// Cells contained in the rectangle (exact tilings).
    Inside(Vec2, Vec2),
    /// Cells meeting the open rectangle.
    Meets(Vec2, Vec2),
}

impl Keep {
    fn test(&self, poly: &[Vec2]) -> bool {
        match *self {
            Keep::Inside(lo, hi) => {
                let tol = 1e-9 * (hi[0] - lo[0]).abs().max(hi[1] - lo[1]).max(1.0);
                poly.iter().all(|p| p[0] >= lo[0] - tol && p[0] <= hi[0] + tol && p[1] >= lo[1] - tol && p[1] <= hi[1] + tol)
            }
            Keep::Meets(lo, hi) => {
                let rect = [lo, [hi[0], lo[1]], hi, [lo[0], hi[1]]];
                convex_overlap(&rect, poly)
            }
        }
    }

    fn rect(&self) -> (Vec2, Vec2) {
        match *self {
            Keep::Inside(lo, hi) | Keep::Meets(lo, hi) => (lo, hi),
        }
    }
}

/// Lattice indices whose translates of the pattern may touch the rectangle.
fn lattice_range(lattice: &[Vec2; 2], pattern: &[Vec<Vec2>], lo: Vec2, hi: Vec2) -> [std::ops::RangeInclusive<i64>; 2] {
    let det = geom::cross(lattice[0], lattice[1]);
    let pts: Vec<Vec2> = pattern.iter().flatten().cloned().collect();
    let (plo, phi) = geom::bbox(&pts);
    let mut mn = [f64::INFINITY; 2];
    let mut mx = [f64::NEG_INFINITY; 2];
    for cx in [lo[0] - phi[0], hi[0] - plo[0]] {
        for cy in [lo[1] - phi[1], hi[1] - plo[1]] {
            let c = [cx, cy];
            let m0 = geom::cross(c, lattice[1]) / det;
            let m1 = geom::cross(lattice[0], c) / det;
            mn[0] = mn[0].min(m0);
            mn[1] = mn[1].min(m1);
            mx[0] = mx[0].max(m0);
            mx[1] = mx[1].max(m1);
        }
    }
    [
        (mn[0].floor() as i64 - 1)..=(mx[0].ceil() as i64 + 1),
        (mn[1].floor() as i64 - 1)..=(mx[1].ceil() as i64 + 1),
    ]
}

/// Tile translates of a pattern. Cells already present in `base` are kept with
/// their indices; new translates are appended.
pub(crate) fn tile(
    base: Option<&PolygonMesh>,
    pattern: Vec<Vec<Vec2>>,
    lattice: [Vec2; 2],
    keep: Keep,
    domain: Domain,
) -> Result<PolygonMesh> {
    let (lo, hi) = keep.rect();
    let tol = 1e-9 * geom::norm(lattice[0]).min(geom::norm(lattice[1]));
    let (mut pool, mut cells, mut sigma) = match base {
        Some(m) => {
            let tags = m.tags.as_ref().ok_or_else(|| Error::Periodicity("mesh has no lattice tags".into()))?;
            (VertexPool::with_vertices(m.vertices.clone(), tol), m.cells.clone(), tags.sigma.clone())
        }
        None => (VertexPool::new(tol), vec![], vec![]),
    };
    let present: HashSet<([i64; 2], usize)> = sigma.iter().cloned().collect();
    let tags0 = LatticeTags { lattice, pattern: pattern.clone(), sigma: vec![] };
    let [r0, r1] = lattice_range(&lattice, &pattern, lo, hi);
    for m1 in r1 {
        for m0 in r0.clone() {
            let m = [m0, m1];
            let shift = tags0.translate(m);
            for (p, poly) in pattern.iter().enumerate() {
                if present.contains(&(m, p)) {
                    continue;
                }
                let moved: Vec<Vec2> = poly.iter().map(|v| geom::add(*v, shift)).collect();
                if !keep.test(&moved) {
                    continue;
                }
                cells.push(moved.iter().map(|v| pool.insert(*v)).collect());
                sigma.push((m, p));
            }
        }
    }
    let mut mesh = build_polygon_mesh(pool.vertices, cells, domain)?;
    mesh.tags = Some(LatticeTags { lattice, pattern, sigma });
    Ok(mesh)
}

fn check_divisible(len: f64, h: f64, what: &str) -> Result<usize> {
    let n = len / h;
    let r = n.round();
    if r < 1.0 || (n - r).abs() > 1e-9 * n.max(1.0) {
        return Err(Error::InvalidParameter(format!("{what}: h = {h} does not divide length {len}")));
    }
    Ok(r as usize)
}

fn rect_of(domain: &Domain) -> Result<(Vec2, Vec2)> {
    let (lo, hi) = domain.bbox();
    if (domain.area() - (hi[0] - lo[0]) * (hi[1] - lo[1])).abs() > 1e-12 * domain.area() {
        return Err(Error::InvalidParameter("generator needs an axis-aligned rectangular domain".into()));
    }
    Ok((lo, hi))
}

/// Cartesian `nx × ny` grid on a rectangular domain.
pub fn build_cartesian_mesh(nx: usize, ny: usize, domain: Domain) -> Result<PolygonMesh> {
    if nx == 0 || ny == 0 {
        return Err(Error::InvalidParameter("cartesian grid needs nx, ny > 0".into()));
    }
    let (lo, hi) = rect_of(&domain)?;
    let hx = (hi[0] - lo[0]) / nx as f64;
    let hy = (hi[1] - lo[1]) / ny as f64;
    let pattern = vec![vec![lo, [lo[0] + hx, lo[1]], [lo[0] + hx, lo[1] + hy], [lo[0], lo[1] + hy]]];
    tile(None, pattern, [[hx, 0.0], [0.0, hy]], Keep::Inside(lo, hi), domain)
}

/// Rows of height `h`; even rows have cells of width `h`, odd rows width `h/2`.
/// Coarse cells carry mid-edge vertices so the mesh stays conforming.
pub fn build_alternating_mesh(h: f64, domain: Domain) -> Result<PolygonMesh> {
    if !(h > 0.0) {
        return Err(Error::InvalidParameter("h must be positive".into()));
    }
    let (lo, hi) = rect_of(&domain)?;
    check_divisible(hi[0] - lo[0], h, "width")?;
    check_divisible(hi[1] - lo[1], h, "height")?;
    let [x, y] = lo;
    let coarse = vec![
        [x, y],
        [x + 0.5 * h, y],
        [x + h, y],
        [x + h, y + h],
        [x + 0.5 * h, y + h],
        [x, y + h],
    ];
    let fine_a = vec![[x, y + h], [x + 0.5 * h, y + h], [x + 0.5 * h, y + 2.0 * h], [x, y + 2.0 * h]];
    let fine_b = vec![[x + 0.5 * h, y + h], [x + h, y + h], [x + h, y + 2.0 * h], [x + 0.5 * h, y + 2.0 * h]];
    tile(None, vec![coarse, fine_a, fine_b], [[h, 0.0], [0.0, 2.0 * h]], Keep::Inside(lo, hi), domain)
}

/// Regular hexagons of side `a` (pointy top) covering a rectangular domain.
pub fn build_hexagonal_mesh(a: f64, domain: Domain) -> Result<PolygonMesh> {
    if !(a > 0.0) {
        return Err(Error::InvalidParameter("side must be positive".into()));
    }
    let (lo, hi) = rect_of(&domain)?;
    let c = [lo[0], lo[1]];
    let hex: Vec<Vec2> = (0..6)
        .map(|k| {
            let t = std::f64::consts::PI / 6.0 + std::f64::consts::PI / 3.0 * k as f64;
            [c[0] + a * t.cos(), c[1] + a * t.sin()]
        })
        .collect();
    let s3 = 3f64.sqrt();
    tile(None, vec![hex], [[s3 * a, 0.0], [0.5 * s3 * a, 1.5 * a]], Keep::Meets(lo, hi), domain)
}

/// Add lattice translates so that every cell meeting `bbox(Ω) + margin` exists.
pub fn add_halo(mesh: &PolygonMesh, margin: f64) -> Result<PolygonMesh> {
    let tags = mesh.tags.as_ref().ok_or_else(|| Error::Periodicity("halo needs a lattice-tagged mesh".into()))?;
    let (lo, hi) = mesh.domain.bbox();
    let lo = [lo[0] - margin, lo[1] - margin];
    let hi = [hi[0] + margin, hi[1] + margin];
    tile(Some(mesh), tags.pattern.clone(), tags.lattice, Keep::Meets(lo, hi), mesh.domain.clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alternating_counts() {
        let m = build_alternating_mesh(0.25, Domain::unit_square()).unwrap();
        assert_eq!(m.n_cells(), 24);
        // rows k = 0, 2 coarse (3 cells each), row k = 1 fine (6 cells)
        let m = build_alternating_mesh(1.0 / 3.0, Domain::unit_square()).unwrap();
        assert_eq!(m.n_cells(), 12);
        let coarse = m.volumes.iter().filter(|&&v| (v - 1.0 / 9.0).abs() < 1e-14).count();
        let fine = m.volumes.iter().filter(|&&v| (v - 1.0 / 18.0).abs() < 1e-14).count();
        assert_eq!((coarse, fine), (6, 6));
        assert!(build_alternating_mesh(0.3, Domain::unit_square()).is_err());
    }

    #[test]
    fn alternating_faces_conform() {
        let m = build_alternating_mesh(0.25, Domain::unit_square()).unwrap();
        let total: f64 = m.volumes.iter().sum();
        assert!((total - 1.0).abs() < 1e-14);
        // every fine cell in the middle of the mesh has exactly one coarse neighbour below
        for f in &m.faces {
            assert!((geom::norm(f.normal) - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn halo_keeps_indices() {
        let m = build_cartesian_mesh(4, 4, Domain::unit_square()).unwrap();
        let h = add_halo(&m, 0.5).unwrap();
        assert_eq!(h.n_cells(), 64);
        for i in 0..m.n_cells() {
            assert_eq!(h.barycenters[i], m.barycenters[i]);
        }
    }

    #[test]
    fn hexagons_cover_domain() {
        let m = build_hexagonal_mesh(0.1, Domain::unit_square()).unwrap();
        let area: f64 = m.volumes.iter().sum();
        assert!(area > 1.0);
        for v in &m.volumes {
            assert!((v - 1.5 * 3f64.sqrt() * 0.01).abs() < 1e-14);
        }
    }
}
