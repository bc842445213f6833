use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::general::GeneralMesh;
use crate::error::{Error, Result};
use crate::geom::{self, Vec2};

/// Sampling density used by validations, in points per δx per axis.
pub const SAMPLES_PER_DX: usize = 8;
/// Seed of every validation sampler.
pub const VALIDATION_SEED: u64 = 0x5eed;
const MAX_CHECKED_CELLS: usize = 2000;

/// A validated periodic pattern: lattice, pattern cells V₀ and index map σ.
#[derive(Clone, Debug)]
pub struct PeriodicStructure {
    pub lattice: [Vec2; 2],
    /// Mesh index of the representative of every pattern element (σ = (0, p)).
    pub pattern: Vec<usize>,
    /// σ(i) = (m, p) for every cell.
    pub sigma: Vec<([i64; 2], usize)>,
    index: HashMap<([i64; 2], usize), usize>,
}

impl PeriodicStructure {
    pub fn pattern_size(&self) -> usize {
        self.pattern.len()
    }

    /// m·L.
    pub fn shift(&self, m: [i64; 2]) -> Vec2 {
        geom::add(geom::scale(self.lattice[0], m[0] as f64), geom::scale(self.lattice[1], m[1] as f64))
    }

    /// Cell with σ = (m, p), if present.
    pub fn cell(&self, m: [i64; 2], p: usize) -> Option<usize> {
        self.index.get(&(m, p)).copied()
    }

    /// [m](i): the translate of cell `i` by `m`, if present.
    pub fn translate(&self, i: usize, m: [i64; 2]) -> Option<usize> {
        let (mi, p) = self.sigma[i];
        self.cell([mi[0] + m[0], mi[1] + m[1]], p)
    }
}

fn connected(n: usize, pairs: &[(usize, usize)]) -> bool {
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut Vec<usize>, x: usize) -> usize {
        let mut r = x;
        while p[r] != r {
            r = p[r];
        }
        let mut y = x;
        while p[y] != r {
            let nx = p[y];
            p[y] = r;
            y = nx;
        }
        r
    }
    for &(a, b) in pairs {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        parent[ra] = rb;
    }
    let r0 = find(&mut parent, 0);
    (0..n).all(|i| find(&mut parent, i) == r0)
}

fn sample_in_box(rng: &mut ChaCha8Rng, (lo, hi): (Vec2, Vec2)) -> Vec2 {
    [lo[0] + (hi[0] - lo[0]) * rng.gen::<f64>(), lo[1] + (hi[1] - lo[1]) * rng.gen::<f64>()]
}

/// Validate a user-supplied periodic pattern by sampling; nothing is inferred.
pub fn declare_periodic(
    mesh: &GeneralMesh,
    pattern: Vec<usize>,
    lattice: [Vec2; 2],
    sigma: Vec<([i64; 2], usize)>,
) -> Result<PeriodicStructure> {
    let n = mesh.n_cells();
    if sigma.len() != n {
        return Err(Error::Periodicity(format!("σ has {} entries for {} cells", sigma.len(), n)));
    }
    if geom::cross(lattice[0], lattice[1]).abs() < 1e-14 * geom::norm(lattice[0]) * geom::norm(lattice[1]) {
        return Err(Error::Periodicity("lattice vectors are linearly dependent".into()));
    }
    if pattern.is_empty() {
        return Err(Error::Periodicity("empty pattern".into()));
    }
    let mut index = HashMap::with_capacity(n);
    for (i, &s) in sigma.iter().enumerate() {
        if s.1 >= pattern.len() {
            return Err(Error::Periodicity(format!("cell {i} maps to unknown pattern element {}", s.1)));
        }
        if let Some(o) = index.insert(s, i) {
            return Err(Error::Periodicity(format!("σ collision between cells {o} and {i}")));
        }
    }
    for (p, &c) in pattern.iter().enumerate() {
        if c >= n || sigma[c] != ([0, 0], p) {
            return Err(Error::Periodicity(format!("pattern element {p} is not represented by σ = (0, {p})")));
        }
    }
    let ps = PeriodicStructure { lattice, pattern, sigma, index };

    // connectivity of the union of pattern supports
    let local: HashMap<usize, usize> = ps.pattern.iter().enumerate().map(|(p, &c)| (c, p)).collect();
    let mut pairs = vec![];
    for e in &mesh.edges {
        if let (Some(&a), Some(&b)) = (local.get(&e.i), local.get(&e.j)) {
            pairs.push((a, b));
        }
    }
    if !connected(ps.pattern.len(), &pairs) {
        return Err(Error::Periodicity("union of pattern supports is not connected".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(VALIDATION_SEED);
    let tol = 1e-12;

    // translation consistency of χ and n
    let cells: Vec<usize> = if n <= MAX_CHECKED_CELLS {
        (0..n).collect()
    } else {
        (0..MAX_CHECKED_CELLS).map(|_| rng.gen_range(0..n)).collect()
    };
    for &j in &cells {
        let (m, p) = ps.sigma[j];
        let j0 = ps.pattern[p];
        let s = ps.shift(m);
        for _ in 0..2 {
            let x = sample_in_box(&mut rng, mesh.supports[j]);
            let y = geom::sub(x, s);
            let d = (mesh.chi(j, x) - mesh.chi(j0, y)).abs();
            if d > tol {
                return Err(Error::Periodicity(format!(
                    "cell {j} is not the translate of pattern cell {j0}: χ differs by {d:.3e} at ({:.6}, {:.6})",
                    x[0], x[1]
                )));
            }
            for &e in &mesh.cell_edges[j] {
                let k = mesh.edges[e].other(j);
                let (mk, pk) = ps.sigma[k];
                let Some(k0) = ps.cell([mk[0] - m[0], mk[1] - m[1]], pk) else { continue };
                let Some(&e0) = mesh.cell_edges[j0].iter().find(|&&f| mesh.edges[f].other(j0) == k0) else {
                    return Err(Error::Periodicity(format!("edge ({j}, {k}) has no translate at the pattern")));
                };
                let a = mesh.face_fn_directed(e, j, x);
                let b = mesh.face_fn_directed(e0, j0, y);
                if geom::norm(geom::sub(a, b)) > tol * (1.0 + geom::norm(a)) {
                    return Err(Error::Periodicity(format!("face function of ({j}, {k}) is not a translate")));
                }
            }
        }
    }

    // tiling sum Σ_m Σ_p χ_p(x − mL) = 1
    let boxes: Vec<(Vec2, Vec2)> = ps.pattern.iter().map(|&c| mesh.supports[c]).collect();
    let all: Vec<Vec2> = boxes.iter().flat_map(|(a, b)| [*a, *b]).collect();
    let (lo, hi) = geom::bbox(&all);
    let per_axis = |len: f64| ((len / mesh.delta_x * SAMPLES_PER_DX as f64).ceil() as usize).clamp(4, 256);
    let (nx, ny) = (per_axis(hi[0] - lo[0]), per_axis(hi[1] - lo[1]));
    let det = geom::cross(lattice[0], lattice[1]);
    for a in 0..nx {
        for b in 0..ny {
            let x = [
                lo[0] + (hi[0] - lo[0]) * (a as f64 + rng.gen::<f64>()) / nx as f64,
                lo[1] + (hi[1] - lo[1]) * (b as f64 + rng.gen::<f64>()) / ny as f64,
            ];
            // translates m with x − mL inside the pattern bounding box
            let mut mn = [f64::INFINITY; 2];
            let mut mx = [f64::NEG_INFINITY; 2];
            for cx in [x[0] - hi[0], x[0] - lo[0]] {
                for cy in [x[1] - hi[1], x[1] - lo[1]] {
                    let c = [cx, cy];
                    let m0 = geom::cross(c, lattice[1]) / det;
                    let m1 = geom::cross(lattice[0], c) / det;
                    mn = [mn[0].min(m0), mn[1].min(m1)];
                    mx = [mx[0].max(m0), mx[1].max(m1)];
                }
            }
            let mut sum = 0.0;
            for m0 in (mn[0].floor() as i64)..=(mx[0].ceil() as i64) {
                for m1 in (mn[1].floor() as i64)..=(mx[1].ceil() as i64) {
                    let y = geom::sub(x, ps.shift([m0, m1]));
                    for &c in &ps.pattern {
                        sum += mesh.chi(c, y);
                    }
                }
            }
            if (sum - 1.0).abs() > 1e-10 {
                return Err(Error::TilingViolation(x[0], x[1], sum));
            }
        }
    }
    Ok(ps)
}

/// Declare the periodic structure recorded by a generator.
pub fn periodic_from_tags(mesh: &GeneralMesh) -> Result<PeriodicStructure> {
    let poly = mesh.polygon().ok_or_else(|| Error::Periodicity("mesh has no polygon cells".into()))?;
    let tags = poly.tags.as_ref().ok_or_else(|| Error::Periodicity("mesh has no lattice tags".into()))?;
    let mut pattern = vec![usize::MAX; tags.pattern.len()];
    for (i, &(m, p)) in tags.sigma.iter().enumerate() {
        if m == [0, 0] {
            pattern[p] = i;
        }
    }
    if pattern.contains(&usize::MAX) {
        return Err(Error::Periodicity("pattern translate (0, 0) is not part of the mesh".into()));
    }
    declare_periodic(mesh, pattern, tags.lattice, tags.sigma.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh_core::domain::Domain;
    use crate::mesh_core::general::{mollify_polygon_mesh_with, sharp_polygon_mesh};
    use crate::mesh_core::generators::{build_alternating_mesh, build_cartesian_mesh};

    #[test]
    fn cartesian_accepted() {
        let m = build_cartesian_mesh(4, 4, Domain::unit_square()).unwrap();
        let g = sharp_polygon_mesh(&m, 0.0).unwrap();
        let ps = periodic_from_tags(&g).unwrap();
        assert_eq!(ps.pattern_size(), 1);
        assert_eq!(ps.lattice, [[0.25, 0.0], [0.0, 0.25]]);
    }

    #[test]
    fn alternating_accepted_and_wrong_lattice_rejected() {
        let h = 0.125;
        let m = build_alternating_mesh(h, Domain::unit_square()).unwrap();
        let g = mollify_polygon_mesh_with(&m, m.delta_x, 0.2).unwrap();
        let ps = periodic_from_tags(&g).unwrap();
        assert_eq!(ps.pattern_size(), 3);
        let tags = m.tags.clone().unwrap();
        let g = sharp_polygon_mesh(&m, 0.0).unwrap();
        let bad = declare_periodic(&g, ps.pattern.clone(), [[h, 0.0], [0.0, h]], tags.sigma.clone());
        assert!(bad.is_err());
    }

    #[test]
    fn sigma_collision_rejected() {
        let m = build_cartesian_mesh(2, 2, Domain::unit_square()).unwrap();
        let g = sharp_polygon_mesh(&m, 0.0).unwrap();
        let mut sigma = m.tags.clone().unwrap().sigma;
        sigma[1] = sigma[0];
        let r = declare_periodic(&g, vec![0], [[0.5, 0.0], [0.0, 0.5]], sigma);
        assert!(matches!(r, Err(Error::Periodicity(s)) if s.contains("collision")));
    }
}
