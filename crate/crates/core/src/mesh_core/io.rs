//! JSON mesh files. Coordinates round-trip bit-exactly.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::domain::Domain;
use super::polygon::{build_polygon_mesh, LatticeTags, PolygonMesh};
use super::triangulation::Triangulation;
use crate::error::{Error, Result};
use crate::geom::Vec2;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct FaceRecord {
    pub cells: [usize; 2],
    pub normal: Vec2,
    pub area: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct PeriodicBlock {
    /// Mesh indices of the pattern representatives.
    pub pattern_indices: Vec<usize>,
    pub lattice: [Vec2; 2],
    pub sigma: Vec<([i64; 2], usize)>,
    /// Pattern polygons, needed to generate halo translates.
    pub pattern: Vec<Vec<Vec2>>,
}

/// On-disk representation of a mesh.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MeshFile {
    Polygon {
        domain: Domain,
        vertices: Vec<Vec2>,
        cells: Vec<Vec<usize>>,
        faces: Vec<FaceRecord>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        periodic: Option<PeriodicBlock>,
    },
    Triangulation {
        domain: Domain,
        nodes: Vec<Vec2>,
        triangles: Vec<[usize; 3]>,
    },
}

impl MeshFile {
    pub fn from_polygon(mesh: &PolygonMesh) -> Self {
        let periodic = mesh.tags.as_ref().map(|t| {
            let mut pattern_indices = vec![0; t.pattern.len()];
            for (i, &(m, p)) in t.sigma.iter().enumerate() {
                if m == [0, 0] {
                    pattern_indices[p] = i;
                }
            }
            PeriodicBlock { pattern_indices, lattice: t.lattice, sigma: t.sigma.clone(), pattern: t.pattern.clone() }
        });
        MeshFile::Polygon {
            domain: mesh.domain.clone(),
            vertices: mesh.vertices.clone(),
            cells: mesh.cells.clone(),
            faces: mesh.faces.iter().map(|f| FaceRecord { cells: f.cells, normal: f.normal, area: f.area }).collect(),
            periodic,
        }
    }

    pub fn from_triangulation(tri: &Triangulation, domain: &Domain) -> Self {
        MeshFile::Triangulation { domain: domain.clone(), nodes: tri.nodes.clone(), triangles: tri.triangles.clone() }
    }

    /// Rebuild a polygon mesh; declared faces must match the rebuilt ones.
    pub fn into_polygon(self) -> Result<PolygonMesh> {
        match self {
            MeshFile::Polygon { domain, vertices, cells, faces, periodic } => {
                let mut mesh = build_polygon_mesh(vertices, cells, domain)?;
                if !faces.is_empty() {
                    if faces.len() != mesh.faces.len() {
                        return Err(Error::Format(format!(
                            "file declares {} faces, geometry has {}",
                            faces.len(),
                            mesh.faces.len()
                        )));
                    }
                    for (a, b) in faces.iter().zip(&mesh.faces) {
                        if a.cells != b.cells {
                            return Err(Error::Format(format!("face {:?} does not match geometry", a.cells)));
                        }
                    }
                }
                if let Some(p) = periodic {
                    if p.sigma.len() != mesh.n_cells() {
                        return Err(Error::Format("periodic σ length differs from cell count".into()));
                    }
                    mesh.tags = Some(LatticeTags { lattice: p.lattice, pattern: p.pattern, sigma: p.sigma });
                }
                Ok(mesh)
            }
            MeshFile::Triangulation { .. } => Err(Error::Format("expected a polygon mesh".into())),
        }
    }

    pub fn into_triangulation(self) -> Result<(Triangulation, Domain)> {
        match self {
            MeshFile::Triangulation { domain, nodes, triangles } => Ok((Triangulation::new(nodes, triangles)?, domain)),
            MeshFile::Polygon { .. } => Err(Error::Format("expected a triangulation".into())),
        }
    }
}

pub fn write_mesh(path: &Path, file: &MeshFile) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(file)?)?;
    Ok(())
}

pub fn read_mesh(path: &Path) -> Result<MeshFile> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh_core::generators::build_hexagonal_mesh;

    #[test]
    fn round_trip_bit_exact() {
        let m = build_hexagonal_mesh(0.17, Domain::unit_square()).unwrap();
        let text = serde_json::to_string(&MeshFile::from_polygon(&m)).unwrap();
        let back: MeshFile = serde_json::from_str(&text).unwrap();
        let m2 = back.into_polygon().unwrap();
        assert_eq!(m.vertices.len(), m2.vertices.len());
        for (a, b) in m.vertices.iter().zip(&m2.vertices) {
            assert_eq!(a[0].to_bits(), b[0].to_bits());
            assert_eq!(a[1].to_bits(), b[1].to_bits());
        }
        assert_eq!(m.tags.as_ref().unwrap().sigma, m2.tags.as_ref().unwrap().sigma);
        assert_eq!(m.volumes, m2.volumes);
    }
}
