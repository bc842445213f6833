//! Polygon meshes, generalized meshes with cell and face functions, periodic
//! structures and structural diagnostics.

pub mod domain;
pub mod general;
pub mod generators;
pub mod io;
pub mod periodic;
pub mod polygon;
pub mod structural;
pub mod triangulation;

pub use domain::Domain;
pub use general::{
    hat_mesh_from_triangulation, mollify_polygon_mesh, mollify_polygon_mesh_with, sharp_polygon_mesh, CellKind, Edge,
    GeneralMesh, DEFAULT_UNITY_MARGIN,
};
pub use generators::{add_halo, build_alternating_mesh, build_cartesian_mesh, build_hexagonal_mesh};
pub use io::{read_mesh, write_mesh, MeshFile};
pub use periodic::{declare_periodic, periodic_from_tags, PeriodicStructure};
pub use polygon::{build_polygon_mesh, Face, LatticeTags, PolygonMesh};
pub use structural::{validate_structural, validate_structural_with, StructuralReport};
pub use triangulation::Triangulation;
