//! Polytopal meshes: data model, geometry, generators and file I/O.
//!
//! A mesh is described by its topology (vertices, faces as vertex loops, cells as
//! signed face lists) from which [`compute_geometry`] derives every geometric
//! quantity used by the discrete operators: face normals, barycenters and
//! measures, cell barycenters, measures and diameters, and the measures of the
//! subpyramids obtained by coning each face to its cell barycenter.
//!
//! Orientation convention: the global normal of an interior face points from the
//! lower to the higher cell id, and the normal of a boundary face points outward.

mod cartesian;
mod geometry;
mod io;
mod voronoi;

pub use cartesian::build_cartesian;
pub use geometry::compute_geometry;
pub use io::{read_mesh, write_mesh, MeshFile};
pub use voronoi::build_voronoi_polygonal_2d;

use crate::geom::{self, Point};
use crate::{Error, Real, Result};

/// One (face, orientation) pair of a cell. `sign = +1` when the global face
/// normal points out of the cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FaceIncidence {
    pub face: usize,
    pub sign: i8,
}

/// Topology-only description of a mesh, as read from a file or produced by a generator.
#[derive(Debug, Clone, PartialEq)]
pub struct MeshTopology<T> {
    pub dim: usize,
    pub vertices: Vec<Point<T>>,
    pub faces: Vec<Vec<usize>>,
    pub cells: Vec<Vec<FaceIncidence>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaceGeometry<T> {
    pub normal: Point<T>,
    pub barycenter: Point<T>,
    pub measure: T,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellGeometry<T> {
    pub barycenter: Point<T>,
    pub measure: T,
    pub diameter: T,
}

/// Axis-aligned box `[lo_i, hi_i]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxDomain<T> {
    pub lo: Point<T>,
    pub hi: Point<T>,
}

impl<T: Real> BoxDomain<T> {
    pub fn new(lo: Point<T>, hi: Point<T>) -> Self {
        Self { lo, hi }
    }

    pub fn unit() -> Self {
        Self { lo: geom::zero(), hi: [T::one(); 3] }
    }

    /// `[0, len]^dim`.
    pub fn cube(len: T) -> Self {
        Self { lo: geom::zero(), hi: [len; 3] }
    }

    pub fn extent(&self, axis: usize) -> T {
        self.hi[axis] - self.lo[axis]
    }

    pub fn measure(&self, dim: usize) -> T {
        (0..dim).map(|a| self.extent(a)).fold(T::one(), |acc, e| acc * e)
    }

    pub(crate) fn check(&self, dim: usize) -> Result<()> {
        for axis in 0..dim {
            let e = self.extent(axis);
            if !(e > T::zero()) || !e.is_finite() {
                return Err(Error::invalid(format!(
                    "box extent along axis {axis} must be positive, got {e}"
                )));
            }
        }
        Ok(())
    }
}

/// Polytopal mesh with all geometric quantities populated. Immutable once built.
#[derive(Debug, Clone)]
pub struct PolytopalMesh<T> {
    pub(crate) dim: usize,
    pub(crate) vertices: Vec<Point<T>>,
    pub(crate) faces: Vec<Vec<usize>>,
    pub(crate) cells: Vec<Vec<FaceIncidence>>,
    pub(crate) face_geometry: Vec<FaceGeometry<T>>,
    pub(crate) cell_geometry: Vec<CellGeometry<T>>,
    /// Subpyramid measures, parallel to `cells`.
    pub(crate) subpyramids: Vec<Vec<T>>,
    /// Incident cells per face; the second entry is `None` on the boundary.
    pub(crate) face_cells: Vec<(usize, Option<usize>)>,
    pub(crate) boundary_faces: Vec<usize>,
    pub(crate) interior_faces: Vec<usize>,
}

impl<T: Real> PolytopalMesh<T> {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_faces(&self) -> usize {
        self.faces.len()
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn vertices(&self) -> &[Point<T>] {
        &self.vertices
    }

    pub fn vertex(&self, v: usize) -> &Point<T> {
        &self.vertices[v]
    }

    pub fn face_vertices(&self, f: usize) -> &[usize] {
        &self.faces[f]
    }

    pub fn cell_faces(&self, c: usize) -> &[FaceIncidence] {
        &self.cells[c]
    }

    pub fn face(&self, f: usize) -> &FaceGeometry<T> {
        &self.face_geometry[f]
    }

    pub fn cell(&self, c: usize) -> &CellGeometry<T> {
        &self.cell_geometry[c]
    }

    pub fn subpyramid_measures(&self, c: usize) -> &[T] {
        &self.subpyramids[c]
    }

    pub fn face_cells(&self, f: usize) -> (usize, Option<usize>) {
        self.face_cells[f]
    }

    pub fn is_boundary_face(&self, f: usize) -> bool {
        self.face_cells[f].1.is_none()
    }

    pub fn boundary_faces(&self) -> &[usize] {
        &self.boundary_faces
    }

    pub fn interior_faces(&self) -> &[usize] {
        &self.interior_faces
    }

    /// Outward unit normal of face `inc.face` with respect to its cell.
    pub fn outward_normal(&self, inc: FaceIncidence) -> Point<T> {
        let n = self.face_geometry[inc.face].normal;
        if inc.sign > 0 {
            n
        } else {
            geom::scale(&n, -T::one())
        }
    }

    /// Mesh size `h = max_c h_c`.
    pub fn size(&self) -> T {
        self.cell_geometry.iter().map(|c| c.diameter).fold(T::zero(), T::max)
    }

    /// Total measure of the domain.
    pub fn domain_measure(&self) -> T {
        self.cell_geometry.iter().map(|c| c.measure).sum()
    }

    /// Vertices of a cell (deduplicated, in first-seen order).
    pub fn cell_vertices(&self, c: usize) -> Vec<usize> {
        let mut out: Vec<usize> = Vec::new();
        for inc in &self.cells[c] {
            for &v in &self.faces[inc.face] {
                if !out.contains(&v) {
                    out.push(v);
                }
            }
        }
        out
    }

    /// The topology the mesh was built from (with normalized orientation).
    pub fn topology(&self) -> MeshTopology<T> {
        MeshTopology {
            dim: self.dim,
            vertices: self.vertices.clone(),
            faces: self.faces.clone(),
            cells: self.cells.clone(),
        }
    }

    /// Rigidly translated copy; geometry is recomputed from scratch.
    pub fn translated(&self, shift: &Point<T>) -> Result<Self> {
        let mut topo = self.topology();
        for v in &mut topo.vertices {
            *v = geom::add(v, shift);
        }
        compute_geometry(topo)
    }

    /// Checks the structural invariants of the mesh:
    /// subpyramids partition each cell, each cell boundary is closed, interior
    /// faces have two incident cells and boundary faces one, and all measures are
    /// positive. Relative tolerance is `1e-12` (scaled by the mesh size for sums).
    pub fn validate(&self) -> Result<()> {
        let tol = T::of(1e-12).max(T::epsilon() * T::of(64.0));
        for (f, g) in self.face_geometry.iter().enumerate() {
            if !(g.measure > T::zero()) {
                return Err(Error::Validation(format!("face {f} has non-positive measure")));
            }
        }
        let mut counts = vec![0usize; self.n_faces()];
        for (c, incs) in self.cells.iter().enumerate() {
            let cg = &self.cell_geometry[c];
            if !(cg.measure > T::zero()) {
                return Err(Error::Validation(format!("cell {c} has non-positive measure")));
            }
            let mut pyr_sum = T::zero();
            let mut closure = geom::zero::<T>();
            let mut face_total = T::zero();
            for (k, inc) in incs.iter().enumerate() {
                counts[inc.face] += 1;
                let p = self.subpyramids[c][k];
                if !(p > T::zero()) {
                    return Err(Error::Validation(format!(
                        "subpyramid of face {} in cell {c} has non-positive measure",
                        inc.face
                    )));
                }
                pyr_sum += p;
                let fm = self.face_geometry[inc.face].measure;
                face_total += fm;
                geom::axpy(&mut closure, fm, &self.outward_normal(*inc));
            }
            if (pyr_sum - cg.measure).abs() > tol * cg.measure {
                return Err(Error::Validation(format!(
                    "subpyramids of cell {c} do not partition it ({pyr_sum} vs {})",
                    cg.measure
                )));
            }
            if geom::norm(&closure) > tol * face_total {
                return Err(Error::Validation(format!("boundary of cell {c} is not closed")));
            }
        }
        for (f, &n) in counts.iter().enumerate() {
            let expected = if self.is_boundary_face(f) { 1 } else { 2 };
            if n != expected {
                return Err(Error::Validation(format!(
                    "face {f} is incident to {n} cells, expected {expected}"
                )));
            }
        }
        Ok(())
    }
}
