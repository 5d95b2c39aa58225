//! Hybrid velocity and cell pressure spaces, projections, boundary data and
//! discrete norms.

mod quadrature;

use std::path::Path;

pub use quadrature::{MeshQuadrature, QuadratureRule};
#[allow(unused_imports)]
pub(crate) use quadrature::face_simplices;

use crate::geom::{self, Point};
use crate::mesh::PolytopalMesh;
use crate::{Error, Real, Result};

/// Default polynomial degree of the quadrature used for projections and sources.
pub const DEFAULT_QUADRATURE_DEGREE: usize = 6;

/// Velocity with one vector per face and one per cell. In 2D the third
/// component is kept at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridVelocity<T> {
    pub faces: Vec<Point<T>>,
    pub cells: Vec<Point<T>>,
}

/// Cellwise constant pressure.
#[derive(Debug, Clone, PartialEq)]
pub struct PressureField<T> {
    pub values: Vec<T>,
}

impl<T: Real> HybridVelocity<T> {
    pub fn zeros(mesh: &PolytopalMesh<T>) -> Self {
        Self { faces: vec![geom::zero(); mesh.n_faces()], cells: vec![geom::zero(); mesh.n_cells()] }
    }

    /// Same vector on every face and cell.
    pub fn constant(mesh: &PolytopalMesh<T>, v: Point<T>) -> Self {
        Self { faces: vec![v; mesh.n_faces()], cells: vec![v; mesh.n_cells()] }
    }

    pub fn check(&self, mesh: &PolytopalMesh<T>) -> Result<()> {
        if self.faces.len() != mesh.n_faces() || self.cells.len() != mesh.n_cells() {
            return Err(Error::invalid("hybrid velocity size does not match the mesh"));
        }
        if self.faces.iter().chain(&self.cells).flatten().any(|x| !x.is_finite()) {
            return Err(Error::invalid("hybrid velocity has non-finite entries"));
        }
        Ok(())
    }

    fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Self {
        let map = |a: &[Point<T>], b: &[Point<T>]| -> Vec<Point<T>> {
            a.iter().zip(b).map(|(x, y)| [f(x[0], y[0]), f(x[1], y[1]), f(x[2], y[2])]).collect()
        };
        Self { faces: map(&self.faces, &other.faces), cells: map(&self.cells, &other.cells) }
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip_map(other, |a, b| a - b)
    }

    /// `a self + b other`.
    pub fn combine(&self, a: T, other: &Self, b: T) -> Self {
        self.zip_map(other, |x, y| a * x + b * y)
    }

    pub fn scaled(&self, s: T) -> Self {
        Self {
            faces: self.faces.iter().map(|v| geom::scale(v, s)).collect(),
            cells: self.cells.iter().map(|v| geom::scale(v, s)).collect(),
        }
    }

    /// Whether every boundary face value is exactly zero.
    pub fn is_homogeneous(&self, mesh: &PolytopalMesh<T>) -> bool {
        mesh.boundary_faces().iter().all(|&f| self.faces[f] == geom::zero())
    }
}

impl<T: Real> PressureField<T> {
    pub fn zeros(mesh: &PolytopalMesh<T>) -> Self {
        Self { values: vec![T::zero(); mesh.n_cells()] }
    }

    pub fn check(&self, mesh: &PolytopalMesh<T>) -> Result<()> {
        if self.values.len() != mesh.n_cells() {
            return Err(Error::invalid("pressure size does not match the mesh"));
        }
        if self.values.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("pressure has non-finite entries"));
        }
        Ok(())
    }

    /// `Σ_c |c| p_c / |Ω|`.
    pub fn mean(&self, mesh: &PolytopalMesh<T>) -> T {
        let s: T = self.values.iter().enumerate().map(|(c, p)| mesh.cell(c).measure * *p).sum();
        s / mesh.domain_measure()
    }
}

/// Face and cell means of `field(t, ·)`.
pub fn project_velocity<T: Real>(
    mesh: &PolytopalMesh<T>,
    quad: &MeshQuadrature<T>,
    field: impl Fn(T, &Point<T>) -> Point<T>,
    t: T,
) -> HybridVelocity<T> {
    let faces = (0..mesh.n_faces())
        .map(|f| geom::scale(&quad.integrate_face_vec(f, |x| field(t, x)), T::one() / mesh.face(f).measure))
        .collect();
    let cells = (0..mesh.n_cells())
        .map(|c| geom::scale(&quad.integrate_cell_vec(c, |x| field(t, x)), T::one() / mesh.cell(c).measure))
        .collect();
    HybridVelocity { faces, cells }
}

/// Cell means of `field(t, ·)`.
pub fn project_pressure<T: Real>(
    mesh: &PolytopalMesh<T>,
    quad: &MeshQuadrature<T>,
    field: impl Fn(T, &Point<T>) -> T,
    t: T,
) -> PressureField<T> {
    PressureField {
        values: (0..mesh.n_cells())
            .map(|c| quad.integrate_cell(c, |x| field(t, x)) / mesh.cell(c).measure)
            .collect(),
    }
}

/// Face means of `data(t, ·)` on boundary faces.
pub fn boundary_values<T: Real>(
    mesh: &PolytopalMesh<T>,
    quad: &MeshQuadrature<T>,
    data: impl Fn(T, &Point<T>) -> Point<T>,
    t: T,
) -> Vec<Point<T>> {
    mesh.boundary_faces()
        .iter()
        .map(|&f| geom::scale(&quad.integrate_face_vec(f, |x| data(t, x)), T::one() / mesh.face(f).measure))
        .collect()
}

/// Overwrites boundary face values with face means of `data(t, ·)`.
pub fn apply_dirichlet<T: Real>(
    mut velocity: HybridVelocity<T>,
    mesh: &PolytopalMesh<T>,
    quad: &MeshQuadrature<T>,
    data: impl Fn(T, &Point<T>) -> Point<T>,
    t: T,
) -> HybridVelocity<T> {
    for (&f, v) in mesh.boundary_faces().iter().zip(boundary_values(mesh, quad, data, t)) {
        velocity.faces[f] = v;
    }
    velocity
}

/// Subtracts the volume-weighted mean.
pub fn zero_mean_adjust<T: Real>(mut p: PressureField<T>, mesh: &PolytopalMesh<T>) -> PressureField<T> {
    let mean = p.mean(mesh);
    p.values.iter_mut().for_each(|v| *v -= mean);
    p
}

/// `½ Σ_c |c| |v_c|²`.
pub fn kinetic_energy<T: Real>(v: &HybridVelocity<T>, mesh: &PolytopalMesh<T>) -> T {
    T::of(0.5) * v.cells.iter().enumerate().map(|(c, vc)| mesh.cell(c).measure * geom::dot(vc, vc)).sum::<T>()
}

/// `(Σ_c |c| |v_c|²)^{1/2}`.
pub fn cell_l2_norm<T: Real>(v: &HybridVelocity<T>, mesh: &PolytopalMesh<T>) -> T {
    (kinetic_energy(v, mesh) * T::of(2.0)).sqrt()
}

/// `(Σ_c |c| p_c²)^{1/2}`.
pub fn pressure_l2_norm<T: Real>(p: &PressureField<T>, mesh: &PolytopalMesh<T>) -> T {
    p.values.iter().enumerate().map(|(c, v)| mesh.cell(c).measure * *v * *v).sum::<T>().sqrt()
}

/// `(Σ_c Σ_{f∈F_c} h_c⁻¹ |f| |v_f − v_c|²)^{1/2}`.
pub fn h1_seminorm<T: Real>(v: &HybridVelocity<T>, mesh: &PolytopalMesh<T>) -> T {
    let mut s = T::zero();
    for c in 0..mesh.n_cells() {
        let hc = mesh.cell(c).diameter;
        for inc in mesh.cell_faces(c) {
            let d = geom::sub(&v.faces[inc.face], &v.cells[c]);
            s += mesh.face(inc.face).measure / hc * geom::dot(&d, &d);
        }
    }
    s.sqrt()
}

/// Writes `kind,id,component,value` rows (kind is `face`, `cell` or `pressure`).
pub fn write_snapshot<T: Real>(
    path: impl AsRef<Path>,
    mesh: &PolytopalMesh<T>,
    v: &HybridVelocity<T>,
    p: Option<&PressureField<T>>,
) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["kind", "id", "component", "value"])?;
    let d = mesh.dim();
    for (kind, vals) in [("face", &v.faces), ("cell", &v.cells)] {
        for (id, x) in vals.iter().enumerate() {
            for (k, xk) in x.iter().enumerate().take(d) {
                w.write_record([kind.to_string(), id.to_string(), k.to_string(), format!("{:.17e}", xk.as_f64())])?;
            }
        }
    }
    if let Some(p) = p {
        for (id, x) in p.values.iter().enumerate() {
            w.write_record(["pressure".to_string(), id.to_string(), "0".into(), format!("{:.17e}", x.as_f64())])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}
