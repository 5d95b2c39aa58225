//! Discrete operators: gradient reconstruction, diffusion, divergence and
//! velocity–pressure coupling, div-div, convection, mass and source.
//!
//! Velocity DoFs are numbered `[interior faces × d, cells × d, boundary faces × d]`
//! with the component index innermost. The first two groups are the free DoFs;
//! boundary face values are prescribed and eliminated by lifting.

mod convection;
mod local;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use convection::{convection_apply, convection_form, convection_matrix};
pub use local::{divergence, grad_reconstruct, CellGradient, LocalCellOperators};

use crate::geom::{self, Point};
use crate::linalg::{CsrMatrix, TripletBuilder};
use crate::mesh::PolytopalMesh;
use crate::spaces::{HybridVelocity, MeshQuadrature, PressureField, DEFAULT_QUADRATURE_DEGREE};
use crate::{Error, Real, Result};

/// Parameters of the discrete operators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OperatorConfig {
    /// Stabilization coefficient; `None` selects `1/√d`.
    pub alpha: Option<f64>,
    pub quadrature_degree: usize,
}

impl Default for OperatorConfig {
    fn default() -> Self {
        Self { alpha: None, quadrature_degree: DEFAULT_QUADRATURE_DEGREE }
    }
}

impl OperatorConfig {
    /// `α = 1/√d`, the hybrid finite volume choice.
    pub fn hfv() -> Self {
        Self::default()
    }

    /// `α = 1`, which recovers the generalized Crouzeix–Raviart scheme.
    pub fn crouzeix_raviart() -> Self {
        Self { alpha: Some(1.0), ..Self::default() }
    }

    pub fn alpha<T: Real>(&self, dim: usize) -> T {
        T::of(self.alpha.unwrap_or(1.0 / (dim as f64).sqrt()))
    }

    pub fn validate(&self) -> Result<()> {
        match self.alpha {
            Some(a) if !(a > 0.0 && a.is_finite()) => {
                Err(Error::invalid(format!("stabilization parameter must be positive, got {a}")))
            }
            _ => Ok(()),
        }
    }
}

/// Numbering of the velocity DoFs.
#[derive(Debug, Clone, PartialEq)]
pub struct DofMap {
    dim: usize,
    n_cells: usize,
    n_interior: usize,
    n_boundary: usize,
    face_slot: Vec<usize>,
}

impl DofMap {
    pub fn new<T: Real>(mesh: &PolytopalMesh<T>) -> Self {
        let n_interior = mesh.interior_faces().len();
        let n_cells = mesh.n_cells();
        let mut face_slot = vec![0; mesh.n_faces()];
        for (k, &f) in mesh.interior_faces().iter().enumerate() {
            face_slot[f] = k;
        }
        for (k, &f) in mesh.boundary_faces().iter().enumerate() {
            face_slot[f] = n_interior + n_cells + k;
        }
        Self { dim: mesh.dim(), n_cells, n_interior, n_boundary: mesh.boundary_faces().len(), face_slot }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of free (interior face and cell) velocity DoFs.
    pub fn n_free(&self) -> usize {
        (self.n_interior + self.n_cells) * self.dim
    }

    pub fn n_bound(&self) -> usize {
        self.n_boundary * self.dim
    }

    pub fn n_full(&self) -> usize {
        self.n_free() + self.n_bound()
    }

    pub fn n_pressure(&self) -> usize {
        self.n_cells
    }

    pub fn face_dof(&self, f: usize, i: usize) -> usize {
        self.face_slot[f] * self.dim + i
    }

    pub fn cell_dof(&self, c: usize, i: usize) -> usize {
        (self.n_interior + c) * self.dim + i
    }

    pub fn to_vector<T: Real>(&self, v: &HybridVelocity<T>) -> Vec<T> {
        let mut x = vec![T::zero(); self.n_full()];
        for (f, vf) in v.faces.iter().enumerate() {
            for i in 0..self.dim {
                x[self.face_dof(f, i)] = vf[i];
            }
        }
        for (c, vc) in v.cells.iter().enumerate() {
            for i in 0..self.dim {
                x[self.cell_dof(c, i)] = vc[i];
            }
        }
        x
    }

    pub fn to_velocity<T: Real>(&self, x: &[T]) -> HybridVelocity<T> {
        assert_eq!(x.len(), self.n_full());
        let read = |base: usize| -> Point<T> {
            let mut p = geom::zero();
            p[..self.dim].copy_from_slice(&x[base..base + self.dim]);
            p
        };
        HybridVelocity {
            faces: (0..self.face_slot.len()).map(|f| read(self.face_dof(f, 0))).collect(),
            cells: (0..self.n_cells).map(|c| read(self.cell_dof(c, 0))).collect(),
        }
    }

    /// Splits a full vector into its free and prescribed parts.
    pub fn split<T: Copy>(&self, x: &[T]) -> (Vec<T>, Vec<T>) {
        (x[..self.n_free()].to_vec(), x[self.n_free()..].to_vec())
    }

    pub fn join<T: Copy>(&self, free: &[T], bound: &[T]) -> Vec<T> {
        assert_eq!(free.len(), self.n_free());
        assert_eq!(bound.len(), self.n_bound());
        free.iter().chain(bound).copied().collect()
    }

    /// Columns `(free, prescribed)` of a matrix on the full numbering, restricted
    /// to the rows in `rows`.
    pub fn split_columns<T: Real>(
        &self,
        a: &CsrMatrix<T>,
        rows: std::ops::Range<usize>,
    ) -> (CsrMatrix<T>, CsrMatrix<T>) {
        (a.block(rows.clone(), 0..self.n_free()), a.block(rows, self.n_free()..self.n_full()))
    }
}

fn local_operators<T: Real>(mesh: &PolytopalMesh<T>, alpha: T) -> Vec<LocalCellOperators<T>> {
    (0..mesh.n_cells()).map(|c| LocalCellOperators::new(mesh, c, alpha)).collect()
}

fn push_scalar_block<T: Real>(
    t: &mut TripletBuilder<T>,
    dofs: &DofMap,
    ops: &LocalCellOperators<T>,
    matrix: &[Vec<T>],
) {
    let nf = ops.faces.len();
    let slot = |k: usize, i: usize| {
        if k < nf {
            dofs.face_dof(ops.faces[k].face, i)
        } else {
            dofs.cell_dof(ops.cell, i)
        }
    };
    for i in 0..dofs.dim() {
        for (a, row) in matrix.iter().enumerate() {
            for (b, &v) in row.iter().enumerate() {
                t.push(slot(a, i), slot(b, i), v);
            }
        }
    }
}

/// `a_h(u, v) = Σ_c Σ_f |p_fc| G_c(u)|_{p_fc} : G_c(v)|_{p_fc}` on the full numbering.
pub fn assemble_diffusion<T: Real>(mesh: &PolytopalMesh<T>, config: &OperatorConfig) -> CsrMatrix<T> {
    let dofs = DofMap::new(mesh);
    let ops = local_operators(mesh, config.alpha(mesh.dim()));
    diffusion_from_locals(&dofs, &ops)
}

fn diffusion_from_locals<T: Real>(dofs: &DofMap, ops: &[LocalCellOperators<T>]) -> CsrMatrix<T> {
    let n = dofs.n_full();
    let cap = ops.iter().map(|o| (o.faces.len() + 1).pow(2)).sum::<usize>() * dofs.dim();
    let mut t = TripletBuilder::with_capacity(n, n, cap);
    for o in ops {
        push_scalar_block(&mut t, dofs, o, &o.diffusion);
    }
    t.build()
}

/// Matrix of `b_h(v, q) = −Σ_c |c| D_c(v) q_c`: row `c`, column `(f, i)` holds
/// `−|f| n_fc,i`. Cell velocity columns are structurally zero.
pub fn assemble_coupling<T: Real>(mesh: &PolytopalMesh<T>) -> CsrMatrix<T> {
    let dofs = DofMap::new(mesh);
    let d = mesh.dim();
    let mut t = TripletBuilder::with_capacity(mesh.n_cells(), dofs.n_full(), 2 * d * mesh.n_faces());
    for c in 0..mesh.n_cells() {
        for inc in mesh.cell_faces(c) {
            let n = mesh.outward_normal(*inc);
            let fm = mesh.face(inc.face).measure;
            for i in 0..d {
                t.push(c, dofs.face_dof(inc.face, i), -fm * n[i]);
            }
        }
    }
    t.build()
}

/// `d_h(u, v) = Σ_c |c| D_c(u) D_c(v)`.
pub fn assemble_divdiv<T: Real>(mesh: &PolytopalMesh<T>) -> CsrMatrix<T> {
    let dofs = DofMap::new(mesh);
    let d = mesh.dim();
    let n = dofs.n_full();
    let mut t = TripletBuilder::new(n, n);
    for c in 0..mesh.n_cells() {
        let cm = mesh.cell(c).measure;
        let row: Vec<(usize, T)> = mesh
            .cell_faces(c)
            .iter()
            .flat_map(|inc| {
                let g = geom::scale(&mesh.outward_normal(*inc), mesh.face(inc.face).measure / cm);
                let dofs = &dofs;
                (0..d).map(move |i| (dofs.face_dof(inc.face, i), g[i]))
            })
            .collect();
        for &(r, a) in &row {
            for &(s, b) in &row {
                t.push(r, s, cm * a * b);
            }
        }
    }
    t.build()
}

/// Diagonal of the mass form `m(u, v) = Σ_c |c| u_c·v_c` on the full numbering
/// (zero on face DoFs).
pub fn mass_diagonal<T: Real>(mesh: &PolytopalMesh<T>) -> Vec<T> {
    let dofs = DofMap::new(mesh);
    let mut m = vec![T::zero(); dofs.n_full()];
    for c in 0..mesh.n_cells() {
        for i in 0..mesh.dim() {
            m[dofs.cell_dof(c, i)] = mesh.cell(c).measure;
        }
    }
    m
}

/// `l(v) = Σ_c ∫_c f(t)·v_c` as a vector on the full numbering.
pub fn assemble_source<T: Real>(
    mesh: &PolytopalMesh<T>,
    quad: &MeshQuadrature<T>,
    f: impl Fn(T, &Point<T>) -> Point<T>,
    t: T,
) -> Vec<T> {
    let dofs = DofMap::new(mesh);
    let mut rhs = vec![T::zero(); dofs.n_full()];
    for c in 0..mesh.n_cells() {
        let s = quad.integrate_cell_vec(c, |x| f(t, x));
        for i in 0..mesh.dim() {
            rhs[dofs.cell_dof(c, i)] = s[i];
        }
    }
    rhs
}

/// Cellwise discrete divergence `D_h(v)`.
pub fn discrete_divergence<T: Real>(mesh: &PolytopalMesh<T>, v: &HybridVelocity<T>) -> PressureField<T> {
    PressureField {
        values: (0..mesh.n_cells())
            .map(|c| {
                let faces: Vec<Point<T>> = mesh.cell_faces(c).iter().map(|inc| v.faces[inc.face]).collect();
                divergence(mesh, c, &faces, &v.cells[c])
            })
            .collect(),
    }
}

/// `a_h(v, v)` evaluated from the gradient reconstruction, without assembly.
pub fn gradient_energy<T: Real>(mesh: &PolytopalMesh<T>, config: &OperatorConfig, v: &HybridVelocity<T>) -> T {
    let alpha = config.alpha(mesh.dim());
    let mut s = T::zero();
    for c in 0..mesh.n_cells() {
        let faces: Vec<Point<T>> = mesh.cell_faces(c).iter().map(|inc| v.faces[inc.face]).collect();
        let g = grad_reconstruct(mesh, c, alpha, &faces, &v.cells[c]);
        for (k, p) in mesh.subpyramid_measures(c).iter().enumerate() {
            let gk = g.on_subpyramid(k);
            s += *p * geom::frobenius(&gk, &gk, mesh.dim());
        }
    }
    s
}

/// Inputs of the discrete inf-sup estimate on the homogeneous velocity space.
#[derive(Debug, Clone)]
pub struct InfSupInputs<T> {
    /// Coupling restricted to free velocity columns.
    pub coupling: CsrMatrix<T>,
    /// Gram matrix of `‖·‖_{1,h}` on free velocity DoFs.
    pub velocity_gram: CsrMatrix<T>,
    /// Gram matrix of the cell `L²` norm on pressures, `diag(|c|)`.
    pub pressure_gram: CsrMatrix<T>,
}

pub fn infsup_inputs<T: Real>(mesh: &PolytopalMesh<T>) -> InfSupInputs<T> {
    let dofs = DofMap::new(mesh);
    let n = dofs.n_full();
    let mut t = TripletBuilder::new(n, n);
    for c in 0..mesh.n_cells() {
        let hc = mesh.cell(c).diameter;
        for inc in mesh.cell_faces(c) {
            let w = mesh.face(inc.face).measure / hc;
            for i in 0..mesh.dim() {
                let (rf, rc) = (dofs.face_dof(inc.face, i), dofs.cell_dof(c, i));
                t.push(rf, rf, w);
                t.push(rf, rc, -w);
                t.push(rc, rf, -w);
                t.push(rc, rc, w);
            }
        }
    }
    let gram = t.build();
    let coupling = assemble_coupling(mesh);
    let masses: Vec<T> = (0..mesh.n_cells()).map(|c| mesh.cell(c).measure).collect();
    InfSupInputs {
        coupling: coupling.block(0..mesh.n_cells(), 0..dofs.n_free()),
        velocity_gram: gram.block(0..dofs.n_free(), 0..dofs.n_free()),
        pressure_gram: CsrMatrix::from_diagonal(&masses),
    }
}

/// Unscaled operator blocks on the full velocity numbering. Schemes combine
/// them with `ν`, `η` and `Δt`.
#[derive(Debug, Clone)]
pub struct GlobalSystem<T> {
    pub dofs: DofMap,
    pub config: OperatorConfig,
    /// `a_h`.
    pub diffusion: CsrMatrix<T>,
    /// `d_h`.
    pub divdiv: CsrMatrix<T>,
    /// `b_h`, pressure rows by velocity columns.
    pub coupling: CsrMatrix<T>,
    /// Diagonal of `m`.
    pub mass: Vec<T>,
    /// Cell measures (pressure mass).
    pub pressure_mass: Vec<T>,
}

impl<T: Real> GlobalSystem<T> {
    pub fn assemble(mesh: &PolytopalMesh<T>, config: &OperatorConfig) -> Result<Self> {
        config.validate()?;
        let dofs = DofMap::new(mesh);
        let ops = local_operators(mesh, config.alpha(mesh.dim()));
        Ok(Self {
            diffusion: diffusion_from_locals(&dofs, &ops),
            divdiv: assemble_divdiv(mesh),
            coupling: assemble_coupling(mesh),
            mass: mass_diagonal(mesh),
            pressure_mass: (0..mesh.n_cells()).map(|c| mesh.cell(c).measure).collect(),
            dofs,
            config: *config,
        })
    }

    /// Writes `diffusion.mtx`, `divdiv.mtx`, `coupling.mtx` and `mass.mtx` into `dir`.
    pub fn dump(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.diffusion.write_matrix_market(dir.join("diffusion.mtx"))?;
        self.divdiv.write_matrix_market(dir.join("divdiv.mtx"))?;
        self.coupling.write_matrix_market(dir.join("coupling.mtx"))?;
        CsrMatrix::from_diagonal(&self.mass).write_matrix_market(dir.join("mass.mtx"))
    }
}
