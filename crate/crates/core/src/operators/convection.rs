use super::DofMap;
use crate::geom::{self, Point};
use crate::linalg::{CsrMatrix, TripletBuilder};
use crate::mesh::PolytopalMesh;
use crate::spaces::HybridVelocity;
use crate::Real;

/// `(x)⁻ = ½(|x| − x)`.
fn negative_part<T: Real>(x: T) -> T {
    T::of(0.5) * (x.abs() - x)
}

/// `t_h(w; u, ·)` as a dual vector laid out like a hybrid velocity: entry `(f, i)`
/// is `t_h(w; u, e_{f,i})`, and likewise for cells.
///
/// Cell part `½ Σ_f |f| (w_f·n_fc)(u_f − u_c)·(v_f + v_c)` plus, on boundary
/// faces, `|f| (w_f·n_f)⁻ u_f·v_f`.
pub fn convection_apply<T: Real>(
    mesh: &PolytopalMesh<T>,
    w: &HybridVelocity<T>,
    u: &HybridVelocity<T>,
) -> HybridVelocity<T> {
    let mut out = HybridVelocity::zeros(mesh);
    let half = T::of(0.5);
    for c in 0..mesh.n_cells() {
        for inc in mesh.cell_faces(c) {
            let f = inc.face;
            let flux = mesh.face(f).measure * geom::dot(&w.faces[f], &mesh.outward_normal(*inc));
            let jump = geom::sub(&u.faces[f], &u.cells[c]);
            geom::axpy(&mut out.faces[f], half * flux, &jump);
            geom::axpy(&mut out.cells[c], half * flux, &jump);
        }
    }
    for &f in mesh.boundary_faces() {
        let fg = mesh.face(f);
        let flux = fg.measure * negative_part(geom::dot(&w.faces[f], &fg.normal));
        let uf = u.faces[f];
        geom::axpy(&mut out.faces[f], flux, &uf);
    }
    out
}

/// `t_h(w; u, v)`.
pub fn convection_form<T: Real>(
    mesh: &PolytopalMesh<T>,
    w: &HybridVelocity<T>,
    u: &HybridVelocity<T>,
    v: &HybridVelocity<T>,
) -> T {
    let dual = convection_apply(mesh, w, u);
    let pair = |a: &[Point<T>], b: &[Point<T>]| a.iter().zip(b).map(|(x, y)| geom::dot(x, y)).sum::<T>();
    pair(&dual.faces, &v.faces) + pair(&dual.cells, &v.cells)
}

/// Matrix of `u ↦ t_h(w; u, ·)` on the full DoF numbering (row = test DoF).
///
/// The sparsity pattern does not depend on `w`: every entry is pushed even when
/// its value is zero, so factorizations can reuse their symbolic analysis.
pub fn convection_matrix<T: Real>(mesh: &PolytopalMesh<T>, dofs: &DofMap, w: &HybridVelocity<T>) -> CsrMatrix<T> {
    let d = mesh.dim();
    let n = dofs.n_full();
    let mut t = TripletBuilder::with_capacity(n, n, 4 * d * 2 * mesh.n_faces() + d * mesh.boundary_faces().len());
    let half = T::of(0.5);
    for c in 0..mesh.n_cells() {
        for inc in mesh.cell_faces(c) {
            let f = inc.face;
            let a = half * mesh.face(f).measure * geom::dot(&w.faces[f], &mesh.outward_normal(*inc));
            for i in 0..d {
                let (rf, rc) = (dofs.face_dof(f, i), dofs.cell_dof(c, i));
                t.push(rf, rf, a);
                t.push(rf, rc, -a);
                t.push(rc, rf, a);
                t.push(rc, rc, -a);
            }
        }
    }
    for &f in mesh.boundary_faces() {
        let fg = mesh.face(f);
        let a = fg.measure * negative_part(geom::dot(&w.faces[f], &fg.normal));
        for i in 0..d {
            let r = dofs.face_dof(f, i);
            t.push(r, r, a);
        }
    }
    t.build()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_cartesian, BoxDomain};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn matrix_matches_apply() {
        let mesh = build_cartesian::<f64>(2, &[3, 3], &BoxDomain::unit()).unwrap();
        let dofs = DofMap::new(&mesh);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut random = || {
            let mut v = HybridVelocity::<f64>::zeros(&mesh);
            for x in v.faces.iter_mut().chain(v.cells.iter_mut()) {
                *x = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), 0.0];
            }
            v
        };
        let (w, u) = (random(), random());
        let m = convection_matrix(&mesh, &dofs, &w);
        let y = m.mul_vec(&dofs.to_vector(&u));
        let z = dofs.to_vector(&convection_apply(&mesh, &w, &u));
        for (a, b) in y.iter().zip(&z) {
            assert!((a - b).abs() < 1e-14);
        }
        let zero = HybridVelocity::zeros(&mesh);
        assert!(convection_apply(&mesh, &zero, &u).cells.iter().all(|v| *v == [0.0; 3]));
    }
}
