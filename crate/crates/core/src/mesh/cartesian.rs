use super::{compute_geometry, BoxDomain, FaceIncidence, MeshTopology, PolytopalMesh};
use crate::{Error, Real, Result};

/// Tensor-product mesh of `box_` with `cells_per_axis[a]` cells along axis `a`.
pub fn build_cartesian<T: Real>(
    dim: usize,
    cells_per_axis: &[usize],
    box_: &BoxDomain<T>,
) -> Result<PolytopalMesh<T>> {
    if dim != 2 && dim != 3 {
        return Err(Error::invalid(format!("dimension must be 2 or 3, got {dim}")));
    }
    if cells_per_axis.len() != dim {
        return Err(Error::invalid(format!(
            "expected {dim} cell counts, got {}",
            cells_per_axis.len()
        )));
    }
    if cells_per_axis.iter().any(|&n| n == 0) {
        return Err(Error::invalid("cells_per_axis entries must be at least 1"));
    }
    box_.check(dim)?;
    let topo = if dim == 2 {
        cartesian_2d(cells_per_axis[0], cells_per_axis[1], box_)
    } else {
        cartesian_3d([cells_per_axis[0], cells_per_axis[1], cells_per_axis[2]], box_)
    };
    compute_geometry(topo)
}

fn coord<T: Real>(box_: &BoxDomain<T>, axis: usize, i: usize, n: usize) -> T {
    if i == n {
        return box_.hi[axis];
    }
    box_.lo[axis] + box_.extent(axis) * T::of_usize(i) / T::of_usize(n)
}

fn cartesian_2d<T: Real>(nx: usize, ny: usize, box_: &BoxDomain<T>) -> MeshTopology<T> {
    let vid = |i: usize, j: usize| i + (nx + 1) * j;
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            vertices.push([coord(box_, 0, i, nx), coord(box_, 1, j, ny), T::zero()]);
        }
    }
    // Vertical edges run upward (normal +x), horizontal edges run leftward (normal +y).
    let mut faces = Vec::new();
    let xface = |i: usize, j: usize| i + (nx + 1) * j;
    for j in 0..ny {
        for i in 0..=nx {
            faces.push(vec![vid(i, j), vid(i, j + 1)]);
        }
    }
    let n_x = faces.len();
    let yface = |i: usize, j: usize| n_x + i + nx * j;
    for j in 0..=ny {
        for i in 0..nx {
            faces.push(vec![vid(i + 1, j), vid(i, j)]);
        }
    }
    let mut cells = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            cells.push(vec![
                FaceIncidence { face: xface(i, j), sign: -1 },
                FaceIncidence { face: xface(i + 1, j), sign: 1 },
                FaceIncidence { face: yface(i, j), sign: -1 },
                FaceIncidence { face: yface(i, j + 1), sign: 1 },
            ]);
        }
    }
    MeshTopology { dim: 2, vertices, faces, cells }
}

fn cartesian_3d<T: Real>(n: [usize; 3], box_: &BoxDomain<T>) -> MeshTopology<T> {
    let vid = |p: [usize; 3]| p[0] + (n[0] + 1) * (p[1] + (n[1] + 1) * p[2]);
    let mut vertices = Vec::with_capacity((n[0] + 1) * (n[1] + 1) * (n[2] + 1));
    for k in 0..=n[2] {
        for j in 0..=n[1] {
            for i in 0..=n[0] {
                vertices.push([
                    coord(box_, 0, i, n[0]),
                    coord(box_, 1, j, n[1]),
                    coord(box_, 2, k, n[2]),
                ]);
            }
        }
    }
    // Faces normal to axis `a` are counter-clockwise in the (a+1, a+2) plane,
    // so their normal is +e_a.
    let mut faces = Vec::new();
    let mut offsets = [0usize; 3];
    let mut counts = [[0usize; 3]; 3];
    for a in 0..3 {
        offsets[a] = faces.len();
        let mut m = n;
        m[a] += 1;
        counts[a] = m;
        let (b, c) = ((a + 1) % 3, (a + 2) % 3);
        for k in 0..m[2] {
            for j in 0..m[1] {
                for i in 0..m[0] {
                    let p = [i, j, k];
                    let shift = |db: usize, dc: usize| {
                        let mut q = p;
                        q[b] += db;
                        q[c] += dc;
                        vid(q)
                    };
                    faces.push(vec![shift(0, 0), shift(1, 0), shift(1, 1), shift(0, 1)]);
                }
            }
        }
    }
    let fid = |a: usize, p: [usize; 3]| {
        let m = counts[a];
        offsets[a] + p[0] + m[0] * (p[1] + m[1] * p[2])
    };
    let mut cells = Vec::with_capacity(n[0] * n[1] * n[2]);
    for k in 0..n[2] {
        for j in 0..n[1] {
            for i in 0..n[0] {
                let p = [i, j, k];
                let mut incs = Vec::with_capacity(6);
                for a in 0..3 {
                    let mut q = p;
                    incs.push(FaceIncidence { face: fid(a, q), sign: -1 });
                    q[a] += 1;
                    incs.push(FaceIncidence { face: fid(a, q), sign: 1 });
                }
                cells.push(incs);
            }
        }
    }
    MeshTopology { dim: 3, vertices, faces, cells }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom;

    #[test]
    fn two_by_two_counts_and_measures() {
        let mesh = build_cartesian::<f64>(2, &[2, 2], &BoxDomain::unit()).unwrap();
        assert_eq!(mesh.n_cells(), 4);
        assert_eq!(mesh.n_faces(), 12);
        assert_eq!(mesh.boundary_faces().len(), 8);
        for c in 0..4 {
            assert!((mesh.cell(c).measure - 0.25).abs() < 1e-15);
        }
        for f in 0..12 {
            assert!((mesh.face(f).measure - 0.5).abs() < 1e-15);
        }
        mesh.validate().unwrap();
    }

    #[test]
    fn unit_cube_closure_is_exact() {
        let mesh = build_cartesian::<f64>(3, &[1, 1, 1], &BoxDomain::unit()).unwrap();
        let mut s = geom::zero::<f64>();
        for inc in mesh.cell_faces(0) {
            geom::axpy(&mut s, mesh.face(inc.face).measure, &mesh.outward_normal(*inc));
        }
        assert_eq!(s, [0.0; 3]);
        for p in mesh.subpyramid_measures(0) {
            assert!((p - 1.0 / 6.0).abs() < 1e-15);
        }
        mesh.validate().unwrap();
    }

    #[test]
    fn boundary_normals_point_outward() {
        let mesh = build_cartesian::<f64>(3, &[2, 3, 2], &BoxDomain::unit()).unwrap();
        for &f in mesh.boundary_faces() {
            let g = mesh.face(f);
            let out = geom::sub(&g.barycenter, &[0.5, 0.5, 0.5]);
            assert!(geom::dot(&out, &g.normal) > 0.0);
        }
        for &f in mesh.interior_faces() {
            let (a, b) = mesh.face_cells(f);
            let d = geom::sub(&mesh.cell(b.unwrap()).barycenter, &mesh.cell(a).barycenter);
            assert!(geom::dot(&d, &mesh.face(f).normal) > 0.0);
        }
        mesh.validate().unwrap();
    }

    #[test]
    fn refinement_halves_h() {
        let b = BoxDomain::cube(2.0 * std::f64::consts::PI);
        let h1 = build_cartesian::<f64>(2, &[4, 4], &b).unwrap().size();
        let h2 = build_cartesian::<f64>(2, &[8, 8], &b).unwrap().size();
        assert!((h1 / h2 - 2.0).abs() < 1e-12);
    }

    #[test]
    fn bad_extent_rejected() {
        let b = BoxDomain::new([0.0, 0.0, 0.0], [1.0, 0.0, 1.0]);
        assert!(matches!(build_cartesian::<f64>(2, &[2, 2], &b), Err(Error::InvalidInput(_))));
        assert!(build_cartesian::<f64>(2, &[0, 2], &BoxDomain::unit()).is_err());
    }

    #[test]
    fn single_precision_mesh_validates() {
        let mesh = build_cartesian::<f32>(2, &[3, 3], &BoxDomain::unit()).unwrap();
        mesh.validate().unwrap();
    }
}
