use super::{CellGeometry, FaceGeometry, MeshTopology, PolytopalMesh};
use crate::geom::{self, Point};
use crate::{Error, Real, Result};

/// Derives all geometric quantities from a mesh topology.
///
/// Face orientation is normalized so that interior normals point from the lower to
/// the higher cell id and boundary normals point outward; face vertex loops are
/// reversed accordingly. Non-planar 3D faces (beyond `1e-10 h_c`) and zero-measure
/// entities are rejected.
pub fn compute_geometry<T: Real>(topo: MeshTopology<T>) -> Result<PolytopalMesh<T>> {
    let MeshTopology { dim, vertices, mut faces, mut cells } = topo;
    if dim != 2 && dim != 3 {
        return Err(Error::invalid(format!("mesh dimension must be 2 or 3, got {dim}")));
    }
    if cells.is_empty() {
        return Err(Error::Validation("mesh has no cells".into()));
    }
    let min_face_vertices = dim;
    for (f, loop_) in faces.iter().enumerate() {
        if loop_.len() < min_face_vertices || (dim == 2 && loop_.len() != 2) {
            return Err(Error::Validation(format!(
                "face {f} has {} vertices, invalid in {dim}D",
                loop_.len()
            )));
        }
        if let Some(&v) = loop_.iter().find(|&&v| v >= vertices.len()) {
            return Err(Error::Validation(format!("face {f} references missing vertex {v}")));
        }
    }
    for (c, incs) in cells.iter().enumerate() {
        if incs.len() < dim + 1 {
            return Err(Error::Validation(format!("cell {c} has only {} faces", incs.len())));
        }
        for inc in incs {
            if inc.face >= faces.len() {
                return Err(Error::Validation(format!(
                    "cell {c} references missing face {}",
                    inc.face
                )));
            }
            if inc.sign != 1 && inc.sign != -1 {
                return Err(Error::Validation(format!("cell {c} has orientation {}", inc.sign)));
            }
        }
    }

    // Face -> incident (cell, local index) pairs.
    let mut incident: Vec<Vec<(usize, usize)>> = vec![Vec::new(); faces.len()];
    for (c, incs) in cells.iter().enumerate() {
        for (k, inc) in incs.iter().enumerate() {
            incident[inc.face].push((c, k));
        }
    }
    let mut face_cells = Vec::with_capacity(faces.len());
    for (f, inc) in incident.iter_mut().enumerate() {
        inc.sort_unstable();
        match inc.as_slice() {
            [(c, k)] => {
                if cells[*c][*k].sign < 0 {
                    faces[f].reverse();
                    cells[*c][*k].sign = 1;
                }
                face_cells.push((*c, None));
            }
            [(a, ka), (b, kb)] => {
                let (sa, sb) = (cells[*a][*ka].sign, cells[*b][*kb].sign);
                if sa == sb {
                    return Err(Error::Validation(format!(
                        "face {f} has the same orientation in cells {a} and {b}"
                    )));
                }
                if sa < 0 {
                    faces[f].reverse();
                    cells[*a][*ka].sign = 1;
                    cells[*b][*kb].sign = -1;
                }
                face_cells.push((*a, Some(*b)));
            }
            [] => return Err(Error::Validation(format!("face {f} belongs to no cell"))),
            more => {
                return Err(Error::Validation(format!(
                    "face {f} is incident to {} cells",
                    more.len()
                )))
            }
        }
    }

    let face_geometry = faces
        .iter()
        .enumerate()
        .map(|(f, loop_)| face_geometry(dim, &vertices, loop_, f))
        .collect::<Result<Vec<_>>>()?;

    let d = T::of_usize(dim);
    let mut cell_geometry = Vec::with_capacity(cells.len());
    let mut subpyramids = Vec::with_capacity(cells.len());
    for (c, incs) in cells.iter().enumerate() {
        // Reference apex: mean of the face barycenters.
        let mut x0 = geom::zero::<T>();
        for inc in incs {
            geom::axpy(&mut x0, T::one(), &face_geometry[inc.face].barycenter);
        }
        x0 = geom::scale(&x0, T::one() / T::of_usize(incs.len()));

        let mut measure = T::zero();
        let mut moment = geom::zero::<T>();
        let cone = d / (d + T::one());
        for inc in incs {
            let fg = &face_geometry[inc.face];
            let n = oriented(&fg.normal, inc.sign);
            let arm = geom::sub(&fg.barycenter, &x0);
            let vol = fg.measure * geom::dot(&arm, &n) / d;
            measure += vol;
            let centroid = geom::add(&x0, &geom::scale(&arm, cone));
            geom::axpy(&mut moment, vol, &centroid);
        }
        if !(measure > T::zero()) {
            return Err(Error::Validation(format!("cell {c} has non-positive measure {measure}")));
        }
        let barycenter = geom::scale(&moment, T::one() / measure);

        let mut verts: Vec<usize> = Vec::new();
        for inc in incs {
            for &v in &faces[inc.face] {
                if !verts.contains(&v) {
                    verts.push(v);
                }
            }
        }
        let mut diameter = T::zero();
        for (i, &a) in verts.iter().enumerate() {
            for &b in &verts[i + 1..] {
                diameter = diameter.max(geom::dist(&vertices[a], &vertices[b]));
            }
        }

        if dim == 3 {
            let tol = T::of(1e-10) * diameter;
            for inc in incs {
                let fg = &face_geometry[inc.face];
                for &v in &faces[inc.face] {
                    let off = geom::dot(&geom::sub(&vertices[v], &fg.barycenter), &fg.normal);
                    if off.abs() > tol {
                        return Err(Error::Validation(format!(
                            "face {} is not planar (vertex {v} off-plane by {off})",
                            inc.face
                        )));
                    }
                }
            }
        }

        let pyramids: Vec<T> = incs
            .iter()
            .map(|inc| {
                let fg = &face_geometry[inc.face];
                let n = oriented(&fg.normal, inc.sign);
                fg.measure * geom::dot(&geom::sub(&fg.barycenter, &barycenter), &n) / d
            })
            .collect();
        if pyramids.iter().any(|p| *p < T::zero()) {
            log::warn!("cell {c} is not star-shaped with respect to its barycenter");
        }
        subpyramids.push(pyramids);
        cell_geometry.push(CellGeometry { barycenter, measure, diameter });
    }

    let boundary_faces = face_cells
        .iter()
        .enumerate()
        .filter(|(_, fc)| fc.1.is_none())
        .map(|(f, _)| f)
        .collect();
    let interior_faces = face_cells
        .iter()
        .enumerate()
        .filter(|(_, fc)| fc.1.is_some())
        .map(|(f, _)| f)
        .collect();

    Ok(PolytopalMesh {
        dim,
        vertices,
        faces,
        cells,
        face_geometry,
        cell_geometry,
        subpyramids,
        face_cells,
        boundary_faces,
        interior_faces,
    })
}

fn oriented<T: Real>(n: &Point<T>, sign: i8) -> Point<T> {
    if sign > 0 {
        *n
    } else {
        geom::scale(n, -T::one())
    }
}

fn face_geometry<T: Real>(
    dim: usize,
    vertices: &[Point<T>],
    loop_: &[usize],
    f: usize,
) -> Result<FaceGeometry<T>> {
    if dim == 2 {
        let (a, b) = (&vertices[loop_[0]], &vertices[loop_[1]]);
        let t = geom::sub(b, a);
        let len = geom::norm(&t);
        if !(len > T::zero()) {
            return Err(Error::Validation(format!("face {f} has zero length")));
        }
        let half = T::of(0.5);
        return Ok(FaceGeometry {
            normal: [t[1] / len, -t[0] / len, T::zero()],
            barycenter: geom::scale(&geom::add(a, b), half),
            measure: len,
        });
    }
    // Fan triangulation about the vertex mean.
    let mut xm = geom::zero::<T>();
    for &v in loop_ {
        geom::axpy(&mut xm, T::one(), &vertices[v]);
    }
    xm = geom::scale(&xm, T::one() / T::of_usize(loop_.len()));
    let mut area_vec = geom::zero::<T>();
    let mut tris = Vec::with_capacity(loop_.len());
    for i in 0..loop_.len() {
        let a = &vertices[loop_[i]];
        let b = &vertices[loop_[(i + 1) % loop_.len()]];
        let av = geom::scale(&geom::cross(&geom::sub(a, &xm), &geom::sub(b, &xm)), T::of(0.5));
        let centroid = geom::scale(&geom::add(&geom::add(a, b), &xm), T::one() / T::of(3.0));
        area_vec = geom::add(&area_vec, &av);
        tris.push((av, centroid));
    }
    let measure = geom::norm(&area_vec);
    if !(measure > T::zero()) {
        return Err(Error::Validation(format!("face {f} has zero area")));
    }
    let normal = geom::scale(&area_vec, T::one() / measure);
    let mut bary = geom::zero::<T>();
    for (av, centroid) in &tris {
        geom::axpy(&mut bary, geom::dot(av, &normal), centroid);
    }
    Ok(FaceGeometry { normal, barycenter: geom::scale(&bary, T::one() / measure), measure })
}
