use crate::geom::{self, Point, Tensor};
use crate::mesh::{FaceIncidence, PolytopalMesh};
use crate::Real;

/// Reconstructed gradient of one cell: the consistent (mean) part and the
/// stabilization part on each subpyramid, in local face order.
#[derive(Debug, Clone, PartialEq)]
pub struct CellGradient<T> {
    pub consistent: Tensor<T>,
    pub stabilization: Vec<Tensor<T>>,
}

impl<T: Real> CellGradient<T> {
    /// Total gradient on subpyramid `k`.
    pub fn on_subpyramid(&self, k: usize) -> Tensor<T> {
        let mut g = self.consistent;
        for (row, srow) in g.iter_mut().zip(&self.stabilization[k]) {
            for (a, b) in row.iter_mut().zip(srow) {
                *a += *b;
            }
        }
        g
    }
}

/// Gradient reconstruction from the face values (local face order) and cell value.
///
/// `Ĝ_c = |c|⁻¹ Σ_f |f| (v_f − v_c) ⊗ n_fc`, and on the subpyramid of face `f`
/// the stabilization `α |f|/|p_fc| ((v_f − v_c) − Ĝ_c (x_f − x_c)) ⊗ n_fc`.
pub fn grad_reconstruct<T: Real>(
    mesh: &PolytopalMesh<T>,
    c: usize,
    alpha: T,
    faces: &[Point<T>],
    cell: &Point<T>,
) -> CellGradient<T> {
    let d = mesh.dim();
    let incs = mesh.cell_faces(c);
    assert_eq!(faces.len(), incs.len());
    let cg = mesh.cell(c);
    let mut consistent = geom::zero_tensor::<T>();
    for (inc, vf) in incs.iter().zip(faces) {
        let fm = mesh.face(inc.face).measure / cg.measure;
        let n = mesh.outward_normal(*inc);
        let jump = geom::sub(vf, cell);
        for i in 0..d {
            for j in 0..d {
                consistent[i][j] += fm * jump[i] * n[j];
            }
        }
    }
    let stabilization = incs
        .iter()
        .zip(faces)
        .enumerate()
        .map(|(k, (inc, vf))| {
            let fg = mesh.face(inc.face);
            let beta = alpha * fg.measure / mesh.subpyramid_measures(c)[k];
            let n = mesh.outward_normal(*inc);
            let dx = geom::sub(&fg.barycenter, &cg.barycenter);
            let r = geom::sub(&geom::sub(vf, cell), &geom::mat_vec(&consistent, &dx, d));
            let mut s = geom::zero_tensor::<T>();
            for i in 0..d {
                for j in 0..d {
                    s[i][j] = beta * r[i] * n[j];
                }
            }
            s
        })
        .collect();
    CellGradient { consistent, stabilization }
}

/// `D_c = |c|⁻¹ Σ_f |f| (v_f − v_c)·n_fc`, the trace of the consistent gradient.
pub fn divergence<T: Real>(mesh: &PolytopalMesh<T>, c: usize, faces: &[Point<T>], cell: &Point<T>) -> T {
    let incs = mesh.cell_faces(c);
    let mut s = T::zero();
    for (inc, vf) in incs.iter().zip(faces) {
        let n = mesh.outward_normal(*inc);
        s += mesh.face(inc.face).measure * geom::dot(&geom::sub(vf, cell), &n);
    }
    s / mesh.cell(c).measure
}

/// Linear maps of one cell, acting on local DoFs ordered `[faces…, cell]`.
///
/// The gradient and diffusion act on each velocity component separately, so the
/// stored matrices are scalar; the velocity matrices are their tensor product
/// with the `d × d` identity.
#[derive(Debug, Clone)]
pub struct LocalCellOperators<T> {
    pub cell: usize,
    pub dim: usize,
    pub faces: Vec<FaceIncidence>,
    pub measure: T,
    /// `|f| n_fc / |c|` per face: row `i` of `Ĝ_c` is `Σ_f g_f (v_f,i − v_c,i)`,
    /// and `D_c = Σ_f g_f·(v_f − v_c)`.
    pub consistent: Vec<Point<T>>,
    /// `gradient[k][m]`: coefficient vector of `v_m − v_c` in row `i` of the
    /// total gradient on subpyramid `k`.
    pub gradient: Vec<Vec<Point<T>>>,
    pub subpyramids: Vec<T>,
    /// Scalar diffusion matrix `Σ_k |p_k| G_kᵀ G_k`, size `(n_f + 1)²`.
    pub diffusion: Vec<Vec<T>>,
}

impl<T: Real> LocalCellOperators<T> {
    pub fn new(mesh: &PolytopalMesh<T>, c: usize, alpha: T) -> Self {
        let d = mesh.dim();
        let incs = mesh.cell_faces(c).to_vec();
        let nf = incs.len();
        let cg = *mesh.cell(c);
        let normals: Vec<Point<T>> = incs.iter().map(|inc| mesh.outward_normal(*inc)).collect();
        let consistent: Vec<Point<T>> = incs
            .iter()
            .zip(&normals)
            .map(|(inc, n)| geom::scale(n, mesh.face(inc.face).measure / cg.measure))
            .collect();
        let subpyramids = mesh.subpyramid_measures(c).to_vec();
        let gradient: Vec<Vec<Point<T>>> = (0..nf)
            .map(|k| {
                let fg = mesh.face(incs[k].face);
                let beta = alpha * fg.measure / subpyramids[k];
                let dx = geom::sub(&fg.barycenter, &cg.barycenter);
                (0..nf)
                    .map(|m| {
                        let delta = if m == k { T::one() } else { T::zero() };
                        let coef = beta * (delta - geom::dot(&consistent[m], &dx));
                        let mut col = consistent[m];
                        geom::axpy(&mut col, coef, &normals[k]);
                        col
                    })
                    .collect()
            })
            .collect();
        // Form on the jumps v_m − v_c, then expand to [faces…, cell].
        let mut jump = vec![vec![T::zero(); nf]; nf];
        for k in 0..nf {
            for m in 0..nf {
                for l in m..nf {
                    let v = subpyramids[k] * geom::dot(&gradient[k][m], &gradient[k][l]);
                    jump[m][l] += v;
                    if l != m {
                        jump[l][m] += v;
                    }
                }
            }
        }
        let mut diffusion = vec![vec![T::zero(); nf + 1]; nf + 1];
        let mut total = T::zero();
        for m in 0..nf {
            let mut row_sum = T::zero();
            for l in 0..nf {
                diffusion[m][l] = jump[m][l];
                row_sum += jump[m][l];
            }
            diffusion[m][nf] = -row_sum;
            diffusion[nf][m] = -row_sum;
            total += row_sum;
        }
        diffusion[nf][nf] = total;
        Self { cell: c, dim: d, faces: incs, measure: cg.measure, consistent, gradient, subpyramids, diffusion }
    }

    /// Local divergence from face values; the cell value drops out because
    /// `Σ_f |f| n_fc = 0`.
    pub fn divergence(&self, faces: &[Point<T>]) -> T {
        self.consistent.iter().zip(faces).map(|(g, v)| geom::dot(g, v)).sum()
    }
}
