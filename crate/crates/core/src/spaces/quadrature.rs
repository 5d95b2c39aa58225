//! Quadrature on reference simplices and on the simplex decomposition of mesh cells and faces.

use crate::geom::{self, Point};
use crate::mesh::PolytopalMesh;
use crate::Real;

/// Points and weights on a reference simplex of dimension `dim`
/// (`[0,1]`, the unit right triangle, the unit right tetrahedron).
/// Weights sum to the reference measure `1/dim!`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub dim: usize,
    pub degree: usize,
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
}

// Symmetric 12-point degree-6 rule for the triangle (weights normalized to 1).
const TRI6: [(f64, [f64; 3], u8); 3] = [
    (0.116786275726379, [0.501426509658179, 0.249286745170910, 0.249286745170910], 3),
    (0.050844906370207, [0.873821971016996, 0.063089014491502, 0.063089014491502], 3),
    (0.082851075618374, [0.053145049844817, 0.310352451033784, 0.636502499121399], 6),
];

// Symmetric 24-point degree-6 rule for the tetrahedron (weights sum to 1/6).
const TET6: [(f64, [f64; 4]); 4] = [
    (0.6653791709694646e-2, [0.2146028712591517, 0.2146028712591517, 0.2146028712591517, 0.3561913862225449]),
    (0.1679535175886776e-2, [0.04067395853461135, 0.04067395853461135, 0.04067395853461135, 0.8779781243961660]),
    (0.9226196923942400e-2, [0.3223378901422757, 0.3223378901422757, 0.3223378901422757, 0.03298632957317306]),
    (0.8035714285714286e-2, [0.06366100187501750, 0.06366100187501750, 0.2696723314583159, 0.6030056647916491]),
];

/// Distinct permutations of `v`.
fn permutations<const N: usize>(v: [f64; N]) -> Vec<[f64; N]> {
    fn rec<const N: usize>(cur: &mut [f64; N], k: usize, out: &mut Vec<[f64; N]>) {
        if k == N {
            if !out.contains(cur) {
                out.push(*cur);
            }
            return;
        }
        for i in k..N {
            cur.swap(k, i);
            rec(cur, k + 1, out);
            cur.swap(k, i);
        }
    }
    let mut out = Vec::new();
    rec(&mut v.clone(), 0, &mut out);
    out
}

/// Rescales tabulated weights so that constants integrate to the last bit.
fn normalize(weights: &mut [f64], total: f64) {
    let s: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w *= total / s);
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            // p1 = P_n(z), p0 = P_{n-1}(z)
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
    }
    (x, w)
}

impl QuadratureRule {
    /// Gauss–Legendre rule on `[0, 1]` exact to `degree`.
    pub fn segment(degree: usize) -> Self {
        let n = degree / 2 + 1;
        let (x, w) = gauss_legendre(n);
        Self {
            dim: 1,
            degree: 2 * n - 1,
            points: x.iter().map(|t| [(t + 1.0) / 2.0, 0.0, 0.0]).collect(),
            weights: w.iter().map(|v| v / 2.0).collect(),
        }
    }

    /// Triangle rule exact to `degree` (symmetric table up to 6, collapsed Gauss rule above).
    pub fn triangle(degree: usize) -> Self {
        if degree <= 6 {
            let mut points = Vec::new();
            let mut weights = Vec::new();
            for (w, bary, _) in TRI6 {
                for b in permutations(bary) {
                    points.push([b[1], b[2], 0.0]);
                    weights.push(w / 2.0);
                }
            }
            normalize(&mut weights, 0.5);
            return Self { dim: 2, degree: 6, points, weights };
        }
        // Duffy collapse of the square: exact for degree `2n - 2` in each direction.
        let n = degree / 2 + 2;
        let (x, w) = gauss_legendre(n);
        let mut points = Vec::new();
        let mut weights = Vec::new();
        for i in 0..n {
            let u = (x[i] + 1.0) / 2.0;
            for j in 0..n {
                let v = (x[j] + 1.0) / 2.0;
                points.push([u, v * (1.0 - u), 0.0]);
                weights.push(w[i] * w[j] / 4.0 * (1.0 - u));
            }
        }
        Self { dim: 2, degree, points, weights }
    }

    /// Tetrahedron rule exact to `degree` (symmetric table up to 6, collapsed Gauss rule above).
    pub fn tetrahedron(degree: usize) -> Self {
        if degree <= 6 {
            let mut points = Vec::new();
            let mut weights = Vec::new();
            for (w, bary) in TET6 {
                for b in permutations(bary) {
                    points.push([b[1], b[2], b[3]]);
                    weights.push(w);
                }
            }
            normalize(&mut weights, 1.0 / 6.0);
            return Self { dim: 3, degree: 6, points, weights };
        }
        let n = degree / 2 + 2;
        let (x, w) = gauss_legendre(n);
        let mut points = Vec::new();
        let mut weights = Vec::new();
        for i in 0..n {
            let a = (x[i] + 1.0) / 2.0;
            for j in 0..n {
                let b = (x[j] + 1.0) / 2.0;
                for k in 0..n {
                    let c = (x[k] + 1.0) / 2.0;
                    points.push([a, b * (1.0 - a), c * (1.0 - a) * (1.0 - b)]);
                    weights.push(w[i] * w[j] * w[k] / 8.0 * (1.0 - a) * (1.0 - a) * (1.0 - b));
                }
            }
        }
        Self { dim: 3, degree, points, weights }
    }

    pub fn for_simplex(dim: usize, degree: usize) -> Self {
        match dim {
            1 => Self::segment(degree),
            2 => Self::triangle(degree),
            _ => Self::tetrahedron(degree),
        }
    }

    pub fn reference_measure(&self) -> f64 {
        match self.dim {
            1 => 1.0,
            2 => 0.5,
            _ => 1.0 / 6.0,
        }
    }

    /// Pushes the mapped points of the simplex `verts` (absolute measure `measure`).
    fn map_into<T: Real>(&self, verts: &[Point<T>], measure: T, out: &mut Vec<(Point<T>, T)>) {
        let scale = measure / T::of(self.reference_measure());
        for (p, w) in self.points.iter().zip(&self.weights) {
            let mut x = verts[0];
            for (k, v) in verts[1..].iter().enumerate() {
                geom::axpy(&mut x, T::of(p[k]), &geom::sub(v, &verts[0]));
            }
            out.push((x, T::of(*w) * scale));
        }
    }
}

fn simplex_measure<T: Real>(verts: &[Point<T>]) -> T {
    match verts.len() {
        2 => geom::dist(&verts[0], &verts[1]),
        3 => geom::norm(&geom::cross(&geom::sub(&verts[1], &verts[0]), &geom::sub(&verts[2], &verts[0]))) * T::of(0.5),
        _ => {
            let a = geom::sub(&verts[1], &verts[0]);
            let b = geom::sub(&verts[2], &verts[0]);
            let c = geom::sub(&verts[3], &verts[0]);
            geom::dot(&a, &geom::cross(&b, &c)).abs() / T::of(6.0)
        }
    }
}

/// Face sub-simplices: 2D halves of the edge split at `x_f`; 3D triangles `(x_f, v_k, v_k+1)`.
pub(crate) fn face_simplices<T: Real>(mesh: &PolytopalMesh<T>, f: usize) -> Vec<Vec<Point<T>>> {
    let xf = mesh.face(f).barycenter;
    let loop_ = mesh.face_vertices(f);
    if mesh.dim() == 2 {
        let (a, b) = (*mesh.vertex(loop_[0]), *mesh.vertex(loop_[1]));
        vec![vec![a, xf], vec![xf, b]]
    } else {
        (0..loop_.len())
            .map(|k| vec![xf, *mesh.vertex(loop_[k]), *mesh.vertex(loop_[(k + 1) % loop_.len()])])
            .collect()
    }
}

/// Quadrature points with absolute weights for every cell and face of a mesh,
/// built from the decomposition into simplices anchored at `x_f` and coned to `x_c`.
#[derive(Debug, Clone)]
pub struct MeshQuadrature<T> {
    pub degree: usize,
    cells: Vec<Vec<(Point<T>, T)>>,
    faces: Vec<Vec<(Point<T>, T)>>,
}

impl<T: Real> MeshQuadrature<T> {
    pub fn new(mesh: &PolytopalMesh<T>, degree: usize) -> Self {
        let d = mesh.dim();
        let cell_rule = QuadratureRule::for_simplex(d, degree);
        let face_rule = QuadratureRule::for_simplex(d - 1, degree);
        let face_simplex: Vec<Vec<Vec<Point<T>>>> = (0..mesh.n_faces()).map(|f| face_simplices(mesh, f)).collect();
        let faces = face_simplex
            .iter()
            .map(|simplices| {
                let mut pts = Vec::new();
                for s in simplices {
                    face_rule.map_into(s, simplex_measure(s), &mut pts);
                }
                pts
            })
            .collect();
        let cells = (0..mesh.n_cells())
            .map(|c| {
                let xc = mesh.cell(c).barycenter;
                let mut pts = Vec::new();
                for inc in mesh.cell_faces(c) {
                    for s in &face_simplex[inc.face] {
                        let mut verts = Vec::with_capacity(d + 1);
                        verts.push(xc);
                        verts.extend_from_slice(s);
                        cell_rule.map_into(&verts, simplex_measure(&verts), &mut pts);
                    }
                }
                pts
            })
            .collect();
        Self { degree, cells, faces }
    }

    pub fn cell_points(&self, c: usize) -> &[(Point<T>, T)] {
        &self.cells[c]
    }

    pub fn face_points(&self, f: usize) -> &[(Point<T>, T)] {
        &self.faces[f]
    }

    /// `∫_c g`.
    pub fn integrate_cell(&self, c: usize, mut g: impl FnMut(&Point<T>) -> T) -> T {
        self.cells[c].iter().map(|(x, w)| *w * g(x)).sum()
    }

    pub fn integrate_face(&self, f: usize, mut g: impl FnMut(&Point<T>) -> T) -> T {
        self.faces[f].iter().map(|(x, w)| *w * g(x)).sum()
    }

    /// Componentwise `∫_c g`.
    pub fn integrate_cell_vec(&self, c: usize, mut g: impl FnMut(&Point<T>) -> Point<T>) -> Point<T> {
        let mut s = geom::zero();
        for (x, w) in &self.cells[c] {
            geom::axpy(&mut s, *w, &g(x));
        }
        s
    }

    pub fn integrate_face_vec(&self, f: usize, mut g: impl FnMut(&Point<T>) -> Point<T>) -> Point<T> {
        let mut s = geom::zero();
        for (x, w) in &self.faces[f] {
            geom::axpy(&mut s, *w, &g(x));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_cartesian, build_voronoi_polygonal_2d, BoxDomain};

    fn factorial(n: usize) -> f64 {
        (1..=n).map(|k| k as f64).product()
    }

    #[test]
    fn segment_exactness() {
        for deg in 0..12 {
            let r = QuadratureRule::segment(deg);
            for a in 0..=deg {
                let q: f64 = r.points.iter().zip(&r.weights).map(|(p, w)| w * p[0].powi(a as i32)).sum();
                assert!((q - 1.0 / (a + 1) as f64).abs() < 1e-14, "deg {deg} a {a}");
            }
        }
    }

    #[test]
    fn triangle_exactness() {
        for deg in [6, 9, 12] {
            let r = QuadratureRule::triangle(deg);
            assert!(r.weights.iter().all(|w| *w > 0.0));
            for a in 0..=deg {
                for b in 0..=deg - a {
                    let q: f64 =
                        r.points.iter().zip(&r.weights).map(|(p, w)| w * p[0].powi(a as i32) * p[1].powi(b as i32)).sum();
                    let exact = factorial(a) * factorial(b) / factorial(a + b + 2);
                    assert!((q - exact).abs() < 1e-13, "deg {deg} x^{a} y^{b}: {q} vs {exact}");
                }
            }
        }
    }

    #[test]
    fn tetrahedron_exactness() {
        for deg in [6, 8] {
            let r = QuadratureRule::tetrahedron(deg);
            assert!(r.weights.iter().all(|w| *w > 0.0));
            assert!((r.weights.iter().sum::<f64>() - 1.0 / 6.0).abs() < 1e-14);
            for a in 0..=deg {
                for b in 0..=deg - a {
                    for c in 0..=deg - a - b {
                        let q: f64 = r
                            .points
                            .iter()
                            .zip(&r.weights)
                            .map(|(p, w)| w * p[0].powi(a as i32) * p[1].powi(b as i32) * p[2].powi(c as i32))
                            .sum();
                        let exact = factorial(a) * factorial(b) * factorial(c) / factorial(a + b + c + 3);
                        assert!((q - exact).abs() < 1e-13, "deg {deg} {a}{b}{c}: {q} vs {exact}");
                    }
                }
            }
        }
    }

    #[test]
    fn mesh_quadrature_measures() {
        let mesh = build_voronoi_polygonal_2d::<f64>(40, &BoxDomain::unit(), 0.3, 1).unwrap();
        let q = MeshQuadrature::new(&mesh, 6);
        for c in 0..mesh.n_cells() {
            let m = q.integrate_cell(c, |_| 1.0);
            assert!((m - mesh.cell(c).measure).abs() < 1e-14);
            let xc = q.integrate_cell_vec(c, |x| *x);
            for k in 0..2 {
                assert!((xc[k] / m - mesh.cell(c).barycenter[k]).abs() < 1e-13);
            }
        }
        let mesh3 = build_cartesian::<f64>(3, &[2, 1, 1], &BoxDomain::unit()).unwrap();
        let q3 = MeshQuadrature::new(&mesh3, 6);
        for f in 0..mesh3.n_faces() {
            assert!((q3.integrate_face(f, |_| 1.0) - mesh3.face(f).measure).abs() < 1e-14);
        }
        for c in 0..mesh3.n_cells() {
            assert!((q3.integrate_cell(c, |x| x[0] * x[1] * x[2]) - mesh3.cell(c).measure * mesh3.cell(c).barycenter[0] * 0.25).abs() < 1e-14);
        }
    }
}
