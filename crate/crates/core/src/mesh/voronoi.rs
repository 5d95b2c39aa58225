use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{compute_geometry, BoxDomain, FaceIncidence, MeshTopology, PolytopalMesh};
use crate::{Error, Real, Result};

const MAX_ATTEMPTS: usize = 10;

/// Voronoi mesh of a jittered lattice of `n_seeds` sites, clipped to `box_`.
///
/// The lattice has `nx = ceil(sqrt(n))` columns and `ceil(n / nx)` rows; the first
/// `n_seeds` lattice sites (row-major) are kept. Each site is shifted by a uniform
/// offset in `[-jitter, jitter]` times the lattice spacing. The output is
/// bit-identical for a fixed `rng_seed`.
pub fn build_voronoi_polygonal_2d<T: Real>(
    n_seeds: usize,
    box_: &BoxDomain<T>,
    jitter: f64,
    rng_seed: u64,
) -> Result<PolytopalMesh<T>> {
    if n_seeds < 4 {
        return Err(Error::invalid(format!("need at least 4 seeds, got {n_seeds}")));
    }
    if !(0.0..0.5).contains(&jitter) {
        return Err(Error::invalid(format!("jitter must lie in [0, 0.5), got {jitter}")));
    }
    box_.check(2)?;
    let lo = [box_.lo[0].as_f64(), box_.lo[1].as_f64()];
    let hi = [box_.hi[0].as_f64(), box_.hi[1].as_f64()];

    let nx = (n_seeds as f64).sqrt().ceil() as usize;
    let ny = n_seeds.div_ceil(nx);
    let hx = (hi[0] - lo[0]) / nx as f64;
    let hy = (hi[1] - lo[1]) / ny as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut sites: Vec<[f64; 2]> = (0..n_seeds)
        .map(|k| {
            let (i, j) = (k % nx, k / nx);
            let mut dx = 0.0;
            let mut dy = 0.0;
            if jitter > 0.0 {
                dx = rng.gen_range(-jitter..=jitter);
                dy = rng.gen_range(-jitter..=jitter);
            }
            [lo[0] + (i as f64 + 0.5 + dx) * hx, lo[1] + (j as f64 + 0.5 + dy) * hy]
        })
        .collect();

    let grid = BucketGrid::new(lo, hi, nx, ny);
    let min_sep = 1e-9 * hx.min(hy);
    let mut attempt = 0;
    loop {
        let dupes = grid.duplicates(&sites, min_sep);
        if dupes.is_empty() {
            break;
        }
        attempt += 1;
        if attempt >= MAX_ATTEMPTS {
            return Err(Error::invalid(format!(
                "duplicate Voronoi seeds persist after {MAX_ATTEMPTS} attempts"
            )));
        }
        log::debug!("perturbing {} duplicate seeds (attempt {attempt})", dupes.len());
        for k in dupes {
            let s = &mut sites[k];
            s[0] = (s[0] + rng.gen_range(-1e-6..1e-6) * hx).clamp(lo[0], hi[0]);
            s[1] = (s[1] + rng.gen_range(-1e-6..1e-6) * hy).clamp(lo[1], hi[1]);
        }
    }

    let buckets = grid.fill(&sites);
    let polygons: Vec<Vec<[f64; 2]>> =
        (0..sites.len()).map(|i| voronoi_cell(i, &sites, &grid, &buckets, lo, hi)).collect();

    let topo = assemble(polygons, (hi[0] - lo[0]).max(hi[1] - lo[1]))?;
    compute_geometry(MeshTopology {
        dim: 2,
        vertices: topo.0.iter().map(|v| [T::of(v[0]), T::of(v[1]), T::zero()]).collect(),
        faces: topo.1,
        cells: topo.2,
    })
}

struct BucketGrid {
    lo: [f64; 2],
    size: [f64; 2],
    n: [usize; 2],
}

impl BucketGrid {
    fn new(lo: [f64; 2], hi: [f64; 2], nx: usize, ny: usize) -> Self {
        Self { lo, size: [(hi[0] - lo[0]) / nx as f64, (hi[1] - lo[1]) / ny as f64], n: [nx, ny] }
    }

    fn index(&self, p: &[f64; 2]) -> (usize, usize) {
        let i = (((p[0] - self.lo[0]) / self.size[0]).floor().max(0.0) as usize).min(self.n[0] - 1);
        let j = (((p[1] - self.lo[1]) / self.size[1]).floor().max(0.0) as usize).min(self.n[1] - 1);
        (i, j)
    }

    fn fill(&self, sites: &[[f64; 2]]) -> Vec<Vec<usize>> {
        let mut b = vec![Vec::new(); self.n[0] * self.n[1]];
        for (k, s) in sites.iter().enumerate() {
            let (i, j) = self.index(s);
            b[i + self.n[0] * j].push(k);
        }
        b
    }

    /// Indices of sites closer than `tol` to an earlier site.
    fn duplicates(&self, sites: &[[f64; 2]], tol: f64) -> Vec<usize> {
        let buckets = self.fill(sites);
        let mut out = Vec::new();
        for (k, s) in sites.iter().enumerate() {
            let (i, j) = self.index(s);
            'search: for bj in j.saturating_sub(1)..=(j + 1).min(self.n[1] - 1) {
                for bi in i.saturating_sub(1)..=(i + 1).min(self.n[0] - 1) {
                    for &m in &buckets[bi + self.n[0] * bj] {
                        if m < k && (sites[m][0] - s[0]).hypot(sites[m][1] - s[1]) < tol {
                            out.push(k);
                            break 'search;
                        }
                    }
                }
            }
        }
        out
    }
}

/// Clips the box by the bisectors of site `i` with its neighbours, visiting bucket
/// rings outward until no farther site can cut the current polygon.
fn voronoi_cell(
    i: usize,
    sites: &[[f64; 2]],
    grid: &BucketGrid,
    buckets: &[Vec<usize>],
    lo: [f64; 2],
    hi: [f64; 2],
) -> Vec<[f64; 2]> {
    let s = sites[i];
    let mut poly = vec![[lo[0], lo[1]], [hi[0], lo[1]], [hi[0], hi[1]], [lo[0], hi[1]]];
    let (ci, cj) = grid.index(&s);
    let ring_width = grid.size[0].min(grid.size[1]);
    let max_ring = grid.n[0].max(grid.n[1]);
    let mut r = 0usize;
    loop {
        for (bi, bj) in ring(ci, cj, r, grid.n) {
            for &m in &buckets[bi + grid.n[0] * bj] {
                if m != i {
                    poly = clip(&poly, &s, &sites[m]);
                }
            }
        }
        let reach = poly.iter().map(|p| (p[0] - s[0]).hypot(p[1] - s[1])).fold(0.0, f64::max);
        // Sites beyond ring r lie at least r * ring_width away.
        if r >= max_ring || (r as f64) * ring_width > 2.0 * reach {
            break;
        }
        r += 1;
    }
    poly
}

fn ring(ci: usize, cj: usize, r: usize, n: [usize; 2]) -> Vec<(usize, usize)> {
    let (ci, cj, r) = (ci as isize, cj as isize, r as isize);
    let mut out = Vec::new();
    for dj in -r..=r {
        for di in -r..=r {
            if di.abs() != r && dj.abs() != r {
                continue;
            }
            let (i, j) = (ci + di, cj + dj);
            if i >= 0 && j >= 0 && (i as usize) < n[0] && (j as usize) < n[1] {
                out.push((i as usize, j as usize));
            }
        }
    }
    out
}

/// Keeps the part of `poly` closer to `s` than to `t`.
fn clip(poly: &[[f64; 2]], s: &[f64; 2], t: &[f64; 2]) -> Vec<[f64; 2]> {
    let m = [(s[0] + t[0]) * 0.5, (s[1] + t[1]) * 0.5];
    let d = [t[0] - s[0], t[1] - s[1]];
    let side = |p: &[f64; 2]| (p[0] - m[0]) * d[0] + (p[1] - m[1]) * d[1];
    if poly.iter().all(|p| side(p) <= 0.0) {
        return poly.to_vec();
    }
    let mut out = Vec::with_capacity(poly.len() + 1);
    for k in 0..poly.len() {
        let (a, b) = (poly[k], poly[(k + 1) % poly.len()]);
        let (sa, sb) = (side(&a), side(&b));
        if sa <= 0.0 {
            out.push(a);
        }
        if (sa < 0.0 && sb > 0.0) || (sa > 0.0 && sb < 0.0) {
            let w = sa / (sa - sb);
            out.push([a[0] + w * (b[0] - a[0]), a[1] + w * (b[1] - a[1])]);
        }
    }
    out
}

type Assembled = (Vec<[f64; 2]>, Vec<Vec<usize>>, Vec<Vec<FaceIncidence>>);

/// Merges polygon vertices globally and builds shared edges.
fn assemble(polygons: Vec<Vec<[f64; 2]>>, scale: f64) -> Result<Assembled> {
    let tol = 1e-10 * scale;
    let key = |p: &[f64; 2]| ((p[0] / tol).round() as i64, (p[1] / tol).round() as i64);
    let mut lookup: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    let mut vertices: Vec<[f64; 2]> = Vec::new();
    let mut vertex_id = |p: &[f64; 2]| -> usize {
        let (kx, ky) = key(p);
        for dy in -1..=1 {
            for dx in -1..=1 {
                if let Some(ids) = lookup.get(&(kx + dx, ky + dy)) {
                    for &id in ids {
                        let q = vertices[id];
                        if (q[0] - p[0]).abs() <= tol && (q[1] - p[1]).abs() <= tol {
                            return id;
                        }
                    }
                }
            }
        }
        vertices.push(*p);
        let id = vertices.len() - 1;
        lookup.entry((kx, ky)).or_default().push(id);
        id
    };

    let mut faces: Vec<Vec<usize>> = Vec::new();
    let mut face_of: HashMap<(usize, usize), usize> = HashMap::new();
    let mut cells = Vec::with_capacity(polygons.len());
    for (c, poly) in polygons.iter().enumerate() {
        let mut loop_: Vec<usize> = poly.iter().map(&mut vertex_id).collect();
        loop_.dedup();
        while loop_.len() > 1 && loop_.first() == loop_.last() {
            loop_.pop();
        }
        if loop_.len() < 3 {
            return Err(Error::Validation(format!("Voronoi cell {c} collapsed")));
        }
        let mut incs = Vec::with_capacity(loop_.len());
        for k in 0..loop_.len() {
            let (a, b) = (loop_[k], loop_[(k + 1) % loop_.len()]);
            let key = (a.min(b), a.max(b));
            let face = *face_of.entry(key).or_insert_with(|| {
                faces.push(vec![a, b]);
                faces.len() - 1
            });
            // Counter-clockwise traversal: (dy, -dx) of a -> b points outward.
            let sign = if faces[face][0] == a { 1 } else { -1 };
            incs.push(FaceIncidence { face, sign });
        }
        cells.push(incs);
    }
    Ok((vertices, faces, cells))
}
