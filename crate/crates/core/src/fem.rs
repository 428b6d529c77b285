//! Piecewise-linear finite elements on planar convex domains.
//!
//! Meshes are concentric rings of the unit disc mapped by `(x, y) -> (a x, b y)`, so boundary
//! vertices lie on the chart. Integrals over the domain add the curved slivers between the
//! boundary chords and the boundary arc, on which the adjacent element is extended linearly.

use std::collections::HashMap;
use std::f64::consts::{FRAC_PI_2, TAU};
use std::sync::Arc;

use faer::sparse::linalg::solvers::{Llt, SymbolicLlt};
use faer::sparse::{SparseColMat, Triplet};
use faer::prelude::Solve;
use faer::{Mat, Side};

use crate::error::{Error, Result};
use crate::fields::ConvexDomain;
use crate::quad::gauss7;

/// Meshes with `h` at least this coarse are solved by sparse Cholesky; finer ones by PCG.
pub const DIRECT_MIN_H: f64 = 1.0 / 512.0;

/// Refuse meshes with more vertices than this.
pub const MAX_VERTICES: usize = 20_000_000;

const RULE7: [([f64; 3], f64); 7] = [
    ([1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0], 0.225),
    ([0.059_715_871_789_770, 0.470_142_064_105_115, 0.470_142_064_105_115], 0.132_394_152_788_506),
    ([0.470_142_064_105_115, 0.059_715_871_789_770, 0.470_142_064_105_115], 0.132_394_152_788_506),
    ([0.470_142_064_105_115, 0.470_142_064_105_115, 0.059_715_871_789_770], 0.132_394_152_788_506),
    ([0.797_426_985_353_087, 0.101_286_507_323_456, 0.101_286_507_323_456], 0.125_939_180_544_827),
    ([0.101_286_507_323_456, 0.797_426_985_353_087, 0.101_286_507_323_456], 0.125_939_180_544_827),
    ([0.101_286_507_323_456, 0.101_286_507_323_456, 0.797_426_985_353_087], 0.125_939_180_544_827),
];

fn semi_axes(dom: &ConvexDomain) -> (f64, f64) {
    (dom.chart_unchecked(0.0).point[0], dom.chart_unchecked(FRAC_PI_2).point[1])
}

fn cross(u: [f64; 2], v: [f64; 2]) -> f64 {
    u[0] * v[1] - u[1] * v[0]
}

fn sub(u: [f64; 2], v: [f64; 2]) -> [f64; 2] {
    [u[0] - v[0], u[1] - v[1]]
}

/// Conforming triangulation with boundary vertices on the chart.
#[derive(Debug)]
pub struct Mesh {
    pub domain: ConvexDomain,
    pub vertices: Vec<[f64; 2]>,
    /// Counter-clockwise vertex triples.
    pub triangles: Vec<[usize; 3]>,
    /// Boundary vertices in chart order.
    pub boundary: Vec<usize>,
    /// Chart parameter of each boundary vertex.
    pub boundary_param: Vec<f64>,
    /// Triangle containing boundary edge `(boundary[k], boundary[k + 1])`.
    pub boundary_edge_triangle: Vec<usize>,
    pub is_boundary: Vec<bool>,
    /// Largest edge length.
    pub h: f64,
    locator: Locator,
}

/// Lower estimate of the vertex count of `Mesh::new(dom, h)`.
pub fn estimated_vertices(dom: &ConvexDomain, h: f64) -> usize {
    let (a, b) = semi_axes(dom);
    let rings = ((1.3 * a.max(b) / h).ceil()).max(2.0);
    (std::f64::consts::PI * rings * rings * 1.1) as usize
}

impl Mesh {
    /// Mesh with largest edge at most `h`.
    pub fn new(dom: &ConvexDomain, h: f64) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidInput(format!("mesh size must be positive, got {h}")));
        }
        let (a, b) = semi_axes(dom);
        let mut rings = ((1.3 * a.max(b) / h).ceil() as usize).max(2);
        for _ in 0..40 {
            let estimate = (std::f64::consts::PI * (rings * rings) as f64 * 1.1) as usize;
            if estimate > MAX_VERTICES {
                return Err(Error::Geometry(format!("mesh with h = {h:.3e} needs about {estimate} vertices (limit {MAX_VERTICES})")));
            }
            let mesh = Self::rings(dom, rings);
            if mesh.h <= h {
                return Ok(mesh);
            }
            rings = ((rings as f64) * 1.1).ceil() as usize;
        }
        Err(Error::Geometry(format!("could not reach mesh size {h}")))
    }

    fn rings(dom: &ConvexDomain, rings: usize) -> Self {
        let (a, b) = semi_axes(dom);
        let mut vertices = vec![[0.0, 0.0]];
        let mut ring_start = vec![0usize];
        let mut ring_len = vec![1usize];
        for j in 1..=rings {
            let r = j as f64 / rings as f64;
            let n = ((TAU * j as f64).ceil() as usize).max(6);
            ring_start.push(vertices.len());
            ring_len.push(n);
            for k in 0..n {
                let t = TAU * k as f64 / n as f64;
                vertices.push(if j == rings { dom.chart_unchecked(t).point } else { [a * r * t.cos(), b * r * t.sin()] });
            }
        }
        let mut triangles = Vec::new();
        let mut push = |tri: [usize; 3], vs: &[[f64; 2]]| {
            let area = cross(sub(vs[tri[1]], vs[tri[0]]), sub(vs[tri[2]], vs[tri[0]]));
            triangles.push(if area > 0.0 { tri } else { [tri[0], tri[2], tri[1]] });
        };
        for k in 0..ring_len[1] {
            push([0, ring_start[1] + k, ring_start[1] + (k + 1) % ring_len[1]], &vertices);
        }
        for j in 2..=rings {
            let (sa, na) = (ring_start[j - 1], ring_len[j - 1]);
            let (sb, nb) = (ring_start[j], ring_len[j]);
            let (mut i, mut k) = (0usize, 0usize);
            while i < na || k < nb {
                let next_a = (i + 1) as f64 / na as f64;
                let next_b = (k + 1) as f64 / nb as f64;
                let (ai, bk) = (sa + i % na, sb + k % nb);
                if k == nb || (i < na && next_a <= next_b) {
                    push([ai, bk, sa + (i + 1) % na], &vertices);
                    i += 1;
                } else {
                    push([ai, bk, sb + (k + 1) % nb], &vertices);
                    k += 1;
                }
            }
        }
        let (sb, nb) = (ring_start[rings], ring_len[rings]);
        let boundary: Vec<usize> = (sb..sb + nb).collect();
        let boundary_param: Vec<f64> = (0..nb).map(|k| TAU * k as f64 / nb as f64).collect();
        let mut is_boundary = vec![false; vertices.len()];
        boundary.iter().for_each(|&v| is_boundary[v] = true);
        let mut edge_tri = HashMap::new();
        let mut h = 0.0f64;
        for (t, tri) in triangles.iter().enumerate() {
            for e in 0..3 {
                let (p, q) = (tri[e], tri[(e + 1) % 3]);
                h = h.max(sub(vertices[p], vertices[q]).iter().map(|c| c * c).sum::<f64>().sqrt());
                if is_boundary[p] && is_boundary[q] {
                    edge_tri.insert((p.min(q), p.max(q)), t);
                }
            }
        }
        let boundary_edge_triangle = (0..nb)
            .map(|k| {
                let (p, q) = (boundary[k], boundary[(k + 1) % nb]);
                edge_tri[&(p.min(q), p.max(q))]
            })
            .collect();
        let locator = Locator::new(&vertices, &triangles, h);
        Self { domain: dom.clone(), vertices, triangles, boundary, boundary_param, boundary_edge_triangle, is_boundary, h, locator }
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    fn corners(&self, t: usize) -> [[f64; 2]; 3] {
        let tri = self.triangles[t];
        [self.vertices[tri[0]], self.vertices[tri[1]], self.vertices[tri[2]]]
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [p0, p1, p2] = self.corners(t);
        0.5 * cross(sub(p1, p0), sub(p2, p0))
    }

    /// Barycentric coordinates of `x` in triangle `t` (possibly negative).
    pub fn barycentric(&self, t: usize, x: &[f64; 2]) -> [f64; 3] {
        let [p0, p1, p2] = self.corners(t);
        let det = cross(sub(p1, p0), sub(p2, p0));
        let l1 = cross(sub(*x, p0), sub(p2, p0)) / det;
        let l2 = cross(sub(p1, p0), sub(*x, p0)) / det;
        [1.0 - l1 - l2, l1, l2]
    }

    /// Containing triangle, or the triangle to extend linearly for points just outside.
    pub fn locate(&self, x: &[f64; 2]) -> (usize, [f64; 3]) {
        self.locator.locate(self, x)
    }

    /// Polygon area.
    pub fn polygon_area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.triangle_area(t)).sum()
    }

    /// `int_Omega f` over the curved domain; `f(triangle, barycentric, x)`. Each triangle is
    /// split into `4^refine` pieces carrying a seven-point degree-5 rule.
    pub fn integrate<F: FnMut(usize, [f64; 3], [f64; 2]) -> f64>(&self, mut f: F, refine: u32) -> f64 {
        let pieces = subdivide(refine);
        let scale = 1.0 / pieces.len() as f64;
        let mut total = 0.0;
        for t in 0..self.triangles.len() {
            let area = self.triangle_area(t);
            let [p0, p1, p2] = self.corners(t);
            for piece in &pieces {
                for (l, w) in RULE7 {
                    let mut lam = [0.0; 3];
                    for (c, lc) in lam.iter_mut().enumerate() {
                        *lc = l[0] * piece[0][c] + l[1] * piece[1][c] + l[2] * piece[2][c];
                    }
                    let x = [
                        lam[0] * p0[0] + lam[1] * p1[0] + lam[2] * p2[0],
                        lam[0] * p0[1] + lam[1] * p1[1] + lam[2] * p2[1],
                    ];
                    total += w * area * scale * f(t, lam, x);
                }
            }
        }
        let g = gauss7();
        let nb = self.boundary.len();
        let splits = 1usize << refine;
        for k in 0..nb {
            let (v0, v1) = (self.vertices[self.boundary[k]], self.vertices[self.boundary[(k + 1) % nb]]);
            let s0 = self.boundary_param[k];
            let s1 = if k + 1 == nb { TAU } else { self.boundary_param[k + 1] };
            let t = self.boundary_edge_triangle[k];
            let dc = [(v1[0] - v0[0]) / (s1 - s0), (v1[1] - v0[1]) / (s1 - s0)];
            for part in 0..splits {
                let lo = s0 + (s1 - s0) * part as f64 / splits as f64;
                let hi = s0 + (s1 - s0) * (part + 1) as f64 / splits as f64;
                for &(xs, ws) in &g {
                    let sigma = 0.5 * (lo + hi) + 0.5 * (hi - lo) * xs;
                    let arc = self.domain.chart_unchecked(sigma).point;
                    let (sn, cs) = sigma.sin_cos();
                    let (a, b) = semi_axes(&self.domain);
                    let darc = [-a * sn, b * cs];
                    let chord = [v0[0] + dc[0] * (sigma - s0), v0[1] + dc[1] * (sigma - s0)];
                    for &(xl, wl) in &g {
                        let lam = 0.5 * (1.0 + xl);
                        let x = [chord[0] + lam * (arc[0] - chord[0]), chord[1] + lam * (arc[1] - chord[1])];
                        let ds = [(1.0 - lam) * dc[0] + lam * darc[0], (1.0 - lam) * dc[1] + lam * darc[1]];
                        let jac = cross(ds, sub(arc, chord)).abs();
                        total += 0.25 * (hi - lo) * ws * wl * jac * f(t, self.barycentric(t, &x), x);
                    }
                }
            }
        }
        total
    }
}

fn subdivide(refine: u32) -> Vec<[[f64; 3]; 3]> {
    let mut tris = vec![[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]];
    for _ in 0..refine {
        let mid = |u: [f64; 3], v: [f64; 3]| [0.5 * (u[0] + v[0]), 0.5 * (u[1] + v[1]), 0.5 * (u[2] + v[2])];
        tris = tris
            .into_iter()
            .flat_map(|[a, b, c]| {
                let (ab, bc, ca) = (mid(a, b), mid(b, c), mid(c, a));
                [[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]]
            })
            .collect();
    }
    tris
}

#[derive(Debug)]
struct Locator {
    origin: [f64; 2],
    cell: f64,
    dims: [usize; 2],
    buckets: Vec<Vec<u32>>,
}

impl Locator {
    fn new(vertices: &[[f64; 2]], triangles: &[[usize; 3]], h: f64) -> Self {
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for v in vertices {
            for c in 0..2 {
                lo[c] = lo[c].min(v[c]);
                hi[c] = hi[c].max(v[c]);
            }
        }
        let span = (hi[0] - lo[0]).max(hi[1] - lo[1]);
        let cell = (2.0 * h).max(span / 4096.0);
        let dims = [((hi[0] - lo[0]) / cell) as usize + 1, ((hi[1] - lo[1]) / cell) as usize + 1];
        let mut buckets = vec![Vec::new(); dims[0] * dims[1]];
        for (t, tri) in triangles.iter().enumerate() {
            let xs = tri.map(|v| vertices[v]);
            let i0 = ((xs.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min) - lo[0]) / cell) as usize;
            let i1 = ((xs.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max) - lo[0]) / cell) as usize;
            let j0 = ((xs.iter().map(|p| p[1]).fold(f64::INFINITY, f64::min) - lo[1]) / cell) as usize;
            let j1 = ((xs.iter().map(|p| p[1]).fold(f64::NEG_INFINITY, f64::max) - lo[1]) / cell) as usize;
            for i in i0..=i1.min(dims[0] - 1) {
                for j in j0..=j1.min(dims[1] - 1) {
                    buckets[i * dims[1] + j].push(t as u32);
                }
            }
        }
        Self { origin: lo, cell, dims, buckets }
    }

    fn locate(&self, mesh: &Mesh, x: &[f64; 2]) -> (usize, [f64; 3]) {
        let ci = |c: usize| (((x[c] - self.origin[c]) / self.cell).floor().max(0.0) as usize).min(self.dims[c] - 1);
        let (i, j) = (ci(0), ci(1));
        let mut best = (usize::MAX, [f64::NEG_INFINITY; 3]);
        for radius in 0..=2usize {
            for di in i.saturating_sub(radius)..=(i + radius).min(self.dims[0] - 1) {
                for dj in j.saturating_sub(radius)..=(j + radius).min(self.dims[1] - 1) {
                    if di.abs_diff(i).max(dj.abs_diff(j)) != radius {
                        continue;
                    }
                    for &t in &self.buckets[di * self.dims[1] + dj] {
                        let l = mesh.barycentric(t as usize, x);
                        let m = l[0].min(l[1]).min(l[2]);
                        if m >= -1e-12 {
                            return (t as usize, l);
                        }
                        if best.0 == usize::MAX || m > best.1[0].min(best.1[1]).min(best.1[2]) {
                            best = (t as usize, l);
                        }
                    }
                }
            }
        }
        if best.0 == usize::MAX {
            // far outside: nearest boundary element
            let nb = mesh.boundary.len();
            let k = ((mesh.domain.closest_param(x) / TAU) * nb as f64) as usize % nb;
            let t = mesh.boundary_edge_triangle[k];
            return (t, mesh.barycentric(t, x));
        }
        best
    }
}

/// Nodal P1 solution on a mesh.
#[derive(Clone, Debug)]
pub struct DiscreteSolution {
    pub mesh: Arc<Mesh>,
    pub values: Vec<f64>,
    pub h: f64,
    pub iterations: usize,
    /// `||b - A x|| / ||b||` of the reduced system.
    pub residual: f64,
    pub direct: bool,
}

impl DiscreteSolution {
    pub fn value_in(&self, t: usize, lam: &[f64; 3]) -> f64 {
        let tri = self.mesh.triangles[t];
        lam[0] * self.values[tri[0]] + lam[1] * self.values[tri[1]] + lam[2] * self.values[tri[2]]
    }

    pub fn evaluate(&self, x: &[f64; 2]) -> f64 {
        let (t, lam) = self.mesh.locate(x);
        self.value_in(t, &lam)
    }
}

struct Csr {
    ptr: Vec<usize>,
    col: Vec<usize>,
    val: Vec<f64>,
}

impl Csr {
    fn from_triplets(n: usize, mut t: Vec<(usize, usize, f64)>) -> Self {
        t.sort_unstable_by_key(|e| (e.0, e.1));
        let mut ptr = vec![0usize; n + 1];
        let (mut col, mut val): (Vec<usize>, Vec<f64>) = (Vec::with_capacity(t.len()), Vec::with_capacity(t.len()));
        let mut last = (usize::MAX, usize::MAX);
        for (r, c, v) in t {
            if (r, c) == last {
                *val.last_mut().unwrap() += v;
            } else {
                col.push(c);
                val.push(v);
                ptr[r + 1] += 1;
                last = (r, c);
            }
        }
        for r in 0..n {
            ptr[r + 1] += ptr[r];
        }
        Self { ptr, col, val }
    }

    fn mul(&self, x: &[f64], y: &mut [f64]) {
        for (r, yr) in y.iter_mut().enumerate() {
            *yr = (self.ptr[r]..self.ptr[r + 1]).map(|k| self.val[k] * x[self.col[k]]).sum();
        }
    }

    fn diagonal(&self) -> Vec<f64> {
        (0..self.ptr.len() - 1)
            .map(|r| (self.ptr[r]..self.ptr[r + 1]).find(|&k| self.col[k] == r).map(|k| self.val[k]).unwrap_or(1.0))
            .collect()
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn jacobi_pcg(a: &Csr, b: &[f64], tol: f64, max_iter: usize) -> Result<(Vec<f64>, usize)> {
    let n = b.len();
    let dinv: Vec<f64> = a.diagonal().iter().map(|d| 1.0 / d).collect();
    let bn = norm(b);
    let mut x = vec![0.0; n];
    if bn == 0.0 {
        return Ok((x, 0));
    }
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&dinv).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    let mut ap = vec![0.0; n];
    for it in 0..max_iter {
        if norm(&r) / bn <= tol {
            return Ok((x, it));
        }
        a.mul(&p, &mut ap);
        let alpha = rz / p.iter().zip(&ap).map(|(a, b)| a * b).sum::<f64>();
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
            z[i] = r[i] * dinv[i];
        }
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::NoConvergence(format!("PCG: relative residual {:.3e} after {max_iter} iterations", norm(&r) / bn)))
}

/// Solve `-div(C(x) grad u) = 0`, `u = boundary[k]` at `mesh.boundary[k]`.
///
/// `coef(x)` is the row-major symmetric `2 x 2` coefficient, averaged per element over the
/// edge midpoints.
pub fn solve_dirichlet<C: Fn(&[f64; 2]) -> [f64; 4]>(mesh: Arc<Mesh>, coef: C, boundary: &[f64], tol: f64) -> Result<DiscreteSolution> {
    if boundary.len() != mesh.boundary.len() {
        return Err(Error::InvalidInput(format!("{} boundary values for {} boundary vertices", boundary.len(), mesh.boundary.len())));
    }
    let nv = mesh.len();
    let mut index = vec![usize::MAX; nv];
    let mut ni = 0;
    for v in 0..nv {
        if !mesh.is_boundary[v] {
            index[v] = ni;
            ni += 1;
        }
    }
    let mut values = vec![0.0; nv];
    for (&v, &g) in mesh.boundary.iter().zip(boundary) {
        values[v] = g;
    }
    let mut trip = Vec::with_capacity(9 * mesh.triangles.len());
    let mut rhs = vec![0.0; ni];
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let p = tri.map(|v| mesh.vertices[v]);
        let area = mesh.triangle_area(t);
        let mut c = [0.0; 4];
        for e in 0..3 {
            let m = [0.5 * (p[e][0] + p[(e + 1) % 3][0]), 0.5 * (p[e][1] + p[(e + 1) % 3][1])];
            let ce = coef(&m);
            for (ci, v) in c.iter_mut().zip(ce) {
                *ci += v / 3.0;
            }
        }
        if (c[1] - c[2]).abs() > 1e-12 * (c[0].abs() + c[3].abs()) {
            return Err(Error::InvalidInput("finite element solver needs symmetric coefficients".into()));
        }
        let grad: Vec<[f64; 2]> =
            (0..3).map(|i| [(p[(i + 1) % 3][1] - p[(i + 2) % 3][1]) / (2.0 * area), (p[(i + 2) % 3][0] - p[(i + 1) % 3][0]) / (2.0 * area)]).collect();
        for i in 0..3 {
            let ri = index[tri[i]];
            if ri == usize::MAX {
                continue;
            }
            for j in 0..3 {
                let cg = [c[0] * grad[j][0] + c[1] * grad[j][1], c[2] * grad[j][0] + c[3] * grad[j][1]];
                let k = area * (grad[i][0] * cg[0] + grad[i][1] * cg[1]);
                let rj = index[tri[j]];
                if rj == usize::MAX {
                    rhs[ri] -= k * values[tri[j]];
                } else {
                    trip.push((ri, rj, k));
                }
            }
        }
    }
    let direct = mesh.h >= DIRECT_MIN_H;
    let (x, iterations) = if ni == 0 {
        (Vec::new(), 0)
    } else if direct {
        let t: Vec<Triplet<usize, usize, f64>> = trip.iter().filter(|e| e.0 >= e.1).map(|&(r, c, v)| Triplet::new(r, c, v)).collect();
        let mat = SparseColMat::<usize, f64>::try_new_from_triplets(ni, ni, &t).map_err(|e| Error::Geometry(format!("sparse assembly: {e:?}")))?;
        let symbolic = SymbolicLlt::try_new(mat.symbolic(), Side::Lower).map_err(|e| Error::NoConvergence(format!("symbolic Cholesky: {e:?}")))?;
        let llt = Llt::try_new_with_symbolic(symbolic, mat.as_ref(), Side::Lower).map_err(|e| Error::NoConvergence(format!("Cholesky: {e:?}")))?;
        let b = Mat::<f64>::from_fn(ni, 1, |i, _| rhs[i]);
        let sol = llt.solve(&b);
        ((0..ni).map(|i| sol[(i, 0)]).collect(), 0)
    } else {
        let csr = Csr::from_triplets(ni, trip.clone());
        jacobi_pcg(&csr, &rhs, tol, 20 * ni.max(100))?
    };
    let csr = Csr::from_triplets(ni, trip);
    let mut ax = vec![0.0; ni];
    csr.mul(&x, &mut ax);
    let rn = norm(&rhs);
    let residual = norm(&ax.iter().zip(&rhs).map(|(a, b)| b - a).collect::<Vec<_>>()) / if rn > 0.0 { rn } else { 1.0 };
    if residual > tol.max(1e-9) {
        return Err(Error::NoConvergence(format!("finite element residual {residual:.3e} above tolerance {tol:.1e}")));
    }
    for v in 0..nv {
        if index[v] != usize::MAX {
            values[v] = x[index[v]];
        }
    }
    let h = mesh.h;
    Ok(DiscreteSolution { mesh, values, h, iterations, residual, direct })
}

/// `int_Omega |u1 - u2|^q` on the finer mesh, the coarser solution interpolated to its
/// vertices; `q >= 2`.
pub fn error_norm(u1: &DiscreteSolution, u2: &DiscreteSolution, q: f64, refine: u32) -> Result<f64> {
    if !(q >= 2.0) || !q.is_finite() {
        return Err(Error::InvalidInput(format!("exponent q must lie in [2, inf), got {q}")));
    }
    if u1.mesh.domain != u2.mesh.domain {
        return Err(Error::InvalidInput("solutions live on different domains".into()));
    }
    let (fine, coarse) = if u1.mesh.triangles.len() >= u2.mesh.triangles.len() { (u1, u2) } else { (u2, u1) };
    let other: Vec<f64> = if Arc::ptr_eq(&fine.mesh, &coarse.mesh) {
        coarse.values.clone()
    } else {
        fine.mesh.vertices.iter().map(|x| coarse.evaluate(x)).collect()
    };
    let diff: Vec<f64> = fine.values.iter().zip(&other).map(|(a, b)| a - b).collect();
    let mesh = &fine.mesh;
    Ok(mesh.integrate(
        |t, lam, _| {
            let tri = mesh.triangles[t];
            (lam[0] * diff[tri[0]] + lam[1] * diff[tri[1]] + lam[2] * diff[tri[2]]).abs().powf(q)
        },
        refine,
    ))
}

/// `int_Omega |u - f|^q` against a closed-form function.
pub fn error_against<F: Fn(&[f64; 2]) -> f64>(u: &DiscreteSolution, f: F, q: f64, refine: u32) -> Result<f64> {
    if !(q >= 2.0) || !q.is_finite() {
        return Err(Error::InvalidInput(format!("exponent q must lie in [2, inf), got {q}")));
    }
    Ok(u.mesh.integrate(|t, lam, x| (u.value_in(t, &lam) - f(&x)).abs().powf(q), refine))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity(_: &[f64; 2]) -> [f64; 4] {
        [1.0, 0.0, 0.0, 1.0]
    }

    #[test]
    fn mesh_is_conforming_and_fitted() {
        let dom = ConvexDomain::ellipse(1.0, 0.7).unwrap();
        let m = Mesh::new(&dom, 0.1).unwrap();
        assert!(m.h <= 0.1);
        assert!((0..m.triangles.len()).all(|t| m.triangle_area(t) > 0.0));
        for &v in &m.boundary {
            assert!((dom.level(&m.vertices[v]) - 1.0).abs() < 1e-12);
        }
        // every interior edge is shared by exactly two triangles
        let mut count: HashMap<(usize, usize), usize> = HashMap::new();
        for tri in &m.triangles {
            for e in 0..3 {
                let (p, q) = (tri[e], tri[(e + 1) % 3]);
                *count.entry((p.min(q), p.max(q))).or_default() += 1;
            }
        }
        let boundary_edges = count.values().filter(|&&c| c == 1).count();
        assert_eq!(boundary_edges, m.boundary.len());
        assert!(count.values().all(|&c| c <= 2));
        let euler = m.len() as i64 - count.len() as i64 + m.triangles.len() as i64;
        assert_eq!(euler, 1);
    }

    #[test]
    fn integration_is_exact_on_the_curved_domain() {
        let r = 1.0 / std::f64::consts::PI.sqrt();
        let dom = ConvexDomain::ellipse(r, r).unwrap();
        let m = Mesh::new(&dom, 0.05).unwrap();
        let area = m.integrate(|_, _, _| 1.0, 0);
        assert!((area - 1.0).abs() < 1e-10, "{area}");
        let dom = ConvexDomain::ellipse(1.0, 0.6).unwrap();
        let m = Mesh::new(&dom, 0.08).unwrap();
        let second = m.integrate(|_, _, x| x[0] * x[0], 1);
        assert!((second - std::f64::consts::PI * 0.6 / 4.0).abs() < 1e-9);
    }

    #[test]
    fn linear_data_reproduced() {
        let dom = ConvexDomain::unit_disc();
        let m = Arc::new(Mesh::new(&dom, 0.1).unwrap());
        let g: Vec<f64> = m.boundary.iter().map(|&v| 0.3 + m.vertices[v][0] - 2.0 * m.vertices[v][1]).collect();
        let u = solve_dirichlet(m, identity, &g, 1e-12).unwrap();
        assert!(u.direct);
        let err = error_against(&u, |x| 0.3 + x[0] - 2.0 * x[1], 2.0, 0).unwrap();
        assert!(err < 1e-20, "{err}");
    }

    #[test]
    fn harmonic_quadratic_converges_at_second_order() {
        let dom = ConvexDomain::unit_disc();
        let exact = |x: &[f64; 2]| x[0] * x[0] - x[1] * x[1];
        let errs: Vec<f64> = [0.1, 0.05]
            .iter()
            .map(|&h| {
                let m = Arc::new(Mesh::new(&dom, h).unwrap());
                let g: Vec<f64> = m.boundary.iter().map(|&v| exact(&m.vertices[v])).collect();
                let u = solve_dirichlet(m, identity, &g, 1e-12).unwrap();
                error_against(&u, exact, 2.0, 1).unwrap().sqrt() / u.h.powi(2)
            })
            .collect();
        // L2 error / h^2 stays bounded
        assert!(errs[1] < 1.5 * errs[0], "{errs:?}");
    }

    #[test]
    fn iterative_branch_agrees_with_direct() {
        let dom = ConvexDomain::unit_disc();
        let m = Arc::new(Mesh::new(&dom, 0.15).unwrap());
        let g: Vec<f64> = m.boundary_param.iter().map(|s| (3.0 * s).cos()).collect();
        let coef = |x: &[f64; 2]| {
            let c = 2.0 + (7.0 * x[0]).sin();
            [c, 0.1, 0.1, c]
        };
        let u = solve_dirichlet(Arc::clone(&m), coef, &g, 1e-12).unwrap();
        let nv = m.len();
        let mut idx = vec![usize::MAX; nv];
        let mut ni = 0;
        for v in 0..nv {
            if !m.is_boundary[v] {
                idx[v] = ni;
                ni += 1;
            }
        }
        // rebuild the same system and solve with PCG
        let mut trip = Vec::new();
        let mut rhs = vec![0.0; ni];
        for (t, tri) in m.triangles.iter().enumerate() {
            let p = tri.map(|v| m.vertices[v]);
            let area = m.triangle_area(t);
            let mut c = [0.0; 4];
            for e in 0..3 {
                let mid = [0.5 * (p[e][0] + p[(e + 1) % 3][0]), 0.5 * (p[e][1] + p[(e + 1) % 3][1])];
                for (ci, v) in c.iter_mut().zip(coef(&mid)) {
                    *ci += v / 3.0;
                }
            }
            let grad: Vec<[f64; 2]> =
                (0..3).map(|i| [(p[(i + 1) % 3][1] - p[(i + 2) % 3][1]) / (2.0 * area), (p[(i + 2) % 3][0] - p[(i + 1) % 3][0]) / (2.0 * area)]).collect();
            for i in 0..3 {
                if idx[tri[i]] == usize::MAX {
                    continue;
                }
                for j in 0..3 {
                    let k = area * (grad[i][0] * (c[0] * grad[j][0] + c[1] * grad[j][1]) + grad[i][1] * (c[2] * grad[j][0] + c[3] * grad[j][1]));
                    if idx[tri[j]] == usize::MAX {
                        rhs[idx[tri[i]]] -= k * u.values[tri[j]];
                    } else {
                        trip.push((idx[tri[i]], idx[tri[j]], k));
                    }
                }
            }
        }
        let (x, _) = jacobi_pcg(&Csr::from_triplets(ni, trip), &rhs, 1e-12, 100_000).unwrap();
        for v in 0..nv {
            if idx[v] != usize::MAX {
                assert!((x[idx[v]] - u.values[v]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn error_norm_properties() {
        let dom = ConvexDomain::unit_disc();
        let m1 = Arc::new(Mesh::new(&dom, 0.1).unwrap());
        let m2 = Arc::new(Mesh::new(&dom, 0.05).unwrap());
        let f = |x: &[f64; 2]| (2.0 * x[0]).sin() + x[1] * x[1];
        let mk = |m: &Arc<Mesh>, shift: f64| {
            let g: Vec<f64> = m.boundary.iter().map(|&v| f(&m.vertices[v]) + shift).collect();
            solve_dirichlet(Arc::clone(m), identity, &g, 1e-12).unwrap()
        };
        let u1 = mk(&m1, 0.0);
        assert_eq!(error_norm(&u1, &u1, 2.0, 0).unwrap(), 0.0);
        let shifted = mk(&m1, 0.5);
        let e = error_norm(&u1, &shifted, 3.0, 0).unwrap();
        assert!((e - 0.125 * std::f64::consts::PI).abs() < 1e-9, "{e}");
        let u2 = mk(&m2, 0.0);
        let coarse = error_norm(&u1, &u2, 2.0, 0).unwrap();
        let fine = error_norm(&u1, &u2, 2.0, 2).unwrap();
        assert!((coarse - fine).abs() < 1e-6 * coarse.max(1e-12) + 1e-12, "{coarse} vs {fine}");
        assert!(error_norm(&u1, &u2, 1.5, 0).is_err());
    }

    #[test]
    fn maximum_principle() {
        let dom = ConvexDomain::ellipse(1.0, 0.8).unwrap();
        let m = Arc::new(Mesh::new(&dom, 0.05).unwrap());
        let g: Vec<f64> = m.boundary_param.iter().map(|s| (5.0 * s).cos()).collect();
        let coef = |x: &[f64; 2]| {
            let c = 1.5 + (40.0 * x[0]).cos() * (40.0 * x[1]).cos();
            [c, 0.0, 0.0, c]
        };
        let u = solve_dirichlet(m, coef, &g, 1e-12).unwrap();
        assert!(u.values.iter().all(|v| (-1.0 - 1e-8..=1.0 + 1e-8).contains(v)));
    }
}
