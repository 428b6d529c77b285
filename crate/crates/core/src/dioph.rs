//! Diophantine constants of unit directions and the associated rotation frames.
//!
//! `A(n)` is estimated as `min |(I - n (x) n) xi| |xi|^kappa` over the lattice box
//! `0 < |xi|_inf <= Xi`, clamped to `[0, 1]`. The minimum is exact over the box: the
//! search fixes all coordinates but one and solves the quadratic inequality in the
//! remaining coordinate, so only candidates that can beat the running minimum are
//! evaluated.

use crate::error::{Error, Result};
use crate::fields::ConvexDomain;
use crate::scalar::Scalar;

/// Default Diophantine exponent for dimension `d`.
pub fn default_kappa(dim: usize) -> f64 {
    if dim == 2 { 1.5 } else { 1.0 }
}

/// A unit direction with its truncated Diophantine constant.
#[derive(Clone, Debug, PartialEq)]
pub struct Direction<T: Scalar> {
    pub n: Vec<T>,
    pub kappa: T,
    pub a_lb: T,
    pub xi: usize,
}

impl<T: Scalar> Direction<T> {
    pub fn dim(&self) -> usize {
        self.n.len()
    }

    pub fn is_rational(&self) -> bool {
        self.a_lb == T::zero()
    }
}

/// Orthogonal `M` with `M e_d = n`; `N` is its first `d - 1` columns.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame<T: Scalar> {
    dim: usize,
    /// Row-major `d x d`.
    m: Vec<T>,
}

impl<T: Scalar> Frame<T> {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Row-major entries of `M`.
    pub fn m(&self) -> &[T] {
        &self.m
    }

    #[inline]
    pub fn m_entry(&self, row: usize, col: usize) -> T {
        self.m[row * self.dim + col]
    }

    /// Last column of `M`.
    pub fn normal(&self) -> Vec<T> {
        (0..self.dim).map(|r| self.m_entry(r, self.dim - 1)).collect()
    }

    /// `N z` for `z` in `R^{d-1}`.
    pub fn n_apply(&self, z: &[T]) -> Vec<T> {
        (0..self.dim)
            .map(|r| z.iter().enumerate().fold(T::zero(), |s, (c, &v)| s + self.m_entry(r, c) * v))
            .collect()
    }

    /// `N^T x` for `x` in `R^d`.
    pub fn nt_apply(&self, x: &[T]) -> Vec<T> {
        (0..self.dim - 1)
            .map(|c| x.iter().enumerate().fold(T::zero(), |s, (r, &v)| s + self.m_entry(r, c) * v))
            .collect()
    }

    /// `N^T xi` for an integer lattice vector.
    pub fn nt_lattice(&self, xi: &[i64]) -> Vec<T> {
        let x: Vec<T> = xi.iter().map(|&k| T::of_i64(k)).collect();
        self.nt_apply(&x)
    }

    /// `M^T x`.
    pub fn mt_apply(&self, x: &[T]) -> Vec<T> {
        (0..self.dim)
            .map(|c| x.iter().enumerate().fold(T::zero(), |s, (r, &v)| s + self.m_entry(r, c) * v))
            .collect()
    }

    /// Largest entry of `|M^T M - I|`.
    /// Frame from an explicit row-major orthogonal `d x d` matrix.
    pub fn from_matrix(dim: usize, m: Vec<T>) -> Result<Self> {
        if dim < 2 || m.len() != dim * dim {
            return Err(Error::InvalidInput(format!("frame needs a {dim} x {dim} matrix, got {} entries", m.len())));
        }
        let frame = Self { dim, m };
        let defect = frame.orthogonality_defect();
        if !(defect.f64() <= 1e-10f64.max(64.0 * T::epsilon().f64())) {
            return Err(Error::InvalidInput(format!("frame matrix is not orthogonal (defect {defect:?})")));
        }
        Ok(frame)
    }

    pub fn orthogonality_defect(&self) -> T {
        let d = self.dim;
        let mut worst = T::zero();
        for i in 0..d {
            for j in 0..d {
                let dot = (0..d).fold(T::zero(), |s, r| s + self.m_entry(r, i) * self.m_entry(r, j));
                let target = if i == j { T::one() } else { T::zero() };
                worst = worst.max((dot - target).abs());
            }
        }
        worst
    }
}

fn check_unit<T: Scalar>(n: &[T]) -> Result<()> {
    if n.len() < 2 {
        return Err(Error::InvalidInput(format!("direction must have dimension >= 2, got {}", n.len())));
    }
    let norm = n.iter().fold(T::zero(), |s, &v| s + v * v).sqrt();
    let tol = 1e-10f64.max(64.0 * T::epsilon().f64());
    if !norm.is_finite() || (norm - T::one()).abs().f64() > tol {
        return Err(Error::InvalidInput(format!("direction is not a unit vector (|n| = {norm})")));
    }
    Ok(())
}

/// Normalize a nonzero vector.
pub fn unit<T: Scalar>(v: &[T]) -> Result<Vec<T>> {
    let norm = v.iter().fold(T::zero(), |s, &x| s + x * x).sqrt();
    if norm == T::zero() || !norm.is_finite() {
        return Err(Error::InvalidInput("cannot normalize a zero or non-finite vector".into()));
    }
    Ok(v.iter().map(|&x| x / norm).collect())
}

/// Householder frame: reflect about `e_d + n` when `n_d >= 0`, about `e_d - n` otherwise.
pub fn build_frame<T: Scalar>(n: &[T]) -> Result<Frame<T>> {
    check_unit(n)?;
    let d = n.len();
    let flip = n[d - 1] >= T::zero();
    let v: Vec<T> = (0..d)
        .map(|i| {
            let e = if i == d - 1 { T::one() } else { T::zero() };
            if flip { e + n[i] } else { e - n[i] }
        })
        .collect();
    let vv = v.iter().fold(T::zero(), |s, &x| s + x * x);
    let two = T::one() + T::one();
    let mut m = vec![T::zero(); d * d];
    for r in 0..d {
        for c in 0..d {
            let id = if r == c { T::one() } else { T::zero() };
            m[r * d + c] = id - two * v[r] * v[c] / vv;
        }
    }
    if flip {
        for r in 0..d {
            m[r * d + d - 1] = n[r];
        }
    }
    Ok(Frame { dim: d, m })
}

fn norm<T: Scalar>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |s, &x| s + x * x).sqrt()
}

/// Lattice vectors whose tangential projection is below this are treated as exactly resonant.
fn resonance_floor<T: Scalar>(xi: &[i64]) -> T {
    let l1: i64 = xi.iter().map(|k| k.abs()).sum();
    T::lit(16.0) * T::epsilon() * T::of_i64(l1.max(1))
}

/// Exact minimum of `|N^T xi| |xi|^kappa` over `0 < |xi|_inf <= Xi`, clamped to `[0, 1]`.
pub fn dioph_constant<T: Scalar>(n: &[T], kappa: T, xi_max: usize) -> Result<Direction<T>> {
    check_unit(n)?;
    let d = n.len();
    let kmin = T::one() / T::of_i64(d as i64 - 1);
    if !(kappa > kmin) {
        return Err(Error::InvalidInput(format!("kappa must exceed 1/(d-1) = {kmin}, got {kappa}")));
    }
    if xi_max == 0 {
        return Err(Error::InvalidInput("lattice cutoff must be >= 1".into()));
    }
    let frame = build_frame(n)?;
    if d == 2 {
        return Ok(planar(&frame, n, kappa, xi_max));
    }
    // inner axis: the one whose projection is longest
    let axis = (0..d)
        .min_by(|&a, &b| n[a].abs().partial_cmp(&n[b].abs()).unwrap())
        .unwrap();
    let mut e = vec![0i64; d];
    e[axis] = 1;
    let w = frame.nt_lattice(&e);
    let ww = w.iter().fold(T::zero(), |s, &x| s + x * x);
    let xm = xi_max as i64;

    let mut best = T::one();
    let eval = |xi: &[i64], best: &mut T| -> bool {
        let p = norm(&frame.nt_lattice(xi));
        if p <= resonance_floor::<T>(xi) {
            *best = T::zero();
            return true;
        }
        let len = T::of_i64(xi.iter().map(|k| k * k).sum::<i64>()).sqrt();
        let val = p * len.powf(kappa);
        if val < *best {
            *best = val;
        }
        false
    };

    // xi' = 0: the objective along the axis grows with |s|, s = 1 is the only candidate
    if eval(&e, &mut best) {
        return Ok(Direction { n: n.to_vec(), kappa, a_lb: T::zero(), xi: xi_max });
    }

    let outer: Vec<usize> = (0..d).filter(|&k| k != axis).collect();
    let mut idx = vec![-xm; d - 1];
    let mut xi = vec![0i64; d];
    'outer: loop {
        if idx.iter().any(|&k| k != 0) {
            for (slot, &ax) in idx.iter().zip(&outer) {
                xi[ax] = *slot;
            }
            xi[axis] = 0;
            let v = frame.nt_lattice(&xi);
            let vw = v.iter().zip(&w).fold(T::zero(), |s, (&a, &b)| s + a * b);
            let vv = v.iter().fold(T::zero(), |s, &x| s + x * x);
            let s0 = -vw / ww;
            let dmin2 = (vv - vw * vw / ww).max(T::zero());
            let base2 = T::of_i64(idx.iter().map(|k| k * k).sum::<i64>());
            let tau = best / base2.sqrt().powf(kappa);
            let slack = T::lit(1e-9) * tau * tau + T::epsilon() * vv;
            if dmin2 <= tau * tau + slack {
                let half = ((tau * tau + slack - dmin2).max(T::zero()) / ww).sqrt();
                let lo = (s0 - half).floor().to_i64().unwrap_or(-xm).max(-xm);
                let hi = (s0 + half).ceil().to_i64().unwrap_or(xm).min(xm);
                for s in lo..=hi {
                    xi[axis] = s;
                    if eval(&xi, &mut best) {
                        return Ok(Direction { n: n.to_vec(), kappa, a_lb: T::zero(), xi: xi_max });
                    }
                }
            }
        }
        for pos in (0..d - 1).rev() {
            if idx[pos] < xm {
                idx[pos] += 1;
                continue 'outer;
            }
            idx[pos] = -xm;
        }
        break;
    }
    Ok(Direction { n: n.to_vec(), kappa, a_lb: best.min(T::one()).max(T::zero()), xi: xi_max })
}

/// Allocation-free planar case of [`dioph_constant`]; same pruning and arithmetic.
fn planar<T: Scalar>(frame: &Frame<T>, n: &[T], kappa: T, xi_max: usize) -> Direction<T> {
    let t = [frame.m_entry(0, 0), frame.m_entry(1, 0)];
    let axis = if n[0].abs() <= n[1].abs() { 0 } else { 1 };
    let other = 1 - axis;
    let xm = xi_max as i64;
    let floor = |a: i64, b: i64| T::lit(16.0) * T::epsilon() * T::of_i64((a.abs() + b.abs()).max(1));
    let proj = |xi: [i64; 2]| (T::zero() + t[0] * T::of_i64(xi[0]) + t[1] * T::of_i64(xi[1])).abs();
    let resonant = Direction { n: n.to_vec(), kappa, a_lb: T::zero(), xi: xi_max };
    let w = t[axis];
    let ww = w * w;
    let mut best = T::one();
    let mut e = [0i64; 2];
    e[axis] = 1;
    let p = proj(e);
    if p <= floor(e[0], e[1]) {
        return resonant;
    }
    best = best.min(p);
    for k in -xm..=xm {
        if k == 0 {
            continue;
        }
        let v = t[other] * T::of_i64(k);
        let vw = v * w;
        let vv = v * v;
        let s0 = -vw / ww;
        let dmin2 = (vv - vw * vw / ww).max(T::zero());
        let base = T::of_i64(k.abs());
        let tau = best / base.powf(kappa);
        let slack = T::lit(1e-9) * tau * tau + T::epsilon() * vv;
        if dmin2 > tau * tau + slack {
            continue;
        }
        let half = ((tau * tau + slack - dmin2).max(T::zero()) / ww).sqrt();
        let lo = (s0 - half).floor().to_i64().unwrap_or(-xm).max(-xm);
        let hi = (s0 + half).ceil().to_i64().unwrap_or(xm).min(xm);
        for s in lo..=hi {
            let mut xi = [0i64; 2];
            xi[axis] = s;
            xi[other] = k;
            let p = proj(xi);
            if p <= floor(xi[0], xi[1]) {
                return resonant;
            }
            let len = T::of_i64(s * s + k * k).sqrt();
            let val = p * len.powf(kappa);
            if val < best {
                best = val;
            }
        }
    }
    Direction { n: n.to_vec(), kappa, a_lb: best.min(T::one()).max(T::zero()), xi: xi_max }
}

/// Plain enumeration of the whole lattice box; reference for [`dioph_constant`].
pub fn dioph_constant_enumerated<T: Scalar>(n: &[T], kappa: T, xi_max: usize) -> Result<T> {
    check_unit(n)?;
    let d = n.len();
    let frame = build_frame(n)?;
    let xm = xi_max as i64;
    let side = (2 * xm + 1) as usize;
    let mut best = T::one();
    let mut xi = vec![0i64; d];
    for flat in 0..side.pow(d as u32) {
        let mut f = flat;
        for k in xi.iter_mut().rev() {
            *k = (f % side) as i64 - xm;
            f /= side;
        }
        if xi.iter().all(|&k| k == 0) {
            continue;
        }
        let p = norm(&frame.nt_lattice(&xi));
        if p <= resonance_floor::<T>(&xi) {
            return Ok(T::zero());
        }
        let len = T::of_i64(xi.iter().map(|k| k * k).sum::<i64>()).sqrt();
        best = best.min(p * len.powf(kappa));
    }
    Ok(best.max(T::zero()))
}

/// One boundary sample of the Diophantine survey.
#[derive(Clone, Debug)]
pub struct DiophSample {
    pub s: f64,
    pub x: [f64; 2],
    pub n: [f64; 2],
    pub a_lb: f64,
}

/// Survey of `A^{-1}` along the boundary.
#[derive(Clone, Debug)]
pub struct DiophStatistics {
    pub samples: Vec<DiophSample>,
    /// Number of samples with an exactly resonant normal.
    pub rational: usize,
    /// `sup_t t * H{A^{-1} > t}^{1/(d-1)}` over the finite values, with arclength measure.
    pub weak_norm: f64,
    /// `(t, H{A^{-1} >= t})` at every finite sample value, ascending in `t`.
    pub tail: Vec<(f64, f64)>,
}

/// Equi-spaced chart samples of the normal and their Diophantine constants.
pub fn dioph_statistics(dom: &ConvexDomain, samples: usize, kappa: f64, xi_max: usize) -> Result<DiophStatistics> {
    if samples < 10 {
        return Err(Error::InvalidInput(format!("need at least 10 samples, got {samples}")));
    }
    let dt = std::f64::consts::TAU / samples as f64;
    let mut out = Vec::with_capacity(samples);
    let mut weighted = Vec::with_capacity(samples);
    for i in 0..samples {
        let s = i as f64 * dt;
        let bp = dom.chart(s)?;
        let dir = dioph_constant(&bp.normal, kappa, xi_max)?;
        weighted.push((dir.a_lb, dom.speed(s) * dt));
        out.push(DiophSample { s, x: bp.point, n: bp.normal, a_lb: dir.a_lb });
    }
    let rational = weighted.iter().filter(|(a, _)| *a == 0.0).count();
    let mut finite: Vec<(f64, f64)> =
        weighted.iter().filter(|(a, _)| *a > 0.0).map(|&(a, w)| (1.0 / a, w)).collect();
    finite.sort_by(|x, y| y.0.partial_cmp(&x.0).unwrap());
    let p = 1.0 / (dom.dim() as f64 - 1.0);
    let mut acc = 0.0;
    let mut tail = Vec::with_capacity(finite.len());
    let mut weak_norm = 0.0f64;
    for (t, w) in finite {
        acc += w;
        tail.push((t, acc));
        weak_norm = weak_norm.max(t * acc.powf(p));
    }
    tail.reverse();
    Ok(DiophStatistics { samples: out, rational, weak_norm, tail })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn golden() -> Vec<f64> {
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        unit(&[1.0, phi]).unwrap()
    }

    #[test]
    fn rational_directions_vanish() {
        let cases = [
            (vec![0.0, 1.0], 1),
            (vec![-1.0, 0.0], 1),
            (unit(&[1.0, 1.0]).unwrap(), 1),
            (unit(&[1.0, 2.0]).unwrap(), 2),
            (unit(&[-3.0, 5.0]).unwrap(), 5),
        ];
        for (n, first) in cases {
            for xi in first..first + 3 {
                assert_eq!(dioph_constant(&n, 1.5, xi).unwrap().a_lb, 0.0, "{n:?} Xi={xi}");
            }
        }
        assert!(dioph_constant(&unit(&[1.0, 2.0]).unwrap(), 1.5, 1).unwrap().a_lb > 0.0);
    }

    #[test]
    fn golden_direction_matches_enumeration() {
        let n = golden();
        for xi in [1, 3, 10, 50, 200] {
            let fast = dioph_constant(&n, 1.5, xi).unwrap().a_lb;
            let slow = dioph_constant_enumerated(&n, 1.5, xi).unwrap();
            assert!((fast - slow).abs() <= 1e-14 * slow.max(1e-300), "Xi={xi}: {fast} vs {slow}");
        }
    }

    #[test]
    fn golden_direction_large_cutoff_is_positive() {
        let dir = dioph_constant(&golden(), 1.5, 10_000).unwrap();
        assert!(dir.a_lb > 0.0 && dir.a_lb <= 1.0);
        // convergents of the golden ratio make |xi|^{1/2} grow, so the box minimum keeps shrinking
        let mid = dioph_constant(&golden(), 1.5, 100).unwrap();
        assert!(dir.a_lb <= mid.a_lb);
    }

    #[test]
    fn three_dimensional_search_matches_enumeration() {
        let n = unit(&[1.0, 2f64.sqrt(), 3f64.sqrt()]).unwrap();
        for xi in [1, 4, 12] {
            let fast = dioph_constant(&n, 1.0, xi).unwrap().a_lb;
            let slow = dioph_constant_enumerated(&n, 1.0, xi).unwrap();
            assert!((fast - slow).abs() <= 1e-13 * slow, "Xi={xi}: {fast} vs {slow}");
        }
    }

    #[test]
    fn input_validation() {
        assert!(dioph_constant(&[1.0, 1.0], 1.5, 3).is_err());
        assert!(dioph_constant(&[1.0, 0.0], 1.0, 3).is_err());
        assert!(dioph_constant(&[1.0, 0.0], 1.5, 0).is_err());
        assert!(dioph_constant(&[1.0, 0.0, 0.0], 0.4, 3).is_err());
    }

    #[test]
    fn frame_examples() {
        let f = build_frame(&[0.0, 1.0]).unwrap();
        assert_eq!(f.m(), &[1.0, 0.0, 0.0, 1.0]);
        let f3 = build_frame(&[0.0, 0.0, 1.0]).unwrap();
        assert_eq!(f3.m(), &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        let g = build_frame(&[0.0, -1.0]).unwrap();
        assert_eq!(g.m(), &[1.0, 0.0, 0.0, -1.0]);
    }

    #[test]
    fn frame_is_single_precision_capable() {
        let n = unit(&[0.3f32, -0.8, 0.2]).unwrap();
        let f = build_frame(&n).unwrap();
        assert!(f.orthogonality_defect() < 1e-6);
        let d = dioph_constant(&unit(&[1.0f32, 1.618034]).unwrap(), 1.5, 20).unwrap();
        assert!(d.a_lb > 0.0);
    }

    #[test]
    fn disc_survey() {
        let stats = dioph_statistics(&ConvexDomain::unit_disc(), 1000, 1.5, 100).unwrap();
        assert!(stats.rational <= 8, "{}", stats.rational);
        assert!(stats.samples.iter().all(|s| (0.0..=1.0).contains(&s.a_lb)));
        assert!(stats.weak_norm.is_finite() && stats.weak_norm > 0.0);
        assert!(dioph_statistics(&ConvexDomain::unit_disc(), 9, 1.5, 10).is_err());
    }

    proptest! {
        #[test]
        fn frame_properties(v in proptest::collection::vec(-1.0f64..1.0, 2..=4), seed in proptest::collection::vec(-50i64..50, 4)) {
            prop_assume!(norm(&v) > 1e-3);
            let n = unit(&v).unwrap();
            let f = build_frame(&n).unwrap();
            prop_assert!(f.orthogonality_defect() < 1e-14);
            for (a, b) in f.normal().iter().zip(&n) {
                prop_assert!((a - b).abs() < 1e-15);
            }
            let xi = &seed[..n.len()];
            let x: Vec<f64> = xi.iter().map(|&k| k as f64).collect();
            let nt = norm(&f.nt_apply(&x));
            let dot: f64 = x.iter().zip(&n).map(|(a, b)| a * b).sum();
            let proj: Vec<f64> = x.iter().zip(&n).map(|(a, b)| a - dot * b).collect();
            prop_assert!((nt - norm(&proj)).abs() < 1e-12);
            let mt = norm(&f.mt_apply(&x));
            prop_assert!((mt * mt - nt * nt - dot * dot).abs() < 1e-9);
        }

        #[test]
        fn monotone_and_symmetric(theta in 0.01f64..1.55, xi in 1usize..40) {
            let n = vec![theta.cos(), theta.sin()];
            let a = dioph_constant(&n, 1.5, xi).unwrap().a_lb;
            let b = dioph_constant(&n, 1.5, xi + 7).unwrap().a_lb;
            prop_assert!(b <= a);
            let neg: Vec<f64> = n.iter().map(|v| -v).collect();
            let c = dioph_constant(&neg, 1.5, xi).unwrap().a_lb;
            prop_assert!((a - c).abs() <= 1e-12 * a.max(1e-300));
            let slow = dioph_constant_enumerated(&n, 1.5, xi).unwrap();
            prop_assert!((a - slow).abs() <= 1e-13 * slow.max(1e-300));
        }
    }
}
