//! Periodic coefficient tensors, two-scale boundary data and convex domains.
//!
//! Every periodic object is stored as a finite table of Fourier modes
//! `f(y) = sum_xi f_xi exp(2 pi i xi.y)`, so periodicity is structural and
//! real-valuedness is the conjugate symmetry `f_{-xi} = conj(f_xi)`.

use std::collections::BTreeMap;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::fft::{self, NdFft};
use crate::scalar::{Complex, Scalar};

pub type ModeTable<T> = BTreeMap<Vec<i64>, Vec<Complex<T>>>;

fn check_hermitian<T: Scalar>(modes: &ModeTable<T>, what: &str) -> Result<()> {
    let tol = T::lit(1e-12);
    for (xi, c) in modes {
        let neg: Vec<i64> = xi.iter().map(|k| -k).collect();
        let partner = modes.get(&neg);
        for (idx, v) in c.iter().enumerate() {
            let w = partner.map(|p| p[idx]).unwrap_or_default();
            let scale = T::one().max(v.norm());
            if (v.conj() - w).norm() > tol * scale {
                return Err(Error::InvalidInput(format!(
                    "{what}: mode {xi:?} entry {idx} is not conjugate-symmetric"
                )));
            }
        }
    }
    Ok(())
}

#[inline]
fn phase<T: Scalar>(xi: &[i64], y: &[T]) -> Complex<T> {
    let arg = xi
        .iter()
        .zip(y)
        .fold(T::zero(), |acc, (&k, &yy)| acc + T::of_i64(k) * yy)
        * T::two_pi();
    Complex::new(arg.cos(), arg.sin())
}

/// Coefficient tensor `a^{alpha beta}_{ij}(y)` with `alpha, beta < dim`, `i, j < sysdim`.
#[derive(Clone, Debug)]
pub struct PeriodicTensor<T: Scalar> {
    dim: usize,
    sysdim: usize,
    modes: ModeTable<T>,
    lambda: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EllipticityCertificate {
    /// Smallest Rayleigh quotient over the grid.
    pub min_quotient: f64,
    /// Largest Rayleigh quotient over the grid.
    pub max_quotient: f64,
    /// Largest `lambda` compatible with the samples: `min(min_q, 1/max_q)`.
    pub lambda_observed: f64,
    pub pass: bool,
    /// Sample point attaining the worst violation (or the tightest quotient when passing).
    pub worst_point: Vec<f64>,
}

impl<T: Scalar> PeriodicTensor<T> {
    pub fn new(dim: usize, sysdim: usize, lambda: T, modes: ModeTable<T>) -> Result<Self> {
        if dim < 2 {
            return Err(Error::InvalidInput(format!("dimension must be at least 2, got {dim}")));
        }
        if sysdim < 1 {
            return Err(Error::InvalidInput("system dimension must be at least 1".into()));
        }
        if !(lambda > T::zero() && lambda < T::one()) {
            return Err(Error::InvalidInput(format!("ellipticity constant {lambda} not in (0,1)")));
        }
        let width = dim * dim * sysdim * sysdim;
        for (xi, c) in &modes {
            if xi.len() != dim || c.len() != width {
                return Err(Error::InvalidInput(format!(
                    "mode {xi:?} has wrong shape (expected {dim} indices and {width} entries)"
                )));
            }
        }
        check_hermitian(&modes, "coefficient tensor")?;
        let mut modes = modes;
        modes.retain(|_, c| c.iter().any(|v| v.norm() > T::zero()));
        Ok(Self { dim, sysdim, modes, lambda })
    }

    /// Constant tensor given as a flat `(d,d,L,L)` array.
    pub fn constant(dim: usize, sysdim: usize, lambda: T, values: &[T]) -> Result<Self> {
        let mut modes = ModeTable::new();
        modes.insert(vec![0; dim], values.iter().map(|&v| Complex::new(v, T::zero())).collect());
        Self::new(dim, sysdim, lambda, modes)
    }

    pub fn identity(dim: usize, sysdim: usize, lambda: T) -> Self {
        let scalar = BTreeMap::from([(vec![0; dim], Complex::new(T::one(), T::zero()))]);
        Self::scalar_multiple(dim, sysdim, lambda, &scalar).expect("identity is admissible")
    }

    /// `a(y) = c(y) Id` for a real scalar field `c` given by its modes.
    pub fn scalar_multiple(
        dim: usize,
        sysdim: usize,
        lambda: T,
        coef: &BTreeMap<Vec<i64>, Complex<T>>,
    ) -> Result<Self> {
        let width = dim * dim * sysdim * sysdim;
        let mut modes = ModeTable::new();
        for (xi, &c) in coef {
            let mut entry = vec![Complex::default(); width];
            for alpha in 0..dim {
                for i in 0..sysdim {
                    entry[((alpha * dim + alpha) * sysdim + i) * sysdim + i] = c;
                }
            }
            modes.insert(xi.clone(), entry);
        }
        Self::new(dim, sysdim, lambda, modes)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn sysdim(&self) -> usize {
        self.sysdim
    }

    #[inline]
    pub fn lambda(&self) -> T {
        self.lambda
    }

    pub fn modes(&self) -> &ModeTable<T> {
        &self.modes
    }

    /// Number of real entries of one tensor value.
    #[inline]
    pub fn width(&self) -> usize {
        self.dim * self.dim * self.sysdim * self.sysdim
    }

    #[inline]
    pub fn index(&self, alpha: usize, beta: usize, i: usize, j: usize) -> usize {
        ((alpha * self.dim + beta) * self.sysdim + i) * self.sysdim + j
    }

    /// Largest `|xi|_inf` among the stored modes.
    pub fn mode_cutoff(&self) -> i64 {
        self.modes
            .keys()
            .map(|xi| xi.iter().map(|k| k.abs()).max().unwrap_or(0))
            .max()
            .unwrap_or(0)
    }

    pub fn is_constant(&self) -> bool {
        self.mode_cutoff() == 0
    }

    /// Torus average of the tensor (the zero mode).
    pub fn mean(&self) -> Vec<T> {
        self.modes
            .get(&vec![0; self.dim])
            .map(|c| c.iter().map(|v| v.re).collect())
            .unwrap_or_else(|| vec![T::zero(); self.width()])
    }

    pub fn evaluate(&self, y: &[T]) -> Vec<T> {
        assert_eq!(y.len(), self.dim, "point dimension");
        let mut out = vec![T::zero(); self.width()];
        for (xi, c) in &self.modes {
            let e = phase(xi, y);
            for (o, v) in out.iter_mut().zip(c) {
                *o = *o + (*v * e).re;
            }
        }
        out
    }

    /// Adjoint tensor `(a*)^{alpha beta}_{ij} = a^{beta alpha}_{ji}`.
    pub fn adjoint(&self) -> Self {
        let mut modes = ModeTable::new();
        for (xi, c) in &self.modes {
            let mut t = vec![Complex::default(); c.len()];
            for alpha in 0..self.dim {
                for beta in 0..self.dim {
                    for i in 0..self.sysdim {
                        for j in 0..self.sysdim {
                            t[self.index(alpha, beta, i, j)] = c[self.index(beta, alpha, j, i)];
                        }
                    }
                }
            }
            modes.insert(xi.clone(), t);
        }
        Self { modes, ..self.clone() }
    }

    pub fn is_symmetric(&self, tol: T) -> bool {
        let adj = self.adjoint();
        self.modes.iter().all(|(xi, c)| {
            let d = &adj.modes[xi];
            c.iter().zip(d).all(|(a, b)| (*a - *b).norm() <= tol)
        })
    }

    /// Rotated tensor `b^{pq} = M_{alpha p} a^{alpha beta} M_{beta q}` for a row-major `d x d` matrix `m`.
    pub fn rotated(&self, m: &[T]) -> Self {
        let d = self.dim;
        let l = self.sysdim;
        assert_eq!(m.len(), d * d);
        let mut modes = ModeTable::new();
        for (xi, c) in &self.modes {
            let mut t = vec![Complex::default(); c.len()];
            for p in 0..d {
                for q in 0..d {
                    for i in 0..l {
                        for j in 0..l {
                            let mut acc = Complex::default();
                            for alpha in 0..d {
                                for beta in 0..d {
                                    acc = acc + c[self.index(alpha, beta, i, j)] * (m[alpha * d + p] * m[beta * d + q]);
                                }
                            }
                            t[self.index(p, q, i, j)] = acc;
                        }
                    }
                }
            }
            modes.insert(xi.clone(), t);
        }
        Self { modes, ..self.clone() }
    }

    /// Values on the uniform grid `m^d` (points `idx/m`), entry-major: `out[entry][flat]`.
    ///
    /// Computed by inverse FFT of the mode table; requires every mode to be representable.
    pub fn grid_values(&self, m: usize) -> Result<Vec<Vec<T>>> {
        let d = self.dim;
        let plan = NdFft::<T>::new(m, d);
        let total = plan.len();
        let mut out = Vec::with_capacity(self.width());
        for e in 0..self.width() {
            let mut spec = vec![Complex::default(); total];
            for (xi, c) in &self.modes {
                let mut idx = Vec::with_capacity(d);
                for &k in xi {
                    idx.push(fft::slot(k, m).ok_or_else(|| {
                        Error::InvalidInput(format!("mode {xi:?} not representable on a {m}-grid"))
                    })?);
                }
                spec[fft::flatten(&idx, m)] = c[e];
            }
            plan.inverse(&mut spec);
            out.push(spec.iter().map(|v| v.re).collect());
        }
        Ok(out)
    }

    /// Rayleigh quotients of the symmetric part of the `(dL) x (dL)` matrix at every grid point.
    pub fn validate_ellipticity(&self, grid_n: usize) -> Result<EllipticityCertificate> {
        if grid_n < 2 {
            return Err(Error::InvalidInput("validation grid needs at least 2 points per axis".into()));
        }
        let d = self.dim;
        let l = self.sysdim;
        let nn = d * l;
        let lambda = self.lambda.f64();
        let total = grid_n.pow(d as u32);
        let mut idx = vec![0usize; d];
        let mut min_q = f64::INFINITY;
        let mut max_q = f64::NEG_INFINITY;
        let mut at_min = vec![0.0; d];
        let mut at_max = vec![0.0; d];
        for flat in 0..total {
            fft::unflatten(flat, grid_n, d, &mut idx);
            let y: Vec<T> = idx.iter().map(|&i| T::of_i64(i as i64) / T::of_i64(grid_n as i64)).collect();
            let a = self.evaluate(&y);
            let mut mat = DMatrix::<f64>::zeros(nn, nn);
            for alpha in 0..d {
                for beta in 0..d {
                    for i in 0..l {
                        for j in 0..l {
                            let v = a[self.index(alpha, beta, i, j)].f64();
                            mat[(alpha * l + i, beta * l + j)] += 0.5 * v;
                            mat[(beta * l + j, alpha * l + i)] += 0.5 * v;
                        }
                    }
                }
            }
            let eig = mat.symmetric_eigenvalues();
            let lo = eig.min();
            let hi = eig.max();
            if lo < min_q {
                min_q = lo;
                at_min = y.iter().map(|v| v.f64()).collect();
            }
            if hi > max_q {
                max_q = hi;
                at_max = y.iter().map(|v| v.f64()).collect();
            }
        }
        let slack = 1e-12;
        let low_ok = min_q >= lambda * (1.0 - slack);
        let high_ok = max_q <= (1.0 / lambda) * (1.0 + slack);
        let lambda_observed = min_q.min(1.0 / max_q);
        let worst_point = if !low_ok || (high_ok && min_q <= 1.0 / max_q) { at_min } else { at_max };
        Ok(EllipticityCertificate {
            min_quotient: min_q,
            max_quotient: max_q,
            lambda_observed,
            pass: low_ok && high_ok,
            worst_point,
        })
    }
}

/// Real `L`-vector valued periodic field.
#[derive(Clone, Debug)]
pub struct PeriodicField<T: Scalar> {
    dim: usize,
    sysdim: usize,
    modes: ModeTable<T>,
}

impl<T: Scalar> PeriodicField<T> {
    pub fn new(dim: usize, sysdim: usize, modes: ModeTable<T>) -> Result<Self> {
        for (xi, c) in &modes {
            if xi.len() != dim || c.len() != sysdim {
                return Err(Error::InvalidInput(format!("field mode {xi:?} has wrong shape")));
            }
        }
        check_hermitian(&modes, "periodic field")?;
        let mut modes = modes;
        modes.retain(|_, c| c.iter().any(|v| v.norm() > T::zero()));
        Ok(Self { dim, sysdim, modes })
    }

    pub fn constant(dim: usize, value: &[T]) -> Self {
        let mut modes = ModeTable::new();
        modes.insert(vec![0; dim], value.iter().map(|&v| Complex::new(v, T::zero())).collect());
        Self { dim, sysdim: value.len(), modes }
    }

    /// Scalar cosine mode `amp * cos(2 pi xi.y + phi)`.
    pub fn cosine(xi: &[i64], amp: T, phi: T) -> Self {
        let dim = xi.len();
        let half = amp / T::lit(2.0);
        let mut modes = ModeTable::new();
        if xi.iter().all(|&k| k == 0) {
            modes.insert(xi.to_vec(), vec![Complex::new(amp * phi.cos(), T::zero())]);
        } else {
            let neg: Vec<i64> = xi.iter().map(|k| -k).collect();
            modes.insert(xi.to_vec(), vec![Complex::new(half * phi.cos(), half * phi.sin())]);
            modes.insert(neg, vec![Complex::new(half * phi.cos(), -half * phi.sin())]);
        }
        Self { dim, sysdim: 1, modes }
    }

    /// Scalar field with every mode `0 < |xi|_inf <= cutoff` drawn as `amp * (u + i v) / (1 + |xi|^2)`,
    /// `u, v` uniform in `[-1, 1]`, plus a mean drawn the same way. Deterministic in `seed`.
    pub fn random(dim: usize, cutoff: i64, amp: T, seed: u64) -> Result<Self> {
        use rand::{Rng, SeedableRng};
        if dim == 0 || cutoff < 0 {
            return Err(Error::InvalidInput(format!("random field needs dim >= 1 and cutoff >= 0, got {dim}, {cutoff}")));
        }
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let side = (2 * cutoff + 1) as usize;
        let mut modes = ModeTable::new();
        for flat in 0..side.pow(dim as u32) {
            let mut r = flat;
            let xi: Vec<i64> = (0..dim)
                .map(|_| {
                    let k = (r % side) as i64 - cutoff;
                    r /= side;
                    k
                })
                .collect();
            let neg: Vec<i64> = xi.iter().map(|k| -k).collect();
            if modes.contains_key(&xi) {
                continue;
            }
            let weight = amp / T::of_i64(1 + xi.iter().map(|k| k * k).sum::<i64>());
            let re = weight * T::lit(rng.gen_range(-1.0..=1.0));
            if xi == neg {
                modes.insert(xi, vec![Complex::new(re, T::zero())]);
            } else {
                let im = weight * T::lit(rng.gen_range(-1.0..=1.0));
                modes.insert(xi, vec![Complex::new(re, im)]);
                modes.insert(neg, vec![Complex::new(re, -im)]);
            }
        }
        Self::new(dim, 1, modes)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn sysdim(&self) -> usize {
        self.sysdim
    }

    pub fn modes(&self) -> &ModeTable<T> {
        &self.modes
    }

    pub fn coefficient(&self, xi: &[i64]) -> Vec<Complex<T>> {
        self.modes.get(xi).cloned().unwrap_or_else(|| vec![Complex::default(); self.sysdim])
    }

    pub fn mean(&self) -> Vec<T> {
        self.coefficient(&vec![0; self.dim]).iter().map(|v| v.re).collect()
    }

    pub fn mode_cutoff(&self) -> i64 {
        self.modes
            .keys()
            .map(|xi| xi.iter().map(|k| k.abs()).max().unwrap_or(0))
            .max()
            .unwrap_or(0)
    }

    pub fn evaluate(&self, y: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.sysdim];
        for (xi, c) in &self.modes {
            let e = phase(xi, y);
            for (o, v) in out.iter_mut().zip(c) {
                *o = *o + (*v * e).re;
            }
        }
        out
    }

    /// `sum_m w_m f_m` over fields of identical shape.
    pub fn combine(parts: &[(T, &PeriodicField<T>)]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidInput("empty combination".into()))?
            .1;
        let mut modes = ModeTable::new();
        for (w, f) in parts {
            if f.dim != first.dim || f.sysdim != first.sysdim {
                return Err(Error::InvalidInput("combining fields of different shapes".into()));
            }
            for (xi, c) in &f.modes {
                let slot = modes
                    .entry(xi.clone())
                    .or_insert_with(|| vec![Complex::default(); first.sysdim]);
                for (s, v) in slot.iter_mut().zip(c) {
                    *s = *s + *v * *w;
                }
            }
        }
        Ok(Self { dim: first.dim, sysdim: first.sysdim, modes })
    }
}

/// Slowly varying factor `s(x)` of a separable boundary datum.
#[derive(Clone, Debug, PartialEq)]
pub enum SlowFactor<T: Scalar> {
    Constant(T),
    /// `c0 + grad . x`
    Affine { c0: T, grad: Vec<T> },
    /// `amp * cos(k * atan2(x_2, x_1) + phase)` (planar domains).
    Angular { k: i64, amp: T, phase: T },
}

impl<T: Scalar> SlowFactor<T> {
    pub fn evaluate(&self, x: &[T]) -> T {
        match self {
            SlowFactor::Constant(c) => *c,
            SlowFactor::Affine { c0, grad } => grad.iter().zip(x).fold(*c0, |acc, (g, v)| acc + *g * *v),
            SlowFactor::Angular { k, amp, phase } => {
                let ang = x[1].atan2(x[0]);
                *amp * (T::of_i64(*k) * ang + *phase).cos()
            }
        }
    }
}

/// Boundary datum `g(x, y) = sum_m s_m(x) p_m(y)`.
#[derive(Clone, Debug)]
pub struct TwoScaleBoundaryDatum<T: Scalar> {
    dim: usize,
    sysdim: usize,
    terms: Vec<(SlowFactor<T>, PeriodicField<T>)>,
}

impl<T: Scalar> TwoScaleBoundaryDatum<T> {
    pub fn new(terms: Vec<(SlowFactor<T>, PeriodicField<T>)>) -> Result<Self> {
        let (_, first) = terms
            .first()
            .ok_or_else(|| Error::InvalidInput("boundary datum needs at least one term".into()))?;
        let (dim, sysdim) = (first.dim(), first.sysdim());
        if terms.iter().any(|(_, p)| p.dim() != dim || p.sysdim() != sysdim) {
            return Err(Error::InvalidInput("boundary datum terms have mixed shapes".into()));
        }
        Ok(Self { dim, sysdim, terms })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn sysdim(&self) -> usize {
        self.sysdim
    }

    pub fn terms(&self) -> &[(SlowFactor<T>, PeriodicField<T>)] {
        &self.terms
    }

    pub fn evaluate(&self, x: &[T], y: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.sysdim];
        for (s, p) in &self.terms {
            let w = s.evaluate(x);
            for (o, v) in out.iter_mut().zip(p.evaluate(y)) {
                *o = *o + w * v;
            }
        }
        out
    }

    /// The periodic function `g(x, .)` at a frozen slow point.
    pub fn frozen(&self, x: &[T]) -> PeriodicField<T> {
        let weights: Vec<T> = self.terms.iter().map(|(s, _)| s.evaluate(x)).collect();
        let parts: Vec<(T, &PeriodicField<T>)> =
            weights.into_iter().zip(self.terms.iter().map(|(_, p)| p)).collect();
        PeriodicField::combine(&parts).expect("terms share a shape")
    }

    /// `g(x, .)` does not depend on the fast variable.
    pub fn is_slow_only(&self) -> bool {
        self.terms.iter().all(|(_, p)| p.mode_cutoff() == 0)
    }
}

/// Point of the boundary with its outward unit normal and curvature.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryPoint {
    pub point: [f64; 2],
    pub normal: [f64; 2],
    pub curvature: f64,
}

/// Smooth uniformly convex planar domain centred at the origin.
#[derive(Clone, Debug, PartialEq)]
pub enum ConvexDomain {
    Disc { radius: f64 },
    Ellipse { a: f64, b: f64 },
}

impl ConvexDomain {
    pub fn unit_disc() -> Self {
        ConvexDomain::Disc { radius: 1.0 }
    }

    pub fn ellipse(a: f64, b: f64) -> Result<Self> {
        if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
            return Err(Error::InvalidInput(format!("ellipse semi-axes must be positive, got ({a}, {b})")));
        }
        Ok(ConvexDomain::Ellipse { a, b })
    }

    fn axes(&self) -> (f64, f64) {
        match *self {
            ConvexDomain::Disc { radius } => (radius, radius),
            ConvexDomain::Ellipse { a, b } => (a, b),
        }
    }

    pub fn dim(&self) -> usize {
        2
    }

    /// Chart `s in [0, 2 pi]` to boundary point, normal and curvature.
    pub fn chart(&self, s: f64) -> Result<BoundaryPoint> {
        if !s.is_finite() || !(0.0..=std::f64::consts::TAU).contains(&s) {
            return Err(Error::InvalidInput(format!("chart parameter {s} outside [0, 2pi]")));
        }
        Ok(self.chart_unchecked(s))
    }

    /// Chart evaluation for any real parameter (taken modulo `2 pi`).
    pub fn chart_unchecked(&self, s: f64) -> BoundaryPoint {
        let (a, b) = self.axes();
        let (sn, cs) = s.sin_cos();
        let nx = b * cs;
        let ny = a * sn;
        let nn = nx.hypot(ny);
        let q = (a * a * sn * sn + b * b * cs * cs).powf(1.5);
        BoundaryPoint {
            point: [a * cs, b * sn],
            normal: [nx / nn, ny / nn],
            curvature: a * b / q,
        }
    }

    /// Arc-length speed `|gamma'(s)|`.
    pub fn speed(&self, s: f64) -> f64 {
        let (a, b) = self.axes();
        (a * s.sin()).hypot(b * s.cos())
    }

    pub fn perimeter(&self) -> f64 {
        match *self {
            ConvexDomain::Disc { radius } => std::f64::consts::TAU * radius,
            ConvexDomain::Ellipse { .. } => {
                // periodic trapezoid rule is spectrally accurate for the smooth speed
                let n = 4096;
                let h = std::f64::consts::TAU / n as f64;
                (0..n).map(|k| self.speed(k as f64 * h)).sum::<f64>() * h
            }
        }
    }

    pub fn area(&self) -> f64 {
        let (a, b) = self.axes();
        std::f64::consts::PI * a * b
    }

    pub fn curvature_bounds(&self) -> (f64, f64) {
        let (a, b) = self.axes();
        let (big, small) = if a >= b { (a, b) } else { (b, a) };
        (small / (big * big), big / (small * small))
    }

    /// `x^2/a^2 + y^2/b^2`; the domain is the sublevel set `<= 1`.
    #[inline]
    pub fn level(&self, x: &[f64]) -> f64 {
        let (a, b) = self.axes();
        (x[0] / a).powi(2) + (x[1] / b).powi(2)
    }

    #[inline]
    pub fn contains(&self, x: &[f64]) -> bool {
        self.level(x) < 1.0
    }

    /// Half-width of the smallest origin-centred square containing the closure.
    pub fn half_extent(&self) -> f64 {
        let (a, b) = self.axes();
        a.max(b)
    }

    /// Closed box `[lo, hi]` meets the closed domain.
    pub fn box_meets_domain(&self, lo: &[f64], hi: &[f64]) -> bool {
        let (a, b) = self.axes();
        // scaling maps the ellipse to the unit disc and boxes to boxes
        let cx = 0.0f64.clamp(lo[0] / a, hi[0] / a);
        let cy = 0.0f64.clamp(lo[1] / b, hi[1] / b);
        cx * cx + cy * cy <= 1.0
    }

    /// Closed box `[lo, hi]` meets the boundary curve.
    pub fn box_meets_boundary(&self, lo: &[f64], hi: &[f64]) -> bool {
        if !self.box_meets_domain(lo, hi) {
            return false;
        }
        let corners = [[lo[0], lo[1]], [lo[0], hi[1]], [hi[0], lo[1]], [hi[0], hi[1]]];
        // convexity: the box lies in the open interior iff all corners do
        !corners.iter().all(|c| self.level(c) < 1.0)
    }

    /// Chart parameter of the nearest boundary point.
    pub fn closest_param(&self, x: &[f64]) -> f64 {
        let (a, b) = self.axes();
        if (a - b).abs() < 1e-15 * a {
            return x[1].atan2(x[0]).rem_euclid(std::f64::consts::TAU);
        }
        let mut best = 0.0;
        let mut best_d = f64::INFINITY;
        let samples = 64;
        for k in 0..samples {
            let s = std::f64::consts::TAU * k as f64 / samples as f64;
            let p = self.chart_unchecked(s).point;
            let d = (p[0] - x[0]).hypot(p[1] - x[1]);
            if d < best_d {
                best_d = d;
                best = s;
            }
        }
        // Newton on the tangency condition (p(s) - x) . p'(s) = 0
        let mut s = best;
        for _ in 0..50 {
            let (sn, cs) = s.sin_cos();
            let p = [a * cs, b * sn];
            let dp = [-a * sn, b * cs];
            let ddp = [-a * cs, -b * sn];
            let f = (p[0] - x[0]) * dp[0] + (p[1] - x[1]) * dp[1];
            let df = dp[0] * dp[0] + dp[1] * dp[1] + (p[0] - x[0]) * ddp[0] + (p[1] - x[1]) * ddp[1];
            if df.abs() < 1e-300 {
                break;
            }
            let step = (f / df).clamp(-0.5, 0.5);
            s -= step;
            if step.abs() < 1e-15 {
                break;
            }
        }
        s.rem_euclid(std::f64::consts::TAU)
    }

    pub fn dist_to_boundary(&self, x: &[f64]) -> f64 {
        if let ConvexDomain::Disc { radius } = *self {
            return (radius - x[0].hypot(x[1])).abs();
        }
        let p = self.chart_unchecked(self.closest_param(x)).point;
        (p[0] - x[0]).hypot(p[1] - x[1])
    }

    /// Chart parameter whose outward normal is `n` (inverse Gauss map).
    pub fn param_of_normal(&self, n: &[f64]) -> f64 {
        let (a, b) = self.axes();
        (n[1] / a).atan2(n[0] / b).rem_euclid(std::f64::consts::TAU)
    }
}
