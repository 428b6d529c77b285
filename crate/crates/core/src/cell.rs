//! Periodic cell problems and the homogenized tensor.
//!
//! For each direction `beta` the corrector `chi^beta` (an `L x L` matrix field,
//! solved one column at a time) satisfies `-div(a grad chi^beta) = d_alpha a^{alpha beta}`
//! on the torus with zero mean. The discretization is Fourier-Galerkin on the
//! modes `|k_i| < N/2`; coefficient-gradient products are formed on a
//! zero-padded grid large enough that the Galerkin projection is exact for the
//! band-limited coefficients, so the discrete operator is Hermitian and the
//! solve is a preconditioned conjugate gradient.

use crate::error::{Error, Result};
use crate::fft::{self, NdFft};
use crate::fields::PeriodicTensor;
use crate::scalar::{Complex, Scalar};

/// Default relative residual tolerance of the cell solve.
pub const DEFAULT_TOL: f64 = 1e-10;

/// Fourier-Galerkin discretization of `u -> -div(a grad u)` on `L`-vector fields.
pub struct GalerkinOperator<T: Scalar> {
    dim: usize,
    sysdim: usize,
    n: usize,
    m: usize,
    plan_m: NdFft<T>,
    /// `a` sampled on the padded grid, entry-major.
    a_grid: Vec<Vec<T>>,
    waves: Vec<Vec<i64>>,
    active: Vec<bool>,
    /// Reference diffusivity of the preconditioner.
    c_ref: T,
}

impl<T: Scalar> GalerkinOperator<T> {
    pub fn new(a: &PeriodicTensor<T>, n: usize) -> Result<Self> {
        let dim = a.dim();
        let cutoff = a.mode_cutoff() as usize;
        if 2 * cutoff + 1 > n {
            return Err(Error::InvalidInput(format!(
                "coefficient mode cutoff {cutoff} not resolved by a {n}-grid"
            )));
        }
        let mut m = (3 * n).div_ceil(2).max(n + cutoff + 1);
        m += m % 2;
        let a_grid = a.grid_values(m)?;
        let waves = fft::wavevectors(n, dim);
        let half = (n / 2) as i64;
        let active = waves.iter().map(|k| k.iter().all(|&c| c.abs() < half)).collect();
        let mean = a.mean();
        let l = a.sysdim();
        let mut trace = T::zero();
        for alpha in 0..dim {
            for i in 0..l {
                trace = trace + mean[a.index(alpha, alpha, i, i)];
            }
        }
        let c_ref = trace / T::of_i64((dim * l) as i64);
        if c_ref <= T::zero() {
            return Err(Error::InvalidInput("coefficient mean has non-positive trace".into()));
        }
        Ok(Self {
            dim,
            sysdim: l,
            n,
            m,
            plan_m: NdFft::new(m, dim),
            a_grid,
            waves,
            active,
            c_ref,
        })
    }

    pub fn resolution(&self) -> usize {
        self.n
    }

    pub fn padded_resolution(&self) -> usize {
        self.m
    }

    pub fn modes(&self) -> usize {
        self.waves.len()
    }

    pub fn len(&self) -> usize {
        self.sysdim * self.modes()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    fn entry(&self, alpha: usize, beta: usize, i: usize, j: usize) -> usize {
        ((alpha * self.dim + beta) * self.sysdim + i) * self.sysdim + j
    }

    /// Fluxes `q^alpha_i = a^{alpha gamma}_{ik} d_gamma u_k` on the padded grid.
    fn flux_grid(&self, u: &[Complex<T>]) -> Vec<Vec<T>> {
        let (d, l, nm) = (self.dim, self.sysdim, self.modes());
        let two_pi = T::two_pi();
        let mut grads: Vec<Vec<T>> = Vec::with_capacity(d * l);
        for gamma in 0..d {
            for k in 0..l {
                let comp = &u[k * nm..(k + 1) * nm];
                let spectrum: Vec<Complex<T>> = comp
                    .iter()
                    .zip(&self.waves)
                    .map(|(v, w)| *v * Complex::new(T::zero(), two_pi * T::of_i64(w[gamma])))
                    .collect();
                let mut padded = fft::pad(&spectrum, self.n, self.m, d);
                self.plan_m.inverse(&mut padded);
                grads.push(padded.iter().map(|v| v.re).collect());
            }
        }
        let total = self.plan_m.len();
        let mut flux = vec![vec![T::zero(); total]; d * l];
        for alpha in 0..d {
            for i in 0..l {
                let out = &mut flux[alpha * l + i];
                for gamma in 0..d {
                    for k in 0..l {
                        let coef = &self.a_grid[self.entry(alpha, gamma, i, k)];
                        let g = &grads[gamma * l + k];
                        for ((o, c), gv) in out.iter_mut().zip(coef).zip(g) {
                            *o = *o + *c * *gv;
                        }
                    }
                }
            }
        }
        flux
    }

    /// Torus means of the fluxes of `u`, indexed `[alpha * L + i]`.
    pub fn flux_mean(&self, u: &[Complex<T>]) -> Vec<T> {
        let total = T::of_i64(self.plan_m.len() as i64);
        self.flux_grid(u)
            .iter()
            .map(|q| q.iter().copied().sum::<T>() / total)
            .collect()
    }

    /// Galerkin application `(A u)_i(k) = -2 pi i k_alpha qhat^alpha_i(k)`.
    pub fn apply(&self, u: &[Complex<T>]) -> Vec<Complex<T>> {
        let (d, l, nm) = (self.dim, self.sysdim, self.modes());
        let two_pi = T::two_pi();
        let flux = self.flux_grid(u);
        let mut out = vec![Complex::default(); l * nm];
        for alpha in 0..d {
            for i in 0..l {
                let mut spectrum: Vec<Complex<T>> =
                    flux[alpha * l + i].iter().map(|&v| Complex::new(v, T::zero())).collect();
                self.plan_m.forward(&mut spectrum);
                let coarse = fft::truncate(&spectrum, self.m, self.n, d);
                let dst = &mut out[i * nm..(i + 1) * nm];
                for (idx, (o, q)) in dst.iter_mut().zip(&coarse).enumerate() {
                    if self.active[idx] {
                        let f = Complex::new(T::zero(), -two_pi * T::of_i64(self.waves[idx][alpha]));
                        *o = *o + f * *q;
                    }
                }
            }
        }
        out
    }

    /// Inverse of the constant-coefficient operator `c_ref |2 pi k|^2` on active nonzero modes.
    pub fn precondition(&self, r: &[Complex<T>]) -> Vec<Complex<T>> {
        let nm = self.modes();
        let four_pi2 = T::two_pi() * T::two_pi();
        r.iter()
            .enumerate()
            .map(|(pos, v)| {
                let idx = pos % nm;
                let k2: i64 = self.waves[idx].iter().map(|c| c * c).sum();
                if !self.active[idx] || k2 == 0 {
                    Complex::default()
                } else {
                    *v / (self.c_ref * four_pi2 * T::of_i64(k2))
                }
            })
            .collect()
    }

    /// Zero the mean and the inactive (Nyquist) modes.
    pub fn project(&self, u: &mut [Complex<T>]) {
        let nm = self.modes();
        for (pos, v) in u.iter_mut().enumerate() {
            let idx = pos % nm;
            if !self.active[idx] || self.waves[idx].iter().all(|&c| c == 0) {
                *v = Complex::default();
            }
        }
    }

    /// Right-hand side `d_alpha a^{alpha beta}_{ij}` for corrector column `(beta, j)`.
    pub fn corrector_rhs(&self, a: &PeriodicTensor<T>, beta: usize, j: usize) -> Vec<Complex<T>> {
        let (d, l, nm) = (self.dim, self.sysdim, self.modes());
        let mut f = vec![Complex::default(); l * nm];
        for (xi, c) in a.modes() {
            let idx: Option<Vec<usize>> = xi.iter().map(|&k| fft::slot(k, self.n)).collect();
            let Some(idx) = idx else { continue };
            let flat = fft::flatten(&idx, self.n);
            if !self.active[flat] {
                continue;
            }
            for i in 0..l {
                let mut acc = Complex::default();
                for alpha in 0..d {
                    let ik = Complex::new(T::zero(), T::two_pi() * T::of_i64(xi[alpha]));
                    acc = acc + ik * c[a.index(alpha, beta, i, j)];
                }
                f[i * nm + flat] = acc;
            }
        }
        f
    }
}

#[inline]
pub(crate) fn dot<T: Scalar>(x: &[Complex<T>], y: &[Complex<T>]) -> T {
    x.iter().zip(y).fold(T::zero(), |acc, (a, b)| acc + a.re * b.re + a.im * b.im)
}

/// Outcome of a preconditioned Krylov solve.
#[derive(Clone, Debug)]
pub struct SolveStats {
    pub iterations: usize,
    /// Final `||b - A x|| / ||b||` (absolute when `b = 0`).
    pub residual: f64,
}

/// Preconditioned conjugate gradients on a Hermitian positive semi-definite operator.
pub fn pcg<T, A, P>(apply: A, precond: P, b: &[Complex<T>], tol: T, max_iter: usize) -> Result<(Vec<Complex<T>>, SolveStats)>
where
    T: Scalar,
    A: Fn(&[Complex<T>]) -> Vec<Complex<T>>,
    P: Fn(&[Complex<T>]) -> Vec<Complex<T>>,
{
    let bnorm = dot(b, b).sqrt();
    let mut x = vec![Complex::default(); b.len()];
    if bnorm == T::zero() {
        return Ok((x, SolveStats { iterations: 0, residual: 0.0 }));
    }
    let mut r = b.to_vec();
    let mut z = precond(&r);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    for it in 0..max_iter {
        let rnorm = dot(&r, &r).sqrt() / bnorm;
        if rnorm <= tol {
            return Ok((x, SolveStats { iterations: it, residual: rnorm.f64() }));
        }
        let ap = apply(&p);
        let pap = dot(&p, &ap);
        if pap <= T::zero() {
            return Err(Error::NoConvergence(format!("indefinite direction at iteration {it}")));
        }
        let alpha = rz / pap;
        for (xi, pi) in x.iter_mut().zip(&p) {
            *xi = *xi + *pi * alpha;
        }
        for (ri, api) in r.iter_mut().zip(&ap) {
            *ri = *ri - *api * alpha;
        }
        z = precond(&r);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for (pi, zi) in p.iter_mut().zip(&z) {
            *pi = *zi + *pi * beta;
        }
    }
    let rnorm = (dot(&r, &r).sqrt() / bnorm).f64();
    if rnorm <= tol.f64() {
        return Ok((x, SolveStats { iterations: max_iter, residual: rnorm }));
    }
    Err(Error::NoConvergence(format!(
        "relative residual {rnorm:.3e} after {max_iter} iterations (tolerance {tol})"
    )))
}

/// Preconditioned BiCGStab for non-Hermitian operators.
pub fn bicgstab<T, A, P>(apply: A, precond: P, b: &[Complex<T>], tol: T, max_iter: usize) -> Result<(Vec<Complex<T>>, SolveStats)>
where
    T: Scalar,
    A: Fn(&[Complex<T>]) -> Vec<Complex<T>>,
    P: Fn(&[Complex<T>]) -> Vec<Complex<T>>,
{
    let zero = Complex::new(T::zero(), T::zero());
    let one = Complex::new(T::one(), T::zero());
    let cdot = |x: &[Complex<T>], y: &[Complex<T>]| x.iter().zip(y).fold(zero, |s, (a, b)| s + a.conj() * *b);
    let norm = |x: &[Complex<T>]| dot(x, x).sqrt();
    let bnorm = norm(b);
    let mut x = vec![zero; b.len()];
    if bnorm == T::zero() {
        return Ok((x, SolveStats { iterations: 0, residual: 0.0 }));
    }
    let mut r = b.to_vec();
    let r0 = r.clone();
    let (mut rho, mut alpha, mut omega) = (one, one, one);
    let mut v = vec![zero; b.len()];
    let mut p = vec![zero; b.len()];
    for it in 0..max_iter {
        let res = norm(&r) / bnorm;
        if res <= tol {
            return Ok((x, SolveStats { iterations: it, residual: res.f64() }));
        }
        let rho_new = cdot(&r0, &r);
        if rho_new.norm() == T::zero() || omega.norm() == T::zero() {
            return Err(Error::NoConvergence(format!("BiCGStab breakdown at iteration {it}")));
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for k in 0..p.len() {
            p[k] = r[k] + beta * (p[k] - omega * v[k]);
        }
        let ph = precond(&p);
        v = apply(&ph);
        alpha = rho / cdot(&r0, &v);
        let s: Vec<Complex<T>> = r.iter().zip(&v).map(|(ri, vi)| *ri - alpha * *vi).collect();
        let sh = precond(&s);
        let t = apply(&sh);
        let tt = cdot(&t, &t);
        omega = if tt.norm() > T::zero() { cdot(&t, &s) / tt } else { zero };
        for k in 0..x.len() {
            x[k] = x[k] + alpha * ph[k] + omega * sh[k];
            r[k] = s[k] - omega * t[k];
        }
    }
    let res = (norm(&r) / bnorm).f64();
    if res <= tol.f64() {
        return Ok((x, SolveStats { iterations: max_iter, residual: res }));
    }
    Err(Error::NoConvergence(format!("BiCGStab: relative residual {res:.3e} after {max_iter} iterations")))
}

/// Correctors `chi^beta` and the homogenized tensor.
#[derive(Clone, Debug)]
pub struct CellSolution<T: Scalar> {
    dim: usize,
    sysdim: usize,
    resolution: usize,
    /// `chi[beta][(i * L + j) * N^d + flat]`: Fourier coefficients of `chi^beta_{ij}`.
    chi: Vec<Vec<Complex<T>>>,
    abar: Vec<T>,
    /// Largest relative residual over all corrector columns.
    pub residual: f64,
    pub iterations: usize,
}

/// Solve all corrector columns and assemble the homogenized tensor.
pub fn solve_corrector<T: Scalar>(a: &PeriodicTensor<T>, resolution: usize, tol: T) -> Result<CellSolution<T>> {
    if resolution < 8 || !resolution.is_power_of_two() {
        return Err(Error::InvalidInput(format!("resolution must be a power of two >= 8, got {resolution}")));
    }
    if tol <= T::zero() {
        return Err(Error::InvalidInput("tolerance must be positive".into()));
    }
    let op = GalerkinOperator::new(a, resolution)?;
    let (d, l, nm) = (a.dim(), a.sysdim(), op.modes());
    let max_iter = 10 * resolution;
    let symmetric = a.is_symmetric(T::lit(1e-14));
    let mut chi = Vec::with_capacity(d);
    let mut residual = 0.0f64;
    let mut iterations = 0;
    for beta in 0..d {
        let mut chi_beta = vec![Complex::default(); l * l * nm];
        for j in 0..l {
            let mut f = op.corrector_rhs(a, beta, j);
            op.project(&mut f);
            let apply = |u: &[Complex<T>]| {
                let mut v = op.apply(u);
                op.project(&mut v);
                v
            };
            let pre = |r: &[Complex<T>]| op.precondition(r);
            let (mut col, stats) = if symmetric {
                pcg(apply, pre, &f, tol, max_iter)?
            } else {
                bicgstab(apply, pre, &f, tol, max_iter)?
            };
            op.project(&mut col);
            residual = residual.max(stats.residual);
            iterations += stats.iterations;
            for i in 0..l {
                chi_beta[(i * l + j) * nm..(i * l + j + 1) * nm].copy_from_slice(&col[i * nm..(i + 1) * nm]);
            }
        }
        chi.push(chi_beta);
    }
    let mut sol = CellSolution {
        dim: d,
        sysdim: l,
        resolution,
        chi,
        abar: Vec::new(),
        residual,
        iterations,
    };
    sol.abar = homogenized_tensor_with(&sol, a, &op)?;
    Ok(sol)
}

/// Correctors of the adjoint tensor `a*`.
pub fn adjoint_corrector<T: Scalar>(a: &PeriodicTensor<T>, resolution: usize, tol: T) -> Result<CellSolution<T>> {
    solve_corrector(&a.adjoint(), resolution, tol)
}

/// `abar^{alpha beta} = <a^{alpha beta}> + <a^{alpha gamma} d_gamma chi^beta>`.
pub fn homogenized_tensor<T: Scalar>(sol: &CellSolution<T>, a: &PeriodicTensor<T>) -> Result<Vec<T>> {
    if a.dim() != sol.dim || a.sysdim() != sol.sysdim {
        return Err(Error::InvalidInput("cell solution and tensor have different shapes".into()));
    }
    let op = GalerkinOperator::new(a, sol.resolution)?;
    homogenized_tensor_with(sol, a, &op)
}

fn homogenized_tensor_with<T: Scalar>(
    sol: &CellSolution<T>,
    a: &PeriodicTensor<T>,
    op: &GalerkinOperator<T>,
) -> Result<Vec<T>> {
    if op.resolution() != sol.resolution {
        return Err(Error::InvalidInput(format!(
            "resolution mismatch: solution {} vs operator {}",
            sol.resolution,
            op.resolution()
        )));
    }
    let (d, l, nm) = (sol.dim, sol.sysdim, op.modes());
    let mut abar = a.mean();
    for beta in 0..d {
        for j in 0..l {
            let mut col = vec![Complex::default(); l * nm];
            for i in 0..l {
                col[i * nm..(i + 1) * nm].copy_from_slice(sol.column(beta, i, j));
            }
            let means = op.flux_mean(&col);
            for alpha in 0..d {
                for i in 0..l {
                    let e = a.index(alpha, beta, i, j);
                    abar[e] = abar[e] + means[alpha * l + i];
                }
            }
        }
    }
    Ok(abar)
}

impl<T: Scalar> CellSolution<T> {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn sysdim(&self) -> usize {
        self.sysdim
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    /// Homogenized tensor, flat `(d, d, L, L)` like [`PeriodicTensor::index`].
    pub fn abar(&self) -> &[T] {
        &self.abar
    }

    #[inline]
    pub fn abar_entry(&self, alpha: usize, beta: usize, i: usize, j: usize) -> T {
        self.abar[((alpha * self.dim + beta) * self.sysdim + i) * self.sysdim + j]
    }

    fn modes(&self) -> usize {
        self.resolution.pow(self.dim as u32)
    }

    /// Fourier coefficients of `chi^beta_{ij}` on the `N^d` layout of [`fft`].
    pub fn column(&self, beta: usize, i: usize, j: usize) -> &[Complex<T>] {
        let nm = self.modes();
        let c = i * self.sysdim + j;
        &self.chi[beta][c * nm..(c + 1) * nm]
    }

    /// `chi^beta(y)` as a row-major `L x L` matrix.
    pub fn chi_at(&self, beta: usize, y: &[T]) -> Vec<T> {
        let waves = fft::wavevectors(self.resolution, self.dim);
        let l = self.sysdim;
        let mut out = vec![T::zero(); l * l];
        for i in 0..l {
            for j in 0..l {
                out[i * l + j] = self
                    .column(beta, i, j)
                    .iter()
                    .zip(&waves)
                    .fold(T::zero(), |acc, (c, k)| {
                        let arg = k.iter().zip(y).fold(T::zero(), |s, (&kk, &yy)| s + T::of_i64(kk) * yy)
                            * T::two_pi();
                        acc + (*c * Complex::new(arg.cos(), arg.sin())).re
                    });
            }
        }
        out
    }

    /// `chi^beta_{ij}` on the uniform `N^d` grid.
    pub fn chi_grid(&self, beta: usize, i: usize, j: usize) -> Vec<T> {
        let plan = NdFft::<T>::new(self.resolution, self.dim);
        let mut v = self.column(beta, i, j).to_vec();
        plan.inverse(&mut v);
        v.iter().map(|c| c.re).collect()
    }

    /// Modes of `sum_beta w_beta chi^beta_{ij}` resampled onto an `n^d` layout.
    pub fn contracted_modes(&self, weights: &[T], i: usize, j: usize, n: usize) -> Vec<Complex<T>> {
        let nm = self.modes();
        let mut acc = vec![Complex::default(); nm];
        for (beta, &w) in weights.iter().enumerate() {
            for (a, c) in acc.iter_mut().zip(self.column(beta, i, j)) {
                *a = *a + *c * w;
            }
        }
        resample(&acc, self.resolution, n, self.dim)
    }

    /// Modes of `n_alpha d_alpha chi^beta_{ij} n_beta` resampled onto an `n^d` layout.
    pub fn normal_gradient_modes(&self, normal: &[T], i: usize, j: usize, n: usize) -> Vec<Complex<T>> {
        let waves = fft::wavevectors(self.resolution, self.dim);
        let contracted = self.contracted_modes(normal, i, j, self.resolution);
        let spectrum: Vec<Complex<T>> = contracted
            .iter()
            .zip(&waves)
            .map(|(c, k)| {
                let kn = k.iter().zip(normal).fold(T::zero(), |s, (&kk, &nn)| s + T::of_i64(kk) * nn);
                *c * Complex::new(T::zero(), T::two_pi() * kn)
            })
            .collect();
        resample(&spectrum, self.resolution, n, self.dim)
    }
}

/// Pad or truncate a spectral array between resolutions.
pub fn resample<T: Scalar>(src: &[Complex<T>], from: usize, to: usize, dim: usize) -> Vec<Complex<T>> {
    match from.cmp(&to) {
        std::cmp::Ordering::Equal => src.to_vec(),
        std::cmp::Ordering::Less => fft::pad(src, from, to, dim),
        std::cmp::Ordering::Greater => {
            let mut out = fft::truncate(src, from, to, dim);
            // drop the target Nyquist row so the result stays conjugate-symmetric
            let half = (to / 2) as i64;
            for (v, k) in out.iter_mut().zip(fft::wavevectors(to, dim)) {
                if k.iter().any(|c| c.abs() >= half) {
                    *v = Complex::default();
                }
            }
            out
        }
    }
}

/// Symmetric-part eigenvalue range of a constant `(d, d, L, L)` tensor.
pub fn rayleigh_range(t: &[f64], dim: usize, sysdim: usize) -> (f64, f64) {
    let nn = dim * sysdim;
    let mut mat = nalgebra::DMatrix::<f64>::zeros(nn, nn);
    for alpha in 0..dim {
        for beta in 0..dim {
            for i in 0..sysdim {
                for j in 0..sysdim {
                    let v = t[((alpha * dim + beta) * sysdim + i) * sysdim + j];
                    mat[(alpha * sysdim + i, beta * sysdim + j)] += 0.5 * v;
                    mat[(beta * sysdim + j, alpha * sysdim + i)] += 0.5 * v;
                }
            }
        }
    }
    let eig = mat.symmetric_eigenvalues();
    (eig.min(), eig.max())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn sin_laminate() -> PeriodicTensor<f64> {
        let coef = BTreeMap::from([
            (vec![0, 0], Complex::new(2.0, 0.0)),
            (vec![1, 0], Complex::new(0.0, -0.5)),
            (vec![-1, 0], Complex::new(0.0, 0.5)),
        ]);
        PeriodicTensor::scalar_multiple(2, 1, 0.3, &coef).unwrap()
    }

    fn checker() -> PeriodicTensor<f64> {
        // 2 + sin(2 pi y1) sin(2 pi y2)
        let mut coef = BTreeMap::from([(vec![0, 0], Complex::new(2.0, 0.0))]);
        for (k, s) in [([1, 1], -0.25), ([-1, -1], -0.25), ([1, -1], 0.25), ([-1, 1], 0.25)] {
            coef.insert(k.to_vec(), Complex::new(s, 0.0));
        }
        PeriodicTensor::scalar_multiple(2, 1, 0.3, &coef).unwrap()
    }

    #[test]
    fn constant_coefficients_have_zero_corrector() {
        let a = PeriodicTensor::constant(2, 1, 0.2, &[2.0, 0.5, 0.5, 1.0]).unwrap();
        let sol = solve_corrector(&a, 8, 1e-10).unwrap();
        assert!(sol.column(0, 0, 0).iter().all(|c| c.norm() == 0.0));
        assert_eq!(sol.abar(), &[2.0, 0.5, 0.5, 1.0]);
        let adj = adjoint_corrector(&a, 8, 1e-10).unwrap();
        assert!(adj.column(1, 0, 0).iter().all(|c| c.norm() == 0.0));
    }

    #[test]
    fn laminate_means() {
        let sol = solve_corrector(&sin_laminate(), 64, 1e-12).unwrap();
        // harmonic mean of 2 + sin is sqrt(3); arithmetic mean is 2
        assert!((sol.abar_entry(0, 0, 0, 0) - 3f64.sqrt()).abs() < 1e-10, "{:?}", sol.abar());
        assert!((sol.abar_entry(1, 1, 0, 0) - 2.0).abs() < 1e-12);
        assert!(sol.abar_entry(0, 1, 0, 0).abs() < 1e-12);
        assert!(sol.residual <= 1e-12);
    }

    #[test]
    fn corrector_has_zero_mean_and_satisfies_energy_identity() {
        let a = checker();
        let op = GalerkinOperator::new(&a, 32).unwrap();
        let sol = solve_corrector(&a, 32, 1e-12).unwrap();
        for beta in 0..2 {
            let chi = sol.column(beta, 0, 0);
            assert_eq!(chi[0], Complex::default());
            let mut f = op.corrector_rhs(&a, beta, 0);
            op.project(&mut f);
            let form = dot(chi, &op.apply(chi));
            let work = dot(&f, chi);
            assert!((form - work).abs() < 1e-10 * work.abs().max(1e-30));
        }
    }

    #[test]
    fn symmetric_coefficients_give_symmetric_abar_and_equal_adjoint() {
        let a = checker();
        let sol = solve_corrector(&a, 32, 1e-11).unwrap();
        let adj = adjoint_corrector(&a, 32, 1e-11).unwrap();
        assert!((sol.abar_entry(0, 1, 0, 0) - sol.abar_entry(1, 0, 0, 0)).abs() < 1e-10);
        for beta in 0..2 {
            for (x, y) in sol.column(beta, 0, 0).iter().zip(adj.column(beta, 0, 0)) {
                assert!((x - y).norm() < 1e-9);
            }
        }
        let (lo, hi) = rayleigh_range(sol.abar(), 2, 1);
        assert!(lo > 0.0 && hi < 3.0);
    }

    #[test]
    fn adjoint_duality_for_non_symmetric_tensor() {
        // a = (2 + 0.5 cos 2pi y1) Id + skew part 0.3 sin(2 pi y2) on the off diagonal
        let w = 4;
        let mut modes = crate::fields::ModeTable::<f64>::new();
        modes.insert(vec![0, 0], vec![Complex::new(2.0, 0.0), Complex::new(0.1, 0.0), Complex::new(-0.1, 0.0), Complex::new(2.0, 0.0)]);
        let c = Complex::new(0.25, 0.0);
        modes.insert(vec![1, 0], vec![c, Complex::default(), Complex::default(), c]);
        modes.insert(vec![-1, 0], vec![c, Complex::default(), Complex::default(), c]);
        let s = Complex::new(0.0, -0.15);
        modes.insert(vec![0, 1], vec![Complex::default(), s, -s, Complex::default()]);
        modes.insert(vec![0, -1], vec![Complex::default(), s.conj(), -s.conj(), Complex::default()]);
        assert_eq!(modes[&vec![0, 0]].len(), w);
        let a = PeriodicTensor::new(2, 1, 0.2, modes).unwrap();
        let sol = solve_corrector(&a, 64, 1e-12).unwrap();
        let adj = adjoint_corrector(&a, 64, 1e-12).unwrap();
        for alpha in 0..2 {
            for beta in 0..2 {
                let lhs = adj.abar_entry(alpha, beta, 0, 0);
                let rhs = sol.abar_entry(beta, alpha, 0, 0);
                assert!((lhs - rhs).abs() < 1e-8, "{alpha}{beta}: {lhs} vs {rhs}");
            }
        }
    }

    #[test]
    fn spectral_self_convergence() {
        let a = checker();
        let v: Vec<f64> = [16, 32, 64]
            .iter()
            .map(|&n| solve_corrector(&a, n, 1e-13).unwrap().abar_entry(0, 0, 0, 0))
            .collect();
        let d1 = (v[1] - v[0]).abs();
        let d2 = (v[2] - v[1]).abs();
        assert!(d2 <= (d1 / 64.0).max(1e-13), "{d1} {d2}");
    }

    #[test]
    fn rejects_bad_resolution() {
        assert!(solve_corrector(&sin_laminate(), 12, 1e-10).is_err());
        assert!(solve_corrector(&sin_laminate(), 4, 1e-10).is_err());
        assert!(solve_corrector(&sin_laminate(), 16, 0.0).is_err());
    }

    #[test]
    fn single_precision_solve() {
        let coef = BTreeMap::from([
            (vec![0, 0], Complex::new(2.0f32, 0.0)),
            (vec![1, 0], Complex::new(0.0, -0.5)),
            (vec![-1, 0], Complex::new(0.0, 0.5)),
        ]);
        let a = PeriodicTensor::scalar_multiple(2, 1, 0.3f32, &coef).unwrap();
        let sol = solve_corrector(&a, 32, 1e-5f32).unwrap();
        assert!((sol.abar_entry(0, 0, 0, 0) - 3f32.sqrt()).abs() < 1e-4);
    }
}
