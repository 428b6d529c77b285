//! Quasiperiodic integrals `int Psi(z) K(N z / eta) dz` over tangent planes and the
//! Fourier-side bound on their deviation from `Khat(0) int Psi`.
//!
//! Windows are tensor products of a one-dimensional profile, so every mixed
//! derivative factorizes and `|grad^k Psi|` (Frobenius) is available pointwise.

use crate::dioph::{Direction, Frame};
use crate::error::{Error, Result};
use crate::fields::PeriodicField;
use crate::mollifier;
use crate::quad;
use crate::scalar::{Complex, Scalar};

/// Highest derivative order for which window norms are tabulated.
pub const K_MAX: usize = mollifier::MAX_ORDER;

const QUAD_TOL: f64 = 1e-10;
const MAX_PANELS: usize = 200_000;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Profile<T: Scalar> {
    /// `exp(-pi z^2 / sigma^2)`.
    Gaussian { sigma: T },
    /// The partition bump of width `size` centred at 0.
    Bump { size: T },
}

impl<T: Scalar> Profile<T> {
    /// Derivatives `phi^{(j)}(z)`, `j = 0..=K_MAX`.
    pub fn derivs(&self, z: T) -> [T; K_MAX + 1] {
        match *self {
            Profile::Gaussian { sigma } => {
                // phi^{(j)}(z) = sigma^{-j} p_j(u) e^{-pi u^2}, p_{j+1} = p_j' - 2 pi u p_j
                let u = z / sigma;
                let g = (-T::PI() * u * u).exp();
                let mut out = [T::zero(); K_MAX + 1];
                let mut p = vec![T::one()];
                let mut scale = T::one();
                for (j, o) in out.iter_mut().enumerate() {
                    let val = p.iter().rev().fold(T::zero(), |acc, &c| acc * u + c);
                    *o = val * g * scale;
                    if j == K_MAX {
                        break;
                    }
                    let mut next = vec![T::zero(); p.len() + 1];
                    for (deg, &c) in p.iter().enumerate() {
                        if deg > 0 {
                            next[deg - 1] = next[deg - 1] + c * T::of_i64(deg as i64);
                        }
                        next[deg + 1] = next[deg + 1] - T::two_pi() * c;
                    }
                    p = next;
                    scale = scale / sigma;
                }
                out
            }
            Profile::Bump { size } => mollifier::bump_derivs(z, T::zero(), size),
        }
    }

    /// Interval outside which the profile and its derivatives vanish or are below round-off.
    pub fn half_width(&self) -> T {
        match *self {
            Profile::Gaussian { sigma } => sigma * T::lit(4.5),
            Profile::Bump { size } => size * T::lit(2.0) / T::lit(3.0),
        }
    }

    pub fn integral(&self) -> T {
        match *self {
            Profile::Gaussian { sigma } => sigma,
            Profile::Bump { size } => size,
        }
    }
}

/// Tensor-product window on `R^{d-1}`.
#[derive(Clone, Debug)]
pub struct SmoothWindow<T: Scalar> {
    profile: Profile<T>,
    tdim: usize,
    /// `int |phi^{(j)}|`.
    profile_norms: [T; K_MAX + 1],
    /// `int |grad^k Psi|` with the Frobenius norm.
    grad_norms: [T; K_MAX + 1],
}

fn binom(n: usize, k: usize) -> i64 {
    (0..k).fold(1i64, |acc, i| acc * (n - i) as i64 / (i + 1) as i64)
}

impl<T: Scalar> SmoothWindow<T> {
    pub fn new(profile: Profile<T>, tdim: usize) -> Result<Self> {
        if !(1..=2).contains(&tdim) {
            return Err(Error::InvalidInput(format!("window dimension must be 1 or 2, got {tdim}")));
        }
        let width = match profile {
            Profile::Gaussian { sigma } => sigma,
            Profile::Bump { size } => size,
        };
        if !(width > T::zero()) || !width.is_finite() {
            return Err(Error::InvalidInput(format!("window width must be positive, got {width}")));
        }
        let mut w = Self { profile, tdim, profile_norms: [T::zero(); K_MAX + 1], grad_norms: [T::zero(); K_MAX + 1] };
        for j in 0..=K_MAX {
            w.profile_norms[j] = w.abs_profile_integral(j)?;
        }
        for k in 0..=K_MAX {
            w.grad_norms[k] = if tdim == 1 { w.profile_norms[k] } else { w.frobenius_integral_2d(k)? };
        }
        Ok(w)
    }

    pub fn gaussian(sigma: T, tdim: usize) -> Result<Self> {
        Self::new(Profile::Gaussian { sigma }, tdim)
    }

    pub fn bump(size: T, tdim: usize) -> Result<Self> {
        Self::new(Profile::Bump { size }, tdim)
    }

    pub fn profile(&self) -> Profile<T> {
        self.profile
    }

    pub fn tdim(&self) -> usize {
        self.tdim
    }

    pub fn eval(&self, z: &[T]) -> T {
        z.iter().fold(T::one(), |acc, &c| acc * self.profile.derivs(c)[0])
    }

    pub fn integral(&self) -> T {
        self.profile.integral().powi(self.tdim as i32)
    }

    /// `int |grad^k Psi|`.
    pub fn grad_norm(&self, k: usize) -> Result<T> {
        self.grad_norms
            .get(k)
            .copied()
            .ok_or_else(|| Error::InvalidInput(format!("derivative order {k} exceeds {K_MAX}")))
    }

    /// `int |phi^{(j)}|` by splitting at the sign changes of `phi^{(j)}`.
    fn abs_profile_integral(&self, j: usize) -> Result<T> {
        let r = self.profile.half_width();
        let samples = 2000;
        let f = |z: T| self.profile.derivs(z)[j];
        let mut breaks = vec![-r];
        let h = r * T::lit(2.0) / T::of_i64(samples);
        let mut prev = f(-r);
        for i in 1..=samples {
            let x = -r + h * T::of_i64(i);
            let cur = f(x);
            if prev * cur < T::zero() {
                let (mut lo, mut hi) = (x - h, x);
                for _ in 0..200 {
                    let mid = (lo + hi) * T::lit(0.5);
                    if mid <= lo || mid >= hi {
                        break;
                    }
                    if f(lo) * f(mid) <= T::zero() {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                breaks.push((lo + hi) * T::lit(0.5));
            }
            if cur != T::zero() {
                prev = cur;
            }
        }
        breaks.push(r);
        let fine: Vec<T> = (0..=64).map(|i| -r + r * T::lit(2.0) * T::of_i64(i) / T::lit(64.0)).collect();
        let scale = quad::rough_abs(f, &fine);
        let tol = T::lit(1e-12).max(T::epsilon() * T::lit(64.0)) * scale;
        quad::integrate_pieces(|z| f(z).abs(), &breaks, tol, MAX_PANELS)
    }

    /// `int int sqrt(sum_m C(k,m) (phi^{(m)}(z1) phi^{(k-m)}(z2))^2)`.
    fn frobenius_integral_2d(&self, k: usize) -> Result<T> {
        let r = self.profile.half_width();
        // the Frobenius norm is bounded by the sum of the factorized terms
        let tol = T::lit(1e-10).max(T::epsilon() * T::lit(1024.0))
            * (0..=k).fold(T::zero(), |acc, m| {
                acc + T::of_i64(binom(k, m)).sqrt() * self.profile_norms[m] * self.profile_norms[k - m]
            });
        let weights: Vec<T> = (0..=k).map(|m| T::of_i64(binom(k, m))).collect();
        let outer = |z1: T| -> T {
            let d1 = self.profile.derivs(z1);
            let inner = |z2: T| {
                let d2 = self.profile.derivs(z2);
                (0..=k)
                    .fold(T::zero(), |acc, m| acc + weights[m] * (d1[m] * d2[k - m]).powi(2))
                    .sqrt()
            };
            quad::integrate(inner, -r, r, tol / (r * T::lit(4.0)), MAX_PANELS).unwrap_or_else(|_| T::nan())
        };
        let v = quad::integrate(outer, -r, r, tol, MAX_PANELS)?;
        if v.is_nan() {
            return Err(Error::NoConvergence("inner quadrature of the window derivative norm".into()));
        }
        Ok(v)
    }
}

fn check_shapes<T: Scalar>(psi: &SmoothWindow<T>, k: &PeriodicField<T>, frame: &Frame<T>) -> Result<()> {
    if k.sysdim() != 1 {
        return Err(Error::InvalidInput(format!("K must be scalar, got {} components", k.sysdim())));
    }
    if k.dim() != frame.dim() || psi.tdim() + 1 != frame.dim() {
        return Err(Error::InvalidInput(format!(
            "dimension mismatch: K on R^{}, frame in R^{}, window on R^{}",
            k.dim(),
            frame.dim(),
            psi.tdim()
        )));
    }
    Ok(())
}

/// Mode sum `sum Khat(xi) Psihat(N^T xi / eta)` with the closed-form Gaussian transform.
pub fn integral_by_modes<T: Scalar>(
    psi: &SmoothWindow<T>,
    k: &PeriodicField<T>,
    frame: &Frame<T>,
    eta: T,
) -> Result<Complex<T>> {
    check_shapes(psi, k, frame)?;
    if !(eta > T::zero()) {
        return Err(Error::InvalidInput(format!("eta must be positive, got {eta}")));
    }
    let Profile::Gaussian { sigma } = psi.profile() else {
        return Err(Error::InvalidInput("closed-form transform needs a Gaussian window".into()));
    };
    let mass = psi.integral();
    let mut acc = Complex::new(T::zero(), T::zero());
    for (xi, c) in k.modes() {
        let v = frame.nt_lattice(xi);
        let f2 = v.iter().fold(T::zero(), |s, &x| s + x * x) / (eta * eta);
        acc = acc + c[0] * (mass * (-T::PI() * sigma * sigma * f2).exp());
    }
    Ok(acc)
}

/// Direct adaptive quadrature of `Psi(z) K(N z / eta)` over the window support.
pub fn integral_by_quadrature<T: Scalar>(
    psi: &SmoothWindow<T>,
    k: &PeriodicField<T>,
    frame: &Frame<T>,
    eta: T,
) -> Result<T> {
    check_shapes(psi, k, frame)?;
    if !(eta > T::zero()) {
        return Err(Error::InvalidInput(format!("eta must be positive, got {eta}")));
    }
    let r = psi.profile().half_width();
    // panels no wider than a fraction of the fastest tangential period
    let fastest = k
        .modes()
        .keys()
        .map(|xi| frame.nt_lattice(xi).iter().fold(T::zero(), |s, &x| s + x * x).sqrt())
        .fold(T::zero(), T::max)
        / eta;
    let pieces = ((r * T::lit(2.0) * fastest).ceil().to_usize().unwrap_or(1)).clamp(1, 100_000);
    let breaks: Vec<T> = (0..=pieces)
        .map(|i| -r + r * T::lit(2.0) * T::of_i64(i as i64) / T::of_i64(pieces as i64))
        .collect();
    let scale = psi.integral() * k.modes().values().fold(T::zero(), |s, c| s + c[0].norm());
    let tol = T::lit(QUAD_TOL).max(T::epsilon() * T::lit(256.0)) * scale.max(T::epsilon());
    let kval = |z: &[T]| {
        let x = frame.n_apply(z);
        let y: Vec<T> = x.iter().map(|&v| v / eta).collect();
        k.evaluate(&y)[0]
    };
    match psi.tdim() {
        1 => quad::integrate_pieces(|z| psi.eval(&[z]) * kval(&[z]), &breaks, tol, MAX_PANELS),
        _ => {
            let mut failed = false;
            let outer = |z1: T| {
                let inner = |z2: T| psi.eval(&[z1, z2]) * kval(&[z1, z2]);
                match quad::integrate_pieces(inner, &breaks, tol / (r * T::lit(4.0)), MAX_PANELS) {
                    Ok(v) => v,
                    Err(_) => {
                        failed = true;
                        T::zero()
                    }
                }
            };
            let v = quad::integrate_pieces(outer, &breaks, tol, MAX_PANELS)?;
            if failed {
                return Err(Error::NoConvergence("inner quasiperiodic quadrature".into()));
            }
            Ok(v)
        }
    }
}

/// Gaussian windows use the exact mode sum; other windows use adaptive quadrature.
pub fn quasiperiodic_integral<T: Scalar>(
    psi: &SmoothWindow<T>,
    k: &PeriodicField<T>,
    frame: &Frame<T>,
    eta: T,
) -> Result<Complex<T>> {
    match psi.profile() {
        Profile::Gaussian { .. } => integral_by_modes(psi, k, frame, eta),
        Profile::Bump { .. } => integral_by_quadrature(psi, k, frame, eta).map(|v| Complex::new(v, T::zero())),
    }
}

/// `(eta / A)^k int|grad^k Psi| sum_{xi != 0} |Khat(xi)| |xi|^{kappa k}`.
pub fn ergodic_bound<T: Scalar>(
    psi: &SmoothWindow<T>,
    k_field: &PeriodicField<T>,
    dir: &Direction<T>,
    eta: T,
    k: usize,
) -> Result<T> {
    if dir.is_rational() {
        return Err(Error::RationalDirection(format!("A_lb = 0 for n = {:?}; the bound is vacuous", dir.n)));
    }
    if !(eta > T::zero()) {
        return Err(Error::InvalidInput(format!("eta must be positive, got {eta}")));
    }
    if k_field.mode_cutoff() > dir.xi as i64 {
        return Err(Error::InvalidInput(format!(
            "K has modes up to {} outside the certified lattice box {}",
            k_field.mode_cutoff(),
            dir.xi
        )));
    }
    let norm = psi.grad_norm(k)?;
    let mut sum = T::zero();
    for (xi, c) in k_field.modes() {
        if xi.iter().all(|&v| v == 0) {
            continue;
        }
        let len = T::of_i64(xi.iter().map(|v| v * v).sum::<i64>()).sqrt();
        sum = sum + c[0].norm() * len.powf(dir.kappa * T::of_i64(k as i64));
    }
    Ok((eta / dir.a_lb).powi(k as i32) * norm * sum)
}

/// Measured deviation with all requested bounds.
#[derive(Clone, Debug)]
pub struct QuadratureReport<T: Scalar> {
    pub value: Complex<T>,
    pub homogenized: T,
    pub error: T,
    pub bound_k: Vec<(usize, T)>,
    pub eta: T,
    pub a: T,
    pub kappa: T,
}

pub fn quadrature_report<T: Scalar>(
    psi: &SmoothWindow<T>,
    k_field: &PeriodicField<T>,
    dir: &Direction<T>,
    frame: &Frame<T>,
    eta: T,
    ks: &[usize],
) -> Result<QuadratureReport<T>> {
    let value = quasiperiodic_integral(psi, k_field, frame, eta)?;
    let homogenized = k_field.mean()[0] * psi.integral();
    let error = (value - Complex::new(homogenized, T::zero())).norm();
    let bound_k = ks
        .iter()
        .map(|&k| ergodic_bound(psi, k_field, dir, eta, k).map(|b| (k, b)))
        .collect::<Result<Vec<_>>>()?;
    Ok(QuadratureReport { value, homogenized, error, bound_k, eta, a: dir.a_lb, kappa: dir.kappa })
}

/// One row of the verification table.
#[derive(Clone, Debug)]
pub struct VerifyRow {
    pub eta: f64,
    pub k: usize,
    pub error: f64,
    pub bound: f64,
    pub pass: bool,
}

/// Absolute round-off allowance when comparing a measured error with its bound.
pub const ROUNDOFF_SLACK: f64 = 1e-10;

pub fn verify_ergodic<T: Scalar>(
    psi: &SmoothWindow<T>,
    k_field: &PeriodicField<T>,
    dir: &Direction<T>,
    frame: &Frame<T>,
    etas: &[T],
    ks: &[usize],
) -> Result<Vec<VerifyRow>> {
    let mut rows = Vec::with_capacity(etas.len() * ks.len());
    for &eta in etas {
        let rep = quadrature_report(psi, k_field, dir, frame, eta, ks)?;
        for &(k, bound) in &rep.bound_k {
            let (error, bound) = (rep.error.f64(), bound.f64());
            rows.push(VerifyRow { eta: eta.f64(), k, error, bound, pass: error <= bound + ROUNDOFF_SLACK });
        }
    }
    Ok(rows)
}

/// Least-squares slope of `log error` against `log eta` for one `k`, skipping zero errors.
pub fn error_slope(rows: &[VerifyRow], k: usize) -> Option<f64> {
    let pts: Vec<(f64, f64)> =
        rows.iter().filter(|r| r.k == k && r.error > 0.0).map(|r| (r.eta.ln(), r.error.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Some(sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dioph::{build_frame, dioph_constant, unit};
    use crate::fields::ModeTable;
    use std::f64::consts::PI;

    fn golden() -> Vec<f64> {
        unit(&[1.0, (1.0 + 5f64.sqrt()) / 2.0]).unwrap()
    }

    fn five_mode() -> PeriodicField<f64> {
        let mut m = ModeTable::new();
        m.insert(vec![0, 0], vec![Complex::new(0.7, 0.0)]);
        for (xi, c) in [([1, 0], Complex::new(0.3, 0.1)), ([0, 1], Complex::new(-0.2, 0.25)), ([1, -2], Complex::new(0.05, -0.1))] {
            m.insert(xi.to_vec(), vec![c]);
            m.insert(xi.iter().map(|v| -v).collect(), vec![c.conj()]);
        }
        PeriodicField::new(2, 1, m).unwrap()
    }

    #[test]
    fn gaussian_derivative_norms_have_closed_forms() {
        let w = SmoothWindow::<f64>::gaussian(1.0, 1).unwrap();
        assert!((w.integral() - 1.0).abs() < 1e-15);
        assert!((w.grad_norm(0).unwrap() - 1.0).abs() < 1e-12);
        // total variation of e^{-pi z^2} is 2; of its derivative 4 sqrt(2 pi) e^{-1/2}
        assert!((w.grad_norm(1).unwrap() - 2.0).abs() < 1e-11);
        let exact2 = 4.0 * (2.0 * PI).sqrt() * (-0.5f64).exp();
        assert!((w.grad_norm(2).unwrap() - exact2).abs() < 1e-10);
        let s = SmoothWindow::<f64>::gaussian(0.5, 1).unwrap();
        assert!((s.grad_norm(2).unwrap() - exact2 * 2.0).abs() < 1e-10);
    }

    #[test]
    fn bump_window_mass() {
        let w = SmoothWindow::<f64>::bump(0.3, 1).unwrap();
        assert!((w.grad_norm(0).unwrap() - 0.3).abs() < 1e-12);
        assert!((w.grad_norm(1).unwrap() - 2.0).abs() < 1e-10);
        let w2 = SmoothWindow::<f64>::bump(0.3, 2).unwrap();
        assert!((w2.grad_norm(0).unwrap() - 0.09).abs() < 1e-10);
    }

    #[test]
    fn constant_kernel_is_exact() {
        let k = PeriodicField::constant(2, &[1.7]);
        let f = build_frame(&golden()).unwrap();
        let dir = dioph_constant(&golden(), 1.5, 10).unwrap();
        for psi in [SmoothWindow::gaussian(0.8, 1).unwrap(), SmoothWindow::bump(0.8, 1).unwrap()] {
            let v = quasiperiodic_integral(&psi, &k, &f, 0.1).unwrap();
            assert!((v.re - 1.7 * psi.integral()).abs() < 1e-11);
            for kk in 1..=3 {
                assert_eq!(ergodic_bound(&psi, &k, &dir, 0.1, kk).unwrap(), 0.0);
            }
        }
    }

    #[test]
    fn single_cosine_gaussian_oracle() {
        let n = golden();
        let f = build_frame(&n).unwrap();
        let xi = [2i64, -1];
        let k = PeriodicField::cosine(&xi, 1.0, 0.0);
        let psi = SmoothWindow::gaussian(1.0, 1).unwrap();
        for eta in [4.0, 2.0, 1.0] {
            let proj = xi[0] as f64 * n[1] - xi[1] as f64 * n[0];
            let exact = (-PI * proj * proj / (eta * eta)).exp();
            let v = integral_by_modes(&psi, &k, &f, eta).unwrap();
            assert!((v.re - exact).abs() < 1e-14 && v.im.abs() < 1e-15);
            let q = integral_by_quadrature(&psi, &k, &f, eta).unwrap();
            assert!((q - exact).abs() < 1e-9, "{q} vs {exact}");
        }
    }

    #[test]
    fn two_paths_agree_on_five_modes() {
        let n = golden();
        let f = build_frame(&n).unwrap();
        let psi = SmoothWindow::gaussian(0.7, 1).unwrap();
        let k = five_mode();
        for eta in [1.0, 0.25, 1.0 / 16.0] {
            let a = integral_by_modes(&psi, &k, &f, eta).unwrap();
            let b = integral_by_quadrature(&psi, &k, &f, eta).unwrap();
            assert!((a.re - b).abs() < 1e-8 && a.im.abs() < 1e-12, "eta={eta}: {a} vs {b}");
        }
    }

    #[test]
    fn two_dimensional_window_paths_agree() {
        let n = unit(&[1.0, 2f64.sqrt(), 0.5 + 3f64.sqrt()]).unwrap();
        let f = build_frame(&n).unwrap();
        let psi = SmoothWindow::gaussian(0.6, 2).unwrap();
        let k = PeriodicField::cosine(&[1, -1, 1], 0.4, 0.3);
        let a = integral_by_modes(&psi, &k, &f, 0.5).unwrap();
        let b = integral_by_quadrature(&psi, &k, &f, 0.5).unwrap();
        assert!((a.re - b).abs() < 1e-8, "{a} vs {b}");
    }

    #[test]
    fn single_mode_bound_assembly_and_homogeneity() {
        let n = golden();
        let dir = dioph_constant(&n, 1.5, 10).unwrap();
        let xi = [1i64, 2];
        let k = PeriodicField::cosine(&xi, 0.6, 0.0);
        let psi = SmoothWindow::gaussian(1.0, 1).unwrap();
        let b1 = ergodic_bound(&psi, &k, &dir, 0.1, 1).unwrap();
        // two conjugate modes of modulus 0.3 each
        let expect = 0.1 / dir.a_lb * 2.0 * (2.0 * 0.3 * 5f64.sqrt().powf(1.5));
        assert!((b1 - expect).abs() < 1e-10 * expect);
        let b2 = ergodic_bound(&psi, &k, &dir, 0.1, 2).unwrap();
        let b2h = ergodic_bound(&psi, &k, &dir, 0.05, 2).unwrap();
        assert_eq!(b2 / 4.0, b2h);
    }

    #[test]
    fn rational_direction_and_cutoff_are_signalled() {
        let psi = SmoothWindow::gaussian(1.0, 1).unwrap();
        let k = PeriodicField::cosine(&[1, 0], 1.0, 0.0);
        let rat = dioph_constant(&[0.0, 1.0], 1.5, 5).unwrap();
        assert!(matches!(ergodic_bound(&psi, &k, &rat, 0.1, 1), Err(Error::RationalDirection(_))));
        let dir = dioph_constant(&golden(), 1.5, 2).unwrap();
        let wide = PeriodicField::cosine(&[3, 0], 1.0, 0.0);
        assert!(ergodic_bound(&psi, &wide, &dir, 0.1, 1).is_err());
        assert!(ergodic_bound(&psi, &k, &dir, 0.1, K_MAX + 1).is_err());
    }

    #[test]
    fn verification_table_passes_and_decays() {
        let n = golden();
        let dir = dioph_constant(&n, 1.5, 10).unwrap();
        let f = build_frame(&n).unwrap();
        let psi = SmoothWindow::gaussian(1.0, 1).unwrap();
        let etas: Vec<f64> = (2..=6).map(|j| 2f64.powi(-j)).collect();
        let rows = verify_ergodic(&psi, &five_mode(), &dir, &f, &etas, &[1, 2, 3]).unwrap();
        assert!(rows.iter().all(|r| r.pass), "{rows:?}");
        if let Some(slope) = error_slope(&rows, 1) {
            assert!(slope >= 1.0, "{slope}");
        }
        let flat = verify_ergodic(&psi, &PeriodicField::constant(2, &[2.0]), &dir, &f, &etas, &[1]).unwrap();
        assert!(flat.iter().all(|r| r.error == 0.0));
    }
}
