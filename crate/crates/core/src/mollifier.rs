//! Smooth step and bump profiles with exact derivatives.
//!
//! `S(u) = f(u) / (f(u) + f(1 - u))` with `f(u) = exp(-1/u)` is a smooth step from 0
//! (for `u <= 0`) to 1 (for `u >= 1`). The shifted step `H(t) = S(3 t + 1/2)` switches on
//! `[-1/6, 1/6]`, and `H(1/2 - z) - H(-1/2 - z)` is a bump supported in `(-2/3, 2/3)`
//! whose integer translates sum to one. Derivatives come from truncated Taylor series.

use crate::scalar::Scalar;

/// Highest derivative order carried by the jets.
pub const MAX_ORDER: usize = 4;
const LEN: usize = MAX_ORDER + 1;

/// Truncated Taylor series `sum c_j h^j` around a point.
#[derive(Clone, Copy, Debug)]
pub struct Jet<T: Scalar>([T; LEN]);

impl<T: Scalar> Jet<T> {
    pub fn constant(x: T) -> Self {
        let mut c = [T::zero(); LEN];
        c[0] = x;
        Jet(c)
    }

    /// Jet of `h -> f(x + h v)` from the derivatives `f^{(j)}(x)`.
    pub fn from_derivatives(d: &[T; LEN], v: T) -> Self {
        let mut c = [T::zero(); LEN];
        let mut scale = T::one();
        for j in 0..LEN {
            c[j] = d[j] * scale;
            scale = scale * v / T::of_i64(j as i64 + 1);
        }
        Jet(c)
    }

    pub fn variable(x: T) -> Self {
        let mut c = [T::zero(); LEN];
        c[0] = x;
        c[1] = T::one();
        Jet(c)
    }

    pub fn affine(self, a: T, b: T) -> Self {
        let mut c = self.0;
        for v in c.iter_mut() {
            *v = *v * a;
        }
        c[0] = c[0] + b;
        Jet(c)
    }

    pub fn mul(self, o: Self) -> Self {
        let mut c = [T::zero(); LEN];
        for i in 0..LEN {
            for j in 0..LEN - i {
                c[i + j] = c[i + j] + self.0[i] * o.0[j];
            }
        }
        Jet(c)
    }

    pub fn add(self, o: Self) -> Self {
        let mut c = self.0;
        for (v, w) in c.iter_mut().zip(o.0) {
            *v = *v + w;
        }
        Jet(c)
    }

    pub fn recip(self) -> Self {
        let mut r = [T::zero(); LEN];
        let inv = T::one() / self.0[0];
        r[0] = inv;
        for n in 1..LEN {
            let mut s = T::zero();
            for j in 1..=n {
                s = s + self.0[j] * r[n - j];
            }
            r[n] = -inv * s;
        }
        Jet(r)
    }

    pub fn exp(self) -> Self {
        let mut e = [T::zero(); LEN];
        e[0] = self.0[0].exp();
        for n in 1..LEN {
            let mut s = T::zero();
            for j in 1..=n {
                s = s + T::of_i64(j as i64) * self.0[j] * e[n - j];
            }
            e[n] = s / T::of_i64(n as i64);
        }
        Jet(e)
    }

    /// Derivatives `f^{(j)}` from Taylor coefficients.
    pub fn derivatives(self) -> [T; LEN] {
        let mut out = self.0;
        let mut fact = T::one();
        for (j, v) in out.iter_mut().enumerate().skip(1) {
            fact = fact * T::of_i64(j as i64);
            *v = *v * fact;
        }
        out
    }
}

/// Below this distance from the switching endpoints the step is taken as flat;
/// the neglected part is below `exp(-100)`.
const FLAT: f64 = 0.01;

/// Derivatives `S^{(j)}(u)`, `j = 0..=MAX_ORDER`.
pub fn smooth_step_derivs<T: Scalar>(u: T) -> [T; LEN] {
    let mut out = [T::zero(); LEN];
    let flat = T::lit(FLAT);
    if u <= flat {
        return out;
    }
    if u >= T::one() - flat {
        out[0] = T::one();
        return out;
    }
    let x = Jet::variable(u);
    let fu = x.recip().affine(-T::one(), T::zero()).exp();
    let fv = x.affine(-T::one(), T::one()).recip().affine(-T::one(), T::zero()).exp();
    fu.mul(fu.add(fv).recip()).derivatives()
}

/// Derivatives of `H(t) = S(3 t + 1/2)`.
pub fn step_derivs<T: Scalar>(t: T) -> [T; LEN] {
    let three = T::lit(3.0);
    let mut d = smooth_step_derivs(three * t + T::lit(0.5));
    let mut scale = T::one();
    for v in d.iter_mut().skip(1) {
        scale = scale * three;
        *v = *v * scale;
    }
    d
}

pub fn step<T: Scalar>(t: T) -> T {
    step_derivs(t)[0]
}

/// Derivatives in `z` of `H((c + s/2 - z)/s) - H((c - s/2 - z)/s)`: a bump of width `s`
/// centred at `c`, supported in `(c - 2s/3, c + 2s/3)`.
pub fn bump_derivs<T: Scalar>(z: T, center: T, size: T) -> [T; LEN] {
    let half = T::lit(0.5);
    let u = (center - z) / size;
    let hi = step_derivs(u + half);
    let lo = step_derivs(u - half);
    let mut out = [T::zero(); LEN];
    let mut scale = T::one();
    for j in 0..LEN {
        out[j] = (hi[j] - lo[j]) * scale;
        scale = -scale / size;
    }
    out
}

pub fn bump<T: Scalar>(z: T, center: T, size: T) -> T {
    bump_derivs(z, center, size)[0]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_limits_and_symmetry() {
        assert_eq!(step(-0.2f64), 0.0);
        assert_eq!(step(0.2f64), 1.0);
        assert!((step(0.0f64) - 0.5).abs() < 1e-15);
        for t in [0.01, 0.05, 0.1, 0.15] {
            assert!((step(t) + step(-t) - 1.0f64).abs() < 1e-14);
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let h = 1e-4f64;
        for t in [-0.12f64, -0.03, 0.0, 0.07, 0.13] {
            let d = step_derivs(t);
            for j in 0..MAX_ORDER {
                let fd = (step_derivs(t + h)[j] - step_derivs(t - h)[j]) / (2.0 * h);
                let scale = d[j + 1].abs().max(1.0);
                assert!((fd - d[j + 1]).abs() < 1e-5 * scale * 10f64.powi(j as i32), "t={t} j={j}: {fd} vs {}", d[j + 1]);
            }
        }
    }

    #[test]
    fn bump_support_and_partition() {
        let s = 0.4f64;
        assert_eq!(bump(2.0 * s / 3.0 + 1e-12, 0.0, s), 0.0);
        assert_eq!(bump(-2.0 * s / 3.0 - 1e-12, 0.0, s), 0.0);
        assert!((bump(0.0, 0.0, s) - 1.0f64).abs() < 1e-15);
        for z in [0.013, 0.17, 0.29, 0.33] {
            let total: f64 = (-3..=3).map(|k| bump(z, k as f64 * s, s)).sum();
            assert!((total - 1.0).abs() < 1e-14);
        }
    }
}
