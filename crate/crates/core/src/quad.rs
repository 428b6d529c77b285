//! Adaptive Gauss-Kronrod (7, 15) quadrature.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

/// Seven-point Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss7() -> [(f64, f64); 7] {
    let mut out = [(0.0, 0.0); 7];
    for (j, o) in out.iter_mut().enumerate() {
        *o = match j {
            0..=2 => (-XGK[2 * j + 1], WG[j]),
            3 => (0.0, WG[3]),
            _ => (XGK[2 * (6 - j) + 1], WG[6 - j]),
        };
    }
    out
}

/// One G7K15 panel: Kronrod estimate and `|K15 - G7|`.
pub fn gk15<T: Scalar, F: FnMut(T) -> T>(f: &mut F, a: T, b: T) -> (T, T) {
    let half = (b - a) * T::lit(0.5);
    let mid = (a + b) * T::lit(0.5);
    let fc = f(mid);
    let mut k = fc * T::lit(WGK[7]);
    let mut g = fc * T::lit(WG[3]);
    for j in 0..7 {
        let dx = half * T::lit(XGK[j]);
        let s = f(mid - dx) + f(mid + dx);
        k = k + s * T::lit(WGK[j]);
        if j % 2 == 1 {
            g = g + s * T::lit(WG[j / 2]);
        }
    }
    (k * half, ((k - g) * half).abs())
}

/// Integral of `f` over `[a, b]` to absolute tolerance `tol`, by bisection of the
/// panel with the largest error estimate.
pub fn integrate<T: Scalar, F: FnMut(T) -> T>(mut f: F, a: T, b: T, tol: T, max_panels: usize) -> Result<T> {
    if a == b {
        return Ok(T::zero());
    }
    let (v, e) = gk15(&mut f, a, b);
    let mut panels = vec![(a, b, v, e)];
    let mut total_err = e;
    loop {
        if !total_err.is_finite() {
            return Err(Error::NoConvergence(format!("non-finite integrand on [{a}, {b}]")));
        }
        if total_err <= tol {
            break;
        }
        if panels.len() >= max_panels {
            return Err(Error::NoConvergence(format!(
                "adaptive quadrature on [{a}, {b}]: error estimate {} after {max_panels} panels", total_err.f64()
            )));
        }
        let (worst, _) = panels
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.partial_cmp(&y.1 .3).unwrap_or(std::cmp::Ordering::Equal))
            .unwrap();
        let (lo, hi, _, _) = panels.swap_remove(worst);
        let mid = (lo + hi) * T::lit(0.5);
        let (v1, e1) = gk15(&mut f, lo, mid);
        let (v2, e2) = gk15(&mut f, mid, hi);
        panels.push((lo, mid, v1, e1));
        panels.push((mid, hi, v2, e2));
        total_err = panels.iter().map(|p| p.3).sum();
    }
    Ok(panels.iter().map(|p| p.2).sum())
}

/// Sum of one-panel `|f|` estimates over the breakpoints; a scale for relative tolerances.
pub fn rough_abs<T: Scalar, F: FnMut(T) -> T>(mut f: F, breaks: &[T]) -> T {
    let mut g = |x: T| f(x).abs();
    breaks.windows(2).fold(T::zero(), |acc, w| acc + gk15(&mut g, w[0], w[1]).0)
}

/// Integral over consecutive breakpoints, splitting the tolerance by panel length.
pub fn integrate_pieces<T: Scalar, F: FnMut(T) -> T>(mut f: F, breaks: &[T], tol: T, max_panels: usize) -> Result<T> {
    let span = breaks[breaks.len() - 1] - breaks[0];
    let mut acc = T::zero();
    for w in breaks.windows(2) {
        let share = tol * (w[1] - w[0]) / span;
        acc = acc + integrate(&mut f, w[0], w[1], share, max_panels)?;
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss7_integrates_degree_13() {
        let r = gauss7();
        assert!((r.iter().map(|p| p.1).sum::<f64>() - 2.0).abs() < 1e-14);
        assert!((r.iter().map(|p| p.1 * p.0.powi(12)).sum::<f64>() - 2.0 / 13.0).abs() < 1e-14);
        assert!(r.windows(2).all(|w| w[0].0 < w[1].0));
    }

    #[test]
    fn polynomials_are_exact_on_one_panel() {
        let (v, _) = gk15(&mut |x: f64| x.powi(20), -1.0, 1.0);
        assert!((v - 2.0 / 21.0).abs() < 1e-15);
    }

    #[test]
    fn oscillatory_integrand() {
        let v = integrate(|x: f64| (50.0 * x).cos() * (-x * x).exp(), -6.0, 6.0, 1e-13, 10_000).unwrap();
        let exact = std::f64::consts::PI.sqrt() * (-625.0f64).exp();
        assert!((v - exact).abs() < 1e-12);
    }

    #[test]
    fn reports_failure() {
        assert!(integrate(|x: f64| 1.0 / x.abs().sqrt(), -1.0, 1.0, 1e-14, 20).is_err());
    }
}
