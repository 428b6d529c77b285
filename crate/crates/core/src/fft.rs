//! Multi-dimensional FFT on cubic grids `n^d`, row-major (axis 0 slowest).
//!
//! Convention: `forward` computes `c_k = (1/n^d) sum_j f_j e^{-2 pi i k.j/n}`
//! so that `f(y) = sum_k c_k e^{2 pi i k.y}`; `inverse` is synthesis without
//! scaling. Fourier coefficients are therefore the torus means.

use std::sync::Arc;

use rustfft::{Fft, FftPlanner};

use crate::scalar::{Complex, Scalar};

pub struct NdFft<T: Scalar> {
    n: usize,
    dim: usize,
    fwd: Arc<dyn Fft<T>>,
    inv: Arc<dyn Fft<T>>,
}

impl<T: Scalar> NdFft<T> {
    pub fn new(n: usize, dim: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            n,
            dim,
            fwd: planner.plan_fft_forward(n),
            inv: planner.plan_fft_inverse(n),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    fn along_axes(&self, data: &mut [Complex<T>], plan: &Arc<dyn Fft<T>>) {
        assert_eq!(data.len(), self.len());
        let n = self.n;
        let mut line = vec![Complex::new(T::zero(), T::zero()); n];
        let mut scratch = vec![Complex::new(T::zero(), T::zero()); plan.get_inplace_scratch_len()];
        for axis in 0..self.dim {
            let stride = n.pow((self.dim - 1 - axis) as u32);
            let block = stride * n;
            for outer in (0..data.len()).step_by(block) {
                for inner in 0..stride {
                    let base = outer + inner;
                    if stride == 1 {
                        plan.process_with_scratch(&mut data[base..base + n], &mut scratch);
                        continue;
                    }
                    for (j, v) in line.iter_mut().enumerate() {
                        *v = data[base + j * stride];
                    }
                    plan.process_with_scratch(&mut line, &mut scratch);
                    for (j, v) in line.iter().enumerate() {
                        data[base + j * stride] = *v;
                    }
                }
            }
        }
    }

    /// Grid values to normalized Fourier coefficients.
    pub fn forward(&self, data: &mut [Complex<T>]) {
        self.along_axes(data, &self.fwd);
        let scale = T::one() / T::of_i64(self.len() as i64);
        for v in data.iter_mut() {
            *v = *v * scale;
        }
    }

    /// Fourier coefficients to grid values.
    pub fn inverse(&self, data: &mut [Complex<T>]) {
        self.along_axes(data, &self.inv);
    }
}

/// Signed wavenumber stored at array index `idx` of a length-`n` transform.
#[inline]
pub fn wavenumber(idx: usize, n: usize) -> i64 {
    if idx < n.div_ceil(2) {
        idx as i64
    } else {
        idx as i64 - n as i64
    }
}

/// Array index holding wavenumber `k`, or `None` when `k` is not representable.
#[inline]
pub fn slot(k: i64, n: usize) -> Option<usize> {
    let n_i = n as i64;
    let lo = -(n_i / 2);
    let hi = (n_i - 1) / 2;
    if k < lo || k > hi {
        None
    } else {
        Some(k.rem_euclid(n_i) as usize)
    }
}

/// Multi-index of a flat row-major position.
pub fn unflatten(mut flat: usize, n: usize, dim: usize, out: &mut [usize]) {
    for axis in (0..dim).rev() {
        out[axis] = flat % n;
        flat /= n;
    }
}

pub fn flatten(idx: &[usize], n: usize) -> usize {
    idx.iter().fold(0, |acc, &i| acc * n + i)
}

/// Wavenumber vectors for every flat position of an `n^dim` grid.
pub fn wavevectors(n: usize, dim: usize) -> Vec<Vec<i64>> {
    let total = n.pow(dim as u32);
    let mut idx = vec![0usize; dim];
    (0..total)
        .map(|flat| {
            unflatten(flat, n, dim, &mut idx);
            idx.iter().map(|&i| wavenumber(i, n)).collect()
        })
        .collect()
}

/// Copy coefficients from an `n^d` spectral array into a zero-padded `m^d` one.
pub fn pad<T: Scalar>(src: &[Complex<T>], n: usize, m: usize, dim: usize) -> Vec<Complex<T>> {
    let mut out = vec![Complex::new(T::zero(), T::zero()); m.pow(dim as u32)];
    let mut idx = vec![0usize; dim];
    let mut tgt = vec![0usize; dim];
    'outer: for (flat, v) in src.iter().enumerate() {
        unflatten(flat, n, dim, &mut idx);
        for a in 0..dim {
            match slot(wavenumber(idx[a], n), m) {
                Some(s) => tgt[a] = s,
                None => continue 'outer,
            }
        }
        out[flatten(&tgt, m)] = *v;
    }
    out
}

/// Restrict an `m^d` spectral array to the wavenumbers of an `n^d` array.
pub fn truncate<T: Scalar>(src: &[Complex<T>], m: usize, n: usize, dim: usize) -> Vec<Complex<T>> {
    let mut out = vec![Complex::new(T::zero(), T::zero()); n.pow(dim as u32)];
    let mut idx = vec![0usize; dim];
    let mut tgt = vec![0usize; dim];
    'outer: for (flat, o) in out.iter_mut().enumerate() {
        unflatten(flat, n, dim, &mut idx);
        for a in 0..dim {
            match slot(wavenumber(idx[a], n), m) {
                Some(s) => tgt[a] = s,
                None => continue 'outer,
            }
        }
        *o = src[flatten(&tgt, m)];
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_2d() {
        let f = NdFft::<f64>::new(8, 2);
        let orig: Vec<Complex<f64>> = (0..64).map(|i| Complex::new((i as f64).sin(), 0.0)).collect();
        let mut v = orig.clone();
        f.forward(&mut v);
        f.inverse(&mut v);
        for (a, b) in v.iter().zip(&orig) {
            assert!((a - b).norm() < 1e-13);
        }
    }

    #[test]
    fn single_mode_coefficient() {
        let n = 16;
        let f = NdFft::<f64>::new(n, 2);
        let mut v: Vec<Complex<f64>> = (0..n * n)
            .map(|flat| {
                let (i, j) = (flat / n, flat % n);
                let y = (i as f64 / n as f64, j as f64 / n as f64);
                Complex::new((std::f64::consts::TAU * (2.0 * y.0 - 3.0 * y.1)).cos(), 0.0)
            })
            .collect();
        f.forward(&mut v);
        let at = |k0: i64, k1: i64| v[flatten(&[slot(k0, n).unwrap(), slot(k1, n).unwrap()], n)];
        assert!((at(2, -3).re - 0.5).abs() < 1e-14);
        assert!((at(-2, 3).re - 0.5).abs() < 1e-14);
        assert!(at(1, 0).norm() < 1e-14);
    }

    #[test]
    fn pad_then_truncate_is_identity() {
        let n = 8;
        let src: Vec<Complex<f64>> = (0..n * n).map(|i| Complex::new(i as f64, -(i as f64))).collect();
        let back = truncate(&pad(&src, n, 12, 2), 12, n, 2);
        assert_eq!(back, src);
    }
}
