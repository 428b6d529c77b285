//! Boundary layers on the torus cylinder `T^2 x [a, T]`.
//!
//! The unknown `V(theta, t)` solves `-D . (b(theta + t n) D V) = 0` with the degenerate gradient
//! `D = (N^T grad_theta, d_t)` and `b = M^T a M`. It is discretised by Fourier modes in `theta`
//! (`|k_i| < res/2`) and continuous piecewise-linear elements in `t` on a mesh graded toward
//! `t = a`. Each Fourier mode `xi` of `b` couples `k - xi` to `k` with the phase
//! `exp(2 pi i t xi.n)`, integrated by three-point Gauss quadrature per element.
//!
//! At `t = T` the zero mode is free (natural condition) and all other modes vanish.

use std::f64::consts::TAU;

use crate::cell::{bicgstab, dot, pcg, SolveStats};
use crate::dioph::{dioph_constant, Frame};
use crate::error::{Error, Result};
use crate::fft::{self, NdFft};
use crate::fields::{PeriodicField, PeriodicTensor};
use crate::Complex;

type C64 = Complex<f64>;

const GAUSS: [(f64, f64); 3] = [
    (0.112_701_665_379_258_31, 5.0 / 18.0),
    (0.5, 8.0 / 18.0),
    (0.887_298_334_620_741_7, 5.0 / 18.0),
];

/// Discretisation parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams {
    /// Position of the Dirichlet plane.
    pub a: f64,
    /// Truncation length `T - a`.
    pub length: f64,
    /// Fourier resolution per axis (power of two, at least 8).
    pub res_theta: usize,
    /// Number of `t` nodes.
    pub nodes: usize,
    /// Ratio of the last to the first element length is `exp(grading)`.
    pub grading: f64,
    pub tol: f64,
    pub max_iter: usize,
    /// Gradient norm at `T`, relative to its largest value, above which the tail is unsettled.
    pub settle_tol: f64,
}

impl Default for LayerParams {
    fn default() -> Self {
        Self { a: 0.0, length: 30.0, res_theta: 32, nodes: 400, grading: 3.0, tol: 1e-10, max_iter: 20_000, settle_tol: 1e-6 }
    }
}

impl LayerParams {
    pub fn t_max(&self) -> f64 {
        self.a + self.length
    }

    fn validate(&self) -> Result<()> {
        if !(self.length > 0.0) {
            return Err(Error::InvalidInput(format!("truncation T must exceed a (length {})", self.length)));
        }
        if self.res_theta < 8 || !self.res_theta.is_power_of_two() {
            return Err(Error::InvalidInput(format!("theta resolution must be a power of two >= 8, got {}", self.res_theta)));
        }
        if self.nodes < 8 {
            return Err(Error::InvalidInput(format!("need at least 8 t-nodes, got {}", self.nodes)));
        }
        if !(self.grading >= 0.0) || !(self.tol > 0.0) {
            return Err(Error::InvalidInput("grading must be >= 0 and tolerance > 0".into()));
        }
        Ok(())
    }

    /// Nodes `a + (T - a) (exp(g s) - 1) / (exp(g) - 1)`, `s` uniform in `[0, 1]`.
    pub fn mesh(&self) -> Vec<f64> {
        let n = self.nodes - 1;
        (0..=n)
            .map(|j| {
                let s = j as f64 / n as f64;
                let g = if self.grading > 1e-12 { (self.grading * s).exp_m1() / self.grading.exp_m1() } else { s };
                self.a + self.length * g
            })
            .collect()
    }
}

struct Coupling {
    xi_dot_n: f64,
    /// `(p, q, i, j, bhat^{pq}_{ij}(xi))` with nonzero value.
    entries: Vec<(usize, usize, usize, usize, C64)>,
    /// `(target k, source k - xi)` over active modes.
    pairs: Vec<(u32, u32)>,
}

/// Discrete layer operator for one normal.
pub struct LayerProblem {
    params: LayerParams,
    frame: Frame<f64>,
    sysdim: usize,
    res: usize,
    modes: usize,
    active: Vec<bool>,
    /// `N^T k` per flat mode.
    tau: Vec<f64>,
    nodes: Vec<f64>,
    couplings: Vec<Coupling>,
    symmetric: bool,
    /// Per-mode factorised tridiagonal preconditioner: `(diag, lower)` over nodes.
    precond: Vec<(Vec<C64>, Vec<C64>)>,
}

impl LayerProblem {
    /// Problem for the tensor `a` in the frame `M` (`b = M^T a M`).
    pub fn new(a: &PeriodicTensor<f64>, frame: &Frame<f64>, params: LayerParams) -> Result<Self> {
        params.validate()?;
        if a.dim() != 2 || frame.dim() != 2 {
            return Err(Error::InvalidInput("layer solver is two-dimensional".into()));
        }
        let l = a.sysdim();
        let res = params.res_theta;
        let modes = res * res;
        let normal = frame.normal();
        let b = a.rotated(frame.m());
        let waves = fft::wavevectors(res, 2);
        let half = (res / 2) as i64;
        let active: Vec<bool> = waves.iter().map(|k| k.iter().all(|&c| c.abs() < half)).collect();
        let tcol = [frame.m_entry(0, 0), frame.m_entry(1, 0)];
        let tau: Vec<f64> = waves.iter().map(|k| tcol[0] * k[0] as f64 + tcol[1] * k[1] as f64).collect();

        let mut couplings = Vec::new();
        for (xi, coef) in b.modes() {
            let mut entries = Vec::new();
            for p in 0..2 {
                for q in 0..2 {
                    for i in 0..l {
                        for j in 0..l {
                            let v = coef[b.index(p, q, i, j)];
                            if v.norm() > 0.0 {
                                entries.push((p, q, i, j, v));
                            }
                        }
                    }
                }
            }
            if entries.is_empty() {
                continue;
            }
            let mut pairs = Vec::new();
            for (tgt, k) in waves.iter().enumerate() {
                if !active[tgt] {
                    continue;
                }
                let src = [k[0] - xi[0], k[1] - xi[1]];
                if src.iter().all(|c| c.abs() < half) {
                    let s = fft::flatten(&[fft::slot(src[0], res).unwrap(), fft::slot(src[1], res).unwrap()], res);
                    pairs.push((tgt as u32, s as u32));
                }
            }
            couplings.push(Coupling { xi_dot_n: xi[0] as f64 * normal[0] + xi[1] as f64 * normal[1], entries, pairs });
        }

        let nodes = params.mesh();
        let mean = b.mean();
        let mut c = [[0.0f64; 2]; 2];
        for (p, row) in c.iter_mut().enumerate() {
            for (q, v) in row.iter_mut().enumerate() {
                *v = (0..l).map(|i| 0.5 * (mean[b.index(p, q, i, i)] + mean[b.index(q, p, i, i)])).sum::<f64>() / l as f64;
            }
        }
        let mut problem = Self {
            params,
            frame: frame.clone(),
            sysdim: l,
            res,
            modes,
            active,
            tau,
            nodes,
            couplings,
            symmetric: a.is_symmetric(1e-14),
            precond: Vec::new(),
        };
        problem.precond = (0..modes).map(|m| problem.factor_mode(m, &c)).collect();
        Ok(problem)
    }

    pub fn params(&self) -> &LayerParams {
        &self.params
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn frame(&self) -> &Frame<f64> {
        &self.frame
    }

    pub fn resolution(&self) -> usize {
        self.res
    }

    pub fn sysdim(&self) -> usize {
        self.sysdim
    }

    /// Length of a full unknown vector, laid out `[(node * L + i) * res^2 + flat]`.
    pub fn len(&self) -> usize {
        self.nodes.len() * self.sysdim * self.modes
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    fn at(&self, node: usize, i: usize, m: usize) -> usize {
        (node * self.sysdim + i) * self.modes + m
    }

    fn is_free(&self, node: usize, m: usize) -> bool {
        let last = self.nodes.len() - 1;
        self.active[m] && node > 0 && (node < last || m == 0)
    }

    /// Sesquilinear form `B(e_row, x)` for every basis function, no boundary masking.
    pub fn apply(&self, x: &[C64]) -> Vec<C64> {
        let l = self.sysdim;
        let mm = self.modes;
        let mut out = vec![C64::default(); x.len()];
        let mut u = vec![C64::default(); l * mm];
        let mut grad = [vec![C64::default(); l * mm], vec![C64::default(); l * mm]];
        let mut flux = [vec![C64::default(); l * mm], vec![C64::default(); l * mm]];
        for e in 0..self.nodes.len() - 1 {
            let (t0, t1) = (self.nodes[e], self.nodes[e + 1]);
            let h = t1 - t0;
            for &(s, w) in &GAUSS {
                let t = t0 + s * h;
                let (f0, f1) = (1.0 - s, s);
                for i in 0..l {
                    for m in 0..mm {
                        let a0 = x[self.at(e, i, m)];
                        let a1 = x[self.at(e + 1, i, m)];
                        u[i * mm + m] = a0 * f0 + a1 * f1;
                        grad[1][i * mm + m] = (a1 - a0) / h;
                        grad[0][i * mm + m] = u[i * mm + m] * C64::new(0.0, TAU * self.tau[m]);
                    }
                }
                for f in flux.iter_mut() {
                    f.iter_mut().for_each(|v| *v = C64::default());
                }
                for c in &self.couplings {
                    let phase = C64::from_polar(1.0, TAU * t * c.xi_dot_n);
                    for &(p, q, i, j, v) in &c.entries {
                        let cf = v * phase;
                        let src = &grad[q][j * mm..(j + 1) * mm];
                        let dst = &mut flux[p][i * mm..(i + 1) * mm];
                        for &(tg, sr) in &c.pairs {
                            dst[tg as usize] += cf * src[sr as usize];
                        }
                    }
                }
                let wh = w * h;
                for i in 0..l {
                    for m in 0..mm {
                        let tan = flux[0][i * mm + m] * C64::new(0.0, -TAU * self.tau[m]);
                        let nor = flux[1][i * mm + m];
                        out[self.at(e, i, m)] += (tan * f0 - nor / h) * wh;
                        out[self.at(e + 1, i, m)] += (tan * f1 + nor / h) * wh;
                    }
                }
            }
        }
        out
    }

    fn mask(&self, x: &mut [C64]) {
        for node in 0..self.nodes.len() {
            for i in 0..self.sysdim {
                for m in 0..self.modes {
                    if !self.is_free(node, m) {
                        x[self.at(node, i, m)] = C64::default();
                    }
                }
            }
        }
    }

    /// Tridiagonal of the mean-coefficient form for mode `m` over free nodes, LDL-factored.
    fn factor_mode(&self, m: usize, c: &[[f64; 2]; 2]) -> (Vec<C64>, Vec<C64>) {
        let n = self.nodes.len();
        let k = TAU * self.tau[m];
        let mut diag = vec![C64::default(); n];
        let mut off = vec![C64::default(); n];
        for e in 0..n - 1 {
            let h = self.nodes[e + 1] - self.nodes[e];
            let mass = [[h / 3.0, h / 6.0], [h / 6.0, h / 3.0]];
            let stiff = [[1.0 / h, -1.0 / h], [-1.0 / h, 1.0 / h]];
            // int phi_r phi_s' = [[-1/2, 1/2], [-1/2, 1/2]]
            let mixed = [[-0.5, 0.5], [-0.5, 0.5]];
            let entry = |r: usize, s: usize| {
                C64::new(c[0][0] * k * k * mass[r][s] + c[1][1] * stiff[r][s], 0.0)
                    + C64::new(0.0, -k) * c[0][1] * mixed[r][s]
                    + C64::new(0.0, k) * c[1][0] * mixed[s][r]
            };
            diag[e] += entry(0, 0);
            diag[e + 1] += entry(1, 1);
            // row e + 1, column e
            off[e + 1] += entry(1, 0);
        }
        let free: Vec<bool> = (0..n).map(|j| self.is_free(j, m)).collect();
        let mut d = vec![C64::new(1.0, 0.0); n];
        let mut lower = vec![C64::default(); n];
        for j in 0..n {
            if !free[j] {
                continue;
            }
            let mut dj = diag[j];
            if j > 0 && free[j - 1] {
                lower[j] = off[j] / d[j - 1];
                dj -= lower[j] * off[j].conj();
            }
            d[j] = dj;
        }
        (d, lower)
    }

    fn precondition(&self, r: &[C64]) -> Vec<C64> {
        let n = self.nodes.len();
        let mut z = vec![C64::default(); r.len()];
        let mut y = vec![C64::default(); n];
        for m in 0..self.modes {
            if !self.active[m] {
                continue;
            }
            let (d, lower) = &self.precond[m];
            for i in 0..self.sysdim {
                for j in 0..n {
                    y[j] = if self.is_free(j, m) { r[self.at(j, i, m)] } else { C64::default() };
                }
                for j in 1..n {
                    let prev = y[j - 1];
                    y[j] -= lower[j] * prev;
                }
                for j in 0..n {
                    y[j] /= d[j];
                }
                for j in (0..n - 1).rev() {
                    let next = y[j + 1];
                    y[j] -= lower[j + 1].conj() * next;
                }
                for j in 0..n {
                    if self.is_free(j, m) {
                        z[self.at(j, i, m)] = y[j];
                    }
                }
            }
        }
        z
    }

    /// `Re B(x, x)` for a full vector.
    pub fn energy(&self, x: &[C64]) -> f64 {
        dot(x, &self.apply(x))
    }

    /// Dirichlet datum as Fourier modes at the layer resolution, `[i * res^2 + flat]`.
    pub fn datum_modes(&self, v0: &PeriodicField<f64>) -> Result<Vec<C64>> {
        if v0.dim() != 2 || v0.sysdim() != self.sysdim {
            return Err(Error::InvalidInput("datum shape does not match the problem".into()));
        }
        let mut out = vec![C64::default(); self.sysdim * self.modes];
        for (xi, c) in v0.modes() {
            let half = (self.res / 2) as i64;
            if xi.iter().any(|k| k.abs() >= half) {
                return Err(Error::InvalidInput(format!("datum mode {xi:?} not resolved at theta resolution {}", self.res)));
            }
            let flat = fft::flatten(&[fft::slot(xi[0], self.res).unwrap(), fft::slot(xi[1], self.res).unwrap()], self.res);
            for i in 0..self.sysdim {
                out[i * self.modes + flat] = c[i];
            }
        }
        Ok(out)
    }

    /// Solve with Dirichlet modes `v0` (layout of [`LayerProblem::datum_modes`]).
    pub fn solve_modes(&self, v0: &[C64]) -> Result<LayerSolution> {
        if v0.len() != self.sysdim * self.modes {
            return Err(Error::InvalidInput("datum has the wrong length".into()));
        }
        let mut lift = vec![C64::default(); self.len()];
        for i in 0..self.sysdim {
            for m in 0..self.modes {
                if self.active[m] {
                    lift[self.at(0, i, m)] = v0[i * self.modes + m];
                }
            }
        }
        let mut rhs = self.apply(&lift);
        rhs.iter_mut().for_each(|v| *v = -*v);
        self.mask(&mut rhs);
        let op = |x: &[C64]| {
            let mut y = self.apply(x);
            self.mask(&mut y);
            y
        };
        let pre = |r: &[C64]| self.precondition(r);
        let (mut x, stats) = if self.symmetric {
            pcg(op, pre, &rhs, self.params.tol, self.params.max_iter)?
        } else {
            bicgstab(op, pre, &rhs, self.params.tol, self.params.max_iter)?
        };
        for (xv, lv) in x.iter_mut().zip(&lift) {
            *xv += *lv;
        }
        Ok(self.finish(x, stats))
    }

    pub fn solve(&self, v0: &PeriodicField<f64>) -> Result<LayerSolution> {
        self.solve_modes(&self.datum_modes(v0)?)
    }

    fn finish(&self, values: Vec<C64>, stats: SolveStats) -> LayerSolution {
        let l = self.sysdim;
        let mm = self.modes;
        let n = self.nodes.len();
        let full = self.apply(&values);
        let boundary_flux: Vec<C64> = (0..l * mm).map(|im| -full[im]).collect();
        let mut decay = Vec::with_capacity(n - 1);
        for e in 0..n - 1 {
            let h = self.nodes[e + 1] - self.nodes[e];
            let mut dt2 = 0.0;
            let mut tan2 = 0.0;
            for i in 0..l {
                for m in 0..mm {
                    let a0 = values[self.at(e, i, m)];
                    let a1 = values[self.at(e + 1, i, m)];
                    dt2 += ((a1 - a0) / h).norm_sqr();
                    tan2 += ((a0 + a1) * 0.5 * TAU * self.tau[m]).norm_sqr();
                }
            }
            decay.push(DecaySample { t: 0.5 * (self.nodes[e] + self.nodes[e + 1]), dt_norm: dt2.sqrt(), tan_norm: tan2.sqrt() });
        }
        let peak = decay.iter().map(|d| d.dt_norm + d.tan_norm).fold(0.0, f64::max);
        let last = decay.last().map(|d| d.dt_norm + d.tan_norm).unwrap_or(0.0);
        let tail = (0..l).map(|i| values[self.at(n - 1, i, 0)].re).collect();
        LayerSolution {
            normal: self.frame.normal(),
            frame: self.frame.clone(),
            params: self.params.clone(),
            sysdim: l,
            nodes: self.nodes.clone(),
            values,
            boundary_flux,
            tail,
            settled: last <= self.params.settle_tol * peak.max(f64::MIN_POSITIVE),
            decay,
            residual: stats.residual,
            iterations: stats.iterations,
        }
    }
}

/// `L^2(T^2)` norms of `d_t V` and `N^T grad V` at an element midpoint.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecaySample {
    pub t: f64,
    pub dt_norm: f64,
    pub tan_norm: f64,
}

impl DecaySample {
    pub fn total(&self) -> f64 {
        self.dt_norm + self.tan_norm
    }
}

#[derive(Clone, Debug)]
pub struct LayerSolution {
    pub normal: Vec<f64>,
    pub frame: Frame<f64>,
    pub params: LayerParams,
    pub sysdim: usize,
    pub nodes: Vec<f64>,
    /// `[(node * L + i) * res^2 + flat]`.
    pub values: Vec<C64>,
    /// Fourier modes of the normal flux `(b D V)^d` at `t = a`, read from the discrete equations.
    pub boundary_flux: Vec<C64>,
    /// Zero mode at `t = T`.
    pub tail: Vec<f64>,
    pub decay: Vec<DecaySample>,
    /// Whether the gradient at `T` is below `settle_tol` relative to its peak.
    pub settled: bool,
    pub residual: f64,
    pub iterations: usize,
}

impl LayerSolution {
    pub fn resolution(&self) -> usize {
        self.params.res_theta
    }

    fn modes(&self) -> usize {
        self.params.res_theta * self.params.res_theta
    }

    /// Modes of component `i` at node `node`.
    pub fn node_modes(&self, node: usize, i: usize) -> &[C64] {
        let mm = self.modes();
        let start = (node * self.sysdim + i) * mm;
        &self.values[start..start + mm]
    }

    /// One-sided second-order `d_t V` at `t = a`, modes of component `i`.
    pub fn dt_at_a(&self, i: usize) -> Vec<C64> {
        let h1 = self.nodes[1] - self.nodes[0];
        let h2 = self.nodes[2] - self.nodes[1];
        let c0 = -(2.0 * h1 + h2) / (h1 * (h1 + h2));
        let c1 = (h1 + h2) / (h1 * h2);
        let c2 = -h1 / (h2 * (h1 + h2));
        let (v0, v1, v2) = (self.node_modes(0, i), self.node_modes(1, i), self.node_modes(2, i));
        (0..v0.len()).map(|m| v0[m] * c0 + v1[m] * c1 + v2[m] * c2).collect()
    }

    /// Normal-flux modes of component `i` at `t = a`.
    pub fn flux_modes(&self, i: usize) -> &[C64] {
        let mm = self.modes();
        &self.boundary_flux[i * mm..(i + 1) * mm]
    }

    /// `V(theta, t)`, linear in `t` between nodes.
    pub fn evaluate(&self, theta: &[f64], t: f64) -> Result<Vec<f64>> {
        let (lo, hi) = (self.nodes[0], *self.nodes.last().unwrap());
        if !(lo..=hi).contains(&t) {
            return Err(Error::InvalidInput(format!("t = {t} outside [{lo}, {hi}]")));
        }
        let e = self.nodes.partition_point(|&x| x <= t).clamp(1, self.nodes.len() - 1) - 1;
        let s = (t - self.nodes[e]) / (self.nodes[e + 1] - self.nodes[e]);
        let waves = fft::wavevectors(self.resolution(), 2);
        let mut out = vec![0.0; self.sysdim];
        for (i, o) in out.iter_mut().enumerate() {
            let (a, b) = (self.node_modes(e, i), self.node_modes(e + 1, i));
            for (m, k) in waves.iter().enumerate() {
                let ph = C64::from_polar(1.0, TAU * (k[0] as f64 * theta[0] + k[1] as f64 * theta[1]));
                *o += ((a[m] * (1.0 - s) + b[m] * s) * ph).re;
            }
        }
        Ok(out)
    }

    /// Grid values of component `i` at node `node` on the `m x m` grid (`m >= res`).
    pub fn node_grid(&self, node: usize, i: usize, m: usize) -> Vec<f64> {
        modes_to_grid(self.node_modes(node, i), self.resolution(), m)
    }
}

/// Real values on an `m x m` grid from modes at resolution `res`.
pub fn modes_to_grid(modes: &[C64], res: usize, m: usize) -> Vec<f64> {
    let mut spec = fft::pad(modes, res, m, 2);
    NdFft::<f64>::new(m, 2).inverse(&mut spec);
    spec.iter().map(|v| v.re).collect()
}

/// Solve the layer problem for `a` in the frame `frame` with Dirichlet datum `v0` at `t = a`.
pub fn solve_layer(a: &PeriodicTensor<f64>, frame: &Frame<f64>, v0: &PeriodicField<f64>, params: LayerParams) -> Result<LayerSolution> {
    LayerProblem::new(a, frame, params)?.solve(v0)
}

/// Torus datum `V_0(theta + a n)` for a half-space datum `V_0(y)` on the plane `y . n = a`.
pub fn pullback_datum(v0: &PeriodicField<f64>, normal: &[f64], a: f64) -> Result<PeriodicField<f64>> {
    let modes = v0
        .modes()
        .iter()
        .map(|(xi, c)| {
            let ph = C64::from_polar(1.0, TAU * a * xi.iter().zip(normal).map(|(&k, &n)| k as f64 * n).sum::<f64>());
            (xi.clone(), c.iter().map(|v| v * ph).collect())
        })
        .collect();
    PeriodicField::new(v0.dim(), v0.sysdim(), modes)
}

/// Tails of the half-space problem with datum `v0(y)` posed at `a` and at `a + shift`.
#[derive(Clone, Debug, PartialEq)]
pub struct ShiftCheck {
    pub tail: Vec<f64>,
    pub shifted_tail: Vec<f64>,
    pub difference: f64,
}

pub fn tail_shift_check(
    a: &PeriodicTensor<f64>,
    frame: &Frame<f64>,
    v0: &PeriodicField<f64>,
    params: &LayerParams,
    shift: f64,
) -> Result<ShiftCheck> {
    let n = frame.normal();
    let solve_at = |at: f64| -> Result<Vec<f64>> {
        let p = LayerParams { a: at, ..params.clone() };
        layer_tail(&solve_layer(a, frame, &pullback_datum(v0, &n, at)?, p)?)
    };
    let tail = solve_at(params.a)?;
    let shifted_tail = solve_at(params.a + shift)?;
    let difference = tail.iter().zip(&shifted_tail).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    Ok(ShiftCheck { tail, shifted_tail, difference })
}

/// Boundary-layer tail, provided the gradient has decayed by `T`.
pub fn layer_tail(sol: &LayerSolution) -> Result<Vec<f64>> {
    if !sol.settled {
        let last = sol.decay.last().map(|d| d.total()).unwrap_or(f64::NAN);
        return Err(Error::NoConvergence(format!(
            "tail not settled at T = {}: gradient norm {last:.3e}; increase T",
            sol.params.t_max()
        )));
    }
    Ok(sol.tail.clone())
}

/// Gradient norms along `t` with fitted exponential rate and algebraic order on `[a + 1, T]`.
#[derive(Clone, Debug)]
pub struct DecayProfile {
    pub samples: Vec<DecaySample>,
    /// `-d log|grad| / dt` by least squares.
    pub exp_rate: f64,
    /// `-d log|grad| / d log(t - a)` by least squares.
    pub poly_order: f64,
    /// Points used in the fits (above the round-off floor).
    pub fit_points: usize,
    /// Largest relative increase of the running minimum envelope after the initial layer.
    pub envelope_violation: f64,
}

pub fn decay_profile(sol: &LayerSolution) -> DecayProfile {
    let a = sol.params.a;
    let peak = sol.decay.iter().map(|d| d.total()).fold(0.0, f64::max);
    let pts: Vec<(f64, f64)> = sol
        .decay
        .iter()
        .filter(|d| d.t >= a + 1.0 && d.total() > 1e-8 * peak)
        .map(|d| (d.t, d.total()))
        .collect();
    let fit = |xs: Vec<f64>, ys: Vec<f64>| -> f64 {
        let n = xs.len() as f64;
        if xs.len() < 2 {
            return f64::NAN;
        }
        let mx = xs.iter().sum::<f64>() / n;
        let my = ys.iter().sum::<f64>() / n;
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        -sxy / sxx
    };
    let exp_rate = fit(pts.iter().map(|p| p.0).collect(), pts.iter().map(|p| p.1.ln()).collect());
    let poly_order = fit(pts.iter().map(|p| (p.0 - a).ln()).collect(), pts.iter().map(|p| p.1.ln()).collect());
    let mut envelope = f64::INFINITY;
    let mut violation = 0.0f64;
    for d in sol.decay.iter().filter(|d| d.t >= a + 1.0) {
        if d.total() > envelope {
            violation = violation.max((d.total() - envelope) / peak.max(f64::MIN_POSITIVE));
        }
        envelope = envelope.min(d.total());
    }
    DecayProfile { samples: sol.decay.clone(), exp_rate, poly_order, fit_points: pts.len(), envelope_violation: violation }
}

/// Sensitivity of the layer to its normal.
#[derive(Clone, Debug, PartialEq)]
pub struct ContinuityReport {
    /// `|| d_t (V_1 - V_2)(., a) ||_inf`.
    pub difference: f64,
    pub dn: f64,
    /// Diophantine constant of `n_2`.
    pub a_lb: f64,
    /// `|n_1 - n_2| / A^{3/2} (1 + |n_1 - n_2| / A)`.
    pub reference: f64,
    pub ratio: f64,
}

/// Compare layers for `frame1` and `frame2` with the same datum; `n_2` must be Diophantine.
pub fn layer_continuity(
    a: &PeriodicTensor<f64>,
    frame1: &Frame<f64>,
    frame2: &Frame<f64>,
    v0: &PeriodicField<f64>,
    params: &LayerParams,
    kappa: f64,
    xi: usize,
) -> Result<ContinuityReport> {
    let n1 = frame1.normal();
    let n2 = frame2.normal();
    let a_lb = dioph_constant(&n2, kappa, xi)?.a_lb;
    if a_lb == 0.0 {
        return Err(Error::RationalDirection(format!("reference normal {n2:?} has A = 0 at cutoff {xi}")));
    }
    let s1 = solve_layer(a, frame1, v0, params.clone())?;
    let s2 = solve_layer(a, frame2, v0, params.clone())?;
    let m = 2 * params.res_theta;
    let mut difference = 0.0f64;
    for i in 0..v0.sysdim() {
        let d: Vec<C64> = s1.dt_at_a(i).iter().zip(s2.dt_at_a(i)).map(|(x, y)| x - y).collect();
        difference = difference.max(modes_to_grid(&d, params.res_theta, m).iter().fold(0.0, |acc, v| acc.max(v.abs())));
    }
    let dn = (n1[0] - n2[0]).hypot(n1[1] - n2[1]);
    let reference = dn / a_lb.powf(1.5) * (1.0 + dn / a_lb);
    let ratio = if reference > 0.0 { difference / reference } else { 0.0 };
    Ok(ContinuityReport { difference, dn, a_lb, reference, ratio })
}
