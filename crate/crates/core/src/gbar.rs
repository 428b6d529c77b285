//! The homogenized boundary datum `gbar(x) = h(x) int_T W(n(x), theta) g(x, theta) dtheta`.
//!
//! For a normal `n` the weight `W_{kj}(theta)` is the normal flux of the adjoint two-scale
//! solution `W = t e_k + chi*_n + V*`, where `chi*_n = chi*^beta n_beta` and `V*` is the layer
//! with datum `-chi*_n` on `t = 0`. On `t = 0` its tangential derivative vanishes, so
//! `W = (Id + n.grad chi*.n + d_t V*.n) b^{dd}` (transposed), and it splits into three pieces:
//!
//! * `b^{dd}`
//! * `(n.grad chi*.n) b^{dd}`
//! * `d_t V*.n b^{dd}`, read from the discrete layer equations as the conormal flux of `V*`
//!   minus its tangential part, so that `h int W = Id` holds to solver tolerance.
//!
//! `h = (abar n.n)^{-1}`. Weights are cached per normal.

use std::collections::HashMap;
use std::f64::consts::TAU;
use std::sync::{Arc, Mutex};

use nalgebra::DMatrix;

use crate::cell::{adjoint_corrector, resample, CellSolution};
use crate::dioph::{build_frame, dioph_constant, Frame};
use crate::error::{Error, Result};
use crate::fft::{self, NdFft};
use crate::fields::{ConvexDomain, ModeTable, PeriodicField, PeriodicTensor, TwoScaleBoundaryDatum};
use crate::halfspace::{LayerParams, LayerProblem, LayerSolution};
use crate::Complex;

type C64 = Complex<f64>;

/// Normals closer than this share a cache entry.
pub const CACHE_QUANTUM: f64 = 1e-12;

/// Weight data for one normal.
#[derive(Clone, Debug)]
pub struct NormalWeights {
    pub normal: [f64; 2],
    pub frame: Frame<f64>,
    pub sysdim: usize,
    /// `(abar n.n)^{-1}`, row-major.
    pub h: Vec<f64>,
    /// Grid size of the weight modes (twice the layer resolution).
    pub grid: usize,
    /// `pieces[p][(k * L + j) * grid^2 + flat]`.
    pieces: [Vec<C64>; 3],
    /// `max |h int W - Id|`.
    pub weight_defect: f64,
    pub layer_settled: bool,
    pub layer_residual: f64,
}

fn invert(m: &[f64], l: usize) -> Result<Vec<f64>> {
    let mat = DMatrix::from_row_slice(l, l, m);
    let scale = m.iter().fold(0.0f64, |s, v| s.max(v.abs()));
    let inv = mat
        .clone()
        .try_inverse()
        .filter(|_| mat.determinant().abs() > 1e-12 * scale.powi(l as i32))
        .ok_or_else(|| Error::InvalidInput(format!("abar n.n is singular: {m:?}")))?;
    Ok((0..l * l).map(|e| inv[(e / l, e % l)]).collect())
}

fn to_grid(modes: &[C64], from: usize, m: usize) -> Vec<f64> {
    let mut spectrum = resample(modes, from, m, 2);
    NdFft::<f64>::new(m, 2).inverse(&mut spectrum);
    spectrum.iter().map(|v| v.re).collect()
}

impl NormalWeights {
    /// Assemble from the adjoint correctors and one layer per column `k` (datum `-chi*_n`).
    pub fn build(a: &PeriodicTensor<f64>, cell: &CellSolution<f64>, layers: &[LayerSolution]) -> Result<Self> {
        let l = a.sysdim();
        if a.dim() != 2 || cell.dim() != 2 || cell.sysdim() != l {
            return Err(Error::InvalidInput("tensor and cell solution must be planar with matching L".into()));
        }
        if layers.len() != l {
            return Err(Error::InvalidInput(format!("need {l} layer solutions, got {}", layers.len())));
        }
        let first = &layers[0];
        let n = first.normal.clone();
        let res = first.resolution();
        for s in layers {
            let dn = (s.normal[0] - n[0]).hypot(s.normal[1] - n[1]);
            if dn > CACHE_QUANTUM || s.resolution() != res || s.params.a != 0.0 || s.sysdim != l {
                return Err(Error::InvalidInput("layer solutions disagree in normal, resolution or plane".into()));
            }
        }
        let frame = first.frame.clone();
        let m = 2 * res;
        let mm = m * m;
        let b = a.rotated(frame.m());
        let bg = b.grid_values(m)?;
        let waves = fft::wavevectors(m, 2);
        let tcol = [frame.m_entry(0, 0), frame.m_entry(1, 0)];

        let mut grad_n = Vec::with_capacity(l * l);
        let mut grad_t = Vec::with_capacity(l * l);
        for li in 0..l {
            for k in 0..l {
                grad_n.push(to_grid(&cell.normal_gradient_modes(&n, li, k, m), m, m));
                let mut c = cell.contracted_modes(&n, li, k, m);
                for (v, w) in c.iter_mut().zip(&waves) {
                    *v *= C64::new(0.0, TAU * (tcol[0] * w[0] as f64 + tcol[1] * w[1] as f64));
                }
                grad_t.push(to_grid(&c, m, m));
            }
        }
        // layers[k].flux_modes(j) is the conormal flux component j of column k
        let flux: Vec<Vec<f64>> =
            (0..l).flat_map(|k| (0..l).map(move |j| (k, j))).map(|(k, j)| to_grid(layers[k].flux_modes(j), res, m)).collect();

        let plan = NdFft::<f64>::new(m, 2);
        let mut pieces = [vec![C64::default(); l * l * mm], vec![C64::default(); l * l * mm], vec![C64::default(); l * l * mm]];
        for k in 0..l {
            for j in 0..l {
                let mut w = [vec![C64::default(); mm], vec![C64::default(); mm], vec![C64::default(); mm]];
                for p in 0..mm {
                    w[0][p] = C64::new(bg[b.index(1, 1, k, j)][p], 0.0);
                    let mut s2 = 0.0;
                    let mut s3 = flux[k * l + j][p];
                    for li in 0..l {
                        s2 += grad_n[li * l + k][p] * bg[b.index(1, 1, li, j)][p];
                        s3 += bg[b.index(0, 1, li, j)][p] * grad_t[li * l + k][p];
                    }
                    w[1][p] = C64::new(s2, 0.0);
                    w[2][p] = C64::new(s3, 0.0);
                }
                for (piece, mut v) in pieces.iter_mut().zip(w) {
                    plan.forward(&mut v);
                    piece[(k * l + j) * mm..(k * l + j + 1) * mm].copy_from_slice(&v);
                }
            }
        }

        let mut abar_nn = vec![0.0; l * l];
        for i in 0..l {
            for j in 0..l {
                // abar of a from the adjoint homogenized tensor
                abar_nn[i * l + j] = (0..2)
                    .flat_map(|al| (0..2).map(move |be| (al, be)))
                    .map(|(al, be)| n[al] * n[be] * cell.abar_entry(be, al, j, i))
                    .sum();
            }
        }
        let h = invert(&abar_nn, l)?;
        let mut weight_defect = 0.0f64;
        for i in 0..l {
            for j in 0..l {
                let v: f64 = (0..l).map(|k| h[i * l + k] * pieces.iter().map(|p| p[(k * l + j) * mm].re).sum::<f64>()).sum();
                weight_defect = weight_defect.max((v - if i == j { 1.0 } else { 0.0 }).abs());
            }
        }
        Ok(Self {
            normal: [n[0], n[1]],
            frame,
            sysdim: l,
            h,
            grid: m,
            pieces,
            weight_defect,
            layer_settled: layers.iter().all(|s| s.settled),
            layer_residual: layers.iter().map(|s| s.residual).fold(0.0, f64::max),
        })
    }

    fn piece_modes(&self, p: usize, k: usize, j: usize) -> &[C64] {
        let mm = self.grid * self.grid;
        &self.pieces[p][(k * self.sysdim + j) * mm..(k * self.sysdim + j + 1) * mm]
    }

    /// `h int W_p g dtheta` for piece `p`.
    pub fn integrate_piece(&self, p: usize, g: &PeriodicField<f64>) -> Result<Vec<f64>> {
        let l = self.sysdim;
        if g.dim() != 2 || g.sysdim() != l {
            return Err(Error::InvalidInput("datum shape does not match the weights".into()));
        }
        let mut inner = vec![0.0; l];
        for (xi, c) in g.modes() {
            let slots = [fft::slot(-xi[0], self.grid), fft::slot(-xi[1], self.grid)];
            let (Some(s0), Some(s1)) = (slots[0], slots[1]) else { continue };
            let flat = fft::flatten(&[s0, s1], self.grid);
            for (k, o) in inner.iter_mut().enumerate() {
                for (j, cj) in c.iter().enumerate() {
                    *o += (self.piece_modes(p, k, j)[flat] * cj).re;
                }
            }
        }
        Ok((0..l).map(|i| (0..l).map(|k| self.h[i * l + k] * inner[k]).sum()).collect())
    }

    /// `h W(theta)`, row-major `L x L`.
    pub fn omega(&self, theta: &[f64]) -> Vec<f64> {
        let l = self.sysdim;
        let waves = fft::wavevectors(self.grid, 2);
        let phases: Vec<C64> = waves
            .iter()
            .map(|k| C64::from_polar(1.0, TAU * (k[0] as f64 * theta[0] + k[1] as f64 * theta[1])))
            .collect();
        let mut w = vec![0.0; l * l];
        for k in 0..l {
            for j in 0..l {
                w[k * l + j] =
                    (0..3).map(|p| self.piece_modes(p, k, j).iter().zip(&phases).map(|(c, e)| (c * e).re).sum::<f64>()).sum();
            }
        }
        (0..l * l).map(|e| (0..l).map(|k| self.h[(e / l) * l + k] * w[k * l + e % l]).sum()).collect()
    }

    /// The periodic field `h W g`, whose mean is `gbar`.
    pub fn weighted_datum(&self, g: &PeriodicField<f64>) -> Result<PeriodicField<f64>> {
        let l = self.sysdim;
        if g.dim() != 2 || g.sysdim() != l {
            return Err(Error::InvalidInput("datum shape does not match the weights".into()));
        }
        let waves = fft::wavevectors(self.grid, 2);
        let mm = self.grid * self.grid;
        let mut total = vec![C64::default(); l * l * mm];
        for p in &self.pieces {
            for (t, v) in total.iter_mut().zip(p) {
                *t += v;
            }
        }
        let peak = total.iter().fold(0.0f64, |s, v| s.max(v.norm()));
        let mut table = ModeTable::new();
        let half = (self.grid / 2) as i64;
        for (f, kw) in waves.iter().enumerate() {
            if kw.iter().any(|k| k.abs() == half) {
                continue;
            }
            for (xi, c) in g.modes() {
                let key = vec![kw[0] + xi[0], kw[1] + xi[1]];
                let mut add = vec![C64::default(); l];
                let mut any = false;
                for (i, a) in add.iter_mut().enumerate() {
                    for k in 0..l {
                        for (j, cj) in c.iter().enumerate() {
                            let w = total[(k * l + j) * mm + f];
                            if w.norm() > 1e-14 * peak {
                                *a += w * cj * self.h[i * l + k];
                                any = true;
                            }
                        }
                    }
                }
                if any {
                    let e = table.entry(key).or_insert_with(|| vec![C64::default(); l]);
                    for (ev, a) in e.iter_mut().zip(add) {
                        *ev += a;
                    }
                }
            }
        }
        PeriodicField::new(2, l, table)
    }
}

/// Correctors, layer parameters and a per-normal weight cache for one tensor.
pub struct GbarContext {
    a: PeriodicTensor<f64>,
    adjoint: PeriodicTensor<f64>,
    cell: CellSolution<f64>,
    layer: LayerParams,
    cache: Mutex<HashMap<[i64; 2], Arc<NormalWeights>>>,
}

impl GbarContext {
    /// Solve the adjoint cell problem at `cell_res`; the layer plane is forced to `a = 0`.
    pub fn new(a: &PeriodicTensor<f64>, cell_res: usize, layer: LayerParams) -> Result<Self> {
        let cell = adjoint_corrector(a, cell_res, 1e-12)?;
        Self::with_cell(a, cell, layer)
    }

    /// Use precomputed correctors of `a*`.
    pub fn with_cell(a: &PeriodicTensor<f64>, cell: CellSolution<f64>, layer: LayerParams) -> Result<Self> {
        if a.dim() != 2 || cell.dim() != 2 || cell.sysdim() != a.sysdim() {
            return Err(Error::InvalidInput("tensor and adjoint correctors must be planar with matching L".into()));
        }
        Ok(Self {
            a: a.clone(),
            adjoint: a.adjoint(),
            cell,
            layer: LayerParams { a: 0.0, ..layer },
            cache: Mutex::new(HashMap::new()),
        })
    }

    pub fn tensor(&self) -> &PeriodicTensor<f64> {
        &self.a
    }

    pub fn cell(&self) -> &CellSolution<f64> {
        &self.cell
    }

    pub fn layer_params(&self) -> &LayerParams {
        &self.layer
    }

    pub fn cached(&self) -> usize {
        self.cache.lock().map(|c| c.len()).unwrap_or(0)
    }

    /// Weights for the unit normal `normal`, solved once per quantized normal.
    pub fn weights(&self, normal: &[f64]) -> Result<Arc<NormalWeights>> {
        let key = [(normal[0] / CACHE_QUANTUM).round() as i64, (normal[1] / CACHE_QUANTUM).round() as i64];
        if let Some(w) = self.cache.lock().ok().and_then(|c| c.get(&key).cloned()) {
            return Ok(w);
        }
        let w = Arc::new(self.weights_in_frame(&build_frame(normal)?)?);
        if let Ok(mut c) = self.cache.lock() {
            c.insert(key, Arc::clone(&w));
        }
        Ok(w)
    }

    /// Uncached weights for the normal `M e_d` of an explicit frame.
    pub fn weights_in_frame(&self, frame: &Frame<f64>) -> Result<NormalWeights> {
        let normal = frame.normal();
        let problem = LayerProblem::new(&self.adjoint, frame, self.layer.clone())?;
        let l = self.a.sysdim();
        let res = self.layer.res_theta;
        let mm = res * res;
        let mut layers = Vec::with_capacity(l);
        for k in 0..l {
            let mut v0 = vec![C64::default(); l * mm];
            for li in 0..l {
                let c = self.cell.contracted_modes(&normal, li, k, res);
                for (dst, src) in v0[li * mm..(li + 1) * mm].iter_mut().zip(c) {
                    *dst = -src;
                }
            }
            layers.push(problem.solve_modes(&v0)?);
        }
        NormalWeights::build(&self.a, &self.cell, &layers)
    }
}

/// `gbar` at one boundary point with the three weight pieces.
#[derive(Clone, Debug, PartialEq)]
pub struct GbarSample {
    pub x: [f64; 2],
    pub normal: [f64; 2],
    pub gbar: Vec<f64>,
    /// Contributions of `b^{dd}`, `(n.grad chi*.n) b^{dd}` and `d_t V*.n b^{dd}`.
    pub components: [Vec<f64>; 3],
    pub quadrature_res: usize,
    pub weight_defect: f64,
    pub layer_settled: bool,
}

pub fn compute_gbar(ctx: &GbarContext, x: &[f64], normal: &[f64], g: &TwoScaleBoundaryDatum<f64>) -> Result<GbarSample> {
    if g.sysdim() != ctx.a.sysdim() || g.dim() != 2 {
        return Err(Error::InvalidInput("boundary datum shape does not match the tensor".into()));
    }
    gbar_with_weights(&*ctx.weights(normal)?, x, g)
}

/// `gbar` at `x` from precomputed weights.
pub fn gbar_with_weights(w: &NormalWeights, x: &[f64], g: &TwoScaleBoundaryDatum<f64>) -> Result<GbarSample> {
    if g.sysdim() != w.sysdim || g.dim() != 2 {
        return Err(Error::InvalidInput("boundary datum shape does not match the weights".into()));
    }
    let frozen = g.frozen(x);
    let components = [w.integrate_piece(0, &frozen)?, w.integrate_piece(1, &frozen)?, w.integrate_piece(2, &frozen)?];
    let gbar = (0..w.sysdim).map(|i| components.iter().map(|c| c[i]).sum()).collect();
    Ok(GbarSample {
        x: [x[0], x[1]],
        normal: w.normal,
        gbar,
        components,
        quadrature_res: w.grid,
        weight_defect: w.weight_defect,
        layer_settled: w.layer_settled,
    })
}

/// `h W(y / eps)` for `y` on the tangent plane through the anchor with normal `normal`.
pub fn tilde_omega(ctx: &GbarContext, normal: &[f64], eps: f64, y: &[f64]) -> Result<Vec<f64>> {
    if !(eps > 0.0) {
        return Err(Error::InvalidInput(format!("eps must be positive, got {eps}")));
    }
    let w = ctx.weights(normal)?;
    let off = y[0] * normal[0] + y[1] * normal[1];
    if off.abs() > 1e-9 * (1.0 + y[0].abs() + y[1].abs()) {
        return Err(Error::InvalidInput(format!("y is off the tangent plane by {off:.3e}")));
    }
    Ok(w.omega(&[y[0] / eps, y[1] / eps]))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProfileRow {
    pub s: f64,
    pub a_lb: f64,
    pub sample: GbarSample,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContinuityPair {
    pub first: usize,
    pub second: usize,
    pub dn: f64,
    pub dg: f64,
    /// `A` of the second normal.
    pub a_lb: f64,
    /// `|dg| / (dn A^{-3/2} (1 + dn / A))`.
    pub ratio: f64,
}

#[derive(Clone, Debug)]
pub struct GbarProfile {
    pub rows: Vec<ProfileRow>,
    pub pairs: Vec<ContinuityPair>,
    /// Order `s` of the discrete seminorm below.
    pub order: f64,
    /// `sum_{i != j} |gbar_i - gbar_j| / |x_i - x_j|^{1 + s} ds_i ds_j`.
    pub seminorm: f64,
}

impl GbarProfile {
    pub fn max_ratio(&self) -> f64 {
        self.pairs.iter().map(|p| p.ratio).fold(0.0, f64::max)
    }
}

/// Sample `gbar` at the chart parameters `2 pi (i + 1/2) / samples`; one layer solve per sample.
/// On the disc the half-step offset keeps every sampled normal irrational when `samples` is a power of two.
pub fn gbar_profile(
    dom: &ConvexDomain,
    g: &TwoScaleBoundaryDatum<f64>,
    ctx: &GbarContext,
    kappa: f64,
    xi: usize,
    samples: usize,
    threads: usize,
) -> Result<GbarProfile> {
    if samples < 16 {
        return Err(Error::InvalidInput(format!("need at least 16 samples, got {samples}")));
    }
    let params: Vec<f64> = (0..samples).map(|i| TAU * (i as f64 + 0.5) / samples as f64).collect();
    let one = |s: f64| -> Result<ProfileRow> {
        let bp = dom.chart_unchecked(s);
        let a_lb = dioph_constant(&bp.normal, kappa, xi)?.a_lb;
        Ok(ProfileRow { s, a_lb, sample: compute_gbar(ctx, &bp.point, &bp.normal, g)? })
    };
    let threads = threads.clamp(1, samples);
    let rows: Vec<ProfileRow> = if threads == 1 {
        params.iter().map(|&s| one(s)).collect::<Result<_>>()?
    } else {
        let chunk = samples.div_ceil(threads);
        std::thread::scope(|scope| {
            let handles: Vec<_> = params
                .chunks(chunk)
                .map(|part| scope.spawn(|| part.iter().map(|&s| one(s)).collect::<Result<Vec<_>>>()))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().unwrap_or_else(|_| Err(Error::NoConvergence("profile worker panicked".into()))))
                .collect::<Result<Vec<_>>>()
        })?
        .into_iter()
        .flatten()
        .collect()
    };

    let dist = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let mut pairs = Vec::new();
    for i in 0..samples {
        let j = (i + 1) % samples;
        let (r1, r2) = (&rows[i], &rows[j]);
        if r2.a_lb <= 0.0 {
            continue;
        }
        let dn = dist(&r1.sample.normal, &r2.sample.normal);
        let dg = dist(&r1.sample.gbar, &r2.sample.gbar);
        let reference = dn / r2.a_lb.powf(1.5) * (1.0 + dn / r2.a_lb);
        pairs.push(ContinuityPair { first: i, second: j, dn, dg, a_lb: r2.a_lb, ratio: if reference > 0.0 { dg / reference } else { 0.0 } });
    }
    let order = 0.5;
    let ds: Vec<f64> = params.iter().map(|&s| dom.speed(s) * TAU / samples as f64).collect();
    let mut seminorm = 0.0;
    for i in 0..samples {
        for j in 0..samples {
            if i != j {
                let dx = dist(&rows[i].sample.x, &rows[j].sample.x);
                seminorm += dist(&rows[i].sample.gbar, &rows[j].sample.gbar) / dx.powf(1.0 + order) * ds[i] * ds[j];
            }
        }
    }
    Ok(GbarProfile { rows, pairs, order, seminorm })
}
