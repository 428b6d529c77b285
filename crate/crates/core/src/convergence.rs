//! End-to-end experiments: `u^eps` against `ubar`, and the error functional `E_eps`.

use std::sync::Arc;
use std::time::Instant;

use crate::czdecomp::{decompose_diophantine, error_functional, error_norms_refined, loglog_slope, DiophantineDriver};
use crate::error::{Error, Result};
use crate::fem::{error_norm, estimated_vertices, solve_dirichlet, DiscreteSolution, Mesh, MAX_VERTICES};
use crate::fields::{ConvexDomain, PeriodicTensor, TwoScaleBoundaryDatum};
use crate::gbar::{gbar_profile, GbarContext, GbarProfile};

/// Mesh-to-period ratio below which `solve_oscillating` refuses to run.
pub const MIN_CELLS_PER_PERIOD: f64 = 8.0;

/// Exponent band for `||u^eps - ubar||_q^q` in the plane.
pub const RATE_BAND: (f64, f64) = (1.0 / 3.0, 0.5);

/// Smallest fitted exponent accepted by the rate and error functional studies.
pub const MIN_SLOPE: f64 = 0.30;

fn scalar_coefficient(a: &PeriodicTensor<f64>) -> Result<()> {
    if a.dim() != 2 || a.sysdim() != 1 {
        return Err(Error::InvalidInput("the finite element experiments are planar and scalar (L = 1)".into()));
    }
    Ok(())
}

/// `u^eps` on a prebuilt mesh.
pub fn solve_oscillating_on(
    mesh: Arc<Mesh>,
    a: &PeriodicTensor<f64>,
    g: &TwoScaleBoundaryDatum<f64>,
    eps: f64,
    tol: f64,
) -> Result<DiscreteSolution> {
    scalar_coefficient(a)?;
    if !(eps > 0.0) {
        return Err(Error::InvalidInput(format!("eps must be positive, got {eps}")));
    }
    if mesh.h > eps / MIN_CELLS_PER_PERIOD {
        return Err(Error::InvalidInput(format!(
            "mesh size {:.3e} does not resolve eps = {eps:.3e} (need h <= eps/{MIN_CELLS_PER_PERIOD})",
            mesh.h
        )));
    }
    let boundary: Vec<f64> = mesh
        .boundary
        .iter()
        .map(|&v| {
            let x = mesh.vertices[v];
            g.evaluate(&x, &[x[0] / eps, x[1] / eps])[0]
        })
        .collect();
    let coef = |x: &[f64; 2]| {
        let e = a.evaluate(&[x[0] / eps, x[1] / eps]);
        [e[a.index(0, 0, 0, 0)], e[a.index(0, 1, 0, 0)], e[a.index(1, 0, 0, 0)], e[a.index(1, 1, 0, 0)]]
    };
    solve_dirichlet(mesh, coef, &boundary, tol)
}

/// `-div(a(x/eps) grad u) = 0` in `dom`, `u = g(x, x/eps)` on the boundary; refuses `h > eps/8`.
pub fn solve_oscillating(
    a: &PeriodicTensor<f64>,
    g: &TwoScaleBoundaryDatum<f64>,
    dom: &ConvexDomain,
    eps: f64,
    h: f64,
    tol: f64,
) -> Result<DiscreteSolution> {
    if !(eps > 0.0) || h > eps / MIN_CELLS_PER_PERIOD {
        return Err(Error::InvalidInput(format!("h = {h:.3e} does not resolve eps = {eps:.3e} (need h <= eps/8)")));
    }
    solve_oscillating_on(Arc::new(Mesh::new(dom, h)?), a, g, eps, tol)
}

/// `ubar` with constant `abar` (row-major `2 x 2`) and boundary values `gbar(s, x)`.
pub fn solve_homogenized_with<G: Fn(f64, &[f64; 2]) -> f64>(mesh: Arc<Mesh>, abar: &[f64; 4], gbar: G, tol: f64) -> Result<DiscreteSolution> {
    let sym = [abar[0], 0.5 * (abar[1] + abar[2]), 0.5 * (abar[1] + abar[2]), abar[3]];
    let boundary: Vec<f64> = mesh.boundary.iter().zip(&mesh.boundary_param).map(|(&v, &s)| gbar(s, &mesh.vertices[v])).collect();
    solve_dirichlet(mesh, |_| sym, &boundary, tol)
}

/// Nearest-sample value of a profile at chart parameter `s`.
pub fn profile_value(profile: &GbarProfile, s: f64) -> f64 {
    let n = profile.rows.len();
    let k = ((s / std::f64::consts::TAU).rem_euclid(1.0) * n as f64).floor() as usize % n;
    profile.rows[k].sample.gbar[0]
}

/// `ubar` with boundary values interpolated from a `gbar` profile.
pub fn solve_homogenized(abar: &[f64; 4], profile: &GbarProfile, dom: &ConvexDomain, h: f64, tol: f64) -> Result<DiscreteSolution> {
    solve_homogenized_on(Arc::new(Mesh::new(dom, h)?), abar, profile, tol)
}

pub fn solve_homogenized_on(mesh: Arc<Mesh>, abar: &[f64; 4], profile: &GbarProfile, tol: f64) -> Result<DiscreteSolution> {
    if profile.rows.is_empty() || profile.rows[0].sample.gbar.len() != 1 {
        return Err(Error::InvalidInput("profile must be scalar and non-empty".into()));
    }
    solve_homogenized_with(mesh, abar, |s, _| profile_value(profile, s), tol)
}

/// `abar` of `a` from the adjoint correctors held by the context.
pub fn homogenized_matrix(ctx: &GbarContext) -> [f64; 4] {
    let c = ctx.cell();
    [c.abar_entry(0, 0, 0, 0), c.abar_entry(1, 0, 0, 0), c.abar_entry(0, 1, 0, 0), c.abar_entry(1, 1, 0, 0)]
}

#[derive(Clone, Debug, PartialEq)]
pub struct RateConfig {
    pub epsilons: Vec<f64>,
    pub q: f64,
    /// `h = eps / h_ratio`, at least 8.
    pub h_ratio: f64,
    pub tol: f64,
    /// Also solve at `h/2` and flag records whose mesh error exceeds 10% of the measured error.
    pub mesh_check: bool,
    pub gbar_samples: usize,
    pub kappa: f64,
    pub xi: usize,
    pub threads: usize,
    pub config_hash: String,
}

impl Default for RateConfig {
    fn default() -> Self {
        Self {
            epsilons: (6..=9).map(|k| 2f64.powi(-k)).collect(),
            q: 2.0,
            h_ratio: 8.0,
            tol: 1e-10,
            mesh_check: true,
            gbar_samples: 512,
            kappa: 1.5,
            xi: 64,
            threads: 1,
            config_hash: String::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct ExperimentRecord {
    pub epsilon: f64,
    pub h: f64,
    pub q: f64,
    /// `int |u^eps - ubar|^q`.
    pub error_q: f64,
    /// `||u^eps - ubar||_q`.
    pub error_lq: f64,
    /// `| ||.||_q(h) - ||.||_q(h/2) |` when the mesh check ran.
    pub mesh_error: Option<f64>,
    pub valid: bool,
    pub vertices: usize,
    pub runtime_s: f64,
    pub config_hash: String,
}

#[derive(Clone, Debug)]
pub struct RateStudy {
    pub records: Vec<ExperimentRecord>,
    /// Least-squares slope of `log error_q` against `log eps`.
    pub slope: f64,
    pub in_band: bool,
    /// Indices `i` with `error_q[i + 1] > error_q[i]` (records ordered by decreasing eps).
    pub monotone_violations: Vec<usize>,
    /// `g` does not depend on `y`; the slope only reflects mesh error.
    pub uninformative: bool,
    pub profile: GbarProfile,
}

fn one_record(
    a: &PeriodicTensor<f64>,
    g: &TwoScaleBoundaryDatum<f64>,
    dom: &ConvexDomain,
    abar: &[f64; 4],
    profile: &GbarProfile,
    eps: f64,
    cfg: &RateConfig,
) -> Result<ExperimentRecord> {
    let start = Instant::now();
    let measure = |h: f64| -> Result<(f64, usize)> {
        let mesh = Arc::new(Mesh::new(dom, h)?);
        let ue = solve_oscillating_on(Arc::clone(&mesh), a, g, eps, cfg.tol)?;
        let ub = solve_homogenized_on(Arc::clone(&mesh), abar, profile, cfg.tol)?;
        Ok((error_norm(&ue, &ub, cfg.q, 0)?, mesh.len()))
    };
    let h = eps / cfg.h_ratio;
    let (error_q, vertices) = measure(h)?;
    let error_lq = error_q.powf(1.0 / cfg.q);
    let mesh_error = if cfg.mesh_check { Some((measure(h / 2.0)?.0.powf(1.0 / cfg.q) - error_lq).abs()) } else { None };
    let valid = mesh_error.is_none_or(|m| m <= 0.1 * error_lq);
    Ok(ExperimentRecord {
        epsilon: eps,
        h,
        q: cfg.q,
        error_q,
        error_lq,
        mesh_error,
        valid,
        vertices,
        runtime_s: start.elapsed().as_secs_f64(),
        config_hash: cfg.config_hash.clone(),
    })
}

/// Errors over a geometric list of `eps` and their fitted exponent.
pub fn rate_study(
    a: &PeriodicTensor<f64>,
    g: &TwoScaleBoundaryDatum<f64>,
    dom: &ConvexDomain,
    ctx: &GbarContext,
    cfg: &RateConfig,
) -> Result<RateStudy> {
    scalar_coefficient(a)?;
    if cfg.epsilons.len() < 4 {
        return Err(Error::InvalidInput(format!("rate study needs at least 4 eps values, got {}", cfg.epsilons.len())));
    }
    if cfg.h_ratio < MIN_CELLS_PER_PERIOD {
        return Err(Error::InvalidInput(format!("h_ratio {} below {MIN_CELLS_PER_PERIOD}", cfg.h_ratio)));
    }
    if cfg.gbar_samples < 512 {
        return Err(Error::InvalidInput(format!("gbar profile needs at least 512 samples, got {}", cfg.gbar_samples)));
    }
    if !(cfg.q >= 2.0) {
        return Err(Error::InvalidInput(format!("exponent q must lie in [2, inf), got {}", cfg.q)));
    }
    let mut eps = cfg.epsilons.clone();
    eps.sort_by(|x, y| y.total_cmp(x));
    let finest = eps[eps.len() - 1] / cfg.h_ratio / if cfg.mesh_check { 2.0 } else { 1.0 };
    let need = estimated_vertices(dom, finest);
    if need > MAX_VERTICES {
        return Err(Error::Geometry(format!(
            "eps = {:.3e} needs a mesh with h = {finest:.3e} and about {need} vertices (limit {MAX_VERTICES})",
            eps[eps.len() - 1]
        )));
    }
    let profile = gbar_profile(dom, g, ctx, cfg.kappa, cfg.xi, cfg.gbar_samples, cfg.threads)?;
    let abar = homogenized_matrix(ctx);
    let threads = cfg.threads.clamp(1, eps.len());
    let records: Vec<ExperimentRecord> = if threads == 1 {
        eps.iter().map(|&e| one_record(a, g, dom, &abar, &profile, e, cfg)).collect::<Result<_>>()?
    } else {
        let (abar, profile) = (&abar, &profile);
        std::thread::scope(|scope| {
            let handles: Vec<_> =
                eps.iter().map(|&e| scope.spawn(move || one_record(a, g, dom, abar, profile, e, cfg))).collect();
            handles.into_iter().map(|h| h.join().unwrap_or_else(|_| Err(Error::NoConvergence("record worker panicked".into())))).collect::<Result<Vec<_>>>()
        })?
    };
    let slope = loglog_slope(&records.iter().map(|r| (r.epsilon, r.error_q)).collect::<Vec<_>>());
    let monotone_violations = records.windows(2).enumerate().filter(|(_, w)| w[1].error_q > w[0].error_q).map(|(i, _)| i).collect();
    Ok(RateStudy {
        slope,
        in_band: slope >= MIN_SLOPE,
        monotone_violations,
        uninformative: g.is_slow_only(),
        records,
        profile,
    })
}

#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct EfuncRow {
    pub epsilon: f64,
    pub cubes: usize,
    pub l1: f64,
    pub l2_sq: f64,
    /// `l2_sq` with doubled quadrature density, when requested.
    pub refined_l2_sq: Option<f64>,
    pub gamma_measure: f64,
    /// Smallest value of `E_eps` at interior probe points.
    pub min_value: f64,
    pub runtime_s: f64,
}

impl EfuncRow {
    pub fn refinement_change(&self) -> Option<f64> {
        self.refined_l2_sq.map(|r| (r - self.l2_sq).abs() / self.l2_sq.abs().max(f64::MIN_POSITIVE))
    }
}

#[derive(Clone, Debug)]
pub struct EfuncStudy {
    pub rows: Vec<EfuncRow>,
    /// Fitted exponent of `||E_eps||_2^2` over rows where `Gamma_eps` leaves something; NaN if fewer than two.
    pub exponent: f64,
    pub nonnegative: bool,
}

/// `||E_eps||` on `Omega \ Gamma_eps` for each `eps`, from the Diophantine decomposition.
pub fn error_functional_study(
    dom: &ConvexDomain,
    epsilons: &[f64],
    delta: f64,
    kappa: f64,
    xi: Option<usize>,
    refine_check: bool,
) -> Result<EfuncStudy> {
    if epsilons.len() < 2 {
        return Err(Error::InvalidInput("need at least two eps values".into()));
    }
    let mut rows = Vec::with_capacity(epsilons.len());
    for &eps in epsilons {
        let start = Instant::now();
        let part = decompose_diophantine(dom, DiophantineDriver::new(eps, delta, kappa, xi)?)?;
        let norms = error_norms_refined(&part, dom, eps, 1)?;
        let refined_l2_sq = if refine_check { Some(error_norms_refined(&part, dom, eps, 2)?.l2_sq) } else { None };
        let mut min_value = f64::INFINITY;
        let probes = 24;
        for i in 0..probes {
            for j in 0..probes {
                let x = [dom.half_extent() * (2.0 * (i as f64 + 0.5) / probes as f64 - 1.0), dom.half_extent() * (2.0 * (j as f64 + 0.5) / probes as f64 - 1.0)];
                if !dom.contains(&x) {
                    continue;
                }
                match error_functional(&part, dom, &x, eps) {
                    Ok(v) => min_value = min_value.min(v),
                    Err(Error::Excluded(_)) => {}
                    Err(e) => return Err(e),
                }
            }
        }
        rows.push(EfuncRow {
            epsilon: eps,
            cubes: part.len(),
            l1: norms.l1,
            l2_sq: norms.l2_sq,
            refined_l2_sq,
            gamma_measure: norms.gamma_measure,
            min_value,
            runtime_s: start.elapsed().as_secs_f64(),
        });
    }
    let fit: Vec<(f64, f64)> = rows.iter().filter(|r| r.l2_sq > 0.0).map(|r| (r.epsilon, r.l2_sq)).collect();
    let exponent = if fit.len() >= 2 { loglog_slope(&fit) } else { f64::NAN };
    let nonnegative = rows.iter().all(|r| r.l1 >= 0.0 && r.l2_sq >= 0.0 && !(r.min_value < 0.0));
    Ok(EfuncStudy { rows, exponent, nonnegative })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::error_against;
    use crate::fields::{PeriodicField, SlowFactor};
    use crate::halfspace::LayerParams;

    fn oscillating_datum() -> TwoScaleBoundaryDatum<f64> {
        TwoScaleBoundaryDatum::new(vec![(SlowFactor::Constant(1.0), PeriodicField::cosine(&[1, 0], 1.0, 0.0))]).unwrap()
    }

    #[test]
    fn refuses_unresolved_meshes() {
        let a = PeriodicTensor::identity(2, 1, 0.5);
        let dom = ConvexDomain::unit_disc();
        assert!(solve_oscillating(&a, &oscillating_datum(), &dom, 0.125, 0.02, 1e-10).is_err());
        assert!(solve_oscillating(&PeriodicTensor::identity(2, 2, 0.5), &oscillating_datum(), &dom, 0.125, 0.01, 1e-10).is_err());
    }

    #[test]
    fn slow_data_gives_harmonic_extension() {
        let a = PeriodicTensor::identity(2, 1, 0.5);
        let dom = ConvexDomain::unit_disc();
        let g = TwoScaleBoundaryDatum::new(vec![(
            SlowFactor::Affine { c0: 0.0, grad: vec![1.0, 0.0] },
            PeriodicField::constant(2, &[1.0]),
        )])
        .unwrap();
        let u = solve_oscillating(&a, &g, &dom, 0.5, 0.05, 1e-10).unwrap();
        assert!(error_against(&u, |x| x[0], 2.0, 0).unwrap() < 1e-20);
    }

    #[test]
    fn oscillating_self_convergence_is_second_order() {
        let a = PeriodicTensor::identity(2, 1, 0.5);
        let dom = ConvexDomain::unit_disc();
        let eps = 0.125;
        let sols: Vec<DiscreteSolution> =
            [eps / 8.0, eps / 16.0, eps / 32.0].iter().map(|&h| solve_oscillating(&a, &oscillating_datum(), &dom, eps, h, 1e-10).unwrap()).collect();
        let d1 = error_norm(&sols[0], &sols[1], 2.0, 0).unwrap().sqrt();
        let d2 = error_norm(&sols[1], &sols[2], 2.0, 0).unwrap().sqrt();
        let order = (d1 / d2).log2();
        assert!((1.6..2.6).contains(&order), "order {order}");
        for s in &sols {
            assert!(s.values.iter().all(|v| (-1.0 - 1e-8..=1.0 + 1e-8).contains(v)));
        }
    }

    #[test]
    fn homogenized_oracles() {
        let dom = ConvexDomain::unit_disc();
        let id = [1.0, 0.0, 0.0, 1.0];
        let mesh = Arc::new(Mesh::new(&dom, 0.05).unwrap());
        let one = solve_homogenized_with(Arc::clone(&mesh), &id, |_, _| 1.0, 1e-10).unwrap();
        assert!(one.values.iter().all(|v| (v - 1.0).abs() < 1e-12));
        let lin = solve_homogenized_with(Arc::clone(&mesh), &id, |s, _| s.cos(), 1e-10).unwrap();
        assert!(error_against(&lin, |x| x[0], 2.0, 0).unwrap() < 1e-20);
        // laminate-type anisotropy: x^2 / 4 - y^2 is harmonic for diag(4, 1)
        let aniso = [4.0, 0.0, 0.0, 1.0];
        let exact = |x: &[f64; 2]| x[0] * x[0] / 4.0 - x[1] * x[1];
        let errs: Vec<f64> = [0.1, 0.05]
            .iter()
            .map(|&h| {
                let m = Arc::new(Mesh::new(&dom, h).unwrap());
                let u = solve_homogenized_with(m, &aniso, |_, x| exact(x), 1e-10).unwrap();
                error_against(&u, exact, 2.0, 0).unwrap().sqrt() / u.h.powi(2)
            })
            .collect();
        assert!(errs[1] < 1.5 * errs[0], "{errs:?}");
    }

    #[test]
    fn rate_study_identity_tensor() {
        let a = PeriodicTensor::identity(2, 1, 0.5);
        let dom = ConvexDomain::unit_disc();
        let ctx = GbarContext::new(&a, 8, LayerParams { res_theta: 8, nodes: 40, length: 5.0, ..Default::default() }).unwrap();
        let cfg = RateConfig { epsilons: vec![0.5, 0.25, 0.125, 0.0625], mesh_check: false, ..Default::default() };
        let study = rate_study(&a, &oscillating_datum(), &dom, &ctx, &cfg).unwrap();
        assert_eq!(study.records.len(), 4);
        assert!(study.records.windows(2).all(|w| w[0].epsilon > w[1].epsilon));
        assert!(study.records.iter().all(|r| r.error_q >= 0.0 && r.h <= r.epsilon / 8.0));
        assert!(study.slope >= 0.45, "slope {}", study.slope);
        assert!(!study.uninformative);
        let short = RateConfig { epsilons: vec![0.5, 0.25, 0.125], ..cfg };
        assert!(rate_study(&a, &oscillating_datum(), &dom, &ctx, &short).is_err());
    }

    #[test]
    fn error_functional_table() {
        let dom = ConvexDomain::unit_disc();
        let study = error_functional_study(&dom, &[2f64.powi(-6), 2f64.powi(-7)], 0.02, 1.5, None, true).unwrap();
        assert!(study.nonnegative);
        assert!(study.exponent.is_finite(), "{:?}", study.rows);
        for r in &study.rows {
            assert!(r.refinement_change().unwrap() < 0.02);
        }
    }
}
