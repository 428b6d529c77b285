//! Subcommand runners: compute, write plot-ready tables, and collect invariant checks.
//!
//! CSV files hold only deterministic columns so that reruns of one configuration are
//! byte-identical; wall-clock times go to the JSON summaries and the manifest.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::json;

use crate::cell::{rayleigh_range, solve_corrector};
use crate::config::{golden_direction, Config};
use crate::convergence::{error_functional_study, rate_study, RateConfig, MIN_SLOPE};
use crate::czdecomp::{check_partition, check_partition_of_unity, decompose_diophantine, size_constants, DiophantineDriver};
use crate::dioph::{build_frame, dioph_constant, dioph_statistics};
use crate::error::{Error, Result};
use crate::ergodic::{verify_ergodic, SmoothWindow};
use crate::fields::PeriodicField;
use crate::gbar::{gbar_profile, GbarContext};
use crate::halfspace::{decay_profile, layer_tail, solve_layer, LayerParams};

/// Largest acceptable `|h int W - Id|` for the normal weight.
pub const WEIGHT_DEFECT_TOL: f64 = 1e-6;
/// Largest acceptable tail drift when the truncation length doubles.
pub const TAIL_DRIFT_TOL: f64 = 1e-5;
/// Largest acceptable `|sum psi - 1|`.
pub const PARTITION_SUM_TOL: f64 = 1e-10;
/// Largest acceptable relative change of `||E_eps||^2` under quadrature refinement.
pub const QUADRATURE_CHANGE_TOL: f64 = 0.02;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Cell,
    Dioph,
    Ergodic,
    Decompose,
    Layer,
    Gbar,
    Converge,
    Efunc,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Cell => "cell",
            Command::Dioph => "dioph",
            Command::Ergodic => "ergodic",
            Command::Decompose => "decompose",
            Command::Layer => "layer",
            Command::Gbar => "gbar",
            Command::Converge => "converge",
            Command::Efunc => "efunc",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, pass: bool, detail: String) -> Self {
        Self { name: name.to_string(), pass, detail }
    }
}

/// Output directory with a record of every file written.
pub struct Output {
    dir: PathBuf,
    files: Vec<String>,
}

impl Output {
    pub fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf(), files: Vec::new() })
    }

    pub fn csv<S: Serialize>(&mut self, name: &str, rows: &[S]) -> Result<()> {
        let mut w = csv::Writer::from_path(self.dir.join(name)).map_err(csv_error)?;
        for r in rows {
            w.serialize(r).map_err(csv_error)?;
        }
        w.flush()?;
        self.files.push(name.to_string());
        Ok(())
    }

    pub fn json<S: Serialize>(&mut self, name: &str, value: &S) -> Result<()> {
        std::fs::write(self.dir.join(name), serde_json::to_string_pretty(value)? + "\n")?;
        self.files.push(name.to_string());
        Ok(())
    }

    pub fn files(&self) -> &[String] {
        &self.files
    }
}

fn csv_error(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

/// Result of one subcommand.
#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub command: Command,
    pub checks: Vec<Check>,
    pub runtime_s: f64,
}

impl Report {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

/// Run one subcommand, write its outputs and the manifest, and return the checks.
pub fn execute(cmd: Command, cfg: &Config, out_dir: &Path, threads: usize) -> Result<Report> {
    let mut out = Output::new(out_dir)?;
    let start = Instant::now();
    let threads = threads.max(1);
    let checks = match cmd {
        Command::Cell => run_cell(cfg, &mut out)?,
        Command::Dioph => run_dioph(cfg, &mut out)?,
        Command::Ergodic => run_ergodic(cfg, &mut out)?,
        Command::Decompose => run_decompose(cfg, &mut out)?,
        Command::Layer => run_layer(cfg, &mut out)?,
        Command::Gbar => run_gbar(cfg, &mut out, threads)?,
        Command::Converge => run_converge(cfg, &mut out, threads)?,
        Command::Efunc => run_efunc(cfg, &mut out)?,
    };
    let report = Report { command: cmd, checks, runtime_s: start.elapsed().as_secs_f64() };
    let manifest = json!({
        "command": cmd.name(),
        "config_hash": cfg.hash(),
        "config": cfg.canonical(),
        "package": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "target": format!("{}-{}", std::env::consts::ARCH, std::env::consts::OS),
        "threads": threads,
        "outputs": out.files(),
        "checks": report.checks,
        "all_pass": report.all_pass(),
        "runtime_s": report.runtime_s,
    });
    out.json("manifest.json", &manifest)?;
    Ok(report)
}

#[derive(Serialize)]
struct ChiRow {
    y1: f64,
    y2: f64,
    chi1: f64,
    chi2: f64,
}

fn run_cell(cfg: &Config, out: &mut Output) -> Result<Vec<Check>> {
    let a = cfg.coefficient.build()?;
    let cert = a.validate_ellipticity(32)?;
    let sol = solve_corrector(&a, cfg.cell.resolution, cfg.cell.tol)?;
    let (lo, hi) = rayleigh_range(sol.abar(), 2, 1);
    let m = cfg.cell.grid.max(2);
    let mut rows = Vec::with_capacity(m * m);
    for j in 0..m {
        for i in 0..m {
            let y = [i as f64 / m as f64, j as f64 / m as f64];
            rows.push(ChiRow { y1: y[0], y2: y[1], chi1: sol.chi_at(0, &y)[0], chi2: sol.chi_at(1, &y)[0] });
        }
    }
    out.csv("chi.csv", &rows)?;
    out.json(
        "abar.json",
        &json!({
            "abar": [[sol.abar_entry(0, 0, 0, 0), sol.abar_entry(0, 1, 0, 0)], [sol.abar_entry(1, 0, 0, 0), sol.abar_entry(1, 1, 0, 0)]],
            "resolution": sol.resolution(),
            "residual": sol.residual,
            "iterations": sol.iterations,
            "ellipticity": { "min": cert.min_quotient, "max": cert.max_quotient, "lambda_observed": cert.lambda_observed },
            "abar_eigenvalues": [lo, hi],
        }),
    )?;
    Ok(vec![
        Check::new("coefficient_elliptic", cert.pass, format!("quotients in [{:.4}, {:.4}]", cert.min_quotient, cert.max_quotient)),
        Check::new(
            "abar_bounds",
            lo >= cert.min_quotient * (1.0 - 1e-10) && hi <= cert.max_quotient * (1.0 + 1e-10),
            format!("abar eigenvalues [{lo:.6}, {hi:.6}]"),
        ),
        Check::new("corrector_residual", sol.residual <= cfg.cell.tol.max(1e-14), format!("{:.2e}", sol.residual)),
    ])
}

#[derive(Serialize)]
struct DiophRow {
    s: f64,
    n1: f64,
    n2: f64,
    a_lb: f64,
}

fn run_dioph(cfg: &Config, out: &mut Output) -> Result<Vec<Check>> {
    let c = &cfg.dioph;
    if let Some(n) = c.n {
        let dir = dioph_constant(&n, c.kappa, c.xi)?;
        let frame = build_frame(&dir.n)?;
        out.csv("dioph.csv", &[DiophRow { s: 0.0, n1: dir.n[0], n2: dir.n[1], a_lb: dir.a_lb }])?;
        out.json("dioph.json", &json!({ "n": dir.n, "kappa": dir.kappa, "xi": dir.xi, "a_lb": dir.a_lb, "rational": dir.is_rational() }))?;
        let defect = frame.orthogonality_defect();
        return Ok(vec![
            Check::new("frame_orthogonal", defect < 1e-12, format!("{defect:.2e}")),
            Check::new("constant_in_range", (0.0..=1.0).contains(&dir.a_lb), format!("A = {:.6e}", dir.a_lb)),
        ]);
    }
    let dom = cfg.domain.build()?;
    let stats = dioph_statistics(&dom, c.samples, c.kappa, c.xi)?;
    let rows: Vec<DiophRow> = stats.samples.iter().map(|p| DiophRow { s: p.s, n1: p.n[0], n2: p.n[1], a_lb: p.a_lb }).collect();
    out.csv("dioph.csv", &rows)?;
    out.json(
        "dioph.json",
        &json!({ "samples": rows.len(), "rational": stats.rational, "weak_norm": stats.weak_norm, "kappa": c.kappa, "xi": c.xi }),
    )?;
    let bad = stats.samples.iter().filter(|p| !(0.0..=1.0).contains(&p.a_lb)).count();
    let unit = stats.samples.iter().map(|p| (p.n[0].hypot(p.n[1]) - 1.0).abs()).fold(0.0, f64::max);
    Ok(vec![
        Check::new("constants_in_range", bad == 0, format!("{bad} samples outside [0, 1]")),
        Check::new("normals_unit", unit < 1e-12, format!("{unit:.2e}")),
        Check::new("weak_norm_finite", stats.weak_norm.is_finite(), format!("{:.4e}", stats.weak_norm)),
    ])
}

#[derive(Serialize)]
struct ErgodicRow {
    kernel: usize,
    eta: f64,
    k: usize,
    error: f64,
    bound: f64,
    pass: bool,
}

fn run_ergodic(cfg: &Config, out: &mut Output) -> Result<Vec<Check>> {
    let c = &cfg.ergodic;
    let n = c.n.unwrap_or_else(golden_direction);
    let xi = usize::try_from(c.cutoff).map_err(|_| Error::Config("ergodic.cutoff must be nonnegative".into()))?.max(1);
    let dir = dioph_constant(&n, c.kappa, xi)?;
    let frame = build_frame(&dir.n)?;
    let psi = SmoothWindow::gaussian(c.sigma, 1)?;
    let mut rows = Vec::new();
    for kernel in 0..c.kernels {
        let k = PeriodicField::random(2, c.cutoff, 1.0, c.seed.wrapping_add(kernel as u64))?;
        for r in verify_ergodic(&psi, &k, &dir, &frame, &c.etas, &c.ks)? {
            rows.push(ErgodicRow { kernel, eta: r.eta, k: r.k, error: r.error, bound: r.bound, pass: r.pass });
        }
    }
    out.csv("ergodic.csv", &rows)?;
    let failed = rows.iter().filter(|r| !r.pass).count();
    out.json("ergodic.json", &json!({ "cases": rows.len(), "failed": failed, "a_lb": dir.a_lb, "n": dir.n }))?;
    Ok(vec![Check::new("ergodic_bound", failed == 0, format!("{failed} of {} cases above the bound", rows.len()))])
}

#[derive(Serialize)]
struct CubeRow {
    epsilon: f64,
    level: i32,
    size: f64,
    c1: f64,
    c2: f64,
    anchor1: Option<f64>,
    anchor2: Option<f64>,
    a_lb: Option<f64>,
}

fn run_decompose(cfg: &Config, out: &mut Output) -> Result<Vec<Check>> {
    let c = &cfg.decompose;
    let dom = cfg.domain.build()?;
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    let mut checks = Vec::new();
    let mut constants = Vec::new();
    for &eps in &c.epsilons {
        let start = Instant::now();
        let part = decompose_diophantine(&dom, DiophantineDriver::new(eps, c.delta, c.kappa, c.xi)?)?;
        let chk = check_partition(&part, &dom, c.coverage_samples)?;
        let pu = check_partition_of_unity(&part, &dom, c.pu_samples)?;
        let (lo, hi) = size_constants(&chk, eps, c.delta);
        constants.push((lo, hi));
        for (cube, anchor) in part.cubes.iter().zip(&part.anchors) {
            let p = cube.center_point();
            rows.push(CubeRow {
                epsilon: eps,
                level: cube.level,
                size: cube.size(),
                c1: p[0],
                c2: p[1],
                anchor1: anchor.as_ref().map(|a| a.point[0]),
                anchor2: anchor.as_ref().map(|a| a.point[1]),
                a_lb: anchor.as_ref().map(|a| a.a_lb),
            });
        }
        checks.push(Check::new(
            &format!("exact_properties_eps_{eps:e}"),
            chk.exact_properties_hold(),
            format!(
                "misses {} not_meeting {} essinf {} ratio {} overlaps {}",
                chk.coverage_misses, chk.not_meeting, chk.essinf_violations, chk.ratio_violations, chk.overlaps
            ),
        ));
        checks.push(Check::new(
            &format!("partition_of_unity_eps_{eps:e}"),
            pu.sum_defect <= PARTITION_SUM_TOL && pu.range_ok && pu.support_violations == 0,
            format!("sum defect {:.2e}, support violations {}", pu.sum_defect, pu.support_violations),
        ));
        summary.push(json!({
            "epsilon": eps,
            "cubes": chk.cubes,
            "per_level": chk.per_level,
            "c": lo,
            "C": hi,
            "counting_constant": chk.counting_constant,
            "sum_defect": pu.sum_defect,
            "derivative_constants": pu.derivative_constants,
            "runtime_s": start.elapsed().as_secs_f64(),
        }));
    }
    let spread = |f: fn(&(f64, f64)) -> f64| {
        let v: Vec<f64> = constants.iter().map(f).collect();
        v.iter().cloned().fold(0.0, f64::max) / v.iter().cloned().fold(f64::INFINITY, f64::min)
    };
    if constants.len() > 1 {
        let (sc, sbig) = (spread(|p| p.0), spread(|p| p.1));
        checks.push(Check::new("size_constants_stable", sc <= 2.0 && sbig <= 2.0, format!("c spread {sc:.3}, C spread {sbig:.3}")));
    }
    out.csv("cubes.csv", &rows)?;
    out.json("decompose.json", &summary)?;
    Ok(checks)
}

#[derive(Serialize)]
struct DecayRow {
    t: f64,
    norm: f64,
    dt_norm: f64,
    tan_norm: f64,
}

fn run_layer(cfg: &Config, out: &mut Output) -> Result<Vec<Check>> {
    let c = &cfg.layer;
    let a = cfg.coefficient.build()?;
    let n = c.n.unwrap_or_else(golden_direction);
    let dir = dioph_constant(&n, 1.5, 64)?;
    let frame = build_frame(&dir.n)?;
    let v0 = c.datum.build()?;
    let params = c.discretisation.params();
    let sol = solve_layer(&a, &frame, &v0, params.clone())?;
    let prof = decay_profile(&sol);
    let rows: Vec<DecayRow> =
        prof.samples.iter().map(|s| DecayRow { t: s.t, norm: s.total(), dt_norm: s.dt_norm, tan_norm: s.tan_norm }).collect();
    out.csv("decay.csv", &rows)?;
    let mut checks = vec![Check::new("tail_settled", sol.settled, format!("residual {:.2e}", sol.residual))];
    let mut drift = None;
    if c.doubling {
        let doubled = LayerParams { length: 2.0 * params.length, nodes: 2 * params.nodes, ..params.clone() };
        let other = solve_layer(&a, &frame, &v0, doubled)?;
        let d = sol.tail.iter().zip(&other.tail).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        checks.push(Check::new("tail_drift", d <= TAIL_DRIFT_TOL && other.settled, format!("{d:.3e}")));
        drift = Some(d);
    }
    out.json(
        "tail.json",
        &json!({
            "n": dir.n,
            "a_lb": dir.a_lb,
            "tail": layer_tail(&sol).ok(),
            "raw_tail": sol.tail,
            "settled": sol.settled,
            "exp_rate": prof.exp_rate,
            "poly_order": prof.poly_order,
            "fit_points": prof.fit_points,
            "envelope_violation": prof.envelope_violation,
            "doubling_drift": drift,
            "iterations": sol.iterations,
            "residual": sol.residual,
        }),
    )?;
    Ok(checks)
}

#[derive(Serialize)]
struct GbarRow {
    s: f64,
    x1: f64,
    x2: f64,
    n1: f64,
    n2: f64,
    a_lb: f64,
    gbar: f64,
    piece_b: f64,
    piece_chi: f64,
    piece_layer: f64,
}

fn run_gbar(cfg: &Config, out: &mut Output, threads: usize) -> Result<Vec<Check>> {
    let c = &cfg.gbar;
    let a = cfg.coefficient.build()?;
    let g = cfg.datum.build()?;
    let dom = cfg.domain.build()?;
    let ctx = GbarContext::new(&a, c.cell_resolution, c.layer.params())?;
    let prof = gbar_profile(&dom, &g, &ctx, c.kappa, c.xi, c.samples, threads)?;
    let rows: Vec<GbarRow> = prof
        .rows
        .iter()
        .map(|r| GbarRow {
            s: r.s,
            x1: r.sample.x[0],
            x2: r.sample.x[1],
            n1: r.sample.normal[0],
            n2: r.sample.normal[1],
            a_lb: r.a_lb,
            gbar: r.sample.gbar[0],
            piece_b: r.sample.components[0][0],
            piece_chi: r.sample.components[1][0],
            piece_layer: r.sample.components[2][0],
        })
        .collect();
    out.csv("gbar.csv", &rows)?;
    let defect = prof.rows.iter().map(|r| r.sample.weight_defect).fold(0.0, f64::max);
    // rational normals are evaluated and flagged through a_lb = 0; their layers need not settle
    let unsettled = prof.rows.iter().filter(|r| r.a_lb > 0.0 && !r.sample.layer_settled).count();
    let rational = prof.rows.iter().filter(|r| r.a_lb == 0.0).count();
    out.json(
        "gbar.json",
        &json!({
            "samples": rows.len(),
            "max_weight_defect": defect,
            "unsettled_layers": unsettled,
            "rational_normals": rational,
            "max_continuity_ratio": prof.max_ratio(),
            "continuity_pairs": prof.pairs.len(),
            "seminorm_order": prof.order,
            "seminorm": prof.seminorm,
        }),
    )?;
    Ok(vec![
        Check::new("weight_normalised", defect <= WEIGHT_DEFECT_TOL, format!("{defect:.2e}")),
        Check::new("layers_settled", unsettled == 0, format!("{unsettled} unsettled")),
        Check::new("continuity_ratio_finite", prof.max_ratio().is_finite(), format!("{:.4e}", prof.max_ratio())),
    ])
}

#[derive(Serialize)]
struct ConvergeRow {
    epsilon: f64,
    h: f64,
    q: f64,
    error_q: f64,
    error_lq: f64,
    mesh_error: Option<f64>,
    valid: bool,
    vertices: usize,
    config_hash: String,
}

fn run_converge(cfg: &Config, out: &mut Output, threads: usize) -> Result<Vec<Check>> {
    let c = &cfg.converge;
    let a = cfg.coefficient.build()?;
    let g = cfg.datum.build()?;
    let dom = cfg.domain.build()?;
    let ctx = GbarContext::new(&a, cfg.gbar.cell_resolution, cfg.gbar.layer.params())?;
    let rc = RateConfig {
        epsilons: c.epsilons.clone(),
        q: c.q,
        h_ratio: c.h_ratio,
        tol: c.tol,
        mesh_check: c.mesh_check,
        gbar_samples: c.gbar_samples,
        kappa: cfg.gbar.kappa,
        xi: cfg.gbar.xi,
        threads,
        config_hash: cfg.hash(),
    };
    let study = rate_study(&a, &g, &dom, &ctx, &rc)?;
    let rows: Vec<ConvergeRow> = study
        .records
        .iter()
        .map(|r| ConvergeRow {
            epsilon: r.epsilon,
            h: r.h,
            q: r.q,
            error_q: r.error_q,
            error_lq: r.error_lq,
            mesh_error: r.mesh_error,
            valid: r.valid,
            vertices: r.vertices,
            config_hash: r.config_hash.clone(),
        })
        .collect();
    out.csv("converge.csv", &rows)?;
    out.json(
        "converge.json",
        &json!({
            "slope": study.slope,
            "min_slope": MIN_SLOPE,
            "in_band": study.in_band,
            "monotone_violations": study.monotone_violations,
            "uninformative": study.uninformative,
            "records": study.records,
        }),
    )?;
    let invalid = study.records.iter().filter(|r| !r.valid).count();
    let mut checks = vec![Check::new("mesh_error_separated", invalid == 0, format!("{invalid} records flagged"))];
    if !study.uninformative {
        checks.push(Check::new("rate_slope", study.in_band, format!("slope {:.4} (need >= {MIN_SLOPE})", study.slope)));
    }
    Ok(checks)
}

#[derive(Serialize)]
struct EfuncCsvRow {
    epsilon: f64,
    cubes: usize,
    l1: f64,
    l2_sq: f64,
    refined_l2_sq: Option<f64>,
    gamma_measure: f64,
    min_value: f64,
}

fn run_efunc(cfg: &Config, out: &mut Output) -> Result<Vec<Check>> {
    let c = &cfg.efunc;
    let dom = cfg.domain.build()?;
    let study = error_functional_study(&dom, &c.epsilons, c.delta, c.kappa, c.xi, c.refine_check)?;
    let rows: Vec<EfuncCsvRow> = study
        .rows
        .iter()
        .map(|r| EfuncCsvRow {
            epsilon: r.epsilon,
            cubes: r.cubes,
            l1: r.l1,
            l2_sq: r.l2_sq,
            refined_l2_sq: r.refined_l2_sq,
            gamma_measure: r.gamma_measure,
            min_value: r.min_value,
        })
        .collect();
    out.csv("efunc.csv", &rows)?;
    out.json("efunc.json", &json!({ "exponent": study.exponent, "min_exponent": MIN_SLOPE, "nonnegative": study.nonnegative, "rows": study.rows }))?;
    let worst = study.rows.iter().filter_map(|r| r.refinement_change()).fold(0.0, f64::max);
    let mut checks = vec![
        Check::new("nonnegative", study.nonnegative, String::new()),
        Check::new("exponent", study.exponent >= MIN_SLOPE, format!("{:.4} (need >= {MIN_SLOPE})", study.exponent)),
    ];
    if c.refine_check {
        checks.push(Check::new("quadrature_refinement", worst < QUADRATURE_CHANGE_TOL, format!("{:.3}%", 100.0 * worst)));
    }
    Ok(checks)
}
