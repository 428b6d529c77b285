//! Acceptance criteria, one PASS/FAIL line each. Run with `cargo test --test acceptance`.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::process::ExitCode;
use std::time::Instant;

use homog::cell::solve_corrector;
use homog::config::golden_direction;
use homog::convergence::{error_functional_study, rate_study, RateConfig, MIN_SLOPE};
use homog::czdecomp::{check_partition, check_partition_of_unity, decompose_diophantine, size_constants, DiophantineDriver};
use homog::dioph::{build_frame, dioph_constant};
use homog::ergodic::{integral_by_quadrature, verify_ergodic, SmoothWindow};
use homog::fields::{ConvexDomain, PeriodicField, PeriodicTensor, SlowFactor, TwoScaleBoundaryDatum};
use homog::gbar::{compute_gbar, GbarContext};
use homog::halfspace::{decay_profile, layer_tail, solve_layer, LayerParams};
use homog::Complex;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn checkerboard() -> PeriodicTensor<f64> {
    let q = Complex::new(-0.25, 0.0);
    let coef = BTreeMap::from([
        (vec![0, 0], Complex::new(2.0, 0.0)),
        (vec![1, 1], q),
        (vec![-1, -1], q),
        (vec![1, -1], -q),
        (vec![-1, 1], -q),
    ]);
    PeriodicTensor::scalar_multiple(2, 1, 0.3, &coef).unwrap()
}

/// Checkerboard plus a laminate mode, so no parity rule hides the fast part of the data.
fn mixed() -> PeriodicTensor<f64> {
    let q = Complex::new(-0.25, 0.0);
    let r = Complex::new(0.3, 0.0);
    let coef = BTreeMap::from([
        (vec![0, 0], Complex::new(2.0, 0.0)),
        (vec![1, 1], q),
        (vec![-1, -1], q),
        (vec![1, -1], -q),
        (vec![-1, 1], -q),
        (vec![1, 0], r),
        (vec![-1, 0], r),
    ]);
    PeriodicTensor::scalar_multiple(2, 1, 0.3, &coef).unwrap()
}

fn rotate(n: [f64; 2], angle: f64) -> [f64; 2] {
    let (s, c) = angle.sin_cos();
    [c * n[0] - s * n[1], s * n[0] + c * n[1]]
}

fn cell_laminate() -> Outcome {
    let start = Instant::now();
    let half = Complex::new(0.0, -0.5);
    let coef = BTreeMap::from([(vec![0, 0], Complex::new(2.0, 0.0)), (vec![1, 0], half), (vec![-1, 0], half.conj())]);
    let a = PeriodicTensor::scalar_multiple(2, 1, 0.3, &coef).unwrap();
    let sol = solve_corrector(&a, 128, 1e-13).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    // harmonic and arithmetic means by the periodic trapezoid rule
    let m = 4096;
    let inv_mean = (0..m).map(|i| 1.0 / (2.0 + (TAU * i as f64 / m as f64).sin())).sum::<f64>() / m as f64;
    let arith = (0..m).map(|i| 2.0 + (TAU * i as f64 / m as f64).sin()).sum::<f64>() / m as f64;
    let (a11, a22) = (sol.abar_entry(0, 0, 0, 0), sol.abar_entry(1, 1, 0, 0));
    let e11 = (a11 - 1.0 / inv_mean).abs().max((a11 - 3f64.sqrt()).abs());
    let e22 = (a22 - arith).abs().max((a22 - 2.0).abs());
    outcome(
        e11 <= 1e-8 && e22 <= 1e-8 && elapsed < 5.0,
        format!("abar11 {a11:.12} (err {e11:.1e}), abar22 {a22:.12} (err {e22:.1e}), {elapsed:.2} s"),
    )
}

fn ergodic_bound() -> Outcome {
    let start = Instant::now();
    let n = golden_direction();
    let cutoff = 4;
    let dir = dioph_constant(&n, 1.5, cutoff as usize).unwrap();
    let frame = build_frame(&dir.n).unwrap();
    let psi = SmoothWindow::gaussian(0.5, 1).unwrap();
    let etas: Vec<f64> = (2..=8).map(|k| 2f64.powi(-k)).collect();
    let (mut cases, mut failed, mut worst) = (0, 0, 0.0f64);
    let mut cross = 0.0f64;
    for seed in 0..5u64 {
        let k = PeriodicField::random(2, cutoff, 1.0, 1000 + seed).unwrap();
        for r in verify_ergodic(&psi, &k, &dir, &frame, &etas, &[1, 2, 3]).unwrap() {
            cases += 1;
            failed += usize::from(!r.pass);
            worst = worst.max(r.error / r.bound);
        }
        let modes = homog::ergodic::integral_by_modes(&psi, &k, &frame, 0.25).unwrap().re;
        let direct = integral_by_quadrature(&psi, &k, &frame, 0.25).unwrap();
        cross = cross.max((modes - direct).abs());
    }
    let elapsed = start.elapsed().as_secs_f64();
    outcome(
        failed == 0 && cross < 1e-8 && elapsed < 10.0,
        format!("{failed} of {cases} cases above the bound, max error/bound {worst:.3}, mode-sum vs quadrature {cross:.1e}, {elapsed:.2} s"),
    )
}

fn decomposition() -> Outcome {
    let dom = ConvexDomain::unit_disc();
    let delta = 0.02;
    let mut ok = true;
    let mut parts = Vec::new();
    let mut consts = Vec::new();
    for k in [8, 10, 12] {
        let eps = 2f64.powi(-k);
        let start = Instant::now();
        let part = decompose_diophantine(&dom, DiophantineDriver::new(eps, delta, 1.5, None).unwrap()).unwrap();
        let chk = check_partition(&part, &dom, 10_000).unwrap();
        let pu = check_partition_of_unity(&part, &dom, 10_000).unwrap();
        let elapsed = start.elapsed().as_secs_f64();
        let (c, big) = size_constants(&chk, eps, delta);
        consts.push((c, big));
        let this = chk.exact_properties_hold() && pu.sum_defect <= 1e-10 && elapsed < 30.0;
        ok &= this;
        parts.push(format!(
            "eps 2^-{k}: {} cubes, exact {}, sum defect {:.1e}, c {c:.3}, C {big:.3}, {elapsed:.1} s",
            chk.cubes,
            chk.exact_properties_hold(),
            pu.sum_defect
        ));
    }
    let spread = |f: &dyn Fn(&(f64, f64)) -> f64| {
        let v: Vec<f64> = consts.iter().map(f).collect();
        v.iter().cloned().fold(0.0, f64::max) / v.iter().cloned().fold(f64::INFINITY, f64::min)
    };
    let (sc, sbig) = (spread(&|p| p.0), spread(&|p| p.1));
    ok &= sc <= 2.0 && sbig <= 2.0;
    outcome(ok, format!("{}; spread c {sc:.3}, C {sbig:.3}", parts.join("; ")))
}

fn half_space_layer() -> Outcome {
    let n = golden_direction();
    let frame = build_frame(&n).unwrap();
    // constant coefficients, one mode: exponential rate 2 pi |N^T xi|, tail 0
    let start = Instant::now();
    let xi = [1i64, 0];
    let sol = solve_layer(&PeriodicTensor::identity(2, 1, 0.5), &frame, &PeriodicField::cosine(&xi, 1.0, 0.0), LayerParams::default()).unwrap();
    let t_const = start.elapsed().as_secs_f64();
    let rate = TAU * (frame.m_entry(0, 0) * xi[0] as f64 + frame.m_entry(1, 0) * xi[1] as f64).abs();
    let fitted = decay_profile(&sol).exp_rate;
    let rate_err = (fitted / rate - 1.0).abs();
    let tail0 = sol.tail[0].abs();
    // oscillating coefficient, Diophantine normal: T doubling
    let v0 = PeriodicField::cosine(&[1, 1], 1.0, 0.2);
    let base = LayerParams::default();
    let start = Instant::now();
    let s1 = solve_layer(&checkerboard(), &frame, &v0, base.clone()).unwrap();
    let t_osc = start.elapsed().as_secs_f64();
    let s2 = solve_layer(&checkerboard(), &frame, &v0, LayerParams { length: 2.0 * base.length, nodes: 2 * base.nodes, ..base.clone() }).unwrap();
    let (tail1, tail2) = (layer_tail(&s1), layer_tail(&s2));
    let (pass_osc, drift_text) = match (tail1, tail2) {
        (Ok(a), Ok(b)) => {
            let d = (a[0] - b[0]).abs();
            (d <= 1e-5, format!("tail {:.9} drift {d:.2e}", a[0]))
        }
        (a, b) => (false, format!("unsettled: {:?} {:?}", a.err(), b.err())),
    };
    outcome(
        rate_err < 0.05 && tail0 < 1e-8 && pass_osc && t_const < 60.0 && t_osc < 60.0,
        format!(
            "rate {fitted:.5} vs {rate:.5} ({:.2}%), tail {tail0:.1e}; oscillating {drift_text}; solves {t_const:.1} s, {t_osc:.1} s",
            100.0 * rate_err
        ),
    )
}

fn gbar_identities() -> Outcome {
    let start = Instant::now();
    let dom = ConvexDomain::unit_disc();
    let params = LayerParams { res_theta: 16, nodes: 300, ..LayerParams::default() };
    let normals: Vec<[f64; 2]> = (0..6).map(|i| rotate(golden_direction(), 0.37 + 1.01 * i as f64)).collect();
    // constant-in-y data, oscillating coefficient
    let ctx = GbarContext::new(&mixed(), 32, params.clone()).unwrap();
    let slow = SlowFactor::Affine { c0: 0.7, grad: vec![1.0, -0.5] };
    let g_const = TwoScaleBoundaryDatum::new(vec![(slow.clone(), PeriodicField::constant(2, &[1.0]))]).unwrap();
    let mut err_const = 0.0f64;
    for n in &normals {
        let x = dom.chart_unchecked(dom.param_of_normal(n)).point;
        let s = compute_gbar(&ctx, &x, n, &g_const).unwrap();
        err_const = err_const.max((s.gbar[0] - slow.evaluate(&x)).abs());
    }
    // identity coefficient: fast mean times slow factor
    let id_ctx = GbarContext::new(&PeriodicTensor::identity(2, 1, 0.5), 16, params.clone()).unwrap();
    let fast = PeriodicField::combine(&[
        (1.0, &PeriodicField::constant(2, &[0.4])),
        (1.0, &PeriodicField::cosine(&[1, 0], 1.0, 0.0)),
        (1.0, &PeriodicField::cosine(&[2, -1], 0.5, 0.3)),
    ])
    .unwrap();
    let g_id = TwoScaleBoundaryDatum::new(vec![(slow.clone(), fast)]).unwrap();
    let mut err_id = 0.0f64;
    for n in &normals {
        let x = dom.chart_unchecked(dom.param_of_normal(n)).point;
        let s = compute_gbar(&id_ctx, &x, n, &g_id).unwrap();
        err_id = err_id.max((s.gbar[0] - 0.4 * slow.evaluate(&x)).abs());
    }
    // continuity ratio over 20 Diophantine pairs n1 -> n2
    let g_osc = TwoScaleBoundaryDatum::new(vec![(SlowFactor::Constant(1.0), PeriodicField::cosine(&[1, 0], 1.0, 0.0))]).unwrap();
    let mut max_ratio = 0.0f64;
    let mut growth = 0.0f64;
    for base in normals.iter().take(5) {
        let a2 = dioph_constant(base, 1.5, 64).unwrap().a_lb;
        let g2 = compute_gbar(&ctx, &[0.0, 0.0], base, &g_osc).unwrap().gbar[0];
        let mut ratios = Vec::new();
        for d in [1e-2, 3e-3, 1e-3, 3e-4] {
            let n1 = rotate(*base, d);
            let g1 = compute_gbar(&ctx, &[0.0, 0.0], &n1, &g_osc).unwrap().gbar[0];
            let dn = (n1[0] - base[0]).hypot(n1[1] - base[1]);
            ratios.push((g1 - g2).abs() * a2.powf(1.5) / dn);
        }
        max_ratio = ratios.iter().cloned().fold(max_ratio, f64::max);
        growth = growth.max(ratios[3] / ratios[0].max(f64::MIN_POSITIVE));
    }
    let elapsed = start.elapsed().as_secs_f64();
    outcome(
        err_const <= 1e-6 && err_id <= 1e-8 && max_ratio.is_finite() && growth <= 2.0,
        format!(
            "constant data err {err_const:.1e}, identity err {err_id:.1e}, continuity ratio max {max_ratio:.4} over 20 pairs (growth as dn shrinks {growth:.2}), {elapsed:.1} s"
        ),
    )
}

fn desk_convergence() -> Outcome {
    let start = Instant::now();
    let dom = ConvexDomain::unit_disc();
    let a = checkerboard();
    let g = TwoScaleBoundaryDatum::new(vec![(
        SlowFactor::Affine { c0: 1.0, grad: vec![0.5, 0.0] },
        PeriodicField::combine(&[(1.0, &PeriodicField::constant(2, &[0.5])), (1.0, &PeriodicField::cosine(&[1, 1], 1.0, 0.0))]).unwrap(),
    )])
    .unwrap();
    let params = LayerParams { res_theta: 16, nodes: 300, ..LayerParams::default() };
    let ctx = GbarContext::new(&a, 32, params).unwrap();
    let cfg = RateConfig { epsilons: (6..=9).map(|k| 2f64.powi(-k)).collect(), ..RateConfig::default() };
    match rate_study(&a, &g, &dom, &ctx, &cfg) {
        Ok(study) => {
            let valid = study.records.iter().all(|r| r.valid);
            outcome(
                study.slope >= MIN_SLOPE && valid,
                format!("slope {:.4}, all records mesh-separated {valid}, {:.0} s", study.slope, start.elapsed().as_secs_f64()),
            )
        }
        Err(e) => {
            // same pipeline on the largest eps range this machine can mesh; reported, never counted as a pass
            let reduced = RateConfig { epsilons: (2..=5).map(|k| 2f64.powi(-k)).collect(), mesh_check: false, ..cfg };
            let info = match rate_study(&a, &g, &dom, &ctx, &reduced) {
                Ok(s) => format!("eps 2^-2..2^-5 without mesh check: slope {:.4}", s.slope),
                Err(e) => format!("reduced range failed too: {e}"),
            };
            outcome(false, format!("not attainable on this machine: {e}; INFO {info}, {:.0} s", start.elapsed().as_secs_f64()))
        }
    }
}

fn error_functional() -> Outcome {
    let start = Instant::now();
    let dom = ConvexDomain::unit_disc();
    let eps: Vec<f64> = (6..=12).map(|k| 2f64.powi(-k)).collect();
    let study = error_functional_study(&dom, &eps, 0.02, 1.5, None, true).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    let worst = study.rows.iter().filter_map(|r| r.refinement_change()).fold(0.0, f64::max);
    outcome(
        study.exponent >= MIN_SLOPE && study.nonnegative && elapsed < 120.0,
        format!(
            "exponent {:.4} (need >= {MIN_SLOPE}), nonnegative {}, quadrature refinement change {:.2}%, {elapsed:.1} s",
            study.exponent,
            study.nonnegative,
            100.0 * worst
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 7] = [
        ("1 cell laminate", cell_laminate),
        ("2 ergodic bound", ergodic_bound),
        ("3 decomposition", decomposition),
        ("4 half-space layer", half_space_layer),
        ("5 gbar identities", gbar_identities),
        ("6 desk-scale convergence", desk_convergence),
        ("7 error functional scaling", error_functional),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut all = true;
    for (name, run) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let o = run();
        all &= o.pass;
        println!("{} criterion {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
