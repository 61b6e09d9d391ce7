//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the lines always reach the console.
//! The process fails if a criterion outside `KNOWN_RED` fails, or if a known
//! red criterion starts passing (so the list cannot go stale).

use std::time::Instant;

use affine_ymh::calculus::{with_mutation, Mutation};
use affine_ymh::hermitian::{self, MetricField};
use affine_ymh::scenario::{self, random_metric, ScenarioConfig};
use affine_ymh::selfcheck::{self, Check, SelfcheckConfig};
use affine_ymh::solver::{
    continuity_solve, continuity_solve_from, extract_destabilizer, normalize_background, Linearization, Problem,
    SolverOptions, SolverStatus, SIGMA_SCHEDULE,
};
use affine_ymh::stability;
use affine_ymh::{linalg, AffineTorus, CMat, MetricSpec, C64};

/// Criteria that fail for a documented reason (see README).
const KNOWN_RED: &[u32] = &[5];

struct Outcome {
    id: u32,
    title: &'static str,
    passed: bool,
    details: Vec<String>,
}

fn line(ok: bool, msg: String) -> (bool, String) {
    (ok, format!("[{}] {msg}", if ok { "ok" } else { "FAIL" }))
}

fn finish(id: u32, title: &'static str, parts: Vec<(bool, String)>) -> Outcome {
    Outcome { id, title, passed: parts.iter().all(|p| p.0), details: parts.into_iter().map(|p| p.1).collect() }
}

fn checks_to_parts(checks: &[Check]) -> Vec<(bool, String)> {
    checks.iter().map(|c| line(c.passed, format!("{}: {:.3e} (tol {:.0e})", c.name, c.value, c.tol))).collect()
}

fn c1() -> Outcome {
    let cfg = SelfcheckConfig { grid: 32, samples: 50, seed: 1 };
    let parts = match selfcheck::calculus_suite(2, &cfg) {
        Ok(c) => checks_to_parts(&c),
        Err(e) => vec![line(false, format!("error: {e}"))],
    };
    finish(1, "calculus identities (T^2, N=32, 50 samples per bidegree)", parts)
}

fn c2() -> Outcome {
    let cfg = SelfcheckConfig { grid: 32, samples: 5, seed: 2 };
    let parts = match selfcheck::chern_suite(2, &cfg) {
        Ok(c) => checks_to_parts(&c),
        Err(e) => vec![line(false, format!("error: {e}"))],
    };
    finish(2, "Chern identity (rank 2, random metrics, N=32)", parts)
}

fn c3() -> Outcome {
    let cfg = SelfcheckConfig { grid: 32, samples: 10, seed: 3 };
    let parts = match selfcheck::degree_suite(2, &cfg) {
        Ok(c) => checks_to_parts(&c),
        Err(e) => vec![line(false, format!("error: {e}"))],
    };
    finish(3, "degree well-defined and zero (10 metric pairs x 3 bundles)", parts)
}

fn curvature_residual(cfg: &ScenarioConfig, h_init: Option<u64>) -> Result<(SolverStatus, f64, f64), String> {
    let (t, b) = cfg.build().map_err(|e| e.to_string())?;
    let opts = SolverOptions::default();
    let start = Instant::now();
    let tr = match h_init {
        None => continuity_solve(&b, &t, &opts),
        Some(seed) => continuity_solve_from(&b, &t, &random_metric(&t, b.rank(), 0.8, seed), &opts),
    }
    .map_err(|e| e.to_string())?;
    Ok((tr.status, tr.final_residual, start.elapsed().as_secs_f64()))
}

fn c4() -> Outcome {
    let mut parts = Vec::new();
    // The last two are supplementary: convergence is required, wall time is reported only.
    for (cfg, seed, timed) in [
        (scenario::flat_unitary(2, 32), None, true),
        (scenario::diagonal_higgs(2, 32), None, true),
        (scenario::skew_diagonalizable(2, 32), None, false),
        (scenario::diagonal_higgs(2, 32), Some(4), false),
    ] {
        let name = format!(
            "{}{}{}",
            if timed { "" } else { "(supplementary) " },
            cfg.name.clone().unwrap(),
            if seed.is_some() { " from random H_init" } else { "" }
        );
        parts.push(match curvature_residual(&cfg, seed) {
            Ok((status, res, secs)) => line(
                status == SolverStatus::Converged && res < 1e-6 && (!timed || secs <= 60.0),
                format!("{name}: {status:?}, |K - gamma| = {res:.2e}, {secs:.1} s"),
            ),
            Err(e) => line(false, format!("{name}: error {e}")),
        });
    }
    finish(4, "existence on polystable scenarios (N=32, eps_min=1e-4, <= 60 s)", parts)
}

fn c5() -> Outcome {
    let cfg = scenario::jordan(2, 32);
    let (t, b) = cfg.build().unwrap();
    let tr = match continuity_solve(&b, &t, &SolverOptions::default()) {
        Ok(tr) => tr,
        Err(e) => return finish(5, "Jordan blow-up and destabilizer", vec![line(false, format!("solve error: {e}"))]),
    };
    let mut parts = vec![line(tr.status == SolverStatus::Blowup, format!("status {:?}", tr.status))];
    let early = tr.steps.iter().filter(|s| s.eps > 1e-3).map(|s| s.m_eps).fold(0.0, f64::max);
    let at_min = tr.steps.iter().filter(|s| s.eps > 0.0).last().map(|s| (s.eps, s.m_eps));
    parts.push(line(
        early >= 12.0,
        format!(
            "m_eps >= 12 before eps <= 1e-3: max m over eps > 1e-3 is {early:.3}; at eps_min {:?}; threshold crossed in the eps = 0 phase (m = {:.2})",
            at_min,
            tr.m_history.last().copied().unwrap_or(0.0)
        ),
    ));
    match extract_destabilizer(&b, &t, &tr, &SIGMA_SCHEDULE) {
        Ok(d) => {
            let e1 = CMat::from_fn(2, 2, |i, j| C64::new(if i == 0 && j == 0 { 1.0 } else { 0.0 }, 0.0));
            let dev = d.projection.iter().map(|p| linalg::max_abs(&(p - &e1))).fold(0.0, f64::max);
            let r = &d.report;
            parts.push(line(dev < 1e-2, format!("sup |varpi - proj(e1)| = {dev:.2e} (sigma = {})", r.sigma)));
            parts.push(line(
                r.identity_residuals.iter().all(|&x| x < 1e-2),
                format!("identity residuals {:?}", r.identity_residuals.map(|x| format!("{x:.1e}"))),
            ));
            parts.push(line(r.rank > 0 && r.rank < 2, format!("rank F = {}", r.rank)));
            parts.push(line(
                r.slope_f >= r.slope_e - 1e-6,
                format!("mu(F) = {:.2e} >= mu(E) - 1e-6 = {:.2e}", r.slope_f, r.slope_e - 1e-6),
            ));
        }
        Err(e) => parts.push(line(false, format!("extract_destabilizer: {e}"))),
    }
    finish(5, "Jordan scenario: blow-up and destabilizer (N=32)", parts)
}

fn c6() -> Outcome {
    let mut parts = Vec::new();
    for cfg in scenario::corpus(2, 16) {
        let (t, b) = cfg.build().unwrap();
        let name = cfg.name.clone().unwrap();
        match continuity_solve(&b, &t, &SolverOptions::default()) {
            Ok(tr) if tr.status == SolverStatus::Converged => {
                let worst = tr.steps.iter().filter(|s| s.eps > 0.0).map(|s| s.det_defect).fold(0.0, f64::max);
                parts.push(line(worst < 1e-6, format!("{name}: max det defect {worst:.2e} over {} steps", tr.steps.len())));
            }
            Ok(tr) => parts.push((true, format!("[skip] {name}: {:?} (not a converging run)", tr.status))),
            Err(e) => parts.push(line(false, format!("{name}: {e}"))),
        }
    }
    finish(6, "det f = 1 at accepted steps of converging runs (N=16)", parts)
}

fn c7() -> Outcome {
    let cfg = scenario::line_nonunitary(2, 32).with_metric(MetricSpec::SeparableSine { amplitude: 0.3 });
    let (t, b) = cfg.build().unwrap();
    let opts = SolverOptions::default();
    let solve = |seed| -> Result<MetricField, String> {
        let tr = continuity_solve_from(&b, &t, &random_metric(&t, 1, 0.8, seed), &opts).map_err(|e| e.to_string())?;
        if tr.status != SolverStatus::Converged {
            return Err(format!("{:?}", tr.status));
        }
        tr.metric().map_err(|e| e.to_string())
    };
    let parts = match (solve(71), solve(72)) {
        (Ok(h1), Ok(h2)) => {
            let ratio: Vec<f64> = h1.values().iter().zip(h2.values()).map(|(a, b)| a[(0, 0)].re / b[(0, 0)].re).collect();
            let mean = ratio.iter().sum::<f64>() / ratio.len() as f64;
            let spread = ratio.iter().map(|r| (r / mean - 1.0).abs()).fold(0.0, f64::max);
            let init = random_metric(&t, 1, 0.8, 71).values()[0][(0, 0)].re / random_metric(&t, 1, 0.8, 72).values()[0][(0, 0)].re;
            vec![line(spread < 1e-8, format!("ratio H1/H2 = {mean:.6} const to relative {spread:.2e} (initial ratio at x=0: {init:.3})"))]
        }
        (a, b) => vec![line(false, format!("solves: {:?} / {:?}", a.err(), b.err()))],
    };
    finish(7, "uniqueness up to scale (rank 1, two H_init, N=32)", parts)
}

fn c8() -> Outcome {
    let mut parts = Vec::new();
    for (cfg, seed) in scenario::corpus(2, 32).into_iter().map(|c| (c, None)).chain([
        (scenario::skew_diagonalizable(2, 32), Some(8u64)),
        (scenario::diagonal_separable(2, 32), Some(9u64)),
    ]) {
        let (t, b) = cfg.build().unwrap();
        let r = b.rank();
        let h_init = match seed {
            None => MetricField::identity(r, t.npts()),
            Some(s) => random_metric(&t, r, 0.8, s),
        };
        let name = format!("{}{}", cfg.name.clone().unwrap(), if seed.is_some() { " (random H_init)" } else { "" });
        let res = normalize_background(&b, &t, &h_init).and_then(|h0| {
            let gamma = hermitian::einstein_factor(&b, &t)?;
            let k = hermitian::mean_curvature(&b, &t, &h0)?;
            Ok(k.iter().map(|m| (m.trace().re - r as f64 * gamma).abs()).fold(0.0, f64::max))
        });
        parts.push(match res {
            Ok(v) => line(v < 1e-8, format!("{name}: max |tr K0 - r gamma| = {v:.2e}")),
            Err(e) => line(false, format!("{name}: {e}")),
        });
    }
    finish(8, "background normalization on the corpus (N=32)", parts)
}

fn c9() -> Outcome {
    let cfg = scenario::diagonal_higgs(2, 32);
    let (t, b) = cfg.build().unwrap();
    let parts = match continuity_solve(&b, &t, &SolverOptions::default()) {
        Ok(tr) if tr.status == SolverStatus::Converged => {
            let h = tr.metric().unwrap();
            let e1 = CMat::from_fn(2, 1, |i, _| C64::new(if i == 0 { 1.0 } else { 0.0 }, 0.0));
            match stability::slope_defect(&b, &t, &h, &e1) {
                Ok(d) => vec![
                    line(d.identity_residual.abs() < 1e-6, format!("identity residual {:.2e}", d.identity_residual)),
                    line(d.a_norm2 < 1e-8, format!("|A|^2 = {:.2e}", d.a_norm2)),
                    line(d.phi_tilde_norm2 < 1e-8, format!("|phi~|^2 = {:.2e}", d.phi_tilde_norm2)),
                ],
                Err(e) => vec![line(false, format!("{e}"))],
            }
        }
        Ok(tr) => vec![line(false, format!("solver status {:?}", tr.status))],
        Err(e) => vec![line(false, format!("{e}"))],
    };
    finish(9, "slope-defect identity on the converged diagonal scenario", parts)
}

fn c10() -> Outcome {
    let mut parts = Vec::new();
    let flat = AffineTorus::new(4, 8, &MetricSpec::identity(4), 1.0).unwrap();
    let skew_g = MetricSpec::Constant {
        matrix: vec![
            vec![2.0, 0.3, 0.0, 0.1],
            vec![0.3, 1.0, 0.2, 0.0],
            vec![0.0, 0.2, 1.5, 0.4],
            vec![0.1, 0.0, 0.4, 1.2],
        ],
    };
    let tilted = AffineTorus::new(4, 8, &skew_g, 1.0).unwrap();
    for t in [&flat, &tilted] {
        let d = t.astheno_defect();
        parts.push(line(d < 1e-10, format!("astheno defect (constant g) {d:.2e}")));
    }
    for cfg in [scenario::flat_unitary(4, 8), scenario::diagonal_higgs(4, 8)] {
        let name = cfg.name.clone().unwrap();
        let b = cfg.build_bundle().unwrap();
        for (tname, t) in [("g = I", &flat), ("tilted g", &tilted)] {
            let v0 = hermitian::bogomolov_integral(&b, t, &MetricField::identity(2, t.npts()));
            let v1 = hermitian::bogomolov_integral(&b, t, &random_metric(t, 2, 0.3, 10));
            parts.push(match (v0, v1) {
                (Ok(a), Ok(c)) => line(
                    a >= -1e-8 && c >= -1e-8 && (a - c).abs() < 1e-8,
                    format!("{name}, {tname}: Bogomolov {a:.2e} (H = I), {c:.2e} (random H), change {:.2e}", (a - c).abs()),
                ),
                (a, c) => line(false, format!("{name}: {:?} / {:?}", a.err(), c.err())),
            });
        }
    }
    finish(10, "Bogomolov inequality on T^4 (N=8)", parts)
}

fn c11() -> Outcome {
    let mut worst = 0.0f64;
    let mut fails = Vec::new();
    let cases = [scenario::jordan(2, 16), scenario::skew_diagonalizable(2, 16), scenario::flat_unitary(2, 16)];
    for k in 0..20u64 {
        let cfg = cases[k as usize % cases.len()].with_metric(MetricSpec::SeparableSine { amplitude: 0.2 });
        let (t, b) = cfg.build().unwrap();
        let h0 = random_metric(&t, 2, 0.5, 100 + k);
        let gamma = hermitian::einstein_factor(&b, &t).unwrap();
        let prob = Problem::new(&b, &t, &h0, gamma).unwrap();
        let f = prob.from_hat(random_metric(&t, 2, 0.6, 200 + k).values());
        let x = prob.from_hat(random_metric(&t, 2, 0.3, 300 + k).values());
        let eps = [1.0, 0.1, 1e-3, 0.0][k as usize % 4];
        let lin = match Linearization::new(&b, &t, &h0, &f, eps) {
            Ok(l) => l,
            Err(e) => {
                fails.push(e.to_string());
                continue;
            }
        };
        let step = 1e-5;
        let value = |s: f64| -> Vec<CMat> {
            let g: Vec<CMat> = f.iter().zip(&x).map(|(a, b)| a + b * C64::new(s, 0.0)).collect();
            let l = lin.problem().residual(&g, eps).unwrap();
            g.iter().zip(&l).map(|(a, b)| a * b).collect()
        };
        let (p, m) = (value(step), value(-step));
        let exact = lin.apply(&x);
        let norm = |v: &mut dyn Iterator<Item = CMat>| v.map(|m| linalg::frob(&m).powi(2)).sum::<f64>().sqrt();
        let diff = norm(&mut p.iter().zip(&m).zip(&exact).map(|((a, b), e)| (a - b) / C64::new(2.0 * step, 0.0) - e));
        worst = worst.max(diff / norm(&mut exact.iter().cloned()));
    }
    let parts = vec![line(fails.is_empty() && worst < 1e-6, format!("max relative error {worst:.2e} over 20 pairs {fails:?}"))];
    finish(11, "linearization vs finite differences", parts)
}

fn c12() -> Outcome {
    let cfg = SelfcheckConfig::default();
    let muts = [
        ("wedge sign", Mutation { flip_wedge_sign: true, ..Default::default() }),
        ("(-1)^p in dbar", Mutation { flip_dbar_sign: true, ..Default::default() }),
        ("volume sign", Mutation { flip_nu_sign: true, ..Default::default() }),
    ];
    let mut parts = Vec::new();
    for (name, m) in muts {
        let res = with_mutation(m, || selfcheck::run_all(&cfg));
        parts.push(match res {
            Ok(checks) => {
                let failed: Vec<String> = checks.iter().filter(|c| !c.passed).map(|c| c.name.clone()).collect();
                line(!failed.is_empty(), format!("{name} flipped -> failing checks {failed:?}"))
            }
            Err(e) => line(true, format!("{name} flipped -> suites error out: {e}")),
        });
    }
    let clean = selfcheck::run_all(&cfg).map(|c| c.iter().all(|c| c.passed)).unwrap_or(false);
    parts.push(line(clean, "unmutated build passes all suites".into()));
    finish(12, "mutation sensitivity of suites 1-3", parts)
}

fn main() {
    let start = Instant::now();
    let jobs: Vec<fn() -> Outcome> = vec![c1, c2, c3, c4, c5, c6, c7, c8, c9, c10, c11, c12];
    let mut outcomes: Vec<Outcome> = std::thread::scope(|s| {
        let handles: Vec<_> = jobs.into_iter().map(|f| s.spawn(f)).collect();
        handles.into_iter().map(|h| h.join().expect("criterion panicked")).collect()
    });
    outcomes.sort_by_key(|o| o.id);
    println!();
    for o in &outcomes {
        let known = !o.passed && KNOWN_RED.contains(&o.id);
        println!(
            "criterion {:>2}: {}{} - {}",
            o.id,
            if o.passed { "PASS" } else { "FAIL" },
            if known { " (known)" } else { "" },
            o.title
        );
        for d in &o.details {
            println!("               {d}");
        }
    }
    let passed = outcomes.iter().filter(|o| o.passed).count();
    println!("acceptance: {passed}/{} criteria pass ({:.1} s)", outcomes.len(), start.elapsed().as_secs_f64());
    let unexpected: Vec<u32> = outcomes.iter().filter(|o| !o.passed && !KNOWN_RED.contains(&o.id)).map(|o| o.id).collect();
    let stale: Vec<u32> = outcomes.iter().filter(|o| o.passed && KNOWN_RED.contains(&o.id)).map(|o| o.id).collect();
    if !unexpected.is_empty() || !stale.is_empty() {
        eprintln!("unexpected failures: {unexpected:?}; known-red criteria now passing: {stale:?}");
        std::process::exit(1);
    }
}
