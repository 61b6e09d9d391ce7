use std::path::Path;

use affine_ymh::calculus::{with_mutation, Mutation};
use affine_ymh::report::{RunReport, SolveSummary, SubbundleDefect, ValidationReport};
use affine_ymh::scenario::ScenarioConfig;
use affine_ymh::selfcheck::{self, Check, SelfcheckConfig};
use affine_ymh::solver::{self, SolverStatus, StepRecord, SIGMA_SCHEDULE};
use affine_ymh::{hermitian, stability, AffineTorus, Error, FlatHiggsBundle, MetricField, SolverOptions};
use anyhow::{Context, Result};

/// Sup-norm bound on `∂∂̄(ω^{n-1})`.
pub const GAUDUCHON_TOL: f64 = 1e-8;
/// Bound on the curvature of `∇ + tφ`.
pub const FAMILY_TOL: f64 = 1e-10;

pub struct Outcome {
    pub report: RunReport,
    /// Human-readable summary lines.
    pub summary: Vec<String>,
    pub telemetry: Option<Vec<StepRecord>>,
    /// Exit status 1 when set (a failed check, not an internal error).
    pub failed: bool,
}

fn echo(cfg: &ScenarioConfig) -> serde_json::Value {
    serde_json::to_value(cfg).expect("config serializes")
}

fn label(cfg: &ScenarioConfig) -> &str {
    cfg.name.as_deref().unwrap_or("scenario")
}

pub fn validate(cfg: &ScenarioConfig) -> Outcome {
    let mut v = ValidationReport::default();
    let mut summary = Vec::new();
    let torus = cfg.build_torus();
    let bundle = cfg.build_bundle();
    if let Err(e) = cfg.solver.as_ref().map_or(Ok(()), SolverOptions::validate) {
        v.failures.push(e.to_string());
    }
    for e in [torus.as_ref().err(), bundle.as_ref().err()].into_iter().flatten() {
        v.failures.push(e.to_string());
    }
    if let Ok(t) = &torus {
        let vol = t.volume();
        v.volume = Some(vol);
        if !(vol > 0.0) {
            v.failures.push(Error::ZeroVolume(vol).to_string());
        }
        let gd = t.gauduchon_defect();
        v.gauduchon_defect = Some(gd);
        if !(gd < GAUDUCHON_TOL) {
            v.failures.push(format!("metric is not Gauduchon: |ddbar(omega^(n-1))| = {gd:e}"));
        }
        // only needed by the Bogomolov integral; recorded, not enforced
        v.astheno_defect = Some(t.astheno_defect());
        summary.push(format!("volume {vol:.6}, gauduchon defect {gd:.2e}, astheno defect {:.2e}", t.astheno_defect()));
    }
    if let Ok(b) = &bundle {
        for t in [0.0, 1.0] {
            let d = b.family_curvature_defect(t);
            v.family_curvature_defect.push((t, d));
            if !(d < FAMILY_TOL) {
                v.failures.push(format!("connection D + t phi is not flat at t = {t}: defect {d:e}"));
            }
        }
    }
    v.passed = v.failures.is_empty();
    summary.push(if v.passed { "validation passed".to_string() } else { format!("validation FAILED: {}", v.failures.join("; ")) });
    let mut report = RunReport::new("validate", echo(cfg));
    let failed = !v.passed;
    report.validation = Some(v);
    Outcome { report, summary, telemetry: None, failed }
}

fn analyze_into(report: &mut RunReport, summary: &mut Vec<String>, b: &FlatHiggsBundle, t: &AffineTorus) -> Result<()> {
    let id = MetricField::identity(b.rank(), t.npts());
    let degree = hermitian::degree(b, t, &id)?;
    let slope = hermitian::slope(b, t, &id)?;
    let gamma = hermitian::einstein_factor(b, t)?;
    let st = stability::stability_verdict(b, t)?;
    let simple = b.is_simple().0;
    // print zero without a sign
    let (degree, slope, gamma) = (degree + 0.0, slope + 0.0, gamma + 0.0);
    summary.push(format!("degree {degree:.3e}, slope {slope:.3e}, gamma {gamma:.3e}"));
    summary.push(format!(
        "verdict {}, {} invariant subbundle(s), simple: {simple}",
        serde_json::to_string(&st.verdict)?.trim_matches('"'),
        st.witnesses.len()
    ));
    for w in &st.witnesses {
        summary.push(format!("  rank {} subbundle, slope {:.3e}", w.rank, w.slope + 0.0));
    }
    report.degree = Some(degree);
    report.slope = Some(slope);
    report.gamma = Some(gamma);
    report.stability = Some(st);
    report.is_simple = Some(simple);
    Ok(())
}

pub fn analyze(cfg: &ScenarioConfig) -> Result<Outcome> {
    let (t, b) = cfg.build()?;
    let mut report = RunReport::new("analyze", echo(cfg));
    let mut summary = vec![format!("{}: rank {} on T^{} (N = {})", label(cfg), b.rank(), t.dim(), t.grid())];
    analyze_into(&mut report, &mut summary, &b, &t)?;
    Ok(Outcome { report, summary, telemetry: None, failed: false })
}

pub fn solve(cfg: &ScenarioConfig) -> Result<Outcome> {
    let (t, b) = cfg.build()?;
    let opts = cfg.solver_options();
    let mut report = RunReport::new("solve", echo(cfg));
    let mut summary = vec![format!("{}: rank {} on T^{} (N = {})", label(cfg), b.rank(), t.dim(), t.grid())];
    analyze_into(&mut report, &mut summary, &b, &t)?;
    let gamma = report.gamma.expect("set by analyze");
    let trace = match solver::continuity_solve(&b, &t, &opts) {
        Ok(tr) => tr,
        Err(Error::Stalled { eps, residual, reason }) => {
            let why = format!("eps = {eps:e}, residual {residual:e}: {reason}");
            summary.push(format!("status stalled ({why})"));
            report.solve = Some(SolveSummary {
                status: SolverStatus::Stalled,
                gamma,
                final_residual: residual,
                steps: Vec::new(),
                m_history: Vec::new(),
                destabilizer: None,
                slope_defects: Vec::new(),
                stall_reason: Some(why),
            });
            return Ok(Outcome { report, summary, telemetry: Some(Vec::new()), failed: false });
        }
        Err(e) => return Err(e.into()),
    };
    let mut s = SolveSummary {
        status: trace.status,
        gamma,
        final_residual: trace.final_residual,
        steps: trace.steps.clone(),
        m_history: trace.m_history.clone(),
        destabilizer: None,
        slope_defects: Vec::new(),
        stall_reason: trace.stall_reason.clone(),
    };
    let m_max = trace.m_history.iter().cloned().fold(0.0, f64::max);
    summary.push(format!(
        "status {}, |K - gamma| = {:.2e}, {} steps, max m = {m_max:.3}",
        serde_json::to_string(&trace.status)?.trim_matches('"'),
        trace.final_residual,
        trace.steps.len()
    ));
    match trace.status {
        SolverStatus::Converged => {
            let h = trace.metric()?;
            for basis in stability::invariant_subspaces(&b) {
                let defect = stability::slope_defect(&b, &t, &h, &basis)?;
                summary.push(format!(
                    "  rank {} subbundle: mu gap {:.3e}, |A|^2 {:.2e}, |phi~|^2 {:.2e}, identity residual {:.2e}",
                    basis.ncols(),
                    defect.mu_gap,
                    defect.a_norm2,
                    defect.phi_tilde_norm2,
                    defect.identity_residual
                ));
                s.slope_defects.push(SubbundleDefect { basis, defect });
            }
        }
        SolverStatus::Blowup => match solver::extract_destabilizer(&b, &t, &trace, &SIGMA_SCHEDULE) {
            Ok(d) => {
                let r = &d.report;
                summary.push(format!(
                    "destabilizer: rank {}, sigma {}, mu(F) = {:.3e} vs mu(E) = {:.3e}, basis {:?}",
                    r.rank,
                    r.sigma,
                    r.slope_f,
                    r.slope_e,
                    affine_ymh::report::cmat_to_json(&r.basis)
                ));
                s.destabilizer = Some(d.report);
            }
            Err(e) => summary.push(format!("destabilizer extraction failed: {e}")),
        },
        SolverStatus::Stalled => summary.push(format!("stalled: {}", trace.stall_reason.as_deref().unwrap_or("?"))),
    }
    report.solve = Some(s);
    Ok(Outcome { report, summary, telemetry: Some(trace.steps), failed: false })
}

pub fn bogomolov(cfg: &ScenarioConfig) -> Result<Outcome> {
    let (t, b) = cfg.build()?;
    let mut report = RunReport::new("bogomolov", echo(cfg));
    let value = hermitian::bogomolov_integral(&b, &t, &MetricField::identity(b.rank(), t.npts()))?;
    let summary = vec![format!("{}: Bogomolov integral {value:.6e} (must be >= 0)", label(cfg))];
    report.bogomolov = Some(value);
    Ok(Outcome { report, summary, telemetry: None, failed: false })
}

/// Mutation names accepted by `selftest --mutate`.
pub fn parse_mutation(name: &str) -> Result<Mutation> {
    let mut m = Mutation::default();
    match name {
        "wedge" => m.flip_wedge_sign = true,
        "dbar" => m.flip_dbar_sign = true,
        "nu" => m.flip_nu_sign = true,
        other => anyhow::bail!("unknown mutation `{other}` (expected wedge, dbar or nu)"),
    }
    Ok(m)
}

pub fn selftest(mutation: Mutation, grid: usize) -> Result<(Vec<Check>, bool)> {
    let cfg = SelfcheckConfig { grid, ..Default::default() };
    let checks = with_mutation(mutation, || selfcheck::run_all(&cfg));
    match checks {
        Ok(c) => {
            let ok = c.iter().all(|c| c.passed);
            Ok((c, ok))
        }
        // a mutated calculus can break preconditions of the suites themselves
        Err(e) if mutation != Mutation::default() => {
            eprintln!("suite aborted: {e}");
            Ok((Vec::new(), false))
        }
        Err(e) => Err(e.into()),
    }
}

pub fn write_telemetry(path: &Path, steps: &[StepRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(["eps", "newton_iters", "residual_inf", "m_eps", "det_defect"])?;
    for s in steps {
        w.write_record([
            format!("{:e}", s.eps),
            s.newton_iters.to_string(),
            format!("{:e}", s.residual),
            format!("{:e}", s.m_eps),
            format!("{:e}", s.det_defect),
        ])?;
    }
    w.flush()?;
    Ok(())
}
