use affine_ymh::scenario::{self, random_metric};
use affine_ymh::solver::{continuity_solve, continuity_solve_from, extract_destabilizer, SIGMA_SCHEDULE};
use affine_ymh::{hermitian, SolverOptions, SolverStatus};

#[test]
fn polystable_corpus_converges_with_small_residual() {
    for c in scenario::corpus(2, 16) {
        if c.name.as_deref() == Some("jordan") {
            continue;
        }
        let (t, b) = c.build().unwrap();
        let tr = continuity_solve(&b, &t, &SolverOptions::default()).unwrap();
        assert_eq!(tr.status, SolverStatus::Converged, "{:?}: {:?}", c.name, tr.stall_reason);
        assert!(tr.final_residual < 1e-9, "{:?}: {}", c.name, tr.final_residual);
        let k = hermitian::mean_curvature(&b, &t, &tr.metric().unwrap()).unwrap();
        let id = affine_ymh::linalg::identity(b.rank());
        let worst = k.iter().map(|m| affine_ymh::linalg::max_abs(&(m - &id * affine_ymh::C64::new(tr.gamma, 0.0)))).fold(0.0, f64::max);
        assert!(worst < 1e-8, "{:?}: {worst}", c.name);
        for s in &tr.steps {
            assert!(s.m_eps.is_finite());
            if s.eps > 0.0 {
                assert!(s.det_defect < 1e-8, "{:?} at eps {}: {}", c.name, s.eps, s.det_defect);
            }
        }
    }
}

#[test]
fn skew_scenario_converges_from_random_start() {
    let c = scenario::skew_diagonalizable(2, 16);
    let (t, b) = c.build().unwrap();
    let tr = continuity_solve_from(&b, &t, &random_metric(&t, 2, 0.8, 7), &SolverOptions::default()).unwrap();
    assert_eq!(tr.status, SolverStatus::Converged);
    assert!(tr.final_residual < 1e-9);
}

#[test]
fn jordan_blows_up_along_the_invariant_line() {
    let (t, b) = scenario::jordan(2, 16).build().unwrap();
    let tr = continuity_solve(&b, &t, &SolverOptions::default()).unwrap();
    assert_eq!(tr.status, SolverStatus::Blowup);
    assert!(tr.retained.len() >= 2);
    assert!(*tr.m_history.last().unwrap() >= 12.0);
    let d = extract_destabilizer(&b, &t, &tr, &SIGMA_SCHEDULE).unwrap();
    assert_eq!(d.report.rank, 1);
    let e1 = d.report.basis.column(0);
    assert!((e1[0].norm() - 1.0).abs() < 1e-8 && e1[1].norm() < 1e-8);
    assert!(d.report.slope_f >= d.report.slope_e - 1e-6);
}
