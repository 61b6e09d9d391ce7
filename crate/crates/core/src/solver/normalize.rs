//! Conformal rescaling of an initial metric so that `tr K₀^φ = rγ`.

use crate::bundle::FlatHiggsBundle;
use crate::error::{Error, Result};
use crate::geometry::AffineTorus;
use crate::hermitian::{self, MetricField};
use crate::C64;

use super::gmres::gmres;

/// Acceptance threshold for `max |tr K₀^φ - rγ|`.
pub const NORMALIZATION_TOL: f64 = 1e-8;

fn trace_defect(bundle: &FlatHiggsBundle, torus: &AffineTorus, h: &MetricField, gamma: f64) -> Result<Vec<f64>> {
    let r = bundle.rank() as f64;
    Ok(hermitian::mean_curvature(bundle, torus, h)?.iter().map(|k| k.trace().re - r * gamma).collect())
}

/// `(r/4) Σ g^{kj} ∂_k ∂_j u + mean(u)`.
fn operator(torus: &AffineTorus, r: f64, u: &[f64]) -> Vec<f64> {
    let sp = torus.spectral();
    let n = torus.dim();
    let uc: Vec<C64> = u.iter().map(|&v| C64::new(v, 0.0)).collect();
    let first: Vec<Vec<C64>> = (0..n).map(|k| sp.deriv(&uc, k)).collect();
    let mean = u.iter().sum::<f64>() / u.len() as f64;
    let mut out = vec![mean; u.len()];
    for k in 0..n {
        for j in 0..n {
            if (0..torus.npts()).all(|p| torus.metric_inv_at(p)[(k, j)] == 0.0) {
                continue;
            }
            let second = sp.deriv(&first[k], j);
            for (p, o) in out.iter_mut().enumerate() {
                *o += 0.25 * r * torus.metric_inv_at(p)[(k, j)] * second[p].re;
            }
        }
    }
    out
}

/// Returns `e^u H_init` with `tr K^φ[e^u H_init] = rγ`.
pub fn normalize_background(bundle: &FlatHiggsBundle, torus: &AffineTorus, h_init: &MetricField) -> Result<MetricField> {
    let gamma = hermitian::einstein_factor(bundle, torus)?;
    let r = bundle.rank() as f64;
    let sp = torus.spectral();
    let gbar = torus.mean_metric_inv();
    let tau2 = (2.0 * std::f64::consts::PI).powi(2);
    let grid = torus.grid();
    // Nyquist modes are annihilated by the spectral derivative, so no `u` can
    // change them; they are projected out of the linear problem.
    let nyquist = move |m: &[i64]| m.iter().any(|&k| 2 * k.unsigned_abs() as usize == grid);
    let strip = |v: &[f64]| -> Vec<f64> {
        let vc: Vec<C64> = v.iter().map(|&x| C64::new(x, 0.0)).collect();
        sp.apply_symbol(&vc, |m| C64::new(if nyquist(m) { 0.0 } else { 1.0 }, 0.0)).iter().map(|z| z.re).collect()
    };
    let mut precond = |v: &[f64]| -> Vec<f64> {
        let vc: Vec<C64> = v.iter().map(|&x| C64::new(x, 0.0)).collect();
        sp.apply_symbol(&vc, |m| {
            if m.iter().all(|&k| k == 0) {
                return C64::new(1.0, 0.0);
            }
            if nyquist(m) {
                return C64::new(0.0, 0.0);
            }
            let mut q = 0.0;
            for a in 0..m.len() {
                for b in 0..m.len() {
                    q += gbar[(a, b)] * (m[a] * m[b]) as f64;
                }
            }
            C64::new(-1.0 / (0.25 * r * tau2 * q), 0.0)
        })
        .iter()
        .map(|z| z.re)
        .collect()
    };
    let mut h = h_init.clone();
    let mut defect = trace_defect(bundle, torus, &h, gamma)?;
    for _ in 0..8 {
        let worst = defect.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        if worst < 1e-3 * NORMALIZATION_TOL {
            break;
        }
        let mut apply = |u: &[f64]| strip(&operator(torus, r, u));
        let rhs = strip(&defect);
        let (u, out) = gmres(&mut apply, &mut precond, &rhs, 1e-13, 60, 600);
        if !out.converged && out.relative_residual > 1e-9 {
            return Err(Error::UnsolvableNormalization(format!(
                "linear solve stopped at relative residual {:e} after {} iterations",
                out.relative_residual, out.iterations
            )));
        }
        h = h.conformal(&u);
        defect = trace_defect(bundle, torus, &h, gamma)?;
    }
    let worst = defect.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    if !(worst < NORMALIZATION_TOL) {
        return Err(Error::UnsolvableNormalization(format!("max |tr K - r gamma| = {worst:e}")));
    }
    Ok(h)
}
