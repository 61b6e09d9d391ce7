//! Destabilizing subbundle from a blown-up continuation run.
//!
//! With `M` the largest `log`-eigenvalue of `f̂` over the grid and `ρ = e^{-M}`,
//! the rescaled `ρ f̂` has spectrum in `(0, 1]`. Its powers `(ρ f̂)^σ` send
//! collapsing directions towards 0 and the rest towards 1; `ϖ` is the
//! projection onto the collapsing directions.

use serde::{Deserialize, Serialize};

use crate::bundle::FlatHiggsBundle;
use crate::error::{Error, Result};
use crate::geometry::AffineTorus;
use crate::hermitian;
use crate::linalg;
use crate::report::cmat_serde;
use crate::stability;
use crate::{CMat, C64};

use super::residual::Problem;
use super::{SolverStatus, SolverTrace};

/// Default σ values, descending.
pub const SIGMA_SCHEDULE: [f64; 4] = [0.5, 0.25, 0.1, 0.05];
/// Required distance of every thresholded eigenvalue from ½.
pub const SPECTRAL_GAP: f64 = 0.2;
/// Integrated-norm tolerance for the projection identities.
pub const IDENTITY_TOL: f64 = 1e-2;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DestabilizerReport {
    pub sigma: f64,
    pub rank: usize,
    #[serde(with = "cmat_serde")]
    pub basis: CMat,
    /// Grid average of `ϖ`.
    #[serde(with = "cmat_serde")]
    pub mean_projection: CMat,
    /// `‖ϖ² - ϖ‖`, `‖ϖ* - ϖ‖`, `‖(1-ϖ)∂̄ϖ‖`, `‖(1-ϖ)φϖ‖` in `L²`.
    pub identity_residuals: [f64; 4],
    pub slope_f: f64,
    pub slope_e: f64,
    /// `max(log λ(f̂))` over the grid.
    pub log_max_eig: f64,
}

pub struct Destabilizer {
    /// `ϖ` at every grid point (in the bundle frame).
    pub projection: Vec<CMat>,
    pub report: DestabilizerReport,
}

fn l2(values: &[CMat]) -> f64 {
    (values.iter().map(|m| linalg::frob(m).powi(2)).sum::<f64>() / values.len() as f64).sqrt()
}

/// Spectral threshold of `(ρ f̂)^σ`: returns `(σ, ϖ̂)` for the smallest σ in
/// the schedule at which every eigenvalue lies outside `(½ - gap, ½ + gap)` and
/// both clusters are non-empty at every point.
pub fn threshold_projection(fhat: &[CMat], sigmas: &[f64]) -> Result<(f64, Vec<CMat>, f64)> {
    let eig: Vec<_> = fhat.iter().map(linalg::herm_eig).collect();
    let big_m = eig.iter().map(|(v, _)| v[v.len() - 1].ln()).fold(f64::NEG_INFINITY, f64::max);
    let mut sorted: Vec<f64> = sigmas.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    for &sigma in &sorted {
        if !(sigma > 0.0 && sigma <= 1.0) {
            return Err(Error::config("sigma_schedule", format!("sigma {sigma} outside (0, 1]")));
        }
        let mut ok = true;
        let mut projections = Vec::with_capacity(eig.len());
        for (vals, u) in &eig {
            let powered: Vec<f64> = vals.iter().map(|l| ((l.ln() - big_m) * sigma).exp()).collect();
            let low = powered.iter().filter(|&&p| p <= 0.5 - SPECTRAL_GAP).count();
            let high = powered.iter().filter(|&&p| p >= 0.5 + SPECTRAL_GAP).count();
            if low + high != powered.len() || low == 0 || high == 0 {
                ok = false;
                break;
            }
            let d = nalgebra::DVector::from_iterator(
                powered.len(),
                powered.iter().map(|&p| C64::new(if p <= 0.5 - SPECTRAL_GAP { 1.0 } else { 0.0 }, 0.0)),
            );
            projections.push(u * CMat::from_diagonal(&d) * u.adjoint());
        }
        if ok {
            return Ok((sigma, projections, big_m));
        }
    }
    Err(Error::NoSpectralGap(format!("no sigma in {sigmas:?} separates the rescaled spectrum from 1/2")))
}

/// Extract `ϖ` and the subbundle `F = ϖ(E)` from the last iterate of a
/// blown-up run, and verify the projection identities.
pub fn extract_destabilizer(
    bundle: &FlatHiggsBundle,
    torus: &AffineTorus,
    trace: &SolverTrace,
    sigmas: &[f64],
) -> Result<Destabilizer> {
    if trace.status != SolverStatus::Blowup {
        return Err(Error::NoBlowup);
    }
    let f = &trace.retained.last().ok_or(Error::NoBlowup)?.f;
    let prob = Problem::new(bundle, torus, &trace.h0, trace.gamma)?;
    let (sigma, pihat, big_m) = threshold_projection(&prob.to_hat(f), sigmas)?;
    let pi = prob.from_hat(&pihat);
    let r = bundle.rank();
    let id = linalg::identity(r);
    let perp: Vec<CMat> = pi.iter().map(|p| &id - p).collect();

    let idem: Vec<CMat> = pi.iter().map(|p| p * p - p).collect();
    let hinv = hermitian::inverses(&prob.h0);
    let adj: Vec<CMat> = (0..pi.len()).map(|p| &hinv[p] * pi[p].adjoint() * &prob.h0[p] - &pi[p]).collect();
    let mut dbar_res = 0.0f64;
    let mut higgs_res = 0.0f64;
    for k in 0..torus.dim() {
        let d = hermitian::end_derivative(bundle, torus, &pi, k);
        let v: Vec<CMat> = (0..pi.len()).map(|p| &perp[p] * &d[p] * C64::new(0.5, 0.0)).collect();
        dbar_res = dbar_res.hypot(l2(&prob.to_hat(&v)));
        let w: Vec<CMat> = (0..pi.len()).map(|p| &perp[p] * &bundle.higgs()[k] * &pi[p]).collect();
        higgs_res = higgs_res.hypot(l2(&prob.to_hat(&w)));
    }
    let residuals = [l2(&prob.to_hat(&idem)), l2(&prob.to_hat(&adj)), dbar_res, higgs_res];

    let mut mean = CMat::zeros(r, r);
    for p in &pi {
        mean += p;
    }
    mean /= C64::new(pi.len() as f64, 0.0);
    let rank = mean.trace().re.round() as usize;
    if rank == 0 || rank >= r {
        return Err(Error::NoSpectralGap(format!("limit projection has rank {rank}")));
    }
    if let Some(worst) = residuals.iter().cloned().find(|&x| !(x < IDENTITY_TOL)) {
        return Err(Error::NotInvariant(worst));
    }
    let svd = nalgebra::SVD::new(mean.clone(), true, false);
    let u = svd.u.expect("u requested");
    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let mut basis = CMat::zeros(r, rank);
    for (c, &i) in order.iter().take(rank).enumerate() {
        basis.set_column(c, &u.column(i));
    }
    let slope_e = hermitian::slope(bundle, torus, &hermitian::MetricField::identity(r, torus.npts()))?;
    let slope_f = stability::subbundle_slope(bundle, torus, &basis)?;
    Ok(Destabilizer {
        projection: pi,
        report: DestabilizerReport {
            sigma,
            rank,
            basis,
            mean_projection: mean,
            identity_residuals: residuals,
            slope_f,
            slope_e,
            log_max_eig: big_m,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag(a: f64, b: f64) -> CMat {
        CMat::from_diagonal(&nalgebra::DVector::from_vec(vec![C64::new(a, 0.0), C64::new(b, 0.0)]))
    }

    #[test]
    fn synthetic_collapse_selects_small_direction() {
        let delta: f64 = 1e-6;
        // δ^σ for σ = 0.05, 0.1: 0.501 (no gap), 0.251 (gap)
        assert!((delta.powf(0.05) - 0.5).abs() < SPECTRAL_GAP);
        assert!(delta.powf(0.1) <= 0.5 - SPECTRAL_GAP);
        let (sigma, pi, m) = threshold_projection(&vec![diag(1.0, delta); 8], &SIGMA_SCHEDULE).unwrap();
        assert_eq!(sigma, 0.1);
        assert_eq!(m, 0.0);
        assert!(pi.iter().all(|p| linalg::frob(&(p - diag(0.0, 1.0))) < 1e-14));
    }

    #[test]
    fn identity_has_no_gap() {
        let r = threshold_projection(&vec![diag(1.0, 1.0); 4], &SIGMA_SCHEDULE);
        assert!(matches!(r, Err(Error::NoSpectralGap(_))));
    }
}
