//! Flat φ-invariant subbundles, their slopes, and the stability verdict.
//!
//! On the torus a flat subbundle invariant under φ is a subspace invariant
//! under every monodromy matrix and every Higgs matrix.

use serde::{Deserialize, Serialize};

use crate::bundle::FlatHiggsBundle;
use crate::calculus::{self, PQField};
use crate::error::{Error, Result};
use crate::geometry::AffineTorus;
use crate::hermitian::{self, MetricField};
use crate::linalg::{self, frob};
use crate::report::cmat_serde;
use crate::{CMat, C64};

/// Absolute tolerance for slope comparisons.
pub const SLOPE_TOL: f64 = 1e-7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Stable,
    SemistableNotPolystable,
    Polystable,
    Unstable,
    Indeterminate,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Witness {
    #[serde(with = "cmat_serde")]
    pub basis: CMat,
    pub rank: usize,
    pub slope: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StabilityReport {
    pub verdict: Verdict,
    pub witnesses: Vec<Witness>,
    pub mu_e: f64,
}

/// `max_G ‖(1 - P) G B‖` over all generators, relative to `max(‖G‖, 1)`.
pub fn invariance_residual(bundle: &FlatHiggsBundle, basis: &CMat) -> f64 {
    let q = linalg::column_space(basis, 1e-12);
    let proj = linalg::projector(&q);
    let id = linalg::identity(bundle.rank());
    bundle
        .generators()
        .map(|g| frob(&((&id - &proj) * g * &q)) / frob(g).max(1.0))
        .fold(0.0, f64::max)
}

fn split_by_generator(g: &CMat, space: &CMat) -> Vec<CMat> {
    let s = space.ncols();
    let restricted = space.adjoint() * g * space;
    let mut eig = linalg::eigenvalues(&restricted);
    eig.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    let scale = frob(g).max(1.0);
    let mut clusters: Vec<C64> = Vec::new();
    for lam in eig {
        if !clusters.iter().any(|c| (c - lam).norm() < 1e-6 * scale) {
            clusters.push(lam);
        }
    }
    if clusters.len() <= 1 {
        return vec![space.clone()];
    }
    let id = linalg::identity(s);
    clusters
        .into_iter()
        .map(|lam| {
            let shifted = &restricted - &id * lam;
            let mut pow = linalg::identity(s);
            for _ in 0..s {
                pow = &pow * &shifted;
            }
            let ker = linalg::null_space(&pow, 1e-8);
            linalg::column_space(&(space * ker), 1e-10)
        })
        .filter(|b| b.ncols() > 0)
        .collect()
}

/// Joint generalized eigenspaces of the commuting generator family.
pub fn joint_generalized_eigenspaces(bundle: &FlatHiggsBundle) -> Vec<CMat> {
    let mut spaces = vec![linalg::identity(bundle.rank())];
    for g in bundle.generators() {
        spaces = spaces.iter().flat_map(|v| split_by_generator(g, v)).collect();
    }
    spaces
}

/// Joint eigenvectors inside a joint generalized eigenspace.
fn joint_kernel(bundle: &FlatHiggsBundle, space: &CMat) -> CMat {
    let s = space.ncols();
    let gens: Vec<CMat> = bundle
        .generators()
        .map(|g| {
            let rg = space.adjoint() * g * space;
            let lam = rg.trace() / C64::new(s as f64, 0.0);
            rg - linalg::identity(s) * lam
        })
        .collect();
    let mut sys = CMat::zeros(gens.len() * s, s);
    for (b, g) in gens.iter().enumerate() {
        sys.view_mut((b * s, 0), (s, s)).copy_from(g);
    }
    let ker = linalg::null_space(&sys, 1e-8);
    space * ker
}

fn hstack(parts: &[&CMat], rows: usize) -> CMat {
    let cols: usize = parts.iter().map(|p| p.ncols()).sum();
    let mut out = CMat::zeros(rows, cols);
    let mut c = 0;
    for p in parts {
        out.view_mut((0, c), (rows, p.ncols())).copy_from(p);
        c += p.ncols();
    }
    out
}

/// Proper invariant subspaces from the generalized-eigenspace lattice plus
/// minimal invariant subspaces of each joint generalized eigenspace.
/// Orthonormal bases, deduplicated; `{0}` and `E` are not listed.
pub fn invariant_subspaces(bundle: &FlatHiggsBundle) -> Vec<CMat> {
    let r = bundle.rank();
    let blocks = joint_generalized_eigenspaces(bundle);
    let mut minimal: Vec<(usize, CMat)> = Vec::new();
    for (i, v) in blocks.iter().enumerate() {
        let k = joint_kernel(bundle, v);
        if k.ncols() == 0 {
            continue;
        }
        let k = linalg::column_space(&k, 1e-10);
        if k.ncols() > 1 {
            for c in 0..k.ncols() {
                minimal.push((i, k.columns(c, 1).into_owned()));
            }
        }
        minimal.push((i, k));
    }
    let mut found: Vec<CMat> = Vec::new();
    let mut push = |b: CMat| {
        let q = linalg::column_space(&b, 1e-10);
        if q.ncols() == 0 || q.ncols() == r {
            return;
        }
        let p = linalg::projector(&q);
        if !found.iter().any(|f| f.ncols() == q.ncols() && frob(&(linalg::projector(f) - &p)) < 1e-8) {
            found.push(q);
        }
    };
    let m = blocks.len();
    for mask in 0u32..(1 << m) {
        let chosen: Vec<&CMat> = (0..m).filter(|i| mask & (1 << i) != 0).map(|i| &blocks[i]).collect();
        if !chosen.is_empty() {
            push(hstack(&chosen, r));
        }
        for (owner, k) in &minimal {
            if mask & (1 << owner) == 0 {
                let mut parts = chosen.clone();
                parts.push(k);
                push(hstack(&parts, r));
            }
        }
    }
    found.sort_by_key(|b| b.ncols());
    found
}

/// Whether the commuting family is simultaneously diagonalizable.
pub fn simultaneously_diagonalizable(bundle: &FlatHiggsBundle) -> bool {
    joint_generalized_eigenspaces(bundle).iter().all(|v| joint_kernel(bundle, v).ncols() == v.ncols())
}

/// Slope of the subbundle spanned by `basis`, with the metric induced from `H = I`.
pub fn subbundle_slope(bundle: &FlatHiggsBundle, torus: &AffineTorus, basis: &CMat) -> Result<f64> {
    let q = linalg::column_space(basis, 1e-12);
    let sub = bundle.restrict(&q)?;
    hermitian::slope(&sub, torus, &MetricField::identity(sub.rank(), torus.npts()))
}

pub fn stability_verdict(bundle: &FlatHiggsBundle, torus: &AffineTorus) -> Result<StabilityReport> {
    let mu_e = hermitian::slope(bundle, torus, &MetricField::identity(bundle.rank(), torus.npts()))?;
    let mut witnesses = Vec::new();
    for basis in invariant_subspaces(bundle) {
        let slope = subbundle_slope(bundle, torus, &basis)?;
        witnesses.push(Witness { rank: basis.ncols(), basis, slope });
    }
    let diffs: Vec<f64> = witnesses.iter().map(|w| w.slope - mu_e).collect();
    let max_diff = diffs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let near_band = diffs.iter().any(|d| d.abs() > SLOPE_TOL && d.abs() <= 10.0 * SLOPE_TOL);
    let verdict = if witnesses.is_empty() {
        Verdict::Stable
    } else if max_diff > 10.0 * SLOPE_TOL {
        Verdict::Unstable
    } else if near_band {
        Verdict::Indeterminate
    } else if max_diff < -SLOPE_TOL {
        Verdict::Stable
    } else {
        let lines_equal = witnesses.iter().filter(|w| w.rank == 1).all(|w| (w.slope - mu_e).abs() <= SLOPE_TOL);
        if simultaneously_diagonalizable(bundle) && lines_equal {
            Verdict::Polystable
        } else {
            Verdict::SemistableNotPolystable
        }
    };
    Ok(StabilityReport { verdict, witnesses, mu_e })
}

/// Terms of the Chern-Weil slope formula for a subbundle.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SlopeDefect {
    /// `μ(E) - μ(F)`
    pub mu_gap: f64,
    /// `∫ |A|² ω^n/ν`, `A` the second fundamental form.
    pub a_norm2: f64,
    /// `∫ |φ̃|² ω^n/ν`, `φ̃ = π⊥ φ* π`.
    pub phi_tilde_norm2: f64,
    /// `μ(E) - μ(F) - (a_norm2 + phi_tilde_norm2)/(s n)`
    pub identity_residual: f64,
}

/// `h`-orthogonal projection onto the span of `basis` at each grid point.
pub fn orthogonal_projection(h: &MetricField, basis: &CMat) -> Vec<CMat> {
    h.values()
        .iter()
        .map(|hv| {
            let gram = basis.adjoint() * hv * basis;
            basis * linalg::inverse(&gram).expect("basis has full rank") * basis.adjoint() * hv
        })
        .collect()
}

fn weighted_norm2(torus: &AffineTorus, h: &MetricField, forms: &[Vec<CMat>]) -> Result<f64> {
    let n = torus.dim();
    let hinv = hermitian::inverses(h.values());
    let vals: Vec<C64> = (0..torus.npts())
        .map(|p| {
            let ginv = torus.metric_inv_at(p);
            let mut acc = C64::new(0.0, 0.0);
            for i in 0..n {
                let star = &hinv[p] * forms[i][p].adjoint() * &h.values()[p];
                for j in 0..n {
                    acc += (&star * &forms[j][p]).trace() * ginv[(i, j)];
                }
            }
            acc
        })
        .collect();
    let f = PQField::scalar_function(n, &vals);
    torus.integrate(&calculus::wedge(&f, &torus.omega_power(n))?)
}

/// Chern-Weil decomposition of `μ(E) - μ(F)` for an invariant subspace `F`.
pub fn slope_defect(
    bundle: &FlatHiggsBundle,
    torus: &AffineTorus,
    h: &MetricField,
    basis: &CMat,
) -> Result<SlopeDefect> {
    let resid = invariance_residual(bundle, basis);
    if resid > 1e-10 {
        return Err(Error::NotInvariant(resid));
    }
    let n = torus.dim();
    let s = basis.ncols();
    let r = bundle.rank();
    let pi = orthogonal_projection(h, basis);
    let id = linalg::identity(r);
    let perp: Vec<CMat> = pi.iter().map(|p| &id - p).collect();
    let theta = hermitian::extended_connection_form(bundle, torus, h)?;
    let phi_star = hermitian::higgs_adjoint(bundle, torus, h)?;
    let half = C64::new(0.5, 0.0);
    let mut a = Vec::with_capacity(n);
    let mut phi_t = Vec::with_capacity(n);
    for k in 0..n {
        let dpi = hermitian::end_derivative(bundle, torus, &pi, k);
        let th = theta.at(&[k], &[]);
        let ps = phi_star.at(&[], &[k]);
        a.push((0..torus.npts()).map(|p| &perp[p] * (&dpi[p] * half + &th[p] * &pi[p]) * &pi[p]).collect::<Vec<_>>());
        phi_t.push((0..torus.npts()).map(|p| &perp[p] * &ps[p] * &pi[p]).collect::<Vec<_>>());
    }
    let a_norm2 = weighted_norm2(torus, h, &a)?;
    let phi_tilde_norm2 = weighted_norm2(torus, h, &phi_t)?;
    let mu_e = hermitian::slope(bundle, torus, h)?;
    let q = linalg::column_space(basis, 1e-12);
    let sub = bundle.restrict(&q)?;
    let hf: Vec<CMat> = h.values().iter().map(|hv| q.adjoint() * hv * &q).collect();
    let mu_f = hermitian::slope(&sub, torus, &MetricField::new(hf)?)?;
    let mu_gap = mu_e - mu_f;
    let identity_residual = mu_gap - (a_norm2 + phi_tilde_norm2) / (s * n) as f64;
    Ok(SlopeDefect { mu_gap, a_norm2, phi_tilde_norm2, identity_residual })
}

/// Pointwise `tr(π K^φ)`-weighted form of the Chern-Weil identity for any
/// metric: returns `deg F - (1/n)∫[tr(πK) - |A|² - |φ̃|²] ω^n/ν`.
pub fn chern_weil_residual(bundle: &FlatHiggsBundle, torus: &AffineTorus, h: &MetricField, basis: &CMat) -> Result<f64> {
    let n = torus.dim();
    let sd = slope_defect(bundle, torus, h, basis)?;
    let pi = orthogonal_projection(h, basis);
    let k = hermitian::mean_curvature(bundle, torus, h)?;
    let vals: Vec<C64> = pi.iter().zip(&k).map(|(p, kk)| (p * kk).trace()).collect();
    let trpk = torus.integrate(&calculus::wedge(&PQField::scalar_function(n, &vals), &torus.omega_power(n))?)?;
    let q = linalg::column_space(basis, 1e-12);
    let sub = bundle.restrict(&q)?;
    let hf: Vec<CMat> = h.values().iter().map(|hv| q.adjoint() * hv * &q).collect();
    let deg_f = hermitian::degree(&sub, torus, &MetricField::new(hf)?)?;
    Ok(deg_f - (trpk - sd.a_norm2 - sd.phi_tilde_norm2) / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundle::make_bundle;
    use crate::geometry::MetricSpec;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn m2(a: f64, b: f64, cc: f64, d: f64) -> CMat {
        CMat::from_row_slice(2, 2, &[c(a), c(b), c(cc), c(d)])
    }

    fn flat() -> AffineTorus {
        AffineTorus::new(2, 8, &MetricSpec::identity(2), 1.0).unwrap()
    }

    fn bundle(phi: CMat) -> FlatHiggsBundle {
        let id = linalg::identity(2);
        make_bundle(2, vec![id.clone(), id], vec![phi, linalg::zeros(2)]).unwrap()
    }

    #[test]
    fn jordan_has_one_invariant_line() {
        let subs = invariant_subspaces(&bundle(m2(0.0, 1.0, 0.0, 0.0)));
        assert_eq!(subs.len(), 1);
        assert!(subs[0][(1, 0)].norm() < 1e-12);
        let rep = stability_verdict(&bundle(m2(0.0, 1.0, 0.0, 0.0)), &flat()).unwrap();
        assert_eq!(rep.verdict, Verdict::SemistableNotPolystable);
        assert_eq!(rep.witnesses.len(), 1);
        assert!(rep.witnesses[0].slope.abs() < 1e-12 && rep.mu_e.abs() < 1e-12);
    }

    #[test]
    fn diagonal_higgs_is_polystable() {
        let b = bundle(m2(1.0, 0.0, 0.0, 2.0));
        let subs = invariant_subspaces(&b);
        assert_eq!(subs.len(), 2);
        for s in &subs {
            assert!(invariance_residual(&b, s) < 1e-10);
        }
        assert_eq!(stability_verdict(&b, &flat()).unwrap().verdict, Verdict::Polystable);
    }

    #[test]
    fn rank_one_is_stable() {
        let b = make_bundle(1, vec![CMat::from_element(1, 1, c(2.0)), linalg::identity(1)], vec![linalg::zeros(1); 2]).unwrap();
        assert!(invariant_subspaces(&b).is_empty());
        assert_eq!(stability_verdict(&b, &flat()).unwrap().verdict, Verdict::Stable);
    }

    #[test]
    fn rotated_subspace_is_rejected() {
        let b = bundle(m2(1.0, 0.0, 0.0, 2.0));
        let t = flat();
        let h = MetricField::identity(2, t.npts());
        let f = CMat::from_column_slice(2, 1, &[c(0.8), c(0.6)]);
        assert!(matches!(slope_defect(&b, &t, &h, &f), Err(Error::NotInvariant(_))));
        let e1 = CMat::from_column_slice(2, 1, &[c(1.0), c(0.0)]);
        let sd = slope_defect(&b, &t, &h, &e1).unwrap();
        assert!(sd.mu_gap.abs() < 1e-12 && sd.a_norm2.abs() < 1e-12 && sd.phi_tilde_norm2.abs() < 1e-12);
    }

    #[test]
    fn chern_weil_identity_for_random_metrics() {
        let t = AffineTorus::new(2, 16, &MetricSpec::SeparableSine { amplitude: 0.3 }, 1.0).unwrap();
        let cases = [
            (crate::scenario::jordan(2, 16), m2(1.0, 0.0, 0.0, 0.0)),
            (crate::scenario::skew_diagonalizable(2, 16), m2(1.0, 0.0, 1.0, 0.0)),
            (crate::scenario::skew_diagonalizable(2, 16), m2(1.0, 0.0, 0.0, 0.0)),
        ];
        for (cfg, full) in cases {
            let b = cfg.build_bundle().unwrap();
            let basis = full.columns(0, 1).into_owned();
            for seed in 0..3 {
                let h = crate::scenario::random_metric(&t, 2, 0.7, seed);
                let r = chern_weil_residual(&b, &t, &h, &basis).unwrap();
                assert!(r.abs() < 1e-8, "{r}");
            }
        }
    }
}
