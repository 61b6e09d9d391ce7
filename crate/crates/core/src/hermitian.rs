//! Chern-Weil quantities of a Hermitian metric on a flat Higgs bundle.
//!
//! A metric is stored in the periodic gauge as `H(x)`, with `h(s,t) = t^† H s`.
//! Writing `∇_k` for the flat covariant derivative, the connection form is
//! `θ_k = ½ H⁻¹ ∇_k H` where `∇_k H = ∂_k H - L_k^† H - H L_k`.

use crate::bundle::FlatHiggsBundle;
use crate::calculus::{self, PQField, ValueShape};
use crate::error::{Error, Result};
use crate::geometry::AffineTorus;
use crate::linalg;
use crate::{CMat, C64};

/// Smallest eigenvalue accepted in a [`MetricField`].
pub const EIGEN_FLOOR: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct MetricField {
    rank: usize,
    h: Vec<CMat>,
}

impl MetricField {
    pub fn new(h: Vec<CMat>) -> Result<Self> {
        Self::with_floor(h, EIGEN_FLOOR)
    }

    pub fn with_floor(h: Vec<CMat>, floor: f64) -> Result<Self> {
        let rank = h.first().map(|m| m.nrows()).ok_or_else(|| Error::BadBundle("empty metric field".into()))?;
        for (point, m) in h.iter().enumerate() {
            if m.nrows() != rank || m.ncols() != rank {
                return Err(Error::RankMismatch { bundle: rank, metric: m.nrows() });
            }
            let asym = linalg::frob(&(m - m.adjoint()));
            let (vals, _) = linalg::herm_eig(m);
            if asym > 1e-9 * linalg::frob(m).max(1.0) || !(vals[0] > floor) {
                return Err(Error::NotPositive { point, min_eig: vals[0] });
            }
        }
        Ok(MetricField { rank, h })
    }

    pub fn identity(rank: usize, npts: usize) -> Self {
        MetricField { rank, h: vec![linalg::identity(rank); npts] }
    }

    pub fn constant(m: &CMat, npts: usize) -> Result<Self> {
        Self::new(vec![m.clone(); npts])
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn npts(&self) -> usize {
        self.h.len()
    }

    pub fn values(&self) -> &[CMat] {
        &self.h
    }

    pub fn into_values(self) -> Vec<CMat> {
        self.h
    }

    /// `e^{u} H` for a real scalar field `u`.
    pub fn conformal(&self, u: &[f64]) -> Self {
        let h = self.h.iter().zip(u).map(|(m, &v)| m * C64::new(v.exp(), 0.0)).collect();
        MetricField { rank: self.rank, h }
    }

    /// Pointwise smallest eigenvalue.
    pub fn min_eig(&self) -> f64 {
        self.h.iter().map(|m| linalg::herm_eig(m).0[0]).fold(f64::INFINITY, f64::min)
    }
}

/// Extended curvature `Ω^φ` split by bidegree.
#[derive(Clone, Debug)]
pub struct CurvatureBundle {
    pub part20: PQField,
    pub part11: PQField,
    pub part02: PQField,
}

fn check(bundle: &FlatHiggsBundle, torus: &AffineTorus, h: &MetricField) -> Result<()> {
    if bundle.rank() != h.rank() {
        return Err(Error::RankMismatch { bundle: bundle.rank(), metric: h.rank() });
    }
    if bundle.dim() != torus.dim() {
        return Err(Error::BadBundle(format!("bundle has {} lattice directions, torus dimension {}", bundle.dim(), torus.dim())));
    }
    if h.npts() != torus.npts() {
        return Err(Error::BadBundle(format!("metric has {} samples, grid has {}", h.npts(), torus.npts())));
    }
    Ok(())
}

/// `∇_k H = ∂_k H - L_k^† H - H L_k` for each axis `k`.
pub fn metric_derivative(bundle: &FlatHiggsBundle, torus: &AffineTorus, h: &[CMat]) -> Vec<Vec<CMat>> {
    let sp = torus.spectral();
    (0..torus.dim())
        .map(|k| {
            let l = &bundle.logs()[k];
            let la = l.adjoint();
            let mut d = sp.deriv_mats(h, k);
            for (dv, hv) in d.iter_mut().zip(h) {
                *dv -= &la * hv + hv * l;
            }
            d
        })
        .collect()
}

/// `∇_k X = ∂_k X + [L_k, X]` for an End-valued grid field.
pub fn end_derivative(bundle: &FlatHiggsBundle, torus: &AffineTorus, x: &[CMat], k: usize) -> Vec<CMat> {
    let l = &bundle.logs()[k];
    let mut d = torus.spectral().deriv_mats(x, k);
    for (dv, xv) in d.iter_mut().zip(x) {
        *dv += l * xv - xv * l;
    }
    d
}

pub(crate) fn inverses(h: &[CMat]) -> Vec<CMat> {
    h.iter().map(|m| linalg::inverse(m).expect("positive-definite metric is invertible")).collect()
}

/// `θ ∈ A^{1,0}(End E)` with `θ_k = ½ H⁻¹ ∇_k H`.
pub fn extended_connection_form(bundle: &FlatHiggsBundle, torus: &AffineTorus, h: &MetricField) -> Result<PQField> {
    check(bundle, torus, h)?;
    let r = bundle.rank();
    let hinv = inverses(h.values());
    let dh = metric_derivative(bundle, torus, h.values());
    let mut theta = PQField::zeros(torus.dim(), 1, 0, ValueShape::Matrix(r), torus.npts());
    for (k, dk) in dh.iter().enumerate() {
        let vals = hinv.iter().zip(dk).map(|(hi, d)| hi * d * C64::new(0.5, 0.0)).collect();
        theta.set(&[k], &[], vals);
    }
    Ok(theta)
}

/// `φ = Σ φ_i dz^i` as a constant `(1,0)` field.
pub fn higgs_form(bundle: &FlatHiggsBundle, torus: &AffineTorus) -> PQField {
    let r = bundle.rank();
    let mut phi = PQField::zeros(torus.dim(), 1, 0, ValueShape::Matrix(r), torus.npts());
    for (i, m) in bundle.higgs().iter().enumerate() {
        phi.set(&[i], &[], vec![m.clone(); torus.npts()]);
    }
    phi
}

/// `φ* = Σ H⁻¹ φ_j^† H dz̄^j`.
pub fn higgs_adjoint(bundle: &FlatHiggsBundle, torus: &AffineTorus, h: &MetricField) -> Result<PQField> {
    check(bundle, torus, h)?;
    let r = bundle.rank();
    let hinv = inverses(h.values());
    let mut out = PQField::zeros(torus.dim(), 0, 1, ValueShape::Matrix(r), torus.npts());
    for (j, phi) in bundle.higgs().iter().enumerate() {
        let pa = phi.adjoint();
        let vals = hinv.iter().zip(h.values()).map(|(hi, hv)| hi * &pa * hv).collect();
        out.set(&[], &[j], vals);
    }
    Ok(out)
}

/// `Ω^φ = (∂^h φ, ∂̄θ + [φ,φ*], ∂̄φ*)` with covariant operators of the flat connection.
pub fn extended_curvature(bundle: &FlatHiggsBundle, torus: &AffineTorus, h: &MetricField) -> Result<CurvatureBundle> {
    let theta = extended_connection_form(bundle, torus, h)?;
    let phi = higgs_form(bundle, torus);
    let phi_star = higgs_adjoint(bundle, torus, h)?;
    let sp = torus.spectral();
    let logs = bundle.logs();
    let part20 = calculus::del_cov(sp, &phi, logs)?
        .add(&calculus::wedge(&theta, &phi)?)?
        .add(&calculus::wedge(&phi, &theta)?)?;
    let part11 = calculus::dbar_cov(sp, &theta, logs)?
        .add(&calculus::wedge(&phi, &phi_star)?)?
        .add(&calculus::wedge(&phi_star, &phi)?)?;
    let part02 = calculus::dbar_cov(sp, &phi_star, logs)?;
    Ok(CurvatureBundle { part20, part11, part02 })
}

/// `K^φ = tr_g(∂̄θ + [φ,φ*])` pointwise.
pub fn mean_curvature(bundle: &FlatHiggsBundle, torus: &AffineTorus, h: &MetricField) -> Result<Vec<CMat>> {
    let omega = extended_curvature(bundle, torus, h)?;
    let k = calculus::contract_g(torus, &omega.part11)?;
    Ok(k.at(&[], &[]).to_vec())
}

/// `c₁(E,h) = tr Ω^{1,1}`.
pub fn first_chern_form(bundle: &FlatHiggsBundle, torus: &AffineTorus, h: &MetricField) -> Result<PQField> {
    Ok(extended_curvature(bundle, torus, h)?.part11.trace())
}

/// `∫ c₁ ∧ ω^{n-1} / ν`.
pub fn degree(bundle: &FlatHiggsBundle, torus: &AffineTorus, h: &MetricField) -> Result<f64> {
    let c1 = first_chern_form(bundle, torus, h)?;
    torus.integrate(&calculus::wedge(&c1, &torus.omega_power(torus.dim() - 1))?)
}

pub fn slope(bundle: &FlatHiggsBundle, torus: &AffineTorus, h: &MetricField) -> Result<f64> {
    Ok(degree(bundle, torus, h)? / bundle.rank() as f64)
}

/// `γ = n μ(E) / ∫ω^n/ν`, with the degree taken at `H = I`.
pub fn einstein_factor(bundle: &FlatHiggsBundle, torus: &AffineTorus) -> Result<f64> {
    let vol = torus.volume();
    if !(vol > 0.0) {
        return Err(Error::ZeroVolume(vol));
    }
    let mu = slope(bundle, torus, &MetricField::identity(bundle.rank(), torus.npts()))?;
    Ok(torus.dim() as f64 * mu / vol)
}

/// Astheno-Kähler tolerance required by [`bogomolov_integral`].
pub const ASTHENO_TOL: f64 = 1e-10;

/// `∫ (2r c₂ - (r-1) c₁²) ∧ ω^{n-2} / ν` with `c₂ = ½(c₁² - tr Ω∧Ω)`, so the
/// integrand is `c₁∧c₁ - r tr(Ω∧Ω)` restricted to bidegree `(2,2)`.
pub fn bogomolov_integral(bundle: &FlatHiggsBundle, torus: &AffineTorus, h: &MetricField) -> Result<f64> {
    if torus.dim() < 2 {
        return Err(Error::BadTorus("Bogomolov integral needs dimension at least 2".into()));
    }
    let defect = torus.astheno_defect();
    if defect > ASTHENO_TOL {
        return Err(Error::NotAstheno(defect));
    }
    let om = extended_curvature(bundle, torus, h)?;
    let w = calculus::wedge;
    let omega2 = w(&om.part20, &om.part02)?.add(&w(&om.part11, &om.part11)?)?.add(&w(&om.part02, &om.part20)?)?;
    let (t20, t11, t02) = (om.part20.trace(), om.part11.trace(), om.part02.trace());
    let c1sq = w(&t20, &t02)?.add(&w(&t11, &t11)?)?.add(&w(&t02, &t20)?)?;
    let r = C64::new(bundle.rank() as f64, 0.0);
    let density = c1sq.sub(&omega2.trace().scale(r))?;
    torus.integrate(&w(&density, &torus.omega_power(torus.dim() - 2))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundle::make_bundle;
    use crate::geometry::MetricSpec;
    use std::f64::consts::PI;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn flat(n: usize, grid: usize) -> AffineTorus {
        AffineTorus::new(n, grid, &MetricSpec::identity(n), 1.0).unwrap()
    }

    fn jordan(n: usize) -> FlatHiggsBundle {
        let id = linalg::identity(2);
        let mut higgs = vec![linalg::zeros(2); n];
        higgs[0] = CMat::from_row_slice(2, 2, &[c(0.0), c(1.0), c(0.0), c(0.0)]);
        make_bundle(2, vec![id; n], higgs).unwrap()
    }

    fn line(rho: f64) -> FlatHiggsBundle {
        make_bundle(1, vec![CMat::from_element(1, 1, c(rho)), linalg::identity(1)], vec![linalg::zeros(1); 2]).unwrap()
    }

    #[test]
    fn theta_of_conformal_line_metric() {
        let t = flat(2, 32);
        let u: Vec<f64> = (0..t.npts()).map(|p| (2.0 * PI * t.coords(p)[0]).sin()).collect();
        let h = MetricField::identity(1, t.npts()).conformal(&u);
        let theta = extended_connection_form(&line(1.0), &t, &h).unwrap();
        for p in 0..t.npts() {
            let x = t.coords(p);
            assert!((theta.at(&[0], &[])[p][(0, 0)].re - PI * (2.0 * PI * x[0]).cos()).abs() < 1e-11);
            assert!(theta.at(&[1], &[])[p][(0, 0)].norm() < 1e-11);
        }
    }

    #[test]
    fn unitary_monodromy_is_flat() {
        let t = flat(2, 8);
        let a: f64 = 0.7;
        let rho = CMat::from_row_slice(2, 2, &[C64::from_polar(1.0, a), c(0.0), c(0.0), C64::from_polar(1.0, -0.3)]);
        let b = make_bundle(2, vec![rho, linalg::identity(2)], vec![linalg::zeros(2); 2]).unwrap();
        let h = MetricField::identity(2, t.npts());
        let om = extended_curvature(&b, &t, &h).unwrap();
        assert!(om.part20.sup_norm() < 1e-14 && om.part11.sup_norm() < 1e-14 && om.part02.sup_norm() < 1e-14);
    }

    #[test]
    fn higgs_adjoint_examples() {
        let t = flat(2, 4);
        let b = jordan(2);
        let h = MetricField::constant(&CMat::from_row_slice(2, 2, &[c(2.0), c(0.0), c(0.0), c(1.0)]), t.npts()).unwrap();
        let ps = higgs_adjoint(&b, &t, &h).unwrap();
        let expect = CMat::from_row_slice(2, 2, &[c(0.0), c(0.0), c(2.0), c(0.0)]);
        assert!(linalg::frob(&(&ps.at(&[], &[0])[0] - expect)) < 1e-15);
    }

    #[test]
    fn jordan_mean_curvature() {
        let t = flat(2, 8);
        let k = mean_curvature(&jordan(2), &t, &MetricField::identity(2, t.npts())).unwrap();
        let expect = CMat::from_row_slice(2, 2, &[c(1.0), c(0.0), c(0.0), c(-1.0)]);
        assert!(k.iter().all(|m| linalg::frob(&(m - &expect)) < 1e-14));
        assert!(degree(&jordan(2), &t, &MetricField::identity(2, t.npts())).unwrap().abs() < 1e-14);
    }

    #[test]
    fn line_mean_curvature_is_scalar_laplacian() {
        // K = -tr_g ∂∂̄ u = -¼ Δu for H = e^u on flat T²
        let t = flat(2, 32);
        let u: Vec<f64> = (0..t.npts()).map(|p| (2.0 * PI * t.coords(p)[0]).sin()).collect();
        let h = MetricField::identity(1, t.npts()).conformal(&u);
        let k = mean_curvature(&line(1.0), &t, &h).unwrap();
        for p in 0..t.npts() {
            let expect = 0.25 * 4.0 * PI * PI * u[p];
            assert!((k[p][(0, 0)].re - expect).abs() < 1e-10);
        }
        assert!(degree(&line(1.0), &t, &h).unwrap().abs() < 1e-12);
    }

    #[test]
    fn nonunitary_line_has_zero_degree() {
        let t = flat(2, 8);
        let b = line(2.0);
        let h = MetricField::identity(1, t.npts());
        assert!(degree(&b, &t, &h).unwrap().abs() < 1e-14);
        assert!(einstein_factor(&b, &t).unwrap().abs() < 1e-14);
    }

    #[test]
    fn bogomolov_needs_astheno() {
        let t = AffineTorus::new(4, 8, &MetricSpec::ConformalSine { amplitude: 1.0, axis: 0 }, 1.0).unwrap();
        let b = make_bundle(1, vec![linalg::identity(1); 4], vec![linalg::zeros(1); 4]).unwrap();
        let h = MetricField::identity(1, t.npts());
        assert!(matches!(bogomolov_integral(&b, &t, &h), Err(Error::NotAstheno(_))));
    }
}
